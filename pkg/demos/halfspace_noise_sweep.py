"""Disagreement of the learned halfspace as the corruption budget grows.

Two learners on the same corrupted data: the one-shot weak learner
(normalize the filtered degree-1 Chow vector) and the full localized
pipeline, which repeatedly conditions the Gaussian to a shrinking slab
around the current guess of the separating hyperplane. The weak
learner's error carries a sqrt(log 1/eps) factor; the full pipeline
scales linearly in eps.
"""

import numpy as np

from robustchow import (AdversaryStrategy, LTFConfig, gaussian_descriptor,
                        learn_ltf, make_corrupted_source, plant_instance,
                        score, weak_learn_ltf)

N = 20
M_TRAIN = 100_000

rng = np.random.default_rng(11)
v = rng.standard_normal(N)
v /= np.linalg.norm(v)
theta = 0.5
attack = AdversaryStrategy("chow_attack", rho=0.9)

print(f"plant: sign(v.x + {theta}) in R^{N}, corrupted by chow_attack")
print(f"{'eps':>6} {'weak dis':>10} {'full dis':>10} {'full dis/eps':>13}")
for eps in (0.01, 0.05, 0.1):
    dist = gaussian_descriptor(N, 1, eps)
    hyp, _ = plant_instance("ltf", (v, theta), dist, 1000, seed=12)
    source = make_corrupted_source(hyp, dist, eps, attack)
    train = source(M_TRAIN, np.random.SeedSequence(13))

    weak = weak_learn_ltf(train, dist, eps)
    full = learn_ltf(train, dist, eps, source=source, seed=14,
                     config=LTFConfig(batch_cap=M_TRAIN))

    d_weak = score(weak, hyp, dist, 200_000, seed=15)
    d_full = score(full, hyp, dist, 200_000, seed=15)
    print(f"{eps:>6} {d_weak:>10.4f} {d_full:>10.4f} {d_full / eps:>13.2f}")
