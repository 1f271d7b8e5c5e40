"""Finding an intersection of two halfspaces from corrupted samples.

The indicator of an intersection correlates with degree-2 polynomials
only through the directions its halfspaces actually use. Arranging the
filtered degree-2 Chow parameters as a matrix and taking its top
eigenvectors therefore recovers the relevant subspace; a brute-force
tournament over a small net of candidate intersections on that subspace
then picks the hypothesis. Everything after the subspace step runs in 2
dimensions regardless of the ambient dimension.
"""

import numpy as np
from scipy.linalg import subspace_angles

from robustchow import (AdversaryStrategy, Intersection,
                        gaussian_descriptor, learn_intersection,
                        make_corrupted_source, score)
from robustchow.ltf_learner import LTF

N, K, EPS = 8, 2, 0.02
M = 200_000

e1, e2 = np.eye(N)[0], np.eye(N)[1]
hyp = Intersection([LTF(e1, 0.5), LTF(e2, 0.5)])
dist = gaussian_descriptor(N, 2, EPS)
attack = AdversaryStrategy("chow_attack", rho=0.9)

source = make_corrupted_source(hyp, dist, EPS, attack)
train = source(M, np.random.SeedSequence(31))
print(f"plant: {{x : x1 >= -0.5 and x2 >= -0.5}} in R^{N}, "
      f"eps={EPS} chow_attack, m={M}")

learned = learn_intersection(train, K, EPS, source=source, seed=32)

true_span = np.stack([e1, e2], axis=1)
angles = np.degrees(subspace_angles(true_span, learned.subspace))
dis = score(learned, hyp, dist, 200_000, seed=33)

print(f"recovered subspace dimension: {learned.subspace.shape[1]}")
print(f"principal angles to the true span: "
      f"{', '.join(f'{a:.2f}' for a in angles)} degrees")
print(f"members: {learned.k} halfspaces")
print(f"disagreement with the plant on fresh points: {dis:.4f}")
