"""Experiment orchestration: planted instances, corruption, learning,
Monte-Carlo scoring, CSV reporting.

Every reported number is a pure function of the config: cells derive their
RNG streams from (master seed, cell index), run independently in a thread
pool, and rows are emitted in cell order. Wall-clock time is recorded as 0
under deterministic_output (the default) so reruns are bit-identical.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.stats import norm as _norm

from .adversary import STRATEGIES, AdversaryStrategy, LabeledSampleSet, corrupt
from .chowfilter import ChowEstimate, FilterParams, chow_distance, robust_chow
from .distributions import ReasonableDistribution, gaussian_descriptor, hypercube_descriptor
from .errors import ConfigError
from .intersection_learner import Intersection, learn_intersection
from .ltf_learner import LTF, LTFConfig, learn_ltf
from .ptf_learner import PTF, learn_ptf

LEARNERS = ("chow", "ltf", "ptf", "intersection")
CSV_COLUMNS = ("learner", "strategy", "eps", "trial", "seed", "disagreement",
               "chow_error", "iterations", "points_removed", "wall_time_ms", "flags")


@dataclass
class ExperimentConfig:
    learner: str
    n: int
    eps_grid: Sequence[float]
    strategies: Sequence[str]
    m_train: int
    d: int = 1
    k: int = 1
    dist: str = "gaussian"
    m_holdout: int = 20_000
    m_score: int = 100_000
    trials: int = 3
    seed: int = 0
    out: str = "results.csv"
    rho: float = 0.9
    plant: dict = field(default_factory=dict)
    deterministic_output: bool = True
    timeout_s: float = 600.0
    xi: Optional[float] = None
    delta_override: Optional[float] = None

    def validate(self):
        problems = []
        if self.learner not in LEARNERS:
            problems.append(f"learner: must be one of {LEARNERS}, got {self.learner!r}")
        if self.n < 1:
            problems.append(f"n: must be >= 1, got {self.n}")
        if len(self.eps_grid) == 0:
            problems.append("eps_grid: must be non-empty")
        for e in self.eps_grid:
            if not (0.0 <= e < 1.0 / 3.0):
                problems.append(f"eps_grid: entries must lie in [0, 1/3), got {e}")
        if len(self.strategies) == 0:
            problems.append("strategies: must be non-empty")
        for s in self.strategies:
            if s not in STRATEGIES:
                problems.append(f"strategies: unknown tag {s!r}")
        if self.m_train < 100:
            problems.append(f"m_train: must be >= 100, got {self.m_train}")
        if self.trials < 1:
            problems.append("trials: must be >= 1")
        if self.dist not in ("gaussian", "hypercube"):
            problems.append(f"dist: must be gaussian or hypercube, got {self.dist!r}")
        if self.learner == "intersection" and not (1 <= self.k <= 3):
            problems.append(f"k: intersection learner needs 1 <= k <= 3, got {self.k}")
        if problems:
            raise ConfigError("; ".join(problems))

    @classmethod
    def from_json(cls, data) -> "ExperimentConfig":
        if isinstance(data, (str, os.PathLike)):
            with open(data) as fh:
                data = json.load(fh)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            cfg = cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        cfg.validate()
        return cfg


@dataclass
class ResultRow:
    learner: str
    strategy: str
    eps: float
    trial: int
    seed: int
    disagreement: float
    chow_error: Optional[float]
    iterations: int
    points_removed: int
    wall_time_ms: int
    flags: str = ""

    def __post_init__(self):
        if not (0.0 <= self.disagreement <= 1.0):
            raise ValueError(f"disagreement out of [0,1]: {self.disagreement}")

    def as_csv_fields(self) -> list:
        return [self.learner, self.strategy, f"{self.eps:.17g}", str(self.trial),
                str(self.seed), f"{self.disagreement:.17g}",
                "" if self.chow_error is None else f"{self.chow_error:.17g}",
                str(self.iterations), str(self.points_removed),
                str(self.wall_time_ms), self.flags]


def score(hypothesis, plant, dist: ReasonableDistribution, count: int, seed) -> float:
    """Monte-Carlo disagreement on fresh clean samples (the guarantees are
    stated against the clean distribution)."""
    if count < 10 ** 3:
        raise ValueError(f"need at least 1000 scoring points, got {count}")
    pts = dist.sample(count, seed)
    return float(np.mean(np.asarray(hypothesis.evaluate(pts))
                         != np.asarray(plant.evaluate(pts))))


def analytic_ltf_chow(v: np.ndarray, theta: float,
                      dist: ReasonableDistribution) -> ChowEstimate:
    """Exact degree-1 Gaussian Chow vector of sign(v.x + theta):
    constant slot 2 Phi(theta) - 1, linear block 2 G(theta) v."""
    v = np.asarray(v, dtype=np.float64)
    chi = np.zeros(dist.basis.ell)
    chi[0] = 2.0 * float(_norm.cdf(theta)) - 1.0
    g = math.exp(-theta * theta / 2.0) / math.sqrt(2.0 * math.pi)
    chi[1:1 + v.shape[0]] = 2.0 * g * v
    return ChowEstimate(chi, dist.basis, dist.sigma, {"analytic": True})


def make_corrupted_source(f, dist: ReasonableDistribution, eps: float,
                          strategy: AdversaryStrategy):
    """Fresh-batch oracle: draw clean points, label by the plant, corrupt."""
    def draw(m: int, seed) -> LabeledSampleSet:
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        s_draw, s_adv = ss.spawn(2)
        pts = dist.sample(m, s_draw)
        clean = LabeledSampleSet(pts, np.asarray(f.evaluate(pts), dtype=np.float64))
        return corrupt(clean, f, eps, strategy, dist, s_adv)
    return draw


def _random_unit(rng, n: int) -> np.ndarray:
    v = rng.standard_normal(n)
    return v / np.linalg.norm(v)


def _plant_for_cell(config: ExperimentConfig, dist: ReasonableDistribution, rng):
    """Build the cell's target hypothesis from the plant config."""
    plant_cfg = config.plant
    if config.learner in ("chow", "ltf"):
        theta = float(plant_cfg.get("theta", 0.5))
        if "v" in plant_cfg:
            v = np.asarray(plant_cfg["v"], dtype=np.float64)
            v = v / np.linalg.norm(v)
        else:
            v = _random_unit(rng, config.n)
        return LTF(v, theta)
    if config.learner == "ptf":
        from .polybasis import Polynomial
        if "coeffs" in plant_cfg:
            coeffs = np.asarray(plant_cfg["coeffs"], dtype=np.float64)
        else:
            # default plant: sign(x1^2 - 1)
            coeffs = np.zeros(dist.basis.ell)
            exp = np.zeros(config.n, dtype=np.int64)
            coeffs[0] = -1.0
            exp[0] = 2
            coeffs[dist.basis.index_of(tuple(exp))] = 1.0
        return PTF(Polynomial(dist.basis, coeffs))
    if config.learner == "intersection":
        thetas = plant_cfg.get("thetas", [0.5] * config.k)
        if len(thetas) != config.k:
            raise ConfigError(f"plant.thetas: need {config.k} entries")
        if "vs" in plant_cfg:
            vs = [np.asarray(v, dtype=np.float64) for v in plant_cfg["vs"]]
            vs = [v / np.linalg.norm(v) for v in vs]
        else:
            raw = rng.standard_normal((config.n, config.k))
            q, _ = np.linalg.qr(raw)
            vs = [q[:, i] for i in range(config.k)]
        return Intersection([LTF(v, float(t)) for v, t in zip(vs, thetas)])
    raise ConfigError(f"no plant rule for learner {config.learner!r}")


def _build_dist(config: ExperimentConfig, eps: float) -> ReasonableDistribution:
    d = 2 if config.learner == "intersection" else config.d
    if config.dist == "hypercube":
        return hypercube_descriptor(config.n, d, eps)
    return gaussian_descriptor(config.n, d, eps)


def _run_cell(config: ExperimentConfig, strategy_tag: str, eps: float,
              trial: int, cell_index: int) -> ResultRow:
    ss = np.random.SeedSequence(config.seed, spawn_key=(cell_index,))
    cell_seed = int(ss.generate_state(1)[0])
    s_plant, s_corrupt, s_learn, s_score, s_extra = ss.spawn(5)
    started = time.monotonic()

    dist = _build_dist(config, eps)
    rng = np.random.default_rng(s_plant)
    plant = _plant_for_cell(config, dist, rng)
    pts = dist.sample(config.m_train, s_extra)
    clean = LabeledSampleSet(pts, np.asarray(plant.evaluate(pts), dtype=np.float64))
    strategy = AdversaryStrategy(strategy_tag, rho=config.rho)
    corrupted = corrupt(clean, plant, eps, strategy, dist, s_corrupt)

    disagreement = 0.0
    chow_error: Optional[float] = None
    iterations = 0
    removed = 0
    flags = []

    if config.learner == "chow":
        est = robust_chow(corrupted, dist, FilterParams(eps=eps))
        truth = analytic_ltf_chow(plant.v, plant.theta, dist)
        chow_error = chow_distance(est, truth)
        iterations = int(est.provenance["iterations"])
        removed = int(est.provenance["pruned"] + est.provenance["filtered"])
        if est.provenance.get("degraded"):
            flags.append("degraded")
        if est.provenance.get("cap_reached"):
            flags.append("cap_reached")
    else:
        source = make_corrupted_source(plant, dist, eps, strategy)
        if config.learner == "ltf":
            hyp = learn_ltf(corrupted, dist, eps, source=source,
                            seed=int(s_learn.generate_state(1)[0]),
                            config=LTFConfig(batch_cap=config.m_train,
                                             holdout_size=config.m_holdout))
        elif config.learner == "ptf":
            hyp = learn_ptf(corrupted, dist, config.d, eps, xi=config.xi,
                            oracle_strategy=strategy,
                            m_oracle=min(config.m_train, 100_000),
                            seed=int(s_learn.generate_state(1)[0]))
        else:
            hyp = learn_intersection(corrupted, config.k, eps, source=source,
                                     delta_override=config.delta_override,
                                     m_tournament=config.m_holdout,
                                     seed=int(s_learn.generate_state(1)[0]))
        disagreement = score(hyp, plant, dist, config.m_score, s_score)

    elapsed_ms = int(round((time.monotonic() - started) * 1000.0))
    if config.deterministic_output:
        wall = 0
    else:
        wall = elapsed_ms
        if elapsed_ms > config.timeout_s * 1000.0:
            flags.append("timeout")
    return ResultRow(config.learner, strategy_tag, eps, trial, cell_seed,
                     disagreement, chow_error, iterations, removed, wall,
                     ";".join(flags))


def _pool_size(n_cells: int) -> int:
    env = os.environ.get("ROBUST_CHOW_THREADS")
    if env is not None:
        try:
            cap = max(1, int(env))
        except ValueError:
            raise ConfigError(f"ROBUST_CHOW_THREADS: not an integer: {env!r}")
    else:
        cap = min(4, os.cpu_count() or 1)
    return max(1, min(cap, n_cells))


def run_experiment(config: ExperimentConfig, out: Optional[str] = None):
    """Run the (strategy, eps, trial) grid and write the CSV. Returns the
    rows in cell order; rerunning the same config is bit-identical."""
    config.validate()
    cells = []
    idx = 0
    for strategy in config.strategies:
        for eps in config.eps_grid:
            for trial in range(config.trials):
                cells.append((strategy, eps, trial, idx))
                idx += 1

    def work(cell):
        strategy, eps, trial, cell_index = cell
        try:
            return _run_cell(config, strategy, eps, trial, cell_index)
        except Exception as exc:  # record the failure, keep the sweep alive
            ss = np.random.SeedSequence(config.seed, spawn_key=(cell_index,))
            return ResultRow(config.learner, strategy, eps, trial,
                             int(ss.generate_state(1)[0]), 1.0, None, 0, 0, 0,
                             f"error:{type(exc).__name__}")

    with ThreadPoolExecutor(max_workers=_pool_size(len(cells))) as pool:
        rows = list(pool.map(work, cells))

    path = out or config.out
    write_csv(rows, path)
    return rows


def write_csv(rows, path):
    """Single atomic write: temp file in the target directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".csv.part")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(",".join(CSV_COLUMNS) + "\n")
            for row in rows:
                fh.write(",".join(row.as_csv_fields()) + "\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
