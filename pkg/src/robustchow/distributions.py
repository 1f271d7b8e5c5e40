"""Descriptors of distributions the filter can certify: samplers, moment
matrices, polynomial tail bounds, and the derived constants (gamma, delta,
T_max) that parameterize pruning and filtering.

A descriptor is built for a working corruption rate eps, because delta and
T_max both depend on it. The rate used for derivations is clamped below by
EPS_FLOOR so that eps = 0 runs stay well defined.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate
from scipy.special import gamma as gamma_fn
from scipy.special import gammaincc

from .errors import (
    IntegralDiverges,
    NonMultilinearBasis,
    NotPSD,
    UnknownFamily,
)
from .polybasis import MonomialBasis, enumerate_basis

EPS_FLOOR = 1e-4
# Eigenvalues below this fraction of the largest are treated as null directions.
NULL_EIGENVALUE_REL = 1e-10

_FAMILIES = ("gaussian-chaos", "hypercube-chaos", "log-concave-chaos", "custom")


@dataclass(frozen=True)
class TailBound:
    """Q_d(T): a non-increasing bound on Pr[|p(X)| >= T] over normalized degree-d p.

    Parametric families all share the form min{1, exp(offset - c * T^power)};
    custom tails supply their own callable.
    """

    family: str
    d: int
    c: float = 0.0
    offset: float = 0.0
    power: float = 1.0
    custom_q: Optional[Callable] = None

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)
        if self.custom_q is not None:
            vals = np.clip(self.custom_q(t), 0.0, 1.0)
        else:
            with np.errstate(over="ignore"):
                vals = np.minimum(1.0, np.exp(self.offset - self.c * np.power(t, self.power)))
        return vals if vals.shape else float(vals)


def make_tail_bound(family: str, d: int, c: Optional[float] = None,
                    offset: Optional[float] = None) -> TailBound:
    """Tail bound for a named family at degree d; constants overridable.

    gaussian/hypercube chaos: Q_d(T) = min{1, exp(2 - (d/(2e)) T^(2/d))},
    except exact Q_1(T) = min{1, exp(-T^2/2)} for the degree-1 Gaussian.
    log-concave chaos: Q_d(T) = min{1, exp(2 - T^(1/d)/(2e))}.
    """
    if d < 1:
        raise ValueError(f"degree must be >= 1, got {d}")
    if family == "gaussian-chaos" and d == 1:
        return TailBound(family, d, c=0.5 if c is None else c,
                         offset=0.0 if offset is None else offset, power=2.0)
    if family in ("gaussian-chaos", "hypercube-chaos"):
        return TailBound(family, d, c=(d / (2 * math.e)) if c is None else c,
                         offset=2.0 if offset is None else offset, power=2.0 / d)
    if family == "log-concave-chaos":
        return TailBound(family, d, c=(1 / (2 * math.e)) if c is None else c,
                         offset=2.0 if offset is None else offset, power=1.0 / d)
    raise UnknownFamily(f"unknown tail family {family!r}; expected one of {_FAMILIES[:3]}")


def _crossing(tail: TailBound, level: float, hi_cap: float = 1e12) -> float:
    """Smallest T (within bisection tolerance) with Q(T) <= level."""
    if tail.custom_q is None:
        u = tail.offset + math.log(1.0 / level)
        return (u / tail.c) ** (1.0 / tail.power)
    lo, hi = 0.0, 1.0
    while tail(hi) > level:
        hi *= 2.0
        if hi > hi_cap:
            raise IntegralDiverges(f"custom tail never drops below {level} by T={hi_cap}")
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if tail(mid) <= level:
            hi = mid
        else:
            lo = mid
    return hi


def compute_delta(tail: TailBound, eps: float) -> float:
    """delta = integral of T * min(eps, Q_d(T)) dT over [0, infinity).

    Parametric tails use the closed form (incomplete gamma) and cross-check it
    against adaptive quadrature; custom tails use quadrature alone.
    """
    if not (0.0 < eps <= 0.5):
        raise ValueError(f"eps must lie in (0, 1/2], got {eps}")
    t0 = _crossing(tail, eps)
    head = eps * t0 * t0 / 2.0
    t_hi = _crossing(tail, 1e-12)

    def integrand(t):
        return t * np.minimum(eps, tail(t))

    quad_tail, abserr = integrate.quad(integrand, t0, t_hi, limit=200, epsrel=1e-6)
    if not math.isfinite(quad_tail) or abserr > max(1e-6 * abs(quad_tail), 1e-9):
        raise IntegralDiverges(f"tail quadrature did not converge (err={abserr})")

    if tail.custom_q is not None:
        return head + quad_tail

    p, c, off = tail.power, tail.c, tail.offset
    u0 = off + math.log(1.0 / eps)
    closed_tail = math.exp(off) * c ** (-2.0 / p) / p * gamma_fn(2.0 / p) * gammaincc(2.0 / p, u0)
    if abs(closed_tail - quad_tail) > 5e-5 * max(abs(closed_tail), 1e-12):
        raise IntegralDiverges(
            f"closed form {closed_tail} disagrees with quadrature {quad_tail}")
    return head + closed_tail


def compute_tmax(tail: TailBound, eps: float, ell: int) -> float:
    """Smallest T >= sqrt(ell) with Q_d(T / (2 sqrt(ell))) <= eps / (10 ell).

    Bisection to relative 1e-6. Hypercube tails short-circuit to exactly
    sqrt(ell), where pruning is disabled entirely.
    """
    if not (0.0 < eps <= 0.5):
        raise ValueError(f"eps must lie in (0, 1/2], got {eps}")
    root_ell = math.sqrt(ell)
    if tail.family == "hypercube-chaos":
        return root_ell
    target = eps / (10.0 * ell)
    scale = 2.0 * root_ell
    if tail(root_ell / scale) <= target:
        return root_ell
    lo, hi = root_ell, 2.0 * root_ell
    while tail(hi / scale) > target:
        lo, hi = hi, hi * 2.0
        if hi > 1e15:
            raise IntegralDiverges("tail does not decay; T_max search failed")
    while (hi - lo) > 1e-7 * hi:
        mid = 0.5 * (lo + hi)
        if tail(mid / scale) <= target:
            hi = mid
        else:
            lo = mid
    return hi


def _double_factorial_table(max_power: int) -> np.ndarray:
    """table[s] = (s-1)!! for even s, 0 for odd s. table[0] = 1."""
    table = np.zeros(max_power + 1, dtype=np.float64)
    table[0] = 1.0
    for s in range(2, max_power + 1, 2):
        table[s] = table[s - 2] * (s - 1)
    return table


def gaussian_moment_matrix(basis: MonomialBasis) -> np.ndarray:
    """E[m_i(X) m_j(X)] for X ~ N(0, I), via per-coordinate double factorials."""
    exps = basis.exponents
    table = _double_factorial_table(2 * int(exps.max()) if basis.ell > 1 else 0)
    ell, n = exps.shape
    out = np.empty((ell, ell), dtype=np.float64)
    chunk = max(1, 4_000_000 // max(1, ell * n))
    for start in range(0, ell, chunk):
        rows = exps[start:start + chunk]              # (r, n)
        sums = rows[:, None, :] + exps[None, :, :]    # (r, ell, n)
        out[start:start + chunk] = table[sums].prod(axis=2)
    return out


def hypercube_moment_matrix(basis: MonomialBasis) -> np.ndarray:
    """Identity: multilinear monomials are orthonormal under the uniform cube."""
    if basis.exponents.max(initial=0) > 1:
        raise NonMultilinearBasis("hypercube moments need all exponents <= 1")
    return np.eye(basis.ell)


@dataclass
class ReasonableDistribution:
    """A distribution the filter can run against.

    Bundles the basis, the (approximate) moment matrix Sigma with relative
    error gamma, the tail bound, and the derived constants delta and T_max
    for the working rate eps_ref.
    """

    name: str
    n: int
    d: int
    basis: MonomialBasis
    sigma: np.ndarray
    gamma: float
    tail: TailBound
    delta: float
    t_max: float
    prune_enabled: bool
    eps_ref: float
    sampler: Optional[Callable] = None  # (count, Generator) -> (count, n) array
    _whitener: Optional[tuple] = field(default=None, repr=False, compare=False)

    @property
    def ell(self) -> int:
        return self.basis.ell

    def sample(self, count: int, seed) -> np.ndarray:
        return sample(self, count, seed)

    def whitener(self):
        """(Sigma^{-1/2} as ell x ell, null-direction basis ell x r), cached.

        Pseudo-inverse policy: eigenvalues below NULL_EIGENVALUE_REL of the
        largest are null directions excluded from the inverse square root.
        """
        if self._whitener is None:
            w, v = np.linalg.eigh(self.sigma)
            lam_max = float(w.max(initial=0.0))
            if lam_max <= 0:
                raise NotPSD("moment matrix has no positive eigenvalues")
            null = w < NULL_EIGENVALUE_REL * lam_max
            live = ~null
            isqrt = (v[:, live] / np.sqrt(w[live])) @ v[:, live].T
            self._whitener = (isqrt, v[:, null])
        return self._whitener


def _check_reasonable(dist: ReasonableDistribution, eps_eff: float):
    ell = dist.ell
    if dist.t_max < math.sqrt(ell) - 1e-9:
        raise ValueError("T_max below sqrt(ell) floor")
    if dist.tail(dist.t_max / (2 * math.sqrt(ell))) > eps_eff / (10 * ell) + 1e-12:
        raise ValueError("T_max fails the tail condition")
    if dist.delta <= 0:
        raise ValueError("delta must be positive")


def gaussian_descriptor(n: int, d: int, eps: float,
                        tail_c: Optional[float] = None) -> ReasonableDistribution:
    """Standard Gaussian N(0, I_n) with exact analytic moments (gamma = 0)."""
    eps_eff = max(eps, EPS_FLOOR)
    basis = enumerate_basis(n, d)
    tail = make_tail_bound("gaussian-chaos", d, c=tail_c)
    dist = ReasonableDistribution(
        name="gaussian", n=n, d=d, basis=basis,
        sigma=gaussian_moment_matrix(basis), gamma=0.0, tail=tail,
        delta=compute_delta(tail, eps_eff),
        t_max=compute_tmax(tail, eps_eff, basis.ell),
        prune_enabled=True, eps_ref=eps,
        sampler=lambda count, rng: rng.standard_normal((count, n)),
    )
    _check_reasonable(dist, eps_eff)
    return dist


def hypercube_descriptor(n: int, d: int, eps: float,
                         tail_c: Optional[float] = None) -> ReasonableDistribution:
    """Uniform on {-1,+1}^n with the multilinear basis; Sigma = I, pruning off."""
    eps_eff = max(eps, EPS_FLOOR)
    basis = enumerate_basis(n, d, multilinear=True)
    tail = make_tail_bound("hypercube-chaos", d, c=tail_c)
    dist = ReasonableDistribution(
        name="hypercube", n=n, d=d, basis=basis,
        sigma=np.eye(basis.ell), gamma=0.0, tail=tail,
        delta=compute_delta(tail, eps_eff),
        t_max=math.sqrt(basis.ell),
        prune_enabled=False, eps_ref=eps,
        sampler=lambda count, rng: (2.0 * rng.integers(0, 2, size=(count, n)) - 1.0),
    )
    if dist.delta <= 0:
        raise ValueError("delta must be positive")
    return dist


def log_concave_descriptor(n: int, d: int, moment_table: np.ndarray, gamma: float,
                           eps: float, sampler: Optional[Callable] = None,
                           tail_c: Optional[float] = None,
                           name: str = "log-concave") -> ReasonableDistribution:
    """Wrap user-supplied degree-2d moments as Sigma with relative error gamma.

    Sampling is only available if the caller registers a sampler; moment-only
    descriptors still support every estimator that consumes existing samples.
    """
    eps_eff = max(eps, EPS_FLOOR)
    basis = enumerate_basis(n, d)
    M = np.asarray(moment_table, dtype=np.float64)
    if M.shape != (basis.ell, basis.ell):
        raise NotPSD(f"moment table shape {M.shape}, expected {(basis.ell, basis.ell)}")
    if not np.allclose(M, M.T, atol=1e-8):
        raise NotPSD("moment table is not symmetric")
    w = np.linalg.eigvalsh(0.5 * (M + M.T))
    if w.min() < -1e-10 * max(w.max(), 1.0):
        raise NotPSD(f"moment table has negative eigenvalue {w.min()}")
    tail = make_tail_bound("log-concave-chaos", d, c=tail_c)
    dist = ReasonableDistribution(
        name=name, n=n, d=d, basis=basis,
        sigma=0.5 * (M + M.T), gamma=float(gamma), tail=tail,
        delta=compute_delta(tail, eps_eff),
        t_max=compute_tmax(tail, eps_eff, basis.ell),
        prune_enabled=True, eps_ref=eps, sampler=sampler,
    )
    _check_reasonable(dist, eps_eff)
    return dist


def sample(dist: ReasonableDistribution, count: int, seed) -> np.ndarray:
    """count i.i.d. points from the descriptor's law, deterministic in seed."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if dist.sampler is None:
        raise UnknownFamily(f"distribution {dist.name!r} has no registered sampler")
    rng = np.random.default_rng(seed)
    return dist.sampler(count, rng)


def from_config(cfg: dict, eps: float) -> ReasonableDistribution:
    """Build a descriptor from the JSON config schema.

    { "family": "gaussian|hypercube|log-concave", "n":…, "d":…, "gamma":…,
      "tail_constants": {"c":…}, "moments_file": "path.csv" }
    """
    family = cfg.get("family")
    n, d = int(cfg["n"]), int(cfg["d"])
    tail_c = None
    if isinstance(cfg.get("tail_constants"), dict):
        tail_c = cfg["tail_constants"].get("c")
        tail_c = None if tail_c is None else float(tail_c)
    if family == "gaussian":
        return gaussian_descriptor(n, d, eps, tail_c=tail_c)
    if family == "hypercube":
        return hypercube_descriptor(n, d, eps, tail_c=tail_c)
    if family == "log-concave":
        path = cfg.get("moments_file")
        if not path:
            raise UnknownFamily("log-concave config requires moments_file")
        moments = np.loadtxt(path, delimiter=",", ndmin=2)
        return log_concave_descriptor(n, d, moments, float(cfg.get("gamma", 0.0)),
                                      eps, tail_c=tail_c)
    raise UnknownFamily(f"unknown distribution family {family!r}")
