"""Multi-index enumeration, monomial evaluation, and L2 geometry.

A MonomialBasis fixes the global coordinate system used by every estimator in
the package: all multi-indices of degree <= d over n variables, in graded
lexicographic order (degree first, then lexicographically descending exponent
tuples), with index 0 the constant monomial. Every coefficient vector, Chow
vector, and moment matrix in the package is indexed by this ordering.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import comb

from .errors import DimensionMismatch, NegativeQuadraticForm, SizeCapExceeded

# Dense ell x ell matrices dominate memory, so refuse absurd bases outright.
DEFAULT_SIZE_CAP = 200_000


def _exponents_of_degree(n, degree, max_exp):
    """Yield exponent tuples with given total degree, lexicographically descending."""
    if n == 1:
        if degree <= max_exp:
            yield (degree,)
        return
    for first in range(min(degree, max_exp), -1, -1):
        for rest in _exponents_of_degree(n - 1, degree - first, max_exp):
            yield (first,) + rest


@dataclass(frozen=True)
class MonomialBasis:
    """All multi-indices of degree <= d on R^n in graded lex order."""

    n: int
    d: int
    exponents: np.ndarray  # (ell, n) int array, row i = multi-index a^i
    multilinear: bool = False
    _index: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        lookup = {tuple(int(e) for e in row): i for i, row in enumerate(self.exponents)}
        object.__setattr__(self, "_index", lookup)

    @property
    def ell(self) -> int:
        return self.exponents.shape[0]

    def __len__(self):
        return self.ell

    def index_of(self, multi_index) -> int:
        """Position of an exponent tuple in the graded lex ordering."""
        key = tuple(int(e) for e in multi_index)
        if key not in self._index:
            raise DimensionMismatch(f"multi-index {key} not in basis (n={self.n}, d={self.d})")
        return self._index[key]

    def same_layout(self, other: "MonomialBasis") -> bool:
        return (
            self.n == other.n
            and self.d == other.d
            and self.multilinear == other.multilinear
        )


def enumerate_basis(n: int, d: int, multilinear: bool = False,
                    size_cap: int = DEFAULT_SIZE_CAP) -> MonomialBasis:
    """Build the degree-<=d monomial basis on R^n.

    multilinear=True keeps only 0/1 exponents (the hypercube basis, where
    x_j^2 = 1 makes higher powers redundant).
    """
    if n < 1 or d < 1:
        raise ValueError(f"need n >= 1 and d >= 1, got n={n}, d={d}")
    if multilinear:
        ell = int(sum(comb(n, i, exact=True) for i in range(min(d, n) + 1)))
    else:
        ell = int(comb(n + d, d, exact=True))
    if ell > size_cap:
        raise SizeCapExceeded(f"basis size {ell} exceeds cap {size_cap}")
    max_exp = 1 if multilinear else d
    rows = []
    for degree in range(d + 1):
        rows.extend(_exponents_of_degree(n, degree, max_exp))
    exps = np.array(rows, dtype=np.int64).reshape(len(rows), n)
    assert exps.shape[0] == ell
    return MonomialBasis(n=n, d=d, exponents=exps, multilinear=multilinear)


def eval_monomials(basis: MonomialBasis, x) -> np.ndarray:
    """Evaluate all basis monomials at a single point x; entry 0 is 1."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (basis.n,):
        raise DimensionMismatch(f"point has shape {x.shape}, basis expects ({basis.n},)")
    return eval_monomials_batch(basis, x[None, :])[0]


def eval_monomials_batch(basis: MonomialBasis, points) -> np.ndarray:
    """Evaluate the basis on an (m, n) array of points, returning (m, ell).

    Per-coordinate power tables keep this at one multiply per nonzero exponent.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != basis.n:
        raise DimensionMismatch(f"points have shape {pts.shape}, basis expects (m, {basis.n})")
    m = pts.shape[0]
    max_exp = int(basis.exponents.max()) if basis.ell > 1 else 0
    # powers[j][p] = x_j ** p for p = 1..max_exp
    powers = []
    for j in range(basis.n):
        col = [None, pts[:, j]]
        for p in range(2, max_exp + 1):
            col.append(col[-1] * pts[:, j])
        powers.append(col)
    out = np.ones((m, basis.ell), dtype=np.float64)
    for i, row in enumerate(basis.exponents):
        for j in range(basis.n):
            p = int(row[j])
            if p:
                out[:, i] *= powers[j][p]
    return out


@dataclass
class Polynomial:
    """Dense polynomial p(x) = sum_i coeffs[i] * m_i(x) over a fixed basis."""

    basis: MonomialBasis
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=np.float64)
        if self.coeffs.shape != (self.basis.ell,):
            raise DimensionMismatch(
                f"coefficient vector has shape {self.coeffs.shape}, basis needs ({self.basis.ell},)")
        if not np.all(np.isfinite(self.coeffs)):
            raise ValueError("polynomial coefficients must be finite")

    def __call__(self, points) -> np.ndarray:
        return eval_monomials_batch(self.basis, points) @ self.coeffs

    def scaled(self, alpha: float) -> "Polynomial":
        return Polynomial(self.basis, self.coeffs * alpha)

    def plus(self, other: "Polynomial") -> "Polynomial":
        if not self.basis.same_layout(other.basis):
            raise DimensionMismatch("cannot add polynomials over different bases")
        return Polynomial(self.basis, self.coeffs + other.coeffs)

    def to_json(self) -> str:
        return json.dumps({"n": self.basis.n, "d": self.basis.d,
                           "multilinear": self.basis.multilinear,
                           "coeffs": [float(c) for c in self.coeffs]})

    @classmethod
    def from_json(cls, text: str) -> "Polynomial":
        obj = json.loads(text)
        basis = enumerate_basis(int(obj["n"]), int(obj["d"]),
                                multilinear=bool(obj.get("multilinear", False)))
        coeffs = np.asarray(obj["coeffs"], dtype=np.float64)
        if coeffs.shape != (basis.ell,):
            raise DimensionMismatch(
                f"JSON has {coeffs.shape[0]} coefficients, basis needs {basis.ell}")
        return cls(basis, coeffs)


def eval_poly(p: Polynomial, x) -> float:
    """p evaluated at a single point."""
    return float(np.dot(p.coeffs, eval_monomials(p.basis, x)))


def l2_norm(p: Polynomial, moments: np.ndarray) -> float:
    """sqrt(c^T M c): the L2(D) norm of p when M is D's monomial moment matrix."""
    M = np.asarray(moments, dtype=np.float64)
    if M.shape != (p.basis.ell, p.basis.ell):
        raise DimensionMismatch(f"moment matrix shape {M.shape} vs basis size {p.basis.ell}")
    q = float(p.coeffs @ M @ p.coeffs)
    scale = max(1.0, float(np.abs(M).max()) * float(p.coeffs @ p.coeffs))
    if q < -1e-9 * scale:
        raise NegativeQuadraticForm(f"c^T M c = {q} < 0: moment matrix not PSD")
    return float(np.sqrt(max(q, 0.0)))
