"""Gaussian analysis primitives.

Normalized Hermite polynomials and tensors, the standard normal CDF and
quantile, Gauss-Hermite quadrature under N(0, 1), projections onto
orthogonal complements, random unit directions and the sign-matching
polynomial used to certify label/moment correlation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import combinations_with_replacement

import numpy as np

from .errors import ArgumentError, TensorSizeError

MAX_HERMITE_DEGREE = 64
DEFAULT_TENSOR_CAP = 10**8
DEFAULT_QUADRATURE_NODES = 201

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


# ---------------------------------------------------------------------------
# Hermite polynomials
# ---------------------------------------------------------------------------


def hermite_univariate(k, t):
    """Normalized Hermite polynomial h_k(t) = He_k(t) / sqrt(k!).

    Uses the three-term recurrence
    h_{j+1}(t) = (t h_j(t) - sqrt(j) h_{j-1}(t)) / sqrt(j + 1).
    ``t`` may be a scalar or an array.
    """
    k = int(k)
    if k < 0 or k > MAX_HERMITE_DEGREE:
        raise ArgumentError(f"Hermite degree must lie in [0, {MAX_HERMITE_DEGREE}], got {k}")
    scalar = np.ndim(t) == 0
    t = np.asarray(t, dtype=float)
    prev = np.ones_like(t)
    if k == 0:
        return float(prev) if scalar else prev
    cur = t.copy()
    for j in range(1, k):
        prev, cur = cur, (t * cur - math.sqrt(j) * prev) / math.sqrt(j + 1)
    return float(cur) if scalar else cur


def hermite_table(t: np.ndarray, kmax: int) -> np.ndarray:
    """Probabilists' Hermite values He_0..He_kmax at every entry of ``t``.

    Returns an array of shape ``t.shape + (kmax + 1,)``.
    """
    t = np.asarray(t, dtype=float)
    out = np.empty(t.shape + (kmax + 1,))
    out[..., 0] = 1.0
    if kmax >= 1:
        out[..., 1] = t
    for j in range(1, kmax):
        out[..., j + 1] = t * out[..., j] - j * out[..., j - 1]
    return out


@dataclass
class SymmetricTensor:
    """Dense order-m tensor over R^d stored as an array of shape (d,)*m."""

    order: int
    dim: int
    entries: np.ndarray

    def __post_init__(self):
        if self.entries.shape != (self.dim,) * self.order:
            raise ArgumentError(
                f"entries shape {self.entries.shape} does not match order={self.order}, dim={self.dim}"
            )

    def contract(self, w: np.ndarray) -> float:
        """<T, w x w x ... x w>."""
        out = self.entries
        for _ in range(self.order):
            out = np.tensordot(out, w, axes=([0], [0]))
        return float(out)

    def frobenius(self) -> float:
        return float(np.linalg.norm(self.entries.ravel()))


def _check_cap(d: int, m: int, cap: int) -> None:
    required = d**m
    if required > cap:
        raise TensorSizeError(required, cap)


@lru_cache(maxsize=64)
def _index_table(d: int, m: int):
    """Sorted multi-indices, their multiplicity profiles and the dense scatter map.

    ``profiles[c, j]`` counts how often coordinate j appears in multi-index c;
    ``scatter[flat]`` gives the multi-index id of every dense entry.
    """
    combos = np.array(list(combinations_with_replacement(range(d), m)), dtype=np.int64).reshape(-1, m)
    profiles = np.zeros((len(combos), d), dtype=np.int64)
    for j in range(d):
        profiles[:, j] = (combos == j).sum(axis=1)
    # rank of a sorted multi-index via a dictionary on the tuple
    lookup = {tuple(c): i for i, c in enumerate(combos.tolist())}
    if m == 0:
        return combos, profiles, np.zeros(1, dtype=np.int64)
    grid = np.indices((d,) * m).reshape(m, -1).T
    grid.sort(axis=1)
    scatter = np.fromiter((lookup[tuple(row)] for row in grid.tolist()), dtype=np.int64, count=len(grid))
    return combos, profiles, scatter


def weighted_hermite_tensor(
    X: np.ndarray, weights: np.ndarray, m: int, cap: int = DEFAULT_TENSOR_CAP, chunk: int = 8192
) -> SymmetricTensor:
    """sum_i weights[i] * H_m(X[i]) as a dense symmetric tensor.

    Each distinct entry with multiplicity profile a equals
    prod_j He_{a_j}(x_j) / sqrt(m!), so only the sorted multi-indices are
    evaluated and then scattered to every index order.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    weights = np.asarray(weights, dtype=float)
    n, d = X.shape
    if m < 0:
        raise ArgumentError("tensor order must be nonnegative")
    _check_cap(d, m, cap)
    if m == 0:
        return SymmetricTensor(0, d, np.array(weights.sum()))
    _, profiles, scatter = _index_table(d, m)
    cols = np.arange(d)
    unique = np.zeros(len(profiles))
    for start in range(0, n, chunk):
        xs = X[start : start + chunk]
        table = hermite_table(xs, m)  # (b, d, m+1)
        prod = table[:, cols[None, :], profiles].prod(axis=2)  # (b, C)
        unique += weights[start : start + chunk] @ prod
    unique /= math.sqrt(math.factorial(m))
    return SymmetricTensor(m, d, unique[scatter].reshape((d,) * m))


def hermite_tensor(k: int, x, cap: int = DEFAULT_TENSOR_CAP) -> SymmetricTensor:
    """The order-k Hermite tensor H_k(x) of a single point x."""
    x = np.asarray(x, dtype=float).ravel()
    if k < 0 or k > MAX_HERMITE_DEGREE:
        raise ArgumentError(f"tensor order must lie in [0, {MAX_HERMITE_DEGREE}], got {k}")
    return weighted_hermite_tensor(x[None, :], np.ones(1), k, cap=cap)


# ---------------------------------------------------------------------------
# Normal CDF and quantile
# ---------------------------------------------------------------------------


def norm_pdf(x):
    return _INV_SQRT_2PI * np.exp(-0.5 * np.square(x))


def norm_cdf(x):
    """Phi(x); accepts scalars or arrays."""
    if np.ndim(x) == 0:
        return 0.5 * math.erfc(-float(x) / _SQRT2)
    return np.vectorize(lambda v: 0.5 * math.erfc(-v / _SQRT2), otypes=[float])(x)


def norm_sf(x):
    """Upper tail 1 - Phi(x) without cancellation."""
    if np.ndim(x) == 0:
        return 0.5 * math.erfc(float(x) / _SQRT2)
    return np.vectorize(lambda v: 0.5 * math.erfc(v / _SQRT2), otypes=[float])(x)


def _lower_quantile(p: float) -> float:
    # p <= 1/2: bracket, bisect, then Newton on log Phi for relative accuracy
    lo, hi = -40.0, 0.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if norm_cdf(mid) < p:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-10:
            break
    x = 0.5 * (lo + hi)
    for _ in range(4):
        cdf = norm_cdf(x)
        pdf = float(norm_pdf(x))
        if cdf <= 0.0 or pdf <= 0.0:
            break
        step = (math.log(cdf) - math.log(p)) * cdf / pdf
        x -= step
        if abs(step) < 1e-15 * max(1.0, abs(x)):
            break
    return x


def gaussian_quantile(p: float) -> float:
    """Phi^{-1}(p) for p strictly inside (0, 1)."""
    p = float(p)
    if not (0.0 < p < 1.0):
        raise ArgumentError(f"quantile needs p in (0, 1), got {p}")
    if p == 0.5:
        return 0.0
    if p < 0.5:
        return _lower_quantile(p)
    return -_lower_quantile(1.0 - p)


def gaussian_upper_quantile(q: float) -> float:
    """The point c with Pr[z >= c] = q; exact even when 1 - q rounds to 1."""
    q = float(q)
    if not (0.0 < q < 1.0):
        raise ArgumentError(f"tail mass must lie in (0, 1), got {q}")
    if q == 0.5:
        return 0.0
    if q < 0.5:
        return -_lower_quantile(q)
    return _lower_quantile(1.0 - q)


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and probability weights standing in for E_{z ~ N(0,1)}."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if len(self.nodes) != len(self.weights) or len(self.nodes) == 0:
            raise ArgumentError("nodes and weights must be nonempty and of equal length")
        if np.any(np.diff(self.nodes) <= 0):
            raise ArgumentError("quadrature nodes must be strictly increasing")
        if np.any(self.weights < 0):
            raise ArgumentError("quadrature weights must be nonnegative")

    def expect(self, values) -> float:
        return float(np.dot(self.weights, values))

    @property
    def size(self) -> int:
        return len(self.nodes)


@lru_cache(maxsize=8)
def _gauss_hermite(n: int):
    nodes, weights = np.polynomial.hermite_e.hermegauss(n)
    weights = weights / weights.sum()
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def gauss_hermite_rule(n: int = DEFAULT_QUADRATURE_NODES) -> QuadratureRule:
    """n-node Gauss-Hermite rule for the unit-variance Gaussian; exact to degree 2n-1."""
    if n < 1:
        raise ArgumentError("rule needs at least one node")
    nodes, weights = _gauss_hermite(int(n))
    return QuadratureRule(nodes, weights)


def split_gaussian_rule(
    split: float, lo: float = -12.0, hi: float = 12.0, panel: float = 0.25, points: int = 8
) -> QuadratureRule:
    """Composite Gauss-Legendre rule for N(0, 1) with a panel boundary at ``split``.

    Weights are Legendre weights times the Gaussian density, renormalized
    to sum to 1.  Because ``split`` is a panel edge, sums over the nodes on
    either side of it reproduce the Gaussian mass of that side.
    """
    if not lo < split < hi:
        raise ArgumentError("split point must lie strictly inside [lo, hi]")
    base_x, base_w = np.polynomial.legendre.leggauss(points)
    nodes, weights = [], []
    for a, b in ((lo, split), (split, hi)):
        count = max(1, int(math.ceil((b - a) / panel)))
        edges = np.linspace(a, b, count + 1)
        for left, right in zip(edges[:-1], edges[1:]):
            half = 0.5 * (right - left)
            z = left + half * (base_x + 1.0)
            nodes.append(z)
            weights.append(half * base_w * np.exp(-0.5 * z * z) * _INV_SQRT_2PI)
    nodes = np.concatenate(nodes)
    weights = np.concatenate(weights)
    return QuadratureRule(nodes, weights / weights.sum())


# ---------------------------------------------------------------------------
# Projections and random directions
# ---------------------------------------------------------------------------


def complement_basis(w) -> np.ndarray:
    """Orthonormal d x (d-1) basis of the complement of unit vector w.

    Built from the Householder reflection sending e_1 to w, so it is a
    deterministic function of w.
    """
    w = np.asarray(w, dtype=float).ravel()
    d = len(w)
    if abs(np.linalg.norm(w) - 1.0) > 1e-10:
        raise ArgumentError("complement basis needs a unit vector")
    e1 = np.zeros(d)
    e1[0] = 1.0
    u = e1 - w
    nu = np.linalg.norm(u)
    if nu < 1e-14:
        return np.eye(d)[:, 1:]
    u /= nu
    H = np.eye(d) - 2.0 * np.outer(u, u)
    return H[:, 1:]


def project_offcomplement(x, w, basis, tol: float = 1e-10) -> np.ndarray:
    """Coordinates of x in the complement of w: basis^T x."""
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float).ravel()
    basis = np.asarray(basis, dtype=float)
    if abs(np.linalg.norm(w) - 1.0) > tol:
        raise ArgumentError("w must be a unit vector")
    k = basis.shape[1]
    if np.max(np.abs(basis.T @ basis - np.eye(k)), initial=0.0) > tol:
        raise ArgumentError("basis columns are not orthonormal")
    if np.max(np.abs(basis.T @ w), initial=0.0) > tol:
        raise ArgumentError("basis columns are not orthogonal to w")
    return x @ basis


def random_unit_vector(d: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(d)
    while np.linalg.norm(v) == 0.0:
        v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def random_unit_in_span(basis, rng: np.random.Generator) -> np.ndarray:
    """Uniform unit vector in the span of orthonormal columns."""
    basis = np.asarray(basis, dtype=float)
    if basis.ndim != 2 or basis.shape[1] == 0:
        raise ArgumentError("random_unit_in_span needs a nonempty basis")
    coeffs = random_unit_vector(basis.shape[1], rng)
    v = basis @ coeffs
    return v / np.linalg.norm(v)


# ---------------------------------------------------------------------------
# Sign-matching polynomial
# ---------------------------------------------------------------------------


@dataclass
class UnivariatePoly:
    """exp(log_scale) * sum_j coeffs[j] z**j.

    The separate scale lets high-degree polynomials with tiny normalized
    coefficients stay representable; for |z| > 1 evaluation runs in the
    log domain so z**degree never overflows on its own, and the scale is
    applied to log|value| so it never underflows on its own either.
    """

    coeffs: np.ndarray
    log_scale: float = 0.0

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float).ravel()
        if not np.all(np.isfinite(c)) or not math.isfinite(self.log_scale):
            raise ArgumentError("polynomial coefficients must be finite")
        nz = np.flatnonzero(c)
        self.coeffs = c[: nz[-1] + 1] if len(nz) else np.zeros(1)

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def scaled_coeffs(self) -> np.ndarray:
        """Plain monomial coefficients (may underflow for extreme scales)."""
        return self.coeffs * math.exp(self.log_scale)

    def __call__(self, z):
        scalar = np.ndim(z) == 0
        z = np.atleast_1d(np.asarray(z, dtype=float))
        c = self.coeffs
        n = self.degree
        out = np.empty_like(z)
        small = np.abs(z) <= 1.0
        zs = z[small]
        acc = np.full_like(zs, c[-1])
        for coef in c[-2::-1]:
            acc = acc * zs + coef
        with np.errstate(divide="ignore"):
            out[small] = np.sign(acc) * np.exp(np.log(np.abs(acc)) + self.log_scale)
        zl = z[~small]
        if zl.size:
            inv = 1.0 / zl
            acc = np.full_like(zl, c[0])
            for coef in c[1:]:
                acc = acc * inv + coef  # sum_j c_j z^(j - n)
            with np.errstate(over="ignore", divide="ignore"):
                mag = np.exp(n * np.log(np.abs(zl)) + np.log(np.abs(acc)) + self.log_scale)
            sign = np.sign(acc) * np.where((zl < 0) & (n % 2 == 1), -1.0, 1.0)
            out[~small] = sign * mag
        return float(out[0]) if scalar else out


def double_factorial(n: int) -> int:
    """n!! for odd or even n >= -1 (with (-1)!! = 0!! = 1)."""
    out = 1
    for j in range(n, 0, -2):
        out *= j
    return out


def sign_matching_degree(b: float) -> int:
    """Smallest odd k with 2|b| <= sqrt(k) <= 4 max(|b|, 1)."""
    lo = math.ceil(4.0 * b * b)
    k = lo if lo % 2 == 1 else lo + 1
    assert math.sqrt(k) <= 4.0 * max(abs(b), 1.0), "no odd degree inside the window"
    return k


def sign_matching_poly(b: float) -> UnivariatePoly:
    """Zero-mean, unit-variance p with sign(p(z)) = sign(z - b), for |b| >= 4.

    p is proportional to z^{3k} - (q(b)/r(b)) (z^{2k} - (2k-1)!!) with
    q(z) = z^{3k}, r(z) = z^{2k} - (2k-1)!!; negative b is handled by the
    reflection p_b(z) = -p_{|b|}(-z).
    """
    b = float(b)
    if abs(b) < 4.0:
        raise ArgumentError(f"sign-matching polynomial needs |b| >= 4, got {b}")
    if b < 0:
        base = sign_matching_poly(-b)
        c = base.coeffs.copy()
        c[0::2] *= -1.0  # -p(-z): even powers flip sign, odd powers keep it
        return UnivariatePoly(c, base.log_scale)
    k = sign_matching_degree(b)
    # exact integer arithmetic: the Gaussian moments overflow float64
    df2k = double_factorial(2 * k - 1)
    bf = Fraction(b).limit_denominator(10**12) if not float(b).is_integer() else Fraction(int(b))
    qb = bf ** (3 * k)
    rb = bf ** (2 * k) - df2k
    a = qb / rb  # <= 0
    second = double_factorial(6 * k - 1) + a * a * (double_factorial(4 * k - 1) - df2k * df2k)
    log_scale = 0.5 * _log_fraction(second)
    coeffs = np.zeros(3 * k + 1)
    coeffs[3 * k] = 1.0
    coeffs[2 * k] = -_signed_exp(a, 0.0)
    coeffs[0] = _signed_exp(a * df2k, 0.0)
    return UnivariatePoly(coeffs, -log_scale)


def _log_fraction(f) -> float:
    f = Fraction(f)
    return math.log(f.numerator) - math.log(f.denominator)


def _signed_exp(f, shift: float) -> float:
    """sign(f) * exp(log|f| + shift) for an exact rational f."""
    if f == 0:
        return 0.0
    sign = 1.0 if f > 0 else -1.0
    return sign * math.exp(_log_fraction(abs(f)) + shift)
