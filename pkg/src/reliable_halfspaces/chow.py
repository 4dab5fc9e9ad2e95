"""Chow-parameter tensors and spectral direction finding.

A Chow tensor of order m is the sample mean of 1(y = -1) H_m(x)
("negatives" mode) or y H_m(x) ("labels" mode).  The direction finder
flattens each order, keeps left singular vectors above a threshold and
returns a random unit vector in the span of everything it kept.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ArgumentError
from .gaussian import DEFAULT_TENSOR_CAP, SymmetricTensor, random_unit_in_span, random_unit_vector, weighted_hermite_tensor

MODES = ("negatives", "labels")
DROP_TOL = 1e-8


@dataclass
class ChowTensor:
    order: int
    mode: str
    tensor: SymmetricTensor
    sample_count: int

    def __post_init__(self):
        if self.order < 1:
            raise ArgumentError("Chow tensors have order >= 1")
        if self.mode not in MODES:
            raise ArgumentError(f"mode must be one of {MODES}")
        if not np.all(np.isfinite(self.tensor.entries)):
            raise ArgumentError("Chow tensor entries must be finite")

    @property
    def dim(self) -> int:
        return self.tensor.dim

    def to_json(self) -> str:
        return json.dumps(
            {"order": self.order, "dim": self.dim, "mode": self.mode, "entries": self.tensor.entries.ravel().tolist()}
        )

    @classmethod
    def from_json(cls, text: str, sample_count: int = 0) -> "ChowTensor":
        data = json.loads(text)
        m, d = int(data["order"]), int(data["dim"])
        entries = np.asarray(data["entries"], dtype=float).reshape((d,) * m)
        return cls(m, data["mode"], SymmetricTensor(m, d, entries), sample_count)


def _label_weights(y: np.ndarray, mode: str) -> np.ndarray:
    if mode == "negatives":
        return (y == -1).astype(float)
    if mode == "labels":
        return y.astype(float)
    raise ArgumentError(f"mode must be one of {MODES}, got {mode!r}")


def estimate_chow(samples, m: int, mode: str, *, workers: int = 1, cap: int = DEFAULT_TENSOR_CAP) -> ChowTensor:
    """Empirical order-m Chow tensor.

    With ``workers > 1`` the rows are split into contiguous blocks whose
    partial sums are reduced in block order, so the result depends only on
    the worker count.
    """
    X, y = samples
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y).ravel()
    n, d = X.shape
    if n == 0:
        raise ArgumentError("estimate_chow needs at least one sample")
    if m < 1:
        raise ArgumentError("Chow order must be >= 1")
    if workers < 1:
        raise ArgumentError("workers must be >= 1")
    weights = _label_weights(y, mode)
    keep = weights != 0.0
    X, weights = X[keep], weights[keep]

    blocks = np.array_split(np.arange(len(weights)), workers)

    def partial(idx):
        return weighted_hermite_tensor(X[idx], weights[idx], m, cap=cap).entries

    if workers == 1:
        parts = [partial(blocks[0])]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(partial, blocks))
    total = np.zeros((d,) * m)
    for part in parts:
        total = total + part
    return ChowTensor(m, mode, SymmetricTensor(m, d, total / n), n)


def flatten(chow: ChowTensor) -> np.ndarray:
    """d x d^(m-1) view: first index on rows, the rest column-major."""
    d, m = chow.dim, chow.order
    return np.reshape(chow.tensor.entries, (d, d ** (m - 1)), order="F")


@dataclass
class SubspaceBasis:
    columns: np.ndarray  # d x r, orthonormal
    source_orders: list = field(default_factory=list)
    singular_values: list = field(default_factory=list)

    @property
    def rank(self) -> int:
        return self.columns.shape[1]

    @property
    def empty(self) -> bool:
        return self.rank == 0


def _left_singular(M: np.ndarray, order: int):
    if order >= 3:
        # only left vectors are needed, so decompose the d x d Gram matrix
        evals, evecs = np.linalg.eigh(M @ M.T)
        evals = np.clip(evals, 0.0, None)
        idx = np.argsort(evals)[::-1]
        return evecs[:, idx], np.sqrt(evals[idx])
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    return U, s


def extract_subspace(chows: Sequence[ChowTensor], threshold: float) -> SubspaceBasis:
    """Orthonormal union of left singular vectors with singular value > threshold."""
    if threshold <= 0:
        raise ArgumentError("singular-value threshold must be positive")
    if not chows:
        raise ArgumentError("extract_subspace needs at least one tensor")
    d = chows[0].dim
    if any(c.dim != d for c in chows):
        raise ArgumentError("all tensors must share one dimension")
    cols, orders, svals = [], [], []
    for chow in sorted(chows, key=lambda c: c.order):
        U, s = _left_singular(flatten(chow), chow.order)
        for j in np.flatnonzero(s > threshold):
            vec = U[:, j].copy()
            for q in cols:
                vec -= np.dot(q, vec) * q
            for q in cols:  # second pass for numerical orthogonality
                vec -= np.dot(q, vec) * q
            norm = np.linalg.norm(vec)
            if norm < DROP_TOL:
                continue
            cols.append(vec / norm)
            orders.append(chow.order)
            svals.append(float(s[j]))
    columns = np.array(cols).T if cols else np.zeros((d, 0))
    return SubspaceBasis(columns, orders, svals)


@dataclass
class DirectionParams:
    """Settings for one direction-finding call.

    ``gamma`` is filled in from the batch when left as None; the singular
    threshold actually used is ``threshold * gamma``.
    """

    max_order: int = 4
    threshold: float = 0.05
    gamma: Optional[float] = None
    coin: float = 0.5
    workers: int = 1
    cap: int = DEFAULT_TENSOR_CAP

    def __post_init__(self):
        if self.max_order < 1:
            raise ArgumentError("max_order must be >= 1")
        if self.threshold <= 0:
            raise ArgumentError("threshold must be positive")
        if self.gamma is not None and not 0.0 <= self.gamma <= 1.0:
            raise ArgumentError("gamma must lie in [0, 1]")
        if not 0.0 <= self.coin <= 1.0:
            raise ArgumentError("coin must be a probability")


@dataclass
class DirectionResult:
    direction: np.ndarray
    mode: str
    gamma: float
    basis: SubspaceBasis

    @property
    def fallback(self) -> bool:
        return self.basis.empty


def find_direction(samples, params: DirectionParams, rng: np.random.Generator) -> DirectionResult:
    """Direction finding with its intermediate results."""
    X, y = samples
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y).ravel()
    if len(y) == 0:
        raise ArgumentError("direction finding needs samples")
    d = X.shape[1]
    mode = "negatives" if rng.random() < params.coin else "labels"
    gamma = float(np.mean(y == -1)) if params.gamma is None else params.gamma
    level = params.threshold * gamma
    if level <= 0.0:
        basis = SubspaceBasis(np.zeros((d, 0)))
    else:
        chows = [estimate_chow((X, y), m, mode, workers=params.workers, cap=params.cap) for m in range(1, params.max_order + 1)]
        basis = extract_subspace(chows, level)
    v = random_unit_vector(d, rng) if basis.empty else random_unit_in_span(basis.columns, rng)
    return DirectionResult(v, mode, gamma, basis)


def candidate_direction(samples, params: DirectionParams, seed) -> np.ndarray:
    """Random unit vector in the spectral subspace of the batch's Chow tensors.

    ``seed`` is an int or a numpy Generator.  A uniformly random direction
    is returned when no singular value clears the threshold.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return find_direction(samples, params, rng).direction
