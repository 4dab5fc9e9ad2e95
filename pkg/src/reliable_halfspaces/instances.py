"""Synthetic labeled distributions with known ground truth.

Every oracle draws x from N(0, I_d).  Halfspace oracles label by a truth
halfspace and then corrupt only negative labels (keeping the reliability
condition); the moment-matched oracle embeds a one-dimensional label
function g along a hidden direction so that labels are uncorrelated with
all low-degree polynomials.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ArgumentError, InfeasibleError, PartialSetError
from .gaussian import (
    QuadratureRule,
    complement_basis,
    gaussian_upper_quantile,
    hermite_univariate,
    norm_cdf,
    norm_sf,
    random_unit_vector,
    split_gaussian_rule,
)

POLICY_KINDS = ("none", "flip_all_negatives_region", "flip_prob", "threshold_band", "moment_matched")

# Tail thresholds beyond this are not resolved by the default rule; see
# solve_moment_matched_g.
DEFAULT_C_MAX = 4.0


def derive_seed(seed: int, *keys: int) -> int:
    """A 64-bit seed derived deterministically from ``seed`` and ``keys``."""
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1), *[int(k) for k in keys]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


# ---------------------------------------------------------------------------
# Halfspaces and policies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Halfspace:
    """f(x) = sign(<w, x> - t), with sign(0) = +1."""

    w: np.ndarray
    t: float

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float).ravel()
        if abs(np.linalg.norm(w) - 1.0) > 1e-10:
            raise ArgumentError(f"halfspace weight must be unit norm, got norm {np.linalg.norm(w)}")
        if not math.isfinite(self.t):
            raise ArgumentError("halfspace threshold must be finite")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "t", float(self.t))

    @classmethod
    def axis(cls, d: int, t: float, axis: int = 0) -> "Halfspace":
        w = np.zeros(d)
        w[axis] = 1.0
        return cls(w, t)

    @property
    def dim(self) -> int:
        return len(self.w)

    def margin(self, X) -> np.ndarray:
        return np.asarray(X) @ self.w - self.t

    def predict(self, X) -> np.ndarray:
        return np.where(self.margin(X) >= 0.0, 1, -1).astype(np.int8)

    @property
    def positive_mass(self) -> float:
        return norm_sf(self.t)

    @property
    def bias(self) -> float:
        p = self.positive_mass
        return min(p, 1.0 - p)

    def to_dict(self) -> dict:
        return {"w": self.w.tolist(), "t": self.t}

    @classmethod
    def from_dict(cls, data: dict) -> "Halfspace":
        return cls(np.asarray(data["w"], dtype=float), float(data["t"]))


@dataclass(frozen=True)
class CorruptionPolicy:
    """How negative labels of a truth halfspace are turned into +1.

    ``region`` is an interval [lo, hi) on the truth projection <w*, x>;
    ``None`` means the whole line.  ``threshold_band`` flips every negative
    whose projection lies within ``width`` below the truth threshold.
    """

    kind: str = "none"
    rho: float = 0.0
    width: float = 0.0
    region: Optional[tuple] = None
    g: Optional["DiscretizedFunction"] = None

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ArgumentError(f"unknown corruption policy {self.kind!r}")
        if self.kind == "flip_prob" and not (0.0 <= self.rho <= 1.0):
            raise ArgumentError("flip_prob needs rho in [0, 1]")
        if self.kind == "threshold_band" and self.width < 0:
            raise ArgumentError("threshold_band needs a nonnegative width")
        if self.region is not None:
            lo, hi = (float(v) for v in self.region)
            if not lo < hi:
                raise ArgumentError("region must satisfy lo < hi")
            object.__setattr__(self, "region", (lo, hi))
        if self.kind == "moment_matched" and self.g is None:
            raise ArgumentError("moment_matched policy carries its g")

    @classmethod
    def none(cls) -> "CorruptionPolicy":
        return cls("none")

    @classmethod
    def flip_prob(cls, rho: float) -> "CorruptionPolicy":
        return cls("flip_prob", rho=rho)

    @classmethod
    def flip_region(cls, lo: float = -math.inf, hi: float = math.inf) -> "CorruptionPolicy":
        region = None if (lo == -math.inf and hi == math.inf) else (lo, hi)
        return cls("flip_all_negatives_region", region=region)

    @classmethod
    def threshold_band(cls, width: float) -> "CorruptionPolicy":
        return cls("threshold_band", width=width)

    def flip_rate(self, z, t: float) -> np.ndarray:
        """Probability that a truth-negative point with projection z is relabeled +1."""
        z = np.asarray(z, dtype=float)
        if self.kind == "none":
            return np.zeros_like(z)
        if self.kind == "flip_prob":
            return np.full_like(z, self.rho)
        if self.kind == "flip_all_negatives_region":
            if self.region is None:
                return np.ones_like(z)
            lo, hi = self.region
            return ((z >= lo) & (z < hi)).astype(float)
        if self.kind == "threshold_band":
            return ((z >= t - self.width) & (z < t)).astype(float)
        raise ArgumentError("moment_matched policies define labels directly; use embed_hard_instance")

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "flip_prob":
            out["rho"] = self.rho
        if self.kind == "threshold_band":
            out["width"] = self.width
        if self.kind == "flip_all_negatives_region":
            out["region"] = "all" if self.region is None else list(self.region)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "CorruptionPolicy":
        kind = data.get("kind", "none")
        if kind == "flip_all_negatives_region":
            region = data.get("region", "all")
            if region == "all" or region is None:
                return cls.flip_region()
            return cls.flip_region(float(region[0]), float(region[1]))
        if kind == "flip_prob":
            return cls.flip_prob(float(data["rho"]))
        if kind == "threshold_band":
            return cls.threshold_band(float(data["width"]))
        if kind == "none":
            return cls.none()
        raise ArgumentError(f"policy {kind!r} cannot be built from a dictionary")


# ---------------------------------------------------------------------------
# Sampling and corruption
# ---------------------------------------------------------------------------


def sample_clean(truth: Halfspace, n: int, seed: int):
    """n i.i.d. points x ~ N(0, I) labeled by the truth halfspace."""
    if n < 1:
        raise ArgumentError("sample_clean needs n >= 1")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, truth.dim))
    return X, truth.predict(X)


def _apply_corruption(X, y, truth: Halfspace, policy: CorruptionPolicy, rng: np.random.Generator):
    z = X @ truth.w
    u = rng.random(len(y))
    eligible = (z - truth.t < 0.0) & (y == -1)
    flips = eligible & (u < policy.flip_rate(z, truth.t))
    out = y.copy()
    out[flips] = 1
    return out, int(flips.sum())


def corrupt(samples, truth: Halfspace, policy: CorruptionPolicy, seed: int):
    """Relabel some truth-negative points as +1 according to ``policy``."""
    if policy.kind == "moment_matched":
        raise ArgumentError("moment_matched labels come from embed_hard_instance, not corrupt")
    X, y = samples
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(np.int8)
    if policy.kind == "none":
        return X, y.copy()
    out, _ = _apply_corruption(X, y, truth, policy, np.random.default_rng(seed))
    return X, out


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------


class LabeledOracle:
    """Seeded source of (x, y) batches with x ~ N(0, I_d)."""

    truth: Optional[Halfspace] = None
    policy: Optional[CorruptionPolicy] = None

    def __init__(self, d: int, seed: int):
        if d < 1:
            raise ArgumentError("dimension must be positive")
        self.d = int(d)
        self.seed = int(seed)
        self.rng = np.random.default_rng(self.seed)
        self.n_drawn = 0

    def sample(self, n: int):
        X, y = self._draw(int(n))
        self.n_drawn += int(n)
        return X, y

    def _draw(self, n: int):
        raise NotImplementedError

    def clone(self, stream: int) -> "LabeledOracle":
        """Independent copy of the same distribution on a derived seed stream."""
        raise NotImplementedError

    def spec(self) -> dict:
        raise NotImplementedError


class HalfspaceOracle(LabeledOracle):
    """Truth-halfspace labels followed by negative-only corruption."""

    def __init__(self, truth: Halfspace, policy: Optional[CorruptionPolicy] = None, seed: int = 0):
        super().__init__(truth.dim, seed)
        policy = policy or CorruptionPolicy.none()
        if policy.kind == "moment_matched":
            raise ArgumentError("use embed_hard_instance for moment-matched instances")
        self.truth = truth
        self.policy = policy
        self.n_flipped = 0

    def _draw(self, n):
        X = self.rng.standard_normal((n, self.d))
        y = self.truth.predict(X)
        if self.policy.kind != "none":
            y, flipped = _apply_corruption(X, y, self.truth, self.policy, self.rng)
            self.n_flipped += flipped
        return X, y

    def clone(self, stream: int) -> "HalfspaceOracle":
        return HalfspaceOracle(self.truth, self.policy, derive_seed(self.seed, stream))

    def spec(self) -> dict:
        return {"kind": "halfspace", "d": self.d, "truth": self.truth.to_dict(), "policy": self.policy.to_dict()}


class IndependentLabelOracle(LabeledOracle):
    """y = +1 with probability ``p_plus`` independently of x."""

    def __init__(self, d: int, p_plus: float = 0.5, seed: int = 0):
        super().__init__(d, seed)
        if not 0.0 <= p_plus <= 1.0:
            raise ArgumentError("p_plus must be a probability")
        self.p_plus = float(p_plus)

    def _draw(self, n):
        X = self.rng.standard_normal((n, self.d))
        y = np.where(self.rng.random(n) < self.p_plus, 1, -1).astype(np.int8)
        return X, y

    def clone(self, stream: int) -> "IndependentLabelOracle":
        return IndependentLabelOracle(self.d, self.p_plus, derive_seed(self.seed, stream))

    def spec(self) -> dict:
        return {"kind": "independent", "d": self.d, "p_plus": self.p_plus}


# ---------------------------------------------------------------------------
# Moment-matched hard instances
# ---------------------------------------------------------------------------


@dataclass
class DiscretizedFunction:
    """Label-mean function g on quadrature nodes, pinned to 1 from c upward.

    Below c, g linearly interpolates the values at the nodes below c and is
    held constant beyond the outermost of them; on [c, inf) it equals 1.
    """

    rule: QuadratureRule
    values: np.ndarray
    tail_threshold: float
    order: Optional[int] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.rule.nodes.shape:
            raise ArgumentError("one value per quadrature node is required")

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        free = self.rule.nodes < self.tail_threshold
        if not free.any():
            return np.ones_like(z)
        nodes, vals = self.rule.nodes[free], self.values[free]
        out = np.interp(z, nodes, vals, left=vals[0], right=vals[-1])
        return np.where(z >= self.tail_threshold, 1.0, out)

    @property
    def pinned(self) -> np.ndarray:
        return self.rule.nodes >= self.tail_threshold

    def to_dict(self) -> dict:
        return {
            "nodes": self.rule.nodes.tolist(),
            "weights": self.rule.weights.tolist(),
            "values": self.values.tolist(),
            "c": self.tail_threshold,
            "order": self.order,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DiscretizedFunction":
        rule = QuadratureRule(np.asarray(data["nodes"], float), np.asarray(data["weights"], float))
        return cls(rule, np.asarray(data["values"], float), float(data["c"]), data.get("order"))


def tail_threshold(n: int) -> float:
    """c with Pr[z >= c] = 3^{-2n} / 4."""
    if n < 0:
        raise ArgumentError("moment order must be nonnegative")
    return gaussian_upper_quantile(3.0 ** (-2 * n) / 4.0)


def _moment_basis(rule: QuadratureRule, n: int) -> np.ndarray:
    # orthonormal under the rule up to degree 2n, same span as 1, z, ..., z^n
    return np.stack([hermite_univariate(k, rule.nodes) for k in range(n + 1)], axis=1)


def moment_residuals(values, rule: QuadratureRule, n: int) -> np.ndarray:
    """|sum_i w_i g_i z_i^k| for k = 0..n."""
    z = rule.nodes
    return np.array([abs(float(np.dot(rule.weights * values, z**k))) for k in range(n + 1)])


def solve_moment_matched_g(
    n: int,
    rule: Optional[QuadratureRule] = None,
    *,
    max_iter: int = 20000,
    tol: float = 1e-8,
    c_max: float = DEFAULT_C_MAX,
    c: Optional[float] = None,
) -> DiscretizedFunction:
    """Find g in [-1, 1] with g = 1 above c and E[g z^k] = 0 for k <= n.

    ``c`` defaults to ``tail_threshold(n)``; smaller values make the problem
    harder and eventually infeasible (tail mass above 1/2 already breaks
    E[g] = 0).

    Dykstra's alternating projections between the moment subspace and the
    pinned box, in the L2 inner product of the quadrature rule, starting at
    g = 0 (so the result is the minimum-norm feasible g).  A final
    active-set correction drives the moment residuals to round-off.

    The default rule is a composite Gauss-Legendre rule split at c, so the
    pinned nodes carry exactly the Gaussian tail mass above c.
    """
    if n < 0:
        raise ArgumentError("moment order must be nonnegative")
    c = tail_threshold(n) if c is None else float(c)
    if c > c_max:
        raise ArgumentError(f"tail threshold c={c:.4f} for n={n} is outside the supported node range (c <= {c_max})")
    rule = rule or split_gaussian_rule(c)
    if rule.nodes[0] > -10.0 or rule.nodes[-1] < 10.0:
        raise ArgumentError("quadrature rule must cover [-10, 10]")
    if 2 * n > 2 * rule.size - 1:
        raise ArgumentError("rule is not exact to degree 2n")
    w = rule.weights
    H = _moment_basis(rule, n)
    pinned = rule.nodes >= c
    if not pinned.any():
        raise ArgumentError("no quadrature node lies in the pinned tail")

    def project_affine(g):
        return g - H @ (H.T @ (w * g))

    def project_box(g):
        out = np.clip(g, -1.0, 1.0)
        out[pinned] = 1.0
        return out

    x = np.zeros(rule.size)
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    res = np.inf
    for it in range(max_iter):
        yv = project_affine(x + p)
        p = x + p - yv
        x_new = project_box(yv + q)
        q = yv + q - x_new
        x = x_new
        if it % 25 == 0 or it == max_iter - 1:
            res = moment_residuals(x, rule, n).max()
            if res <= 1e-3 * tol:
                break
    x = _polish(x, rule, H, pinned)
    residuals = moment_residuals(x, rule, n)
    box = max(0.0, float(np.max(np.abs(x))) - 1.0)
    if residuals.max() > tol or box > 1e-9:
        raise InfeasibleError(
            f"moment matching for n={n} did not converge",
            {"moments": residuals.tolist(), "box_violation": box, "iterations": it + 1},
        )
    return DiscretizedFunction(rule, x, c, order=n)


def _polish(x, rule, H, pinned, rounds: int = 5):
    # least weighted-norm correction on free coordinates that zeroes the moments
    w = rule.weights
    for _ in range(rounds):
        free = (~pinned) & (np.abs(x) < 1.0 - 1e-12) & (w > 1e-300)
        r = H.T @ (w * x)
        if np.max(np.abs(r)) < 1e-16 or not free.any():
            break
        Hf = H[free]
        G = Hf.T @ (w[free, None] * Hf)
        try:
            lam = np.linalg.solve(G, -r)
        except np.linalg.LinAlgError:
            break
        cand = x.copy()
        cand[free] += Hf @ lam
        if np.max(np.abs(cand[free])) > 1.0:
            cand = np.clip(cand, -1.0, 1.0)
            cand[pinned] = 1.0
        x = cand
    return x


@dataclass
class HardInstanceReport:
    order: int
    moment_residuals: list
    max_moment_residual: float
    box_violation: float
    tail_pin_violation: float
    chi2_plus: float
    chi2_minus: float
    label_mean: float
    notes: list = field(default_factory=list)

    def ok(self, tol: float = 1e-8) -> bool:
        return self.max_moment_residual <= tol and self.box_violation <= 1e-9 and self.tail_pin_violation <= 1e-12

    def to_dict(self) -> dict:
        out = dict(self.__dict__)
        out["ok"] = self.ok()
        return out


def verify_hard_instance(g: DiscretizedFunction, n: int) -> HardInstanceReport:
    """Numeric audit of a moment-matched g under its own quadrature rule."""
    rule = g.rule
    vals = g.values
    residuals = moment_residuals(vals, rule, n)
    box = max(0.0, float(np.max(np.abs(vals))) - 1.0)
    pinned = g.pinned
    pin_violation = float(np.max(np.abs(vals[pinned] - 1.0))) if pinned.any() else 0.0
    notes = []
    if not pinned.any():
        notes.append("no node at or above c")
    expected_c = tail_threshold(n)
    if abs(g.tail_threshold - expected_c) > 1e-9:
        notes.append(f"tail threshold {g.tail_threshold:.6g} differs from c(n)={expected_c:.6g}")
        pin_violation = max(pin_violation, float(np.max(np.abs(vals[rule.nodes >= expected_c] - 1.0))))
    w = rule.weights
    p_plus = float(np.dot(w, (1.0 + vals) / 2.0))
    p_minus = 1.0 - p_plus
    chi2_plus = float(np.dot(w, ((1.0 + vals) / 2.0 / p_plus) ** 2)) - 1.0 if p_plus > 0 else math.inf
    chi2_minus = float(np.dot(w, ((1.0 - vals) / 2.0 / p_minus) ** 2)) - 1.0 if p_minus > 0 else math.inf
    return HardInstanceReport(
        order=n,
        moment_residuals=residuals.tolist(),
        max_moment_residual=float(residuals.max()),
        box_violation=box,
        tail_pin_violation=pin_violation,
        chi2_plus=chi2_plus,
        chi2_minus=chi2_minus,
        label_mean=float(np.dot(w, vals)),
        notes=notes,
    )


class MomentMatchedOracle(LabeledOracle):
    """x = B_perp x_perp + z v with E[y | z] = g(z)."""

    def __init__(self, g: DiscretizedFunction, v, seed: int = 0):
        v = np.asarray(v, dtype=float).ravel()
        if abs(np.linalg.norm(v) - 1.0) > 1e-10:
            raise ArgumentError("hidden direction must be a unit vector")
        super().__init__(len(v), seed)
        self.g = g
        self.v = v
        self.basis = complement_basis(v)
        self.policy = CorruptionPolicy("moment_matched", g=g)
        self.truth = Halfspace(v, g.tail_threshold)

    def _draw(self, n):
        z = self.rng.standard_normal(n)
        xp = self.rng.standard_normal((n, self.d - 1))
        X = xp @ self.basis.T + z[:, None] * self.v[None, :]
        prob_plus = (1.0 + self.g(z)) / 2.0
        y = np.where(self.rng.random(n) < prob_plus, 1, -1).astype(np.int8)
        return X, y

    def clone(self, stream: int) -> "MomentMatchedOracle":
        return MomentMatchedOracle(self.g, self.v, derive_seed(self.seed, stream))

    def spec(self) -> dict:
        return {"kind": "moment_matched", "d": self.d, "order": self.g.order, "v": self.v.tolist()}


def embed_hard_instance(g: DiscretizedFunction, v, seed: int) -> MomentMatchedOracle:
    """Oracle embedding the one-dimensional label law g along hidden direction v."""
    return MomentMatchedOracle(g, v, seed)


def near_orthogonal_set(
    d: int,
    count: int,
    max_inner: float,
    seed: int,
    *,
    cap: int = 100000,
    tries_per_vector: int = 2000,
    restarts: int = 10,
) -> list:
    """Random unit vectors with pairwise |<u, v>| <= max_inner, by rejection."""
    if count < 1 or count > cap:
        raise ArgumentError(f"count must lie in [1, {cap}]")
    rng = np.random.default_rng(seed)
    best = 0
    for _ in range(restarts):
        chosen = [random_unit_vector(d, rng)]
        while len(chosen) < count:
            M = np.array(chosen)
            for _ in range(tries_per_vector):
                cand = random_unit_vector(d, rng)
                if np.max(np.abs(M @ cand)) <= max_inner:
                    chosen.append(cand)
                    break
            else:
                break
        if len(chosen) == count:
            return chosen
        best = max(best, len(chosen))
    raise PartialSetError(best, count)


# ---------------------------------------------------------------------------
# Instance specifications
# ---------------------------------------------------------------------------


def truth_from_spec(spec: dict, d: int) -> Halfspace:
    """Truth halfspace from {"w": [...]} or {"axis": i}, with "t" or "alpha".

    ``alpha`` places the truth on the minority-positive side:
    t = Phi^{-1}(1 - alpha).
    """
    if "w" in spec:
        w = np.asarray(spec["w"], dtype=float)
        w = w / np.linalg.norm(w)
    else:
        w = np.zeros(d)
        w[int(spec.get("axis", 0))] = 1.0
    if "t" in spec:
        t = float(spec["t"])
    elif "alpha" in spec:
        t = gaussian_upper_quantile(float(spec["alpha"]))
    else:
        t = 0.0
    return Halfspace(w, t)


def oracle_from_spec(spec: dict, seed: int) -> LabeledOracle:
    """Build an oracle from a JSON-style instance description."""
    kind = spec.get("kind", "halfspace")
    d = int(spec["d"])
    if kind == "halfspace":
        truth = truth_from_spec(spec.get("truth", {}), d)
        policy = CorruptionPolicy.from_dict(spec.get("policy", {"kind": "none"}))
        return HalfspaceOracle(truth, policy, seed)
    if kind == "independent":
        return IndependentLabelOracle(d, float(spec.get("p_plus", 0.5)), seed)
    if kind == "moment_matched":
        order = int(spec["order"])
        g = solve_moment_matched_g(order)
        if "v" in spec:
            v = np.asarray(spec["v"], dtype=float)
            v = v / np.linalg.norm(v)
        else:
            v = np.zeros(d)
            v[int(spec.get("axis", 0))] = 1.0
        return embed_hard_instance(g, v, seed)
    raise ArgumentError(f"unknown instance kind {kind!r}")


def negative_flip_mass(truth: Halfspace, policy: CorruptionPolicy) -> float:
    """Pr[f(x) = -1 and y = +1] for a halfspace oracle (one-dimensional integral)."""
    t = truth.t
    if policy.kind == "none":
        return 0.0
    if policy.kind == "flip_prob":
        return policy.rho * norm_cdf(t)
    if policy.kind == "threshold_band":
        return norm_cdf(t) - norm_cdf(t - policy.width)
    if policy.kind == "flip_all_negatives_region":
        lo, hi = policy.region if policy.region is not None else (-math.inf, math.inf)
        hi = min(hi, t)
        if hi <= lo:
            return 0.0
        return (norm_cdf(hi) if math.isfinite(hi) else 1.0) - (norm_cdf(lo) if math.isfinite(lo) else 0.0)
    raise ArgumentError(f"no flip mass for policy {policy.kind!r}")
