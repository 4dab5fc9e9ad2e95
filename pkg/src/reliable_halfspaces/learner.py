"""Reliable (one-sided) learners for Gaussian halfspaces.

Outputs aim for false-positive rate R+ <= eps and false-negative rate
R- <= OPT + eps, where OPT ranges over halfspaces with no false positives
and the constant -1 function.

* ``random_walk_learn``: random walk on the weight vector, each step taken
  along a spectral direction found on the band {<w, x> >= t}.
* ``easycase_learn``: minimax program for thresholds t* <= 0.
* ``reliable_learn``: unknown-bias driver combining both with the
  constant-hypothesis shortcuts.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional

import numpy as np

from .chow import DirectionParams, find_direction
from .errors import ArgumentError, BandTooThinError
from .gaussian import complement_basis, gaussian_upper_quantile, norm_sf, random_unit_vector
from .instances import Halfspace, LabeledOracle, derive_seed

MIN_BAND_ACCEPTANCE = 1e-6
THRESHOLD_PASSES = ("both", "positive", "negative")


@dataclass
class LearnerConfig:
    """Knobs of the learners.

    ``zeta=None`` selects the step size from (eps, t) by the regime rule in
    ``regime_zeta``; ``inner_repeats=None`` means ceil(4 / zeta^2);
    ``lambda_floor=None`` means eps / 100; ``alpha_step=None`` means
    eps / 100.  ``thresholds`` picks which of t = +-Phi^{-1}(1 - alpha) the
    walk tries; ``reliable_learn`` overrides it to the positive side
    because the minimax learner already covers t <= 0.
    """

    epsilon: float = 0.1
    alpha: Optional[float] = None
    zeta: Optional[float] = 0.2
    zeta_exponent: float = 1.0
    zeta_exponent_large: float = 1.0
    restart_budget: int = 32
    inner_repeats: Optional[int] = None
    lambda_floor: Optional[float] = None
    batch: int = 20000
    delta: float = 0.1
    max_order: int = 4
    threshold: float = 0.05
    alpha_step: Optional[float] = None
    thresholds: str = "both"
    easy_exponent: float = 2.0
    easy_max_negatives: int = 100000
    easy_iterations: int = 10000
    max_walk_iterations: Optional[int] = None
    workers: int = 1
    trace: bool = False
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ArgumentError("epsilon must lie in (0, 1)")
        if self.alpha is not None and not 0.0 < self.alpha <= 0.5:
            raise ArgumentError("alpha must lie in (0, 1/2]")
        if self.zeta is not None and not 0.0 < self.zeta < 1.0:
            raise ArgumentError("zeta must lie in (0, 1)")
        if self.restart_budget < 0:
            raise ArgumentError("restart_budget must be >= 0")
        for name in ("batch", "max_order", "easy_iterations", "easy_max_negatives", "workers"):
            if getattr(self, name) < 1:
                raise ArgumentError(f"{name} must be >= 1")
        if self.inner_repeats is not None and self.inner_repeats < 1:
            raise ArgumentError("inner_repeats must be >= 1")
        if not 0.0 < self.delta < 1.0:
            raise ArgumentError("delta must lie in (0, 1)")
        if self.threshold <= 0:
            raise ArgumentError("threshold must be positive")
        if self.alpha_step is not None and self.alpha_step <= 0:
            raise ArgumentError("alpha_step must be positive")
        if self.lambda_floor is not None and self.lambda_floor <= 0:
            raise ArgumentError("lambda_floor must be positive")
        if self.thresholds not in THRESHOLD_PASSES:
            raise ArgumentError(f"thresholds must be one of {THRESHOLD_PASSES}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "LearnerConfig":
        """Build from a dictionary; ``"preset": "desk"`` starts from DESK_SETTINGS."""
        data = dict(data)
        preset = data.pop("preset", None)
        if preset == "desk":
            data = {**DESK_SETTINGS, **data}
        elif preset not in (None, "default"):
            raise ArgumentError(f"unknown learner preset {preset!r}")
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ArgumentError(f"unknown learner settings: {sorted(unknown)}")
        return cls(**data)


# Desk-scale settings: a larger step, a stricter singular-value threshold and
# second-order tensors keep each walk short enough for laptop runs.
DESK_SETTINGS = {
    "zeta": 0.5,
    "restart_budget": 2,
    "inner_repeats": 20,
    "lambda_floor": 0.1,
    "batch": 20000,
    "max_order": 2,
    "threshold": 0.4,
    "alpha_step": 0.03,
}


def desk_config(epsilon: float, **overrides) -> LearnerConfig:
    return LearnerConfig(epsilon=epsilon, **{**DESK_SETTINGS, **overrides})


def regime_zeta(epsilon: float, t: float, c_small: float = 1.0, c_large: float = 1.0) -> float:
    """Step size: log(1/eps)^(-c t^2) for moderate |t|, eps^c' beyond log log(1/eps)."""
    log_inv = math.log(1.0 / epsilon)
    if log_inv > 1.0 and t * t <= math.log(log_inv):
        return min(0.5, log_inv ** (-c_small * t * t))
    return min(0.5, epsilon**c_large)


# ---------------------------------------------------------------------------
# Hypotheses
# ---------------------------------------------------------------------------

KINDS = ("halfspace", "const_plus", "const_minus")


@dataclass(frozen=True)
class Hypothesis:
    kind: str
    halfspace: Optional[Halfspace] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ArgumentError(f"hypothesis kind must be one of {KINDS}")
        if (self.kind == "halfspace") != (self.halfspace is not None):
            raise ArgumentError("exactly the halfspace kind carries a halfspace")

    @classmethod
    def const_plus(cls) -> "Hypothesis":
        return cls("const_plus")

    @classmethod
    def const_minus(cls) -> "Hypothesis":
        return cls("const_minus")

    @classmethod
    def of(cls, w, t) -> "Hypothesis":
        return cls("halfspace", Halfspace(w, t))

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.kind == "const_plus":
            return np.ones(len(X), dtype=np.int8)
        if self.kind == "const_minus":
            return -np.ones(len(X), dtype=np.int8)
        return self.halfspace.predict(X)

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.halfspace is not None:
            out.update(self.halfspace.to_dict())
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Hypothesis":
        if data["kind"] == "halfspace":
            return cls.of(np.asarray(data["w"], dtype=float), float(data["t"]))
        return cls(data["kind"])


@dataclass(frozen=True)
class SandwichHypothesis:
    """Three-valued predictor from a positive- and a negative-reliable hypothesis."""

    h_plus: Hypothesis
    h_minus: Hypothesis

    def predict(self, X) -> np.ndarray:
        a = self.h_plus.predict(X)
        b = self.h_minus.predict(X)
        out = np.full(len(a), "?", dtype=object)
        out[(a == 1) & (b == 1)] = 1
        out[(a == -1) & (b == -1)] = -1
        return out


def sandwich_combine(h_plus: Hypothesis, h_minus: Hypothesis) -> SandwichHypothesis:
    return SandwichHypothesis(h_plus, h_minus)


class LabelNegatedOracle(LabeledOracle):
    """Same points with every label flipped; turns a negative-reliable task into a positive one."""

    def __init__(self, base: LabeledOracle):
        super().__init__(base.d, base.seed)
        self.base = base

    def _draw(self, n):
        X, y = self.base.sample(n)
        return X, (-y).astype(np.int8)

    def clone(self, stream: int) -> "LabelNegatedOracle":
        return LabelNegatedOracle(self.base.clone(stream))

    def spec(self) -> dict:
        return {"kind": "negated", "base": self.base.spec()}


def flip_hypothesis(h: Hypothesis) -> Hypothesis:
    """Hypothesis predicting -h(x), for undoing label negation.

    The complement of {<w,x> >= t} is {<-w,x> > -t}; the boundary has
    measure zero under the Gaussian.
    """
    if h.kind == "const_plus":
        return Hypothesis.const_minus()
    if h.kind == "const_minus":
        return Hypothesis.const_plus()
    return Hypothesis.of(-h.halfspace.w, -h.halfspace.t)


# ---------------------------------------------------------------------------
# Building blocks
# ---------------------------------------------------------------------------


def check_sample_size(eps_half: float, delta: float) -> int:
    return int(math.ceil(8.0 * math.log(2.0 / delta) / eps_half**2))


def check_false_positive(h: Hypothesis, oracle: LabeledOracle, eps_half: float, delta: float):
    """(passed, estimate) for the test 'empirical R+(h) <= eps_half'."""
    if not 0.0 < eps_half < 1.0:
        raise ArgumentError("eps_half must lie in (0, 1)")
    if not 0.0 < delta < 1.0:
        raise ArgumentError("delta must lie in (0, 1)")
    X, y = oracle.sample(check_sample_size(eps_half, delta))
    est = float(np.mean((h.predict(X) == 1) & (y == -1)))
    return est <= eps_half, est


def update_direction(w, v, lam: float) -> np.ndarray:
    """(w + lam v) / ||w + lam v|| for v orthogonal to w."""
    w = np.asarray(w, dtype=float)
    v = np.asarray(v, dtype=float)
    if lam < 0:
        raise ArgumentError("step size must be nonnegative")
    if abs(float(np.dot(w, v))) > 1e-8:
        raise ArgumentError("update direction must be orthogonal to w")
    out = w + lam * v
    return out / np.linalg.norm(out)


class BandOracle(LabeledOracle):
    """Points of the parent with <w, x> >= t, expressed in the complement of w."""

    def __init__(self, parent: LabeledOracle, w, t: float):
        w = np.asarray(w, dtype=float).ravel()
        if abs(np.linalg.norm(w) - 1.0) > 1e-9:
            raise ArgumentError("band direction must be a unit vector")
        if parent.d < 2:
            raise ArgumentError("band conditioning needs d >= 2")
        acceptance = norm_sf(t)
        if acceptance < MIN_BAND_ACCEPTANCE:
            raise BandTooThinError(acceptance, t)
        super().__init__(parent.d - 1, parent.seed)
        self.parent = parent
        self.w = w
        self.t = float(t)
        self.acceptance = acceptance
        self.basis = complement_basis(w)
        self.parent_draws = 0

    def _draw(self, n):
        xs, ys, got = [], [], 0
        while got < n:
            need = n - got
            m = int(math.ceil(need / self.acceptance * 1.1)) + 64
            X, y = self.parent.sample(m)
            self.parent_draws += m
            keep = X @ self.w - self.t >= 0.0
            xs.append(X[keep] @ self.basis)
            ys.append(y[keep])
            got += int(keep.sum())
        return np.concatenate(xs)[:n], np.concatenate(ys)[:n]

    def lift(self, v) -> np.ndarray:
        """A (d-1)-vector in band coordinates as a d-vector orthogonal to w."""
        return self.basis @ np.asarray(v, dtype=float)

    def clone(self, stream: int) -> "BandOracle":
        return BandOracle(self.parent.clone(stream), self.w, self.t)

    def spec(self) -> dict:
        return {"kind": "band", "w": self.w.tolist(), "t": self.t, "parent": self.parent.spec()}


def band_condition(oracle: LabeledOracle, w, t: float) -> BandOracle:
    """Condition on <w, x> - t >= 0 and drop the w coordinate."""
    return BandOracle(oracle, w, t)


# ---------------------------------------------------------------------------
# Random walk
# ---------------------------------------------------------------------------


@dataclass
class WalkState:
    w: np.ndarray
    t: float
    lam: float
    level: int = 0


@dataclass
class LearnResult:
    hypothesis: Hypothesis
    path: list = field(default_factory=list)
    budget_exhausted: bool = False
    restarts: int = 0
    iterations: int = 0
    trace: list = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "hypothesis": self.hypothesis.to_dict(),
            "path": list(self.path),
            "budget_exhausted": self.budget_exhausted,
            "restarts": self.restarts,
            "iterations": self.iterations,
        }

    def trace_jsonl(self) -> str:
        return "".join(json.dumps(rec, sort_keys=True) + "\n" for rec in self.trace)


class _IterationBudget:
    def __init__(self, limit: Optional[int]):
        self.limit = limit
        self.used = 0

    @property
    def exhausted(self) -> bool:
        return self.limit is not None and self.used >= self.limit


def _walk_once(oracle, state: WalkState, eps, cfg, params, inner, floor, rng, budget, trace, tag):
    """One restart: returns the passing halfspace or None."""
    truth = oracle.truth
    while state.lam > floor:
        for _ in range(inner):
            if budget.exhausted:
                return None
            h = Hypothesis.of(state.w, state.t)
            ok, est = check_false_positive(h, oracle, eps / 2.0, cfg.delta)
            rec = None
            if cfg.trace:
                rec = dict(tag, level=state.level, lam=state.lam, r_plus=est, passed=bool(ok))
                if truth is not None and truth.dim == len(state.w):
                    rec["correlation"] = float(np.dot(state.w, truth.w))
                trace.append(rec)
            if ok:
                return h
            budget.used += 1
            if rng.random() < 0.5:
                state.w = -state.w
            if oracle.d == 1:
                continue
            band = band_condition(oracle, state.w, state.t)
            found = find_direction(band.sample(cfg.batch), params, rng)
            v = band.lift(found.direction)
            v -= np.dot(v, state.w) * state.w
            v /= np.linalg.norm(v)
            state.w = update_direction(state.w, v, state.lam)
            if rec is not None:
                rec["mode"] = found.mode
                rec["subspace_rank"] = found.basis.rank
        state.lam /= 2.0
        state.level += 1
    return None


def random_walk_learn(oracle: LabeledOracle, eps: float, alpha: float, cfg: LearnerConfig, seed: int, _budget=None) -> LearnResult:
    """Random-walk reliable learner for a known bias alpha.

    Tries t = Phi^{-1}(1 - alpha) and its negation (per ``cfg.thresholds``);
    every restart walks until a halfspace passes the false-positive check
    or the step size falls below the floor.  Among thresholds with a
    passing halfspace the smallest t wins; with none, const_minus is
    returned and ``budget_exhausted`` is set.
    """
    if not 0.0 < eps < 1.0:
        raise ArgumentError("eps must lie in (0, 1)")
    if not 0.0 < alpha <= 0.5:
        raise ArgumentError("alpha must lie in (0, 1/2]")
    rng = np.random.default_rng(derive_seed(seed, 11))
    budget = _budget or _IterationBudget(cfg.max_walk_iterations)
    result = LearnResult(Hypothesis.const_minus())

    # too few negatives: +1 everywhere is already reliable
    _, neg_rate = check_false_positive(Hypothesis.const_plus(), oracle, eps / 2.0, cfg.delta)
    if neg_rate <= eps / 2.0:
        result.hypothesis = Hypothesis.const_plus()
        result.path.append("walk:few-negatives")
        return result

    t_pos = gaussian_upper_quantile(alpha)
    if cfg.thresholds == "both":
        taus = [t_pos, -t_pos] if t_pos > 0 else [0.0]
    elif cfg.thresholds == "positive":
        taus = [t_pos]
    else:
        taus = [-t_pos]
    floor = cfg.lambda_floor if cfg.lambda_floor is not None else eps / 100.0
    params = DirectionParams(max_order=cfg.max_order, threshold=cfg.threshold, workers=cfg.workers)

    passing = []
    for t in taus:
        zeta = cfg.zeta if cfg.zeta is not None else regime_zeta(eps, t, cfg.zeta_exponent, cfg.zeta_exponent_large)
        inner = cfg.inner_repeats if cfg.inner_repeats is not None else int(math.ceil(4.0 / zeta**2))
        for r in range(cfg.restart_budget):
            if budget.exhausted:
                break
            result.restarts += 1
            state = WalkState(random_unit_vector(oracle.d, rng), t, zeta)
            tag = {"alpha": alpha, "t": t, "restart": r}
            before = budget.used
            h = _walk_once(oracle, state, eps, cfg, params, inner, floor, rng, budget, result.trace, tag)
            result.iterations += budget.used - before
            if h is None:
                continue
            # re-check on fresh samples before accepting
            ok, _ = check_false_positive(h, oracle, eps / 2.0, cfg.delta)
            if ok:
                # all candidates for this t share it, so the first restart wins
                passing.append(h)
                break
    if passing:
        result.hypothesis = min(passing, key=lambda h: h.halfspace.t)
        result.path.append(f"walk:pass(alpha={alpha:.6g},t={result.hypothesis.halfspace.t:.6g})")
    else:
        result.budget_exhausted = True
        result.path.append(f"walk:exhausted(alpha={alpha:.6g})")
    return result


# ---------------------------------------------------------------------------
# Easy case: t* <= 0
# ---------------------------------------------------------------------------


def solve_minimax(points, iterations: int = 10000, epochs: int = 20):
    """min over ||w|| <= 1 of max_i <w, x_i>, by projected subgradient.

    The iteration budget is split into epochs; each epoch restarts from the
    best point so far with half the previous step, and both the epoch's
    best iterate and its running average are candidates.  Returns
    (w, value).
    """
    P = np.atleast_2d(np.asarray(points, dtype=float))
    if len(P) == 0:
        raise ArgumentError("minimax needs at least one point")
    d = P.shape[1]

    def objective(w):
        return float(np.max(P @ w))

    def project(w):
        n = np.linalg.norm(w)
        return w / n if n > 1.0 else w

    # start at minus the normalized centroid, a good guess when the hull misses 0
    c = P.mean(axis=0)
    w = -c / np.linalg.norm(c) if np.linalg.norm(c) > 0 else np.zeros(d)
    best_w, best_val = w.copy(), objective(w)
    scale = max(float(np.max(np.linalg.norm(P, axis=1))), 1e-12)
    step = 0.5 / scale
    per_epoch = max(1, iterations // epochs)
    for _ in range(epochs):
        w = best_w.copy()
        avg = np.zeros(d)
        for k in range(1, per_epoch + 1):
            vals = P @ w
            i = int(np.argmax(vals))
            if vals[i] < best_val:
                best_val, best_w = float(vals[i]), w.copy()
            w = project(w - step / math.sqrt(k) * P[i])
            avg += (w - avg) / k
        for cand in (w, project(avg)):
            val = objective(cand)
            if val < best_val:
                best_val, best_w = val, cand.copy()
        step /= 2.0
    return best_w, best_val


def _collect_negatives(oracle, count: int, neg_rate: float):
    out, got = [], 0
    rate = max(neg_rate, 1e-3)
    draws = 0
    while got < count:
        m = int(math.ceil((count - got) / rate * 1.1)) + 64
        X, y = oracle.sample(m)
        draws += m
        neg = X[y == -1]
        out.append(neg)
        got += len(neg)
        if got == 0 and draws > 100 * count / rate:
            break
    return np.concatenate(out)[:count] if out else np.zeros((0, oracle.d))


def easycase_learn(oracle: LabeledOracle, eps: float, cfg: Optional[LearnerConfig] = None, seed: int = 0) -> LearnResult:
    """Minimax learner for thresholds t* <= 0.

    Returns the halfspace {<w', x> >= t'} with w' the minimizer of the
    largest inner product with a negative sample; a degenerate solution
    (the origin in the hull of the negatives, so w' shrinks to 0) returns
    const_minus with the path marked ``easy:degenerate``.
    """
    cfg = cfg or LearnerConfig(epsilon=eps)
    result = LearnResult(Hypothesis.const_minus())
    ok, neg_rate = check_false_positive(Hypothesis.const_plus(), oracle, eps, cfg.delta)
    if ok:
        result.hypothesis = Hypothesis.const_plus()
        result.path.append("easy:few-negatives")
        return result
    m = min(cfg.easy_max_negatives, int(math.ceil((oracle.d / eps) ** cfg.easy_exponent)))
    negatives = _collect_negatives(oracle, m, neg_rate)
    if len(negatives) == 0:
        result.hypothesis = Hypothesis.const_plus()
        result.path.append("easy:few-negatives")
        return result
    w, val = solve_minimax(negatives, cfg.easy_iterations)
    norm = float(np.linalg.norm(w))
    if val >= -1e-9 or norm < 1e-3:
        result.path.append("easy:degenerate")
        return result
    result.hypothesis = Hypothesis.of(w / norm, val / norm)
    result.path.append("easy:halfspace")
    return result


# ---------------------------------------------------------------------------
# Unknown bias
# ---------------------------------------------------------------------------


def reliable_learn(oracle: LabeledOracle, eps: float, cfg: Optional[LearnerConfig] = None, seed: int = 0) -> LearnResult:
    """Reliable learner without knowledge of the bias.

    1. If eps >= 2 * (an upper bound on the bias), a constant hypothesis.
    2. The minimax learner, accepted when it passes the check at eps.
    3. Decreasing alpha from 1/2 - eps/100, the random walk at eps/2 on
       the positive threshold; the first non-exhausted output that passes
       the check at eps is returned.
    4. Otherwise the constant hypothesis rule of step 1.
    """
    cfg = cfg or LearnerConfig(epsilon=eps)
    if not 0.0 < eps < 1.0:
        raise ArgumentError("eps must lie in (0, 1)")
    out = LearnResult(Hypothesis.const_minus())
    budget = _IterationBudget(cfg.max_walk_iterations)

    def constant_rule(label):
        ok, _ = check_false_positive(Hypothesis.const_plus(), oracle, 0.75 * eps, cfg.delta)
        out.hypothesis = Hypothesis.const_plus() if ok else Hypothesis.const_minus()
        out.path.append(f"{label}:{out.hypothesis.kind}")
        return out

    # (1) alpha <= Pr[f = +1] <= Pr[y = +1] under the reliability condition
    if cfg.alpha is not None:
        alpha_hat = cfg.alpha
    else:
        X, y = oracle.sample(check_sample_size(eps / 2.0, cfg.delta))
        alpha_hat = float(np.mean(y == 1))
    if eps >= 2.0 * alpha_hat:
        return constant_rule("large-epsilon")

    # (2)
    easy = easycase_learn(oracle, eps / 2.0, cfg, derive_seed(seed, 2))
    out.path.extend(easy.path)
    if "easy:degenerate" not in easy.path:
        ok, _ = check_false_positive(easy.hypothesis, oracle, eps, cfg.delta)
        if ok:
            out.hypothesis = easy.hypothesis
            return out

    # (3)
    walk_cfg = replace(cfg, thresholds="positive")
    step = cfg.alpha_step if cfg.alpha_step is not None else eps / 100.0
    alpha = 0.5 - eps / 100.0
    j = 0
    while alpha > eps / 2.0:
        if budget.exhausted:
            out.budget_exhausted = True
            out.path.append("iteration-budget-exhausted")
            return out
        res = random_walk_learn(oracle, eps / 2.0, alpha, walk_cfg, derive_seed(seed, 3, j), _budget=budget)
        out.restarts += res.restarts
        out.iterations += res.iterations
        out.trace.extend(res.trace)
        out.path.extend(res.path)
        if not res.budget_exhausted:
            ok, _ = check_false_positive(res.hypothesis, oracle, eps, cfg.delta)
            if ok:
                out.hypothesis = res.hypothesis
                return out
        j += 1
        alpha = 0.5 - eps / 100.0 - j * step
    if cfg.restart_budget == 0 or budget.exhausted:
        out.budget_exhausted = True
        out.path.append("restart-budget-exhausted")
        out.hypothesis = Hypothesis.const_minus()
        return out
    # (4) every alpha above eps/2 failed; the remaining biases are covered by the constant rule
    return constant_rule("alpha-loop-done")
