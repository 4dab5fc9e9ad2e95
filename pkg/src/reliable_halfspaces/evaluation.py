"""Ground-truth-aware evaluation and seeded sweeps."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field
from itertools import product
from typing import Optional

import numpy as np

from .errors import ArgumentError, ReliableError, UnsupportedError
from .gaussian import gaussian_upper_quantile, norm_cdf
from .instances import (
    CorruptionPolicy,
    Halfspace,
    HalfspaceOracle,
    IndependentLabelOracle,
    LabeledOracle,
    MomentMatchedOracle,
    derive_seed,
    oracle_from_spec,
)
from .learner import Hypothesis, LearnerConfig, reliable_learn

CONFIDENCE = 0.99
EVAL_CHUNK = 200000


def hoeffding_halfwidth(n: int, confidence: float = CONFIDENCE) -> float:
    return math.sqrt(math.log(2.0 / (1.0 - confidence)) / (2.0 * n))


@dataclass
class ErrorReport:
    r_plus: float
    r_minus: float
    half_width: float
    n_eval: int
    opt: Optional[float] = None
    epsilon: Optional[float] = None

    @property
    def passed(self) -> Optional[bool]:
        """r_plus <= eps + hw and r_minus <= OPT + eps + hw; None without eps or OPT."""
        if self.epsilon is None or self.opt is None:
            return None
        hw = self.half_width
        return self.r_plus <= self.epsilon + hw and self.r_minus <= self.opt + self.epsilon + hw

    @property
    def plus_ok(self) -> Optional[bool]:
        if self.epsilon is None:
            return None
        return self.r_plus <= self.epsilon + self.half_width

    @property
    def minus_ok(self) -> Optional[bool]:
        if self.epsilon is None or self.opt is None:
            return None
        return self.r_minus <= self.opt + self.epsilon + self.half_width

    def to_dict(self) -> dict:
        return {
            "r_plus": self.r_plus,
            "r_minus": self.r_minus,
            "half_width": self.half_width,
            "n_eval": self.n_eval,
            "opt": self.opt,
            "epsilon": self.epsilon,
            "passed": self.passed,
        }


def estimate_errors(h: Hypothesis, oracle: LabeledOracle, n: int, *, epsilon: Optional[float] = None, opt="auto") -> ErrorReport:
    """Monte Carlo R+ and R- of h with 99% Hoeffding half-widths.

    ``opt="auto"`` fills OPT from ``estimate_opt`` when the oracle supports
    it and leaves it absent otherwise.
    """
    if n < 100:
        raise ArgumentError("estimate_errors needs n >= 100")
    fp = fn = 0
    left = n
    while left > 0:
        m = min(EVAL_CHUNK, left)
        X, y = oracle.sample(m)
        pred = h.predict(X)
        fp += int(np.count_nonzero((pred == 1) & (y == -1)))
        fn += int(np.count_nonzero((pred == -1) & (y == 1)))
        left -= m
    if opt == "auto":
        try:
            opt = estimate_opt(oracle)
        except UnsupportedError:
            opt = None
    return ErrorReport(fp / n, fn / n, hoeffding_halfwidth(n), n, opt, epsilon)


# ---------------------------------------------------------------------------
# OPT
# ---------------------------------------------------------------------------


def _mass(lo: float, hi: float) -> float:
    if hi <= lo:
        return 0.0
    return norm_cdf(hi) - norm_cdf(lo)


def lowest_feasible_threshold(truth: Halfspace, policy: CorruptionPolicy) -> float:
    """Smallest s such that no label -1 remains on {<w*, x> >= s}."""
    t = truth.t
    kind = policy.kind
    if kind == "none":
        return t
    if kind == "flip_prob":
        return -math.inf if policy.rho >= 1.0 else t
    if kind == "threshold_band":
        return t - policy.width
    if kind == "flip_all_negatives_region":
        lo, hi = policy.region if policy.region is not None else (-math.inf, math.inf)
        if lo < t <= hi:
            return lo
        return t
    raise UnsupportedError(f"no OPT accounting for policy {kind!r}")


def flipped_mass_below(truth: Halfspace, policy: CorruptionPolicy, s: float) -> float:
    """Pr[<w*, x> < s and y = +1 and f(x) = -1]."""
    top = min(s, truth.t)
    kind = policy.kind
    if kind == "none" or top == -math.inf:
        return 0.0
    if kind == "flip_prob":
        return policy.rho * norm_cdf(top)
    if kind == "threshold_band":
        return _mass(truth.t - policy.width, top)
    if kind == "flip_all_negatives_region":
        lo, hi = policy.region if policy.region is not None else (-math.inf, math.inf)
        return _mass(lo, min(hi, top))
    raise UnsupportedError(f"no OPT accounting for policy {kind!r}")


def moment_matched_opt(oracle: MomentMatchedOracle, grid_points: int = 40001) -> float:
    """Pr[<v, x> < c and y = +1], by Simpson's rule on [-12, c].

    This is the false-negative rate of the best halfspace along the hidden
    direction and an upper bound on OPT.
    """
    c = oracle.g.tail_threshold
    z = np.linspace(-12.0, c, grid_points)
    f = (1.0 + oracle.g(z)) / 2.0 * np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    h = z[1] - z[0]
    return float(h / 3.0 * (f[0] + f[-1] + 4.0 * f[1:-1:2].sum() + 2.0 * f[2:-1:2].sum()))


def estimate_opt(oracle: LabeledOracle) -> float:
    """OPT from the oracle's ground truth (a one-dimensional computation)."""
    if isinstance(oracle, HalfspaceOracle):
        s = lowest_feasible_threshold(oracle.truth, oracle.policy)
        return flipped_mass_below(oracle.truth, oracle.policy, s)
    if isinstance(oracle, MomentMatchedOracle):
        return moment_matched_opt(oracle)
    if isinstance(oracle, IndependentLabelOracle):
        return 0.0 if oracle.p_plus >= 1.0 else oracle.p_plus
    raise UnsupportedError(f"no OPT accounting for {type(oracle).__name__}")


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

ROW_KEYS = (
    "cell",
    "seed",
    "d",
    "epsilon",
    "alpha",
    "policy",
    "kind",
    "t",
    "r_plus",
    "r_minus",
    "half_width",
    "opt",
    "pass",
    "path",
    "restarts",
    "iterations",
    "error",
    "seconds",
)


@dataclass
class SweepSpec:
    """Grid over dimension, epsilon, bias, policy and seed.

    ``policies`` holds policy dictionaries (see CorruptionPolicy.from_dict);
    the truth halfspace is the first axis with t = Phi^{-1}(1 - alpha).
    ``learner`` holds LearnerConfig overrides applied to every cell.
    """

    dims: list = field(default_factory=lambda: [5])
    epsilons: list = field(default_factory=lambda: [0.1])
    alphas: list = field(default_factory=lambda: [0.3])
    policies: list = field(default_factory=lambda: [{"kind": "none"}])
    seeds: list = field(default_factory=lambda: [0])
    learner: dict = field(default_factory=dict)
    n_eval: int = 1000000

    def __post_init__(self):
        for name in ("dims", "epsilons", "alphas", "policies", "seeds"):
            if not getattr(self, name):
                raise ArgumentError(f"sweep grid axis {name!r} is empty")
        if self.n_eval < 100:
            raise ArgumentError("n_eval must be >= 100")

    def cells(self):
        return list(product(self.dims, self.epsilons, self.alphas, self.policies, self.seeds))

    @classmethod
    def from_dict(cls, data: dict) -> "SweepSpec":
        allowed = {"dims", "epsilons", "alphas", "policies", "seeds", "learner", "n_eval"}
        unknown = set(data) - allowed
        if unknown:
            raise ArgumentError(f"unknown sweep fields: {sorted(unknown)}")
        return cls(**data)


def run_cell(index: int, d, eps, alpha, policy, seed, spec: SweepSpec) -> dict:
    start = time.perf_counter()
    row = dict.fromkeys(ROW_KEYS)
    row.update(cell=index, seed=seed, d=d, epsilon=eps, alpha=alpha, policy=json.dumps(policy, sort_keys=True))
    try:
        instance = {"kind": "halfspace", "d": d, "truth": {"axis": 0, "t": gaussian_upper_quantile(alpha)}, "policy": policy}
        oracle = oracle_from_spec(instance, derive_seed(seed, 101))
        cfg = LearnerConfig.from_dict({**spec.learner, "epsilon": eps, "seed": seed})
        res = reliable_learn(oracle, eps, cfg, seed)
        rep = estimate_errors(res.hypothesis, oracle.clone(7), spec.n_eval, epsilon=eps)
        h = res.hypothesis
        row.update(
            kind=h.kind,
            t=h.halfspace.t if h.halfspace is not None else None,
            r_plus=rep.r_plus,
            r_minus=rep.r_minus,
            half_width=rep.half_width,
            opt=rep.opt,
            path="|".join(res.path),
            restarts=res.restarts,
            iterations=res.iterations,
        )
        row["pass"] = rep.passed
    except ReliableError as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
        row["pass"] = False
    row["seconds"] = time.perf_counter() - start
    return row


def run_sweep(spec: SweepSpec, jobs: int = 1) -> list:
    """One row per cell, in cell order; failures are recorded in the row."""
    cells = spec.cells()
    if jobs <= 1:
        return [run_cell(i, *cell, spec) for i, cell in enumerate(cells)]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(run_cell, i, *cell, spec) for i, cell in enumerate(cells)]
        return [f.result() for f in futures]


def _fmt(value):
    if isinstance(value, float):
        return float(f"{value:.9g}")
    return value


def format_rows_jsonl(rows) -> str:
    return "".join(json.dumps({k: _fmt(r.get(k)) for k in ROW_KEYS}) + "\n" for r in rows)


def format_rows_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ROW_KEYS)
    for r in rows:
        writer.writerow(["" if r.get(k) is None else (f"{r[k]:.9g}" if isinstance(r[k], float) else r[k]) for k in ROW_KEYS])
    return buf.getvalue()
