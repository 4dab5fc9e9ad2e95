"""Command-line front end.

    reliable-halfspaces COMMAND [--config PATH] [--set key=value ...]
                        [--seed N] [--out PATH] [--jobs N] [--format jsonl|bin]

Commands: generate, learn, eval, sweep, hard-instance, verify.  Machine
readable JSON goes to stdout, human messages to stderr.

Exit codes: 0 success, 2 bad arguments or spec, 3 I/O failure,
4 budget exhausted (hypothesis still written), 5 infeasible hard instance.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .errors import ArgumentError, InfeasibleError, ReliableError
from .evaluation import SweepSpec, estimate_errors, format_rows_csv, format_rows_jsonl, run_sweep
from .gaussian import gauss_hermite_rule
from .instances import (
    DEFAULT_C_MAX,
    DiscretizedFunction,
    derive_seed,
    embed_hard_instance,
    oracle_from_spec,
    solve_moment_matched_g,
    verify_hard_instance,
)
from .learner import Hypothesis, LearnerConfig, reliable_learn
from .sampleio import SampleFileOracle, read_samples, write_samples

EXIT_OK = 0
EXIT_ARGS = 2
EXIT_IO = 3
EXIT_BUDGET = 4
EXIT_INFEASIBLE = 5

COMMANDS = ("generate", "learn", "eval", "sweep", "hard-instance", "verify")
STOCHASTIC = {"generate", "learn", "eval", "sweep"}


class CliIOError(Exception):
    pass


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(config: dict, assignment: str) -> None:
    """Set a dotted key, e.g. ``learner.zeta=0.3``; values parse as JSON when possible."""
    if "=" not in assignment:
        raise ArgumentError(f"override {assignment!r} is not key=value")
    key, value = assignment.split("=", 1)
    parts = [p for p in key.strip().split(".") if p]
    if not parts:
        raise ArgumentError(f"override {assignment!r} has an empty key")
    node = config
    for part in parts[:-1]:
        child = node.get(part)
        if child is None:
            child = node[part] = {}
        if not isinstance(child, dict):
            raise ArgumentError(f"override {assignment!r}: {part!r} is not a mapping")
        node = child
    node[parts[-1]] = _parse_value(value)


def load_config(path, overrides) -> dict:
    config = {}
    if path:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise CliIOError(f"cannot read config {path}: {exc}") from exc
        try:
            config = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ArgumentError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(config, dict):
            raise ArgumentError("config must be a JSON object")
    for item in overrides or []:
        apply_override(config, item)
    return config


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, sort_keys=True) + "\n")
    sys.stdout.flush()


def _write_text(path, text: str) -> None:
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise CliIOError(f"cannot write {path}: {exc}") from exc


def _require(config: dict, key: str):
    if key not in config:
        raise ArgumentError(f"config is missing {key!r}")
    return config[key]


def _oracle(config: dict, seed: int, fmt=None):
    if "samples" in config:
        try:
            X, y = read_samples(config["samples"], fmt if fmt == "bin" else None)
        except OSError as exc:
            raise CliIOError(f"cannot read samples: {exc}") from exc
        return SampleFileOracle(X, y, derive_seed(seed, 1), str(config["samples"]))
    instance = _require(config, "instance")
    if not isinstance(instance, dict):
        raise ArgumentError("instance must be a JSON object")
    return oracle_from_spec(instance, derive_seed(seed, 1))


def cmd_generate(config: dict, args) -> int:
    n = int(_require(config, "n"))
    if n < 1:
        raise ArgumentError("n must be >= 1")
    if not args.out:
        raise ArgumentError("generate needs --out")
    oracle = _oracle(config, args.seed)
    X, y = oracle.sample(n)
    try:
        write_samples(args.out, X, y, args.format)
    except OSError as exc:
        raise CliIOError(f"cannot write {args.out}: {exc}") from exc
    _emit({"n": n, "d": oracle.d, "negative_rate": float(np.mean(y == -1)), "out": str(args.out)})
    return EXIT_OK


def _learner_config(config: dict, seed: int) -> tuple:
    eps = float(_require(config, "epsilon"))
    settings = dict(config.get("learner", {}))
    settings.setdefault("epsilon", eps)
    settings["seed"] = seed
    return eps, LearnerConfig.from_dict(settings)


def cmd_learn(config: dict, args) -> int:
    eps, cfg = _learner_config(config, args.seed)
    if args.out:
        cfg.trace = True
    if args.jobs > 1:
        cfg.workers = args.jobs
    oracle = _oracle(config, args.seed, args.format)
    result = reliable_learn(oracle, eps, cfg, args.seed)
    summary = result.summary()
    if args.out:
        _write_text(args.out, json.dumps(result.hypothesis.to_dict(), sort_keys=True) + "\n")
        _write_text(str(args.out) + ".trace.jsonl", result.trace_jsonl())
    _emit(summary)
    if result.budget_exhausted:
        print("budget exhausted; returning the constant -1 hypothesis", file=sys.stderr)
        return EXIT_BUDGET
    return EXIT_OK


def cmd_eval(config: dict, args) -> int:
    hyp = _require(config, "hypothesis")
    if isinstance(hyp, str):
        try:
            hyp = json.loads(Path(hyp).read_text(encoding="utf-8"))
        except OSError as exc:
            raise CliIOError(f"cannot read hypothesis: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ArgumentError(f"hypothesis file is not JSON: {exc}") from exc
    try:
        h = Hypothesis.from_dict(hyp)
    except (KeyError, TypeError) as exc:
        raise ArgumentError(f"malformed hypothesis: {exc}") from exc
    oracle = _oracle(config, args.seed, args.format)
    eps = config.get("epsilon")
    report = estimate_errors(h, oracle, int(config.get("n", 1000000)), epsilon=None if eps is None else float(eps))
    out = report.to_dict()
    if args.out:
        _write_text(args.out, json.dumps(out, sort_keys=True) + "\n")
    _emit(out)
    return EXIT_OK


def cmd_sweep(config: dict, args) -> int:
    config = dict(config)
    config.setdefault("seeds", [args.seed])
    spec = SweepSpec.from_dict(config)
    rows = run_sweep(spec, jobs=args.jobs)
    if args.out:
        text = format_rows_csv(rows) if str(args.out).endswith(".csv") else format_rows_jsonl(rows)
        _write_text(args.out, text)
    _emit({"cells": len(rows), "passed": sum(1 for r in rows if r.get("pass")), "out": args.out})
    return EXIT_OK


def cmd_hard_instance(config: dict, args) -> int:
    order = int(_require(config, "order"))
    # default: Gauss-Legendre panels split at the tail threshold
    rule = gauss_hermite_rule(int(config["nodes"])) if "nodes" in config else None
    try:
        g = solve_moment_matched_g(
            order,
            rule,
            c_max=float(config.get("c_max", DEFAULT_C_MAX)),
            c=None if config.get("c") is None else float(config["c"]),
        )
    except InfeasibleError as exc:
        _emit({"error": str(exc), "residuals": exc.residuals})
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    report = verify_hard_instance(g, order)
    out = {
        "order": order,
        "nodes": g.rule.nodes.tolist(),
        "weights": g.rule.weights.tolist(),
        "values": g.values.tolist(),
        "c": g.tail_threshold,
        "residuals": report.moment_residuals,
        "max_residual": report.max_moment_residual,
        "chi2_plus": report.chi2_plus,
        "chi2_minus": report.chi2_minus,
    }
    if args.out:
        _write_text(args.out, json.dumps(out, sort_keys=True) + "\n")
        _emit({k: out[k] for k in ("order", "c", "max_residual", "chi2_plus", "chi2_minus")})
    else:
        _emit(out)
    return EXIT_OK


def cmd_verify(config: dict, args) -> int:
    """Re-audit a hard-instance file; with --seed also sample the embedded oracle."""
    path = _require(config, "g")
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise CliIOError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ArgumentError(f"{path} is not JSON: {exc}") from exc
    try:
        g = DiscretizedFunction.from_dict(data)
    except (KeyError, TypeError) as exc:
        raise ArgumentError(f"{path} is not a hard-instance file: {exc}") from exc
    order = int(config.get("order", data.get("order", 0)))
    report = verify_hard_instance(g, order).to_dict()
    if args.seed is not None:
        d = int(config.get("d", 5))
        v = np.zeros(d)
        v[0] = 1.0
        oracle = embed_hard_instance(g, v, derive_seed(args.seed, 1))
        X, y = oracle.sample(int(config.get("n", 100000)))
        tail = X[:, 0] >= g.tail_threshold
        report["tail_violations"] = int(np.count_nonzero(y[tail] == -1))
        report["label_mean"] = float(np.mean(y))
    _emit(report)
    return EXIT_OK if report["ok"] else EXIT_INFEASIBLE


HANDLERS = {
    "generate": cmd_generate,
    "learn": cmd_learn,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "hard-instance": cmd_hard_instance,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reliable-halfspaces", description="Reliable learning of Gaussian halfspaces.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="JSON configuration file")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default=None)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--format", choices=("jsonl", "bin"), default="jsonl")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_ARGS if exc.code else EXIT_OK
    try:
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ArgumentError("--seed must be an unsigned 64-bit integer")
        if args.command in STOCHASTIC and args.seed is None:
            raise ArgumentError(f"{args.command} needs --seed")
        if args.jobs < 1:
            raise ArgumentError("--jobs must be >= 1")
        config = load_config(args.config, args.overrides)
        return HANDLERS[args.command](config, args)
    except CliIOError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ArgumentError, ValueError, TypeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ReliableError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARGS


if __name__ == "__main__":
    sys.exit(main())
