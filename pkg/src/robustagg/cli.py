"""Command-line front end: ``aggregate``, ``kappa`` and ``train``.

Exit codes: 0 success, 1 error, 2 a checked bound or certificate failed.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import jsonschema
import numpy as np

from .attacks import ATTACK_NAMES, AttackSpec
from .core import RngStream
from .preagg import parse_pipeline
from .robustness import (
    estimate_kappa,
    gar_ratio,
    lower_bound_instance,
    pipeline_kappa,
    universal_kappa_floor,
)
from .tasks import QuadraticTask
from .training import (
    ALGORITHMS,
    PipelineSpec,
    RunConfig,
    TaskSpec,
    dgd_bound,
    dshb_bound,
    run,
    trace_to_csv,
)

EXIT_OK, EXIT_ERROR, EXIT_BOUND = 0, 1, 2
KAPPA_TOL = 1e-6
FLOOR_TOL = 1e-9

_task_schema = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "kind": {"enum": ["quadratic", "logistic"]},
        "d": {"type": "integer", "minimum": 1},
        "center_mean": {"type": "number"},
        "center_spread": {"type": "number", "minimum": 0},
        "theta0": {"type": "array", "items": {"type": "number"}},
        "samples": {"type": "integer", "minimum": 1},
        "features": {"type": "integer", "minimum": 1},
        "classes": {"type": "integer", "minimum": 2},
        "alpha": {"type": "number", "exclusiveMinimum": 0},
        "l2_reg": {"type": "number", "minimum": 0},
        "separation": {"type": "number"},
        "idx_images": {"type": "string"},
        "idx_labels": {"type": "string"},
    },
    "required": ["kind"],
}

_pipeline_schema = {
    "oneOf": [
        {"type": "string"},
        {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "name": {"type": "string"},
                "bucket_size": {"type": "integer", "minimum": 1},
                "gm_tolerance": {"type": "number", "exclusiveMinimum": 0},
                "gm_max_iters": {"type": "integer", "minimum": 1},
                "gm_smoothing": {"type": "number", "minimum": 0},
            },
            "required": ["name"],
        },
    ]
}

_attack_schema = {
    "oneOf": [
        {"enum": list(ATTACK_NAMES)},
        {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": list(ATTACK_NAMES)},
                "eta_grid": {"type": "array", "items": {"type": "number"}, "minItems": 1},
                "mimic_warmup": {"type": "integer", "minimum": 0},
            },
            "required": ["kind"],
        },
    ]
}

_auto_or_number = {"oneOf": [{"const": "auto"}, {"type": "number"}]}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "command": {"const": "train"},
        "n": {"type": "integer", "minimum": 1},
        "f": {"type": "integer", "minimum": 0},
        "honest_set": {"type": "array", "items": {"type": "integer", "minimum": 0}, "uniqueItems": True},
        "task": _task_schema,
        "pipeline": _pipeline_schema,
        "attack": _attack_schema,
        "algorithm": {"enum": list(ALGORITHMS)},
        "T": {"type": "integer", "minimum": 1},
        "gamma": _auto_or_number,
        "beta": _auto_or_number,
        "batch_size": {"type": ["integer", "null"], "minimum": 1},
        "clip_norm": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "sigma": {"type": ["number", "null"], "minimum": 0},
        "seed": {"type": "integer", "minimum": 0},
    },
    "required": ["command", "n", "f", "task", "pipeline", "algorithm", "T", "seed"],
}

CONFIG_DEFAULTS = """\
config file (JSON, unknown keys rejected):
  required: command ("train"), n, f, task, pipeline, algorithm ("dgd"|"dshb"), T, seed
  defaults: attack "none", gamma "auto" (1/L for dgd, closed-form schedule for dshb),
            beta "auto" (sqrt(1 - 24 gamma L)), batch_size null (full shard),
            clip_norm null (off), sigma null (required by dshb auto schedule;
            also the injected gradient noise of quadratic tasks),
            honest_set first n-f workers
  task:     {"kind": "quadratic", "d": 10, "center_mean": 1.0, "center_spread": 1.0, "theta0": zeros}
            {"kind": "logistic", "samples": 2000, "features": 5, "classes": 3, "alpha": 1.0,
             "l2_reg": 1e-4, "separation": 2.0, "idx_images": null, "idx_labels": null}
  pipeline: "cwtm", "nnm+krum", "bucketing+gm", ... or
            {"name": ..., "bucket_size": floor(n/2f), "gm_tolerance": 1e-10,
             "gm_max_iters": 1000, "gm_smoothing": 1e-8}
  attack:   one of none foe alie sf lf mimic, or {"kind": ..., "eta_grid": [...], "mimic_warmup": null}
"""


class ConfigError(ValueError):
    pass


def _pointer(path) -> str:
    return "/" + "/".join(str(p) for p in path) if path else "/"


def validate_config(doc) -> None:
    errors = sorted(jsonschema.Draft7Validator(CONFIG_SCHEMA).iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        raise ConfigError("; ".join(f"{_pointer(e.absolute_path)}: {e.message}" for e in errors))


def config_from_dict(doc) -> RunConfig:
    validate_config(doc)
    fields = {k: v for k, v in doc.items() if k != "command"}
    task = dict(fields.pop("task"))
    if "theta0" in task:
        task["theta0"] = tuple(task["theta0"])
    fields["task"] = TaskSpec(**task)
    pipe = fields.pop("pipeline")
    fields["pipeline"] = PipelineSpec(pipe) if isinstance(pipe, str) else PipelineSpec(**pipe)
    attack = fields.pop("attack", "none")
    fields["attack"] = AttackSpec(attack) if isinstance(attack, str) else AttackSpec(
        attack["kind"],
        tuple(attack["eta_grid"]) if "eta_grid" in attack else None,
        attack.get("mimic_warmup"),
    )
    try:
        return RunConfig(**fields)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    return config_from_dict(doc)


def fmt(x: float) -> str:
    if math.isinf(x):
        return "inf"
    return format(float(x), ".17g")


def read_vectors(path) -> np.ndarray:
    rows = []
    text = sys.stdin.read() if str(path) == "-" else Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            row = [float(tok) for tok in line.split()]
        except ValueError:
            raise ValueError(f"line {lineno}: not a list of decimals") from None
        if rows and len(row) != len(rows[0]):
            raise ValueError(f"line {lineno}: expected {len(rows[0])} values, got {len(row)}")
        rows.append(row)
    if not rows:
        raise ValueError("no vectors in input")
    return np.array(rows)


def cmd_aggregate(args) -> int:
    x = read_vectors(args.input)
    pipe = parse_pipeline(args.pipeline, args.f, bucket_size=args.bucket_size, rng=RngStream(args.seed))
    out = pipe(x)
    print(" ".join(fmt(v) for v in out), flush=True)
    return EXIT_OK


def _kappa_instances(n: int, f: int, d: int, trials: int, seed: int):
    rng = RngStream(seed).generator()
    for _ in range(trials):
        yield "random", rng.standard_normal((n, d))
    outlier = np.tile(np.arange(n, dtype=np.float64)[:, None], (1, d))
    outlier[-1] = 1e6
    yield "outlier", outlier


def cmd_kappa(args) -> int:
    n, f = args.n, args.f
    pipe = parse_pipeline(args.rule, f, rng=RngStream(args.seed))
    try:
        bound = pipeline_kappa(pipe, n, f)
    except ValueError:
        bound = None
    label = f"rule={pipe.name} n={n} f={f}"
    ok = True
    worst = 0.0
    for kind, x in _kappa_instances(n, f, args.d, args.trials, args.seed):
        worst = max(worst, estimate_kappa(pipe, x, f).kappa_hat)
    bound_text = "none" if bound is None else fmt(bound)
    verdict = bound is not None and worst <= bound + KAPPA_TOL
    ok &= verdict
    print(f"{label} instances={args.trials + 1} kappa_hat={fmt(worst)} theoretical={bound_text} "
          f"{'PASS' if verdict else 'FAIL'}", flush=True)
    floor = universal_kappa_floor(n, f)
    est = estimate_kappa(pipe, lower_bound_instance("universal", n, f), f)
    verdict = est.kappa_hat >= floor - FLOOR_TOL
    ok &= verdict
    print(f"{label} instance=universal kappa_hat={fmt(est.kappa_hat)} floor={fmt(floor)} "
          f"{'PASS' if verdict else 'FAIL'}", flush=True)
    if f >= 1:
        x = lower_bound_instance("gar", n, f)
        honest = x[: n - f]
        err = float(np.sum((pipe(x) - honest.mean(axis=0)) ** 2))
        var = float(np.mean(np.sum((honest - honest.mean(axis=0)) ** 2, axis=1)))
        print(f"{label} instance=gar ratio={fmt(err / var)} gar_ratio={fmt(gar_ratio(n, f))}", flush=True)
    return EXIT_OK if ok else EXIT_BOUND


def cmd_train(args) -> int:
    config = load_config(args.config)
    task, theta0 = config.resolve_task()
    result = run(config, task, theta0)
    csv_text = trace_to_csv(result.trace)
    report = sys.stdout
    if args.out:
        Path(args.out).write_text(csv_text, encoding="utf-8")
    else:
        sys.stdout.write(csv_text)
        report = sys.stderr
    status = EXIT_OK
    if isinstance(task, QuadraticTask) and config.pipeline.name.split("+")[0] != "bucketing":
        try:
            if config.algorithm == "dgd" and config.gamma == "auto":
                check = dgd_bound(config, result, task, theta0)
                tag = "PASS" if check.holds else "FAIL"
                status = EXIT_OK if check.holds else EXIT_BOUND
                print(f"dgd_bound lhs={fmt(check.lhs)} rhs={fmt(check.rhs)} {tag}", file=report, flush=True)
            elif config.algorithm == "dshb" and config.sigma is not None:
                check = dshb_bound(config, result, task, theta0)
                print(f"dshb_bound lhs={fmt(check.lhs)} rhs={fmt(check.rhs)} (expectation bound)", file=report, flush=True)
        except ValueError as exc:
            print(f"bound: not applicable ({exc})", file=report, flush=True)
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="robustagg", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("aggregate", help="aggregate vectors read from a file (one per line)")
    p.add_argument("pipeline", help='e.g. "mean", "cwtm", "nnm+krum", "bucketing+gm"')
    p.add_argument("input", help="vector file, '-' for stdin")
    p.add_argument("--f", type=int, default=0, help="tolerated Byzantine inputs (default 0)")
    p.add_argument("--seed", type=int, default=0, help="seed for bucketing (default 0)")
    p.add_argument("--bucket-size", type=int, default=None, help="bucket size (default floor(n/2f))")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("kappa", help="certify a rule's robustness coefficient empirically")
    p.add_argument("rule", help="rule or pipeline, e.g. cwmed or nnm+krum")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--f", type=int, required=True)
    p.add_argument("--d", type=int, default=2, help="dimension of random instances (default 2)")
    p.add_argument("--trials", type=int, default=100, help="random Gaussian instances (default 100)")
    p.add_argument("--seed", type=int, default=0, help="seed (default 0)")
    p.set_defaults(func=cmd_kappa)

    p = sub.add_parser("train", help="run D-GD or D-SHB from a JSON config",
                       epilog=CONFIG_DEFAULTS, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("config", help="JSON config file")
    p.add_argument("--out", default=None, help="CSV trace path (default: stdout, report on stderr)")
    p.set_defaults(func=cmd_train)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, FloatingPointError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr, flush=True)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
