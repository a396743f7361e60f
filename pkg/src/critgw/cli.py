"""Command-line interface: spectral reports, simulation, limit laws, rate
function, and the verification suites.

Exit codes: 0 success (all checks pass), 1 verification failure, 2 usage
error (bad arguments, missing file), 3 invalid or non-critical model.
Identical invocations with the same seed produce byte-identical output.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import forward, ldp, limits, spine, verify
from .model import BranchingModel, ModelError, builtin_model, load_model
from .spectral import NotCriticalError, SpectralData, perron_eigen
from .stats import SeededStreamFamily

DEFAULT_SEED = 0

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_BAD_MODEL = 3


class UsageError(Exception):
    pass


def _sig12(x: float) -> float:
    if isinstance(x, float) and math.isfinite(x):
        return float(f"{x:.12g}")
    return x


def _resolve_model(spec: str) -> BranchingModel:
    """Accept a builtin name (a/b/c, optionally prefixed with 'model-') or a path."""
    try:
        return builtin_model(spec)
    except ModelError:
        pass
    path = Path(spec)
    if not path.exists():
        raise UsageError(f"model file not found: {spec}")
    return load_model(path.read_text())


def _write_out(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.12g}"


# ---------------------------------------------------------------------------
# commands


def cmd_spectral(args) -> int:
    model = _resolve_model(args.model)
    sd = perron_eigen(model)
    payload = {
        "lambda": _sig12(sd.lam),
        "u": [_sig12(x) for x in sd.u],
        "v": [_sig12(x) for x in sd.v],
        "alpha": [_sig12(x) for x in sd.alpha],
        "Q": _sig12(sd.q_u),
    }
    _write_out(json.dumps(payload, indent=2) + "\n", args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    model = _resolve_model(args.model)
    streams = SeededStreamFamily(args.seed)
    lines = []
    if args.spine:
        sd = perron_eigen(model)
        header = "replicate,generation,trunk_type," + ",".join(
            f"count_{i + 1}" for i in range(model.d))
        lines.append(header)
        for rep in range(args.replicates):
            records = spine.simulate_spine(model, sd, 0, args.n, streams.stream(rep))
            for gen, rec in enumerate(records):
                counts = ",".join(str(int(c)) for c in rec.counts)
                lines.append(f"{rep},{gen},{rec.trunk_type + 1},{counts}")
    else:
        lines.append("replicate,generation,type,count")
        root = np.zeros(model.d, dtype=np.int64)
        root[0] = 1
        for rep in range(args.replicates):
            rng = streams.stream(rep)
            if args.condition_survival:
                tree = forward.condition_on_survival(
                    model, root, args.n, rng, max_attempts=args.max_attempts)
                path = tree.trajectory()
            else:
                path = forward.simulate_counts(model, root, args.n, rng, record_path=True)
            for gen in range(path.shape[0]):
                for t in range(model.d):
                    lines.append(f"{rep},{gen},{t + 1},{int(path[gen, t])}")
    _write_out("\n".join(lines) + "\n", args.out)
    return EXIT_OK


_LAW_PARAMS = {
    "exp": ("theta",),
    "gamma2": ("theta",),
    "cpe": ("a", "theta"),
    "sbtrans": ("x", "theta"),
}


def _build_law(name: str, params: dict):
    missing = [k for k in _LAW_PARAMS[name] if k not in params]
    if missing:
        raise UsageError(f"law {name!r} needs parameters {missing}")
    if name == "exp":
        return limits.ExponentialLaw(params["theta"])
    if name == "gamma2":
        return limits.GammaTwoLaw(params["theta"])
    if name == "cpe":
        return limits.CompoundPoissonExpLaw(params["a"], params["theta"])
    return limits.SizeBiasedTransitionLaw(params["x"], params["theta"])


def _parse_params(text: str | None) -> dict:
    out = {}
    if not text:
        return out
    for item in text.split(","):
        if "=" not in item:
            raise UsageError(f"bad parameter {item!r}; use key=value")
        key, _, val = item.partition("=")
        try:
            out[key.strip()] = float(val)
        except ValueError as exc:
            raise UsageError(f"bad parameter value {item!r}") from exc
    return out


def cmd_limits(args) -> int:
    law = _build_law(args.law, _parse_params(args.params))
    if args.mode == "pdf":
        try:
            a, b, count = args.grid.split(":")
            grid = np.linspace(float(a), float(b), int(count))
        except ValueError as exc:
            raise UsageError(f"bad grid {args.grid!r}; use a:b:n") from exc
        pdf = law.pdf(grid)
        cdf = law.cdf(grid)
        lines = ["x,density,cdf"]
        for x, p, c in zip(grid, pdf, cdf):
            lines.append(f"{_fmt(x)},{_fmt(p)},{_fmt(c)}")
        _write_out("\n".join(lines) + "\n", args.out)
        return EXIT_OK
    streams = SeededStreamFamily(args.seed)
    values = law.sample(streams.stream(0), size=args.n)
    lines = ["value"] + [_fmt(v) for v in np.atleast_1d(values)]
    _write_out("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_rate(args) -> int:
    model = _resolve_model(args.model)
    sd = perron_eigen(model)
    try:
        nu = np.array([float(x) for x in args.nu.split(",")])
    except ValueError as exc:
        raise UsageError(f"bad --nu {args.nu!r}") from exc
    chain = spine.retro_matrix(sd, model.mean_matrix())
    res = ldp.rate_J(chain.matrix, nu, n_starts=args.starts)
    payload = {
        "value": "inf" if math.isinf(res.value) else _sig12(res.value),
        "maximizer": None if res.maximizer is None else [_sig12(x) for x in res.maximizer],
        "converged": res.converged,
    }
    _write_out(json.dumps(payload, indent=2) + "\n", args.out)
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.suite not in verify.SUITES:
        raise UsageError(f"unknown suite {args.suite!r}; choose from {sorted(verify.SUITES)}")
    model = spectral = None
    if args.suite != "fdd" or args.model:
        if not args.model:
            raise UsageError(f"suite {args.suite!r} requires --model")
        model = _resolve_model(args.model)
        spectral = perron_eigen(model)
    opts = {"n": args.n, "replicates": args.replicates, "m": args.m, "steps": args.steps}
    streams = SeededStreamFamily(args.seed)
    rows = verify.run_suite(args.suite, model, spectral, streams, opts, workers=args.workers)
    _write_out(verify.format_report(rows), args.out)
    return EXIT_OK if all(r.passed for r in rows) else EXIT_CHECK_FAILED


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="critgw",
        description="Critical multitype branching processes: simulation and verification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectral", help="print the eigen data of a model as JSON")
    p.add_argument("--model", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_spectral)

    p = sub.add_parser("simulate", help="simulate trajectories to CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--replicates", type=int, default=1)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--condition-survival", action="store_true")
    p.add_argument("--spine", action="store_true")
    p.add_argument("--max-attempts", type=int, default=1_000_000)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("limits", help="evaluate or sample the limit laws")
    p.add_argument("mode", choices=["pdf", "sample"])
    p.add_argument("--law", required=True, choices=sorted(_LAW_PARAMS))
    p.add_argument("--params", help="comma-separated key=value, e.g. theta=1,a=0.5")
    p.add_argument("--grid", default="0:40:4001", help="a:b:n linear grid for pdf mode")
    p.add_argument("--n", type=int, default=1000, help="sample size for sample mode")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out")
    p.set_defaults(func=cmd_limits)

    p = sub.add_parser("rate", help="rate function of an occupation candidate")
    p.add_argument("--model", required=True)
    p.add_argument("--nu", required=True, help="comma-separated probability vector")
    p.add_argument("--starts", type=int, default=5)
    p.add_argument("--out")
    p.set_defaults(func=cmd_rate)

    p = sub.add_parser("verify", help="run a named verification suite")
    p.add_argument("suite")
    p.add_argument("--model")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--n", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--replicates", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ModelError, NotCriticalError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_MODEL


if __name__ == "__main__":
    sys.exit(main())
