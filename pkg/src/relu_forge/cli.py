"""Command line entry point: ``relu-forge {build-sparse,verify,rates}``.

Exit codes: 0 success, 1 verification failure, 2 input error,
3 precision or resource budget exceeded.
"""
import argparse
import csv
import io
import json
import math
import sys
from fractions import Fraction
from pathlib import Path

from . import __version__
from .functions import make_function
from .net import (F64, RATIONAL, FormatError, NetworkError, PrecisionBudgetExceeded,
                  evaluate, load, save, to_f64)
from .poly import EmbeddingError, ScheduleError, check_embedding
from .pipeline import default_scheme, rate_experiment, ResolutionError
from .sparse import (CodecError, SparseIntVector, depth_bound, encode, min_depth_threshold,
                     optimal_threshold, sparse_vector_net)

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_BUDGET = 0, 1, 2, 3
F64_MANTISSA = 53
CSV_COLUMNS = ["n", "depth", "width", "params", "p", "error", "ci_lo", "ci_hi", "seed"]


class InputError(Exception):
    pass


def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except OSError as e:
        raise InputError(f"cannot read {path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise InputError(f"malformed JSON in {path}: {e.msg} (line {e.lineno})") from None


def _read_vector(path):
    data = _read_json(path)
    M = None
    if isinstance(data, dict):
        M = data.get("M")
        data = data.get("x")
    if not isinstance(data, list) or not data or not all(
            isinstance(v, int) and not isinstance(v, bool) for v in data):
        raise InputError(f"{path}: expected a non-empty JSON list of integers")
    if M is not None and (not isinstance(M, int) or M < 1):
        raise InputError(f"{path}: M must be a positive integer")
    return data, M


def _emit(obj):
    print(json.dumps(obj, indent=2, sort_keys=True))


def _parse_float(text):
    return math.inf if str(text).lower() in ("inf", "infinity") else float(text)


def _fmt_float(v):
    return "inf" if isinstance(v, float) and math.isinf(v) else v


# --------------------------------------------------------------------------
# build-sparse
# --------------------------------------------------------------------------

def cmd_build_sparse(args):
    x, M = _read_vector(args.vector)
    vec = SparseIntVector.of(x, M)
    if args.threshold == "min_depth":
        S = min_depth_threshold(vec)
    else:
        S = optimal_threshold(vec.N, vec.M, vec.linf)
    net = sparse_vector_net(vec, S=S)
    bound = depth_bound(vec.N, vec.M, S)
    if args.mode == F64:
        net = to_f64(net)
    if args.out:
        save(net, args.out)
    enc = encode(vec)
    audit = {
        "N": vec.N, "M": vec.M, "S": S, "regime": enc.regime,
        "depth": net.depth, "depth_bound": float(bound), "width": net.width,
        "params": net.n_params, "mode": net.mode, "encoding": enc.to_hex(),
        "ok": net.depth <= bound and (net.width or 0) <= 17, "out": args.out,
    }
    _emit(audit)
    return EXIT_OK if audit["ok"] else EXIT_FAIL


# --------------------------------------------------------------------------
# verify
# --------------------------------------------------------------------------

def _required_bits(net):
    bits = 0
    for layer in net.layers:
        vals = list(layer.vals) + list(layer.bias)
        for v in vals:
            v = Fraction(v)
            bits = max(bits, v.numerator.bit_length(), v.denominator.bit_length())
    return bits


def _print_table(rows):
    width = max(len(r[0]) for r in rows)
    for name, ok, detail in rows:
        print(f"{name:<{width}}  {'PASS' if ok else 'FAIL'}  {detail}")


def cmd_verify(args):
    net = load(args.net)
    mode = args.mode or net.mode
    if mode == RATIONAL and not net.exact:
        raise InputError("rational verification requested for a float64 network")
    if mode == F64 and net.exact:
        need = _required_bits(net)
        if need > F64_MANTISSA:
            print(f"refusing float64 verification: weights need {need} bits, "
                  f"float64 holds {F64_MANTISSA}", file=sys.stderr)
            return EXIT_BUDGET
    rows = []
    if args.vector:
        x, M = _read_vector(args.vector)
        vec = SparseIntVector.of(x, M)
        rows.append(("dims", net.input_dim == 1 and net.output_dim == 1,
                     f"{net.input_dim} -> {net.output_dim}"))
        if rows[-1][1]:
            idx = [[n] for n in range(1, vec.N + 1)]
            out = evaluate(net, idx, mode)[:, 0]
            if mode == RATIONAL:
                bad = [n + 1 for n, (o, v) in enumerate(zip(out, vec.x)) if o != v]
            else:
                bad = [n + 1 for n, (o, v) in enumerate(zip(out, vec.x))
                       if abs(float(o) - v) > args.tol]
            rows.append(("values", not bad, f"{vec.N - len(bad)}/{vec.N} exact"
                         + (f", first mismatch at n={bad[0]}" if bad else "")))
        rows.append(("width", (net.width or 0) <= 17, f"{net.width} <= 17"))
        # min-depth builds are never deeper than the balanced build
        bound = depth_bound(vec.N, vec.M, optimal_threshold(vec.N, vec.M, vec.linf))
        rows.append(("depth", net.depth <= bound, f"{net.depth} <= {float(bound):.1f}"))
    elif args.function:
        params = json.loads(args.params) if args.params else {}
        f = make_function(args.function, **params)
        if net.input_dim != f.d or net.output_dim != 1:
            raise InputError(f"network maps R^{net.input_dim} -> R^{net.output_dim}, "
                             f"function lives on R^{f.d}")
        from .pipeline import measure_lp_error
        p = _parse_float(args.p)
        rep = measure_lp_error(f, net, p, default_scheme(p), args.samples, args.seed,
                               mode=mode)
        rows.append(("error", rep.error <= args.tol,
                     f"||f - net||_{_fmt_float(p)} = {rep.error:.6g} <= {args.tol:g}"))
    else:
        raise InputError("verify needs --vector or --function")
    _print_table(rows)
    return EXIT_OK if all(ok for _, ok, _ in rows) else EXIT_FAIL


# --------------------------------------------------------------------------
# rates
# --------------------------------------------------------------------------

RATE_DEFAULTS = {
    "function": "sin", "params": {}, "s": 1.0, "p": 2.0, "q": 2.0, "d": 1,
    "n_grid": [8, 16, 32, 64], "seed": 0, "scheme": None, "n_samples": None,
    "k": None, "threshold": "min_depth", "schedule": {},
}


def _rates_config(args):
    cfg = dict(RATE_DEFAULTS)
    if args.config:
        user = _read_json(args.config)
        if not isinstance(user, dict):
            raise InputError("config must be a JSON object")
        unknown = set(user) - set(RATE_DEFAULTS)
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(user)
    for key in ("function", "s", "p", "q", "d", "seed"):
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = v
    if args.n_grid:
        cfg["n_grid"] = [int(v) for v in args.n_grid.split(",")]
    for key in ("s", "p", "q"):
        cfg[key] = _parse_float(cfg[key])
    cfg["d"] = int(cfg["d"])
    cfg["seed"] = int(cfg["seed"])
    return cfg


def _csv_text(reports):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in reports:
        row = r.row()
        w.writerow([repr(v) if isinstance(v, float) else v for v in
                    (row[c] for c in CSV_COLUMNS)])
    return buf.getvalue()


def cmd_rates(args):
    cfg = _rates_config(args)
    try:
        check_embedding(cfg["s"], cfg["p"], cfg["q"], cfg["d"])
    except EmbeddingError as e:
        print(f"refusing: {e}", file=sys.stderr)
        return EXIT_INPUT
    f = make_function(cfg["function"], d=cfg["d"], **cfg["params"])
    f = f.with_smoothness(cfg["s"], cfg["q"])
    reports, (slope, const, r2) = rate_experiment(
        f, cfg["n_grid"], cfg["p"], k=cfg["k"], seed=cfg["seed"], scheme=cfg["scheme"],
        n_samples=cfg["n_samples"], threshold=cfg["threshold"], mode=args.mode,
        **cfg["schedule"])
    text = _csv_text(reports)
    out = Path(args.out) if args.out else None
    manifest = {
        "command": "rates", "version": __version__, "seed": cfg["seed"], "mode": args.mode,
        "config": {k: _fmt_float(v) for k, v in cfg.items()},
        "function": f.describe(), "predicted_slope": -2 * cfg["s"] / cfg["d"],
        "slope": slope, "constant": const, "r2": r2,
        "output": str(out) if out else None,
    }
    if out:
        out.write_text(text)
        Path(str(out) + ".manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    else:
        sys.stdout.write(text)
    print(f"slope {slope:.4f} (predicted {-2 * cfg['s'] / cfg['d']:.4f}), R^2 {r2:.4f}",
          file=sys.stderr)
    return EXIT_OK


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--mode", choices=[RATIONAL, F64], default=None)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out", default=None)
    common.add_argument("--config", default=None, help="JSON file of options")

    parser = argparse.ArgumentParser(prog="relu-forge", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build-sparse", parents=[common],
                       help="network with g(n) = x_n for an integer vector")
    b.add_argument("vector", help="JSON list of integers or {\"x\": [...], \"M\": int}")
    b.add_argument("--threshold", choices=["balanced", "min_depth"], default="balanced")
    b.set_defaults(func=cmd_build_sparse)

    v = sub.add_parser("verify", parents=[common], help="check a serialized network")
    v.add_argument("net")
    v.add_argument("--vector")
    v.add_argument("--function")
    v.add_argument("--params", help="JSON object of function parameters")
    v.add_argument("--p", default="inf")
    v.add_argument("--tol", type=float, default=0.0)
    v.add_argument("--samples", type=int, default=4096)
    v.set_defaults(func=cmd_verify)

    r = sub.add_parser("rates", parents=[common], help="error-versus-depth experiment")
    r.add_argument("--function")
    r.add_argument("--s", type=float)
    r.add_argument("--p")
    r.add_argument("--q")
    r.add_argument("--d", type=int)
    r.add_argument("--n-grid", dest="n_grid", help="comma separated, e.g. 8,16,32,64")
    r.set_defaults(func=cmd_rates)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_INPUT if e.code else EXIT_OK
    if args.command == "verify" and args.seed is None:
        args.seed = 0
    if args.command == "rates" and args.mode is None:
        args.mode = F64
    if args.command == "build-sparse" and args.mode is None:
        args.mode = RATIONAL
    try:
        return args.func(args)
    except (PrecisionBudgetExceeded, MemoryError) as e:
        print(f"budget exceeded: {e}", file=sys.stderr)
        return EXIT_BUDGET
    except (InputError, FormatError, CodecError, EmbeddingError, ScheduleError,
            ResolutionError, NetworkError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
