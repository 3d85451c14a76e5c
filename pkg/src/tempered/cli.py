"""Command-line entry point: every verb writes one CSV or JSON artifact.

Each artifact starts with its full run configuration (``# config=...`` in CSV,
a ``config`` key in JSON); ``tempered replay ARTIFACT`` re-runs it and writes
the same bytes.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from fractions import Fraction

import numpy as np

from . import algebra, stochastic
from .errors import BackendError, CapExceeded, GridOverflow, NonFiniteError, PrecisionError
from .expr import ExprError, parse_expr, stream_for
from .gauss import gp_eval, parse_region
from .precision import fmt_real, fmt_scalar, precision, to_fraction

EXIT_USAGE, EXIT_CAP, EXIT_NONFINITE = 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# -- output ---------------------------------------------------------------------

class Result:
    def __init__(self, columns, rows, extra: dict | None = None):
        self.columns = list(columns)
        self.rows = [[_cell(v) for v in r] for r in rows]
        self.extra = extra or {}


def _cell(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return fmt_real(float(v))
    if isinstance(v, Fraction):
        return str(v)
    re_, im_ = fmt_scalar(v)
    if im_ == "0":
        return re_
    return f"{re_}{'' if im_.startswith('-') else '+'}{im_}j"


def render(config: dict, res: Result, fmt: str) -> str:
    if fmt == "json":
        doc = {"config": config, "columns": res.columns, "rows": res.rows}
        doc.update(res.extra)
        return json.dumps(doc, sort_keys=True, indent=1) + "\n"
    buf = io.StringIO()
    buf.write("# config=" + json.dumps(config, sort_keys=True, separators=(",", ":")) + "\n")
    for k in sorted(res.extra):
        buf.write(f"# {k}=" + json.dumps(res.extra[k], sort_keys=True, separators=(",", ":")) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(res.columns)
    w.writerows(res.rows)
    return buf.getvalue()


# -- helpers ---------------------------------------------------------------------

def _levels(args) -> list[int]:
    start = args.order if args.n_from is None else args.n_from
    if start > args.order or start < 0:
        raise UsageError("--n-from must lie in [0, order]")
    return list(range(start, args.order + 1))


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v]
    except ValueError as exc:
        raise UsageError(f"bad integer list {text!r}") from exc


def _grid(text: str) -> list[Fraction]:
    try:
        a, b, k = text.split(":")
        a, b, k = to_fraction(a), to_fraction(b), int(k)
    except ValueError as exc:
        raise UsageError(f"bad grid {text!r}; use lo:hi:points") from exc
    if k < 1:
        raise UsageError("grid needs at least one point")
    if k == 1:
        return [a]
    return [a + (b - a) * i / (k - 1) for i in range(k)]


def _process(args):
    kind = args.process
    V = None
    if args.fv:
        try:
            knots = [tuple(float(x) for x in p.split(":")) for p in args.fv.split(",")]
        except ValueError as exc:
            raise UsageError(f"bad --fv knots {args.fv!r}; use t:v,t:v") from exc
        V = stochastic.PiecewiseLinear(tuple(t for t, _ in knots), tuple(v for _, v in knots))
    if kind == "bm":
        return stochastic.BM(args.x0, args.sigma, V)
    if kind == "driftbm":
        return stochastic.DriftBM(args.x0, args.mu, args.sigma, V)
    if kind == "ou":
        return stochastic.OU(args.x0, args.theta, args.mean, args.sigma, V)
    coeffs = tuple(float(c) for c in args.coeffs.split(","))
    return stochastic.Deterministic(coeffs, V)


def _terms_rows(g) -> list:
    rows = []
    for t in g.terms:
        for k, c in enumerate(t.coeffs):
            if c != 0:
                rows.append([str(t.rate), k, *fmt_scalar(c)])
    return rows


# -- verbs ---------------------------------------------------------------------------

def cmd_coeffs(args) -> Result:
    s = stream_for(args.dist)
    return Result(["n", "coefficient"], [[n, s(n)] for n in range(args.order + 1)])


def cmd_embed_eval(args) -> Result:
    f = parse_expr(args.expr, args.backend)
    g = f(args.order)
    return Result(["x", "value"], [[x, gp_eval(g, x)] for x in _grid(args.grid)])


def cmd_product(args) -> Result:
    f = parse_expr(f"({args.lhs})*({args.rhs})", args.backend)
    return Result(["rate", "power", "re", "im"], _terms_rows(f(args.order)))


def cmd_fourier(args) -> Result:
    f = parse_expr(f"F({args.expr})" if args.direction == "forward" else f"Finv({args.expr})",
                   args.backend)
    return Result(["rate", "power", "re", "im"], _terms_rows(f(args.order)))


def cmd_integrate(args) -> Result:
    tn = algebra.seq_integrate(parse_expr(args.expr, args.backend), parse_region(args.region))
    return Result(["n", "value"], [[n, tn(n)] for n in _levels(args)])


def cmd_pointvalue(args) -> Result:
    tn = algebra.seq_point_value(parse_expr(args.expr, args.backend), to_fraction(args.at))
    return Result(["n", "value"], [[n, tn(n)] for n in _levels(args)])


def cmd_associate(args) -> Result:
    lhs = parse_expr(args.lhs, args.backend)
    rhs = parse_expr(args.rhs, args.backend)
    v = algebra.associated(lhs, rhs, nmax=args.order, assoc_tol=args.assoc_tol,
                           k_max=args.probes, seed=args.seed)
    verdict = v.to_json()
    if verdict["exponent"] is not None:
        verdict["exponent"] = fmt_real(verdict["exponent"])
    return Result(["n", "probe", "re", "im"], algebra.pairing_rows(v), {"verdict": verdict})


def cmd_moderation(args) -> Result:
    f = parse_expr(args.expr, args.backend)
    v = algebra.moderation_class(f, args.m, args.order, spectral=args.spectral)
    verdict = v.to_json()
    if verdict["exponent"] is not None:
        verdict["exponent"] = fmt_real(verdict["exponent"])
    rows = [[n, fmt_real(x)] for n, x in zip(v.diagnostics["grid"], v.diagnostics["norms"])]
    return Result(["n", "norm"], rows, {"verdict": verdict})


def cmd_symprod(args) -> Result:
    if args.stride < 1:
        raise UsageError("--stride must be >= 1")
    s, t = stream_for(args.lhs), stream_for(args.rhs)
    ns = list(range(0, args.order + 1, args.stride))
    if ns[-1] != args.order:
        ns.append(args.order)
    sp = algebra.symmetric_product(s, t, args.kmax, args.order, ns=ns)
    summary = [{"k": d["k"], "last": d["last"], "converged": d["converged"],
                "spread": fmt_real(d["spread"]),
                "exponent": None if d["exponent"] is None else fmt_real(d["exponent"])}
               for d in sp.summary()]
    return Result(["k", "n", "re", "im"], sp.rows(), {"summary": summary})


def cmd_ito(args) -> Result:
    f = parse_expr(args.expr, args.backend)
    spec = _process(args)
    exps = {}
    for dt in args.dt.split(","):
        exps[dt] = stochastic.ito_experiment(f, spec, args.T, dt, args.paths, args.seed,
                                             args.order, args.qv, args.workers)
    return Result(["n", "dt", "paths", "residual_rms", "residual_max", "stderr"],
                  stochastic.report_rows(exps))


def cmd_tanaka(args) -> Result:
    spec = _process(args)
    exps = stochastic.tanaka_experiment(to_fraction(args.a), spec, args.T, args.dt, args.paths,
                                        args.seed, _ints(args.levels), args.workers)
    rows = []
    for n, e in exps.items():
        lt = np.asarray(e.config["local_time"])
        rows.append([n, e.config["dt"], e.config["paths"], e.mean_abs, e.rms, e.max_abs,
                     e.stderr, float(lt.min())])
    return Result(["n", "dt", "paths", "residual_mean_abs", "residual_rms", "residual_max",
                   "stderr", "local_time_min"], rows)


def cmd_dynkin(args) -> Result:
    f = parse_expr(args.expr, args.backend)
    r = stochastic.dynkin_residual(f, to_fraction(args.x), to_fraction(args.t), args.paths,
                                   to_fraction(args.dt), args.seed, args.workers)
    return Result(["n", "dt", "paths", "residual", "stderr"],
                  [[args.order, float(to_fraction(args.dt)), args.paths, r(args.order),
                    r.stderr(args.order)]])


def cmd_heat(args) -> Result:
    f = parse_expr(args.expr, args.backend)
    H = stochastic.heat_evolve(f)
    rows = []
    for t in args.t.split(","):
        for x in args.x.split(","):
            tf, xf = to_fraction(t), to_fraction(x)
            val = gp_eval(H.at(args.order, tf), xf)
            res = stochastic.heat_residual(H, tf, xf, args.order) if tf > 0 else 0.0
            rows.append([str(tf), str(xf), val, res])
    return Result(["t", "x", "value", "residual"], rows)


VERBS = {
    "coeffs": cmd_coeffs, "embed-eval": cmd_embed_eval, "product": cmd_product,
    "fourier": cmd_fourier, "integrate": cmd_integrate, "pointvalue": cmd_pointvalue,
    "associate": cmd_associate, "moderation": cmd_moderation, "symprod": cmd_symprod,
    "ito": cmd_ito, "tanaka": cmd_tanaka, "dynkin": cmd_dynkin, "heat": cmd_heat,
}


# -- argument parsing -------------------------------------------------------------

def _positive(kind):
    def conv(text):
        try:
            v = kind(text)
        except ValueError as exc:
            raise argparse.ArgumentTypeError(f"invalid value {text!r}") from exc
        if v < 0:
            raise argparse.ArgumentTypeError(f"must be >= 0, got {text!r}")
        return v
    return conv


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--order", type=_positive(int), default=16)
    common.add_argument("--prec-bits", type=int, default=256)
    common.add_argument("--basis-cap", type=_positive(int), default=512)
    common.add_argument("--seed", type=_positive(int), default=0)
    common.add_argument("--out", default="-")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--workers", type=int, default=8)
    common.add_argument("--backend", choices=("analytic", "spectral"), default="analytic")

    p = _Parser(prog="tempered", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    def verb(name, **kw):
        return sub.add_parser(name, parents=[common], **kw)

    verb("coeffs").add_argument("--dist", required=True)
    v = verb("embed-eval")
    v.add_argument("--expr", required=True)
    v.add_argument("--grid", default="-4:4:9")
    v = verb("product")
    v.add_argument("--lhs", required=True)
    v.add_argument("--rhs", required=True)
    v = verb("fourier")
    v.add_argument("--expr", required=True)
    v.add_argument("--direction", choices=("forward", "inverse"), default="forward")
    for name in ("integrate", "pointvalue"):
        v = verb(name)
        v.add_argument("--expr", required=True)
        v.add_argument("--n-from", type=_positive(int), default=None)
        if name == "integrate":
            v.add_argument("--region", default="full")
        else:
            v.add_argument("--at", required=True)
    v = verb("associate")
    v.add_argument("--lhs", required=True)
    v.add_argument("--rhs", required=True)
    v.add_argument("--probes", type=_positive(int), default=4)
    v.add_argument("--assoc-tol", type=float, default=algebra.ASSOC_TOL)
    v = verb("moderation")
    v.add_argument("--expr", required=True)
    v.add_argument("--m", type=_positive(int), default=0)
    v.add_argument("--spectral", action="store_true")
    v = verb("symprod")
    v.add_argument("--lhs", required=True)
    v.add_argument("--rhs", required=True)
    v.add_argument("--kmax", type=_positive(int), default=4)
    v.add_argument("--stride", type=int, default=1)

    def process_flags(v):
        v.add_argument("--process", choices=("bm", "driftbm", "ou", "det"), default="bm")
        v.add_argument("--x0", type=float, default=0.0)
        v.add_argument("--sigma", type=_positive(float), default=1.0)
        v.add_argument("--mu", type=float, default=0.0)
        v.add_argument("--theta", type=float, default=1.0)
        v.add_argument("--mean", type=float, default=0.0)
        v.add_argument("--coeffs", default="0,1")
        v.add_argument("--fv", default=None, help="piecewise-linear V knots t:v,t:v")
        v.add_argument("--T", default="1")
        v.add_argument("--paths", type=int, default=200)

    v = verb("ito")
    v.add_argument("--expr", required=True)
    v.add_argument("--dt", default="0.001")
    v.add_argument("--qv", choices=("realized", "analytic"), default="realized")
    process_flags(v)
    v = verb("tanaka")
    v.add_argument("--a", default="0")
    v.add_argument("--dt", default="0.001")
    v.add_argument("--levels", default="4,16,64")
    process_flags(v)
    v = verb("dynkin")
    v.add_argument("--expr", required=True)
    v.add_argument("--x", default="0")
    v.add_argument("--t", default="0.5")
    v.add_argument("--dt", default="0.001")
    v.add_argument("--paths", type=int, default=1000)
    v = verb("heat")
    v.add_argument("--expr", required=True)
    v.add_argument("--t", default="1")
    v.add_argument("--x", default="0")

    r = sub.add_parser("replay")
    r.add_argument("artifact")
    r.add_argument("--out", default="-")
    return p


def _config(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items())}


def _argv_from_config(config: dict) -> list[str]:
    argv = [config["verb"]]
    for k, v in config.items():
        if k == "verb" or v is None or v is False:
            continue
        flag = "--" + k.replace("_", "-")
        if v is True:
            argv.append(flag)
        else:
            argv.append(f"{flag}={v}")
    return argv


def read_config(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if text.startswith("# config="):
        return json.loads(text.split("\n", 1)[0][len("# config="):])
    try:
        return json.loads(text)["config"]
    except (ValueError, KeyError) as exc:
        raise UsageError(f"{path} carries no embedded config") from exc


def execute(args) -> str:
    config = _config(args)
    if args.prec_bits < 64:
        raise PrecisionError(f"precision must be at least 64 bits, got {args.prec_bits}")
    if args.workers < 1:
        raise UsageError("--workers must be >= 1")
    if args.order > args.basis_cap:
        raise CapExceeded(f"--order {args.order} exceeds the basis cap {args.basis_cap}")
    with precision(args.prec_bits, args.basis_cap):
        res = VERBS[args.verb](args)
    return render(config, res, args.format)


def _write(text: str, out: str) -> None:
    if out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _fail(code: int, kind: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit": code}) + "\n")
    return code


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.verb == "replay":
            config = read_config(args.artifact)
            inner = parser.parse_args(_argv_from_config(config))
            if _config(inner) != config:
                raise UsageError("embedded config does not round-trip")
            _write(execute(inner), args.out)
        else:
            _write(execute(args), args.out)
        return 0
    except (UsageError, ExprError, BackendError) as exc:
        return _fail(EXIT_USAGE, type(exc).__name__, str(exc))
    except (CapExceeded, PrecisionError, GridOverflow) as exc:
        return _fail(EXIT_CAP, type(exc).__name__, str(exc))
    except NonFiniteError as exc:
        return _fail(EXIT_NONFINITE, type(exc).__name__, str(exc))
    except (ValueError, ZeroDivisionError) as exc:
        return _fail(EXIT_USAGE, type(exc).__name__, str(exc))
    except OSError as exc:
        return _fail(1, type(exc).__name__, str(exc))


if __name__ == "__main__":
    sys.exit(main())
