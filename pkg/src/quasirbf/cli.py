"""Command-line entry point: ``quasirbf <command> [options]``.

Every output file starts with one ``# quasirbf <version> <command>`` line;
the rest is deterministic JSON or CSV with floats in 17 significant digits.
Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from fractions import Fraction
from typing import List, Optional

from . import __version__
from .asymptotics import DegeneratePoleError, Feasibility, classify_regime, power_expansion, tps_expansion
from .interp import CATALOG, InsufficientMarginError, _map, convergence_study, reproduction_test
from .lagrange import Stencil, StencilError, build_stencil, minimal_stencil
from .mellin import MbIntegrand, NoConvergenceError, Which, eval_ft, eval_ft_closed_form_d1, oracle_hankel
from .rbf_model import Family, RbfSpec, SpecError
from .sobolev import LimitDivergenceError, LimitNotStableError, ladder_check

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


class InputError(Exception):
    pass


class NumericError(Exception):
    pass


# --------------------------------------------------------------------------
# Output


def fmt(x) -> str:
    x = float(x)
    return format(x + 0.0 if x == 0 else x, ".17g")


def _json(obj, indent=0) -> str:
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return fmt(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_json(v, indent + 1)}" for k, v in sorted(obj.items())]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        return "[\n" + ",\n".join(pad + _json(v, indent + 1) for v in obj) + "\n" + end + "]"
    if hasattr(obj, "item"):
        return _json(obj.item(), indent)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _csv(header: List[str], rows: List[list]) -> str:
    def cell(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, float):
            return fmt(v) if math.isfinite(v) else ""
        if v is None:
            return ""
        return str(v)

    lines = [",".join(header)] + [",".join(cell(v) for v in r) for r in rows]
    return "\n".join(lines) + "\n"


def _emit(args, command: str, payload: str) -> None:
    text = f"# quasirbf {__version__} {command}\n" + payload
    if not text.endswith("\n"):
        text += "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# --------------------------------------------------------------------------
# Input


def _load_json(value: str, what: str):
    text = value
    if not value.lstrip().startswith(("{", "[")):
        try:
            with open(value, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise InputError(f"--{what}: cannot read {value!r}: {exc.strerror}") from None
    # our own output files carry a "# quasirbf ..." header line
    text = "\n".join(line for line in text.splitlines() if not line.startswith("#"))
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"--{what}: malformed JSON: {exc}") from None


def _spec(args) -> RbfSpec:
    if not args.spec:
        raise InputError("--spec is required")
    try:
        return RbfSpec.from_dict(_load_json(args.spec, "spec"))
    except SpecError as exc:
        raise InputError(f"--spec: {exc}") from None


def _number(text: str, what: str) -> float:
    try:
        v = float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError):
        raise InputError(f"{what}: {text!r} is not a number") from None
    return v


def _number_list(text: str, what: str) -> List[float]:
    vals = [_number(t, what) for t in text.split(",") if t.strip()]
    if not vals:
        raise InputError(f"{what}: empty list")
    return vals


def _report(spec: RbfSpec) -> dict:
    if spec.family is Family.TPS:
        lead = tps_expansion(spec).leading
        return {
            "quadrant": "TPS",
            "leading": lead.to_dict(),
            "qi_feasible": Feasibility.FINITE.value,
            "singularity_order": -lead.power,
            "notes": "",
        }
    return classify_regime(spec).to_dict()


def _need(args, *names) -> None:
    for name in names:
        if getattr(args, name, None) is None:
            raise InputError(f"--{name.replace('_', '-')} is required")


def _require_feasible(spec: RbfSpec) -> None:
    rep = _report(spec)
    if rep["qi_feasible"] != Feasibility.FINITE.value:
        msg = f"regime {rep['quadrant']} is {rep['qi_feasible']}"
        if rep["notes"]:
            msg += f": {rep['notes']}"
        raise InputError(msg)


def _expansion(spec: RbfSpec, up_to_power=None):
    if spec.family is Family.TPS:
        return tps_expansion(spec, up_to_power)
    return power_expansion(spec, up_to_power)


def _stencil(args, spec: RbfSpec) -> Stencil:
    if getattr(args, "stencil", None):
        try:
            st = Stencil.from_dict(_load_json(args.stencil, "stencil"))
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"--stencil: {exc}") from None
        if st.n != spec.n:
            raise InputError(f"--stencil has n={st.n} but --spec has n={spec.n}")
        return st
    _require_feasible(spec)
    exp = _expansion(spec)
    radius = getattr(args, "support_radius", None)
    if radius is not None:
        if radius < 1:
            raise InputError("--support-radius must be >= 1")
        return build_stencil(exp, spec.n, radius)
    return minimal_stencil(exp, spec.n)


# --------------------------------------------------------------------------
# Commands


def cmd_transform(args) -> None:
    spec = _spec(args)
    if args.require_feasible:
        _require_feasible(spec)
    _need(args, "s")
    s_list = _number_list(str(args.s), "--s")
    if any(not s > 0 for s in s_list):
        raise InputError("--s: every s must be positive")
    if args.closed_form and not (spec.family is Family.TPS and spec.d == 1):
        raise InputError("--closed-form needs a tps spec with d = 1")
    which = Which.TPS_SUM if spec.family is Family.TPS else Which.POWER
    integrand = MbIntegrand(which, spec)

    def row(s):
        v = eval_ft(integrand, s, args.tol)
        r = {
            "s": s,
            "value": v.value,
            "method": v.method.value,
            "terms": v.series_terms_used,
            "truncation_estimate": v.truncation_estimate,
        }
        if args.closed_form:
            r["closed_form"] = eval_ft_closed_form_d1(spec, s)
        if args.oracle:
            o = oracle_hankel(spec, s)
            r["oracle"] = o
            r["oracle_rel_dev"] = abs(v.value - o) / abs(o) if o else math.inf
        return r

    rows = _map(row, s_list, None)
    cols = ["s", "value", "method", "terms", "truncation_estimate"]
    cols += ["closed_form"] * args.closed_form + ["oracle", "oracle_rel_dev"] * args.oracle
    if args.format == "csv":
        _emit(args, "transform", _csv(cols, [[r[c] for c in cols] for r in rows]))
    else:
        _emit(args, "transform", _json({"spec": spec.to_dict(), "rows": rows}))


def cmd_asymptotics(args) -> None:
    spec = _spec(args)
    up = None if args.up_to_power is None else _number(args.up_to_power, "--up-to-power")
    exp = _expansion(spec, up)
    if args.format == "csv":
        rows = [[t.power, t.coeff, t.has_log, t.coeff_of_log] for t in exp.terms]
        _emit(args, "asymptotics", _csv(["power", "coeff", "has_log", "coeff_of_log"], rows))
    else:
        d = exp.to_dict()
        d["spec"] = spec.to_dict()
        d["notes"] = list(exp.notes)
        _emit(args, "asymptotics", _json(d))


def cmd_classify(args) -> None:
    spec = _spec(args)
    d = _report(spec)
    if args.format == "csv":
        cols = ["quadrant", "qi_feasible", "singularity_order", "leading_power", "leading_coeff", "leading_has_log"]
        lead = d["leading"] or {}
        row = [d["quadrant"], d["qi_feasible"], d["singularity_order"], lead.get("power"), lead.get("coeff"), lead.get("has_log")]
        _emit(args, "classify", _csv(cols, [row]))
    else:
        d["spec"] = spec.to_dict()
        _emit(args, "classify", _json(d))
    if args.require_feasible and d["qi_feasible"] != Feasibility.FINITE.value:
        raise InputError(f"regime {d['quadrant']} is {d['qi_feasible']}")


def cmd_stencil(args) -> None:
    spec = _spec(args)
    st = _stencil(args, spec)
    if args.format == "csv":
        rows = [list(a) + [mu] for a, mu in sorted(st.coeffs.items())]
        _emit(args, "stencil", _csv([f"a{i + 1}" for i in range(st.n)] + ["mu"], rows))
    else:
        _emit(args, "stencil", _json(st.to_dict()))


def cmd_reproduce(args) -> None:
    spec = _spec(args)
    st = _stencil(args, spec)
    _need(args, "degree", "h")
    if int(args.degree) != args.degree or args.degree < 0:
        raise InputError("--degree must be >= 0")
    h = _number(str(args.h), "--h")
    if not h > 0:
        raise InputError("--h must be positive")
    res = reproduction_test(st, spec, args.degree, h, box_margin=args.box_margin, tail_tol=args.tol)
    if args.format == "csv":
        rows = [list(r.exponent) + [r.residual, r.box_sup, r.relative] for r in res]
        cols = [f"e{i + 1}" for i in range(spec.n)] + ["residual", "box_sup", "relative"]
        _emit(args, "reproduce", _csv(cols, rows))
    else:
        _emit(args, "reproduce", _json({"h": h, "degree": args.degree, "tail_tol": args.tol, "residuals": [r.to_dict() for r in res]}))


def cmd_convergence(args) -> None:
    spec = _spec(args)
    if args.function not in CATALOG:
        raise InputError(f"--function: unknown {args.function!r}; choose from {', '.join(sorted(CATALOG))}")
    _need(args, "h")
    hs = _number_list(str(args.h), "--h")
    if len(hs) < 3:
        raise InputError("--h: need at least 3 values")
    if any(not h > 0 for h in hs) or any(b >= a for a, b in zip(hs, hs[1:])):
        raise InputError("--h: values must be positive and decreasing")
    st = _stencil(args, spec)
    f, env, _ = CATALOG[args.function]
    rep = convergence_study(st, spec, f, hs, envelope=env, tail_tol=args.tol)
    if args.format == "csv":
        d = rep.to_dict()
        extra = "".join(f"# {k}={_json(d[k])}\n" for k in sorted(d) if k not in ("h_values", "sup_errors"))
        body = _csv(["h", "sup_error"], [[h, e] for h, e in zip(d["h_values"], d["sup_errors"])])
        _emit(args, "convergence", extra + body)
    else:
        _emit(args, "convergence", _json(rep.to_dict()))


def cmd_ladder(args) -> None:
    spec = _spec(args)
    st = _stencil(args, spec)
    k = float(st.singularity_order) if args.k is None else _number(args.k, "--k")
    s = _number(args.s_smooth, "--s-smooth")
    if not s < k:
        raise InputError("--s-smooth must be below k")
    if args.radius < 2:
        raise InputError("--radius must be >= 2")
    lc = ladder_check(st, spec, k, s, args.radius)
    if args.format == "csv":
        rows = [[R, inc, ps] for R, inc, ps in zip(range(2, args.radius + 1), lc.increments, lc.partial_sums)]
        head = f"# converged={_json(lc.converged)} decay={lc.decay}\n"
        _emit(args, "ladder", head + _csv(["radius", "increment", "partial_sum"], rows))
    else:
        _emit(args, "ladder", _json(lc.to_dict()))


COMMANDS = {
    "transform": cmd_transform,
    "asymptotics": cmd_asymptotics,
    "classify": cmd_classify,
    "stencil": cmd_stencil,
    "reproduce": cmd_reproduce,
    "convergence": cmd_convergence,
    "ladder": cmd_ladder,
}

CATALOG_HELP = "test functions: " + "; ".join(f"{k} = {v[2]}" for k, v in sorted(CATALOG.items()))


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--spec", help="RBF spec: JSON file or inline JSON object")
    common.add_argument("--config", help="JSON file of option defaults (flags win)")
    common.add_argument("--out", help="output file (default stdout)")
    common.add_argument("--format", choices=["json", "csv"], default="json")
    common.add_argument("--require-feasible", action="store_true", help="exit 2 unless the regime admits a finite stencil")

    p = _Parser(
        prog="quasirbf",
        description="Generalized-RBF quasi-interpolation: transforms, expansions, stencils and error studies.",
        epilog=CATALOG_HELP + ". Exit codes: 0 ok, 2 invalid input, 3 numerical failure. "
        "QUASIRBF_THREADS caps parallelism.",
    )
    p.add_argument("--version", action="version", version=f"quasirbf {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("transform", parents=[common], help="phi_hat(s) on a list of s")
    t.add_argument("--s", help="comma-separated s values (fractions allowed)")
    t.add_argument("--tol", type=float, default=1e-10)
    t.add_argument("--oracle", action="store_true", help="add the damped-quadrature oracle and relative deviation")
    t.add_argument("--closed-form", action="store_true", help="add the Bessel closed form (tps, d = 1)")

    a = sub.add_parser("asymptotics", parents=[common], help="small-s expansion of phi_hat")
    a.add_argument("--up-to-power", help="keep terms with power below this")

    sub.add_parser("classify", parents=[common], help="regime and stencil feasibility")

    st = sub.add_parser("stencil", parents=[common], help="quasi-Lagrange stencil")
    st.add_argument("--support-radius", type=int, help="max-norm radius (default: smallest that works)")

    def with_stencil(q):
        q.add_argument("--stencil", help="stencil JSON file or inline JSON (default: build from --spec)")
        q.add_argument("--support-radius", type=int)

    r = sub.add_parser("reproduce", parents=[common], help="polynomial reproduction residuals")
    with_stencil(r)
    r.add_argument("--degree", type=int)
    r.add_argument("--h")
    r.add_argument("--box-margin", type=int)
    r.add_argument("--tol", type=float, default=1e-7, help="tail budget relative to sup|p|")

    c = sub.add_parser("convergence", parents=[common], help="sup-error study over h", epilog=CATALOG_HELP)
    with_stencil(c)
    c.add_argument("--function", default="gaussian-bump", help=CATALOG_HELP)
    c.add_argument("--h", help="comma-separated decreasing h values, e.g. 1/4,1/8,1/16")
    c.add_argument("--tol", type=float, default=1e-10)

    lad = sub.add_parser("ladder", parents=[common], help="c_beta table and weighted-sum check")
    with_stencil(lad)
    lad.add_argument("--k", help="candidate order (default: singularity order)")
    lad.add_argument("--s-smooth", default="0")
    lad.add_argument("--radius", type=int, default=6)
    return p


def _apply_config(parser, argv):
    args = parser.parse_args(argv)
    if not args.config:
        return args
    cfg = _load_json(args.config, "config")
    if not isinstance(cfg, dict):
        raise InputError("--config must hold a JSON object")
    given = {a.split("=")[0] for a in argv if a.startswith("--")}
    for key, val in cfg.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            raise InputError(f"--config: unknown option {key!r}")
        if "--" + attr.replace("_", "-") in given:
            continue
        if attr in ("spec", "stencil") and not isinstance(val, str):
            val = json.dumps(val)
        setattr(args, attr, val)
    return args


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        if getattr(args, "tol", 1.0) is not None and not getattr(args, "tol", 1.0) > 0:
            raise InputError("--tol must be positive")
        COMMANDS[args.command](args)
    except (InputError, SpecError) as exc:
        print(f"quasirbf: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (
        NoConvergenceError,
        DegeneratePoleError,
        StencilError,
        InsufficientMarginError,
        LimitDivergenceError,
        LimitNotStableError,
        ArithmeticError,
    ) as exc:
        print(f"quasirbf: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"quasirbf: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    os.environ.setdefault("PYTHONHASHSEED", "0")
    sys.exit(main())
