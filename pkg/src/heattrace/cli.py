"""``heattrace`` command line.

Subcommands: coeff, invariants, trace, fit, boundary, verify.  Exit status
0 on success, 1 when a verification check fails, 2 on configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from fractions import Fraction
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .bridge import DEFAULT_BUDGET, CapacityError, coefficient, parity_vanishes
from .config import RunConfig, config_digest, load_config, parse_config, to_raw
from .exact import as_index_tuple, enumerate_index_tuples, tuple_factorial, tuple_order
from .invariants import assemble_invariant, evaluate_invariant, h2_diagnostic, ibp_canonicalize
from .potential import ConfigurationError, DerivativeCache, sample
from .recurrence import script_i
from .spectral import FitError, ModelError, discretize, duhamel_terms, fit_expansion, trace_diff
from .verify import NumericTolerances, boundary_experiment, report_dict, run_verify

TOOL = "heattrace"

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2


class UsageError(ConfigurationError):
    """Malformed command-line arguments."""


# -- serialisation ------------------------------------------------------------------


def rational(x: Fraction) -> Dict[str, str]:
    x = Fraction(x)
    return {"num": str(x.numerator), "den": str(x.denominator)}


def plain(obj: Any) -> Any:
    """Convert numpy scalars/arrays and non-finite floats into JSON-safe values."""
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, Fraction):
        return rational(obj)
    return obj


def dump_json(obj: Any) -> str:
    return json.dumps(plain(obj), indent=2, allow_nan=False) + "\n"


def fmt_float(x) -> str:
    return repr(float(x))


def dump_csv(header: Sequence[str], rows: Sequence[Sequence[Any]], meta: Dict[str, str]) -> str:
    buf = io.StringIO()
    for key, value in meta.items():
        buf.write(f"# {key}={value}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt_float(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def emit(text: str, out: Optional[str]) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# -- argument helpers -----------------------------------------------------------------


def parse_tuple(spec: str):
    """``"2,0;0,2"`` or ``"[[2,0],[0,2]]"`` -> index tuple."""
    spec = spec.strip()
    try:
        if spec.startswith("["):
            data = json.loads(spec)
        else:
            data = [[int(v) for v in part.split(",")] for part in spec.split(";")]
        alpha = as_index_tuple(data)
    except (ValueError, TypeError, json.JSONDecodeError) as exc:
        raise UsageError(f"malformed tuple {spec!r}: {exc}") from exc
    if any(v < 0 for a in alpha for v in a):
        raise UsageError(f"malformed tuple {spec!r}: negative entry")
    return alpha


def parse_orders(spec: str) -> List[int]:
    """``"2-8"`` (even orders in the range) or an explicit list ``"2,5,6"``."""
    try:
        if "-" in spec:
            lo, hi = (int(v) for v in spec.split("-", 1))
            orders = [m for m in range(lo, hi + 1) if m % 2 == 0]
        else:
            orders = [int(v) for v in spec.split(",")]
    except ValueError as exc:
        raise UsageError(f"malformed order range {spec!r}") from exc
    if not orders or min(orders) < 2:
        raise UsageError("orders must be >= 2")
    return orders


def load(args) -> tuple[RunConfig, dict]:
    if args.config:
        return load_config(args.config)
    return parse_config({}), {}


def meta_for(command: str, cfg: RunConfig, options: Dict[str, Any]) -> Dict[str, str]:
    digest = config_digest({"command": command, "config": to_raw(cfg), "options": plain(options)})
    return {"tool": TOOL, "version": __version__, "config_sha256": digest}


def build_sample(cfg: RunConfig, domain=None):
    domain = domain or cfg.domain.build()
    margin = None if domain.periodic else domain.margin
    return domain, sample(cfg.potential.build(), domain.grid, margin)


# -- subcommands ----------------------------------------------------------------------


def cmd_coeff(args) -> int:
    cfg, _ = load(args)
    budget = args.budget
    if args.tuple:
        tuples = [parse_tuple(s) for s in args.tuple]
    elif args.order is not None:
        tuples = [tuple(t) for j in args.j for t in enumerate_index_tuples(j, args.n, args.order)]
    else:
        raise UsageError("give --tuple or --order")
    rows = []
    for alpha in tuples:
        c = coefficient(alpha, budget=budget)
        row = {
            "tuple": [list(a) for a in alpha],
            "j": len(alpha),
            "n": len(alpha[0]),
            "order": tuple_order(alpha),
            "value": c.value,
            "power": c.power,
            "parity": parity_vanishes(alpha),
        }
        if len(alpha) == 2:
            cross = script_i(alpha[0], alpha[1]).value / tuple_factorial(alpha)
            row["recurrence"] = cross
            row["recurrence_agrees"] = cross == c.value
        rows.append(row)
    options = {"tuples": [r["tuple"] for r in rows], "budget": budget}
    meta = meta_for("coeff", cfg, options)
    if args.format == "json":
        emit(dump_json({"meta": meta, "coefficients": rows}), args.out)
    elif args.format == "csv":
        table = []
        for r in rows:
            rec = r.get("recurrence")
            table.append([
                json.dumps(r["tuple"], separators=(",", ":")), r["j"], r["n"],
                r["value"].numerator, r["value"].denominator, r["power"],
                "parity" if r["parity"] else "",
                "" if rec is None else f"{rec.numerator}/{rec.denominator}",
            ])
        header = ["tuple", "j", "n", "num", "den", "power", "flag", "recurrence"]
        emit(dump_csv(header, table, meta), args.out)
    else:
        lines = []
        for r in rows:
            tag = "  parity" if r["parity"] else ""
            if "recurrence" in r:
                tag += "  recurrence " + ("ok" if r["recurrence_agrees"] else "MISMATCH")
            spec = ";".join(",".join(str(v) for v in a) for a in r["tuple"])
            lines.append(f"{spec:<24} {r['value']!s:>12} * (4pi)^(-{r['power']}/2){tag}")
        emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_invariants(args) -> int:
    cfg, _ = load(args)
    n = args.n if args.n is not None else cfg.invariants.n
    orders = parse_orders(args.orders) if args.orders else list(cfg.invariants.orders)
    budget = args.budget if args.budget is not None else cfg.invariants.budget
    for order in orders:
        if order > budget:
            raise CapacityError(f"order {order} exceeds the budget {budget}")
    with_potential = bool(cfg.potential.bumps)
    V = cache = None
    if with_potential:
        if cfg.domain.n != n:
            raise ConfigurationError(f"domain is {cfg.domain.n}-dimensional, invariants requested for n={n}")
        _, V = build_sample(cfg)
        cache = DerivativeCache(V)
    entries = []
    p8 = None
    for order in orders:
        raw = assemble_invariant(order, n, budget)
        entry: Dict[str, Any] = {"order": order, "dimension": n}
        if order % 2:
            entry["zero"] = True
            entry["reason"] = "odd order"
            canon = raw
        else:
            canon = ibp_canonicalize(raw)
            entry["zero"] = canon.is_zero()
        entry["canonical"] = dict(canon.to_dict(), order=order)
        entry["raw"] = dict(raw.to_dict(), order=order)
        entry["text"] = str(canon)
        if V is not None:
            entry["value"] = evaluate_invariant(canon, V, cache)
        if order == 8:
            p8 = canon
        entries.append(entry)
    out: Dict[str, Any] = {
        "meta": meta_for("invariants", cfg, {"orders": orders, "n": n, "budget": budget}),
        "invariants": entries,
    }
    if V is not None and p8 is not None:
        out["h2_diagnostic"] = h2_diagnostic(V, p8).to_dict()
    emit(dump_json(out), args.out)
    return EXIT_OK


def _model(cfg: RunConfig, eigenvectors: bool = False):
    domain, V = build_sample(cfg)
    return discretize(domain, cfg.coefficient.build(), V, cfg.scheme, eigenvectors)


def cmd_trace(args) -> int:
    cfg, _ = load(args)
    j_max = args.duhamel if args.duhamel is not None else cfg.duhamel.j_max
    if j_max not in (0, 1, 2, 3):
        raise UsageError("--duhamel must be between 0 and 3")
    model = _model(cfg, eigenvectors=j_max > 0)
    t = cfg.t_grid.build(cfg.diffusion_scale)
    series = trace_diff(model, t)
    rows = []
    for ti, zi in zip(series.t, series.z):
        row = [float(ti), float(zi)]
        if j_max:
            terms = duhamel_terms(model, float(ti), j_max, cfg.duhamel.cutoff, cfg.duhamel.tolerance)
            row.extend(terms.values)
        rows.append(row)
    header = ["t", "z"] + [f"A{j}" for j in range(1, j_max + 1)]
    meta = meta_for("trace", cfg, {"duhamel": j_max})
    meta["scheme"] = model.scheme
    emit(dump_csv(header, rows, meta), args.out)
    return EXIT_OK


def _reference_invariants(cfg: RunConfig, report, V) -> List[Dict[str, Any]]:
    """Exact invariants for integer powers, when the operator is the plain Laplacian."""
    c = cfg.coefficient
    if c.kind != "constant" or c.value != 1.0:
        return []
    cache = DerivativeCache(V)
    out = []
    for p, est in zip(report.powers, report.estimates):
        if p.denominator != 1 or not 1 <= p <= 4:
            continue
        ref = evaluate_invariant(ibp_canonicalize(assemble_invariant(2 * int(p), V.n)), V, cache)
        out.append({"power": str(p), "fitted": est, "invariant": ref,
                    "relative_error": abs(est / ref - 1) if ref else None})
    return out


def cmd_fit(args) -> int:
    cfg, _ = load(args)
    model = _model(cfg)
    t = cfg.t_grid.build(cfg.diffusion_scale)
    series = trace_diff(model, t)
    window = tuple(cfg.fit.window) if cfg.fit.window else None
    powers = [Fraction(str(p)) for p in cfg.fit.powers]
    report = fit_expansion(series, model.domain.n, powers, window, cfg.fit.condition_threshold)
    out = {
        "meta": dict(meta_for("fit", cfg, {}), scheme=model.scheme),
        "fit": report.to_dict(),
        "reference": _reference_invariants(cfg, report, model.potential),
    }
    emit(dump_json(out), args.out)
    return EXIT_OK


def cmd_boundary(args) -> int:
    cfg, _ = load(args)
    margins = list(cfg.boundary.margins) or [0.5, 1.0]
    if cfg.domain.n != 1:
        raise ConfigurationError("boundary experiments are one-dimensional")
    tg = cfg.boundary.t_scaled
    if tg.values or tg.spacing != "log":
        raise ConfigurationError("boundary.t_scaled must be a log grid given by start/stop/count")
    length = cfg.domain.lengths[0]
    reports = [
        boundary_experiment(m, length, cfg.domain.points, cfg.boundary.amplitude,
                            (tg.start, tg.stop, tg.count), cfg.boundary.noise_factor)
        for m in margins
    ]
    meta = meta_for("boundary", cfg, {"margins": margins})
    if args.format == "csv":
        rows = []
        for m, r in zip(margins, reports):
            for k in range(r.t.size):
                rows.append([float(m), float(r.t[k]), float(r.gap[k]), float(r.noise_floor[k]),
                             int(r.resolved[k])])
        emit(dump_csv(["margin", "t", "gap", "noise_floor", "resolved"], rows, meta), args.out)
    else:
        summary = [
            {"margin": m, "slope": r.slope, "intercept": r.intercept, "monotone": r.monotone,
             "resolved_points": int(r.resolved.sum()), "t": r.t, "gap": r.gap}
            for m, r in zip(margins, reports)
        ]
        emit(dump_json({"meta": meta, "experiments": summary}), args.out)
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg, _ = load(args)
    v = cfg.verify
    tol = NumericTolerances(tuple(v.fit_relative), v.duhamel_slack, v.boundary_ratio_tolerance)
    try:
        checks = run_verify(args.numeric, args.table, tol)
    except (OSError, KeyError, ValueError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot use reference table: {exc}") from exc
    options = {"numeric": args.numeric, "table": None if args.table is None else "custom"}
    report = report_dict(checks, meta_for("verify", cfg, options))
    emit(dump_json(report), args.out)
    for c in checks:
        if not c.passed:
            print(f"FAILED {c.name}", file=sys.stderr)
    return EXIT_OK if report["summary"]["passed"] else EXIT_CHECK_FAILED


# -- parser ------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or JSON run configuration")
    common.add_argument("--out", help="write output here instead of stdout")

    parser = argparse.ArgumentParser(prog=TOOL, description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"{TOOL} {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("coeff", parents=[common], help="exact chain coefficients")
    p.add_argument("--tuple", action="append",
                   help="index tuple, e.g. '2;2' or '[[2,0],[0,2]]' (repeatable)")
    p.add_argument("--order", type=int, help="sweep all tuples with this total order")
    p.add_argument("--j", type=int, nargs="+", default=[2], help="slot counts for --order")
    p.add_argument("--n", type=int, default=1, help="dimension for --order")
    p.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    p.add_argument("--format", choices=("text", "csv", "json"), default="text")
    p.set_defaults(func=cmd_coeff)

    p = sub.add_parser("invariants", parents=[common], help="assemble heat invariants")
    p.add_argument("--orders", help="even orders in a range '2-8', or a list '2,5,6'")
    p.add_argument("--n", type=int)
    p.add_argument("--budget", type=int)
    p.set_defaults(func=cmd_invariants)

    p = sub.add_parser("trace", parents=[common], help="trace difference series as CSV")
    p.add_argument("--duhamel", type=int, help="also emit Duhamel terms A_1..A_j (j <= 3)")
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("fit", parents=[common], help="fit small-time expansion coefficients")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("boundary", parents=[common], help="interval vs circle trace gap")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_boundary)

    p = sub.add_parser("verify", parents=[common], help="run verification suites")
    p.add_argument("--numeric", action="store_true", help="include spectral-lab checks")
    p.add_argument("--table", help="reference coefficient table (JSON)")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, CapacityError, FitError, ModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
