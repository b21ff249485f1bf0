"""Command-line front end: analyze, falsify, sensitivity, simulate, trends.

Exit status: 0 on success, 1 for data/estimation errors, 2 for usage errors.
Output never contains colour codes, so NO_COLOR needs no special handling.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from typing import Sequence

from . import __version__
from .bootstrap import BootstrapConfig, all_intervals, run_bootstrap
from .data import PanelDataset, load_long_csv
from .diagnostics import (
    SensitivityParams,
    breakeven,
    falsification_test,
    sensitivity_bounds,
    sensitivity_ci,
    trend_export,
    write_trend_csv,
)
from .estimators import MAX_HORIZON, bounding_sums
from .exceptions import BracketError
from .simulation import (
    DGPConfig,
    monte_carlo,
    reports_to_csv,
    reports_to_json,
    reports_to_text,
)

SCHEMA_VERSION = 1


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _time_map(text: str) -> dict[int, int]:
    mapping = {}
    for item in text.split(","):
        try:
            cal, idx = item.split(":")
            mapping[int(cal)] = int(idx)
        except ValueError:
            raise argparse.ArgumentTypeError(
                f"time map entries look like CALENDAR:INDEX, got {item!r}"
            )
    if sorted(mapping.values()) != list(range(1, len(mapping) + 1)):
        raise argparse.ArgumentTypeError("time map must send calendar times onto 1..T exactly once")
    return mapping


def _add_common(p: argparse.ArgumentParser, data: bool = True) -> None:
    if data:
        p.add_argument("--input", "-i", required=True,
                       help="long CSV (unit_id,group,time,outcome); '-' reads stdin")
        p.add_argument("--time-map", type=_time_map, default=None,
                       help="remap calendar times, e.g. 1974:1,1975:2")
        p.add_argument("--drop-unmapped", action="store_true",
                       help="discard rows whose time is not in --time-map (default: error)")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("-B", "--replicates", dest="B", type=int, default=300)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--jobs", type=int, default=1, help="parallel workers; never changes results")
    p.add_argument("--format", choices=("json", "csv", "text"), default="json")
    p.add_argument("--output", "-o", default="-", help="output path ('-' for stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bracketdid",
        description="DID bracketing bounds with two control groups and union-bounds bootstrap CIs.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="bounds and confidence intervals for ATT_t")
    _add_common(p)
    p.add_argument("--t", type=_int_list, default=None,
                   help="horizons, comma-separated (default: 2..T)")
    p.add_argument("--compare", action="store_true",
                   help="also report the union and percentile comparison intervals")

    p = sub.add_parser("falsify", help="falsification test of monotone trends on a prior period pair")
    _add_common(p)
    p.add_argument("--t2-star", type=int, required=True,
                   help="later period of the pre-study pair (t2_star - 1, t2_star)")
    p.add_argument("--se", choices=("bootstrap", "analytic"), default="bootstrap")

    p = sub.add_parser("sensitivity", help="intervals under bounded violations of monotone trends")
    _add_common(p)
    p.add_argument("--t", type=int, required=True, help="horizon")
    p.add_argument("--gamma", type=_float_list, default=None,
                   help="gamma_2..gamma_t, comma-separated (default zeros)")
    p.add_argument("--delta", type=_float_list, default=None,
                   help="delta_2..delta_t, comma-separated (default zeros)")

    p = sub.add_parser("simulate", help="Monte Carlo coverage study")
    _add_common(p, data=False)
    p.add_argument("--case", choices=("1", "2", "all"), default="all")
    p.add_argument("--runs", type=int, default=1000)
    p.add_argument("--N", type=int, default=1000)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--fixed-counts", action="store_true",
                   help="fixed group sizes instead of i.i.d. group draws")

    p = sub.add_parser("trends", help="group means and relative means per period (CSV)")
    p.add_argument("--input", "-i", required=True)
    p.add_argument("--time-map", type=_time_map, default=None)
    p.add_argument("--drop-unmapped", action="store_true")
    p.add_argument("--output", "-o", default="-")
    return parser


def _check_args(args, parser) -> None:
    if hasattr(args, "alpha") and not 0 < args.alpha < 1:
        parser.error("--alpha must lie in (0, 1)")
    if hasattr(args, "B") and args.B < 2:
        parser.error("-B must be at least 2")
    if hasattr(args, "seed") and not 0 <= args.seed < 2**64:
        parser.error("--seed must be in [0, 2**64)")
    if hasattr(args, "jobs") and args.jobs < 1:
        parser.error("--jobs must be >= 1")
    if args.command == "simulate":
        if args.runs < 1:
            parser.error("--runs must be >= 1")
        if args.N < 1:
            parser.error("--N must be >= 1")
        if args.sigma < 0:
            parser.error("--sigma must be >= 0")
    if args.command == "sensitivity":
        for name in ("gamma", "delta"):
            vals = getattr(args, name)
            if vals is not None:
                if len(vals) != args.t - 1:
                    parser.error(f"--{name} needs {args.t - 1} values for t={args.t}")
                if any(v < 0 or not math.isfinite(v) for v in vals):
                    parser.error(f"--{name} values must be finite and >= 0")


# ---------------------------------------------------------------------------
# input / output helpers
# ---------------------------------------------------------------------------

def remap_times(raw: bytes, mapping: dict[int, int], drop_unmapped: bool) -> bytes:
    """Rewrite the time column of a long CSV through ``mapping``."""
    text = raw.decode("utf-8-sig")
    rows = list(csv.reader(io.StringIO(text, newline="")))
    if not rows:
        return raw
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(rows[0])
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 4:
            raise BracketError(f"line {lineno}: expected 4 fields, got {len(row)}")
        try:
            cal = int(row[2])
        except ValueError:
            raise BracketError(f"line {lineno}: time {row[2]!r} is not an integer") from None
        if cal not in mapping:
            if drop_unmapped:
                continue
            raise BracketError(f"line {lineno}: time {cal} not in --time-map "
                               "(pass --drop-unmapped to discard such rows)")
        w.writerow([row[0], row[1], mapping[cal], row[3]])
    return out.getvalue().encode("utf-8")


def _load(args) -> PanelDataset:
    if args.input == "-":
        raw = sys.stdin.buffer.read()
    else:
        with open(args.input, "rb") as fh:
            raw = fh.read()
    if args.time_map:
        raw = remap_times(raw, args.time_map, args.drop_unmapped)
    return load_long_csv(io.BytesIO(raw))


def _emit(text: str, path: str) -> None:
    if path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _dumps(payload: dict) -> str:
    # floats go out via repr (shortest round-trip form); NaN becomes null
    return json.dumps(_clean(payload), indent=2, allow_nan=False) + "\n"


def _clean(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def _num(x) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else repr(float(x))


def _interval_dict(ci) -> dict:
    d = {"kind": ci.kind, "lower": ci.lower, "upper": ci.upper, "length": ci.length,
         "flags": list(ci.flags)}
    if ci.internals is not None:
        d["omega_hat_plus"] = ci.internals.omega_hat_plus
        d["rho"] = ci.internals.rho
        d["p_hat"] = ci.internals.p_hat
    return d


def _meta(command: str, args, ds: PanelDataset | None = None) -> dict:
    meta = {"schema": f"bracketdid.{command}/{SCHEMA_VERSION}", "version": __version__}
    if ds is not None:
        meta.update(input=args.input, N=ds.N, T=ds.T)
    meta.update(alpha=args.alpha, B=args.B, seed=args.seed)
    return meta


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _horizon_results(ds, horizons, cfg, jobs):
    for t in horizons:
        if not 2 <= t <= min(ds.T, MAX_HORIZON):
            raise UsageError(f"horizon t={t} outside 2..{min(ds.T, MAX_HORIZON)}")
    out = []
    for t in horizons:
        est = bounding_sums(ds, t)
        out.append((est, all_intervals(est, run_bootstrap(ds, t, cfg, jobs), cfg, ds.N)))
    return out


def cmd_analyze(args) -> str:
    ds = _load(args)
    horizons = args.t or list(range(2, ds.T + 1))
    cfg = BootstrapConfig(args.B, args.alpha, args.seed)
    results = _horizon_results(ds, horizons, cfg, args.jobs)
    kinds = ("set", "parameter", "union", "percentile") if args.compare else ("set", "parameter")

    if args.format == "json":
        payload = _meta("analyze", args, ds)
        payload["horizons"] = [
            {
                "t": est.t,
                "lower": est.lower,
                "upper": est.upper,
                "width": est.width,
                "tau_a": [float(v) for v in est.taus.tau_a],
                "tau_b": [float(v) for v in est.taus.tau_b],
                "sums": [
                    {"assignment": "".join(g.value for g in a), "value": float(v)}
                    for a, v in zip(est.assignments, est.sums)
                ],
                "intervals": {k: _interval_dict(cis[k]) for k in kinds},
            }
            for est, cis in results
        ]
        return _dumps(payload)

    if args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("t", "kind", "lower", "upper", "length", "omega_hat_plus", "rho", "p_hat",
                    "flags", "alpha", "B", "seed"))
        for est, cis in results:
            w.writerow((est.t, "bounds", _num(est.lower), _num(est.upper), _num(est.width),
                        "", "", "", "", _num(args.alpha), args.B, args.seed))
            for k in kinds:
                ci = cis[k]
                it = ci.internals
                w.writerow((est.t, k, _num(ci.lower), _num(ci.upper), _num(ci.length),
                            _num(it.omega_hat_plus) if it else "",
                            _num(it.rho) if it else "",
                            _num(it.p_hat) if it else "",
                            ";".join(ci.flags), _num(args.alpha), args.B, args.seed))
        return buf.getvalue()

    lines = [f"N={ds.N} T={ds.T} alpha={args.alpha} B={args.B} seed={args.seed}"]
    for est, cis in results:
        lines.append(f"t={est.t}: estimated bounds [{est.lower:.6g}, {est.upper:.6g}]")
        for k in kinds:
            ci = cis[k]
            extra = ""
            if ci.internals is not None:
                it = ci.internals
                rho = "undefined" if it.rho is None else f"{it.rho:.6g}"
                extra = f"  omega+={it.omega_hat_plus:.6g} rho={rho} p_hat={it.p_hat:.6g}"
            flags = f"  flags={','.join(ci.flags)}" if ci.flags else ""
            lines.append(f"  {k:<10} [{ci.lower:.6g}, {ci.upper:.6g}]{extra}{flags}")
    return "\n".join(lines) + "\n"


def cmd_falsify(args) -> str:
    ds = _load(args)
    cfg = BootstrapConfig(args.B, args.alpha, args.seed)
    res = falsification_test(ds, args.t2_star, args.alpha, cfg, se_method=args.se)
    fields = {
        "t2_star": res.t2_star, "p_a_i": res.p_a_i, "p_b_i": res.p_b_i,
        "p_composite": res.p_composite, "reject": res.reject, "z_a": res.z_a, "z_b": res.z_b,
        "se_a": res.se_a, "se_b": res.se_b, "se_method": res.se_method,
    }
    if args.format == "json":
        return _dumps({**_meta("falsify", args, ds), **fields})
    if args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        keys = list(fields) + ["alpha", "B", "seed"]
        w.writerow(keys)
        vals = {**fields, "alpha": args.alpha, "B": args.B, "seed": args.seed}
        w.writerow([_num(v) if isinstance(v, float) else str(v).lower() if isinstance(v, bool)
                    else v for v in (vals[k] for k in keys)])
        return buf.getvalue()
    verdict = "reject" if res.reject else "do not reject"
    return (
        f"falsification on periods ({res.t2_star - 1}, {res.t2_star}), seed={args.seed}\n"
        f"  p_a = {res.p_a_i:.4g}  p_b = {res.p_b_i:.4g}\n"
        f"  composite p-value = {res.p_composite:.4g}  -> {verdict} at alpha={args.alpha}\n"
    )


def cmd_sensitivity(args) -> str:
    ds = _load(args)
    t = args.t
    sp = SensitivityParams(args.gamma or [0.0] * (t - 1), args.delta or [0.0] * (t - 1))
    cfg = BootstrapConfig(args.B, args.alpha, args.seed)
    (est, cis), = _horizon_results(ds, [t], cfg, args.jobs)
    lo, hi = sensitivity_bounds(est, sp)
    entries = []
    for k in ("set", "parameter"):
        base = cis[k]
        shifted = sensitivity_ci(base, sp)
        be = breakeven(base)
        entries.append((k, base, shifted, be))

    if args.format == "json":
        payload = _meta("sensitivity", args, ds)
        payload.update(
            t=t, gammas=list(sp.gammas), deltas=list(sp.deltas),
            bounds={"lower": est.lower, "upper": est.upper},
            sensitivity_bounds={"lower": lo, "upper": hi},
            intervals={
                k: {"base": _interval_dict(base), "shifted": _interval_dict(sh),
                    "breakeven": {"side": be.side, "amount": be.amount, "message": be.message}}
                for k, base, sh, be in entries
            },
        )
        return _dumps(payload)
    if args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("t", "kind", "base_lower", "base_upper", "lower", "upper",
                    "breakeven_side", "breakeven_amount", "alpha", "B", "seed"))
        w.writerow((t, "bounds", _num(est.lower), _num(est.upper), _num(lo), _num(hi),
                    "", "", _num(args.alpha), args.B, args.seed))
        for k, base, sh, be in entries:
            w.writerow((t, k, _num(base.lower), _num(base.upper), _num(sh.lower), _num(sh.upper),
                        be.side or "", _num(be.amount), _num(args.alpha), args.B, args.seed))
        return buf.getvalue()
    lines = [f"t={t} seed={args.seed}: bounds [{est.lower:.6g}, {est.upper:.6g}] -> "
             f"[{lo:.6g}, {hi:.6g}] under sum(delta)={sp.total_delta:.6g}, "
             f"sum(gamma)={sp.total_gamma:.6g}"]
    for k, base, sh, be in entries:
        lines.append(f"  {k:<10} [{base.lower:.6g}, {base.upper:.6g}] -> "
                     f"[{sh.lower:.6g}, {sh.upper:.6g}]; {be.message}")
    return "\n".join(lines) + "\n"


def cmd_simulate(args) -> str:
    cases = {"1": ["case1"], "2": ["case2"], "all": ["case1", "case2"]}[args.case]
    boot = BootstrapConfig(args.B, args.alpha, args.seed)
    reports = []
    for case in cases:
        factory = DGPConfig.case1 if case == "case1" else DGPConfig.case2
        cfg = factory(N=args.N, sigma=args.sigma, fixed_counts=args.fixed_counts)
        reports.append(monte_carlo(cfg, args.runs, boot, jobs=args.jobs))
    if args.format == "json":
        return reports_to_json(reports)
    if args.format == "csv":
        return reports_to_csv(reports)
    return reports_to_text(reports)


def cmd_trends(args) -> str:
    ds = _load(args)
    buf = io.StringIO()
    write_trend_csv(trend_export(ds), buf)
    return buf.getvalue()


COMMANDS = {
    "analyze": cmd_analyze,
    "falsify": cmd_falsify,
    "sensitivity": cmd_sensitivity,
    "simulate": cmd_simulate,
    "trends": cmd_trends,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _check_args(args, parser)
    try:
        text = COMMANDS[args.command](args)
    except UsageError as exc:
        parser.error(str(exc))
    except (BracketError, ValueError, OSError) as exc:
        print(f"bracketdid: error: {exc}", file=sys.stderr)
        return 1
    _emit(text, args.output)
    return 0


if __name__ == "__main__":
    sys.exit(main())
