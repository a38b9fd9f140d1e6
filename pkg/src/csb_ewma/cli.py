"""Command-line interface: live monitoring of CSV data and the simulation studies.

Exit codes: 0 success, 2 input/validation error, 3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from dataclasses import dataclass

import numpy as np

from .chart import (ChartParams, ChartState, CSBEWMAChart, dichotomize, variance_exact_direct,
                    variance_sequence)
from .distributions import FAMILIES, CONTINUOUS_FAMILIES
from .optimizer import (DEFAULTS, DELTA_GRID, arl1_profile, cv_across_distributions, frange,
                        grid_search)
from .simulation import ARL0_CAP, ARL1_CAP, estimate_arl, make_spec, simulate_paths

EXIT_OK, EXIT_INPUT, EXIT_INVARIANT = 0, 2, 3

MONITOR_COLUMNS = ["t", "c", "q", "w", "r", "var_r", "lcl", "ucl", "signal"]
ARL_COLUMNS = ["lambda", "limit", "k", "delta", "family", "arl", "sd", "se",
               "n_reps", "n_censored", "cap", "seed"]
CV_COLUMNS = ["delta", "mean_arl1", "sd_arl1", "cv", "n_reps", "cap", "seed"]

# built-in defaults; lambda and limit fall back to the per-target recommendation
DEFAULT_VALUES = {
    "target": 370.0,
    "streams": 10,
    "p0": 0.5,
    "median0": 0.0,
    "r0": 0.0,
    "seed": 0,
    "workers": 1,
    "family": "direct",
    "lambda_min": 0.10, "lambda_max": 0.90, "lambda_step": 0.025,
    "limit_min": 1.00, "limit_max": 2.50, "limit_step": 0.025,
    "t_max": 512,
    "lambdas": "0.1,0.2,0.5,0.9,1.0",
}


class InputError(Exception):
    """Malformed user input; reported with exit code 2."""


class InvariantError(Exception):
    """An internal consistency check failed; reported with exit code 3."""


@dataclass
class RunConfig:
    values: dict

    def get(self, key, default=None):
        v = self.values.get(key)
        return default if v is None else v


def read_config_file(path: str) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InputError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def _fmt(x, raw: bool) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return repr(float(x)) if raw else f"{float(x):.6g}"


def write_csv(rows, columns, out, raw: bool = False):
    w = csv.writer(out, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row[c], raw) for c in columns])


# ---------------------------------------------------------------- monitor


def read_long_csv(fh, median0: float, streams: int | None = None) -> tuple[list[int], int]:
    """Per-period exceedance counts and stream count from a ``t,stream,value`` CSV.

    The whole file is validated before any count is returned. Every period must
    supply one value for each stream seen in the first period, with periods
    numbered consecutively from 1 in nondecreasing order.
    """
    reader = csv.reader(fh)
    header = next(reader, None)
    if header is None or [h.strip().lower() for h in header] != ["t", "stream", "value"]:
        raise InputError("line 1: header must be 't,stream,value'")
    periods: list[dict[str, int]] = []
    starts: list[int] = []
    labels: list[str] | None = None

    def close_period():
        nonlocal labels
        if not periods:
            return
        seen = periods[-1]
        t = len(periods)
        if labels is None:
            labels = sorted(seen)
            if streams is not None and len(labels) != streams:
                raise InputError(f"line {starts[-1]}: period 1 has {len(labels)} streams, "
                                 f"expected {streams}")
        elif sorted(seen) != labels:
            missing = sorted(set(labels) - set(seen))
            extra = sorted(set(seen) - set(labels))
            what = f"missing streams {missing}" if missing else f"unexpected streams {extra}"
            raise InputError(f"line {starts[-1]}: period {t} {what}")

    current_t = 0
    for lineno, rec in enumerate(reader, 2):
        if not rec or all(not f.strip() for f in rec):
            continue
        if len(rec) != 3:
            raise InputError(f"line {lineno}: expected 3 fields, got {len(rec)}")
        t_raw, stream, v_raw = (f.strip() for f in rec)
        try:
            t = int(t_raw)
        except ValueError:
            raise InputError(f"line {lineno}: period '{t_raw}' is not an integer") from None
        try:
            y = float(v_raw)
        except ValueError:
            raise InputError(f"line {lineno}: value '{v_raw}' is not a number") from None
        if not math.isfinite(y):
            raise InputError(f"line {lineno}: non-finite value '{v_raw}'")
        if t < current_t:
            raise InputError(f"line {lineno}: period {t} after period {current_t}")
        if t > current_t:
            close_period()
            if t != current_t + 1:
                raise InputError(f"line {lineno}: period {t} follows {current_t}; "
                                 f"periods must be consecutive from 1")
            current_t = t
            periods.append({})
            starts.append(lineno)
        if stream in periods[-1]:
            raise InputError(f"line {lineno}: duplicate value for stream '{stream}' in period {t}")
        periods[-1][stream] = dichotomize(y, median0)
    close_period()
    if not periods:
        raise InputError("no data rows")
    return [sum(p.values()) for p in periods], len(labels)


def _check_state(s: ChartState, k: int, lam: float, r0: float):
    if not 0 <= s.Q <= k * s.t:
        raise InvariantError(f"t={s.t}: Q={s.Q} outside [0, {k * s.t}]")
    if not (s.lcl <= s.ucl and math.isfinite(s.var_r) and s.var_r >= 0):
        raise InvariantError(f"t={s.t}: inconsistent limits")
    if s.var_r > (1.0 - (1.0 - lam) ** s.t) ** 2 * (1 + 1e-9) + 1e-15:
        raise InvariantError(f"t={s.t}: variance {s.var_r} above its bound")


def monitor_records(counts, params: ChartParams) -> list[dict]:
    chart = CSBEWMAChart(params)
    rows = []
    for c in counts:
        s = chart.update_count(c)
        _check_state(s, params.k, params.lam, params.r0)
        rows.append({"t": s.t, "c": c, "q": s.Q, "w": s.W, "r": s.r, "var_r": s.var_r,
                     "lcl": s.lcl, "ucl": s.ucl, "signal": s.r < s.lcl or s.r > s.ucl})
    return rows


def cmd_monitor(cfg: RunConfig, out) -> int:
    lam, limit = _lambda_limit(cfg)
    median0 = float(cfg.get("median0"))
    streams = cfg.get("streams")
    with open(cfg.get("input"), newline="", encoding="utf-8") as fh:
        counts, k = read_long_csv(fh, median0, int(streams) if streams is not None else None)
    params = ChartParams(k, lam, limit, float(cfg.get("p0")), median0, float(cfg.get("r0")))
    records = monitor_records(counts, params)
    raw = bool(cfg.get("raw", False))
    output = cfg.get("output")
    if output:
        with open(output, "w", newline="", encoding="utf-8") as fh:
            write_csv(records, MONITOR_COLUMNS, fh, raw)
        msg_out = out
    else:
        write_csv(records, MONITOR_COLUMNS, out, raw)
        msg_out = sys.stderr
    first = next((r["t"] for r in records if r["signal"]), None)
    if first is None:
        print(f"no signal in {len(records)} periods", file=msg_out)
    else:
        print(f"signal at t={first}", file=msg_out)
    return EXIT_OK


# ---------------------------------------------------------------- simulation commands


def _target(cfg: RunConfig) -> float:
    target = float(cfg.get("target"))
    if target <= 0:
        raise InputError("--target must be positive")
    return target


def _lambda_limit(cfg: RunConfig) -> tuple[float, float]:
    target = _target(cfg)
    lam0, limit0 = DEFAULTS.get(int(round(target)), DEFAULTS[370])
    lam = float(cfg.get("lambda", lam0))
    limit = float(cfg.get("limit", limit0))
    return lam, limit


def _params(cfg: RunConfig) -> ChartParams:
    lam, limit = _lambda_limit(cfg)
    try:
        return ChartParams(int(cfg.get("streams")), lam, limit, float(cfg.get("p0")),
                           float(cfg.get("median0")), float(cfg.get("r0")))
    except ValueError as e:
        raise InputError(str(e)) from None


def _int(cfg, key, minimum=1) -> int:
    v = int(cfg.get(key))
    if v < minimum:
        raise InputError(f"--{key.replace('_', '-')} must be >= {minimum}")
    return v


def _floats(v) -> list[float]:
    if isinstance(v, (list, tuple)):
        return [float(x) for x in v]
    return [float(x) for x in str(v).replace(",", " ").split()]


def _families(v) -> list[str]:
    fams = v if isinstance(v, (list, tuple)) else str(v).replace(",", " ").split()
    for f in fams:
        if f not in FAMILIES:
            raise InputError(f"unknown family '{f}'; choose from {', '.join(FAMILIES)}")
    return list(fams)


def _arl_row(params, delta, family, s) -> dict:
    return {"lambda": params.lam, "limit": params.limit, "k": params.k, "delta": delta,
            "family": family, "arl": s.arl, "sd": s.sd, "se": s.se, "n_reps": s.n_reps,
            "n_censored": s.n_censored, "cap": s.cap, "seed": s.seed}


def cmd_arl0(cfg: RunConfig, out) -> int:
    params = _params(cfg)
    reps = _int(cfg, "reps")
    cap = _int(cfg, "cap")
    s = estimate_arl(params, 0.0, "direct", reps, cap, int(cfg.get("seed")), int(cfg.get("workers")))
    write_csv([_arl_row(params, 0.0, "direct", s)], ARL_COLUMNS, out, bool(cfg.get("raw")))
    return EXIT_OK


def cmd_arl1(cfg: RunConfig, out) -> int:
    params = _params(cfg)
    reps, cap = _int(cfg, "reps"), _int(cfg, "cap")
    deltas = _floats(cfg.get("delta"))
    families = _families(cfg.get("family"))
    specs = []
    for family in families:
        for delta in deltas:
            try:
                specs.append((family, delta, make_spec(family, delta, params.p0)))
            except ValueError as e:
                raise InputError(str(e)) from None
    rows = []
    for family, delta, spec in specs:
        s = estimate_arl(params, delta, family, reps, cap, int(cfg.get("seed")),
                         int(cfg.get("workers")), spec=spec)
        rows.append(_arl_row(params, delta, family, s))
    write_csv(rows, ARL_COLUMNS, out, bool(cfg.get("raw")))
    return EXIT_OK


def cmd_optimize(cfg: RunConfig, out) -> int:
    target = _target(cfg)
    lambdas = frange(float(cfg.get("lambda_min")), float(cfg.get("lambda_max")),
                     float(cfg.get("lambda_step")))
    limits = frange(float(cfg.get("limit_min")), float(cfg.get("limit_max")),
                    float(cfg.get("limit_step")))
    if not lambdas or not limits or not all(0 < x <= 1 for x in lambdas) or min(limits) <= 0:
        raise InputError("invalid lambda or limit grid")
    k = _int(cfg, "streams")
    rows = grid_search(target, lambdas, limits, k, _int(cfg, "reps"), int(cfg.get("seed")),
                       _int(cfg, "cap"), int(cfg.get("workers")),
                       per_bucket=not cfg.get("all_lambdas", False))
    table = [{"target": target, "lambda": r.lam, "limit": r.limit, "k": r.k, "delta": 0.0,
              "family": "direct", "arl": r.achieved_arl0, "sd": r.sd, "se": r.se,
              "n_reps": r.n_reps, "n_censored": r.n_censored, "cap": r.cap, "seed": r.seed}
             for r in rows]
    write_csv(table, ["target"] + ARL_COLUMNS, out, bool(cfg.get("raw")))
    return EXIT_OK


def cmd_cv(cfg: RunConfig, out) -> int:
    params = _params(cfg)
    reps, cap, seed = _int(cfg, "reps"), _int(cfg, "cap"), int(cfg.get("seed"))
    deltas = _floats(cfg.get("delta"))
    if any(not 0 < d <= 0.5 for d in deltas):
        raise InputError("--delta values must lie in (0, 0.5]")
    cells = arl1_profile([(params.lam, params.limit)], deltas, CONTINUOUS_FAMILIES, reps, seed,
                         params.k, cap, int(cfg.get("workers")))
    raw = bool(cfg.get("raw"))
    if cfg.get("cells"):
        with open(cfg.get("cells"), "w", newline="", encoding="utf-8") as fh:
            write_csv([{"lambda": c.lam, "limit": c.limit, "k": c.k, "delta": c.delta,
                        "family": c.family, "arl": c.arl1, "sd": c.sd, "se": c.se,
                        "n_reps": c.n_reps, "n_censored": c.n_censored, "cap": c.cap,
                        "seed": c.seed} for c in cells], ARL_COLUMNS, fh, raw)
    rows = [{"delta": r.delta, "mean_arl1": r.mean_arl1, "sd_arl1": r.sd_arl1, "cv": r.cv,
             "n_reps": reps, "cap": cap, "seed": seed} for r in cv_across_distributions(cells)]
    write_csv(rows, CV_COLUMNS, out, raw)
    return EXIT_OK


def validate_variance(lambdas, t_max: int) -> list[dict]:
    """Recurrence vs double sum for every t <= t_max."""
    rows = []
    for lam in lambdas:
        fast = variance_sequence(lam, t_max)
        direct = np.array([variance_exact_direct(lam, t) for t in range(1, t_max + 1)])
        rel = float(np.max(np.abs(fast - direct) / direct))
        t = np.arange(1, t_max + 1)
        bound_ok = bool(np.all(direct <= (1.0 - (1.0 - lam) ** t) ** 2 * (1 + 1e-12)))
        rows.append({"lambda": lam, "t_max": t_max, "var_t_max": float(direct[-1]),
                     "max_rel_err": rel, "bound_ok": bound_ok,
                     "pass": rel <= 1e-10 and bound_ok})
    return rows


def cmd_validate_variance(cfg: RunConfig, out) -> int:
    lambdas = _floats(cfg.get("lambdas"))
    if not lambdas or any(not 0 < x <= 1 for x in lambdas):
        raise InputError("--lambda values must lie in (0, 1]")
    t_max = _int(cfg, "t_max")
    raw = bool(cfg.get("raw"))
    rows = validate_variance(lambdas, t_max)
    write_csv(rows, ["lambda", "t_max", "var_t_max", "max_rel_err", "bound_ok", "pass"], out, raw)
    ok = all(r["pass"] for r in rows)
    if cfg.get("monte_carlo"):
        reps = _int(cfg, "reps")
        k = _int(cfg, "streams")
        checks = [t for t in (1, 5, 20, 100) if t <= t_max]
        mc_rows = []
        for lam in lambdas:
            paths = simulate_paths(ChartParams(k, lam, 1.0), make_spec("direct", 0.0), reps,
                                   checks, int(cfg.get("seed")))
            for j, t in enumerate(checks):
                r = paths["r"][:, j]
                exact = variance_exact_direct(lam, t)
                rel = abs(r.var(ddof=1) - exact) / exact
                z = abs(r.mean()) / (r.std(ddof=1) / math.sqrt(reps))
                mc_rows.append({"lambda": lam, "t": t, "exact_var": exact,
                                "mc_var": float(r.var(ddof=1)), "rel_err": rel, "mean_z": z,
                                "pass": rel <= 0.03 and z <= 4})
        write_csv(mc_rows, ["lambda", "t", "exact_var", "mc_var", "rel_err", "mean_z", "pass"],
                  out, raw)
        ok = ok and all(r["pass"] for r in mc_rows)
    return EXIT_OK if ok else EXIT_INVARIANT


# ---------------------------------------------------------------- parser


def _chart_options(p: argparse.ArgumentParser, reps: int, cap: int):
    p.add_argument("--lambda", dest="lambda", type=float,
                   help="EWMA smoothing in (0, 1] (default: 0.2 for target 370, 0.15 for 500)")
    p.add_argument("--limit", type=float,
                   help="limit multiplier L (default: 1.4 for target 370, 1.55 for 500)")
    p.add_argument("--target", type=float, help="target ARL0 selecting defaults (default: 370)")
    p.add_argument("--streams", type=int, help="number of streams k (default: 10)")
    p.add_argument("--p0", type=float, help="in-control exceedance probability (default: 0.5)")
    p.add_argument("--r0", type=float, help="initial EWMA value (default: 0)")
    p.add_argument("--reps", type=int, default=None, help=f"replications (default: {reps})")
    p.add_argument("--cap", type=int, default=None, help=f"max periods per replication (default: {cap})")
    p.add_argument("--seed", type=int, help="master seed (default: 0)")
    p.add_argument("--workers", type=int, help="worker processes; results do not depend on it (default: 1)")
    p.set_defaults(_reps=reps, _cap=cap)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="csb-ewma",
        description="Cumulative standardized binomial EWMA chart for multiple binary streams.",
        epilog="Exit codes: 0 success, 2 input/validation error, 3 invariant violation.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat 'key = value' file; command-line flags take precedence")
    common.add_argument("-o", "--output", help="write the CSV here instead of standard output")
    common.add_argument("--raw", action="store_true", default=None,
                        help="full float precision instead of 6 significant digits")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("monitor", parents=[common],
                       help="run the chart over a long-format CSV",
                       description="Columns written: " + ",".join(MONITOR_COLUMNS) +
                       ". The first signal period goes to standard output (standard error "
                       "when the CSV itself goes to standard output).")
    p.add_argument("input", help="CSV with header t,stream,value")
    p.add_argument("--lambda", dest="lambda", type=float,
                   help="EWMA smoothing in (0, 1] (default: 0.2 for target 370, 0.15 for 500)")
    p.add_argument("--limit", type=float,
                   help="limit multiplier L (default: 1.4 for target 370, 1.55 for 500)")
    p.add_argument("--target", type=float, help="target ARL0 selecting defaults (default: 370)")
    p.add_argument("--streams", type=int, help="expected number of streams (default: inferred)")
    p.add_argument("--median0", type=float, help="in-control median (default: 0)")
    p.add_argument("--p0", type=float, help="in-control exceedance probability (default: 0.5)")
    p.add_argument("--r0", type=float, help="initial EWMA value (default: 0)")
    p.set_defaults(func=cmd_monitor, _reps=1, _cap=1)

    p = sub.add_parser("arl0", parents=[common], help="in-control ARL estimate",
                       description="Columns written: " + ",".join(ARL_COLUMNS))
    _chart_options(p, 10_000, ARL0_CAP)
    p.set_defaults(func=cmd_arl0)

    p = sub.add_parser("arl1", parents=[common], help="out-of-control ARL estimates",
                       description="Columns written: " + ",".join(ARL_COLUMNS))
    _chart_options(p, 50_000, ARL1_CAP)
    p.add_argument("--delta", nargs="+", help="shift sizes (default: 0.05 to 0.50 by 0.05)")
    p.add_argument("--family", nargs="+",
                   help=f"one or more of {', '.join(FAMILIES)} (default: direct)")
    p.set_defaults(func=cmd_arl1)

    p = sub.add_parser("optimize", parents=[common], help="calibrate (lambda, L) to a target ARL0",
                       description="Columns written: target," + ",".join(ARL_COLUMNS))
    p.add_argument("--target", type=float, help="target ARL0 (default: 370)")
    p.add_argument("--streams", type=int, help="number of streams k (default: 10)")
    for name, d in (("lambda-min", 0.10), ("lambda-max", 0.90), ("lambda-step", 0.025),
                    ("limit-min", 1.00), ("limit-max", 2.50), ("limit-step", 0.025)):
        p.add_argument(f"--{name}", type=float, help=f"(default: {d})")
    p.add_argument("--all-lambdas", action="store_true", default=None,
                   help="one row per lambda instead of one per 0.1-wide lambda range")
    p.add_argument("--reps", type=int, help="replications per cell (default: 10000)")
    p.add_argument("--cap", type=int, help=f"max periods per replication (default: {ARL0_CAP})")
    p.add_argument("--seed", type=int, help="master seed, shared by all cells (default: 0)")
    p.add_argument("--workers", type=int, help="worker processes (default: 1)")
    p.set_defaults(func=cmd_optimize, _reps=10_000, _cap=ARL0_CAP)

    p = sub.add_parser("cv", parents=[common], help="CV of ARL1 across the four continuous families",
                       description="Columns written: " + ",".join(CV_COLUMNS))
    _chart_options(p, 50_000, ARL1_CAP)
    p.add_argument("--delta", nargs="+", help="shift sizes (default: 0.05 to 0.50 by 0.05)")
    p.add_argument("--cells", help="also write the per-family ARL1 table here")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("validate-variance", parents=[common],
                       help="check the O(1) variance recurrence against the double sum",
                       description="Columns written: lambda,t_max,var_t_max,max_rel_err,bound_ok,pass")
    p.add_argument("--lambda", dest="lambdas", nargs="+",
                   help="smoothing constants (default: 0.1 0.2 0.5 0.9 1.0)")
    p.add_argument("--t-max", type=int, help="largest period checked (default: 512)")
    p.add_argument("--monte-carlo", action="store_true", default=None,
                   help="also compare against simulated Var(r_t) at t = 1, 5, 20, 100")
    p.add_argument("--reps", type=int, help="Monte Carlo replications (default: 200000)")
    p.add_argument("--streams", type=int, help="streams for the Monte Carlo check (default: 10)")
    p.add_argument("--seed", type=int, help="master seed (default: 0)")
    p.set_defaults(func=cmd_validate_variance, _reps=200_000, _cap=1)
    return parser


def resolve(args: argparse.Namespace) -> RunConfig:
    """Merge built-in defaults, the config file and command-line flags (in that order)."""
    values = dict(DEFAULT_VALUES)
    values["reps"], values["cap"] = args._reps, args._cap
    values["delta"] = list(DELTA_GRID)
    if args.command == "monitor":
        values["streams"] = None  # inferred from the file unless given
    if args.config:
        values.update(read_config_file(args.config))
    flags = {k: v for k, v in vars(args).items() if not k.startswith("_") and v is not None}
    values.update(flags)
    return RunConfig(values)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve(args)
        out = sys.stdout
        if args.command != "monitor" and cfg.get("output"):
            with open(cfg.get("output"), "w", newline="", encoding="utf-8") as fh:
                return args.func(cfg, fh)
        return args.func(cfg, out)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except InvariantError as e:
        print(f"invariant violation: {e}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
