"""Command-line front end.

Subcommands: capacity-cdf, avg-rate, check-ldc, pwep, linksim. Each writes a
CSV whose first line is a comment embedding the fully resolved configuration
(so a result file is a reproducible experiment record) and, with --plot, a
PNG figure next to it. Options may come from a config file (INI-style, one
section per subcommand); command-line flags override file values.

Exit codes: 0 success, 2 usage error, 3 work-budget refusal.
"""

from __future__ import annotations

import argparse
import configparser
import sys

import numpy as np

from . import ldc
from .channel import CapacitySampleSet, SnrPoint, channel_stream, miso_capacity_cdf
from .errprob import SymbolSet, WorkBudgetError, union_bound
from .harq import ergodic_capacity, optimize_cc_rate, optimize_ir_rates
from .ldc import UnknownCodeError, zoo
from .linksim import LinkConfig, run_coded, run_uncoded

DEFAULT_SEED = 1729

PROTOCOLS = ("ir", "cc", "optimal-ldc", "no-feedback", "ergodic")


class UsageError(ValueError):
    pass


def parse_snr_grid(text: str) -> tuple:
    """Comma list ("0,4,8") or start:step:stop ("0:2:20"), strictly increasing."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise UsageError(f"SNR range must be start:step:stop, got {text!r}")
        start, step, stop = (float(p) for p in parts)
        if step <= 0:
            raise UsageError("SNR range step must be positive")
        n = int(np.floor((stop - start) / step + 1e-9)) + 1
        grid = tuple(start + i * step for i in range(n))
    else:
        grid = tuple(float(p) for p in text.split(",") if p.strip() != "")
    if len(grid) == 0:
        raise UsageError("empty SNR grid")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise UsageError(f"SNR grid must be strictly increasing: {grid}")
    return grid


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ";".join(_fmt(v) for v in value)
    return str(value)


def write_csv(path, subcommand: str, resolved: dict, columns, rows) -> None:
    lines = ["# mimoharq " + subcommand + " :: "
             + " ".join(f"{k}={_fmt(v)}" for k, v in sorted(resolved.items()))]
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(row[c]) for c in columns))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


class Options:
    """Flag > config-file > default resolution for one subcommand."""

    def __init__(self, args: argparse.Namespace, section: dict):
        self.args = args
        self.section = section
        self.resolved: dict = {}

    def get(self, name: str, default=None, parse=None, required=False):
        flag_val = getattr(self.args, name.replace("-", "_"), None)
        if flag_val is not None:
            value = flag_val
            if isinstance(value, str) and parse is not None:
                value = parse(value)
        elif name in self.section:
            raw = self.section[name]
            value = parse(raw) if parse is not None else raw
        else:
            if required and default is None:
                raise UsageError(f"missing required option --{name}")
            value = default
        self.resolved[name] = value
        return value


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {text!r}")


def _resolve_code(opt: Options, default_lt: int = 2):
    name = opt.get("code", None)
    path = opt.get("code-file", None)
    if (name is None) == (path is None):
        raise UsageError("exactly one of --code / --code-file is required")
    if path is not None:
        return ldc.load_code(path)
    lt = opt.get("lt", default_lt, parse=int)
    rounds = opt.get("rounds", None, parse=int)
    return zoo(name, lt=lt, n_rounds=rounds)


# ---------------------------------------------------------------------------
# subcommand handlers; each returns (columns, rows, resolved, plot_fn)


def cmd_capacity_cdf(opt: Options):
    lt = opt.get("lt", 2, parse=int)
    lr = opt.get("lr", 1, parse=int)
    grid = opt.get("snr-db", None, parse=parse_snr_grid, required=True)
    samples = opt.get("samples", 100_000, parse=int)
    rate_points = opt.get("rate-points", 101, parse=int)
    seed = opt.get("seed", DEFAULT_SEED, parse=int)
    rows = []
    miso = lr == 1
    for snr_db in grid:
        snr = SnrPoint.from_db(snr_db)
        cs = CapacitySampleSet.sample(lt, lr, snr, samples, seed)
        rates = np.linspace(0.0, float(cs.values[-1]), rate_points)
        emp = cs.ecdf(rates)
        closed = miso_capacity_cdf(rates, snr, lt) if miso else None
        for i, r in enumerate(rates):
            row = {"snr_db": snr_db, "rate": float(r), "empirical_cdf": float(emp[i])}
            if miso:
                row["closed_form_cdf"] = float(closed[i])
            rows.append(row)
    columns = ["snr_db", "rate", "empirical_cdf"] + (["closed_form_cdf"] if miso else [])
    from .plotting import plot_capacity_cdf
    return columns, rows, opt.resolved, plot_capacity_cdf


def cmd_avg_rate(opt: Options):
    protocols = opt.get("protocol", None, parse=lambda s: tuple(p.strip() for p in s.split(",")),
                        required=True)
    lt = opt.get("lt", 2, parse=int)
    lr = opt.get("lr", 1, parse=int)
    n_max = opt.get("n-max", 4, parse=int)
    grid = opt.get("snr-db", None, parse=parse_snr_grid, required=True)
    samples = opt.get("samples", 100_000, parse=int)
    seed = opt.get("seed", DEFAULT_SEED, parse=int)
    for proto in protocols:
        if not (proto in PROTOCOLS or proto.startswith("ldc:")):
            raise UsageError(f"unknown protocol {proto!r}; choose from "
                             f"{', '.join(PROTOCOLS)} or ldc:<code>")
    rows = []
    for snr_db in grid:
        snr = SnrPoint.from_db(snr_db)
        cs = None
        for proto in protocols:
            if proto in ("ir", "no-feedback", "optimal-ldc", "ergodic") and cs is None:
                cs = CapacitySampleSet.sample(lt, lr, snr, samples, seed)
            if proto == "ergodic":
                value, rates = float(np.mean(cs.values)), ()
            elif proto == "ir":
                res = optimize_ir_rates(cs, n_max)
                value, rates = res.avg_rate, res.optimal_rates.rates
            elif proto == "no-feedback":
                res = optimize_ir_rates(cs, 1)
                value, rates = res.avg_rate, res.optimal_rates.rates
            elif proto == "cc":
                res = optimize_cc_rate(snr, lt, lr, n_max, samples, channel_stream(seed, 0))
                value, rates = res.avg_rate, res.optimal_rates.rates
            elif proto == "optimal-ldc":
                res = ldc.optimal_ldc_avg_rate(snr, lt, lr, n_max, mc=samples,
                                               stream=channel_stream(seed, 0))
                value, rates = res.avg_rate, res.optimal_rates.rates
            else:
                code = zoo(proto[4:], lt=lt, n_rounds=None)
                res = ldc.avg_rate_ldc(code, snr, lr, min(n_max, code.n_rounds),
                                       mc=samples, stream=channel_stream(seed, 0))
                value, rates = res.avg_rate, res.optimal_rates.rates
            rows.append({
                "protocol": proto,
                "snr_db": snr_db,
                "avg_rate": float(value),
                "rates": ";".join(repr(float(r)) for r in rates),
            })
    from .plotting import plot_avg_rate
    return ["protocol", "snr_db", "avg_rate", "rates"], rows, opt.resolved, plot_avg_rate


def cmd_check_ldc(opt: Options):
    code = _resolve_code(opt)
    lr = opt.get("lr", 1, parse=int)
    grid = opt.get("snr-db", (0.0, 10.0, 20.0), parse=parse_snr_grid)
    audit = opt.get("audit-samples", 200, parse=int)
    tol_mi = opt.get("tol-mi", 1e-6, parse=float)
    tol_res = opt.get("tol-residual", 1e-9, parse=float)
    seed = opt.get("seed", DEFAULT_SEED, parse=int)

    c1 = ldc.check_criterion1(code, lr, snr_db_points=grid, mc=audit, tol=tol_mi,
                              stream=channel_stream(seed, 3))
    th1 = ldc.check_theorem1(code, lr=lr, tol=tol_res)
    co2 = ldc.check_corollary2(code, tol=tol_res)
    power = {lvl: ldc.check_power(code, lvl) for lvl in ("per-round", "per-symbol", "isotropic")}

    rows = []
    for n in range(1, code.n_rounds + 1):
        rows.append({
            "round": n,
            "criterion1_pass": c1.passes[n - 1],
            "mi_gap": c1.mi_gaps[n - 1],
            "theorem1_residual": th1.residuals[n - 1] if th1.applicable and th1.residuals else "n/a",
            "corollary2_residual": co2.residuals[n - 1] if co2.applicable and co2.residuals else "n/a",
            "power_per_round_residual": power["per-round"].residuals[n - 1],
            "power_per_symbol_residual": power["per-symbol"].residuals[n - 1],
            "power_isotropic_residual": power["isotropic"].residuals[n - 1],
        })

    print(f"code {code.name}: lt={code.lt} T={code.t_total} K={code.k} "
          f"rounds={code.round_lengths}, audited at lr={lr}")
    if not th1.applicable:
        print(f"  theorem-1 certificate: not applicable ({th1.reason})")
    elif th1.regime_ok is False:
        print(f"  theorem-1 certificate: outside stated regime ({th1.reason})")
    if not co2.applicable:
        print(f"  corollary-2 certificate: not applicable ({co2.reason})")
    elif not co2.full_rate:
        print("  corollary-2 residuals reported, but K != lt*T so the iff semantics do not apply")
    for row in rows:
        print("  round {round}: criterion1 {c} (gap {g:.3g}), theorem1 {t}, corollary2 {co}".format(
            round=row["round"], c="PASS" if row["criterion1_pass"] else "FAIL",
            g=row["mi_gap"],
            t=row["theorem1_residual"] if isinstance(row["theorem1_residual"], str)
            else f"{row['theorem1_residual']:.3g}",
            co=row["corollary2_residual"] if isinstance(row["corollary2_residual"], str)
            else f"{row['corollary2_residual']:.3g}"))
    for lvl, rep in power.items():
        print(f"  power {lvl}: {'PASS' if rep.passed else 'FAIL'} "
              f"(max residual {max(rep.residuals):.3g})")

    columns = list(rows[0].keys())
    return columns, rows, opt.resolved, None


def cmd_pwep(opt: Options):
    code = _resolve_code(opt)
    lr = opt.get("lr", 1, parse=int)
    n_list = opt.get("n", (1, 2), parse=lambda s: tuple(int(p) for p in s.split(",")))
    grid = opt.get("snr-db", None, parse=parse_snr_grid, required=True)
    h_samples = opt.get("h-samples", 2000, parse=int)
    mc = opt.get("mc", 1000, parse=int)
    budget = opt.get("work-budget", 1e8, parse=float)
    seed = opt.get("seed", DEFAULT_SEED, parse=int)
    symbol_set = SymbolSet.qpsk(code.k)
    rows = []
    for n in n_list:
        for snr_db in grid:
            est = union_bound(code, symbol_set, SnrPoint.from_db(snr_db), lr, n,
                              h_samples=h_samples, mc_per_h=mc,
                              stream=channel_stream(seed, 4), work_budget=budget)
            rows.append({"n": n, "snr_db": snr_db, "bound": est.value, "stderr": est.stderr})
    from .plotting import plot_pwep
    return ["n", "snr_db", "bound", "stderr"], rows, opt.resolved, plot_pwep


def cmd_linksim(opt: Options):
    codes = opt.get("code", None, parse=lambda s: tuple(p.strip() for p in s.split(",")),
                    required=True)
    coded_mode = opt.get("coded", "uncoded")
    if coded_mode not in ("uncoded", "coded", "both"):
        raise UsageError("--coded must be uncoded, coded, or both")
    lt = opt.get("lt", 2, parse=int)
    lr = opt.get("lr", 1, parse=int)
    n_max = opt.get("n-max", 2, parse=int)
    grid = opt.get("snr-db", None, parse=parse_snr_grid, required=True)
    trials = opt.get("trials", 10_000, parse=int)
    packet_symbols = opt.get("packet-symbols", 100, parse=int)
    min_errors = opt.get("min-errors", 100, parse=lambda s: None if s == "none" else int(s))
    seed = opt.get("seed", DEFAULT_SEED, parse=int)
    chunk = opt.get("chunk", 2048, parse=int)

    coded_flags = {"uncoded": (False,), "coded": (True,), "both": (False, True)}[coded_mode]
    rows = []
    for code_name in codes:
        code = zoo(code_name, lt=lt, n_rounds=None)
        for coded in coded_flags:
            cfg = LinkConfig(code=code, snr_db=grid, lr=lr, n_max=n_max,
                             packet_symbols=packet_symbols, coded=coded, trials=trials,
                             seed=seed, min_errors=min_errors, chunk=chunk)
            stats = run_coded(cfg) if coded else run_uncoded(cfg)
            for pt in stats.points:
                row = {
                    "code": code_name,
                    "coded": coded,
                    "snr_db": pt.snr_db,
                    "per": pt.per,
                    "per_stderr": pt.per_stderr,
                    "avg_rate": pt.avg_rate,
                }
                for n in range(n_max):
                    row[f"round_{n + 1}_frac"] = pt.round_fracs[n]
                row["trials"] = pt.trials
                rows.append(row)
    columns = (["code", "coded", "snr_db", "per", "per_stderr", "avg_rate"]
               + [f"round_{n + 1}_frac" for n in range(n_max)] + ["trials"])
    from .plotting import plot_linksim
    return columns, rows, opt.resolved, plot_linksim


HANDLERS = {
    "capacity-cdf": cmd_capacity_cdf,
    "avg-rate": cmd_avg_rate,
    "check-ldc": cmd_check_ldc,
    "pwep": cmd_pwep,
    "linksim": cmd_linksim,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mimoharq",
        description="HARQ over quasi-static MIMO: average-rate optimization, "
                    "dispersion-code certification, error bounds, link simulation.")
    parser.add_argument("--config", help="INI config file with one section per subcommand")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_common(p, with_code=False):
        p.add_argument("--seed", help=f"RNG seed (default {DEFAULT_SEED})")
        p.add_argument("--out", help="output CSV path")
        p.add_argument("--plot", action="store_true", default=None,
                       help="render a PNG next to the CSV")
        p.add_argument("--snr-db", help="comma list (0,4,8) or start:step:stop (0:2:20)")
        if with_code:
            p.add_argument("--code", help="zoo code name")
            p.add_argument("--code-file", help="code definition file")
            p.add_argument("--lt", help="transmit antennas for parametric zoo codes")
            p.add_argument("--rounds", help="round count for parametric zoo codes")
            p.add_argument("--lr", help="receive antennas")

    p = sub.add_parser("capacity-cdf", help="empirical vs closed-form capacity CDF")
    add_common(p)
    p.add_argument("--lt")
    p.add_argument("--lr")
    p.add_argument("--samples")
    p.add_argument("--rate-points")

    p = sub.add_parser("avg-rate", help="optimal average rate per protocol")
    add_common(p)
    p.add_argument("--protocol", help="comma list: ir, cc, ldc:<name>, optimal-ldc, "
                                      "no-feedback, ergodic")
    p.add_argument("--lt")
    p.add_argument("--lr")
    p.add_argument("--n-max")
    p.add_argument("--samples")

    p = sub.add_parser("check-ldc", help="criterion-1 / theorem-1 / corollary-2 / power report")
    add_common(p, with_code=True)
    p.add_argument("--audit-samples")
    p.add_argument("--tol-mi")
    p.add_argument("--tol-residual")

    p = sub.add_parser("pwep", help="union bound on the joint round-1..n error probability")
    add_common(p, with_code=True)
    p.add_argument("--n", help="comma list of round depths")
    p.add_argument("--h-samples")
    p.add_argument("--mc")
    p.add_argument("--work-budget")

    p = sub.add_parser("linksim", help="packet-level HARQ link simulation")
    add_common(p, with_code=True)
    p.add_argument("--coded", help="uncoded, coded, or both")
    p.add_argument("--n-max")
    p.add_argument("--trials")
    p.add_argument("--packet-symbols")
    p.add_argument("--min-errors", help="early-stop error target, or 'none'")
    p.add_argument("--chunk")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    section: dict = {}
    if args.config:
        ini = configparser.ConfigParser()
        read = ini.read(args.config)
        if not read:
            print(f"config file not found: {args.config}", file=sys.stderr)
            return 2
        if ini.has_section(args.subcommand):
            section = dict(ini.items(args.subcommand))
    opt = Options(args, section)
    try:
        columns, rows, resolved, plot_fn = HANDLERS[args.subcommand](opt)
        out = opt.get("out", None)
        do_plot = bool(opt.get("plot", False, parse=_parse_bool))
    except WorkBudgetError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return 3
    except (UsageError, UnknownCodeError, ValueError) as exc:
        msg = exc.args[0] if exc.args else str(exc)
        print(f"error: {msg}", file=sys.stderr)
        return 2
    if out:
        write_csv(out, args.subcommand, resolved, columns, rows)
        print(f"wrote {out}")
        if do_plot and plot_fn is not None:
            png = out.rsplit(".", 1)[0] + ".png" if "." in out else out + ".png"
            plot_fn(rows, png)
            print(f"wrote {png}")
    elif rows and args.subcommand != "check-ldc":
        # no --out: print the table to stdout
        print(",".join(columns))
        for row in rows:
            print(",".join(_fmt(row[c]) for c in columns))
    return 0


if __name__ == "__main__":
    sys.exit(main())
