"""Command-line front end.

Exit codes: 0 ok, 1 reproduction mismatch, 2 configuration or usage error,
3 not incentive-compatible, 4 no identifying statistic.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path

import numpy as np

from . import reproduce
from .asymptotics import (
    Method,
    build_stabilizer,
    check_ic_analytic,
    check_ic_theorem1,
    check_ic_theorem2,
    power_compare,
    variance_function,
)
from .config import ScenarioConfig, dump_config, load_config, with_overrides
from .errors import ConfigError, ICDesignError, NoIdentifyingStatistic, NotCertified
from .outcome_models import Family
from .scoring import Design, save_tabulated
from .simulator import Scenario, estimate_win_prob, mc_best_response

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NOT_IC, EXIT_NO_STAT = 0, 1, 2, 3, 4

CSV_COLUMNS = ["scenario_id", "k", "transform", "agent", "p_hat", "se", "reps", "seed"]


def fmt(x) -> str:
    """Numbers with 6 significant digits and a '.' decimal point."""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.6g}"
    return str(x)


def render(header, rows, style: str) -> str:
    rows = [[fmt(v) for v in r] for r in rows]
    if style == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        return buf.getvalue()
    widths = [max(len(str(h)), *(len(r[i]) for r in rows)) if rows else len(str(h)) for i, h in enumerate(header)]
    lines = ["  ".join(str(h).rjust(w) for h, w in zip(header, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(v.rjust(w) for v, w in zip(r, widths)) for r in rows]
    return "\n".join(lines) + "\n"


def emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _load(args) -> ScenarioConfig:
    path = args.config or args.config_pos
    if not path:
        raise ConfigError("no configuration given (use --config PATH)")
    cfg = load_config(path)
    return with_overrides(cfg, seed=args.seed, reps=args.reps, workers=args.workers)


def _action(a) -> str:
    return "(" + ", ".join(fmt(p) for p in a.params) + ")"


# ---- subcommands ---------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg = _load(args)
    profiles = cfg.profiles()
    rows = []
    for k in cfg.ks:
        for t in cfg.transform_list:
            sc = cfg.scenario(t, m=cfg.units_for_k(k))
            est = estimate_win_prob(sc, profiles, cfg.reps, cfg.seed, cfg.workers)
            for i in range(cfg.n):
                rows.append([cfg.scenario_id, k, sc.score_fn.transform.name, i + 1, est.p_hat[i], est.se[i],
                             cfg.reps, cfg.seed])
    emit(render(CSV_COLUMNS, rows, args.format or "csv"), args.out)
    return EXIT_OK


WITNESS_COLUMNS = ["k", "block", "agent", "rival", "natural", "deviation", "p_natural", "p_deviation"]


def _witness_rows(cert, k, block):
    return [
        [k, block + 1, w.agent + 1, "-" if w.rival is None else w.rival + 1, _action(w.natural), _action(w.deviation),
         w.p_natural, w.p_deviation]
        for w in cert.witnesses
    ]


def cmd_ic_check(args) -> int:
    cfg = _load(args)
    method = Method(args.method or "analytic")
    model = cfg.model()
    lines = [f"scenario: {cfg.scenario_id}", f"method: {method.value}"]
    witnesses = []
    not_ic = False
    no_stat = None
    for b, spaces in enumerate(cfg.action_spaces()):
        for t in cfg.transform_list:
            sf = cfg.score_fn(t)
            for k in cfg.ks:
                if method is Method.MONTE_CARLO:
                    sc = Scenario(model, sf, [spaces], cfg.units_for_k(k) // cfg.blocks, cfg.n)
                    cert = mc_best_response(sc, cfg.reps, cfg.seed, cfg.max_cells, cfg.workers, cfg.scenario_id)
                else:
                    try:
                        cert = check_ic_theorem1(model, sf, spaces, k, cfg.ic_margin, cfg.scenario_id)
                    except NoIdentifyingStatistic as exc:
                        no_stat = str(exc)
                        cert = check_ic_analytic(model, sf, spaces, k, cfg.ic_margin, cfg.scenario_id)
                        lines.append(f"block {b + 1} transform {sf.transform.name} k={k}: no identifying statistic; "
                                     f"closed-form best-response search: {cert.verdict.value}")
                        witnesses += _witness_rows(cert, k, b)
                        not_ic |= not cert.is_ic
                        continue
                lines.append(f"block {b + 1} transform {sf.transform.name} k={k}: {cert.verdict.value} "
                             f"({cert.cells_checked} opponent profiles checked)")
                witnesses += _witness_rows(cert, k, b)
                not_ic |= not cert.is_ic
            if method is Method.ANALYTIC and not model.interference:
                t2 = check_ic_theorem2(model, sf, spaces, None, cfg.var_tolerance)
                c = t2.conditions
                lines.append(f"block {b + 1} transform {sf.transform.name}: sufficient conditions "
                             f"composed={c[0]} constant_variance={c[1]} monotone={c[2]} -> {t2.verdict}")
    if no_stat is not None:
        verdict = "NoIdentifyingStatistic"
        lines.append(f"verdict: {verdict}")
        lines.append(f"note: {no_stat}")
    else:
        verdict = "NotIC" if not_ic else "IC"
        lines.append(f"verdict: {verdict}")
    text = "\n".join(lines) + "\n"
    if witnesses:
        text += "\nwitnesses (agent prefers deviation over its natural action):\n"
        text += render(WITNESS_COLUMNS, witnesses, args.format or "table")
    emit(text, args.out)
    if no_stat is not None:
        return EXIT_NO_STAT
    return EXIT_NOT_IC if not_ic else EXIT_OK


def cmd_power(args) -> int:
    cfg = _load(args)
    if not cfg.compare_transform:
        raise ConfigError("power needs design.compare_transform (the alternative design's transform)")
    if cfg.blocks != 1:
        raise ConfigError("power comparison is defined for one block")
    method = Method(args.method or "analytic")
    model = cfg.model()
    spaces = cfg.action_spaces()[0]
    natural = cfg.profiles()[0]
    designs = (Design("D", cfg.score_fn()), Design("D'", cfg.score_fn(cfg.compare_transform)))
    rows = []
    for k in cfg.ks:
        certs = [check_ic_theorem1(model, d.score_fn, spaces, k, cfg.ic_margin, d.design_id) for d in designs]
        res = power_compare(designs, model, natural, k, certs, method, cfg.reps, cfg.seed, cfg.workers)
        rows.append([cfg.scenario_id, k, designs[0].score_fn.transform.name, designs[1].score_fn.transform.name,
                     res.tau + 1, res.p_tau_D, res.p_tau_Dprime, "-" if res.se is None else res.se,
                     res.more_powerful])
    header = ["scenario_id", "k", "transform_D", "transform_Dprime", "best_agent", "p_tau_D", "p_tau_Dprime", "se",
              "more_powerful"]
    emit(render(header, rows, args.format or "table"), args.out)
    return EXIT_OK


def cmd_stabilize(args) -> int:
    cfg = _load(args)
    model = cfg.model()
    if model.interference:
        raise ConfigError("stabilize needs a family without interference")
    actions = {}
    for block in cfg.action_spaces():
        for space in block:
            for a in space:
                chi = model.performance(a)
                s2 = model.unit_variance(a)
                if chi in actions and actions[chi] != s2:
                    raise ConfigError(f"performance {chi} appears with two variances; sigma^2(chi) is not a function")
                actions[chi] = s2
    chi = np.array(sorted(actions))
    sigma2 = variance_function(model) or np.array([actions[c] for c in chi])
    lo, hi = cfg.range if cfg.range is not None else (None, None)
    st = build_stabilizer(chi, sigma2, lo, hi, cfg.quad_tol, cfg.n_knots)
    buf = io.StringIO()
    save_tabulated(st.base, buf)
    if args.out:
        Path(args.out).write_text(buf.getvalue())
        where = args.out
    else:
        sys.stdout.write(buf.getvalue())
        where = "stdout"
    flags = st.convexity_flags
    report = (
        f"wrote {len(st.z)} knots on [{fmt(st.lo)}, {fmt(st.hi)}] to {where}\n"
        f"quadrature error estimate: {st.quad_error:.3g}\n"
        + "".join(f"{name}: {val}\n" for name, val in flags.items())
        + f"variance_monotone: {st.variance_monotone}\n"
        + f"more_powerful_guaranteed: {st.more_powerful_guaranteed}\n"
    )
    (sys.stderr if where == "stdout" else sys.stdout).write(report)
    return EXIT_OK


def cmd_reproduce(args) -> int:
    fn = reproduce.TARGETS[args.target]
    kw = {}
    if args.seed is not None and args.target in ("table2", "example2a", "example3g"):
        kw["seed"] = args.seed
    if args.reps is not None and args.target in ("table2", "example2a", "example3g"):
        kw["reps"] = args.reps
    if args.workers is not None and args.target in ("table2", "example2a"):
        kw["workers"] = args.workers
    checks = fn(**kw)
    rows = []
    for c in checks:
        status = "info" if c.passed is None else ("pass" if c.passed else "FAIL")
        rows.append([c.name, c.computed, c.published, "-" if c.delta is None else c.delta, c.tolerance, status])
    text = f"target: {args.target}\n" + render(["quantity", "computed", "published", "|delta|", "tolerance", "status"],
                                               rows, args.format or "table")
    failed = [c for c in checks if c.passed is False]
    text += f"result: {'FAIL' if failed else 'pass'} ({len(failed)} of {sum(c.passed is not None for c in checks)} failed)\n"
    emit(text, args.out)
    return EXIT_FAIL if failed else EXIT_OK


def cmd_dump_config(args) -> int:
    cfg = _load(args)
    emit(dump_config(cfg), args.out)
    return EXIT_OK


# ---- parser --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config_pos", nargs="?", metavar="CONFIG", help="scenario YAML file")
    common.add_argument("--config", help="scenario YAML file")
    common.add_argument("--seed", type=int, help="override simulation.seed")
    common.add_argument("--reps", type=int, help="override simulation.reps")
    common.add_argument("--workers", type=int, help="threads for simulation (results do not depend on it)")
    common.add_argument("--out", help="write output to this path instead of stdout")
    common.add_argument("--format", choices=["csv", "table"])

    p = argparse.ArgumentParser(prog="icexp", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="Monte Carlo win probabilities (CSV)")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("ic-check", parents=[common], help="certify or refute incentive compatibility")
    s.add_argument("--method", choices=["analytic", "mc"], default="analytic")
    s.set_defaults(func=cmd_ic_check)

    s = sub.add_parser("power", parents=[common], help="compare the power of two certified designs")
    s.add_argument("--method", choices=["analytic", "mc"], default="analytic")
    s.set_defaults(func=cmd_power)

    s = sub.add_parser("stabilize", parents=[common], help="tabulate a variance-stabilizing transform")
    s.set_defaults(func=cmd_stabilize)

    s = sub.add_parser("dump-config", parents=[common], help="print the canonical form of a config")
    s.set_defaults(func=cmd_dump_config)

    s = sub.add_parser("reproduce", help="compare computed values with the published ones")
    s.add_argument("target", choices=sorted(reproduce.TARGETS))
    s.add_argument("--seed", type=int)
    s.add_argument("--reps", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("--out")
    s.add_argument("--format", choices=["csv", "table"])
    s.set_defaults(func=cmd_reproduce)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "reps", None) is not None and args.reps < 1:
        parser.error("--reps must be >= 1")
    if getattr(args, "workers", None) is not None and args.workers < 1:
        parser.error("--workers must be >= 1")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NoIdentifyingStatistic as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_STAT
    except NotCertified as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_IC
    except ICDesignError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
