"""Command-line entry point: generate, simulate, decompose, measure, experiment, regress.

Options may also come from an INI file given with ``--config``: keys in the
``[sclockdown]`` section apply to every subcommand and keys in a section
named after the subcommand (e.g. ``[grid]``) override them. Command-line
values override both.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import os
import platform
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import scipy

from sclockdown import __version__
from sclockdown.kernels import backend_name, get_backend

EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
FIXTURE = "fixture200"


class ConfigError(Exception):
    """Invalid invocation, configuration or input files."""


class NumericalError(Exception):
    """A computation failed or a self-check found a violated invariant."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit with status 2
        raise ConfigError(message)


# --------------------------------------------------------------------------- parsing


def _floats(text: str) -> list[float]:
    return [float(x) for x in str(text).split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in str(text).split(",") if x.strip()]


def _pairs(text: str) -> list[tuple[int, int]]:
    out = []
    for item in str(text).split(","):
        if item.strip():
            a, b = item.split(":")
            out.append((int(a), int(b)))
    return out


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _nonneg_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {v}")
    return v


def _add_network(p: argparse.ArgumentParser) -> None:
    p.add_argument("--network", required=False,
                   help=f"directory with firms.csv/links.csv[/io_table.csv], or '{FIXTURE}'")


def _add_model(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tau", type=float, default=6.0)
    p.add_argument("--n-mean", type=float, default=10.0)
    p.add_argument("--n-min", type=_nonneg_int, default=4)
    p.add_argument("--consumption-lag", type=int, choices=(0, 1), default=1)
    p.add_argument("--runs", type=_positive_int, default=30)
    p.add_argument("--seed", type=_nonneg_int, default=0)
    p.add_argument("--va-mode", choices=("unit", "io_share"), default=None,
                   help="default: io_share when the IO table has value-added rows, else unit")
    p.add_argument("--policy", help="policy table CSV (default: bundled table)")
    p.add_argument("--work-at-home-zero", action="store_true", default=False)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sclockdown", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="store_true", help="print build metadata and exit")
    parser.add_argument("--config", help="INI file with option defaults")
    parser.add_argument("--threads", type=_positive_int, default=None,
                        help="worker threads (default: $SCLOCKDOWN_THREADS or 1)")
    parser.add_argument("--self-check", action="store_true", default=False,
                        help="run invariant checks on the loaded network before the command")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("gen", help="generate a synthetic network")
    p.add_argument("--n-firms", type=_positive_int, default=10000)
    p.add_argument("--n-regions", type=_positive_int, default=47)
    p.add_argument("--n-sectors", type=_positive_int, default=30)
    p.add_argument("--links-per-firm", type=float, default=3.7)
    p.add_argument("--intra-region-bias", type=float, default=0.6)
    p.add_argument("--hierarchy", type=float, default=8.0)
    p.add_argument("--loop-bias", type=float, default=0.0)
    p.add_argument("--seed", type=_nonneg_int, default=0)

    p = sub.add_parser("sim", help="Monte Carlo simulation of a lockdown schedule")
    _add_network(p)
    _add_model(p)
    p.add_argument("--schedule", help="schedule CSV (default: the actual 2020 schedule)")
    p.add_argument("--multiplier", type=float, default=None,
                   help="override every schedule multiplier")
    p.add_argument("--horizon", type=_positive_int, default=60)
    p.add_argument("--snapshot-days", type=_ints, default=[], help="comma-separated days")

    p = sub.add_parser("hhd", help="Helmholtz-Hodge decomposition of net flows")
    _add_network(p)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iter", type=_positive_int, default=None)

    p = sub.add_parser("metrics", help="region and region-pair network measures")
    _add_network(p)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--flow-denominator", action="store_true", default=False)

    p = sub.add_parser("grid", help="value-added loss over a grid of group multipliers")
    _add_network(p)
    _add_model(p)
    p.add_argument("--mult-more", type=_floats, default=[0.0, 0.5, 1.0])
    p.add_argument("--mult-less", type=_floats, default=[0.0, 0.5, 1.0])
    p.add_argument("--duration", type=int, choices=(14, 30, 60), default=60)
    p.add_argument("--more-regions", type=_ints, default=None,
                   help="regions of the more restricted group (default: first-declared seven)")

    for name, helptext in (("lift-one", "recovery from lifting one region"),
                           ("lift-two", "relative recovery from lifting two regions")):
        p = sub.add_parser(name, help=helptext)
        _add_network(p)
        _add_model(p)
        p.add_argument("--window", type=_positive_int, default=14)
        p.add_argument("--multiplier", type=float, default=1.0)
        if name == "lift-two":
            p.add_argument("--pairs", type=_pairs, default=None, help="a:b,a:b,... (default: all)")

    p = sub.add_parser("regress", help="OLS and correlations of recovery on network measures")
    p.add_argument("--table", choices=("one_region", "two_region"), default="one_region")
    p.add_argument("--spec", type=int, choices=range(1, 8), default=7)
    p.add_argument("--regions", required=False, help="region_metrics.csv")
    p.add_argument("--pairs", help="pair_metrics.csv (two_region)")
    p.add_argument("--lift", required=False, help="lift_one.csv or lift_two.csv")

    for p in sub.choices.values():
        p.add_argument("--out", required=False, help="output directory")
    return parser


def _bool(value: str) -> bool:
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {value!r}")


def _apply_config(parser: argparse.ArgumentParser, path: str, command: str | None) -> None:
    """Install config-file values as parser defaults so the command line still wins."""
    if not Path(path).is_file():
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser()
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}".replace("\n", " ")) from None
    sub = parser._subparsers._group_actions[0].choices if parser._subparsers else {}
    targets = [parser] + ([sub[command]] if command in sub else [])
    sections = ["sclockdown"] + ([command] if command else [])
    unknown = [s for s in cp.sections() if s != "sclockdown" and s not in sub]
    if unknown:
        raise ConfigError(f"unknown config sections: {unknown}")
    for section in sections:
        if not cp.has_section(section):
            continue
        for key, raw in cp.items(section):
            dest = key.replace("-", "_")
            applied = False
            for p in targets:
                action = next((a for a in p._actions if a.dest == dest), None)
                if action is None:
                    continue
                if isinstance(action, argparse._StoreTrueAction):
                    value = _bool(raw)
                else:
                    try:
                        value = action.type(raw) if action.type else raw
                    except (ValueError, argparse.ArgumentTypeError) as exc:
                        raise ConfigError(f"config {section}.{key}: {exc}") from None
                    if action.choices is not None and value not in action.choices:
                        raise ConfigError(f"config {section}.{key}: {value!r} not in "
                                          f"{list(action.choices)}")
                p.set_defaults(**{dest: value})
                action.required = False
                applied = True
            if not applied and section == command:
                raise ConfigError(f"unknown config key {section}.{key}")


def parse_args(argv: list[str]) -> argparse.Namespace:
    parser = build_parser()
    pre = parser.parse_known_args(argv)[0] if argv else argparse.Namespace(config=None,
                                                                           command=None)
    if pre.config:
        _apply_config(parser, pre.config, pre.command)
    return parser.parse_args(argv)


# --------------------------------------------------------------------------- helpers


def _require(args, *names) -> None:
    for n in names:
        if getattr(args, n, None) in (None, ""):
            raise ConfigError(f"--{n.replace('_', '-')} is required for '{args.command}'")


def _out_dir(args) -> Path:
    _require(args, "out")
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory not writable: {out} ({exc.strerror})") from None
    return out


def _load_network(args):
    from importlib import resources

    from sclockdown.netgen import load_network

    _require(args, "network")
    if args.network == FIXTURE:
        with resources.as_file(resources.files("sclockdown.data").joinpath(FIXTURE)) as d:
            return load_network(d)
    path = Path(args.network)
    if not (path / "firms.csv").is_file() or not (path / "links.csv").is_file():
        raise ConfigError(f"network directory must contain firms.csv and links.csv: {path}")
    return load_network(path)


def _model_params(args):
    from sclockdown.prodsim import ModelParams

    params = ModelParams(tau=args.tau, n_mean=args.n_mean, n_min=args.n_min,
                         consumption_lag=args.consumption_lag)
    params.validate()
    return params


def _policy(args):
    from sclockdown.scenario import default_policy, load_policy_table

    if args.policy:
        if not Path(args.policy).is_file():
            raise ConfigError(f"policy file not found: {args.policy}")
        return load_policy_table(args.policy, args.work_at_home_zero)
    return default_policy(args.work_at_home_zero)


def _check_multiplier(name: str, values) -> None:
    for v in values:
        if not 0.0 <= v <= 1.0:
            raise ConfigError(f"{name} must lie in [0, 1], got {v}")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out: Path, args, outputs: list[str], extra: dict | None = None) -> None:
    """Run record with everything needed to rerun the command bit for bit."""
    options = {k: v for k, v in vars(args).items() if k not in ("version",)}
    record = {
        "command": args.command,
        "options": json.loads(json.dumps(options, default=str)),
        "package_version": __version__,
        "kernel_backend": backend_name(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pandas": pd.__version__,
        "decisions": {
            "value_added_mode": getattr(args, "va_mode", None),
            "consumption_lag": getattr(args, "consumption_lag", None),
            "flow_denominator": getattr(args, "flow_denominator", None),
            "work_at_home_zero": getattr(args, "work_at_home_zero", None),
            "lift_window_starts_at_day_0": args.command in ("lift-one", "lift-two"),
            "grid_loss_unit": "percent of yearly baseline GDP" if args.command == "grid" else None,
            "seeds": "run r uses seed + r" if hasattr(args, "runs") else None,
        },
        "outputs": {name: _sha256(out / name) for name in outputs},
    }
    if extra:
        record.update(extra)
    (out / "manifest.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")


def _spec(args, kind: str, horizon: int, groups=()):
    from sclockdown.scenario import ExperimentSpec

    return ExperimentSpec(kind=kind, horizon_days=horizon, runs=args.runs, base_seed=args.seed,
                          groups=tuple(groups), params=_model_params(args))


def _value_weights(args, net):
    from sclockdown.analysis import firm_value_weights

    if args.va_mode is None:
        covered = net.io is not None and all(int(c) in net.io.value_added for c in net.sector_codes)
        args.va_mode = "io_share" if covered else "unit"
    return firm_value_weights(net, args.va_mode)


# --------------------------------------------------------------------------- commands


def cmd_gen(args) -> list[str]:
    from sclockdown.netgen import SyntheticParams, generate_synthetic, write_network

    params = SyntheticParams(n_firms=args.n_firms, n_regions=args.n_regions,
                             n_sectors=args.n_sectors, links_per_firm=args.links_per_firm,
                             intra_region_bias=args.intra_region_bias, hierarchy=args.hierarchy,
                             loop_bias=args.loop_bias, seed=args.seed)
    try:
        params.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = _out_dir(args)
    net = generate_synthetic(params)
    write_network(net, out)
    return ["firms.csv", "links.csv", "io_table.csv"]


def cmd_sim(args, net) -> list[str]:
    from sclockdown.scenario import (ExperimentSpec, LockdownSchedule, build_actual_schedule,
                                     capacity_profile, read_schedule_csv, run_jobs)

    out = _out_dir(args)
    if args.schedule:
        if not Path(args.schedule).is_file():
            raise ConfigError(f"schedule file not found: {args.schedule}")
        schedule = read_schedule_csv(args.schedule)
    else:
        schedule = build_actual_schedule()
    if args.multiplier is not None:
        _check_multiplier("--multiplier", [args.multiplier])
        schedule = LockdownSchedule(tuple(
            type(e)(e.region, e.start_day, e.end_day, args.multiplier) for e in schedule.entries))
    bad = [d for d in args.snapshot_days if not 0 <= d < args.horizon]
    if bad:
        raise ConfigError(f"snapshot days outside [0, {args.horizon}): {bad}")
    spec = ExperimentSpec("replicate", args.horizon, args.runs, args.seed,
                          params=_model_params(args))
    weights = _value_weights(args, net)
    cap = capacity_profile(schedule, _policy(args), net)
    res = run_jobs(net, spec, [cap], weights, args.threads)[0]

    cols = {f"grp_{int(r)}": res.mean[:, k] for k, r in enumerate(net.region_codes)}
    gdp = pd.DataFrame({"day": np.arange(args.horizon), "gdp": res.gdp, **cols})
    gdp.to_csv(out / "gdp.csv", index=False)
    runs = pd.DataFrame(res.gdp_per_run.T, columns=[f"run_{r}" for r in range(args.runs)])
    runs.insert(0, "day", np.arange(args.horizon))
    runs.to_csv(out / "gdp_runs.csv", index=False)
    outputs = ["gdp.csv", "gdp_runs.csv"]
    if args.snapshot_days:
        _write_snapshots(net, spec, cap, sorted(set(args.snapshot_days)), out / "snapshots.csv")
        outputs.append("snapshots.csv")
    return outputs


def _write_snapshots(net, spec, cap, days: list[int], path: Path) -> None:
    """Firm-level output and realized demand of run 0 on the requested days."""
    from sclockdown.prodsim import initialize_state, step_day

    st = initialize_state(net, spec.params, spec.seed(0))
    frames = []
    backend = get_backend()
    for day in range(max(days) + 1):
        st = step_day(st, net, cap, spec.params, backend)
        if day in days:
            frames.append(pd.DataFrame({"day": day, "firm_id": net.firms.id,
                                        "p_act": st.p_act, "d_star": st.d_star}))
    pd.concat(frames, ignore_index=True).to_csv(path, index=False)


def _hhd(args, net):
    from sclockdown.hhd import build_flow_graph, hhd

    if not args.tol > 0:
        raise ConfigError(f"--tol must be positive, got {args.tol}")
    return hhd(build_flow_graph(net), tol=args.tol, max_iter=getattr(args, "max_iter", None))


def cmd_hhd(args, net) -> list[str]:
    out = _out_dir(args)
    result = _hhd(args, net)
    result.write_csv(net, out)
    return ["hhd_nodes.csv", "hhd_links.csv"]


def cmd_metrics(args, net) -> list[str]:
    from sclockdown.regionmetrics import pair_table, region_table

    out = _out_dir(args)
    result = _hhd(args, net)
    region_table(net, result, flow_denominator=args.flow_denominator).to_csv(
        out / "region_metrics.csv", index=False)
    pair_table(net, result, flow_denominator=args.flow_denominator).to_csv(
        out / "pair_metrics.csv", index=False)
    return ["region_metrics.csv", "pair_metrics.csv"]


def cmd_grid(args, net) -> list[str]:
    from sclockdown.scenario import FIRST_DECLARED, LESS, MORE, experiment_multiplier_grid

    _check_multiplier("--mult-more", args.mult_more)
    _check_multiplier("--mult-less", args.mult_less)
    out = _out_dir(args)
    more = set(args.more_regions) if args.more_regions is not None else set(FIRST_DECLARED)
    groups = [(int(r), MORE if int(r) in more else LESS) for r in net.region_codes]
    spec = _spec(args, "multiplier_grid", args.duration, groups)
    df = experiment_multiplier_grid(net, spec, args.mult_more, args.mult_less, _policy(args),
                                    _value_weights(args, net), args.threads)
    df.to_csv(out / "grid.csv", index=False)
    return ["grid.csv"]


def cmd_lift_one(args, net) -> list[str]:
    from sclockdown.scenario import experiment_lift_one

    _check_multiplier("--multiplier", [args.multiplier])
    out = _out_dir(args)
    df = experiment_lift_one(net, _spec(args, "lift_one", args.window), _policy(args),
                             args.multiplier, _value_weights(args, net), args.threads)
    df.to_csv(out / "lift_one.csv", index=False)
    return ["lift_one.csv"]


def cmd_lift_two(args, net) -> list[str]:
    from sclockdown.scenario import experiment_lift_two

    _check_multiplier("--multiplier", [args.multiplier])
    codes = {int(c) for c in net.region_codes}
    for a, b in args.pairs or []:
        if a == b or a not in codes or b not in codes:
            raise ConfigError(f"invalid region pair {a}:{b}")
    out = _out_dir(args)
    df = experiment_lift_two(net, _spec(args, "lift_two", args.window), args.pairs,
                             _policy(args), args.multiplier, _value_weights(args, net),
                             args.threads)
    df.to_csv(out / "lift_two.csv", index=False)
    return ["lift_two.csv"]


def cmd_regress(args) -> tuple[list[str], dict]:
    from sclockdown.analysis import (build_regression_dataset, correlation_matrix, ols_fit,
                                     one_region_variables, regression_report,
                                     two_region_variables)

    _require(args, "regions", "lift")
    if args.table == "two_region":
        _require(args, "pairs")
    for path in (args.regions, args.lift, args.pairs):
        if path and not Path(path).is_file():
            raise ConfigError(f"input file not found: {path}")
    out = _out_dir(args)
    regions = pd.read_csv(args.regions)
    lift = pd.read_csv(args.lift)
    if args.table == "one_region":
        variables = one_region_variables(regions, lift)
        corr_cols = ["RecRatio", "GRP", "Degree", "InLink", "InLoop", "OutLink", "Potential",
                     "Sub"]
    else:
        variables = two_region_variables(pd.read_csv(args.pairs), regions, lift)
        corr_cols = ["Recov_a", "Link_ab", "Link_ba", "Pot_ab", "Pot_ba", "Sub_ab", "Sub_ba",
                     "Loop_ab", "Bi_ab", "GRP_b"]
    data = build_regression_dataset(variables, args.table, args.spec)
    result = ols_fit(data.X, data.y)
    regression_report(result, out / "regression_report.csv")
    clean = variables[corr_cols].replace([np.inf, -np.inf], np.nan).dropna()
    corr, flagged = correlation_matrix(clean)
    corr.to_csv(out / "correlations.csv")
    return ["regression_report.csv", "correlations.csv"], {
        "rows_dropped": data.dropped, "zero_variance_columns": flagged}


# --------------------------------------------------------------------------- self-check


def self_check(net, tol: float = 1e-8) -> list[str]:
    """Invariant checks on ``net``; returns the list of checks that passed.

    Raises
    ------
    NumericalError
        On the first violated invariant.
    """
    from sclockdown.hhd import build_flow_graph, hhd
    from sclockdown.prodsim import ArrayCapacity, ModelParams, ration, run_simulation
    from sclockdown.scenario import default_policy
    from sclockdown.analysis import value_added
    from sclockdown._rng import stream

    passed = []

    def check(name: str, ok: bool, detail: str = "") -> None:
        if not ok:
            raise NumericalError(f"self-check {name} failed{': ' + detail if detail else ''}")
        passed.append(name)

    pol = default_policy()
    check("policy_rates", all(abs(p.reduction_rate - p.exposure * (1 - p.work_at_home)) < 5e-4
                              for p in pol.values()))
    fg = build_flow_graph(net)
    res = hhd(fg)
    scale = float(np.max(np.abs(fg.net_flow)))
    check("hhd_identity", np.max(np.abs(fg.net_flow - res.pot_flow - res.loop_flow)) <= tol * scale)
    div = np.max(np.abs(fg.divergence(res.loop_flow)))
    check("hhd_loop_divergence_free", div <= tol * scale, f"{div:.3e}")
    sums = np.bincount(res.component, weights=res.phi)
    check("hhd_gauge", np.max(np.abs(sums)) <= tol * max(1.0, float(np.max(np.abs(res.phi)))))

    params = ModelParams()
    sim = run_simulation(net, ArrayCapacity.zero(net.n_firms), params, 10, seed=0)
    drift = np.max(np.abs(sim.series - net.p_ini) / net.p_ini)
    check("fixed_point", drift <= 1e-9, f"relative drift {drift:.3e}")
    va = value_added(sim.series, net)
    check("gdp_additivity", np.allclose(va.gdp, va.grp.sum(axis=1), rtol=0, atol=0))

    rng = stream(0, "cli.self_check")
    for _ in range(200):
        m = int(rng.integers(1, 8))
        base = rng.uniform(0.1, 2.0, m)
        orders = base * rng.uniform(0.0, 2.0, m)
        supply = float(rng.uniform(0.0, 1.5) * orders.sum())
        acc, _ = ration(orders, base, supply)
        want = min(supply, orders.sum())
        if abs(acc.sum() - want) > 1e-9 * max(1.0, want) or np.any(acc > orders + 1e-12):
            check("rationing_conservation", False)
    passed.append("rationing_conservation")
    return passed


# --------------------------------------------------------------------------- main


def version_string() -> str:
    return (f"sclockdown {__version__} (kernels: {backend_name()}; python "
            f"{platform.python_version()}; numpy {np.__version__}; scipy {scipy.__version__})")


def _fail(code: int, kind: str, message: str) -> int:
    print(json.dumps({"error": kind, "message": " ".join(str(message).split())}),
          file=sys.stderr)
    return code


def run(argv: list[str] | None = None) -> int:
    from sclockdown.analysis import RankDeficientError
    from sclockdown.hhd import ConvergenceError

    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
        if args.version:
            print(version_string())
            return 0
        if args.command is None:
            raise ConfigError("a subcommand is required (gen, sim, hhd, metrics, grid, "
                              "lift-one, lift-two, regress)")
        if args.threads is None:
            from sclockdown.scenario import default_threads
            args.threads = default_threads()
        net = None
        if args.command not in ("gen", "regress"):
            net = _load_network(args)
        extra = {}
        if args.self_check:
            if net is None:
                raise ConfigError("--self-check needs a command that loads a network")
            extra["self_check"] = self_check(net)
        handler = {"gen": cmd_gen, "sim": cmd_sim, "hhd": cmd_hhd, "metrics": cmd_metrics,
                   "grid": cmd_grid, "lift-one": cmd_lift_one, "lift-two": cmd_lift_two,
                   "regress": cmd_regress}[args.command]
        if args.command == "regress":
            outputs, info = handler(args)
            extra.update(info)
        elif net is None:
            outputs = handler(args)
        else:
            outputs = handler(args, net)
            extra["network"] = {"n_firms": net.n_firms, "n_links": net.n_links}
        write_manifest(Path(args.out), args, outputs, extra)
        return 0
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", exc)
    except (NumericalError, ConvergenceError, RankDeficientError, FloatingPointError,
            np.linalg.LinAlgError) as exc:
        return _fail(EXIT_NUMERICAL, "numerical", exc)
    except (ValueError, KeyError, FileNotFoundError, pd.errors.ParserError) as exc:
        return _fail(EXIT_CONFIG, "config", exc)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
