"""Command-line experiment runner.

Subcommands: ``simulate``, ``distance``, ``kernels``, ``chain`` and
``estimate``.  Each writes CSV (to ``--out`` or stdout) and can also save
a figure with ``--figure``.  A ``--config`` file supplies the model and
defaults for any flag through its ``[run]`` section; explicit flags win.

Exit codes: 0 on success, 1 on a usage error, 2 on a data or model error.
"""

from __future__ import annotations

import argparse
import configparser
import math
import sys
import time

import numpy as np
from scipy import stats

from . import __version__, chains, core, coupling, estimation, io, models
from .config import model_from_config, read_config, run_defaults
from .errors import PdmpError
from .rng import RandomStream

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------- argument helpers

def parse_grid(text):
    """``a:b`` (unit step), ``a:b:step`` or a comma-separated list."""
    text = text.strip()
    if not text:
        raise UsageError("empty time grid")
    if ":" in text:
        parts = [float(p) for p in text.split(":")]
        if len(parts) not in (2, 3):
            raise UsageError(f"bad grid {text!r}")
        a, b = parts[:2]
        step = parts[2] if len(parts) == 3 else 1.0
        if step <= 0 or b < a:
            raise UsageError(f"bad grid {text!r}")
        n = int(math.floor((b - a) / step + 1e-9)) + 1
        grid = np.round(a + step * np.arange(n), 12)
    else:
        grid = np.array([float(p) for p in text.split(",") if p.strip()])
    if grid.size == 0:
        raise UsageError("empty time grid")
    return grid


def parse_state(text):
    return np.array([float(v) for v in str(text).split(",")], dtype=float)


def parse_interval(text):
    lo, hi = (float(v) for v in text.split(":"))
    return lo, hi


def _common(p, model=True):
    p.add_argument("--config", help="key = value file with [model] and [run] sections")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-", help="output CSV path ('-' for stdout)")
    p.add_argument("--figure", help="also save a figure to this path")
    if model:
        p.add_argument("--model", choices=["tcp", "switching"], default="tcp")
        p.add_argument("--variant", choices=["linear_rate", "constant_rate"],
                       help="TCP jump-rate variant")
        p.add_argument("--rate", type=float, help="jump rate of the constant-rate TCP variant")


def build_parser():
    parser = _Parser(prog="pdmp", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="simulate trajectories")
    _common(p)
    p.add_argument("--x0", default="0", help="initial state, comma separated (mode last)")
    p.add_argument("--horizon", type=float, default=10.0)
    p.add_argument("--paths", type=int, default=1)
    p.add_argument("--max-jumps", type=int, default=None)

    p = sub.add_parser("distance", help="distance curves between TCP laws")
    _common(p, model=False)
    p.add_argument("--metric", choices=["w1", "w_half", "tv_upper"], required=True)
    p.add_argument("--x", type=float)
    p.add_argument("--y", type=float)
    p.add_argument("--stationary", action="store_true",
                   help="w1 only: compare the law from --x with a long-run reference")
    p.add_argument("--grid", default="1:10")
    p.add_argument("--pairs", type=int, default=10000)
    p.add_argument("--reference-size", type=int, default=100000)
    p.add_argument("--burn-in", type=float, default=50.0)
    p.add_argument("--stride", type=float, default=2.0)
    p.add_argument("--epsilon", type=float, default=coupling.DEFAULT_EPSILON)
    p.add_argument("--rate-factor", type=float, default=coupling.DEFAULT_RATE_FACTOR)
    p.add_argument("--fit-window", help="t_min:t_max for the rate fit (default: whole grid)")
    p.add_argument("--fit-out", help="write the rate fit CSV here too")
    p.add_argument("--a-samples", help="CSV of samples (w1 between two files)")
    p.add_argument("--b-samples")
    p.add_argument("--column", help="column name to read from the sample files")

    p = sub.add_parser("kernels", help="H and J kernel masses on a sweep of points")
    _common(p)
    p.add_argument("--points", default="0:5:0.5")
    p.add_argument("--interval", action="append", type=parse_interval,
                   help="lo:hi; repeat for a union (default: the whole space)")

    p = sub.add_parser("chain", help="export the embedded or observation chain")
    _common(p)
    p.add_argument("--kind", choices=["embedded", "observation"], default="embedded")
    p.add_argument("--x0", default="0")
    p.add_argument("--jumps", type=int, help="number of jumps (embedded chain)")
    p.add_argument("--horizon", type=float, help="time horizon")

    p = sub.add_parser("estimate", help="estimate the inter-jump density at a state")
    _common(p)
    p.add_argument("--chain", help="embedded chain CSV (n,Z,S); otherwise simulate one")
    p.add_argument("--x0", default="0")
    p.add_argument("--jumps", type=int, default=200000)
    p.add_argument("--x", type=float, required=True)
    p.add_argument("--a-width", type=float, default=0.2)
    p.add_argument("--blocks", type=int, default=8)
    p.add_argument("--bandwidth", type=float, help="default: n^(-1/5) times the sojourn sd")
    p.add_argument("--kernel", choices=sorted(estimation.KERNELS), default="epanechnikov")
    p.add_argument("--grid", default="0.2:1.5:0.01")
    return parser


def parse_args(argv):
    """Two-pass parse so that ``[run]`` values act as flag defaults."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        cfg = read_config(args.config)
        defaults = run_defaults(cfg)
        subparsers = parser._subparsers._group_actions[0].choices
        sub = subparsers[args.command]
        # keys meant for other subcommands are skipped; unknown keys are typos
        every = {a.dest for p in subparsers.values() for a in p._actions}
        unknown = set(defaults) - every
        if unknown:
            raise UsageError(f"[run] has unknown keys: {', '.join(sorted(unknown))}")
        known = {a.dest for a in sub._actions}
        defaults = {k: v for k, v in defaults.items() if k in known}
        for action in sub._actions:
            if isinstance(action, argparse._StoreTrueAction) and action.dest in defaults:
                flag = defaults[action.dest].strip().lower()
                if flag not in configparser.ConfigParser.BOOLEAN_STATES:
                    raise UsageError(f"[run] {action.dest}: not a boolean: {flag!r}")
                defaults[action.dest] = configparser.ConfigParser.BOOLEAN_STATES[flag]
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
        args.config_parser = cfg
    else:
        args.config_parser = None
    return args


# ---------------------------------------------------------------- model selection

def _model(args):
    cfg = args.config_parser
    if cfg is not None and cfg.has_section("model"):
        model = model_from_config(cfg)
        if args.model == "switching" and isinstance(model, models.TcpModel):
            raise UsageError("--model switching needs a switching [model] section")
    elif args.model == "switching":
        raise UsageError("--model switching requires --config with a [model] section")
    else:
        model = models.TcpModel()
    if isinstance(model, models.TcpModel) and (args.variant or args.rate is not None):
        model = models.TcpModel(args.variant or model.variant,
                                args.rate if args.rate is not None else model.r)
    return model


def _characteristics(model):
    if isinstance(model, models.TcpModel):
        return models.tcp_characteristics(model)
    return models.switching_characteristics(model)


def _x0(args, chars):
    x0 = parse_state(args.x0)
    if x0.size != chars.size:
        raise UsageError(f"--x0 needs {chars.size} comma-separated values")
    return x0


# ---------------------------------------------------------------- subcommands

def run_simulate(args):
    model = _model(args)
    chars = _characteristics(model)
    if args.max_jumps is not None:
        chars = chars.with_options(max_jumps=args.max_jumps)
    x0 = _x0(args, chars)
    if not 0 < args.horizon < math.inf or args.paths < 1:
        raise UsageError("need a positive finite --horizon and --paths >= 1")
    start = time.perf_counter()
    trajs = core.monte_carlo(chars, x0, args.horizon, args.paths, args.seed, _identity,
                             workers=core.default_workers())
    wall = time.perf_counter() - start
    io.write_trajectories(args.out, trajs, args.seed, model=chars.name, horizon=repr(args.horizon))
    if args.figure:
        from .plotting import plot_trajectories
        plot_trajectories(trajs, args.figure)
    _summary(args, f"paths={len(trajs)} total_jumps={sum(t.n_jumps for t in trajs)} "
                   f"wall_time={wall:.3f}s")


def _identity(traj):
    return traj


def _summary(args, line):
    print(line, file=sys.stderr if args.out in (None, "-") else sys.stdout)


def _fit_window(args, grid):
    if args.fit_window:
        lo, hi = parse_interval(args.fit_window)
        return lo, hi
    return float(grid.min()), float(grid.max())


def run_distance(args):
    if args.metric == "w1" and (args.a_samples or args.b_samples):
        if not (args.a_samples and args.b_samples):
            raise UsageError("give both --a-samples and --b-samples")
        a = io.read_samples(args.a_samples, args.column)
        b = io.read_samples(args.b_samples, args.column)
        value = (coupling.empirical_wasserstein(a, b, 1.0) if a.size == b.size
                 else float(stats.wasserstein_distance(a, b)))
        with io._open_out(args.out) as fh:
            io.write_header(fh, args.seed)
            fh.write("estimate,n_a,n_b\n")
            fh.write(f"{value!r},{a.size},{b.size}\n")
        _summary(args, f"w1={value!r}")
        return
    grid = parse_grid(args.grid)
    if args.x is None or (args.y is None and not args.stationary):
        raise UsageError("need --x and --y (or --stationary for w1)")
    lower = None
    n = args.pairs
    if args.metric == "w1" and args.stationary:
        est = coupling.w1_to_stationarity(args.x, grid, n, args.seed, args.reference_size,
                                          args.burn_in, args.stride)
        se = np.full(grid.size, np.nan)
    elif args.metric in ("w1", "w_half"):
        power = 1.0 if args.metric == "w1" else 0.5
        est, se = coupling.coupling_moment_curve(args.x, args.y, grid, n, args.seed, power)
    else:
        if not 0 < args.epsilon < 1:
            raise UsageError("--epsilon must lie in (0, 1)")
        est, se = coupling.tv_upper_curve(args.x, args.y, grid, n, args.seed,
                                          epsilon=args.epsilon, rate_factor=args.rate_factor,
                                          workers=core.default_workers())
        if args.x != args.y:
            lower = models.tv_lower_bound(args.x, args.y, grid)
        else:
            lower = np.zeros(grid.size)
    io.write_distance_curve(args.out, grid, est, se, n, args.seed, lower_bound=lower,
                            metric=args.metric)
    fit = None
    try:
        fit = coupling.fit_rate(grid, est, _fit_window(args, grid))
    except PdmpError as exc:
        print(f"rate fit unavailable: {exc}", file=sys.stderr)
    if fit is not None:
        stream = sys.stderr if args.out in (None, "-") else sys.stdout
        io.write_rate_fit(stream, fit)
        if args.fit_out:
            io.write_rate_fit(args.fit_out, fit, seed=args.seed)
    if args.figure:
        from .plotting import plot_distance_curve
        plot_distance_curve(grid, est, se, args.figure, lower_bound=lower, fit=fit, label=args.metric)


def run_kernels(args):
    model = _model(args)
    if not isinstance(model, models.TcpModel):
        raise UsageError("kernel sweeps need a one-dimensional model")
    chars = _characteristics(model)
    points = parse_grid(args.points)
    rows = chains.kernel_sweep(chars, points, args.interval)
    io.write_kernel_sweep(args.out, rows, args.seed, model=chars.name)
    if args.figure:
        from .plotting import plot_kernel_sweep
        plot_kernel_sweep(rows, args.figure)
    _summary(args, f"points={len(rows)} max_deviation={max(r[3] for r in rows):.3e}")


def _simulate_source(args, chars):
    x0 = _x0(args, chars)
    stream = RandomStream(args.seed, 0)
    if getattr(args, "jumps", None) is not None:
        return core.simulate_jumps(chars, x0, args.jumps, stream)
    if args.horizon is None:
        raise UsageError("give --jumps or --horizon")
    return core.simulate(chars, x0, args.horizon, stream)


def run_chain(args):
    chars = _characteristics(_model(args))
    traj = _simulate_source(args, chars)
    if args.kind == "embedded":
        chain = chains.embedded_chain(traj)
        io.write_embedded_chain(args.out, chain, args.seed, model=chars.name)
        _summary(args, f"entries={len(chain)}")
    else:
        obs = chains.observation_chain(traj, RandomStream(args.seed, 0, lane=1))
        io.write_observation_chain(args.out, obs, args.seed, has_mode=chars.has_mode,
                                   model=chars.name)
        _summary(args, f"entries={len(obs)}")


def run_estimate(args):
    grid = parse_grid(args.grid)
    f_true = None
    if args.chain:
        chain = io.read_embedded_chain(args.chain)
    else:
        model = _model(args)
        chars = _characteristics(model)
        args.horizon = None
        chain = chains.embedded_chain(_simulate_source(args, chars))
        if isinstance(model, models.TcpModel) and model.variant == "linear_rate":
            f_true = models.tcp_true_density(args.x, grid)
    part = estimation.build_partition(chain, args.x, args.a_width, args.blocks)
    est = estimation.estimate_density(chain, args.x, part, grid, args.bandwidth, args.kernel)
    io.write_density(args.out, est, args.seed, f_true=f_true)
    if args.figure:
        from .plotting import plot_density
        plot_density(grid, est.values, args.figure, f_true)
    _summary(args, f"n_used={est.n_used} bandwidth={est.bandwidth:.6g}")


COMMANDS = {
    "simulate": run_simulate,
    "distance": run_distance,
    "kernels": run_kernels,
    "chain": run_chain,
    "estimate": run_estimate,
}


def main(argv=None):
    try:
        args = parse_args(sys.argv[1:] if argv is None else argv)
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PdmpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (OSError, ValueError, configparser.Error) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK
