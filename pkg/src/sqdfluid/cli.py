"""Command-line front end: ``sqdfluid {solve,wait,diag,simulate,compare,decay}``.

Settings come from built-in defaults, then a TOML file (``--config`` or the
``SQD_CONFIG`` environment variable), then command-line flags.  A TOML file
holds flat keys named like the long flags (``ell-max`` or ``ell_max``) and
may add a table per subcommand, e.g. ``[simulate]``, whose keys win over the
flat ones.  Errors are reported as one line ``error: <kind>: <message>`` on
stderr with a nonzero exit status.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import tomli

from . import perf, sim
from .distributions import DistributionError, parse_dist
from .invariant import InvariantState, ParameterError, SolverError, solve, verify
from .laplace import QuadratureError

log = logging.getLogger("sqdfluid")

EXIT_VERIFY = 1
EXIT_USAGE = 2
EXIT_NUMERIC = 3

DEFAULTS = {
    "lambda": 0.5,
    "d": 2,
    "dist": "exp",
    "tol": 1e-12,
    "cutoff": 1e-12,
    "ell_max": 50,
    "l0": 6,
    "r0": 20.0,
    "delta": 0.003,
    "lag": "difference",
    "n_servers": 600,
    "horizon": 15.0,
    "realizations": 600,
    "seed": 0,
    "grid_step": 0.05,
    "sim_levels": 8,
    "initial": "one-job",
    "without_replacement": False,
    "jobs": 1,
    "format": "csv",
    "out": None,
    "state": None,
    "window": None,
    "fast": False,
    "beta": None,
    "iterations": 60,
}

FAST_PROFILE = {"n_servers": 300, "realizations": 300}

COMMANDS = ("solve", "wait", "diag", "simulate", "compare", "decay")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False, argument_default=argparse.SUPPRESS)
    g = common.add_argument_group("model")
    g.add_argument("--lambda", dest="lambda", type=float, help="arrival rate per server, in (0, 1)")
    g.add_argument("--d", type=int, help="number of sampled queues")
    g.add_argument("--dist", help="service law, e.g. exp, weibull:a=0.5, lognormal:sigma=1/3")
    g.add_argument("--tol", type=float, help="quadrature tolerance")
    g.add_argument("--cutoff", type=float, help="levels with s below this are reported as 0")
    g.add_argument("--ell-max", dest="ell_max", type=int, help="maximum solved level")
    g = common.add_argument_group("output")
    g.add_argument("--format", choices=("csv", "json"))
    g.add_argument("--out", help="output path (default: stdout)")
    g.add_argument("--config", help="TOML config file (default: $SQD_CONFIG)")
    g.add_argument("-v", "--verbose", action="store_true")

    waitp = _Parser(add_help=False, argument_default=argparse.SUPPRESS)
    g = waitp.add_argument_group("waiting time")
    g.add_argument("--l0", type=int, help="levels in the waiting-time sum")
    g.add_argument("--r0", type=float, help="lag integration range")
    g.add_argument("--delta", type=float, help="lag grid step")
    g.add_argument("--lag", choices=("difference", "sum"), help="residual-work pairing")

    simp = _Parser(add_help=False, argument_default=argparse.SUPPRESS)
    g = simp.add_argument_group("simulation")
    g.add_argument("--n-servers", dest="n_servers", type=int)
    g.add_argument("--horizon", type=float)
    g.add_argument("--realizations", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--grid-step", dest="grid_step", type=float)
    g.add_argument("--sim-levels", dest="sim_levels", type=int, help="track tails for l = 1..this")
    g.add_argument("--initial", choices=[i.value for i in sim.Initial])
    g.add_argument("--without-replacement", dest="without_replacement", action="store_true")
    g.add_argument("--jobs", type=int, help="worker processes (result does not depend on it)")
    g.add_argument("--fast", action="store_true", help="N=300 with 300 realizations")

    parser = _Parser(prog="sqdfluid", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("solve", parents=[common], help="solve the invariant state")
    sub.add_parser("wait", parents=[common, waitp], help="mean virtual waiting time (d=2)")
    sub.add_parser("diag", parents=[common], help="tails and decay diagnostic per level")
    sub.add_parser("simulate", parents=[common, simp], help="Monte Carlo tail fractions")
    p = sub.add_parser("compare", parents=[common, simp], help="simulation against a solved state")
    p.add_argument("--state", help="solved-state JSON (default: solve now)", default=argparse.SUPPRESS)
    p.add_argument("--window", default=argparse.SUPPRESS,
                   help="averaging window LO,HI (default: last third of the horizon)")
    p = sub.add_parser("decay", parents=[common], help="decay exponent for a power-law tail")
    p.add_argument("--beta", type=float, default=argparse.SUPPRESS, help="tail index")
    p.add_argument("--iterations", type=int, default=argparse.SUPPRESS)
    return parser


def _load_config(path: str | None, command: str) -> dict:
    if not path:
        return {}
    try:
        with open(path, "rb") as fh:
            data = tomli.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    except tomli.TOMLDecodeError as exc:
        raise UsageError(f"bad TOML in {path}: {exc}") from None
    flat = {k: v for k, v in data.items() if not isinstance(v, dict)}
    flat.update(data.get(command, {}))
    out = {}
    for key, value in flat.items():
        key = key.replace("-", "_")
        if key not in DEFAULTS:
            raise UsageError(f"unknown config key {key!r} in {path}")
        out[key] = value
    return out


def resolve(argv=None) -> dict:
    """Merge defaults, config file and flags into one settings dict."""
    args = vars(build_parser().parse_args(argv))
    command = args.pop("command")
    config_path = args.pop("config", None) or os.environ.get("SQD_CONFIG")
    settings = dict(DEFAULTS)
    from_file = _load_config(config_path, command)
    fast = args.get("fast", from_file.get("fast", False))
    if fast:
        settings.update(FAST_PROFILE)
    settings.update(from_file)
    settings.update(args)
    settings["command"] = command
    return settings


def _write(text: str, path: str | None):
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _dist(settings):
    return parse_dist(str(settings["dist"]))


def _solve(settings) -> InvariantState:
    return solve(float(settings["lambda"]), int(settings["d"]), _dist(settings),
                 cutoff=float(settings["cutoff"]), ell_max=int(settings["ell_max"]),
                 tol=float(settings["tol"]))


def _state_csv(state: InvariantState) -> str:
    return perf.diagnostics_csv(state)


def cmd_solve(settings) -> int:
    state = _solve(settings)
    report = verify(state)
    out = settings["out"]
    if out is not None:
        Path(out).write_text(state.to_json() + "\n")
        Path(out).with_suffix(".csv").write_text(_state_csv(state))
    elif settings["format"] == "json":
        sys.stdout.write(state.to_json() + "\n")
    else:
        sys.stdout.write(_state_csv(state))
    if not report.passed:
        print(f"error: verify: {report.summary()}", file=sys.stderr)
        return EXIT_VERIFY
    return 0


def cmd_wait(settings) -> int:
    if int(settings["d"]) != 2:
        raise perf.UnsupportedMeasure(
            f"mean virtual waiting time is only defined for d=2, got d={settings['d']}")
    cfg = perf.WaitConfig(int(settings["l0"]), float(settings["r0"]), float(settings["delta"]),
                          str(settings["lag"]))
    state = _solve(settings)
    value = perf.mean_virtual_wait(state, cfg)
    if settings["format"] == "json":
        _write(json.dumps({"W*": value}) + "\n", settings["out"])
    else:
        _write(perf.wait_csv(value), settings["out"])
    return 0


def cmd_diag(settings) -> int:
    state = _solve(settings)
    if settings["format"] == "json":
        rows = [{"ell": ell, "s_star": state.s(ell), "H": perf.h_diagnostic(state, ell)}
                for ell in range(1, state.levels + 1)]
        text = json.dumps({"levels": rows, "tail": perf.tail_condition(state.dist, state.d)})
        _write(text.replace("NaN", "null") + "\n", settings["out"])
    else:
        _write(_state_csv(state), settings["out"])
    return 0


def _sim_config(settings) -> sim.SimConfig:
    return sim.SimConfig(
        N=int(settings["n_servers"]), d=int(settings["d"]), lam=float(settings["lambda"]),
        dist=_dist(settings), horizon=float(settings["horizon"]),
        grid_step=float(settings["grid_step"]), realizations=int(settings["realizations"]),
        seed=int(settings["seed"]), ell_max=int(settings["sim_levels"]),
        initial=sim.Initial(settings["initial"]),
        replace=not bool(settings["without_replacement"]))


def cmd_simulate(settings) -> int:
    result = sim.run(_sim_config(settings), jobs=int(settings["jobs"]))
    if settings["format"] == "json":
        text = json.dumps({"config": result.config.as_dict(),
                           "times": result.times.tolist(),
                           "tail_fraction": result.tail_fraction.tolist(),
                           "stderr": result.stderr.tolist()})
        _write(text + "\n", settings["out"])
    else:
        _write(result.to_csv(), settings["out"])
    return 0


def _window(value):
    if value is None:
        return None
    if isinstance(value, str):
        parts = value.split(",")
    else:
        parts = list(value)
    if len(parts) != 2:
        raise UsageError(f"window needs two numbers LO,HI, got {value!r}")
    lo, hi = (float(p) for p in parts)
    if not lo <= hi:
        raise UsageError(f"window needs LO <= HI, got {value!r}")
    return lo, hi


def cmd_compare(settings) -> int:
    window = _window(settings["window"])
    if settings["state"]:
        try:
            state = InvariantState.from_json(Path(settings["state"]).read_text())
        except OSError as exc:
            raise UsageError(f"cannot read state {settings['state']}: {exc.strerror}") from None
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise UsageError(f"malformed state file {settings['state']}: {exc}") from None
    else:
        state = _solve(settings)
    cfg = _sim_config(settings)
    if cfg.dist != state.dist or cfg.d != state.d or cfg.lam != state.lam:
        raise sim.ComparisonError(
            f"state (lambda={state.lam}, d={state.d}, dist={state.dist.spec()}) does not match "
            f"simulation (lambda={cfg.lam}, d={cfg.d}, dist={cfg.dist.spec()})")
    report = sim.compare(sim.run(cfg, jobs=int(settings["jobs"])), state, window)
    if settings["format"] == "json":
        text = json.dumps({"window": list(report.window), "ell": report.ell,
                           "sim_mean": report.simulated, "stderr": report.stderr,
                           "s_star": report.s_star, "gap": report.gap,
                           "gap_se": [v if math.isfinite(v) else repr(v) for v in report.gap_se]})
        _write(text + "\n", settings["out"])
    else:
        _write(report.to_csv(), settings["out"])
    return 0


def cmd_decay(settings) -> int:
    if settings["beta"] is None:
        raise UsageError("decay needs --beta")
    beta, d = float(settings["beta"]), int(settings["d"])
    x, j, eta = perf.characteristic_root(beta, d)
    n_d = perf.decay_exponent(beta, d)
    growth = perf.recursion_growth(beta, d, int(settings["iterations"]))
    row = {"beta": beta, "d": d, "j": j, "eta": eta, "root": x, "gamma2": 1.0 / x,
           "n_d": n_d, "recursion_growth": growth}
    if settings["format"] == "json":
        _write(json.dumps(row) + "\n", settings["out"])
    else:
        head = ",".join(row)
        vals = ",".join(str(v) if isinstance(v, int) else repr(float(v)) for v in row.values())
        _write(f"{head}\n{vals}\n", settings["out"])
    return 0


HANDLERS = {
    "solve": cmd_solve,
    "wait": cmd_wait,
    "diag": cmd_diag,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "decay": cmd_decay,
}

_KINDS = (
    (UsageError, "usage", EXIT_USAGE),
    (ParameterError, "parameter", EXIT_USAGE),
    (DistributionError, "distribution", EXIT_USAGE),
    (perf.UnsupportedMeasure, "unsupported-measure", EXIT_USAGE),
    (sim.ComparisonError, "comparison", EXIT_USAGE),
    (SolverError, "solver", EXIT_NUMERIC),
    (QuadratureError, "quadrature", EXIT_NUMERIC),
    (OSError, "io", EXIT_USAGE),
    (ValueError, "value", EXIT_USAGE),
)


def _fail(kind: str, message: str, code: int) -> int:
    print(f"error: {kind}: {' '.join(str(message).split())}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    try:
        settings = resolve(argv)
        logging.basicConfig(level=logging.INFO if settings.get("verbose") else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return HANDLERS[settings["command"]](settings)
    except SystemExit as exc:      # --help
        return int(exc.code or 0)
    except Exception as exc:
        for cls, kind, code in _KINDS:
            if isinstance(exc, cls):
                return _fail(kind, exc, code)
        return _fail("internal", f"{type(exc).__name__}: {exc}", EXIT_NUMERIC)


if __name__ == "__main__":
    sys.exit(main())
