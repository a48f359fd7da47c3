"""Command-line front end: ``optmol {steady,sweep,dynamics,validate}``.

All numbers are in units of the cavity frequency omega. Exit codes: 0 on
success, 1 when a validation check fails, 2 for bad input.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Iterator, TextIO

import numpy as np

from optmol.dynamics import IntegrationError, State3, build_dynamics_generator, iter_trajectory
from optmol.model import ParameterError, SystemParams, derive_params
from optmol.observables import OBSERVABLE_COLUMNS, evaluate_point
from optmol.steady import steady_analytic
from optmol.validation import run_validation

EXIT_OK, EXIT_FAILED, EXIT_BAD_INPUT = 0, 1, 2

BASE_DEFAULTS = {"omega": 1.0, "lambda": 0.1, "gamma": 0.1, "ta": 0.2, "tb": 0.2, "qfi_step": 1e-6}

FIG_LAMBDAS = [0.1, 0.2, 0.4]
FIG_DT = {"name": "delta_t", "min": 0.0, "max": 0.8, "count": 81}

PRESETS: dict[str, dict] = {
    "fig2a": {"gamma": 0.1, "ta": 0.2, "axes": [{"name": "lambda", "values": FIG_LAMBDAS}, FIG_DT]},
    "fig2b": {"gamma": 0.1, "ta": 0.2, "axes": [{"name": "lambda", "values": FIG_LAMBDAS}, FIG_DT]},
    "fig3": {"gamma": 0.1, "ta": 0.2, "axes": [{"name": "lambda", "values": FIG_LAMBDAS}, FIG_DT]},
    "fig4": {
        "gamma": 0.1,
        "ta": 0.2,
        "axes": [
            {"name": "lambda", "min": 0.05, "max": 0.5, "count": 50},
            {"name": "delta_t", "min": 0.0, "max": 0.8, "count": 50},
        ],
    },
}

VALIDATE_GRID = [
    {"name": "lambda", "min": 0.05, "max": 0.5, "count": 20},
    {"name": "delta_t", "min": 0.0, "max": 0.8, "count": 20},
]

CSV_HEADER = ("delta_t", "lambda") + OBSERVABLE_COLUMNS
TRAJECTORY_HEADER = (
    "t",
    "rho_gg",
    "rho_ee",
    "rho_ff",
    "re_rho_ef",
    "im_rho_ef",
    "abs_rho_ge",
    "abs_rho_gf",
)


class UsageError(ValueError):
    pass


def fmt(x: float) -> str:
    """17 significant digits: parses back to the identical double."""
    x = float(x)
    if x != x:
        return "nan"
    return format(x, ".17g")


# ---------------------------------------------------------------------------
# Sweep configuration


@dataclass(frozen=True)
class SweepAxis:
    name: str
    values: tuple[float, ...]

    @classmethod
    def from_dict(cls, raw: dict) -> "SweepAxis":
        name = raw.get("name")
        if name not in ("delta_t", "lambda"):
            raise UsageError(f"sweep axis name must be 'delta_t' or 'lambda', got {name!r}")
        if "values" in raw:
            values = tuple(float(v) for v in raw["values"])
            if not values:
                raise UsageError(f"axis {name}: empty value list")
            return cls(name, values)
        try:
            lo, hi, count = float(raw["min"]), float(raw["max"]), int(raw["count"])
        except KeyError as exc:
            raise UsageError(f"axis {name}: missing {exc.args[0]!r}") from None
        if count < 2:
            raise UsageError(f"axis {name}: count must be >= 2, got {count}")
        if not lo < hi:
            raise UsageError(f"axis {name}: min must be < max, got {lo} >= {hi}")
        return cls(name, tuple(float(v) for v in np.linspace(lo, hi, count)))

    @classmethod
    def parse(cls, text: str) -> "SweepAxis":
        """``name=min:max:count`` or ``name=v1,v2,...``."""
        name, sep, rest = text.partition("=")
        if not sep:
            raise UsageError(f"axis {text!r} must look like name=min:max:count")
        try:
            if ":" in rest:
                lo, hi, count = rest.split(":")
                return cls.from_dict({"name": name, "min": lo, "max": hi, "count": count})
            return cls.from_dict({"name": name, "values": rest.split(",")})
        except ValueError as exc:
            if isinstance(exc, UsageError):
                raise
            raise UsageError(f"cannot parse axis {text!r}: {exc}") from None


@dataclass(frozen=True)
class SweepConfig:
    base: SystemParams
    axes: tuple[SweepAxis, ...]
    qfi_step: float = 1e-6
    outputs: tuple[str, ...] = OBSERVABLE_COLUMNS

    def __post_init__(self) -> None:
        if not 1 <= len(self.axes) <= 2:
            raise UsageError("a sweep needs one or two axes")
        unknown = set(self.outputs) - set(OBSERVABLE_COLUMNS)
        if unknown:
            raise UsageError(f"unknown output columns: {sorted(unknown)}")

    def points(self) -> list[SystemParams]:
        """Grid in row-major order (first axis outermost)."""
        grids = np.meshgrid(*[ax.values for ax in self.axes], indexing="ij")
        flat = [g.ravel() for g in grids]
        out = []
        for k in range(flat[0].size):
            changes = {}
            for ax, vals in zip(self.axes, flat):
                v = float(vals[k])
                if ax.name == "lambda":
                    changes["lam"] = v
                else:
                    changes["t_b"] = self.base.t_a + v
            try:
                out.append(self.base.replace(**changes))
            except ParameterError as exc:
                raise UsageError(f"grid point {changes}: {exc}") from None
        return out

    @property
    def columns(self) -> tuple[str, ...]:
        return ("delta_t", "lambda") + tuple(c for c in OBSERVABLE_COLUMNS if c in self.outputs)


# ---------------------------------------------------------------------------
# Argument handling


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--omega", type=float, help="cavity frequency (default 1.0)")
    p.add_argument("--lambda", dest="lambda_", type=float, help="inter-cavity coupling")
    p.add_argument("--gamma", type=float, help="reservoir coupling rate")
    p.add_argument("--ta", type=float, help="temperature of reservoir a")
    p.add_argument("--tb", type=float, help="temperature of reservoir b")
    p.add_argument("--qfi-step", type=float, help="finite-difference step for the QFI (default 1e-6)")
    p.add_argument("--out", default="-", help="output path (default: standard output)")
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--preset", choices=sorted(PRESETS), help="bundled sweep presets (gamma=0.1, T_a=0.2)")
    p.add_argument("--threads", type=int, default=1, help="worker processes for grid evaluation")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="optmol", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("steady", help="steady state and observables at one point (JSON)")
    _add_common(p)

    p = sub.add_parser("sweep", help="observables over a 1D or 2D parameter grid (CSV)")
    _add_common(p)
    p.add_argument(
        "--axis",
        action="append",
        metavar="NAME=MIN:MAX:COUNT",
        help="sweep axis over delta_t or lambda; give once or twice (outer first)",
    )
    p.add_argument("--outputs", help="comma-separated subset of observable columns")

    p = sub.add_parser("dynamics", help="RK4 trajectory from an initial state (CSV)")
    _add_common(p)
    p.add_argument(
        "--initial",
        default="mixed",
        choices=["ground", "mixed", "excited-e", "excited-f", "custom"],
    )
    p.add_argument("--populations", help="custom initial populations gg,ee,ff")
    p.add_argument("--coherence", help="custom initial rho_ef as re,im")
    p.add_argument("--t-final", type=float, help="final time (default 200/gamma)")
    p.add_argument("--dt", type=float, default=0.01, help="RK4 step (default 0.01)")
    p.add_argument("--stride", type=int, default=100, help="write every n-th step")

    p = sub.add_parser("validate", help="invariant checks over a grid (JSON)")
    _add_common(p)
    p.add_argument("--axis", action="append", metavar="NAME=MIN:MAX:COUNT")
    p.add_argument("--fock", action="store_true", help="also run the Fock-space leakage check")
    p.add_argument("--nmax", type=int, default=4, help="Fock truncation per supermode")
    p.add_argument("--fock-tb", type=float, default=1.0, help="T_b for the Fock check")
    p.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    return parser


def _load_config(args: argparse.Namespace) -> dict:
    """Defaults < preset < config file < explicit flags."""
    cfg: dict = dict(BASE_DEFAULTS)
    file_cfg: dict = {}
    if args.config:
        try:
            with open(args.config) as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(file_cfg, dict):
            raise UsageError("config file must hold a JSON object")
    preset = args.preset or file_cfg.get("preset")
    if preset is not None:
        if preset not in PRESETS:
            raise UsageError(f"unknown preset {preset!r}")
        cfg.update(PRESETS[preset])
    base = file_cfg.get("base", {})
    cfg.update({k: v for k, v in file_cfg.items() if k not in ("base", "preset")})
    cfg.update(base)
    flags = {
        "omega": args.omega,
        "lambda": args.lambda_,
        "gamma": args.gamma,
        "ta": args.ta,
        "tb": args.tb,
        "qfi_step": args.qfi_step,
    }
    cfg.update({k: v for k, v in flags.items() if v is not None})
    if getattr(args, "axis", None):
        cfg["axes"] = [SweepAxis.parse(a) for a in args.axis]
    if getattr(args, "outputs", None):
        cfg["outputs"] = [s.strip() for s in args.outputs.split(",") if s.strip()]
    if "outputs" in cfg:
        cfg["outputs"] = ["coherence_abs" if o == "coherence" else o for o in cfg["outputs"]]
    return cfg


def _params(cfg: dict) -> SystemParams:
    try:
        return SystemParams(
            omega=float(cfg["omega"]),
            lam=float(cfg["lambda"]),
            gamma=float(cfg["gamma"]),
            t_a=float(cfg["ta"]),
            t_b=float(cfg["tb"]),
        )
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def _axes(cfg: dict, default: list[dict] | None = None) -> tuple[SweepAxis, ...]:
    raw = cfg.get("axes", default)
    if not raw:
        raise UsageError("no sweep axes given (use --axis or --preset)")
    return tuple(a if isinstance(a, SweepAxis) else SweepAxis.from_dict(a) for a in raw)


@contextmanager
def _output(path: str) -> Iterator[TextIO]:
    if path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _map_points(fn, items: list, threads: int) -> list:
    if threads <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * threads))))


# ---------------------------------------------------------------------------
# Commands


def steady_report(p: SystemParams, qfi_step: float = 1e-6) -> dict:
    """Flat JSON-ready record of the steady state, observables and point checks."""
    d = derive_params(p)
    ss = steady_analytic(d)
    rec = evaluate_point(p, qfi_step)
    val = run_validation([p])
    out = {
        "omega": p.omega,
        "lambda": p.lam,
        "gamma": p.gamma,
        "t_a": p.t_a,
        "t_b": p.t_b,
        "rho_gg": ss.rho_gg,
        "rho_ee": ss.rho_ee,
        "rho_ff": ss.rho_ff,
        "re_rho_ef": ss.rho_ef.real,
        "im_rho_ef": ss.rho_ef.imag,
        "normalization_n": ss.normalization_n,
        "min_eigenvalue": ss.min_eigenvalue,
    }
    for name in OBSERVABLE_COLUMNS + ("qfi_classical", "qfi_coherent"):
        out[name] = getattr(rec, name)
    out["checks"] = [
        {"name": c.name, "pass": c.passed, "residual": c.residual} for c in val.checks
    ]
    out["checks"].append(
        {"name": "observables", "pass": not rec.failures, "residual": 0.0 if not rec.failures else float("nan")}
    )
    return out


def cmd_steady(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    p = _params(cfg)
    report = steady_report(p, float(cfg["qfi_step"]))
    with _output(args.out) as fh:
        fh.write(json.dumps(report, indent=2) + "\n")
    return EXIT_OK if all(c["pass"] for c in report["checks"]) else EXIT_FAILED


def _sweep_row(job: tuple[SystemParams, float, tuple[str, ...]]) -> tuple[list[float], tuple[str, ...]]:
    p, step, outputs = job
    rec = evaluate_point(p, step, outputs)
    return [getattr(rec, c) for c in OBSERVABLE_COLUMNS if c in outputs], rec.failures


def run_sweep(config: SweepConfig, out: TextIO, threads: int = 1) -> list[str]:
    """Write the sweep CSV; returns the per-point failure messages."""
    points = config.points()
    rows = _map_points(
        _sweep_row, [(p, config.qfi_step, config.outputs) for p in points], threads
    )
    out.write(",".join(config.columns) + "\n")
    failures = []
    for p, (vals, fails) in zip(points, rows):
        out.write(",".join(fmt(v) for v in [p.delta_t, p.lam, *vals]) + "\n")
        failures.extend(f"delta_t={p.delta_t:g}, lambda={p.lam:g}: {f}" for f in fails)
    return failures


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    config = SweepConfig(
        base=_params(cfg),
        axes=_axes(cfg),
        qfi_step=float(cfg["qfi_step"]),
        outputs=tuple(cfg.get("outputs", OBSERVABLE_COLUMNS)),
    )
    config.points()  # validate the whole grid before writing anything
    with _output(args.out) as fh:
        failures = run_sweep(config, fh, args.threads)
    for f in failures:
        print(f"optmol sweep: {f}", file=sys.stderr)
    n = len(config.points())
    print(f"optmol sweep: {n} points, {len(failures)} consistency failures", file=sys.stderr)
    return EXIT_OK


def initial_state(kind: str, populations: str | None = None, coherence: str | None = None) -> State3:
    if kind == "ground":
        return State3(1.0, 0.0, 0.0)
    if kind == "mixed":
        return State3(1 / 3, 1 / 3, 1 / 3)
    if kind == "excited-e":
        return State3(0.0, 1.0, 0.0)
    if kind == "excited-f":
        return State3(0.0, 0.0, 1.0)
    if kind != "custom":
        raise UsageError(f"unknown initial state {kind!r}")
    if populations is None:
        raise UsageError("--initial custom requires --populations gg,ee,ff")
    try:
        gg, ee, ff = (float(x) for x in populations.split(","))
        re, im = (float(x) for x in coherence.split(",")) if coherence else (0.0, 0.0)
    except ValueError:
        raise UsageError("cannot parse --populations/--coherence") from None
    if abs(gg + ee + ff - 1.0) > 1e-12:
        raise UsageError(f"custom populations must sum to 1, got {gg + ee + ff!r}")
    state = State3(gg, ee, ff, complex(re, im))
    if np.linalg.eigvalsh(state.matrix())[0] < -1e-12:
        raise UsageError("custom initial state is not positive semidefinite")
    return state


def cmd_dynamics(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    p = _params(cfg)
    gen = build_dynamics_generator(derive_params(p))
    if not 0 < args.dt <= gen.max_stable_dt:
        raise UsageError(
            f"--dt {args.dt} exceeds the stability bound 0.1/max(gamma*S, omega_A) = {gen.max_stable_dt:.6g}"
        )
    if args.stride < 1:
        raise UsageError("--stride must be >= 1")
    t_final = args.t_final if args.t_final is not None else 200.0 / p.gamma
    state = initial_state(args.initial, args.populations, args.coherence)
    n_steps = round(t_final / args.dt)
    with _output(args.out) as fh:
        fh.write(",".join(TRAJECTORY_HEADER) + "\n")
        try:
            for t, x in iter_trajectory(state, gen, n_steps * args.dt, args.dt, args.stride):
                s = State3.from_vector(x)
                row = [t, s.rho_gg, s.rho_ee, s.rho_ff, s.rho_ef.real, s.rho_ef.imag, abs(s.rho_ge), abs(s.rho_gf)]
                fh.write(",".join(fmt(v) for v in row) + "\n")
        except IntegrationError as exc:
            print(f"optmol dynamics: integration failed: {exc}", file=sys.stderr)
            return EXIT_FAILED
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    base = _params(cfg)
    config = SweepConfig(base=base, axes=_axes(cfg, VALIDATE_GRID))
    grid = config.points()
    fock = base.replace(t_b=args.fock_tb) if args.fock else None
    if args.fock and not 1 <= args.nmax <= 6:
        raise UsageError("--nmax must be in [1, 6]")
    report = run_validation(grid, fock=fock, n_max=args.nmax, corrupt=args.inject_fault)
    with _output(args.out) as fh:
        fh.write(json.dumps(report.as_dict(), indent=2) + "\n")
    for c in report.checks:
        if not c.passed:
            print(f"optmol validate: check {c.name} failed: {c.failures[0]}", file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_FAILED


COMMANDS = {
    "steady": cmd_steady,
    "sweep": cmd_sweep,
    "dynamics": cmd_dynamics,
    "validate": cmd_validate,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ParameterError) as exc:
        print(f"optmol {args.command}: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
