"""Invariant checks over a parameter grid, shared by ``optmol validate``."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from optmol.dynamics import State3, build_dynamics_generator, derivative
from optmol.liouvillian import build_block_generator, lindblad_generator3
from optmol.model import SystemParams, derive_params
from optmol.observables import (
    curl_flux,
    entropy_production_rate,
    heat_current,
    heat_current_split,
)
from optmol.steady import (
    ConsistencyError,
    DegenerateSteadyStateError,
    eliminate_coherence,
    single_excitation_check,
    steady_analytic,
    steady_from_cofactors,
    steady_numeric_oracle,
    transfer_generator_a,
)

ORACLE_TOL = 1e-10
HEAT_TOL = 1e-12
FLUX_TOL = 1e-12
ZERO_FLUX_TOL = 1e-14
GIBBS_RTOL = 1e-10
FIXED_POINT_TOL = 1e-12
POSITIVITY_TOL = 1e-10
EPR_TOL = 1e-12


@dataclass
class Check:
    name: str
    tolerance: float
    residual: float = 0.0
    points: int = 0
    failures: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def record(self, residual: float, where: str, tol: float | None = None) -> None:
        tol = self.tolerance if tol is None else tol
        self.points += 1
        if math.isnan(residual) or residual > tol:
            self.failures.append(f"{where}: residual {residual:.3e} > {tol:.1e}")
        if math.isnan(residual):
            self.residual = float("nan")
        elif not math.isnan(self.residual):
            self.residual = max(self.residual, residual)

    def fail(self, where: str, message: str, residual: float = float("nan")) -> None:
        self.points += 1
        self.failures.append(f"{where}: {message}")
        if not math.isnan(residual) and not math.isnan(self.residual):
            self.residual = max(self.residual, residual)

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "pass": self.passed,
            "residual": self.residual,
            "tolerance": self.tolerance,
            "points": self.points,
            "failures": self.failures[:5],
        }


def _max_state_diff(x, y) -> float:
    return float(
        max(
            abs(x.rho_gg - y.rho_gg),
            abs(x.rho_ee - y.rho_ee),
            abs(x.rho_ff - y.rho_ff),
            abs(x.rho_ef - y.rho_ef),
        )
    )


def check_point(p: SystemParams, checks: dict[str, Check], corrupt: bool = False) -> None:
    """Run every grid-level invariant at one parameter point."""
    where = f"lambda={p.lam:g}, T_a={p.t_a:g}, T_b={p.t_b:g}"
    d = derive_params(p)
    ss = steady_analytic(d)

    try:
        oracle = steady_numeric_oracle(lindblad_generator3(d))
        cof = steady_from_cofactors(transfer_generator_a(d))
        res = max(_max_state_diff(ss, oracle), float(np.max(np.abs(cof - ss.populations))))
        checks["oracle_agreement"].record(res, where)
    except (DegenerateSteadyStateError, ConsistencyError) as exc:
        checks["oracle_agreement"].fail(where, str(exc))

    a = transfer_generator_a(d)
    elim = eliminate_coherence(build_block_generator(d))
    checks["transfer_generator"].record(
        float(np.max(np.abs(a - elim)) / np.max(np.abs(a))), where
    )
    if corrupt:
        # negative control: perturb one rate so the flux expressions disagree
        a = a.copy()
        a[1, 2] = a[1, 2] * 1.5 + 1e-3 * d.gamma

    heat = checks["heat_currents"]
    try:
        j_a = heat_current("a", ss, d)
        j_b = heat_current("b", ss, d)
        heat.record(abs(j_a + j_b), where)
        for which, total in (("a", j_a), ("b", j_b)):
            j_p, j_c = heat_current_split(which, ss, d)
            heat.record(abs(total - j_p - j_c), where)
        epr = entropy_production_rate(j_a, j_b, p.t_a, p.t_b)
        checks["second_law"].record(max(0.0, -epr), where)
    except ConsistencyError as exc:
        heat.fail(where, str(exc), exc.residual)
        checks["second_law"].fail(where, "heat currents unavailable")

    flux = checks["flux_equivalence"]
    try:
        j = curl_flux(a, ss.populations, d)
        flux.record(0.0, where)
        if p.t_a == p.t_b:
            flux.record(abs(j), where, ZERO_FLUX_TOL)
    except ConsistencyError as exc:
        flux.fail(where, str(exc), exc.residual)

    if p.t_a == p.t_b:
        gibbs = checks["gibbs_limit"]
        t = p.t_a
        r_e = ss.rho_ee / ss.rho_gg / math.exp(-d.omega_a / t) - 1.0
        r_f = ss.rho_ff / ss.rho_gg / math.exp(-d.omega_b / t) - 1.0
        gibbs.record(max(abs(r_e), abs(r_f)), where)
        gibbs.record(abs(ss.rho_ef), where, ZERO_FLUX_TOL)

    rate = derivative(State3(ss.rho_gg, ss.rho_ee, ss.rho_ff, ss.rho_ef), build_dynamics_generator(d))
    checks["fixed_point"].record(float(np.max(np.abs(rate.to_vector()))), where)
    checks["positivity"].record(max(0.0, -ss.min_eigenvalue), where)


GRID_CHECKS = {
    "oracle_agreement": ORACLE_TOL,
    "transfer_generator": 1e-11,
    "heat_currents": HEAT_TOL,
    "flux_equivalence": FLUX_TOL,
    "second_law": EPR_TOL,
    "gibbs_limit": GIBBS_RTOL,
    "fixed_point": FIXED_POINT_TOL,
    "positivity": POSITIVITY_TOL,
}


@dataclass
class ValidationReport:
    checks: list[Check]
    points: int
    fock: dict | None = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def as_dict(self) -> dict:
        grid = [c for c in self.checks if c.name in GRID_CHECKS]
        worst = max((c.residual for c in grid), default=0.0)
        out = {
            "points": self.points,
            "checks_passed": sum(c.passed for c in self.checks),
            "checks_failed": sum(not c.passed for c in self.checks),
            "worst_residual": worst,
            "pass": self.passed,
        }
        if self.fock is not None:
            out.update(self.fock)
        out["checks"] = [c.as_dict() for c in self.checks]
        return out


def run_validation(
    grid: list[SystemParams],
    fock: SystemParams | None = None,
    n_max: int = 4,
    corrupt: bool = False,
) -> ValidationReport:
    checks = {name: Check(name, tol) for name, tol in GRID_CHECKS.items()}
    for p in grid:
        check_point(p, checks, corrupt=corrupt)
    ordered = list(checks.values())
    fock_fields = None
    if fock is not None:
        fc = single_excitation_check(fock, n_max)
        chk = Check("fock_leakage", 5.0 * fc.leakage)
        chk.record(fc.deviation, f"n_max={n_max}, T_b={fock.t_b:g}")
        ordered.append(chk)
        fock_fields = {
            "fock_n_max": n_max,
            "fock_t_b": fock.t_b,
            "fock_leakage": fc.leakage,
            "fock_deviation": fc.deviation,
        }
    return ValidationReport(checks=ordered, points=len(grid), fock=fock_fields)
