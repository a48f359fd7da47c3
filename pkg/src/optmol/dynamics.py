"""Time evolution of the single-excitation density matrix.

The six equations of motion (three populations, rho_ef, and the decoupled
pair rho_ge, rho_gf) are integrated with fixed-step classical RK4.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from optmol.liouvillian import BlockGenerator, build_block_generator
from optmol.model import DerivedParams


class IntegrationError(RuntimeError):
    def __init__(self, message: str, time: float):
        super().__init__(f"{message} at t={time!r}")
        self.time = time


@dataclass(frozen=True)
class State3:
    rho_gg: float
    rho_ee: float
    rho_ff: float
    rho_ef: complex = 0j
    rho_ge: complex = 0j
    rho_gf: complex = 0j

    def to_vector(self) -> np.ndarray:
        """Real 9-vector (gg, ee, ff, Re ef, Im ef, Re ge, Im ge, Re gf, Im gf)."""
        return np.array(
            [
                self.rho_gg,
                self.rho_ee,
                self.rho_ff,
                self.rho_ef.real,
                self.rho_ef.imag,
                self.rho_ge.real,
                self.rho_ge.imag,
                self.rho_gf.real,
                self.rho_gf.imag,
            ]
        )

    @classmethod
    def from_vector(cls, x: np.ndarray) -> "State3":
        return cls(
            rho_gg=float(x[0]),
            rho_ee=float(x[1]),
            rho_ff=float(x[2]),
            rho_ef=complex(x[3], x[4]),
            rho_ge=complex(x[5], x[6]),
            rho_gf=complex(x[7], x[8]),
        )

    @classmethod
    def from_matrix(cls, rho: np.ndarray) -> "State3":
        return cls(
            rho_gg=float(rho[0, 0].real),
            rho_ee=float(rho[1, 1].real),
            rho_ff=float(rho[2, 2].real),
            rho_ef=complex(rho[1, 2]),
            rho_ge=complex(rho[0, 1]),
            rho_gf=complex(rho[0, 2]),
        )

    def matrix(self) -> np.ndarray:
        rho = np.diag([self.rho_gg, self.rho_ee, self.rho_ff]).astype(complex)
        rho[1, 2], rho[0, 1], rho[0, 2] = self.rho_ef, self.rho_ge, self.rho_gf
        rho[2, 1], rho[1, 0], rho[2, 0] = (
            np.conj(self.rho_ef),
            np.conj(self.rho_ge),
            np.conj(self.rho_gf),
        )
        return rho

    @property
    def trace(self) -> float:
        return self.rho_gg + self.rho_ee + self.rho_ff


STATE_DIM = 9


@dataclass(frozen=True)
class DynamicsGenerator:
    """Block generator plus the 2x2 complex generator of (rho_ge, rho_gf)."""

    block: BlockGenerator
    ground_coherence: np.ndarray
    omega_a: float
    loss_rate: float
    gamma: float

    @property
    def matrix(self) -> np.ndarray:
        """Real 9x9 generator acting on ``State3.to_vector()``."""
        m = np.zeros((STATE_DIM, STATE_DIM))
        m[:5, :5] = self.block.matrix
        c = self.ground_coherence
        # complex z' = c z, written on (Re z_ge, Im z_ge, Re z_gf, Im z_gf)
        for i in range(2):
            for j in range(2):
                r, s = 5 + 2 * i, 5 + 2 * j
                m[r, s], m[r, s + 1] = c[i, j].real, -c[i, j].imag
                m[r + 1, s], m[r + 1, s + 1] = c[i, j].imag, c[i, j].real
        return m

    @property
    def max_stable_dt(self) -> float:
        return 0.1 / max(self.loss_rate, self.omega_a)


def build_dynamics_generator(d: DerivedParams) -> DynamicsGenerator:
    g = d.gamma
    npa, npb = d.n_plus_A, d.n_plus_B
    c = np.array(
        [
            [1j * d.omega_a - g * (2 * npa + npb + 1), -g * d.n_minus_B],
            [-g * d.n_minus_A, 1j * d.omega_b - g * (2 * npb + npa + 1)],
        ]
    )
    return DynamicsGenerator(
        block=build_block_generator(d),
        ground_coherence=c,
        omega_a=d.omega_a,
        loss_rate=g * d.loss_sum,
        gamma=g,
    )


def derivative(state: State3, gen: DynamicsGenerator) -> State3:
    """Time derivative of every stored element (returned as a State3 of rates)."""
    x = state.to_vector()
    pops_u = x[:5]
    dx5 = gen.block.matrix @ pops_u
    z = np.array([state.rho_ge, state.rho_gf])
    dz = gen.ground_coherence @ z
    return State3(
        rho_gg=float(dx5[0]),
        rho_ee=float(dx5[1]),
        rho_ff=float(dx5[2]),
        rho_ef=complex(dx5[3], dx5[4]),
        rho_ge=complex(dz[0]),
        rho_gf=complex(dz[1]),
    )


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (len(times), 9) real vectors, see State3.to_vector
    step: float

    def state(self, k: int) -> State3:
        return State3.from_vector(self.states[k])

    @property
    def final(self) -> State3:
        return self.state(-1)

    @property
    def trace_drift(self) -> float:
        return float(np.max(np.abs(self.states[:, :3].sum(axis=1) - 1.0)))


def rk4_propagator(m: np.ndarray, dt: float) -> np.ndarray:
    """One classical RK4 step for the linear system x' = m x, as a matrix.

    For a constant linear generator the four RK4 stages collapse to the
    degree-4 Taylor polynomial of exp(m dt).
    """
    hm = dt * m
    ident = np.eye(m.shape[0])
    return ident + hm @ (ident + hm @ (ident / 2 + hm @ (ident / 6 + hm / 24)))


def _check_dt(dt: float, gen: DynamicsGenerator) -> None:
    if not dt > 0 or dt > gen.max_stable_dt:
        raise ValueError(
            f"dt={dt!r} outside (0, {gen.max_stable_dt!r}] required for stability"
        )


def iter_trajectory(
    initial: State3,
    gen: DynamicsGenerator,
    t_final: float,
    dt: float = 0.01,
    stride: int = 1,
) -> Iterator[tuple[float, np.ndarray]]:
    """Yield (t, state vector) at t=0 and every ``stride``-th RK4 step."""
    _check_dt(dt, gen)
    if t_final < 0:
        raise ValueError("t_final must be >= 0")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    n_steps = int(round(t_final / dt))
    if abs(n_steps * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise ValueError(f"t_final={t_final!r} is not a multiple of dt={dt!r}")
    prop = rk4_propagator(gen.matrix, dt)
    x = initial.to_vector()
    if not np.all(np.isfinite(x)):
        raise IntegrationError("non-finite initial state", 0.0)
    yield 0.0, x
    for k in range(1, n_steps + 1):
        x = prop @ x
        if k % stride == 0 or k == n_steps:
            if not np.all(np.isfinite(x)):
                raise IntegrationError("non-finite state", k * dt)
            yield k * dt, x


def evolve(
    initial: State3,
    gen: DynamicsGenerator,
    t_final: float,
    dt: float = 0.01,
    stride: int = 1,
) -> Trajectory:
    """Integrate from t=0 to t_final; every ``stride``-th step is stored."""
    times, states = zip(*iter_trajectory(initial, gen, t_final, dt, stride))
    return Trajectory(times=np.array(times), states=np.array(states), step=dt)


def relax_to_steady(
    initial: State3,
    gen: DynamicsGenerator,
    tol: float = 1e-10,
    t_max: float | None = None,
    dt: float = 0.01,
) -> tuple[State3, bool]:
    """Integrate until the max-norm of the time derivative drops below ``tol``.

    Returns the final state and whether the criterion was met before ``t_max``
    (default 200/gamma). ``tol=0`` runs to ``t_max`` exactly.
    """
    if tol < 0:
        raise ValueError("tol must be >= 0")
    _check_dt(dt, gen)
    m = gen.matrix
    if t_max is None:
        t_max = 200.0 / gen.gamma
    n_steps = int(round(t_max / dt))
    prop = rk4_propagator(m, dt)
    x = initial.to_vector()
    for k in range(n_steps):
        if tol > 0 and np.max(np.abs(m @ x)) < tol:
            return State3.from_vector(x), True
        x = prop @ x
        if not np.all(np.isfinite(x)):
            raise IntegrationError("non-finite state", (k + 1) * dt)
    converged = tol > 0 and np.max(np.abs(m @ x)) < tol
    return State3.from_vector(x), bool(converged)
