"""Steady state of the single-excitation master equation, three ways.

``steady_analytic`` evaluates the closed-form populations and coherence,
``steady_from_cofactors`` solves the reduced population equation A p = 0 with
2x2 cofactors, and ``steady_numeric_oracle`` takes the kernel of the 9x9
superoperator built from the per-reservoir dissipators.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from optmol.liouvillian import (
    BlockGenerator,
    E,
    F,
    FockGenerator,
    G,
    build_fock_generator,
    unvec,
)
from optmol.model import DerivedParams, SystemParams, derive_params


class DegenerateSteadyStateError(RuntimeError):
    """The generator does not have a unique steady state."""


class ConsistencyError(RuntimeError):
    """Two routes to the same quantity disagree beyond tolerance."""

    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class SteadyState:
    rho_gg: float
    rho_ee: float
    rho_ff: float
    rho_ef: complex
    normalization_n: float = 1.0

    @property
    def populations(self) -> np.ndarray:
        return np.array([self.rho_gg, self.rho_ee, self.rho_ff])

    def matrix(self) -> np.ndarray:
        rho = np.diag(self.populations).astype(complex)
        rho[E, F] = self.rho_ef
        rho[F, E] = np.conj(self.rho_ef)
        return rho

    @property
    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix())[0])

    @property
    def is_positive(self) -> bool:
        return self.min_eigenvalue >= -1e-10

    def clamped_populations(self) -> np.ndarray:
        """Populations clipped to [0, 1]; for reporting only."""
        return np.clip(self.populations, 0.0, 1.0)


def _population_numerators(d: DerivedParams) -> np.ndarray:
    npa, npb = d.n_plus_A, d.n_plus_B
    nma, nmb = d.n_minus_A, d.n_minus_B
    r = d.r_factor
    s = npa + npb
    cross = nma * nmb * r
    return np.array(
        [
            (npa + 1) * (npb + 1) - (s + 2) * cross,
            npa * (npb + 1) - (s + 1) * cross - nmb * nmb * r,
            npb * (npa + 1) - (s + 1) * cross - nma * nma * r,
        ]
    )


def _coherence_denominator(d: DerivedParams) -> complex:
    return complex(d.loss_sum, d.detuning / d.gamma)


def steady_analytic(d: DerivedParams) -> SteadyState:
    nums = _population_numerators(d)
    norm = float(nums.sum())
    pops = nums / norm
    coh_num = d.n_minus_A * (d.n_plus_B + 1) + d.n_minus_B * (d.n_plus_A + 1)
    rho_ef = coh_num / (norm * _coherence_denominator(d))
    return SteadyState(
        rho_gg=float(pops[0]),
        rho_ee=float(pops[1]),
        rho_ff=float(pops[2]),
        rho_ef=complex(rho_ef),
        normalization_n=norm,
    )


def coherence_from_populations(pops: np.ndarray, d: DerivedParams) -> complex:
    """Steady-state rho_ef slaved to given populations (g, e, f)."""
    gg, ee, ff = pops
    num = (d.n_minus_A + d.n_minus_B) * gg - d.n_minus_A * ee - d.n_minus_B * ff
    return complex(num / _coherence_denominator(d))


def transfer_generator_a(d: DerivedParams) -> np.ndarray:
    """Effective population generator with the coherence eliminated.

    Entry [m, n] is the rate n -> m (rows/columns ordered g, e, f).
    """
    g = d.gamma
    npa, npb = d.n_plus_A, d.n_plus_B
    nma, nmb = d.n_minus_A, d.n_minus_B
    r = d.r_factor
    sm = nma + nmb
    a = np.empty((3, 3))
    a[G, G] = 2 * g * (-(npa + npb) + sm * sm * r)
    a[E, E] = 2 * g * (-(npa + 1) + nma * nmb * r)
    a[F, F] = 2 * g * (-(npb + 1) + nma * nmb * r)
    a[G, E] = 2 * g * ((npa + 1) - sm * nma * r)
    a[G, F] = 2 * g * ((npb + 1) - sm * nmb * r)
    a[E, G] = 2 * g * (npa - sm * nmb * r)
    a[F, G] = 2 * g * (npb - sm * nma * r)
    a[E, F] = 2 * g * nmb * nmb * r
    a[F, E] = 2 * g * nma * nma * r
    return a


def eliminate_coherence(bg: BlockGenerator) -> np.ndarray:
    """M_p - M_pc M_c^-1 M_cp computed numerically from the block generator."""
    m = bg.matrix
    return m[:3, :3] - m[:3, 3:] @ np.linalg.solve(m[3:, 3:], m[3:, :3])


def steady_from_cofactors(a: np.ndarray) -> np.ndarray:
    """Normalized kernel of a rank-2, zero-column-sum 3x3 generator via cofactors."""
    a = np.asarray(a, dtype=float)
    sv = np.linalg.svd(a, compute_uv=False)
    scale = np.linalg.norm(a, 2)
    if scale == 0.0 or sv[1] <= 1e-10 * scale:
        raise DegenerateSteadyStateError(
            f"population generator has rank < 2 (singular values {sv})"
        )
    # expansion along the first row: component i is the cofactor of a[0, i]
    c = np.array(
        [
            a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1],
            a[2, 0] * a[1, 2] - a[1, 0] * a[2, 2],
            a[1, 0] * a[2, 1] - a[2, 0] * a[1, 1],
        ]
    )
    return c / c.sum()


def null_space_density_matrix(generator: np.ndarray, kernel_tol: float = 1e-10) -> np.ndarray:
    """Unit-trace kernel of a vectorized generator, Hermitized.

    The trace condition is appended as an extra row and the augmented system
    solved by least squares.
    """
    n2 = generator.shape[0]
    dim = int(round(np.sqrt(n2)))
    sv = np.linalg.svd(generator, compute_uv=False)
    kernel_dim = int(np.sum(sv <= kernel_tol * sv[0]))
    if kernel_dim != 1:
        raise DegenerateSteadyStateError(f"generator kernel has dimension {kernel_dim}, expected 1")
    trace_row = np.eye(dim).reshape(1, -1, order="F")
    aug = np.vstack([generator, trace_row])
    rhs = np.zeros(n2 + 1, dtype=complex)
    rhs[-1] = 1.0
    x = np.linalg.lstsq(aug, rhs, rcond=None)[0]
    rho = unvec(x)
    return 0.5 * (rho + rho.conj().T)


def steady_numeric_oracle(generator: np.ndarray) -> SteadyState:
    """Steady state of a 9x9 single-excitation generator from its kernel."""
    if generator.shape != (9, 9):
        raise ValueError(f"expected a 9x9 generator, got shape {generator.shape}")
    rho = null_space_density_matrix(generator)
    leak = max(abs(rho[G, E]), abs(rho[G, F]))
    if leak >= 1e-12:
        raise ConsistencyError(f"kernel has ground-state coherence {leak:.3e}", leak)
    return SteadyState(
        rho_gg=float(rho[G, G].real),
        rho_ee=float(rho[E, E].real),
        rho_ff=float(rho[F, F].real),
        rho_ef=complex(rho[E, F]),
    )


@dataclass(frozen=True)
class FockCheck:
    """Single-excitation validity report from the truncated Fock-space steady state."""

    n_max: int
    leakage: float
    projected: np.ndarray
    three_level: np.ndarray
    deviation: float

    @property
    def passes(self) -> bool:
        return self.deviation <= 5.0 * self.leakage


def fock_steady_state(gen: FockGenerator) -> np.ndarray:
    return null_space_density_matrix(gen.matrix)


def single_excitation_check(p: SystemParams, n_max: int = 4) -> FockCheck:
    """Compare the full two-mode steady state with the 3-level one.

    ``leakage`` is the population outside span{|00>, |10>, |01>};
    ``deviation`` is the max-abs entry difference between the projected,
    renormalized Fock state and the analytic 3-level state.
    """
    d = derive_params(p)
    gen = build_fock_generator(d, n_max)
    rho = fock_steady_state(gen)
    idx = [gen.index(0, 0), gen.index(1, 0), gen.index(0, 1)]
    sub = rho[np.ix_(idx, idx)]
    kept = float(np.trace(sub).real)
    projected = sub / kept
    three = steady_analytic(d).matrix()
    return FockCheck(
        n_max=n_max,
        leakage=1.0 - kept,
        projected=projected,
        three_level=three,
        deviation=float(np.max(np.abs(projected - three))),
    )


def steady_state(p: SystemParams) -> SteadyState:
    return steady_analytic(derive_params(p))


__all__ = [
    "ConsistencyError",
    "DegenerateSteadyStateError",
    "FockCheck",
    "SteadyState",
    "coherence_from_populations",
    "eliminate_coherence",
    "fock_steady_state",
    "null_space_density_matrix",
    "single_excitation_check",
    "steady_analytic",
    "steady_from_cofactors",
    "steady_numeric_oracle",
    "steady_state",
    "transfer_generator_a",
]
