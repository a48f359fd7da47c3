"""Generators of the non-secular master equation.

Two independent constructions are provided for the single-excitation
subspace span{|g>, |e>, |f>}:

* ``build_block_generator`` writes the equations of motion for
  (rho_gg, rho_ee, rho_ff, Re rho_ef, Im rho_ef) directly as a real 5x5 matrix;
* ``build_reservoir_dissipator`` / ``split_dissipator`` assemble 9x9
  superoperators from the operator form of each reservoir's dissipator.

Superoperators use column-stacking: vec(X rho Y) = (Y^T kron X) vec(rho),
with ``vec(rho) = rho.reshape(-1, order="F")``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from optmol.model import DerivedParams

G, E, F = 0, 1, 2

Superoperator = np.ndarray


def vec(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho).reshape(-1, order="F")


def unvec(v: np.ndarray) -> np.ndarray:
    d = int(round(np.sqrt(v.size)))
    if d * d != v.size:
        raise ValueError(f"vector of length {v.size} is not a vectorized square matrix")
    return np.asarray(v).reshape(d, d, order="F")


def sandwich(left: np.ndarray, right: np.ndarray) -> Superoperator:
    """Superoperator of rho -> left @ rho @ right."""
    return np.kron(right.T, left)


def superoperator_from_map(fn: Callable[[np.ndarray], np.ndarray], dim: int) -> Superoperator:
    """Tabulate a linear map on dim x dim matrices column by column."""
    out = np.zeros((dim * dim, dim * dim), dtype=complex)
    for k in range(dim * dim):
        basis = np.zeros(dim * dim, dtype=complex)
        basis[k] = 1.0
        out[:, k] = vec(fn(unvec(basis)))
    return out


def apply_superoperator(s: Superoperator, rho: np.ndarray) -> np.ndarray:
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"rho must be a square matrix, got shape {rho.shape}")
    if s.shape != (rho.size, rho.size):
        raise ValueError(
            f"superoperator of shape {s.shape} cannot act on a {rho.shape[0]}x{rho.shape[1]} matrix"
        )
    return unvec(s @ vec(rho))


def ket_bra(i: int, j: int, dim: int = 3) -> np.ndarray:
    m = np.zeros((dim, dim), dtype=complex)
    m[i, j] = 1.0
    return m


def hamiltonian3(d: DerivedParams) -> np.ndarray:
    """H_s = omega_A |e><e| + omega_B |f><f|."""
    return np.diag([0.0, d.omega_a, d.omega_b]).astype(complex)


def commutator_superop(h: np.ndarray) -> Superoperator:
    """Superoperator of rho -> -i[h, rho]."""
    ident = np.eye(h.shape[0])
    return -1j * (sandwich(h, ident) - sandwich(ident, h))


# ---------------------------------------------------------------------------
# Real block form


@dataclass(frozen=True)
class BlockGenerator:
    """Generator on x = (rho_gg, rho_ee, rho_ff, u, v), u + i v = rho_ef.

    Only u couples to the populations, so ``m_pc`` is a 3x1 column and
    ``m_cp`` a 1x3 row feeding du/dt; dv/dt has no population source.
    """

    m_p: np.ndarray
    m_pc: np.ndarray
    m_cp: np.ndarray
    m_c: np.ndarray
    detuning: float

    @property
    def matrix(self) -> np.ndarray:
        m = np.zeros((5, 5))
        m[:3, :3] = self.m_p
        m[:3, 3:4] = self.m_pc
        m[3:4, :3] = self.m_cp
        m[3:, 3:] = self.m_c
        return m


def build_block_generator(d: DerivedParams) -> BlockGenerator:
    g = d.gamma
    npa, npb = d.n_plus_A, d.n_plus_B
    nma, nmb = d.n_minus_A, d.n_minus_B
    m_p = np.array(
        [
            [-2 * g * (npa + npb), 2 * g * (npa + 1), 2 * g * (npb + 1)],
            [2 * g * npa, -2 * g * (npa + 1), 0.0],
            [2 * g * npb, 0.0, -2 * g * (npb + 1)],
        ]
    )
    # rho_ef + rho_fe = 2u
    m_pc = np.array([[2 * g * (nma + nmb)], [-2 * g * nmb], [-2 * g * nma]])
    m_cp = np.array([[g * (nma + nmb), -g * nma, -g * nmb]])
    damp = g * d.loss_sum
    m_c = np.array([[-damp, d.detuning], [-d.detuning, -damp]])
    return BlockGenerator(m_p=m_p, m_pc=m_pc, m_cp=m_cp, m_c=m_c, detuning=d.detuning)


# ---------------------------------------------------------------------------
# Operator form on the 3-level subspace

_A = ket_bra(G, E)
_B = ket_bra(G, F)


def _dag(x: np.ndarray) -> np.ndarray:
    return x.conj().T


def _lindblad(jump: np.ndarray) -> Superoperator:
    """rho -> 2 L rho L^+ - rho L^+ L - L^+ L rho."""
    ident = np.eye(jump.shape[0])
    ldl = _dag(jump) @ jump
    return 2 * sandwich(jump, _dag(jump)) - sandwich(ident, ldl) - sandwich(ldl, ident)


def _plus_hc(terms: list[tuple[complex, np.ndarray, np.ndarray]]) -> Superoperator:
    """Sum of c X rho Y plus the Hermitian-conjugate terms conj(c) Y^+ rho X^+."""
    dim = terms[0][1].shape[0]
    out = np.zeros((dim * dim, dim * dim), dtype=complex)
    for c, x, y in terms:
        out += c * sandwich(x, y) + np.conj(c) * sandwich(_dag(y), _dag(x))
    return out


def _cross_terms(
    a: np.ndarray, b: np.ndarray, up_a: float, up_b: float, down_a: float, down_b: float
) -> Superoperator:
    """Cross-supermode terms shared by the total and per-reservoir dissipators.

    ``up_*`` multiply the absorption (A^+ ... B) family, ``down_*`` the
    emission (B ... A^+) family.
    """
    ident = np.eye(a.shape[0])
    ad = _dag(a)
    return _plus_hc(
        [
            (up_a + up_b, ad, b),
            (-up_a, b @ ad, ident),
            (-up_b, ident, b @ ad),
            (down_a + down_b, b, ad),
            (-down_a, ident, ad @ b),
            (-down_b, ad @ b, ident),
        ]
    )


def _reservoir_superop(
    a: np.ndarray, b: np.ndarray, gamma: float, n_A: float, n_B: float, sign: float
) -> Superoperator:
    half = 0.5 * gamma
    diag = (
        half * n_A * _lindblad(_dag(a))
        + half * n_B * _lindblad(_dag(b))
        + half * (n_A + 1) * _lindblad(a)
        + half * (n_B + 1) * _lindblad(b)
    )
    cross = _cross_terms(a, b, half * n_A, half * n_B, half * (n_A + 1), half * (n_B + 1))
    return diag + sign * cross


def build_reservoir_dissipator(d: DerivedParams, which: str) -> Superoperator:
    """9x9 dissipator of reservoir ``which`` ('a' or 'b') with A=|g><e|, B=|g><f|."""
    if which == "a":
        return _reservoir_superop(_A, _B, d.gamma, d.n_a_A, d.n_a_B, +1.0)
    if which == "b":
        return _reservoir_superop(_A, _B, d.gamma, d.n_b_A, d.n_b_B, -1.0)
    raise ValueError(f"reservoir must be 'a' or 'b', got {which!r}")


def total_dissipator(d: DerivedParams) -> Superoperator:
    """D_0 + D_s written with the sum/difference rates of both reservoirs."""
    return _total_dissipator(_A, _B, d)


def _total_dissipator(a: np.ndarray, b: np.ndarray, d: DerivedParams) -> Superoperator:
    g = d.gamma
    d0 = (
        g * d.n_plus_A * _lindblad(_dag(a))
        + g * d.n_plus_B * _lindblad(_dag(b))
        + g * (d.n_plus_A + 1) * _lindblad(a)
        + g * (d.n_plus_B + 1) * _lindblad(b)
    )
    ema, emb = g * d.n_minus_A, g * d.n_minus_B
    return d0 + _cross_terms(a, b, ema, emb, ema, emb)


def lindblad_generator3(d: DerivedParams) -> Superoperator:
    """Full 9x9 generator -i[H_s, .] + D_a + D_b."""
    return (
        commutator_superop(hamiltonian3(d))
        + build_reservoir_dissipator(d, "a")
        + build_reservoir_dissipator(d, "b")
    )


def _l_terms() -> list[Superoperator]:
    """The seven elementary maps L_1 ... L_7 of the population/coherence split."""
    kb = ket_bra
    one = np.eye(3)

    def lind(up: np.ndarray, down: np.ndarray, proj: np.ndarray) -> Superoperator:
        return 2 * sandwich(up, down) - sandwich(one, proj) - sandwich(proj, one)

    gg, ee, ff = kb(G, G), kb(E, E), kb(F, F)
    return [
        lind(kb(E, G), kb(G, E), gg),
        lind(kb(F, G), kb(G, F), gg),
        lind(kb(G, E), kb(E, G), ee),
        lind(kb(G, F), kb(F, G), ff),
        sandwich(kb(E, G), kb(G, F)) + sandwich(kb(F, G), kb(G, E)),
        sandwich(kb(G, F), kb(E, G))
        + sandwich(kb(G, E), kb(F, G))
        - sandwich(one, kb(E, F))
        - sandwich(kb(F, E), one),
        sandwich(kb(G, F), kb(E, G))
        + sandwich(kb(G, E), kb(F, G))
        - sandwich(one, kb(F, E))
        - sandwich(kb(E, F), one),
    ]


L_TERMS = _l_terms()


def split_dissipator(d: DerivedParams, which: str) -> tuple[Superoperator, Superoperator]:
    """(population part, coherence part) of a reservoir dissipator."""
    if which == "a":
        n_A, n_B, sign = d.n_a_A, d.n_a_B, 1.0
    elif which == "b":
        n_A, n_B, sign = d.n_b_A, d.n_b_B, -1.0
    else:
        raise ValueError(f"reservoir must be 'a' or 'b', got {which!r}")
    half = 0.5 * d.gamma
    l1, l2, l3, l4, l5, l6, l7 = L_TERMS
    pop = half * (n_A * l1 + n_B * l2 + (n_A + 1) * l3 + (n_B + 1) * l4)
    coh = sign * half * ((n_A + n_B) * l5 + (n_A + 1) * l6 + (n_B + 1) * l7)
    return pop.astype(complex), coh.astype(complex)


# ---------------------------------------------------------------------------
# Truncated two-supermode Fock space


@dataclass(frozen=True)
class FockGenerator:
    n_max: int
    dim: int
    matrix: np.ndarray

    def index(self, n_a: int, n_b: int) -> int:
        """Position of |n_A, n_B> in the Hilbert-space basis."""
        return n_a * (self.n_max + 1) + n_b


def fock_ladder_operators(n_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Truncated annihilation operators of supermodes A and B (A index major)."""
    a = np.diag(np.sqrt(np.arange(1, n_max + 1)), 1).astype(complex)
    ident = np.eye(n_max + 1)
    return np.kron(a, ident), np.kron(ident, a)


def build_fock_generator(d: DerivedParams, n_max: int = 4) -> FockGenerator:
    if not isinstance(n_max, (int, np.integer)) or not 1 <= n_max <= 6:
        raise ValueError(f"n_max must be an integer in [1, 6], got {n_max!r}")
    a, b = fock_ladder_operators(int(n_max))
    h = d.omega_a * _dag(a) @ a + d.omega_b * _dag(b) @ b
    matrix = commutator_superop(h) + _total_dissipator(a, b, d)
    return FockGenerator(n_max=int(n_max), dim=a.shape[0], matrix=matrix)
