"""Physical parameters and the occupation factors derived from them.

Units: hbar = k_B = 1 and every quantity is expressed in the same energy unit
(normally the bare cavity frequency omega).
"""

from __future__ import annotations

import math
from dataclasses import dataclass


class ParameterError(ValueError):
    """Raised when a physical parameter is outside its domain."""


def _check_positive_finite(name: str, value: float) -> None:
    if not math.isfinite(value):
        raise ParameterError(f"{name} must be finite, got {value!r}")
    if value <= 0.0:
        raise ParameterError(f"{name} must be > 0, got {value!r}")


def planck_occupation(omega: float, temperature: float) -> float:
    """Bose-Einstein occupation 1/(exp(omega/T) - 1)."""
    _check_positive_finite("omega", omega)
    _check_positive_finite("temperature", temperature)
    x = omega / temperature
    if x > 700.0:
        # exp(x) overflows near 709; 1/(e^x - 1) == e^-x to double precision here
        return math.exp(-x)
    return 1.0 / math.expm1(x)


@dataclass(frozen=True)
class SystemParams:
    """Cavity frequency, inter-cavity coupling, reservoir rate and temperatures."""

    omega: float = 1.0
    lam: float = 0.1
    gamma: float = 0.1
    t_a: float = 0.2
    t_b: float = 0.2

    def __post_init__(self) -> None:
        _check_positive_finite("omega", self.omega)
        _check_positive_finite("gamma", self.gamma)
        _check_positive_finite("t_a", self.t_a)
        _check_positive_finite("t_b", self.t_b)
        if not math.isfinite(self.lam):
            raise ParameterError(f"lambda must be finite, got {self.lam!r}")
        if self.lam < 0.0:
            raise ParameterError(f"lambda must be >= 0, got {self.lam!r}")
        if self.lam >= self.omega:
            raise ParameterError(
                f"lambda must satisfy lambda < omega, got lambda={self.lam!r}, omega={self.omega!r}"
            )

    @property
    def delta_t(self) -> float:
        return self.t_b - self.t_a

    def replace(self, **changes: float) -> "SystemParams":
        fields = dict(
            omega=self.omega, lam=self.lam, gamma=self.gamma, t_a=self.t_a, t_b=self.t_b
        )
        fields.update(changes)
        return SystemParams(**fields)


@dataclass(frozen=True)
class DerivedParams:
    """Supermode frequencies, Planck occupations and their combinations.

    ``n_a_A`` is the occupation of reservoir a at the supermode-A frequency,
    ``n_plus_A``/``n_minus_A`` the half sum/difference over the two reservoirs.
    """

    omega_a: float
    omega_b: float
    n_a_A: float
    n_a_B: float
    n_b_A: float
    n_b_B: float
    n_plus_A: float
    n_plus_B: float
    n_minus_A: float
    n_minus_B: float
    r_factor: float
    gamma: float

    @property
    def detuning(self) -> float:
        """omega_A - omega_B, i.e. twice the inter-cavity coupling."""
        return self.omega_a - self.omega_b

    @property
    def loss_sum(self) -> float:
        """N+^A + N+^B + 2, the total coherence damping in units of gamma."""
        return self.n_plus_A + self.n_plus_B + 2.0


def derive_params(p: SystemParams) -> DerivedParams:
    omega_a = p.omega + p.lam
    omega_b = p.omega - p.lam
    n_a_A = planck_occupation(omega_a, p.t_a)
    n_a_B = planck_occupation(omega_b, p.t_a)
    n_b_A = planck_occupation(omega_a, p.t_b)
    n_b_B = planck_occupation(omega_b, p.t_b)
    n_plus_A = 0.5 * (n_a_A + n_b_A)
    n_plus_B = 0.5 * (n_a_B + n_b_B)
    s = n_plus_A + n_plus_B + 2.0
    r = s / (s * s + (2.0 * p.lam / p.gamma) ** 2)
    return DerivedParams(
        omega_a=omega_a,
        omega_b=omega_b,
        n_a_A=n_a_A,
        n_a_B=n_a_B,
        n_b_A=n_b_A,
        n_b_B=n_b_B,
        n_plus_A=n_plus_A,
        n_plus_B=n_plus_B,
        n_minus_A=0.5 * (n_a_A - n_b_A),
        n_minus_B=0.5 * (n_a_B - n_b_B),
        r_factor=r,
        gamma=p.gamma,
    )
