"""Non-secular master equation for a two-cavity optical molecule between two
thermal reservoirs: steady state, coherence, QFI, curl flux and heat currents."""

from optmol.model import (
    DerivedParams,
    ParameterError,
    SystemParams,
    derive_params,
    planck_occupation,
)
from optmol.steady import SteadyState, steady_analytic, steady_state
from optmol.observables import ObservablesRecord, evaluate_point

__all__ = [
    "DerivedParams",
    "ObservablesRecord",
    "ParameterError",
    "SteadyState",
    "SystemParams",
    "derive_params",
    "evaluate_point",
    "planck_occupation",
    "steady_analytic",
    "steady_state",
]

__version__ = "0.1.0"
