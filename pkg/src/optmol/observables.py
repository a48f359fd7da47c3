"""Figures of merit of the nonequilibrium steady state.

Every quantity that has two routes (closed form and trace/superoperator form,
or several equivalent expressions) is evaluated both ways and the routes are
compared before a value is returned; a mismatch raises ``ConsistencyError``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from optmol.liouvillian import (
    E,
    F,
    G,
    apply_superoperator,
    build_reservoir_dissipator,
    hamiltonian3,
    split_dissipator,
)
from optmol.model import DerivedParams, ParameterError, SystemParams, derive_params
from optmol.steady import ConsistencyError, SteadyState, steady_analytic, transfer_generator_a

HEAT_TOL = 1e-12
FLUX_TOL = 1e-12
ZERO_EIGENVALUE = 1e-12
ZERO_COHERENCE = 1e-14

# cyclic pattern g -> e -> f -> g of the curl-flux part of the transfer matrix
CYCLE = np.array([[0, 0, 1], [1, 0, 0], [0, 1, 0]], dtype=float)


@dataclass(frozen=True)
class SpectralDecomp:
    p1: float
    p2: float
    p3: float
    alpha: float
    phi: float

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([self.p1, self.p2, self.p3])

    def eigenvectors(self) -> np.ndarray:
        """Columns |g>, cos(a/2) e^{i phi}|e> + sin(a/2)|f>, sin(a/2) e^{i phi}|e> - cos(a/2)|f>."""
        c, s = math.cos(self.alpha / 2), math.sin(self.alpha / 2)
        ph = complex(math.cos(self.phi), math.sin(self.phi))
        vecs = np.zeros((3, 3), dtype=complex)
        vecs[G, 0] = 1.0
        vecs[E, 1], vecs[F, 1] = c * ph, s
        vecs[E, 2], vecs[F, 2] = s * ph, -c
        return vecs


def spectral_decomposition(ss: SteadyState) -> SpectralDecomp:
    mean = 0.5 * (ss.rho_ee + ss.rho_ff)
    diff = ss.rho_ee - ss.rho_ff
    mag = abs(ss.rho_ef)
    rad = math.sqrt(0.25 * diff * diff + mag * mag)
    phi = 0.0 if mag < ZERO_COHERENCE else math.atan2(ss.rho_ef.imag, ss.rho_ef.real)
    return SpectralDecomp(
        p1=ss.rho_gg,
        p2=mean + rad,
        p3=mean - rad,
        alpha=math.atan2(2.0 * mag, diff),
        phi=phi,
    )


# ---------------------------------------------------------------------------
# Quantum Fisher information


class QFIResult(NamedTuple):
    value: float
    classical: float
    coherent: float
    degenerate: bool = False


def _unwrap_to(angle: float, ref: float) -> float:
    """Shift ``angle`` by a multiple of 2 pi to lie closest to ``ref``."""
    return angle - 2.0 * math.pi * round((angle - ref) / (2.0 * math.pi))


def _spectral_at(p: SystemParams, lam: float) -> SpectralDecomp:
    return spectral_decomposition(steady_analytic(derive_params(p.replace(lam=lam))))


def _central_derivatives(p: SystemParams, h: float) -> tuple[np.ndarray, float, float]:
    lo = _spectral_at(p, p.lam - h)
    hi = _spectral_at(p, p.lam + h)
    mid_phi = _spectral_at(p, p.lam).phi
    dp = (hi.eigenvalues - lo.eigenvalues) / (2 * h)
    dalpha = (hi.alpha - lo.alpha) / (2 * h)
    dphi = (_unwrap_to(hi.phi, mid_phi) - _unwrap_to(lo.phi, mid_phi)) / (2 * h)
    return dp, dalpha, dphi


def qfi_lambda(p: SystemParams, step: float = 1e-6, richardson: bool = False) -> QFIResult:
    """QFI of the steady state with respect to the inter-cavity coupling.

    Derivatives are central differences of the closed-form steady state with
    step ``step * omega``; ``richardson`` adds one extrapolation level.
    """
    h = step * p.omega
    if not (h > 0 and p.lam - h > 0 and p.lam + h < p.omega):
        raise ParameterError(
            f"finite-difference stencil lambda +/- {h:g} must lie inside (0, omega)"
        )
    dp, dalpha, dphi = _central_derivatives(p, h)
    if richardson:
        dp2, dalpha2, dphi2 = _central_derivatives(p, h / 2)
        dp = (4 * dp2 - dp) / 3
        dalpha = (4 * dalpha2 - dalpha) / 3
        dphi = (4 * dphi2 - dphi) / 3

    sd = _spectral_at(p, p.lam)
    probs = sd.eigenvalues
    keep = probs >= ZERO_EIGENVALUE
    classical = float(np.sum(dp[keep] ** 2 / probs[keep]))

    block = sd.p2 + sd.p3
    if block < 1e-14:
        return QFIResult(classical, classical, 0.0, degenerate=True)
    weight = (sd.p2 - sd.p3) ** 2 / block
    coherent = weight * (dalpha**2 + dphi**2 * math.sin(sd.alpha) ** 2)
    return QFIResult(classical + coherent, classical, coherent)


def qfi_from_eigensystems(
    probs: Sequence[np.ndarray],
    vecs: Sequence[np.ndarray],
    h: float,
    cutoff: float = ZERO_EIGENVALUE,
) -> tuple[float, float]:
    """QFI from eigenvalues/eigenvectors sampled at theta - h, theta, theta + h.

    ``probs[k]`` is the eigenvalue array and ``vecs[k]`` the matrix of
    eigenvector columns at stencil point k. Returns (classical, quantum).
    Eigenvectors must already be matched across the stencil; their phases
    may be any smooth function of theta.
    """
    p_lo, p0, p_hi = (np.asarray(x, dtype=float) for x in probs)
    v_lo, v0, v_hi = (np.asarray(x, dtype=complex) for x in vecs)
    dp = (p_hi - p_lo) / (2 * h)
    dv = (v_hi - v_lo) / (2 * h)
    keep = np.flatnonzero(p0 >= cutoff)

    classical = float(np.sum(dp[keep] ** 2 / p0[keep]))
    norms = np.sum(np.abs(dv[:, keep]) ** 2, axis=0)
    first = 4.0 * float(np.sum(p0[keep] * norms))
    overlaps = v0[:, keep].conj().T @ dv[:, keep]
    pk = p0[keep]
    weights = 8.0 * np.outer(pk, pk) / np.add.outer(pk, pk)
    second = float(np.sum(weights * np.abs(overlaps) ** 2))
    return classical, first - second


def _sorted_eigensystem(rho: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    w, v = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    return w, v


def _fix_gauge(v: np.ndarray, anchors: np.ndarray) -> np.ndarray:
    """Make component ``anchors[i]`` of column i real and positive."""
    out = v.copy()
    for i, k in enumerate(anchors):
        comp = out[k, i]
        if abs(comp) > 0:
            out[:, i] *= abs(comp) / comp
    return out


def _stencil_is_matched(v0: np.ndarray, v: np.ndarray, keep: np.ndarray) -> bool:
    ov = np.abs(v0[:, keep].conj().T @ v[:, keep])
    return bool(np.all(np.diag(ov) > 0.9))


def qfi_general(
    state_at: Callable[[float], "np.ndarray | SteadyState"],
    theta0: float,
    step: float = 1e-6,
) -> QFIResult:
    """QFI from a numerical eigendecomposition of rho(theta).

    Eigenvector phases are fixed by making, for each eigenvector, the
    component that is largest at ``theta0`` real and positive at every
    stencil point. If eigenvectors cannot be matched across the stencil
    (an eigenvalue crossing) the step is reduced tenfold once; if that still
    fails the result is flagged ``degenerate``.
    """

    def sample(theta: float) -> np.ndarray:
        rho = state_at(theta)
        return rho.matrix() if isinstance(rho, SteadyState) else np.asarray(rho)

    h = step
    for _ in range(2):
        systems = [_sorted_eigensystem(sample(t)) for t in (theta0 - h, theta0, theta0 + h)]
        probs = [w for w, _ in systems]
        keep = np.flatnonzero(probs[1] >= ZERO_EIGENVALUE)
        anchors = np.argmax(np.abs(systems[1][1]), axis=0)
        vecs = [_fix_gauge(v, anchors) for _, v in systems]
        matched = _stencil_is_matched(vecs[1], vecs[0], keep) and _stencil_is_matched(
            vecs[1], vecs[2], keep
        )
        if matched:
            break
        h /= 10.0
    classical, quantum = qfi_from_eigensystems(probs, vecs, h)
    return QFIResult(classical + quantum, classical, quantum, degenerate=not matched)


# ---------------------------------------------------------------------------
# Curl flux


def curl_flux(a: np.ndarray, pops: np.ndarray, d: DerivedParams | None = None) -> float:
    """Circulating flux g -> e -> f -> g of the reduced population dynamics.

    All three pairwise expressions (and, if ``d`` is given, the closed form
    in terms of N_-) are compared before the first one is returned.
    """
    gg, ee, ff = pops
    exprs = [
        a[G, E] * ee - a[E, G] * gg,
        a[F, G] * gg - a[G, F] * ff,
        a[E, F] * ff - a[F, E] * ee,
    ]
    if d is not None:
        exprs.append(
            2 * d.gamma * d.r_factor * (d.n_minus_B**2 * ff - d.n_minus_A**2 * ee)
        )
    spread = max(exprs) - min(exprs)
    if spread > FLUX_TOL:
        raise ConsistencyError(f"curl-flux expressions disagree by {spread:.3e}", spread)
    return float(exprs[0])


def transfer_matrix(a: np.ndarray, pops: np.ndarray) -> np.ndarray:
    """T[m, n] = A[n, m] * p[m] off the diagonal: probability flux m -> n."""
    t = a.T * np.asarray(pops)[:, None]
    np.fill_diagonal(t, 0.0)
    return t


def decompose_transfer(a: np.ndarray, pops: np.ndarray) -> tuple[np.ndarray, float]:
    """Split the transfer matrix into a symmetric landscape part and J_curl * CYCLE."""
    t = transfer_matrix(a, pops)
    j = curl_flux(a, pops)
    lower = t * (1.0 - CYCLE)
    np.fill_diagonal(lower, 0.0)
    # entries with CYCLE == 0 hold the detailed-balance part; mirror them
    sym = np.where(CYCLE == 1, lower.T, lower)
    err = float(np.max(np.abs(sym + j * CYCLE - t)))
    if err > 1e-13 * max(1.0, float(np.max(np.abs(t)))):
        raise ConsistencyError(f"transfer-matrix reconstruction error {err:.3e}", err)
    return sym, j


# ---------------------------------------------------------------------------
# Heat currents and entropy production


def _occupations(d: DerivedParams, which: str) -> tuple[float, float, float]:
    if which == "a":
        return d.n_a_A, d.n_a_B, -1.0
    if which == "b":
        return d.n_b_A, d.n_b_B, 1.0
    raise ValueError(f"reservoir must be 'a' or 'b', got {which!r}")


def _trace_current(superop: np.ndarray, ss: SteadyState, d: DerivedParams) -> float:
    out = apply_superoperator(superop, ss.matrix())
    return float(np.trace(out @ hamiltonian3(d)).real)


def _split_closed_form(which: str, ss: SteadyState, d: DerivedParams) -> tuple[float, float]:
    n_A, n_B, sign = _occupations(d, which)
    g, wa, wb = d.gamma, d.omega_a, d.omega_b
    j_p = (
        g * (wa * n_A + wb * n_B) * ss.rho_gg
        - g * wa * (n_A + 1) * ss.rho_ee
        - g * wb * (n_B + 1) * ss.rho_ff
    )
    j_c = sign * g * (wa * (n_B + 1) + wb * (n_A + 1)) * ss.rho_ef.real
    return j_p, j_c


def heat_current(which: str, ss: SteadyState, d: DerivedParams) -> float:
    """Steady heat current from reservoir ``which`` into the system."""
    n_A, n_B, sign = _occupations(d, which)
    g, u = d.gamma, ss.rho_ef.real
    closed = g * d.omega_a * (
        n_A * ss.rho_gg - (n_A + 1) * ss.rho_ee + sign * (n_B + 1) * u
    ) + g * d.omega_b * (n_B * ss.rho_gg - (n_B + 1) * ss.rho_ff + sign * (n_A + 1) * u)
    traced = _trace_current(build_reservoir_dissipator(d, which), ss, d)
    if abs(closed - traced) > HEAT_TOL:
        raise ConsistencyError(
            f"heat current J_{which}: closed form {closed!r} vs trace form {traced!r}",
            abs(closed - traced),
        )
    return float(closed)


def heat_current_split(which: str, ss: SteadyState, d: DerivedParams) -> tuple[float, float]:
    """(population, coherence) parts of the heat current from reservoir ``which``."""
    j_p, j_c = _split_closed_form(which, ss, d)
    pop_op, coh_op = split_dissipator(d, which)
    for label, closed, op in (("p", j_p, pop_op), ("c", j_c, coh_op)):
        traced = _trace_current(op, ss, d)
        if abs(closed - traced) > HEAT_TOL:
            raise ConsistencyError(
                f"J_{which}^({label}): closed form {closed!r} vs trace form {traced!r}",
                abs(closed - traced),
            )
    total = heat_current(which, ss, d)
    if abs(j_p + j_c - total) > HEAT_TOL:
        raise ConsistencyError(
            f"J_{which} != J_{which}^(p) + J_{which}^(c)", abs(j_p + j_c - total)
        )
    return float(j_p), float(j_c)


def entropy_production_rate(j_a: float, j_b: float, t_a: float, t_b: float) -> float:
    if t_a <= 0 or t_b <= 0:
        raise ParameterError("temperatures must be > 0")
    return -(j_b / t_b + j_a / t_a)


# ---------------------------------------------------------------------------
# One sweep point


OBSERVABLE_COLUMNS = (
    "coherence_abs",
    "qfi",
    "j_curl",
    "j_a",
    "j_b",
    "j_a_p",
    "j_b_p",
    "j_a_c",
    "j_b_c",
    "epr",
)


@dataclass(frozen=True)
class ObservablesRecord:
    coherence_abs: float
    qfi: float
    j_curl: float
    j_a: float
    j_b: float
    j_a_p: float
    j_b_p: float
    j_a_c: float
    j_b_c: float
    epr: float
    qfi_classical: float = float("nan")
    qfi_coherent: float = float("nan")
    failures: tuple[str, ...] = field(default=())

    def as_dict(self) -> dict:
        return asdict(self)


def evaluate_point(
    p: SystemParams,
    qfi_step: float = 1e-6,
    outputs: tuple[str, ...] = OBSERVABLE_COLUMNS,
) -> ObservablesRecord:
    """All observables at one parameter point.

    A failed consistency check does not abort: the affected fields become
    nan and the failure message is collected in ``failures``.
    """
    nan = float("nan")
    d = derive_params(p)
    ss = steady_analytic(d)
    failures: list[str] = []
    vals = dict.fromkeys(OBSERVABLE_COLUMNS, nan)
    qfi_parts = (nan, nan)

    vals["coherence_abs"] = abs(ss.rho_ef)
    if "qfi" in outputs:
        try:
            q = qfi_lambda(p, qfi_step)
            vals["qfi"] = q.value
            qfi_parts = (q.classical, q.coherent)
            if q.degenerate:
                failures.append("qfi: degenerate excited-state block")
        except (ParameterError, ConsistencyError) as exc:
            failures.append(f"qfi: {exc}")
    try:
        vals["j_curl"] = curl_flux(transfer_generator_a(d), ss.populations, d)
    except ConsistencyError as exc:
        failures.append(f"j_curl: {exc}")
    for which in ("a", "b"):
        try:
            vals[f"j_{which}"] = heat_current(which, ss, d)
            vals[f"j_{which}_p"], vals[f"j_{which}_c"] = heat_current_split(which, ss, d)
        except ConsistencyError as exc:
            failures.append(f"j_{which}: {exc}")
    if abs(vals["j_a"] + vals["j_b"]) > HEAT_TOL:
        failures.append(f"heat balance: J_a + J_b = {vals['j_a'] + vals['j_b']:.3e}")
        vals["j_a"] = vals["j_b"] = nan
    vals["epr"] = entropy_production_rate(vals["j_a"], vals["j_b"], p.t_a, p.t_b)
    return ObservablesRecord(
        **vals,
        qfi_classical=qfi_parts[0],
        qfi_coherent=qfi_parts[1],
        failures=tuple(failures),
    )
