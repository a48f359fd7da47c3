import math

import numpy as np
import pytest

from optmol import SystemParams, derive_params, steady_analytic
from optmol.dynamics import (
    IntegrationError,
    State3,
    build_dynamics_generator,
    derivative,
    evolve,
    iter_trajectory,
    relax_to_steady,
    rk4_propagator,
)

from conftest import random_params


def exact_propagate(m, x0, t):
    w, v = np.linalg.eig(m)
    return (v @ (np.exp(w * t) * np.linalg.solve(v, x0))).real


def random_state(rng):
    pops = rng.dirichlet(np.ones(3))
    # coherences bounded so the matrix stays positive
    r = 0.5 * math.sqrt(pops[1] * pops[2])
    phase = rng.uniform(0, 2 * math.pi)
    return State3(*pops, rho_ef=r * complex(math.cos(phase), math.sin(phase)))


def as_state(ss):
    return State3(ss.rho_gg, ss.rho_ee, ss.rho_ff, ss.rho_ef)


@pytest.fixture
def gen_neq(neq):
    return build_dynamics_generator(derive_params(neq))


def test_state_roundtrip():
    s = State3(0.5, 0.3, 0.2, 0.1 - 0.05j, 0.01j, -0.02)
    assert State3.from_vector(s.to_vector()) == s
    assert State3.from_matrix(s.matrix()) == s
    assert s.trace == pytest.approx(1.0)


def test_fixed_point(rng):
    for p in random_params(rng, 100):
        d = derive_params(p)
        rate = derivative(as_state(steady_analytic(d)), build_dynamics_generator(d))
        assert np.max(np.abs(rate.to_vector())) < 1e-12


def test_trace_rate_zero(rng, gen_neq):
    for _ in range(10):
        x = rng.normal(size=9)
        r = derivative(State3.from_vector(x), gen_neq)
        assert abs(r.trace) < 1e-15


def test_excited_e_decay_at_equilibrium(eq):
    d = derive_params(eq)
    r = derivative(State3(0.0, 1.0, 0.0), build_dynamics_generator(d))
    assert r.rho_ee == pytest.approx(-2 * d.gamma * (d.n_plus_A + 1), rel=1e-15)


def test_matrix_matches_derivative(rng, gen_neq):
    x = rng.normal(size=9)
    assert np.allclose(gen_neq.matrix @ x, derivative(State3.from_vector(x), gen_neq).to_vector(), atol=1e-15)


def test_steady_start_stays_put(neq, gen_neq):
    ss = as_state(steady_analytic(derive_params(neq)))
    traj = evolve(ss, gen_neq, 50.0, 0.01, stride=500)
    assert np.max(np.abs(traj.states - ss.to_vector())) < 1e-11


def test_ground_coherence_decays(neq, gen_neq):
    s0 = State3(0.4, 0.3, 0.3, rho_ge=0.3)
    final = evolve(s0, gen_neq, 20 / neq.gamma, 0.01, stride=1000).final
    assert abs(final.rho_ge) < 1e-8 and abs(final.rho_gf) < 1e-8


def test_relaxation_from_random_states(rng, neq, gen_neq):
    target = as_state(steady_analytic(derive_params(neq))).to_vector()
    for _ in range(10):
        traj = evolve(random_state(rng), gen_neq, 100 / neq.gamma, 0.01, stride=10000)
        assert np.max(np.abs(traj.states[-1] - target)) < 1e-8
        assert traj.trace_drift <= 1e-9


def test_rk4_order(gen_neq):
    m = gen_neq.matrix
    x0 = State3(0.0, 1.0, 0.0, rho_ge=0.2).to_vector()
    t = 8.0
    ref = exact_propagate(m, x0, t)
    errs = []
    dts = (0.08, 0.04, 0.02)
    for dt in dts:
        x = evolve(State3.from_vector(x0), gen_neq, t, dt, stride=10**6).states[-1]
        errs.append(np.max(np.abs(x - ref)))
    orders = [math.log2(errs[k] / errs[k + 1]) for k in range(2)]
    assert min(orders) >= 3.5, (errs, orders)


def test_rk4_propagator_is_taylor_polynomial(rng):
    m = rng.normal(size=(4, 4))
    dt = 0.01
    x = rng.normal(size=4)
    # textbook four-stage RK4
    k1 = m @ x
    k2 = m @ (x + dt / 2 * k1)
    k3 = m @ (x + dt / 2 * k2)
    k4 = m @ (x + dt * k3)
    assert np.allclose(rk4_propagator(m, dt) @ x, x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4), atol=1e-15)


def test_dt_bound_enforced(gen_neq):
    assert gen_neq.max_stable_dt == pytest.approx(0.1 / 1.1)
    with pytest.raises(ValueError):
        evolve(State3(1, 0, 0), gen_neq, 1.0, 0.1)
    with pytest.raises(ValueError):
        evolve(State3(1, 0, 0), gen_neq, 1.0, 0.0)
    with pytest.raises(ValueError):
        evolve(State3(1, 0, 0), gen_neq, 1.005, 0.01)


def test_iter_trajectory_stride(gen_neq):
    times = [t for t, _ in iter_trajectory(State3(1, 0, 0), gen_neq, 1.0, 0.01, stride=30)]
    assert times[0] == 0.0 and times[-1] == pytest.approx(1.0)
    assert len(times) == 1 + 3 + 1


def test_integration_error_on_nonfinite_start():
    d = derive_params(SystemParams())
    gen = build_dynamics_generator(d)
    with pytest.raises(IntegrationError) as info:
        list(iter_trajectory(State3(float("inf"), 0, 0), gen, 0.05, 0.01))
    assert info.value.time == 0.0


def test_relax_equilibrium_to_gibbs(eq):
    d = derive_params(eq)
    gen = build_dynamics_generator(d)
    final, ok = relax_to_steady(State3(1 / 3, 1 / 3, 1 / 3), gen, tol=1e-10)
    assert ok
    gibbs = np.array([1.0, math.exp(-1.1 / 0.2), math.exp(-0.9 / 0.2)])
    gibbs /= gibbs.sum()
    # |d rho/dt| < tol bounds the distance by tol / (slowest rate ~ 2 gamma)
    assert np.max(np.abs([final.rho_gg, final.rho_ee, final.rho_ff] - gibbs)) < 1e-8


def test_relax_reports_non_convergence(neq, gen_neq):
    final, ok = relax_to_steady(State3(1, 0, 0), gen_neq, tol=1e-10, t_max=1.0)
    assert not ok
    with pytest.raises(ValueError):
        relax_to_steady(State3(1, 0, 0), gen_neq, tol=-1.0)
