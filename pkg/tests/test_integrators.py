import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from asearch.core import MassMatrix, SystemState, ZeroPotential, kinetic_energy
from asearch.integrators import (
    DecaySpec,
    History,
    Integrator,
    IntegratorSpec,
    solve_alpha,
    step_a1,
    step_asearch,
    step_bdf2,
    step_blending,
    step_decoupled_linear,
    step_explicit_euler,
    step_implicit_euler,
    step_midpoint,
    step_symplectic_euler,
    step_theta_inner,
    step_theta_outer,
    step_trapezoidal,
    update_energy_target,
)
from asearch.core import InfeasibleStateError
from asearch.potentials import Gravity, IpcBarrier1D, QuadraticSpring
from asearch import tableaux as tb

M1 = MassMatrix([1.0])


def spring(k=1.0):
    return QuadraticSpring(k)


def test_spec_validation():
    with pytest.raises(ValueError):
        IntegratorSpec("rk4")
    with pytest.raises(ValueError):
        IntegratorSpec("asearch", alpha_max=0.9)
    with pytest.raises(ValueError):
        IntegratorSpec("asearch", e0_factor=1.5)
    with pytest.raises(ValueError):
        IntegratorSpec("theta_inner", theta=2.0)
    with pytest.raises(ValueError):
        DecaySpec(tau=0.0)


# --- energy targets -------------------------------------------------------


def test_energy_target_updates():
    none = IntegratorSpec("asearch")
    assert update_energy_target(10.0, 0.0, none, 0.1) == 10.0
    assert update_energy_target(10.0, 2.0, none, 0.1) == 8.0
    dec = IntegratorSpec("asearch", decay=DecaySpec(tau=0.5, E_ground=1.0))
    assert update_energy_target(2.0, 0.0, dec, 0.5) == pytest.approx(1.0 + math.exp(-1))
    late = IntegratorSpec("asearch", decay=DecaySpec(tau=0.5, start_time=3.0))
    assert update_energy_target(2.0, 0.0, late, 0.5, t=1.0) == 2.0


# --- α root selection -----------------------------------------------------


@given(st.floats(-3, 3), st.floats(0.1, 3), st.floats(0.0, 2.0))
@settings(max_examples=100, deadline=None)
def test_solve_alpha_hits_reachable_targets(w, dv, a_true):
    m = np.array([1.0])
    target = 0.5 * (w - a_true * dv) ** 2
    a, clipped, degenerate = solve_alpha(np.array([w]), np.array([dv]), m, 0.0, target, 0.0, 10.0)
    assert not degenerate
    if not clipped:
        assert 0.5 * (w - a * dv) ** 2 == pytest.approx(target, rel=1e-9, abs=1e-12)


def test_solve_alpha_picks_root_closest_to_one_and_smaller_on_ties():
    m = np.array([1.0])
    # energy ½(1 - α)² hits 0.5 at α = 0 and α = 2: tie, take 0
    a, clipped, _ = solve_alpha(np.array([1.0]), np.array([1.0]), m, 0.0, 0.5, 0.0, 5.0)
    assert a == 0.0 and not clipped
    # roots 0.5 and 1.5 around 1 with the target 1/8: tie again -> 0.5
    a, _, _ = solve_alpha(np.array([1.0]), np.array([1.0]), m, 0.0, 0.125, 0.0, 5.0)
    assert a == pytest.approx(0.5)
    # roots -1 and 3: 3 is closer... no, |−1−1| = 2 = |3−1| tie -> smaller, clipped to 0
    a, clipped, _ = solve_alpha(np.array([1.0]), np.array([1.0]), m, 0.0, 2.0, 0.0, 5.0)
    assert a == 0.0 and clipped


def test_solve_alpha_unreachable_uses_vertex():
    m = np.array([1.0])
    a, clipped, _ = solve_alpha(np.array([1.0]), np.array([2.0]), m, 1.0, 0.5, 0.0, 5.0)
    assert a == pytest.approx(0.5) and clipped


def test_solve_alpha_degenerate():
    m = np.array([1.0])
    z = np.array([0.0])
    assert solve_alpha(np.array([1.0]), z, m, 0.0, 1.0, 0.0, 1.1) == (1.1, False, True)
    assert solve_alpha(np.array([1.0]), z, m, 0.0, 0.1, 0.0, 1.1) == (0.0, False, True)
    assert solve_alpha(np.array([1.0]), z, m, 0.0, 0.5, 0.0, 1.1) == (1.0, False, True)


# --- baselines on the linear problem --------------------------------------


def _matrix(step):
    cols = []
    for x0, v0 in ((1.0, 0.0), (0.0, 1.0)):
        s = step(SystemState([x0], [v0]))
        cols.append([s.x[0], s.v[0]])
    return np.array(cols).T


@pytest.mark.parametrize("hb", [0.1, 1.0, 10.0, 1e4])
def test_implicit_euler_matrix(hb):
    Q = _matrix(lambda s: step_implicit_euler(s, M1, spring(hb), 1.0))
    np.testing.assert_allclose(Q, np.array([[1, 1], [-hb, 1]]) / (1 + hb), rtol=1e-8, atol=1e-12)


@pytest.mark.parametrize("hb", [0.5, 3.0, 5.0])
def test_symplectic_euler_matrix(hb):
    Q = _matrix(lambda s: step_symplectic_euler(s, M1, spring(hb), 1.0))
    np.testing.assert_allclose(Q, [[1 - hb, 1], [-hb, 1]], atol=1e-14)
    assert np.linalg.det(Q) == pytest.approx(1.0)
    assert (abs(np.trace(Q)) > 2) == (hb > 4)


def test_symplectic_euler_rejects_barrier_crossing():
    with pytest.raises(InfeasibleStateError):
        step_symplectic_euler(SystemState([0.1], [-1.0]), M1, IpcBarrier1D(1e-9, 1.0), 1.0)


def test_theta_methods_reduce_to_named_ones():
    P = spring(2.0)
    s = SystemState([0.3], [-0.7])
    h = 0.4
    a = step_theta_inner(s, M1, P, h, 1.0)
    b = step_implicit_euler(s, M1, P, h)
    np.testing.assert_allclose([a.x, a.v], [b.x, b.v], rtol=1e-9)
    c = step_theta_outer(s, M1, P, h, 0.0)
    d = step_explicit_euler(s, M1, P, h)
    np.testing.assert_allclose([c.x, c.v], [d.x, d.v])
    e = step_theta_outer(s, M1, P, h, 0.5)
    f = step_trapezoidal(s, M1, P, h)
    np.testing.assert_allclose([e.x, e.v], [f.x, f.v])


@pytest.mark.parametrize("hb", [0.3, 4.0, 100.0])
def test_midpoint_and_trapezoidal_conserve_quadratic_energy(hb):
    for stepper in (step_midpoint, step_trapezoidal):
        s = SystemState([1.0], [0.5])
        P = spring(hb)
        H0 = kinetic_energy(s.v, M1) + P.energy(s.x)
        for _ in range(20):
            s = stepper(s, M1, P, 1.0)
        assert kinetic_energy(s.v, M1) + P.energy(s.x) == pytest.approx(H0, rel=1e-7)


def test_bdf2_bootstrap_and_history():
    P = spring(1.0)
    s = SystemState([1.0], [0.0])
    first = step_bdf2(s, History(), M1, P, 0.1)
    ie = step_implicit_euler(s, M1, P, 0.1)
    np.testing.assert_allclose(first.x, ie.x)
    h = 0.1
    second = step_bdf2(first, History.of(s), M1, P, h)
    # closed-form BDF2 on x'' = -x: x2 = a + c v2, v2 = b - c x2
    c = 2 * h / 3
    a = (4 * first.x[0] - s.x[0]) / 3
    b = (4 * first.v[0] - s.v[0]) / 3
    x2 = (a + c * b) / (1 + c * c)
    assert second.x[0] == pytest.approx(x2, rel=1e-8)
    assert second.v[0] == pytest.approx(b - c * x2, rel=1e-8)


# --- A-1 and A-search ------------------------------------------------------


def test_a1_free_flight():
    s = SystemState([0.0, 1.0], [1.0, -2.0])
    s2, d = step_a1(s, MassMatrix([1.0, 1.0]), ZeroPotential(2), None, 0.5)
    np.testing.assert_allclose(s2.v, s.v)
    np.testing.assert_allclose(s2.x, [0.5, 0.0])
    assert d.alpha_used == 1.0


@pytest.mark.parametrize("hb", [0.1, 1.0, 10.0, 1e6])
def test_a1_linear_trace_and_det(hb):
    Q = _matrix(lambda s: step_a1(s, M1, spring(hb), None, 1.0)[0])
    assert np.trace(Q) == pytest.approx((2 + hb) / (1 + hb), rel=1e-9)
    assert np.linalg.det(Q) == pytest.approx(1.0, rel=1e-8)


def test_asearch_requires_target():
    with pytest.raises(ValueError, match="energy target"):
        step_asearch(SystemState([1.0], [0.0]), M1, spring(), None, 0.1, IntegratorSpec("asearch"))


def test_asearch_exact_targeting_on_oscillator():
    P = spring(4.0)
    integ = Integrator(IntegratorSpec("asearch", alpha_max=10.0), M1, P, 0.3)
    s = integ.initialize(SystemState([1.0], [0.5]))
    H0 = s.energy_target
    for _ in range(200):
        s, d = integ.step(s)
        if not d.clipped:
            assert abs(d.energy_after - H0) <= 1e-9 * max(1.0, H0)
        assert integ.spec.alpha_min <= d.alpha_used <= integ.spec.alpha_max


def test_asearch_free_fall_saturates_alpha():
    m = MassMatrix([2.0])
    integ = Integrator(IntegratorSpec("asearch"), m, Gravity([2.0]), 0.05)
    s = integ.initialize(SystemState([10.0], [0.0]))
    for _ in range(5):
        s, d = integ.step(s)
        assert d.degenerate and d.alpha_used == 1.1


def test_asearch_friction_loss_lowers_target():
    P = spring(1.0)
    b = IpcBarrier1D(1.0, 1.0)
    from asearch.potentials import build_coulomb

    integ = Integrator(IntegratorSpec("asearch"), M1, P + b, 0.1,
                       dissipation=lambda anchor, h: build_coulomb(0.5, b, anchor, h))
    s = integ.initialize(SystemState([0.6], [-0.5]))
    E = s.energy_target
    s2, d = integ.step(s)
    assert d.friction_loss > 0
    assert d.target == pytest.approx(E - d.friction_loss)
    assert s2.accumulated_friction_loss == d.friction_loss


def test_sparse_search_only_after_three_same_signs():
    P = spring(50.0)
    integ = Integrator(IntegratorSpec("asearch", sparse_search=True), M1, P, 0.2)
    s = integ.initialize(SystemState([1.0], [0.0]))
    flags = []
    for _ in range(30):
        s, d = integ.step(s)
        flags.append(d.searched)
    assert not flags[0] and not flags[1]
    assert any(flags)


def test_decay_tracks_exponential():
    tau, h = 2.0, 0.05
    integ = Integrator(IntegratorSpec("asearch", alpha_max=5.0, decay=DecaySpec(tau)), M1, spring(1.0), h)
    s = integ.initialize(SystemState([1.0], [0.0]))
    for n in range(1, 100):
        s, d = integ.step(s)
        assert d.target == pytest.approx(0.5 * math.exp(-n * h / tau), rel=1e-12)


def test_e0_factor():
    integ = Integrator(IntegratorSpec("asearch", e0_factor=0.95), M1, spring(1.0), 0.1)
    s = integ.initialize(SystemState([1.0], [0.0]))
    assert s.energy_target == pytest.approx(0.95 * 0.5)


# --- blending --------------------------------------------------------------


def test_blending_conserves_oscillator_energy():
    P = spring(3.0)
    s = SystemState([1.0], [0.2], energy_target=0.5 * 3.0 + 0.5 * 0.04)
    for _ in range(50):
        s, d = step_blending(s, M1, P, 0.2)
        assert abs(d.energy_after - s.energy_target) <= 1e-10 * max(1.0, s.energy_target)


def test_blending_free_flight_is_alpha_independent():
    s = SystemState([0.0], [1.0], energy_target=0.5)
    s2, d = step_blending(s, M1, ZeroPotential(1), 0.1)
    assert s2.x[0] == pytest.approx(0.1) and s2.v[0] == pytest.approx(1.0)


def test_blending_feasibility_flag_matches_state():
    b = IpcBarrier1D(1e3, 0.5)
    s = SystemState([0.3], [-3.0])
    for _ in range(10):
        s, d = step_blending(s, M1, b, 0.05)
        assert d.feasible == b.feasible(s.x)
        assert d.feasible  # convex combination of two feasible 1-D states


# --- linear decoupled matrices ---------------------------------------------


@pytest.mark.parametrize("name", list(tb.CATALOG))
@pytest.mark.parametrize("hb", [1e-3, 1.0, 44.0, 1e6])
def test_decoupled_det_is_one(name, hb):
    Q = step_decoupled_linear(tb.get(name), hb)
    assert np.linalg.det(Q) == pytest.approx(1.0, abs=1e-10)


def test_decoupled_implicit_euler_trace():
    for hb in (0.1, 1.0, 10.0, 1e6):
        Q = step_decoupled_linear(tb.IMPLICIT_EULER, hb)
        assert np.trace(Q) == pytest.approx(1 + 1 / (1 + hb), rel=1e-12)
    np.testing.assert_allclose(step_decoupled_linear(tb.IMPLICIT_EULER, 0.0), np.eye(2) + [[0, 1], [0, 0]])


# --- driver -----------------------------------------------------------------


def test_integrator_reports_newton_iterations_for_all_implicit_kinds():
    for kind in ("implicit_euler", "bdf2", "midpoint", "trapezoidal", "a1", "asearch", "blending"):
        integ = Integrator(IntegratorSpec(kind), M1, spring(2.0), 0.1)
        s = integ.initialize(SystemState([1.0], [0.0]))
        s, d = integ.step(s)
        assert d.newton_iters >= 1, kind


def test_determinism(soft_scene):
    m, P, chain, _ = soft_scene
    runs = []
    for _ in range(2):
        integ = Integrator(IntegratorSpec("asearch"), m, P, 1 / 30)
        s = integ.initialize(SystemState(chain.rest_positions(0.05), -np.ones(chain.n_nodes)))
        for _ in range(20):
            s, _ = integ.step(s)
        runs.append((s.x.copy(), s.v.copy()))
    assert np.array_equal(runs[0][0], runs[1][0]) and np.array_equal(runs[0][1], runs[1][1])


@pytest.mark.parametrize("kind", ["a1", "asearch", "bdf2", "implicit_euler"])
def test_free_chain_conserves_momentum(soft_chain, kind):
    m = MassMatrix(soft_chain.masses)
    integ = Integrator(IntegratorSpec(kind), m, soft_chain, 1 / 100)
    rng = np.random.default_rng(3)
    x0 = soft_chain.rest_positions(0.0) + 1e-3 * rng.standard_normal(soft_chain.n_nodes)
    s = integ.initialize(SystemState(x0, rng.standard_normal(soft_chain.n_nodes)))
    p0 = float(np.dot(m.diag, s.v))
    for _ in range(30):
        s, _ = integ.step(s)
    assert float(np.dot(m.diag, s.v)) == pytest.approx(p0, abs=1e-9)
