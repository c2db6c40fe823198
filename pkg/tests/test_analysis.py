import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from asearch.analysis import (
    CollisionScenario,
    ModalBasis,
    aggregate_spectrum,
    build_update_matrix,
    collide,
    linearized_energy,
    modal_spectrum,
    reference_trajectory,
    stability_report,
)
from asearch.core import MassMatrix, SystemState
from asearch.potentials import NeoHookeanChain1D, QuadraticSpring

HBARS = np.logspace(-2, 8, 40)


def _ie(hb):
    return np.array([[1.0, 1.0], [-hb, 1.0]]) / (1 + hb)


def _a_alpha(hb, alpha):
    # implicit Euler base, then v' = w - α ħ (x - x')
    ie = _ie(hb)
    corr = alpha * hb * (np.array([1.0, 0.0]) - ie[0])
    return np.array([ie[0], ie[1] - corr])


CLOSED = {
    "explicit_euler": lambda hb: np.array([[1.0, 1.0], [-hb, 1.0]]),
    "implicit_euler": _ie,
    "symplectic_euler": lambda hb: np.array([[1 - hb, 1.0], [-hb, 1.0]]),
    "midpoint": lambda hb: np.array([[1 - hb / 4, 1.0], [-hb, 1 - hb / 4]]) / (1 + hb / 4),
    "trapezoidal": lambda hb: np.array([[1 - hb / 4, 1.0], [-hb, 1 - hb / 4]]) / (1 + hb / 4),
    "a1": lambda hb: _a_alpha(hb, 1.0),
}


def _close(Q, ref, tol=1e-10):
    scale = max(1.0, float(np.max(np.abs(ref))))
    assert np.max(np.abs(Q - ref)) <= tol * scale, (Q, ref)


@pytest.mark.parametrize("method", list(CLOSED))
def test_update_matrix_matches_closed_form(method):
    for hb in HBARS:
        _close(build_update_matrix(method, hb).Q, CLOSED[method](hb))


@pytest.mark.parametrize("alpha", [0.0, 0.5, 1.0, 1.1])
def test_a_alpha_matrix(alpha):
    for hb in HBARS[::4]:
        M = build_update_matrix("a_alpha", hb, alpha)
        _close(M.Q, _a_alpha(hb, alpha))
        # closed-form invariants
        assert M.det == pytest.approx((1 + alpha * hb) / (1 + hb), rel=1e-9)
        assert M.trace == pytest.approx((2 + alpha * hb) / (1 + hb), rel=1e-9)


def test_a_alpha_requires_alpha():
    with pytest.raises(ValueError):
        build_update_matrix("a_alpha", 1.0)
    with pytest.raises(ValueError):
        build_update_matrix("leapfrog", 1.0)


def test_a1_is_area_preserving_and_stable():
    for hb in HBARS:
        M = build_update_matrix("a1", hb)
        assert M.det == pytest.approx(1.0, rel=1e-9)
        assert M.trace == pytest.approx((2 + hb) / (1 + hb), rel=1e-9)
        assert not M.unstable()


def test_a1_rotation_angle_saturates():
    M = build_update_matrix("a1", 1e10)
    lam = M.eigenvalues
    assert abs(abs(np.angle(lam[0])) - math.pi / 3) < 1e-6


def test_symplectic_euler_goes_unstable_beyond_four():
    assert not build_update_matrix("symplectic_euler", 3.9).unstable()
    assert build_update_matrix("symplectic_euler", 5.0).unstable()


def test_theta_variants():
    _close(build_update_matrix("theta_inner:1", 2.0).Q, _ie(2.0))
    _close(build_update_matrix("theta_outer:0.5", 2.0).Q, CLOSED["trapezoidal"](2.0))


def test_decoupled_sdirk2_trace():
    M = build_update_matrix("decoupled:sdirk2", 44.0)
    assert M.trace == pytest.approx(-2.16337, abs=1e-5)
    assert M.unstable()


def test_stability_report_rows():
    rows = stability_report(["a1", "a_alpha"], [0.1, 10.0], [0.5, 1.0])
    assert len(rows) == 2 + 4
    assert {r.method for r in rows} == {"a1", "a_alpha"}
    for r in rows:
        assert r.abs_l1 >= r.abs_l2
        assert r.det == pytest.approx(r.abs_l1 * r.abs_l2, rel=1e-9)


# --- collisions ------------------------------------------------------------


@pytest.mark.parametrize("barrier", ["quadratic", "ipc"])
@pytest.mark.parametrize("beta", [0.2, 0.5, 0.8])
def test_a1_collision_sequence(barrier, beta):
    r = collide(CollisionScenario.at_hbar(1e8, barrier, beta), "a1")
    assert r.resolve_steps == 4
    tol = 1e-7 if barrier == "quadratic" else 1e-5
    np.testing.assert_allclose(r.v[1:5], [-1.0, -beta, 1 - beta, 1.0], atol=tol)
    assert r.exit_speed == pytest.approx(1.0, abs=tol)
    # the kinetic energy dips mid-contact before being restored
    assert r.kinetic[2] == pytest.approx(0.5 * beta * beta, abs=tol)


@pytest.mark.parametrize("beta,exit_speed", [(0.2, 2.2), (0.5, 1.0), (0.8, 1.4)])
def test_trapezoidal_collision(beta, exit_speed):
    r = collide(CollisionScenario.at_hbar(1e8, "quadratic", beta), "trapezoidal")
    assert r.exit_speed == pytest.approx(exit_speed, abs=1e-6)


@pytest.mark.parametrize("beta", [0.1, 0.5, 0.9, 0.95])
def test_asearch_collision_exits_at_unit_speed(beta):
    sc = CollisionScenario.at_hbar(1e8, "quadratic", beta)
    r = collide(sc, "asearch")
    assert r.v[2] == pytest.approx(-min(beta * sc.alpha_max, 1.0), abs=1e-7)
    assert r.exit_speed == pytest.approx(1.0, abs=1e-9)


def test_scenario_scaling():
    q = CollisionScenario.at_hbar(100.0, "quadratic", 0.3)
    assert q.h == 1.0 and q.omega2 == 100.0 and q.hbar == pytest.approx(100.0)
    i = CollisionScenario.at_hbar(100.0, "ipc", 0.3)
    assert i.h == pytest.approx(10.0) and i.hbar == pytest.approx(100.0)
    assert i.initial_state.x[0] == pytest.approx(i.dhat + 0.3 * i.h)
    with pytest.raises(ValueError):
        CollisionScenario.at_hbar(1.0, "spline", 0.3)


def test_wrong_target_changes_exit():
    sc = CollisionScenario.at_hbar(1e8, "quadratic", 0.5, target_speed=2.0)
    r = collide(sc, "asearch")
    assert r.exit_speed > 1.0


# --- reference integration ---------------------------------------------------


def test_reference_quadratic_exit():
    sc = CollisionScenario(barrier="quadratic", omega2=1.0, beta=0.5, h=1.0)
    ref = reference_trajectory(sc, 1e-4)
    assert abs(ref.final_velocity[0]) == pytest.approx(1.0, abs=1e-6)


class _Osc:
    mass_matrix = MassMatrix([1.0])
    potential = QuadraticSpring(4.0)
    initial_state = SystemState([1.0], [0.0])


def test_reference_oscillator_energy():
    period = math.pi
    ref = reference_trajectory(_Osc(), period / 2000, duration=100 * period, record_every=1000)
    drift = np.max(np.abs(ref.energy - ref.energy[0])) / ref.energy[0]
    assert drift < 1e-6
    assert ref.x[-1, 0] == pytest.approx(1.0, abs=1e-3)


def test_reference_rejects_bad_args():
    with pytest.raises(ValueError):
        reference_trajectory(_Osc(), 0.0, duration=1.0)
    with pytest.raises(ValueError):
        reference_trajectory(_Osc(), 0.1)
    with pytest.raises(RuntimeError):
        reference_trajectory(_Osc(), 2.0, duration=50.0)


# --- modal spectrum ----------------------------------------------------------


@pytest.fixture
def chain():
    return NeoHookeanChain1D.from_rod(1.0, 12, 2.0, 3.0)


def test_rest_state_has_no_modal_energy(chain):
    rep = modal_spectrum(chain, chain.rest_positions(0.0), np.zeros(chain.n_nodes))
    assert rep.total == pytest.approx(0.0, abs=1e-20)
    assert rep.com_energy == 0.0
    assert len(rep.energies) == chain.n_nodes - 1
    assert np.all(np.diff(rep.frequencies) > 0)


def test_unit_modal_velocity(chain):
    basis = ModalBasis.at_rest(chain)
    v = basis.modes[:, basis.rigid]  # mass-normalised first vibrational mode
    rep = modal_spectrum(chain, chain.rest_positions(0.0), v, basis)
    assert rep.energies[0] == pytest.approx(0.5, rel=1e-10)
    assert rep.band(2, len(rep.energies)) == pytest.approx(0.0, abs=1e-12)


def test_translation_goes_to_com(chain):
    rep = modal_spectrum(chain, chain.rest_positions(0.3), np.full(chain.n_nodes, -1.0))
    assert rep.total == pytest.approx(0.0, abs=1e-12)
    assert rep.com_energy == pytest.approx(0.5 * sum(chain.masses), rel=1e-12)


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=25, deadline=None)
def test_parseval(seed):
    chain = NeoHookeanChain1D.from_rod(1.0, 12, 2.0, 3.0)
    rng = np.random.default_rng(seed)
    x = chain.rest_positions(0.0) + 1e-2 * rng.standard_normal(chain.n_nodes)
    v = rng.standard_normal(chain.n_nodes)
    rep = modal_spectrum(chain, x, v)
    lin = linearized_energy(chain, x, v)
    assert rep.total + rep.com_energy == pytest.approx(lin, rel=1e-10)


def test_band_validation(chain):
    rep = modal_spectrum(chain, chain.rest_positions(0.0), np.zeros(chain.n_nodes))
    with pytest.raises(ValueError):
        rep.band(0, 3)


def test_aggregate(chain):
    x = chain.rest_positions(0.0)
    frames = [(x, np.zeros(chain.n_nodes)), (x, np.full(chain.n_nodes, 2.0))]
    agg = aggregate_spectrum(chain, frames)
    assert agg.com_energy == pytest.approx(0.5 * 0.5 * 4 * sum(chain.masses))
    with pytest.raises(ValueError):
        aggregate_spectrum(chain, [])


def test_indefinite_stiffness_is_rejected(chain, monkeypatch):
    n = chain.n_nodes
    monkeypatch.setattr(chain, "hessian", lambda x: -np.eye(n))
    with pytest.raises(ValueError, match="indefinite"):
        ModalBasis.at_rest(chain)
