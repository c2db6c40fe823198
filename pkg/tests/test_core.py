import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from asearch.core import (
    CompositePotential,
    InfeasibleStateError,
    MassMatrix,
    SystemState,
    ZeroPotential,
    check_gradient,
    check_hessian,
    fd_gradient,
    kinetic_energy,
    project_psd,
    relative_error,
    total_energy,
)
from asearch.potentials import IpcBarrier1D, QuadraticSpring


def test_state_is_immutable_and_flat():
    s = SystemState([[1.0, 2.0]], [3.0, 4.0])
    assert s.x.shape == (2,) and s.ndof == 2
    with pytest.raises(ValueError):
        s.x[0] = 5.0
    with pytest.raises(Exception):
        s.t = 1.0


def test_state_rejects_mismatched_lengths():
    with pytest.raises(ValueError):
        SystemState([1.0, 2.0], [1.0])
    with pytest.raises(ValueError):
        SystemState([], [])


def test_state_evolve_keeps_other_fields():
    s = SystemState([1.0], [2.0], t=0.5, energy_target=3.0)
    s2 = s.evolve(t=1.0)
    assert s2.t == 1.0 and s2.energy_target == 3.0 and s.t == 0.5


def test_state_finiteness():
    assert SystemState([1.0], [0.0]).is_finite()
    assert not SystemState([np.nan], [0.0]).is_finite()


def test_mass_matrix_validation():
    with pytest.raises(ValueError):
        MassMatrix([1.0, 0.0])
    m = MassMatrix.uniform(2.0, 3)
    assert m.total == 6.0 and len(m) == 3


def test_kinetic_energy_and_total():
    m = MassMatrix([1.0, 2.0])
    assert kinetic_energy([1.0, 1.0], m) == pytest.approx(1.5)
    s = SystemState([0.5, 0.5], [1.0, 1.0])
    assert total_energy(s, m, ZeroPotential(2)) == pytest.approx(1.5)
    with pytest.raises(ValueError):
        kinetic_energy([1.0], m)


def test_total_energy_infeasible_state():
    s = SystemState([-1.0], [0.0])
    with pytest.raises(InfeasibleStateError, match="infeasible state"):
        total_energy(s, MassMatrix([1.0]), IpcBarrier1D(1.0, 1.0))


def test_composite_flattens_and_weights():
    a, b = QuadraticSpring(1.0), QuadraticSpring(3.0)
    c = (a + b) + a
    assert len(c.parts) == 3
    x = np.array([2.0])
    assert c.energy(x) == pytest.approx(0.5 * 5.0 * 4.0)
    np.testing.assert_allclose(c.gradient(x), [10.0])
    assert c.convex


def test_composite_infinite_if_any_part_infeasible():
    c = QuadraticSpring(1.0) + IpcBarrier1D(1.0, 1.0)
    assert c.energy(np.array([-0.1])) == np.inf
    assert not c.feasible(np.array([-0.1]))


sym_mats = arrays(np.float64, (4, 4), elements=st.floats(-10, 10)).map(lambda A: A + A.T)


@given(sym_mats)
@settings(max_examples=60, deadline=None)
def test_project_psd_gives_psd_and_is_idempotent(H):
    P = project_psd(H)
    assert np.linalg.eigvalsh(P).min() >= -1e-9
    np.testing.assert_allclose(project_psd(P), P, atol=1e-9)


@given(arrays(np.float64, 4, elements=st.floats(0.0, 10.0)))
@settings(max_examples=30, deadline=None)
def test_project_psd_keeps_psd_matrices(d):
    H = np.diag(d)
    np.testing.assert_allclose(project_psd(H), H)


def test_fd_helpers_detect_wrong_gradient():
    class Wrong(QuadraticSpring):
        def gradient(self, x):
            return 2.0 * super().gradient(x)

    x = np.array([0.7, -0.2])
    check_gradient(QuadraticSpring(2.0), x)
    with pytest.raises(AssertionError):
        check_gradient(Wrong(2.0), x)
    check_hessian(QuadraticSpring(2.0), x)


def test_fd_gradient_of_quadratic():
    g = fd_gradient(lambda x: float(x @ x), np.array([1.0, 2.0]))
    np.testing.assert_allclose(g, [2.0, 4.0], rtol=1e-8)
    assert relative_error([1.0], [1.0]) == 0.0
