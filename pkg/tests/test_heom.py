import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tclheom.bath import BathSpec
from tclheom.heom import (HeomSolver, Hierarchy, HierarchyTooLarge, IntegratorConfig, NumericalError,
                          enumerate_indices, equilibrate_bath, heom_rhs, hierarchy_size, propagate)
from tclheom.heom import kernels
from tclheom.model import SpinBosonParams, build_spin_boson, exciton_model


def sb(eta=1.0, wc=1.0, beta=1.0, k=1, eps=0.0, delta=1.0):
    return build_spin_boson(SpinBosonParams(eps, delta, BathSpec(eta, wc, beta, k)))


# --- enumeration -----------------------------------------------------------------

def test_enumeration_examples():
    np.testing.assert_array_equal(enumerate_indices(1, 3), [[0], [1], [2], [3]])
    assert len(enumerate_indices(2, 2)) == 6
    assert len(enumerate_indices(3, 4)) == 35


def test_graded_lex_order():
    idx = enumerate_indices(3, 3)
    depth = idx.sum(axis=1)
    assert np.all(np.diff(depth) >= 0)
    for level in range(4):
        rows = [tuple(r) for r in idx[depth == level]]
        assert rows == sorted(rows, reverse=True)


def test_budget_rejection_reports_count():
    with pytest.raises(HierarchyTooLarge) as info:
        enumerate_indices(10, 10, max_ados=1000)
    assert info.value.count == hierarchy_size(10, 10) == math.comb(20, 10)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 5), st.integers(0, 5))
def test_index_bijection_and_neighbours(m, depth):
    h = Hierarchy.build(m, depth)
    assert h.n_ados == math.comb(m + depth, depth)
    for pos in range(h.n_ados):
        n = h.index_of(pos)
        assert h.position(n) == pos
        for k in range(m):
            up, down = h.plus[pos, k], h.minus[pos, k]
            if up >= 0:
                diff = np.array(h.index_of(up)) - np.array(n)
                assert diff[k] == 1 and np.count_nonzero(diff) == 1
            else:
                assert sum(n) == depth
            if down >= 0:
                diff = np.array(n) - np.array(h.index_of(down))
                assert diff[k] == 1 and np.count_nonzero(diff) == 1
            else:
                assert n[k] == 0


# --- right-hand side -------------------------------------------------------------------

@pytest.mark.parametrize("backend", sorted(kernels.BACKENDS))
def test_liouville_limit(backend, rng):
    model = sb(eta=0.0, eps=0.4, delta=0.9, k=0)
    s = HeomSolver(model, 0, backend=backend)
    rho = rng.standard_normal((1, 2, 2)) + 1j * rng.standard_normal((1, 2, 2))
    expect = -1j * (model.h_sys @ rho[0] - rho[0] @ model.h_sys)
    np.testing.assert_allclose(s.rhs_array(rho)[0], expect, atol=1e-14)


def test_backends_agree(rng):
    if "cython" not in kernels.BACKENDS:
        pytest.skip("compiled kernel not built")
    model = exciton_model(np.array([[1.0, 0.3, 0.1], [0.3, 0.0, 0.2], [0.1, 0.2, -0.5]]),
                          [BathSpec(0.5, 1.0, 2.0, 1)] * 3)
    a = HeomSolver(model, 4, backend="python")
    b = HeomSolver(model, 4, backend="cython", terminator=True)
    c = HeomSolver(model, 4, backend="python", terminator=True)
    shape = (a.hierarchy.n_ados, 3, 3)
    rho = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    ref = HeomSolver(model, 4, backend="cython").rhs_array(rho)
    np.testing.assert_allclose(a.rhs_array(rho), ref, atol=1e-12)
    np.testing.assert_allclose(b.rhs_array(rho), c.rhs_array(rho), atol=1e-12)


def test_module_level_rhs_and_propagate():
    model = sb(eta=0.5, k=1)
    s = HeomSolver(model, 3)
    state = s.factorized(np.diag([1.0, 0.0]))
    np.testing.assert_allclose(heom_rhs(state, model).rho, s.rhs(state).rho)
    traj = propagate(state, model, None, IntegratorConfig(0.01, 0.1))
    np.testing.assert_allclose(traj.rdos[-1], s.propagate(state, IntegratorConfig(0.01, 0.1)).rdos[-1])


def test_pure_dephasing_keeps_populations():
    model = sb(eta=2.0, eps=0.7, delta=0.0, k=2)
    s = HeomSolver(model, 5)
    rho0 = np.diag([0.3, 0.7]).astype(complex)
    traj = s.propagate(s.factorized(rho0), IntegratorConfig(0.01, 3.0))
    np.testing.assert_allclose(traj.populations, np.tile([0.3, 0.7], (len(traj.times), 1)), atol=1e-13)


def test_rhs_matches_centered_difference():
    model = sb(eta=1.0, eps=0.2, k=1)
    s = HeomSolver(model, 4)
    init = s.factorized(np.diag([1.0, 0.0]))
    t0 = s.propagate(init, IntegratorConfig(0.01, 1.0)).final
    step = s.stepper()
    errs = []
    for dt in (0.02, 0.01):
        ahead, back = step(t0.rho, dt), step(t0.rho, -dt)
        errs.append(np.abs((ahead - back) / (2 * dt) - s.rhs_array(t0.rho)).max())
    assert errs[1] < errs[0] / 3  # O(dt^2)
    assert errs[1] < 1e-4


def test_rabi_limit_and_trace():
    model = sb(eta=1e-8, k=0)
    s = HeomSolver(model, 2)
    traj = s.propagate(s.equilibrate(0), IntegratorConfig(0.005, 2 * math.pi))
    assert np.abs(traj.populations[:, 0] - np.cos(traj.times) ** 2).max() <= 1e-3
    assert np.abs(np.trace(traj.rdos, axis1=1, axis2=2) - 1).max() <= 1e-10


def test_trace_conserved_with_strong_coupling():
    s = HeomSolver(sb(eta=5.0, wc=5.0, beta=0.5, k=2), 8)
    traj = s.propagate(s.equilibrate(0), IntegratorConfig(0.005, 3.0, 10))
    assert np.abs(np.trace(traj.rdos, axis1=1, axis2=2) - 1).max() <= 1e-10


def test_observer_receives_every_record():
    s = HeomSolver(sb(), 3)
    seen = []
    s.propagate(s.factorized(np.diag([1.0, 0.0])), IntegratorConfig(0.01, 0.1, 5),
                observer=lambda t, rdo, full: seen.append((t, rdo.shape, full is not None)),
                full_state=True)
    assert [round(t, 12) for t, _, _ in seen] == [0.0, 0.05, 0.1]
    assert all(shape == (2, 2) and full for _, shape, full in seen)


def test_non_finite_values_abort_with_step():
    model = build_spin_boson(SpinBosonParams(0.0, 400.0, BathSpec(0.0, 1.0, 1.0, 0)))
    s = HeomSolver(model, 0)
    with pytest.raises(NumericalError) as info:
        s.propagate(s.factorized(np.diag([1.0, 0.0])), IntegratorConfig(0.01, 1000.0))
    assert info.value.step is not None and info.value.step > 0


def test_stability_preflight():
    s = HeomSolver(sb(eta=5.0, wc=5.0, beta=0.5, k=4), 12)
    with pytest.raises(NumericalError, match="stability"):
        s.propagate(s.factorized(np.diag([1.0, 0.0])), IntegratorConfig(0.01, 1.0))


def test_integrator_config_validation():
    with pytest.raises(ValueError):
        IntegratorConfig(0.0, 1.0)
    with pytest.raises(ValueError):
        IntegratorConfig(0.1, 0.01)
    assert IntegratorConfig(0.1, 1.0).n_steps == 10


# --- equilibration ---------------------------------------------------------------------

def test_equilibrium_without_coupling():
    s = HeomSolver(sb(eta=0.0, k=2), 4)
    eq = s.equilibrate(1)
    np.testing.assert_array_equal(eq.rdo, np.diag([0, 1]))
    assert np.all(eq.rho[1:] == 0)


@pytest.mark.parametrize("j", [0, 1])
def test_equilibrium_matches_analytic_ados(j):
    # stationary ADOs: cutoff-mode chain c_m = (-eta v_j)^m, Matsubara ADOs zero
    eta, depth = 2.0, 6
    s = HeomSolver(sb(eta=eta, wc=2.0, beta=1.0, k=2), depth)
    eq = s.equilibrate(j)
    phys = s.plan.unscale(eq.rho)
    v = s.model.couplings[0, j]
    h = s.hierarchy
    for pos in range(h.n_ados):
        n = h.index_of(pos)
        expect = (-eta * v) ** n[0] if not any(n[1:]) else 0.0
        assert phys[pos, j, j] == pytest.approx(expect, abs=1e-7 * max(1, abs(expect)))
        off = phys[pos].copy()
        off[j, j] = 0
        assert np.abs(off).max() < 1e-12


def test_equilibrium_is_fixed_point():
    s = HeomSolver(sb(eta=3.0, wc=2.0, beta=0.7, k=2), 6)
    eq = s.equilibrate(0)
    assert np.abs(s.rhs_array(eq.rho, s.model.h0)).max() < 1e-9
    later = s.propagate(eq, IntegratorConfig(0.01, 1.0), h=s.model.h0).final
    assert np.abs(later.rho - eq.rho).max() < 1e-8


def test_equilibration_failure_reports_residual():
    with pytest.raises(NumericalError) as info:
        equilibrate_bath(sb(eta=3.0, wc=2.0, beta=0.7, k=2), 0, 6, t_max=0.05)
    assert info.value.residual is not None and info.value.residual > 1e-9
