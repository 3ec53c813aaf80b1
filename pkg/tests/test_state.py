import numpy as np
import pytest

from alphach.analytic import PeakonParams, pa_eulerian_state, pa_lagrangian_state
from alphach.state import (
    ConfigError,
    EulerianState,
    LagrangianState,
    Measure,
    SolverConfig,
    StructuralError,
    check_eulerian,
    check_lagrangian,
    default_eps_collision,
    finite_difference,
    split_weights,
    trapezoid_weights,
)


def test_identity_state_passes_with_zero_violations():
    theta = LagrangianState.identity(np.linspace(-5, 5, 101))
    rep = check_lagrangian(theta)
    assert rep.passed
    assert all(v == 0.0 for v in rep.violations.values())


def test_energy_identity_violation_detected():
    theta = LagrangianState.identity(np.linspace(-1, 1, 5))
    theta.q[2], theta.hbar[2], theta.h[2], theta.w[2] = 1.0, 2.0, 2.0, 1.0
    theta.loss[:] = theta.h - theta.hbar
    rep = check_lagrangian(theta, tol=1e-8)
    assert not rep.passed
    assert rep.violations["energy_identity"] == pytest.approx(1.0)
    assert set(rep.failures()) == {"energy_identity"}


def test_analytic_state_half_time_passes():
    p = PeakonParams(2.0, 1.0, 0.5)
    theta = pa_lagrangian_state(p, 0.5, np.linspace(-12, 12, 2001))
    assert check_lagrangian(theta, tol=1e-10).passed


def test_check_lagrangian_is_read_only():
    p = PeakonParams(2.0, 1.0, 0.5)
    theta = pa_lagrangian_state(p, 0.5, np.linspace(-12, 12, 201))
    before = {k: v.copy() for k, v in theta.arrays().items()}
    r1 = check_lagrangian(theta)
    r2 = check_lagrangian(theta)
    assert r1.violations == r2.violations
    for k, v in theta.arrays().items():
        np.testing.assert_array_equal(v, before[k])


def test_mismatched_lengths_are_structural_errors():
    with pytest.raises(StructuralError):
        LagrangianState(np.arange(3.0), np.arange(3.0), np.zeros(2), np.ones(3), np.zeros(3), np.zeros(3), np.zeros(3), np.zeros(3))
    theta = LagrangianState.identity(np.arange(4.0))
    theta.U = np.zeros(3)
    with pytest.raises(StructuralError):
        check_lagrangian(theta)


def test_degenerate_node_requires_zero_w_and_r():
    theta = LagrangianState.identity(np.linspace(0, 1, 4))
    theta.q[1] = 0.0
    theta.h[1] = theta.hbar[1] = 1.0
    theta.loss[:] = 0.0
    assert check_lagrangian(theta).passed
    theta.r[1] = 0.1
    assert check_lagrangian(theta).violations["degenerate_nodes"] == pytest.approx(0.1)


def test_zero_eulerian_state_passes():
    assert check_eulerian(EulerianState.zero(np.linspace(-1, 1, 11))).passed


def test_eulerian_atom_missing_from_nu_fails():
    x = np.linspace(-1, 1, 11)
    e = EulerianState.zero(x)
    e.mu = Measure.from_atoms(x, [0.0], [1.0])
    rep = check_eulerian(e)
    assert not rep.passed
    assert "mu <= nu violated" in str(rep)


def test_eulerian_pa_exact_derivative_passes():
    e = pa_eulerian_state(PeakonParams(2.0, 1.0, 0.5), 0.0, np.linspace(-10.05, 10.05, 2011))
    assert check_eulerian(e, tol=1e-12).passed


def test_eulerian_fd_consistency_second_order_off_peaks():
    # with u_x from finite differences the mismatch is O(h^2) away from the peaks
    p = PeakonParams(2.0, 1.0, 0.5)
    errs = []
    for n in (401, 801, 1601):
        x = np.linspace(-10, 10, n)
        e = pa_eulerian_state(p, 0.0, x)
        fd = finite_difference(e.u, x)
        g = np.log(np.cosh(1.0))
        away = np.abs(np.abs(x) - g) > 0.2
        errs.append(np.max(np.abs(fd[away] ** 2 - e.ux[away] ** 2)))
    r1, r2 = errs[0] / errs[1], errs[1] / errs[2]
    assert 3.5 < r1 < 4.5 and 3.5 < r2 < 4.5


def test_measure_masses():
    x = np.linspace(0, 1, 11)
    m = Measure(x, np.ones_like(x), [0.5], [2.0])
    assert m.ac_mass() == pytest.approx(1.0)
    assert m.singular_mass() == pytest.approx(2.0)
    assert m.total_mass() == pytest.approx(3.0)
    assert m.atoms == [(0.5, 2.0)]
    np.testing.assert_allclose(m.cell_masses(), 0.1)


def test_measure_negative_density_reported():
    x = np.linspace(0, 1, 5)
    m = Measure(x, -np.ones_like(x))
    assert max(m.problems().values()) > 0


def test_weights():
    x = np.array([0.0, 1.0, 3.0])
    np.testing.assert_allclose(trapezoid_weights(x), [0.5, 1.5, 1.0])
    np.testing.assert_allclose(split_weights(x, np.array([0.5, 0.5])), [0.5, 1.5, 1.0])
    np.testing.assert_allclose(split_weights(x, np.array([1.0, 0.25])), [1.0, 0.5, 1.5])


def test_split_validation():
    theta = LagrangianState.identity(np.arange(4.0))
    with pytest.raises(StructuralError):
        LagrangianState(**theta.arrays(), split=np.array([0.5]))
    with pytest.raises(StructuralError):
        LagrangianState(**theta.arrays(), split=np.array([0.5, 2.0, 0.5]))


@pytest.mark.parametrize(
    "kw",
    [dict(alpha=-0.1), dict(alpha=1.5), dict(dt=0.0), dict(eps_collision=0.0), dict(xi_min=1.0, xi_max=0.0),
     dict(quadrature="simpson"), dict(integrator="euler"), dict(eta=0.0)],
)
def test_solver_config_rejects(kw):
    with pytest.raises(ConfigError):
        SolverConfig(**kw).validate()


def test_solver_config_roundtrip_and_unknown_keys():
    cfg = SolverConfig(n_nodes=64, alpha=0.25)
    assert SolverConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigError):
        SolverConfig.from_dict({"nodes": 3})


def test_default_eps_collision_scale_free():
    theta = LagrangianState.identity(np.linspace(0, 1, 5))
    assert default_eps_collision(theta) == pytest.approx(1e-6)
    theta.q *= 10
    assert default_eps_collision(theta) == pytest.approx(1e-5)
