import numpy as np
import pytest

from autodiff import graph as G
from physics.fundamental_diagram import (
    FDParams,
    PWConstants,
    demand,
    density_for_speed,
    equilibrium_flow,
    equilibrium_speed,
    fd_speed,
    supply,
)
from physics.losses import LossWeights, PhysicsSettings, segment_of
from physics.residuals import Geometry, pw_residuals

V_F, RHO_C, A = 100.0 / 3.6, 0.030, 2.0
FD = (V_F, RHO_C, A)


def test_capacity_sits_at_critical_density():
    rho = np.linspace(0.001, 0.12, 2000)
    flow = equilibrium_flow(rho, *FD)
    assert rho[np.argmax(flow)] == pytest.approx(RHO_C, abs=1e-4)


def test_density_for_speed_inverts_the_curve():
    rho = np.array([0.005, 0.02, 0.03, 0.07, 0.12])
    np.testing.assert_allclose(density_for_speed(equilibrium_speed(rho, *FD), *FD), rho, rtol=1e-10)


def test_demand_and_supply_meet_at_capacity():
    capacity = float(equilibrium_flow(RHO_C, *FD))
    assert float(demand(0.08, *FD)) == pytest.approx(capacity)
    assert float(supply(0.01, *FD)) == pytest.approx(capacity)


def test_fd_speed_node_matches_numpy():
    rho = np.array([0.01, 0.03, 0.05])
    node = fd_speed(rho, FDParams(v_f=V_F, rho_c=RHO_C, a=A))
    np.testing.assert_allclose(node.value, equilibrium_speed(rho, *FD), rtol=1e-12)
    with pytest.raises(ValueError):
        fd_speed(np.array([0.0]), FD)


def test_fd_params_validation():
    with pytest.raises(ValueError):
        FDParams(v_f=100.0, rho_c=0.03, a=5.0)
    with pytest.raises(ValueError):
        FDParams(v_f=-1.0, rho_c=0.03, a=2.0)


def _coords(n=6):
    return np.random.default_rng(1).uniform(size=(n, 2))


def test_equilibrium_state_has_zero_residuals():
    rho = 0.018
    v = float(equilibrium_speed(rho, *FD))

    def closure(point):
        ones = G.mul(G.index_select(point, (slice(None), 0)), 0.0)
        return G.add(ones, rho * v), G.add(ones, v)

    pair = pw_residuals(closure, _coords(), FD, PWConstants(), Geometry(2000.0, 55.0), 1e-6, 0.01)
    assert np.max(np.abs(pair.f1.value)) < 1e-10
    assert np.max(np.abs(pair.f2.value)) < 1e-10
    assert pair.clamped == 0


def test_conservation_residual_of_linear_flow():
    q0, slope, v = 0.3, 0.05, 20.0
    length, span = 2000.0, 55.0

    def closure(point):
        x = G.index_select(point, (slice(None), 0))
        return G.add(G.mul(x, slope), q0), G.add(G.mul(x, 0.0), v)

    pair = pw_residuals(closure, _coords(), FD, PWConstants(), Geometry(length, span), 1e-6, 0.01)
    # rho = q / v is constant in time, so f1 reduces to dq/dx in physical units
    np.testing.assert_allclose(pair.f1.value, slope / length, rtol=1e-10)


def test_residual_time_derivative_uses_span():
    rho_slope, v = 0.01, 20.0
    span = 30.0

    def closure(point):
        t = G.index_select(point, (slice(None), 1))
        rho = G.add(G.mul(t, rho_slope), 0.02)
        return G.mul(rho, v), G.add(G.mul(t, 0.0), v)

    pair = pw_residuals(closure, _coords(), FD, PWConstants(), Geometry(1000.0, span), 1e-6, 0.01)
    np.testing.assert_allclose(pair.f1.value, rho_slope / span, rtol=1e-10)


def test_speed_floor_counts_clamped_points():
    def closure(point):
        zeros = G.mul(G.index_select(point, (slice(None), 0)), 0.0)
        return G.add(zeros, 0.1), G.add(zeros, 0.001)

    pair = pw_residuals(closure, _coords(4), FD, PWConstants(), Geometry(1000.0, 30.0), 1e-6, 0.5)
    assert pair.clamped == 4


def test_segment_of_assigns_right_edge_to_last_segment():
    np.testing.assert_array_equal(segment_of(np.array([0.0, 0.24, 0.25, 0.99, 1.0]), 4), [0, 0, 1, 3, 3])


def test_settings_validation():
    settings = PhysicsSettings.from_dict({"tau": 10.0, "residual_scales": [2e-4, 1.0]})
    assert settings.constants.tau == 10.0
    assert settings.residual_scales == (2e-4, 1.0)
    with pytest.raises(ValueError):
        PhysicsSettings.from_dict({"unknown": 1})
    with pytest.raises(ValueError):
        LossWeights(0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        LossWeights.from_sequence([1.0, 1.0])


def _constant(point, value):
    return G.add(G.mul(G.index_select(point, (slice(None), 0)), 0.0), value)


def test_off_equilibrium_constant_state_relaxes_at_rate_one_over_tau():
    q0, v0 = 0.5, 25.0
    constants = PWConstants(tau=12.0, c=40.0)
    pair = pw_residuals(
        lambda point: (_constant(point, q0), _constant(point, v0)),
        _coords(),
        FD,
        constants,
        Geometry(2000.0, 55.0),
        1e-6,
        0.01,
    )
    expected = (v0 - float(equilibrium_speed(q0 / v0, *FD))) / constants.tau
    np.testing.assert_allclose(pair.f2.value, expected, rtol=1e-12)
    np.testing.assert_allclose(pair.f1.value, 0.0, atol=1e-14)


def test_momentum_residual_of_a_linear_speed_ramp():
    rho0, v0, beta = 0.02, 20.0, 0.002
    length, span = 2000.0, 55.0
    constants = PWConstants()

    def closure(point):
        x = G.mul(G.index_select(point, (slice(None), 0)), length)
        v = G.add(G.mul(x, beta), v0)
        return G.mul(v, rho0), v

    y = _coords()
    pair = pw_residuals(closure, y, FD, constants, Geometry(length, span), 1e-6, 0.01)
    v = v0 + beta * length * y[:, 0]
    expected = v * beta + (v - float(equilibrium_speed(rho0, *FD))) / constants.tau
    np.testing.assert_allclose(pair.f2.value, expected, rtol=1e-8)
    np.testing.assert_allclose(pair.f1.value, rho0 * beta, rtol=1e-8)


def test_equilibrium_annihilates_residuals_for_random_diagrams():
    rng = np.random.default_rng(21)
    y = _coords(3)
    for _ in range(100):
        fd = FDParams(
            v_f=rng.uniform(40.0, 140.0) / 3.6,
            rho_c=rng.uniform(0.01, 0.06),
            a=rng.uniform(0.5, 4.0),
        )
        rho = rng.uniform(0.1, 2.0) * fd.rho_c
        v = float(equilibrium_speed(rho, fd.v_f, fd.rho_c, fd.a))
        pair = pw_residuals(
            lambda point: (_constant(point, rho * v), _constant(point, v)),
            y,
            fd,
            PWConstants(),
            Geometry(2000.0, 55.0),
            1e-6,
            0.01,
        )
        assert np.max(np.abs(pair.f1.value)) < 1e-10
        assert np.max(np.abs(pair.f2.value)) < 1e-10
