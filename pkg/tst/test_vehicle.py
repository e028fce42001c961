import math

import numpy as np
import pytest

from exprec import vehicle
from exprec.utils.configurations import BUILTIN_MODES
from exprec.vehicle import Command, VehicleState

NOMINAL = BUILTIN_MODES["nominal"]
LOADED = BUILTIN_MODES["loaded"]
ALTERED = BUILTIN_MODES["altered"]


@pytest.mark.parametrize("theta", [-3.0, 0.0, 1.2])
def test_nominal_mode_has_no_disturbance(theta):
    g = vehicle.disturbance(NOMINAL, np.array([1.0, 2.0, theta]), np.array([1.5, 0.8]))
    np.testing.assert_array_equal(g, np.zeros(3))


def test_altered_mode_scales_turn_rate():
    g = vehicle.disturbance_mean(ALTERED, np.array([0.0, 0.0, 0.4]), np.array([1.5, 0.5]))
    assert g[2] == pytest.approx(-0.15)
    assert g[0] == 0.0 and g[1] == 0.0


def test_loaded_mode_on_straight_is_drag_only():
    theta = 0.3
    g = vehicle.disturbance_mean(LOADED, np.array([0.0, 0.0, theta]), np.array([1.5, 0.0]))
    assert g[2] == 0.0
    np.testing.assert_allclose(g[:2], -LOADED.drag_gain * 1.5 * np.array([math.cos(theta), math.sin(theta)]))


def test_loaded_mode_slips_outward_in_turns():
    # Turning left, the slip term pushes along the left normal scaled by omega * v
    g = vehicle.disturbance_mean(LOADED, np.array([0.0, 0.0, 0.0]), np.array([1.0, 1.0]))
    assert g[1] == pytest.approx(LOADED.lateral_slip_gain)
    assert g[2] == pytest.approx(LOADED.turn_gain - 1.0)


def test_noise_is_seeded():
    state, cmd = np.zeros(3), np.array([1.5, 0.2])
    a = vehicle.disturbance(NOMINAL, state, cmd, np.random.default_rng(3))
    b = vehicle.disturbance(NOMINAL, state, cmd, np.random.default_rng(3))
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, np.zeros(3))


def test_noise_statistics():
    rng = np.random.default_rng(0)
    samples = np.array([vehicle.disturbance(ALTERED, np.zeros(3), np.array([1.5, 0.5]), rng) for _ in range(20000)])
    np.testing.assert_allclose(samples.mean(axis=0), [0.0, 0.0, -0.15], atol=2e-3)
    np.testing.assert_allclose(samples.std(axis=0), ALTERED.noise_std, rtol=0.05)


def test_nominal_step_straight():
    nxt = vehicle.step(VehicleState(1.0, 2.0, 0.0), Command(1.5, 0.0), NOMINAL, 0.1)
    assert nxt.x == pytest.approx(1.15)
    assert nxt.y == pytest.approx(2.0)
    assert nxt.theta == 0.0


def test_altered_step_turns_less():
    nxt = vehicle.step(VehicleState(0.0, 0.0, 0.0), Command(0.0, 1.0), ALTERED, 0.1)
    assert nxt.theta == pytest.approx(0.07)


def test_pure_rotation_closes():
    omega = 1.5
    n = 1000
    dt = 2 * math.pi / omega / n
    state = VehicleState(0.0, 0.0, 0.5)
    for _ in range(n):
        state = vehicle.step(state, Command(0.0, omega), NOMINAL, dt)
    assert abs(vehicle.wrap_angle(state.theta - 0.5)) < 1e-6
    assert state.x == 0.0 and state.y == 0.0


def test_state_wraps_heading():
    assert VehicleState(0.0, 0.0, 3 * math.pi / 2).theta == pytest.approx(-math.pi / 2)
    assert VehicleState(0.0, 0.0, math.pi).theta == pytest.approx(math.pi)


def test_state_rejects_non_finite():
    with pytest.raises(ValueError):
        VehicleState(float("nan"), 0.0, 0.0)


def test_step_rejects_non_positive_dt():
    with pytest.raises(ValueError):
        vehicle.step(VehicleState(0.0, 0.0, 0.0), Command(1.0, 0.0), NOMINAL, 0.0)


def test_command_clipping():
    assert Command(3.0, -2.0).clipped(2.0, 1.5) == Command(2.0, -1.5)
