import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fimnav.geometry import wrap_angle
from fimnav.kinematics import (
    ControlInput,
    KinematicLimits,
    UavState,
    apply_transition,
    clamp_control,
    control_from_polar,
    heading_of,
)
from fimnav.sensing import RANGING

LIM = KinematicLimits()


def state(pos=(0.0, 0.0, 10.0), heading=0.0, tilt=0.0):
    return UavState(1, np.array(pos, dtype=float), heading, tilt, RANGING)


def test_limits_validation():
    with pytest.raises(ValueError):
        KinematicLimits(v_min=2, v_max=1)
    with pytest.raises(ValueError):
        KinematicLimits(z_min=5, z_max=1)


def test_control_from_polar_examples():
    np.testing.assert_allclose(control_from_polar(1, 0, 0, 1).u, [1, 0, 0])
    np.testing.assert_allclose(control_from_polar(2, math.pi / 2, 0, 1).u, [0, 2, 0], atol=1e-15)
    np.testing.assert_allclose(control_from_polar(1, 0, 0, 0.5).u, [0.5, 0, 0])
    with pytest.raises(ValueError):
        control_from_polar(-1, 0, 0)


def test_heading_of_examples():
    assert heading_of([1, 0, 0]) == (0.0, 0.0)
    h, t = heading_of([1, 1, math.sqrt(2)])
    assert h == pytest.approx(math.pi / 4) and t == pytest.approx(math.pi / 4)
    assert heading_of([0, 0, 0]) is None
    h, t = heading_of([0, 0, 3])
    assert math.isnan(h) and t == pytest.approx(math.pi / 2)


def test_apply_transition_updates_angles():
    s = apply_transition(state(), ControlInput(np.array([0.0, 1.0, 0.0])))
    np.testing.assert_allclose(s.position, [0, 1, 10])
    assert s.heading == pytest.approx(math.pi / 2)
    vertical = apply_transition(state(heading=0.7), np.array([0.0, 0.0, 1.0]))
    assert vertical.heading == 0.7 and vertical.tilt == pytest.approx(math.pi / 2)


def test_clamp_scales_fast_input():
    u = clamp_control(np.array([1.5, 0.0, 0.0]), state(), LIM)
    np.testing.assert_allclose(u.u, [1, 0, 0])
    assert not u.infeasible


def test_clamp_zero_input_moves_at_min_speed():
    u = clamp_control(np.zeros(3), state(heading=math.pi / 2), LIM)
    np.testing.assert_allclose(u.u, [0, 0.5, 0], atol=1e-15)


def test_clamp_turn_rate():
    raw = control_from_polar(1, math.radians(80), 0).u
    u = clamp_control(raw, state(), LIM)
    h, _ = heading_of(u.u)
    assert h == pytest.approx(math.radians(50))


def test_clamp_turn_rate_wraps():
    # from 170 deg to -170 deg is a 20 deg turn, not 340
    raw = control_from_polar(1, math.radians(-170), 0).u
    u = clamp_control(raw, state(heading=math.radians(170)), LIM)
    h, _ = heading_of(u.u)
    assert wrap_angle(h - math.radians(-170)) == pytest.approx(0, abs=1e-12)


def test_clamp_altitude_ceiling_keeps_speed():
    s = state(pos=(0, 0, 24.8), tilt=math.radians(40))
    raw = control_from_polar(1, 0, math.radians(40)).u
    u = clamp_control(raw, s, LIM)
    assert s.position[2] + u.u[2] == pytest.approx(25.0)
    assert np.linalg.norm(u.u) == pytest.approx(1.0)


def test_clamp_outside_box_flags_infeasible():
    s = state(pos=(0, 0, 30.0))
    u = clamp_control(np.array([1.0, 0, 0]), s, LIM)
    assert u.infeasible
    assert u.u[2] < 0


finite = st.floats(-5, 5, allow_nan=False)


@given(st.tuples(finite, finite, finite), st.floats(-math.pi, math.pi),
       st.floats(-1.2, 1.2), st.floats(2.0, 25.0))
def test_clamp_postconditions(raw, heading, tilt, z):
    prev = state(pos=(3.0, -4.0, z), heading=heading, tilt=tilt)
    out = clamp_control(np.array(raw), prev, LIM)
    u = out.u
    speed = np.linalg.norm(u) / LIM.dt
    assert LIM.v_min - 1e-12 <= speed <= LIM.v_max + 1e-12
    assert LIM.z_min - 1e-9 <= z + u[2] <= LIM.z_max + 1e-9
    h, t = heading_of(u)
    if not out.infeasible:
        assert abs(t - tilt) <= LIM.theta_max + 1e-9
        if not math.isnan(h) and abs(t) < math.pi / 2 - 1e-9:
            assert abs(wrap_angle(h - heading)) <= LIM.phi_max + 1e-9


@given(st.floats(0.1, 3), st.floats(-3.1, 3.1), st.floats(-1.5, 1.5))
def test_polar_heading_roundtrip(v, heading, tilt):
    h, t = heading_of(control_from_polar(v, heading, tilt).u)
    assert wrap_angle(h - heading) == pytest.approx(0, abs=1e-9)
    assert t == pytest.approx(tilt, abs=1e-9)


@given(st.tuples(finite, finite, finite), st.tuples(finite, finite, finite))
def test_transition_translation_equivariant(shift, u):
    a = apply_transition(state(), np.array(u))
    b = apply_transition(state(pos=np.add((0, 0, 10.0), shift)), np.array(u))
    np.testing.assert_allclose(b.position - a.position, shift, atol=1e-12)
