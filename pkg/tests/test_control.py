import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fimnav.control import (
    ConstraintSet,
    ControlConfig,
    active_constraints,
    budget_step,
    compute_control,
    cost_gradient,
    independent_columns,
    projected_gradient_step,
    projected_parts,
    projector,
    random_fallback,
)
from fimnav.fisher import Criterion, assemble_fim, cost
from fimnav.geometry import ObstacleBox, SphericalDirection, wrap_angle
from fimnav.kinematics import KinematicLimits, UavState, heading_of
from fimnav.network import NetworkView
from fimnav.sensing import BEARING, JOINT, RANGING, ChannelParams, Measurement

P = ChannelParams()
LIM = KinematicLimits()
CFG = ControlConfig()


def make_view(owner_id, entries):
    """entries: {id: (position, role, los)}"""
    ms = {}
    for j, (pos, role, los) in entries.items():
        ms[j] = Measurement(j, 0, 1.0 if role.ranging else None,
                            SphericalDirection(0, 0) if role.bearing else None, los,
                            np.asarray(pos, dtype=float))
    return NetworkView(owner_id, ms)


def owner(pos, role=RANGING, heading=0.0, tilt=0.0, uid=1):
    return UavState(uid, np.asarray(pos, dtype=float), heading, tilt, role)


def cost_at(owner_pos, peers, src, crit="A", role=RANGING):
    entries = {1: (owner_pos, role, 1)}
    entries.update(peers)
    return cost(assemble_fim(make_view(1, entries), src, P), crit)


PEERS = {2: ((0, 40, 0), RANGING, 1), 3: ((0, 0, 40), RANGING, 1)}


# -- constraints ---------------------------------------------------------------

def test_no_violation_gives_empty_set():
    cs = active_constraints((0, 0, 10), [(10, 0, 10)], (100, 0, 10), [], CFG)
    assert cs.empty and cs.normals.shape == (3, 0)


def test_uav_constraint_example():
    cs = active_constraints((0.5, 0, 0), [(0, 0, 0)], None, [], CFG)
    np.testing.assert_allclose(cs.values, [-0.5])
    np.testing.assert_allclose(cs.normals[:, 0], [1, 0, 0])
    assert cs.kinds == ["uav"]


def test_source_constraint_example():
    cs = active_constraints((40, 0, 0), [], (0, 0, 0), [], CFG)
    assert cs.values.tolist() == [-10.0]


def test_only_strict_violations_activate():
    cs = active_constraints((50, 0, 0), [(51, 0, 0)], (0, 0, 0), [], CFG)
    assert cs.empty


def test_obstacle_constraint_outside_and_inside():
    box = ObstacleBox((0, 0, 0), (10, 10, 10))
    cs = active_constraints((13, 5, 5), [], None, [box], CFG)
    np.testing.assert_allclose(cs.values, [-2.0])
    np.testing.assert_allclose(cs.normals[:, 0], [1, 0, 0])
    cs = active_constraints((5, 5, 9), [], None, [box], CFG)
    np.testing.assert_allclose(cs.normals[:, 0], [0, 0, 1])
    assert cs.values[0] == -5.0


def test_coincident_points_are_perturbed():
    cs = active_constraints((1, 1, 1), [(1, 1, 1)], None, [], CFG)
    assert cs.perturbed
    assert np.linalg.norm(cs.normals[:, 0]) == pytest.approx(1.0)


# -- projection ----------------------------------------------------------------

def test_unconstrained_step_is_scaled_negative_gradient():
    g = np.array([0.3, -1.0, 2.0])
    np.testing.assert_allclose(projected_gradient_step(g, ConstraintSet(), 2.0), -2 * g)


def test_pure_restoration_example():
    cs = active_constraints((0.5, 0, 0), [(0, 0, 0)], None, [], CFG)
    np.testing.assert_allclose(projected_gradient_step(np.zeros(3), cs, 1.0), [0.5, 0, 0])


def test_dependent_constraints_drop_least_violated():
    n = np.array([1.0, 0.0, 0.0])
    cs = ConstraintSet(np.array([-0.1, -0.4]), np.column_stack([n, n]), ["uav", "uav"])
    kept = independent_columns(cs)
    assert kept.values.tolist() == [-0.4]
    descent, restore, dropped = projected_parts(np.array([1.0, 1.0, 0.0]), cs)
    assert dropped == 1
    np.testing.assert_allclose(descent, [0, 1, 0], atol=1e-15)
    np.testing.assert_allclose(restore, [0.4, 0, 0])


@settings(max_examples=200)
@given(st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_projector_algebra(m, seed):
    rng = np.random.default_rng(seed)
    N = rng.standard_normal((3, m))
    if np.linalg.svd(N, compute_uv=False)[-1] < 1e-3:
        return
    Pm = projector(N)
    assert np.abs(Pm @ Pm - Pm).max() <= 1e-10
    assert np.abs(Pm @ N).max() <= 1e-10
    np.testing.assert_allclose(Pm, Pm.T, atol=1e-12)


def test_restoration_increases_single_violated_distance():
    rng = np.random.default_rng(9)
    for _ in range(100):
        peer = rng.uniform(-5, 5, 3)
        direction = rng.standard_normal(3)
        p = peer + rng.uniform(0.2, 0.99) * direction / np.linalg.norm(direction)
        cs = active_constraints(p, [peer], None, [], CFG)
        descent, restore, _ = projected_parts(rng.standard_normal(3), cs)
        d0 = np.linalg.norm(p - peer)
        assert np.linalg.norm(p + descent + restore - peer) > d0


@given(st.tuples(*[st.floats(-10, 10)] * 3), st.floats(0, 2), st.floats(0.1, 2))
def test_budget_step_fits_and_keeps_restoration(desc, r, max_step):
    n = np.array([0.0, 0.0, 1.0])
    descent = np.array(desc) - np.dot(desc, n) * n
    restore = r * n
    u = budget_step(descent, restore, max_step)
    assert np.linalg.norm(u) <= max_step + 1e-12
    assert u[2] == pytest.approx(min(r, max_step))


# -- gradient --------------------------------------------------------------------

def test_gradient_vanishes_across_symmetry_plane():
    peers = {2: ((-30, 60, 10), JOINT, 1), 3: ((30, 60, 10), JOINT, 1)}
    entries = {1: ((0, 40, 12), RANGING, 1), **peers}
    g = cost_gradient(owner((0, 40, 12)), make_view(1, entries), np.array([0, 0, 10.0]),
                      Criterion.A, P)
    assert abs(g[0]) < 1e-6
    assert np.linalg.norm(g) > 1e-6


def test_ranging_gradient_points_away_from_source_and_matches_dense_oracle():
    src = np.zeros(3)
    d0 = 25.0
    entries = {1: ((d0, 0, 0), RANGING, 1), **PEERS}
    g = cost_gradient(owner((d0, 0, 0)), make_view(1, entries), src, Criterion.A, P)
    assert g[0] > 0
    assert abs(g[1]) < 1e-9 * abs(g[0]) and abs(g[2]) < 1e-9 * abs(g[0])
    # dense samples of the 1-D cost along the owner-source line, local quadratic fit
    xs = np.linspace(d0 - 0.5, d0 + 0.5, 201)
    cs = [cost_at((x, 0, 0), PEERS, src) for x in xs]
    slope = np.polyfit(xs - d0, cs, 3)[-2]
    assert g[0] == pytest.approx(slope, rel=1e-6)


def test_gradient_richardson_consistency():
    rng = np.random.default_rng(10)
    src = np.array([0, 0, 10.0])
    for _ in range(20):
        entries = {j: (tuple(rng.uniform(-80, 80, 3) + [0, 0, 20]), role, 1)
                   for j, role in zip(range(1, 6), [JOINT, RANGING, BEARING, JOINT, RANGING])}
        o = owner(entries[1][0], JOINT)
        v = make_view(1, entries)
        g1 = cost_gradient(o, v, src, Criterion.D, P, 1e-3)
        g2 = cost_gradient(o, v, src, Criterion.D, P, 5e-4)
        assert np.linalg.norm(g1 - g2) <= 1e-4 * np.linalg.norm(g1)


def test_negative_gradient_is_descent_direction():
    rng = np.random.default_rng(11)
    src = np.array([0, 0, 10.0])
    for crit in (Criterion.A, Criterion.D):
        for _ in range(10):
            entries = {j: (tuple(rng.uniform(-60, 60, 3)), JOINT, 1) for j in range(1, 5)}
            o = owner(entries[1][0], JOINT)
            g = cost_gradient(o, make_view(1, entries), src, crit, P)
            peers = {j: e for j, e in entries.items() if j != 1}
            c0 = cost_at(o.position, peers, src, crit, JOINT)
            c1 = cost_at(o.position - 1e-3 * g / np.linalg.norm(g), peers, src, crit, JOINT)
            assert c1 < c0


# -- fallback and full decision ----------------------------------------------------

def test_fallback_without_turn_freedom_keeps_direction():
    lim = KinematicLimits(phi_max=0.0, theta_max=0.0)
    u = random_fallback((0.7, 0.2), lim, np.random.default_rng(0)).u
    h, t = heading_of(u)
    assert h == pytest.approx(0.7) and t == pytest.approx(0.2)


def test_fallback_respects_limits_and_is_reproducible():
    rng = np.random.default_rng(12)
    for _ in range(200):
        prev = (rng.uniform(-math.pi, math.pi), rng.uniform(-0.5, 0.5))
        u = random_fallback(prev, LIM, rng).u
        assert LIM.v_min - 1e-12 <= np.linalg.norm(u) <= LIM.v_max + 1e-12
        h, t = heading_of(u)
        assert abs(wrap_angle(h - prev[0])) <= LIM.phi_max + 1e-12
        assert abs(t - prev[1]) <= LIM.theta_max + 1e-12
    a = random_fallback((0, 0), LIM, np.random.default_rng(5)).u
    b = random_fallback((0, 0), LIM, np.random.default_rng(5)).u
    assert np.array_equal(a, b)


def _decide(entries, o, rng_seed=0, src=(0, 0, 10.0)):
    return compute_control(o, make_view(o.id, entries), np.array(src), [], P, LIM, CFG,
                           Criterion.A, np.random.default_rng(rng_seed))


def test_singular_view_takes_fallback():
    entries = {j: ((10.0 * j, 100, 10), BEARING, 0) for j in range(1, 4)}
    dec = _decide(entries, owner((10, 100, 10), BEARING))
    assert dec.fallback and math.isnan(dec.cost)
    assert LIM.v_min <= np.linalg.norm(dec.control.u) <= LIM.v_max + 1e-12


def test_rich_view_takes_gradient_step_within_limits():
    rng = np.random.default_rng(13)
    for _ in range(30):
        entries = {j: (tuple(rng.uniform(-100, 100, 2)) + (rng.uniform(2, 25),), JOINT, 1)
                   for j in range(1, 6)}
        o = owner(entries[1][0], JOINT, heading=rng.uniform(-3, 3))
        dec = _decide(entries, o)
        assert not dec.fallback and math.isfinite(dec.cost)
        u = dec.control.u
        assert LIM.v_min - 1e-12 <= np.linalg.norm(u) <= LIM.v_max + 1e-12
        h, _ = heading_of(u)
        assert abs(wrap_angle(h - o.heading)) <= LIM.phi_max + 1e-9
        assert LIM.z_min - 1e-9 <= o.position[2] + u[2] <= LIM.z_max + 1e-9


def test_compute_control_deterministic_given_rng():
    entries = {j: ((10.0 * j, 100, 10), BEARING, 0) for j in range(1, 4)}
    o = owner((10, 100, 10), BEARING)
    a = _decide(entries, o, rng_seed=3).control.u
    b = _decide(entries, o, rng_seed=3).control.u
    assert np.array_equal(a, b)


def test_missing_estimate_takes_fallback():
    entries = {1: ((0, 100, 10), JOINT, 1)}
    dec = compute_control(owner((0, 100, 10), JOINT), make_view(1, entries), None, [], P, LIM,
                          CFG, Criterion.A, np.random.default_rng(0))
    assert dec.fallback
