import math

import numpy as np
import pytest

from vitacsim.kinematics import (
    ActionCommand,
    MotionLimits,
    OffsetState,
    boundary_vertex_motion,
    check_offset_limits,
    clip_action,
    global_to_local,
    local_to_global,
    rotation_about_axis,
    substep_count_fusion,
    substep_count_lock,
    substep_count_peg,
    substep_velocities,
    update_offsets,
)


def _limits(**kw):
    defaults = dict(max_action=np.array([2.0, 2.0, 2.0]))
    defaults.update(kw)
    return MotionLimits(**defaults)


def test_clip_examples():
    lim = _limits()
    clipped = clip_action(ActionCommand("peg", [10.0, -10.0, 10.0]), lim)
    assert np.array_equal(clipped.values, [2.0, -2.0, 2.0])
    inrange = clip_action(ActionCommand("peg", [0.5, -1.0, 1.5]), lim)
    assert np.array_equal(inrange.values, [0.5, -1.0, 1.5])
    boundary = clip_action(ActionCommand("peg", [2.0, -2.0, 2.0]), lim)
    assert np.array_equal(boundary.values, [2.0, -2.0, 2.0])


def test_action_command_validation():
    with pytest.raises(ValueError):
        ActionCommand("peg", [1.0, 2.0])
    with pytest.raises(ValueError):
        ActionCommand("warp", [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        ActionCommand("lock", [1.0, np.nan, 0.0])


def test_rotation_examples():
    assert np.allclose(local_to_global(1.0, 0.0, 0.0), (1.0, 0.0))
    assert np.allclose(local_to_global(1.0, 0.0, math.pi / 2), (0.0, 1.0), atol=1e-15)
    gx, gy = local_to_global(1.0, 0.0, math.radians(30))
    assert abs(gx - 0.866025) < 1e-6 and abs(gy - 0.5) < 1e-9


def test_rotation_isometry_and_inverse():
    rng = np.random.default_rng(0)
    for _ in range(200):
        x, y, th = rng.uniform(-5, 5, 3)
        gx, gy = local_to_global(x, y, th)
        assert abs(math.hypot(gx, gy) - math.hypot(x, y)) < 1e-12
        bx, by = global_to_local(gx, gy, th)
        assert abs(bx - x) < 1e-12 and abs(by - y) < 1e-12


def test_update_offsets_accumulation():
    s = OffsetState()
    assert update_offsets(s, 0, 0, 0, 0) == s
    a = update_offsets(update_offsets(s, 1e-3, 0, 0.01, 0), 2e-3, -1e-3, 0.02, 5e-4)
    b = update_offsets(s, 3e-3, -1e-3, 0.03, 5e-4)
    assert np.allclose(a.as_array(), b.as_array(), atol=1e-18)
    # mm/deg converted at the pipeline entrance: 1 mm, 2 mm, 3 deg
    c = update_offsets(s, 1e-3, 2e-3, math.radians(3.0))
    assert np.allclose(
        c.as_array(), [0.001, 0.002, 0.0, 0.0523599], atol=1e-7
    )
    assert c.theta_current == c.theta_offset


def test_substep_count_examples():
    lim = _limits(v_max=2e-3, omega_max=0.2, dt=0.1)
    assert substep_count_peg(0.0, 0.0, 0.0, lim) == 1
    assert substep_count_peg(3e-3, 1e-3, 0.01, lim) == 15
    assert substep_count_peg(0.0, 0.0, 0.1, lim) == 5

    assert substep_count_lock(0.0, 0.0, 0.0, 0.1) == 1
    assert substep_count_lock(4e-3, 0.0, 0.0, 0.1) == 20
    assert substep_count_lock(1e-4, 1e-4, 1e-4, 0.1) == 1

    assert substep_count_fusion(0.0, 0.0, 0.0, 0.0, 0.1) == 1
    assert substep_count_fusion(1e-2, 0.0, 0.0, 0.0, 0.1) == 20
    assert substep_count_fusion(0.0, 0.0, 0.0, 0.05, 0.1) == 3


def test_substep_velocities_reconstruction():
    v, w = substep_velocities(np.array([3e-3, 0.0, 0.0]), 0.0, 15, 0.1)
    assert abs(v[0] - 2e-3) < 1e-18
    v, w = substep_velocities(np.zeros(3), 0.0, 1, 0.1)
    assert np.all(v == 0) and w == 0
    rng = np.random.default_rng(3)
    for _ in range(100):
        delta = rng.uniform(-5e-3, 5e-3, 3)
        dth = rng.uniform(-0.1, 0.1)
        n = rng.integers(1, 30)
        v, w = substep_velocities(delta, dth, n, 0.1)
        assert np.abs(v * n * 0.1 - delta).max() < 1e-15
        assert abs(w * n * 0.1 - dth) < 1e-15


def test_boundary_vertex_motion_examples():
    x = np.array([[0.01, 0.02, 0.03]])
    x2, v = boundary_vertex_motion(x, [1e-3, 0, 0], 0.0, [0, 0, 1], [0, 0, 0], 0.1)
    assert np.allclose(x2, x + [1e-4, 0, 0])
    assert np.allclose(v, [[1e-3, 0, 0]])

    # quarter turn about z, pivot at origin
    x = np.array([[1.0, 0.0, 0.0]])
    dt = 0.1
    x2, v = boundary_vertex_motion(x, [0, 0, 0], (math.pi / 2) / dt, [0, 0, 1], [0, 0, 0], dt)
    assert np.allclose(x2, [[0.0, 1.0, 0.0]], atol=1e-15)
    assert np.allclose(v, [[-10.0, 10.0, 0.0]], atol=1e-12)

    x2, v = boundary_vertex_motion(x, [0, 0, 0], 0.0, [0, 0, 1], [0, 0, 0], dt)
    assert np.array_equal(x2, x)
    assert np.all(v == 0)


def test_rigid_set_distance_preservation():
    rng = np.random.default_rng(1)
    pts = rng.uniform(-0.05, 0.05, (20, 3))
    d0 = np.linalg.norm(pts[:, None] - pts[None], axis=2)
    axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    x2, _ = boundary_vertex_motion(pts, rng.uniform(-1, 1, 3), 2.3, axis, rng.uniform(-1, 1, 3), 0.1)
    d1 = np.linalg.norm(x2[:, None] - x2[None], axis=2)
    assert np.abs(d1 - d0).max() < 1e-10


def test_offset_limit_boundary_semantics():
    lim = _limits(x_max=0.012, y_max=0.012, theta_max=math.radians(15))
    assert check_offset_limits(OffsetState(), lim) is None
    # closed bound: exactly at the limit is allowed
    assert check_offset_limits(OffsetState(x_offset=0.012), lim) is None
    assert check_offset_limits(OffsetState(x_offset=0.012 + 1e-9), lim) == "x"
    assert check_offset_limits(OffsetState(y_offset=-0.013), lim) == "y"
    assert check_offset_limits(OffsetState(theta_offset=math.radians(16)), lim) == "theta"
