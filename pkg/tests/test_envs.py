import json
import math

import numpy as np
import pytest

from vitacsim.config import default_task_config
from vitacsim.envs import make_env
from vitacsim.errors import VitacError
from vitacsim.protocol import observation_payload


def quiet(task, **overrides):
    overrides.setdefault("noise", {"pixel_sigma": 0.0, "dropout_prob": 0.0})
    base = default_task_config(task).merged(overrides)
    return base


def test_reset_determinism_bitwise():
    cfg = quiet("peg")
    blobs = []
    for _ in range(2):
        env = make_env(cfg)
        obs, diag = env.reset(seed=12)
        blobs.append(json.dumps([observation_payload(obs), diag]))
    assert blobs[0] == blobs[1]


def test_zero_randomization_zero_offset():
    cfg = quiet("peg", rand_xy_mm=0.0, rand_theta_deg=0.0)
    env = make_env(cfg)
    _, diag = env.reset(seed=5)
    assert np.allclose(diag["gt_offset"], 0.0, atol=0.0)


def test_noiseless_reset_flow_is_zero():
    cfg = quiet("peg")
    env = make_env(cfg)
    obs, _ = env.reset(seed=1)
    assert np.abs(obs.marker_flow_left.displacement).max() == 0.0
    assert np.abs(obs.marker_flow_right.displacement).max() == 0.0
    assert obs.marker_flow_left.valid.all()
    assert np.allclose(obs.relative_motion, 0.0)


def test_offset_violation_terminates_with_rfail():
    # a tight x bound makes the first 1 mm action an immediate violation
    cfg = quiet("peg", x_max_mm=0.5, rand_xy_mm=0.0, rand_theta_deg=0.0)
    env = make_env(cfg)
    env.reset(seed=0)
    r = env.step([1.0, 0.0, 0.0])
    assert r.done and r.status == "error_too_large"
    e0 = env.e_prev if False else 0.0
    expected = 0.0 - 0.0 - cfg.step_penalty - 2 * (cfg.max_steps - 1) * cfg.step_penalty
    assert abs(r.reward - expected) < 1e-12
    with pytest.raises(VitacError):
        env.step([0.0, 0.0, 0.0])


def test_tau_breach_terminates():
    cfg = quiet("peg", tau_xy_mm=2.0, rand_xy_mm=0.0, rand_theta_deg=0.0,
                max_action=(3.0, 3.0, 3.0))
    env = make_env(cfg)
    env.reset(seed=0)
    r = env.step([2.5, 0.0, 0.0])
    assert r.done and r.status == "error_too_large"


def test_too_many_steps():
    cfg = quiet("peg", max_steps=2, rand_xy_mm=0.0, rand_theta_deg=0.0)
    env = make_env(cfg)
    env.reset(seed=0)
    r = env.step([0.0, 0.0, 0.0])
    assert not r.done
    r = env.step([0.0, 0.0, 0.0])
    assert r.done and r.status == "too_many_steps"


def test_reward_telescoping_running_prefix():
    cfg = quiet("peg")
    env = make_env(cfg)
    _, diag = env.reset(seed=3)
    e0 = diag["e_t"]
    total = 0.0
    actions = [[0.3, -0.2, 0.4], [0.0, 0.1, -0.3], [-0.2, 0.0, 0.0]]
    for a in actions:
        r = env.step(a)
        assert r.status == "running"
        total += r.reward
    expected = e0 - r.diagnostics["e_t"] - len(actions) * cfg.step_penalty
    assert abs(total - expected) < 1e-9


def test_peg_zero_offset_descends_to_success():
    # matched pair, zero offset, zero actions: success within ceil(depth/z_step)
    cfg = quiet("peg", rand_xy_mm=0.0, rand_theta_deg=0.0)
    env = make_env(cfg)
    env.reset(seed=0)
    needed = math.ceil(cfg.success_depth_mm / cfg.z_step_mm)
    for t in range(1, needed + 1):
        r = env.step([0.0, 0.0, 0.0])
        if r.done:
            break
    assert r.status == "success"
    assert env.t <= needed
    assert r.reward > 9.0  # carries the +10 success bonus
    assert r.diagnostics["descent_mm"] >= cfg.success_depth_mm - 0.05


def test_lock_zero_offset_inserts():
    cfg = quiet("lock", rand_xy_mm=0.0, rand_z_mm=0.0)
    env = make_env(cfg)
    env.reset(seed=0)
    for _ in range(20):
        r = env.step([0.0, 0.0, -1.0])
        if r.done:
            break
    assert r.status == "success"
    pair = np.array(r.diagnostics["pair_errors_mm"]).reshape(4, 3)
    assert np.all(np.abs(pair) < cfg.tau_xyz_mm)


def test_lock_surface_diff_in_failure_reward():
    cfg = quiet("lock", max_steps=1, rand_xy_mm=0.0, rand_z_mm=0.0)
    env = make_env(cfg)
    env.reset(seed=0)
    r = env.step([0.0, 0.0, 0.0])
    assert r.status == "too_many_steps"
    drift = min(r.diagnostics["l_diff_m"] * 1000, cfg.surface_diff_clip_mm) + min(
        r.diagnostics["r_diff_m"] * 1000, cfg.surface_diff_clip_mm
    )
    # e unchanged, t == t_max: R = -P - 0 - drift
    assert abs(r.reward - (-cfg.step_penalty - drift)) < 1e-9


def test_fusion_quarter_turn_offsets():
    cfg = quiet("fusion", rand_xy_mm=0.0, rand_theta_deg=0.0, rand_z_mm=0.0,
                theta_max_deg=95.0, tau_theta_deg=120.0)
    env = make_env(cfg)
    env.reset(seed=0)
    env.offsets = type(env.offsets)(theta_offset=math.pi / 2)
    gt_before = env.gt.copy()
    r = env.step([1.0, 0.0, 0.0, 0.0])
    moved = env.gt - gt_before
    assert abs(moved[0]) < 1e-9 and abs(moved[1] - 1.0) < 1e-9


def test_fusion_observation_channels():
    cfg = quiet("fusion", vision_width=96, vision_height=72)
    env = make_env(cfg)
    obs, _ = env.reset(seed=2)
    assert obs.depth_picture.shape == (72, 96)
    assert obs.rgb_picture.shape == (72, 96, 3)
    assert len(obs.point_cloud.points) > 0
    assert set(np.unique(obs.point_cloud.labels)) >= {1, 2}
    cfg2 = quiet("fusion", vision=False)
    env2 = make_env(cfg2)
    obs2, _ = env2.reset(seed=2)
    assert obs2.depth_picture is None


def test_fusion_theta_breach_rfail():
    cfg = quiet("fusion", tau_theta_deg=1.0, rand_xy_mm=0.0, rand_theta_deg=0.0,
                rand_z_mm=0.0, max_action=(1.0, 1.0, 2.0, 1.0))
    env = make_env(cfg)
    env.reset(seed=0)
    r = env.step([0.0, 0.0, 1.5, 0.0])
    assert r.status == "error_too_large"
    # R_fail = -2 (t_max - t) P on top of progress and step penalty
    assert r.reward < -2 * (cfg.max_steps - 1) * cfg.step_penalty + 1.0


def test_relative_motion_tracks_offsets():
    cfg = quiet("lock")
    env = make_env(cfg)
    obs, _ = env.reset(seed=4)
    r = env.step([0.5, -0.25, -1.0])
    rm = r.observation.relative_motion
    assert abs(rm[0] - 0.5) < 1e-9
    assert abs(rm[1] + 0.25) < 1e-9
    assert abs(rm[2] + 1.0) < 1e-9
    off = env.offsets.as_array()
    assert np.allclose(rm[:3], off[:3] * 1000.0, atol=1e-9)


def test_custom_gel_mesh_path(tmp_path):
    from vitacsim.geometry import GelSpec, generate_gel_mesh, save_tet_mesh

    mesh = generate_gel_mesh(GelSpec(subdivisions=(5, 4, 2)))
    path = tmp_path / "custom.tet"
    save_tet_mesh(mesh, path)
    cfg = quiet("peg", gel_mesh_path=str(path))
    env = make_env(cfg)
    assert env.gel_mesh.n_vertices == mesh.n_vertices
    obs, _ = env.reset(seed=0)
    assert obs.marker_flow_left.initial.shape == (cfg.flow_size, 2)
