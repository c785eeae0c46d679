"""Acceptance suite: one test per criterion, each printed as a pass line.

Criteria are pinned at their stated tolerances.  The heavyweight policy-rate
and fuzz criteria run real episodes; everything is seeded and deterministic.
"""

import json
import math
import time

import numpy as np
import pytest

from vitacsim.agents import Policy
from vitacsim.config import default_task_config
from vitacsim.envs import make_env
from vitacsim.episode_log import EpisodeRecorder, replay
from vitacsim.evaluate import evaluate
from vitacsim.fem import (
    DeformableBody,
    MaterialParams,
    RigidBody,
    SimState,
    SolverConfig,
    Tether,
    barrier_energy,
    solve_quasi_static,
)
from vitacsim.geometry import GelSpec, MarkerGridSpec, bind_markers, generate_gel_mesh
from vitacsim.kinematics import (
    MotionLimits,
    boundary_vertex_motion,
    substep_count_fusion,
    substep_count_lock,
    substep_count_peg,
    substep_velocities,
)
from vitacsim.protocol import observation_payload
from vitacsim.sensor import (
    NoiseConfig,
    SensorCamera,
    back_project,
    marker_flow_observation,
    marker_world_positions,
    project_to_camera,
)

QUIET = {"noise": {"pixel_sigma": 0.0, "dropout_prob": 0.0}}


def _report(name, detail, t0):
    print(f"\nPASS {name}: {detail} ({time.time() - t0:.1f}s)")


# -- 1. kinematics oracle suite ------------------------------------------------


def _count_oracle(values, caps):
    """Smallest substep count keeping every per-substep quantity within cap."""
    n = 1
    while any(abs(v) / n > c for v, c in zip(values, caps)):
        n += 1
    return n


def test_kinematics_oracle_suite():
    t0 = time.time()
    rng = np.random.default_rng(2024)
    lim = MotionLimits(max_action=np.array([1.0, 1.0, 1.0]))
    dt = lim.dt
    checked = 0
    for _ in range(10_000):
        dx, dy, dz = rng.uniform(-8e-3, 8e-3, 3)
        dth = rng.uniform(-0.3, 0.3)

        n_peg = substep_count_peg(dx, dy, dth, lim)
        ref = _count_oracle([max(abs(dx), abs(dy)), dth], [lim.v_max * dt, lim.omega_max * dt])
        assert n_peg == ref

        n_lock = substep_count_lock(dx, dy, dz, dt)
        assert n_lock == _count_oracle([max(abs(dx), abs(dy), abs(dz))], [2e-3 * dt])

        n_fus = substep_count_fusion(dx, dy, dz, dth, dt)
        assert n_fus == _count_oracle(
            [max(abs(dx), abs(dy), abs(dz)), dth], [5e-3 * dt, 0.2 * dt]
        )

        v, w = substep_velocities(np.array([dx, dy, dz]), dth, n_peg, dt)
        assert np.abs(v * n_peg * dt - [dx, dy, dz]).max() < 1e-12
        assert abs(w * n_peg * dt - dth) < 1e-12
        # per-substep caps never exceeded (peg pipeline)
        assert max(abs(dx), abs(dy)) / n_peg <= lim.v_max * dt + 1e-12
        assert abs(dth) / n_peg <= lim.omega_max * dt + 1e-12
        checked += 1
    assert time.time() - t0 < 1.0
    _report("kinematics-oracle", f"{checked} random actions, exact counts, velocities to 1e-12", t0)


# -- 2. rigid boundary motion ----------------------------------------------------


def test_rigid_motion_suite():
    t0 = time.time()
    rng = np.random.default_rng(7)
    for _ in range(200):
        pts = rng.uniform(-0.05, 0.05, (12, 3))
        axis = rng.standard_normal(3)
        axis /= np.linalg.norm(axis)
        moved, _ = boundary_vertex_motion(
            pts, rng.uniform(-0.01, 0.01, 3), rng.uniform(-3, 3), axis,
            rng.uniform(-0.02, 0.02, 3), 0.1,
        )
        d0 = np.linalg.norm(pts[:, None] - pts[None], axis=2)
        d1 = np.linalg.norm(moved[:, None] - moved[None], axis=2)
        assert np.abs(d1 - d0).max() < 1e-10
    # quarter turn reproduced exactly
    x2, v = boundary_vertex_motion(
        np.array([[1.0, 0.0, 0.0]]), [0, 0, 0], (math.pi / 2) / 0.1, [0, 0, 1], [0, 0, 0], 0.1
    )
    assert np.allclose(x2, [[0.0, 1.0, 0.0]], atol=1e-15)
    assert np.allclose(v, [[-10.0, 10.0, 0.0]], atol=1e-12)
    assert time.time() - t0 < 1.0
    _report("rigid-motion", "pairwise distances to 1e-10 on 200 random rigid sets", t0)


# -- 3. FEM gradients -------------------------------------------------------------


def test_fem_gradient_check():
    t0 = time.time()
    rng = np.random.default_rng(11)
    h = 1e-6
    # elastic part: 20 random coarse meshes
    for i in range(20):
        spec = GelSpec(
            base_x=rng.uniform(0.015, 0.03),
            base_y=rng.uniform(0.012, 0.025),
            thickness=rng.uniform(0.003, 0.006),
            subdivisions=tuple(rng.integers(2, 4, 3)),
        )
        mesh = generate_gel_mesh(spec)
        body = DeformableBody(mesh, MaterialParams())
        x = mesh.vertices + 1e-4 * rng.standard_normal(mesh.vertices.shape)
        g = body.model.gradient(x)
        d = rng.standard_normal(x.shape)
        d /= np.linalg.norm(d)
        fd = (body.model.energy(x + h * d) - body.model.energy(x - h * d)) / (2 * h)
        rel = abs(float(np.sum(g * d)) - fd) / max(abs(fd), 1e-12)
        assert rel < 1e-4, f"mesh {i}: elastic gradient error {rel:.2e}"

    # contact-active: total (elastic + barrier) gradient near a plate
    d_hat, kappa = 1e-4, 1e4
    hc = 1e-8
    for i in range(6):
        mesh = generate_gel_mesh(GelSpec(subdivisions=(2, 2, 1)))
        body = DeformableBody(mesh, MaterialParams())
        gap = rng.uniform(0.2, 0.8) * d_hat
        plate = RigidBody(
            "plate",
            np.array([[-1, -1, 0], [1, -1, 0], [1, 1, 0], [-1, 1, 0]]) * 0.05
            + [0, 0, -0.002 - gap],
            np.array([[0, 1, 2], [0, 2, 3]]),
        )
        state = SimState([body], [plate], [])
        vec = state.get_vector()

        def total(v):
            e = body.model.energy(v[: mesh.n_vertices * 3].reshape(-1, 3), allow_inversion=True)
            return e + barrier_energy(state, d_hat, kappa, vec=v)[0]

        _, bg, _ = barrier_energy(state, d_hat, kappa, vec=vec)
        g = body.model.gradient(vec[: mesh.n_vertices * 3].reshape(-1, 3)).reshape(-1) + bg
        d = rng.standard_normal(len(vec))
        d /= np.linalg.norm(d)
        fd = (total(vec + hc * d) - total(vec - hc * d)) / (2 * hc)
        rel = abs(float(np.dot(g, d)) - fd) / max(abs(fd), 1e-12)
        assert rel < 1e-3, f"contact case {i}: gradient error {rel:.2e}"
    elapsed = time.time() - t0
    assert elapsed < 30.0
    _report("fem-gradients", "elastic < 1e-4 on 20 meshes, contact-active < 1e-3", t0)


# -- 4. non-penetration fuzz -------------------------------------------------------


def _fuzz_press_or_slide(rng, slide):
    mesh = generate_gel_mesh(GelSpec(subdivisions=(3, 2, 1)))
    body = DeformableBody(mesh, MaterialParams())
    gap = rng.uniform(1e-4, 5e-4)
    z_top = -0.002 - gap
    half = 0.05
    lo = np.array([-half, -half, z_top - 0.01])
    hi = np.array([half, half, z_top])
    v = np.array(
        [[-half, -half, z_top], [half, -half, z_top], [half, half, z_top], [-half, half, z_top],
         [-half, -half, z_top - 0.01], [half, -half, z_top - 0.01],
         [half, half, z_top - 0.01], [-half, half, z_top - 0.01]]
    )
    t = np.array(
        [[0, 1, 2], [0, 2, 3], [4, 6, 5], [4, 7, 6], [0, 4, 1], [1, 4, 5],
         [1, 5, 2], [2, 5, 6], [2, 6, 3], [3, 6, 7], [3, 7, 0], [0, 7, 4]]
    )
    plate = RigidBody(
        "plate", v, t,
        contains=lambda p: np.all((np.atleast_2d(p) > lo) & (np.atleast_2d(p) < hi), axis=1),
    )
    state = SimState([body], [plate], [])
    cfg = SolverConfig()
    press = gap + rng.uniform(2e-4, 6e-4)
    n = max(1, math.ceil(press / 2e-4))
    offset = np.zeros(3)
    ok = True
    for k in range(n):
        offset[2] -= press / n
        if slide and k >= n // 2:
            offset[0] += rng.uniform(-2e-4, 2e-4)
        solve_quasi_static(state, [mesh.vertices[mesh.constrained_set] + offset], cfg)
        ok &= state.min_pair_distance() > 0
        ok &= state.all_tet_volumes().min() > 0
        ok &= not plate.contains_world(body.positions).any()
    return ok


def _fuzz_insert(rng):
    seed = int(rng.integers(0, 2**31))
    cfg = default_task_config(
        "peg",
        shape_id=int(rng.integers(0, 3)),
        max_steps=3,
        gel_subdivisions=(3, 2, 1),
    ).merged(QUIET)
    env = make_env(cfg)
    env.reset(seed)
    pol = Policy("random", "peg", cfg.max_action, seed=seed)
    ok = True
    obs, diag = env._observation(), env._diagnostics()
    for _ in range(3):
        r = env.step(pol(obs, diag))
        obs, diag = r.observation, r.diagnostics
        ok &= env.state.min_pair_distance() > 0
        ok &= env.state.all_tet_volumes().min() > 0
        for rigid in env.state.rigids:
            for d in env.state.deformables:
                ok &= not rigid.contains_world(d.positions).any()
        if r.done:
            break
    return ok


def test_non_penetration_fuzz():
    t0 = time.time()
    rng = np.random.default_rng(99)
    passed = 0
    for i in range(100):
        if i % 3 == 0:
            ok = _fuzz_press_or_slide(rng, slide=False)
        elif i % 3 == 1:
            ok = _fuzz_press_or_slide(rng, slide=True)
        else:
            ok = _fuzz_insert(rng)
        assert ok, f"fuzz episode {i} violated separation/inversion invariants"
        passed += 1
    elapsed = time.time() - t0
    assert elapsed < 600.0
    _report("non-penetration-fuzz", f"{passed} press/slide/insert episodes clean", t0)


# -- 5. marker pipeline -------------------------------------------------------------


def test_marker_pipeline():
    t0 = time.time()
    mesh = generate_gel_mesh(GelSpec(subdivisions=(6, 4, 2)))
    grid = MarkerGridSpec()
    binding = bind_markers(mesh, grid)
    rest = marker_world_positions(binding, mesh.marker_surface_tris, mesh.vertices)
    assert np.abs(rest - grid.points(-0.002)).max() < 1e-10

    cam = SensorCamera()
    px, valid = project_to_camera(rest, cam)
    assert valid.all()
    depths = cam.to_camera(rest)[:, 2]
    assert np.abs(back_project(px, depths, cam) - rest).max() < 1e-9

    rng = np.random.default_rng(0)
    flow = marker_flow_observation(px, px, NoiseConfig(0.0, 0.0), rng, size=len(px))
    assert np.abs(flow.displacement).max() == 0.0

    rng = np.random.default_rng(123)
    n = 100_000
    noisy = marker_flow_observation(
        np.zeros((n, 2)), np.zeros((n, 2)), NoiseConfig(0.5, 0.0), rng, size=n
    )
    var = noisy.current.var(axis=0)
    assert np.all(np.abs(var - 0.25) <= 0.05 * 0.25)
    _report(
        "marker-pipeline",
        "reconstruction 1e-10, round-trip 1e-9, zero noiseless flow, variance within 5%",
        t0,
    )


# -- 6. reward identities -------------------------------------------------------------


def test_reward_identities():
    t0 = time.time()
    # telescoping over a running prefix
    cfg = default_task_config("peg").merged(QUIET)
    env = make_env(cfg)
    _, diag = env.reset(seed=3)
    e0 = diag["e_t"]
    total = 0.0
    for a in ([0.4, -0.2, 0.5], [0.0, 0.2, -0.4], [-0.3, 0.0, 0.1], [0.1, 0.1, 0.0]):
        r = env.step(a)
        assert r.status == "running"
        total += r.reward
    assert abs(total - (e0 - r.diagnostics["e_t"] - 4 * cfg.step_penalty)) < 1e-9

    # success carries +10 on every track
    peg_cfg = default_task_config("peg", rand_xy_mm=0.0, rand_theta_deg=0.0).merged(QUIET)
    env = make_env(peg_cfg)
    env.reset(seed=0)
    while True:
        r = env.step([0.0, 0.0, 0.0])
        if r.done:
            break
    assert r.status == "success" and abs(r.reward - (0.0 - 0.05 + 10.0)) < 1e-9

    lock_cfg = default_task_config("lock", rand_xy_mm=0.0, rand_z_mm=0.0).merged(QUIET)
    env = make_env(lock_cfg)
    _, diag = env.reset(seed=0)
    while True:
        e_prev = env.e_prev
        r = env.step([0.0, 0.0, -1.0])
        if r.done:
            break
    assert r.status == "success"
    expected = e_prev - r.diagnostics["e_t"] - 0.05 + 10.0
    assert abs(r.reward - expected) < 1e-9

    fus_cfg = default_task_config(
        "fusion", rand_xy_mm=0.0, rand_theta_deg=0.0, rand_z_mm=0.0, vision=False
    ).merged(QUIET)
    env = make_env(fus_cfg)
    env.reset(seed=0)
    while True:
        r = env.step([0.0, 0.0, 0.0, -1.0])
        if r.done:
            break
    assert r.status == "success" and r.reward > 9.0

    # R_fail closed forms on crafted failures
    cfg = default_task_config("peg", x_max_mm=0.5, rand_xy_mm=0.0, rand_theta_deg=0.0).merged(QUIET)
    env = make_env(cfg)
    env.reset(seed=0)
    r = env.step([1.0, 0.0, 0.0])  # violates on step 1
    assert r.status == "error_too_large"
    assert abs(r.reward - (-0.05 - 2 * (cfg.max_steps - 1) * 0.05)) < 1e-12

    cfg = default_task_config("lock", x_max_mm=0.5, rand_xy_mm=0.0, rand_z_mm=0.0).merged(QUIET)
    env = make_env(cfg)
    env.reset(seed=0)
    r = env.step([1.0, 0.0, 0.0])
    assert r.status == "error_too_large"
    drift = min(r.diagnostics["l_diff_m"] * 1e3, 5.0) + min(r.diagnostics["r_diff_m"] * 1e3, 5.0)
    assert abs(r.reward - (-0.05 - 10 * (cfg.max_steps - 1) * 0.05 - drift)) < 1e-9

    cfg = default_task_config(
        "fusion", tau_theta_deg=1.0, rand_xy_mm=0.0, rand_theta_deg=0.0, rand_z_mm=0.0,
        max_action=(1.0, 1.0, 2.0, 1.0), vision=False,
    ).merged(QUIET)
    env = make_env(cfg)
    _, diag = env.reset(seed=0)
    e_prev = env.e_prev
    r = env.step([0.0, 0.0, 1.5, 0.0])
    assert r.status == "error_too_large"
    expected = (e_prev - r.diagnostics["e_t"]) - 0.05 - 2 * (cfg.max_steps - 1) * 0.05
    assert abs(r.reward - expected) < 1e-9
    _report("reward-identities", "telescoping 1e-9; +10 on success; closed-form failures", t0)


# -- 7. policy success rates -------------------------------------------------------


def test_policy_success_rates():
    t0 = time.time()
    peg_oracle = evaluate("oracle", "peg", 100, workers=2)
    lock_oracle = evaluate("oracle", "lock", 100, workers=2)
    peg_random = evaluate("random", "peg", 100, workers=2)
    lock_random = evaluate("random", "lock", 100, workers=2)
    elapsed = time.time() - t0
    detail = (
        f"oracle peg {peg_oracle.success_rate:.2f} (>=0.90), "
        f"oracle lock {lock_oracle.success_rate:.2f} (>=0.80), "
        f"random peg {peg_random.success_rate:.2f} (<0.05), "
        f"random lock {lock_random.success_rate:.2f} (<0.05)"
    )
    print("\n" + detail)
    assert peg_oracle.success_rate >= 0.90
    assert lock_oracle.success_rate >= 0.80
    assert peg_random.success_rate < 0.05
    assert lock_random.success_rate < 0.05
    assert elapsed < 1200.0, f"policy-rate suite took {elapsed:.0f}s (budget 1200s)"
    _report("policy-success-rates", detail, t0)


# -- 8. determinism and replay -------------------------------------------------------


def test_determinism_and_replay(tmp_path):
    t0 = time.time()
    # 100 fuzz episodes recorded and replayed with zero divergence
    tasks = ["peg", "lock", "fusion"]
    n_div = 0
    for i in range(100):
        task = tasks[i % 3]
        cfg = default_task_config(
            task, max_steps=3, gel_subdivisions=(3, 2, 1), vision=False
        )
        env = make_env(cfg)
        path = tmp_path / f"fuzz_{i}.jsonl"
        rec = EpisodeRecorder(env, path)
        pol = Policy("random", task, cfg.max_action, seed=i)
        obs, diag = rec.reset(i)
        while True:
            r = rec.step(pol(obs, diag))
            obs, diag = r.observation, r.diagnostics
            if r.done:
                break
            if env.t >= cfg.max_steps:
                rec.close()
                break
        report = replay(path)
        if not report.ok:
            n_div += 1
    assert n_div == 0

    # same-seed double runs bit-identical including full observation payloads
    for task in ("peg", "lock"):
        cfg = default_task_config(task, max_steps=3, gel_subdivisions=(3, 2, 1))
        blobs = []
        for _ in range(2):
            env = make_env(cfg)
            pol = Policy("random", task, cfg.max_action, seed=5)
            obs, diag = env.reset(5)
            trace = [json.dumps([observation_payload(obs), diag])]
            for _ in range(3):
                r = env.step(pol(obs, diag))
                obs, diag = r.observation, r.diagnostics
                trace.append(json.dumps([observation_payload(obs), r.reward, r.status, diag]))
                if r.done:
                    break
            blobs.append("\n".join(trace))
        assert blobs[0] == blobs[1]
    _report("determinism-replay", "100 fuzz replays with zero divergence; double runs bit-identical", t0)


# -- 9. depth camera ------------------------------------------------------------------


def test_depth_camera_acceptance():
    t0 = time.time()
    from vitacsim.depth_camera import CameraModel, depth_to_pointcloud, render_depth

    cam = CameraModel(width=64, height=48, cx=32.0, cy=24.0, fx=60.0, fy=60.0)
    plane_v = np.array([[-2, -2, 0.1], [2, -2, 0.1], [2, 2, 0.1], [-2, 2, 0.1]], dtype=float)
    plane_t = np.array([[0, 1, 2], [0, 2, 3]])
    img = render_depth([(plane_v, plane_t, np.zeros(2, dtype=int))], cam)
    assert img.valid.all()
    assert np.allclose(img.depth, 0.1, rtol=0.0, atol=1e-12)

    cloud = depth_to_pointcloud(img, cam)
    u = cloud.points[:, 0] / cloud.points[:, 2] * cam.fx + cam.cx
    v = cloud.points[:, 1] / cloud.points[:, 2] * cam.fy + cam.cy
    assert np.abs(u - cloud.pixels[:, 0]).max() < 1e-9
    assert np.abs(v - cloud.pixels[:, 1]).max() < 1e-9

    rng = np.random.default_rng(4)
    for _ in range(50):
        z1, z2 = rng.uniform(0.05, 0.5, 2)
        w1, w2 = rng.uniform(0.2, 2.0, 2)
        o2 = rng.uniform(-0.5, 0.5)
        a = (plane_v * [w1 / 2, w1 / 2, 0] + [0, 0, z1], plane_t, np.ones(2, dtype=int))
        b = (plane_v * [w2 / 2, w2 / 2, 0] + [o2, 0, z2], plane_t, np.full(2, 2))
        both = render_depth([a, b], cam)
        da = render_depth([a], cam).depth
        db = render_depth([b], cam).depth
        expected = np.where((da > 0) & (db > 0), np.minimum(da, db), np.maximum(da, db))
        assert np.array_equal(np.where(both.valid, both.depth, 0.0), expected)
    _report("depth-camera", "plane exact, round-trip 1e-9, occlusion-minimum on 50 scenes", t0)
