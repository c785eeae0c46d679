"""Benchmark environments: peg insertion, lock opening, tactile-vision fusion.

Each environment owns two gel sensors gripping a rigid object (peg or key)
above a static fixture.  Agent actions arrive in millimeters/degrees, are
clipped, rotated into the world frame, accumulated into offsets, split into
velocity-capped substeps, and applied as Dirichlet boundary motion of the gel
shells; a stiff tether drags the gripped object along.  Observations carry
the relative motion of the grip and the marker flow of both sensors; the
fusion task adds a ground-truth depth camera.

Scene frame: z up, fixture top surface at z = 0, hole/lock axis at the
origin.  The left sensor sits at y < 0 and presses toward +y.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .assets import generate_assets, peg_polygon, polygon_contains
from .config import EnvConfig
from .depth_camera import CameraModel, depth_to_pointcloud, render_depth, render_rgb_tags
from .errors import NonConvergenceError, ResetError, VitacError
from .geometry import GelSpec, MarkerGridSpec, bind_markers, generate_gel_mesh, load_tet_mesh
from .fem import DeformableBody, RigidBody, SimState, Tether, solve_quasi_static
from .kinematics import (
    ActionCommand,
    MotionLimits,
    OffsetState,
    check_offset_limits,
    clip_action,
    local_to_global,
    rotation_about_axis,
    substep_count_fusion,
    substep_count_lock,
    substep_count_peg,
    substep_velocities,
    update_offsets,
)
from .rewards import error_fusion, error_lock, error_peg, reward_fusion, reward_lock, reward_peg
from .sensor import MarkerFlow, SensorCamera, marker_flow_observation, marker_world_positions, project_to_camera, surface_diff

STATUS_RUNNING = "running"
STATUS_SUCCESS = "success"
STATUS_ERROR = "error_too_large"
STATUS_TIMEOUT = "too_many_steps"

_Z_AXIS = np.array([0.0, 0.0, 1.0])

# world orientation of the gel frame per side: x_gel -> +-x, y_gel -> +z,
# z_gel (sensing normal is -z_gel) -> toward the gripped object
_R_LEFT = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])
_R_RIGHT = np.array([[-1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0]])


@dataclass
class Observation:
    relative_motion: np.ndarray  # (4,) x, y, z in mm; theta in deg
    marker_flow_left: MarkerFlow
    marker_flow_right: MarkerFlow
    rgb_picture: np.ndarray = None
    depth_picture: np.ndarray = None
    point_cloud: object = None


@dataclass
class StepResult:
    observation: Observation
    reward: float
    done: bool
    status: str
    diagnostics: dict


class SensorRig:
    """One gel pad: shell pose tracking, markers, camera, drift statistics."""

    def __init__(self, mesh, binding, camera: SensorCamera, rotation, translation):
        self.mesh = mesh
        self.binding = binding
        self.camera = camera
        self.rotation = np.array(rotation, dtype=np.float64)
        self.translation = np.array(translation, dtype=np.float64)
        self.surface_vertex_ids = np.unique(mesh.marker_surface_tris)
        self.baseline_px = None
        self.baseline_valid = None
        self.baseline_surface = None

    def world_from_gel(self, pts):
        return pts @ self.rotation.T + self.translation

    def gel_from_world(self, pts):
        return (pts - self.translation) @ self.rotation

    def constrained_targets(self):
        return self.world_from_gel(self.mesh.vertices[self.mesh.constrained_set])

    def move(self, v, omega, pivot, dt):
        """Advance the shell pose by one rigid substep about the z axis."""
        r_inc = rotation_about_axis(_Z_AXIS, omega * dt)
        self.translation = np.asarray(v) * dt + r_inc @ (self.translation - pivot) + pivot
        self.rotation = r_inc @ self.rotation

    def marker_pixels(self, positions):
        world = marker_world_positions(self.binding, self.mesh.marker_surface_tris, positions)
        return project_to_camera(self.gel_from_world(world), self.camera)

    def capture_baseline(self, positions):
        self.baseline_px, self.baseline_valid = self.marker_pixels(positions)
        self.baseline_surface = self.gel_from_world(positions[self.surface_vertex_ids])

    def flow(self, positions, noise, rng, size) -> MarkerFlow:
        px, valid = self.marker_pixels(positions)
        return marker_flow_observation(
            self.baseline_px, px, noise, rng, size=size, base_valid=valid & self.baseline_valid
        )

    def surface_drift(self, positions) -> float:
        current = self.gel_from_world(positions[self.surface_vertex_ids])
        return surface_diff(current, self.baseline_surface)


class TactileEnv:
    """Common machinery; task specifics live in the subclasses."""

    task = None

    def __init__(self, config: EnvConfig):
        if config.task != self.task:
            raise VitacError(f"config is for task {config.task!r}, not {self.task!r}")
        self.config = config
        self.limits = MotionLimits(
            max_action=np.array(config.max_action),
            v_max=config.v_max,
            omega_max=config.omega_max,
            x_max=config.x_max_mm * 1e-3,
            y_max=config.y_max_mm * 1e-3,
            theta_max=math.radians(config.theta_max_deg),
            dt=config.solver.dt,
        )
        if getattr(config, "gel_mesh_path", ""):
            self.gel_mesh = load_tet_mesh(config.gel_mesh_path)
        else:
            self.gel_mesh = generate_gel_mesh(GelSpec(subdivisions=config.gel_subdivisions))
        self.binding = bind_markers(
            self.gel_mesh,
            MarkerGridSpec(config.marker_rows, config.marker_cols, config.marker_spacing_mm * 1e-3),
        )
        self.assets = generate_assets(self.task, config.shape_id, config.clearance_mm * 1e-3)
        self.gel_extent = {
            "x": float(np.ptp(self.gel_mesh.vertices[:, 0])),
            "y": float(np.ptp(self.gel_mesh.vertices[:, 1])),
            "th": float(np.ptp(self.gel_mesh.vertices[:, 2])),
        }
        self._done = True
        self.status = None
        self.t = 0
        self._grip_cache = None

    # -- per-task hooks ------------------------------------------------------

    def _sample_initial(self, rng):
        raise NotImplementedError

    def _zero_initial(self):
        raise NotImplementedError

    def _build_scene(self):
        raise NotImplementedError

    def step(self, action):
        raise NotImplementedError

    # -- episode lifecycle ----------------------------------------------------

    def reset(self, seed=0):
        """Assemble the scene, squeeze the grip, capture flow baselines."""
        self.episode_seed = int(seed)
        streams = np.random.SeedSequence(self.episode_seed).spawn(3)
        self.rng_init = np.random.default_rng(streams[0])
        self.rng_noise = [np.random.default_rng(streams[1]), np.random.default_rng(streams[2])]

        if self._grip_cache is None:
            self._grip_cache = self._build_canonical_grip()
        self._sample_initial(self.rng_init)
        self._build_scene()
        if self._grip_cache:
            self._apply_grip_cache()
        else:
            try:
                self._squeeze_grip()
            except NonConvergenceError as exc:
                raise ResetError(f"grip squeeze failed to converge: {exc}") from exc

        for rig in self.rigs:
            rig.capture_baseline(self._gel_positions(rig))
        self.object_start_translation = self.state.rigids[0].translation.copy()
        self.offsets = OffsetState()
        self.t = 0
        self.status = STATUS_RUNNING
        self._done = False
        self._step_solver_iters = 0
        self.e_prev = self._error_scalar()
        return self._observation(), self._diagnostics()

    def _require_running(self):
        if self._done:
            raise VitacError("episode is finished; call reset() first")

    def _gel_positions(self, rig):
        return self.state.deformables[self.rigs.index(rig)].positions

    # -- scene assembly helpers ------------------------------------------------

    def _place_rigs(self, grip_xy, theta, object_half_width, grip_center_z):
        cfg = self.config
        rz = rotation_about_axis(_Z_AXIS, theta)
        open_dy = object_half_width + cfg.grip_gap_mm * 1e-3 + self.gel_extent["th"] / 2
        camera = SensorCamera()
        rigs = []
        for side, base_rot in (("left", _R_LEFT), ("right", _R_RIGHT)):
            sign = -1.0 if side == "left" else 1.0
            center = rz @ np.array([0.0, sign * open_dy, 0.0]) + np.array(
                [grip_xy[0], grip_xy[1], grip_center_z]
            )
            rigs.append(SensorRig(self.gel_mesh, self.binding, camera, rz @ base_rot, center))
        self.rigs = rigs
        self.grip_center = np.array([grip_xy[0], grip_xy[1], grip_center_z])
        self.grip_theta = theta

    def _make_state(self, object_asset, object_rotation, object_translation, fixtures, fixture_poses):
        gels = []
        for rig in self.rigs:
            body = DeformableBody(self.gel_mesh, self.config.material)
            body.positions = rig.world_from_gel(self.gel_mesh.vertices)
            gels.append(body)
        obj = RigidBody(
            "object",
            object_asset.vertices,
            object_asset.triangles,
            free=True,
            instance_id=2,
            tri_instance_ids=object_asset.tri_instance_ids,
            contains=object_asset.contains,
        )
        obj.set_pose(rotation=object_rotation, translation=object_translation)
        rigids = [obj]
        for i, (fx, pose) in enumerate(zip(fixtures, fixture_poses)):
            fixture = RigidBody(
                f"fixture{i}",
                fx.vertices + pose,
                fx.triangles,
                free=False,
                instance_id=1,
                tri_instance_ids=fx.tri_instance_ids,
            )
            rigids.append(fixture)
        tether = Tether(0, object_translation.copy(), self.config.tether_stiffness)
        self.state = SimState(gels, rigids, [tether], kappa=self.config.solver.barrier_stiffness)

    def _squeeze_grip(self):
        cfg = self.config
        total = (cfg.grip_gap_mm + cfg.indentation_mm) * 1e-3
        cap = cfg.v_max * cfg.solver.dt
        n = max(1, math.ceil(total / cap))
        step = total / n
        rz = rotation_about_axis(_Z_AXIS, self.grip_theta)
        inward = rz @ np.array([0.0, 1.0, 0.0])
        for _ in range(n):
            self.rigs[0].translation = self.rigs[0].translation + step * inward
            self.rigs[1].translation = self.rigs[1].translation - step * inward
            targets = [rig.constrained_targets() for rig in self.rigs]
            solve_quasi_static(self.state, targets, cfg.solver)

    def _build_canonical_grip(self):
        """Squeeze once at the canonical pose; episodes transport the result.

        The squeeze only involves the gels and the gripped object, so the
        converged state is valid (and still an equilibrium) under the rigid
        transform to any episode placement.  Returns None when a fixture
        interferes or damping makes the transport inexact, in which case
        every reset squeezes from scratch.
        """
        if self.config.material.damping > 0:
            return None
        self._zero_initial()
        self._build_scene()
        try:
            self._squeeze_grip()
        except NonConvergenceError as exc:
            raise ResetError(f"grip squeeze failed to converge: {exc}") from exc
        # transport is exact only if nothing touches a fixture; a conservative
        # AABB-distance check is enough since grips assemble well above them
        d_hat = self.config.solver.barrier_distance
        moving = np.concatenate(
            [d.positions for d in self.state.deformables]
            + [self.state.rigids[0].world_vertices()]
        )
        for fixture in self.state.rigids[1:]:
            fv = fixture.world_vertices()
            lo, hi = fv.min(axis=0), fv.max(axis=0)
            gap = np.maximum(lo - moving, 0.0) + np.maximum(moving - hi, 0.0)
            if float(np.min(np.linalg.norm(gap, axis=1))) < 5.0 * d_hat:
                return None
        obj = self.state.rigids[0]
        return {
            "grip_center": self.grip_center.copy(),
            "rig_rotations": [rig.rotation.copy() for rig in self.rigs],
            "rig_translations": [rig.translation.copy() for rig in self.rigs],
            "gel_positions": [d.positions.copy() for d in self.state.deformables],
            "object_rotation": obj.rotation.copy(),
            "object_translation": obj.translation.copy(),
            "tether_target": self.state.tethers[0].target.copy(),
            "kappa": self.state.kappa,
            "residual": self.state.last_solve.residual,
            "min_distance": self.state.last_solve.min_distance,
        }

    def _apply_grip_cache(self):
        cache = self._grip_cache
        r = rotation_about_axis(_Z_AXIS, self.grip_theta)
        c0 = cache["grip_center"]
        c1 = self.grip_center

        def xform(p):
            return (p - c0) @ r.T + c1

        for i, rig in enumerate(self.rigs):
            rig.rotation = r @ cache["rig_rotations"][i]
            rig.translation = r @ (cache["rig_translations"][i] - c0) + c1
            self.state.deformables[i].positions = xform(cache["gel_positions"][i])
        obj = self.state.rigids[0]
        obj.set_pose(
            rotation=r @ cache["object_rotation"],
            translation=r @ (cache["object_translation"] - c0) + c1,
        )
        self.state.tethers[0].target = r @ (cache["tether_target"] - c0) + c1
        self.state.kappa = cache["kappa"]
        from .fem.solver import SolveDiagnostics

        self.state.last_solve = SolveDiagnostics(
            residual=cache["residual"],
            min_distance=cache["min_distance"],
            kappa=cache["kappa"],
            converged=True,
        )

    # -- motion ---------------------------------------------------------------

    def _apply_rigid_transform(self, angle, shift, pivot):
        """Carry the whole moving set (gels, object, frames) by one transform."""
        r_inc = rotation_about_axis(_Z_AXIS, angle)
        shift = np.asarray(shift, dtype=np.float64)

        def move_point(p):
            return r_inc @ (p - pivot) + pivot + shift

        for i, rig in enumerate(self.rigs):
            rig.rotation = r_inc @ rig.rotation
            rig.translation = move_point(rig.translation)
            pos = self.state.deformables[i].positions
            self.state.deformables[i].positions = (pos - pivot) @ r_inc.T + pivot + shift
        obj = self.state.rigids[0]
        obj.set_pose(rotation=r_inc @ obj.rotation, translation=move_point(obj.translation))
        self.state.tethers[0].target = move_point(self.state.tethers[0].target)
        self.grip_center = self.grip_center + shift

    def _kinematic_max_step(self, angle, shift, pivot):
        """Safe fraction of a rigid carry of the moving set, by CCD vs fixtures.

        The whole moving set (gel vertices plus the gripped object) shares the
        transform, so relative motion exists only against static bodies; the
        rotation path is bounded by its chord displacement.
        """
        from .fem.ccd import edge_edge_toi, point_triangle_toi
        from .fem.solver import _collect_pairs, _eval_pairs, _geom, _world_verts

        state = self.state
        d_hat = self.config.solver.barrier_distance
        vec = state.get_vector()
        g = _geom(state)
        w = _world_verts(state, vec)
        r_inc = rotation_about_axis(_Z_AXIS, angle)
        disp = (w - pivot) @ r_inc.T + pivot + np.asarray(shift) - w
        disp[g.vert_static] = 0.0
        max_disp = float(np.max(np.linalg.norm(disp, axis=1))) if len(disp) else 0.0
        if max_disp < 1e-16:
            return 1.0
        pairs = _collect_pairs(state, w, d_hat + 2.0 * max_disp)
        toi = 2.0
        for ev, kernel in zip(_eval_pairs(w, pairs), (point_triangle_toi, edge_edge_toi)):
            if not len(ev["dist"]):
                continue
            static = np.any(g.vert_static[ev["ends"]], axis=1)
            if not np.any(static):
                continue
            ends = ev["ends"][static]
            pts = ev["points"][static]
            de = disp[ends]
            t = kernel(pts[:, 0], pts[:, 1], pts[:, 2], pts[:, 3],
                       de[:, 0], de[:, 1], de[:, 2], de[:, 3])
            if len(t):
                toi = min(toi, float(np.min(t)))
        if toi > 1.0:
            return 1.0
        return min(1.0, self.config.solver.ccd_safety * toi)

    def _solve_current(self, assume_transported):
        targets = [rig.constrained_targets() for rig in self.rigs]
        solve_quasi_static(self.state, targets, self.config.solver,
                           assume_transported=assume_transported)
        self._step_solver_iters += self.state.last_solve.iterations

    def _run_substeps(self, v, omega, n_sub):
        """Apply one action phase: n_sub velocity substeps to both sensors.

        Each substep's commanded motion is one rigid transform of the whole
        moving set (gel shells plus the gripped object), applied as a
        CCD-advanced rotation phase followed by a translation phase, with a
        quasi-static relaxation after every accepted fraction.  A rotation
        that cannot complete is a jam; translation leftovers are handed to
        the Dirichlet boundary walk, leaving the object at its physical pose.
        """
        cfg = self.config
        dt = cfg.solver.dt
        v = np.asarray(v, dtype=np.float64)
        for _ in range(n_sub):
            pivot = self.grip_center.copy()

            angle_left = omega * dt
            for _attempt in range(8):
                if abs(angle_left) < 1e-14:
                    break
                frac = self._kinematic_max_step(angle_left, np.zeros(3), pivot)
                if frac < 1e-3:
                    raise NonConvergenceError(abs(angle_left), 0, "rotation jammed")
                self._apply_rigid_transform(frac * angle_left, np.zeros(3), pivot)
                angle_left *= 1.0 - frac
                self._solve_current(assume_transported=True)
                if frac >= 1.0:
                    angle_left = 0.0
                    break
            if abs(angle_left) >= 1e-14:
                raise NonConvergenceError(abs(angle_left), 0, "rotation jammed")

            shift_left = v * dt
            for _attempt in range(8):
                if float(np.linalg.norm(shift_left)) < 1e-15:
                    break
                frac = self._kinematic_max_step(0.0, shift_left, pivot)
                if frac < 0.5:
                    break  # poor progress: let the boundary walk finish instead
                self._apply_rigid_transform(0.0, frac * shift_left, pivot)
                shift_left = shift_left * (1.0 - frac)
                self._solve_current(assume_transported=True)
                if frac >= 1.0:
                    shift_left = np.zeros(3)
                    break
            if float(np.linalg.norm(shift_left)) >= 1e-15:
                # blocked linear motion: the gel shells must still reach their
                # commanded pose; the walk CCD-caps them against everything
                for rig in self.rigs:
                    rig.translation = rig.translation + shift_left
                self.state.tethers[0].target = self.state.tethers[0].target + shift_left
                self.grip_center = self.grip_center + shift_left
                self._solve_current(assume_transported=False)

    # -- observations & diagnostics --------------------------------------------

    def _observation(self) -> Observation:
        flows = [
            rig.flow(
                self.state.deformables[i].positions,
                self.config.noise,
                self.rng_noise[i],
                self.config.flow_size,
            )
            for i, rig in enumerate(self.rigs)
        ]
        rm = np.array(
            [
                self.offsets.x_offset * 1000.0,
                self.offsets.y_offset * 1000.0,
                self.offsets.z_offset * 1000.0,
                math.degrees(self.offsets.theta_offset),
            ]
        )
        return Observation(rm, flows[0], flows[1])

    def _surface_drifts(self):
        return [
            rig.surface_drift(self.state.deformables[i].positions)
            for i, rig in enumerate(self.rigs)
        ]

    def _diagnostics(self, extra=None):
        drifts = self._surface_drifts()
        obj = self.state.rigids[0]
        diag = {
            "e_t": self._error_scalar(),
            "l_diff_m": drifts[0],
            "r_diff_m": drifts[1],
            "gt_offset": [float(v) for v in self._gt_vector()],
            "tether_stretch_mm": float(
                np.linalg.norm(obj.translation - self.state.tethers[0].target) * 1000.0
            ),
            "solver_iterations": int(self._step_solver_iters),
            "kappa": float(self.state.kappa),
        }
        if extra:
            diag.update(extra)
        return diag

    def _finish_step(self, status, e_t, reward):
        self.status = status
        self._done = status != STATUS_RUNNING
        self.e_prev = e_t
        obs = self._observation()
        diag = self._diagnostics(self._task_diagnostics())
        return StepResult(obs, reward, self._done, status, diag)

    def _task_diagnostics(self):
        return {}


class PegInsertionEnv(TactileEnv):
    """Track-1 peg insertion: xy/theta actions plus a forced descent phase."""

    task = "peg"

    def _sample_initial(self, rng):
        cfg = self.config
        r = cfg.rand_xy_mm * 1e-3
        self.init_offset = np.array(
            [
                rng.uniform(-r, r),
                rng.uniform(-r, r),
                math.radians(rng.uniform(-cfg.rand_theta_deg, cfg.rand_theta_deg)),
            ]
        )
        # commanded grip offset relative to the hole, in mm / deg
        self.gt = np.array(
            [
                self.init_offset[0] * 1000.0,
                self.init_offset[1] * 1000.0,
                math.degrees(self.init_offset[2]),
            ]
        )

    def _zero_initial(self):
        self.init_offset = np.zeros(3)
        self.gt = np.zeros(3)

    def _build_scene(self):
        cfg = self.config
        peg = self.assets["object"]
        length = peg.metadata["length"]
        start_gap = cfg.start_gap_mm * 1e-3
        half_w = 0.004  # all peg cross-sections are 8 mm across in y
        ox, oy, oth = self.init_offset
        rz = rotation_about_axis(_Z_AXIS, oth)
        translation = np.array([ox, oy, start_gap])
        grip_center_z = start_gap + length - self.gel_extent["y"] / 2
        self._place_rigs((ox, oy), oth, half_w, grip_center_z)
        self._make_state(peg, rz, translation, self.assets["fixtures"], self.assets["fixture_poses"])

    def step(self, action) -> StepResult:
        self._require_running()
        cfg = self.config
        cmd = clip_action(ActionCommand("peg", action), self.limits)
        dx_mm, dy_mm, dth_deg = cmd.values
        theta = self.offsets.theta_offset
        dxg, dyg = local_to_global(dx_mm * 1e-3, dy_mm * 1e-3, theta)
        dth = math.radians(dth_deg)
        self.t += 1
        self._step_solver_iters = 0

        candidate = update_offsets(self.offsets, dxg, dyg, dth, 0.0)
        violation = check_offset_limits(candidate, self.limits)
        solver_failed = False
        if violation is None:
            self.offsets = candidate
            self.gt = self.gt + np.array([dxg * 1000.0, dyg * 1000.0, dth_deg])
            n_sub = substep_count_peg(dxg, dyg, dth, self.limits)
            v, omega = substep_velocities(np.array([dxg, dyg, 0.0]), dth, n_sub, cfg.solver.dt)
            try:
                self._run_substeps(v, omega, n_sub)
                # forced descent phase under the same per-substep velocity cap
                z_step = cfg.z_step_mm * 1e-3
                n_z = max(1, math.ceil(z_step / (cfg.v_max * cfg.solver.dt)))
                vz = np.array([0.0, 0.0, -z_step / (n_z * cfg.solver.dt)])
                self.offsets = update_offsets(self.offsets, 0.0, 0.0, 0.0, -z_step)
                self._run_substeps(vz, 0.0, n_z)
            except NonConvergenceError:
                solver_failed = True

        status = self._evaluate(violation, solver_failed)
        e_t = self._error_scalar()
        reward = reward_peg(self.e_prev, e_t, status, self.t, cfg.max_steps, cfg.step_penalty)
        return self._finish_step(status, e_t, reward)

    def _evaluate(self, violation, solver_failed):
        cfg = self.config
        if violation is not None or solver_failed:
            return STATUS_ERROR
        if (
            abs(self.gt[0]) >= cfg.tau_xy_mm
            or abs(self.gt[1]) >= cfg.tau_xy_mm
            or abs(self.gt[2]) >= cfg.tau_theta_deg
        ):
            return STATUS_ERROR
        drifts = self._surface_drifts()
        thresh = cfg.surface_diff_thresh_mm * 1e-3
        if (
            self.t < cfg.max_steps
            and self._descent_mm() >= cfg.success_depth_mm - 0.05
            and drifts[0] < thresh
            and drifts[1] < thresh
        ):
            return STATUS_SUCCESS
        if self.t >= cfg.max_steps:
            return STATUS_TIMEOUT
        return STATUS_RUNNING

    def _descent_mm(self):
        obj = self.state.rigids[0]
        return (self.object_start_translation[2] - obj.translation[2]) * 1000.0

    def _error_scalar(self):
        return error_peg(self.gt[0], self.gt[1], self.gt[2])

    def _gt_vector(self):
        return self.gt

    def _task_diagnostics(self):
        return {"descent_mm": float(self._descent_mm())}


class LockOpeningEnv(TactileEnv):
    """Track-1 lock opening: xyz actions aligning four key teeth with pockets."""

    task = "lock"
    tip_start_mm = 4.0  # nominal start height of the deepest tooth tip
    bar_target_mm = 0.5  # bar bottom height above the lock top when inserted

    def _sample_initial(self, rng):
        cfg = self.config
        r = cfg.rand_xy_mm * 1e-3
        rz = cfg.rand_z_mm * 1e-3
        self.init_offset = np.array(
            [rng.uniform(-r, r), rng.uniform(-r, r), rng.uniform(-rz, rz)]
        )

    def _zero_initial(self):
        self.init_offset = np.zeros(3)

    def _build_scene(self):
        cfg = self.config
        key = self.assets["object"]
        heights = key.metadata["teeth_heights"]
        ox, oy, oz = self.init_offset
        bar_bottom = (self.tip_start_mm * 1e-3 + max(heights)) + oz
        translation = np.array([ox, oy, bar_bottom])
        self.target_translation = np.array([0.0, 0.0, self.bar_target_mm * 1e-3])
        # commanded offset of the key frame from its inserted pose, meters
        self.gt_m = translation - self.target_translation
        bar_center_z = bar_bottom + 0.0025
        grip_center_z = bar_center_z + 0.009
        self._place_rigs((ox, oy), 0.0, 0.002, grip_center_z)
        self._make_state(key, np.eye(3), translation, self.assets["fixtures"], self.assets["fixture_poses"])
        self.tooth_tips_body = key.metadata["tooth_tips"]

    def step(self, action) -> StepResult:
        self._require_running()
        cfg = self.config
        cmd = clip_action(ActionCommand("lock", action), self.limits)
        dx, dy, dz = cmd.values * 1e-3
        self.t += 1
        self._step_solver_iters = 0

        candidate = update_offsets(self.offsets, dx, dy, 0.0, dz)
        violation = check_offset_limits(candidate, self.limits)
        if violation is None and abs(candidate.z_offset) > cfg.z_max_mm * 1e-3:
            violation = "z"
        solver_failed = False
        if violation is None:
            self.offsets = candidate
            self.gt_m = self.gt_m + np.array([dx, dy, dz])
            n_sub = substep_count_lock(dx, dy, dz, cfg.solver.dt)
            v, _ = substep_velocities(np.array([dx, dy, dz]), 0.0, n_sub, cfg.solver.dt)
            try:
                self._run_substeps(v, 0.0, n_sub)
            except NonConvergenceError:
                solver_failed = True

        status = self._evaluate(violation, solver_failed)
        e_t = self._error_scalar()
        reward = reward_lock(
            self.e_prev, e_t, status, self.t, cfg.max_steps, cfg.step_penalty,
            self._surface_drifts(), cfg.surface_diff_clip_mm,
        )
        return self._finish_step(status, e_t, reward)

    def _pair_errors_m(self):
        obj = self.state.rigids[0]
        tips = self.tooth_tips_body @ obj.rotation.T + obj.translation
        targets = self.tooth_tips_body + self.target_translation
        return tips - targets

    def _evaluate(self, violation, solver_failed):
        cfg = self.config
        if violation is not None or solver_failed:
            return STATUS_ERROR
        drifts = self._surface_drifts()
        thresh = cfg.surface_diff_thresh_mm * 1e-3
        pair_ok = bool(np.all(np.abs(self._pair_errors_m()) < cfg.tau_xyz_mm * 1e-3))
        if self.t < cfg.max_steps and pair_ok and drifts[0] < thresh and drifts[1] < thresh:
            return STATUS_SUCCESS
        if self.t >= cfg.max_steps:
            return STATUS_TIMEOUT
        return STATUS_RUNNING

    def _error_scalar(self):
        return error_lock(self.gt_m[0], self.gt_m[1], self.gt_m[2])

    def _gt_vector(self):
        return self.gt_m * 1000.0  # mm for the wire

    def _task_diagnostics(self):
        return {"pair_errors_mm": (self._pair_errors_m() * 1000.0).ravel().tolist()}


class FusionInsertionEnv(TactileEnv):
    """Track-2 insertion with vision: xy/theta/z actions, two candidate holes."""

    task = "fusion"

    def __init__(self, config: EnvConfig):
        super().__init__(config)
        self.camera = CameraModel.look_at(
            eye=(0.0, -0.11, 0.09),
            target=(0.0, 0.0, 0.0),
            width=config.vision_width,
            height=config.vision_height,
            fx=0.8125 * config.vision_width,
            fy=0.8125 * config.vision_width,
            cx=config.vision_width / 2,
            cy=config.vision_height / 2,
        )
        self.matching_center = self.assets["matching_hole_center"]

    def _sample_initial(self, rng):
        cfg = self.config
        r = cfg.rand_xy_mm * 1e-3
        self.init_offset = np.array(
            [
                rng.uniform(-r, r),
                rng.uniform(-r, r),
                math.radians(rng.uniform(-cfg.rand_theta_deg, cfg.rand_theta_deg)),
                rng.uniform(-cfg.rand_z_mm * 1e-3, cfg.rand_z_mm * 1e-3),
            ]
        )

    def _zero_initial(self):
        self.init_offset = np.zeros(4)

    def _build_scene(self):
        cfg = self.config
        peg = self.assets["object"]
        length = peg.metadata["length"]
        ox, oy, oth, oz = self.init_offset
        start_z = cfg.fusion_start_height_mm * 1e-3 + oz
        target_z = -cfg.fusion_insert_depth_mm * 1e-3
        xy = self.matching_center + np.array([ox, oy])
        rz = rotation_about_axis(_Z_AXIS, oth)
        translation = np.array([xy[0], xy[1], start_z])
        # commanded offsets to the aligned, inserted pose: x, y, z mm; theta deg
        self.gt = np.array(
            [ox * 1000.0, oy * 1000.0, (start_z - target_z) * 1000.0, math.degrees(oth)]
        )
        grip_center_z = start_z + length - self.gel_extent["y"] / 2
        self._place_rigs((xy[0], xy[1]), oth, 0.004, grip_center_z)
        self._make_state(peg, rz, translation, self.assets["fixtures"], self.assets["fixture_poses"])
        self.hole_polygon = peg_polygon(cfg.shape_id, cfg.clearance_mm * 1e-3)

    def step(self, action) -> StepResult:
        self._require_running()
        cfg = self.config
        cmd = clip_action(ActionCommand("fusion", action), self.limits)
        dx_mm, dy_mm, dth_deg, dz_mm = cmd.values
        theta = self.offsets.theta_offset
        dxg, dyg = local_to_global(dx_mm * 1e-3, dy_mm * 1e-3, theta)
        dth = math.radians(dth_deg)
        dz = dz_mm * 1e-3
        self.t += 1
        self._step_solver_iters = 0

        candidate = update_offsets(self.offsets, dxg, dyg, dth, dz)
        violation = check_offset_limits(candidate, self.limits)
        if violation is None and abs(candidate.z_offset) > cfg.z_max_mm * 1e-3:
            violation = "z"
        solver_failed = False
        if violation is None:
            self.offsets = candidate
            self.gt = self.gt + np.array([dxg * 1000.0, dyg * 1000.0, dz * 1000.0, dth_deg])
            n_sub = substep_count_fusion(dxg, dyg, dz, dth, cfg.solver.dt)
            v, omega = substep_velocities(np.array([dxg, dyg, dz]), dth, n_sub, cfg.solver.dt)
            try:
                self._run_substeps(v, omega, n_sub)
            except NonConvergenceError:
                solver_failed = True

        status = self._evaluate(violation, solver_failed)
        e_t = self._error_scalar()
        reward = reward_fusion(self.e_prev, e_t, status, self.t, cfg.max_steps, cfg.step_penalty)
        return self._finish_step(status, e_t, reward)

    def _evaluate(self, violation, solver_failed):
        cfg = self.config
        if violation is not None or solver_failed:
            return STATUS_ERROR
        if (
            abs(self.gt[0]) >= cfg.tau_xy_mm
            or abs(self.gt[1]) >= cfg.tau_xy_mm
            or abs(self.gt[2]) >= cfg.tau_z_fusion_mm
            or abs(self.gt[3]) >= cfg.tau_theta_deg
        ):
            return STATUS_ERROR
        obj = self.state.rigids[0]
        bottom_xy = obj.translation[:2] - self.matching_center
        inside = bool(polygon_contains(self.hole_polygon, bottom_xy[None, :])[0])
        deep_enough = obj.translation[2] <= -cfg.fusion_success_depth_mm * 1e-3
        drifts = self._surface_drifts()
        thresh = cfg.surface_diff_thresh_mm * 1e-3
        if (
            self.t < cfg.max_steps
            and inside
            and deep_enough
            and drifts[0] < thresh
            and drifts[1] < thresh
        ):
            return STATUS_SUCCESS
        if self.t >= cfg.max_steps:
            return STATUS_TIMEOUT
        return STATUS_RUNNING

    def _error_scalar(self):
        return error_fusion(self.gt[0], self.gt[1], self.gt[2], self.gt[3])

    def _gt_vector(self):
        return self.gt

    def _observation(self) -> Observation:
        obs = super()._observation()
        if not self.config.vision:
            return obs
        meshes = []
        for r in self.state.rigids:
            if r.name.startswith("fixture") or r.name == "object":
                meshes.append((r.world_vertices(), r.triangles, r.tri_instance_ids))
        if self.config.include_gels_in_vision:
            for i, d in enumerate(self.state.deformables):
                ids = np.full(len(d.mesh.surface_tris), 5 + i, dtype=np.int64)
                meshes.append((d.positions, d.mesh.surface_tris, ids))
        image = render_depth(meshes, self.camera)
        obs.depth_picture = image.depth.astype(np.float32)
        obs.rgb_picture = render_rgb_tags(image)
        obs.point_cloud = depth_to_pointcloud(image, self.camera)
        return obs

    def _task_diagnostics(self):
        obj = self.state.rigids[0]
        return {"peg_bottom_z_mm": float(obj.translation[2] * 1000.0)}


_ENV_CLASSES = {"peg": PegInsertionEnv, "lock": LockOpeningEnv, "fusion": FusionInsertionEnv}


def make_env(config: EnvConfig) -> TactileEnv:
    return _ENV_CLASSES[config.task](config)
