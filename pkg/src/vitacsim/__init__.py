"""Deterministic tactile-manipulation simulation: FEM gels with barrier
contact, marker-flow sensing, and benchmark insertion environments."""

__version__ = "0.1.0"

from .config import EnvConfig, default_task_config, load_config_file
from .envs import FusionInsertionEnv, LockOpeningEnv, Observation, PegInsertionEnv, StepResult, make_env
from .fem import (
    DeformableBody,
    ElasticModel,
    MaterialParams,
    RigidBody,
    SimState,
    SolverConfig,
    Tether,
    barrier_energy,
    ccd_max_step,
    elastic_energy,
    solve_quasi_static,
)
from .geometry import (
    GelSpec,
    MarkerBinding,
    MarkerGridSpec,
    TetMesh,
    bind_markers,
    generate_gel_mesh,
    load_tet_mesh,
    save_tet_mesh,
)
from .sensor import (
    ContactState,
    MarkerFlow,
    NoiseConfig,
    SensorCamera,
    detect_contact,
    marker_flow_observation,
    marker_world_positions,
    project_to_camera,
    surface_diff,
)
from .depth_camera import CameraModel, DepthImage, PointCloud, depth_to_pointcloud, render_depth, segment_instances

__all__ = [name for name in dir() if not name.startswith("_")]
