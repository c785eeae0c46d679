from .elasticity import MaterialParams, ElasticModel, elastic_energy
from .solver import (
    DeformableBody,
    RigidBody,
    SimState,
    SolverConfig,
    Tether,
    barrier_energy,
    ccd_max_step,
    solve_quasi_static,
)
from .barrier import barrier_value, barrier_grad, barrier_hess

__all__ = [
    "MaterialParams",
    "ElasticModel",
    "elastic_energy",
    "DeformableBody",
    "RigidBody",
    "SimState",
    "SolverConfig",
    "Tether",
    "solve_quasi_static",
    "barrier_energy",
    "ccd_max_step",
    "barrier_value",
    "barrier_grad",
    "barrier_hess",
]
