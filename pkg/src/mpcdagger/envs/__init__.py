from .base import FAILURE_COST, DivergenceError, Task, is_failure, rk4, wrap_angle
from .cartpole import CartPoleParams, CartPoleSwingUp, cartpole_derivatives, cartpole_energy
from .quadcopter import (QuadParams, QuadTracking, TargetTrajectory, make_target,
                         quad_derivatives)

TASKS = ("cartpole", "quad-circle", "quad-fig8")


def make_task(name: str, substeps: int | None = None, **param_overrides) -> Task:
    """Build a task by its config name with optional parameter overrides."""
    extra = {} if substeps is None else {"substeps": substeps}
    if name == "cartpole":
        return CartPoleSwingUp(CartPoleParams(**param_overrides), **extra)
    if name in ("quad-circle", "quad-fig8"):
        kind = "circle" if name == "quad-circle" else "figure8"
        return QuadTracking(kind, QuadParams(**param_overrides), **extra)
    raise ValueError(f"unknown task {name!r}; expected one of {TASKS}")


__all__ = [
    "FAILURE_COST", "TASKS", "CartPoleParams", "CartPoleSwingUp", "DivergenceError",
    "QuadParams", "QuadTracking", "TargetTrajectory", "Task", "cartpole_derivatives",
    "cartpole_energy", "is_failure", "make_target", "make_task", "quad_derivatives",
    "rk4", "wrap_angle",
]
