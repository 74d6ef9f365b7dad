"""Imitation learning of MPC policies with DAgger, an MPPI expert and PI-Net."""

from .dagger import BetaSchedule, Dataset, mpc_dagger_iteration, run_dagger, train_policy, vanilla_dagger_iteration
from .envs import make_task
from .mppi import MPPIConfig, MPPIExpert, default_mppi_config, mppi_update, shift_warm_start
from .pinet import PiNet
from .policies import make_policy

__version__ = "0.1.0"
