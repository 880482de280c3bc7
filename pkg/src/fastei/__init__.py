"""fastei: measurement-only training of image reconstruction networks.

The package trains a reconstruction network G(y) = net(A^+ y) from
measurements y = A x + noise alone, using group-transform equivariance as the
training signal, and provides accelerated variants that refine the network
output with a few inner solver iterations (NAG) or a denoiser step with a
running multiplier (plug-and-play). A sparse-view tomography benchmark at
configurable scale ties it together.

Modules: linops (operators), groups (transforms), solvers (inner problems),
denoisers, models (networks), trainers (losses and the loop), data
(phantoms/measurements), metrics (PSNR/EMA/logging), config, cli.
"""

from . import (cli, config, data, denoisers, groups, linops, metrics, models,
               solvers, trainers)
from .config import ExperimentConfig, apply_overrides, load_config
from .data import ImageDataset, MeasurementSet, build_measurements, load_dataset
from .denoisers import Denoiser, EquivariantDenoiser, get_denoiser
from .errors import ConfigError, DivergenceError, IngestionError, SolverError
from .groups import (GroupAction, apply, apply_inverse, flip_action,
                     identity_action, rotation_action, sample_group,
                     shift_action)
from .linops import (LinearOperator, MeasurementModel, make_dense_operator,
                     make_gaussian_operator, make_inpainting_operator,
                     make_radon_operator, measure, operator_norm)
from .metrics import MetricLog, ema_update, mse, psnr, summarize
from .models import ReconstructionNet, build_model, load_checkpoint, reconstruct, save_checkpoint
from .solvers import (NagState, QuadraticSubproblem, nag_minimize,
                      pnp_latent_step, solve_quadratic_exact, update_multiplier)
from .trainers import (LossReport, TrainerConfig, TrainState, ei_step,
                       eqpnp_fei_step, fei_step, make_state, mc_only_step,
                       pnp_fei_step, run_training, supervised_step)

__version__ = "0.1.0"

__all__ = [
    "ExperimentConfig", "apply_overrides", "load_config",
    "ImageDataset", "MeasurementSet", "build_measurements", "load_dataset",
    "Denoiser", "EquivariantDenoiser", "get_denoiser",
    "ConfigError", "DivergenceError", "IngestionError", "SolverError",
    "GroupAction", "apply", "apply_inverse", "flip_action", "identity_action",
    "rotation_action", "sample_group", "shift_action",
    "LinearOperator", "MeasurementModel", "make_dense_operator",
    "make_gaussian_operator", "make_inpainting_operator",
    "make_radon_operator", "measure", "operator_norm",
    "MetricLog", "ema_update", "mse", "psnr", "summarize",
    "ReconstructionNet", "build_model", "load_checkpoint", "reconstruct",
    "save_checkpoint",
    "NagState", "QuadraticSubproblem", "nag_minimize", "pnp_latent_step",
    "solve_quadratic_exact", "update_multiplier",
    "LossReport", "TrainerConfig", "TrainState", "ei_step", "eqpnp_fei_step",
    "fei_step", "make_state", "mc_only_step", "pnp_fei_step", "run_training",
    "supervised_step",
    "__version__",
]
