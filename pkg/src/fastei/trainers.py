"""Training procedures for measurement-only reconstruction networks.

Six trainers share one network/optimizer harness and differ only in the loss
assembled per sample:

- ``mc``: measurement-consistency loss alone.
- ``ei``: measurement consistency plus an equivariance penalty, with the
  gradient flowing through both arguments of the penalty.
- ``fei``: an inner accelerated-gradient refinement of the current output
  produces detached targets; the network is fitted to those targets plus the
  equivariance penalty on the refined image.
- ``pnp_fei``: the inner refinement is a single proximal-style step through a
  denoiser, with a per-sample running multiplier correcting the anchor.
- ``eqpnp_fei``: same, but the denoiser is conjugated by a second random
  transform each step.
- ``supervised``: plain regression on ground truth (baseline only).

All tensor work is float64. The inner refinements run in numpy on detached
copies, so gradients never flow through them; the ``ei`` trainer is the only
one that needs differentiable operator and transform applications.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch

from . import data as data_mod
from . import groups, linops, metrics, models, solvers
from ._bridge import apply_t, group_apply_t, pinv_t
from .config import ExperimentConfig
from .denoisers import Denoiser, EquivariantDenoiser, get_denoiser
from .errors import ConfigError, DivergenceError
from .groups import GroupAction
from .linops import LinearOperator, MeasurementModel
from .metrics import MetricLog
from .models import ReconstructionNet

TRAINER_KINDS = ("mc", "ei", "fei", "pnp_fei", "eqpnp_fei", "supervised")


@dataclass
class TrainerConfig:
    """Hyperparameters consumed by the step functions."""

    kind: str = "fei"
    alpha: float = 100.0
    lambda_: float = 1.0
    beta: float = 0.1
    eta: float = 0.01
    J: int = 10
    gamma: float = 0.01
    warm_start: bool = False
    denoiser: str = "identity"
    denoiser_weights: Optional[str] = None
    persist_velocity: bool = False
    lr: float = 0.001
    weight_decay: float = 1e-8
    keep_trace: bool = False

    def __post_init__(self):
        if self.kind not in TRAINER_KINDS:
            raise ConfigError(f"unknown trainer kind {self.kind!r}")
        if self.alpha < 0:
            raise ConfigError("alpha must be >= 0")
        if self.lambda_ <= 0:
            raise ConfigError("lambda must be > 0")
        if not 0.0 <= self.beta < 1.0:
            raise ConfigError("beta must lie in [0, 1)")
        if self.eta <= 0:
            raise ConfigError("eta must be > 0")
        if self.J < 0:
            raise ConfigError("J must be >= 0")
        if self.gamma < 0:
            raise ConfigError("gamma must be >= 0")


@dataclass
class LossReport:
    """Scalar losses for one step; total == mc_or_pseudo + alpha * equivariance."""

    mc_or_pseudo: float
    equivariance: float
    total: float


@dataclass
class TrainState:
    """Mutable training state threaded through the step functions."""

    model: ReconstructionNet
    operator: LinearOperator
    config: TrainerConfig
    optimizer: torch.optim.Optimizer
    denoiser: Optional[Denoiser] = None
    step: int = 0
    multipliers: Dict[int, np.ndarray] = field(default_factory=dict)
    latents: Dict[int, np.ndarray] = field(default_factory=dict)
    nag_velocity: Optional[np.ndarray] = None
    trace: List[dict] = field(default_factory=list)
    _last_refresh: Optional[np.ndarray] = None


def make_state(operator: LinearOperator, model: ReconstructionNet,
               config: Optional[TrainerConfig] = None) -> TrainState:
    config = config or TrainerConfig()
    optimizer = torch.optim.Adam(
        model.net.parameters(), lr=config.lr, weight_decay=config.weight_decay
    )
    denoiser = None
    if config.kind in ("pnp_fei", "eqpnp_fei"):
        denoiser = get_denoiser(
            config.denoiser, config.lambda_, weights_path=config.denoiser_weights
        )
    return TrainState(model=model, operator=operator, config=config,
                      optimizer=optimizer, denoiser=denoiser)


# ---------------------------------------------------------------------------
# Shared pieces
# ---------------------------------------------------------------------------

def _tensor(arr: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(np.asarray(arr, dtype=np.float64)))


def _forward_train(state: TrainState, y: np.ndarray) -> torch.Tensor:
    """Differentiable network output on the pseudo-inverse of y (train mode)."""
    x_in = _tensor(state.operator.pinv(np.asarray(y, dtype=np.float64)))
    state.model.net.train()
    return state.model.forward_t(x_in)


def _recon_eval(state: TrainState, y: np.ndarray) -> np.ndarray:
    return models.reconstruct(state.model, np.asarray(y, dtype=np.float64),
                              state.operator)


def _as_actions(action) -> Tuple[GroupAction, ...]:
    if isinstance(action, GroupAction):
        return (action,)
    actions = tuple(action)
    if not actions:
        raise ConfigError("at least one group action is required")
    return actions


def _sum_sq(t: torch.Tensor) -> torch.Tensor:
    return (t * t).sum()


def _check_finite(report: LossReport, step: int):
    if not (math.isfinite(report.total) and math.isfinite(report.mc_or_pseudo)):
        raise DivergenceError(
            f"non-finite training loss at step {step}", iteration=step, step=step
        )


def _optimize(state: TrainState, loss_t: torch.Tensor):
    state.optimizer.zero_grad(set_to_none=True)
    loss_t.backward()
    state.optimizer.step()
    state.step += 1


def _eq_loss_train_forward(state: TrainState, x2_np: np.ndarray) -> Tuple[torch.Tensor, torch.Tensor]:
    """||x2 - G(A x2)||^2 with x2 held constant; gradient reaches theta only
    through the trailing network forward."""
    y2 = state.operator.apply(x2_np)
    x3_t = _forward_train(state, y2)
    x2_t = _tensor(x2_np)
    return _sum_sq(x2_t - x3_t), x3_t


# ---------------------------------------------------------------------------
# Step functions
# ---------------------------------------------------------------------------

def mc_only_step(state: TrainState, y: np.ndarray) -> LossReport:
    """Measurement-consistency training alone (degenerate baseline)."""
    y_t = _tensor(y)
    x0_t = _forward_train(state, y)
    mc_t = 0.5 * _sum_sq(apply_t(state.operator, x0_t) - y_t)
    _optimize(state, mc_t)
    report = LossReport(float(mc_t.detach()), 0.0, float(mc_t.detach()))
    _check_finite(report, state.step)
    return report


def supervised_step(state: TrainState, x_truth: np.ndarray, y: np.ndarray) -> LossReport:
    """Regression on ground truth; reference baseline, not measurement-only."""
    x0_t = _forward_train(state, y)
    loss_t = _sum_sq(x0_t - _tensor(x_truth))
    _optimize(state, loss_t)
    value = float(loss_t.detach())
    report = LossReport(value, 0.0, value)
    _check_finite(report, state.step)
    return report


def ei_step(state: TrainState, y: np.ndarray,
            action: Union[GroupAction, Sequence[GroupAction]]) -> LossReport:
    """Measurement consistency plus equivariance, fully differentiated.

    The equivariance penalty compares T_g G(y) with G(A T_g G(y)); both sides
    carry gradient, so the operator and transform applications go through the
    autograd bridges.
    """
    cfg = state.config
    actions = _as_actions(action)
    y_t = _tensor(y)
    x0_t = _forward_train(state, y)
    mc_t = 0.5 * _sum_sq(apply_t(state.operator, x0_t) - y_t)
    eq_t = x0_t.new_zeros(())
    for act in actions:
        x2_t = group_apply_t(act, x0_t)
        y2_t = apply_t(state.operator, x2_t)
        x3_t = state.model.forward_t(pinv_t(state.operator, y2_t))
        eq_t = eq_t + _sum_sq(x2_t - x3_t)
    eq_t = eq_t / len(actions)
    total_t = mc_t + cfg.alpha * eq_t
    _optimize(state, total_t)
    report = LossReport(float(mc_t.detach()), float(eq_t.detach()),
                        float(total_t.detach()))
    _check_finite(report, state.step)
    return report


def fei_step(state: TrainState, y: np.ndarray,
             action: Union[GroupAction, Sequence[GroupAction]]) -> LossReport:
    """Fast variant: inner NAG refinement produces detached targets.

    x0 = G(y) anchors a quadratic data-fit problem solved approximately by J
    accelerated gradient iterations from u = x0. The refined x1 (and its
    transforms) are constants in the network loss
    ``||x0 - x1||^2 + alpha * ||x2 - G(A x2)||^2``.
    """
    cfg = state.config
    actions = _as_actions(action)
    y_np = np.asarray(y, dtype=np.float64)
    x0_t = _forward_train(state, y_np)
    x0_np = x0_t.detach().numpy().copy()

    problem = solvers.QuadraticSubproblem(
        operator=state.operator, y=y_np, anchor=x0_np, lambda_=cfg.lambda_
    )
    v0 = state.nag_velocity if cfg.persist_velocity else None
    x1_np, v_np = solvers.nag_minimize(
        problem.gradient, cfg.J, x0_np, v0=v0, beta=cfg.beta, eta=cfg.eta
    )
    if cfg.persist_velocity:
        state.nag_velocity = v_np

    pseudo_t = _sum_sq(x0_t - _tensor(x1_np))
    eq_t = x0_t.new_zeros(())
    for act in actions:
        x2_np = groups.apply(act, x1_np)
        term_t, _ = _eq_loss_train_forward(state, x2_np)
        eq_t = eq_t + term_t
    eq_t = eq_t / len(actions)
    total_t = pseudo_t + cfg.alpha * eq_t
    _optimize(state, total_t)
    report = LossReport(float(pseudo_t.detach()), float(eq_t.detach()),
                        float(total_t.detach()))
    _check_finite(report, state.step)
    return report


def _pnp_core(state: TrainState, y: np.ndarray, sample_id: int,
              actions: Tuple[GroupAction, ...], denoiser: Denoiser) -> LossReport:
    cfg = state.config
    y_np = np.asarray(y, dtype=np.float64)
    x0_t = _forward_train(state, y_np)
    x0_np = x0_t.detach().numpy().copy()

    key = int(sample_id)
    if key not in state.multipliers:
        state.multipliers[key] = np.zeros_like(x0_np)
    multiplier = state.multipliers[key]

    problem = solvers.QuadraticSubproblem(
        operator=state.operator, y=y_np, anchor=x0_np, lambda_=cfg.lambda_
    )
    # warm start keeps the latent iterate alive between visits to a sample,
    # so the inner descent accumulates instead of restarting from G(y)
    u_start = x0_np
    if cfg.warm_start and key in state.latents:
        u_start = state.latents[key]
    x1_np = solvers.pnp_latent_step(u_start, problem, multiplier, cfg.gamma, denoiser)
    if cfg.warm_start:
        state.latents[key] = x1_np.copy()

    pseudo_t = _sum_sq(x0_t + _tensor(multiplier) - _tensor(x1_np))
    eq_t = x0_t.new_zeros(())
    for act in actions:
        x2_np = groups.apply(act, x1_np)
        term_t, _ = _eq_loss_train_forward(state, x2_np)
        eq_t = eq_t + term_t
    eq_t = eq_t / len(actions)
    total_t = pseudo_t + cfg.alpha * eq_t
    _optimize(state, total_t)

    # multiplier refresh uses the network AFTER the parameter update
    refreshed = _recon_eval(state, y_np)
    state._last_refresh = refreshed
    new_multiplier = solvers.update_multiplier(multiplier, x1_np, refreshed)
    state.multipliers[key] = new_multiplier
    if cfg.keep_trace:
        state.trace.append({
            "step": state.step,
            "sample_id": key,
            "multiplier_before": multiplier.copy(),
            "x1": x1_np.copy(),
            "refresh": refreshed.copy(),
            "multiplier_after": new_multiplier.copy(),
            "gap": float(np.linalg.norm(x1_np - refreshed)),
        })

    report = LossReport(float(pseudo_t.detach()), float(eq_t.detach()),
                        float(total_t.detach()))
    _check_finite(report, state.step)
    return report


def pnp_fei_step(state: TrainState, y: np.ndarray, sample_id: int,
                 action: Union[GroupAction, Sequence[GroupAction]]) -> LossReport:
    """Plug-and-play variant: one denoised proximal step with a running
    per-sample multiplier. First visit to a sample starts its multiplier at
    zero; after the parameter update the multiplier absorbs the gap between
    the refined image and the freshly reconstructed one. With
    ``warm_start`` the latent iterate also persists per sample, otherwise
    each visit restarts the descent from the current network output."""
    if state.denoiser is None:
        state.denoiser = get_denoiser(state.config.denoiser, state.config.lambda_,
                                      weights_path=state.config.denoiser_weights)
    return _pnp_core(state, y, sample_id, _as_actions(action), state.denoiser)


def eqpnp_fei_step(state: TrainState, y: np.ndarray, sample_id: int,
                   action: Union[GroupAction, Sequence[GroupAction]],
                   action2: GroupAction) -> LossReport:
    """PnP variant with the denoiser conjugated by a second random transform:
    the image is transformed, denoised, and transformed back."""
    if state.denoiser is None:
        state.denoiser = get_denoiser(state.config.denoiser, state.config.lambda_,
                                      weights_path=state.config.denoiser_weights)
    wrapped = EquivariantDenoiser(base=state.denoiser, action=action2)
    return _pnp_core(state, y, sample_id, _as_actions(action), wrapped)


STEP_DISPATCH = {
    "mc": mc_only_step,
    "ei": ei_step,
    "fei": fei_step,
    "pnp_fei": pnp_fei_step,
    "eqpnp_fei": eqpnp_fei_step,
    "supervised": supervised_step,
}


# ---------------------------------------------------------------------------
# Full training loop
# ---------------------------------------------------------------------------

def cosine_lr(base_lr: float, epoch: int, total_epochs: int) -> float:
    """Constant for the first half of training, then scaled by the cosine
    factor 0.5 * (1 + cos(pi * epoch / total_epochs))."""
    if total_epochs <= 0:
        raise ConfigError("total_epochs must be >= 1")
    if epoch < total_epochs / 2:
        return base_lr
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * epoch / total_epochs))


def build_operator(cfg: ExperimentConfig) -> LinearOperator:
    phys = cfg.physics
    n = cfg.data.size
    if phys.kind == "radon":
        angle_set = list(phys.angle_set) if phys.angle_set else None
        return linops.make_radon_operator(
            n, phys.num_angles, angle_set=angle_set, normalize=phys.normalize
        )
    if phys.kind == "inpainting":
        rng = np.random.default_rng(phys.mask_seed)
        mask = rng.random((n, n)) < phys.mask_keep
        return linops.make_inpainting_operator(mask)
    if phys.kind == "gaussian":
        return linops.make_gaussian_operator(n, phys.num_measurements,
                                             seed=phys.mask_seed)
    raise ConfigError(f"unknown physics kind {phys.kind!r}")


def trainer_config_from_experiment(cfg: ExperimentConfig,
                                   kind: Optional[str] = None) -> TrainerConfig:
    return TrainerConfig(
        kind=kind or cfg.trainer.kind,
        alpha=cfg.trainer.alpha,
        lambda_=cfg.trainer.lambda_,
        beta=cfg.nag.beta,
        eta=cfg.nag.eta,
        J=cfg.nag.J,
        gamma=cfg.pnp.gamma,
        warm_start=cfg.pnp.warm_start,
        denoiser=cfg.denoiser.name,
        denoiser_weights=cfg.denoiser.weights_path or None,
        persist_velocity=cfg.nag.persist_velocity,
        lr=cfg.optim.lr,
        weight_decay=cfg.optim.weight_decay,
    )


def _model_spec(cfg: ExperimentConfig) -> dict:
    spec = {"arch": cfg.model.arch, "image_size": cfg.data.size}
    if cfg.model.arch == "small_cnn":
        spec["channels"] = cfg.model.channels
    elif cfg.model.arch == "unet_residual":
        spec["channels"] = list(cfg.model.unet_channels)
    elif cfg.model.arch == "linear":
        spec["init"] = cfg.model.init
    return spec


def _sample_actions(cfg: ExperimentConfig, step: int, salt: int = 0):
    g = cfg.group
    angles = list(g.angles) if g.angles else None
    out = []
    for j in range(g.samples):
        seed = data_mod.sample_seed(cfg.seed.group, step * 64 + salt * 8 + j)
        out.append(groups.sample_group(g.family, seed, angles=angles,
                                       max_shift=g.max_shift))
    return out


def _ema_state_update(ema_sd: Optional[dict], net: torch.nn.Module,
                      decay: float) -> dict:
    current = net.state_dict()
    if ema_sd is None:
        return {k: v.detach().clone() for k, v in current.items()}
    for k, v in current.items():
        if torch.is_floating_point(v):
            ema_sd[k].mul_(decay).add_(v.detach(), alpha=1.0 - decay)
        else:
            ema_sd[k] = v.detach().clone()
    return ema_sd


def _save_checkpoint(state: TrainState, path: Path, epoch: int,
                     ema_sd: Optional[dict], cfg: ExperimentConfig):
    extra = {
        "epoch": epoch,
        "optimizer_state_dict": state.optimizer.state_dict(),
        "multipliers": {k: v for k, v in state.multipliers.items()},
        "latents": {k: v for k, v in state.latents.items()},
        "nag_velocity": state.nag_velocity,
        "config_hash": cfg.hash(),
        "trainer_kind": state.config.kind,
    }
    if ema_sd is not None:
        extra["ema_state_dict"] = {k: v.clone() for k, v in ema_sd.items()}
    models.save_checkpoint(state.model, path, step=state.step, extra=extra)


def run_training(cfg: ExperimentConfig, dataset: data_mod.ImageDataset,
                 out_dir: Optional[Union[str, Path]] = None,
                 kind: Optional[str] = None,
                 run_id: Optional[str] = None) -> Tuple[TrainState, MetricLog]:
    """Train one network on the measurements of ``dataset`` per the config.

    Ground-truth images are consulted only to log evaluation metrics (and by
    the supervised baseline); every unsupervised step function receives
    measurements alone. Returns the final state and the per-step metric log.
    On divergence a resumable checkpoint is written (when ``out_dir`` is set)
    before the error propagates.
    """
    cfg.validate()
    if cfg.run.torch_threads > 0:
        torch.set_num_threads(cfg.run.torch_threads)
    kind = kind or cfg.trainer.kind

    operator = build_operator(cfg)
    noise_model = MeasurementModel(operator=operator, noise_std=cfg.data.noise_std)
    mset = data_mod.build_measurements(dataset, noise_model, seed=cfg.seed.noise)

    torch.manual_seed(cfg.seed.model)
    model = models.build_model(_model_spec(cfg), seed=cfg.seed.model)
    tcfg = trainer_config_from_experiment(cfg, kind=kind)
    state = make_state(operator, model, tcfg)

    log = MetricLog(run_id=run_id or f"{kind}", method=kind,
                    config_hash=cfg.hash())
    ema_images: Dict[int, np.ndarray] = {}
    ema_sd: Optional[dict] = None
    use_weight_ema = cfg.ema.weights_decay > 0.0
    truth = {sid: dataset.images[i] for i, sid in enumerate(dataset.ids)}
    pairs = list(zip(mset.ids, mset.measurements))

    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)

    train_seconds = 0.0
    epochs = cfg.optim.epochs
    try:
        for epoch in range(epochs):
            lr = cosine_lr(cfg.optim.lr, epoch, epochs)
            for pg in state.optimizer.param_groups:
                pg["lr"] = lr
            for sid, y in pairs:
                actions = _sample_actions(cfg, state.step)
                t0 = time.perf_counter()
                if kind == "mc":
                    report = mc_only_step(state, y)
                elif kind == "supervised":
                    report = supervised_step(state, truth[sid], y)
                elif kind == "ei":
                    report = ei_step(state, y, actions)
                elif kind == "fei":
                    report = fei_step(state, y, actions)
                elif kind == "pnp_fei":
                    report = pnp_fei_step(state, y, sid, actions)
                elif kind == "eqpnp_fei":
                    action2 = _sample_actions(cfg, state.step, salt=1)[0]
                    report = eqpnp_fei_step(state, y, sid, actions, action2)
                else:
                    raise ConfigError(f"unknown trainer kind {kind!r}")
                train_seconds += time.perf_counter() - t0

                if use_weight_ema:
                    ema_sd = _ema_state_update(ema_sd, model.net,
                                               cfg.ema.weights_decay)

                if state._last_refresh is not None:
                    recon = state._last_refresh
                    state._last_refresh = None
                else:
                    recon = _recon_eval(state, y)
                ema_images[sid] = metrics.ema_update(
                    ema_images.get(sid), recon, cfg.ema.decay
                )
                x_true = truth[sid]
                psnr_raw = metrics.psnr(x_true, recon)
                psnr_ema = metrics.psnr(x_true, ema_images[sid])
                log.append(
                    step=state.step,
                    epoch=epoch,
                    wall_time_s=train_seconds,
                    loss_mc=report.mc_or_pseudo,
                    loss_eq=report.equivariance,
                    loss_total=report.total,
                    mse_train=metrics.mse(x_true, ema_images[sid]),
                    psnr_raw=psnr_raw,
                    psnr_ema=psnr_ema,
                    psnr_train=psnr_ema,
                )
            if (out_path is not None and cfg.run.checkpoint_every > 0
                    and (epoch + 1) % cfg.run.checkpoint_every == 0):
                _save_checkpoint(state, out_path / "checkpoint.pt", epoch,
                                 ema_sd, cfg)
    except DivergenceError:
        if out_path is not None:
            _save_checkpoint(state, out_path / "checkpoint_diverged.pt",
                             epoch, ema_sd, cfg)
        raise

    if out_path is not None:
        _save_checkpoint(state, out_path / "checkpoint.pt", epochs - 1,
                         ema_sd, cfg)
    state.ema_state_dict = ema_sd  # type: ignore[attr-defined]
    return state, log


def ema_model(state_or_model, ema_sd: Optional[dict]) -> ReconstructionNet:
    """Copy of the model with EMA weights loaded (or the model itself when
    no EMA state exists)."""
    model = state_or_model.model if isinstance(state_or_model, TrainState) else state_or_model
    if ema_sd is None:
        return model
    clone = models.build_model(model.spec, seed=model.seed)
    clone.net.load_state_dict({k: v.clone() for k, v in ema_sd.items()})
    return clone
