"""Reconstruction networks G_theta.

Every network maps an image to an image; the measurement-domain composite
G_theta(y) used throughout training is network(pinv(y)), i.e. the network
always consumes the back-projected image. Three architectures are
registered: ``unet_residual`` (4-depth residual U-Net, channels
64/128/256/512), ``small_cnn`` (3 conv layers, 16 channels), and ``linear``
(one trainable n^2 x n^2 map) for oracle tests. All networks run in double
precision so solver oracles and gradient checks are not limited by float32.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
import torch
import torch.nn as nn

from .errors import ConfigError
from .linops import LinearOperator

Array = np.ndarray

ARCHITECTURES = ("unet_residual", "small_cnn", "linear")


class _ResBlock(nn.Module):
    """Two 3x3 Conv-BN-ReLU layers with an identity shortcut."""

    def __init__(self, cin: int, cout: int):
        super().__init__()
        self.conv1 = nn.Conv2d(cin, cout, 3, padding=1)
        self.bn1 = nn.BatchNorm2d(cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, padding=1)
        self.bn2 = nn.BatchNorm2d(cout)
        self.act = nn.ReLU(inplace=True)
        self.shortcut = nn.Conv2d(cin, cout, 1) if cin != cout else nn.Identity()

    def forward(self, x):
        h = self.act(self.bn1(self.conv1(x)))
        h = self.bn2(self.conv2(h))
        return self.act(h + self.shortcut(x))


class UNetRes(nn.Module):
    """Residual U-Net: symmetric encoder-decoder with long skip connections.

    The output is input + correction (global residual), so the identity is
    trivially representable and early training starts from the FBP image.
    """

    def __init__(self, channels: Tuple[int, ...] = (64, 128, 256, 512)):
        super().__init__()
        c1, c2, c3, c4 = channels
        self.enc1 = _ResBlock(1, c1)
        self.enc2 = _ResBlock(c1, c2)
        self.enc3 = _ResBlock(c2, c3)
        self.bottleneck = _ResBlock(c3, c4)
        self.pool = nn.MaxPool2d(2)
        self.up3 = nn.ConvTranspose2d(c4, c3, 2, stride=2)
        self.dec3 = _ResBlock(c4, c3)
        self.up2 = nn.ConvTranspose2d(c3, c2, 2, stride=2)
        self.dec2 = _ResBlock(c3, c2)
        self.up1 = nn.ConvTranspose2d(c2, c1, 2, stride=2)
        self.dec1 = _ResBlock(c2, c1)
        self.head = nn.Conv2d(c1, 1, 1)

    def forward(self, x):
        e1 = self.enc1(x)
        e2 = self.enc2(self.pool(e1))
        e3 = self.enc3(self.pool(e2))
        b = self.bottleneck(self.pool(e3))
        d3 = self.dec3(torch.cat([self.up3(b), e3], dim=1))
        d2 = self.dec2(torch.cat([self.up2(d3), e2], dim=1))
        d1 = self.dec1(torch.cat([self.up1(d2), e1], dim=1))
        return x + self.head(d1)


class SmallCNN(nn.Module):
    """3 conv layers, 16 channels, global residual output."""

    def __init__(self, channels: int = 16):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(1, channels, 3, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(channels, channels, 3, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(channels, 1, 3, padding=1),
        )

    def forward(self, x):
        return x + self.body(x)


class LinearNet(nn.Module):
    """A single trainable n^2 x n^2 linear map on flattened images."""

    def __init__(self, image_size: int, init: str = "random"):
        super().__init__()
        n = image_size * image_size
        self.image_size = image_size
        self.map = nn.Linear(n, n, bias=False)
        if init == "identity":
            with torch.no_grad():
                self.map.weight.copy_(torch.eye(n))
        elif init != "random":
            raise ConfigError(f"linear init must be 'identity' or 'random', got {init!r}")

    def forward(self, x):
        shape = x.shape
        flat = x.reshape(shape[0], -1)
        return self.map(flat).reshape(shape)


class CnnDenoiserNet(nn.Module):
    """Residual noise-predicting CNN used by the optional pretrained denoiser."""

    def __init__(self, channels: int = 32, depth: int = 5):
        super().__init__()
        layers = [nn.Conv2d(1, channels, 3, padding=1), nn.ReLU(inplace=True)]
        for _ in range(depth - 2):
            layers += [nn.Conv2d(channels, channels, 3, padding=1), nn.ReLU(inplace=True)]
        layers.append(nn.Conv2d(channels, 1, 3, padding=1))
        self.body = nn.Sequential(*layers)

    def forward(self, x):
        return x - self.body(x)


@dataclass
class ReconstructionNet:
    """An architecture name, its torch module, and the spec that built it."""

    arch: str
    net: nn.Module
    spec: dict
    seed: int

    def parameters(self):
        return self.net.parameters()

    def forward_t(self, img: torch.Tensor) -> torch.Tensor:
        """Image-space forward pass on a 2-D tensor (adds/strips NCHW dims)."""
        return self.net(img[None, None])[0, 0]


def _normalize_spec(spec: Union[str, dict]) -> dict:
    if isinstance(spec, str):
        spec = {"arch": spec}
    spec = dict(spec)
    arch = spec.get("arch")
    if arch not in ARCHITECTURES:
        raise ConfigError(f"unknown architecture {arch!r}, expected one of {ARCHITECTURES}")
    return spec


def build_model(spec: Union[str, dict], seed: int) -> ReconstructionNet:
    """Construct a seeded, double-precision reconstruction network."""
    spec = _normalize_spec(spec)
    torch.manual_seed(seed)
    arch = spec["arch"]
    if arch == "unet_residual":
        net = UNetRes(tuple(spec.get("channels", (64, 128, 256, 512))))
    elif arch == "small_cnn":
        net = SmallCNN(int(spec.get("channels", 16)))
    else:
        size = spec.get("image_size")
        if size is None:
            raise ConfigError("linear architecture requires spec['image_size']")
        net = LinearNet(int(size), init=spec.get("init", "random"))
    net = net.double()
    return ReconstructionNet(arch=arch, net=net, spec=spec, seed=seed)


def reconstruct(model: ReconstructionNet, y: Array, operator: LinearOperator) -> Array:
    """G_theta(y) = network(pinv(y)) in evaluation mode, as a numpy image."""
    x_in = operator.pinv(operator.check_out(y))
    was_training = model.net.training
    model.net.eval()
    with torch.no_grad():
        out = model.forward_t(torch.from_numpy(np.ascontiguousarray(x_in)))
    if was_training:
        model.net.train()
    return out.numpy()


def param_checksum(model: ReconstructionNet) -> float:
    """Deterministic scalar digest of all parameters."""
    total = 0.0
    for p in model.net.parameters():
        total += float(p.detach().double().abs().sum())
    return total


def save_checkpoint(model: ReconstructionNet, path, step: int, extra: Optional[dict] = None) -> None:
    payload = {
        "arch_spec": model.spec,
        "seed": model.seed,
        "state_dict": model.net.state_dict(),
        "step": step,
    }
    if extra:
        payload.update(extra)
    torch.save(payload, path)


def load_checkpoint(path) -> Tuple[ReconstructionNet, int, dict]:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    model = build_model(payload["arch_spec"], payload["seed"])
    model.net.load_state_dict(payload["state_dict"])
    extra = {k: v for k, v in payload.items() if k not in ("arch_spec", "seed", "state_dict", "step")}
    return model, int(payload["step"]), extra
