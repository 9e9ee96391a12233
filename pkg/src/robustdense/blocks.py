"""Building blocks: SE gating, dense stages, pixel-shuffle upsampling, fusion heads."""

import math

import torch
import torch.nn.functional as F
from torch import nn

from .config import SPECTRAL_CHANNELS, ModelConfig
from .errors import ConfigError, NumericsError, ShapeError


def pixel_shuffle(x: torch.Tensor, r: int) -> torch.Tensor:
    """Rearrange (B, C*r^2, H, W) -> (B, C, H*r, W*r).

    out[b, c, h*r + i, w*r + j] == x[b, c*r^2 + i*r + j, h, w]
    """
    b, c, h, w = x.shape
    if c % (r * r) != 0:
        raise ShapeError(f"pixel_shuffle needs channels divisible by r^2={r * r}, got {c}")
    x = x.reshape(b, c // (r * r), r, r, h, w)
    x = x.permute(0, 1, 4, 2, 5, 3)
    return x.reshape(b, c // (r * r), h * r, w * r)


def pixel_unshuffle(x: torch.Tensor, r: int) -> torch.Tensor:
    """Inverse of :func:`pixel_shuffle`."""
    b, c, h, w = x.shape
    if h % r != 0 or w % r != 0:
        raise ShapeError(f"pixel_unshuffle needs spatial dims divisible by r={r}, got {h}x{w}")
    x = x.reshape(b, c, h // r, r, w // r, r)
    x = x.permute(0, 1, 3, 5, 2, 4)
    return x.reshape(b, c * r * r, h // r, w // r)


def make_group_norm(channels: int, groups: int) -> nn.GroupNorm:
    # Intra-block concat widths need not divide the configured group count.
    return nn.GroupNorm(math.gcd(groups, channels), channels)


def check_finite(x: torch.Tensor, where: str):
    if not torch.isfinite(x).all():
        raise NumericsError(f"non-finite values in {where}")


class SELayer(nn.Module):
    """Squeeze-and-excitation channel gate: pool -> FC -> ReLU -> FC -> sigmoid."""

    def __init__(self, channels: int, reduction: int):
        super().__init__()
        if reduction < 1 or reduction > channels:
            raise ConfigError(f"se reduction {reduction} must be in [1, channels={channels}]")
        self.fc1 = nn.Linear(channels, channels // reduction)
        self.fc2 = nn.Linear(channels // reduction, channels)

    def weights(self, x: torch.Tensor) -> torch.Tensor:
        """Per-channel gates in (0, 1), shape (B, C)."""
        check_finite(x, "SELayer input")
        y = x.mean(dim=(2, 3))
        y = F.relu(self.fc1(y))
        return torch.sigmoid(self.fc2(y))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        w = self.weights(x)
        return x * w[:, :, None, None]


class DenseBlock(nn.Module):
    """DenseNet-style stack: each layer sees the concat of all previous outputs."""

    def __init__(self, in_channels: int, growth: int, num_layers: int, norm_groups: int):
        super().__init__()
        self.layers = nn.ModuleList()
        c = in_channels
        for _ in range(num_layers):
            self.layers.append(nn.Sequential(
                make_group_norm(c, norm_groups),
                nn.ReLU(),
                nn.Conv2d(c, growth, kernel_size=3, padding=1),
            ))
            c += growth
        self.out_channels = c

    def forward(self, x):
        for layer in self.layers:
            x = torch.cat([x, layer(x)], dim=1)
        return x


class DenseStage(nn.Module):
    """One encoder stage: optional stem (stage 1) or stride-2 pool (stages 2-6),
    then a dense block and a 1x1 transition to the scheduled channel count."""

    def __init__(self, stage_index: int, cfg: ModelConfig, in_channels: int = SPECTRAL_CHANNELS):
        super().__init__()
        if not 1 <= stage_index <= len(cfg.scaled_channels):
            raise ConfigError(f"stage_index {stage_index} out of range")
        sched = cfg.scaled_channels
        out = sched[stage_index - 1]
        self.stage_index = stage_index
        if stage_index == 1:
            self.stem = nn.Sequential(
                nn.Conv2d(in_channels, out, kernel_size=3, padding=1),
                make_group_norm(out, cfg.norm_groups),
                nn.ReLU(),
            )
            self.pool = None
            block_in = out
        else:
            self.stem = None
            self.pool = nn.AvgPool2d(2)
            block_in = sched[stage_index - 2]
        growth = cfg.growth_for_stage(stage_index)
        self.block = DenseBlock(block_in, growth, cfg.layers_per_dense_block, cfg.norm_groups)
        self.transition = nn.Sequential(
            make_group_norm(self.block.out_channels, cfg.norm_groups),
            nn.ReLU(),
            nn.Conv2d(self.block.out_channels, out, kernel_size=1),
        )
        self.out_channels = out

    def body(self, x):
        """Everything after the stem: pool (stages 2-6), dense block, transition."""
        if self.pool is not None:
            h, w = x.shape[-2:]
            if h % 2 or w % 2:
                raise ShapeError(
                    f"stage {self.stage_index} needs spatial dims divisible by 2, got {h}x{w}"
                )
            x = self.pool(x)
        return self.transition(self.block(x))

    def forward(self, x):
        if self.stem is not None:
            x = self.stem(x)
        return self.body(x)


class UpBlock(nn.Module):
    """Deep/shallow fusion followed by pixel-shuffle upsampling.

    fused = sigmoid(a) * conv3x3(cat(deep, shallow)) + (1 - sigmoid(a)) * proj1x1(deep)
    out   = pixel_shuffle(cat(deep, fused), r)

    With ``plain=True`` the fusion path is dropped (fused = proj1x1(deep)), which
    reduces the block to a bare pixel shuffle of projected features.
    """

    def __init__(self, deep_channels: int, shallow_channels: int,
                 fused_channels: int | None = None, upscale: int = 2, plain: bool = False):
        super().__init__()
        fused = deep_channels if fused_channels is None else fused_channels
        if fused < 1:
            raise ConfigError(f"fused width must be >= 1, got {fused}")
        r2 = upscale * upscale
        if (deep_channels + fused) % r2 != 0:
            raise ShapeError(
                f"deep+fused channels {deep_channels + fused} not divisible by r^2={r2}"
            )
        self.upscale = upscale
        self.plain = plain
        self.proj = nn.Conv2d(deep_channels, fused, kernel_size=1)
        if not plain:
            self.fuse_conv = nn.Conv2d(deep_channels + shallow_channels, fused,
                                       kernel_size=3, padding=1)
            self.alpha_raw = nn.Parameter(torch.zeros(()))  # sigmoid(0) = 0.5
        self.out_channels = (deep_channels + fused) // r2

    @property
    def alpha(self) -> torch.Tensor:
        return torch.sigmoid(self.alpha_raw)

    def forward(self, deep, shallow=None):
        if self.plain:
            fused = self.proj(deep)
        else:
            if shallow is None:
                raise ShapeError("UpBlock needs a shallow input unless built with plain=True")
            if shallow.shape[-2:] != deep.shape[-2:]:
                raise ShapeError(
                    f"shallow spatial {tuple(shallow.shape[-2:])} != deep {tuple(deep.shape[-2:])}"
                )
            a = self.alpha
            fused = a * self.fuse_conv(torch.cat([deep, shallow], dim=1)) + (1 - a) * self.proj(deep)
        return pixel_shuffle(torch.cat([deep, fused], dim=1), self.upscale)


class SEMixBlock(nn.Module):
    """Adds SE-reweighted DSM features onto the trunk features."""

    def __init__(self, channels: int, reduction: int):
        super().__init__()
        self.se = SELayer(channels, reduction)

    def forward(self, dsm_feat, trunk_feat):
        if dsm_feat.shape != trunk_feat.shape:
            raise ShapeError(
                f"dsm features {tuple(dsm_feat.shape)} != trunk features {tuple(trunk_feat.shape)}"
            )
        return trunk_feat + self.se(dsm_feat)


class SConvHead(nn.Module):
    """Per-category scoring: each class owns an SE gate and a convolution.

    x_i = conv_i(se_i(C) + S); logits = cat(x_1 .. x_K)
    """

    def __init__(self, channels: int, num_classes: int, reduction: int):
        super().__init__()
        if num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {num_classes}")
        self.se_layers = nn.ModuleList(SELayer(channels, reduction) for _ in range(num_classes))
        self.convs = nn.ModuleList(
            nn.Conv2d(channels, 1, kernel_size=3, padding=1) for _ in range(num_classes)
        )

    def forward(self, shared, shallow):
        if shared.shape != shallow.shape:
            raise ShapeError(
                f"shared features {tuple(shared.shape)} != shallow features {tuple(shallow.shape)}"
            )
        scores = [conv(se(shared) + shallow) for se, conv in zip(self.se_layers, self.convs)]
        return torch.cat(scores, dim=1)


def init_parameters(module: nn.Module):
    """Kaiming fan-in normal for conv/linear weights, zero biases, unit norm scale."""
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.Linear)):
            nn.init.kaiming_normal_(m.weight, mode="fan_in", nonlinearity="relu")
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.GroupNorm):
            nn.init.ones_(m.weight)
            nn.init.zeros_(m.bias)
