"""The full hourglass network: dense encoder, DSM fusion, pixel-shuffle decoder,
per-category head."""

import torch
from torch import nn

from .blocks import (
    DenseStage,
    SConvHead,
    SEMixBlock,
    UpBlock,
    check_finite,
    make_group_norm,
    init_parameters,
)
from .config import DSM_CHANNELS, NUM_STAGES, SPECTRAL_CHANNELS, ModelConfig
from .errors import ConfigError, ShapeError

# Five stride-2 halvings in the encoder.
SPATIAL_DIVISOR = 32


class DsmBranch(nn.Module):
    """Light DSM encoder: stem plus five stride-2 conv stages down to the bottleneck."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        sched = cfg.scaled_channels
        self.stem = nn.Sequential(
            nn.Conv2d(DSM_CHANNELS, sched[0], kernel_size=3, padding=1),
            make_group_norm(sched[0], cfg.norm_groups),
            nn.ReLU(),
        )
        self.stages = nn.ModuleList(
            nn.Sequential(
                nn.AvgPool2d(2),
                nn.Conv2d(sched[i], sched[i + 1], kernel_size=3, padding=1),
                make_group_norm(sched[i + 1], cfg.norm_groups),
                nn.ReLU(),
            )
            for i in range(NUM_STAGES - 1)
        )

    def forward(self, dsm):
        x = self.stem(dsm)
        for stage in self.stages:
            x = stage(x)
        return x


class RobustDenseNet(nn.Module):
    """Encoder-decoder for (B, 4, H, W) spectral + (B, 1, H, W) DSM -> class logits.

    Pipeline: stem -> 6 dense stages -> SE-gated DSM fusion at the bottleneck ->
    5 up blocks fed by encoder skips -> per-category head on the full-resolution
    features plus projected stem features. H and W must be divisible by 32.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        sched = cfg.scaled_channels
        self.stages = nn.ModuleList(DenseStage(i + 1, cfg) for i in range(NUM_STAGES))

        if cfg.use_semix:
            self.dsm_branch = DsmBranch(cfg)
            self.semix = SEMixBlock(sched[-1], cfg.se_reduction)

        # Decoder level k (1-based) upsamples to the resolution of encoder stage
        # 6-k and outputs half that stage's width; the fused width is whatever
        # makes (deep + fused) / r^2 land there.
        r2 = cfg.upscale_factor ** 2
        self.up_blocks = nn.ModuleList()
        if not cfg.plain_pixelshuffle:
            self.skip_projs = nn.ModuleList()
        deep = sched[-1]
        for k in range(1, NUM_STAGES):
            skip_ch = sched[NUM_STAGES - 1 - k]
            out = skip_ch // 2
            fused = r2 * out - deep
            if fused < 1:
                raise ConfigError(
                    f"decoder level {k}: deep width {deep} leaves no fused width; "
                    "the channel schedule may not double into the final stage"
                )
            self.up_blocks.append(UpBlock(
                deep, shallow_channels=out, fused_channels=fused,
                upscale=cfg.upscale_factor, plain=cfg.plain_pixelshuffle,
            ))
            if not cfg.plain_pixelshuffle:
                self.skip_projs.append(nn.Conv2d(skip_ch, out, kernel_size=1))
            deep = out

        self.shallow_proj = nn.Conv2d(sched[0], deep, kernel_size=1)
        self.head = SConvHead(deep, cfg.num_classes, min(cfg.se_reduction, deep))
        self.skip_pool = nn.AvgPool2d(2)
        init_parameters(self)

    def _validate_inputs(self, spectral, dsm):
        if spectral.ndim != 4 or spectral.shape[1] != SPECTRAL_CHANNELS:
            raise ShapeError(
                f"spectral input must be (B, {SPECTRAL_CHANNELS}, H, W), got {tuple(spectral.shape)}"
            )
        if dsm.ndim != 4 or dsm.shape[1] != DSM_CHANNELS:
            raise ShapeError(f"dsm input must be (B, 1, H, W), got {tuple(dsm.shape)}")
        if dsm.shape[0] != spectral.shape[0] or dsm.shape[-2:] != spectral.shape[-2:]:
            raise ShapeError(
                f"spectral {tuple(spectral.shape)} and dsm {tuple(dsm.shape)} do not align"
            )
        h, w = spectral.shape[-2:]
        if h % SPATIAL_DIVISOR or w % SPATIAL_DIVISOR:
            raise ShapeError(
                f"spatial dims must be divisible by {SPATIAL_DIVISOR}, got {h}x{w}"
            )

    def forward(self, spectral: torch.Tensor, dsm: torch.Tensor) -> torch.Tensor:
        self._validate_inputs(spectral, dsm)
        check_finite(spectral, "spectral input")
        check_finite(dsm, "dsm input")

        stem_feat = self.stages[0].stem(spectral)
        encoder_feats = [self.stages[0].body(stem_feat)]
        for stage in self.stages[1:]:
            encoder_feats.append(stage(encoder_feats[-1]))

        x = encoder_feats[-1]
        if self.cfg.use_semix:
            x = self.semix(self.dsm_branch(dsm), x)

        for k, up in enumerate(self.up_blocks):
            if self.cfg.plain_pixelshuffle:
                x = up(x)
            else:
                skip = self.skip_projs[k](encoder_feats[NUM_STAGES - 2 - k])
                x = up(x, self.skip_pool(skip))

        logits = self.head(x, self.shallow_proj(stem_feat))
        check_finite(logits, "logits")
        return logits

    @torch.no_grad()
    def predict(self, spectral: torch.Tensor, dsm: torch.Tensor) -> torch.Tensor:
        """Argmax class raster (B, H, W)."""
        return self.forward(spectral, dsm).argmax(dim=1)
