"""Shared fixtures and independent oracles used across the suite."""

import numpy as np
import pytest
import torch

from robustdense import ModelConfig

# Smallest config satisfying the divisibility invariants: all channels <= 16.
TINY_SCHEDULE = (4, 8, 8, 8, 16, 16)


@pytest.fixture
def tiny_cfg():
    return ModelConfig(channel_schedule=TINY_SCHEDULE, norm_groups=2, se_reduction=2)


def pixel_shuffle_oracle(x: np.ndarray, r: int) -> np.ndarray:
    """Nested-loop index mapping, independent of the tensor implementation."""
    b, c, h, w = x.shape
    assert c % (r * r) == 0
    out = np.zeros((b, c // (r * r), h * r, w * r), dtype=x.dtype)
    for bi in range(b):
        for co in range(c // (r * r)):
            for hi in range(h):
                for wi in range(w):
                    for i in range(r):
                        for j in range(r):
                            out[bi, co, hi * r + i, wi * r + j] = x[bi, co * r * r + i * r + j, hi, wi]
    return out


def se_reference(x: np.ndarray, w1, b1, w2, b2):
    """Float64 pool -> FC -> ReLU -> FC -> sigmoid -> scale, in plain numpy."""
    pooled = x.mean(axis=(2, 3))
    hidden = np.maximum(pooled @ w1.T + b1, 0.0)
    gates = 1.0 / (1.0 + np.exp(-(hidden @ w2.T + b2)))
    return gates, x * gates[:, :, None, None]


def loss_oracle(logits: np.ndarray, label: int) -> float:
    """Literal per-pixel expression -x_i + log(sum_j exp(x_j)) in float64."""
    logits = np.asarray(logits, dtype=np.float64)
    return float(-logits[label] + np.log(np.exp(logits).sum()))


def fd_gradcheck(params, loss_fn, n_probes=8, step=1e-5, rel_tol=1e-4, seed=0,
                 what="block"):
    """Central finite differences vs autograd on random parameter coordinates.

    params must be float64 leaves; loss_fn() re-evaluates the scalar loss.
    """
    params = [p for p in params if p.requires_grad]
    loss = loss_fn()
    grads = torch.autograd.grad(loss, params, allow_unused=True)

    sizes = [p.numel() for p in params]
    total = sum(sizes)
    rng = np.random.default_rng(seed)
    coords = rng.choice(total, size=min(n_probes, total), replace=False)
    bounds = np.cumsum([0] + sizes)

    worst = 0.0
    for coord in coords:
        ti = int(np.searchsorted(bounds, coord, side="right") - 1)
        offset = int(coord - bounds[ti])
        p, g = params[ti], grads[ti]
        flat = p.detach().reshape(-1)
        orig = flat[offset].item()
        with torch.no_grad():
            flat[offset] = orig + step
        lp = loss_fn().item()
        with torch.no_grad():
            flat[offset] = orig - step
        lm = loss_fn().item()
        with torch.no_grad():
            flat[offset] = orig
        fd = (lp - lm) / (2.0 * step)
        ad = 0.0 if g is None else g.reshape(-1)[offset].item()
        rel = abs(fd - ad) / max(abs(fd), abs(ad), 1e-8)
        worst = max(worst, rel)
        assert rel <= rel_tol, (
            f"{what}: autodiff {ad} vs finite difference {fd} "
            f"(rel err {rel:.2e}) at parameter {ti} offset {offset}"
        )
    return worst
