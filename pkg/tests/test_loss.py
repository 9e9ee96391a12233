import math

import numpy as np
import pytest
import torch

from robustdense import ValidationError, cross_entropy_loss
from .conftest import loss_oracle


def test_uniform_logits_give_log_k():
    logits = torch.zeros(1, 6, 4, 4, dtype=torch.float64)
    labels = torch.randint(0, 6, (1, 4, 4))
    loss = cross_entropy_loss(logits, labels)
    assert abs(loss.item() - math.log(6)) < 1e-12


def test_single_pixel_direct_evaluation():
    logits = torch.tensor([1.0, 2.0, 3.0], dtype=torch.float64).reshape(1, 3, 1, 1)
    labels = torch.tensor([[[2]]])
    loss = cross_entropy_loss(logits, labels)
    # -3 + ln(e^1 + e^2 + e^3), frozen from the float64 oracle
    assert loss.item() == pytest.approx(0.40760596444438079, rel=1e-12)
    assert loss.item() == pytest.approx(loss_oracle([1.0, 2.0, 3.0], 2), rel=1e-12)


def test_confident_logits_vanishing_loss():
    logits = torch.full((1, 6, 2, 2), -30.0)
    labels = torch.randint(0, 6, (1, 2, 2))
    logits.scatter_(1, labels.unsqueeze(1), 30.0)
    assert cross_entropy_loss(logits, labels).item() < 1e-9


def test_random_logits_match_float64_oracle():
    rng = np.random.default_rng(0)
    vectors = rng.uniform(-20, 20, size=(1000, 6))
    labels = rng.integers(0, 6, size=1000)
    logits = torch.from_numpy(vectors.T.reshape(1, 6, 25, 40).copy())
    got = cross_entropy_loss(logits, torch.from_numpy(labels.reshape(1, 25, 40).copy()))
    expected = np.mean([loss_oracle(v, l) for v, l in zip(vectors, labels)])
    assert abs(got.item() - expected) / abs(expected) < 1e-6


def test_ignore_index_excluded_from_mean():
    logits = torch.zeros(1, 3, 1, 2, dtype=torch.float64)
    logits[0, :, 0, 0] = torch.tensor([5.0, 0.0, 0.0], dtype=torch.float64)
    labels = torch.tensor([[[0, 255]]])
    expected = loss_oracle([5.0, 0.0, 0.0], 0)
    assert cross_entropy_loss(logits, labels).item() == pytest.approx(expected, rel=1e-12)


def test_all_ignored_is_zero_with_warning():
    logits = torch.randn(1, 3, 2, 2)
    labels = torch.full((1, 2, 2), 255)
    with pytest.warns(RuntimeWarning, match="ignored"):
        loss = cross_entropy_loss(logits, labels)
    assert loss.item() == 0.0


def test_out_of_range_label_rejected():
    logits = torch.randn(1, 3, 2, 2)
    with pytest.raises(ValidationError):
        cross_entropy_loss(logits, torch.full((1, 2, 2), 3))
    with pytest.raises(ValidationError):
        cross_entropy_loss(logits, torch.full((1, 2, 2), -1))


def test_mismatched_shapes_rejected():
    with pytest.raises(ValidationError):
        cross_entropy_loss(torch.randn(1, 3, 2, 2), torch.zeros(1, 3, 3, dtype=torch.int64))


def test_extreme_logits_stay_finite():
    logits = torch.full((1, 4, 2, 2), 1000.0)
    logits[0, 0] = -1000.0
    labels = torch.ones(1, 2, 2, dtype=torch.int64)
    assert torch.isfinite(cross_entropy_loss(logits, labels))
