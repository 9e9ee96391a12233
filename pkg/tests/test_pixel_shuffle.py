import itertools

import numpy as np
import pytest
import torch

from robustdense import ShapeError, pixel_shuffle, pixel_unshuffle
from .conftest import pixel_shuffle_oracle


def test_r1_is_identity():
    x = torch.randn(2, 3, 4, 5)
    assert torch.equal(pixel_shuffle(x, 1), x)


def test_single_pixel_block_layout():
    # Four channels [a, b, c, d] land as the 2x2 block [[a, b], [c, d]].
    x = torch.tensor([1.0, 2.0, 3.0, 4.0]).reshape(1, 4, 1, 1)
    out = pixel_shuffle(x, 2)
    assert out.shape == (1, 1, 2, 2)
    assert torch.equal(out[0, 0], torch.tensor([[1.0, 2.0], [3.0, 4.0]]))


def test_exhaustive_against_nested_loop_oracle():
    rng = np.random.default_rng(0)
    mismatches = 0
    for b, c, h, w, r in itertools.product(range(1, 3), range(1, 9),
                                           range(1, 4), range(1, 4), (1, 2)):
        if c % (r * r):
            continue
        x = rng.standard_normal((b, c, h, w))
        got = pixel_shuffle(torch.from_numpy(x), r).numpy()
        mismatches += int(not np.array_equal(got, pixel_shuffle_oracle(x, r)))
    assert mismatches == 0


def test_channel_divisibility_error():
    with pytest.raises(ShapeError):
        pixel_shuffle(torch.randn(1, 3, 2, 2), 2)


def test_bijectivity_inverse_recovers_input():
    rng = np.random.default_rng(1)
    for b, c, h, w, r in itertools.product(range(1, 3), (4, 8), range(1, 4),
                                           range(1, 4), (1, 2)):
        x = torch.from_numpy(rng.standard_normal((b, c, h, w)))
        assert torch.equal(pixel_unshuffle(pixel_shuffle(x, r), r), x)


def test_index_map_is_a_bijection():
    # Shuffling a coordinate enumeration hits every output cell exactly once.
    b, c, h, w, r = 2, 8, 3, 3, 2
    x = torch.arange(b * c * h * w, dtype=torch.float64).reshape(b, c, h, w)
    out = pixel_shuffle(x, r)
    assert sorted(out.reshape(-1).tolist()) == list(range(b * c * h * w))
