import numpy as np
import pytest

from wbganlab.phantom import SPINE, phantom_generate


def test_deterministic_for_fixed_seed():
    a = phantom_generate(7, 2, 0.02)
    b = phantom_generate(7, 2, 0.02)
    assert all(np.array_equal(x.pixels, y.pixels) for x, y in zip(a, b))
    assert not np.array_equal(a[0].pixels, a[1].pixels)


def test_prefix_stable_in_n():
    short = phantom_generate(3, 2, 0.01)
    long = phantom_generate(3, 5, 0.01)
    assert all(np.array_equal(s.pixels, l.pixels) for s, l in zip(short, long))


def test_zero_noise_is_piecewise_constant():
    (slc,) = phantom_generate(1, 1, 0.0)
    values = np.unique(slc.pixels)
    assert len(values) <= 6  # background + a handful of tissue levels
    assert SPINE in values


def test_shapes_near_canonical():
    for slc in phantom_generate(2, 5, 0.02):
        h, w = slc.pixels.shape
        assert 780 <= h <= 820
        assert 246 <= w <= 266
        assert slc.pixels.min() >= 0
        assert np.all(np.isfinite(slc.pixels))


def test_dataset_cardinality_360():
    slices = phantom_generate(11, 360, 0.0)
    assert len(slices) == 360


def test_rejects_nonpositive_count():
    with pytest.raises(ValueError):
        phantom_generate(0, 0, 0.0)
