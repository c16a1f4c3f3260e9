import numpy as np
import pytest

from uniattr.data import corrupt, gen_dataset


def test_deterministic():
    a, b = gen_dataset("blobs2d", 200, seed=7), gen_dataset("blobs2d", 200, seed=7)
    np.testing.assert_array_equal(a.x, b.x)
    np.testing.assert_array_equal(a.y, b.y)


@pytest.mark.parametrize("n", [2, 17, 64])
def test_balanced_and_in_range(n):
    d = gen_dataset("stripes-vs-checker", n, side=16, seed=3)
    counts = np.bincount(d.y, minlength=2)
    assert abs(counts[0] - counts[1]) <= 1
    assert d.x.shape == (n, 16, 16)
    assert d.x.min() >= 0 and d.x.max() <= 1


def test_stripes_darker_than_checker():
    d = gen_dataset("stripes-vs-checker", 200, seed=0)
    assert d.x[d.y == 0].mean() < d.x[d.y == 1].mean()


def test_brighten_raises_mean():
    d = gen_dataset("stripes-vs-checker", 20, seed=1)
    bright = corrupt(d.x, "brighten")
    assert bright.mean() > d.x.mean()
    unsaturated = d.x < 0.7
    np.testing.assert_allclose(bright[unsaturated], d.x[unsaturated] + 0.3)


def test_blur_and_noise():
    d = gen_dataset("stripes-vs-checker", 4, seed=2)
    blurred = corrupt(d.x, "blur")
    assert np.abs(np.diff(blurred, axis=2)).mean() < np.abs(np.diff(d.x, axis=2)).mean()
    noisy = gen_dataset("stripes-vs-checker", 4, seed=2, corruption="noise")
    assert not np.array_equal(noisy.x, d.x)
    assert noisy.x.min() >= 0 and noisy.x.max() <= 1


def test_errors():
    with pytest.raises(ValueError, match="unknown dataset kind"):
        gen_dataset("mnist", 10)
    with pytest.raises(ValueError, match="unknown corruption"):
        gen_dataset("blobs2d", 10, corruption="fog")
    with pytest.raises(ValueError):
        gen_dataset("blobs2d", 1)
    with pytest.raises(ValueError):
        corrupt(np.zeros((3, 2)), "blur")
