import numpy as np
import pytest

from holddmm.errors import InputError
from holddmm.toolkit.synthetic import dilation, disk_phantom, rotation, square_phantom


def test_square_area_and_range():
    img = square_phantom(64, 20.0)
    assert img.min() >= 0.0 and img.max() <= 1.0
    assert img.sum() == pytest.approx(400.0, rel=1e-9)


def test_dilation_scales_area():
    base = square_phantom(128, 40.0).sum()
    assert square_phantom(128, 40.0, A=dilation(1.15)).sum() == pytest.approx(1.15**2 * base, rel=1e-2)


def test_rotation_preserves_area():
    base = square_phantom(128, 40.0).sum()
    assert square_phantom(128, 40.0, A=rotation(0.2)).sum() == pytest.approx(base, rel=1e-2)
    np.testing.assert_allclose(rotation(0.3) @ rotation(-0.3), np.eye(2), atol=1e-15)


def test_disk_area():
    assert disk_phantom(96, 20.0).sum() == pytest.approx(np.pi * 400.0, rel=1e-2)


def test_invalid_warp():
    with pytest.raises(InputError):
        square_phantom(32, 10.0, A=np.diag([1.0, -1.0]))
    with pytest.raises(InputError):
        disk_phantom(1, 1.0)
