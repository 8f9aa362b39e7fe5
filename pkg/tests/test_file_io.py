import numpy as np
import pytest

from app.ct import Sinogram, limited_angles
from app.exceptions import FileFormatError
from app.file_io import read_image, read_mask, read_sinogram, write_image, write_mask, write_pgm, write_sinogram
from app.masking import Mask


def test_sinogram_file_keeps_geometry(tmp_path, rng):
    angles = limited_angles(20.0)
    sino = Sinogram(angles=angles, data=rng.standard_normal((angles.size, 15)), pitch=0.25, offset=0.01)
    path = tmp_path / "s.mrsino"
    write_sinogram(path, sino)
    back = read_sinogram(path)
    np.testing.assert_array_equal(back.angles, sino.angles)
    np.testing.assert_array_equal(back.data, sino.data)
    assert (back.pitch, back.offset) == (0.25, 0.01)


def test_truncated_sinogram_is_rejected(tmp_path, rng):
    angles = limited_angles(45.0)
    path = tmp_path / "s.mrsino"
    write_sinogram(path, Sinogram(angles=angles, data=rng.standard_normal((4, 7)), pitch=1.0))
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(FileFormatError):
        read_sinogram(path)


def test_wrong_magic_is_rejected(tmp_path):
    path = tmp_path / "bad.mrsino"
    path.write_bytes(b"NOPE\nend\n")
    with pytest.raises(FileFormatError):
        read_sinogram(path)
    with pytest.raises(FileFormatError):
        read_image(path)


def test_image_file(tmp_path, rng):
    image = rng.standard_normal((8, 8))
    path = tmp_path / "x.mrimg"
    write_image(path, image)
    np.testing.assert_array_equal(read_image(path), image)


def test_mask_pgm(tmp_path):
    grid = np.zeros((8, 8), dtype=bool)
    grid[2:5, 1:7] = True
    path = tmp_path / "mask.pgm"
    write_mask(path, Mask(grid))
    assert path.read_bytes().startswith(b"P5")
    assert read_mask(path) == Mask(grid)


def test_preview_pgm_is_rescaled(tmp_path):
    path = tmp_path / "x.pgm"
    write_pgm(path, np.array([[-1.0, 0.0], [1.0, 3.0]]))
    pixels = read_image(path)
    assert pixels.min() == 0.0
    assert pixels.max() == 255.0
