"""
Orthonormal 2-D discrete wavelet transforms used as the sparsifying transform Psi.

Coefficients are packed into an n x n array in the Mallat layout (approximation
band top-left; per level, column details top-right, row details bottom-left,
diagonal bottom-right)
and flattened row-major, so a coefficient vector has length p = n**2.
Periodic extension keeps the finite transform exactly orthogonal for both
filter families.
"""
import logging
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Literal, Optional

import numpy as np
import pywt
from scipy.sparse.linalg import LinearOperator

from app.exceptions import DimensionError

logger = logging.getLogger(__name__)

# family name -> PyWavelets filter (Daubechies named by tap count: Haar has 2 taps)
_PYWT_NAMES = {
    "haar": "haar",
    "daubechies6": "db3",
}

Image = np.ndarray
CoeffVector = np.ndarray


@dataclass(frozen=True)
class WaveletSpec:
    """Wavelet family, decomposition depth and grid side n (levels default to log2(n) - 2)."""
    size: int
    family: Literal["haar", "daubechies6"] = "haar"
    levels: Optional[int] = None

    def __post_init__(self):
        if self.family not in _PYWT_NAMES:
            raise DimensionError(f"unknown wavelet family '{self.family}'")
        if self.size < 2 or self.size & (self.size - 1):
            raise DimensionError(f"grid side must be a power of two, got {self.size}")
        max_levels = int(math.log2(self.size))
        if self.levels is None:
            object.__setattr__(self, "levels", max(1, max_levels - 2))
        if not 1 <= self.levels <= max_levels:
            raise DimensionError(f"levels must lie in [1, {max_levels}] for size {self.size}, got {self.levels}")

    @property
    def p(self) -> int:
        return self.size * self.size

    @property
    def wavelet(self) -> str:
        return _PYWT_NAMES[self.family]


def _band_sizes(spec: WaveletSpec) -> list[int]:
    """Side lengths of the detail bands, coarsest first."""
    return [spec.size >> level for level in range(spec.levels, 0, -1)]


def _pack(coeffs: list, spec: WaveletSpec) -> np.ndarray:
    approx = coeffs[0]
    out = np.empty(approx.shape[:-2] + (spec.size, spec.size), dtype=float)
    s = approx.shape[-1]
    out[..., :s, :s] = approx
    for (c_h, c_v, c_d), side in zip(coeffs[1:], _band_sizes(spec)):
        out[..., :side, side:2 * side] = c_v
        out[..., side:2 * side, :side] = c_h
        out[..., side:2 * side, side:2 * side] = c_d
    return out


def _unpack(arr: np.ndarray, spec: WaveletSpec) -> list:
    sides = _band_sizes(spec)
    coarse = sides[0]
    coeffs = [arr[..., :coarse, :coarse]]
    for side in sides:
        coeffs.append((
            arr[..., side:2 * side, :side],
            arr[..., :side, side:2 * side],
            arr[..., side:2 * side, side:2 * side],
        ))
    return coeffs


def forward_dwt2(image: Image, spec: WaveletSpec) -> CoeffVector:
    """
    Return s = Psi^T x for an n x n image (or a stack of them, leading axes kept).
    """
    image = np.asarray(image, dtype=float)
    if image.shape[-2:] != (spec.size, spec.size):
        raise DimensionError(f"image shape {image.shape[-2:]} does not match wavelet size {spec.size}")
    with warnings.catch_warnings():
        # coarse levels of the 6-tap family are shorter than the filter; periodization handles them
        warnings.simplefilter("ignore", UserWarning)
        coeffs = pywt.wavedec2(image, spec.wavelet, mode="periodization", level=spec.levels, axes=(-2, -1))
    return _pack(coeffs, spec).reshape(image.shape[:-2] + (spec.p,))


def inverse_dwt2(coeffs: CoeffVector, spec: WaveletSpec) -> Image:
    """Return x = Psi s. Leading axes are treated as a batch."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape[-1] != spec.p:
        raise DimensionError(f"coefficient length {coeffs.shape[-1]} does not match p = {spec.p}")
    arr = coeffs.reshape(coeffs.shape[:-1] + (spec.size, spec.size))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        return pywt.waverec2(_unpack(arr, spec), spec.wavelet, mode="periodization", axes=(-2, -1))


def basis_image(spec: WaveletSpec, index: int) -> Image:
    e = np.zeros(spec.p)
    e[index] = 1.0
    return inverse_dwt2(e, spec)


@lru_cache(maxsize=32)
def wavelet_operator(spec: WaveletSpec) -> LinearOperator:
    """Psi as a p x p operator on row-major flattened images."""
    return LinearOperator(
        shape=(spec.p, spec.p),
        matvec=lambda s: inverse_dwt2(np.ravel(s), spec).ravel(),
        rmatvec=lambda x: forward_dwt2(np.reshape(x, (spec.size, spec.size)), spec),
        dtype=float,
    )
