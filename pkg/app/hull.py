"""
Convex hull mask extraction from a sinogram.

Each projection yields a support interval [a, b] on the detector axis, i.e.
a strip {(x, y): a <= x cos(theta) + y sin(theta) <= b}; the mask is the set
of pixel centers lying in every strip.
"""
import logging
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
from pydantic import BaseModel, field_validator

from app.ct import Sinogram, detector_positions, pixel_centers
from app.exceptions import DimensionError, EmptySupportError
from app.masking import Mask

logger = logging.getLogger(__name__)


class ThresholdPolicy(BaseModel):
    """
    A detector sample counts as object when |p(t)| exceeds
    ``absolute`` if set, else ``fraction`` times the projection's peak.
    The interval is widened by ``margin_bins`` samples on both sides.
    """
    fraction: float = 1e-3
    absolute: Optional[float] = None
    margin_bins: int = 1

    @field_validator("fraction")
    @classmethod
    def _fraction_range(cls, value: float) -> float:
        if not 0.0 <= value < 1.0:
            raise ValueError("fraction must lie in [0, 1)")
        return value

    def threshold(self, projection: np.ndarray) -> float:
        if self.absolute is not None:
            return self.absolute
        return self.fraction * float(np.max(np.abs(projection)))


@dataclass(frozen=True)
class SupportInterval:
    theta: float
    a: float
    b: float
    first_bin: int
    last_bin: int

    def contains(self, t: np.ndarray) -> np.ndarray:
        return (t >= self.a) & (t <= self.b)


def projection_support(projection: np.ndarray, policy: ThresholdPolicy = ThresholdPolicy(),
                       theta: float = 0.0, pitch: float = 1.0, offset: float = 0.0) -> SupportInterval:
    """Smallest detector interval outside which |p(t)| stays at or below the threshold."""
    projection = np.asarray(projection, dtype=float)
    if projection.ndim != 1 or projection.size < 2:
        raise DimensionError("a projection needs at least two detector samples")
    above = np.flatnonzero(np.abs(projection) > policy.threshold(projection))
    if above.size == 0:
        raise EmptySupportError(theta)
    first, last = int(above[0]), int(above[-1])
    positions = detector_positions(projection.size, pitch, offset)
    margin = policy.margin_bins * pitch
    return SupportInterval(theta=theta, a=positions[first] - margin, b=positions[last] + margin,
                           first_bin=first, last_bin=last)


def strips_from_sinogram(sinogram: Sinogram, policy: ThresholdPolicy = ThresholdPolicy()) -> list[SupportInterval]:
    sinogram.check_end_bins()
    return [
        projection_support(row, policy, theta=theta, pitch=sinogram.pitch, offset=sinogram.offset)
        for theta, row in zip(sinogram.angles, sinogram.data)
    ]


def rasterize_strips(strips: Iterable[SupportInterval], n: int) -> np.ndarray:
    """Boolean grid of pixel centers inside every strip (all True for no strips)."""
    X, Y = pixel_centers(n)
    inside = np.ones((n, n), dtype=bool)
    for strip in strips:
        inside &= strip.contains(X * np.cos(strip.theta) + Y * np.sin(strip.theta))
    return inside


def extract_hull_mask(sinogram: Sinogram, policy: ThresholdPolicy = ThresholdPolicy(), n: Optional[int] = None) -> Mask:
    """Intersection of the per-angle support strips, rasterized on the n x n grid."""
    n = n if n is not None else (sinogram.d + 1) // 2
    strips = strips_from_sinogram(sinogram, policy)
    mask = Mask(rasterize_strips(strips, n))
    logger.info("Hull mask from %d angles: p_M = %d (%.4f of p)", len(strips), mask.p_M, mask.p_M / (n * n))
    return mask
