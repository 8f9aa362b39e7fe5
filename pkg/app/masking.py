"""
Mask M and identifiable coefficient set I.

Restricted vectors are ordered row-major over the true entries of the mask.
"""
import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from app.exceptions import DimensionError
from app.transforms import Image, WaveletSpec, inverse_dwt2

logger = logging.getLogger(__name__)

# relative to each basis image's own max magnitude
SUPPORT_TOL = 1e-12
_BASIS_BATCH = 256
ISET_CACHE_SIZE = 16


@dataclass(frozen=True, eq=False)
class Mask:
    membership: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.membership, dtype=bool)
        if grid.ndim != 2 or grid.shape[0] != grid.shape[1]:
            raise DimensionError(f"mask must be a square grid, got shape {grid.shape}")
        if not grid.any():
            raise DimensionError("mask must contain at least one pixel")
        grid = grid.copy()
        grid.setflags(write=False)
        object.__setattr__(self, "membership", grid)

    @classmethod
    def full(cls, n: int) -> "Mask":
        return cls(np.ones((n, n), dtype=bool))

    @property
    def n(self) -> int:
        return self.membership.shape[0]

    @property
    def p_M(self) -> int:
        return int(np.count_nonzero(self.membership))

    @property
    def flat_indices(self) -> np.ndarray:
        return np.flatnonzero(self.membership)

    def key(self) -> bytes:
        return np.packbits(self.membership).tobytes() + self.n.to_bytes(4, "little")

    def __eq__(self, other) -> bool:
        return isinstance(other, Mask) and np.array_equal(self.membership, other.membership)

    def __hash__(self) -> int:
        return hash(self.key())

    def issubset(self, other: "Mask") -> bool:
        return bool(np.all(other.membership[self.membership]))


@dataclass(frozen=True, eq=False)
class IdentifiableSet:
    indices: np.ndarray = field(repr=False)
    p: int

    @property
    def p_I(self) -> int:
        return int(self.indices.size)

    def lift(self, s_I: np.ndarray) -> np.ndarray:
        """Place s_I into a length-p vector, zero elsewhere."""
        s_I = np.asarray(s_I, dtype=float)
        if s_I.shape[-1] != self.p_I:
            raise DimensionError(f"expected {self.p_I} identifiable coefficients, got {s_I.shape[-1]}")
        full = np.zeros(s_I.shape[:-1] + (self.p,))
        full[..., self.indices] = s_I
        return full

    def select(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if s.shape[-1] != self.p:
            raise DimensionError(f"expected {self.p} coefficients, got {s.shape[-1]}")
        return s[..., self.indices]


def _check_grid(image: Image, mask: Mask) -> None:
    if np.shape(image)[-2:] != mask.membership.shape:
        raise DimensionError(f"image shape {np.shape(image)} does not match mask {mask.membership.shape}")


def restrict(image: Image, mask: Mask) -> np.ndarray:
    """x_M: the pixels inside the mask, row-major."""
    _check_grid(image, mask)
    return np.asarray(image, dtype=float)[..., mask.membership]


def embed(x_M: np.ndarray, mask: Mask) -> Image:
    """Image equal to x_M inside the mask and exactly zero outside."""
    x_M = np.asarray(x_M, dtype=float)
    if x_M.shape[-1] != mask.p_M:
        raise DimensionError(f"expected {mask.p_M} masked values, got {x_M.shape[-1]}")
    image = np.zeros(x_M.shape[:-1] + mask.membership.shape)
    image[..., mask.membership] = x_M
    return image


def identifiable_set(spec: WaveletSpec, mask: Mask, tol: float = SUPPORT_TOL) -> IdentifiableSet:
    """
    Indices j whose basis image psi_j = Psi e_j has an entry inside the mask
    larger than ``tol`` times its own peak magnitude. Basis images come from the
    inverse transform of canonical vectors in batches; the most recent
    (spec, mask, tol) results are cached.
    """
    if mask.n != spec.size:
        raise DimensionError(f"mask side {mask.n} does not match wavelet size {spec.size}")
    return _identifiable_set(spec, mask, tol)


@lru_cache(maxsize=ISET_CACHE_SIZE)
def _identifiable_set(spec: WaveletSpec, mask: Mask, tol: float) -> IdentifiableSet:
    if mask.p_M == spec.p:
        result = IdentifiableSet(indices=np.arange(spec.p), p=spec.p)
    else:
        keep = np.zeros(spec.p, dtype=bool)
        for start in range(0, spec.p, _BASIS_BATCH):
            stop = min(start + _BASIS_BATCH, spec.p)
            unit = np.zeros((stop - start, spec.p))
            unit[np.arange(stop - start), np.arange(start, stop)] = 1.0
            basis = np.abs(inverse_dwt2(unit, spec))
            peak = basis.reshape(stop - start, -1).max(axis=1)
            inside = basis[:, mask.membership].max(axis=1)
            keep[start:stop] = inside > tol * peak
        result = IdentifiableSet(indices=np.flatnonzero(keep), p=spec.p)

    logger.info("Identifiable set: p_I = %d of p = %d (p_M = %d)", result.p_I, spec.p, mask.p_M)
    return result
