"""
Parallel-beam CT measurement model.

Geometry: the n x n grid covers [-1, 1]^2 with pixel pitch h = 2/n; row 0 is
the top (y = 1 - h/2) and column 0 the left (x = -1 + h/2). A detector
position t measures the line integral over {x cos(theta) + y sin(theta) = t}.
Detector samples sit at t_k = offset + (k - (d - 1)/2) * pitch, and the default
pitch equals the pixel pitch.
"""
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator

from app.exceptions import DimensionError

logger = logging.getLogger(__name__)

# columns: density, semi-axis a, semi-axis b, center x, center y, rotation (degrees)
_SHEPP_LOGAN_TABLE = np.array([
    [1.0, 0.69, 0.92, 0.0, 0.0, 0.0],
    [-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0],
    [-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0],
    [-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0],
    [0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0],
    [0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0],
    [0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0],
    [0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0],
    [0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0],
    [0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0],
])
_ORIGINAL_DENSITIES = np.array([2.0, -0.98, -0.02, -0.02, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01])


@dataclass(frozen=True, eq=False)
class EllipseSet:
    """Rows of (center x, center y, semi-axis a, semi-axis b, rotation [rad], density)."""
    params: np.ndarray

    def __post_init__(self):
        params = np.atleast_2d(np.asarray(self.params, dtype=float))
        if params.shape[1] != 6:
            raise DimensionError(f"ellipse rows need 6 fields, got {params.shape[1]}")
        if np.any(params[:, 2] <= 0) or np.any(params[:, 3] <= 0):
            raise DimensionError("ellipse semi-axes must be positive")
        if not np.all(np.isfinite(params[:, 5])):
            raise DimensionError("ellipse densities must be finite")
        object.__setattr__(self, "params", params)

    def __len__(self) -> int:
        return self.params.shape[0]

    def scaled(self, factor: float) -> "EllipseSet":
        params = self.params.copy()
        params[:, 5] *= factor
        return EllipseSet(params)

    def evaluate(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Summed density at the points (x, y)."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        value = np.zeros(np.broadcast(x, y).shape)
        for cx, cy, a, b, phi, density in self.params:
            dx, dy = x - cx, y - cy
            u = dx * np.cos(phi) + dy * np.sin(phi)
            v = -dx * np.sin(phi) + dy * np.cos(phi)
            value += np.where((u / a) ** 2 + (v / b) ** 2 <= 1.0, density, 0.0)
        return value


@dataclass(frozen=True, eq=False)
class Sinogram:
    angles: np.ndarray
    data: np.ndarray = field(repr=False)
    pitch: float
    offset: float = 0.0

    def __post_init__(self):
        angles = np.asarray(self.angles, dtype=float)
        data = np.atleast_2d(np.asarray(self.data, dtype=float))
        if angles.ndim != 1 or angles.size < 1:
            raise DimensionError("a sinogram needs at least one angle")
        if data.shape[0] != angles.size or data.shape[1] < 2:
            raise DimensionError(f"sinogram data {data.shape} does not match {angles.size} angles x >= 2 detectors")
        if np.any(np.diff(angles) <= 0) or angles[0] < 0 or angles[-1] >= np.pi:
            raise DimensionError("angles must be strictly increasing in [0, pi)")
        object.__setattr__(self, "angles", angles)
        object.__setattr__(self, "data", data)

    @property
    def K(self) -> int:
        return self.angles.size

    @property
    def d(self) -> int:
        return self.data.shape[1]

    @property
    def positions(self) -> np.ndarray:
        return detector_positions(self.d, self.pitch, self.offset)

    def end_bins_zero(self) -> bool:
        return bool(np.all(self.data[:, 0] == 0.0) and np.all(self.data[:, -1] == 0.0))

    def check_end_bins(self) -> bool:
        ok = self.end_bins_zero()
        if not ok:
            logger.warning("Sinogram end bins are not zero; hull extraction may clip the object")
        return ok


@dataclass(frozen=True, eq=False)
class MeasurementVector:
    """Real measurement vector y with a (projection, bin, part) record per entry; part 0 = real, 1 = imaginary."""
    values: np.ndarray = field(repr=False)
    layout: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.values.shape[0] != self.layout.shape[0]:
            raise DimensionError("measurement layout does not cover the value vector")

    @property
    def N(self) -> int:
        return self.values.shape[0]


def pixel_pitch(n: int) -> float:
    return 2.0 / n


def pixel_centers(n: int) -> tuple[np.ndarray, np.ndarray]:
    """(X, Y) physical coordinates of every pixel center, shape n x n."""
    h = pixel_pitch(n)
    coords = -1.0 + (np.arange(n) + 0.5) * h
    return np.meshgrid(coords, coords[::-1])


def detector_positions(d: int, pitch: float, offset: float = 0.0) -> np.ndarray:
    return offset + (np.arange(d) - (d - 1) / 2.0) * pitch


def limited_angles(spacing_deg: float = 1.0, missing_span_deg: float = 0.0,
                   missing_start_deg: Optional[float] = None) -> np.ndarray:
    """
    Angles k * spacing in [0, 180) degrees minus the half-open wedge
    [start, start + span). The wedge is centered on 90 degrees unless a start is given.
    """
    count = int(round(180.0 / spacing_deg))
    degrees = np.arange(count) * spacing_deg
    degrees = degrees[degrees < 180.0 - 1e-9]
    if missing_span_deg > 0:
        start = 90.0 - missing_span_deg / 2.0 if missing_start_deg is None else missing_start_deg
        eps = 1e-9
        missing = (degrees >= start - eps) & (degrees < start + missing_span_deg - eps)
        degrees = degrees[~missing]
    return np.deg2rad(degrees)


def shepp_logan(n: int, variant: str = "modified", oversample: int = 1) -> tuple[np.ndarray, EllipseSet]:
    """
    The 10-ellipse Shepp-Logan head. ``modified`` uses the contrast-enhanced
    densities, ``original`` the 1974 ones. Each pixel is the mean over an
    ``oversample`` x ``oversample`` grid of sub-pixel centers; 1 samples the
    pixel center only.
    """
    if n < 2 or n & (n - 1):
        raise DimensionError(f"grid side must be a power of two, got {n}")
    if oversample < 1:
        raise ValueError(f"oversample must be >= 1, got {oversample}")
    table = _SHEPP_LOGAN_TABLE
    densities = table[:, 0] if variant == "modified" else _ORIGINAL_DENSITIES
    params = np.column_stack([table[:, 3], table[:, 4], table[:, 1], table[:, 2],
                              np.deg2rad(table[:, 5]), densities])
    ellipses = EllipseSet(params)
    X, Y = pixel_centers(n)
    shifts = ((np.arange(oversample) + 0.5) / oversample - 0.5) * pixel_pitch(n)
    image = np.zeros((n, n))
    for dx in shifts:
        for dy in shifts:
            image += ellipses.evaluate(X + dx, Y + dy)
    return image / oversample ** 2, ellipses


def ellipse_sinogram(ellipses: EllipseSet, angles: np.ndarray, detectors: int,
                     pitch: Optional[float] = None, offset: float = 0.0, n: Optional[int] = None) -> Sinogram:
    """
    Exact line integrals of the ellipse set. ``pitch`` defaults to the pixel
    pitch of an ``n`` grid (n inferred from d = 2n - 1 when not given).
    """
    angles = np.asarray(angles, dtype=float)
    if pitch is None:
        pitch = pixel_pitch(n if n is not None else (detectors + 1) // 2)
    t = detector_positions(detectors, pitch, offset)[None, :]
    theta = angles[:, None]
    data = np.zeros((angles.size, detectors))
    for cx, cy, a, b, phi, density in ellipses.params:
        gamma = theta - phi
        w_sq = (a * np.cos(gamma)) ** 2 + (b * np.sin(gamma)) ** 2
        s = t - (cx * np.cos(theta) + cy * np.sin(theta))
        inside = np.clip(w_sq - s ** 2, 0.0, None)
        data += 2.0 * density * a * b * np.sqrt(inside) / w_sq
    return Sinogram(angles=angles, data=data, pitch=pitch, offset=offset)


_EDGE_TOL = 1e-9


def _footprint(distance_inside: np.ndarray, ramp: float, h: float) -> np.ndarray:
    """Trapezoid edge profile; axis-aligned rays (no ramp) hitting a pixel edge get half weight."""
    if ramp > 1e-6 * h:
        return np.clip(distance_inside / ramp, 0.0, 1.0)
    on_edge = np.abs(distance_inside) <= _EDGE_TOL * h
    return np.where(on_edge, 0.5, (distance_inside > 0).astype(float))


@lru_cache(maxsize=16)
def _projector(n: int, angles_key: bytes, detectors: int, pitch: float, offset: float) -> sp.csr_matrix:
    """
    Pixel-driven projector: every pixel spreads its value over the detector
    samples with the exact chord length of a ray through a square pixel
    (a trapezoid in t), so rows are line integrals of the pixelated image.
    """
    angles = np.frombuffer(angles_key, dtype=float)
    h = pixel_pitch(n)
    X, Y = pixel_centers(n)
    x, y = X.ravel(), Y.ravel()
    pixels = np.arange(n * n)
    t0 = offset - (detectors - 1) / 2.0 * pitch

    rows, cols, vals = [], [], []
    for k, theta in enumerate(angles):
        c, s = abs(np.cos(theta)), abs(np.sin(theta))
        outer = 0.5 * h * (c + s)
        ramp = h * min(c, s)
        plateau = h / max(c, s)
        t_pix = x * np.cos(theta) + y * np.sin(theta)
        first = np.ceil((t_pix - outer - _EDGE_TOL * h - t0) / pitch).astype(int)
        for step in range(int(np.ceil(2 * outer / pitch)) + 2):
            bins = first + step
            u = np.abs(t0 + bins * pitch - t_pix)
            weight = plateau * _footprint(outer - u, ramp, h)
            keep = (weight > 0) & (bins >= 0) & (bins < detectors)
            rows.append(k * detectors + bins[keep])
            cols.append(pixels[keep])
            vals.append(weight[keep])

    matrix = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(angles.size * detectors, n * n),
    )
    logger.debug("Projector built: %d x %d, %d nonzeros", matrix.shape[0], matrix.shape[1], matrix.nnz)
    return matrix


def projector(n: int, angles: np.ndarray, detectors: int, pitch: Optional[float] = None,
              offset: float = 0.0) -> sp.csr_matrix:
    angles = np.ascontiguousarray(angles, dtype=float)
    return _projector(n, angles.tobytes(), detectors, float(pitch or pixel_pitch(n)), float(offset))


def radon(image: np.ndarray, angles: np.ndarray, detectors: int, pitch: Optional[float] = None,
          offset: float = 0.0) -> Sinogram:
    image = np.asarray(image, dtype=float)
    if image.ndim != 2 or image.shape[0] != image.shape[1]:
        raise DimensionError(f"radon needs a square image, got {image.shape}")
    n = image.shape[0]
    pitch = pitch or pixel_pitch(n)
    data = projector(n, angles, detectors, pitch, offset) @ image.ravel()
    return Sinogram(angles=angles, data=data.reshape(len(angles), detectors), pitch=pitch, offset=offset)


def radon_adjoint(data: np.ndarray, angles: np.ndarray, n: int, pitch: Optional[float] = None,
                  offset: float = 0.0) -> np.ndarray:
    """Backprojection: the exact transpose of ``radon``."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    if data.shape[0] != len(angles):
        raise DimensionError(f"{data.shape[0]} projections for {len(angles)} angles")
    matrix = projector(n, angles, data.shape[1], pitch, offset)
    return (matrix.T @ data.ravel()).reshape(n, n)


def _padded_length(detectors: int) -> int:
    return 1 << int(np.ceil(np.log2(max(detectors, 2))))


def spectral_stack(data: np.ndarray) -> np.ndarray:
    """
    Unitary DFT of each projection (zero-padded to the next power of two L),
    kept as L real numbers per projection: Re of bins 0..L/2 followed by Im of
    bins 1..L/2-1, interior bins scaled by sqrt(2) so norms are preserved.
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    length = _padded_length(data.shape[1])
    spectrum = np.fft.rfft(data, n=length, axis=1, norm="ortho")
    real = spectrum.real.copy()
    real[:, 1:length // 2] *= np.sqrt(2.0)
    imag = np.sqrt(2.0) * spectrum.imag[:, 1:length // 2]
    return np.hstack([real, imag]).ravel()


def spectral_unstack(values: np.ndarray, detectors: int) -> np.ndarray:
    """Transpose (and inverse) of ``spectral_stack``, truncated back to ``detectors`` samples."""
    length = _padded_length(detectors)
    blocks = np.reshape(values, (-1, length))
    half = length // 2
    spectrum = blocks[:, :half + 1].astype(complex)
    spectrum[:, 1:half] /= np.sqrt(2.0)
    spectrum[:, 1:half] += 1j * blocks[:, half + 1:] / np.sqrt(2.0)
    return np.fft.irfft(spectrum, n=length, axis=1, norm="ortho")[:, :detectors]


def measurement_layout(projections: int, detectors: int, freq_mode: bool) -> np.ndarray:
    layout_type = [("projection", np.int32), ("bin", np.int32), ("part", np.int8)]
    if not freq_mode:
        k, b = np.meshgrid(np.arange(projections), np.arange(detectors), indexing="ij")
        return np.rec.fromarrays([k.ravel(), b.ravel(), np.zeros(k.size, dtype=np.int8)], dtype=layout_type)
    length = _padded_length(detectors)
    half = length // 2
    bins = np.concatenate([np.arange(half + 1), np.arange(1, half)])
    parts = np.concatenate([np.zeros(half + 1, dtype=np.int8), np.ones(half - 1, dtype=np.int8)])
    return np.rec.fromarrays([
        np.repeat(np.arange(projections), length),
        np.tile(bins, projections),
        np.tile(parts, projections),
    ], dtype=layout_type)


def measurements_from_sinogram(sinogram: Sinogram, freq_mode: bool) -> MeasurementVector:
    values = spectral_stack(sinogram.data) if freq_mode else sinogram.data.ravel().copy()
    return MeasurementVector(values=values, layout=measurement_layout(sinogram.K, sinogram.d, freq_mode))


def build_sampling_operator(angles: np.ndarray, detectors: int, n: int, freq_mode: bool,
                            pitch: Optional[float] = None, offset: float = 0.0) -> LinearOperator:
    """
    Phi: image (row-major, n^2) -> measurements. With ``freq_mode`` the
    projections are replaced by their stacked unitary half-spectra, so
    ||Phi x|| = ||radon(x)||.
    """
    matrix = projector(n, angles, detectors, pitch, offset)
    K = len(angles)
    if not freq_mode:
        return LinearOperator(shape=matrix.shape, matvec=lambda x: matrix @ np.ravel(x),
                              rmatvec=lambda y: matrix.T @ np.ravel(y), dtype=float)

    length = _padded_length(detectors)

    def forward(x):
        return spectral_stack((matrix @ np.ravel(x)).reshape(K, detectors))

    def adjoint(y):
        return matrix.T @ spectral_unstack(y, detectors).ravel()

    return LinearOperator(shape=(K * length, n * n), matvec=forward, rmatvec=adjoint, dtype=float)


def ramp_filter(projections: np.ndarray, pitch: float) -> np.ndarray:
    """Ram-Lak filtering of each row, via the band-limited spatial kernel and zero-padded FFT convolution."""
    projections = np.atleast_2d(projections)
    d = projections.shape[1]
    length = _padded_length(2 * d)
    offsets = np.arange(-(d - 1), d)
    kernel = np.zeros(offsets.size)
    kernel[offsets == 0] = 1.0 / (4.0 * pitch ** 2)
    odd = offsets % 2 == 1
    kernel[odd] = -1.0 / (np.pi * offsets[odd] * pitch) ** 2
    # circular layout so that index 0 is the zero lag
    wrapped = np.zeros(length)
    wrapped[offsets % length] = kernel
    response = np.fft.rfft(wrapped)
    filtered = np.fft.irfft(np.fft.rfft(projections, n=length, axis=1) * response, n=length, axis=1)
    return pitch * filtered[:, :d]


def fbp(sinogram: Sinogram, n: int) -> np.ndarray:
    """Filtered backprojection: Ram-Lak filter, linear-interpolation backprojection, scale pi/K."""
    filtered = ramp_filter(sinogram.data, sinogram.pitch)
    positions = sinogram.positions
    X, Y = pixel_centers(n)
    image = np.zeros((n, n))
    for theta, row in zip(sinogram.angles, filtered):
        t = X * np.cos(theta) + Y * np.sin(theta)
        image += np.interp(t, positions, row, left=0.0, right=0.0)
    return image * np.pi / sinogram.K
