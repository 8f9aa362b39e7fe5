"""
On-disk formats.

Float containers are a short ASCII header closed by an ``end`` line,
followed by row-major little-endian float64 data:

    MRSINO1                 MRIMG1
    K <projections>         rows <r>
    d <detectors>           cols <c>
    pitch <float>           end
    offset <float>
    angles <K floats>
    end

Masks and preview images are 8-bit PGM.
"""
import logging
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from app.ct import Sinogram
from app.exceptions import FileFormatError
from app.masking import Mask

logger = logging.getLogger(__name__)

SINOGRAM_MAGIC = "MRSINO1"
IMAGE_MAGIC = "MRIMG1"
_END = b"end\n"
_FLOAT = np.dtype("<f8")


def _split_header(raw: bytes, magic: str, path: Path) -> tuple[dict[str, list[str]], bytes]:
    if not raw.startswith(magic.encode() + b"\n"):
        raise FileFormatError(f"{path}: missing '{magic}' magic")
    cut = raw.find(b"\n" + _END)
    if cut < 0:
        raise FileFormatError(f"{path}: header is not terminated")
    header = {}
    for line in raw[len(magic) + 1:cut + 1].decode("ascii").splitlines():
        if line.strip():
            key, *values = line.split()
            header[key] = values
    return header, raw[cut + 1 + len(_END):]


def _payload(body: bytes, count: int, path: Path) -> np.ndarray:
    if len(body) != count * _FLOAT.itemsize:
        raise FileFormatError(f"{path}: expected {count} float64 values, found {len(body) // _FLOAT.itemsize}")
    return np.frombuffer(body, dtype=_FLOAT).astype(float)


def write_sinogram(path: Path, sinogram: Sinogram) -> None:
    lines = [
        SINOGRAM_MAGIC,
        f"K {sinogram.K}",
        f"d {sinogram.d}",
        f"pitch {float(sinogram.pitch)!r}",
        f"offset {float(sinogram.offset)!r}",
        "angles " + " ".join(repr(float(a)) for a in sinogram.angles),
        "end",
    ]
    with open(path, "wb") as handle:
        handle.write(("\n".join(lines) + "\n").encode("ascii"))
        handle.write(np.ascontiguousarray(sinogram.data, dtype=_FLOAT).tobytes())
    logger.info("Wrote %d x %d sinogram to %s", sinogram.K, sinogram.d, path)


def read_sinogram(path: Path) -> Sinogram:
    header, body = _split_header(Path(path).read_bytes(), SINOGRAM_MAGIC, path)
    try:
        K, d = int(header["K"][0]), int(header["d"][0])
        pitch, offset = float(header["pitch"][0]), float(header["offset"][0])
        angles = np.array([float(a) for a in header["angles"]])
    except (KeyError, IndexError, ValueError) as exc:
        raise FileFormatError(f"{path}: malformed sinogram header") from exc
    if angles.size != K:
        raise FileFormatError(f"{path}: header lists {angles.size} angles for K = {K}")
    data = _payload(body, K * d, path).reshape(K, d)
    return Sinogram(angles=angles, data=data, pitch=pitch, offset=offset)


def write_image(path: Path, image: np.ndarray) -> None:
    image = np.atleast_2d(np.asarray(image, dtype=float))
    header = f"{IMAGE_MAGIC}\nrows {image.shape[0]}\ncols {image.shape[1]}\nend\n"
    with open(path, "wb") as handle:
        handle.write(header.encode("ascii"))
        handle.write(np.ascontiguousarray(image, dtype=_FLOAT).tobytes())


def read_image(path: Path) -> np.ndarray:
    """Float container, or any PGM (values kept as read)."""
    raw = Path(path).read_bytes()
    if raw.startswith(b"P2") or raw.startswith(b"P5"):
        return _read_pgm(path).astype(float)
    header, body = _split_header(raw, IMAGE_MAGIC, path)
    try:
        rows, cols = int(header["rows"][0]), int(header["cols"][0])
    except (KeyError, IndexError, ValueError) as exc:
        raise FileFormatError(f"{path}: malformed image header") from exc
    return _payload(body, rows * cols, path).reshape(rows, cols)


def _read_pgm(path: Path) -> np.ndarray:
    try:
        with PILImage.open(path) as img:
            return np.array(img)
    except OSError as exc:
        raise FileFormatError(f"{path}: not a readable PGM file") from exc


def write_pgm(path: Path, image: np.ndarray) -> None:
    """Preview: linearly rescale to 0..255 and save as binary PGM."""
    image = np.asarray(image, dtype=float)
    lo, hi = float(image.min()), float(image.max())
    scaled = np.zeros_like(image) if hi == lo else (image - lo) / (hi - lo) * 255.0
    PILImage.fromarray(np.round(scaled).astype(np.uint8)).save(path, format="PPM")


def write_mask(path: Path, mask: Mask) -> None:
    PILImage.fromarray(mask.membership.astype(np.uint8) * 255).save(path, format="PPM")
    logger.info("Wrote mask (p_M = %d) to %s", mask.p_M, path)


def read_mask(path: Path) -> Mask:
    """Any nonzero PGM sample is inside the mask."""
    return Mask(_read_pgm(path) != 0)


def write_report(path: Path, text: str) -> None:
    Path(path).write_text(text)
