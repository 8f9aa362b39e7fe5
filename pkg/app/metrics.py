import logging
import math
from typing import Optional

import numpy as np
from pydantic import BaseModel
from scipy.sparse.linalg import LinearOperator

from app.exceptions import DegeneratePeakError, DimensionError
from app.masking import Mask, restrict

logger = logging.getLogger(__name__)


class PsnrReport(BaseModel):
    psnr_db: float
    peak_range: float
    mse_inside_mask: float
    p_M: int

    @property
    def finite(self) -> bool:
        return math.isfinite(self.psnr_db)


def psnr(recon: np.ndarray, truth: np.ndarray, mask: Mask) -> PsnrReport:
    """
    10 log10( (max x - min x)^2 / mse ) with max, min and the mean squared
    error all taken over pixels inside the mask; the peak range comes from the truth.
    Perfect reconstructions report +inf.
    """
    if np.shape(recon) != np.shape(truth):
        raise DimensionError(f"reconstruction {np.shape(recon)} and truth {np.shape(truth)} differ in shape")
    x = restrict(truth, mask)
    x_hat = restrict(recon, mask)
    peak_range = float(x.max() - x.min())
    if peak_range == 0.0:
        raise DegeneratePeakError("degenerate peak: truth is constant inside the mask")
    mse = float(np.sum((x_hat - x) ** 2) / mask.p_M)
    value = math.inf if mse == 0.0 else 10.0 * math.log10(peak_range ** 2 / mse)
    return PsnrReport(psnr_db=value, peak_range=peak_range, mse_inside_mask=mse, p_M=mask.p_M)


def report_lines(report: BaseModel) -> str:
    """Flat ``key = value`` block, one field per line."""
    return "".join(f"{key} = {value}\n" for key, value in report.model_dump().items())


def residual_sq(H: LinearOperator, s: np.ndarray, y: np.ndarray, H_s: Optional[np.ndarray] = None) -> float:
    """||y - H s||^2; pass ``H_s`` when H s is already at hand."""
    r = y - (H.matvec(s) if H_s is None else H_s)
    return float(np.dot(r, r))


def p1_objective(H: LinearOperator, s: np.ndarray, y: np.ndarray, tau: float,
                 H_s: Optional[np.ndarray] = None) -> float:
    """0.5 ||y - H s||^2 + tau ||s||_1."""
    return 0.5 * residual_sq(H, s, y, H_s=H_s) + tau * float(np.sum(np.abs(s)))
