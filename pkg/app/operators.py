"""
Matrix-free linear operators built on ``scipy.sparse.linalg.LinearOperator``.

Every operator exposes ``matvec`` (forward) and ``rmatvec`` (adjoint); the
composed measurement operator H = Phi_{:,M} Psi_{M,I} maps identifiable
wavelet coefficients straight to measurements.
"""
import logging

import numpy as np
from pydantic import BaseModel
from scipy.sparse.linalg import LinearOperator, aslinearoperator

from app.exceptions import DimensionError
from app.masking import IdentifiableSet, Mask
from app.transforms import WaveletSpec, forward_dwt2, inverse_dwt2

logger = logging.getLogger(__name__)

RHO_SAFETY = 1.01


class SpectralEstimate(BaseModel):
    rho: float
    iterations_used: int
    converged: bool

    def safe_rho(self, safety: float = RHO_SAFETY) -> float:
        """Estimate inflated so that 1/safe_rho**2 stays below the true 1/rho**2."""
        return self.rho * safety

    def step_bound(self, safety: float = RHO_SAFETY) -> float:
        rho = self.safe_rho(safety)
        # a zero operator accepts any step; 1.0 keeps the iteration finite
        return 1.0 / rho ** 2 if rho > 0 else 1.0


def as_operator(matrix) -> LinearOperator:
    return aslinearoperator(matrix)


def compose_H(phi: LinearOperator, spec: WaveletSpec, mask: Mask, iset: IdentifiableSet) -> LinearOperator:
    """
    H s_I = Phi( zero-outside-M( Psi lift(s_I) ) ), with adjoint
    H^T y = select_I( Psi^T( zero-outside-M( Phi^T y ) ) ).
    """
    n_meas, p = phi.shape
    if p != spec.p:
        raise DimensionError(f"sampling operator acts on {p} pixels, wavelet grid has {spec.p}")
    if mask.n != spec.size or iset.p != spec.p:
        raise DimensionError("mask / identifiable set do not match the wavelet grid")
    inside = mask.membership

    def forward(s_I):
        image = inverse_dwt2(iset.lift(np.ravel(s_I)), spec)
        image[~inside] = 0.0
        return phi.matvec(image.ravel())

    def adjoint(y):
        image = np.reshape(phi.rmatvec(np.ravel(y)), (spec.size, spec.size))
        image = np.where(inside, image, 0.0)
        return iset.select(forward_dwt2(image, spec))

    logger.info("Composed H: %d measurements x %d identifiable coefficients", n_meas, iset.p_I)
    return LinearOperator(shape=(n_meas, iset.p_I), matvec=forward, rmatvec=adjoint, dtype=float)


def spectral_norm(op: LinearOperator, tol: float = 1e-6, max_iters: int = 1000, seed: int = 0) -> SpectralEstimate:
    """
    Largest singular value by power iteration on A^T A from a seeded random
    start. Stops when successive Rayleigh quotients agree to ``tol`` relative.
    """
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(op.shape[1])
    v /= np.linalg.norm(v)

    previous = None
    for iteration in range(1, max_iters + 1):
        av = op.matvec(v)
        rayleigh = float(np.dot(av, av))
        if rayleigh == 0.0:
            return SpectralEstimate(rho=0.0, iterations_used=iteration, converged=True)
        if previous is not None and abs(rayleigh - previous) <= tol * rayleigh:
            logger.debug("Power iteration converged after %d iterations", iteration)
            return SpectralEstimate(rho=float(np.sqrt(rayleigh)), iterations_used=iteration, converged=True)
        previous = rayleigh
        w = op.rmatvec(av)
        v = w / np.linalg.norm(w)

    logger.warning("Power iteration hit max_iters=%d without converging", max_iters)
    return SpectralEstimate(rho=float(np.sqrt(previous)), iterations_used=max_iters, converged=False)


def dot_product_test(op: LinearOperator, rng: np.random.Generator) -> float:
    """Relative mismatch |<Au, v> - <u, A^T v>| / (||Au|| ||v||) for random u, v."""
    u = rng.standard_normal(op.shape[1])
    v = rng.standard_normal(op.shape[0])
    au = op.matvec(u)
    lhs = float(np.dot(au, v))
    rhs = float(np.dot(u, op.rmatvec(v)))
    scale = np.linalg.norm(au) * np.linalg.norm(v)
    return abs(lhs - rhs) / scale if scale > 0 else abs(lhs - rhs)


def materialize(op: LinearOperator) -> np.ndarray:
    """Dense matrix of ``op`` built column by column (A e_j). Small operators only."""
    n_out, n_in = op.shape
    dense = np.empty((n_out, n_in))
    e = np.zeros(n_in)
    for j in range(n_in):
        e[j] = 1.0
        dense[:, j] = op.matvec(e)
        e[j] = 0.0
    return dense
