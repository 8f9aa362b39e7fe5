"""
Sparse solvers over the identifiable coefficients s_I.

mask IHT:  s <- T_r(s + mu H^T (y - H s)) with an adaptive step size mu
mask DORE: one mask IHT step, two exact line searches (against s^(q) and
           s^(q-1)), re-thresholding and a residual comparison
mask ISTA: proximal gradient for 0.5 ||y - H s||^2 + tau ||s||_1
"""
import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, NamedTuple, Optional

import numpy as np
from pydantic import BaseModel, field_validator
from scipy.sparse.linalg import LinearOperator

from app.exceptions import DimensionError, StepSizeError
from app.masking import IdentifiableSet, Mask, embed, restrict
from app.metrics import p1_objective, residual_sq
from app.operators import RHO_SAFETY, SpectralEstimate, spectral_norm
from app.transforms import WaveletSpec, forward_dwt2, inverse_dwt2

logger = logging.getLogger(__name__)

SHRINK_FACTOR = 0.9
SHRINK_CAP = 10_000
DOUBLING_CAP = 60
# residual increases below this fraction of the starting residual count as rounding
DESCENT_SLACK = 1e-12

TRACE_COLUMNS = ("q", "residual_sq", "mu", "alpha1", "alpha2", "decision", "shrinks")


class SolverConfig(BaseModel):
    r: int
    epsilon: float = 1e-14
    max_iters: int = 100_000
    tau: float = 0.0
    mu0_policy: Literal["inverse_rho_sq"] = "inverse_rho_sq"
    step_policy: Literal["adaptive", "constant"] = "adaptive"
    rho_safety: float = RHO_SAFETY
    seed: int = 0

    @field_validator("r")
    @classmethod
    def _r_positive(cls, value: int) -> int:
        if value < 1:
            raise ValueError("sparsity level r must be >= 1")
        return value

    @field_validator("epsilon")
    @classmethod
    def _epsilon_positive(cls, value: float) -> float:
        if value <= 0:
            raise ValueError("epsilon must be positive")
        return value

    @field_validator("tau")
    @classmethod
    def _tau_nonnegative(cls, value: float) -> float:
        if value < 0:
            raise ValueError("tau must be nonnegative")
        return value


@dataclass
class IterationRecord:
    q: int
    residual_sq: float
    mu: float
    alpha1: float = math.nan
    alpha2: float = math.nan
    decision: str = ""
    shrinks: int = 0
    objective: float = math.nan


@dataclass
class IterationTrace:
    initial_residual_sq: float
    records: list[IterationRecord] = field(default_factory=list)

    def append(self, record: IterationRecord) -> None:
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def residuals(self) -> np.ndarray:
        return np.array([self.initial_residual_sq] + [rec.residual_sq for rec in self.records])

    @property
    def step_sizes(self) -> np.ndarray:
        return np.array([rec.mu for rec in self.records])

    def write_csv(self, path: Path) -> None:
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(TRACE_COLUMNS)
            for rec in self.records:
                writer.writerow([rec.q, repr(rec.residual_sq), repr(rec.mu), repr(rec.alpha1),
                                 repr(rec.alpha2), rec.decision, rec.shrinks])


@dataclass
class SolverResult:
    s_I: np.ndarray
    trace: IterationTrace
    converged: bool
    rho: float

    @property
    def iterations(self) -> int:
        return len(self.trace)


class StepSearch(NamedTuple):
    mu: float
    s_hat: np.ndarray
    shrinks: int
    doublings: int
    H_s_hat: np.ndarray
    residual_sq: float


class LineSearch(NamedTuple):
    alpha: float
    point: np.ndarray
    H_point: np.ndarray


def hard_threshold(s: np.ndarray, r: int) -> np.ndarray:
    """Keep the r largest-magnitude entries (lower index wins ties), zero the rest."""
    s = np.asarray(s, dtype=float)
    if r >= s.size:
        return s.copy()
    out = np.zeros_like(s)
    if r <= 0:
        return out
    keep = np.argsort(-np.abs(s), kind="stable")[:r]
    out[keep] = s[keep]
    return out


def soft_threshold(s: np.ndarray, t: float) -> np.ndarray:
    if t < 0:
        raise ValueError("soft threshold must be nonnegative")
    s = np.asarray(s, dtype=float)
    return np.sign(s) * np.maximum(np.abs(s) - t, 0.0)


def _check_dims(H: LinearOperator, s: np.ndarray, y: np.ndarray) -> None:
    if s.shape != (H.shape[1],) or y.shape != (H.shape[0],):
        raise DimensionError(f"H is {H.shape}, got s {s.shape} and y {y.shape}")


def iht_step(s_q: np.ndarray, mu: float, H: LinearOperator, y: np.ndarray, r: int,
             gradient: Optional[np.ndarray] = None) -> np.ndarray:
    """s_hat = T_r(s_q + mu H^T (y - H s_q))."""
    if mu <= 0:
        raise ValueError("step size must be positive")
    s_q = np.asarray(s_q, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_dims(H, s_q, y)
    if gradient is None:
        gradient = H.rmatvec(y - H.matvec(s_q))
    return hard_threshold(s_q + mu * gradient, r)


def _descent_holds(new: float, old: float, slack: float) -> bool:
    return new <= old + slack


def step_size_search(s_q: np.ndarray, H: LinearOperator, y: np.ndarray, r: int, mu_in: float,
                     first_iteration: bool, *, H_s_q: Optional[np.ndarray] = None,
                     slack: Optional[float] = None) -> StepSearch:
    """
    Pick mu for the IHT step so that ||y - H s_hat||^2 <= ||y - H s_q||^2.

    First iteration: if the condition holds at mu_in, double mu until it
    fails. Every iteration then shrinks by 0.9 until the condition holds,
    so the first iteration walks back from the first failing doubled value.
    ``doublings`` counts every doubling tried, the failing one included.
    """
    if mu_in <= 0:
        raise ValueError("step size must be positive")
    s_q = np.asarray(s_q, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_dims(H, s_q, y)
    if H_s_q is None:
        H_s_q = H.matvec(s_q)
    old = residual_sq(H, s_q, y, H_s=H_s_q)
    if slack is None:
        slack = DESCENT_SLACK * old
    gradient = H.rmatvec(y - H_s_q)

    def trial(mu):
        s_hat = hard_threshold(s_q + mu * gradient, r)
        H_s_hat = H.matvec(s_hat)
        return s_hat, H_s_hat, residual_sq(H, s_hat, y, H_s=H_s_hat)

    mu = mu_in
    s_hat, H_s_hat, new = trial(mu)
    doublings = shrinks = 0

    if first_iteration and _descent_holds(new, old, slack) and np.any(gradient):
        while doublings < DOUBLING_CAP:
            mu *= 2.0
            doublings += 1
            s_hat, H_s_hat, new = trial(mu)
            if not _descent_holds(new, old, slack):
                break
        logger.debug("Step size doubled %d time(s) to %.6g", doublings, mu)

    while not _descent_holds(new, old, slack):
        if shrinks >= SHRINK_CAP:
            raise StepSizeError(f"step size search exceeded {SHRINK_CAP} shrinks; check the operator adjoint")
        mu *= SHRINK_FACTOR
        shrinks += 1
        s_hat, H_s_hat, new = trial(mu)

    return StepSearch(mu=mu, s_hat=s_hat, shrinks=shrinks, doublings=doublings, H_s_hat=H_s_hat, residual_sq=new)


def overrelax_line(current: np.ndarray, anchor: np.ndarray, H: LinearOperator, y: np.ndarray, *,
                   H_current: Optional[np.ndarray] = None, H_anchor: Optional[np.ndarray] = None) -> LineSearch:
    """
    Exact minimizer of ||y - H z||^2 over z = current + alpha (current - anchor).
    A degenerate direction (H current == H anchor) gives alpha = 0.
    """
    current = np.asarray(current, dtype=float)
    anchor = np.asarray(anchor, dtype=float)
    if H_current is None:
        H_current = H.matvec(current)
    if H_anchor is None:
        H_anchor = H.matvec(anchor)
    direction = H_current - H_anchor
    denom = float(np.dot(direction, direction))
    if denom <= 0.0 or not math.isfinite(denom):
        return LineSearch(alpha=0.0, point=current.copy(), H_point=H_current.copy())
    alpha = float(np.dot(direction, y - H_current)) / denom
    return LineSearch(alpha=alpha, point=current + alpha * (current - anchor), H_point=H_current + alpha * direction)


def _spectral_estimate(H: LinearOperator, config: SolverConfig, rho: Optional[float]) -> SpectralEstimate:
    if rho is not None:
        return SpectralEstimate(rho=rho, iterations_used=0, converged=True)
    estimate = spectral_norm(H, tol=1e-8, max_iters=5000, seed=config.seed)
    logger.info("Spectral norm estimate rho_H = %.6g (%d power iterations)", estimate.rho, estimate.iterations_used)
    return estimate


def _start(y: np.ndarray, H: LinearOperator, config: SolverConfig, s0: Optional[np.ndarray]):
    y = np.asarray(y, dtype=float)
    s = np.zeros(H.shape[1]) if s0 is None else hard_threshold(s0, config.r)
    _check_dims(H, s, y)
    H_s = H.matvec(s)
    return y, s, H_s, residual_sq(H, s, y, H_s=H_s)


def _converged(s_new: np.ndarray, s_old: np.ndarray, epsilon: float) -> bool:
    diff = s_new - s_old
    return float(np.dot(diff, diff)) / s_new.size < epsilon


def _finish(name: str, s: np.ndarray, trace: IterationTrace, converged: bool, rho: float, max_iters: int) -> SolverResult:
    if converged:
        logger.info("%s converged after %d iterations, residual^2 = %.6g", name, len(trace), trace.residuals[-1])
    else:
        logger.warning("%s stopped at max_iters = %d, residual^2 = %.6g", name, max_iters, trace.residuals[-1])
    return SolverResult(s_I=s, trace=trace, converged=converged, rho=rho)


def _iht_update(s: np.ndarray, H_s: np.ndarray, mu: float, H: LinearOperator, y: np.ndarray,
                config: SolverConfig, q: int, slack: float) -> StepSearch:
    """Step 1 of both schemes: adaptive search, or a single step at the fixed mu."""
    if config.step_policy == "adaptive":
        return step_size_search(s, H, y, config.r, mu, first_iteration=(q == 1), H_s_q=H_s, slack=slack)
    s_hat = iht_step(s, mu, H, y, config.r, gradient=H.rmatvec(y - H_s))
    H_s_hat = H.matvec(s_hat)
    return StepSearch(mu=mu, s_hat=s_hat, shrinks=0, doublings=0, H_s_hat=H_s_hat,
                      residual_sq=residual_sq(H, s_hat, y, H_s=H_s_hat))


def mask_iht(y: np.ndarray, H: LinearOperator, config: SolverConfig, s0: Optional[np.ndarray] = None,
             rho: Optional[float] = None) -> SolverResult:
    """Mask IHT from s0 (pre-thresholded to r entries)."""
    y, s, H_s, res0 = _start(y, H, config, s0)
    estimate = _spectral_estimate(H, config, rho)
    mu = estimate.step_bound(config.rho_safety)
    slack = DESCENT_SLACK * res0
    trace = IterationTrace(initial_residual_sq=res0)
    converged = False

    for q in range(1, config.max_iters + 1):
        step = _iht_update(s, H_s, mu, H, y, config, q, slack)
        mu = step.mu
        trace.append(IterationRecord(q=q, residual_sq=step.residual_sq, mu=mu, decision="iht", shrinks=step.shrinks))
        logger.debug("IHT q=%d residual^2=%.6g mu=%.6g shrinks=%d", q, step.residual_sq, mu, step.shrinks)

        done = _converged(step.s_hat, s, config.epsilon)
        s, H_s = step.s_hat, step.H_s_hat
        if done:
            converged = True
            break

    return _finish("mask IHT", s, trace, converged, estimate.rho, config.max_iters)


def mask_dore(y: np.ndarray, H: LinearOperator, config: SolverConfig, s0: Optional[np.ndarray] = None,
              rho: Optional[float] = None) -> SolverResult:
    """Mask DORE: IHT step, two overrelaxations, thresholding, decision."""
    y, s, H_s, res0 = _start(y, H, config, s0)
    estimate = _spectral_estimate(H, config, rho)
    mu = estimate.step_bound(config.rho_safety)
    slack = DESCENT_SLACK * res0
    trace = IterationTrace(initial_residual_sq=res0)
    s_prev, H_s_prev = s.copy(), H_s.copy()
    converged = False

    for q in range(1, config.max_iters + 1):
        # 1. mask IHT step
        step = _iht_update(s, H_s, mu, H, y, config, q, slack)
        mu, s_hat, H_s_hat, res_hat = step.mu, step.s_hat, step.H_s_hat, step.residual_sq

        # 2.-3. overrelaxations against s^(q) and s^(q-1)
        first = overrelax_line(s_hat, s, H, y, H_current=H_s_hat, H_anchor=H_s)
        second = overrelax_line(first.point, s_prev, H, y, H_current=first.H_point, H_anchor=H_s_prev)

        # 4. thresholding
        s_tilde = hard_threshold(second.point, config.r)
        H_s_tilde = H.matvec(s_tilde)
        res_tilde = residual_sq(H, s_tilde, y, H_s=H_s_tilde)

        # 5. decision, ties go to s_hat
        if res_tilde < res_hat:
            s_new, H_s_new, new_res, decision = s_tilde, H_s_tilde, res_tilde, "overrelaxed"
        else:
            s_new, H_s_new, new_res, decision = s_hat, H_s_hat, res_hat, "iht"

        trace.append(IterationRecord(q=q, residual_sq=new_res, mu=mu, alpha1=first.alpha, alpha2=second.alpha,
                                     decision=decision, shrinks=step.shrinks))
        logger.debug("DORE q=%d residual^2=%.6g mu=%.6g a1=%.4g a2=%.4g %s",
                     q, new_res, mu, first.alpha, second.alpha, decision)

        done = _converged(s_new, s, config.epsilon)
        s_prev, H_s_prev = s, H_s
        s, H_s = s_new, H_s_new
        if done:
            converged = True
            break

    return _finish("mask DORE", s, trace, converged, estimate.rho, config.max_iters)


def mask_ista(y: np.ndarray, H: LinearOperator, config: SolverConfig, s0: Optional[np.ndarray] = None,
              rho: Optional[float] = None) -> SolverResult:
    """Proximal gradient on 0.5 ||y - H s||^2 + tau ||s||_1 with fixed mu = 1/rho_H^2."""
    y = np.asarray(y, dtype=float)
    s = np.zeros(H.shape[1]) if s0 is None else np.asarray(s0, dtype=float).copy()
    _check_dims(H, s, y)
    estimate = _spectral_estimate(H, config, rho)
    mu = estimate.step_bound(config.rho_safety)
    H_s = H.matvec(s)
    trace = IterationTrace(initial_residual_sq=residual_sq(H, s, y, H_s=H_s))
    converged = False

    for q in range(1, config.max_iters + 1):
        s_new = soft_threshold(s + mu * H.rmatvec(y - H_s), mu * config.tau)
        H_s = H.matvec(s_new)
        res = residual_sq(H, s_new, y, H_s=H_s)
        objective = p1_objective(H, s_new, y, config.tau, H_s=H_s)
        trace.append(IterationRecord(q=q, residual_sq=res, mu=mu, decision="ista", objective=objective))
        logger.debug("ISTA q=%d objective=%.6g", q, objective)

        done = _converged(s_new, s, config.epsilon)
        s = s_new
        if done:
            converged = True
            break

    return _finish("mask ISTA", s, trace, converged, estimate.rho, config.max_iters)


def initialize_from_fbp(fbp_image: np.ndarray, spec: WaveletSpec, mask: Mask, iset: IdentifiableSet, r: int) -> np.ndarray:
    """s0 = T_r( select_I( Psi^T( masked FBP image ) ) )."""
    masked = embed(restrict(fbp_image, mask), mask)
    return hard_threshold(iset.select(forward_dwt2(masked, spec)), r)


def reconstruct_image(s_I: np.ndarray, spec: WaveletSpec, mask: Mask, iset: IdentifiableSet) -> np.ndarray:
    """Psi_{M,I} s_I placed on the grid, zero outside the mask."""
    return embed(restrict(inverse_dwt2(iset.lift(s_I), spec), mask), mask)
