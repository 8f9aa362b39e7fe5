import logging
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np
from pydantic import BaseModel
from sqlalchemy import update

from app.config import ExperimentConfig, get
from app.db.database import SessionLocal, init_db
from app.db.models import ReconstructionRun
from app.ct import (
    Sinogram,
    build_sampling_operator,
    ellipse_sinogram,
    fbp,
    limited_angles,
    measurements_from_sinogram,
    radon,
    shepp_logan,
)
from app.exceptions import EXIT_CONVERGED, EXIT_MAX_ITERS, ConfigError
from app.file_io import (
    read_image,
    read_mask,
    read_sinogram,
    write_image,
    write_mask,
    write_pgm,
    write_report,
    write_sinogram,
)
from app.hull import ThresholdPolicy, extract_hull_mask
from app.masking import Mask, identifiable_set
from app.metrics import PsnrReport, psnr, report_lines
from app.operators import compose_H, spectral_norm
from app.solvers import (
    SolverConfig,
    SolverResult,
    initialize_from_fbp,
    mask_dore,
    mask_iht,
    mask_ista,
    reconstruct_image,
)
from app.transforms import WaveletSpec

logger = logging.getLogger(__name__)

PHANTOM_IMAGE = "phantom.mrimg"
PHANTOM_PREVIEW = "phantom.pgm"
SINOGRAM_FILE = "sinogram.mrsino"
HULL_SINOGRAM_FILE = "hull_sinogram.mrsino"
MASK_FILE = "mask.pgm"
HULL_STATS_FILE = "hull_stats.txt"
RECON_IMAGE = "recon.mrimg"
RECON_PREVIEW = "recon.pgm"
TRACE_FILE = "trace.csv"
PSNR_FILE = "psnr.txt"

_SOLVERS = {"iht": mask_iht, "dore": mask_dore, "ista": mask_ista}


class HullStats(BaseModel):
    p_M: int
    p: int
    ratio: float


@dataclass
class ReconstructionOutcome:
    exit_code: int
    image: np.ndarray
    mask: Mask
    report: Optional[PsnrReport] = None
    result: Optional[SolverResult] = None


def _output_dir(config: ExperimentConfig) -> Path:
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _threshold_policy(config: ExperimentConfig) -> ThresholdPolicy:
    return ThresholdPolicy(fraction=config.hull_fraction, absolute=config.hull_absolute,
                           margin_bins=config.hull_margin_bins)


def _phantom_sinograms(config: ExperimentConfig):
    image, ellipses = shepp_logan(config.n, config.phantom, config.phantom_oversample)
    angles = limited_angles(config.angle_spacing_deg, config.missing_span_deg, config.missing_start_deg)
    sinogram = ellipse_sinogram(ellipses, angles, config.detector_count, n=config.n)
    hull_angles = limited_angles(180.0 / config.hull_angles)
    hull_sinogram = ellipse_sinogram(ellipses, hull_angles, config.detector_count, n=config.n)
    return image, sinogram, hull_sinogram


def cmd_phantom(config: ExperimentConfig) -> dict[str, Path]:
    """Write the Shepp-Logan raster plus its analytic measurement and hull sinograms."""
    out = _output_dir(config)
    image, sinogram, hull_sinogram = _phantom_sinograms(config)
    sinogram.check_end_bins()
    paths = {
        "image": out / PHANTOM_IMAGE,
        "preview": out / PHANTOM_PREVIEW,
        "sinogram": out / SINOGRAM_FILE,
        "hull_sinogram": out / HULL_SINOGRAM_FILE,
    }
    write_image(paths["image"], image)
    write_pgm(paths["preview"], image)
    write_sinogram(paths["sinogram"], sinogram)
    write_sinogram(paths["hull_sinogram"], hull_sinogram)
    logger.info("Phantom n=%d: %d projections x %d detectors", config.n, sinogram.K, sinogram.d)
    return paths


def cmd_sinogram(config: ExperimentConfig) -> Path:
    """Discrete sinogram of ``image`` when given, else the analytic phantom sinogram."""
    out = _output_dir(config)
    angles = limited_angles(config.angle_spacing_deg, config.missing_span_deg, config.missing_start_deg)
    if config.image is not None:
        config.require_files("image")
        image = read_image(config.image)
        sinogram = radon(image, angles, config.detectors or 2 * image.shape[0] - 1)
    else:
        _, sinogram, _ = _phantom_sinograms(config)
    path = out / SINOGRAM_FILE
    write_sinogram(path, sinogram)
    return path


def _hull_source(config: ExperimentConfig) -> Path:
    if config.hull_sinogram is not None:
        config.require_files("hull_sinogram")
        return config.hull_sinogram
    config.require_files("sinogram")
    return config.sinogram


def cmd_hull(config: ExperimentConfig) -> HullStats:
    out = _output_dir(config)
    mask = extract_hull_mask(read_sinogram(_hull_source(config)), _threshold_policy(config), config.n)
    write_mask(out / MASK_FILE, mask)
    p = config.n * config.n
    stats = HullStats(p_M=mask.p_M, p=p, ratio=mask.p_M / p)
    write_report(out / HULL_STATS_FILE, report_lines(stats))
    return stats


def _resolve_mask(config: ExperimentConfig, source: str) -> Mask:
    if source == "full":
        return Mask.full(config.n)
    if source == "file":
        config.require_files("mask_file")
        mask = read_mask(config.mask_file)
        if mask.n != config.n:
            raise ConfigError(f"mask file is {mask.n} x {mask.n}, expected n = {config.n}")
        return mask
    return extract_hull_mask(read_sinogram(_hull_source(config)), _threshold_policy(config), config.n)


def _evaluate(config: ExperimentConfig, image: np.ndarray, recon_mask: Mask) -> Optional[PsnrReport]:
    if config.truth is None:
        return None
    config.require_files("truth")
    truth = read_image(config.truth)
    region = recon_mask if config.psnr_mask == "recon" else _resolve_mask(config, config.psnr_mask)
    report = psnr(image, truth, region)
    logger.info("PSNR inside mask (p_M = %d): %.3f dB", report.p_M, report.psnr_db)
    return report


def _solver_config(config: ExperimentConfig, r: int, tau: float) -> SolverConfig:
    return SolverConfig(r=r, epsilon=config.epsilon, max_iters=config.max_iters, tau=tau,
                        step_policy=config.step_policy, rho_safety=config.rho_safety, seed=config.seed)


def cmd_reconstruct(config: ExperimentConfig) -> ReconstructionOutcome:
    """
    FBP, then (unless method = fbp) the configured sparse solver started from
    the masked, thresholded FBP coefficients. Writes image, trace and PSNR report.
    """
    config.require_files("sinogram")
    out = _output_dir(config)
    sinogram = read_sinogram(config.sinogram)
    if sinogram.d != config.detector_count:
        raise ConfigError(f"sinogram has {sinogram.d} detectors, config expects {config.detector_count}")
    mask = _resolve_mask(config, config.mask)
    run_id = _record_run_start(config)

    try:
        fbp_image = fbp(sinogram, config.n)
        result = p_I = r = None
        if config.method == "fbp":
            image, exit_code = fbp_image, EXIT_CONVERGED
        else:
            image, result, p_I, r = _run_solver(config, sinogram, mask, fbp_image)
            exit_code = EXIT_CONVERGED if result.converged else EXIT_MAX_ITERS
            result.trace.write_csv(out / TRACE_FILE)

        write_image(out / RECON_IMAGE, image)
        write_pgm(out / RECON_PREVIEW, image)
        report = _evaluate(config, image, mask)
        if report is not None:
            write_report(out / PSNR_FILE, report_lines(report))
    except Exception as exc:
        _record_run_finish(run_id, status="FAILED", error_message=str(exc))
        raise

    _record_run_finish(
        run_id,
        status="CONVERGED" if exit_code == EXIT_CONVERGED else "MAX_ITERS",
        p_M=mask.p_M,
        p_I=p_I,
        sparsity=r,
        iterations=result.iterations if result else 0,
        psnr_db=report.psnr_db if report and report.finite else None,
    )
    return ReconstructionOutcome(exit_code=exit_code, image=image, mask=mask, report=report, result=result)


def sparsity_level(config: ExperimentConfig, p_I: int) -> int:
    """
    r for IHT / DORE: ``sparsity`` when set, else ``sparsity_fraction`` of the
    full grid, so paired full-mask and hull-mask runs keep the same r. Capped at p_I.
    """
    r = config.sparsity or int(round(config.sparsity_fraction * config.n * config.n))
    return max(1, min(r, p_I))


def _run_solver(config: ExperimentConfig, sinogram: Sinogram, mask: Mask, fbp_image: np.ndarray):
    spec = WaveletSpec(size=config.n, family=config.wavelet, levels=config.levels)
    iset = identifiable_set(spec, mask)
    phi = build_sampling_operator(sinogram.angles, sinogram.d, config.n, config.freq_mode,
                                  pitch=sinogram.pitch, offset=sinogram.offset)
    H = compose_H(phi, spec, mask, iset)
    y = measurements_from_sinogram(sinogram, config.freq_mode).values

    estimate = spectral_norm(H, tol=1e-8, max_iters=5000, seed=config.seed)
    logger.info("rho_H = %.6g (converged=%s)", estimate.rho, estimate.converged)

    if config.method == "ista":
        r = iset.p_I
        tau = config.tau * float(np.max(np.abs(H.rmatvec(y)))) if config.tau_rule == "relative" else config.tau
    else:
        r = sparsity_level(config, iset.p_I)
        tau = 0.0
    logger.info("Running %s: p_M = %d, p_I = %d, r = %d, tau = %.3g", config.method, mask.p_M, iset.p_I, r, tau)

    s0 = initialize_from_fbp(fbp_image, spec, mask, iset, r)
    result = _SOLVERS[config.method](y, H, _solver_config(config, r, tau), s0, rho=estimate.rho)
    return reconstruct_image(result.s_I, spec, mask, iset), result, iset.p_I, r


def cmd_eval(config: ExperimentConfig) -> PsnrReport:
    """PSNR of ``image`` against ``truth`` inside the configured evaluation mask."""
    config.require_files("image", "truth")
    out = _output_dir(config)
    image = read_image(config.image)
    truth = read_image(config.truth)
    mask = _resolve_mask(config, config.mask if config.psnr_mask == "recon" else config.psnr_mask)
    report = psnr(image, truth, mask)
    write_report(out / PSNR_FILE, report_lines(report))
    return report


def _record_run_start(config: ExperimentConfig):
    if not get("MASKRECON_RECORD_RUNS"):
        return None
    init_db()
    now = datetime.now(timezone.utc)
    run = ReconstructionRun(
        method=config.method,
        mask_source=config.mask,
        n=config.n,
        sparsity=config.sparsity,
        status="IN_PROGRESS",
        config_json=config.model_dump(mode="json"),
        output_dir=str(config.out),
        created_at=now,
        updated_at=now,
    )
    with SessionLocal() as session:
        session.add(run)
        session.commit()
        return run.run_id


def _record_run_finish(run_id, status: str, **fields):
    if run_id is None:
        return
    with SessionLocal() as session:
        stmt = (
            update(ReconstructionRun)
            .where(
                ReconstructionRun.run_id == run_id,
                ReconstructionRun.status == "IN_PROGRESS",
            )
            .values(status=status, updated_at=datetime.now(timezone.utc), **fields)
        )
        session.execute(stmt)
        session.commit()
