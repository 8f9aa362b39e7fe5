"""
Property suites over many random instances plus the scaled limited-angle
Shepp-Logan experiment (slow, run with --runslow).
"""
import numpy as np
import pytest

from app import tasks
from app.config import ExperimentConfig
from app.operators import as_operator
from app.solvers import SolverConfig, mask_dore, mask_iht
from tests.conftest import planted_instance

SLACK = 1e-12


def _random_instances(rng, count):
    for _ in range(count):
        m = int(rng.integers(5, 41))
        p = int(rng.integers(m + 1, 121))
        A = rng.standard_normal((m, p)) * rng.uniform(0.1, 3.0)
        r = int(rng.integers(1, max(2, m // 2)))
        s0 = np.zeros(p)
        s0[rng.choice(p, r, replace=False)] = rng.standard_normal(r)
        yield A, rng.standard_normal(m), r, s0


def test_residuals_and_step_sizes_never_increase(rng):
    for A, y, r, s0 in _random_instances(rng, 200):
        rho = float(np.linalg.svd(A, compute_uv=False)[0])
        config = SolverConfig(r=r, max_iters=30, epsilon=1e-300)
        for solver in (mask_iht, mask_dore):
            result = solver(y, as_operator(A), config, s0, rho=rho)
            residuals = result.trace.residuals
            assert np.all(np.diff(residuals) <= SLACK * residuals[0])

            steps = result.trace.step_sizes
            assert np.all(np.diff(steps[1:]) <= 0.0)
            assert steps[-1] >= 0.9 / (1.01 * rho) ** 2


def test_planted_sparse_signals_are_recovered(rng):
    recovered = {"iht": 0, "dore": 0}
    dore_faster = 0
    for _ in range(400):
        H, s_true, y = planted_instance(rng, 40, 100, 5)
        rho = float(np.linalg.svd(H, compute_uv=False)[0])
        config = SolverConfig(r=5, epsilon=1e-20, max_iters=20000)
        iht = mask_iht(y, as_operator(H), config, rho=rho)
        dore = mask_dore(y, as_operator(H), config, rho=rho)
        for name, result in (("iht", iht), ("dore", dore)):
            recovered[name] += np.linalg.norm(result.s_I - s_true) <= 1e-6 * np.linalg.norm(s_true)
        dore_faster += dore.iterations <= iht.iterations
    assert recovered["iht"] >= 380
    assert recovered["dore"] >= 380
    assert dore_faster >= 360


@pytest.mark.slow
def test_mask_constraint_improves_limited_angle_reconstruction(tmp_path):
    phantom = tasks.cmd_phantom(ExperimentConfig(n=128, out=tmp_path / "phantom"))

    def run(name, **values):
        config = ExperimentConfig(n=128, out=tmp_path / name, sinogram=phantom["sinogram"],
                                  hull_sinogram=phantom["hull_sinogram"], truth=phantom["image"],
                                  max_iters=1500, **values)
        return tasks.cmd_reconstruct(config).report.psnr_db

    fbp = run("fbp", method="fbp")
    # full-mask and hull-mask sparsity in the ratio 8 : 7
    dore_full = run("dore_full", method="dore", mask="full", sparsity=2400)
    dore_masked = run("dore_mask", method="dore", mask="hull", sparsity=2100)
    assert dore_masked > dore_full + 1.0
    assert dore_full > fbp + 1.0

    ista_full = run("ista_full", method="ista", mask="full")
    ista_masked = run("ista_mask", method="ista", mask="hull")
    assert ista_masked > ista_full + 1.0
    assert ista_full > fbp + 1.0
