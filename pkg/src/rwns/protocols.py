"""Reference experiment recipes shared by the CLI and the test-suite.

Defaults are desk-scale: 1D, N=256, windows up to T=200.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .field import ComplexField, ModelParams, PeriodicGrid, RealField
from .integrator import Scheme, StepperConfig, Trajectory, evolve
from .inversion import (
    FitResult,
    consistency_check,
    consistency_threshold,
    fit_drive,
    fit_kernel,
)
from .linear import DispersionCurve, omega_analytic
from .observables import (
    KOmegaSpectrum,
    SidebandMeasurement,
    add_noise,
    extract_dispersion,
    k_omega_spectrum,
    sideband_powers,
)


def plane_wave(grid: PeriodicGrid, k: float, amplitude: float = 1.0) -> ComplexField:
    return ComplexField(grid, amplitude * np.exp(1j * k * grid.coords[0]))


def broadband_field(
    grid: PeriodicGrid, rng: np.random.Generator, k_band: float | None = None, amplitude: float = 1.0
) -> ComplexField:
    """Equal-magnitude Fourier modes with random phases for ``|k| <= k_band``.

    ``k_band`` defaults to ``pi / (2 dx)``; the field is scaled so that the
    mean of ``|psi|^2`` is ``amplitude**2``.
    """
    if k_band is None:
        k_band = np.pi / (2 * grid.dx)
    mask = grid.kmag <= k_band + 1e-12
    phases = rng.uniform(0, 2 * np.pi, size=grid.shape)
    coeff = np.where(mask, np.exp(1j * phases), 0.0)
    coeff *= amplitude / np.sqrt(np.count_nonzero(mask))
    return ComplexField(grid, np.fft.ifftn(coeff) * grid.size)


def cosine_phase(grid: PeriodicGrid, q: float, amplitude: float) -> RealField:
    return RealField(grid, amplitude * np.cos(q * grid.coords[0]))


# ---------------------------------------------------------------- O1


@dataclass
class DispersionRun:
    traj: Trajectory
    spectrum: KOmegaSpectrum
    curve: DispersionCurve


def dispersion_protocol(
    params: ModelParams,
    grid: PeriodicGrid | None = None,
    t_window: float = 200.0,
    dt: float = 0.01,
    snapshot_stride: int = 5,
    seed: int = 0,
    snr_db: float | None = None,
    fit_baseline: bool = False,
    traj: Trajectory | None = None,
) -> DispersionRun:
    """Broadband linear run, (k, omega) spectrum and dispersion extraction.

    Pass ``traj`` to reuse a clean run (e.g. with different noise draws).
    """
    rng = np.random.default_rng(seed)
    if traj is None:
        grid = grid or PeriodicGrid(1, 256, 80.0)
        psi0 = broadband_field(grid, rng)
        n_snap = int(round(t_window / (dt * snapshot_stride)))
        cfg = StepperConfig(Scheme.STRANG, dt, n_snap * dt * snapshot_stride - dt * snapshot_stride, snapshot_stride, n_snap * snapshot_stride)
        traj = evolve(psi0, params, cfg)
    noisy = add_noise(traj, snr_db, rng)
    spec = k_omega_spectrum(noisy)
    baseline = None if fit_baseline else (params.w0, params.u0)
    return DispersionRun(traj, spec, extract_dispersion(spec, baseline))


# ---------------------------------------------------------------- O3


def sideband_run(
    params: ModelParams,
    grid: PeriodicGrid,
    k: float,
    q: float,
    coupling: float,
    t_end: float = 100.0,
    dt: float = 0.01,
    snapshot_stride: int = 5,
) -> Trajectory:
    """Plane-wave carrier at ``k`` under ``phi = coupling cos(q x)`` with ``gamma = 1``.

    With ``coupling = 0`` the drive is switched off.
    """
    if coupling == 0:
        p = params.replace(phi=None, gamma=0.0)
    else:
        p = params.replace(phi=cosine_phase(grid, q, coupling), gamma=1.0)
    cfg = StepperConfig(Scheme.STRANG, dt, t_end, snapshot_stride, max(1, int(round(t_end / dt))))
    return evolve(plane_wave(grid, k), p, cfg)


def measure_sidebands(
    traj: Trajectory, k: float, q: float, snr_db: float | None = None, rng: np.random.Generator | None = None
) -> SidebandMeasurement:
    if snr_db is not None and not np.isinf(snr_db):
        traj = add_noise(traj, snr_db, rng or np.random.default_rng(0))
        return sideband_powers(traj, k, q, floor_factor=10.0)
    return sideband_powers(traj, k, q)


SIDEBAND_GRID = PeriodicGrid(1, 128, 8 * np.pi)
# (k, q) pairs on the 0.25 lattice of SIDEBAND_GRID, away from resonance
SIDEBAND_POINTS = [(1.0, 0.5), (1.5, 0.5), (2.0, 0.5), (1.0, 1.0), (2.0, 1.0), (0.5, 1.5)]


def min_detuning(params: ModelParams, points) -> float:
    out = []
    for k, q in points:
        w = omega_analytic(params, [k, k + q, k - q])
        out.append(min(abs(w[0] - w[1]), abs(w[0] - w[2])))
    return float(min(out))


# ---------------------------------------------------------------- pipeline


@dataclass
class PipelineResult:
    fit: FitResult
    o1: DispersionCurve
    o3: list[SidebandMeasurement]
    threshold: float
    extras: dict = field(default_factory=dict)


def inversion_pipeline(
    params: ModelParams,
    coupling: float,
    family=None,
    snr_db: float | None = None,
    seed: int = 0,
    o1_traj: Trajectory | None = None,
    o3_trajs: dict | None = None,
    validation_traj: Trajectory | None = None,
    points=SIDEBAND_POINTS,
    n_boot: int = 200,
    grid: PeriodicGrid | None = None,
    sideband_grid: PeriodicGrid = SIDEBAND_GRID,
) -> PipelineResult:
    """Generate, measure and invert: O1 -> (kappa, shape), O3 -> coupling, O2 validates.

    Clean trajectories may be passed in to reuse simulations across noise
    realizations; noise is always injected post hoc with ``seed``.
    """
    family = family or params.kernel.family
    rng = np.random.default_rng(seed)
    o1 = dispersion_protocol(params, grid=grid, seed=seed, snr_db=snr_db, traj=o1_traj)
    kfit = fit_kernel(o1.curve, family, n_boot=n_boot, seed=seed)

    o3_trajs = o3_trajs if o3_trajs is not None else {}
    meas = []
    for k, q in points:
        if (k, q) not in o3_trajs:
            o3_trajs[(k, q)] = sideband_run(params, sideband_grid, k, q, coupling)
        meas.append(measure_sidebands(o3_trajs[(k, q)], k, q, snr_db, rng))
    rows = [(m.k, m.q, m.ratio) for m in meas]
    dfit = fit_drive(rows, (kfit.kappa, kfit.shape, family), (params.w0, params.u0), n_boot=n_boot, seed=seed)

    if validation_traj is None:
        validation_traj = contrast_validation_run(params)
    fit = FitResult.combine(kfit, dfit)
    fit.o2_consistency = consistency_check(fit, validation_traj)
    threshold = consistency_threshold(fit, validation_traj)
    return PipelineResult(
        fit, o1.curve, meas, threshold,
        extras={"o1_traj": o1.traj, "o3_trajs": o3_trajs, "validation_traj": validation_traj},
    )


def contrast_validation_run(params: ModelParams, k_index: int = 8, t_end: float = 20.0) -> Trajectory:
    """Independent single-mode run used to validate the fitted kernel."""
    grid = PeriodicGrid(1, 256, 80.0)
    cfg = StepperConfig(Scheme.STRANG, 0.01, t_end, 100, 100)
    return evolve(plane_wave(grid, k_index * grid.dk), params.replace(phi=None, gamma=0.0), cfg)
