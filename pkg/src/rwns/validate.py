"""Invariant battery behind ``rwns validate``.

Every check runs on a small 1D grid and reports a measured value against a
tolerance. ``mutation=True`` evolves the energy check with the exchange sign
flipped while still measuring the true energy, which must then fail.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .field import ComplexField, KernelFamily, KernelSpec, ModelParams, Nonlinearity, PeriodicGrid, RealField, sample_kernel
from .integrator import Scheme, StepperConfig, drive_substep, evolve
from .linear import omega_analytic
from .operators import Discretization, exchange_apply
from .protocols import broadband_field, plane_wave


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def _check(name, value, tol, detail=""):
    value = float(value)
    return CheckResult(name, bool(np.isfinite(value) and value < tol), value, tol, detail)


GRID = PeriodicGrid(1, 64, 20.0)


def _base(**kw) -> ModelParams:
    kw.setdefault("kappa", -0.5)
    kw.setdefault("kernel", KernelSpec(KernelFamily.GAUSSIAN, 1.0))
    return ModelParams(w=1.0, u=0.3, **kw)


def check_mass(rng) -> CheckResult:
    phi = RealField(GRID, 0.2 * np.cos(2 * GRID.dk * GRID.x))
    p = _base(phi=phi, gamma=0.7, beta=1.0, nonlinearity=Nonlinearity(1.0))
    psi0 = broadband_field(GRID, rng, k_band=2.0)
    traj = evolve(psi0, p, StepperConfig(Scheme.STRANG, 1e-3, 2.0, 2000, 100))
    return _check("mass_conservation", traj.relative_drift("mass"), 1e-10, "driven nonlinear Strang, 2000 steps")


def check_drive_substep(rng) -> CheckResult:
    psi = broadband_field(GRID, rng, k_band=2.0)
    phi = RealField(GRID, rng.standard_normal(GRID.shape))
    out = drive_substep(psi, phi, 1.3, 0.05)
    m0 = np.sum(np.abs(psi.values) ** 2)
    m1 = np.sum(np.abs(out.values) ** 2)
    return _check("drive_substep_mass", abs(m1 - m0) / m0, 1e-13)


def check_energy(rng, mutation: bool = False) -> CheckResult:
    p = _base(beta=1.0, nonlinearity=Nonlinearity(1.0))
    run = p.replace(kappa=-p.kappa) if mutation else p
    psi0 = broadband_field(GRID, rng, k_band=2.0)
    traj = evolve(psi0, run, StepperConfig(Scheme.STRANG, 1e-3, 5.0, 250, 250))
    # the run's own monitors use the run params; measure with the true ones
    d = Discretization(GRID, p)
    energy = np.array([d.energy(s.values) for s in traj.snapshots])
    drift = np.max(np.abs(energy - energy[0])) / abs(energy[0])
    label = "energy_conservation" + ("[mutated]" if mutation else "")
    return _check(label, drift, 1e-6, "PowerLaw sigma=1, T=5")


def check_momentum(rng) -> CheckResult:
    # pointwise nonlinear phases alias on coarse grids; use a resolved one
    grid = PeriodicGrid(1, 128, 20.0)
    p = _base(beta=1.0, nonlinearity=Nonlinearity(1.0))
    psi0 = broadband_field(grid, rng, k_band=2.0)
    traj = evolve(psi0, p, StepperConfig(Scheme.STRANG, 1e-3, 2.0, 2000, 100))
    mom = traj.monitor_series("momentum")
    dev = np.max(np.abs(mom - mom[0])) / (1 + np.max(np.abs(mom[0])))
    return _check("momentum_conservation", dev, 1e-8)


def check_gauge(rng) -> list[CheckResult]:
    phi = RealField(GRID, 0.3 * np.sin(GRID.dk * GRID.x))
    p = _base(phi=phi, gamma=0.5, beta=1.0, nonlinearity=Nonlinearity(1.0))
    psi0 = broadband_field(GRID, rng, k_band=2.0)
    cfg = StepperConfig(Scheme.STRANG, 1e-3, 0.5, 500, 500)
    ref = evolve(psi0, p, cfg).snapshots[-1].values
    phase = np.exp(0.7j)
    rotated = evolve(psi0.with_values(phase * psi0.values), p, cfg).snapshots[-1].values
    shifted = evolve(psi0, p.replace(phi=RealField(GRID, phi.values + 2.5)), cfg).snapshots[-1].values
    return [
        _check("gauge_invariance", np.max(np.abs(rotated - phase * ref)), 1e-12),
        _check("centering_invariance", np.max(np.abs(shifted - ref)), 1e-12),
    ]


def _dense_exchange(kernel_values, v, dx):
    n = len(v)
    idx = np.subtract.outer(np.arange(n), np.arange(n)) % n
    mat = kernel_values[idx] * dx
    return mat @ v - mat.sum(axis=1) * v


def check_oracles(rng) -> list[CheckResult]:
    errs, qerrs = [], []
    grid = PeriodicGrid(1, 64, 40.0)
    for fam in KernelFamily:
        spec = KernelSpec(fam, 1.0)
        kv = sample_kernel(spec, grid).values
        d = Discretization(grid, ModelParams(kappa=1.0, kernel=spec))
        for _ in range(5):
            v = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
            dense = _dense_exchange(kv, v, grid.dx)
            fast = d.exchange(v)
            errs.append(np.linalg.norm(fast - dense) / np.linalg.norm(dense))
            diff = np.abs(v[:, None] - v[None, :]) ** 2
            idx = np.subtract.outer(np.arange(grid.n), np.arange(grid.n)) % grid.n
            q_dense = 0.5 * np.sum(kv[idx] * diff) * grid.dx**2
            qerrs.append(abs(d.qk(v) - q_dense) / q_dense)
            # the public convolution path must agree as well
            pub = exchange_apply(ComplexField(grid, v), sample_kernel(spec, grid), spec.mass).values
            errs.append(np.linalg.norm(pub - dense) / np.linalg.norm(dense))
    return [
        _check("exchange_fft_vs_dense", max(errs), 1e-8),
        _check("qk_fft_vs_dense", max(qerrs), 1e-8),
    ]


def check_dispersion() -> CheckResult:
    grid = PeriodicGrid(1, 128, 40.0)
    errs = []
    for fam in KernelFamily:
        p = ModelParams(w=1.0, u=0.2, kappa=-0.8, kernel=KernelSpec(fam, 1.0))
        for j in (1, 5, 12):
            k = j * grid.dk
            traj = evolve(plane_wave(grid, k), p, StepperConfig(Scheme.STRANG, 0.01, 1.0, 10, 100))
            phase = np.unwrap(np.angle(traj.values[:, 0]))
            omega = -(phase[-1] - phase[0]) / (traj.times[-1] - traj.times[0])
            ref = float(omega_analytic(p, k))
            errs.append(abs(omega - ref) / max(abs(ref), 1e-12))
    return _check("single_mode_dispersion", max(errs), 1e-6)


def run_battery(seed: int = 0, mutation: bool = False) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    out = [check_mass(rng), check_drive_substep(rng), check_energy(rng, mutation), check_momentum(rng)]
    out += check_gauge(rng)
    out += check_oracles(rng)
    out.append(check_dispersion())
    return out
