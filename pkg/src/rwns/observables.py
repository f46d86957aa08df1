"""Observables extracted from trajectories.

* O1: dispersion from the peaks of the (k, omega) power spectrum.
* O2: kernel contrast ``Xi = Q_K / int w0 |grad psi|^2`` per snapshot.
* O3: sideband power ratio and asymmetry around a driven carrier.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal.windows import hann

from .errors import (
    InsufficientSnapshots,
    NoPeak,
    OffLattice,
    WeakCarrier,
)
from .field import ComplexField, ModelParams, PeriodicGrid, kernel_multiplier
from .integrator import Trajectory
from .linear import DispersionCurve

MIN_SPECTRUM_SNAPSHOTS = 64
PEAK_PROMINENCE = 5.0
# pure-noise columns must not pass: the largest of n exponential bins sits
# near median * log2(n), so peaks also have to clear a multiple of that
FALSE_ALARM_MARGIN = 3.0
SIDEBAND_ROUNDOFF = 1e-24
# columns this far below the strongest one hold only leakage (e.g. drive
# sidebands of populated modes) and are not dispersion measurements
COLUMN_DYNAMIC_RANGE = 1e-3
ZOOM = 16


def _uniform_dt(times: np.ndarray) -> float:
    dts = np.diff(times)
    dt = float(np.mean(dts))
    if np.max(np.abs(dts - dt)) > 1e-9 * max(dt, 1.0):
        raise InsufficientSnapshots("snapshots are not uniformly spaced in time")
    return dt


def _modal(values: np.ndarray) -> np.ndarray:
    """Fourier coefficients ``a_k = (1/N) sum_j psi_j exp(-i k x_j)`` per snapshot."""
    return np.fft.fft(values, axis=1) / values.shape[1]


@dataclass(frozen=True, eq=False)
class KOmegaSpectrum:
    """Space-time power spectrum, k and omega both ascending.

    ``power`` is normalized so that its total equals the window-weighted
    time average of the mass. ``modal`` keeps the per-k time series (same
    k order) so peaks can be refined off the FFT grid.
    """

    k: np.ndarray
    omega: np.ndarray
    power: np.ndarray
    t_window: float
    omega_resolution: float
    modal: np.ndarray = field(repr=False)
    times: np.ndarray = field(repr=False)
    window: np.ndarray = field(repr=False)

    def windowed_dtft(self, row: int, omegas: np.ndarray) -> np.ndarray:
        """``|sum_t w(t) a_k(t) exp(i omega t)|^2`` at arbitrary frequencies."""
        t = self.times - self.times[0]
        x = self.window * self.modal[row]
        return np.abs(np.exp(1j * np.outer(omegas, t)) @ x) ** 2


def k_omega_spectrum(traj: Trajectory) -> KOmegaSpectrum:
    grid = traj.grid
    if grid.dim != 1:
        raise NotImplementedError("k-omega spectra are implemented for 1D grids")
    n_t = len(traj.snapshots)
    if n_t < MIN_SPECTRUM_SNAPSHOTS:
        raise InsufficientSnapshots(f"need >= {MIN_SPECTRUM_SNAPSHOTS} snapshots, got {n_t}")
    times = traj.times
    dt = _uniform_dt(times)
    a = _modal(traj.values).T  # (n_k, n_t)
    order = np.argsort(grid.wavenumbers)
    a = a[order]
    win = hann(n_t, sym=False)
    # exp(+i omega t): positive omega for psi ~ exp(-i omega t)
    spec = np.fft.ifft(win * a, axis=1) * n_t
    omega = 2 * np.pi * np.fft.fftfreq(n_t, d=dt)
    w_order = np.argsort(omega)
    power = grid.length * np.abs(spec[:, w_order]) ** 2 / (n_t * np.sum(win**2))
    t_window = n_t * dt
    return KOmegaSpectrum(
        k=grid.wavenumbers[order],
        omega=omega[w_order],
        power=power,
        t_window=t_window,
        omega_resolution=2 * np.pi / t_window,
        modal=a,
        times=times,
        window=win,
    )


def _parabolic(y_left, y_mid, y_right):
    den = y_left - 2 * y_mid + y_right
    if den >= 0:
        return 0.0
    return float(np.clip(0.5 * (y_left - y_right) / den, -0.5, 0.5))


def _peak_frequency(spec: KOmegaSpectrum, row: int) -> float:
    col = spec.power[row]
    j = int(np.argmax(col))
    d_omega = spec.omega[1] - spec.omega[0]
    if 0 < j < len(col) - 1:
        lg = np.log(col[j - 1 : j + 2] + 1e-300)
        coarse = spec.omega[j] + _parabolic(*lg) * d_omega
    else:
        coarse = spec.omega[j]
    # refine on a zoomed frequency grid, then interpolate again
    fine = coarse + d_omega * np.arange(-ZOOM, ZOOM + 1) / ZOOM
    p = spec.windowed_dtft(row, fine)
    i = int(np.argmax(p))
    if 0 < i < len(p) - 1:
        lg = np.log(p[i - 1 : i + 2] + 1e-300)
        return float(fine[i] + _parabolic(*lg) * d_omega / ZOOM)
    return float(fine[i])


def fit_baseline(k: np.ndarray, omega: np.ndarray) -> tuple[float, float]:
    """Least-squares ``(w0, U0)`` from the top quartile of ``|k|``."""
    ak = np.abs(k)
    sel = ak >= np.quantile(ak, 0.75)
    if np.count_nonzero(sel) < 2:
        raise NoPeak("not enough high-|k| columns to fit a baseline")
    A = np.column_stack([k[sel] ** 2, np.ones(np.count_nonzero(sel))])
    (w0, u0), *_ = np.linalg.lstsq(A, omega[sel], rcond=None)
    return float(w0), float(u0)


def extract_dispersion(spec: KOmegaSpectrum, baseline: tuple[float, float] | None = None) -> DispersionCurve:
    """Per-column spectral peaks and the residual against a quadratic baseline.

    Columns whose peak is less than 5x the column median, or whose total
    power is below ``COLUMN_DYNAMIC_RANGE`` of the strongest column, are dropped and listed in ``dropped``. A column of pure
    noise also fails: its peak must clear ``FALSE_ALARM_MARGIN`` times the
    expected maximum of that many noise bins.
    """
    totals = spec.power.sum(axis=1)
    floor = COLUMN_DYNAMIC_RANGE * totals.max() if totals.size else 0.0
    prominence = max(PEAK_PROMINENCE, FALSE_ALARM_MARGIN * np.log2(len(spec.omega)))
    kept, omegas, dropped = [], [], []
    for row, k in enumerate(spec.k):
        col = spec.power[row]
        med = np.median(col)
        if totals[row] <= floor or col.max() < prominence * med:
            dropped.append(k)
            continue
        kept.append(k)
        omegas.append(_peak_frequency(spec, row))
    if not kept:
        raise NoPeak("no spectral column has a detectable peak")
    k = np.array(kept)
    omega = np.array(omegas)
    if baseline is None:
        baseline = fit_baseline(k, omega)
    w0, u0 = baseline
    residual = omega - (w0 * k**2 + u0)
    return DispersionCurve(
        k, omega, (float(w0), float(u0)), residual, spec.omega_resolution, np.array(dropped)
    )


# ---------------------------------------------------------------- O2


def _contrast(values: np.ndarray, grid: PeriodicGrid, params: ModelParams) -> np.ndarray:
    """Xi for a stack of snapshots with shape ``(n_snap, *grid.shape)``."""
    axes = tuple(range(1, grid.dim + 1))
    vh2 = np.abs(np.fft.fftn(values, axes=axes)) ** 2
    khat = kernel_multiplier(params.kernel, grid)
    num = np.sum((params.kernel.mass - khat) * vh2, axis=axes)
    den = params.w0 * np.sum(grid.k2 * vh2, axis=axes)
    mass = np.sum(vh2, axis=axes)
    out = np.zeros(len(values))
    ok = den > 1e-14 * mass
    out[ok] = num[ok] / den[ok]
    return out


def spectral_contrast_prediction(traj: Trajectory, params: ModelParams) -> float:
    """Contrast of the time-averaged mode occupation under ``params``.

    Reduces to ``(K^(0) - K^(k)) / (w0 k^2)`` for a single Fourier mode.
    """
    grid = traj.grid
    axes = tuple(range(1, grid.dim + 1))
    occ = np.mean(np.abs(np.fft.fftn(traj.values, axes=axes)) ** 2, axis=0)
    khat = kernel_multiplier(params.kernel, grid)
    den = params.w0 * np.sum(grid.k2 * occ)
    if den <= 1e-14 * np.sum(occ):
        return 0.0
    return float(np.sum((params.kernel.mass - khat) * occ) / den)


def kernel_contrast(psi: ComplexField, params: ModelParams) -> float:
    """Ratio of the nonlocal quadratic form to ``int w0 |grad psi|^2``.

    Returns 0 for (numerically) constant fields. Only the kernel and ``w0``
    enter; the phase drive does not.
    """
    return float(_contrast(psi.values[None], psi.grid, params)[0])


@dataclass(frozen=True, eq=False)
class ContrastSeries:
    mean: float
    iqr: tuple[float, float]
    values: np.ndarray
    times: np.ndarray

    @property
    def iqr_width(self) -> float:
        return self.iqr[1] - self.iqr[0]


def contrast_series(traj: Trajectory, params: ModelParams | None = None) -> ContrastSeries:
    """Xi over all stored snapshots; ``params`` defaults to the run's own."""
    if len(traj.snapshots) < 4:
        raise InsufficientSnapshots("contrast statistics need >= 4 snapshots")
    vals = _contrast(traj.values, traj.grid, params or traj.params)
    q25, q75 = np.percentile(vals, [25, 75])
    return ContrastSeries(float(np.mean(vals)), (float(q25), float(q75)), vals, traj.times)


# ---------------------------------------------------------------- O3


@dataclass(frozen=True)
class SidebandMeasurement:
    k: float
    q: float
    p_carrier: float
    p_plus: float
    p_minus: float
    ratio: float
    asymmetry: float


def sideband_powers(traj: Trajectory, k: float, q: float, floor_factor: float = 1e6) -> SidebandMeasurement:
    """Carrier-locked sideband powers averaged over the second half of the run.

    Each sideband series is demodulated against the carrier with a Hann
    taper, so only the component oscillating at the carrier frequency (the
    driven response) is kept; the free oscillation left by the switch-on
    transient averages out when ``|Delta| T`` is large.

    The carrier must exceed ``floor_factor`` times the median mode power.
    The default targets clean simulations; measurements carrying injected
    pixel noise need a lower factor.
    """
    grid = traj.grid
    if grid.dim != 1:
        raise NotImplementedError("sideband analysis is implemented for 1D grids")
    idx = [grid.lattice_index(kk) for kk in (k, k + q, k - q)]
    if q == 0 or any(i is None for i in idx):
        raise OffLattice(f"k={k}, q={q} are not all on the lattice of spacing {grid.dk:g}")
    times = traj.times
    half = times >= times[0] + 0.5 * (times[-1] - times[0])
    a = _modal(traj.values[half])
    win = hann(int(np.count_nonzero(half)), sym=False)
    ic, ip, im = idx
    mode_power = win @ (np.abs(a) ** 2) / win.sum()
    p_c = float(mode_power[ic])
    floor = float(np.median(mode_power))
    if p_c <= 0 or p_c <= floor_factor * floor:
        raise WeakCarrier(f"carrier power {p_c:.3g} is within {floor_factor:g}x of the noise floor {floor:.3g}")
    carrier = a[:, ic]
    norm = win @ (np.abs(carrier) ** 2)
    p = []
    for j in (ip, im):
        c = (win * np.conj(carrier)) @ a[:, j] / norm
        p.append(float(np.abs(c) ** 2) * p_c)
    p_plus, p_minus = p
    tot = p_plus + p_minus
    # roundoff-level sidebands (drive off) carry no asymmetry
    asym = (p_plus - p_minus) / tot if tot > SIDEBAND_ROUNDOFF * p_c else 0.0
    return SidebandMeasurement(float(k), float(q), p_c, p_plus, p_minus, tot / p_c, asym)


# ---------------------------------------------------------------- noise


def add_noise(traj: Trajectory, snr_db: float | None, rng: np.random.Generator) -> Trajectory:
    """Additive complex Gaussian pixel noise at the given snapshot SNR.

    Noise variance per pixel is ``mean|psi|^2 / 10**(snr_db/10)``, set
    separately for every snapshot. ``None`` or ``inf`` returns ``traj``.
    """
    if snr_db is None or np.isinf(snr_db):
        return traj
    vals = traj.values
    axes = tuple(range(1, vals.ndim))
    sig = np.mean(np.abs(vals) ** 2, axis=axes, keepdims=True)
    sd = np.sqrt(sig / 10 ** (snr_db / 10) / 2)
    noise = sd * (rng.standard_normal(vals.shape) + 1j * rng.standard_normal(vals.shape))
    return traj.with_snapshots(vals + noise)


@dataclass(frozen=True, eq=False)
class ObservableReport:
    o1: DispersionCurve | None
    o2: ContrastSeries | None
    o3: list[SidebandMeasurement]
    provenance: dict
