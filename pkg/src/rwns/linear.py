"""Closed-form linear theory on homogeneous backgrounds.

The analytic dispersion is ``omega(k) = w0 k^2 + U0 + kappa (K^(k) - K^(0))``,
the sign obtained by substituting a plane wave into the evolution equation.
Figures drawn with the opposite convention are recovered by ``kappa -> -kappa``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDetuning, HeterogeneousParams, ZeroSidebandPower
from .field import ModelParams, kernel_fourier, kernel_second_moment


@dataclass(frozen=True, eq=False)
class DispersionCurve:
    k: np.ndarray
    omega: np.ndarray
    baseline: tuple[float, float]
    residual: np.ndarray
    omega_resolution: float | None = None
    dropped: np.ndarray = field(default_factory=lambda: np.array([]))

    def __post_init__(self):
        if not len(self.k) == len(self.omega) == len(self.residual):
            raise ValueError("k, omega and residual must have equal length")

    def baseline_residual(self) -> np.ndarray:
        w0, u0 = self.baseline
        return self.omega - (w0 * self.k**2 + u0)


@dataclass(frozen=True)
class SidebandPrediction:
    k: float
    q: float
    coupling: float
    detuning_plus: float
    detuning_minus: float
    amp_ratio_plus: float
    amp_ratio_minus: float
    power_ratio: float
    eta: float = 0.0

    @property
    def power_plus(self) -> float:
        return self.amp_ratio_plus**2

    @property
    def power_minus(self) -> float:
        return self.amp_ratio_minus**2


def _require_homogeneous(params: ModelParams):
    if not params.homogeneous:
        raise HeterogeneousParams("linear analysis needs scalar w and U")


def omega_analytic(params: ModelParams, k, dim: int = 1):
    _require_homogeneous(params)
    k = np.asarray(k, dtype=float)
    kh = kernel_fourier(params.kernel, k, dim)
    return params.w0 * k**2 + params.u0 + params.kappa * (kh - params.kernel.mass)


def dispersion_analytic(params: ModelParams, k, dim: int = 1) -> DispersionCurve:
    k = np.sort(np.atleast_1d(np.asarray(k, dtype=float)))
    omega = omega_analytic(params, k, dim)
    residual = params.kappa * (kernel_fourier(params.kernel, k, dim) - params.kernel.mass)
    return DispersionCurve(k, np.asarray(omega), (params.w0, params.u0), np.asarray(residual))


def small_k_plateau(params: ModelParams, dim: int = 1) -> float:
    """Limit of ``residual(k) / k^2`` as ``k -> 0``: ``-kappa mu2 / (2 d)``."""
    return -params.kappa * kernel_second_moment(params.kernel, dim) / (2 * dim)


def sideband_predict(
    params: ModelParams, k: float, q: float, eps: float, phi_q: float, eta: float = 0.0
) -> SidebandPrediction:
    """First-order sideband amplitudes for a weak drive ``phi = eps phi_q cos(q x)``.

    Each sideband amplitude ratio is ``c / (2 sqrt(Delta^2 + eta^2))`` with
    ``c = |gamma eps phi_q|``; the power ratio is the sum of their squares.
    """
    if q == 0:
        raise ValueError("drive wavenumber q must be nonzero")
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    if abs(eps) > 0.1:
        warnings.warn(f"eps={eps} is outside the weak-drive regime", stacklevel=2)
    coupling = abs(params.gamma * eps * phi_q)
    return _predict(params, k, q, coupling, eta)


def _predict(params, k, q, coupling, eta):
    w_k, w_p, w_m = omega_analytic(params, [k, k + q, k - q])
    d_plus, d_minus = float(w_k - w_p), float(w_k - w_m)
    scale = max(1.0, abs(w_k))
    if eta == 0 and min(abs(d_plus), abs(d_minus)) <= 1e-12 * scale:
        raise DegenerateDetuning(f"exact resonance at k={k}, q={q}; first-order theory does not apply")
    a_plus = coupling / (2 * np.hypot(d_plus, eta))
    a_minus = coupling / (2 * np.hypot(d_minus, eta))
    return SidebandPrediction(
        k=float(k),
        q=float(q),
        coupling=coupling,
        detuning_plus=d_plus,
        detuning_minus=d_minus,
        amp_ratio_plus=float(a_plus),
        amp_ratio_minus=float(a_minus),
        power_ratio=float(a_plus**2 + a_minus**2),
        eta=float(eta),
    )


def ratio_model(coupling, eta, d_plus, d_minus):
    """Power ratio as a function of coupling, linewidth and the two detunings."""
    d_plus = np.asarray(d_plus, dtype=float)
    d_minus = np.asarray(d_minus, dtype=float)
    return 0.25 * coupling**2 * (1 / (d_plus**2 + eta**2) + 1 / (d_minus**2 + eta**2))


def asymmetry_index(pred: SidebandPrediction) -> float:
    p_plus, p_minus = pred.power_plus, pred.power_minus
    if p_plus + p_minus <= 0:
        raise ZeroSidebandPower("asymmetry index undefined without sideband power")
    return (p_plus - p_minus) / (p_plus + p_minus)
