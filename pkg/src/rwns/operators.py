"""Right-hand-side mechanisms and conserved functionals.

Sign conventions follow the evolution equation as written::

    i dpsi/dt = L_w psi + U psi + beta g(|psi|^2) psi
                + kappa * (K * psi - Lambda psi) + i gamma (phi - <phi>) psi

so that on a plane wave the exchange contributes ``kappa (K^(k) - K^(0))`` to
the frequency. The energy is
``int w|grad psi|^2 + U|psi|^2 + beta f(|psi|^2) - kappa Q_K`` with
``Q_K = 1/2 iint K |psi(x) - psi(y)|^2``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field import (
    ComplexField,
    ModelParams,
    Nonlinearity,
    PeriodicGrid,
    RealField,
    check_grid,
    kernel_multiplier,
    values_of,
)


def inner(a: np.ndarray, b: np.ndarray, grid: PeriodicGrid) -> complex:
    """Discrete ``int conj(a) b dx``."""
    return complex(np.vdot(a, b)) * grid.cell


def _fd_laplacian(v, w, grid):
    # -D^-(w_{j+1/2} D^+ v) per axis, arithmetic face weights
    out = np.zeros(grid.shape, dtype=complex)
    for ax in range(grid.dim):
        wf = 0.5 * (w + np.roll(w, -1, axis=ax))
        flux = wf * (np.roll(v, -1, axis=ax) - v)
        out -= flux - np.roll(flux, 1, axis=ax)
    return out / grid.dx**2


def _fd_gradient_energy(v, w, grid):
    total = 0.0
    for ax in range(grid.dim):
        wf = 0.5 * (w + np.roll(w, -1, axis=ax))
        d = (np.roll(v, -1, axis=ax) - v) / grid.dx
        total += np.sum(wf * np.abs(d) ** 2)
    return float(total) * grid.cell


class Discretization:
    """Grid-bound evaluation of every operator for one parameter set.

    Works on raw arrays so the integrator can avoid field construction in
    its inner loop. The exchange uses the closed-form lattice multiplier,
    which coincides with FFT convolution against ``sample_kernel``.
    """

    def __init__(self, grid: PeriodicGrid, params: ModelParams):
        check_grid(grid, params.w, params.u, params.phi)
        self.grid = grid
        self.params = params
        self.w = values_of(params.w, grid)
        self.u = values_of(params.u, grid)
        self.phi = None if params.phi is None else params.phi.values
        self.spectral_w = np.ndim(self.w) == 0
        self.khat = kernel_multiplier(params.kernel, grid)
        self.lam = params.kernel.mass
        self.exchange_symbol = self.khat - self.lam
        self._norm = grid.cell / grid.size

    # spectral helpers
    def fft(self, v):
        return np.fft.fftn(v)

    def ifft(self, vh):
        return np.fft.ifftn(vh)

    # operator parts (all return arrays)
    def laplacian(self, v):
        if self.spectral_w:
            return self.w * self.ifft(self.grid.k2 * self.fft(v))
        return _fd_laplacian(v, self.w, self.grid)

    def potential(self, v):
        return self.u * v

    def nonlinear(self, v):
        nl = self.params.nonlinearity
        if nl.off or self.params.beta == 0:
            return np.zeros(self.grid.shape, dtype=complex)
        return self.params.beta * nl.g(np.abs(v) ** 2) * v

    def exchange(self, v):
        return self.ifft(self.exchange_symbol * self.fft(v))

    def centered_mean(self, v) -> float:
        if self.phi is None:
            return 0.0
        rho = np.abs(v) ** 2
        m = rho.sum()
        if m == 0:
            return 0.0
        return float(np.sum(self.phi * rho) / m)

    def drive(self, v):
        """``i gamma (phi - <phi>) psi``, the drive term as it appears in the equation."""
        if self.phi is None or self.params.gamma == 0:
            return np.zeros(self.grid.shape, dtype=complex)
        return 1j * self.params.gamma * (self.phi - self.centered_mean(v)) * v

    def hamiltonian(self, v):
        """``dE/d(conj psi)``: diffusion + potential + nonlinear + kappa * exchange."""
        return self.laplacian(v) + self.potential(v) + self.nonlinear(v) + self.params.kappa * self.exchange(v)

    def time_derivative(self, v):
        return -1j * (self.hamiltonian(v) + self.drive(v))

    # functionals
    def mass(self, v) -> float:
        return float(np.sum(np.abs(v) ** 2)) * self.grid.cell

    def gradient_energy(self, v, weighted=True) -> float:
        """``int w|grad v|^2`` (or ``int |grad v|^2`` when ``weighted`` is False)."""
        if self.spectral_w:
            scale = self.w if weighted else 1.0
            vh = self.fft(v)
            return float(scale * np.sum(self.grid.k2 * np.abs(vh) ** 2)) * self._norm
        w = self.w if weighted else np.ones(self.grid.shape)
        return _fd_gradient_energy(v, w, self.grid)

    def qk(self, v) -> float:
        """``Q_K = K^(0) M - Re<psi, K * psi>``, evaluated spectrally."""
        vh = self.fft(v)
        return float(np.sum((self.lam - self.khat) * np.abs(vh) ** 2)) * self._norm

    def momentum(self, v) -> np.ndarray:
        vh2 = np.abs(self.fft(v)) ** 2
        return np.array([np.sum(np.broadcast_to(kk, self.grid.shape) * vh2) for kk in self.grid.k_axes]) * self._norm

    def energy(self, v) -> float:
        p = self.params
        rho = np.abs(v) ** 2
        local = np.sum(self.u * rho)
        if not p.nonlinearity.off and p.beta != 0:
            local += p.beta * np.sum(p.nonlinearity.f(rho))
        return self.gradient_energy(v) + float(local) * self.grid.cell - p.kappa * self.qk(v)

    def conserved(self, v) -> "ConservedSet":
        return ConservedSet(
            mass=self.mass(v),
            energy=self.energy(v),
            momentum=self.momentum(v),
            qk=self.qk(v),
            mean_phi=self.centered_mean(v),
        )


@dataclass(frozen=True, eq=False)
class RhsBreakdown:
    """Terms of the equation's right-hand side; ``total`` is ``dpsi/dt``.

    ``total = -i (diffusion + potential + nonlinear + exchange + drive)``.
    """

    diffusion: ComplexField
    potential: ComplexField
    nonlinear: ComplexField
    exchange: ComplexField
    drive: ComplexField
    total: ComplexField

    def parts_sum(self) -> np.ndarray:
        return sum(
            f.values for f in (self.diffusion, self.potential, self.nonlinear, self.exchange, self.drive)
        )


@dataclass(frozen=True, eq=False)
class ConservedSet:
    mass: float
    energy: float
    momentum: np.ndarray
    qk: float
    mean_phi: float


def weighted_laplacian(psi: ComplexField, w) -> ComplexField:
    """``-div(w grad psi)``: spectral for scalar ``w``, conservative stencil otherwise."""
    grid = psi.grid
    wv = values_of(w, grid)
    if np.min(wv) <= 0:
        raise ValueError("weight must be positive")
    if np.ndim(wv) == 0:
        out = wv * np.fft.ifftn(grid.k2 * np.fft.fftn(psi.values))
    else:
        out = _fd_laplacian(psi.values, wv, grid)
    return psi.with_values(out)


def exchange_apply(psi: ComplexField, kernel: RealField, mass: float) -> ComplexField:
    """``(K * psi) - mass * psi`` with FFT convolution against sampled ``kernel``."""
    grid = psi.grid
    check_grid(grid, kernel)
    khat = np.fft.fftn(kernel.values) * grid.cell
    conv = np.fft.ifftn(khat * np.fft.fftn(psi.values))
    return psi.with_values(conv - mass * psi.values)


def nonlinear_term(psi: ComplexField, beta: float, nl: Nonlinearity) -> ComplexField:
    if nl.off:
        return psi.with_values(np.zeros(psi.grid.shape))
    v = psi.values
    return psi.with_values(beta * nl.g(np.abs(v) ** 2) * v)


def centered_mean(psi: ComplexField, phi: RealField) -> float:
    """Density-weighted mean of ``phi``; 0 for the zero field."""
    check_grid(psi.grid, phi)
    rho = np.abs(psi.values) ** 2
    m = rho.sum()
    if m == 0:
        return 0.0
    return float(np.sum(phi.values * rho) / m)


def drive_term(psi: ComplexField, phi: RealField, gamma: float) -> ComplexField:
    if gamma == 0:
        return psi.with_values(np.zeros(psi.grid.shape))
    mean = centered_mean(psi, phi)
    return psi.with_values(1j * gamma * (phi.values - mean) * psi.values)


def rhs(psi: ComplexField, params: ModelParams) -> RhsBreakdown:
    d = Discretization(psi.grid, params)
    v = psi.values
    parts = [
        d.laplacian(v),
        d.potential(v),
        d.nonlinear(v),
        params.kappa * d.exchange(v),
        d.drive(v),
    ]
    total = -1j * sum(parts)
    return RhsBreakdown(*(psi.with_values(p) for p in parts), total=psi.with_values(total))


def conserved(psi: ComplexField, params: ModelParams) -> ConservedSet:
    return Discretization(psi.grid, params).conserved(psi.values)


def coercivity_margin(psi: ComplexField, params: ModelParams, alpha: float, c: float) -> float:
    """``int w|grad psi|^2 - kappa Q_K - (alpha ||grad psi||^2 - C ||psi||^2)``."""
    d = Discretization(psi.grid, params)
    v = psi.values
    lhs = d.gradient_energy(v) - params.kappa * d.qk(v)
    rhs_ = alpha * d.gradient_energy(v, weighted=False) - c * d.mass(v)
    return lhs - rhs_
