"""Grids, fields, kernel families and model parameters.

Everything here is immutable after construction. Field arrays are stored
with shape ``(n,)`` in 1D and ``(n, n)`` in 2D and are marked read-only.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Union

import numpy as np
from scipy import special

from .errors import ConfigError, GridMismatch, PeriodizationError

SAMPLE_TAIL_TOL = 1e-6


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform periodic grid on ``[0, length)^dim``."""

    dim: int
    n: int
    length: float

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ConfigError(f"dim must be 1 or 2, got {self.dim}")
        if self.n < 8 or self.n & (self.n - 1):
            raise ConfigError(f"n must be a power of two >= 8, got {self.n}")
        if not self.length > 0:
            raise ConfigError(f"length must be positive, got {self.length}")
        object.__setattr__(self, "length", float(self.length))

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def size(self) -> int:
        return self.n**self.dim

    @property
    def dx(self) -> float:
        return self.length / self.n

    @property
    def cell(self) -> float:
        """Quadrature weight ``dx**dim``."""
        return self.dx**self.dim

    @property
    def dk(self) -> float:
        return 2 * np.pi / self.length

    @cached_property
    def x(self) -> np.ndarray:
        return np.arange(self.n) * self.dx

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Lattice wavenumbers per axis in FFT order (Nyquist is ``-pi/dx``)."""
        return 2 * np.pi * np.fft.fftfreq(self.n, d=self.dx)

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        if self.dim == 1:
            return (self.x,)
        return tuple(np.meshgrid(self.x, self.x, indexing="ij"))

    @cached_property
    def k_axes(self) -> tuple[np.ndarray, ...]:
        """Wavenumber arrays broadcastable against the field shape."""
        if self.dim == 1:
            return (self.wavenumbers,)
        k = self.wavenumbers
        return (k[:, None], k[None, :])

    @cached_property
    def k2(self) -> np.ndarray:
        return sum(np.broadcast_to(kk**2, self.shape) for kk in self.k_axes)

    @cached_property
    def kmag(self) -> np.ndarray:
        return np.sqrt(self.k2)

    def lattice_index(self, k: float, tol: float = 1e-9) -> int | None:
        """FFT index of a 1D wavenumber, or None when ``k`` is off-lattice."""
        j = k / self.dk
        jr = round(j)
        if abs(j - jr) > tol or not -self.n // 2 <= jr < self.n // 2:
            return None
        return jr % self.n


def _as_values(grid, values, dtype):
    arr = np.array(values, dtype=dtype, copy=True)
    if arr.size != grid.size:
        raise GridMismatch(f"expected {grid.size} samples, got {arr.size}")
    arr = arr.reshape(grid.shape)
    if not np.all(np.isfinite(arr)):
        raise ValueError("field contains non-finite samples")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ComplexField:
    grid: PeriodicGrid
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "values", _as_values(self.grid, self.values, complex))
        object.__setattr__(self, "time", float(self.time))

    def with_values(self, values, time=None) -> "ComplexField":
        return ComplexField(self.grid, values, self.time if time is None else time)


@dataclass(frozen=True, eq=False)
class RealField:
    grid: PeriodicGrid
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _as_values(self.grid, self.values, float))

    @classmethod
    def constant(cls, grid, value):
        return cls(grid, np.full(grid.shape, float(value)))


Scalar = Union[float, int]
FieldOrScalar = Union[RealField, float]


def check_grid(grid: PeriodicGrid, *objs) -> None:
    for obj in objs:
        g = getattr(obj, "grid", None)
        if g is not None and g != grid:
            raise GridMismatch(f"field on {g} does not match {grid}")


def values_of(obj, grid: PeriodicGrid):
    """Array for a field, or the scalar itself for homogeneous coefficients."""
    if isinstance(obj, (RealField, ComplexField)):
        check_grid(grid, obj)
        return obj.values
    return float(obj)


# ---------------------------------------------------------------- kernels


class KernelFamily(str, enum.Enum):
    GAUSSIAN = "gaussian"
    EXPONENTIAL = "exponential"
    TOPHAT = "tophat"


@dataclass(frozen=True)
class KernelSpec:
    """Even, nonnegative, translation-invariant kernel.

    ``shape`` is the standard deviation for the Gaussian family, the decay
    length for the exponential and the radius for the top-hat. ``mass`` is
    the kernel integral, which equals its Fourier transform at ``k = 0``.
    """

    family: KernelFamily
    shape: float = 1.0
    mass: float = 1.0

    def __post_init__(self):
        try:
            fam = KernelFamily(self.family)
        except ValueError:
            raise ConfigError(f"unknown kernel family {self.family!r}") from None
        object.__setattr__(self, "family", fam)
        if not self.shape > 0:
            raise ConfigError(f"kernel shape must be positive, got {self.shape}")
        if not self.mass >= 0:
            raise ConfigError(f"kernel mass must be nonnegative, got {self.mass}")
        object.__setattr__(self, "shape", float(self.shape))
        object.__setattr__(self, "mass", float(self.mass))


def kernel_fourier(spec: KernelSpec, k, dim: int = 1):
    """Closed-form ``K^(k) = int exp(-i k.z) K(z) dz``, evaluated at ``|k|``."""
    k = np.abs(np.asarray(k, dtype=float))
    s = spec.shape
    x = k * s
    if spec.family is KernelFamily.GAUSSIAN:
        out = np.exp(-0.5 * x**2)
    elif spec.family is KernelFamily.EXPONENTIAL:
        out = (1.0 + x**2) ** (-0.5 * (dim + 1))
    elif dim == 1:
        out = np.sinc(x / np.pi)
    else:
        safe = np.where(x == 0, 1.0, x)
        out = np.where(x == 0, 1.0, 2 * special.j1(safe) / safe)
    out = spec.mass * out
    return float(out) if out.ndim == 0 else out


def kernel_second_moment(spec: KernelSpec, dim: int = 1) -> float:
    """``mu2 = int |z|^2 K(z) dz``."""
    s2 = spec.shape**2
    if spec.family is KernelFamily.GAUSSIAN:
        m = dim * s2
    elif spec.family is KernelFamily.EXPONENTIAL:
        m = 2 * s2 if dim == 1 else 6 * s2
    else:
        m = s2 / 3 if dim == 1 else s2 / 2
    return spec.mass * m


def kernel_density(spec: KernelSpec, r, dim: int = 1):
    """Pointwise kernel value at distance ``r``."""
    r = np.abs(np.asarray(r, dtype=float))
    s = spec.shape
    if spec.family is KernelFamily.GAUSSIAN:
        out = np.exp(-0.5 * (r / s) ** 2) / (2 * np.pi * s * s) ** (dim / 2)
    elif spec.family is KernelFamily.EXPONENTIAL:
        norm = 2 * s if dim == 1 else 2 * np.pi * s * s
        out = np.exp(-r / s) / norm
    else:
        norm = 2 * s if dim == 1 else np.pi * s * s
        out = (r <= s) / norm
    return spec.mass * out


def periodization_tail(spec: KernelSpec, length: float, dim: int = 1) -> float:
    """Fraction of kernel mass lying outside the fundamental cell.

    This is the part that wraps around the torus. In 2D the exponential and
    top-hat values are bounds taken on the inscribed disk.
    """
    h = length / 2
    s = spec.shape
    if spec.family is KernelFamily.GAUSSIAN:
        t1 = special.erfc(h / (np.sqrt(2) * s))
        return float(t1 if dim == 1 else 1 - (1 - t1) ** 2)
    if spec.family is KernelFamily.EXPONENTIAL:
        if dim == 1:
            return float(np.exp(-h / s))
        return float((1 + h / s) * np.exp(-h / s))
    if s <= h:
        return 0.0
    return float((s - h) / s if dim == 1 else 1 - (h / s) ** 2)


def kernel_multiplier(spec: KernelSpec, grid: PeriodicGrid) -> np.ndarray:
    """``K^`` at every lattice wavenumber of ``grid`` (FFT order)."""
    return np.asarray(kernel_fourier(spec, grid.kmag, grid.dim), dtype=float).reshape(grid.shape)


def sample_kernel(spec: KernelSpec, grid: PeriodicGrid) -> RealField:
    """Periodized kernel on the grid, origin at index 0 (wrap-around order).

    The samples are the band-limited periodization: the unique grid function
    whose discrete transform times ``dx**dim`` equals ``K^`` at every lattice
    wavenumber. By Poisson summation this is the Fourier projection of the
    infinite image sum; for smooth kernels it agrees with the pointwise
    image sum to rounding.
    """
    if spec.mass == 0:
        return RealField(grid, np.zeros(grid.shape))
    tail = periodization_tail(spec, grid.length, grid.dim)
    if tail > SAMPLE_TAIL_TOL:
        raise PeriodizationError(
            f"{spec.family.value} kernel of shape {spec.shape} leaks {tail:.3g} of its "
            f"mass across a box of length {grid.length}"
        )
    vals = np.fft.ifftn(kernel_multiplier(spec, grid)).real / grid.cell
    return RealField(grid, vals)


# ---------------------------------------------------------------- model


@dataclass(frozen=True)
class Nonlinearity:
    """``g(rho) = rho**power``; ``power=None`` switches the term off."""

    power: float | None = None

    def __post_init__(self):
        if self.power is not None and not self.power > 0:
            raise ConfigError(f"power-law exponent must be positive, got {self.power}")

    @property
    def off(self) -> bool:
        return self.power is None

    def g(self, rho):
        if self.power is None:
            return np.zeros_like(rho)
        return rho**self.power

    def f(self, rho):
        """Antiderivative of ``g`` with ``f(0) = 0``."""
        if self.power is None:
            return np.zeros_like(rho)
        return rho ** (self.power + 1) / (self.power + 1)

    def check_subcritical(self, dim: int) -> None:
        if self.power is not None and dim >= 3 and self.power >= 2 / (dim - 2):
            raise ConfigError(f"exponent {self.power} is not H1-subcritical in d={dim}")


OFF = Nonlinearity()


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Coefficients of the evolution equation.

    ``w`` and ``u`` are scalars on homogeneous backgrounds or RealFields.
    ``phi=None`` means no phase field.
    """

    w: FieldOrScalar = 1.0
    u: FieldOrScalar = 0.0
    phi: RealField | None = None
    beta: float = 0.0
    kappa: float = 0.0
    gamma: float = 0.0
    nonlinearity: Nonlinearity = OFF
    kernel: KernelSpec = field(default_factory=lambda: KernelSpec(KernelFamily.GAUSSIAN))

    def __post_init__(self):
        if self.w_min <= 0:
            raise ConfigError(f"weight w must be bounded below by a positive constant, min is {self.w_min}")
        grids = {f.grid for f in (self.w, self.u, self.phi) if isinstance(f, RealField)}
        if len(grids) > 1:
            raise GridMismatch("coefficient fields live on different grids")

    @property
    def homogeneous(self) -> bool:
        return not isinstance(self.w, RealField) and not isinstance(self.u, RealField)

    @property
    def grid(self) -> PeriodicGrid | None:
        for f in (self.w, self.u, self.phi):
            if isinstance(f, RealField):
                return f.grid
        return None

    @property
    def w_min(self) -> float:
        return float(np.min(self.w.values)) if isinstance(self.w, RealField) else float(self.w)

    @property
    def w_max(self) -> float:
        return float(np.max(self.w.values)) if isinstance(self.w, RealField) else float(self.w)

    @property
    def w0(self) -> float:
        """Homogeneous weight, or the spatial mean of a weight field."""
        return float(np.mean(self.w.values)) if isinstance(self.w, RealField) else float(self.w)

    @property
    def u0(self) -> float:
        return float(np.mean(self.u.values)) if isinstance(self.u, RealField) else float(self.u)

    def replace(self, **changes) -> "ModelParams":
        return replace(self, **changes)
