"""Two-stage parameter inversion.

Stage 1 fits ``(kappa, shape)`` of a declared kernel family to the
dispersion residual, with the kernel mass fixed to 1. Stage 2 fits the drive
coupling ``|gamma eps Phi_q|`` and a linewidth ``eta`` to measured sideband
ratios with stage-1 parameters frozen. The snapshot contrast is used only as
an independent check.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize

from .errors import DegenerateDetuning, InsufficientData, NoConvergence
from .field import KernelFamily, KernelSpec, ModelParams, kernel_fourier, kernel_second_moment
from .integrator import Trajectory
from .linear import DispersionCurve, omega_analytic, ratio_model
from .observables import _contrast, contrast_series

CI_LEVEL = 0.68
N_BOOT = 200
MAX_ITER = 2000
UNBOUNDED = (0.0, float("inf"))


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("RWNS_THREADS", "1")))
    except ValueError:
        return 1


def _pmap(fn, items):
    n = _workers()
    if n == 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


def _nelder_mead(obj, x0):
    f0 = obj(np.asarray(x0))
    return optimize.minimize(
        obj,
        x0,
        method="Nelder-Mead",
        options={
            "xatol": 1e-8,
            "fatol": 1e-12 * max(f0, 1.0),
            "maxiter": MAX_ITER,
            "maxfev": 4 * MAX_ITER,
        },
    )


def _multistart(obj, starts):
    best, any_ok = None, False
    for x0 in starts:
        res = _nelder_mead(obj, x0)
        any_ok |= bool(res.success)
        if best is None or res.fun < best.fun:
            best = res
    return best, any_ok


def _inflate(resid: np.ndarray, n_params: int) -> np.ndarray:
    """Residuals rescaled by ``sqrt(n / (n - p))`` so resampling keeps their variance."""
    n = len(resid)
    return resid * np.sqrt(n / max(n - n_params, 1))


def _interval(samples: np.ndarray, point: float) -> tuple[float, float]:
    lo, hi = np.percentile(samples, [50 * (1 - CI_LEVEL), 50 * (1 + CI_LEVEL)])
    return float(min(lo, point)), float(max(hi, point))


# ---------------------------------------------------------------- stage 1


@dataclass(frozen=True)
class KernelFit:
    kappa: float
    shape: float
    family: KernelFamily
    residual_norm: float
    ci: dict
    converged: bool
    shape_identifiable: bool = True


def _unit_hat(family: KernelFamily, k, shape):
    """Unit-mass 1D transform without constructing a KernelSpec (hot loop)."""
    x = k * shape
    if family is KernelFamily.GAUSSIAN:
        return np.exp(-0.5 * x * x)
    if family is KernelFamily.EXPONENTIAL:
        return 1.0 / (1.0 + x * x)
    return np.sinc(x / np.pi)


def _kernel_model(k, kappa, shape, family):
    return kappa * (_unit_hat(family, k, shape) - 1.0)


def _initial_kernel_guess(k, res, family):
    """Plateau from the smallest |k|, shape from a mid-k ratio to that plateau."""
    pos = k > 0
    kp, rp = k[pos], res[pos]
    order = np.argsort(kp)
    kp, rp = kp[order], rp[order]
    plateau = float(np.median(rp[:3] / kp[:3] ** 2))
    k_mid = float(np.median(kp))
    if plateau == 0:
        return 0.0, 1.0 / k_mid
    r_mid = float(np.interp(k_mid, kp, rp)) / (plateau * k_mid**2)

    def h(log_s):
        spec = KernelSpec(family, np.exp(log_s), 1.0)
        mu2 = kernel_second_moment(spec)
        return (kernel_fourier(spec, k_mid) - 1.0) / (-0.5 * mu2 * k_mid**2) - r_mid

    grid = np.log(np.logspace(-3, 2, 120) / k_mid)
    vals = np.array([h(g) for g in grid])
    shape = 1.0 / k_mid
    for i in range(len(grid) - 1):
        if np.sign(vals[i]) != np.sign(vals[i + 1]):
            shape = float(np.exp(optimize.brentq(h, grid[i], grid[i + 1])))
            break
    mu2 = kernel_second_moment(KernelSpec(family, shape, 1.0))
    return -2.0 * plateau / mu2, shape


def _fit_kernel_once(k, y, sigma, family, starts):
    def obj(x):
        return float(np.sum(((y - _kernel_model(k, x[0], np.exp(x[1]), family)) / sigma) ** 2))

    best, ok = _multistart(obj, starts)
    return best.x[0], float(np.exp(best.x[1])), ok


def fit_kernel(
    curve: DispersionCurve,
    family,
    n_boot: int = N_BOOT,
    seed: int = 0,
) -> KernelFit:
    """Weighted least squares of the residual against ``kappa (K^(k) - K^(0))``."""
    family = KernelFamily(family)
    k = np.asarray(curve.k, dtype=float)
    y = np.asarray(curve.residual, dtype=float)
    kp = np.abs(k[k != 0])
    if len(k) < 8 or kp.size == 0 or kp.max() < 4 * kp.min():
        raise InsufficientData("need >= 8 points spanning a factor 4 in |k|")
    sigma = curve.omega_resolution or 1.0

    kappa0, shape0 = _initial_kernel_guess(np.abs(k), y, family)
    ls0 = np.log(shape0)
    dk = 0.2 * abs(kappa0) + 1e-3
    starts = [
        np.array([kappa0, ls0]),
        np.array([kappa0 + dk, ls0 - 0.2]),
        np.array([kappa0 - dk, ls0 + 0.2]),
    ]
    kappa, shape, ok = _fit_kernel_once(k, y, sigma, family, starts)
    if not ok:
        raise NoConvergence("kernel fit did not converge from any start")
    fitted = _kernel_model(k, kappa, shape, family)
    resid = y - fitted
    rnorm = float(np.sqrt(np.mean(resid**2)))

    rng = np.random.default_rng(seed)
    draws = rng.integers(0, len(k), size=(n_boot, len(k)))

    pool = _inflate(resid, 2)

    def refit(idx):
        yb = fitted + pool[idx]
        kb, sb, _ = _fit_kernel_once(k, yb, sigma, family, [np.array([kappa, np.log(shape)])])
        return kb, sb

    boot = np.array(_pmap(refit, draws)) if n_boot else np.empty((0, 2))
    signal = abs(kappa) * float(np.max(np.abs(kernel_fourier(KernelSpec(family, shape, 1.0), k) - 1.0)))
    noise = curve.omega_resolution if curve.omega_resolution else 1e-9 * max(1.0, float(np.max(np.abs(y))))
    identifiable = signal > noise
    ci = {
        "kappa": _interval(boot[:, 0], kappa) if n_boot else (kappa, kappa),
        "shape": (_interval(boot[:, 1], shape) if n_boot else (shape, shape)) if identifiable else UNBOUNDED,
    }
    return KernelFit(float(kappa), shape, family, rnorm, ci, ok, identifiable)


# ---------------------------------------------------------------- stage 2


@dataclass(frozen=True)
class DriveFit:
    coupling: float
    eta: float
    residual_norm: float
    ci: dict
    converged: bool
    eta_identifiable: bool = True


def frozen_params(kappa: float, shape: float, family, w0: float, u0: float) -> ModelParams:
    return ModelParams(w=w0, u=u0, kappa=kappa, kernel=KernelSpec(KernelFamily(family), shape, 1.0))


def detunings(params: ModelParams, k, q) -> tuple[np.ndarray, np.ndarray]:
    k = np.asarray(k, dtype=float)
    q = np.asarray(q, dtype=float)
    w_k = omega_analytic(params, k)
    return w_k - omega_analytic(params, k + q), w_k - omega_analytic(params, k - q)


def _fit_drive_once(r, dp, dm, starts):
    scale = np.where(r > 0, r, 1.0)

    def obj(x):
        model = ratio_model(np.exp(x[0]), abs(x[1]), dp, dm)
        return float(np.sum(((r - model) / scale) ** 2))

    best, ok = _multistart(obj, starts)
    return float(np.exp(best.x[0])), float(abs(best.x[1])), ok


def fit_drive(
    o3,
    frozen: tuple[float, float, str],
    params_known: tuple[float, float],
    n_boot: int = N_BOOT,
    seed: int = 0,
) -> DriveFit:
    """Fit ``(|gamma eps Phi_q|, eta)`` to rows ``(k, q, R_measured)``."""
    rows = np.asarray(o3, dtype=float).reshape(-1, 3)
    if len(rows) < 4:
        raise InsufficientData("need >= 4 sideband measurements")
    k, q, r = rows.T
    params = frozen_params(*frozen, *params_known)
    dp, dm = detunings(params, k, q)
    scale = np.maximum(np.abs(omega_analytic(params, k)), 1.0)
    if np.any(np.minimum(np.abs(dp), np.abs(dm)) <= 1e-12 * scale):
        raise DegenerateDetuning("a sideband point sits on an exact resonance")
    harm = np.round(1 / dp**2 + 1 / dm**2, 12)
    if len(np.unique(harm)) < 2:
        raise InsufficientData("sideband points need distinct detunings")
    if np.all(r == 0):
        return DriveFit(0.0, 0.0, 0.0, {"coupling": (0.0, 0.0), "eta": UNBOUNDED}, True, False)

    s = 1 / dp**2 + 1 / dm**2
    c0 = float(np.sqrt(4 * np.mean(r / s)))
    dmin = float(np.min(np.abs(np.concatenate([dp, dm]))))
    starts = [np.array([np.log(c0), e]) for e in (1e-3 * dmin, 0.1 * dmin, 0.5 * dmin)]
    coupling, eta, ok = _fit_drive_once(r, dp, dm, starts)
    if not ok:
        raise NoConvergence("drive fit did not converge from any start")
    fitted = ratio_model(coupling, eta, dp, dm)
    rel = (r - fitted) / np.where(r > 0, r, 1.0)
    rnorm = float(np.sqrt(np.mean(rel**2)))

    rng = np.random.default_rng(seed)
    draws = rng.integers(0, len(r), size=(n_boot, len(r)))

    pool = _inflate(rel, 2)

    def refit(idx):
        rb = fitted * (1 + pool[idx])
        cb, eb, _ = _fit_drive_once(rb, dp, dm, [np.array([np.log(coupling), eta])])
        return cb, eb

    boot = np.array(_pmap(refit, draws)) if n_boot else np.empty((0, 2))
    ci = {
        "coupling": _interval(boot[:, 0], coupling) if n_boot else (coupling, coupling),
        "eta": _interval(boot[:, 1], eta) if n_boot else (eta, eta),
    }
    return DriveFit(coupling, eta, rnorm, ci, ok)


# ---------------------------------------------------------------- joint result


@dataclass
class FitResult:
    kappa: float
    kernel_shape: float
    kernel_family: KernelFamily
    gamma_phi_abs: float
    eta: float
    residual_norm_o1: float
    residual_norm_o3: float
    o2_consistency: float
    ci: dict
    converged: bool
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.gamma_phi_abs < 0 or self.eta < 0 or not self.kernel_shape > 0:
            raise ValueError("fit parameters violate their bounds")

    @classmethod
    def combine(cls, kfit: KernelFit, dfit: DriveFit, o2_consistency: float = float("nan")) -> "FitResult":
        ci = {"kappa": kfit.ci["kappa"], "kernel_shape": kfit.ci["shape"]}
        ci["gamma_phi_abs"] = dfit.ci["coupling"]
        ci["eta"] = dfit.ci["eta"]
        return cls(
            kappa=kfit.kappa,
            kernel_shape=kfit.shape,
            kernel_family=kfit.family,
            gamma_phi_abs=dfit.coupling,
            eta=dfit.eta,
            residual_norm_o1=kfit.residual_norm,
            residual_norm_o3=dfit.residual_norm,
            o2_consistency=o2_consistency,
            ci=ci,
            converged=kfit.converged and dfit.converged,
            flags={"shape_identifiable": kfit.shape_identifiable, "eta_identifiable": dfit.eta_identifiable},
        )

    def kernel(self) -> KernelSpec:
        return KernelSpec(self.kernel_family, self.kernel_shape, 1.0)

    def to_dict(self) -> dict:
        def clean(v):
            if isinstance(v, float) and not np.isfinite(v):
                return None
            if isinstance(v, (tuple, list)):
                return [clean(x) for x in v]
            if isinstance(v, dict):
                return {kk: clean(x) for kk, x in v.items()}
            if isinstance(v, KernelFamily):
                return v.value
            if isinstance(v, np.generic):
                return v.item()
            return v

        return clean(asdict(self))


def _predicted_contrast(traj: Trajectory, kernel: KernelSpec) -> float:
    params = traj.params.replace(kernel=kernel)
    return float(np.mean(_contrast(traj.values, traj.grid, params)))


def consistency_check(fit: FitResult, traj: Trajectory) -> float:
    """Relative deviation of the fitted-kernel contrast from the measured one."""
    predicted = _predicted_contrast(traj, fit.kernel())
    measured = contrast_series(traj).mean
    if measured == 0:
        return abs(predicted)
    return abs(predicted - measured) / abs(measured)


def consistency_threshold(fit: FitResult, traj: Trajectory, floor: float = 0.05) -> float:
    """``max(floor, 2 x relative half-width)`` of the contrast predicted over the shape ci."""
    lo, hi = fit.ci.get("kernel_shape", (fit.kernel_shape, fit.kernel_shape))
    if not np.isfinite(hi) or lo <= 0:
        return float("inf")
    centre = _predicted_contrast(traj, fit.kernel())
    ends = [_predicted_contrast(traj, KernelSpec(fit.kernel_family, s, 1.0)) for s in (lo, hi)]
    half = 0.5 * abs(ends[1] - ends[0]) / abs(centre) if centre else 0.0
    return max(floor, 2 * half)
