"""``rwns`` command line.

    rwns simulate|dispersion|contrast|sidebands|invert|validate --config FILE [--out DIR] [--seed N]

Exit codes: 0 ok, 1 failed checks or other model errors, 2 config errors,
3 numerical blow-up, 4 fit did not converge, 5 fit failed its consistency check.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig
from .errors import ConfigError, NoConvergence, NumericalBlowup, RWNSError
from .field import kernel_fourier
from .integrator import evolve
from .io import provenance, write_csv, write_json, write_monitors, write_snapshots
from .linear import dispersion_analytic, omega_analytic, sideband_predict
from .observables import add_noise, contrast_series, spectral_contrast_prediction
from .protocols import dispersion_protocol, inversion_pipeline, measure_sidebands, sideband_run
from .validate import run_battery

EXIT_FAILED = 1
EXIT_CONFIG = 2
EXIT_BLOWUP = 3
EXIT_NO_CONVERGENCE = 4
EXIT_INCONSISTENT = 5

DISPERSION_COLUMNS = ("k", "omega_measured", "residual", "residual_over_k2", "omega_analytic", "residual_analytic")
SIDEBAND_COLUMNS = ("k", "q", "detuning_plus", "detuning_minus", "R_measured", "R_predicted_eta0", "S_measured")


def _provenance(cfg: RunConfig, out: Path, command: str, **extra) -> None:
    write_json(out / "provenance.json", provenance(cfg.to_flat(), cfg.seed, command=command, **extra))


def cmd_simulate(cfg: RunConfig, out: Path) -> int:
    grid = cfg.make_grid()
    traj = evolve(cfg.initial_field(grid), cfg.model_params(grid), cfg.stepper_config())
    write_snapshots(out / "snapshots", traj.snapshots)
    write_monitors(out / "monitors.csv", traj)
    drifts = {name: traj.relative_drift(name) for name in ("mass", "energy")}
    _provenance(cfg, out, "simulate", drifts=drifts)
    return 0


def cmd_dispersion(cfg: RunConfig, out: Path) -> int:
    grid = cfg.make_grid()
    params = cfg.model_params(grid)
    st, d = cfg.stepper, cfg.dispersion
    run = dispersion_protocol(
        params, grid, d.t_window, st.dt, st.snapshot_stride, cfg.seed, d.snr_db, d.fit_baseline
    )
    c = run.curve
    order = np.argsort(c.k)
    k = c.k[order]
    res = c.residual[order]
    safe = np.where(k != 0, k, 1.0)
    over_k2 = np.where(k != 0, res / safe**2, np.nan)
    analytic = dispersion_analytic(params, k)
    rows = zip(k, c.omega[order], res, over_k2, omega_analytic(params, k), analytic.residual)
    write_csv(out / "dispersion.csv", DISPERSION_COLUMNS, rows)
    summary = {"baseline": c.baseline, "omega_resolution": c.omega_resolution, "dropped_k": c.dropped}
    write_json(out / "dispersion_summary.json", summary)
    _provenance(cfg, out, "dispersion")
    return 0


def cmd_contrast(cfg: RunConfig, out: Path) -> int:
    grid = cfg.make_grid()
    params = cfg.model_params(grid)
    psi0 = cfg.initial_field(grid)
    traj = evolve(psi0, params, cfg.stepper_config())
    traj = add_noise(traj, cfg.contrast.snr_db, np.random.default_rng(cfg.seed))
    series = contrast_series(traj)
    write_csv(out / "contrast.csv", ("t", "xi"), zip(series.times, series.values))
    summary = {"mean": series.mean, "iqr": series.iqr, "prediction": spectral_contrast_prediction(traj, params)}
    if cfg.initial.kind == "plane_wave":
        k = cfg.initial.k_index * grid.dk
        khat = float(kernel_fourier(params.kernel, k))
        summary["single_mode_formula"] = (params.kernel.mass - khat) / (params.w0 * k**2)
    write_json(out / "contrast_summary.json", summary)
    _provenance(cfg, out, "contrast")
    return 0


def cmd_sidebands(cfg: RunConfig, out: Path) -> int:
    grid = cfg.make_grid()
    params = cfg.model_params(grid).replace(phi=None, gamma=0.0)
    sb = cfg.sidebands
    coupling = abs(cfg.model.gamma * cfg.drive.amplitude)
    rng = np.random.default_rng(cfg.seed)
    rows = []
    for k, q in sb.points:
        traj = sideband_run(params, grid, k, q, coupling, sb.t_end, cfg.stepper.dt, cfg.stepper.snapshot_stride)
        m = measure_sidebands(traj, k, q, sb.snr_db, rng)
        pred = sideband_predict(params.replace(gamma=1.0), k, q, coupling, 1.0)
        rows.append((k, q, pred.detuning_plus, pred.detuning_minus, m.ratio, pred.power_ratio, m.asymmetry))
    write_csv(out / "sidebands.csv", SIDEBAND_COLUMNS, rows)
    _provenance(cfg, out, "sidebands", coupling=coupling)
    return 0


def cmd_invert(cfg: RunConfig, out: Path) -> int:
    grid = cfg.make_grid()
    params = cfg.model_params(grid)
    inv = cfg.invert
    coupling = abs(cfg.model.gamma * cfg.drive.amplitude)
    res = inversion_pipeline(
        params.replace(phi=None, gamma=0.0),
        coupling,
        family=inv.family,
        snr_db=inv.snr_db,
        seed=cfg.seed,
        n_boot=inv.n_boot,
        grid=grid,
        points=[tuple(pt) for pt in cfg.sidebands.points],
    )
    fit = res.fit
    consistent = bool(fit.o2_consistency <= res.threshold)
    report = fit.to_dict()
    report.update(consistency_threshold=res.threshold, consistent=consistent, truth={
        "kappa": params.kappa, "kernel_shape": params.kernel.shape, "gamma_phi_abs": coupling,
    })
    write_json(out / "fit.json", report)
    _provenance(cfg, out, "invert")
    if not fit.converged:
        return EXIT_NO_CONVERGENCE
    return 0 if consistent else EXIT_INCONSISTENT


def cmd_validate(cfg: RunConfig, out: Path) -> int:
    # surface configuration problems (e.g. an RK4 dt above the CFL limit) first
    grid = cfg.make_grid()
    cfg.stepper_config().check(grid, cfg.model_params(grid))
    results = run_battery(cfg.seed, mutation=cfg.validate.mutation)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status} {r.name}: {r.value:.3e} (tol {r.tolerance:.0e})")
    failed = [r.name for r in results if not r.passed]
    write_json(out / "validate.json", {"passed": not failed, "failed": failed, "checks": [r.to_dict() for r in results]})
    if failed:
        print("failed: " + ", ".join(failed), file=sys.stderr)
        return EXIT_FAILED
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "dispersion": cmd_dispersion,
    "contrast": cmd_contrast,
    "sidebands": cmd_sidebands,
    "invert": cmd_invert,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rwns", description="Weighted nonlocal Schroedinger simulations and inversion.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", type=Path, help="YAML run configuration (optional for validate)")
    ap.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
    ap.add_argument("--seed", type=int, help="random seed (overrides seed)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config is None:
            if args.command != "validate":
                raise ConfigError(f"{args.command} needs --config")
            cfg = RunConfig(experiment="validate")
        else:
            cfg = RunConfig.load(args.config)
        if args.seed is not None:
            cfg = cfg.replace(seed=args.seed)
        out = args.out if args.out is not None else Path(cfg.output_dir)
        return COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalBlowup as exc:
        print(f"numerical blow-up: {exc}; last good time {exc.last_good_time:.17g}", file=sys.stderr)
        return EXIT_BLOWUP
    except NoConvergence as exc:
        print(f"no convergence: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except RWNSError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
