"""Run configuration: one YAML file of flat dotted keys, parsed strictly.

Keys may also be written as nested mappings; both forms flatten to the same
``section.name`` paths. Any key not listed in the schema aborts the load.
"""
from __future__ import annotations

import dataclasses
import enum
import typing
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError
from .field import (
    ComplexField,
    KernelFamily,
    KernelSpec,
    ModelParams,
    Nonlinearity,
    PeriodicGrid,
    RealField,
)
from .integrator import StepperConfig


class Experiment(str, enum.Enum):
    SIMULATE = "simulate"
    DISPERSION = "dispersion"
    CONTRAST = "contrast"
    SIDEBANDS = "sidebands"
    INVERT = "invert"
    VALIDATE = "validate"


@dataclass
class GridSection:
    dim: int = 1
    n: int = 256
    length: float = 80.0


@dataclass
class ModelSection:
    w: float = 1.0
    u: float = 0.0
    beta: float = 0.0
    kappa: float = 0.0
    gamma: float = 0.0
    # relative cosine modulation of w and U over the box (forces rk4 when nonzero)
    w_modulation: float = 0.0
    u_modulation: float = 0.0


@dataclass
class KernelSection:
    family: str = "gaussian"
    shape: float = 1.0
    mass: float = 1.0


@dataclass
class NonlinearitySection:
    power: typing.Optional[float] = None


@dataclass
class DriveSection:
    """``phi = amplitude * cos(q_index * dk * x)``; the amplitude plays ``eps Phi_q``."""

    q_index: int = 0
    amplitude: float = 0.0


@dataclass
class InitialSection:
    kind: str = "plane_wave"  # plane_wave | broadband | zero
    k_index: int = 1
    amplitude: float = 1.0
    k_band: typing.Optional[float] = None


@dataclass
class StepperSection:
    scheme: str = "strang"
    dt: float = 0.01
    t_end: float = 10.0
    snapshot_stride: int = 10
    monitor_stride: int = 10


@dataclass
class DispersionSection:
    t_window: float = 200.0
    snr_db: typing.Optional[float] = None
    fit_baseline: bool = False


@dataclass
class ContrastSection:
    snr_db: typing.Optional[float] = None


@dataclass
class SidebandsSection:
    points: list = field(default_factory=lambda: [[1.0, 0.5], [1.5, 0.5], [2.0, 0.5], [1.0, 1.0], [2.0, 1.0], [0.5, 1.5]])
    t_end: float = 100.0
    snr_db: typing.Optional[float] = None


@dataclass
class InvertSection:
    family: typing.Optional[str] = None
    snr_db: typing.Optional[float] = None
    n_boot: int = 200


@dataclass
class ValidateSection:
    # evolve with the exchange sign flipped while monitoring the true energy
    mutation: bool = False


SECTIONS = {
    "grid": GridSection,
    "model": ModelSection,
    "kernel": KernelSection,
    "nonlinearity": NonlinearitySection,
    "drive": DriveSection,
    "initial": InitialSection,
    "stepper": StepperSection,
    "dispersion": DispersionSection,
    "contrast": ContrastSection,
    "sidebands": SidebandsSection,
    "invert": InvertSection,
    "validate": ValidateSection,
}
TOP_LEVEL = {"experiment": str, "seed": int, "output_dir": str}


def _flatten(obj, prefix=""):
    out = {}
    if isinstance(obj, dict):
        for k, v in obj.items():
            key = f"{prefix}.{k}" if prefix else str(k)
            items = _flatten(v, key) if isinstance(v, dict) else {key: v}
            for kk, vv in items.items():
                if kk in out:
                    raise ConfigError(f"duplicate key {kk!r}")
                out[kk] = vv
    return out


def _coerce(key, value, tp):
    origin = typing.get_origin(tp)
    if origin is typing.Union:
        if value is None:
            return None
        (tp,) = [a for a in typing.get_args(tp) if a is not type(None)]
        return _coerce(key, value, tp)
    if value is None:
        raise ConfigError(f"{key} may not be null")
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{key} must be true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key} must be an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} must be a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{key} must be a string, got {value!r}")
        return value
    if tp is list:
        if not isinstance(value, list):
            raise ConfigError(f"{key} must be a list, got {value!r}")
        return value
    raise ConfigError(f"unsupported type for {key}")  # pragma: no cover


@dataclass
class RunConfig:
    experiment: str = "simulate"
    seed: int = 0
    output_dir: str = "out"
    grid: GridSection = field(default_factory=GridSection)
    model: ModelSection = field(default_factory=ModelSection)
    kernel: KernelSection = field(default_factory=KernelSection)
    nonlinearity: NonlinearitySection = field(default_factory=NonlinearitySection)
    drive: DriveSection = field(default_factory=DriveSection)
    initial: InitialSection = field(default_factory=InitialSection)
    stepper: StepperSection = field(default_factory=StepperSection)
    dispersion: DispersionSection = field(default_factory=DispersionSection)
    contrast: ContrastSection = field(default_factory=ContrastSection)
    sidebands: SidebandsSection = field(default_factory=SidebandsSection)
    invert: InvertSection = field(default_factory=InvertSection)
    validate: ValidateSection = field(default_factory=ValidateSection)

    def __post_init__(self):
        try:
            Experiment(self.experiment)
        except ValueError:
            raise ConfigError(f"unknown experiment {self.experiment!r}") from None
        if self.initial.kind not in ("plane_wave", "broadband", "zero"):
            raise ConfigError(f"unknown initial.kind {self.initial.kind!r}")
        try:
            KernelFamily(self.kernel.family)
        except ValueError:
            raise ConfigError(f"unknown kernel.family {self.kernel.family!r}") from None

    # -- serialization

    @classmethod
    def from_flat(cls, flat: dict) -> "RunConfig":
        known = {}
        for name, sec in SECTIONS.items():
            for f, tp in typing.get_type_hints(sec).items():
                known[f"{name}.{f}"] = tp
        known.update(TOP_LEVEL)
        unknown = sorted(set(flat) - set(known))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        top = {}
        parts = {name: {} for name in SECTIONS}
        for key, value in flat.items():
            value = _coerce(key, value, known[key])
            if "." in key:
                sec, name = key.split(".", 1)
                parts[sec][name] = value
            else:
                top[key] = value
        sections = {name: SECTIONS[name](**kw) for name, kw in parts.items()}
        return cls(**top, **sections)

    @classmethod
    def from_dict(cls, data) -> "RunConfig":
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError("config must be a mapping")
        return cls.from_flat(_flatten(data))

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            data = yaml.safe_load(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML in {path}: {exc}") from None
        return cls.from_dict(data)

    def to_flat(self) -> dict:
        out = {k: getattr(self, k) for k in TOP_LEVEL}
        for name in SECTIONS:
            for f in dataclasses.fields(getattr(self, name)):
                out[f"{name}.{f.name}"] = getattr(getattr(self, name), f.name)
        return out

    def dump(self) -> str:
        return yaml.safe_dump(self.to_flat(), sort_keys=False)

    def save(self, path) -> None:
        Path(path).write_text(self.dump())

    def replace(self, **flat) -> "RunConfig":
        """Copy with dotted keys overridden, e.g. ``replace(**{"model.kappa": -1})``."""
        return RunConfig.from_flat({**self.to_flat(), **flat})

    # -- builders

    def make_grid(self) -> PeriodicGrid:
        g = self.grid
        return PeriodicGrid(g.dim, g.n, g.length)

    def _profile(self, grid, base, modulation):
        if modulation == 0:
            return base
        x = grid.coords[0]
        return RealField(grid, base * (1 + modulation * np.cos(2 * np.pi * x / grid.length)))

    def model_params(self, grid: PeriodicGrid | None = None) -> ModelParams:
        grid = grid or self.make_grid()
        m, d = self.model, self.drive
        phi = None
        if d.q_index != 0 and d.amplitude != 0:
            q = d.q_index * grid.dk
            phi = RealField(grid, d.amplitude * np.cos(q * grid.coords[0]))
        return ModelParams(
            w=self._profile(grid, m.w, m.w_modulation),
            u=self._profile(grid, m.u, m.u_modulation),
            phi=phi,
            beta=m.beta,
            kappa=m.kappa,
            gamma=m.gamma if phi is not None else 0.0,
            nonlinearity=Nonlinearity(self.nonlinearity.power),
            kernel=KernelSpec(KernelFamily(self.kernel.family), self.kernel.shape, self.kernel.mass),
        )

    def initial_field(self, grid: PeriodicGrid | None = None) -> ComplexField:
        from .protocols import broadband_field, plane_wave

        grid = grid or self.make_grid()
        ic = self.initial
        if ic.kind == "zero":
            return ComplexField(grid, np.zeros(grid.shape, dtype=complex))
        if ic.kind == "broadband":
            return broadband_field(grid, np.random.default_rng(self.seed), ic.k_band, ic.amplitude)
        if grid.dim != 1:
            raise ConfigError("plane_wave initial data is implemented for 1D grids")
        return plane_wave(grid, ic.k_index * grid.dk, ic.amplitude)

    def stepper_config(self) -> StepperConfig:
        s = self.stepper
        return StepperConfig(s.scheme, s.dt, s.t_end, s.snapshot_stride, s.monitor_stride)
