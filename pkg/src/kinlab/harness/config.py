"""Experiment configuration: INI files with one section per experiment.

Keys in ``[common]`` apply to every experiment section; a key set in an
experiment section overrides it.  Lists are whitespace separated, e.g.
``eps = 0.4 0.2 0.1 0.05``.  Unknown keys and unknown sections are errors.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from ..diffusion import TimeScheme
from ..kinetic import Splitting
from ..scattering import RelaxationMethod, ScatteringKind
from .data import region

EXPERIMENTS = ("E1", "E2", "E3", "E4", "E5", "E6", "E7", "E8")


def _floats(text: str) -> tuple:
    return tuple(float(t) for t in text.split())


def _ints(text: str) -> tuple:
    return tuple(int(t) for t in text.split())


def _words(text: str) -> tuple:
    return tuple(text.split())


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "yes", "true", "on"):
        return True
    if t in ("0", "no", "false", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    nx: tuple = (63,)
    nv: int = 32
    eps: tuple = (0.4, 0.2, 0.1, 0.05)
    T: float = 0.1
    T_list: tuple = (0.05, 0.1, 0.2, 0.4)
    p: float = 3.0
    scattering: tuple = (ScatteringKind.NEUTRON,)
    splitting: Splitting = Splitting.STRANG
    relaxation: RelaxationMethod = RelaxationMethod.EXACT
    cfl: float = 0.9
    snapshots: int = 10
    opacity: tuple = ("constant", "1.0")
    initial: tuple = ("bump", "0.35")
    report_anisotropic: bool = False
    shapes: tuple = (0.4, 0.3, 0.2)
    omega: tuple = ("ball", "0.5", "0.5", "0.2")
    lambdas: tuple = (0.01, 0.05, 0.2)
    mu: float = 0.5
    samples: int = 20
    modes: int = 200
    radius: float = 0.25
    rho: float = 0.4
    eps_cut: float = 0.1
    steps: int = 200
    scheme: TimeScheme = TimeScheme.CRANK_NICOLSON
    seed: int = 20240601
    persistence: float = 1.5
    tolerance: float = 0.05
    out: str = "results"

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if len(self.eps) == 0 or any(b >= a for a, b in zip(self.eps, self.eps[1:])):
            raise ValueError(f"eps list must be strictly decreasing, got {self.eps}")
        if any(not (0 < e <= 1) for e in self.eps):
            raise ValueError("every eps must lie in (0, 1]")
        if not self.p > 2:
            raise ValueError("p must exceed 2")
        if not (self.T > 0 and all(t > 0 for t in self.T_list)):
            raise ValueError("times must be positive")
        if not 0 < self.mu < 1:
            raise ValueError("mu must lie in (0, 1)")
        if self.persistence < 1:
            raise ValueError("persistence factor must be >= 1")
        region(self.omega)

    @property
    def grid_n(self) -> int:
        """Grid on which checks are asserted; further ``nx`` entries are sensitivity reports."""
        return self.nx[0]


_PARSERS = {
    "nx": _ints,
    "nv": int,
    "eps": _floats,
    "T": float,
    "T_list": _floats,
    "p": float,
    "scattering": lambda s: tuple(ScatteringKind.parse(w) for w in s.split()),
    "splitting": lambda s: Splitting(s.strip().lower()),
    "relaxation": lambda s: RelaxationMethod({"be": "backward_euler"}.get(s.strip().lower(), s.strip().lower())),
    "cfl": float,
    "snapshots": int,
    "opacity": _words,
    "initial": _words,
    "report_anisotropic": _bool,
    "shapes": _floats,
    "omega": _words,
    "lambdas": _floats,
    "mu": float,
    "samples": int,
    "modes": int,
    "radius": float,
    "rho": float,
    "eps_cut": float,
    "steps": int,
    "scheme": TimeScheme.parse,
    "seed": int,
    "persistence": float,
    "tolerance": float,
    "out": str.strip,
}
assert set(_PARSERS) == {f.name for f in fields(ExperimentConfig)} - {"experiment"}


def parse_config_text(text: str) -> list[ExperimentConfig]:
    cp = configparser.ConfigParser(default_section="__none__", interpolation=None)
    cp.optionxform = str  # keys are case sensitive (T vs t)
    cp.read_string(text)
    common = dict(cp["common"]) if cp.has_section("common") else {}
    out = []
    for name in cp.sections():
        if name == "common":
            continue
        if name not in EXPERIMENTS:
            raise ValueError(f"unknown section [{name}]")
        raw = {**common, **dict(cp[name])}
        kwargs = {}
        for key, value in raw.items():
            if key not in _PARSERS:
                raise ValueError(f"unknown key {key!r} in section [{name}]")
            try:
                kwargs[key] = _PARSERS[key](value)
            except ValueError as exc:
                raise ValueError(f"[{name}] {key} = {value!r}: {exc}") from None
        out.append(ExperimentConfig(experiment=name, **kwargs))
    if not out:
        raise ValueError("configuration defines no experiment")
    return out


def load_config(path: str | Path) -> list[ExperimentConfig]:
    return parse_config_text(Path(path).read_text(encoding="utf-8"))


def format_value(value) -> str:
    """Render a config value the way the INI parser reads it back."""
    if isinstance(value, tuple):
        return " ".join(format_value(v) for v in value)
    if isinstance(value, (ScatteringKind, Splitting, TimeScheme, RelaxationMethod)):
        return value.value
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(cfg, **kw)
