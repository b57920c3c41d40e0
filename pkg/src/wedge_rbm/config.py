"""Experiment configuration: flat key = value files with sections.

Angles accept a "pi*" prefix (e.g. ``xi = pi*0.5``) so that regime
boundaries like alpha = 1 are hit without decimal-pi drift.  Vector values
are comma separated; each component may itself use the pi* form.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .geometry import build_wedge
from .simulator import SimConfig

KNOWN_ESTIMATORS = (
    "hitting",
    "occupancy",
    "variation",
    "submartingale",
    "feller",
    "scaling",
    "esp-check",
    "girsanov",
)


def parse_scalar(text: str) -> float:
    """Parse a float, honoring the pi* prefix (with optional leading sign)."""
    t = text.strip()
    sign = 1.0
    if t.startswith(("+", "-")):
        sign = -1.0 if t[0] == "-" else 1.0
        t = t[1:].strip()
    if t.startswith("pi*"):
        return sign * math.pi * float(t[3:])
    if t == "pi":
        return sign * math.pi
    return sign * float(t)


def parse_vector(text: str) -> tuple[float, float]:
    parts = [p for p in text.split(",") if p.strip()]
    if len(parts) != 2:
        raise ValueError(f"expected two comma-separated components, got {text!r}")
    return (parse_scalar(parts[0]), parse_scalar(parts[1]))


def parse_list(text: str) -> list[float]:
    return [parse_scalar(p) for p in text.split(",") if p.strip()]


def parse_int_list(text: str) -> list[int]:
    return [int(p) for p in text.split(",") if p.strip()]


@dataclass(frozen=True)
class ExperimentSpec:
    """A named experiment: base simulation config plus estimator parameters."""

    name: str
    sim: SimConfig
    estimators: tuple[str, ...]
    params: dict = field(default_factory=dict)

    def validate(self) -> None:
        if not self.name:
            raise ConfigError("experiment name must be nonempty")
        for est in self.estimators:
            if est not in KNOWN_ESTIMATORS:
                raise ConfigError(
                    f"unknown estimator {est!r}; valid names: "
                    + ", ".join(KNOWN_ESTIMATORS)
                )


class _FileView:
    """Field-addressed access to a parsed config file with diagnostics."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.parser = configparser.ConfigParser(
            inline_comment_prefixes=("#", ";"), interpolation=None
        )
        try:
            read = self.parser.read(self.path, encoding="utf-8")
        except configparser.Error as exc:
            raise ConfigError(f"{self.path}: {exc}") from exc
        if not read:
            raise ConfigError(f"{self.path}: file not found or unreadable")

    def _line_of(self, section: str, key: str) -> str:
        try:
            text = self.path.read_text(encoding="utf-8").splitlines()
        except OSError:
            return ""
        in_section = False
        for i, line in enumerate(text, start=1):
            s = line.strip()
            if s.startswith("[") and s.endswith("]"):
                in_section = s[1:-1].strip() == section
            elif in_section and s.split("=")[0].strip() == key:
                return f" (line {i})"
        return ""

    def get(self, section: str, key: str, convert, default=None, required=False):
        if not self.parser.has_option(section, key):
            if required:
                raise ConfigError(f"{self.path}: missing [{section}] {key}")
            return default
        raw = self.parser.get(section, key)
        try:
            return convert(raw)
        except (ValueError, TypeError) as exc:
            raise ConfigError(
                f"{self.path}: [{section}] {key} = {raw!r}{self._line_of(section, key)}: {exc}"
            ) from exc

    def section(self, name: str) -> dict[str, str]:
        if not self.parser.has_section(name):
            return {}
        return dict(self.parser.items(name))


def load_sim_config(path: str | Path, overrides: dict | None = None) -> SimConfig:
    """Build a SimConfig from [geometry] and [simulation] sections."""
    view = _FileView(path)
    return _sim_from_view(view, overrides or {})


def _sim_from_view(view: _FileView, overrides: dict) -> SimConfig:
    xi = view.get("geometry", "xi", parse_scalar, required=True)
    th1 = view.get("geometry", "theta1", parse_scalar, required=True)
    th2 = view.get("geometry", "theta2", parse_scalar, required=True)
    try:
        g = build_wedge(xi, th1, th2)
    except ValueError as exc:
        raise ConfigError(f"{view.path}: [geometry]: {exc}") from exc

    kwargs = dict(
        geometry=g,
        mu=view.get("simulation", "mu", parse_vector, default=(0.0, 0.0)),
        z0=view.get("simulation", "z0", parse_vector, default=(1.0, 0.5)),
        T=view.get("simulation", "T", parse_scalar, default=1.0),
        dt=view.get("simulation", "dt", parse_scalar, default=None),
        n_paths=view.get("simulation", "n_paths", int, default=100),
        seed=view.get("simulation", "seed", int, default=0),
        mode=view.get("simulation", "mode", str.strip, default="reflected"),
        eps_vertex=view.get("simulation", "eps_vertex", parse_scalar, default=None),
    )
    kwargs.update(overrides)
    try:
        return SimConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{view.path}: [simulation]: {exc}") from exc


def load_experiment(path: str | Path, overrides: dict | None = None) -> ExperimentSpec:
    """Build an ExperimentSpec: sim config, estimator list, estimator params."""
    view = _FileView(path)
    sim = _sim_from_view(view, overrides or {})
    name = view.get("experiment", "name", str.strip, default=Path(path).stem)
    raw = view.get("experiment", "estimators", str, default="")
    estimators = tuple(e.strip() for e in raw.split(",") if e.strip())
    params = {
        est: view.section(est)
        for est in KNOWN_ESTIMATORS
        if view.parser.has_section(est)
    }
    spec = ExperimentSpec(name=name, sim=sim, estimators=estimators, params=params)
    spec.validate()
    return spec
