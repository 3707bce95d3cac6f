"""Profiles, experiment configuration files and logging setup.

Resolution order is built-in profile < INI file < explicit overrides. The
resolved configuration is echoed next to the results so a run can be
reproduced from its output directory alone.
"""

from __future__ import annotations

import configparser
import difflib
import io
import logging
import os
from dataclasses import asdict, dataclass, fields, replace
from typing import Mapping, Optional, Tuple

from .seeds import derive_seed

__all__ = ["Profile", "PROFILES", "ExperimentConfig", "ConfigError", "load_config", "echo_config",
           "config_to_ini", "derive_seed", "configure_logging", "parse_label", "SECTIONS"]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Profile:
    name: str
    dimension: int
    budget: int
    repeats: int
    evolver_population: int
    evolver_generations: int
    inner_repeats: int
    feature_samples: int
    train_size: int
    bench_instances: int
    max_epochs: int

    @property
    def cost_fields(self) -> Tuple[str, ...]:
        return tuple(f.name for f in fields(self) if f.name != "name")


PROFILES = {
    "desk": Profile("desk", dimension=5, budget=30_000, repeats=5, evolver_population=40,
                    evolver_generations=25, inner_repeats=3, feature_samples=5_000, train_size=100,
                    bench_instances=30, max_epochs=300),
    "full": Profile("full", dimension=10, budget=200_000, repeats=30, evolver_population=100,
                    evolver_generations=100, inner_repeats=3, feature_samples=10_000, train_size=3_000,
                    bench_instances=30, max_epochs=1_000),
}

DESK_LABELS = ("sphere-2lin", "sphere-2quad", "ackley-2lin", "ackley-2quad", "rosenbrock-2lin", "rosenbrock-2quad")


@dataclass(frozen=True)
class ExperimentConfig:
    # general
    seed: int = 1
    profile: str = "desk"
    # solvers
    dimension: int = 5
    budget: int = 30_000
    precision: float = 1e-4
    repeats: int = 5
    # evolver
    population_size: int = 40
    generations: int = 25
    inner_repeats: int = 3
    scale: float = 0.5
    crossover: float = 0.3
    coeff_bound: float = 5.0
    slack_lower: float = -1.0
    slots: int = 2
    # features
    n_samples: int = 5_000
    vicinity_radius_fraction: float = 0.1
    # model
    lambda0: float = 1e-3
    lambda_up: float = 10.0
    lambda_down: float = 0.1
    max_epochs: int = 300
    validation_fraction: float = 0.2
    patience: int = 20
    # study
    subset_kinds: Tuple[str, ...] = ("EP", "PF", "RO", "PFR")
    train_size: int = 100
    study_objective: str = "sphere"
    test_random: int = 4
    bench_labels: Tuple[str, ...] = DESK_LABELS
    bench_instances: int = 30
    ro_source: str = "archive"

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise ConfigError(f"unknown profile {self.profile!r}; expected one of {sorted(PROFILES)}")
        if self.repeats < 2:
            raise ConfigError("repeats must be >= 2 (the t-test needs a variance)")
        for name in ("dimension", "budget", "population_size", "inner_repeats", "n_samples", "train_size",
                     "bench_instances", "slots"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.generations < 0 or self.test_random < 0 or self.max_epochs < 0:
            raise ConfigError("generations, test_random and max_epochs must be >= 0")
        if self.coeff_bound <= 0 or self.slack_lower >= 0:
            raise ConfigError("coeff_bound must be > 0 and slack_lower < 0")
        for kind in self.subset_kinds:
            if kind not in ("EP", "PF", "RO", "PFR"):
                raise ConfigError(f"unknown subset kind {kind!r}")
        for label in self.bench_labels:
            parse_label(label)
        if self.ro_source not in ("archive", "fresh"):
            raise ConfigError(f"ro_source must be 'archive' or 'fresh', got {self.ro_source!r}")

    @classmethod
    def from_profile(cls, name: str) -> "ExperimentConfig":
        if name not in PROFILES:
            raise ConfigError(f"unknown profile {name!r}; expected one of {sorted(PROFILES)}")
        p = PROFILES[name]
        return cls(profile=name, dimension=p.dimension, budget=p.budget, repeats=p.repeats,
                   population_size=p.evolver_population, generations=p.evolver_generations,
                   inner_repeats=p.inner_repeats, n_samples=p.feature_samples, train_size=p.train_size,
                   bench_instances=p.bench_instances, max_epochs=p.max_epochs)

    @property
    def objectives(self) -> Tuple[str, ...]:
        """Objectives needed by the benchmark labels and the subset study, in first-seen order."""
        seen = [self.study_objective] if self.subset_kinds else []
        for label in self.bench_labels:
            obj = parse_label(label)[0]
            if obj not in seen:
                seen.append(obj)
        return tuple(seen)


SECTIONS = {
    "general": ("seed", "profile"),
    "solvers": ("dimension", "budget", "precision", "repeats"),
    "evolver": ("population_size", "generations", "inner_repeats", "scale", "crossover", "coeff_bound",
                "slack_lower", "slots"),
    "features": ("n_samples", "vicinity_radius_fraction"),
    "model": ("lambda0", "lambda_up", "lambda_down", "max_epochs", "validation_fraction", "patience"),
    "study": ("subset_kinds", "train_size", "study_objective", "test_random", "bench_labels", "bench_instances",
              "ro_source"),
}
_SECTION_OF = {key: sec for sec, keys in SECTIONS.items() for key in keys}
_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def parse_label(label: str) -> tuple:
    """``"sphere-2lin"`` or ``"ackley-1lin1quad"`` -> (objective, n_linear, n_quadratic)."""
    import re

    m = re.fullmatch(r"(sphere|ackley|rosenbrock)-((?:\d+(?:lin|quad))+)", label.strip().lower())
    if not m:
        raise ConfigError(f"bad problem label {label!r}; expected e.g. 'sphere-2lin' or 'ackley-1lin1quad'")
    counts = {"lin": 0, "quad": 0}
    for n, kind in re.findall(r"(\d+)(lin|quad)", m.group(2)):
        counts[kind] += int(n)
    return m.group(1), counts["lin"], counts["quad"]


def _suggest(key: str) -> str:
    near = difflib.get_close_matches(key, list(_SECTION_OF), n=1)
    return f"; did you mean {near[0]!r}?" if near else ""


def _coerce(key: str, value):
    kind = _TYPES[key]
    if not isinstance(value, str):
        if kind in ("int", "float") and isinstance(value, bool):
            raise ConfigError(f"{key}: expected {kind}, got {value!r}")
        if kind == "int" and isinstance(value, int):
            return value
        if kind == "float" and isinstance(value, (int, float)):
            return float(value)
        if kind.startswith("Tuple") and isinstance(value, (list, tuple)):
            return tuple(str(v) for v in value)
        value = str(value)
    text = value.strip()
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected {kind}, got {text!r}") from None
    if kind.startswith("Tuple"):
        return tuple(v.strip() for v in text.split(",") if v.strip())
    return text


def _apply(values: dict, key: str, raw, section: Optional[str] = None) -> None:
    if key not in _SECTION_OF:
        where = f" in [{section}]" if section else ""
        raise ConfigError(f"unknown key {key!r}{where}{_suggest(key)}")
    if section is not None and _SECTION_OF[key] != section:
        raise ConfigError(f"key {key!r} belongs in [{_SECTION_OF[key]}], not [{section}]")
    values[key] = _coerce(key, raw)


def load_config(path=None, overrides: Optional[Mapping] = None, profile: Optional[str] = None,
                echo_dir=None) -> ExperimentConfig:
    """Resolve profile preset, then the INI file at ``path``, then ``overrides``.

    ``overrides`` keys may be bare (``repeats``) or qualified (``solvers.repeats``).
    A ``profile`` argument wins over the file's ``[general] profile``.
    """
    file_values: dict = {}
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file {path} does not exist")
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            parser.read(path)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        for section in parser.sections():
            if section not in SECTIONS:
                near = difflib.get_close_matches(section, list(SECTIONS), n=1)
                hint = f"; did you mean [{near[0]}]?" if near else ""
                raise ConfigError(f"unknown section [{section}]{hint}")
            for key, raw in parser.items(section):
                _apply(file_values, key, raw, section)

    over: dict = {}
    for key, raw in (overrides or {}).items():
        section = None
        if "." in key:
            section, key = key.split(".", 1)
            if section not in SECTIONS:
                raise ConfigError(f"unknown section [{section}]")
        _apply(over, key, raw, section)

    name = profile or over.get("profile") or file_values.get("profile") or "desk"
    base = ExperimentConfig.from_profile(name)
    merged = {**file_values, **over, "profile": name}
    cfg = replace(base, **merged)
    if echo_dir is not None:
        echo_config(cfg, echo_dir)
    return cfg


def config_to_ini(cfg: ExperimentConfig) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    values = asdict(cfg)
    for section, keys in SECTIONS.items():
        parser[section] = {}
        for key in keys:
            v = values[key]
            parser[section][key] = ", ".join(v) if isinstance(v, tuple) else repr(v) if isinstance(v, float) else str(v)
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def echo_config(cfg: ExperimentConfig, directory) -> str:
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, "resolved_config.ini")
    with open(path, "w") as fh:
        fh.write(config_to_ini(cfg))
    return path


class _KeyValueFormatter(logging.Formatter):
    def format(self, record):
        msg = record.getMessage().replace('"', "'")
        return f'level={record.levelname.lower()} logger={record.name} msg="{msg}"'


def configure_logging(level: str = "WARNING", path=None) -> None:
    """One-line key=value records on stderr (and optionally a file)."""
    root = logging.getLogger("copselect")
    root.handlers.clear()
    handlers = [logging.StreamHandler()]
    if path is not None:
        handlers.append(logging.FileHandler(path))
    for h in handlers:
        h.setFormatter(_KeyValueFormatter())
        root.addHandler(h)
    root.setLevel(level.upper())
