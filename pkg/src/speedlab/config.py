"""Run configuration: a sectioned key-value file with a typed schema.

Files are INI-style documents parsed by ``configparser``.  Every field has
a declared type and either a default or a required marker; validation
errors carry the full ``section.key`` path.  The fully defaulted effective
configuration can be rendered back out in canonical form, and re-running
from that echo reproduces the run byte for byte.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field
from typing import Any

from .engine import LatencyModel
from .estimators import CurriculumShape
from .population import PolicyPopulationSpec, PopulationSpec
from .scheduler import CurriculumConfig
from .trainer import TrainConfig

MODES = ("baseline", "speed", "verify", "sweep")
SWEEP_AXES = ("n_init", "latency", "population")

_REQUIRED = object()


class ConfigError(ValueError):
    """Invalid or missing configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


# Schema: section -> key -> (type tag, default or required marker).
# Type tags: int, float, bool, str, float_list, int_list.
SCHEMA: dict[str, dict[str, tuple[str, Any]]] = {
    "run": {
        "mode": ("str", _REQUIRED),
        "seed": ("int", 0),
    },
    "policy": {
        "size": ("int", 192),
        "n_responses": ("int", 8),
        "zero_mass": ("float", 0.34),
        "one_mass": ("float", 0.28),
        "beta_alpha": ("float", 1.0),
        "beta_beta": ("float", 2.0),
        "hard_pass_rate": ("float", 0.03),
        "easy_pass_rate": ("float", 0.97),
    },
    "population": {
        "size": ("int", 1000),
        "zero_mass": ("float", 0.34),
        "one_mass": ("float", 0.10),
        "beta_alpha": ("float", 1.0),
        "beta_beta": ("float", 1.0),
    },
    "curriculum": {
        "n_init": ("int", 4),
        "n_cont": ("int", 20),
        "p_low": ("float", 0.0),
        "p_high": ("float", 1.0),
        "train_batch_size": ("int", 16),
        "generation_batch_size": ("int", 64),
        "buffer_policy": ("str", "fifo"),
    },
    "train": {
        "learning_rate": ("float", 0.1),
        "total_updates": ("int", 100),
        "n_total": ("int", 24),
        "batch_size": ("int", 16),
        "eval_interval": ("int", 1),
        "max_engine_calls": ("int", 100000),
        "max_sim_seconds": ("float", 0.0),  # 0 disables the time budget
        "targets": ("float_list", [0.5, 0.7, 0.9]),
        "paired_baseline": ("bool", False),
    },
    "latency": {
        "call_overhead": ("float", 1.0),
        "per_generation_cost": ("float", 0.5),
        "concurrency_width": ("int", 64),
        "train_seconds_per_update": ("float", 2.0),
    },
    "output": {
        "dir": ("str", "runs/out"),
    },
    "sweep": {
        "axis": ("str", "n_init"),
        "values": ("float_list", []),
    },
    "verify": {
        "suite": ("str", "all"),
    },
}

# Sections that must be present (beyond defaults) per mode; "policy|population"
# means exactly one of the two.
_MODE_SECTIONS = {
    "baseline": ["policy"],
    "speed": ["policy|population"],
    "sweep": ["policy", "sweep"],
    "verify": [],
}


def _parse_value(tag: str, raw: str, path: str):
    try:
        if tag == "int":
            return int(raw)
        if tag == "float":
            return float(raw)
        if tag == "bool":
            lowered = raw.strip().lower()
            if lowered in ("true", "yes", "1", "on"):
                return True
            if lowered in ("false", "no", "0", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if tag == "str":
            return raw.strip()
        if tag == "float_list":
            if not raw.strip():
                return []
            return [float(part) for part in raw.split(",")]
        if tag == "int_list":
            if not raw.strip():
                return []
            return [int(part) for part in raw.split(",")]
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None
    raise ConfigError(path, f"unknown schema type {tag!r}")


@dataclass
class RunConfig:
    """Fully defaulted effective configuration for one CLI invocation."""

    mode: str
    seed: int
    sections: dict[str, dict[str, Any]]
    present: set[str] = field(default_factory=set)

    def __getitem__(self, section: str) -> dict[str, Any]:
        return self.sections[section]

    @property
    def uses_policy_population(self) -> bool:
        return "policy" in self.present or "population" not in self.present

    def policy_population_spec(self) -> PolicyPopulationSpec:
        p = self.sections["policy"]
        return PolicyPopulationSpec(
            size=p["size"], n_responses=p["n_responses"],
            zero_mass=p["zero_mass"], one_mass=p["one_mass"],
            beta_alpha=p["beta_alpha"], beta_beta=p["beta_beta"],
            hard_pass_rate=p["hard_pass_rate"], easy_pass_rate=p["easy_pass_rate"],
        )

    def latent_population_spec(self) -> PopulationSpec:
        p = self.sections["population"]
        return PopulationSpec(
            size=p["size"], zero_mass=p["zero_mass"], one_mass=p["one_mass"],
            beta_alpha=p["beta_alpha"], beta_beta=p["beta_beta"],
        )

    def curriculum_config(self, n_init: int | None = None) -> CurriculumConfig:
        c = self.sections["curriculum"]
        ni = c["n_init"] if n_init is None else n_init
        n_total = c["n_init"] + c["n_cont"]
        return CurriculumConfig(
            shape=CurriculumShape(n_init=ni, n_cont=n_total - ni),
            p_low=c["p_low"], p_high=c["p_high"],
            train_batch_size=c["train_batch_size"],
            generation_batch_size=c["generation_batch_size"],
            buffer_policy=c["buffer_policy"],
        )

    def train_config(self, seed: int | None = None, **overrides) -> TrainConfig:
        t = self.sections["train"]
        max_sim = t["max_sim_seconds"] or None
        kwargs = dict(
            learning_rate=t["learning_rate"], total_updates=t["total_updates"],
            n_total=t["n_total"], batch_size=t["batch_size"],
            eval_interval=t["eval_interval"],
            max_engine_calls=t["max_engine_calls"],
            max_sim_seconds=max_sim,
            seed=self.seed if seed is None else seed,
        )
        kwargs.update(overrides)
        return TrainConfig(**kwargs)

    def latency_model(self, per_generation_cost: float | None = None) -> LatencyModel:
        l = self.sections["latency"]
        return LatencyModel(
            call_overhead=l["call_overhead"],
            per_generation_cost=(
                l["per_generation_cost"] if per_generation_cost is None
                else per_generation_cost
            ),
            concurrency_width=l["concurrency_width"],
            train_seconds_per_update=l["train_seconds_per_update"],
        )


def load_config(path: str, seed_override: int | None = None,
                out_override: str | None = None) -> RunConfig:
    """Parse, validate, and default a configuration file."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(path, "config file not found or unreadable")
    return _build(parser, seed_override, out_override)


def loads_config(text: str, seed_override: int | None = None,
                 out_override: str | None = None) -> RunConfig:
    parser = configparser.ConfigParser()
    parser.read_string(text)
    return _build(parser, seed_override, out_override)


def _build(parser: configparser.ConfigParser, seed_override: int | None,
           out_override: str | None) -> RunConfig:
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(section, "unknown section")
        for key in parser[section]:
            if key not in SCHEMA[section]:
                raise ConfigError(f"{section}.{key}", "unknown key")

    sections: dict[str, dict[str, Any]] = {}
    for section, fields in SCHEMA.items():
        values = {}
        for key, (tag, default) in fields.items():
            path = f"{section}.{key}"
            if parser.has_option(section, key):
                values[key] = _parse_value(tag, parser.get(section, key), path)
            elif default is _REQUIRED:
                raise ConfigError(path, "missing required key")
            else:
                values[key] = default.copy() if isinstance(default, list) else default
        sections[section] = values

    mode = sections["run"]["mode"]
    if mode not in MODES:
        raise ConfigError("run.mode", f"must be one of {MODES}, got {mode!r}")

    present = set(parser.sections())
    for requirement in _MODE_SECTIONS[mode]:
        if "|" in requirement:
            options = requirement.split("|")
            matches = [s for s in options if s in present]
            if len(matches) != 1:
                raise ConfigError(
                    "|".join(options),
                    f"mode {mode!r} needs exactly one of these sections, "
                    f"found {matches or 'none'}",
                )
        elif requirement not in present:
            raise ConfigError(requirement, f"section required for mode {mode!r}")

    if mode == "sweep":
        axis = sections["sweep"]["axis"]
        if axis not in SWEEP_AXES:
            raise ConfigError("sweep.axis", f"must be one of {SWEEP_AXES}")
        if len(sections["sweep"]["values"]) < 2:
            raise ConfigError("sweep.values", "need at least 2 axis values")

    if seed_override is not None:
        sections["run"]["seed"] = seed_override
    if out_override is not None:
        sections["output"]["dir"] = out_override

    return RunConfig(mode=mode, seed=sections["run"]["seed"],
                     sections=sections, present=present)


def _active_sections(config: RunConfig) -> list[str]:
    """Sections that drive the given mode, in schema order."""
    mode = config.mode
    if mode == "verify":
        active = {"run", "verify", "output"}
    elif mode == "baseline":
        active = {"run", "policy", "train", "latency", "output"}
    elif mode == "speed":
        data = "policy" if config.uses_policy_population else "population"
        active = {"run", data, "curriculum", "train", "latency", "output"}
    else:  # sweep
        active = {"run", "policy", "curriculum", "train", "latency",
                  "output", "sweep"}
    return [s for s in SCHEMA if s in active]


def render_config(config: RunConfig) -> str:
    """Canonical text of the fully defaulted effective configuration.

    Only the sections the mode actually consumes are emitted, with every
    key explicit, so re-loading the rendered text reproduces the run.
    """
    out = io.StringIO()
    for section in _active_sections(config):
        out.write(f"[{section}]\n")
        for key, (tag, _) in SCHEMA[section].items():
            value = config.sections[section][key]
            if tag in ("float_list", "int_list"):
                rendered = ", ".join(repr(v) for v in value)
            else:
                rendered = repr(value) if isinstance(value, float) else str(value)
            out.write(f"{key} = {rendered}\n")
        out.write("\n")
    return out.getvalue()
