"""Run configuration: one TOML file with a flat section per subsystem.

Top-level keys: seed (all randomness derives from it) and threads. Sections:
[features], [network], [train], [decision], [energy], [paths]. Every key is
optional; defaults are the dataclass defaults. The effective configuration
is echoed into the output directory and must reload identically.
"""

import json
import os
from dataclasses import asdict, dataclass, field

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .decision import DecisionConfig
from .energy import EnergyModel
from .features import FbankConfig
from .network import NetworkConfig
from .training import TrainConfig

_SECTION_ORDER = ("features", "network", "train", "decision", "energy", "paths")

DEFAULT_PATHS = {"data_root": "", "manifest": "", "checkpoint": "", "out_dir": "out"}


@dataclass
class RunConfig:
    """Everything one command needs, resolved to concrete values."""

    seed: int = 0
    threads: int = field(default_factory=lambda: os.cpu_count() or 1)
    features: FbankConfig = field(default_factory=FbankConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    decision: DecisionConfig = field(default_factory=DecisionConfig)
    energy: EnergyModel = field(default_factory=EnergyModel)
    paths: dict = field(default_factory=lambda: dict(DEFAULT_PATHS))

    def __post_init__(self):
        # the single top-level seed drives training too
        self.train.seed = self.seed

    def to_dict(self):
        d = {"seed": self.seed, "threads": self.threads}
        d["features"] = asdict(self.features)
        network = asdict(self.network)
        network["hidden_sizes"] = list(network["hidden_sizes"])
        d["network"] = network
        train = asdict(self.train)
        train.pop("seed")  # only the top-level seed is authoritative
        d["train"] = train
        d["decision"] = asdict(self.decision)
        d["energy"] = asdict(self.energy)
        d["paths"] = dict(self.paths)
        return d


def _build(cls, section, name):
    known = set(cls.__dataclass_fields__)
    unknown = set(section) - known
    if unknown:
        raise ValueError(f"unknown keys in [{name}]: {sorted(unknown)}")
    return cls(**section)


def config_from_dict(doc: dict) -> RunConfig:
    doc = dict(doc)
    sections = {name: dict(doc.pop(name, {})) for name in _SECTION_ORDER}
    top_unknown = set(doc) - {"seed", "threads"}
    if top_unknown:
        raise ValueError(f"unknown top-level config keys: {sorted(top_unknown)}")
    seed = int(doc.get("seed", 0))
    threads = int(doc.get("threads", os.cpu_count() or 1))

    network = sections["network"]
    if "hidden_sizes" in network:
        network["hidden_sizes"] = tuple(network["hidden_sizes"])
    paths = dict(DEFAULT_PATHS)
    unknown_paths = set(sections["paths"]) - set(DEFAULT_PATHS)
    if unknown_paths:
        raise ValueError(f"unknown keys in [paths]: {sorted(unknown_paths)}")
    paths.update(sections["paths"])

    return RunConfig(
        seed=seed,
        threads=threads,
        features=_build(FbankConfig, sections["features"], "features"),
        network=_build(NetworkConfig, network, "network"),
        train=_build(TrainConfig, sections["train"], "train"),
        decision=_build(DecisionConfig, sections["decision"], "decision"),
        energy=_build(EnergyModel, sections["energy"], "energy"),
        paths=paths,
    )


def load_config(path=None) -> RunConfig:
    """Load a TOML config file; with no path, return all defaults."""
    if path is None:
        return RunConfig()
    with open(path, "rb") as f:
        doc = tomllib.load(f)
    return config_from_dict(doc)


def _toml_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        text = repr(value)
        # make sure tomllib reads it back as a float
        return text if any(c in text for c in ".eE") else text + ".0"
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    raise TypeError(f"cannot emit {type(value).__name__} as TOML")


def dump_toml(config: RunConfig) -> str:
    """Serialize the effective configuration as TOML text."""
    d = config.to_dict()
    lines = [f"seed = {_toml_value(d['seed'])}", f"threads = {_toml_value(d['threads'])}"]
    for name in _SECTION_ORDER:
        lines.append("")
        lines.append(f"[{name}]")
        for key, value in d[name].items():
            lines.append(f"{key} = {_toml_value(value)}")
    return "\n".join(lines) + "\n"


def save_config(config: RunConfig, path):
    with open(path, "w", encoding="utf-8") as f:
        f.write(dump_toml(config))
