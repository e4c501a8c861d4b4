"""JSON run configuration with strict key checking."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .trainer import TRAIN_FIELDS, TrainConfig


class ConfigError(ValueError):
    """Invalid configuration; the message lists every problem found."""


SECTIONS = {
    "data": {
        "required": ("corpus", "splits"),
        "optional": {"stopwords": None, "min_count": 5, "skip_filtering": False},
    },
    "graphs": {
        "required": (),
        "optional": {"window": 20, "knn": 25, "mode": "transductive", "build_knn": True},
    },
    "model": {
        "required": ("architecture",),
        "optional": {"dim": 200, "input_mode": "onehot", "normalization": "row",
                     "simplified": False, "combine": "sum"},
    },
    "train": {
        "required": (),
        "optional": {f: getattr(TrainConfig(), f) for f in TRAIN_FIELDS if f != "normalization"},
    },
    "output": {"required": ("directory",), "optional": {}},
    "sweep": {"required": (), "optional": {"grid": {}}},
}
REQUIRED_SECTIONS = ("data", "model", "output")
PATH_KEYS = (("data", "corpus"), ("data", "splits"), ("data", "stopwords"), ("output", "directory"))


@dataclass
class RunConfig:
    data: dict
    graphs: dict
    model: dict
    train: dict
    output: dict
    sweep: dict = field(default_factory=dict)
    source: Path = None

    def to_dict(self):
        return {"data": self.data, "graphs": self.graphs, "model": self.model,
                "train": self.train, "output": self.output, "sweep": self.sweep}

    def train_config(self, **overrides):
        kwargs = dict(self.train)
        kwargs["normalization"] = self.model["normalization"]
        kwargs.update(overrides)
        try:
            return TrainConfig(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"train: {exc}") from None

    @property
    def out_dir(self):
        return Path(self.output["directory"])

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def parse_config(doc, base_dir=None):
    """Validate a config mapping, filling defaults.  All problems are reported at once."""
    problems = []
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")
    for name in set(doc) - set(SECTIONS):
        problems.append(f"unknown section {name!r}")
    for name in REQUIRED_SECTIONS:
        if name not in doc:
            problems.append(f"missing section {name!r}")
    parsed = {}
    for name, rules in SECTIONS.items():
        section = doc.get(name, {})
        if not isinstance(section, dict):
            problems.append(f"section {name!r} must be an object")
            continue
        allowed = set(rules["required"]) | set(rules["optional"])
        for key in sorted(set(section) - allowed):
            problems.append(f"unknown key {name}.{key}")
        if name in doc:
            for key in rules["required"]:
                if key not in section:
                    problems.append(f"missing key {name}.{key}")
        merged = dict(rules["optional"])
        merged.update({k: v for k, v in section.items() if k in allowed})
        parsed[name] = merged
    grid = parsed.get("sweep", {}).get("grid", {})
    if isinstance(grid, dict):
        for key in sorted(set(grid) - set(TRAIN_FIELDS)):
            problems.append(f"unknown sweep grid field {key!r}")
    else:
        problems.append("sweep.grid must be an object")
    if problems:
        raise ConfigError("; ".join(problems))
    if base_dir is not None:
        for section, key in PATH_KEYS:
            value = parsed[section].get(key)
            if value and not Path(value).is_absolute():
                parsed[section][key] = str(Path(base_dir) / value)
    cfg = RunConfig(**parsed)
    cfg.train_config()
    return cfg


def load_config(path):
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    cfg = parse_config(doc, base_dir=path.parent)
    cfg.source = path
    return cfg
