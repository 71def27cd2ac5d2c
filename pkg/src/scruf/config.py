"""Experiment configuration: a JSON key tree with defaults and dotted overrides."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from .agents import AgentSpec

DEFAULTS: dict = {
    "data": {
        "items": None,
        "reclists": None,
        "compat": None,
        "arrivals": None,
        "profiles": None,
        "test_ratings": None,
        "external_lists": None,
    },
    "agents": [],
    "allocation": {"mechanism": "weighted"},
    "choice": {"mechanism": "rescore", "lambda": 1.0},
    "window": 100,
    "output_size": 10,
    "seed": 0,
    "evaluation": {"relevance": "graded"},
    "output": {"dir": "results", "name": None},
}

AGENT_DEFAULTS = {"values": ["1"], "metric": "proportional_exposure", "target": 0.2, "delta": 1.0}


class ConfigError(ValueError):
    pass


def _merge(base: dict, extra: Mapping) -> dict:
    out = copy.deepcopy(base)
    for key, value in extra.items():
        if isinstance(value, Mapping) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(tree: dict, assignment: str) -> dict:
    """Apply ``a.b.c=value`` to ``tree`` in place; the key path must already exist."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    path, _, raw = assignment.partition("=")
    keys = path.strip().split(".")
    node: Any = tree
    for depth, key in enumerate(keys):
        last = depth == len(keys) - 1
        if isinstance(node, list):
            try:
                idx = int(key)
                node[idx]
            except (ValueError, IndexError):
                raise ConfigError(f"override {path!r}: no list element {key!r}") from None
            if last:
                node[idx] = parse_value(raw)
            else:
                node = node[idx]
        elif isinstance(node, dict):
            if key not in node:
                raise ConfigError(f"override {path!r}: unknown config key {key!r}")
            if last:
                node[key] = parse_value(raw)
            else:
                node = node[key]
        else:
            raise ConfigError(f"override {path!r}: {'.'.join(keys[:depth])} is not a section")
    return tree


@dataclass
class ExperimentConfig:
    tree: dict
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def from_dict(cls, data: Mapping, base_dir=None, overrides: Sequence[str] = ()) -> "ExperimentConfig":
        unknown = set(data) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        tree = _merge(DEFAULTS, data)
        tree["agents"] = [_merge(AGENT_DEFAULTS, a) for a in tree["agents"]]
        for item in overrides:
            apply_override(tree, item)
        cfg = cls(tree, Path(base_dir) if base_dir is not None else Path.cwd())
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path, overrides: Sequence[str] = ()) -> "ExperimentConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from None
        return cls.from_dict(data, path.parent, overrides)

    def with_overrides(self, *assignments: str) -> "ExperimentConfig":
        tree = copy.deepcopy(self.tree)
        for a in assignments:
            apply_override(tree, a)
        cfg = ExperimentConfig(tree, self.base_dir)
        cfg.validate()
        return cfg

    def validate(self):
        from .allocation import MECHANISMS as ALLOC
        from .choice import MECHANISMS as CHOICE

        if self.allocation_mechanism not in ALLOC:
            raise ConfigError(f"allocation.mechanism must be one of {ALLOC}, got {self.allocation_mechanism!r}")
        if self.choice_mechanism not in CHOICE + ("external",):
            raise ConfigError(f"choice.mechanism must be one of {CHOICE + ('external',)}, got {self.choice_mechanism!r}")
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError(f"choice.lambda must lie in [0, 1], got {self.lam}")
        if self.window <= 0 or self.output_size <= 0:
            raise ConfigError("window and output_size must be positive")
        if self.tree["evaluation"]["relevance"] not in ("graded", "binary"):
            raise ConfigError("evaluation.relevance must be 'graded' or 'binary'")
        names = [a["name"] for a in self.tree["agents"]]
        if len(set(names)) != len(names):
            raise ConfigError(f"agent names must be unique: {names}")
        try:
            self.agents
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid agent definition: {exc}") from None

    @property
    def agents(self) -> list[AgentSpec]:
        return [
            AgentSpec(
                name=a["name"],
                feature=a["feature"],
                values=frozenset(str(v) for v in a["values"]),
                metric_kind=a["metric"],
                target=float(a["target"]),
                delta=float(a["delta"]),
            )
            for a in self.tree["agents"]
        ]

    @property
    def allocation_mechanism(self) -> str:
        return self.tree["allocation"]["mechanism"]

    @property
    def choice_mechanism(self) -> str:
        return self.tree["choice"]["mechanism"]

    @property
    def lam(self) -> float:
        return float(self.tree["choice"]["lambda"])

    @property
    def window(self) -> int:
        return int(self.tree["window"])

    @property
    def output_size(self) -> int:
        return int(self.tree["output_size"])

    @property
    def seed(self) -> int:
        return int(self.tree["seed"])

    @property
    def binary_relevance(self) -> bool:
        return self.tree["evaluation"]["relevance"] == "binary"

    def data_path(self, key: str) -> Path | None:
        value = self.tree["data"].get(key)
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    def output_dir(self, override=None) -> Path:
        p = Path(override) if override is not None else Path(self.tree["output"]["dir"])
        return p if p.is_absolute() or override is not None else self.base_dir / p

    @property
    def run_name(self) -> str:
        name = self.tree["output"]["name"]
        if name:
            return str(name)
        return f"{self.allocation_mechanism}_{self.choice_mechanism}_lam{self.lam:g}"

    def to_json(self) -> str:
        return json.dumps(self.tree, indent=2, sort_keys=True)
