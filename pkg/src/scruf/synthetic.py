"""Latent-factor generator for biased recommender output.

Users get real-valued propensities per factor, items get binary ones for the
sensitive factors; latent factors are then drawn around those propensities.
Each user rates a random sample of items, sensitive items are penalised, and
the best-scored items become the user's recommendation list.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .model import Item, ScoredList, UserProfile


@dataclass
class Segment:
    name: str
    size: int
    # factor index -> (mu, sigma) overriding the spec defaults
    propensities: dict[int, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        self.size = int(self.size)
        if self.size < 0:
            raise ValueError(f"segment {self.name!r} has negative size {self.size}")
        self.propensities = {int(f): (float(mu), float(sd)) for f, (mu, sd) in self.propensities.items()}


@dataclass
class GeneratorSpec:
    n_users: int = 1500
    n_items: int = 1000
    k_factors: int = 10
    k_sensitive: int = 2
    # default (mu, sigma) per factor for user propensities
    user_propensity: list = field(default_factory=list)
    item_probabilities: list = field(default_factory=lambda: [0.1, 0.3])
    factor_sigma: float = 1.0
    ratings_per_user: int = 200
    list_length: int = 50
    bias_penalty: float = 3.0
    stack_penalty: bool = False
    segments: list = field(default_factory=list)
    sensitive_names: list = field(default_factory=list)
    agent_targets: list = field(default_factory=list)
    seed: int = 0

    def __post_init__(self):
        self.segments = [s if isinstance(s, Segment) else Segment(**s) for s in self.segments]
        if not self.segments:
            self.segments = [Segment("all", self.n_users)]
        if not self.user_propensity:
            self.user_propensity = [(0.5, 0.25)] * self.k_factors
        self.user_propensity = [(float(mu), float(sd)) for mu, sd in self.user_propensity]
        if not self.sensitive_names:
            self.sensitive_names = [f"s{f + 1}" for f in range(self.k_sensitive)]
        self.validate()

    def validate(self):
        if self.n_users < 0 or self.n_items <= 0 or self.k_factors <= 0:
            raise ValueError("n_users, n_items and k_factors must be positive")
        if not 0 <= self.k_sensitive <= self.k_factors:
            raise ValueError(f"k_sensitive={self.k_sensitive} must lie in [0, k_factors={self.k_factors}]")
        if len(self.item_probabilities) != self.k_sensitive:
            raise ValueError(
                f"need one item probability per sensitive factor ({self.k_sensitive}), got {len(self.item_probabilities)}"
            )
        if any(not 0.0 <= p <= 1.0 for p in self.item_probabilities):
            raise ValueError(f"item probabilities must lie in [0, 1]: {self.item_probabilities}")
        if len(self.user_propensity) != self.k_factors:
            raise ValueError(f"need {self.k_factors} user propensity pairs, got {len(self.user_propensity)}")
        if len(self.sensitive_names) != self.k_sensitive:
            raise ValueError("need one name per sensitive factor")
        if self.list_length > self.ratings_per_user:
            raise ValueError(
                f"list_length {self.list_length} exceeds ratings_per_user {self.ratings_per_user}"
            )
        if self.list_length <= 0:
            raise ValueError("list_length must be positive")
        if self.factor_sigma < 0:
            raise ValueError("factor_sigma must be non-negative")
        for seg in self.segments:
            for f in seg.propensities:
                if not 0 <= f < self.k_factors:
                    raise ValueError(f"segment {seg.name!r} overrides unknown factor {f}")

    @classmethod
    def from_dict(cls, data: Mapping) -> "GeneratorSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown generator spec keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["user_propensity"] = [list(p) for p in self.user_propensity]
        d["segments"] = [
            {"name": s.name, "size": s.size,
             "propensities": {str(f): list(v) for f, v in s.propensities.items()}}
            for s in self.segments
        ]
        return d

    def user_ids(self) -> list[str]:
        width = max(4, len(str(max(self.n_users - 1, 0))))
        return [f"u{i:0{width}d}" for i in range(self.n_users)]

    def item_ids(self) -> list[str]:
        width = max(4, len(str(self.n_items - 1)))
        return [f"i{j:0{width}d}" for j in range(self.n_items)]


@dataclass
class UserFactors:
    propensities: np.ndarray
    factors: np.ndarray
    compatibility: np.ndarray
    segment: list


@dataclass
class ItemFactors:
    propensities: np.ndarray
    factors: np.ndarray

    def flags(self, k_sensitive: int) -> np.ndarray:
        return self.propensities[:, :k_sensitive].astype(bool)


@dataclass
class SyntheticData:
    spec: GeneratorSpec
    items: dict[str, Item]
    users: dict[str, UserProfile]
    rec_lists: dict[str, ScoredList]
    arrivals: list[str]


def _check_segments(spec: GeneratorSpec):
    total = sum(s.size for s in spec.segments)
    if total != spec.n_users:
        raise ValueError(f"segment sizes sum to {total}, expected n_users={spec.n_users}")


def generate_users(spec: GeneratorSpec, rng: np.random.Generator) -> UserFactors:
    _check_segments(spec)
    blocks, labels = [], []
    for seg in spec.segments:
        mu = np.array([seg.propensities.get(f, spec.user_propensity[f])[0] for f in range(spec.k_factors)])
        sd = np.array([seg.propensities.get(f, spec.user_propensity[f])[1] for f in range(spec.k_factors)])
        blocks.append(rng.normal(mu, sd, size=(seg.size, spec.k_factors)))
        labels += [seg.name] * seg.size
    phi = np.vstack(blocks) if blocks else np.zeros((0, spec.k_factors))
    factors = rng.normal(phi, spec.factor_sigma)
    compat = np.clip(phi[:, :spec.k_sensitive], 0.0, 1.0)
    return UserFactors(phi, factors, compat, labels)


def generate_items(spec: GeneratorSpec, rng: np.random.Generator) -> ItemFactors:
    probs = np.full(spec.k_factors, 0.5)
    probs[:spec.k_sensitive] = spec.item_probabilities
    phi = (rng.random((spec.n_items, spec.k_factors)) < probs).astype(float)
    factors = rng.normal(phi, spec.factor_sigma)
    return ItemFactors(phi, factors)


def generate_rec_lists(users: UserFactors, items: ItemFactors, spec: GeneratorSpec,
                       rng: np.random.Generator) -> list[list[tuple[int, float]]]:
    """Per user, the top ``list_length`` of ``ratings_per_user`` sampled items as (item index, score)."""
    n_items = items.factors.shape[0]
    if spec.ratings_per_user > n_items:
        raise ValueError(
            f"cannot sample {spec.ratings_per_user} ratings from {n_items} items"
        )
    flags = items.flags(spec.k_sensitive)
    if spec.stack_penalty:
        penalty = spec.bias_penalty * flags.sum(axis=1)
    else:
        penalty = spec.bias_penalty * flags.any(axis=1)
    lists = []
    for u in users.factors:
        idx = rng.choice(n_items, spec.ratings_per_user, replace=False)
        ratings = items.factors[idx] @ u - penalty[idx]
        order = np.lexsort((idx, -ratings))[:spec.list_length]
        lists.append([(int(idx[o]), float(ratings[o])) for o in order])
    return lists


def arrival_order(spec: GeneratorSpec) -> list[str]:
    """Users segment by segment, in generation order within each segment."""
    _check_segments(spec)
    return spec.user_ids()


def generate(spec: GeneratorSpec) -> SyntheticData:
    rng = np.random.default_rng(spec.seed)
    users = generate_users(spec, rng)
    items = generate_items(spec, rng)
    lists = generate_rec_lists(users, items, spec, rng)

    item_ids = spec.item_ids()
    flags = items.flags(spec.k_sensitive)
    catalog = {}
    for j, item_id in enumerate(item_ids):
        features = {name: "1" if flags[j, f] else "0" for f, name in enumerate(spec.sensitive_names)}
        sflags = {name: bool(flags[j, f]) for f, name in enumerate(spec.sensitive_names)}
        catalog[item_id] = Item(item_id, features, sflags)

    user_ids = spec.user_ids()
    profiles = {}
    rec_lists = {}
    for i, user_id in enumerate(user_ids):
        compat = {name: float(users.compatibility[i, f]) for f, name in enumerate(spec.sensitive_names)}
        profiles[user_id] = UserProfile(user_id, {"segment": users.segment[i]}, compat)
        rec_lists[user_id] = ScoredList((item_ids[j], s) for j, s in lists[i])
    return SyntheticData(spec, catalog, profiles, rec_lists, arrival_order(spec))


def three_segment_spec(seed: int = 0, k_factors: int = 10) -> GeneratorSpec:
    """The three-segment setup: 1,500 users, 1,000 items, two sensitive factors."""
    high, low, mid = (0.9, 0.1), (0.1, 0.1), (0.5, 0.05)
    return GeneratorSpec(
        n_users=1500,
        n_items=1000,
        k_factors=k_factors,
        k_sensitive=2,
        item_probabilities=[0.1, 0.3],
        factor_sigma=1.0,
        ratings_per_user=200,
        list_length=50,
        bias_penalty=3.0,
        segments=[
            Segment("A", 500, {0: low, 1: high}),
            Segment("B", 500, {0: high, 1: low}),
            Segment("C", 500, {0: mid, 1: mid}),
        ],
        agent_targets=[0.2, 0.3],
        seed=seed,
    )


def write_dataset(data: SyntheticData, out_dir) -> dict:
    """Write the ingestion files, a manifest and a ready-to-run experiment config."""
    from . import io

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "items": out / "items.tsv",
        "reclists": out / "reclists.tsv",
        "compat": out / "compat.tsv",
        "arrivals": out / "arrivals.txt",
    }
    io.write_items(paths["items"], {i: item.features for i, item in data.items.items()})
    io.write_reclists(paths["reclists"], data.rec_lists)
    io.write_compat(paths["compat"], {u: p.compatibility for u, p in data.users.items()})
    io.write_arrivals(paths["arrivals"], data.arrivals)

    spec = data.spec
    manifest = {
        "seed": spec.seed,
        "spec": spec.to_dict(),
        "counts": {"users": len(data.users), "items": len(data.items),
                   "list_length": spec.list_length},
        "files": {k: p.name for k, p in paths.items()},
    }
    io.write_text(out / "manifest.json", json.dumps(manifest, indent=2) + "\n")

    targets = list(spec.agent_targets) or [0.2] * spec.k_sensitive
    config = {
        "data": {k: p.name for k, p in paths.items()},
        "agents": [
            {"name": name, "feature": name, "values": ["1"], "metric": "proportional_exposure",
             "target": float(targets[f]), "delta": 1.0}
            for f, name in enumerate(spec.sensitive_names)
        ],
        "allocation": {"mechanism": "weighted"},
        "choice": {"mechanism": "borda", "lambda": 0.5},
        "window": 100,
        "output_size": 10,
        "seed": spec.seed,
    }
    io.write_text(out / "config.json", json.dumps(config, indent=2) + "\n")
    paths["manifest"] = out / "manifest.json"
    paths["config"] = out / "config.json"
    return paths
