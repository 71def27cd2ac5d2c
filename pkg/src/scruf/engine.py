"""The per-arrival re-ranking loop, data ingestion and result emission."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import io
from .agents import AgentSpec, compatibility_entropy, fairness, preference_from_protected
from .allocation import AllocationInput, allocate
from .choice import ChoiceConfig, choose
from .config import ExperimentConfig
from .evaluation import RunMetrics, evaluate
from .model import History, Item, ScoredList, StepRecord, UserProfile

log = logging.getLogger(__name__)

SELECTION_MAX_LOSS = 0.05


class StepError(RuntimeError):
    def __init__(self, t: int, user_id: str, cause: Exception):
        super().__init__(f"step {t} (user {user_id!r}): {cause}")
        self.t = t
        self.user_id = user_id


@dataclass
class Dataset:
    catalog: dict[str, Item]
    users: dict[str, UserProfile]
    rec_lists: dict[str, ScoredList]
    arrivals: list[str]
    relevant: dict[str, set] | None = None
    external: dict[str, ScoredList] | None = None


def build_catalog(features: Mapping[str, Mapping[str, str]], agents: Sequence[AgentSpec]) -> dict[str, Item]:
    schema = {f for feats in features.values() for f in feats}
    for agent in agents:
        if agent.feature not in schema:
            raise ValueError(f"agent {agent.name!r} refers to feature {agent.feature!r}, absent from the catalog")
    return {
        item_id: Item(item_id, dict(feats), {a.name: a.matches(feats) for a in agents})
        for item_id, feats in features.items()
    }


def ingest(config: ExperimentConfig) -> Dataset:
    agents = config.agents
    items_path = config.data_path("items")
    lists_path = config.data_path("reclists")
    if items_path is None or lists_path is None:
        raise ValueError("config must name data.items and data.reclists")
    catalog = build_catalog(io.read_items(items_path), agents)

    rec_lists = io.read_reclists(lists_path)
    _check_known_items(lists_path, rec_lists, catalog)
    k = config.output_size
    for user_id, lst in rec_lists.items():
        if len(lst) < k:
            raise io.DataError(lists_path, None, f"user {user_id!r} has {len(lst)} items, fewer than output size {k}")

    compat_path = config.data_path("compat")
    compat = io.read_compat(compat_path) if compat_path else {}
    profiles_path = config.data_path("profiles")
    profiles = io.read_pairs(profiles_path) if profiles_path else {}

    users = {}
    for user_id in rec_lists:
        given = compat.get(user_id, {})
        values = {}
        for agent in agents:
            if agent.name in given:
                values[agent.name] = given[agent.name]
            elif user_id in profiles:
                history = [catalog[i] for i in profiles[user_id] if i in catalog]
                try:
                    values[agent.name] = compatibility_entropy(history, agent)
                except ValueError as exc:
                    raise io.DataError(profiles_path, None, f"user {user_id!r}: {exc}") from None
            else:
                where = compat_path or "compatibility data"
                raise io.DataError(where, None, f"no compatibility for user {user_id!r} with agent {agent.name!r}")
        users[user_id] = UserProfile(user_id, {}, values)

    arrivals_path = config.data_path("arrivals")
    if arrivals_path:
        arrivals = io.read_arrivals(arrivals_path)
        for n, user_id in enumerate(arrivals):
            if user_id not in rec_lists:
                raise io.DataError(arrivals_path, None, f"arrival {n} names user {user_id!r} without a rec-list")
    else:
        arrivals = list(rec_lists)

    relevant = None
    if config.binary_relevance:
        test_path = config.data_path("test_ratings")
        if test_path is None:
            raise ValueError("binary relevance needs data.test_ratings")
        relevant = {u: set(v) for u, v in io.read_pairs(test_path).items()}

    external = None
    if config.choice_mechanism == "external":
        ext_path = config.data_path("external_lists")
        if ext_path is None:
            raise ValueError("choice.mechanism 'external' needs data.external_lists")
        external = io.read_reclists(ext_path)
        _check_known_items(ext_path, external, catalog)
        missing = [u for u in dict.fromkeys(arrivals) if u not in external]
        if missing:
            raise io.DataError(ext_path, None, f"no comparator list for users {missing[:5]}")
    return Dataset(catalog, users, rec_lists, arrivals, relevant, external)


def _check_known_items(path, lists: Mapping[str, ScoredList], catalog: Mapping[str, Item]):
    for user_id, lst in lists.items():
        for item_id, _ in lst:
            if item_id not in catalog:
                raise io.DataError(path, None, f"user {user_id!r} lists unknown item {item_id!r}")


class Simulation:
    """State of one run: agents, history and the allocation random stream."""

    def __init__(self, dataset: Dataset, agents: Sequence[AgentSpec], allocation: str = "weighted",
                 choice: str = "rescore", lam: float = 1.0, window: int = 100, output_size: int = 10,
                 seed: int = 0):
        self.dataset = dataset
        self.agents = list(agents)
        self.allocation = allocation
        self.choice = choice
        self.choice_cfg = ChoiceConfig(lam, output_size, {a.name: a.delta for a in self.agents})
        self.history = History(window)
        self.rng = np.random.default_rng(seed)
        self.protected = {
            a.name: frozenset(i for i, item in dataset.catalog.items() if item.is_protected(a.name))
            for a in self.agents
        }

    @classmethod
    def from_config(cls, config: ExperimentConfig, dataset: Dataset | None = None) -> "Simulation":
        return cls(
            dataset if dataset is not None else ingest(config),
            config.agents,
            allocation=config.allocation_mechanism,
            choice=config.choice_mechanism,
            lam=config.lam,
            window=config.window,
            output_size=config.output_size,
            seed=config.seed,
        )

    @property
    def output_size(self) -> int:
        return self.choice_cfg.output_size

    def measure(self) -> dict[str, float]:
        win = self.history.window()
        return {a.name: fairness(a, win, self.protected[a.name]) for a in self.agents}

    def step(self, user_id: str) -> StepRecord:
        t = len(self.history)
        try:
            base = self.dataset.rec_lists[user_id]
            user = self.dataset.users[user_id]
            m = self.measure()
            c = {a.name: user.compatibility[a.name] for a in self.agents}
            beta = allocate(self.allocation, AllocationInput(m, c), self.rng)
            agent_lists = {a.name: preference_from_protected(base, self.protected[a.name]) for a in self.agents}
            k = self.output_size
            if self.choice == "external":
                output = self.dataset.external[user_id].top(k)
            elif beta.is_empty:
                output = base.top(k)
            else:
                output = choose(self.choice, base, beta, agent_lists, self.choice_cfg)
            record = StepRecord(t, user_id, base, agent_lists, output, beta, m, c)
            self.history.append(record)
        except Exception as exc:
            raise StepError(t, user_id, exc) from exc
        return record

    def run(self, arrivals: Sequence[str] | None = None) -> History:
        for user_id in self.dataset.arrivals if arrivals is None else arrivals:
            self.step(user_id)
        return self.history

    def metrics(self) -> RunMetrics:
        return evaluate(self.history.records, self.agents, self.protected, self.output_size,
                        self.dataset.relevant)


@dataclass
class RunResult:
    config: ExperimentConfig
    history: History
    metrics: RunMetrics
    agents: list[AgentSpec] = field(default_factory=list)

    @property
    def name(self) -> str:
        return self.config.run_name

    def summary(self) -> dict:
        m = self.metrics
        return {
            "name": self.name,
            "allocation": self.config.allocation_mechanism,
            "choice": self.config.choice_mechanism,
            "lambda": self.config.lam,
            "seed": self.config.seed,
            "window": self.config.window,
            "output_size": self.config.output_size,
            "steps": len(self.history),
            "agents": [a.name for a in self.agents],
            "targets": {a.name: a.target for a in self.agents},
            "ndcg": m.ndcg,
            "fairness": dict(m.fairness),
            "l_half": m.l_half,
            "avg": m.avg_fairness,
            "final_regret": m.final_regret(),
        }

    def metrics_row(self) -> tuple[list[str], list]:
        s = self.summary()
        header = ["Allocation", "Choice", "lambda", "nDCG"]
        header += [f"m{n + 1}" for n in range(len(self.agents))]
        header += ["L_half", "Avg"]
        row = [s["allocation"], s["choice"], s["lambda"], s["ndcg"]]
        row += [s["fairness"][a.name] for a in self.agents]
        row += [s["l_half"], s["avg"]]
        return header, row

    def write(self, out_dir) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "history": out / f"{self.name}.history.jsonl",
            "metrics": out / f"{self.name}.metrics.csv",
            "summary": out / f"{self.name}.summary.json",
        }
        io.write_history(paths["history"], self.history.records)
        header, row = self.metrics_row()
        io.write_text(paths["metrics"], io.csv_text(header, [row]))
        summary = self.summary()
        summary["history_file"] = paths["history"].name
        io.write_text(paths["summary"], json.dumps(summary, indent=2) + "\n")
        return paths


def run(config: ExperimentConfig, dataset: Dataset | None = None) -> RunResult:
    sim = Simulation.from_config(config, dataset)
    log.info("running %s over %d arrivals", config.run_name, len(sim.dataset.arrivals))
    sim.run()
    return RunResult(config, sim.history, sim.metrics(), sim.agents)


def _run_summary(args) -> tuple[dict, list, list]:
    config, dataset, out_dir = args
    result = run(config, dataset)
    if out_dir is not None:
        result.write(out_dir)
    header, row = result.metrics_row()
    return result.summary(), header, row


def select_row(rows: Sequence[dict], max_loss: float = SELECTION_MAX_LOSS) -> int | None:
    """Index of the greatest L1/2 row whose nDCG loss against the lambda=1 row is at most ``max_loss``."""
    baseline = [r for r in rows if r["lambda"] == 1.0]
    if not baseline:
        return None
    base_ndcg = baseline[0]["ndcg"]
    best = None
    for n, r in enumerate(rows):
        loss = (base_ndcg - r["ndcg"]) / base_ndcg if base_ndcg > 0 else 0.0
        if loss > max_loss + 1e-12:
            continue
        if best is None or (r["l_half"], r["ndcg"]) > (rows[best]["l_half"], rows[best]["ndcg"]):
            best = n
    return best


def sweep(config: ExperimentConfig, lambdas: Sequence[float], out_dir=None, jobs: int = 1,
          dataset: Dataset | None = None) -> list[dict]:
    """One independent run per lambda; the lambda=1 baseline is added if missing.

    Returns one summary per run with ``selected`` set on the row chosen by
    :func:`select_row`.
    """
    grid = [float(x) for x in lambdas]
    for lam in grid:
        if not 0.0 <= lam <= 1.0:
            raise ValueError(f"lambda {lam} is outside [0, 1]")
    if 1.0 not in grid:
        grid.append(1.0)
    if dataset is None:
        dataset = ingest(config)
    name = config.run_name
    tasks = [
        (config.with_overrides(f"choice.lambda={lam!r}", "output.name=" + json.dumps(f"{name}_lam{lam:g}")), dataset, out_dir)
        for lam in grid
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_summary, tasks))
    else:
        results = [_run_summary(t) for t in tasks]
    rows = [s for s, _, _ in results]
    chosen = select_row(rows)
    for n, r in enumerate(rows):
        r["selected"] = n == chosen
    if out_dir is not None:
        header = results[0][1] + ["selected"]
        body = [row + [int(rows[n]["selected"])] for n, (_, _, row) in enumerate(results)]
        io.write_text(Path(out_dir) / f"{name}.sweep.csv", io.csv_text(header, body))
    return rows


def synthetic_agents(spec, metric: str = "proportional_exposure") -> list[AgentSpec]:
    targets = list(spec.agent_targets) or [0.2] * spec.k_sensitive
    return [
        AgentSpec(name, name, frozenset({"1"}), metric, float(targets[f]))
        for f, name in enumerate(spec.sensitive_names)
    ]


def dataset_from_synthetic(data, agents: Sequence[AgentSpec] | None = None) -> Dataset:
    """In-memory equivalent of writing the generator output and ingesting it."""
    agents = synthetic_agents(data.spec) if agents is None else agents
    catalog = build_catalog({i: item.features for i, item in data.items.items()}, agents)
    return Dataset(catalog, dict(data.users), dict(data.rec_lists), list(data.arrivals))
