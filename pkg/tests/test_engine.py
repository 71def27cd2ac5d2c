import json

import numpy as np
import pytest

from scruf import io
from scruf.config import ConfigError, ExperimentConfig, apply_override
from scruf.engine import (
    Simulation,
    StepError,
    dataset_from_synthetic,
    ingest,
    run,
    select_row,
    sweep,
)
from scruf.synthetic import GeneratorSpec, generate


def load(example_dir, *overrides):
    return ExperimentConfig.load(example_dir / "config.json", overrides)


def small_synthetic(seed=0):
    spec = GeneratorSpec(n_users=80, n_items=150, k_factors=4, ratings_per_user=40, list_length=20,
                         agent_targets=[0.2, 0.3], seed=seed)
    return generate(spec)


def synthetic_config(tmp_path, data, **choice):
    from scruf.synthetic import write_dataset
    paths = write_dataset(data, tmp_path)
    tree = json.loads(paths["config"].read_text())
    tree["choice"].update(choice)
    return ExperimentConfig.from_dict(tree, tmp_path)


class TestConfig:
    def test_defaults_and_overrides(self, example_dir):
        cfg = load(example_dir, "choice.lambda=0.5", "agents.0.target=0.3")
        assert cfg.lam == 0.5
        assert cfg.agents[0].target == 0.3
        assert cfg.tree["evaluation"]["relevance"] == "graded"

    def test_unknown_override(self):
        with pytest.raises(ConfigError, match="unknown config key"):
            apply_override({"a": {"b": 1}}, "a.c=2")

    def test_string_value(self):
        tree = {"choice": {"mechanism": "rescore"}}
        apply_override(tree, "choice.mechanism=borda")
        assert tree["choice"]["mechanism"] == "borda"

    @pytest.mark.parametrize("override, msg", [
        ("choice.lambda=1.5", "lambda"),
        ("allocation.mechanism=\"dictator\"", "allocation.mechanism"),
        ("agents.0.metric=\"gini\"", "invalid agent"),
        ("window=0", "positive"),
    ])
    def test_validation(self, example_dir, override, msg):
        with pytest.raises(ConfigError, match=msg):
            load(example_dir, override)

    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError, match="unknown config keys"):
            ExperimentConfig.from_dict({"colour": 1})

    def test_run_name(self, example_dir):
        cfg = load(example_dir, "output.name=null", "choice.mechanism=borda")
        assert cfg.run_name == "least_fair_borda_lam0.75"


class TestIngest:
    def test_example(self, example_dir):
        ds = ingest(load(example_dir))
        assert ds.arrivals == ["u1", "u2", "u3"]
        assert ds.catalog["v5"].is_protected("health")
        assert ds.catalog["v1"].is_protected("large")
        assert not ds.catalog["v3"].is_protected("africa")
        assert ds.users["u2"].compatibility["africa"] == 0.6

    def test_unknown_item(self, example_dir):
        with open(example_dir / "reclists.tsv", "a") as fh:
            fh.write("u4\tv9\t1.0\nu4\tv1\t0.5\nu4\tv2\t0.1\n")
        with pytest.raises(io.DataError, match="unknown item 'v9'"):
            ingest(load(example_dir))

    def test_short_list(self, example_dir):
        with pytest.raises(io.DataError, match="fewer than output size"):
            ingest(load(example_dir, "output_size=7"))

    def test_missing_compatibility(self, example_dir):
        lines = (example_dir / "compat.tsv").read_text().splitlines()
        (example_dir / "compat.tsv").write_text("\n".join(l for l in lines if "u3\tlarge" not in l) + "\n")
        with pytest.raises(io.DataError, match="u3"):
            ingest(load(example_dir))

    def test_profile_entropy_fallback(self, example_dir):
        (example_dir / "compat.tsv").write_text("u1\thealth\t0.8\n")
        (example_dir / "profiles.tsv").write_text(
            "".join(f"{u}\t{v}\n" for u in ("u1", "u2", "u3") for v in ("v1", "v2", "v3", "v4"))
        )
        cfg = ExperimentConfig.from_dict(
            {**json.loads((example_dir / "config.json").read_text()),
             "data": {"items": "items.tsv", "reclists": "reclists.tsv", "compat": "compat.tsv",
                      "profiles": "profiles.tsv"}},
            example_dir,
        )
        ds = ingest(cfg)
        assert ds.users["u1"].compatibility["health"] == 0.8
        # one of four profile items is a health loan
        assert ds.users["u2"].compatibility["health"] == pytest.approx(0.8113, abs=1e-4)
        assert ds.users["u2"].compatibility["africa"] == 1.0

    def test_unknown_arrival(self, example_dir):
        (example_dir / "arrivals.txt").write_text("u1\nu7\n")
        with pytest.raises(io.DataError, match="u7"):
            ingest(load(example_dir))

    def test_unknown_feature(self, example_dir):
        with pytest.raises(ValueError, match="Colour"):
            ingest(load(example_dir, "agents.0.feature=\"Colour\""))

    def test_binary_relevance_needs_ratings(self, example_dir):
        with pytest.raises(ValueError, match="test_ratings"):
            ingest(load(example_dir, "evaluation.relevance=\"binary\""))

    def test_external_lists(self, example_dir):
        (example_dir / "ext.tsv").write_text("".join(f"{u}\tv2\t1.0\n{u}\tv1\t0.5\n{u}\tv3\t0.1\n" for u in ("u1", "u2", "u3")))
        cfg = load(example_dir, "choice.mechanism=\"external\"", "data.external_lists=\"ext.tsv\"")
        result = run(cfg)
        assert [r.output_list.item_ids for r in result.history] == [("v2", "v1", "v3")] * 3


class TestIo:
    def test_bad_columns(self, tmp_path):
        p = tmp_path / "items.tsv"
        p.write_text("# header\nv1\tRegion\n")
        with pytest.raises(io.DataError, match=r"items.tsv:2: expected 3"):
            io.read_items(p)

    def test_non_contiguous(self, tmp_path):
        p = tmp_path / "r.tsv"
        p.write_text("u1\ta\t1\nu2\ta\t1\nu1\tb\t0.5\n")
        with pytest.raises(io.DataError, match="contiguous"):
            io.read_reclists(p)

    def test_ascending_scores(self, tmp_path):
        p = tmp_path / "r.tsv"
        p.write_text("u1\ta\t1\nu1\tb\t2\n")
        with pytest.raises(io.DataError, match="descending"):
            io.read_reclists(p)

    def test_compat_range(self, tmp_path):
        p = tmp_path / "c.tsv"
        p.write_text("u1\ta\t1.5\n")
        with pytest.raises(io.DataError, match="outside"):
            io.read_compat(p)

    def test_non_numeric(self, tmp_path):
        p = tmp_path / "r.tsv"
        p.write_text("u1\ta\thigh\n")
        with pytest.raises(io.DataError, match="not a number"):
            io.read_reclists(p)

    def test_microlending_shaped_files(self, tmp_path):
        """Ingest files with the shape of the loan data: 2,673 items, 4,005 users, 100-item lists."""
        rng = np.random.default_rng(0)
        n_items, n_users, length = 2673, 4005, 100
        regions = np.array(["Africa", "Asia", "Europe", "Americas"])
        with open(tmp_path / "items.tsv", "w") as fh:
            for j in range(n_items):
                fh.write(f"l{j}\tRegion\t{regions[j % 4]}\nl{j}\tGender\t{'Female' if j % 3 else 'Male'}\n")
        with open(tmp_path / "reclists.tsv", "w") as rl, open(tmp_path / "compat.tsv", "w") as cp:
            for u in range(n_users):
                idx = rng.choice(n_items, length, replace=False)
                scores = np.sort(rng.random(length))[::-1]
                rl.writelines(f"b{u}\tl{j}\t{s!r}\n" for j, s in zip(idx.tolist(), scores.tolist()))
                cp.write(f"b{u}\tafrica\t{float(rng.random())!r}\nb{u}\tmale\t{float(rng.random())!r}\n")
        cfg = ExperimentConfig.from_dict({
            "data": {"items": "items.tsv", "reclists": "reclists.tsv", "compat": "compat.tsv"},
            "agents": [
                {"name": "africa", "feature": "Region", "values": ["Africa"], "target": 0.2},
                {"name": "male", "feature": "Gender", "values": ["Male"], "target": 0.3},
            ],
        }, tmp_path)
        ds = ingest(cfg)
        assert len(ds.catalog) == n_items
        assert len(ds.users) == n_users and len(ds.arrivals) == n_users
        assert all(len(lst) == length for lst in ds.rec_lists.values())


class TestSimulation:
    def test_worked_example(self, example_dir):
        result = run(load(example_dir))
        h = result.history
        assert h[0].allocation["health"] == 1.0
        assert h[1].allocation["africa"] == 1.0
        assert h[2].allocation.is_empty
        assert h[2].output_list == h[2].base_list.top(3)
        assert result.metrics.ndcg == pytest.approx(0.9102, abs=1e-4)

    def test_worked_example_with_lottery(self, example_dir):
        # only health is compatible with u1 and only africa is both unfair and compatible for u2
        result = run(load(example_dir, "allocation.mechanism=\"lottery\""))
        outs = [r.output_list.item_ids for r in result.history]
        assert outs == [("v5", "v6", "v4"), ("v6", "v4", "v1"), ("v6", "v4", "v5")]

    def test_lambda_one_is_lossless(self, tmp_path):
        data = small_synthetic()
        cfg = synthetic_config(tmp_path, data, **{"lambda": 1.0})
        result = run(cfg, dataset_from_synthetic(data))
        assert result.metrics.ndcg == 1.0

    def test_deterministic(self, tmp_path):
        data = small_synthetic()
        cfg = synthetic_config(tmp_path, data).with_overrides("allocation.mechanism=\"lottery\"")
        a = run(cfg, dataset_from_synthetic(data))
        b = run(cfg, dataset_from_synthetic(data))
        assert [r.output_list for r in a.history] == [r.output_list for r in b.history]
        assert a.summary() == b.summary()

    def test_in_memory_matches_files(self, tmp_path):
        data = small_synthetic(seed=3)
        cfg = synthetic_config(tmp_path, data)
        from_files = run(cfg)
        in_memory = run(cfg, dataset_from_synthetic(data))
        assert from_files.summary() == in_memory.summary()

    def test_window_bounds_measurement(self, example_dir):
        sim = Simulation.from_config(load(example_dir, "window=1"))
        sim.step("u1")
        assert len(sim.history.window()) == 1
        sim.step("u2")
        assert [r.time for r in sim.history.window()] == [1]

    def test_step_error_names_user(self, example_dir):
        sim = Simulation.from_config(load(example_dir))
        with pytest.raises(StepError, match="u9"):
            sim.step("u9")

    def test_write(self, example_dir, tmp_path):
        result = run(load(example_dir))
        paths = result.write(tmp_path)
        assert len(io.read_history(paths["history"])) == 3
        summary = json.loads(paths["summary"].read_text())
        assert summary["history_file"] == "example.history.jsonl"
        header = paths["metrics"].read_text().splitlines()[0]
        assert header == "Allocation,Choice,lambda,nDCG,m1,m2,m3,m4,L_half,Avg"


class TestSweep:
    def test_adds_baseline_and_selects(self, tmp_path):
        data = small_synthetic()
        cfg = synthetic_config(tmp_path, data, mechanism="rescore")
        rows = sweep(cfg, [0.2, 0.6], out_dir=tmp_path / "out", dataset=dataset_from_synthetic(data))
        assert [r["lambda"] for r in rows] == [0.2, 0.6, 1.0]
        assert sum(r["selected"] for r in rows) == 1
        csv_lines = (tmp_path / "out" / f"{cfg.run_name}.sweep.csv").read_text().splitlines()
        assert len(csv_lines) == 4

    def test_parallel_matches_serial(self, tmp_path):
        data = small_synthetic()
        cfg = synthetic_config(tmp_path, data)
        ds = dataset_from_synthetic(data)
        serial = sweep(cfg, [0.3, 0.7], dataset=ds)
        parallel = sweep(cfg, [0.3, 0.7], jobs=2, dataset=ds)
        assert serial == parallel

    def test_rejects_out_of_range(self, example_dir):
        with pytest.raises(ValueError, match="outside"):
            sweep(load(example_dir), [1.5])


class TestSelectRow:
    def test_rule(self):
        rows = [
            {"lambda": 0.1, "ndcg": 0.90, "l_half": 0.9},
            {"lambda": 0.5, "ndcg": 0.96, "l_half": 0.7},
            {"lambda": 0.7, "ndcg": 0.97, "l_half": 0.6},
            {"lambda": 1.0, "ndcg": 1.00, "l_half": 0.3},
        ]
        assert select_row(rows) == 1

    def test_no_baseline(self):
        assert select_row([{"lambda": 0.5, "ndcg": 1.0, "l_half": 1.0}]) is None
