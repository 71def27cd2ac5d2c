"""Command-line entry point: ``scruf generate | run | sweep | report``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import io
from .config import ConfigError, ExperimentConfig
from .engine import StepError, run, sweep
from .synthetic import GeneratorSpec, generate, write_dataset

log = logging.getLogger("scruf")


def _out_dir(args, fallback) -> Path:
    if args.out:
        return Path(args.out)
    env = os.environ.get("SCRUF_OUT")
    if env:
        return Path(env)
    return Path(fallback)


def _load_config(args) -> ExperimentConfig:
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    return ExperimentConfig.load(args.config, overrides)


def cmd_generate(args) -> int:
    data = json.loads(Path(args.config).read_text(encoding="utf-8"))
    if args.seed is not None:
        data["seed"] = args.seed
    spec = GeneratorSpec.from_dict(data)
    out = _out_dir(args, ".")
    paths = write_dataset(generate(spec), out)
    print(f"wrote {spec.n_users} users, {spec.n_items} items, {spec.list_length}-item lists to {out}")
    for key, p in paths.items():
        print(f"  {key}: {p}")
    return 0


def _print_table(header, rows):
    cells = [[f"{v:.4f}" if isinstance(v, float) else str(v) for v in r] for r in rows]
    widths = [max(len(h), *(len(c[n]) for c in cells)) for n, h in enumerate(header)]
    print("  ".join(h.rjust(w) for h, w in zip(header, widths)))
    for c in cells:
        print("  ".join(v.rjust(w) for v, w in zip(c, widths)))


def cmd_run(args) -> int:
    config = _load_config(args)
    result = run(config)
    out = _out_dir(args, config.output_dir())
    paths = result.write(out)
    header, row = result.metrics_row()
    _print_table(header, [row])
    print(f"results in {paths['summary'].parent}")
    return 0


def cmd_sweep(args) -> int:
    config = _load_config(args)
    lambdas = [float(x) for x in args.lambdas.split(",") if x.strip()]
    out = _out_dir(args, config.output_dir())
    rows = sweep(config, lambdas, out_dir=out, jobs=args.jobs)
    header = ["lambda", "nDCG"] + [f"m_{a}" for a in rows[0]["agents"]] + ["L_half", "Avg", "selected"]
    table = [
        [r["lambda"], r["ndcg"], *(r["fairness"][a] for a in r["agents"]), r["l_half"], r["avg"],
         "*" if r["selected"] else ""]
        for r in rows
    ]
    _print_table(header, table)
    print(f"sweep table in {out / (config.run_name + '.sweep.csv')}")
    return 0


def _summary_files(paths) -> list[Path]:
    found = []
    for p in map(Path, paths):
        if p.is_dir():
            found.extend(sorted(p.glob("*.summary.json")))
        elif p.is_file():
            found.append(p)
        else:
            raise FileNotFoundError(f"no such result file or directory: {p}")
    if not found:
        raise FileNotFoundError("no *.summary.json files found")
    return found


def dominated_flags(points) -> list[bool]:
    """points: (ndcg, l_half) pairs; True where another point is at least as good on both and better on one."""
    flags = []
    for n, (a1, f1) in enumerate(points):
        flags.append(any(
            a2 >= a1 and f2 >= f1 and (a2 > a1 or f2 > f1)
            for m, (a2, f2) in enumerate(points) if m != n
        ))
    return flags


def cmd_report(args) -> int:
    files = _summary_files(args.results)
    summaries = []
    for f in files:
        s = json.loads(f.read_text(encoding="utf-8"))
        s["_path"] = f
        summaries.append(s)
    agents = list(dict.fromkeys(a for s in summaries for a in s["agents"]))

    if args.baseline:
        base = [s for s in summaries if s["name"] == args.baseline]
        if not base:
            raise ValueError(f"baseline run {args.baseline!r} is not among the results")
    else:
        base = [s for s in summaries if s["allocation"] == "none"]
    baseline = base[0] if base else None

    flags = dominated_flags([(s["ndcg"], s["l_half"]) for s in summaries])
    header = ["run", "allocation", "choice", "lambda", "nDCG"]
    header += [f"m_{a}" for a in agents] + ["L_half", "Avg"]
    header += [f"regret_{a}" for a in agents] + [f"regret_ratio_{a}" for a in agents] + ["dominated"]
    rows = []
    for s, dom in zip(summaries, flags):
        row = [s["name"], s["allocation"], s["choice"], s["lambda"], s["ndcg"]]
        row += [s["fairness"].get(a, "") for a in agents] + [s["l_half"], s["avg"]]
        row += [s["final_regret"].get(a, "") for a in agents]
        for a in agents:
            if baseline is None or a not in s["final_regret"] or a not in baseline["final_regret"]:
                row.append("")
            else:
                mine = s["final_regret"][a]
                row.append(baseline["final_regret"][a] / mine if mine > 0 else float("inf"))
        row.append(int(dom))
        rows.append(row)

    regret_rows = []
    for s in summaries:
        history = io.read_history(s["_path"].parent / s["history_file"])
        totals = dict.fromkeys(s["agents"], 0.0)
        for rec in history:
            for a in s["agents"]:
                totals[a] += 1.0 - rec["m"][a]
                regret_rows.append([s["name"], rec["t"], a, totals[a]])

    out = _out_dir(args, ".")
    io.write_text(out / "tradeoff.csv", io.csv_text(header, rows))
    io.write_text(out / "regret.csv", io.csv_text(["run", "t", "agent", "regret"], regret_rows))
    _print_table(["run", "nDCG", "L_half", "dominated"],
                 [[s["name"], s["ndcg"], s["l_half"], "yes" if d else ""] for s, d in zip(summaries, flags)])
    print(f"wrote {out / 'tradeoff.csv'} and {out / 'regret.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scruf", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="JSON config (generator spec for generate)")
        p.add_argument("--out", help="output directory (default: $SCRUF_OUT or the config's output.dir)")
        p.add_argument("--seed", type=int, help="override the seed")

    g = sub.add_parser("generate", help="write a synthetic dataset")
    common(g)
    g.set_defaults(func=cmd_generate)

    for name, func in (("run", cmd_run), ("sweep", cmd_sweep)):
        p = sub.add_parser(name, help=f"{name} an experiment")
        common(p)
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="dotted config override, repeatable")
        if name == "sweep":
            p.add_argument("--lambdas", required=True, help="comma-separated recommender weights")
            p.add_argument("--jobs", type=int, default=1, help="parallel runs")
        p.set_defaults(func=func)

    r = sub.add_parser("report", help="combine run results into trade-off and regret tables")
    r.add_argument("results", nargs="+", help="*.summary.json files or directories holding them")
    r.add_argument("--out", help="output directory")
    r.add_argument("--baseline", help="run name used as the regret baseline (default: allocation 'none')")
    r.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, StepError, ValueError, KeyError, OSError) as exc:
        print(f"scruf {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
