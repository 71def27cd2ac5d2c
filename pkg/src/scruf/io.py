"""Readers and writers for the tab-separated ingestion files and run outputs.

All files are UTF-8; blank lines and lines starting with ``#`` are skipped.
Scores are written with ``repr`` so they round-trip exactly.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

from .model import ScoredList, StepRecord


class DataError(ValueError):
    """A malformed or inconsistent input file; the message carries file and line."""

    def __init__(self, path, line: int | None, message: str):
        where = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{where}: {message}")
        self.path = str(path)
        self.line = line


def _rows(path, ncols: int) -> Iterator[tuple[int, list[str]]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != ncols:
                raise DataError(path, lineno, f"expected {ncols} tab-separated fields, found {len(parts)}")
            yield lineno, parts


def _float(path, lineno: int, text: str, what: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise DataError(path, lineno, f"{what} {text!r} is not a number") from None


def read_items(path) -> dict[str, dict[str, str]]:
    items: dict[str, dict[str, str]] = {}
    for lineno, (item_id, feature, value) in _rows(path, 3):
        feats = items.setdefault(item_id, {})
        if feature in feats and feats[feature] != value:
            raise DataError(path, lineno, f"item {item_id!r} assigns feature {feature!r} twice")
        feats[feature] = value
    return items


def write_items(path, items: Mapping[str, Mapping[str, str]]):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# item_id\tfeature\tvalue\n")
        for item_id, feats in items.items():
            for name in sorted(feats):
                fh.write(f"{item_id}\t{name}\t{feats[name]}\n")


def read_reclists(path) -> dict[str, ScoredList]:
    """User lists in file order; rows of a user must be contiguous and non-increasing in score."""
    grouped: dict[str, list[tuple[str, float]]] = {}
    seen: set[str] = set()
    current = None
    for lineno, (user_id, item_id, score) in _rows(path, 3):
        if user_id != current:
            if user_id in grouped:
                raise DataError(path, lineno, f"rows of user {user_id!r} are not contiguous")
            grouped[user_id] = []
            seen = set()
            current = user_id
        entries = grouped[user_id]
        s = _float(path, lineno, score, "score")
        if entries and s > entries[-1][1]:
            raise DataError(path, lineno, f"scores of user {user_id!r} are not in descending order")
        if item_id in seen:
            raise DataError(path, lineno, f"user {user_id!r} lists item {item_id!r} twice")
        seen.add(item_id)
        entries.append((item_id, s))
    return {u: ScoredList(e) for u, e in grouped.items()}


def write_reclists(path, rec_lists: Mapping[str, ScoredList]):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# user_id\titem_id\tscore\n")
        for user_id, lst in rec_lists.items():
            for item_id, score in lst:
                fh.write(f"{user_id}\t{item_id}\t{float(score)!r}\n")


def read_compat(path) -> dict[str, dict[str, float]]:
    out: dict[str, dict[str, float]] = {}
    for lineno, (user_id, agent, value) in _rows(path, 3):
        v = _float(path, lineno, value, "compatibility")
        if not 0.0 <= v <= 1.0:
            raise DataError(path, lineno, f"compatibility {v} is outside [0, 1]")
        out.setdefault(user_id, {})[agent] = v
    return out


def write_compat(path, compat: Mapping[str, Mapping[str, float]]):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# user_id\tagent\tvalue\n")
        for user_id, values in compat.items():
            for agent in values:
                fh.write(f"{user_id}\t{agent}\t{float(values[agent])!r}\n")


def read_arrivals(path) -> list[str]:
    return [parts[0] for _, parts in _rows(path, 1)]


def write_arrivals(path, arrivals: Iterable[str]):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for user_id in arrivals:
            fh.write(f"{user_id}\n")


def read_pairs(path) -> dict[str, list[str]]:
    """``user_id <tab> item_id`` rows, e.g. past interactions or held-out ratings."""
    out: dict[str, list[str]] = {}
    for _, (user_id, item_id) in _rows(path, 2):
        out.setdefault(user_id, []).append(item_id)
    return out


def record_to_json(record: StepRecord) -> dict:
    return {
        "t": record.time,
        "user": record.user_id,
        "beta": dict(record.allocation.weights),
        "output": [{"item": i, "score": s} for i, s in record.output_list],
        "m": dict(record.fairness),
        "c": dict(record.compatibility),
    }


def write_history(path, records: Sequence[StepRecord]):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(json.dumps(record_to_json(r)) + "\n")


def read_history(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def write_text(path, text: str):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
