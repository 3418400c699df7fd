"""JSON-lines metric logs, timing side files and mean/IQM aggregation."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np
from scipy.stats import trim_mean

TIMING_KEYS = ("wall_clock_s",)


class MetricsLog:
    """Append-only JSON-lines writer.

    Wall-clock fields are diverted to ``timing`` (kept in memory and written
    to a separate file by the caller) so the log itself is reproducible.
    Each line is flushed on write, so the file is valid JSON-lines at any
    point.  Within one log the ``step`` field must strictly increase.
    """

    def __init__(self, path: str | Path, kind: str):
        self.path = Path(path)
        self.kind = kind
        self.timing: list[dict] = []
        self.records: list[dict] = []
        self._last_step = None
        self._fh = open(self.path, "w", encoding="utf-8")

    def append(self, record: dict) -> None:
        rec = {k: _plain(v) for k, v in record.items() if k not in TIMING_KEYS}
        rec.setdefault("kind", self.kind)
        step = rec.get("step")
        if step is None:
            raise ValueError("metric records need a step field")
        if self._last_step is not None and step <= self._last_step:
            raise ValueError(f"step {step} does not increase on {self._last_step}")
        self._last_step = step
        timing = {k: record[k] for k in TIMING_KEYS if k in record}
        if timing:
            self.timing.append({"step": step, **timing})
        self.records.append(rec)
        self._fh.write(json.dumps(rec, sort_keys=True, allow_nan=True) + "\n")
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _plain(v):
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    return v


def read_jsonl(path: str | Path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]


def iqm(values) -> float:
    """Interquartile mean: the mean of the middle 50% of the values."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return float("nan")
    return float(trim_mean(arr, 0.25))


def aggregate(series: dict, x: str, metrics: list[str]) -> list[dict]:
    """Mean and IQM across runs at each x value.

    ``series`` maps a label (usually ``seed=<n>`` or a sweep setting plus
    seed) to its records.  Runs that lack a value at some x simply do not
    contribute there; ``n`` counts the contributors.
    """
    rows = []
    for metric in metrics:
        bucket: dict = {}
        for records in series.values():
            for r in records:
                if r.get(metric) is None or r.get(x) is None:
                    continue
                val = r[metric]
                if isinstance(val, float) and math.isnan(val):
                    continue
                bucket.setdefault(r[x], []).append(float(val))
        for xv in sorted(bucket):
            vals = bucket[xv]
            rows.append({"metric": metric, x: xv, "n": len(vals), "mean": float(np.mean(vals)), "iqm": iqm(vals)})
    return rows


def write_csv(path: str | Path, rows: list[dict], columns: list[str]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({c: _cell(r.get(c)) for c in columns})


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def read_csv(path: str | Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
