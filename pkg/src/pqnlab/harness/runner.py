"""Run a preset over seeds and write every artifact of the run directory."""
from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import ExperimentConfig
from .metrics import aggregate, read_jsonl, write_csv
from .plots import PlotSpec, emit_plot
from .presets import Check, check_results, run_seed

PLOTS = {
    "train": [("step", "eval_return"), ("step", "episodic_return_mean"), ("step", "trailing_return_mean")],
    "sweep": [("step", "param_norm"), ("step", "td_error_norm")],
    "point": [("step", "max_real")],
    "probe": [("step", "statistic"), ("step", "excess")],
}
LOG_AXES = {"param_norm", "td_error_norm", "statistic", "excess"}


def thread_cap() -> int:
    """Worker count from ``PQNLAB_THREADS`` (1 when unset)."""
    raw = os.environ.get("PQNLAB_THREADS", "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"PQNLAB_THREADS={raw!r} is not an integer") from None
    if n < 1:
        raise ValueError("PQNLAB_THREADS must be at least 1")
    return n


def _limited_run(cfg, seed, out):
    # worker processes each get one BLAS thread so the total stays within the cap
    from threadpoolctl import threadpool_limits
    with threadpool_limits(1):
        return run_seed(cfg, seed, out)


def run_experiment(cfg: ExperimentConfig, out: str | Path, workers: int | None = None) -> dict:
    """Run every seed, then aggregate, plot and judge.  Returns the verdict dictionary."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.echo(), encoding="utf-8")
    workers = thread_cap() if workers is None else workers
    seeds = cfg.seeds
    if workers > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(seeds))) as pool:
            results = list(pool.map(_limited_run, [cfg] * len(seeds), seeds, [out] * len(seeds)))
    else:
        from threadpoolctl import threadpool_limits
        with threadpool_limits(workers):
            results = [run_seed(cfg, s, out) for s in seeds]
    results.sort(key=lambda r: seeds.index(r["seed"]))

    # aggregate over seeds, per run label
    labels = list(results[0]["files"])
    agg_rows, curve_rows = [], []
    for label in labels:
        series = {r["seed"]: read_jsonl(out / r["files"][label]) for r in results}
        kind = next(iter(series.values()))[0].get("kind", "train") if any(series.values()) else "train"
        metrics = [m for _, m in PLOTS.get(kind, [])]
        for row in aggregate(series, "step", metrics):
            agg_rows.append({"run": label, **row})
        for seed, recs in series.items():
            for rec in recs:
                for m in metrics:
                    if rec.get(m) is not None:
                        curve_rows.append({"run": label, "seed": seed, "metric": m, "step": rec["step"],
                                           "value": rec[m]})
    write_csv(out / "aggregate.csv", agg_rows, ["run", "metric", "step", "n", "mean", "iqm"])
    write_csv(out / "curves.csv", curve_rows, ["run", "seed", "metric", "step", "value"])
    _plots(out, curve_rows)

    checks = check_results(cfg, results)
    verdict = {"preset": cfg.preset, "seeds": seeds, "passed": all(c.passed for c in checks),
               "checks": [c.as_dict() for c in checks]}
    (out / "verdict.json").write_text(json.dumps(verdict, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (out / "verdict.txt").write_text("".join(_line(c) for c in checks), encoding="utf-8")
    (out / "summary.json").write_text(json.dumps({str(r["seed"]): r["summary"] for r in results}, indent=2,
                                                 sort_keys=True, default=_json_default) + "\n", encoding="utf-8")
    (out / "timing.json").write_text(json.dumps({str(r["seed"]): r["timing"] for r in results}, indent=2,
                                                sort_keys=True) + "\n", encoding="utf-8")
    return verdict


def _json_default(v):
    if hasattr(v, "tolist"):
        return v.tolist()
    raise TypeError(type(v).__name__)


def _line(c: Check) -> str:
    return f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.detail}\n"


def _plots(out: Path, curve_rows: list[dict]) -> None:
    by_plot: dict = {}
    for r in curve_rows:
        by_plot.setdefault((r["run"], r["metric"]), []).append(r)
    for (run, metric), rows in sorted(by_plot.items()):
        path = out / f"plot_{run}_{metric}.csv"
        write_csv(path, rows, ["seed", "step", "value"])
        logy = metric in LOG_AXES and all(float(r["value"]) > 0 for r in rows)
        emit_plot(path, PlotSpec("step", "value", group="seed", title=f"{run}: {metric}", logy=logy,
                                 logx=run == "probe"), out / f"plot_{run}_{metric}.svg")
        path.unlink()
