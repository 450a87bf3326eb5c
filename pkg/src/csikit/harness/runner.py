"""Campaign execution: trial fan-out, deterministic reduction and CSV/JSON output."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import platform
import subprocess
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from .. import __version__
from ..theory import calibrate_thresholds
from .ber import ber_interval, trial_ber
from .config import ExperimentConfig
from .experiments import (
    HISTOGRAM_STATS,
    points,
    trial_adaptive,
    trial_algo_compare,
    trial_detection,
    trial_mse_vs_g,
    trial_mse_vs_snr,
    trial_tracking,
)
from .seeds import derive_seed, seed_stream

TRIALS = {
    "algo-compare": trial_algo_compare,
    "detection": trial_detection,
    "mse-vs-g": trial_mse_vs_g,
    "overhead-dist": trial_adaptive,
    "sparsity-dist": trial_adaptive,
    "tracking": trial_tracking,
    "mse-vs-snr": trial_mse_vs_snr,
    "ber-zf": trial_ber,
}

CSV_COLUMNS = ("experiment", "S_a", "snr_db", "G", "P", "variant", "statistic", "n", "mean", "std", "ci_low", "ci_high")
POINT_COLUMNS = ("S_a", "snr_db", "G", "P")
Z95 = 1.959963984540054


@dataclass(frozen=True)
class TrialRecord:
    index: int
    seed: int
    point: dict
    values: dict
    flags: tuple = ()

    def to_json(self) -> dict:
        return {
            "index": self.index,
            "seed": self.seed,
            "point": self.point,
            "values": {k: (v if math.isfinite(v) else None) for k, v in self.values.items()},
            "flags": list(self.flags),
        }


@dataclass
class CampaignResult:
    config: ExperimentConfig
    rows: list
    records: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def row(self, variant: str, statistic: str, **point) -> dict:
        """The unique aggregated row matching ``variant``, ``statistic`` and point fields."""
        hits = [
            r
            for r in self.rows
            if r["variant"] == variant
            and r["statistic"] == statistic
            and all(r[k] == v for k, v in point.items())
        ]
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} rows match {variant}/{statistic} at {point}")
        return hits[0]


def run_trial(cfg: ExperimentConfig, point: dict, seed: int) -> tuple:
    """One trial from its derived seed; re-running with the same seed is bit-exact."""
    values, flags = TRIALS[cfg.experiment](cfg, point, np.random.default_rng(seed))
    return {k: float(v) for k, v in values.items()}, tuple(flags)


def _execute(task) -> TrialRecord:
    cfg, point, index = task
    seed = derive_seed(cfg.seed, index)
    values, flags = run_trial(cfg, point, seed)
    return TrialRecord(index=index, seed=seed, point=point, values=values, flags=flags)


def _pool_map(fn, tasks, workers):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    chunk = max(1, len(tasks) // (workers * 8))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks, chunksize=chunk))


# aggregation


def _base(cfg, point, variant, statistic):
    row = {"experiment": cfg.experiment, "variant": variant, "statistic": statistic}
    for k in POINT_COLUMNS:
        row[k] = point.get(k)
    return row


def _numeric_row(row, values):
    v = np.asarray([x for x in values if math.isfinite(x)], dtype=float)
    n = v.size
    mean = float(np.mean(v)) if n else math.nan
    std = float(np.std(v)) if n else math.nan
    half = Z95 * float(np.std(v, ddof=1)) / math.sqrt(n) if n > 1 else math.nan
    row.update(n=n, mean=mean, std=std, ci_low=mean - half, ci_high=mean + half)
    return row


def aggregate(cfg: ExperimentConfig, pts: list, records: list) -> list:
    """Reduce trial records to CSV rows; independent of the order records arrive in."""
    by_point = [[] for _ in pts]
    trials = cfg.trial_count
    for rec in sorted(records, key=lambda r: r.index):
        by_point[rec.index // trials].append(rec)
    rows = []
    for point, recs in zip(pts, by_point):
        keys = sorted({k for r in recs for k in r.values})
        for key in keys:
            variant, stat = key.split("|", 1)
            vals = [r.values.get(key, math.nan) for r in recs]
            rows.append(_numeric_row(_base(cfg, point, variant, stat), vals))
            if stat in HISTOGRAM_STATS:
                finite = [int(v) for v in vals if math.isfinite(v)]
                for value in sorted(set(finite)):
                    freq = finite.count(value) / len(finite)
                    row = _base(cfg, point, variant, f"{stat}={value}")
                    row.update(n=len(finite), mean=freq, std=math.sqrt(freq * (1 - freq)), ci_low=math.nan, ci_high=math.nan)
                    rows.append(row)
            if stat == "errors" and f"{variant}|bits" in keys:
                errors = int(sum(r.values.get(key, 0.0) for r in recs))
                bits = int(sum(r.values.get(f"{variant}|bits", 0.0) for r in recs))
                ber, lo, hi = ber_interval(errors, bits)
                row = _base(cfg, point, variant, "ber")
                row.update(n=bits, mean=ber, std=math.sqrt(ber * (1 - ber)) if bits else math.nan, ci_low=lo, ci_high=hi)
                rows.append(row)
    return rows


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.17g}"
    return str(v)


def rows_to_csv(rows: list) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in rows:
        writer.writerow([_fmt(r.get(c)) for c in CSV_COLUMNS])
    return buf.getvalue()


# calibration campaign


def _calibrate_cell(task):
    cfg, k, snr = task
    cal = calibrate_thresholds([snr], cfg.M, cfg.P[0], cfg.S_a, cfg.G, cfg.trial_count, seed_stream(cfg.seed, k))
    medians = {
        "rho2_h0_median": float(np.median(cal.rho2_h0[snr])),
        "rho2_h1_median": float(np.median(cal.rho2_h1[snr])),
        "rho1_h0_median": float(np.median(cal.rho1_h0[snr])),
        "rho1_h1_median": float(np.median(cal.rho1_h1[snr])),
    }
    return snr, cal.p_th[0], cal.epsilon[0], medians


def _run_calibration(cfg, workers):
    tasks = [(cfg, k, snr) for k, snr in enumerate(cfg.snr_db)]
    rows = []
    for snr, p_th, eps, medians in _pool_map(_calibrate_cell, tasks, workers):
        point = {"snr_db": snr, "P": cfg.P[0]}
        for stat, value in [("p_th", p_th), ("epsilon", eps)] + sorted(medians.items()):
            row = _base(cfg, point, "calibration", stat)
            row.update(n=cfg.trial_count, mean=value, std=math.nan, ci_low=math.nan, ci_high=math.nan)
            rows.append(row)
    return rows


# provenance


def _git_commit():
    try:
        here = Path(__file__).resolve().parent
        out = subprocess.run(
            ["git", "rev-parse", "HEAD"], cwd=here, capture_output=True, text=True, timeout=5, check=True
        )
        return out.stdout.strip() or None
    except (OSError, subprocess.SubprocessError):
        return None


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def _summary(cfg, rows, records, started, finished, workers):
    config = cfg.to_dict()
    canonical = json.dumps(config, sort_keys=True)
    flag_counts = {}
    for rec in records:
        for f in rec.flags:
            flag_counts[f] = flag_counts.get(f, 0) + 1
    return {
        "experiment": cfg.experiment,
        "config": config,
        "provenance": {
            "package_version": __version__,
            "git_commit": _git_commit(),
            "config_sha256": hashlib.sha256(canonical.encode()).hexdigest(),
            "master_seed": cfg.seed,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "started_utc": started,
            "finished_utc": finished,
            "workers": workers,
        },
        "trials_per_point": cfg.trial_count,
        "records": len(records),
        "flag_counts": dict(sorted(flag_counts.items())),
        "results": [{k: _jsonable(r[k]) for k in CSV_COLUMNS} for r in rows],
    }


def run_experiment(cfg: ExperimentConfig, workers: int | None = None, out_dir=None, write: bool = True) -> CampaignResult:
    """Run a campaign and, when ``write`` is set, emit ``<experiment>.csv`` and ``summary.json``."""
    workers = cfg.workers if workers is None else workers
    started = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    if cfg.experiment == "calibrate":
        records = []
        rows = _run_calibration(cfg, workers)
    else:
        pts = points(cfg)
        trials = cfg.trial_count
        tasks = [(cfg, pt, k * trials + t) for k, pt in enumerate(pts) for t in range(trials)]
        records = _pool_map(_execute, tasks, workers)
        rows = aggregate(cfg, pts, records)
    finished = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    result = CampaignResult(config=cfg, rows=rows, records=records)
    result.summary = _summary(cfg, rows, records, started, finished, workers)
    if write:
        out = Path(out_dir if out_dir is not None else cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{cfg.experiment}.csv").write_text(rows_to_csv(rows))
        (out / "summary.json").write_text(json.dumps(result.summary, indent=2, sort_keys=False) + "\n")
        if records:
            with open(out / f"{cfg.experiment}_trials.jsonl", "w") as fh:
                for rec in records:
                    fh.write(json.dumps(rec.to_json(), sort_keys=True) + "\n")
    return result
