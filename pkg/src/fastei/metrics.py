"""Quality metrics, EMA smoothing, and run logging.

The metric log is an append-only table, one row per training step, written
as CSV next to each run's checkpoints. PSNR uses peak = 1.0 on normalized
images; identical images report a documented 200 dB cap instead of infinity.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

Array = np.ndarray

PSNR_CAP_DB = 200.0

# one CSV row per training step; psnr_train duplicates psnr_ema so the
# headline column and the raw/ema pair are both present by name
LOG_COLUMNS = (
    "step",
    "epoch",
    "wall_time_s",
    "loss_mc",
    "loss_eq",
    "loss_total",
    "mse_train",
    "psnr_raw",
    "psnr_ema",
    "psnr_train",
)


def mse(x: Array, ref: Array) -> float:
    x = np.asarray(x, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if x.shape != ref.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {ref.shape}")
    return float(np.mean((x - ref) ** 2))


def psnr(x: Array, ref: Array, peak: float = 1.0) -> float:
    """10 log10(peak^2 / MSE), capped at 200 dB when the MSE is zero."""
    if peak <= 0:
        raise ValueError("peak must be positive")
    err = mse(x, ref)
    if err == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(peak * peak / err))


def ema_update(avg: Optional[Array], new: Array, decay: float) -> Array:
    """decay*avg + (1-decay)*new; the first call (avg None) passes new through."""
    if not 0.0 <= decay < 1.0:
        raise ValueError("decay must lie in [0, 1)")
    new = np.asarray(new, dtype=np.float64)
    if avg is None:
        return new.copy()
    avg = np.asarray(avg, dtype=np.float64)
    if avg.shape != new.shape:
        raise ValueError(f"shape mismatch: {avg.shape} vs {new.shape}")
    return decay * avg + (1.0 - decay) * new


@dataclass
class MetricLog:
    """Append-only per-step metric table for one training run."""

    run_id: str
    method: str
    config_hash: str = ""
    rows: List[dict] = field(default_factory=list)

    def append(self, **row) -> None:
        missing = set(LOG_COLUMNS) - set(row)
        if missing:
            raise ValueError(f"metric row missing columns: {sorted(missing)}")
        if self.rows:
            last = self.rows[-1]
            if row["step"] <= last["step"]:
                raise ValueError("steps must be strictly increasing")
            if row["wall_time_s"] < last["wall_time_s"]:
                raise ValueError("wall time must be nondecreasing")
        self.rows.append({k: row[k] for k in LOG_COLUMNS})

    def column(self, name: str) -> list:
        return [r[name] for r in self.rows]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=LOG_COLUMNS)
            writer.writeheader()
            for row in self.rows:
                writer.writerow({k: _fmt(row[k]) for k in LOG_COLUMNS})


def _fmt(v):
    # repr round-trips floats exactly, keeping reruns bit-comparable
    if isinstance(v, float):
        return repr(v)
    return v


def read_log_csv(path) -> List[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        out = []
        for row in reader:
            parsed = {}
            for k, v in row.items():
                if k in ("step", "epoch"):
                    parsed[k] = int(v)
                else:
                    parsed[k] = float(v)
            out.append(parsed)
    return out


@dataclass(frozen=True)
class SummaryRow:
    method: str
    count: int
    mean: float
    std: float

    def formatted(self) -> str:
        return f"{self.mean:.2f} ± {self.std:.2f}"


def summarize(log: "MetricLog | str", test_scores: Sequence[float]) -> SummaryRow:
    """Mean and population std of per-sample scores for one method."""
    scores = np.asarray(list(test_scores), dtype=np.float64)
    if scores.size == 0:
        raise ValueError("summarize requires at least one score")
    method = log.method if isinstance(log, MetricLog) else str(log)
    return SummaryRow(
        method=method,
        count=int(scores.size),
        mean=float(scores.mean()),
        std=float(scores.std()),  # population std, ddof=0
    )


def write_summary_csv(rows: Sequence[SummaryRow], path) -> None:
    if not rows:
        raise ValueError("no summary rows to write")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "count", "mean_psnr", "std_psnr", "formatted"])
        for r in rows:
            writer.writerow([r.method, r.count, repr(r.mean), repr(r.std), r.formatted()])


def format_summary_table(rows: Sequence[SummaryRow]) -> str:
    if not rows:
        raise ValueError("no summary rows to format")
    width = max(len(r.method) for r in rows)
    lines = [f"{'method'.ljust(width)}  PSNR (dB)"]
    for r in rows:
        lines.append(f"{r.method.ljust(width)}  {r.formatted()}")
    return "\n".join(lines)


def render_curves(logs: Dict[str, List[dict]], out_dir, threshold: Optional[float] = None) -> list:
    """PSNR-vs-iteration and PSNR-vs-wall-time overlay plots; returns paths."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from pathlib import Path

    out_dir = Path(out_dir)
    paths = []
    for xkey, fname, xlabel in (
        ("step", "curves_iter.png", "iteration"),
        ("wall_time_s", "curves_time.png", "wall time (s)"),
    ):
        fig, ax = plt.subplots(figsize=(7, 4.5))
        for name, rows in logs.items():
            ax.plot([r[xkey] for r in rows], [r["psnr_train"] for r in rows], label=name, lw=1.2)
        if threshold is not None:
            ax.axhline(threshold, color="gray", ls="--", lw=0.8, label="threshold")
        ax.set_xlabel(xlabel)
        ax.set_ylabel("train PSNR (dB)")
        ax.legend()
        fig.tight_layout()
        path = out_dir / fname
        fig.savefig(path, dpi=110)
        plt.close(fig)
        paths.append(path)
    return paths
