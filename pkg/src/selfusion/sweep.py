"""Grid sweep of the two fusion thresholds over a dataset of confidence maps."""
from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ccl import label_array
from .fusion import hysteresis_array
from .metrics import (ConfusionCounts, DatasetReport, LesionMatch, ScanMetrics, ScoreWeights,
                      lesion_metrics, voxel_metrics)
from .volume import BinaryMask, ConfidenceMap

__all__ = ["SWEEP_SCHEMA", "SWEEP_COLUMNS", "SweepResult", "grid_cells", "sweep", "parse_range"]

SWEEP_SCHEMA = "selfusion.sweep/1"
SWEEP_COLUMNS = ("tau1", "tau2", "dsc", "ppv", "tpr", "ltpr", "lfpr", "vc", "score")


def parse_range(text: str) -> list[int]:
    """``"a:b"`` (inclusive), ``"a,b,c"`` or a single integer."""
    text = text.strip()
    try:
        if ":" in text:
            lo, hi = text.split(":")
            values = list(range(int(lo), int(hi) + 1))
        else:
            values = [int(v) for v in text.split(",")]
    except ValueError as exc:
        raise ValueError(f"bad threshold range {text!r}") from exc
    if not values:
        raise ValueError(f"empty threshold range {text!r}")
    return values


def grid_cells(tau1s: Sequence[int], tau2s: Sequence[int], n_views: int) -> list[tuple[int, int]]:
    """Valid ``(tau1, tau2)`` cells, tau1-major ascending."""
    return [(t1, t2) for t1 in sorted(set(tau1s)) for t2 in sorted(set(tau2s))
            if 0 <= t2 <= t1 < n_views]


@dataclass
class SweepResult:
    rows: list[dict]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(("schema",) + SWEEP_COLUMNS)
        for row in self.rows:
            writer.writerow([SWEEP_SCHEMA, row["tau1"], row["tau2"],
                             *(_fmt(row[k]) for k in SWEEP_COLUMNS[2:])])
        return buf.getvalue()

    def best(self) -> dict:
        """First row (in tau1-major order) with the highest score."""
        scored = [r for r in self.rows if r["score"] is not None]
        if not scored:
            raise ValueError("no row has a defined score")
        top = max(r["score"] for r in scored)
        return next(r for r in scored if r["score"] == top)

    def argmax_cells(self) -> list[tuple[int, int]]:
        top = self.best()["score"]
        return [(r["tau1"], r["tau2"]) for r in self.rows if r["score"] == top]


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


class _Scan:
    """Per-scan state reused across every grid cell."""

    def __init__(self, conf: np.ndarray, gt: np.ndarray, spacing, connectivity: int):
        self.conf = conf
        self.gt = gt.astype(bool)
        self.gt_labels, self.gt_n = label_array(self.gt, connectivity)
        self.gt_count = int(np.count_nonzero(self.gt))
        self.voxel_mm3 = float(spacing[0]) * float(spacing[1]) * float(spacing[2])

    def evaluate(self, tau1: int, tau2: int, connectivity: int) -> ScanMetrics:
        pred = hysteresis_array(self.conf, tau1, tau2, connectivity).astype(bool)
        tp = int(np.count_nonzero(pred & self.gt))
        n_pred = int(np.count_nonzero(pred))
        counts = ConfusionCounts(tp, n_pred - tp, self.gt_count - tp,
                                 pred.size - n_pred - self.gt_count + tp)
        dsc, ppv, tpr = voxel_metrics(counts)
        pl, pn = label_array(pred, connectivity)
        detected = np.unique(self.gt_labels[pred & (self.gt_labels > 0)]).size
        true_pred = np.unique(pl[self.gt & (pl > 0)]).size
        ltpr, lfpr = lesion_metrics(LesionMatch(detected, self.gt_n, pn - true_pred, pn))
        return ScanMetrics(dsc, ppv, tpr, ltpr, lfpr, n_pred * self.voxel_mm3,
                           self.gt_count * self.voxel_mm3)


def _cell_row(scans, tau1, tau2, connectivity, weights) -> dict:
    # same aggregation as the metrics report, so rows match it exactly
    report = DatasetReport([s.evaluate(tau1, tau2, connectivity) for s in scans], weights)
    return {"tau1": tau1, "tau2": tau2, **report.summary()}


_WORKER_STATE = {}


def _init_worker(scans, connectivity, weights):
    _WORKER_STATE.update(scans=scans, connectivity=connectivity, weights=weights)


def _worker(cell):
    s = _WORKER_STATE
    return _cell_row(s["scans"], cell[0], cell[1], s["connectivity"], s["weights"])


def sweep(confs: Sequence[ConfidenceMap], gts: Sequence[BinaryMask], tau1s: Sequence[int],
          tau2s: Sequence[int], connectivity: int = 26, weights: ScoreWeights | None = None,
          jobs: int = 1) -> SweepResult:
    """Dataset-averaged metrics for every valid threshold pair.

    Rows depend only on the inputs; ``jobs > 1`` evaluates cells in worker
    processes and keeps the same row order.
    """
    if not confs:
        raise ValueError("sweep needs at least one scan")
    if len(confs) != len(gts):
        raise ValueError(f"{len(confs)} confidence maps but {len(gts)} reference masks")
    n_views = confs[0].n_views
    for i, (c, g) in enumerate(zip(confs, gts)):
        if c.n_views != n_views:
            raise ValueError(f"scan {i} has n_views={c.n_views}, expected {n_views}")
        if c.dims != g.dims:
            raise ValueError(f"scan {i}: confidence dims {c.dims} differ from reference {g.dims}")
    weights = weights or ScoreWeights()
    scans = [_Scan(np.asarray(c.array), np.asarray(g.array), g.spacing, connectivity)
             for c, g in zip(confs, gts)]
    cells = grid_cells(tau1s, tau2s, n_views)
    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(jobs, initializer=_init_worker,
                                 initargs=(scans, connectivity, weights)) as pool:
            rows = list(pool.map(_worker, cells, chunksize=max(1, len(cells) // (4 * jobs))))
    else:
        rows = [_cell_row(scans, t1, t2, connectivity, weights) for t1, t2 in cells]
    return SweepResult(rows)
