"""Voxel-wise and lesion-wise segmentation metrics and the weighted challenge score.

Degenerate cases use fixed conventions: two empty masks give
``dsc = ppv = tpr = 1``; when only one mask is empty ``dsc = 0`` and the
undefined ratio among ppv/tpr is 0; ``ltpr = 1`` without reference lesions
and ``lfpr = 0`` without predicted lesions.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .ccl import label_components
from .volume import BinaryMask, LabelMap

__all__ = [
    "ConfusionCounts",
    "LesionMatch",
    "ScoreWeights",
    "ScanMetrics",
    "DatasetReport",
    "UndefinedCorrelationError",
    "METRIC_FIELDS",
    "confusion",
    "voxel_metrics",
    "lesion_match",
    "lesion_metrics",
    "volume_correlation",
    "challenge_score",
    "evaluate_scan",
    "evaluate_dataset",
]

METRIC_FIELDS = ("dsc", "ppv", "tpr", "ltpr", "lfpr", "vc", "score")


class UndefinedCorrelationError(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def _check_same_dims(a, b, what="masks"):
    if a.dims != b.dims:
        raise ValueError(f"{what} differ in shape: {a.dims} vs {b.dims}")


def confusion(pred: BinaryMask, gt: BinaryMask) -> ConfusionCounts:
    _check_same_dims(pred, gt)
    p = pred.array.astype(bool)
    g = gt.array.astype(bool)
    tp = int(np.count_nonzero(p & g))
    n_pred = int(np.count_nonzero(p))
    n_gt = int(np.count_nonzero(g))
    return ConfusionCounts(tp, n_pred - tp, n_gt - tp, p.size - n_pred - n_gt + tp)


def voxel_metrics(c: ConfusionCounts) -> tuple[float, float, float]:
    """``(dsc, ppv, tpr)`` from confusion counts."""
    if c.tp + c.fp + c.fn == 0:
        return 1.0, 1.0, 1.0
    dsc = 2 * c.tp / (2 * c.tp + c.fp + c.fn)
    ppv = c.tp / (c.tp + c.fp) if c.tp + c.fp else 0.0
    tpr = c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0
    return dsc, ppv, tpr


@dataclass(frozen=True)
class LesionMatch:
    gt_detected: int
    gt_total: int
    pred_false: int
    pred_total: int


def lesion_match(pred_labels: LabelMap, gt_labels: LabelMap, min_overlap: float = 0.0) -> LesionMatch:
    """Count detected reference lesions and false predicted lesions.

    A component overlaps the other mask when it shares at least one voxel with
    it and, if ``min_overlap > 0``, when that shared part is at least
    ``min_overlap`` of the component's own size.
    """
    _check_same_dims(pred_labels, gt_labels, "label maps")
    if not 0.0 <= min_overlap <= 1.0:
        raise ValueError(f"min_overlap must lie in [0, 1], got {min_overlap}")
    pl, gl = np.asarray(pred_labels.array), np.asarray(gt_labels.array)
    npred, ngt = pred_labels.n_components, gt_labels.n_components

    def overlapping(lab, n, other):
        shared = np.bincount(lab[(lab != 0) & (other != 0)], minlength=n + 1)[1:]
        size = np.bincount(lab.ravel(), minlength=n + 1)[1:]
        ok = shared >= 1
        if min_overlap > 0:
            ok &= shared >= min_overlap * size
        return int(np.count_nonzero(ok))

    detected = overlapping(gl, ngt, pl)
    true_pred = overlapping(pl, npred, gl)
    return LesionMatch(detected, ngt, npred - true_pred, npred)


def lesion_metrics(m: LesionMatch) -> tuple[float, float]:
    """``(ltpr, lfpr)``."""
    ltpr = m.gt_detected / m.gt_total if m.gt_total else 1.0
    lfpr = m.pred_false / m.pred_total if m.pred_total else 0.0
    return ltpr, lfpr


def volume_correlation(pairs: Iterable[Sequence[float]]) -> float:
    """Sample Pearson correlation of (predicted, reference) volume pairs.

    Uses a streaming co-moment update, which avoids the cancellation of the
    sum-of-products form.
    """
    n = 0
    mean_x = mean_y = 0.0
    sxx = syy = sxy = 0.0
    for x, y in pairs:
        x, y = float(x), float(y)
        n += 1
        dx = x - mean_x
        mean_x += dx / n
        dy = y - mean_y
        mean_y += dy / n
        sxx += dx * (x - mean_x)
        syy += dy * (y - mean_y)
        sxy += dx * (y - mean_y)
    if n < 2:
        raise UndefinedCorrelationError(f"correlation needs at least 2 pairs, got {n}")
    if sxx <= 0.0 or syy <= 0.0:
        raise UndefinedCorrelationError("correlation is undefined for a zero-variance column")
    r = sxy / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


@dataclass(frozen=True)
class ScoreWeights:
    """Weights of the challenge score; defaults follow the ISBI 2015 challenge."""

    w_dsc: float = 0.125
    w_ppv: float = 0.125
    w_ltpr: float = 0.25
    w_lfpr_complement: float = 0.25
    w_vc: float = 0.25

    def __post_init__(self):
        values = asdict(self)
        bad = {k: v for k, v in values.items() if not (v >= 0 and math.isfinite(v))}
        if bad:
            raise ValueError(f"score weights must be finite and non-negative: {bad}")
        total = math.fsum(values.values())
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"score weights must sum to 1, got {total!r}")

    @classmethod
    def from_mapping(cls, data: Mapping[str, float]) -> "ScoreWeights":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown score weight(s): {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in data.items()})


def challenge_score(metrics: Mapping[str, float], weights: ScoreWeights | None = None) -> float:
    """Weighted score in percent from (already averaged) dsc, ppv, ltpr, lfpr and vc."""
    w = weights or ScoreWeights()
    return 100.0 * (
        w.w_dsc * metrics["dsc"]
        + w.w_ppv * metrics["ppv"]
        + w.w_ltpr * metrics["ltpr"]
        + w.w_lfpr_complement * (1.0 - metrics["lfpr"])
        + w.w_vc * metrics["vc"]
    )


@dataclass(frozen=True)
class ScanMetrics:
    dsc: float
    ppv: float
    tpr: float
    ltpr: float
    lfpr: float
    pred_volume_mm3: float
    gt_volume_mm3: float
    scan_id: str = ""

    def as_row(self) -> dict:
        return {"scan": self.scan_id, "dsc": self.dsc, "ppv": self.ppv, "tpr": self.tpr,
                "ltpr": self.ltpr, "lfpr": self.lfpr,
                "pred_volume_mm3": self.pred_volume_mm3, "gt_volume_mm3": self.gt_volume_mm3}


def evaluate_scan(pred: BinaryMask, gt: BinaryMask, connectivity: int = 26,
                  min_overlap: float = 0.0, scan_id: str = "") -> ScanMetrics:
    c = confusion(pred, gt)
    dsc, ppv, tpr = voxel_metrics(c)
    match = lesion_match(label_components(pred, connectivity),
                         label_components(gt, connectivity), min_overlap)
    ltpr, lfpr = lesion_metrics(match)
    voxel_mm3 = gt.spacing[0] * gt.spacing[1] * gt.spacing[2]
    return ScanMetrics(dsc, ppv, tpr, ltpr, lfpr,
                       (c.tp + c.fp) * voxel_mm3, (c.tp + c.fn) * voxel_mm3, scan_id)


@dataclass
class DatasetReport:
    scans: list[ScanMetrics]
    weights: ScoreWeights = field(default_factory=ScoreWeights)
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.scans:
            raise ValueError("a dataset report needs at least one scan")

    def mean(self, name: str) -> float:
        return math.fsum(getattr(s, name) for s in self.scans) / len(self.scans)

    @property
    def vc(self) -> float | None:
        try:
            return volume_correlation((s.pred_volume_mm3, s.gt_volume_mm3) for s in self.scans)
        except UndefinedCorrelationError:
            return None

    @property
    def score(self) -> float | None:
        vc = self.vc
        if vc is None:
            return None
        summary = {k: self.mean(k) for k in ("dsc", "ppv", "ltpr", "lfpr")}
        summary["vc"] = vc
        return challenge_score(summary, self.weights)

    def summary(self) -> dict:
        out = {k: self.mean(k) for k in ("dsc", "ppv", "tpr", "ltpr", "lfpr")}
        out["vc"] = self.vc
        out["score"] = self.score
        return out

    def to_json(self) -> str:
        doc = {
            "schema": "selfusion.metrics/1",
            "scans": [s.as_row() for s in self.scans],
            "dataset": self.summary(),
            "weights": asdict(self.weights),
            "warnings": list(self.warnings),
        }
        return json.dumps(doc, indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = ["scan", *METRIC_FIELDS]
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(cols)
        for s in self.scans:
            row = s.as_row()
            writer.writerow([row["scan"], *(_fmt(row.get(k)) for k in METRIC_FIELDS)])
        summary = self.summary()
        writer.writerow(["dataset", *(_fmt(summary.get(k)) for k in METRIC_FIELDS)])
        return buf.getvalue()


def _fmt(value) -> str:
    return "" if value is None else repr(float(value))


def evaluate_dataset(pairs: Sequence[tuple[BinaryMask, BinaryMask]], connectivity: int = 26,
                     weights: ScoreWeights | None = None, min_overlap: float = 0.0,
                     scan_ids: Sequence[str] | None = None) -> DatasetReport:
    """Per-scan metrics for ``(pred, gt)`` pairs plus the dataset VC and score."""
    ids = list(scan_ids) if scan_ids is not None else [str(i) for i in range(len(pairs))]
    scans = [evaluate_scan(p, g, connectivity, min_overlap, sid) for (p, g), sid in zip(pairs, ids)]
    report = DatasetReport(scans, weights or ScoreWeights())
    if report.vc is None:
        report.warnings.append("volume correlation undefined (fewer than 2 scans or zero variance)")
    return report
