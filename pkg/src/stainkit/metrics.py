"""Instance-segmentation metrics: detection quality at IoU 0.5.

Instances are matched when their IoU strictly exceeds the threshold; at
any threshold of at least 0.5 such matches are automatically one-to-one,
so no assignment problem needs solving.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatchError

__all__ = ["MatchReport", "match_instances", "aggregate_reports", "f1_50", "pq_50"]


@dataclass(frozen=True)
class MatchReport:
    """Matching outcome between one ground-truth and one predicted map."""

    tp: int
    fp: int
    fn: int
    matched_iou_sum: float
    pairs: tuple = field(default_factory=tuple)  # (gt_id, pred_id, iou), sorted by gt_id


def match_instances(
    gt: np.ndarray, pred: np.ndarray, iou_threshold: float = 0.5
) -> MatchReport:
    """Match predicted instances to ground-truth instances by IoU.

    Args:
        gt, pred: integer label maps of identical shape; 0 is background,
            positive values are instance ids.
        iou_threshold: matching threshold; must be at least 0.5 because
            uniqueness of matches is only guaranteed from there up.
            A pair matches when IoU strictly exceeds the threshold.

    Raises:
        ValueError: threshold below 0.5.
        ShapeMismatchError: label maps differ in shape.
    """
    if iou_threshold < 0.5:
        raise ValueError("iou_threshold below 0.5 would allow ambiguous matches")
    gt = np.asarray(gt)
    pred = np.asarray(pred)
    if gt.shape != pred.shape:
        raise ShapeMismatchError(f"label maps differ: {gt.shape} vs {pred.shape}")

    gt_flat = gt.ravel().astype(np.int64)
    pred_flat = pred.ravel().astype(np.int64)

    gt_ids, gt_areas = np.unique(gt_flat[gt_flat > 0], return_counts=True)
    pred_ids, pred_areas = np.unique(pred_flat[pred_flat > 0], return_counts=True)
    gt_area = dict(zip(gt_ids.tolist(), gt_areas.tolist()))
    pred_area = dict(zip(pred_ids.tolist(), pred_areas.tolist()))

    # intersection counts over pixels covered by both maps
    both = (gt_flat > 0) & (pred_flat > 0)
    key = gt_flat[both] * (pred_flat.max() + 1) + pred_flat[both]
    keys, counts = np.unique(key, return_counts=True)

    pairs = []
    matched_iou_sum = 0.0
    base = int(pred_flat.max() + 1)
    for k, inter in zip(keys.tolist(), counts.tolist()):
        g, p = divmod(int(k), base)
        union = gt_area[g] + pred_area[p] - inter
        iou = inter / union
        if iou > iou_threshold:
            pairs.append((g, p, iou))
            matched_iou_sum += iou
    pairs.sort(key=lambda t: t[0])

    tp = len(pairs)
    return MatchReport(
        tp=tp,
        fp=len(pred_ids) - tp,
        fn=len(gt_ids) - tp,
        matched_iou_sum=matched_iou_sum,
        pairs=tuple(pairs),
    )


def aggregate_reports(reports) -> MatchReport:
    """Sum matching counts across images (dataset-level aggregation)."""
    tp = sum(r.tp for r in reports)
    fp = sum(r.fp for r in reports)
    fn = sum(r.fn for r in reports)
    iou_sum = sum(r.matched_iou_sum for r in reports)
    return MatchReport(tp=tp, fp=fp, fn=fn, matched_iou_sum=iou_sum, pairs=())


def f1_50(report: MatchReport) -> float:
    """Detection F1 at IoU 0.5: 2tp / (2tp + fp + fn).

    Comparing an empty ground truth against an empty prediction scores 1.0.
    """
    denom = 2 * report.tp + report.fp + report.fn
    if denom == 0:
        return 1.0
    return 2.0 * report.tp / denom


def pq_50(report: MatchReport) -> float:
    """Panoptic quality at IoU 0.5: matched IoU sum / (tp + (fp + fn) / 2).

    Comparing an empty ground truth against an empty prediction scores 1.0.
    """
    denom = report.tp + 0.5 * (report.fp + report.fn)
    if denom == 0:
        return 1.0
    return report.matched_iou_sum / denom
