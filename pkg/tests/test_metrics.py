import numpy as np
import pytest

from stainkit.errors import ShapeMismatchError
from stainkit.metrics import MatchReport, aggregate_reports, f1_50, match_instances, pq_50


def _match_oracle(gt, pred, threshold=0.5):
    """Set-based reference matcher: every (gt, pred) id pair explicitly."""
    gt_ids = sorted(set(gt.ravel().tolist()) - {0})
    pred_ids = sorted(set(pred.ravel().tolist()) - {0})
    gt_px = {g: set(zip(*np.nonzero(gt == g))) for g in gt_ids}
    pred_px = {p: set(zip(*np.nonzero(pred == p))) for p in pred_ids}
    pairs = []
    iou_sum = 0.0
    for g in gt_ids:
        for p in pred_ids:
            inter = len(gt_px[g] & pred_px[p])
            if inter == 0:
                continue
            union = len(gt_px[g] | pred_px[p])
            iou = inter / union
            if iou > threshold:
                pairs.append((g, p, iou))
                iou_sum += iou
    return len(pairs), len(pred_ids) - len(pairs), len(gt_ids) - len(pairs), iou_sum, pairs


def _random_labels(rng, h, w, n_blobs):
    """Random rectangular blobs, later ids overwrite earlier ones."""
    lab = np.zeros((h, w), dtype=np.int32)
    for i in range(1, n_blobs + 1):
        r0 = int(rng.integers(0, h))
        c0 = int(rng.integers(0, w))
        r1 = min(h, r0 + int(rng.integers(1, max(2, h // 2))))
        c1 = min(w, c0 + int(rng.integers(1, max(2, w // 2))))
        lab[r0:r1, c0:c1] = i
    return lab


class TestMatch:
    def test_perfect_prediction(self):
        gt = np.zeros((8, 8), dtype=np.int32)
        gt[:4, :4] = 1
        gt[5:, 5:] = 2
        rep = match_instances(gt, gt.copy())
        assert (rep.tp, rep.fp, rep.fn) == (2, 0, 0)
        assert rep.matched_iou_sum == 2.0
        assert rep.pairs == ((1, 1, 1.0), (2, 2, 1.0))

    def test_empty_both(self):
        z = np.zeros((6, 6), dtype=np.int32)
        rep = match_instances(z, z)
        assert (rep.tp, rep.fp, rep.fn) == (0, 0, 0)
        assert f1_50(rep) == 1.0
        assert pq_50(rep) == 1.0

    def test_empty_gt_with_predictions(self):
        gt = np.zeros((6, 6), dtype=np.int32)
        pred = np.zeros((6, 6), dtype=np.int32)
        pred[:3, :3] = 1
        rep = match_instances(gt, pred)
        assert (rep.tp, rep.fp, rep.fn) == (0, 1, 0)
        assert f1_50(rep) == 0.0
        assert pq_50(rep) == 0.0

    def test_missed_instance(self):
        gt = np.zeros((6, 6), dtype=np.int32)
        gt[:3, :3] = 1
        rep = match_instances(gt, np.zeros_like(gt))
        assert (rep.tp, rep.fp, rep.fn) == (0, 0, 1)

    def test_iou_exactly_half_not_matched(self):
        # gt has 8 pixels, pred overlaps 5 of them and adds 2 more:
        # intersection 5, union 10, IoU exactly 0.5 -> strict > rejects it
        gt = np.zeros((4, 8), dtype=np.int32)
        gt[0, :8] = 1
        pred = np.zeros((4, 8), dtype=np.int32)
        pred[0, :5] = 1
        pred[1, :2] = 1
        inter = ((gt > 0) & (pred > 0)).sum()
        union = ((gt > 0) | (pred > 0)).sum()
        assert inter == 5 and union == 10
        rep = match_instances(gt, pred)
        assert (rep.tp, rep.fp, rep.fn) == (0, 1, 1)

    def test_just_above_half_matched(self):
        gt = np.zeros((4, 8), dtype=np.int32)
        gt[0, :8] = 1
        pred = np.zeros((4, 8), dtype=np.int32)
        pred[0, :6] = 1  # inter 6, union 8, IoU 0.75
        rep = match_instances(gt, pred)
        assert rep.tp == 1
        assert rep.pairs[0][2] == 0.75

    def test_matches_oracle_random(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            h, w = rng.integers(4, 33, 2)
            gt = _random_labels(rng, h, w, int(rng.integers(0, 5)))
            pred = _random_labels(rng, h, w, int(rng.integers(0, 5)))
            rep = match_instances(gt, pred)
            tp, fp, fn, iou_sum, pairs = _match_oracle(gt, pred)
            assert (rep.tp, rep.fp, rep.fn) == (tp, fp, fn)
            assert abs(rep.matched_iou_sum - iou_sum) < 1e-12
            assert rep.pairs == tuple(sorted(pairs, key=lambda t: t[0]))

    def test_relabel_invariant(self):
        rng = np.random.default_rng(1)
        gt = _random_labels(rng, 24, 24, 4)
        pred = _random_labels(rng, 24, 24, 4)
        rep1 = match_instances(gt, pred)
        # multiply ids by 7: same partition, different labels
        rep2 = match_instances(gt * 7, pred * 13)
        assert (rep1.tp, rep1.fp, rep1.fn) == (rep2.tp, rep2.fp, rep2.fn)
        assert abs(rep1.matched_iou_sum - rep2.matched_iou_sum) < 1e-12

    def test_nonconsecutive_large_ids(self):
        gt = np.zeros((8, 8), dtype=np.int32)
        gt[:4, :4] = 5000
        pred = np.zeros((8, 8), dtype=np.int32)
        pred[:4, :4] = 60000
        rep = match_instances(gt, pred)
        assert rep.tp == 1 and rep.pairs == ((5000, 60000, 1.0),)

    def test_threshold_below_half_rejected(self):
        z = np.zeros((4, 4), dtype=np.int32)
        with pytest.raises(ValueError):
            match_instances(z, z, iou_threshold=0.49)

    def test_higher_threshold_stricter(self):
        gt = np.zeros((4, 8), dtype=np.int32)
        gt[0, :8] = 1
        pred = np.zeros((4, 8), dtype=np.int32)
        pred[0, :6] = 1  # IoU 0.75
        assert match_instances(gt, pred, iou_threshold=0.5).tp == 1
        assert match_instances(gt, pred, iou_threshold=0.8).tp == 0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            match_instances(np.zeros((4, 4), int), np.zeros((4, 5), int))


class TestScores:
    def test_f1_hand_case(self):
        rep = MatchReport(tp=3, fp=1, fn=2, matched_iou_sum=2.4)
        assert f1_50(rep) == 6 / 9

    def test_pq_hand_case(self):
        rep = MatchReport(tp=3, fp=1, fn=2, matched_iou_sum=2.4)
        assert pq_50(rep) == 2.4 / 4.5

    def test_pq_composes_detection_and_quality(self):
        # PQ = (mean matched IoU) * F1
        rep = MatchReport(tp=4, fp=2, fn=0, matched_iou_sum=3.2)
        sq = rep.matched_iou_sum / rep.tp
        assert abs(pq_50(rep) - sq * f1_50(rep)) < 1e-12

    def test_aggregate(self):
        r1 = MatchReport(tp=2, fp=1, fn=0, matched_iou_sum=1.7)
        r2 = MatchReport(tp=0, fp=0, fn=3, matched_iou_sum=0.0)
        agg = aggregate_reports([r1, r2])
        assert (agg.tp, agg.fp, agg.fn) == (2, 1, 3)
        assert agg.matched_iou_sum == 1.7
        assert agg.pairs == ()

    def test_aggregate_differs_from_mean_of_scores(self):
        # dataset-level F1 is not the mean of the per-image F1s
        r1 = MatchReport(tp=1, fp=0, fn=0, matched_iou_sum=1.0)
        r2 = MatchReport(tp=0, fp=5, fn=5, matched_iou_sum=0.0)
        per_image_mean = (f1_50(r1) + f1_50(r2)) / 2
        dataset = f1_50(aggregate_reports([r1, r2]))
        assert abs(per_image_mean - dataset) > 0.1
