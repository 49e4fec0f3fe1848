"""Detection evaluation: ROC curve with tie grouping, AUROC (Mann-Whitney
convention, ties count half), TNR at 95% TPR, an O(n^2) brute-force AUROC
used as a testing oracle, and FPR-targeted threshold calibration.

OOD is the positive class throughout; a point counts as flagged when its
score is strictly greater than the threshold.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import SizeError, ValidationError


@dataclass
class RocReport:
    """ROC curve in decreasing-threshold order, from (0, 0) to (1, 1).

    ``thresholds`` carries +inf/-inf sentinels at the ends; equal scores are
    grouped into a single step. ``tnr_at_tpr95`` uses the step convention:
    1 - FPR at the first curve point whose TPR reaches 0.95 (no
    interpolation).
    """

    thresholds: np.ndarray
    tpr: np.ndarray
    fpr: np.ndarray
    auroc: float
    tnr_at_tpr95: float


def _as_scores(arr, name):
    arr = np.asarray(arr, dtype=np.float64).ravel()
    if arr.size == 0:
        raise ValidationError(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite scores")
    return arr


def roc(scores_id, scores_ood):
    """ROC report for ID (negative) vs OOD (positive) score samples.

    The AUROC equals the Mann-Whitney statistic (wins + 0.5 * ties) /
    (n_id * n_ood); both it and the curve are computed from integer counts,
    so ties cost nothing in precision.
    """
    sid = _as_scores(scores_id, "scores_id")
    sood = _as_scores(scores_ood, "scores_ood")
    n_id, n_ood = sid.size, sood.size
    sid_sorted = np.sort(sid)
    sood_sorted = np.sort(sood)
    uniq = np.unique(np.concatenate([sid, sood]))[::-1]  # descending

    # counts strictly above each candidate threshold
    id_above = n_id - np.searchsorted(sid_sorted, uniq, side="right")
    ood_above = n_ood - np.searchsorted(sood_sorted, uniq, side="right")

    a = np.concatenate([[0], id_above, [n_id]])   # false positives
    b = np.concatenate([[0], ood_above, [n_ood]])  # true positives
    thresholds = np.concatenate([[np.inf], uniq, [-np.inf]])

    # trapezoid area in integer units: sum of da * (b_lo + b_hi)
    seg = np.diff(a) * (b[:-1] + b[1:])
    auroc = float(seg.sum() / (2.0 * n_id * n_ood))

    tpr = b / n_ood
    fpr = a / n_id
    hit = np.flatnonzero(tpr >= 0.95)
    tnr95 = float(1.0 - fpr[hit[0]]) if hit.size else 0.0
    return RocReport(thresholds=thresholds, tpr=tpr, fpr=fpr, auroc=auroc,
                     tnr_at_tpr95=tnr95)


def auroc_bruteforce(scores_id, scores_ood):
    """O(n_id * n_ood) pairwise AUROC: (wins + 0.5 * ties) / total."""
    sid = _as_scores(scores_id, "scores_id")
    sood = _as_scores(scores_ood, "scores_ood")
    wins = int(np.sum(sood[:, None] > sid[None, :]))
    ties = int(np.sum(sood[:, None] == sid[None, :]))
    return float((2 * wins + ties) / (2.0 * sid.size * sood.size))


def threshold_for_fpr(validation_id_scores, target_fpr):
    """Smallest observed score value whose strictly-above fraction is at most
    ``target_fpr``; flagging at score > threshold then has empirical FPR
    <= target_fpr on the calibration scores. Needs at least 20 scores for
    the quantile to mean anything.
    """
    scores = _as_scores(validation_id_scores, "validation_id_scores")
    if scores.size < 20:
        raise SizeError(f"need at least 20 validation scores, got {scores.size}")
    if not (0.0 < target_fpr < 1.0):
        raise ValidationError("target_fpr must lie in (0, 1)")
    uniq = np.unique(scores)  # ascending
    above = scores.size - np.searchsorted(np.sort(scores), uniq, side="right")
    frac_above = above / scores.size
    ok = np.flatnonzero(frac_above <= target_fpr)
    return float(uniq[ok[0]])


def write_roc_csv(report, path):
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "fpr", "tpr"])
        for t, f, tp in zip(report.thresholds, report.fpr, report.tpr):
            writer.writerow([repr(float(t)), repr(float(f)), repr(float(tp))])


def write_roc_summary(report, path, threshold_at_fpr05=None):
    payload = {
        "auroc": report.auroc,
        "tnr_at_tpr95": report.tnr_at_tpr95,
        "threshold_at_fpr05": threshold_at_fpr05,
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
