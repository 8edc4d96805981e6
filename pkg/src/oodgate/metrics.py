"""ROC analysis and threshold calibration for ID-vs-OOD score sets.

The positive class is in-distribution throughout: a sample counts as
accepted (classified ID) when its score is >= the threshold. Curves are
built with atomic tie groups, so the trapezoidal AUROC equals the pairwise
win-plus-half-tie probability exactly.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass

import numpy as np

from .detectors import ScoreSet
from .errors import ValidationError


class Criterion(str, enum.Enum):
    YOUDEN = "youden"
    FPR_AT_TPR = "fpr_at_tpr"


@dataclass(frozen=True)
class RocCurve:
    """Operating points at descending thresholds, endpoints (0,0) and (1,1).

    ``thresholds`` holds the unique observed scores bracketed by +/-inf
    sentinels; ``tpr``/``fpr`` are the ID/OOD acceptance rates at each cut.
    """

    thresholds: np.ndarray
    tpr: np.ndarray
    fpr: np.ndarray

    def __post_init__(self) -> None:
        t, tp, fp = (np.asarray(a, dtype=np.float64) for a in (self.thresholds, self.tpr, self.fpr))
        if not (t.shape == tp.shape == fp.shape) or t.ndim != 1 or t.size < 2:
            raise ValidationError("curve arrays must be equal-length vectors")
        if (np.diff(t) >= 0).any():
            raise ValidationError("thresholds must be strictly descending")
        for name, r in (("tpr", tp), ("fpr", fp)):
            if (np.diff(r) < 0).any() or r[0] != 0.0 or r[-1] != 1.0 or (r < 0).any() or (r > 1).any():
                raise ValidationError(f"{name} must rise from 0 to 1 as thresholds descend")
        for arr in (t, tp, fp):
            arr.setflags(write=False)
        object.__setattr__(self, "thresholds", t)
        object.__setattr__(self, "tpr", tp)
        object.__setattr__(self, "fpr", fp)


def _accept_rate(sorted_scores: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    """Fraction of scores >= each threshold (scores pre-sorted ascending)."""
    below = np.searchsorted(sorted_scores, thresholds, side="left")
    return (sorted_scores.size - below) / sorted_scores.size


def _check_pair(id_scores: ScoreSet, ood_scores: ScoreSet) -> tuple[np.ndarray, np.ndarray]:
    if id_scores.method != ood_scores.method:
        raise ValidationError(
            f"score sets disagree on method: {id_scores.method} vs {ood_scores.method}"
        )
    if id_scores.orientation != ood_scores.orientation:
        raise ValidationError("score sets disagree on orientation")
    return id_scores.scores, ood_scores.scores


def roc_curve(id_scores: ScoreSet, ood_scores: ScoreSet) -> RocCurve:
    """Build the ROC staircase over all observed score cuts."""
    id_s, ood_s = _check_pair(id_scores, ood_scores)
    uniq = np.unique(np.concatenate([id_s, ood_s]))  # ascending, tie groups merged
    thresholds = np.concatenate([[np.inf], uniq[::-1], [-np.inf]])
    id_sorted = np.sort(id_s)
    ood_sorted = np.sort(ood_s)
    return RocCurve(
        thresholds,
        _accept_rate(id_sorted, thresholds),
        _accept_rate(ood_sorted, thresholds),
    )


def auroc(curve: RocCurve) -> float:
    """Trapezoidal area under the ROC curve."""
    return float(np.sum(np.diff(curve.fpr) * (curve.tpr[1:] + curve.tpr[:-1]) / 2.0))


def fpr_at_tpr(curve: RocCurve, target_tpr: float = 0.95) -> float:
    """Smallest FPR over operating points with TPR >= target (no interpolation)."""
    if not 0.0 < target_tpr <= 1.0:
        raise ValidationError(f"target TPR must be in (0,1], got {target_tpr}")
    idx = int(np.argmax(curve.tpr >= target_tpr))
    return float(curve.fpr[idx])


def calibrate_threshold(
    id_scores: ScoreSet,
    ood_scores: ScoreSet,
    criterion: Criterion = Criterion.YOUDEN,
    target_tpr: float = 0.95,
) -> tuple[float, float, float]:
    """Pick an operating threshold among the observed score cuts.

    YOUDEN maximizes TPR - FPR, breaking ties toward the smaller threshold
    (accepting more as ID). FPR_AT_TPR picks the largest threshold whose TPR
    reaches the target. Returns ``(threshold, tpr, fpr)`` at the chosen cut.
    """
    id_s, ood_s = _check_pair(id_scores, ood_scores)
    candidates = np.unique(np.concatenate([id_s, ood_s]))[::-1]  # descending
    id_sorted, ood_sorted = np.sort(id_s), np.sort(ood_s)
    tp = id_s.size - np.searchsorted(id_sorted, candidates, side="left")
    fp = ood_s.size - np.searchsorted(ood_sorted, candidates, side="left")

    criterion = Criterion(criterion)
    if criterion is Criterion.YOUDEN:
        # Integer cross-multiplied Youden index keeps tie detection exact.
        j = tp * ood_s.size - fp * id_s.size
        idx = int(np.flatnonzero(j == j.max())[-1])
    else:
        if not 0.0 < target_tpr <= 1.0:
            raise ValidationError(f"target TPR must be in (0,1], got {target_tpr}")
        idx = int(np.argmax(tp / id_s.size >= target_tpr))
    return (
        float(candidates[idx]),
        float(tp[idx] / id_s.size),
        float(fp[idx] / ood_s.size),
    )


def accuracy_at_threshold(
    id_scores: ScoreSet, ood_scores: ScoreSet, threshold: float
) -> float:
    """(ID accepted + OOD rejected) / total, with acceptance at score >= t."""
    id_s, ood_s = _check_pair(id_scores, ood_scores)
    correct = int((id_s >= threshold).sum()) + int((ood_s < threshold).sum())
    return correct / (id_s.size + ood_s.size)


def five_number_summary(scores: ScoreSet) -> tuple[float, float, float, float, float]:
    """(min, Q1, median, Q3, max) with linear interpolation at p*(n-1)."""
    s = scores.scores if isinstance(scores, ScoreSet) else np.asarray(scores, dtype=np.float64)
    if s.size == 0:
        raise ValidationError("cannot summarize an empty score set")
    q = np.quantile(s, [0.0, 0.25, 0.5, 0.75, 1.0], method="linear")
    return tuple(float(v) for v in q)


@dataclass(frozen=True)
class EvalReport:
    method: str | None
    auroc: float
    fpr95: float
    threshold: float
    tpr_at_threshold: float
    fpr_at_threshold: float
    accuracy_at_threshold: float
    id_quartiles: tuple[float, float, float, float, float]
    ood_quartiles: tuple[float, float, float, float, float]
    n_id: int
    n_ood: int

    def __post_init__(self) -> None:
        if self.auroc == 1.0 and self.fpr95 != 0.0:
            raise ValidationError("auroc = 1 requires fpr95 = 0")

    def to_dict(self) -> dict:
        def quart(q):
            return {"min": q[0], "q1": q[1], "median": q[2], "q3": q[3], "max": q[4]}

        return {
            "method": self.method,
            "auroc": self.auroc,
            "fpr95": self.fpr95,
            "threshold": self.threshold,
            "tpr_at_threshold": self.tpr_at_threshold,
            "fpr_at_threshold": self.fpr_at_threshold,
            "accuracy_at_threshold": self.accuracy_at_threshold,
            "id_quartiles": quart(self.id_quartiles),
            "ood_quartiles": quart(self.ood_quartiles),
            "n_id": self.n_id,
            "n_ood": self.n_ood,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def evaluate(
    id_scores: ScoreSet,
    ood_scores: ScoreSet,
    criterion: Criterion = Criterion.YOUDEN,
    target_tpr: float = 0.95,
) -> EvalReport:
    """Full evaluation: curve, AUROC, FPR95, calibrated cut, quartiles."""
    curve = roc_curve(id_scores, ood_scores)
    area = auroc(curve)
    threshold, tpr, fpr = calibrate_threshold(id_scores, ood_scores, criterion, target_tpr)
    method = id_scores.method.value if id_scores.method is not None else None
    return EvalReport(
        method=method,
        auroc=area,
        fpr95=fpr_at_tpr(curve, 0.95),
        threshold=threshold,
        tpr_at_threshold=tpr,
        fpr_at_threshold=fpr,
        accuracy_at_threshold=accuracy_at_threshold(id_scores, ood_scores, threshold),
        id_quartiles=five_number_summary(id_scores),
        ood_quartiles=five_number_summary(ood_scores),
        n_id=len(id_scores),
        n_ood=len(ood_scores),
    )
