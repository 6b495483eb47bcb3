"""Evaluation metrics: ROC/AUC and set precision/recall."""

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.stats import rankdata

from ..errors import InvalidArgument

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RocCurve:
    points: list  # (fpr, tpr) pairs, non-decreasing in fpr
    auc: float

    def trapezoid_area(self):
        pts = np.asarray(self.points)
        return float(np.trapezoid(pts[:, 1], pts[:, 0]))


def roc_auc(scores, labels):
    """ROC curve of ``scores`` against binary ``labels``.

    Ties between a positive and a negative count one half, so the area is
    the Mann-Whitney U statistic divided by ``n_pos * n_neg``.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise InvalidArgument("scores and labels differ in length", field="labels")
    if not np.all(np.isin(labels, (0, 1))):
        raise InvalidArgument("labels must be 0 or 1", field="labels")
    labels = labels.astype(bool)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise InvalidArgument("roc_auc needs both positive and negative labels", field="labels")
    if not np.all(np.isfinite(scores)):
        raise InvalidArgument("scores must be finite", field="scores")

    # mid-ranks are integers or halves, so the sum below is exact
    ranks = rankdata(scores, method="average")
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    auc = float(u / (n_pos * n_neg))

    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    y = labels[order]
    # one ROC vertex per distinct score, so tied groups become diagonal segments
    last_of_group = np.r_[s[1:] != s[:-1], True]
    tp = np.cumsum(y)[last_of_group]
    fp = np.cumsum(~y)[last_of_group]
    points = [(0.0, 0.0)] + [(f / n_neg, t / n_pos) for f, t in zip(fp.tolist(), tp.tolist())]
    return RocCurve(points=points, auc=auc)


class PrecisionRecall(NamedTuple):
    precision: float
    recall: float
    degenerate: bool = False

    @property
    def f1(self):
        if self.precision + self.recall == 0:
            return 0.0
        return 2 * self.precision * self.recall / (self.precision + self.recall)


def set_precision_recall(predicted, truth):
    """Precision and recall of a predicted token set.

    An empty prediction has precision 1.0 by convention; the result is
    flagged ``degenerate`` rather than raising.
    """
    predicted = set(predicted)
    truth = set(truth)
    if not truth:
        raise InvalidArgument("truth set must be non-empty", field="truth")
    hit = len(predicted & truth)
    recall = hit / len(truth)
    if not predicted:
        logger.debug("empty prediction: precision set to 1.0 (degenerate)")
        return PrecisionRecall(1.0, recall, True)
    return PrecisionRecall(hit / len(predicted), recall, False)
