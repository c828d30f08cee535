"""Confusion-matrix metrics and rank-based ROC-AUC."""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import MetricError


@dataclass
class Metrics:
    confusion: np.ndarray  # [C, C], rows true, columns predicted
    acc: float
    spe: float
    sen: float
    auc: Optional[float] = None

    @property
    def n(self):
        return int(self.confusion.sum())

    @property
    def error_rate(self):
        return 100.0 * (1.0 - self.acc)


def confusion_matrix(y_true, y_pred, num_classes):
    conf = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(conf, (np.asarray(y_true), np.asarray(y_pred)), 1)
    return conf


def _ratio(num, den):
    return float(num) / float(den) if den else 0.0


def one_vs_rest(conf, positive):
    """``(sensitivity, specificity)`` treating class ``positive`` as positive."""
    tp = conf[positive, positive]
    fn = conf[positive].sum() - tp
    fp = conf[:, positive].sum() - tp
    tn = conf.sum() - tp - fn - fp
    return _ratio(tp, tp + fn), _ratio(tn, tn + fp)


def from_confusion(conf, auc=None):
    """ACC plus SEN/SPE: positive class 1 for 2x2, macro one-vs-rest otherwise."""
    conf = np.asarray(conf, dtype=np.int64)
    total = conf.sum()
    acc = _ratio(np.trace(conf), total)
    if conf.shape[0] == 2:
        sen, spe = one_vs_rest(conf, 1)
    else:
        pairs = [one_vs_rest(conf, c) for c in range(conf.shape[0])]
        sen = float(np.mean([p[0] for p in pairs]))
        spe = float(np.mean([p[1] for p in pairs]))
    return Metrics(conf, acc, spe, sen, auc)


def roc_auc(scores, labels):
    """Mann-Whitney AUC: P(score_pos > score_neg), ties counted as one half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise MetricError(f"{scores.shape[0]} scores but {labels.shape[0]} labels")
    pos = scores[labels == 1]
    neg = np.sort(scores[labels == 0])
    if pos.size == 0 or neg.size == 0:
        raise MetricError("roc_auc needs both positive and negative examples")
    below = np.searchsorted(neg, pos, side="left")
    upto = np.searchsorted(neg, pos, side="right")
    doubled = int(np.sum(2 * below + (upto - below)))
    return doubled / (2.0 * pos.size * neg.size)
