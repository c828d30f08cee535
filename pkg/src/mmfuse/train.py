"""Mini-batch SGD training and evaluation."""

import logging
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import EvaluationError, TaskError
from .metrics import from_confusion, confusion_matrix, roc_auc
from .model import forward, parameters, softmax
from .rng import Rng

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Hyperparams:
    """Plain SGD with a fixed learning rate: ``w -= lr * grad(mean batch CE)``."""

    epochs: int = 50
    lr: float = 0.03
    batch: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.lr < 0:
            raise ValueError("lr must be non-negative")
        if self.batch < 1:
            raise ValueError("batch must be >= 1")


@dataclass
class Subjects:
    """In-memory subjects: ids, diagnostic labels, images and tokens."""

    ids: list
    labels: np.ndarray  # ClassLabel values
    mri: np.ndarray  # [n, 1, S, S]
    pet: np.ndarray
    tokens: np.ndarray  # [n, 64]

    def __len__(self):
        return len(self.ids)

    def for_task(self, task):
        """Subset kept by ``task`` plus its task-class targets."""
        mapped = [task.map_label(lab) for lab in self.labels]
        keep = np.array([m is not None for m in mapped], dtype=bool)
        idx = np.flatnonzero(keep)
        targets = np.array([mapped[i] for i in idx], dtype=np.int64)
        sub = Subjects([self.ids[i] for i in idx], self.labels[idx], self.mri[idx], self.pet[idx], self.tokens[idx])
        return sub, targets


@dataclass
class EpochLog:
    epoch: int
    loss: float
    acc: float


def _check_task_classes(task, targets, minimum):
    counts = np.bincount(targets, minlength=task.num_classes)
    for c, n in enumerate(counts):
        if n < minimum:
            raise TaskError(
                f"task {task.name}: class {task.class_names[c]} has {n} subjects, need at least {minimum}"
            )


def train(params, config, data, task, hyper, on_epoch=None):
    """Train ``params`` in place on ``data`` restricted to ``task``.

    The per-epoch shuffle comes from one ``Rng(hyper.seed)`` stream, so a
    run is fully determined by its inputs.  Returns ``(params, logs)``.
    """
    if config.num_classes != task.num_classes:
        raise TaskError(f"model has {config.num_classes} classes, task {task.name} needs {task.num_classes}")
    sub, targets = data.for_task(task)
    _check_task_classes(task, targets, 2)
    named = parameters(params)
    rng = Rng(hyper.seed)
    logs = []
    n = len(sub)
    for epoch in range(1, hyper.epochs + 1):
        order = rng.shuffle(list(range(n)))
        total_loss, correct = 0.0, 0
        for start in range(0, n, hyper.batch):
            idx = np.array(order[start : start + hyper.batch])
            logits = forward(sub.mri[idx], sub.pet[idx], sub.tokens[idx], params, config)
            loss = T.cross_entropy(logits, targets[idx])
            for _, p in named:
                p.grad = None
            T.backward(loss)
            for _, p in named:
                if p.grad is not None:
                    p.data = (p.data - hyper.lr * p.grad).astype(p.data.dtype)
            total_loss += loss.item() * len(idx)
            correct += int(np.sum(np.argmax(logits.data, axis=-1) == targets[idx]))
        entry = EpochLog(epoch, total_loss / n, correct / n)
        logs.append(entry)
        log.info("epoch %d loss %.4f acc %.4f", entry.epoch, entry.loss, entry.acc)
        if on_epoch is not None:
            on_epoch(entry)
    for _, p in named:
        p.grad = None
    return params, logs


def predict_scores(params, config, data, batch=32):
    """Class probabilities ``[n, num_classes]`` without building a graph."""
    out = []
    with T.no_grad():
        for start in range(0, len(data), batch):
            sl = slice(start, start + batch)
            logits = forward(data.mri[sl], data.pet[sl], data.tokens[sl], params, config)
            out.append(softmax(logits))
    return np.concatenate(out) if out else np.zeros((0, config.num_classes))


def evaluate(params, config, data, task):
    """Confusion-based metrics on ``data``; AUC only for binary tasks."""
    if config.num_classes != task.num_classes:
        raise EvaluationError(
            f"model has {config.num_classes} classes but task {task.name} has {task.num_classes}"
        )
    sub, targets = data.for_task(task)
    if len(sub) == 0:
        raise EvaluationError(f"no subjects for task {task.name} in this split")
    probs = predict_scores(params, config, sub)
    preds = np.argmax(probs, axis=-1)
    conf = confusion_matrix(targets, preds, task.num_classes)
    auc = None
    if task.is_binary and len(set(targets.tolist())) == 2:
        auc = roc_auc(probs[:, 1], targets)
    return from_confusion(conf, auc)
