"""Classification tasks over the four diagnostic labels."""

from dataclasses import dataclass

from .errors import TaskError
from .synth import ClassLabel

NC, EMCI, LMCI, AD = ClassLabel.NC, ClassLabel.EMCI, ClassLabel.LMCI, ClassLabel.AD


@dataclass(frozen=True)
class Task:
    """``class_map`` sends each ClassLabel to a task class index or ``None`` (excluded).

    For binary tasks index 1 is the positive class: the more severe label.
    """

    name: str
    class_map: dict
    class_names: tuple

    @property
    def num_classes(self):
        return len(self.class_names)

    @property
    def is_binary(self):
        return self.num_classes == 2

    def map_label(self, label):
        return self.class_map[ClassLabel(label)]


def _binary(name, negative, positive):
    cmap = {lab: None for lab in ClassLabel}
    cmap[negative], cmap[positive] = 0, 1
    return Task(name, cmap, (negative.name, positive.name))


TASKS = {
    "ad-nc": _binary("ad-nc", NC, AD),
    "ad-emci": _binary("ad-emci", EMCI, AD),
    "lmci-nc": _binary("lmci-nc", NC, LMCI),
    "emci-lmci": _binary("emci-lmci", EMCI, LMCI),
    "3way": Task("3way", {NC: 0, EMCI: 1, LMCI: 1, AD: 2}, ("NC", "MCI", "AD")),
    "4way": Task("4way", {NC: 0, EMCI: 1, LMCI: 2, AD: 3}, ("NC", "EMCI", "LMCI", "AD")),
}


def get_task(name):
    try:
        return TASKS[name]
    except KeyError:
        raise TaskError(f"unknown task {name!r}; choose from {sorted(TASKS)}") from None
