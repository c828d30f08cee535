"""Text and JSON reports of evaluation results.

JSON schema::

    {"entries": [
        {"task": str, "provider": str, "shots": int, "n": int,
         "acc": float, "spe": float, "sen": float, "error_rate": float,
         "auc": float,                      # binary tasks only
         "confusion": [[int, ...], ...]}    # rows true, columns predicted
    ]}

Rates are percentages rounded to two decimals; the text table prints the
same numbers, so both views agree exactly.
"""

from dataclasses import dataclass

DASH = "-"


@dataclass
class ReportEntry:
    task: str
    provider: str
    shots: int
    metrics: object

    @property
    def config_label(self):
        return f"{self.provider} ({self.shots} shot)"


def pct(x):
    return round(100.0 * x, 2)


def error_pct(m):
    """Error rate from the rounded accuracy, so the two cells always sum to 100."""
    return round(100.0 - pct(m.acc), 2)


def entry_json(e):
    m = e.metrics
    row = {
        "task": e.task,
        "provider": e.provider,
        "shots": e.shots,
        "n": m.n,
        "acc": pct(m.acc),
        "spe": pct(m.spe),
        "sen": pct(m.sen),
        "error_rate": error_pct(m),
        "confusion": m.confusion.tolist(),
    }
    if m.auc is not None:
        row["auc"] = pct(m.auc)
    return row


def to_json(entries):
    return {"entries": [entry_json(e) for e in entries]}


def _cell(v):
    return DASH if v is None else f"{v:.2f}"


def _render(header, rows):
    widths = [max(len(str(r[i])) for r in [header] + rows) for i in range(len(header))]
    line = lambda r: "  ".join(str(c).ljust(w) for c, w in zip(r, widths)).rstrip()
    return "\n".join([line(header), line(["-" * w for w in widths])] + [line(r) for r in rows])


def metrics_table(entries):
    header = ["Task", "Embedding", "ACC", "SPE", "SEN", "AUC", "Error"]
    rows = []
    for e in entries:
        j = entry_json(e)
        rows.append(
            [e.task, e.config_label, _cell(j["acc"]), _cell(j["spe"]), _cell(j["sen"]),
             _cell(j.get("auc")), _cell(j["error_rate"])]
        )
    return _render(header, rows)


def error_rate_table(entries):
    """Tasks x embedding configurations, error rates; missing combinations are '-'."""
    configs, tasks, cells = [], [], {}
    for e in entries:
        if e.config_label not in configs:
            configs.append(e.config_label)
        if e.task not in tasks:
            tasks.append(e.task)
        cells[(e.task, e.config_label)] = error_pct(e.metrics)
    rows = [[t] + [_cell(cells.get((t, c))) for c in configs] for t in tasks]
    return _render(["Task"] + configs, rows)


def report(entries):
    """Return ``(text, json_dict)`` for a non-empty list of ReportEntry."""
    if not entries:
        raise ValueError("report needs at least one evaluated task")
    text = "Metrics (%)\n" + metrics_table(entries) + "\n\nError rate (%)\n" + error_rate_table(entries)
    return text, to_json(entries)
