"""Per-class accuracy tables, confusion matrices and training curves.

Human-facing tables use one decimal place; ``per_class_full.csv`` keeps
full precision. Accuracy is rounded first and the error is derived from
the rounded value, so each printed pair sums to exactly 100.0.

CSV column order (stable):
    per_class.csv / per_class_full.csv: class_index,class_name,support,accuracy_pct,error_pct
    confusion.csv: true\\pred,<class_name>...
    history.csv: epoch,loss,error_pct
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class ClassRow:
    class_index: int
    class_name: str
    support: int
    accuracy: float  # percent


@dataclass
class ClassReport:
    rows: list
    overall_accuracy: float
    notes: list = field(default_factory=list)

    @property
    def overall_error(self) -> float:
        return 100.0 - self.overall_accuracy

    @property
    def total_support(self) -> int:
        return sum(r.support for r in self.rows)


@dataclass
class RunHistory:
    epochs: list = field(default_factory=list)  # (epoch, loss, error_pct)

    def add(self, epoch: int, loss: float, error_pct: float) -> None:
        if self.epochs and epoch <= self.epochs[-1][0]:
            raise ValueError("epoch indices must be strictly increasing")
        if not self.epochs and epoch != 1:
            raise ValueError("epochs start at 1")
        self.epochs.append((int(epoch), float(loss), float(error_pct)))

    def __len__(self) -> int:
        return len(self.epochs)


def per_class_accuracy(preds, labels, class_names) -> ClassReport:
    """Accuracy per true class; classes absent from ``labels`` are left out with a note."""
    preds = np.asarray(preds, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if preds.shape != labels.shape:
        raise ValueError(f"length mismatch: {preds.shape} vs {labels.shape}")
    k = len(class_names)
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"unknown label {int(labels.max())} for {k} classes")
    rows, notes = [], []
    for c in range(k):
        mask = labels == c
        support = int(mask.sum())
        if support == 0:
            notes.append(f"class {c} ({class_names[c]}) has no samples; omitted")
            continue
        correct = int(np.sum(preds[mask] == c))
        rows.append(ClassRow(c, class_names[c], support, 100.0 * correct / support))
    total = sum(r.support for r in rows)
    overall = sum(r.support * r.accuracy for r in rows) / total if total else 0.0
    return ClassReport(rows, overall, notes)


def confusion_matrix(preds, labels, k: int) -> np.ndarray:
    """M[i, j] = number of samples of true class i predicted as j."""
    m = np.zeros((k, k), dtype=np.int64)
    np.add.at(m, (np.asarray(labels, dtype=np.int64), np.asarray(preds, dtype=np.int64)), 1)
    return m


def paired(accuracy: float) -> tuple[str, str]:
    """One-decimal accuracy/error strings that sum to 100.0."""
    acc = round(accuracy, 1)
    return f"{acc:.1f}", f"{round(100.0 - acc, 1):.1f}"


def class_report_csv(report: ClassReport, full_precision: bool = False) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["class_index", "class_name", "support", "accuracy_pct", "error_pct"])

    def fmt(acc):
        return (repr(acc), repr(100.0 - acc)) if full_precision else paired(acc)

    for r in report.rows:
        w.writerow([r.class_index, r.class_name, r.support, *fmt(r.accuracy)])
    w.writerow(["", "overall", report.total_support, *fmt(report.overall_accuracy)])
    return buf.getvalue()


def read_class_report(path) -> ClassReport:
    """Parse a per-class CSV written by :func:`emit_report`."""
    with open(path, encoding="utf-8", newline="") as fh:
        records = list(csv.DictReader(fh))
    if not records or records[-1]["class_name"] != "overall":
        raise ValueError(f"{path}: missing overall row")
    rows = [
        ClassRow(int(r["class_index"]), r["class_name"], int(r["support"]), float(r["accuracy_pct"]))
        for r in records[:-1]
    ]
    return ClassReport(rows, float(records[-1]["accuracy_pct"]))


def confusion_csv(matrix, class_names) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["true\\pred", *class_names])
    for name, row in zip(class_names, matrix):
        w.writerow([name, *map(int, row)])
    return buf.getvalue()


def history_csv(history: RunHistory) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "loss", "error_pct"])
    for epoch, loss, err in history.epochs:
        w.writerow([epoch, repr(loss), repr(err)])
    return buf.getvalue()


def read_history(path) -> RunHistory:
    h = RunHistory()
    with open(path, encoding="utf-8", newline="") as fh:
        for r in csv.DictReader(fh):
            h.add(int(r["epoch"]), float(r["loss"]), float(r["error_pct"]))
    return h


def curve_svg(history: RunHistory, title: str = "error rate vs epoch",
              width: int = 480, height: int = 320) -> str:
    """Standalone SVG line chart of error percent against epoch."""
    left, right, top, bottom = 60, 20, 30, 50
    pw, ph = width - left - right, height - top - bottom
    epochs = [e for e, _, _ in history.epochs]
    errors = [err for _, _, err in history.epochs]
    e0, e1 = epochs[0], max(epochs[-1], epochs[0] + 1)
    ymax = max(max(errors), 1e-9)
    ymax = float(np.ceil(ymax / 5.0) * 5.0) if ymax > 5 else ymax

    def px(e):
        return left + pw * (e - e0) / (e1 - e0)

    def py(v):
        return top + ph * (1.0 - v / ymax)

    pts = " ".join(f"{px(e):.2f},{py(v):.2f}" for e, v in zip(epochs, errors))
    ticks = []
    for i in range(5):
        v = ymax * i / 4
        ticks.append(
            f'<line x1="{left - 4}" y1="{py(v):.2f}" x2="{left}" y2="{py(v):.2f}" stroke="black"/>'
            f'<text x="{left - 8}" y="{py(v) + 4:.2f}" font-size="11" text-anchor="end">{v:.1f}</text>'
        )
    for e in sorted({e0, epochs[-1], (e0 + epochs[-1]) // 2}):
        ticks.append(
            f'<line x1="{px(e):.2f}" y1="{top + ph}" x2="{px(e):.2f}" y2="{top + ph + 4}" stroke="black"/>'
            f'<text x="{px(e):.2f}" y="{top + ph + 18}" font-size="11" text-anchor="middle">{e}</text>'
        )
    return "\n".join([
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{width / 2}" y="18" font-size="14" text-anchor="middle">{_esc(title)}</text>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        *ticks,
        f'<text x="{left + pw / 2}" y="{height - 10}" font-size="12" text-anchor="middle">epoch</text>',
        f'<text x="15" y="{top + ph / 2}" font-size="12" text-anchor="middle" '
        f'transform="rotate(-90 15 {top + ph / 2})">error rate (%)</text>',
        f'<polyline fill="none" stroke="#1f77b4" stroke-width="2" points="{pts}"/>',
        "</svg>",
        "",
    ])


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def summary_text(report: ClassReport, model: str = "", task: str = "") -> str:
    acc, err = paired(report.overall_accuracy)
    lines = []
    if model or task:
        lines.append(f"model: {model}  task: {task}")
    lines += [
        f"samples: {report.total_support}",
        f"classes: {len(report.rows)}",
        f"accuracy (%): {acc}",
        f"error (%): {err}",
    ]
    lines += [f"note: {n}" for n in report.notes]
    return "\n".join(lines) + "\n"


def emit_report(report: ClassReport, history: RunHistory | None, out_dir, *,
                model: str = "", task: str = "", confusion=None, class_names=None) -> list[Path]:
    """Write the report file set into ``out_dir``; returns the paths written.

    ``curve.svg`` is only written when the history has at least one epoch.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create report directory {out}: {exc}") from exc
    files = {
        "per_class.csv": class_report_csv(report),
        "per_class_full.csv": class_report_csv(report, full_precision=True),
        "history.csv": history_csv(history or RunHistory()),
        "summary.txt": summary_text(report, model, task),
    }
    if confusion is not None:
        files["confusion.csv"] = confusion_csv(confusion, class_names)
    if history is not None and len(history):
        files["curve.svg"] = curve_svg(history, f"{model} {task} error rate".strip())
    written = []
    for name, text in files.items():
        path = out / name
        path.write_text(text, encoding="utf-8", newline="\n")
        written.append(path)
    return written
