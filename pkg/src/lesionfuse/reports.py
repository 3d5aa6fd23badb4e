"""CSV and SVG report emission for training curves, confusion matrices, and ROC.

SVG files are hand-rolled markup (polyline plots, rect heatmaps) so reports
need nothing beyond a browser to view.  All output is deterministic: floats
are serialized with ``repr`` in CSVs and fixed-precision formatting in SVGs.
"""

from __future__ import annotations

import csv
from xml.sax.saxutils import escape

from .training import TrainHistory, TrainingError

HISTORY_HEADER = ["epoch", "train_loss", "train_acc", "val_loss", "val_acc"]

_SVG_OPEN = (
    '<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
    'viewBox="0 0 {w} {h}" font-family="monospace" font-size="11">'
)
_TRAIN_COLOR = "#1f6fb2"
_VAL_COLOR = "#d95f02"
_GRID_COLOR = "#cccccc"


def history_csv_text(history):
    """Render a TrainHistory as CSV with one row per epoch (1-based)."""
    if len(history) == 0:
        raise TrainingError("history is empty")
    lines = [",".join(HISTORY_HEADER)]
    rows = zip(history.train_loss, history.train_acc, history.val_loss, history.val_acc)
    for epoch, values in enumerate(rows, start=1):
        lines.append(",".join([str(epoch)] + [repr(float(v)) for v in values]))
    return "\n".join(lines) + "\n"


def write_history_csv(path, history):
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(history_csv_text(history))


def read_history_csv(path):
    """Parse a history CSV back into a TrainHistory."""
    history = TrainHistory()
    with open(path, encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != HISTORY_HEADER:
            raise TrainingError(f"bad history header {header!r} in {path}")
        for row in reader:
            if len(row) != 5:
                raise TrainingError(f"bad history row {row!r} in {path}")
            history.train_loss.append(float(row[1]))
            history.train_acc.append(float(row[2]))
            history.val_loss.append(float(row[3]))
            history.val_acc.append(float(row[4]))
    if len(history) == 0:
        raise TrainingError(f"history file {path} has no epochs")
    return history


class _Frame:
    """Maps data coordinates onto a pixel viewport with a flipped y axis."""

    def __init__(self, x_range, y_range, left, top, width, height):
        self.left = left
        self.top = top
        self.width = width
        self.height = height
        self.x0, self.x1 = _padded(x_range)
        self.y0, self.y1 = _padded(y_range)

    def x(self, value):
        return self.left + (value - self.x0) / (self.x1 - self.x0) * self.width

    def y(self, value):
        return self.top + self.height - (value - self.y0) / (self.y1 - self.y0) * self.height

    def polyline(self, xs, ys, color):
        points = " ".join(f"{self.x(x):.2f},{self.y(y):.2f}" for x, y in zip(xs, ys))
        return (
            f'<polyline points="{points}" fill="none" '
            f'stroke="{color}" stroke-width="1.5"/>'
        )

    def axes(self, title, x_label):
        parts = [
            f'<rect x="{self.left}" y="{self.top}" width="{self.width}" '
            f'height="{self.height}" fill="none" stroke="{_GRID_COLOR}"/>',
            _text(self.left + self.width / 2, self.top - 8, title, anchor="middle"),
            _text(
                self.left + self.width / 2,
                self.top + self.height + 28,
                x_label,
                anchor="middle",
            ),
        ]
        for value in (self.y0, (self.y0 + self.y1) / 2, self.y1):
            parts.append(
                _text(self.left - 6, self.y(value) + 4, f"{value:.3g}", anchor="end")
            )
        for value in (self.x0, self.x1):
            parts.append(
                _text(self.x(value), self.top + self.height + 14, f"{value:.3g}", anchor="middle")
            )
        return parts


def _padded(value_range):
    lo = float(min(value_range))
    hi = float(max(value_range))
    if hi - lo < 1e-9:
        lo -= 0.5
        hi += 0.5
    return lo, hi


def _text(x, y, content, anchor="start", color="#000000"):
    return (
        f'<text x="{x:.2f}" y="{y:.2f}" text-anchor="{anchor}" '
        f'fill="{color}">{escape(str(content))}</text>'
    )


def _document(width, height, body):
    parts = [_SVG_OPEN.format(w=width, h=height)]
    parts.append(f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>')
    parts.extend(body)
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def history_svg(history, title="training history"):
    """Two-panel accuracy/loss plot with train and validation curves."""
    if len(history) == 0:
        raise TrainingError("history is empty")
    epochs = list(range(1, len(history) + 1))
    body = [_text(20, 20, title)]
    panels = [
        ("loss", history.train_loss, history.val_loss, 50),
        ("accuracy", history.train_acc, history.val_acc, 450),
    ]
    for name, train_values, val_values, left in panels:
        frame = _Frame(
            x_range=(epochs[0], epochs[-1]),
            y_range=list(train_values) + list(val_values),
            left=left,
            top=50,
            width=300,
            height=200,
        )
        body.extend(frame.axes(name, "epoch"))
        body.append(frame.polyline(epochs, train_values, _TRAIN_COLOR))
        body.append(frame.polyline(epochs, val_values, _VAL_COLOR))
    body.append(_text(50, 300, "train", color=_TRAIN_COLOR))
    body.append(_text(110, 300, "validation", color=_VAL_COLOR))
    return _document(800, 320, body)


def write_history_svg(path, history, title="training history"):
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(history_svg(history, title))


def _heat_fill(count, peak):
    intensity = 0 if peak == 0 else count / peak
    red = round(255 - 170 * intensity)
    green = round(255 - 130 * intensity)
    blue = round(255 - 60 * intensity)
    return f"rgb({red},{green},{blue})"


def confusion_svg(counts, title="confusion matrix"):
    """2x2 heatmap; rows are actual classes, columns predicted classes."""
    cells = [
        (0, 0, "TN", counts.tn),
        (0, 1, "FP", counts.fp),
        (1, 0, "FN", counts.fn),
        (1, 1, "TP", counts.tp),
    ]
    peak = max(counts.tn, counts.fp, counts.fn, counts.tp)
    size = 120
    left, top = 110, 70
    body = [_text(20, 25, title)]
    body.append(_text(left + size, top - 30, "predicted", anchor="middle"))
    for col, name in enumerate(("benign", "malignant")):
        body.append(_text(left + size * col + size / 2, top - 10, name, anchor="middle"))
    for row, name in enumerate(("benign", "malignant")):
        body.append(_text(left - 10, top + size * row + size / 2, name, anchor="end"))
    body.append(_text(24, top + size, "actual"))
    for row, col, name, count in cells:
        x = left + size * col
        y = top + size * row
        body.append(
            f'<rect x="{x}" y="{y}" width="{size}" height="{size}" '
            f'fill="{_heat_fill(count, peak)}" stroke="#444444"/>'
        )
        body.append(_text(x + size / 2, y + size / 2 - 4, name, anchor="middle"))
        body.append(_text(x + size / 2, y + size / 2 + 12, count, anchor="middle"))
    return _document(400, 330, body)


def write_confusion_svg(path, counts, title="confusion matrix"):
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(confusion_svg(counts, title))


def roc_svg(curve, title="ROC curve"):
    """ROC polyline over the unit square with the AUC annotated."""
    frame = _Frame(x_range=(0.0, 1.0), y_range=(0.0, 1.0), left=70, top=50, width=260, height=260)
    fprs = [p[0] for p in curve.points]
    tprs = [p[1] for p in curve.points]
    body = [_text(20, 20, title)]
    body.extend(frame.axes("", "false positive rate"))
    body.append(
        f'<line x1="{frame.x(0.0):.2f}" y1="{frame.y(0.0):.2f}" '
        f'x2="{frame.x(1.0):.2f}" y2="{frame.y(1.0):.2f}" '
        f'stroke="{_GRID_COLOR}" stroke-dasharray="4 3"/>'
    )
    body.append(frame.polyline(fprs, tprs, _TRAIN_COLOR))
    body.append(_text(frame.x(0.55), frame.y(0.08), f"AUC = {curve.auc:.4f}"))
    body.append(
        f'<text x="24" y="{frame.y(0.5):.2f}" text-anchor="middle" '
        f'transform="rotate(-90 24 {frame.y(0.5):.2f})">true positive rate</text>'
    )
    return _document(400, 380, body)


def write_roc_svg(path, curve, title="ROC curve"):
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(roc_svg(curve, title))
