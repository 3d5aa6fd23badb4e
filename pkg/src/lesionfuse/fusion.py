"""Score-level fusion: the weighted-sum rule, decisions, and weight search.

A fused score is the convex combination f_s = w1*x1 + ... + wn*xn of the
per-model probability scores.  Weights are normalized to sum to one at
construction, so the fused value always stays inside [min(x), max(x)] and
on the probability scale.  A score at or above the decision threshold
(default 0.5) means class 1, malignant; the tie at the threshold
deliberately resolves to the positive class.

The sweep walks w1 over a uniform grid (w2 = 1 - w1), scoring accuracy of
the thresholded decisions on labeled records, and keeps the lowest w1 on
ties.  Default weights favor the second model slightly: (0.45, 0.55).
"""

import csv
from dataclasses import dataclass
from pathlib import Path

__all__ = [
    "FusionInputError",
    "FusionWeights",
    "ScoreRecord",
    "DEFAULT_WEIGHTS",
    "fuse_scores",
    "decide",
    "weight_sweep",
    "read_single_scores",
    "write_single_scores",
    "merge_score_files",
    "write_fused_csv",
    "read_fused_csv",
    "write_sweep_csv",
]


class FusionInputError(Exception):
    """Scores, weights, or score files that cannot be fused."""


class FusionWeights:
    """Non-negative per-model weights, stored normalized to sum 1."""

    def __init__(self, weights):
        raw = [float(w) for w in weights]
        if not raw:
            raise FusionInputError("need at least one weight")
        for i, w in enumerate(raw):
            if w < 0:
                raise FusionInputError(f"weight {i + 1} is negative: {w}")
        total = sum(raw)
        if total <= 0:
            raise FusionInputError("weights must not all be zero")
        self.values = tuple(w / total for w in raw)
        assert abs(sum(self.values) - 1.0) <= 1e-9

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)

    def __getitem__(self, i):
        return self.values[i]

    def __eq__(self, other):
        return isinstance(other, FusionWeights) and self.values == other.values

    def __repr__(self):
        return f"FusionWeights({', '.join(f'{w:g}' for w in self.values)})"


DEFAULT_WEIGHTS = FusionWeights((0.45, 0.55))


@dataclass(frozen=True)
class ScoreRecord:
    sample_id: str
    scores: tuple
    label: int = None


def fuse_scores(weights, record):
    """Weighted sum of a ScoreRecord's (or bare score sequence's) scores."""
    if isinstance(record, ScoreRecord):
        scores, who = record.scores, f"record {record.sample_id!r}"
    else:
        scores, who = tuple(record), "input"
    if len(scores) != len(weights):
        raise FusionInputError(
            f"{who} has {len(scores)} scores but there are {len(weights)} weights"
        )
    for i, x in enumerate(scores):
        if not 0.0 <= x <= 1.0:
            raise FusionInputError(f"{who} score {i + 1} out of [0,1]: {x}")
    fused = sum(w * x for w, x in zip(weights, scores))
    # a convex combination; pin down the last-ulp rounding so the bound is exact
    return min(max(fused, min(scores)), max(scores))


def decide(score, threshold=0.5):
    """Class 1 iff score >= threshold; the threshold itself maps to 1."""
    if not 0.0 < threshold < 1.0:
        raise FusionInputError(f"threshold must be in (0,1), got {threshold}")
    return 1 if score >= threshold else 0


def weight_sweep(records, step=0.05, threshold=0.5):
    """Grid-search w1 (w2 = 1 - w1) for decision accuracy on labeled records.

    Returns ``(best_weights, table)`` where table rows are
    ``(w1, w2, accuracy)`` for every grid point; ties keep the lowest w1.
    """
    records = list(records)
    if not records:
        raise FusionInputError("cannot sweep over zero records")
    for record in records:
        if record.label is None:
            raise FusionInputError(f"record {record.sample_id!r} has no label")
        if len(record.scores) != 2:
            raise FusionInputError(
                f"sweep needs exactly 2 scores per record, "
                f"record {record.sample_id!r} has {len(record.scores)}"
            )
    steps = round(1.0 / step)
    if steps < 1 or abs(steps * step - 1.0) > 1e-9:
        raise FusionInputError(f"grid step must evenly divide 1, got {step}")
    table = []
    best = None
    for i in range(steps + 1):
        w1 = i / steps
        weights = FusionWeights((w1, 1.0 - w1))
        correct = sum(
            decide(fuse_scores(weights, r), threshold) == r.label for r in records
        )
        acc = correct / len(records)
        table.append((w1, 1.0 - w1, acc))
        if best is None or acc > best[1]:
            best = (weights, acc)
    return best[0], table


def _format_float(x):
    return repr(float(x))


def _parse_label(field, where):
    if field == "":
        return None
    if field not in ("0", "1"):
        raise FusionInputError(f"{where}: label must be 0 or 1, got {field!r}")
    return int(field)


def _parse_score(field, where):
    try:
        value = float(field)
    except ValueError:
        raise FusionInputError(f"{where}: bad score {field!r}") from None
    if not 0.0 <= value <= 1.0:
        raise FusionInputError(f"{where}: score out of [0,1]: {value}")
    return value


def write_single_scores(path, rows):
    """Write per-model predictions: rows of (id, score, label-or-None)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "score", "label"])
        for sample_id, score, label in rows:
            writer.writerow([sample_id, _format_float(score), "" if label is None else label])


def read_single_scores(path):
    """Read a per-model score CSV into [(id, score, label-or-None)]."""
    path = Path(path)
    if not path.is_file():
        raise FusionInputError(f"score file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["id", "score", "label"]:
            raise FusionInputError(
                f"{path}: expected header 'id,score,label', got {header!r}"
            )
        rows = []
        seen = set()
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise FusionInputError(f"{path} line {lineno}: expected 3 fields")
            sample_id, score, label = row
            if sample_id in seen:
                raise FusionInputError(f"{path} line {lineno}: duplicate id {sample_id!r}")
            seen.add(sample_id)
            where = f"{path} line {lineno}"
            rows.append((sample_id, _parse_score(score, where), _parse_label(label, where)))
    if not rows:
        raise FusionInputError(f"{path}: no score rows")
    return rows


def merge_score_files(paths):
    """Join per-model score CSVs over one id set into ScoreRecords.

    The files must cover identical ids; labels, where present in several
    files, must agree.  Record order follows the first file.
    """
    per_model = [read_single_scores(p) for p in paths]
    first_ids = [sample_id for sample_id, _, _ in per_model[0]]
    first_set = set(first_ids)
    for path, rows in zip(paths[1:], per_model[1:]):
        ids = {sample_id for sample_id, _, _ in rows}
        if ids != first_set:
            missing = sorted(first_set - ids)
            extra = sorted(ids - first_set)
            diverging = (missing + extra)[0]
            raise FusionInputError(
                f"score files disagree on ids, first divergence: {diverging!r} "
                f"({paths[0]} vs {path})"
            )
    by_id = [{sample_id: (score, label) for sample_id, score, label in rows} for rows in per_model]
    records = []
    for sample_id in first_ids:
        scores = tuple(model[sample_id][0] for model in by_id)
        labels = {model[sample_id][1] for model in by_id} - {None}
        if len(labels) > 1:
            raise FusionInputError(
                f"label mismatch for id {sample_id!r} across score files: {sorted(labels)}"
            )
        label = labels.pop() if labels else None
        records.append(ScoreRecord(sample_id=sample_id, scores=scores, label=label))
    return records


def write_fused_csv(path, fused_rows):
    """Write rows of (id, fused_score, decision, label-or-None)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "fused_score", "decision", "label"])
        for sample_id, score, decision, label in fused_rows:
            writer.writerow(
                [sample_id, _format_float(score), decision, "" if label is None else label]
            )


def read_fused_csv(path):
    """Read back (id, fused_score, decision, label-or-None) rows."""
    path = Path(path)
    if not path.is_file():
        raise FusionInputError(f"fused score file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["id", "fused_score", "decision", "label"]:
            raise FusionInputError(
                f"{path}: expected header 'id,fused_score,decision,label', got {header!r}"
            )
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise FusionInputError(f"{path} line {lineno}: expected 4 fields")
            sample_id, score, decision, label = row
            where = f"{path} line {lineno}"
            if decision not in ("0", "1"):
                raise FusionInputError(f"{where}: decision must be 0 or 1, got {decision!r}")
            rows.append(
                (sample_id, _parse_score(score, where), int(decision), _parse_label(label, where))
            )
    if not rows:
        raise FusionInputError(f"{path}: no fused rows")
    return rows


def write_sweep_csv(path, table):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["w1", "w2", "accuracy"])
        for w1, w2, acc in table:
            writer.writerow([_format_float(w1), _format_float(w2), _format_float(acc)])
