"""Ground-truth comparison: confusion counts, the seven derived
metrics, per-category aggregation, and CSV/JSON report emission.

Counts are pooled per video; category scores are unweighted means of
per-video metrics (never the metric of averaged counts), and undefined
values propagate as blanks that are excluded from averages.
"""

import csv
import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import (DimensionMismatch, EmptyCategory, IoFailure,
                     UnreadableFile)
from .imaging import load_frame

DEFAULT_IGNORED_LABELS = frozenset({50, 85, 170})

METRIC_FIELDS = ("recall", "specificity", "fpr", "fnr", "pwc",
                 "f_measure", "precision")
REPORT_COLUMNS = ("Recall", "Specificity", "FPR", "FNR", "PWC",
                  "F-Measure", "Precision")


@dataclass
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __add__(self, other):
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp,
                               self.fn + other.fn, self.tn + other.tn)

    @property
    def total(self):
        return self.tp + self.fp + self.fn + self.tn


@dataclass
class MetricSet:
    """The seven scores; None marks an undefined (blank) value."""
    recall: float | None = None
    specificity: float | None = None
    fpr: float | None = None
    fnr: float | None = None
    pwc: float | None = None
    f_measure: float | None = None
    precision: float | None = None

    def as_dict(self):
        return {name: getattr(self, name) for name in METRIC_FIELDS}


def load_gt_frame(path, ignored=DEFAULT_IGNORED_LABELS):
    """Read a ground-truth frame; labels outside {0, 255} plus the
    ignored set are load errors."""
    arr = load_frame(path)
    if arr.ndim == 3:
        arr = arr[:, :, 0]
    legal = np.isin(arr, [0, 255] + sorted(ignored))
    if not legal.all():
        values = sorted(np.unique(arr[~legal]).tolist())
        raise UnreadableFile(f"{path}: unknown ground-truth labels {values}")
    return arr


def accumulate(pred, gt, counts=None, ignored=DEFAULT_IGNORED_LABELS):
    """Add one frame's pixel outcomes into the confusion counts.

    pred is a bool mask; gt carries labels 0 / 255 / ignored values
    (ignored pixels are skipped entirely).
    """
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise DimensionMismatch(f"pred {pred.shape} vs gt {gt.shape}")
    counts = counts or ConfusionCounts()
    scored = ~np.isin(gt, sorted(ignored)) if ignored else \
        np.ones_like(pred, dtype=bool)
    gt_fg = gt == 255
    tp = int(np.count_nonzero(scored & pred & gt_fg))
    fp = int(np.count_nonzero(scored & pred & ~gt_fg))
    fn = int(np.count_nonzero(scored & ~pred & gt_fg))
    tn = int(np.count_nonzero(scored & ~pred & ~gt_fg))
    return counts + ConfusionCounts(tp, fp, fn, tn)


def metrics(counts: ConfusionCounts) -> MetricSet:
    """The seven derived scores; degenerate denominators yield None."""
    tp, fp, fn, tn = counts.tp, counts.fp, counts.fn, counts.tn
    out = MetricSet()
    if tp + fn > 0:
        out.recall = tp / (tp + fn)
        out.fnr = fn / (tp + fn)
    if tn + fp > 0:
        out.specificity = tn / (tn + fp)
        out.fpr = fp / (fp + tn)
    if counts.total > 0:
        out.pwc = 100.0 * (fn + fp) / counts.total
    if tp + fp > 0:
        out.precision = tp / (tp + fp)
    if tp > 0:
        out.f_measure = (2.0 * out.precision * out.recall
                         / (out.precision + out.recall))
    return out


def mean_metrics(sets) -> MetricSet:
    """Unweighted per-field mean; blank values are excluded, and a field
    blank everywhere stays blank."""
    out = MetricSet()
    for name in METRIC_FIELDS:
        values = [getattr(s, name) for s in sets
                  if getattr(s, name) is not None]
        if values:
            setattr(out, name, sum(values) / len(values))
    return out


@dataclass
class Aggregated:
    per_video: dict                 # video -> MetricSet
    per_category: dict              # category -> MetricSet
    overall_by_category: MetricSet  # mean over category means
    overall_by_video: MetricSet     # mean over all videos


def aggregate(per_video, grouping=None) -> Aggregated:
    """Aggregate per-video metrics into category and overall rows.

    grouping maps video -> category; missing entries land in 'all'.
    """
    if not per_video:
        raise EmptyCategory("no videos to aggregate")
    grouping = grouping or {}
    cats = {}
    for video, mset in per_video.items():
        cats.setdefault(grouping.get(video, "all"), []).append(mset)
    per_category = {cat: mean_metrics(vs) for cat, vs in sorted(cats.items())}
    return Aggregated(per_video=dict(per_video), per_category=per_category,
                      overall_by_category=mean_metrics(
                          list(per_category.values())),
                      overall_by_video=mean_metrics(list(per_video.values())))


def round_half_up(value, places=4):
    if value is None:
        return None
    scale = 10 ** places
    return float(np.floor(value * scale + 0.5) / scale)


def _fmt(value):
    return "" if value is None else f"{round_half_up(value):.4f}"


def _row(label, kind, mset):
    return [label, kind] + [_fmt(getattr(mset, f)) for f in METRIC_FIELDS]


def emit_report(agg: Aggregated, out_dir, basename="report",
                formats=("csv", "json"), grouping=None):
    """Write per-video / per-category / overall tables.

    CSV blanks stay empty fields; JSON blanks are null. Values are
    rounded half-up to 4 decimals. Returns the written paths.
    """
    grouping = grouping or {}
    paths = []
    try:
        os.makedirs(out_dir, exist_ok=True)
        if "csv" in formats:
            path = os.path.join(out_dir, f"{basename}.csv")
            with open(path, "w", newline="") as fh:
                wr = csv.writer(fh)
                wr.writerow(["Name", "Kind"] + list(REPORT_COLUMNS))
                for video, mset in sorted(agg.per_video.items()):
                    wr.writerow(_row(video, "video", mset))
                for cat, mset in agg.per_category.items():
                    wr.writerow(_row(cat, "category", mset))
                wr.writerow(_row("average-over-categories", "overall",
                                 agg.overall_by_category))
                wr.writerow(_row("average-over-videos", "overall",
                                 agg.overall_by_video))
            paths.append(path)
        if "json" in formats:
            path = os.path.join(out_dir, f"{basename}.json")
            doc = {
                "videos": {v: _rounded(m) for v, m in
                           sorted(agg.per_video.items())},
                "categories": {c: _rounded(m) for c, m in
                               agg.per_category.items()},
                "overall": {
                    "average_over_categories":
                        _rounded(agg.overall_by_category),
                    "average_over_videos": _rounded(agg.overall_by_video),
                },
                "grouping": grouping,
            }
            with open(path, "w") as fh:
                json.dump(doc, fh, indent=2, sort_keys=True)
                fh.write("\n")
            paths.append(path)
    except OSError as exc:
        raise IoFailure(f"cannot write report under {out_dir}: {exc}") \
            from exc
    return paths


def _rounded(mset: MetricSet):
    return {name: round_half_up(value)
            for name, value in mset.as_dict().items()}


def parse_range_file(path):
    """Evaluation range file: one `first last` (inclusive) index pair."""
    try:
        with open(path) as fh:
            tokens = fh.read().replace(",", " ").split()
    except OSError as exc:
        raise UnreadableFile(f"cannot read {path}: {exc}") from exc
    nums = [t for t in tokens if t.lstrip("-").isdigit()]
    if len(nums) < 2:
        raise UnreadableFile(f"{path}: expected two frame indices")
    first, last = int(nums[0]), int(nums[1])
    if last < first:
        raise UnreadableFile(f"{path}: empty range {first}..{last}")
    return first, last


def parse_grouping_file(path):
    """Category map file: `video category` per line."""
    grouping = {}
    try:
        with open(path) as fh:
            for raw in fh:
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                parts = line.split()
                if len(parts) != 2:
                    raise UnreadableFile(
                        f"{path}: expected 'video category': {raw!r}")
                grouping[parts[0]] = parts[1]
    except OSError as exc:
        raise UnreadableFile(f"cannot read {path}: {exc}") from exc
    return grouping
