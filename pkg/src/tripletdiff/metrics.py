"""Average precision for the I/V/T/IV/IT/IVT families and ablation tables."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .joint import SpaceLayout
from .taxonomy import Taxonomy, build_dependency_matrices, pair_projection_matrix

FAMILIES = ("I", "V", "T", "IV", "IT", "IVT")
_COMPONENT = {"I": "instrument", "V": "verb", "T": "target"}


def average_precision(scores, labels) -> float:
    """Non-interpolated AP, sum over thresholds of (delta recall) * precision.

    Tied scores form one threshold, so the result does not depend on frame
    order. Returns NaN when there are no positives.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel() > 0
    if scores.shape != labels.shape:
        raise ValueError(f"scores {scores.shape} and labels {labels.shape} differ")
    npos = int(labels.sum())
    if npos == 0:
        return float("nan")
    order = np.argsort(-scores, kind="stable")
    s, y = scores[order], labels[order]
    tp = np.cumsum(y)
    fp = np.cumsum(~y)
    last = np.r_[s[1:] != s[:-1], True]
    tp, fp = tp[last], fp[last]
    recall = tp / npos
    precision = tp / (tp + fp)
    return float(np.sum(np.diff(recall, prepend=0.0) * precision))


def _max_project(triplet_scores: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Per-frame max over the triplets mapped to each row of ``m``; rows without triplets give 0."""
    out = np.zeros((triplet_scores.shape[0], m.shape[0]), dtype=np.float64)
    for r in range(m.shape[0]):
        cols = np.flatnonzero(m[r])
        if cols.size:
            out[:, r] = triplet_scores[:, cols].max(axis=1)
    return out


def family_scores(joint: np.ndarray, taxonomy: Taxonomy, layout: SpaceLayout) -> dict[str, np.ndarray]:
    joint = np.asarray(joint)
    if joint.ndim != 2 or joint.shape[1] != layout.width:
        raise ValueError(f"prediction width {joint.shape} does not match layout {layout.name} ({layout.width})")
    trip = joint[:, layout.span("triplet")].astype(np.float64)
    matrices = build_dependency_matrices(taxonomy)
    out = {"IVT": trip}
    for fam, comp in _COMPONENT.items():
        if layout.has(comp):
            out[fam] = joint[:, layout.span(comp)].astype(np.float64)
        else:
            out[fam] = _max_project(trip, matrices.for_component(comp))
    for fam in ("IV", "IT"):
        out[fam] = _max_project(trip, pair_projection_matrix(taxonomy, fam.lower()))
    return out


def family_labels(triplet: np.ndarray, taxonomy: Taxonomy) -> dict[str, np.ndarray]:
    triplet = (np.asarray(triplet) > 0).astype(np.float64)
    matrices = build_dependency_matrices(taxonomy)
    out = {"IVT": triplet}
    for fam, comp in _COMPONENT.items():
        out[fam] = (triplet @ matrices.for_component(comp).T > 0).astype(np.float64)
    for fam in ("IV", "IT"):
        out[fam] = (triplet @ pair_projection_matrix(taxonomy, fam.lower()).T > 0).astype(np.float64)
    return out


@dataclass
class FoldReport:
    per_class: dict[str, dict[int, float]]
    excluded: dict[str, list[int]]
    fold: int = 0
    seed: int = 0

    def mean(self, family: str) -> float:
        vals = list(self.per_class[family].values())
        return float(np.mean(vals)) if vals else float("nan")


@dataclass
class EvalReport:
    folds: list[FoldReport] = field(default_factory=list)

    def fold_means(self, family: str) -> dict[int, float]:
        """Seed-averaged mean AP per fold."""
        by_fold: dict[int, list[float]] = {}
        for f in self.folds:
            by_fold.setdefault(f.fold, []).append(f.mean(family))
        return {k: float(np.mean(v)) for k, v in sorted(by_fold.items())}

    def mean(self, family: str) -> float:
        return float(np.mean(list(self.fold_means(family).values())))

    def std(self, family: str) -> float:
        return float(np.std(list(self.fold_means(family).values())))


def evaluate(predictions: Mapping[int, np.ndarray], videos: Sequence, taxonomy: Taxonomy, layout: SpaceLayout,
             fold: int = 0, seed: int = 0) -> FoldReport:
    """Pool frames of all ``videos`` and score each family class by class.

    Classes without any positive frame are excluded from the mean and listed.
    """
    scores: dict[str, list[np.ndarray]] = {f: [] for f in FAMILIES}
    labels: dict[str, list[np.ndarray]] = {f: [] for f in FAMILIES}
    for v in videos:
        if v.id not in predictions:
            raise KeyError(f"no prediction for video {v.id}")
        pred = np.asarray(predictions[v.id])
        if pred.shape[0] != v.labels.shape[0]:
            raise ValueError(f"video {v.id}: {pred.shape[0]} predicted frames, {v.labels.shape[0]} labelled")
        fs, fl = family_scores(pred, taxonomy, layout), family_labels(v.labels, taxonomy)
        for fam in FAMILIES:
            scores[fam].append(fs[fam])
            labels[fam].append(fl[fam])
    per_class, excluded = {}, {}
    for fam in FAMILIES:
        s, y = np.concatenate(scores[fam]), np.concatenate(labels[fam])
        per_class[fam], excluded[fam] = {}, []
        for c in range(y.shape[1]):
            if y[:, c].any():
                per_class[fam][c] = average_precision(s[:, c], y[:, c])
            else:
                excluded[fam].append(c)
    return FoldReport(per_class, excluded, fold, seed)


# -- reports -------------------------------------------------------------------

def report_rows(run: str, report: EvalReport) -> list[tuple[str, int, int, str, str, float]]:
    rows = []
    for f in report.folds:
        for fam in FAMILIES:
            rows.append((run, f.fold, f.seed, fam, "mean", f.mean(fam)))
            for c, ap in f.per_class[fam].items():
                rows.append((run, f.fold, f.seed, fam, str(c), ap))
    return rows


def report_csv(runs: Mapping[str, EvalReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["run", "fold", "family", "class", "ap", "seed"])
    for name, rep in runs.items():
        for run, fold, seed, fam, cls, ap in report_rows(name, rep):
            w.writerow([run, fold, fam, cls, repr(float(ap)), seed])
    return buf.getvalue()


def parse_report_csv(text: str) -> dict[tuple[str, int, int, str, str], float]:
    reader = csv.DictReader(io.StringIO(text))
    return {(r["run"], int(r["fold"]), int(r["seed"]), r["family"], r["class"]): float(r["ap"]) for r in reader}


def format_table(runs: Mapping[str, EvalReport], title: str = "", label: str = "Run") -> str:
    header = [label] + [f"AP_{f}" for f in FAMILIES]
    body = [[name] + [f"{100 * r.mean(f):.1f}±{100 * r.std(f):.1f}" for f in FAMILIES] for name, r in runs.items()]
    widths = [max(len(row[i]) for row in [header] + body) for i in range(len(header))]
    lines = [title] if title else []
    fmt = lambda row: "  ".join(cell.ljust(w) if i == 0 else cell.rjust(w) for i, (cell, w) in enumerate(zip(row, widths)))
    lines.append(fmt(header))
    lines.append("-" * len(lines[-1]))
    lines.extend(fmt(row) for row in body)
    return "\n".join(lines) + "\n"


AXIS_TITLES = {
    "layout": "Joint-space combinations",
    "omega": "Association guidance scale",
    "causality": "Causal vs acausal model",
    "steps": "Inference steps",
}


def ablation_report(runs: Mapping[str, EvalReport], axis: str, order: Sequence[str] | None = None) -> tuple[str, str]:
    """Aligned text table and long-format CSV for one ablation axis, rows in ``order``."""
    order = list(runs) if order is None else list(order)
    missing = [name for name in order if name not in runs]
    if missing:
        raise KeyError(f"missing runs {missing}")
    ordered = {name: runs[name] for name in order}
    return format_table(ordered, AXIS_TITLES.get(axis, axis), axis), report_csv(ordered)
