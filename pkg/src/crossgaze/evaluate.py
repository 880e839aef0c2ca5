"""Metrics, baselines, and the evaluation/ablation/sweep runner.

AUC treats the single density cell containing the true gaze point as the
positive and every other cell as a negative; it equals the area under the ROC
curve swept over the cell confidences, with tied confidences contributing the
trapezoidal average. Average precision sums precision over recall steps taken
at each distinct score threshold, so tied scores share one operating point.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InputError, MetricError, StateError
from .model import CANVAS_SIDE, GazePrediction, density_mode

BASELINE_SIGMA = 0.1   # width of the point-baseline density, image units


def _cell_of(point) -> tuple:
    point = np.asarray(point, dtype=np.float64)
    if np.any(point < 0.0) or np.any(point > 1.0):
        raise InputError(f"gaze point {point} outside the unit square")
    col = min(int(point[0] * CANVAS_SIDE), CANVAS_SIDE - 1)
    row = min(int(point[1] * CANVAS_SIDE), CANVAS_SIDE - 1)
    return row, col


def auc(density: np.ndarray, point) -> float:
    """Rank of the true cell's confidence among all other cells, tie-averaged."""
    density = np.asarray(density, dtype=np.float64)
    row, col = _cell_of(point)
    positive = density[row, col]
    others = np.delete(density.reshape(-1), row * CANVAS_SIDE + col)
    below = np.count_nonzero(others < positive)
    ties = np.count_nonzero(others == positive)
    return (below + 0.5 * ties) / others.size


def l2(predicted, truth) -> float:
    """Euclidean distance between two points in the unit square."""
    predicted = np.asarray(predicted, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    return float(np.sqrt(np.sum((predicted - truth) ** 2)))


def average_precision(scores, labels) -> float:
    """Area under the precision-recall curve over distinct score thresholds.

    Sorting is stable in the input order; samples with equal scores fall into
    one threshold step, so a constant scorer gets the positive rate.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise MetricError(f"scores {scores.shape} and labels {labels.shape} must be equal-length vectors")
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == len(labels):
        raise MetricError("average precision needs at least one positive and one negative")
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    tp = np.cumsum(labels[order])
    ranks = np.arange(1, len(scores) + 1)
    # last index of each distinct-score group marks one threshold
    boundary = np.ones(len(scores), dtype=bool)
    boundary[:-1] = sorted_scores[:-1] != sorted_scores[1:]
    recall = tp[boundary] / n_pos
    precision = tp[boundary] / ranks[boundary]
    prev = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - prev) * precision))


def gaussian_density(point, sigma: float = BASELINE_SIGMA) -> np.ndarray:
    """Normalized isotropic bump over the canvas cells, centered at ``point``."""
    centers = (2.0 * np.arange(CANVAS_SIDE) + 1.0) / (2.0 * CANVAS_SIDE)
    dx = centers[None, :] - point[0]
    dy = centers[:, None] - point[1]
    weights = np.exp(-(dx ** 2 + dy ** 2) / (2.0 * sigma ** 2))
    return weights / weights.sum()


def _point_prediction(point) -> GazePrediction:
    point = np.asarray(point, dtype=np.float64)
    return GazePrediction(density=gaussian_density(point), point=point,
                          gamma=1.0, no_gaze_score=0.0)


class CenterBaseline:
    """Always predicts the view center."""

    name = "center"

    def predict(self, sample) -> GazePrediction:
        return _point_prediction(np.array([0.5, 0.5]))


class RandomBaseline:
    """Uniform random point per call; reproducible from its seed."""

    name = "random"

    def __init__(self, seed: int = 0):
        self._rng = np.random.default_rng(seed)

    def predict(self, sample) -> GazePrediction:
        return _point_prediction(self._rng.uniform(0.0, 1.0, 2))


class FixedBiasBaseline:
    """Mean training gaze per quantized head cell; empty cells use the global mean."""

    name = "fixed_bias"
    GRID = 13

    def __init__(self):
        self._table = None

    def fit(self, samples):
        sums = np.zeros((self.GRID, self.GRID, 2))
        counts = np.zeros((self.GRID, self.GRID))
        total = np.zeros(2)
        n = 0
        for s in samples:
            if s.gaze_point is None:
                continue
            r, c = self._head_cell(s.eye_position)
            sums[r, c] += s.gaze_point
            counts[r, c] += 1
            total += s.gaze_point
            n += 1
        if n == 0:
            raise ConfigError("fixed-bias baseline needs at least one gaze-labeled sample")
        global_mean = total / n
        self._table = np.where(counts[..., None] > 0,
                               sums / np.maximum(counts[..., None], 1.0), global_mean)
        return self

    def _head_cell(self, eye):
        c = min(int(eye[0] * self.GRID), self.GRID - 1)
        r = min(int(eye[1] * self.GRID), self.GRID - 1)
        return r, c

    def predict(self, sample) -> GazePrediction:
        if self._table is None:
            raise StateError("fixed-bias baseline used before fit()")
        r, c = self._head_cell(sample.eye_position)
        return _point_prediction(self._table[r, c].copy())


def baseline_predict(kind: str, sample, *, rng_seed: int = 0, fitted=None) -> GazePrediction:
    """One-shot dispatcher over the three baselines."""
    if kind == "center":
        return CenterBaseline().predict(sample)
    if kind == "random":
        return RandomBaseline(rng_seed).predict(sample)
    if kind == "fixed_bias":
        if fitted is None:
            raise StateError("fixed_bias needs a fitted FixedBiasBaseline via fitted=")
        return fitted.predict(sample)
    raise ConfigError(f"unknown baseline {kind!r}; choose center, random or fixed_bias")


# --- report runner ----------------------------------------------------------------------

SUBSET_ANGLE_DEG = 30.0
SWEEP_BIN_DEG = 15.0


@dataclass
class EvalRow:
    name: str
    auc: float
    l2: float
    auc_far: float       # subset with |camera angle| >= SUBSET_ANGLE_DEG
    l2_far: float
    ap: float            # nan when undefined
    excluded: int        # samples without a gaze label


@dataclass
class SweepRow:
    name: str
    lo_deg: float
    hi_deg: float
    auc: float
    l2: float
    count: int


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)
    sweep: list = field(default_factory=list)

    def row(self, name: str) -> EvalRow:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def sweep_rows(self, name: str):
        return [r for r in self.sweep if r.name == name]

    def to_csv(self) -> str:
        lines = ["name,auc,l2,auc_far,l2_far,ap,excluded"]
        for r in self.rows:
            lines.append(f"{r.name},{r.auc:.6f},{r.l2:.6f},{r.auc_far:.6f},"
                         f"{r.l2_far:.6f},{r.ap:.6f},{r.excluded}")
        return "\n".join(lines) + "\n"

    def sweep_to_csv(self) -> str:
        lines = ["name,lo_deg,hi_deg,auc,l2,count"]
        for r in self.sweep:
            lines.append(f"{r.name},{r.lo_deg:g},{r.hi_deg:g},{r.auc:.6f},"
                         f"{r.l2:.6f},{r.count}")
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        head = f"{'model':<22}{'AUC':>8}{'L2':>8}{'AUC>=30':>10}{'L2>=30':>10}{'AP':>8}{'excl':>6}"
        lines = [head, "-" * len(head)]
        for r in self.rows:
            lines.append(f"{r.name:<22}{r.auc:>8.3f}{r.l2:>8.3f}{r.auc_far:>10.3f}"
                         f"{r.l2_far:>10.3f}{r.ap:>8.3f}{r.excluded:>6d}")
        if self.sweep:
            lines.append("")
            lines.append(f"{'model':<22}{'bucket':>12}{'AUC':>8}{'L2':>8}{'count':>7}")
            for r in self.sweep:
                bucket = f"{r.lo_deg:g}-{r.hi_deg:g} deg"
                lines.append(f"{r.name:<22}{bucket:>12}{r.auc:>8.3f}{r.l2:>8.3f}{r.count:>7d}")
        return "\n".join(lines) + "\n"


def _mean(values):
    return float(np.mean(values)) if len(values) else float("nan")


def run_eval(predictors, samples, sweep: bool = True) -> EvalReport:
    """Evaluate named predictors over a dataset.

    ``predictors`` maps a row name to any object with ``predict(sample) ->
    GazePrediction``. Gaze metrics skip unlabeled samples (counted in
    ``excluded``); AP over the same-scene confidences is reported when both
    label classes occur. The sweep buckets |camera angle| into 15-degree bins.
    """
    if len(samples) == 0:
        raise ConfigError("evaluation needs a non-empty dataset")
    report = EvalReport()
    angles = np.array([abs(np.rad2deg(s.camera_angle)) for s in samples])
    labels = np.array([not s.same_scene for s in samples])
    edges = np.arange(0.0, 61.0, SWEEP_BIN_DEG)
    for name, predictor in predictors.items():
        if hasattr(predictor, "predict_many"):
            preds = predictor.predict_many(samples)
        else:
            preds = [predictor.predict(s) for s in samples]
        aucs = np.full(len(samples), np.nan)
        l2s = np.full(len(samples), np.nan)
        for i, (pred, s) in enumerate(zip(preds, samples)):
            if s.gaze_point is not None:
                aucs[i] = auc(pred.density, s.gaze_point)
                l2s[i] = l2(pred.point, s.gaze_point)
        labeled = ~np.isnan(aucs)
        far = labeled & (angles >= SUBSET_ANGLE_DEG)
        scores = np.array([1.0 - p.gamma for p in preds])
        ap = float("nan")
        if 0 < labels.sum() < len(labels):
            ap = average_precision(scores, labels)
        report.rows.append(EvalRow(
            name=name,
            auc=_mean(aucs[labeled]), l2=_mean(l2s[labeled]),
            auc_far=_mean(aucs[far]), l2_far=_mean(l2s[far]),
            ap=ap, excluded=int(np.count_nonzero(~labeled))))
        if sweep:
            for lo in edges[:-1]:
                hi = lo + SWEEP_BIN_DEG
                mask = labeled & (angles >= lo) & (angles < hi if hi < 60.0 else angles <= hi)
                report.sweep.append(SweepRow(
                    name=name, lo_deg=float(lo), hi_deg=float(hi),
                    auc=_mean(aucs[mask]), l2=_mean(l2s[mask]),
                    count=int(np.count_nonzero(mask))))
    return report


class ModelPredictor:
    """Adapter giving a GazeModel the predictor protocol with batched internals."""

    def __init__(self, model, chunk: int = 256):
        self.model = model
        self.chunk = chunk

    def predict(self, sample) -> GazePrediction:
        return self.model.predict(sample)

    def predict_many(self, samples):
        preds = []
        for lo in range(0, len(samples), self.chunk):
            part = samples[lo:lo + self.chunk]
            density, no_gaze, gamma = self.model.predict_batch(
                np.stack([s.source_view for s in part]),
                np.stack([s.target_view for s in part]),
                np.stack([s.head_crop for s in part]),
                np.stack([s.eye_position for s in part]))
            for i in range(len(part)):
                preds.append(GazePrediction(
                    density=density[i], point=density_mode(density[i]),
                    gamma=float(gamma[i]), no_gaze_score=float(no_gaze[i])))
        return preds
