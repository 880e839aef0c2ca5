"""Losses, the training loop, and the finite-difference gradient checker.

The gaze loss is a sum of five cross-entropies, one per shifted classification
grid; a point target maps to the grid cell under each grid's shift (clamped
into the grid when the shift pushes it out) and a missing target maps to the
no-gaze class. The scene-change extension adds a binary cross-entropy on gamma,
mixed in with a configurable weight.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InputError, TrainingDiverged
from .evaluate import auc, average_precision, l2
from .model import (CANVAS_SIDE, GRID_SHIFTS, GazeModel, ModelConfig,
                    N_CLASSES, N_GRIDS, NO_GAZE_CLASS, combine_grids,
                    density_mode, tiny_config)
from .nn import make_optimizer, softmax


@dataclass
class TrainConfig:
    learning_rate: float = 0.0015
    momentum: float = 0.9
    batch_size: int = 64
    epochs: int = 14
    scene_loss_weight: float = 1.0
    kappa: float = 10.0
    mask_sharpness: float = 50.0
    family: str = "vertical_rot_trans"
    k: int = 13
    seed: int = 0
    extension: bool = False
    optimizer: str = "adam"
    val_fraction: float = 0.1
    patience: int = 10
    augment_flips: bool = True
    log_eval_samples: int = 500
    image_side: int = 32
    head_side: int = 15

    def validate(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("batch_size and epochs must be positive")
        if self.scene_loss_weight < 0:
            raise ConfigError(f"scene_loss_weight must be >= 0, got {self.scene_loss_weight}")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigError(f"val_fraction must be in [0, 1), got {self.val_fraction}")
        return self


def build_model(cfg: TrainConfig, model_seed: int | None = None) -> GazeModel:
    """Model whose shape fields come from the training configuration."""
    return GazeModel(ModelConfig(
        k=cfg.k, kappa=cfg.kappa, mask_sharpness=cfg.mask_sharpness,
        family=cfg.family, image_side=cfg.image_side, head_side=cfg.head_side,
        extension=cfg.extension,
        seed=cfg.seed if model_seed is None else model_seed))


# --- losses ------------------------------------------------------------------------

def grid_targets(point) -> np.ndarray:
    """Per-grid class index (length 5) for a gaze point, or all no-gaze for None."""
    if point is None:
        return np.full(N_GRIDS, NO_GAZE_CLASS, dtype=np.int64)
    point = np.asarray(point, dtype=np.float64)
    if np.any(point < 0.0) or np.any(point > 1.0):
        raise InputError(f"gaze point {point} outside the unit square")
    col = min(int(point[0] * CANVAS_SIDE), CANVAS_SIDE - 1)
    row = min(int(point[1] * CANVAS_SIDE), CANVAS_SIDE - 1)
    out = np.empty(N_GRIDS, dtype=np.int64)
    for g, (dr, dc) in enumerate(GRID_SHIFTS):
        gi = min(max((row - dr) // 3, 0), 4)
        gj = min(max((col - dc) // 3, 0), 4)
        out[g] = gi * 5 + gj
    return out


def _grids_ce_per_sample(logits, targets) -> np.ndarray:
    """Sum over the five grids of softmax cross-entropy, per sample."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1))
    picked = np.take_along_axis(shifted, targets[:, :, None], axis=-1)[:, :, 0]
    return (lse - picked).sum(axis=1)


def _grids_ce(logits, targets, weights):
    """Weighted-mean grid loss over a batch and its logit gradient."""
    n = logits.shape[0]
    denom = max(float(weights.sum()), 1.0)
    loss = float((_grids_ce_per_sample(logits, targets) * weights).sum() / denom)
    dlogits = softmax(logits, axis=-1)
    rows = np.arange(n)[:, None]
    grid_idx = np.arange(N_GRIDS)[None, :]
    dlogits[rows, grid_idx, targets] -= 1.0
    dlogits *= (weights / denom)[:, None, None]
    return loss, dlogits


def shifted_grids_loss(grid_logits, point) -> float:
    """Sum of the five per-grid cross-entropies for one sample."""
    logits = np.asarray(grid_logits, dtype=np.float64)[None]
    targets = grid_targets(point)[None]
    return float(_grids_ce_per_sample(logits, targets)[0])


GAMMA_CLIP = 1e-7


def scene_change_loss(gamma: float, same_scene: bool) -> float:
    """Binary cross-entropy on the same-scene confidence; gamma is clamped."""
    g = min(max(float(gamma), GAMMA_CLIP), 1.0 - GAMMA_CLIP)
    return float(-np.log(g) if same_scene else -np.log(1.0 - g))


def _scene_bce(gamma, same):
    chosen = np.where(same, gamma, 1.0 - gamma)
    return -np.log(np.clip(chosen, GAMMA_CLIP, None))


def total_loss(model: GazeModel, sample, cfg: TrainConfig) -> float:
    """Gaze loss plus the weighted scene term (extension only) for one sample."""
    state = model.forward(sample.source_view[None], sample.target_view[None],
                          sample.head_crop[None], sample.eye_position[None])
    if sample.gaze_point is None and not cfg.extension:
        loss = 0.0
    else:
        loss = shifted_grids_loss(state.logits[0], sample.gaze_point)
    if cfg.extension:
        loss += cfg.scene_loss_weight * scene_change_loss(float(state.gamma[0]),
                                                          sample.same_scene)
    return loss


# --- training ------------------------------------------------------------------------

@dataclass
class EpochMetrics:
    epoch: int
    split: str
    loss: float
    auc: float
    l2: float
    ap: float  # nan when the extension is off or labels are one-sided

    def as_csv_row(self) -> str:
        return (f"{self.epoch},{self.split},{self.loss:.6f},"
                f"{self.auc:.6f},{self.l2:.6f},{self.ap:.6f}")


METRICS_CSV_HEADER = "epoch,split,loss,auc,l2,ap"


def _stack_samples(samples):
    return {
        "xs": np.stack([s.source_view for s in samples]),
        "xt": np.stack([s.target_view for s in samples]),
        "xh": np.stack([s.head_crop for s in samples]),
        "ue": np.stack([s.eye_position for s in samples]),
        "y": np.stack([s.gaze_point if s.gaze_point is not None
                       else np.array([-1.0, -1.0]) for s in samples]),
        "has_gaze": np.array([s.gaze_point is not None for s in samples]),
        "same": np.array([s.same_scene for s in samples]),
    }


def _batch_arrays(data, idx, flip_mask):
    xs = data["xs"][idx]
    xt = data["xt"][idx]
    xh = data["xh"][idx]
    ue = data["ue"][idx].copy()
    y = data["y"][idx].copy()
    if flip_mask.any():
        xs[flip_mask] = xs[flip_mask][..., ::-1]
        xt[flip_mask] = xt[flip_mask][..., ::-1]
        xh[flip_mask] = xh[flip_mask][..., ::-1]
        ue[flip_mask, 0] = 1.0 - ue[flip_mask, 0]
        gaze = data["has_gaze"][idx] & flip_mask
        y[gaze, 0] = 1.0 - y[gaze, 0]
    return xs, xt, xh, ue, y


def _targets_from(y, has_gaze):
    targets = np.full((len(y), N_GRIDS), NO_GAZE_CLASS, dtype=np.int64)
    for i in np.flatnonzero(has_gaze):
        targets[i] = grid_targets(y[i])
    return targets


def _first_nonfinite(model: GazeModel, state) -> str:
    for name, arr in (("saliency map", state.saliency), ("cone map", state.cone_map),
                      ("fused map", state.fused), ("grid logits", state.logits),
                      ("gamma", state.gamma)):
        if not np.all(np.isfinite(arr)):
            return name
    for p in model.parameters():
        if not np.all(np.isfinite(p.value)):
            return f"parameter {p.name}"
        if not np.all(np.isfinite(p.grad)):
            return f"gradient of {p.name}"
    return "loss"


def _evaluate_split(model, data, indices, cfg, epoch, split,
                    mean_loss=None, chunk=256) -> EpochMetrics:
    aucs, l2s = [], []
    gammas = np.zeros(len(indices))
    loss_sum, loss_weight = 0.0, 0.0
    for lo in range(0, len(indices), chunk):
        idx = indices[lo:lo + chunk]
        state = model.forward(data["xs"][idx], data["xt"][idx],
                              data["xh"][idx], data["ue"][idx])
        has_gaze = data["has_gaze"][idx]
        y = data["y"][idx]
        if mean_loss is None:
            targets = _targets_from(y, has_gaze)
            weights = (has_gaze | cfg.extension).astype(np.float64)
            loss_sum += float((_grids_ce_per_sample(state.logits, targets) * weights).sum())
            if cfg.extension:
                loss_sum += cfg.scene_loss_weight * float(
                    _scene_bce(state.gamma, data["same"][idx]).sum())
                loss_weight += len(idx)
            else:
                loss_weight += float(weights.sum())
        density, _ = combine_grids(softmax(state.logits, axis=-1))
        gammas[lo:lo + len(idx)] = state.gamma
        for i in np.flatnonzero(has_gaze):
            aucs.append(auc(density[i], y[i]))
            l2s.append(l2(density_mode(density[i]), y[i]))
    if mean_loss is None:
        mean_loss = loss_sum / max(loss_weight, 1.0)
    labels = ~data["same"][indices]
    ap = float("nan")
    if cfg.extension and 0 < labels.sum() < len(labels):
        ap = average_precision(1.0 - gammas, labels)
    return EpochMetrics(epoch=epoch, split=split, loss=float(mean_loss),
                        auc=float(np.mean(aucs)) if aucs else float("nan"),
                        l2=float(np.mean(l2s)) if l2s else float("nan"),
                        ap=ap)


def train(model: GazeModel, samples, cfg: TrainConfig, val_samples=None):
    """Minibatch descent on the total loss; returns per-epoch metric rows.

    Deterministic for a fixed seed. Aborts with TrainingDiverged naming the
    first non-finite tensor if the loss stops being finite. Stops early when
    the validation AUC has not improved for ``cfg.patience`` epochs.
    """
    cfg.validate()
    if len(samples) == 0:
        raise ConfigError("training needs a non-empty dataset")
    rng = np.random.default_rng((cfg.seed, 0x5EED))
    samples = list(samples)
    if val_samples is None:
        n_val = int(len(samples) * cfg.val_fraction)
        order = rng.permutation(len(samples))
        val_samples = [samples[i] for i in order[:n_val]]
        samples = [samples[i] for i in order[n_val:]]
    if not samples:
        raise ConfigError("validation split consumed every sample")

    data = _stack_samples(samples)
    val_data = _stack_samples(val_samples) if val_samples else None
    opt = make_optimizer(cfg.optimizer, model.parameters(), cfg.learning_rate, cfg.momentum)
    history = []
    best_val_auc = -np.inf
    stale = 0
    n = len(samples)
    train_eval_idx = np.arange(min(cfg.log_eval_samples, n))
    val_eval_idx = np.arange(min(cfg.log_eval_samples, len(val_samples))) if val_samples else None
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        flip = rng.random(n) < 0.5 if cfg.augment_flips else np.zeros(n, bool)
        epoch_loss = 0.0
        batches = 0
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            xs, xt, xh, ue, y = _batch_arrays(data, idx, flip[lo:lo + cfg.batch_size])
            has_gaze = data["has_gaze"][idx]
            same = data["same"][idx]

            state = model.forward(xs, xt, xh, ue)
            targets = _targets_from(y, has_gaze)
            weights = (has_gaze | cfg.extension).astype(np.float64)
            loss, dlogits = _grids_ce(state.logits, targets, weights)
            dgamma_logit = None
            if cfg.extension:
                loss += cfg.scene_loss_weight * float(np.mean(_scene_bce(state.gamma, same)))
                dgamma_logit = cfg.scene_loss_weight * (
                    state.gamma - same.astype(np.float64)) / len(idx)
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}; first bad tensor: "
                    f"{_first_nonfinite(model, state)}")
            model.backward(state, dlogits, dgamma_logit)
            opt.step()
            epoch_loss += loss
            batches += 1

        history.append(_evaluate_split(model, data, train_eval_idx, cfg, epoch, "train",
                                       mean_loss=epoch_loss / max(batches, 1)))
        if val_data is not None:
            row = _evaluate_split(model, val_data, val_eval_idx, cfg, epoch, "val")
            history.append(row)
            if np.isfinite(row.auc) and row.auc > best_val_auc + 1e-6:
                best_val_auc = row.auc
                stale = 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    break
    return history


def write_metrics_csv(path, history):
    with open(path, "w") as f:
        f.write(METRICS_CSV_HEADER + "\n")
        for row in history:
            f.write(row.as_csv_row() + "\n")


# --- gradient checking -----------------------------------------------------------------

@dataclass
class GradCheckRow:
    name: str
    rel_error: float


@dataclass
class GradCheckReport:
    component: str
    seed: int
    tolerance: float
    rows: list = field(default_factory=list)

    @property
    def max_rel_error(self) -> float:
        return max((r.rel_error for r in self.rows), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def table(self) -> str:
        width = max((len(r.name) for r in self.rows), default=4)
        lines = [f"{'parameter':<{width}}  rel_error"]
        lines += [f"{r.name:<{width}}  {r.rel_error:.3e}" for r in self.rows]
        lines.append(f"max rel error {self.max_rel_error:.3e} "
                     f"(tolerance {self.tolerance:.0e}): "
                     + ("PASS" if self.passed else "FAIL"))
        return "\n".join(lines)


GRADCHECK_TOLERANCES = {
    "dense": 1e-6,
    "conv": 1e-6,
    "geometry": 1e-4,
    "model": 1e-3,
}

_FD_STEPS = {"dense": 1e-5, "conv": 1e-5, "geometry": 1e-5, "model": 1e-4}


def relative_error(analytic: float, numeric: float) -> float:
    scale = max(abs(analytic), abs(numeric), 1e-8)
    return abs(analytic - numeric) / scale


def central_difference(f, x: np.ndarray, h: float) -> np.ndarray:
    """Two-sided finite differences of a scalar function, one entry at a time."""
    grad = np.zeros_like(x)
    for i in range(x.size):
        keep = x.flat[i]
        x.flat[i] = keep + h
        up = f()
        x.flat[i] = keep - h
        down = f()
        x.flat[i] = keep
        grad.flat[i] = (up - down) / (2.0 * h)
    return grad


def _max_rel(analytic, numeric) -> float:
    """Per-tensor relative error: ||a - n||_inf over the floored gradient scale.

    Comparing entry by entry is ill-posed for exactly-zero partials (a clamped
    aperture, a masked-out cell), where central differences measure only
    roundoff noise; the tensor-level scale keeps the comparison meaningful.
    """
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    scale = max(np.abs(a).max(initial=0.0), np.abs(n).max(initial=0.0), 1e-8)
    return float(np.abs(a - n).max(initial=0.0) / scale)


def _check_dense(seed, h):
    from .nn import Dense
    rng = np.random.default_rng((seed, 1))
    layer = Dense(4, 3, rng, name="dense")
    x = rng.normal(size=(2, 4))
    w_out = rng.normal(size=(2, 3))

    def value():
        return float(np.sum(layer.forward(x) * w_out))

    value()
    for p in layer.params():
        p.zero_grad()
    dx = layer.backward(w_out)
    rows = [GradCheckRow("input", _max_rel(dx, central_difference(value, x, h)))]
    for p in layer.params():
        rows.append(GradCheckRow(p.name, _max_rel(p.grad, central_difference(value, p.value, h))))
    return rows


def _check_conv(seed, h):
    from .nn import Conv2d
    rng = np.random.default_rng((seed, 2))
    layer = Conv2d(2, 3, 3, rng, stride=1, pad=1, name="conv")
    x = rng.normal(size=(2, 2, 5, 5))
    w_out = rng.normal(size=(2, 3, 5, 5))

    def value():
        return float(np.sum(layer.forward(x) * w_out))

    value()
    for p in layer.params():
        p.zero_grad()
    dx = layer.backward(w_out)
    rows = [GradCheckRow("input", _max_rel(dx, central_difference(value, x, h)))]
    for p in layer.params():
        rows.append(GradCheckRow(p.name, _max_rel(p.grad, central_difference(value, p.value, h))))
    return rows


def _check_geometry(seed, h):
    from .geometry import (family_matrices, intersect_forward_raw,
                           intersect_map_backward, make_cone)
    rng = np.random.default_rng((seed, 3))
    side = 7
    eye = rng.uniform(-0.4, 0.4, 2)
    v_raw = rng.normal(size=3) + np.array([0.0, 0.0, 1.5])
    alpha_box = np.array([rng.normal(scale=0.5)])
    # keep the ball radius near the plane distance so its mask stays active
    r_box = np.array([rng.uniform(0.3, 1.2)])
    family = "vertical_rot_trans"
    theta = np.concatenate([rng.normal(scale=0.3, size=1),
                            rng.uniform(-0.2, 0.2, 2), rng.uniform(0.8, 1.2, 1)])
    upstream = rng.normal(size=(side, side))

    def value():
        cone = make_cone(eye, v_raw, float(alpha_box[0]), float(r_box[0]))
        linear, translation = family_matrices(family, theta[None, :])
        maps, _ = intersect_forward_raw(
            cone.apex[None], cone.axis[None], np.array([cone.aperture]),
            np.array([cone.head_radius]), linear[0][:, 0][None],
            linear[0][:, 1][None], translation, side)
        return float(np.sum(maps[0] * upstream))

    grads = intersect_map_backward(eye, v_raw, float(alpha_box[0]), float(r_box[0]),
                                   family, theta, side, upstream)
    return [
        GradCheckRow("eye", _max_rel(grads["eye"], central_difference(value, eye, h))),
        GradCheckRow("v_raw", _max_rel(grads["v_raw"], central_difference(value, v_raw, h))),
        GradCheckRow("alpha_raw", _max_rel(np.array([grads["alpha_raw"]]),
                                           central_difference(value, alpha_box, h))),
        GradCheckRow("r_raw", _max_rel(np.array([grads["r_raw"]]),
                                       central_difference(value, r_box, h))),
        GradCheckRow("theta", _max_rel(grads["theta"], central_difference(value, theta, h))),
    ]


def _relu_kink_clearance(model: GazeModel) -> float:
    """Smallest |pre-activation| over every rectifier after the last forward."""
    from .nn import Relu
    stacks = (model.saliency.stack.layers + model.cone_net.stack.layers
              + model.transform.encoder.layers + model.transform.head.layers)
    gaps = [np.abs(layer._x).min() for layer in stacks
            if isinstance(layer, Relu) and layer._x is not None]
    return float(min(gaps)) if gaps else np.inf


def _check_model(seed, h):
    cfg = tiny_config(seed=seed, extension=True)
    model = GazeModel(cfg)
    scene_weight = 1.0
    n = 3
    # central differences assume local smoothness: redraw inputs until every
    # rectifier pre-activation clears the step size
    for attempt in range(50):
        rng = np.random.default_rng((seed, 4, attempt))
        xs = rng.uniform(0.0, 1.0, (n, cfg.image_channels, cfg.image_side, cfg.image_side))
        xt = rng.uniform(0.0, 1.0, (n, cfg.image_channels, cfg.image_side, cfg.image_side))
        xh = rng.uniform(0.0, 1.0, (n, cfg.image_channels, cfg.head_side, cfg.head_side))
        ue = rng.uniform(0.2, 0.8, (n, 2))
        model.forward(xs, xt, xh, ue)
        if _relu_kink_clearance(model) > 10.0 * h:
            break
    y = rng.uniform(0.05, 0.95, (n, 2))
    has_gaze = np.array([True, True, False])
    same = np.array([True, False, True])
    targets = _targets_from(y, has_gaze)
    weights = np.ones(n)

    def value():
        state = model.forward(xs, xt, xh, ue)
        loss = float((_grids_ce_per_sample(state.logits, targets) * weights).sum() / n)
        loss += scene_weight * float(np.mean(_scene_bce(state.gamma, same)))
        return loss

    state = model.forward(xs, xt, xh, ue)
    _, dlogits = _grids_ce(state.logits, targets, weights)
    dgamma = scene_weight * (state.gamma - same.astype(np.float64)) / n
    for p in model.parameters():
        p.zero_grad()
    model.backward(state, dlogits, dgamma)
    rows = []
    for p in model.parameters():
        numeric = central_difference(value, p.value, h)
        rows.append(GradCheckRow(p.name, _max_rel(p.grad, numeric)))
    return rows


_COMPONENT_CHECKS = {
    "dense": _check_dense,
    "conv": _check_conv,
    "geometry": _check_geometry,
    "model": _check_model,
}


def gradcheck(component: str, seed: int = 0) -> GradCheckReport:
    """Compare analytic gradients against central differences.

    Relative errors use a denominator floored at 1e-8. Components: 'dense',
    'conv', 'geometry' (the soft intersection against every raw input), and
    'model' (the full tiny model's training loss against every parameter).
    """
    if component not in _COMPONENT_CHECKS:
        raise ConfigError(f"unknown gradcheck component {component!r}; "
                          f"choose from {sorted(_COMPONENT_CHECKS)}")
    rows = _COMPONENT_CHECKS[component](seed, _FD_STEPS[component])
    return GradCheckReport(component=component, seed=seed,
                           tolerance=GRADCHECK_TOLERANCES[component], rows=rows)


def gradcheck_all(seed: int = 0):
    return [gradcheck(name, seed) for name in _COMPONENT_CHECKS]
