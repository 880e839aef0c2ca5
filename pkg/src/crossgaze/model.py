"""Three-pathway gaze predictor with geometric fusion.

The saliency pathway maps the target view to a k x k map S, the cone pathway
maps the head crop and eye position to gaze-cone parameters, and the transform
pathway maps both views to the parameters of an affine view transform plus an
optional same-scene confidence gamma. The cone is intersected with the
transformed view plane to give a k x k visibility map G, fused as S * (gamma*G),
and a bank of five shifted 5x5 classification grids turns the fused map into a
15 x 15 density with an extra no-gaze class.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import io as gio
from .errors import ConfigError, DegenerateDirectionError, ShapeError
from .geometry import (APERTURE_MAX, APERTURE_MIN, DIRECTION_EPS,
                       FAMILY_PARAM_COUNTS, Cone, cone_raw_backward,
                       family_matrices, family_matrices_backward,
                       intersect_backward_raw, intersect_forward_raw,
                       make_cone, params_to_affine)
from .nn import (Conv2d, Dense, MaxPool2x2, Relu, Sequential, Sigmoid,
                 sigmoid, softmax, softplus)

FAMILIES = ("identity", "translation", "rotation_x", "vertical_rot_trans",
            "rot3_trans", "full_affine")

N_GRIDS = 5
GRID_SIDE = 5
CANVAS_SIDE = 15
N_CLASSES = 26            # 25 grid cells plus the no-gaze class
NO_GAZE_CLASS = 25
NO_GAZE_LOGIT = -1e30     # mask value when the scene-change extension is off

# canvas-cell offsets of the five grids: one centered, four shifted by one cell
GRID_SHIFTS = ((0, 0), (-1, 0), (1, 0), (0, -1), (0, 1))

# transform-head bias entries giving each family a sane starting pose: the
# identity rotation one viewing distance in front of the source plane
_VIEW_DISTANCE = 1.2
_CANONICAL_THETA = {
    "identity": (),
    "translation": ((2, _VIEW_DISTANCE),),
    "rotation_x": (),
    "vertical_rot_trans": ((3, _VIEW_DISTANCE),),
    "rot3_trans": ((5, _VIEW_DISTANCE),),
    "full_affine": ((0, 1.0), (4, 1.0), (8, 1.0), (11, _VIEW_DISTANCE)),
}


@dataclass
class ModelConfig:
    k: int = 13
    kappa: float = 10.0
    mask_sharpness: float = 50.0
    family: str = "vertical_rot_trans"
    image_side: int = 32
    image_channels: int = 3
    head_side: int = 15
    saliency_channels: tuple = (8, 8)
    cone_hidden: tuple = (64, 32)
    transform_channels: int = 8
    transform_hidden: tuple = (64, 32)
    extension: bool = False
    output_mode: str = "shifted_grids"   # or "fused_product"
    seed: int = 0

    def validate(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}; choose from {FAMILIES}")
        if self.k < 2:
            raise ConfigError(f"map side k must be >= 2, got {self.k}")
        if self.kappa <= 0 or self.mask_sharpness <= 0:
            raise ConfigError("sharpness temperatures must be positive")
        if self.output_mode not in ("shifted_grids", "fused_product"):
            raise ConfigError(f"unknown output mode {self.output_mode!r}")
        return self


def tiny_config(seed: int = 0, extension: bool = True) -> ModelConfig:
    """Small fixed configuration used for exhaustive gradient checks."""
    return ModelConfig(k=5, image_side=8, head_side=7,
                       saliency_channels=(3, 3), cone_hidden=(12, 8),
                       transform_channels=3, transform_hidden=(12, 8),
                       extension=extension, seed=seed)


def _saliency_plan(side: int, k: int):
    """Two-conv spatial plan ending exactly at k x k before the 1x1 merge."""
    for kernel1, stride, pad in ((5, 2, 1), (3, 1, 0)):
        if kernel1 > side + 2 * pad:
            continue
        side1 = (side + 2 * pad - kernel1) // stride + 1
        kernel2 = side1 - k + 1
        if kernel2 >= 1:
            return kernel1, stride, pad, kernel2
    raise ConfigError(f"cannot reduce a {side}x{side} image to a {k}x{k} map")


class SaliencyNet:
    """Target view -> k x k map in (0, 1); conv stack with a 1x1 channel merge."""

    def __init__(self, cfg: ModelConfig, rng):
        k1, stride, pad, k2 = _saliency_plan(cfg.image_side, cfg.k)
        c1, c2 = cfg.saliency_channels
        self.k = cfg.k
        self.stack = Sequential([
            Conv2d(cfg.image_channels, c1, k1, rng, stride=stride, pad=pad, name="saliency.conv1"),
            Relu(),
            Conv2d(c1, c2, k2, rng, name="saliency.conv2"),
            Relu(),
            Conv2d(c2, 1, 1, rng, name="saliency.merge"),
            Sigmoid(),
        ])

    def forward(self, x):
        out = self.stack.forward(x)
        return out[:, 0]

    def backward(self, dmap):
        return self.stack.backward(dmap[:, None])

    def params(self):
        return self.stack.params()


class ConeNet:
    """Head crop and eye position -> five raw cone parameters."""

    def __init__(self, cfg: ModelConfig, rng):
        n_in = cfg.image_channels * cfg.head_side ** 2 + 2
        h1, h2 = cfg.cone_hidden
        self.stack = Sequential([
            Dense(n_in, h1, rng, name="cone.fc1"), Relu(),
            Dense(h1, h2, rng, name="cone.fc2"), Relu(),
            Dense(h2, 5, rng, name="cone.fc3"),
        ])
        # canonical start: a wide forward cone with a tiny suppression ball.
        # Scaled-down output weights let the head-crop features steer the cone
        # instead of starting it at a random pose; a random pose (or a large
        # ball) drives the optimizer into blanking the intersection map, a
        # degenerate optimum the saturated masks cannot recover from.
        out = self.stack.layers[-1]
        out.w.value *= 0.05
        out.b.value[:] = [0.0, 0.0, 1.0, -1.0, -4.0]

    def forward(self, crop, eye):
        flat = crop.reshape(crop.shape[0], -1)
        return self.stack.forward(np.concatenate([flat, eye], axis=1))

    def backward(self, dout):
        return self.stack.backward(dout)

    def params(self):
        return self.stack.params()


class TransformNet:
    """Both views -> transform parameters and a same-scene logit.

    A shared conv stage encodes each view separately. The dense stage sees the
    concatenated per-view codes together with the column-to-column correlation
    matrix of the two feature grids; for rotations about the vertical axis the
    cross-view displacement pattern lives in exactly that matrix.
    """

    def __init__(self, cfg: ModelConfig, rng):
        self.n_theta = FAMILY_PARAM_COUNTS[cfg.family]
        side1 = (cfg.image_side + 2 - 5) // 2 + 1
        if side1 < 1:
            raise ConfigError(f"image side {cfg.image_side} too small for the transform encoder")
        feat = cfg.transform_channels * side1 * side1
        self.encoder = Sequential([
            Conv2d(cfg.image_channels, cfg.transform_channels, 5, rng, stride=2, pad=1,
                   name="transform.conv1"),
            Relu(),
        ])
        h1, h2 = cfg.transform_hidden
        code_dim = 2 * feat + side1 * side1
        self.head = Sequential([
            Dense(code_dim, h1, rng, name="transform.fc1"), Relu(),
            Dense(h1, h2, rng, name="transform.fc2"), Relu(),
            Dense(h2, max(self.n_theta, 1), rng, name="transform.fc3"),
        ])
        # the same-scene confidence gets a fully separate branch over pooled
        # image statistics; sharing features with the gaze task lets its much
        # larger gradients drown the scene supervision
        self._pool = 4
        pooled_side = cfg.image_side // self._pool
        gamma_dim = 2 * cfg.image_channels * pooled_side * pooled_side
        self.gamma_head = Sequential([
            Dense(gamma_dim, 16, rng, name="transform.gamma1"), Relu(),
            Dense(16, 1, rng, name="transform.gamma2"),
        ])
        self._feat = feat
        self._side1 = side1
        self._corr_scale = 1.0 / (cfg.transform_channels * side1)
        # canonical start: identity-ish view transform at a plausible viewing
        # distance, steered by the view features (spatial-transformer style)
        out = self.head.layers[-1]
        out.w.value *= 0.05
        out.b.value[:] = 0.0
        for idx, value in _CANONICAL_THETA[cfg.family]:
            out.b.value[idx] = value

    def view_features(self, x):
        """Shared-weight per-view code (identical for identical images)."""
        out = self.encoder.forward(x)
        return out.reshape(x.shape[0], -1)

    def _pooled_stats(self, source, target):
        n, c, h, w = source.shape
        p = self._pool
        parts = []
        for view in (source, target):
            pooled = view[:, :, :h // p * p, :w // p * p].reshape(
                n, c, h // p, p, w // p, p).mean(axis=(3, 5))
            parts.append(pooled.reshape(n, -1))
        return np.concatenate(parts, axis=1)

    def forward(self, source, target):
        n = source.shape[0]
        stacked = self.encoder.forward(np.concatenate([source, target], axis=0))
        self._encoded_shape = stacked.shape
        f_s, f_t = stacked[:n], stacked[n:]
        self._f_s, self._f_t = f_s, f_t
        corr = np.einsum("nchi,nchj->nij", f_s, f_t) * self._corr_scale
        codes = np.concatenate([f_s.reshape(n, -1), f_t.reshape(n, -1),
                                corr.reshape(n, -1)], axis=1)
        out = self.head.forward(codes)
        gamma_logit = self.gamma_head.forward(self._pooled_stats(source, target))[:, 0]
        return out[:, :self.n_theta], gamma_logit

    def backward(self, dtheta, dgamma_logit):
        n = dtheta.shape[0] if dtheta.shape[1] else dgamma_logit.shape[0]
        if self.n_theta:
            dcodes = self.head.backward(dtheta)
        else:
            dcodes = self.head.backward(np.zeros((n, 1)))
        self.gamma_head.backward(dgamma_logit[:, None])
        d_fs = dcodes[:, :self._feat].reshape(self._f_s.shape)
        d_ft = dcodes[:, self._feat:2 * self._feat].reshape(self._f_t.shape)
        dcorr = dcodes[:, 2 * self._feat:].reshape(n, self._side1, self._side1)
        dcorr = dcorr * self._corr_scale
        d_fs = d_fs + np.einsum("nij,nchj->nchi", dcorr, self._f_t)
        d_ft = d_ft + np.einsum("nij,nchi->nchj", dcorr, self._f_s)
        return self.encoder.backward(
            np.concatenate([d_fs, d_ft], axis=0).reshape(self._encoded_shape))

    def params(self):
        return self.encoder.params() + self.head.params() + self.gamma_head.params()


class GridHead:
    """Five dense classifiers from the flattened fused map to 26 logits each.

    Weights start from the spatial correspondence the head is meant to refine:
    each class reads the fused cells its canvas patch covers. Without this
    prior the early optimum is to ignore the (initially noisy) fused map
    entirely, which starves the geometry pathways of gradient.
    """

    SPATIAL_INIT = 3.0

    def __init__(self, cfg: ModelConfig, rng):
        self.grids = [Dense(cfg.k ** 2, N_CLASSES, rng, name=f"head.grid{g}")
                      for g in range(N_GRIDS)]
        k = cfg.k
        centers = (2.0 * np.arange(k) + 1.0) / (2.0 * k)   # fused-cell centers in [0, 1]
        for g, (dr, dc) in enumerate(GRID_SHIFTS):
            spatial = np.zeros((k * k, N_CLASSES))
            for fi in range(k):
                row = int(centers[fi] * CANVAS_SIDE)
                gi = (row - dr) // 3
                if not 0 <= gi < GRID_SIDE:
                    continue
                for fj in range(k):
                    col = int(centers[fj] * CANVAS_SIDE)
                    gj = (col - dc) // 3
                    if 0 <= gj < GRID_SIDE:
                        spatial[fi * k + fj, gi * GRID_SIDE + gj] = self.SPATIAL_INIT
            self.grids[g].w.value += spatial

    def forward(self, flat):
        return np.stack([g.forward(flat) for g in self.grids], axis=1)

    def backward(self, dlogits):
        dflat = self.grids[0].backward(dlogits[:, 0])
        for g in range(1, N_GRIDS):
            dflat = dflat + self.grids[g].backward(dlogits[:, g])
        return dflat

    def params(self):
        out = []
        for g in self.grids:
            out.extend(g.params())
        return out


def _paint_tables():
    index = np.full((N_GRIDS, CANVAS_SIDE * CANVAS_SIDE), -1, dtype=np.int64)
    for g, (dr, dc) in enumerate(GRID_SHIFTS):
        for r in range(CANVAS_SIDE):
            gi = (r - dr) // 3
            if not 0 <= gi < GRID_SIDE:
                continue
            for c in range(CANVAS_SIDE):
                gj = (c - dc) // 3
                if 0 <= gj < GRID_SIDE:
                    index[g, r * CANVAS_SIDE + c] = gi * GRID_SIDE + gj
    cover = (index >= 0).sum(axis=0).astype(np.float64)
    return index, cover


_PAINT_INDEX, _PAINT_COVER = _paint_tables()


def combine_grids(probs: np.ndarray):
    """Average the five painted grids into a 15 x 15 density plus no-gaze mass.

    ``probs`` is (n, 5, 26) of per-grid class probabilities. Each 5x5 cell
    paints its probability over a 3x3 canvas patch at its grid's shift; canvas
    cells average over the grids that cover them, and the result is rescaled so
    that the density plus the mean no-gaze probability sums to one.
    """
    n = probs.shape[0]
    painted = np.zeros((n, CANVAS_SIDE * CANVAS_SIDE))
    for g in range(N_GRIDS):
        valid = _PAINT_INDEX[g] >= 0
        painted[:, valid] += probs[:, g, _PAINT_INDEX[g][valid]]
    painted /= _PAINT_COVER
    no_gaze = probs[:, :, NO_GAZE_CLASS].mean(axis=1)
    total = painted.sum(axis=1)
    density = painted * ((1.0 - no_gaze) / np.maximum(total, 1e-300))[:, None]
    return density.reshape(n, CANVAS_SIDE, CANVAS_SIDE), no_gaze


def _resample_to_canvas(maps: np.ndarray, k: int) -> np.ndarray:
    """Nearest-neighbor lookup of a batch of k x k maps at canvas cell centers."""
    centers = (2.0 * np.arange(CANVAS_SIDE) + 1.0) / (2.0 * CANVAS_SIDE)
    idx = np.minimum((centers * k).astype(np.int64), k - 1)
    return maps[:, idx[:, None], idx[None, :]]


def density_mode(density: np.ndarray) -> np.ndarray:
    """Center of the argmax cell in [0, 1]^2; flat row-major first-match ties."""
    flat = int(np.argmax(density))
    row, col = divmod(flat, density.shape[1])
    side = density.shape[0]
    return np.array([(2 * col + 1) / (2 * side), (2 * row + 1) / (2 * side)])


def fuse(saliency_map: np.ndarray, cone_map: np.ndarray, gamma: float) -> np.ndarray:
    """Element-wise gate: saliency AND (gamma-scaled) cone visibility."""
    saliency_map = np.asarray(saliency_map, dtype=np.float64)
    cone_map = np.asarray(cone_map, dtype=np.float64)
    if saliency_map.shape != cone_map.shape:
        raise ShapeError(f"fuse: map shapes differ, {saliency_map.shape} vs {cone_map.shape}")
    return saliency_map * (gamma * cone_map)


@dataclass
class GazePrediction:
    density: np.ndarray     # (15, 15), nonnegative; sums to 1 with no_gaze_score
    point: np.ndarray       # (2,) in [0, 1]^2
    gamma: float
    no_gaze_score: float


@dataclass
class ForwardState:
    """Everything the backward pass and the losses need from one forward pass."""

    saliency: np.ndarray
    cone_map: np.ndarray
    fused: np.ndarray
    logits: np.ndarray          # (n, 5, 26), no-gaze masked when extension off
    gamma: np.ndarray           # (n,)
    gamma_logit: np.ndarray
    v_raw: np.ndarray
    alpha_raw: np.ndarray
    r_raw: np.ndarray
    theta: np.ndarray
    geometry_cache: tuple = field(repr=False, default=None)


class GazeModel:
    """The assembled predictor; see the module docstring for the wiring."""

    def __init__(self, config: ModelConfig):
        self.config = config.validate()
        rng = np.random.default_rng((config.seed, 0x9E3779B9))
        self.saliency = SaliencyNet(config, rng)
        self.cone_net = ConeNet(config, rng)
        self.transform = TransformNet(config, rng)
        self.head = GridHead(config, rng)

    def parameters(self):
        return (self.saliency.params() + self.cone_net.params()
                + self.transform.params() + self.head.params())

    def _check_views(self, source, target):
        want = (self.config.image_channels, self.config.image_side, self.config.image_side)
        for name, arr in (("source view", source), ("target view", target)):
            if arr.shape[1:] != want:
                raise ShapeError(f"{name} batch has shape {arr.shape}, expected (n,) + {want}")
        if source.shape[0] != target.shape[0]:
            raise ShapeError(f"view batches disagree: {source.shape[0]} vs {target.shape[0]}")

    def forward(self, source, target, head_crop, eye) -> ForwardState:
        """Run all pathways on a batch. ``eye`` is (n, 2) in [0, 1]^2."""
        source = np.asarray(source, dtype=np.float64)
        target = np.asarray(target, dtype=np.float64)
        head_crop = np.asarray(head_crop, dtype=np.float64)
        eye = np.asarray(eye, dtype=np.float64)
        self._check_views(source, target)
        n = source.shape[0]
        cfg = self.config

        s_map = self.saliency.forward(target)

        raw = self.cone_net.forward(head_crop, eye)
        v_raw, alpha_raw, r_raw = raw[:, :3], raw[:, 3], raw[:, 4]
        norms = np.sqrt(np.sum(v_raw * v_raw, axis=1))
        if np.any(norms <= DIRECTION_EPS):
            bad = int(np.argmin(norms))
            raise DegenerateDirectionError(
                f"cone pathway produced a near-zero direction for batch item {bad}")
        axis = v_raw / norms[:, None]
        aperture = np.clip(sigmoid(alpha_raw), APERTURE_MIN, APERTURE_MAX)
        radius = softplus(r_raw)
        apex = np.concatenate([2.0 * eye - 1.0, np.zeros((n, 1))], axis=1)

        theta, gamma_logit = self.transform.forward(source, target)
        linear, translation = family_matrices(cfg.family, theta)
        g_map, cache = intersect_forward_raw(
            apex, axis, aperture, radius,
            linear[:, :, 0], linear[:, :, 1], translation,
            cfg.k, cfg.kappa, cfg.mask_sharpness)

        gamma = sigmoid(gamma_logit) if cfg.extension else np.ones(n)
        fused = s_map * (gamma[:, None, None] * g_map)
        logits = self.head.forward(fused.reshape(n, -1))
        if not cfg.extension:
            logits[:, :, NO_GAZE_CLASS] = NO_GAZE_LOGIT

        return ForwardState(saliency=s_map, cone_map=g_map, fused=fused,
                            logits=logits, gamma=gamma, gamma_logit=gamma_logit,
                            v_raw=v_raw, alpha_raw=alpha_raw, r_raw=r_raw,
                            theta=theta, geometry_cache=cache)

    def backward(self, state: ForwardState, dlogits, dgamma_logit=None):
        """Accumulate parameter gradients for upstream logit (and gamma) grads."""
        cfg = self.config
        n = dlogits.shape[0]
        dlogits = np.array(dlogits, dtype=np.float64)
        if not cfg.extension:
            dlogits[:, :, NO_GAZE_CLASS] = 0.0

        dfused = self.head.backward(dlogits).reshape(state.fused.shape)
        gamma3 = state.gamma[:, None, None]
        d_smap = dfused * gamma3 * state.cone_map
        d_gmap = dfused * gamma3 * state.saliency
        d_gamma = np.sum(dfused * state.saliency * state.cone_map, axis=(1, 2))

        self.saliency.backward(d_smap)

        geom = intersect_backward_raw(state.geometry_cache, d_gmap)
        g_v_raw, g_alpha_raw, g_r_raw = cone_raw_backward(
            state.v_raw, state.alpha_raw, state.r_raw,
            geom["axis"], geom["aperture"], geom["radius"])
        self.cone_net.backward(
            np.concatenate([g_v_raw, g_alpha_raw[:, None], g_r_raw[:, None]], axis=1))

        d_linear = np.zeros((n, 3, 3))
        d_linear[:, :, 0] = geom["v1"]
        d_linear[:, :, 1] = geom["v2"]
        dtheta = family_matrices_backward(cfg.family, state.theta, d_linear, geom["origin"])

        if cfg.extension:
            total = d_gamma * state.gamma * (1.0 - state.gamma)
            if dgamma_logit is not None:
                total = total + dgamma_logit
        else:
            total = np.zeros(n)
        self.transform.backward(dtheta, total)

    # --- inference -------------------------------------------------------------

    def predict_batch(self, source, target, head_crop, eye):
        state = self.forward(source, target, head_crop, eye)
        if self.config.output_mode == "fused_product":
            density = _resample_to_canvas(state.fused, self.config.k)
            total = np.maximum(density.sum(axis=(1, 2)), 1e-300)
            return density / total[:, None, None], np.zeros(len(density)), state.gamma
        probs = softmax(state.logits, axis=-1)
        density, no_gaze = combine_grids(probs)
        return density, no_gaze, state.gamma

    def predict(self, sample) -> GazePrediction:
        density, no_gaze, gamma = self.predict_batch(
            sample.source_view[None], sample.target_view[None],
            sample.head_crop[None], sample.eye_position[None])
        return GazePrediction(density=density[0], point=density_mode(density[0]),
                              gamma=float(gamma[0]), no_gaze_score=float(no_gaze[0]))

    # --- checkpointing ----------------------------------------------------------

    def _config_tensors(self):
        cfg = self.config
        return [
            ("config/k", np.array([cfg.k], dtype=np.float64)),
            ("config/kappa", np.array([cfg.kappa])),
            ("config/mask_sharpness", np.array([cfg.mask_sharpness])),
            ("config/family", np.array([FAMILIES.index(cfg.family)], dtype=np.float64)),
            ("config/image_side", np.array([cfg.image_side], dtype=np.float64)),
            ("config/image_channels", np.array([cfg.image_channels], dtype=np.float64)),
            ("config/head_side", np.array([cfg.head_side], dtype=np.float64)),
            ("config/saliency_channels", np.asarray(cfg.saliency_channels, dtype=np.float64)),
            ("config/cone_hidden", np.asarray(cfg.cone_hidden, dtype=np.float64)),
            ("config/transform_channels", np.array([cfg.transform_channels], dtype=np.float64)),
            ("config/transform_hidden", np.asarray(cfg.transform_hidden, dtype=np.float64)),
            ("config/extension", np.array([float(cfg.extension)])),
            ("config/output_mode", np.array(
                [0.0 if cfg.output_mode == "shifted_grids" else 1.0])),
            ("config/seed", np.array([cfg.seed], dtype=np.float64)),
        ]

    def save(self, path):
        tensors = self._config_tensors()
        tensors.extend(("param/" + p.name, p.value) for p in self.parameters())
        gio.write_checkpoint(path, tensors)


def load_model(path) -> GazeModel:
    pairs = dict(gio.read_checkpoint(path))
    cfg = ModelConfig(
        k=int(pairs["config/k"][0]),
        kappa=float(pairs["config/kappa"][0]),
        mask_sharpness=float(pairs["config/mask_sharpness"][0]),
        family=FAMILIES[int(pairs["config/family"][0])],
        image_side=int(pairs["config/image_side"][0]),
        image_channels=int(pairs["config/image_channels"][0]),
        head_side=int(pairs["config/head_side"][0]),
        saliency_channels=tuple(int(v) for v in pairs["config/saliency_channels"]),
        cone_hidden=tuple(int(v) for v in pairs["config/cone_hidden"]),
        transform_channels=int(pairs["config/transform_channels"][0]),
        transform_hidden=tuple(int(v) for v in pairs["config/transform_hidden"]),
        extension=bool(pairs["config/extension"][0]),
        output_mode="shifted_grids" if pairs["config/output_mode"][0] == 0.0
                    else "fused_product",
        seed=int(pairs["config/seed"][0]),
    )
    model = GazeModel(cfg)
    for p in model.parameters():
        key = "param/" + p.name
        if key not in pairs:
            raise ConfigError(f"checkpoint is missing tensor {key!r}")
        if pairs[key].shape != p.value.shape:
            raise ShapeError(f"checkpoint tensor {key!r} has shape {pairs[key].shape}, "
                             f"expected {p.value.shape}")
        p.value[...] = pairs[key]
    return model


# --- single-sample pathway views ---------------------------------------------------

def saliency_pathway(model: GazeModel, target_image: np.ndarray) -> np.ndarray:
    """k x k saliency map of one target view."""
    return model.saliency.forward(np.asarray(target_image, dtype=np.float64)[None])[0]


def cone_pathway(model: GazeModel, head_crop: np.ndarray, eye: np.ndarray) -> Cone:
    """Gaze cone for one head crop; ``eye`` is in [0, 1]^2 view coordinates."""
    raw = model.cone_net.forward(np.asarray(head_crop, dtype=np.float64)[None],
                                 np.asarray(eye, dtype=np.float64)[None])[0]
    eye = np.asarray(eye, dtype=np.float64)
    return make_cone(2.0 * eye - 1.0, raw[:3], float(raw[3]), float(raw[4]))


def transform_pathway(model: GazeModel, source_image, target_image):
    """Affine view transform and same-scene confidence for one pair of views."""
    theta, gamma_logit = model.transform.forward(
        np.asarray(source_image, dtype=np.float64)[None],
        np.asarray(target_image, dtype=np.float64)[None])
    gamma = float(sigmoid(gamma_logit[0])) if model.config.extension else 1.0
    return params_to_affine(model.config.family, theta[0]), gamma
