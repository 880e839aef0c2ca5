"""Gaze-cone geometry: quadric cones, affine view transforms, plane frames, and
the differentiable soft cone-plane intersection with an exact ray-casting oracle.

Coordinate conventions
----------------------
The source view occupies the square Z with corners (+-1, +-1, 0); its plane is
the z = 0 plane of "source coordinates". A target-view point with in-view
coordinates (b1, b2) in [-1, 1]^2 sits at p = origin + b1*v1 + b2*v2 where
v1 = R e1, v2 = R e2 are the transformed in-plane basis vectors of the view.

A gaze cone with apex a, unit axis v and aperture alpha (the cosine-squared of
the half angle) is the quadric

    (p - a)^T M (p - a) = 0,    M = v v^T - alpha I.

Substituting the plane parametrization gives the quadratic form b^T S b with
b = (b1, b2, 1) and S = P^T M P for P = [v1 | v2 | origin - a]. The soft
intersection map evaluates sigmoid(kappa * b^T S b) on a grid of cell centers,
multiplied by two optional suppression masks: a forward half-space mask that
removes the mirror nappe of the double cone, and a radial mask that removes a
ball of radius r around the apex.

A k x k map stores cell (i, j) at row i (along b2) and column j (along b1);
the cell center is b = ((2j + 1 - k)/k, (2i + 1 - k)/k).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateDirectionError
from .nn import sigmoid, softplus

APERTURE_MIN = 1e-4
APERTURE_MAX = 1.0 - 1e-4
DIRECTION_EPS = 1e-8
DEFAULT_SHARPNESS = 10.0
DEFAULT_MASK_SHARPNESS = 50.0

FAMILY_PARAM_COUNTS = {
    "identity": 0,
    "translation": 3,
    "rotation_x": 1,
    "vertical_rot_trans": 4,
    "rot3_trans": 6,
    "full_affine": 12,
}


@dataclass(frozen=True)
class Cone:
    """Gaze cone; apex lies in the source plane (third coordinate zero)."""

    apex: np.ndarray        # (3,)
    axis: np.ndarray        # (3,) unit direction
    aperture: float         # in (0, 1), cos^2 of the half angle
    head_radius: float      # >= 0, suppression ball around the apex


@dataclass(frozen=True)
class AffineTransform:
    """Affine map z -> R z + t restricted to one parameter family."""

    family: str
    theta: np.ndarray       # raw parameter vector, length per family
    linear: np.ndarray      # (3, 3)
    translation: np.ndarray  # (3,)


@dataclass(frozen=True)
class PlaneFrame:
    """Target-view plane in source coordinates: p = origin + b1*v1 + b2*v2."""

    v1: np.ndarray
    v2: np.ndarray
    origin: np.ndarray


def make_cone(eye, v_raw, alpha_raw: float, r_raw: float) -> Cone:
    """Build a cone from unconstrained parameters.

    The axis is the normalized v_raw, the aperture is a clamped sigmoid of
    alpha_raw, the ball radius a softplus of r_raw, and the apex embeds the
    2-D eye position into the source plane.
    """
    v_raw = np.asarray(v_raw, dtype=np.float64)
    norm = float(np.sqrt(np.sum(v_raw * v_raw)))
    if norm <= DIRECTION_EPS:
        raise DegenerateDirectionError(
            f"cone direction norm {norm:.3e} is below {DIRECTION_EPS:.0e}"
        )
    eye = np.asarray(eye, dtype=np.float64)
    apex = np.array([eye[0], eye[1], 0.0])
    aperture = float(np.clip(sigmoid(alpha_raw), APERTURE_MIN, APERTURE_MAX))
    return Cone(apex=apex, axis=v_raw / norm, aperture=aperture,
                head_radius=float(softplus(r_raw)))


def cone_matrix(cone: Cone) -> np.ndarray:
    """M = v v^T - alpha I; symmetric, eigenvalues {1 - alpha, -alpha, -alpha}."""
    v = cone.axis
    return np.outer(v, v) - cone.aperture * np.eye(3)


# --- affine parameter families ------------------------------------------------

def _angles(raw):
    """Map unconstrained reals to angles in (-pi, pi)."""
    return np.pi * np.tanh(raw)


def _dangles(raw):
    t = np.tanh(raw)
    return np.pi * (1.0 - t * t)


def _rot_x(phi):
    c, s = np.cos(phi), np.sin(phi)
    n = phi.shape[0]
    rot = np.zeros((n, 3, 3))
    rot[:, 0, 0] = 1.0
    rot[:, 1, 1] = c
    rot[:, 1, 2] = -s
    rot[:, 2, 1] = s
    rot[:, 2, 2] = c
    return rot


def _drot_x(phi):
    c, s = np.cos(phi), np.sin(phi)
    n = phi.shape[0]
    rot = np.zeros((n, 3, 3))
    rot[:, 1, 1] = -s
    rot[:, 1, 2] = -c
    rot[:, 2, 1] = c
    rot[:, 2, 2] = -s
    return rot


def _rot_y(phi):
    c, s = np.cos(phi), np.sin(phi)
    n = phi.shape[0]
    rot = np.zeros((n, 3, 3))
    rot[:, 0, 0] = c
    rot[:, 0, 2] = s
    rot[:, 1, 1] = 1.0
    rot[:, 2, 0] = -s
    rot[:, 2, 2] = c
    return rot


def _drot_y(phi):
    c, s = np.cos(phi), np.sin(phi)
    n = phi.shape[0]
    rot = np.zeros((n, 3, 3))
    rot[:, 0, 0] = -s
    rot[:, 0, 2] = c
    rot[:, 2, 0] = -c
    rot[:, 2, 2] = -s
    return rot


def _rot_z(phi):
    c, s = np.cos(phi), np.sin(phi)
    n = phi.shape[0]
    rot = np.zeros((n, 3, 3))
    rot[:, 0, 0] = c
    rot[:, 0, 1] = -s
    rot[:, 1, 0] = s
    rot[:, 1, 1] = c
    rot[:, 2, 2] = 1.0
    return rot


def _drot_z(phi):
    c, s = np.cos(phi), np.sin(phi)
    n = phi.shape[0]
    rot = np.zeros((n, 3, 3))
    rot[:, 0, 0] = -s
    rot[:, 0, 1] = -c
    rot[:, 1, 0] = c
    rot[:, 1, 1] = -s
    return rot


def _check_theta(family: str, theta: np.ndarray):
    if family not in FAMILY_PARAM_COUNTS:
        raise ConfigError(f"unknown transform family {family!r}; choose from {sorted(FAMILY_PARAM_COUNTS)}")
    want = FAMILY_PARAM_COUNTS[family]
    if theta.shape[-1] != want:
        raise ConfigError(f"family {family!r} takes {want} parameters, got {theta.shape[-1]}")


def family_matrices(family: str, theta: np.ndarray):
    """Batched parameter-to-matrix map: theta (n, p) -> R (n, 3, 3), t (n, 3).

    Rotation angles come from pi*tanh(raw); translations and the raw entries of
    the full affine family pass through unchanged.
    """
    theta = np.asarray(theta, dtype=np.float64)
    _check_theta(family, theta)
    n = theta.shape[0]
    eye3 = np.broadcast_to(np.eye(3), (n, 3, 3)).copy()
    zeros3 = np.zeros((n, 3))
    if family == "identity":
        return eye3, zeros3
    if family == "translation":
        return eye3, theta.copy()
    if family == "rotation_x":
        return _rot_x(_angles(theta[:, 0])), zeros3
    if family == "vertical_rot_trans":
        return _rot_y(_angles(theta[:, 0])), theta[:, 1:4].copy()
    if family == "rot3_trans":
        phi = _angles(theta[:, :3])
        rot = _rot_x(phi[:, 0]) @ _rot_y(phi[:, 1]) @ _rot_z(phi[:, 2])
        return rot, theta[:, 3:6].copy()
    # full_affine: row-major 3x3 plus translation, no orthogonality constraint
    return theta[:, :9].reshape(n, 3, 3).copy(), theta[:, 9:12].copy()


def family_matrices_backward(family: str, theta: np.ndarray, d_linear: np.ndarray, d_translation: np.ndarray) -> np.ndarray:
    """Chain upstream gradients on (R, t) back to the raw theta vector."""
    theta = np.asarray(theta, dtype=np.float64)
    _check_theta(family, theta)
    n = theta.shape[0]
    if family == "identity":
        return np.zeros((n, 0))
    if family == "translation":
        return d_translation.copy()
    if family == "rotation_x":
        phi = _angles(theta[:, 0])
        dphi = np.sum(d_linear * _drot_x(phi), axis=(1, 2))
        return (dphi * _dangles(theta[:, 0]))[:, None]
    if family == "vertical_rot_trans":
        phi = _angles(theta[:, 0])
        dphi = np.sum(d_linear * _drot_y(phi), axis=(1, 2))
        out = np.zeros((n, 4))
        out[:, 0] = dphi * _dangles(theta[:, 0])
        out[:, 1:4] = d_translation
        return out
    if family == "rot3_trans":
        phi = _angles(theta[:, :3])
        rx, ry, rz = _rot_x(phi[:, 0]), _rot_y(phi[:, 1]), _rot_z(phi[:, 2])
        out = np.zeros((n, 6))
        out[:, 0] = np.sum(d_linear * (_drot_x(phi[:, 0]) @ ry @ rz), axis=(1, 2))
        out[:, 1] = np.sum(d_linear * (rx @ _drot_y(phi[:, 1]) @ rz), axis=(1, 2))
        out[:, 2] = np.sum(d_linear * (rx @ ry @ _drot_z(phi[:, 2])), axis=(1, 2))
        out[:, :3] *= _dangles(theta[:, :3])
        out[:, 3:6] = d_translation
        return out
    out = np.zeros((n, 12))
    out[:, :9] = d_linear.reshape(n, 9)
    out[:, 9:12] = d_translation
    return out


def params_to_affine(family: str, theta) -> AffineTransform:
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    linear, translation = family_matrices(family, theta[None, :])
    return AffineTransform(family=family, theta=theta, linear=linear[0], translation=translation[0])


def apply_affine(transform: AffineTransform, z) -> np.ndarray:
    """R z + t, accumulated column by column so frame corners match bit for bit."""
    z = np.asarray(z, dtype=np.float64)
    lin = transform.linear
    return lin[:, 0] * z[0] + lin[:, 1] * z[1] + lin[:, 2] * z[2] + transform.translation


def plane_frame(transform: AffineTransform) -> PlaneFrame:
    """In-plane basis v1 = R e1, v2 = R e2 and origin t of the transformed view."""
    lin = transform.linear
    return PlaneFrame(v1=lin[:, 0].copy(), v2=lin[:, 1].copy(),
                      origin=transform.translation.copy())


def frame_point(frame: PlaneFrame, b1: float, b2: float) -> np.ndarray:
    """Plane point at in-view coordinates (b1, b2); same op order as apply_affine."""
    return frame.v1 * b1 + frame.v2 * b2 + frame.origin


def sigma_matrix(cone: Cone, frame: PlaneFrame) -> np.ndarray:
    """S = P^T M P with P = [v1 | v2 | origin - apex].

    b^T S b for b = (b1, b2, 1) equals the cone quadric evaluated at the plane
    point p = origin + b1*v1 + b2*v2.
    """
    p = np.column_stack([frame.v1, frame.v2, frame.origin - cone.apex])
    return p.T @ cone_matrix(cone) @ p


def sigma_is_degenerate(cone: Cone, frame: PlaneFrame, tol: float = 1e-12) -> bool:
    """True when the plane origin coincides with the apex (rank of S <= 2)."""
    d = frame.origin - cone.apex
    return float(np.sqrt(np.sum(d * d))) < tol


# --- soft intersection map -----------------------------------------------------

def cell_centers(side: int):
    """Flat row-major cell-center coordinates (b1, b2) of a side x side map.

    Uses (2i + 1 - side)/side so that mirrored indices negate exactly in
    floating point.
    """
    c = (2.0 * np.arange(side) + 1.0 - side) / side
    return np.tile(c, side), np.repeat(c, side)


def intersect_forward_raw(apex, axis, aperture, radius, v1, v2, origin, side,
                          sharpness=DEFAULT_SHARPNESS,
                          mask_sharpness=DEFAULT_MASK_SHARPNESS,
                          half_space=True, ball=True):
    """Batched soft intersection. All geometry inputs are (n, 3) or (n,).

    Returns (maps, cache) where maps has shape (n, side, side) with values in
    (0, 1) and cache feeds :func:`intersect_backward_raw`.
    """
    if side < 1:
        raise ConfigError(f"map side must be >= 1, got {side}")
    b1, b2 = cell_centers(side)
    base = origin - apex
    d = (base[:, None, :]
         + b1[None, :, None] * v1[:, None, :]
         + b2[None, :, None] * v2[:, None, :])
    vd = d[..., 0] * axis[:, None, 0] + d[..., 1] * axis[:, None, 1] + d[..., 2] * axis[:, None, 2]
    dd = d[..., 0] ** 2 + d[..., 1] ** 2 + d[..., 2] ** 2
    quad = vd * vd - aperture[:, None] * dd
    cone_part = sigmoid(sharpness * quad)
    half_part = sigmoid(mask_sharpness * vd) if half_space else np.ones_like(vd)
    if ball:
        dist = np.sqrt(dd)
        ball_part = sigmoid(mask_sharpness * (dist - radius[:, None]))
    else:
        dist = None
        ball_part = np.ones_like(vd)
    out = cone_part * half_part * ball_part
    n = apex.shape[0]
    cache = (d, vd, dd, dist, cone_part, half_part, ball_part,
             axis, aperture, b1, b2, sharpness, mask_sharpness, half_space, ball)
    return out.reshape(n, side, side), cache


def intersect_backward_raw(cache, upstream):
    """Gradients of the soft intersection w.r.t. its geometric inputs.

    ``upstream`` has shape (n, side, side). Returns a dict with gradients for
    apex, axis, aperture, radius, v1, v2 and origin.
    """
    (d, vd, dd, dist, cone_part, half_part, ball_part,
     axis, aperture, b1, b2, sharpness, mask_sharpness, half_space, ball) = cache
    n, m = vd.shape
    up = upstream.reshape(n, m)

    g_cone = up * half_part * ball_part
    g_quad = g_cone * sharpness * cone_part * (1.0 - cone_part)

    # quad = vd^2 - aperture * dd
    g_vd = 2.0 * vd * g_quad
    g_dd = -aperture[:, None] * g_quad
    g_aperture = -np.sum(dd * g_quad, axis=1)

    g_radius = np.zeros(n)
    if half_space:
        g_half = up * cone_part * ball_part
        g_vd = g_vd + g_half * mask_sharpness * half_part * (1.0 - half_part)
    if ball:
        g_ball = up * cone_part * half_part
        g_dist = g_ball * mask_sharpness * ball_part * (1.0 - ball_part)
        g_radius = -np.sum(g_dist, axis=1)
        inv = 0.5 / np.maximum(dist, 1e-300)
        g_dd = g_dd + g_dist * inv

    # vd = d . axis, dd = d . d
    g_axis = np.einsum("nm,nmk->nk", g_vd, d)
    g_d = g_vd[..., None] * axis[:, None, :] + (2.0 * g_dd)[..., None] * d

    g_v1 = np.einsum("m,nmk->nk", b1, g_d)
    g_v2 = np.einsum("m,nmk->nk", b2, g_d)
    g_origin = g_d.sum(axis=1)
    return {
        "apex": -g_origin,
        "axis": g_axis,
        "aperture": g_aperture,
        "radius": g_radius,
        "v1": g_v1,
        "v2": g_v2,
        "origin": g_origin,
    }


def cone_raw_backward(v_raw, alpha_raw, r_raw, g_axis, g_aperture, g_radius):
    """Chain axis/aperture/radius gradients back to the raw cone parameters.

    The aperture clamp is flat: its gradient is zero at the clamp boundary.
    """
    v_raw = np.asarray(v_raw, dtype=np.float64)
    norms = np.sqrt(np.sum(v_raw * v_raw, axis=-1, keepdims=True))
    axis = v_raw / norms
    g_v_raw = (g_axis - np.sum(g_axis * axis, axis=-1, keepdims=True) * axis) / norms

    s = sigmoid(alpha_raw)
    inside = (s > APERTURE_MIN) & (s < APERTURE_MAX)
    g_alpha_raw = np.where(inside, g_aperture * s * (1.0 - s), 0.0)
    g_r_raw = g_radius * sigmoid(r_raw)
    return g_v_raw, g_alpha_raw, g_r_raw


def intersect_map(cone: Cone, frame: PlaneFrame, side: int,
                  sharpness: float = DEFAULT_SHARPNESS,
                  mask_sharpness: float = DEFAULT_MASK_SHARPNESS,
                  half_space: bool = True, ball: bool = True) -> np.ndarray:
    """Soft cone-plane intersection as a side x side map with values in (0, 1)."""
    maps, _ = intersect_forward_raw(
        cone.apex[None, :], cone.axis[None, :],
        np.array([cone.aperture]), np.array([cone.head_radius]),
        frame.v1[None, :], frame.v2[None, :], frame.origin[None, :],
        side, sharpness, mask_sharpness, half_space, ball)
    return maps[0]


def intersect_map_backward(eye, v_raw, alpha_raw, r_raw, family, theta, side,
                           upstream,
                           sharpness: float = DEFAULT_SHARPNESS,
                           mask_sharpness: float = DEFAULT_MASK_SHARPNESS,
                           half_space: bool = True, ball: bool = True):
    """Exact gradients of the soft intersection w.r.t. every raw input.

    Rebuilds the forward pass from the raw parametrization (eye position,
    unnormalized axis, pre-sigmoid aperture, pre-softplus radius, transform
    parameters) and chains the upstream map gradient through it. Returns a dict
    with keys 'eye', 'v_raw', 'alpha_raw', 'r_raw', 'theta'.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    cone = make_cone(eye, v_raw, alpha_raw, r_raw)
    linear, translation = family_matrices(family, theta[None, :])
    grads = _intersect_raw_grads(
        cone, linear[0], translation[0], side, upstream,
        sharpness, mask_sharpness, half_space, ball)
    g_v_raw, g_alpha_raw, g_r_raw = cone_raw_backward(
        np.asarray(v_raw, dtype=np.float64)[None, :],
        np.array([alpha_raw]), np.array([r_raw]),
        grads["axis"], grads["aperture"], grads["radius"])
    d_linear = np.zeros((1, 3, 3))
    d_linear[0, :, 0] = grads["v1"][0]
    d_linear[0, :, 1] = grads["v2"][0]
    g_theta = family_matrices_backward(family, theta[None, :], d_linear, grads["origin"])
    return {
        "eye": grads["apex"][0, :2],
        "v_raw": g_v_raw[0],
        "alpha_raw": float(g_alpha_raw[0]),
        "r_raw": float(g_r_raw[0]),
        "theta": g_theta[0],
    }


def _intersect_raw_grads(cone, linear, translation, side, upstream,
                         sharpness, mask_sharpness, half_space, ball):
    _, cache = intersect_forward_raw(
        cone.apex[None, :], cone.axis[None, :],
        np.array([cone.aperture]), np.array([cone.head_radius]),
        linear[:, 0][None, :], linear[:, 1][None, :], translation[None, :],
        side, sharpness, mask_sharpness, half_space, ball)
    return intersect_backward_raw(cache, np.asarray(upstream, dtype=np.float64)[None, ...])


# --- Monte Carlo oracle ----------------------------------------------------------

def ray_cast_oracle(cone: Cone, frame: PlaneFrame, n_rays: int, side: int,
                    seed: int = 0) -> np.ndarray:
    """Hit-indicator map from rays sampled uniformly inside the forward cone.

    Directions are drawn uniformly over the spherical cap of half angle
    arccos(sqrt(aperture)) around the axis, each ray is intersected with the
    plane analytically, and hits inside the view square are binned into a
    side x side grid; any cell with at least one hit reads 1.
    """
    if n_rays < 1000:
        raise ConfigError(f"oracle needs at least 1000 rays, got {n_rays}")
    rng = np.random.default_rng(seed)
    cos_min = np.sqrt(cone.aperture)
    cos_t = rng.uniform(cos_min, 1.0, n_rays)
    phi = rng.uniform(0.0, 2.0 * np.pi, n_rays)

    v = cone.axis
    helper = np.zeros(3)
    helper[int(np.argmin(np.abs(v)))] = 1.0
    b1 = np.cross(v, helper)
    b1 /= np.sqrt(np.sum(b1 * b1))
    b2 = np.cross(v, b1)
    sin_t = np.sqrt(1.0 - cos_t * cos_t)
    dirs = (cos_t[:, None] * v
            + (sin_t * np.cos(phi))[:, None] * b1
            + (sin_t * np.sin(phi))[:, None] * b2)

    normal = np.cross(frame.v1, frame.v2)
    denom = dirs @ normal
    usable = np.abs(denom) > 1e-12   # rays parallel to the plane are skipped
    s = np.full(n_rays, -1.0)
    s[usable] = (normal @ (frame.origin - cone.apex)) / denom[usable]
    forward = usable & (s > 0.0)
    if np.count_nonzero(forward) < 0.1 * n_rays:
        warnings.warn("ray_cast_oracle: over 90% of rays skipped (parallel or "
                      "pointing away); configuration is degenerate")

    hits = cone.apex + s[forward, None] * dirs[forward]
    q = hits - frame.origin
    g11 = float(frame.v1 @ frame.v1)
    g12 = float(frame.v1 @ frame.v2)
    g22 = float(frame.v2 @ frame.v2)
    det = g11 * g22 - g12 * g12
    if abs(det) < 1e-15:
        raise DegenerateDirectionError("plane basis vectors are collinear")
    w1 = (g22 * frame.v1 - g12 * frame.v2) / det
    w2 = (g11 * frame.v2 - g12 * frame.v1) / det
    beta1 = q @ w1
    beta2 = q @ w2

    inside = (np.abs(beta1) <= 1.0) & (np.abs(beta2) <= 1.0)
    cols = np.minimum(((beta1[inside] + 1.0) * 0.5 * side).astype(np.int64), side - 1)
    rows = np.minimum(((beta2[inside] + 1.0) * 0.5 * side).astype(np.int64), side - 1)
    counts = np.bincount(rows * side + cols, minlength=side * side)
    return (counts > 0).astype(np.float64).reshape(side, side)
