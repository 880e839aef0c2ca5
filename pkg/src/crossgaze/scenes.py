"""Synthetic two-view gaze scenes with exact geometric labels.

A scene lives in source-view coordinates: the source camera projects
orthographically onto the z = 0 plane and its view covers [-1, 1]^2. The
target camera is a rotation about the vertical image axis plus a translation;
its image plane is spanned by v1 = R e1, v2 = R e2 around the translation
point, so the generated views satisfy the same affine view relation the model
parametrizes. The person's head sits in the source plane and the gazed object
is placed exactly on the gaze ray where it pierces the target image plane,
which makes the label y an exact ray-plane intersection.

The head is rasterized as a disk with a wedge-shaped sector pointing along the
in-plane gaze direction; the blue channel shades with the out-of-plane
component. Pixel offsets are taken from the nearest pixel center as integers
so that mirrored directions produce exactly mirrored pixels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, GenerationError
from .geometry import _rot_y  # shared rotation convention

PALETTE = np.array([
    [0.95, 0.25, 0.25],
    [0.25, 0.95, 0.35],
    [0.30, 0.45, 0.95],
    [0.95, 0.85, 0.20],
    [0.20, 0.90, 0.90],
    [0.90, 0.30, 0.90],
])

HEAD_RADIUS = 0.28          # world units; the view square is 2 units across
HEAD_MARGIN = 0.60          # heads stay within +-HEAD_MARGIN in the source view
HEAD_SECTOR_COS = np.cos(np.deg2rad(40.0))
MIN_GAZE_DISTANCE = 0.30    # head to gazed point, world units
TARGET_MARGIN = 0.82        # gazed points stay within +-TARGET_MARGIN in the target view
MIN_INCIDENCE = 0.5         # sine of the smallest gaze-ray elevation above the target plane
GAZE_GRID = 15              # gazed points sit on this grid's cell centers (the label canvas)
MAX_ATTEMPTS = 100


@dataclass
class GenConfig:
    """Bounds for the scene generator; flat fields so it round-trips key=value files."""

    image_side: int = 32
    head_side: int = 15
    min_blobs: int = 2
    max_blobs: int = 6
    no_gaze_fraction: float = 0.10
    max_camera_angle_deg: float = 60.0
    mixed_scenes: bool = False   # when on, half the pairs come from different scenes
    n_samples: int = 1000
    blob_radius_min: float = 0.10
    blob_radius_max: float = 0.22

    def validate(self):
        if self.image_side < 8:
            raise ConfigError(f"image_side must be >= 8, got {self.image_side}")
        if self.head_side % 2 != 1 or self.head_side < 5:
            raise ConfigError(f"head_side must be an odd number >= 5, got {self.head_side}")
        if not 1 <= self.min_blobs <= self.max_blobs <= 8:
            raise ConfigError(f"blob counts out of range: {self.min_blobs}..{self.max_blobs}")
        if not 0.0 <= self.no_gaze_fraction < 1.0:
            raise ConfigError(f"no_gaze_fraction must be in [0, 1), got {self.no_gaze_fraction}")
        if not 0.0 < self.max_camera_angle_deg <= 90.0:
            raise ConfigError(f"max_camera_angle_deg must be in (0, 90], got {self.max_camera_angle_deg}")
        if not 0.0 < self.blob_radius_min <= self.blob_radius_max:
            raise ConfigError("blob radius bounds must satisfy 0 < min <= max")
        return self


@dataclass
class Blob:
    position: np.ndarray   # (3,) world coordinates
    radius: float
    color: int


@dataclass
class Scene:
    """Ground-truth world for one training pair."""

    blobs: list            # source-world blobs
    head_position: np.ndarray
    gaze_direction: np.ndarray   # unit vector from the head
    gazed_index: int | None      # blob index, None when the gaze leaves the frame
    camera_angle: float          # target camera yaw, radians
    camera_translation: np.ndarray
    same_scene: bool
    target_blobs: list = field(default_factory=list)  # target-view content
    # per-scene ambient light color and background level; different scenes
    # differ in both
    tint: np.ndarray = field(default_factory=lambda: np.ones(3))
    target_tint: np.ndarray = field(default_factory=lambda: np.ones(3))
    backdrop_level: float = 0.12
    target_backdrop_level: float = 0.12
    floor_color: np.ndarray = field(default_factory=lambda: np.full(3, 0.3))
    target_floor_color: np.ndarray = field(default_factory=lambda: np.full(3, 0.3))


@dataclass
class Sample:
    """Rendered training record; diagnostics fields never feed the model."""

    source_view: np.ndarray    # (3, side, side)
    head_crop: np.ndarray      # (3, head_side, head_side)
    eye_position: np.ndarray   # (2,) in [0, 1]^2
    target_view: np.ndarray    # (3, side, side)
    gaze_point: np.ndarray | None   # (2,) in [0, 1]^2, None = no gaze in target
    same_scene: bool
    camera_angle: float
    gaze_direction: np.ndarray


def pixel_centers(side: int) -> np.ndarray:
    """Pixel-center coordinates over [-1, 1]; index i maps to (2i + 1 - side)/side."""
    return (2.0 * np.arange(side) + 1.0 - side) / side


def target_frame(scene: Scene):
    """In-plane basis and origin of the target view in source coordinates."""
    rot = _rot_y(np.array([scene.camera_angle]))[0]
    return rot[:, 0], rot[:, 1], scene.camera_translation


# blob depths span the space between the source plane and the target camera,
# covering where gazed objects land on the target plane
BLOB_Z_LO = -0.4
BLOB_Z_HI = 1.7


def _depth_fraction(z: float) -> float:
    return float(np.clip((z - BLOB_Z_LO) / (BLOB_Z_HI - BLOB_Z_LO), 0.0, 1.0))


def _blob_shade(z: float) -> float:
    """Brightness falls with distance from the source plane."""
    return 1.0 - 0.55 * _depth_fraction(z)


def _apply_depth_code(blobs, cfg: GenConfig):
    """Radius encodes depth (nearer to the source camera is larger): the
    orthographic stand-in for perspective size. Without a depth cue the camera
    rotation is not identifiable from blob displacements alone, and every blob
    follows the same code so size never marks the gazed one.
    """
    for blob in blobs:
        frac = _depth_fraction(blob.position[2])
        blob.radius = cfg.blob_radius_max - frac * (cfg.blob_radius_max - cfg.blob_radius_min)


def _random_blobs(rng, cfg: GenConfig):
    count = int(rng.integers(cfg.min_blobs, cfg.max_blobs + 1))
    blobs = []
    for _ in range(count):
        # roughly isotropic cloud around the orbit pivot so the number of
        # blobs visible in the target view stays flat across camera angles
        pos = np.array([rng.uniform(-0.7, 0.7), rng.uniform(-0.7, 0.7),
                        rng.uniform(0.0, 1.3)])
        blobs.append(Blob(position=pos, radius=cfg.blob_radius_min,
                          color=int(rng.integers(len(PALETTE)))))
    return blobs


def _grid_point(rng) -> np.ndarray:
    """In-view coordinates drawn from label-grid cell centers inside the margin."""
    centers = (2.0 * np.arange(GAZE_GRID) + 1.0 - GAZE_GRID) / GAZE_GRID
    usable = np.where(np.abs(centers) <= TARGET_MARGIN)[0]
    return np.array([centers[rng.choice(usable)], centers[rng.choice(usable)]])


def _snap_to_grid(value: float) -> float:
    """Nearest label-grid cell center; the grid extends past the view square."""
    m = np.rint((GAZE_GRID * value + GAZE_GRID - 1.0) / 2.0)
    return float((2.0 * m + 1.0 - GAZE_GRID) / GAZE_GRID)


def _align_blobs_to_grid(blobs, skip_index, v1, v2, origin):
    """Move each blob within the target plane so its projection sits on the
    label grid. Every object gets the same treatment as the gazed one, so
    grid alignment carries no information about which blob is the target.
    """
    normal = np.cross(v1, v2)
    for j, blob in enumerate(blobs):
        if j == skip_index:
            continue
        rel = blob.position - origin
        c1 = _snap_to_grid(float(v1 @ rel))
        c2 = _snap_to_grid(float(v2 @ rel))
        depth = float(normal @ rel)
        blob.position = origin + c1 * v1 + c2 * v2 + depth * normal


def _random_head(rng, cfg: GenConfig) -> np.ndarray:
    centers = pixel_centers(cfg.image_side)
    usable = np.where(np.abs(centers) <= HEAD_MARGIN)[0]
    hx = centers[rng.choice(usable)]
    hy = centers[rng.choice(usable)]
    return np.array([hx, hy, 0.0])


def gen_scene(seed, cfg: GenConfig) -> Scene:
    """Deterministic scene from a seed; raises GenerationError after 100 rejected draws."""
    cfg.validate()
    rng = np.random.default_rng(seed)
    max_angle = np.deg2rad(cfg.max_camera_angle_deg)
    angle = float(rng.uniform(-max_angle, max_angle))
    # lateral offset and viewing distance in the rotated camera frame: the
    # target camera orbits the scene, so its plane faces the action; the
    # lateral spread is what makes the view transform worth estimating
    offset = np.array([rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4),
                       rng.uniform(1.1, 1.5)])
    translation = _rot_y(np.array([angle]))[0] @ offset
    blobs = _random_blobs(rng, cfg)
    head = _random_head(rng, cfg)

    different = bool(cfg.mixed_scenes and rng.random() < 0.5)
    no_gaze = bool(not different and rng.random() < cfg.no_gaze_fraction)

    tint = rng.uniform(0.7, 1.0, 3)
    target_tint = rng.uniform(0.7, 1.0, 3) if different else tint
    level = float(rng.uniform(0.08, 0.22))
    target_level = float(rng.uniform(0.08, 0.22)) if different else level
    floor = rng.uniform(0.15, 0.75, 3)
    target_floor = rng.uniform(0.15, 0.75, 3) if different else floor
    scene = Scene(blobs=blobs, head_position=head, gaze_direction=np.zeros(3),
                  gazed_index=None, camera_angle=angle,
                  camera_translation=translation, same_scene=not different,
                  tint=tint, target_tint=target_tint,
                  backdrop_level=level, target_backdrop_level=target_level,
                  floor_color=floor, target_floor_color=target_floor)
    v1, v2, origin = target_frame(scene)
    normal = np.cross(v1, v2)

    for _ in range(MAX_ATTEMPTS):
        if no_gaze:
            # aim at a plane point outside the target frame
            beta = np.array([rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9)])
            axis_out = int(rng.integers(2))
            beta[axis_out] = rng.uniform(1.15, 1.9) * (1.0 if rng.random() < 0.5 else -1.0)
            gazed = None
        else:
            beta = _grid_point(rng)
            gazed = int(rng.integers(len(blobs)))
        point = origin + beta[0] * v1 + beta[1] * v2
        offset = point - head
        distance = float(np.sqrt(np.sum(offset * offset)))
        if distance < MIN_GAZE_DISTANCE:
            continue
        direction = offset / distance
        # reject grazing gaze rays; their plane hits are ill-conditioned
        if gazed is not None and abs(float(normal @ direction)) < MIN_INCIDENCE:
            continue
        scene.gaze_direction = direction
        if gazed is not None:
            blobs[gazed].position = point
            if not different:
                scene.gazed_index = gazed
        break
    else:
        raise GenerationError(f"could not place a gaze target after {MAX_ATTEMPTS} attempts")

    if different:
        scene.target_blobs = _random_blobs(rng, cfg)
    else:
        scene.target_blobs = blobs
    _align_blobs_to_grid(scene.target_blobs, scene.gazed_index, v1, v2, origin)
    _apply_depth_code(blobs, cfg)
    if different:
        _apply_depth_code(scene.target_blobs, cfg)
    return scene


def project_gaze_oracle(scene: Scene) -> np.ndarray | None:
    """Exact gaze label: the ray-plane intersection in [0, 1]^2 target coordinates.

    Returns None for different-scene pairs, rays parallel to or pointing away
    from the target plane, and intersections outside the view square.
    """
    if not scene.same_scene:
        return None
    v1, v2, origin = target_frame(scene)
    normal = np.cross(v1, v2)
    denom = float(normal @ scene.gaze_direction)
    if abs(denom) < 1e-12:
        return None
    s = float(normal @ (origin - scene.head_position)) / denom
    if s <= 0.0:
        return None
    hit = scene.head_position + s * scene.gaze_direction - origin
    beta1 = float(v1 @ hit)
    beta2 = float(v2 @ hit)
    if abs(beta1) > 1.0 or abs(beta2) > 1.0:
        return None
    return np.array([(beta1 + 1.0) / 2.0, (beta2 + 1.0) / 2.0])


BACKDROP_Z = -2.0
FLOOR_ROWS = 3   # bottom rows of every view show the scene's floor color


def _render_backdrop(img, side, v1, v2, origin, level=0.12):
    """World-anchored backdrop: a smooth positional code of the world x
    coordinate where each pixel's viewing ray meets a far plane, on top of a
    per-scene base level. Shared landmarks across views make the camera pose
    visually readable; the base level behaves like scene exposure.
    """
    centers = pixel_centers(side)
    normal = np.cross(v1, v2)
    if abs(normal[2]) < 1e-9:
        return
    b1 = centers[None, :]
    b2 = centers[:, None]
    px = origin[0] + b1 * v1[0] + b2 * v2[0]
    pz = origin[2] + b1 * v1[2] + b2 * v2[2]
    wx = px + normal[0] * (BACKDROP_Z - pz) / normal[2]
    img[0] = level + 0.08 * np.sin(1.9 * wx)
    img[1] = level + 0.08 * np.sin(0.7 * wx)
    img[2] = level + 0.08 * np.clip(wx / 8.0, -1.0, 1.0)


def _render_blobs(img, blobs, side, v1, v2, origin):
    centers = pixel_centers(side)
    xx = centers[None, :]
    yy = centers[:, None]
    for blob in blobs:
        rel = blob.position - origin
        bx = float(v1 @ rel)
        by = float(v2 @ rel)
        mask = (xx - bx) ** 2 + (yy - by) ** 2 <= blob.radius ** 2
        color = PALETTE[blob.color] * _blob_shade(blob.position[2])
        img[:, mask] = color[:, None]


def _draw_head(img, side, col, row, dir_inplane, elevation):
    """Rasterize the head pattern about pixel (row, col) using integer offsets."""
    scale = 2.0 / side
    ox = (np.arange(side)[None, :] - col) * scale
    oy = (np.arange(side)[:, None] - row) * scale
    rr = ox * ox + oy * oy
    disk = rr <= HEAD_RADIUS ** 2
    shade = float(np.clip((elevation + 1.0) / 2.0, 0.0, 1.0))
    img[0][disk] = 0.5
    img[1][disk] = 0.5
    img[2][disk] = shade
    norm = float(np.hypot(dir_inplane[0], dir_inplane[1]))
    if norm > 1e-9:
        lhs = ox * dir_inplane[0] + oy * dir_inplane[1]
        sector = disk & (lhs >= HEAD_SECTOR_COS * np.sqrt(rr) * norm)
        img[0][sector] = 1.0
        img[1][sector] = 0.15


def _nearest_pixel(value: float, side: int) -> int:
    return int(np.clip(np.rint((value * side + side - 1.0) / 2.0), 0, side - 1))


def render_views(scene: Scene, cfg: GenConfig) -> Sample:
    """Orthographic rendering of both views plus the head crop and exact labels."""
    side = cfg.image_side
    e1 = np.array([1.0, 0.0, 0.0])
    e2 = np.array([0.0, 1.0, 0.0])
    zero = np.zeros(3)

    source = np.zeros((3, side, side))
    _render_backdrop(source, side, e1, e2, zero, scene.backdrop_level)
    source[:, -FLOOR_ROWS:, :] = scene.floor_color[:, None, None]
    _render_blobs(source, scene.blobs, side, e1, e2, zero)
    head = scene.head_position
    head_col = _nearest_pixel(float(head[0]), side)
    head_row = _nearest_pixel(float(head[1]), side)
    direction = scene.gaze_direction
    _draw_head(source, side, head_col, head_row, direction[:2], float(direction[2]))

    # the person appears only in the source view; a rendered head in the
    # target view would advertise the gaze direction in target coordinates
    v1, v2, origin = target_frame(scene)
    target = np.zeros((3, side, side))
    _render_backdrop(target, side, v1, v2, origin, scene.target_backdrop_level)
    target[:, -FLOOR_ROWS:, :] = scene.target_floor_color[:, None, None]
    _render_blobs(target, scene.target_blobs, side, v1, v2, origin)

    source *= scene.tint[:, None, None]
    target *= scene.target_tint[:, None, None]

    half = (cfg.head_side - 1) // 2
    crop = np.zeros((3, cfg.head_side, cfg.head_side))
    r_lo, r_hi = head_row - half, head_row + half + 1
    c_lo, c_hi = head_col - half, head_col + half + 1
    sr_lo, sr_hi = max(r_lo, 0), min(r_hi, side)
    sc_lo, sc_hi = max(c_lo, 0), min(c_hi, side)
    crop[:, sr_lo - r_lo:sr_hi - r_lo, sc_lo - c_lo:sc_hi - c_lo] = \
        source[:, sr_lo:sr_hi, sc_lo:sc_hi]

    return Sample(
        source_view=source,
        head_crop=crop,
        eye_position=np.array([(head[0] + 1.0) / 2.0, (head[1] + 1.0) / 2.0]),
        target_view=target,
        gaze_point=project_gaze_oracle(scene),
        same_scene=scene.same_scene,
        camera_angle=scene.camera_angle,
        gaze_direction=direction.copy(),
    )


def make_dataset(cfg: GenConfig, seed: int, count: int | None = None):
    """Render ``count`` samples; sample i draws from the seed stream (seed, i)."""
    cfg.validate()
    if count is None:
        count = cfg.n_samples
    return [render_views(gen_scene((seed, i), cfg), cfg) for i in range(count)]
