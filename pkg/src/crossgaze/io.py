"""Binary containers, PGM export, and flat key=value config files.

Tensor container encoding (shared by checkpoints and datasets), little endian:
a 4-byte magic string, then per tensor: u32 name length, the UTF-8 name,
u32 rank, one u64 per dimension, and the float64 payload in row-major order.
Checkpoints ("GZC1") hold named tensors until end of file. Datasets ("GZDS")
add a u32 version and a u64 sample count after the magic, followed by a fixed
sequence of tensors per sample. Round-trips are bit exact.
"""

from __future__ import annotations

import dataclasses
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

CHECKPOINT_MAGIC = b"GZC1"
DATASET_MAGIC = b"GZDS"
DATASET_VERSION = 1


def _write_tensor(f, name: str, value: np.ndarray):
    data = np.ascontiguousarray(value, dtype="<f8")
    encoded = name.encode("utf-8")
    f.write(struct.pack("<I", len(encoded)))
    f.write(encoded)
    f.write(struct.pack("<I", data.ndim))
    if data.ndim:
        f.write(struct.pack(f"<{data.ndim}Q", *data.shape))
    f.write(data.tobytes())


def _read_exact(f, n: int, what: str) -> bytes:
    offset = f.tell()
    data = f.read(n)
    if len(data) != n:
        raise FormatError(f"truncated file while reading {what}", offset=offset)
    return data


def _read_tensor(f):
    (name_len,) = struct.unpack("<I", _read_exact(f, 4, "tensor name length"))
    name = _read_exact(f, name_len, "tensor name").decode("utf-8")
    (rank,) = struct.unpack("<I", _read_exact(f, 4, f"rank of '{name}'"))
    if rank:
        shape = struct.unpack(f"<{rank}Q", _read_exact(f, 8 * rank, f"dims of '{name}'"))
    else:
        shape = ()
    count = int(np.prod(shape)) if shape else 1
    raw = _read_exact(f, 8 * count, f"data of '{name}'")
    value = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
    return name, value


def write_tensor_file(path, named_tensors, magic: bytes = CHECKPOINT_MAGIC,
                      header: bytes = b""):
    """Write (name, array) pairs to a tensor container."""
    path = Path(path)
    with open(path, "wb") as f:
        f.write(magic)
        f.write(header)
        for name, value in named_tensors:
            _write_tensor(f, name, value)


def read_tensor_file(path, magic: bytes = CHECKPOINT_MAGIC, header_len: int = 0):
    """Read all (name, array) pairs; returns (header_bytes, list of pairs)."""
    path = Path(path)
    with open(path, "rb") as f:
        got = f.read(len(magic))
        if got != magic:
            raise FormatError(f"bad magic {got!r}, expected {magic!r}", offset=0)
        header = _read_exact(f, header_len, "header") if header_len else b""
        pairs = []
        while True:
            probe = f.read(1)
            if not probe:
                break
            f.seek(-1, 1)
            pairs.append(_read_tensor(f))
    return header, pairs


def write_checkpoint(path, named_tensors):
    write_tensor_file(path, named_tensors, magic=CHECKPOINT_MAGIC)


def read_checkpoint(path):
    _, pairs = read_tensor_file(path, magic=CHECKPOINT_MAGIC)
    return pairs


# --- dataset container -----------------------------------------------------------

SAMPLE_FIELDS = ("x_s", "x_h", "u_e", "x_t", "y", "flags", "camera_angle", "gaze_direction")
NO_GAZE_SENTINEL = np.array([-1.0, -1.0])


def write_dataset(path, samples):
    """Serialize samples; y of None is stored as the (-1, -1) sentinel."""
    path = Path(path)
    with open(path, "wb") as f:
        f.write(DATASET_MAGIC)
        f.write(struct.pack("<I", DATASET_VERSION))
        f.write(struct.pack("<Q", len(samples)))
        for s in samples:
            has_gaze = s.gaze_point is not None
            _write_tensor(f, "x_s", s.source_view)
            _write_tensor(f, "x_h", s.head_crop)
            _write_tensor(f, "u_e", s.eye_position)
            _write_tensor(f, "x_t", s.target_view)
            _write_tensor(f, "y", s.gaze_point if has_gaze else NO_GAZE_SENTINEL)
            _write_tensor(f, "flags", np.array([float(has_gaze), float(s.same_scene)]))
            _write_tensor(f, "camera_angle", np.array([s.camera_angle]))
            _write_tensor(f, "gaze_direction", s.gaze_direction)


def read_dataset(path):
    """Bit-exact inverse of :func:`write_dataset`; returns a list of Samples."""
    from .scenes import Sample  # local import to avoid a cycle

    path = Path(path)
    with open(path, "rb") as f:
        got = f.read(4)
        if got != DATASET_MAGIC:
            raise FormatError(f"bad magic {got!r}, expected {DATASET_MAGIC!r}", offset=0)
        (version,) = struct.unpack("<I", _read_exact(f, 4, "dataset version"))
        if version != DATASET_VERSION:
            raise FormatError(f"unsupported dataset version {version}", offset=4)
        (count,) = struct.unpack("<Q", _read_exact(f, 8, "sample count"))
        samples = []
        for i in range(count):
            fields = {}
            for expected in SAMPLE_FIELDS:
                name, value = _read_tensor(f)
                if name != expected:
                    raise FormatError(
                        f"sample {i}: expected tensor '{expected}', found '{name}'",
                        offset=f.tell())
                fields[name] = value
            has_gaze = fields["flags"][0] != 0.0
            samples.append(Sample(
                source_view=fields["x_s"],
                head_crop=fields["x_h"],
                eye_position=fields["u_e"],
                target_view=fields["x_t"],
                gaze_point=fields["y"] if has_gaze else None,
                same_scene=bool(fields["flags"][1]),
                camera_angle=float(fields["camera_angle"][0]),
                gaze_direction=fields["gaze_direction"],
            ))
    return samples


# --- PGM export ------------------------------------------------------------------

def write_pgm(path, gray: np.ndarray):
    """Binary PGM (P5, maxval 255) from a uint8 grayscale image."""
    gray = np.asarray(gray)
    if gray.ndim != 2:
        raise FormatError(f"PGM needs a 2-D image, got shape {gray.shape}")
    h, w = gray.shape
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (w, h))
        f.write(gray.astype(np.uint8).tobytes())


def export_heatmap(path, density: np.ndarray, upsample: int = 16):
    """Write a density map as a PGM (nearest-neighbor upsampled, max scaled to
    255) plus a sidecar CSV of the raw cell values next to it."""
    path = Path(path)
    density = np.asarray(density, dtype=np.float64)
    peak = density.max()
    if peak > 0:
        img = np.rint(density / peak * 255.0)
    else:
        img = np.zeros_like(density)
    img = np.repeat(np.repeat(img, upsample, axis=0), upsample, axis=1)
    write_pgm(path, img)
    csv_path = path.with_suffix(".csv")
    with open(csv_path, "w") as f:
        for row in density:
            f.write(",".join(f"{v:.17g}" for v in row) + "\n")
    return csv_path


# --- flat key=value config files --------------------------------------------------

def read_config_text(path) -> dict:
    """Parse a flat key=value file; '#' starts a comment, blank lines ignored."""
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


def _coerce(text: str, target_type):
    if target_type is bool:
        lowered = text.lower()
        if lowered in ("true", "1", "yes", "on"):
            return True
        if lowered in ("false", "0", "no", "off"):
            return False
        raise FormatError(f"cannot read {text!r} as a boolean")
    return target_type(text)


def apply_config_values(config, values: dict):
    """Overlay string values from a config file onto a dataclass instance."""
    fields = {f.name: f for f in dataclasses.fields(config)}
    for key, text in values.items():
        if key not in fields:
            raise FormatError(f"unknown config key {key!r} for {type(config).__name__}")
        target_type = fields[key].type
        if isinstance(target_type, str):
            target_type = {"int": int, "float": float, "bool": bool, "str": str}[target_type]
        setattr(config, key, _coerce(text, target_type))
    return config


def config_to_text(config) -> str:
    lines = [f"{f.name} = {getattr(config, f.name)}" for f in dataclasses.fields(config)]
    return "\n".join(lines) + "\n"
