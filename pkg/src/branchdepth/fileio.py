"""File formats: binary PGM/PPM images, PFM float maps, rig/points JSON.

PFM follows the Middlebury convention: ``Pf`` magic, ``width height``,
a scale line whose sign encodes endianness (negative = little-endian),
then rows bottom-to-top as 32-bit floats.  Invalid disparities are encoded
as +inf.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from branchdepth.errors import FileFormatError
from branchdepth.geometry import StereoRig
from branchdepth.refine import DisparityMap

_LUMA = (0.299, 0.587, 0.114)


def _read_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """First ``count`` whitespace-separated header tokens, skipping comments.

    Returns the tokens and the offset one byte past the final separator.
    """
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < count:
        if pos >= len(data):
            raise FileFormatError("truncated header")
        ch = data[pos : pos + 1]
        if ch.isspace():
            pos += 1
        elif ch == b"#":
            end = data.find(b"\n", pos)
            if end < 0:
                raise FileFormatError("unterminated comment in header")
            pos = end + 1
        else:
            end = pos
            while end < len(data) and not data[end : end + 1].isspace():
                end += 1
            tokens.append(data[pos:end])
            pos = end + 1 if end < len(data) else end
    return tokens, pos


def read_pgm(path: str | Path) -> np.ndarray:
    """Read a binary PGM (P5) or PPM (P6, converted by luminance) as float64."""
    data = Path(path).read_bytes()
    tokens, offset = _read_tokens(data, 4)
    magic = tokens[0]
    if magic not in (b"P5", b"P6"):
        raise FileFormatError(f"unsupported image magic {magic!r}, expected P5 or P6")
    try:
        width, height, maxval = (int(t) for t in tokens[1:4])
    except ValueError as exc:
        raise FileFormatError(f"non-numeric image header in {path}") from exc
    if width < 1 or height < 1:
        raise FileFormatError(f"bad image size {width}x{height}")
    if not 0 < maxval <= 255:
        raise FileFormatError(f"only 8-bit images are supported, got maxval {maxval}")
    channels = 1 if magic == b"P5" else 3
    expected = width * height * channels
    payload = data[offset : offset + expected]
    if len(payload) != expected:
        raise FileFormatError(f"truncated pixel data in {path}: {len(payload)} of {expected} bytes")
    pixels = np.frombuffer(payload, dtype=np.uint8).astype(np.float64)
    if channels == 1:
        return pixels.reshape(height, width)
    rgb = pixels.reshape(height, width, 3)
    return _LUMA[0] * rgb[:, :, 0] + _LUMA[1] * rgb[:, :, 1] + _LUMA[2] * rgb[:, :, 2]


def write_pgm(path: str | Path, image: np.ndarray) -> None:
    """Write a float image as binary 8-bit PGM (values clipped to [0, 255])."""
    image = np.asarray(image)
    if image.ndim != 2:
        raise FileFormatError(f"PGM images must be 2-D, got shape {image.shape}")
    quantised = np.clip(np.rint(image), 0, 255).astype(np.uint8)
    height, width = image.shape
    with open(path, "wb") as handle:
        handle.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        handle.write(quantised.tobytes())


def read_pfm(path: str | Path) -> np.ndarray:
    """Read a single-channel PFM as float64 (bottom-to-top rows undone)."""
    data = Path(path).read_bytes()
    tokens, offset = _read_tokens(data, 4)
    magic = tokens[0]
    if magic == b"PF":
        raise FileFormatError("3-channel PF files are not supported, expected grayscale Pf")
    if magic != b"Pf":
        raise FileFormatError(f"unsupported PFM magic {magic!r}")
    try:
        width, height = int(tokens[1]), int(tokens[2])
        scale = float(tokens[3])
    except ValueError as exc:
        raise FileFormatError(f"non-numeric PFM header in {path}") from exc
    if width < 1 or height < 1:
        raise FileFormatError(f"bad PFM size {width}x{height}")
    if scale == 0:
        raise FileFormatError("PFM scale must be nonzero")
    expected = width * height * 4
    payload = data[offset : offset + expected]
    if len(payload) != expected:
        raise FileFormatError(f"truncated PFM data in {path}: {len(payload)} of {expected} bytes")
    dtype = "<f4" if scale < 0 else ">f4"
    values = np.frombuffer(payload, dtype=dtype).reshape(height, width)
    return np.flipud(values).astype(np.float64)


def write_pfm(path: str | Path, values: np.ndarray) -> None:
    """Write a float array as little-endian grayscale PFM (scale -1.0)."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise FileFormatError(f"PFM maps must be 2-D, got shape {values.shape}")
    height, width = values.shape
    with open(path, "wb") as handle:
        handle.write(f"Pf\n{width} {height}\n-1.0\n".encode("ascii"))
        handle.write(np.flipud(values).astype("<f4").tobytes())


def write_disparity_pfm(path: str | Path, disp: DisparityMap) -> None:
    """Encode invalid pixels as +inf and write the map as PFM."""
    write_pfm(path, np.where(disp.valid, disp.values, np.inf))


def read_disparity_pfm(path: str | Path) -> DisparityMap:
    """Read a PFM disparity map; non-finite entries become invalid pixels."""
    values = read_pfm(path)
    return DisparityMap.from_values(values)


def disparity_preview(disp: DisparityMap) -> np.ndarray:
    """8-bit preview: valid disparities scaled to [1, 255], invalid as 0."""
    out = np.zeros(disp.values.shape)
    if disp.valid.any():
        finite = disp.finite_values()
        lo, hi = float(finite.min()), float(finite.max())
        span = hi - lo if hi > lo else 1.0
        out[disp.valid] = 1.0 + 254.0 * (disp.values[disp.valid] - lo) / span
    return out


def load_json(path: str | Path) -> dict:
    try:
        parsed = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"invalid JSON in {path}: {exc}") from exc
    if not isinstance(parsed, dict):
        raise FileFormatError(f"expected a JSON object in {path}")
    return parsed


def read_rig(path: str | Path) -> StereoRig:
    """Load a rig file: {"fx", "fy", "ox", "oy", "baseline_m"}."""
    data = load_json(path)
    required = {"fx", "fy", "ox", "oy", "baseline_m"}
    missing = required - set(data)
    if missing:
        raise FileFormatError(f"rig file {path} is missing keys: {sorted(missing)}")
    extra = set(data) - required
    if extra:
        raise FileFormatError(f"rig file {path} has unexpected keys: {sorted(extra)}")
    try:
        return StereoRig(**{key: float(data[key]) for key in required})
    except (TypeError, ValueError) as exc:
        raise FileFormatError(f"rig file {path} has non-numeric entries") from exc


def write_rig(path: str | Path, rig: StereoRig) -> None:
    """Serialise a rig; the derived constant w is never stored."""
    payload = {"fx": rig.fx, "fy": rig.fy, "ox": rig.ox, "oy": rig.oy, "baseline_m": rig.baseline_m}
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def read_points(path: str | Path) -> np.ndarray:
    """Load a branch point set: {"points": [[x, y], ...]}."""
    data = load_json(path)
    if "points" not in data:
        raise FileFormatError(f"points file {path} is missing the 'points' key")
    points = data["points"]
    if not isinstance(points, list) or any(
        not isinstance(p, list) or len(p) != 2 for p in points
    ):
        raise FileFormatError(f"points file {path} must hold a list of [x, y] pairs")
    try:
        return np.asarray(points, dtype=np.float64).reshape(-1, 2)
    except ValueError as exc:
        raise FileFormatError(f"points file {path} has non-numeric entries") from exc


def write_points(path: str | Path, points: np.ndarray) -> None:
    points = np.asarray(points, dtype=np.float64)
    payload = {"points": [[float(x), float(y)] for x, y in points]}
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
