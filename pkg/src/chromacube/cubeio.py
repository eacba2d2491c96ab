"""On-disk formats and synthetic scene generation.

Cube container format (extension ``.cidc``), all integers little-endian:

    offset  size  field
    0       4     magic ``CIDC``
    4       2     version (u16), currently 1
    6       2     dtype code (u16), 1 = float32 little-endian
    8       12    dims (u32 x 3) as (bands, height, width)
    20      -     payload: bands*height*width float32, band-major C order

Double-precision cubes round-trip at float32 precision. Masks are read
either from a single-band cube file (graded values) or from an 8-bit
binary PGM (``P5``) where any value above zero maps to 1.0.

Synthetic scenes replace benchmark data at desk scale: every generator is
deterministic in its seed and produces values in [0, 1], so ground truth
is exact for the oracle tests.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass

import numpy as np

from .cube import SpectralCube
from .errors import ConfigError, CubeFormatError
from .sensing import CodedMask

CUBE_MAGIC = b"CIDC"
CUBE_VERSION = 1
DTYPE_FLOAT32 = 1
HEADER = struct.Struct("<4sHH3I")

GENERATORS = ("blobs", "gradients", "checkerboard")


def atomic_write_bytes(path: str, payload: bytes) -> None:
    """Write via a temp file in the target directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def cube_to_bytes(cube: SpectralCube) -> bytes:
    header = HEADER.pack(CUBE_MAGIC, CUBE_VERSION, DTYPE_FLOAT32, cube.bands, cube.height, cube.width)
    return header + cube.data.astype("<f4").tobytes(order="C")


def cube_from_bytes(raw: bytes) -> SpectralCube:
    if len(raw) < HEADER.size:
        raise CubeFormatError(
            f"file too short for header: expected at least {HEADER.size} bytes, got {len(raw)}"
        )
    magic, version, dtype, bands, height, width = HEADER.unpack_from(raw, 0)
    if magic != CUBE_MAGIC:
        raise CubeFormatError(f"bad magic {magic!r} at byte offset 0 (expected {CUBE_MAGIC!r})")
    if version != CUBE_VERSION:
        raise CubeFormatError(f"unsupported version {version} at byte offset 4")
    if dtype != DTYPE_FLOAT32:
        raise CubeFormatError(f"unsupported dtype code {dtype} at byte offset 6")
    expected = bands * height * width * 4
    actual = len(raw) - HEADER.size
    if actual != expected:
        raise CubeFormatError(
            f"truncated or oversized payload at byte offset {HEADER.size}: "
            f"expected {expected} bytes for dims ({bands}, {height}, {width}), got {actual}"
        )
    data = np.frombuffer(raw, dtype="<f4", offset=HEADER.size).astype(np.float64)
    return SpectralCube(data.reshape(bands, height, width))


def cube_write(cube: SpectralCube, path: str) -> None:
    atomic_write_bytes(path, cube_to_bytes(cube))


def cube_read(path: str) -> SpectralCube:
    with open(path, "rb") as handle:
        raw = handle.read()
    try:
        return cube_from_bytes(raw)
    except CubeFormatError as err:
        raise CubeFormatError(f"{path}: {err}") from None


def plane_write(plane: np.ndarray, path: str) -> None:
    """Store a 2-D array (intensity map or measurement) as a single-band cube."""
    cube_write(SpectralCube(np.asarray(plane, dtype=np.float64)[None, :, :]), path)


def plane_read(path: str) -> np.ndarray:
    cube = cube_read(path)
    if cube.bands != 1:
        raise CubeFormatError(f"{path}: expected a single-band cube, got {cube.bands} bands")
    return cube.data[0]


def pgm_write(values: np.ndarray, path: str) -> None:
    """Write a binary (P5, maxval 255) PGM; nonzero values become 255."""
    values = np.asarray(values)
    raster = np.where(values > 0, 255, 0).astype(np.uint8)
    header = f"P5\n{raster.shape[1]} {raster.shape[0]}\n255\n".encode("ascii")
    atomic_write_bytes(path, header + raster.tobytes(order="C"))


def _pgm_tokens(raw: bytes):
    """Yield (token, next_offset) over PGM header fields, skipping comments."""
    pos = 0
    while True:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise CubeFormatError(f"unexpected end of PGM header at byte offset {start}")
        yield raw[start:pos], pos


def pgm_read(path: str) -> np.ndarray:
    """Read an 8-bit binary PGM into a {0.0, 1.0} array (any value > 0 maps to 1)."""
    with open(path, "rb") as handle:
        raw = handle.read()
    tokens = _pgm_tokens(raw)
    try:
        magic, _ = next(tokens)
        if magic != b"P5":
            raise CubeFormatError(f"{path}: bad PGM magic {magic!r} at byte offset 0")
        width, _ = next(tokens)
        height, _ = next(tokens)
        maxval, pos = next(tokens)
        width, height, maxval = int(width), int(height), int(maxval)
    except (StopIteration, ValueError):
        raise CubeFormatError(f"{path}: malformed PGM header") from None
    if not 0 < maxval <= 255:
        raise CubeFormatError(f"{path}: only 8-bit PGM supported, got maxval {maxval}")
    pos += 1  # single whitespace byte after maxval
    expected = width * height
    actual = len(raw) - pos
    if actual != expected:
        raise CubeFormatError(
            f"{path}: raster at byte offset {pos} expected {expected} bytes, got {actual}"
        )
    raster = np.frombuffer(raw, dtype=np.uint8, offset=pos).reshape(height, width)
    return (raster > 0).astype(np.float64)


def read_mask(path: str) -> CodedMask:
    """Load a coded mask from a PGM (binary) or single-band cube file (graded)."""
    with open(path, "rb") as handle:
        head = handle.read(4)
    if head[:2] == b"P5":
        return CodedMask(pgm_read(path))
    if head == CUBE_MAGIC:
        return CodedMask(plane_read(path))
    raise CubeFormatError(f"{path}: not a PGM or cube file (leading bytes {head!r})")


@dataclass
class SceneSpec:
    """Deterministic synthetic scene description (JSON-serializable)."""

    height: int
    width: int
    bands: int
    generator: str = "blobs"
    seed: int = 0
    blobs: int = 6
    tile: int = 8

    def __post_init__(self):
        if self.generator not in GENERATORS:
            raise ConfigError(f"generator must be one of {GENERATORS}, got {self.generator!r}")
        if min(self.height, self.width, self.bands) < 1:
            raise ConfigError("scene dims must be positive")
        if self.blobs < 0 or self.tile < 1:
            raise ConfigError("blob count must be >= 0 and tile size >= 1")

    @staticmethod
    def from_json(text: str) -> "SceneSpec":
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as err:
            raise CubeFormatError(f"scene spec is not valid JSON: {err}") from None
        if not isinstance(payload, dict):
            raise CubeFormatError("scene spec JSON must be an object")
        known = {"height", "width", "bands", "generator", "seed", "blobs", "tile"}
        unknown = set(payload) - known
        if unknown:
            raise CubeFormatError(f"unknown scene spec keys: {sorted(unknown)}")
        try:
            return SceneSpec(**payload)
        except TypeError as err:
            raise CubeFormatError(f"scene spec missing required keys: {err}") from None

    def to_json(self) -> str:
        return json.dumps(
            {
                "height": self.height,
                "width": self.width,
                "bands": self.bands,
                "generator": self.generator,
                "seed": self.seed,
                "blobs": self.blobs,
                "tile": self.tile,
            },
            indent=2,
        )


def _place_blobs(rng: np.random.Generator, spec: SceneSpec) -> list[tuple[int, int, int, int]]:
    """Non-overlapping rectangles with a >= 2 pixel gap between any two."""
    rects: list[tuple[int, int, int, int]] = []
    min_side = max(2, min(spec.height, spec.width) // 8)
    max_side = max(min_side + 1, min(spec.height, spec.width) // 3)
    for _ in range(spec.blobs):
        for _attempt in range(1000):
            bh = int(rng.integers(min_side, max_side + 1))
            bw = int(rng.integers(min_side, max_side + 1))
            if bh + 2 > spec.height or bw + 2 > spec.width:
                continue
            top = int(rng.integers(1, spec.height - bh))
            left = int(rng.integers(1, spec.width - bw))
            candidate = (top, left, bh, bw)
            if all(
                top + bh + 2 <= t or t + h + 2 <= top or left + bw + 2 <= l or l + w + 2 <= left
                for (t, l, h, w) in rects
            ):
                rects.append(candidate)
                break
        else:
            raise ConfigError(
                f"could not place {spec.blobs} non-overlapping blobs on a "
                f"{spec.height} x {spec.width} scene; reduce the count"
            )
    return rects


def generate_scene(spec: SceneSpec) -> SpectralCube:
    """Build a synthetic ground-truth cube with values in [0, 1].

    Generators:
      * ``blobs``: piecewise-constant rectangles (random spectra in
        [0.45, 1]) on a low constant background spectrum; per-band spatial
        gradients are zero almost everywhere.
      * ``gradients``: per-band affine ramps, smooth everywhere.
      * ``checkerboard``: tiles alternating between an increasing and a
        decreasing spectral ramp.
    """
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    data = np.empty((spec.bands, spec.height, spec.width))
    if spec.generator == "blobs":
        background = rng.uniform(0.2, 0.35, size=spec.bands)
        data[:] = background[:, None, None]
        for top, left, bh, bw in _place_blobs(rng, spec):
            spectrum = rng.uniform(0.45, 1.0, size=spec.bands)
            data[:, top : top + bh, left : left + bw] = spectrum[:, None, None]
    elif spec.generator == "gradients":
        u = np.linspace(0.0, 1.0, spec.height)[:, None]
        v = np.linspace(0.0, 1.0, spec.width)[None, :]
        for lam in range(spec.bands):
            base = rng.uniform(0.35, 0.55)
            su = rng.uniform(-0.15, 0.15)
            sv = rng.uniform(-0.15, 0.15)
            data[lam] = base + su * u + sv * v
    else:  # checkerboard
        ramp_up = (
            np.full(spec.bands, 0.5)
            if spec.bands == 1
            else 0.1 + 0.8 * np.arange(spec.bands) / (spec.bands - 1)
        )
        ramp_down = 1.0 - ramp_up
        rows = np.arange(spec.height)[:, None] // spec.tile
        cols = np.arange(spec.width)[None, :] // spec.tile
        parity = (rows + cols) % 2
        for lam in range(spec.bands):
            data[lam] = np.where(parity == 0, ramp_up[lam], ramp_down[lam])
    return SpectralCube(data)
