"""Core types shared by every sampler: point clouds, sample results,
deterministic RNG, distance accounting, and cloud file I/O.

Coordinates are stored as float32 (scan-data precision); every distance
is accumulated in float64 so comparisons and argmax tie behavior are
stable regardless of cloud size.
"""

from __future__ import annotations

import os
import struct
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "PointCloud",
    "SampleResult",
    "Rng",
    "CloudFormatError",
    "squared_distance",
    "load_cloud",
    "save_cloud",
    "read_indices_csv",
    "write_indices_csv",
    "pair_evals",
    "reset_pair_evals",
    "add_pair_evals",
    "get_workers",
    "set_workers",
    "workers",
]


class CloudFormatError(ValueError):
    """Raised when a cloud file cannot be parsed; message carries the offset."""


# ---------------------------------------------------------------------------
# distance-evaluation accounting
#
# Every kernel that evaluates a pairwise point distance reports how many
# evaluations it performed.  Tests use deltas of this counter to verify
# that fused construction touches each pair once and that the
# redundancy-free queries compute nothing new.

_eval_lock = threading.Lock()
_eval_count = 0


def pair_evals() -> int:
    """Total pair-distance evaluations performed so far in this process."""
    return _eval_count


def reset_pair_evals() -> None:
    global _eval_count
    with _eval_lock:
        _eval_count = 0


def add_pair_evals(n: int) -> None:
    global _eval_count
    with _eval_lock:
        _eval_count += int(n)


# ---------------------------------------------------------------------------
# worker-thread control
#
# Chunked kernels (exclusion-list construction, parallel FPS reduction)
# fan out over this many threads.  Results are independent of the setting;
# only wall time changes.

_workers = 1


def get_workers() -> int:
    return _workers


def set_workers(count: int) -> None:
    global _workers
    if count < 1:
        raise ValueError(f"worker count must be >= 1, got {count}")
    _workers = int(count)


@contextmanager
def workers(count: int):
    """Temporarily set the worker-thread count."""
    global _workers
    prev = _workers
    set_workers(count)
    try:
        yield
    finally:
        _workers = prev


# ---------------------------------------------------------------------------
# deterministic RNG (splitmix64)
#
# A 64-bit generator with a trivially portable state so kernels can carry
# the same stream: identical seeds give identical sequences on every
# platform and at every worker count.

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix64(z: int) -> int:
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


class Rng:
    """splitmix64 stream, seeded explicitly."""

    __slots__ = ("state", "_seed")

    def __init__(self, seed: int):
        self._seed = int(seed) & _MASK64
        self.state = self._seed

    def next_u64(self) -> int:
        self.state = (self.state + _GOLDEN) & _MASK64
        return _mix64(self.state)

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 bits of entropy."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def below(self, n: int) -> int:
        """Uniform integer in [0, n)."""
        if n <= 0:
            raise ValueError(f"bound must be positive, got {n}")
        return self.next_u64() % n

    def shuffle(self, arr: np.ndarray) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(arr) - 1, 0, -1):
            j = self.below(i + 1)
            arr[i], arr[j] = arr[j], arr[i]

    def permutation(self, n: int) -> np.ndarray:
        out = np.arange(n, dtype=np.int64)
        self.shuffle(out)
        return out

    def spawn(self, index: int) -> "Rng":
        """Derive an independent child stream; used so parallel tasks get
        per-task generators instead of sharing this one."""
        return Rng(_mix64(self._seed ^ _mix64((index + 1) * _GOLDEN)))

    def standard_normal(self) -> float:
        # Box-Muller; one value per call keeps the stream layout simple.
        import math

        u1 = self.random()
        u2 = self.random()
        while u1 <= 1e-300:
            u1 = self.random()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


# ---------------------------------------------------------------------------
# domain types


class PointCloud:
    """N points with 3D coordinates. Immutable after construction; safe to
    share across threads. Point order is meaningful: indices are identity."""

    __slots__ = ("coords",)

    def __init__(self, coords):
        arr = np.ascontiguousarray(coords, dtype=np.float32)
        if arr.ndim != 2 or arr.shape[1] != 3:
            raise ValueError(f"expected (N, 3) coordinates, got shape {arr.shape}")
        if arr.shape[0] < 1:
            raise ValueError("point cloud must contain at least one point")
        if not np.isfinite(arr).all():
            raise ValueError("point cloud contains non-finite coordinates")
        arr.setflags(write=False)
        self.coords = arr

    def __len__(self) -> int:
        return self.coords.shape[0]

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    def columns_f64(self):
        """Per-axis float64 copies for the distance kernels."""
        c = self.coords
        return (
            np.ascontiguousarray(c[:, 0], dtype=np.float64),
            np.ascontiguousarray(c[:, 1], dtype=np.float64),
            np.ascontiguousarray(c[:, 2], dtype=np.float64),
        )

    def __repr__(self) -> str:
        return f"PointCloud(n={self.n})"


@dataclass
class SampleResult:
    """Sampled indices plus provenance stats.

    indices are pairwise distinct positions into the source cloud; method is
    one of fps | mdps | random | grid | single-threshold.
    """

    indices: np.ndarray
    method: str
    stats: dict = field(default_factory=dict)

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.indices)


def squared_distance(a, b) -> float:
    """Squared Euclidean distance, accumulated in float64.

    Square roots are applied only where true distances are reported.
    """
    ax, ay, az = (float(v) for v in a)
    bx, by, bz = (float(v) for v in b)
    dx = ax - bx
    dy = ay - by
    dz = az - bz
    add_pair_evals(1)
    return dx * dx + dy * dy + dz * dz


# ---------------------------------------------------------------------------
# cloud file I/O
#
# xyz-text: one point per line, 3 whitespace-separated floats, extra
#   trailing columns ignored, '#' comment lines skipped.
# pcf-binary: little-endian, magic "PCF1", u32 count, count*3 float32.

_PCF_MAGIC = b"PCF1"


def _detect_format(path: str) -> str:
    ext = os.path.splitext(path)[1].lower()
    if ext in (".pcf", ".bin"):
        return "pcf"
    if ext in (".xyz", ".txt", ".pts"):
        return "xyz"
    with open(path, "rb") as f:
        head = f.read(4)
    return "pcf" if head == _PCF_MAGIC else "xyz"


def load_cloud(path: str, format: str | None = None) -> PointCloud:
    """Load a point cloud from an xyz-text or pcf-binary file."""
    fmt = format or _detect_format(path)
    if fmt == "xyz":
        return _load_xyz(path)
    if fmt == "pcf":
        return _load_pcf(path)
    raise ValueError(f"unknown cloud format {fmt!r}")


def _load_xyz(path: str) -> PointCloud:
    rows = []
    with open(path, "r") as f:
        for lineno, line in enumerate(f, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            parts = stripped.split()
            if len(parts) < 3:
                raise CloudFormatError(
                    f"{path}: parse error at line {lineno}: expected 3 coordinates"
                )
            try:
                rows.append((float(parts[0]), float(parts[1]), float(parts[2])))
            except ValueError:
                raise CloudFormatError(
                    f"{path}: parse error at line {lineno}: non-numeric coordinate"
                ) from None
    if not rows:
        raise CloudFormatError(f"{path}: empty point cloud")
    return PointCloud(np.array(rows, dtype=np.float32))


def _load_pcf(path: str) -> PointCloud:
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != _PCF_MAGIC:
        raise CloudFormatError(f"{path}: bad magic at byte 0 (expected PCF1)")
    if len(data) < 8:
        raise CloudFormatError(f"{path}: truncated header at byte {len(data)}")
    (count,) = struct.unpack_from("<I", data, 4)
    if count < 1:
        raise CloudFormatError(f"{path}: empty point cloud")
    need = 8 + count * 12
    if len(data) < need:
        raise CloudFormatError(
            f"{path}: truncated payload at byte {len(data)} (need {need})"
        )
    coords = np.frombuffer(data, dtype="<f4", count=count * 3, offset=8)
    return PointCloud(coords.reshape(count, 3))


def save_cloud(cloud: PointCloud, path: str, format: str | None = None) -> None:
    fmt = format
    if fmt is None:
        ext = os.path.splitext(path)[1].lower()
        fmt = "pcf" if ext in (".pcf", ".bin") else "xyz"
    if fmt == "xyz":
        with open(path, "w") as f:
            for x, y, z in cloud.coords:
                # 9 significant digits round-trip float32 exactly
                f.write(f"{x:.9g} {y:.9g} {z:.9g}\n")
    elif fmt == "pcf":
        with open(path, "wb") as f:
            f.write(_PCF_MAGIC)
            f.write(struct.pack("<I", cloud.n))
            f.write(np.ascontiguousarray(cloud.coords, dtype="<f4").tobytes())
    else:
        raise ValueError(f"unknown cloud format {fmt!r}")


def write_indices_csv(path: str, indices) -> None:
    with open(path, "w") as f:
        f.write("index\n")
        for i in np.asarray(indices, dtype=np.int64):
            f.write(f"{i}\n")


def read_indices_csv(path: str) -> np.ndarray:
    out = []
    with open(path, "r") as f:
        for lineno, line in enumerate(f, start=1):
            s = line.strip()
            if not s or (lineno == 1 and s.lower() == "index"):
                continue
            out.append(int(s))
    return np.array(out, dtype=np.int64)
