"""Labeled 2-d synthetic datasets with a simple binary file format.

Four families: well separated gaussian blobs on a circle, two moons,
interleaved spiral arms, and a checkerboard whose tiles alternate
class. Points are normalized per dimension to zero mean and unit
variance; held-out splits can reuse the training statistics so both
live in the same coordinates. Every draw comes from a counter-based
stream keyed by (seed, class), so datasets are bitwise reproducible
and independent per class.
"""

import json
import struct
from dataclasses import dataclass

import numpy as np

from gaf import rng

KINDS = ("gaussians", "moons", "spirals", "checkerboard")
MAGIC = b"GAFDATA1"
FORMAT_VERSION = 1

GAUSSIAN_RADIUS = 4.0
GAUSSIAN_SIGMA = 1.0
_CHECKER_GRID = 4


class DatasetFormatError(ValueError):
    """Raised when a dataset file is malformed, naming the bad section."""


@dataclass
class LabeledDataset:
    kind: str
    points: np.ndarray  # (num_classes * samples_per_class, d) float32, normalized
    labels: np.ndarray  # int32
    num_classes: int
    samples_per_class: int
    seed: int
    mean: np.ndarray  # (d,) float64, normalization statistics
    std: np.ndarray  # (d,) float64

    @property
    def data_dim(self):
        return self.points.shape[1]

    def class_points(self, c):
        if not 0 <= c < self.num_classes:
            raise ValueError(f"class {c} out of range for {self.num_classes} classes")
        return self.points[self.labels == c]

    def normalize(self, raw):
        return ((np.asarray(raw, dtype=np.float64) - self.mean) / self.std).astype(np.float32)

    def denormalize(self, pts):
        return np.asarray(pts, dtype=np.float64) * self.std + self.mean

    @property
    def stats(self):
        return self.mean, self.std


def _gen_gaussians(num_classes, m, seed):
    pts = []
    for c in range(num_classes):
        g = rng.stream(seed, rng.DATA, c)
        angle = 2.0 * np.pi * c / num_classes
        center = GAUSSIAN_RADIUS * np.array([np.cos(angle), np.sin(angle)])
        pts.append(center + GAUSSIAN_SIGMA * g.standard_normal((m, 2)))
    return pts


def _gen_moons(num_classes, m, seed):
    if num_classes != 2:
        raise ValueError(f"moons is a two-class dataset, got num_classes={num_classes}")
    out = []
    for c in range(2):
        g = rng.stream(seed, rng.DATA, c)
        theta = g.uniform(0.0, np.pi, m)
        if c == 0:
            base = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        else:
            base = np.stack([1.0 - np.cos(theta), 0.5 - np.sin(theta)], axis=1)
        out.append(base + 0.08 * g.standard_normal((m, 2)))
    return out


def _gen_spirals(num_classes, m, seed):
    out = []
    for c in range(num_classes):
        g = rng.stream(seed, rng.DATA, c)
        theta = np.sqrt(g.random(m)) * 3.0 * np.pi
        radius = theta / np.pi
        offset = 2.0 * np.pi * c / num_classes
        base = np.stack([radius * np.cos(theta + offset), radius * np.sin(theta + offset)], axis=1)
        out.append(base + 0.08 * g.standard_normal((m, 2)))
    return out


def _gen_checkerboard(num_classes, m, seed):
    if not 2 <= num_classes <= 2 * _CHECKER_GRID - 1:
        raise ValueError(f"checkerboard supports 2..{2 * _CHECKER_GRID - 1} classes, got {num_classes}")
    tiles_by_class = [[] for _ in range(num_classes)]
    for ix in range(_CHECKER_GRID):
        for iy in range(_CHECKER_GRID):
            tiles_by_class[(ix + iy) % num_classes].append((ix, iy))
    tile_size = 4.0 / _CHECKER_GRID
    out = []
    for c in range(num_classes):
        g = rng.stream(seed, rng.DATA, c)
        tiles = np.array(tiles_by_class[c], dtype=np.float64)
        idx = g.integers(0, len(tiles), m)
        corners = -2.0 + tiles[idx] * tile_size
        out.append(corners + g.random((m, 2)) * tile_size)
    return out


_GENERATORS = {
    "gaussians": _gen_gaussians,
    "moons": _gen_moons,
    "spirals": _gen_spirals,
    "checkerboard": _gen_checkerboard,
}


def make_dataset(kind, num_classes, samples_per_class, seed, stats=None):
    """Generate, normalize, and label a dataset.

    With stats=(mean, std) the given statistics are applied instead of
    fitting new ones, which is how held-out splits share coordinates
    with the training split.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown dataset kind {kind!r}, expected one of {KINDS}")
    if num_classes < 1:
        raise ValueError(f"num_classes must be positive, got {num_classes}")
    if samples_per_class < 1:
        raise ValueError(f"samples_per_class must be positive, got {samples_per_class}")
    per_class = _GENERATORS[kind](num_classes, samples_per_class, seed)
    raw = np.concatenate(per_class, axis=0)
    labels = np.repeat(np.arange(num_classes, dtype=np.int32), samples_per_class)
    if stats is None:
        mean = raw.mean(axis=0)
        std = np.maximum(raw.std(axis=0), 1e-8)
    else:
        mean = np.asarray(stats[0], dtype=np.float64)
        std = np.asarray(stats[1], dtype=np.float64)
        if mean.shape != (raw.shape[1],) or std.shape != (raw.shape[1],):
            raise ValueError("normalization stats must be per-dimension vectors")
    points = ((raw - mean) / std).astype(np.float32)
    return LabeledDataset(kind=kind, points=points, labels=labels,
                          num_classes=num_classes, samples_per_class=samples_per_class,
                          seed=seed, mean=mean, std=std)


def save_dataset(ds, path):
    header = {
        "format_version": FORMAT_VERSION,
        "kind": ds.kind,
        "num_classes": ds.num_classes,
        "samples_per_class": ds.samples_per_class,
        "data_dim": ds.data_dim,
        "seed": ds.seed,
        "mean": [float(v) for v in ds.mean],
        "std": [float(v) for v in ds.std],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(ds.points, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(ds.labels, dtype="<i4").tobytes())


def load_dataset(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < len(MAGIC) + 8 or raw[: len(MAGIC)] != MAGIC:
        raise DatasetFormatError("not a dataset file: bad magic")
    (hlen,) = struct.unpack_from("<Q", raw, len(MAGIC))
    off = len(MAGIC) + 8
    if len(raw) < off + hlen:
        raise DatasetFormatError("dataset file truncated in header section")
    try:
        header = json.loads(raw[off : off + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DatasetFormatError(f"dataset header is not valid JSON: {exc}") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise DatasetFormatError(
            f"unsupported dataset format version {header.get('format_version')!r}, "
            f"expected {FORMAT_VERSION}")
    off += hlen
    n = header["num_classes"] * header["samples_per_class"]
    d = header["data_dim"]
    points_bytes = n * d * 4
    labels_bytes = n * 4
    if len(raw) < off + points_bytes:
        raise DatasetFormatError("dataset file truncated in points section")
    points = np.frombuffer(raw, dtype="<f4", count=n * d, offset=off).reshape(n, d).copy()
    off += points_bytes
    if len(raw) < off + labels_bytes:
        raise DatasetFormatError("dataset file truncated in labels section")
    labels = np.frombuffer(raw, dtype="<i4", count=n, offset=off).copy()
    return LabeledDataset(kind=header["kind"], points=points, labels=labels,
                          num_classes=header["num_classes"],
                          samples_per_class=header["samples_per_class"],
                          seed=header["seed"],
                          mean=np.array(header["mean"], dtype=np.float64),
                          std=np.array(header["std"], dtype=np.float64))
