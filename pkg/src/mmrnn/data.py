"""Synthetic two-modality scenes and the bit-exact grid pair file format.

Scenes are label maps of contiguous rectangular regions with
prototype-plus-noise features. The prototype tables are engineered so
that neither modality alone separates all classes: modality c collides
class k with k XOR 1, modality d collides k with k XOR 2, so the two
posteriors intersect in exactly one class. Features are quantized to
float32 at generation time so the on-disk format round-trips exactly.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grid import SENTINEL_UNLABELED, PatchGrid

MAGIC = b"MMG1"
_HEADER = struct.Struct("<4s5I")
UNLABELED_BYTE = 255

# Prototype corners sit at +-FEATURE_SCALE; chosen large relative to the
# default noise so nearest-prototype separation has a wide margin and the
# reference training protocol (lr 1e-5) makes visible per-epoch progress.
FEATURE_SCALE = 10.0


@dataclass(frozen=True)
class SceneSpec:
    height: int
    width: int
    num_classes: int
    ambiguity: float = 1.0
    noise_sigma: float = 0.05
    unlabeled_frac: float = 0.1
    seed: int = 0
    feat_dim_c: int = 16
    feat_dim_d: int = 8
    feature_scale: float = FEATURE_SCALE

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValueError("scene must be at least 1x1")
        if not 0.0 <= self.ambiguity <= 1.0:
            raise ValueError(f"ambiguity must be in [0, 1], got {self.ambiguity}")
        if not 0.0 <= self.unlabeled_frac < 1.0:
            raise ValueError(f"unlabeled_frac must be in [0, 1), got {self.unlabeled_frac}")
        if self.ambiguity > 0 and self.num_classes < 4:
            raise ValueError("two-sided ambiguity needs at least 4 classes")
        if self.num_classes < 2 or self.num_classes > 255:
            raise ValueError(f"num_classes must be in [2, 255], got {self.num_classes}")


def _rng(spec: SceneSpec, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((spec.seed & (1 << 64) - 1, stream)))


def _rect_label_map(spec: SceneSpec) -> np.ndarray:
    """Tile the grid with random rectangles; the first B rectangles get a
    permutation of all classes so none is missing on grids that allow it."""
    h, w, b = spec.height, spec.width, spec.num_classes
    rng = _rng(spec, 0)
    target = max(b, (h * w) // 24)
    rects = [(0, 0, h, w)]
    while len(rects) < target:
        areas = [rh * rw for (_, _, rh, rw) in rects]
        k = max(range(len(rects)), key=lambda i: (areas[i], -i))
        i0, j0, rh, rw = rects[k]
        if rh < 2 and rw < 2:
            break
        split_rows = rh >= rw if rh >= 2 else False
        if split_rows:
            lo, hi = (2, rh - 2) if rh >= 4 else (1, rh - 1)
            cut = int(rng.integers(lo, hi + 1))
            new = [(i0, j0, cut, rw), (i0 + cut, j0, rh - cut, rw)]
        else:
            lo, hi = (2, rw - 2) if rw >= 4 else (1, rw - 1)
            cut = int(rng.integers(lo, hi + 1))
            new = [(i0, j0, rh, cut), (i0, j0 + cut, rh, rw - cut)]
        rects[k : k + 1] = new
    classes = list(rng.permutation(b)[: min(b, len(rects))])
    classes += [int(rng.integers(0, b)) for _ in range(len(rects) - len(classes))]
    labels = np.empty((h, w), dtype=np.int64)
    for (i0, j0, rh, rw), cls in zip(rects, classes):
        labels[i0 : i0 + rh, j0 : j0 + rw] = cls
    return labels


def _collided_pairs(num_classes: int, xor_bit: int, ambiguity: float) -> list[tuple[int, int]]:
    pairs = [(k, k ^ xor_bit) for k in range(num_classes) if k < (k ^ xor_bit) < num_classes]
    return pairs[: math.ceil(ambiguity * len(pairs))]


def prototype_table(spec: SceneSpec, modality: str) -> np.ndarray:
    """Per-class prototypes for one modality, collisions applied."""
    dim = spec.feat_dim_c if modality == "c" else spec.feat_dim_d
    xor_bit = 1 if modality == "c" else 2
    rng = _rng(spec, 1 if modality == "c" else 2)
    protos = (rng.integers(0, 2, size=(spec.num_classes, dim)) * 2 - 1).astype(np.float64)
    protos *= spec.feature_scale
    for k, mate in _collided_pairs(spec.num_classes, xor_bit, spec.ambiguity):
        protos[mate] = protos[k]
    return protos


def generate_scene(spec: SceneSpec) -> tuple[PatchGrid, PatchGrid]:
    """Deterministic scene pair: shared label map and validity mask,
    per-modality prototype features with Gaussian noise."""
    labels = _rect_label_map(spec)
    grids = []
    for modality, stream in (("c", 3), ("d", 4)):
        protos = prototype_table(spec, modality)
        feats = protos[labels]
        if spec.noise_sigma > 0:
            feats = feats + _rng(spec, stream).normal(0.0, spec.noise_sigma, feats.shape)
        # f32 on disk, f64 in memory: quantize now so write/read is exact.
        grids.append(np.ascontiguousarray(feats.astype(np.float32).astype(np.float64)))
    n_hidden = math.ceil(spec.unlabeled_frac * spec.height * spec.width)
    masked = labels.copy()
    if n_hidden:
        flat = _rng(spec, 5).choice(spec.height * spec.width, size=n_hidden, replace=False)
        masked.reshape(-1)[flat] = SENTINEL_UNLABELED
    g_c = PatchGrid.create(grids[0], masked, spec.num_classes)
    g_d = PatchGrid.create(grids[1], masked, spec.num_classes)
    return g_c, g_d


def file_size(height: int, width: int, d_c: int, d_d: int) -> int:
    return _HEADER.size + 4 * height * width * (d_c + d_d) + height * width


def write_grid_pair(path, pair: tuple[PatchGrid, PatchGrid]) -> None:
    g_c, g_d = pair
    if (g_c.height, g_c.width) != (g_d.height, g_d.width):
        raise ValueError("grid pair disagrees on size")
    labels = g_c.labels.astype(np.int64).copy()
    labels[~g_c.valid] = UNLABELED_BYTE
    blob = _HEADER.pack(MAGIC, g_c.height, g_c.width, g_c.feat_dim, g_d.feat_dim, g_c.num_classes)
    blob += g_c.features.astype("<f4").tobytes()
    blob += g_d.features.astype("<f4").tobytes()
    blob += labels.astype(np.uint8).tobytes()
    assert len(blob) == file_size(g_c.height, g_c.width, g_c.feat_dim, g_d.feat_dim)
    Path(path).write_bytes(blob)


def read_grid_pair(path) -> tuple[PatchGrid, PatchGrid]:
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise ValueError(f"{path}: truncated header, {len(blob)} bytes < {_HEADER.size}")
    magic, h, w, d_c, d_d, b = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r} at byte 0")
    expect = file_size(h, w, d_c, d_d)
    if len(blob) != expect:
        raise ValueError(f"{path}: length mismatch at byte {len(blob)}, expected {expect} bytes")
    off = _HEADER.size
    feats = []
    for dim in (d_c, d_d):
        count = h * w * dim
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=off)
        feats.append(arr.astype(np.float64).reshape(h, w, dim))
        off += 4 * count
    raw = np.frombuffer(blob, dtype=np.uint8, count=h * w, offset=off).reshape(h, w)
    labels = raw.astype(np.int64)
    labels[raw == UNLABELED_BYTE] = SENTINEL_UNLABELED
    if labels.max(initial=SENTINEL_UNLABELED) >= b:
        raise ValueError(f"{path}: label byte out of range for {b} classes")
    return (
        PatchGrid.create(feats[0], labels, b),
        PatchGrid.create(feats[1], labels, b),
    )


MANIFEST_NAME = "manifest.txt"


def write_dataset(out_dir, scenes: list[tuple[PatchGrid, PatchGrid]]) -> list[str]:
    """One file per scene plus a manifest listing filenames in order."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for i, pair in enumerate(scenes):
        name = f"scene_{i:04d}.mmg"
        write_grid_pair(out / name, pair)
        names.append(name)
    (out / MANIFEST_NAME).write_text("".join(n + "\n" for n in names))
    return names


def read_dataset(data_dir) -> list[tuple[PatchGrid, PatchGrid]]:
    root = Path(data_dir)
    manifest = root / MANIFEST_NAME
    if not manifest.is_file():
        raise FileNotFoundError(f"no {MANIFEST_NAME} in {root}")
    names = [line.strip() for line in manifest.read_text().splitlines() if line.strip()]
    return [read_grid_pair(root / n) for n in names]
