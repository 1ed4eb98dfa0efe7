"""Datasets and labeled/unlabeled pool bookkeeping.

A :class:`Dataset` is an immutable bundle of a feature matrix, integer class
labels and duplicate-group ids.  A :class:`PoolPartition` tracks which row
indices are labeled; acquisition only ever moves indices from the unlabeled
pool to the labeled set.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    InvalidParameterError,
    LabelOutOfRangeError,
    ParseError,
)

__all__ = [
    "Dataset",
    "PoolPartition",
    "SplitSpec",
    "generate_gaussian_mixture",
    "duplicate_dataset",
    "initial_split",
    "load_dataset",
]


@dataclass(frozen=True)
class Dataset:
    """Feature matrix plus labels, class count and duplicate-group ids.

    Rows sharing a ``dup_group`` id are bitwise-equal copies of one sample.
    """

    features: np.ndarray  # (N, d) float64
    labels: np.ndarray  # (N,) int64 in [0, num_classes)
    num_classes: int
    dup_group: np.ndarray  # (N,) int64
    name: str = "dataset"

    def __post_init__(self):
        features = np.ascontiguousarray(self.features, dtype=np.float64)
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        dup_group = np.ascontiguousarray(self.dup_group, dtype=np.int64)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "dup_group", dup_group)
        self._validate()
        self.features.setflags(write=False)
        self.labels.setflags(write=False)
        self.dup_group.setflags(write=False)

    def _validate(self):
        if self.features.ndim != 2:
            raise InvalidParameterError("features must be a 2-D matrix")
        n, d = self.features.shape
        c = self.num_classes
        if c < 2:
            raise InvalidParameterError(f"num_classes must be >= 2, got {c}")
        if d < 1:
            raise InvalidParameterError("feature dimension must be >= 1")
        if n < c:
            raise InvalidParameterError(f"need at least {c} samples, got {n}")
        if self.labels.shape != (n,) or self.dup_group.shape != (n,):
            raise InvalidParameterError("labels/dup_group length must match N")
        if self.labels.min() < 0 or self.labels.max() >= c:
            raise InvalidParameterError(f"labels must lie in [0, {c})")
        if len(np.unique(self.labels)) != c:
            raise InvalidParameterError("every class must occur at least once")
        # rows within a duplicate group must be bitwise-equal
        order = np.argsort(self.dup_group, kind="stable")
        grp = self.dup_group[order]
        same_as_prev = grp[1:] == grp[:-1]
        if same_as_prev.any():
            rows = self.features[order]
            eq = (rows[1:] == rows[:-1]).all(axis=1)
            if not eq[same_as_prev].all():
                raise InvalidParameterError(
                    "rows sharing a dup_group id must be bitwise-equal")

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


class PoolPartition:
    """Disjoint labeled/unlabeled index sets covering all dataset rows.

    Both sets are kept as sorted int64 arrays; position within the unlabeled
    array is the tie-break order used throughout selection.
    """

    def __init__(self, labeled, unlabeled):
        self.labeled = np.sort(np.asarray(labeled, dtype=np.int64))
        self.unlabeled = np.sort(np.asarray(unlabeled, dtype=np.int64))
        self.check_invariants()

    def check_invariants(self):
        n = len(self.labeled) + len(self.unlabeled)
        union = np.union1d(self.labeled, self.unlabeled)
        if len(union) != n or (union != np.arange(n)).any():
            raise InvalidParameterError(
                "labeled/unlabeled must disjointly cover 0..N-1")
        if len(self.labeled) < 1:
            raise InvalidParameterError("labeled set must be non-empty")

    def acquire(self, indices):
        """Move ``indices`` from the unlabeled pool to the labeled set."""
        indices = np.asarray(indices, dtype=np.int64)
        if len(np.intersect1d(indices, self.unlabeled)) != len(set(indices.tolist())):
            raise InvalidParameterError("can only acquire unlabeled indices")
        self.labeled = np.sort(np.concatenate([self.labeled, indices]))
        mask = ~np.isin(self.unlabeled, indices)
        self.unlabeled = self.unlabeled[mask]
        self.check_invariants()

    def copy(self) -> "PoolPartition":
        return PoolPartition(self.labeled.copy(), self.unlabeled.copy())


@dataclass(frozen=True)
class SplitSpec:
    """How to draw the initial labeled set."""

    initial_labeled: int = 500
    seed: int = 0
    stratified: bool = False


def _class_means(num_classes: int, dim: int, class_sep: float) -> np.ndarray:
    """Deterministic, well-separated class centers.

    Centers cycle through signed coordinate axes at growing radii, so any
    number of classes fits in any dimension and all pairwise distances scale
    linearly with ``class_sep``.
    """
    means = np.zeros((num_classes, dim))
    for k in range(num_classes):
        axis = k % dim
        sign = 1.0 if (k // dim) % 2 == 0 else -1.0
        radius = 1.0 + k // (2 * dim)
        means[k, axis] = sign * radius * class_sep
    return means


def generate_gaussian_mixture(num_classes: int, dim: int, n_per_class: int,
                              class_sep: float, seed: int) -> Dataset:
    """Seeded isotropic Gaussian mixture with one unit-variance blob per class."""
    if num_classes < 2:
        raise InvalidParameterError("num_classes must be >= 2")
    if dim < 1:
        raise InvalidParameterError("dim must be >= 1")
    if n_per_class < 1:
        raise InvalidParameterError("n_per_class must be >= 1")
    if not class_sep > 0:
        raise InvalidParameterError("class_sep must be > 0")

    rng = np.random.default_rng(seed)
    means = _class_means(num_classes, dim, class_sep)
    n = num_classes * n_per_class
    labels = np.repeat(np.arange(num_classes, dtype=np.int64), n_per_class)
    features = means[labels] + rng.standard_normal((n, dim))
    perm = rng.permutation(n)
    name = f"gauss_c{num_classes}_d{dim}_n{n_per_class}_sep{class_sep:g}_s{seed}"
    return Dataset(features[perm], labels[perm], num_classes,
                   np.arange(n, dtype=np.int64), name)


def duplicate_dataset(ds: Dataset, factor: int, seed: int) -> Dataset:
    """Repeat every row ``factor`` times, sharing a dup_group id per original row."""
    if factor < 2:
        raise InvalidParameterError("duplication factor must be >= 2")
    n = ds.n_samples
    features = np.tile(ds.features, (factor, 1))
    labels = np.tile(ds.labels, factor)
    dup_group = np.tile(ds.dup_group, factor)
    perm = np.random.default_rng(seed).permutation(n * factor)
    return Dataset(features[perm], labels[perm], ds.num_classes,
                   dup_group[perm], f"{ds.name}_x{factor}")


def initial_split(ds: Dataset, spec: SplitSpec) -> PoolPartition:
    """Draw the initial labeled set; uniform by default, optionally stratified."""
    n = ds.n_samples
    k = spec.initial_labeled
    if k > n:
        raise InvalidParameterError(
            f"initial_labeled {k} exceeds dataset size {n}")
    if k < 1:
        raise InvalidParameterError("initial_labeled must be >= 1")
    rng = np.random.default_rng(spec.seed)
    if not spec.stratified:
        labeled = rng.choice(n, size=k, replace=False)
    else:
        c = ds.num_classes
        base, rem = divmod(k, c)
        # classes receiving one extra sample are chosen by the same rng
        extra = np.zeros(c, dtype=np.int64)
        extra[rng.permutation(c)[:rem]] = 1
        parts = []
        for cls in range(c):
            members = np.flatnonzero(ds.labels == cls)
            take = base + extra[cls]
            if take > len(members):
                raise InvalidParameterError(
                    f"class {cls} has only {len(members)} samples, "
                    f"stratified split needs {take}")
            parts.append(rng.choice(members, size=take, replace=False))
        labeled = np.concatenate(parts)
    unlabeled = np.setdiff1d(np.arange(n, dtype=np.int64), labeled)
    return PoolPartition(labeled, unlabeled)


def _dup_groups_by_hash(features: np.ndarray) -> np.ndarray:
    """Assign dup_group ids by exact-row byte equality, first occurrence wins."""
    groups = np.empty(len(features), dtype=np.int64)
    seen: dict[bytes, int] = {}
    for i, row in enumerate(features):
        key = row.tobytes()
        groups[i] = seen.setdefault(key, i)
    return groups


def _load_csv(path: str) -> Dataset:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError(f"{path}: empty file")
    header = [h.strip() for h in lines[0].split(",")]
    label_cols = [i for i, h in enumerate(header)
                  if h == "label" or h.startswith("label:")]
    if len(label_cols) != 1:
        raise ParseError(f"{path}:1: header must name exactly one label column")
    label_idx = label_cols[0]
    declared = None
    if header[label_idx].startswith("label:"):
        try:
            declared = int(header[label_idx].split(":", 1)[1])
        except ValueError:
            raise ParseError(f"{path}:1: bad class count in label column") from None
        if declared < 2:
            raise ParseError(f"{path}:1: declared class count must be >= 2")
    feat_idx = [i for i in range(len(header)) if i != label_idx]
    if not feat_idx:
        raise ParseError(f"{path}:1: no feature columns")

    rows, labels = [], []
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != len(header):
            raise ParseError(
                f"{path}:{ln}: expected {len(header)} fields, got {len(cells)}")
        try:
            rows.append([float(cells[i]) for i in feat_idx])
            label = int(cells[label_idx])
        except ValueError as exc:
            raise ParseError(f"{path}:{ln}: {exc}") from None
        if label < 0 or (declared is not None and label >= declared):
            raise LabelOutOfRangeError(
                f"{path}:{ln}: label {label} outside [0, {declared})")
        labels.append(label)
    if not rows:
        raise ParseError(f"{path}: no data rows")
    features = np.asarray(rows, dtype=np.float64)
    labels_arr = np.asarray(labels, dtype=np.int64)
    num_classes = declared if declared is not None else int(labels_arr.max()) + 1
    return Dataset(features, labels_arr, num_classes,
                   _dup_groups_by_hash(features), name=path)


_IDX_IMAGES_MAGIC = 0x00000803
_IDX_LABELS_MAGIC = 0x00000801


def _load_idx(path: str) -> Dataset:
    if "images" not in path:
        raise InvalidParameterError(
            "idx path must be the images file (labels file is found by "
            "substituting 'images' -> 'labels')")
    labels_path = path.replace("images", "labels")

    with open(path, "rb") as fh:
        head = fh.read(16)
        if len(head) < 16:
            raise ParseError(f"{path}: truncated idx header")
        magic, n, rows, cols = struct.unpack(">IIII", head)
        if magic != _IDX_IMAGES_MAGIC:
            raise ParseError(f"{path}: bad magic {magic:#010x}")
        raw = fh.read(n * rows * cols)
    if len(raw) != n * rows * cols:
        raise ParseError(f"{path}: truncated at offset {16 + len(raw)}")
    features = np.frombuffer(raw, dtype=np.uint8).reshape(n, rows * cols)
    features = features.astype(np.float64) / 255.0

    with open(labels_path, "rb") as fh:
        head = fh.read(8)
        if len(head) < 8:
            raise ParseError(f"{labels_path}: truncated idx header")
        magic, n_lab = struct.unpack(">II", head)
        if magic != _IDX_LABELS_MAGIC:
            raise ParseError(f"{labels_path}: bad magic {magic:#010x}")
        raw = fh.read(n_lab)
    if len(raw) != n_lab:
        raise ParseError(f"{labels_path}: truncated at offset {8 + len(raw)}")
    if n_lab != n:
        raise ParseError(f"{labels_path}: {n_lab} labels for {n} images")
    labels = np.frombuffer(raw, dtype=np.uint8).astype(np.int64)
    num_classes = int(labels.max()) + 1
    return Dataset(features, labels, num_classes,
                   _dup_groups_by_hash(features), name=path)


def load_dataset(path: str, format: str) -> Dataset:
    """Load a dataset from disk.

    ``csv``: header row names the feature columns plus ``label`` (or
    ``label:<c>`` to declare the class count).  ``idx``: big-endian
    magic-number image/label pair files; pixels are flattened and scaled
    to [0, 1].
    """
    if format == "csv":
        return _load_csv(path)
    if format == "idx":
        return _load_idx(path)
    raise InvalidParameterError(f"unknown format {format!r}")
