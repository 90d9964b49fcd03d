"""Dataset container, synthetic generators, and IDX/CSV ingestion."""

import csv
import struct
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from .errors import (
    BadMagicError,
    ConfigurationError,
    CountMismatchError,
    CsvFormatError,
    DataError,
    TruncatedFileError,
)
from .utils import generator

SYNTHETIC_KINDS = ("two-gaussians", "two-moons", "linear-regression")

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

# dedicated stream so data generation never shares draws with training
_DATA_STREAM = 2 ** 62


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    feature_range: Tuple[float, float] = (-1.0, 1.0)
    class_count: Union[int, str] = 2

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=float)
        if self.features.ndim != 2 or len(self.features) < 1:
            raise DataError("features must be a nonempty N x d matrix")
        if self.labels.shape != (len(self.features),):
            raise DataError("need one label per feature row")
        lo, hi = self.feature_range
        if lo >= hi:
            raise DataError("feature range must be increasing")
        if self.features.min() < lo or self.features.max() > hi:
            raise DataError("features leave the declared range [%g, %g]" % (lo, hi))
        if self.class_count != "regression":
            k = int(self.class_count)
            if k < 1:
                raise DataError("class_count must be >= 1")
            if self.labels.min() < 0 or self.labels.max() >= k:
                raise DataError("labels must lie in [0, %d)" % k)

    def __len__(self):
        return len(self.features)

    @property
    def feature_dim(self):
        return self.features.shape[1]


def gen_synthetic(kind, n, d, noise, seed):
    """Deterministic desk-scale datasets.

    two-gaussians: alternating labels at antipodal centers +-0.5 on the
    first axis with isotropic noise; every other coordinate is pure
    noise. two-moons: two interleaved half circles in the first two
    coordinates. linear-regression: uniform features, y = x . w + noise.
    Features are clipped to [-1, 1].
    """
    if kind not in SYNTHETIC_KINDS:
        raise ConfigurationError("unknown synthetic dataset %r" % (kind,))
    if n < 2:
        raise ConfigurationError("n must be >= 2")
    if d < 1:
        raise ConfigurationError("d must be >= 1")
    rng = generator(seed, _DATA_STREAM)

    if kind == "two-gaussians":
        labels = (np.arange(n) % 2).astype(float)
        center = np.zeros(d)
        center[0] = 0.5
        signs = np.where(labels == 1.0, 1.0, -1.0)
        X = signs[:, None] * center[None, :] + noise * rng.normal(size=(n, d))
        return Dataset(np.clip(X, -1.0, 1.0), labels)

    if kind == "two-moons":
        if d < 2:
            raise ConfigurationError("two-moons needs d >= 2")
        labels = (np.arange(n) % 2).astype(float)
        t = rng.uniform(0.0, np.pi, size=n)
        upper = np.column_stack([np.cos(t), np.sin(t)])
        lower = np.column_stack([1.0 - np.cos(t), 0.5 - np.sin(t)])
        arc = np.where(labels[:, None] == 1.0, lower, upper)
        X = np.zeros((n, d))
        X[:, :2] = 0.6 * (arc - np.array([0.5, 0.125]))
        if d > 2:
            X[:, 2:] = noise * rng.normal(size=(n, d - 2))
        X[:, :2] += noise * rng.normal(size=(n, 2))
        return Dataset(np.clip(X, -1.0, 1.0), labels)

    w = rng.uniform(-1.0, 1.0, size=d)
    X = rng.uniform(-1.0, 1.0, size=(n, d))
    y = X @ w + noise * rng.normal(size=n)
    return Dataset(X, y, class_count="regression")


def _read_exact(fh, count, path, what):
    data = fh.read(count)
    if len(data) != count:
        raise TruncatedFileError(
            "%s: expected %d bytes of %s, found %d" % (path, count, what, len(data)))
    return data


def _read_idx_header(fh, path, magic, n_dims):
    raw = _read_exact(fh, 4 * (1 + n_dims), path, "header")
    words = struct.unpack(">%dI" % (1 + n_dims), raw)
    if words[0] != magic:
        raise BadMagicError(
            "%s: magic 0x%08x, expected 0x%08x" % (path, words[0], magic))
    return words[1:]


def load_idx(images_path, labels_path, limit=None):
    """Parse paired IDX image/label files into a Dataset.

    Pixels map affinely onto [-1, 1] (0 -> -1, 255 -> +1). `limit` keeps
    only the first rows of both files.
    """
    with open(images_path, "rb") as fh:
        count, rows, cols = _read_idx_header(fh, images_path, IDX_IMAGES_MAGIC, 3)
        pixels = np.frombuffer(
            _read_exact(fh, count * rows * cols, images_path, "pixel data"),
            dtype=np.uint8)
    with open(labels_path, "rb") as fh:
        (label_count,) = _read_idx_header(fh, labels_path, IDX_LABELS_MAGIC, 1)
        raw_labels = np.frombuffer(
            _read_exact(fh, label_count, labels_path, "label data"),
            dtype=np.uint8)
    if count != label_count:
        raise CountMismatchError(
            "%d images but %d labels" % (count, label_count))
    n = count if limit is None else max(0, min(count, int(limit)))
    if n < 1:
        raise DataError("limit leaves no rows")
    X = 2.0 * pixels.reshape(count, rows * cols)[:n].astype(float) / 255.0 - 1.0
    y = raw_labels[:n].astype(float)
    return Dataset(X, y, class_count=int(raw_labels[:n].max()) + 1)


def write_idx(images_path, labels_path, pixels, labels):
    """Write uint8 images (N, rows, cols) and labels (N,) as IDX files."""
    pixels = np.ascontiguousarray(pixels, dtype=np.uint8)
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    if pixels.ndim != 3 or len(pixels) != len(labels):
        raise DataError("need (N, rows, cols) pixels and N labels")
    n, rows, cols = pixels.shape
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols))
        fh.write(pixels.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, n))
        fh.write(labels.tobytes())


def load_csv(path, label_column, delimiter=","):
    """Header-and-rows numeric CSV into a Dataset.

    The label column is named in the header; every other column is a
    feature. Integral nonnegative labels make a classification dataset,
    anything else is tagged regression.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError("%s: empty file" % path)
        if label_column not in header:
            raise CsvFormatError(
                "%s: no column named %r in header" % (path, label_column))
        label_idx = header.index(label_column)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise CsvFormatError(
                    "%s:%d: %d cells, header has %d"
                    % (path, lineno, len(row), len(header)))
            try:
                rows.append([float(cell) for cell in row])
            except ValueError:
                raise CsvFormatError(
                    "%s:%d: non-numeric cell" % (path, lineno))
    if not rows:
        raise CsvFormatError("%s: no data rows after the header" % path)
    table = np.asarray(rows, dtype=float)
    y = table[:, label_idx]
    X = np.delete(table, label_idx, axis=1)
    integral = np.all(y == np.rint(y)) and y.min() >= 0
    class_count = int(y.max()) + 1 if integral else "regression"
    rng = (min(-1.0, float(X.min())), max(1.0, float(X.max())))
    return Dataset(X, y, feature_range=rng, class_count=class_count)


def write_csv(path, dataset, delimiter=",", label_column="label"):
    """Inverse of load_csv: f0..f{d-1} feature columns plus the label."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        writer.writerow(["f%d" % i for i in range(dataset.feature_dim)]
                        + [label_column])
        for x, yv in zip(dataset.features, dataset.labels):
            writer.writerow([repr(float(v)) for v in x] + [repr(float(yv))])
