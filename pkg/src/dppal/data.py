"""Datasets: the synthetic sine-band task, CSV ingestion, splits and fake labels."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from dppal.errors import InputError, ParameterError, ParseError

# sine band: label 1 iff |y - CENTER - A sin(2 pi F x)| <= W
BAND_AMPLITUDE = 0.25
BAND_FREQUENCY = 1.5
BAND_HALFWIDTH = 0.15
BAND_CENTER = 0.5

# fake-label band used for tuning; deliberately unlike the true one
FAKE_AMPLITUDE = 0.15
FAKE_FREQUENCY = 0.75
FAKE_PHASE = 0.25 * math.pi
FAKE_HALFWIDTH = 0.2
FAKE_CENTER = 0.45

FAKE_LABEL_ATTEMPTS = 1000


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray = field(repr=False)
    labels: np.ndarray | None = field(default=None, repr=False)
    n_classes: int = 0
    name: str = ""

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] < 1:
            raise InputError("features must be a non-empty 2-D array")
        if not np.all(np.isfinite(x)):
            raise InputError("features must be finite")
        object.__setattr__(self, "features", x)
        if self.labels is not None:
            y = np.asarray(self.labels, dtype=np.int64)
            if y.shape != (x.shape[0],):
                raise InputError(f"{y.shape[0]} labels for {x.shape[0]} rows")
            c = self.n_classes or int(y.max()) + 1
            if y.min() < 0 or y.max() >= c:
                raise InputError(f"labels outside [0, {c})")
            object.__setattr__(self, "labels", y)
            object.__setattr__(self, "n_classes", c)

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]

    def subset(self, idx, name=None):
        idx = np.asarray(idx, dtype=np.intp)
        y = None if self.labels is None else self.labels[idx]
        return Dataset(self.features[idx], y, self.n_classes, name or self.name)


@dataclass(frozen=True)
class SineSpec:
    n: int = 1000
    amplitude: float = BAND_AMPLITUDE
    frequency: float = BAND_FREQUENCY
    halfwidth: float = BAND_HALFWIDTH
    center: float = BAND_CENTER
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ParameterError("n must be >= 1")
        if not self.halfwidth > 0:
            raise ParameterError("halfwidth must be > 0")


def sine_band_labels(x, amplitude=BAND_AMPLITUDE, frequency=BAND_FREQUENCY,
                     halfwidth=BAND_HALFWIDTH, center=BAND_CENTER, phase=0.0):
    x = np.asarray(x, dtype=np.float64)
    offset = x[:, 1] - center - amplitude * np.sin(2 * np.pi * frequency * x[:, 0] + phase)
    return (np.abs(offset) <= halfwidth).astype(np.int64)


def generate_sine_dataset(spec=SineSpec()):
    rng = np.random.default_rng(spec.seed)
    x = rng.random((spec.n, 2))
    y = sine_band_labels(x, spec.amplitude, spec.frequency, spec.halfwidth, spec.center)
    return Dataset(x, y, 2, f"sine-{spec.seed}")


def minmax_normalize(x):
    """Scale each column to [0, 1]; constant columns become 0."""
    x = np.asarray(x, dtype=np.float64)
    lo = x.min(axis=0)
    span = x.max(axis=0) - lo
    safe = np.where(span > 0, span, 1.0)
    return np.where(span > 0, (x - lo) / safe, 0.0)


def load_csv(path, label_column=None, normalize=True, name=None):
    """Read a headed comma-separated file.

    Every column other than ``label_column`` must be numeric. Labels are
    re-indexed densely in order of first appearance.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError("empty file", 1)
    header = [h.strip() for h in rows[0]]
    if label_column is not None and label_column not in header:
        raise ParseError(f"label column {label_column!r} not in header", 1)
    li = header.index(label_column) if label_column is not None else -1
    feats, raw = [], []
    for r, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", r)
        vals = []
        for c, cell in enumerate(row):
            if c == li:
                if not cell.strip():
                    raise ParseError("missing label", r)
                raw.append(cell.strip())
                continue
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"non-numeric value {cell!r} in column {header[c]!r}", r) from None
            if not math.isfinite(v):
                raise ParseError(f"non-finite value {cell!r} in column {header[c]!r}", r)
            vals.append(v)
        feats.append(vals)
    if not feats:
        raise ParseError("no data rows", 2)
    x = np.array(feats, dtype=np.float64).reshape(len(feats), -1)
    if normalize:
        x = minmax_normalize(x)
    labels, n_classes = None, 0
    if li >= 0:
        codes = {}
        labels = np.array([codes.setdefault(v, len(codes)) for v in raw], dtype=np.int64)
        n_classes = len(codes)
    return Dataset(x, labels, n_classes, name or str(path))


def save_csv(ds, path, label_column="label"):
    d = ds.d
    header = [f"x{i}" for i in range(d)]
    if ds.labels is not None:
        header.append(label_column)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(ds.n):
            row = [repr(float(v)) for v in ds.features[i]]
            if ds.labels is not None:
                row.append(str(int(ds.labels[i])))
            w.writerow(row)


def split_halves(ds, seed=0):
    """Random disjoint halves of sizes ceil(N/2) and floor(N/2)."""
    if ds.n < 2:
        raise InputError("need at least 2 rows to split")
    perm = np.random.default_rng(seed).permutation(ds.n)
    cut = (ds.n + 1) // 2
    return ds.subset(np.sort(perm[:cut]), ds.name + "/train"), ds.subset(np.sort(perm[cut:]), ds.name + "/test")


def fake_labels_centroid(features, n_classes, min_fraction=None, seed=0,
                         max_attempts=FAKE_LABEL_ATTEMPTS):
    """Nearest-random-centroid labels, redrawn until each class is big enough."""
    x = np.asarray(features, dtype=np.float64)
    n = x.shape[0]
    if n_classes < 1 or n < n_classes:
        raise ParameterError("need 1 <= C <= N")
    if min_fraction is None:
        min_fraction = 2.0 / (3.0 * n_classes)
    need = math.ceil(min_fraction * n - 1e-9)
    rng = np.random.default_rng(seed)
    for _ in range(max_attempts):
        centroids = x[rng.choice(n, size=n_classes, replace=False)]
        d2 = ((x[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        labels = np.argmin(d2, axis=1)
        if np.bincount(labels, minlength=n_classes).min() >= need:
            return labels.astype(np.int64)
    raise ParameterError(
        f"no balanced labelling in {max_attempts} attempts; try a smaller min_fraction"
    )


def fake_labels_sine(features):
    """Sine-band labels with shifted shape and phase, for hyperparameter tuning."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != 2:
        raise InputError("fake sine labels need 2-D features")
    return sine_band_labels(x, FAKE_AMPLITUDE, FAKE_FREQUENCY, FAKE_HALFWIDTH, FAKE_CENTER, FAKE_PHASE)
