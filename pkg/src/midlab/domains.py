"""
Labeled synthetic domains and the rigid transforms that shift them.

A target domain is a source domain pushed through a rotation about the
origin followed by a shift. Rotations by multiples of 90 degrees use exact
integer matrices, so 180 degrees is exact negation.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

DOMAIN_TAGS = ("source", "target", "generated")
FAMILIES = ("gaussian_mixture", "two_moons", "ring")


@dataclass
class LabeledDataset:
    points: np.ndarray  # (n, d)
    labels: np.ndarray  # (n,) int
    domain: str
    class_count: int

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim == 1:
            self.points = self.points.reshape(-1, 1)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.domain not in DOMAIN_TAGS:
            raise ValueError(f"domain tag must be one of {DOMAIN_TAGS}, got {self.domain!r}")
        n = self.points.shape[0]
        if n < 1:
            raise ValueError("a dataset needs at least one point")
        if self.labels.shape[0] != n:
            raise ValueError(f"{n} points but {self.labels.shape[0]} labels")
        if self.class_count < 1:
            raise ValueError("class_count must be at least 1")
        if self.labels.min() < 0 or self.labels.max() >= self.class_count:
            raise ValueError(f"labels must lie in [0, {self.class_count})")
        if not np.all(np.isfinite(self.points)):
            raise ValueError("points must be finite")

    def __len__(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]

    def of_class(self, k: int) -> "LabeledDataset":
        mask = self.labels == k
        if not mask.any():
            raise ValueError(f"class {k} absent from {self.domain} dataset")
        return LabeledDataset(self.points[mask], self.labels[mask], self.domain, self.class_count)

    def class_counts(self):
        return np.bincount(self.labels, minlength=self.class_count)

    def with_domain(self, domain: str) -> "LabeledDataset":
        return LabeledDataset(self.points.copy(), self.labels.copy(), domain, self.class_count)

    def subset(self, index) -> "LabeledDataset":
        return LabeledDataset(self.points[index], self.labels[index], self.domain, self.class_count)


def concat(datasets: Sequence[LabeledDataset], domain: str | None = None) -> LabeledDataset:
    """Stack datasets; the domain tag defaults to the first one's."""
    datasets = [d for d in datasets if d is not None]
    if not datasets:
        raise ValueError("nothing to concatenate")
    k = max(d.class_count for d in datasets)
    return LabeledDataset(
        np.concatenate([d.points for d in datasets]),
        np.concatenate([d.labels for d in datasets]),
        domain or datasets[0].domain,
        k,
    )


@dataclass
class DomainSpec:
    """Parameters of a synthetic labeled domain.

    gaussian_mixture: ``means`` (k, d) and ``covariances`` (k, d, d), or a
    scalar ``std`` shared isotropically by all classes.
    two_moons: two interleaved half circles scaled by ``scale``, with
    isotropic ``noise``; class_count must be 2.
    ring: concentric circles of the given ``radii`` with radial ``noise``.
    """

    family: str = "gaussian_mixture"
    class_count: int = 2
    means: np.ndarray | None = None
    covariances: np.ndarray | None = None
    std: float = 1.0
    radii: Sequence[float] | None = None
    noise: float = 0.1
    scale: float = 2.0
    rotation_degrees: float = 0.0
    shift: Sequence[float] | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}")
        if self.class_count < 1:
            raise ValueError("class_count must be at least 1")
        if not 0.0 <= self.rotation_degrees < 360.0:
            raise ValueError("rotation_degrees must lie in [0, 360)")
        if self.family == "gaussian_mixture":
            if self.means is None:
                raise ValueError("gaussian_mixture needs means")
            self.means = np.asarray(self.means, dtype=np.float64).reshape(self.class_count, -1)
            d = self.means.shape[1]
            if self.covariances is None:
                if not self.std > 0:
                    raise ValueError("std must be positive")
                self.covariances = np.broadcast_to(
                    np.eye(d) * self.std**2, (self.class_count, d, d)
                ).copy()
            self.covariances = np.asarray(self.covariances, dtype=np.float64).reshape(
                self.class_count, d, d
            )
            for k, cov in enumerate(self.covariances):
                if not np.allclose(cov, cov.T):
                    raise ValueError(f"covariance of class {k} is not symmetric")
                try:
                    np.linalg.cholesky(cov)
                except np.linalg.LinAlgError:
                    raise ValueError(f"covariance of class {k} is degenerate") from None
        elif self.family == "two_moons":
            if self.class_count != 2:
                raise ValueError("two_moons has exactly 2 classes")
            if self.noise < 0 or self.scale <= 0:
                raise ValueError("two_moons needs noise >= 0 and scale > 0")
        else:
            if self.radii is None or len(self.radii) != self.class_count:
                raise ValueError("ring needs one radius per class")
            if any(r <= 0 for r in self.radii) or self.noise < 0:
                raise ValueError("ring radii must be positive and noise >= 0")

    @property
    def dim(self):
        return self.means.shape[1] if self.family == "gaussian_mixture" else 2


def rotation_matrix(degrees: float) -> np.ndarray:
    quarter = degrees / 90.0
    if quarter == round(quarter):
        c, s = [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)][int(round(quarter)) % 4]
    else:
        rad = math.radians(degrees)
        c, s = math.cos(rad), math.sin(rad)
    return np.array([[c, -s], [s, c]])


def transform_points(points: np.ndarray, rotation_degrees: float = 0.0, shift=None) -> np.ndarray:
    """Rotate about the origin (first two coordinates), then shift.

    1-D data only admits rotations by multiples of 180 degrees (sign flips).
    """
    pts = np.array(points, dtype=np.float64, copy=True)
    d = pts.shape[1]
    if d == 1:
        half = rotation_degrees / 180.0
        if half != round(half):
            raise ValueError("1-D data can only be rotated by multiples of 180 degrees")
        if int(round(half)) % 2:
            pts = -pts
    else:
        r = rotation_matrix(rotation_degrees)
        pts[:, :2] = pts[:, :2] @ r.T
    if shift is not None:
        shift = np.asarray(shift, dtype=np.float64).reshape(-1)
        if shift.size != d:
            raise ValueError(f"shift has {shift.size} components for {d}-D data")
        pts = pts + shift
    return pts


def transform_dataset(data: LabeledDataset, rotation_degrees: float = 0.0, shift=None) -> LabeledDataset:
    return LabeledDataset(
        transform_points(data.points, rotation_degrees, shift),
        data.labels.copy(),
        data.domain,
        data.class_count,
    )


def _moon(k, n, rng, noise, scale):
    t = rng.uniform(0.0, math.pi, size=n)
    if k == 0:
        x = np.column_stack([np.cos(t), np.sin(t)])
    else:
        x = np.column_stack([1.0 - np.cos(t), 0.5 - np.sin(t)])
    # center the pair of moons on the origin so rotations act about the middle
    x -= np.array([0.5, 0.25])
    return scale * x + rng.normal(0.0, noise, size=x.shape)


def sample_domain(spec: DomainSpec, n_per_class: int, seed: int, domain: str = "source") -> LabeledDataset:
    """Draw a balanced labeled sample; classes are drawn in index order."""
    if n_per_class < 1:
        raise ValueError("n_per_class must be at least 1")
    rng = np.random.default_rng(seed)
    chunks = []
    for k in range(spec.class_count):
        if spec.family == "gaussian_mixture":
            chol = np.linalg.cholesky(spec.covariances[k])
            z = rng.standard_normal(size=(n_per_class, spec.dim))
            chunks.append(spec.means[k] + z @ chol.T)
        elif spec.family == "two_moons":
            chunks.append(_moon(k, n_per_class, rng, spec.noise, spec.scale))
        else:
            theta = rng.uniform(0.0, 2 * math.pi, size=n_per_class)
            r = spec.radii[k] + rng.normal(0.0, spec.noise, size=n_per_class)
            chunks.append(np.column_stack([r * np.cos(theta), r * np.sin(theta)]))
    points = np.concatenate(chunks)
    labels = np.repeat(np.arange(spec.class_count), n_per_class)
    if spec.rotation_degrees or spec.shift is not None:
        points = transform_points(points, spec.rotation_degrees, spec.shift)
    return LabeledDataset(points, labels, domain, spec.class_count)


def sample_noise(n: int, dimension: int, rng: np.random.Generator) -> np.ndarray:
    """Standard-normal generator input."""
    if dimension < 1:
        raise ValueError("noise dimension must be at least 1")
    return rng.standard_normal(size=(n, dimension))


# ---- CSV -------------------------------------------------------------------


def dataset_to_csv(data: LabeledDataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x{i}" for i in range(data.dim)] + ["label", "domain"])
    for row, label in zip(data.points, data.labels):
        w.writerow([f"{v:.9g}" for v in row] + [int(label), data.domain])
    return buf.getvalue()


def dataset_from_csv(text: str, class_count: int | None = None) -> LabeledDataset:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise ValueError("empty CSV")
    header = rows[0]
    d = len(header) - 2
    if d < 1 or header[-2:] != ["label", "domain"] or header[:d] != [f"x{i}" for i in range(d)]:
        raise ValueError(f"bad dataset header {header}")
    body = [r for r in rows[1:] if r]
    if not body:
        raise ValueError("CSV has no data rows")
    domains = {r[-1] for r in body}
    if len(domains) != 1:
        raise ValueError(f"mixed domain tags in one file: {sorted(domains)}")
    points = np.array([[float(v) for v in r[:d]] for r in body])
    labels = np.array([int(r[d]) for r in body])
    k = class_count if class_count is not None else int(labels.max()) + 1
    return LabeledDataset(points, labels, domains.pop(), k)
