"""Datasets, labeled/unlabeled splits, batch sampling, and a tiny image
file format.

A dataset is a labeled pool plus an unlabeled pool.  The unlabeled pool
keeps its true classes in ``hidden_labels`` for diagnostics only (did the
thresholds accept correct pseudo-labels?); values equal to ``num_classes``
mark out-of-class distractor points that no pseudo-label can ever be
correct for.  Training code never reads hidden labels - only the metrics
side does.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .augment import AugmentPolicy, augment_strong, augment_weak
from .core import ConfigError


def _rng(seed: int | np.random.Generator) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass
class SslDataset:
    """Labeled and unlabeled pools over the same feature space.

    hidden_labels aligns with unlabeled_x; a value of num_classes marks a
    distractor drawn from outside the label space.
    """

    labeled_x: np.ndarray
    labeled_y: np.ndarray
    unlabeled_x: np.ndarray
    hidden_labels: np.ndarray
    num_classes: int
    image_shape: tuple[int, int] | None = None

    def __post_init__(self):
        self.labeled_x = np.asarray(self.labeled_x, dtype=np.float64)
        self.labeled_y = np.asarray(self.labeled_y, dtype=np.int64)
        self.unlabeled_x = np.asarray(self.unlabeled_x, dtype=np.float64)
        self.hidden_labels = np.asarray(self.hidden_labels, dtype=np.int64)
        if self.labeled_x.shape[0] != self.labeled_y.shape[0]:
            raise ValueError("labeled_x and labeled_y disagree on length")
        if self.unlabeled_x.shape[0] != self.hidden_labels.shape[0]:
            raise ValueError("unlabeled_x and hidden_labels disagree on length")
        if self.labeled_y.size and (self.labeled_y.min() < 0 or self.labeled_y.max() >= self.num_classes):
            raise ValueError("labeled classes out of range")
        if self.hidden_labels.size and (self.hidden_labels.min() < 0 or self.hidden_labels.max() > self.num_classes):
            raise ValueError("hidden labels out of range (num_classes marks distractors)")

    @property
    def input_dim(self) -> int:
        if self.labeled_x.size:
            return int(self.labeled_x.shape[1])
        return int(self.unlabeled_x.shape[1])


# -- synthetic generators ----------------------------------------------------


def _append_distractors(
    x: np.ndarray,
    y: np.ndarray,
    num_classes: int,
    fraction: float,
    center: np.ndarray,
    spread: float,
    rng: np.random.Generator,
):
    """Add round(fraction * len(x)) gaussian points labeled num_classes."""
    if not 0.0 <= fraction < 1.0:
        raise ConfigError(f"distractor fraction must lie in [0, 1), got {fraction}")
    count = int(round(fraction * x.shape[0]))
    if count == 0:
        return x, y
    extra = center + rng.normal(0.0, spread, size=(count, x.shape[1]))
    x = np.concatenate([x, extra])
    y = np.concatenate([y, np.full(count, num_classes, dtype=np.int64)])
    return x, y


def make_two_moons(
    n: int,
    noise: float,
    seed: int | np.random.Generator,
    distractor_fraction: float = 0.0,
) -> SslDataset:
    """Two interleaving half-circles, one class per arc.

    The arcs are the standard parameterization: outer (cos t, sin t), inner
    (1 - cos t, 0.5 - sin t) for t in [0, pi], plus isotropic gaussian noise.
    """
    if n < 4:
        raise ConfigError(f"need at least 4 points, got {n}")
    if noise < 0.0:
        raise ConfigError(f"noise must be >= 0, got {noise}")
    gen = _rng(seed)
    n_out = n // 2
    n_in = n - n_out
    t_out = np.linspace(0.0, np.pi, n_out)
    t_in = np.linspace(0.0, np.pi, n_in)
    x = np.concatenate(
        [
            np.column_stack([np.cos(t_out), np.sin(t_out)]),
            np.column_stack([1.0 - np.cos(t_in), 0.5 - np.sin(t_in)]),
        ]
    )
    y = np.concatenate([np.zeros(n_out, dtype=np.int64), np.ones(n_in, dtype=np.int64)])
    if noise > 0.0:
        x = x + gen.normal(0.0, noise, size=x.shape)
    x, y = _append_distractors(x, y, 2, distractor_fraction, np.array([0.5, 0.25]), 1.0, gen)
    order = gen.permutation(x.shape[0])
    x, y = x[order], y[order]
    in_class = y < 2
    return SslDataset(
        labeled_x=x[in_class],
        labeled_y=y[in_class],
        unlabeled_x=x[~in_class],
        hidden_labels=y[~in_class],
        num_classes=2,
    )


def make_blobs(
    num_classes: int,
    n: int,
    spread: float | list[float],
    seed: int | np.random.Generator,
    dim: int = 2,
    centers: np.ndarray | None = None,
    distractor_fraction: float = 0.0,
) -> SslDataset:
    """Gaussian clusters, one per class, with per-class spread.

    Default centers sit on a radius-4 circle in the first two coordinates,
    so overlap is controlled entirely by the spreads.  Passing explicit
    centers supports degenerate setups (e.g. coincident clusters).
    """
    if num_classes < 2:
        raise ConfigError(f"need >= 2 classes, got {num_classes}")
    if n < num_classes:
        raise ConfigError(f"need >= {num_classes} points, got {n}")
    if dim < 2:
        raise ConfigError(f"need dim >= 2, got {dim}")
    spreads = np.asarray(
        [spread] * num_classes if np.isscalar(spread) else list(spread), dtype=np.float64
    )
    if spreads.shape[0] != num_classes or np.any(spreads < 0.0):
        raise ConfigError("need one non-negative spread per class")
    gen = _rng(seed)
    if centers is None:
        angles = 2.0 * np.pi * np.arange(num_classes) / num_classes
        centers = np.zeros((num_classes, dim))
        centers[:, 0] = 4.0 * np.cos(angles)
        centers[:, 1] = 4.0 * np.sin(angles)
    else:
        centers = np.asarray(centers, dtype=np.float64)
        if centers.shape != (num_classes, dim):
            raise ConfigError(f"centers must have shape {(num_classes, dim)}, got {centers.shape}")
    counts = np.full(num_classes, n // num_classes, dtype=np.int64)
    counts[: n % num_classes] += 1
    xs, ys = [], []
    for c in range(num_classes):
        xs.append(centers[c] + gen.normal(0.0, spreads[c], size=(counts[c], dim)))
        ys.append(np.full(counts[c], c, dtype=np.int64))
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    x, y = _append_distractors(
        x, y, num_classes, distractor_fraction, np.zeros(dim), float(spreads.max()) * 1.5, gen
    )
    order = gen.permutation(x.shape[0])
    x, y = x[order], y[order]
    in_class = y < num_classes
    return SslDataset(
        labeled_x=x[in_class],
        labeled_y=y[in_class],
        unlabeled_x=x[~in_class],
        hidden_labels=y[~in_class],
        num_classes=num_classes,
    )


def split_ssl(dataset: SslDataset, labels_per_class: int, seed: int | np.random.Generator) -> SslDataset:
    """Keep exactly labels_per_class labeled samples per class; everything
    else (plus any pre-existing unlabeled points) becomes unlabeled with its
    true class recorded as a hidden label."""
    if labels_per_class < 1:
        raise ConfigError(f"labels_per_class must be >= 1, got {labels_per_class}")
    gen = _rng(seed)
    keep_idx, drop_idx = [], []
    for c in range(dataset.num_classes):
        class_idx = np.nonzero(dataset.labeled_y == c)[0]
        if class_idx.shape[0] < labels_per_class:
            raise ConfigError(
                f"class {c} has {class_idx.shape[0]} labeled samples, need {labels_per_class}"
            )
        chosen = gen.choice(class_idx, size=labels_per_class, replace=False)
        keep = np.zeros(class_idx.shape[0], dtype=bool)
        keep[np.searchsorted(class_idx, np.sort(chosen))] = True
        keep_idx.append(class_idx[keep])
        drop_idx.append(class_idx[~keep])
    keep_all = np.concatenate(keep_idx)
    drop_all = np.concatenate(drop_idx)
    unl_x = np.concatenate([dataset.unlabeled_x, dataset.labeled_x[drop_all]]) if dataset.unlabeled_x.size else dataset.labeled_x[drop_all]
    hidden = np.concatenate([dataset.hidden_labels, dataset.labeled_y[drop_all]]) if dataset.hidden_labels.size else dataset.labeled_y[drop_all]
    order = gen.permutation(unl_x.shape[0])
    return SslDataset(
        labeled_x=dataset.labeled_x[keep_all],
        labeled_y=dataset.labeled_y[keep_all],
        unlabeled_x=unl_x[order],
        hidden_labels=hidden[order],
        num_classes=dataset.num_classes,
        image_shape=dataset.image_shape,
    )


# -- tiny image datasets -----------------------------------------------------

IMAGE_MAGIC = b"TIMG"
IMAGE_VERSION = 1
_HEADER = struct.Struct("<4sBBBBI")  # magic, version, classes, height, width, count


def write_image_dataset(path, images: np.ndarray, labels: np.ndarray, num_classes: int) -> None:
    """Serialize uint8 grayscale images (n, h, w) with one label byte each."""
    imgs = np.asarray(images, dtype=np.uint8)
    labs = np.asarray(labels, dtype=np.int64)
    if imgs.ndim != 3 or imgs.shape[0] != labs.shape[0]:
        raise ValueError(f"expected (n, h, w) images aligned with labels, got {imgs.shape}")
    n, h, w = imgs.shape
    if not 2 <= num_classes <= 255 or h > 255 or w > 255:
        raise ValueError("format limits: classes and sides must fit one byte")
    if labs.size and (labs.min() < 0 or labs.max() >= num_classes):
        raise ValueError("labels out of range for the declared class count")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(IMAGE_MAGIC, IMAGE_VERSION, num_classes, h, w, n))
        for img, lab in zip(imgs, labs):
            fh.write(img.tobytes(order="C"))
            fh.write(bytes([int(lab)]))


def read_image_dataset(path):
    """Inverse of write_image_dataset -> (images, labels, num_classes)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ValueError("image file truncated before header")
    magic, version, num_classes, h, w, n = _HEADER.unpack_from(raw)
    if magic != IMAGE_MAGIC:
        raise ValueError(f"bad magic {magic!r}, expected {IMAGE_MAGIC!r}")
    if version != IMAGE_VERSION:
        raise ValueError(f"unsupported format version {version}")
    record = h * w + 1
    expected = _HEADER.size + n * record
    if len(raw) != expected:
        raise ValueError(f"image file has {len(raw)} bytes, expected {expected}")
    images = np.empty((n, h, w), dtype=np.uint8)
    labels = np.empty(n, dtype=np.int64)
    offset = _HEADER.size
    for i in range(n):
        images[i] = np.frombuffer(raw, dtype=np.uint8, count=h * w, offset=offset).reshape(h, w)
        labels[i] = raw[offset + h * w]
        offset += record
    if labels.size and labels.max() >= num_classes:
        raise ValueError("label byte exceeds the declared class count")
    return images, labels, num_classes


def load_image_dataset(path) -> SslDataset:
    """Read an image file into a fully-labeled dataset (pixels scaled to [0, 1])."""
    images, labels, num_classes = read_image_dataset(path)
    n, h, w = images.shape
    return SslDataset(
        labeled_x=images.reshape(n, h * w).astype(np.float64) / 255.0,
        labeled_y=labels,
        unlabeled_x=np.zeros((0, h * w)),
        hidden_labels=np.zeros(0, dtype=np.int64),
        num_classes=num_classes,
        image_shape=(h, w),
    )


def make_pattern_images(
    num_classes: int, n: int, size: int = 8, noise: float = 0.08, seed: int | np.random.Generator = 0
):
    """Synthetic grayscale patterns: class k is a bright bar at row k (mod
    size) over a dim background, with pixel jitter.  Returns (images, labels)
    ready for write_image_dataset."""
    if num_classes < 2 or num_classes > size:
        raise ConfigError(f"pattern classes must lie in [2, {size}], got {num_classes}")
    gen = _rng(seed)
    labels = gen.integers(0, num_classes, size=n)
    images = np.full((n, size, size), 32.0)
    for i, lab in enumerate(labels):
        images[i, int(lab) % size, :] = 224.0
    images += gen.normal(0.0, noise * 255.0, size=images.shape)
    return np.clip(images, 0, 255).astype(np.uint8), labels.astype(np.int64)


# -- batch sampling ----------------------------------------------------------


@dataclass
class LabeledBatch:
    weak: np.ndarray
    labels: np.ndarray


@dataclass
class UnlabeledBatch:
    """Weak and strong views of the same unlabeled rows.  Carries pool row
    indices (not classes) so the metrics side can look up hidden labels."""

    weak: np.ndarray
    strong: np.ndarray
    indices: np.ndarray


def batches_per_pass(num_unlabeled: int, unlabeled_batch: int) -> int:
    """Batches needed to see the unlabeled pool once (ceiling, >= 1)."""
    if num_unlabeled < 1 or unlabeled_batch < 1:
        raise ConfigError("pool and batch sizes must be >= 1")
    return max(1, -(-num_unlabeled // unlabeled_batch))


class BatchStream:
    """Samples index batches with replacement and materializes views.

    Per draw the generator is consumed in a fixed order (labeled indices,
    unlabeled indices, labeled weak views, unlabeled weak views, unlabeled
    strong views), so a saved generator state replays batches exactly.
    """

    def __init__(
        self,
        dataset: SslDataset,
        labeled_batch: int,
        mu: int,
        weak_policy: AugmentPolicy,
        strong_policy: AugmentPolicy,
        rng: np.random.Generator,
    ):
        if dataset.labeled_x.shape[0] == 0 or dataset.unlabeled_x.shape[0] == 0:
            raise ConfigError("training needs both labeled and unlabeled samples")
        if labeled_batch < 1 or mu < 1:
            raise ConfigError("batch size and mu must be >= 1")
        self.dataset = dataset
        self.labeled_batch = labeled_batch
        self.mu = mu
        self.weak_policy = weak_policy
        self.strong_policy = strong_policy
        self.rng = rng

    def next_pair(self) -> tuple[LabeledBatch, UnlabeledBatch]:
        ds = self.dataset
        li = self.rng.integers(0, ds.labeled_x.shape[0], size=self.labeled_batch)
        ui = self.rng.integers(0, ds.unlabeled_x.shape[0], size=self.labeled_batch * self.mu)
        lab_weak = augment_weak(ds.labeled_x[li], self.weak_policy, self.rng)
        unl_weak = augment_weak(ds.unlabeled_x[ui], self.weak_policy, self.rng)
        unl_strong = augment_strong(ds.unlabeled_x[ui], self.strong_policy, self.rng)
        return (
            LabeledBatch(weak=lab_weak, labels=ds.labeled_y[li]),
            UnlabeledBatch(weak=unl_weak, strong=unl_strong, indices=ui.astype(np.int64)),
        )
