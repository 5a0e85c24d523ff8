"""Stochastic input perturbations.

Every sample is consumed through a weak/strong view pair: the weak view is
a mild perturbation (the one predictions and thresholds are read from) and
the strong view is a heavier distortion of the same sample.  Policies are
plain data; all randomness comes from the Generator passed per call, and
the number of draws depends only on shapes, never on values, so replaying
a generator state replays the views exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ConfigError

_KINDS = ("weak", "strong")


@dataclass(frozen=True)
class AugmentPolicy:
    """One view policy.  Vector fields and image fields may be combined;
    zero-magnitude fields are no-ops, so an all-zero policy is identity.

    kind:          "weak" or "strong" (apply_* guards check this)
    noise_scale:   sigma of additive gaussian noise per coordinate
    dropout_prob:  per-coordinate zeroing probability (vector inputs)
    flip_prob:     horizontal mirror probability (image inputs)
    max_shift:     uniform +-pixel translation bound (image inputs)
    erase_size:    side of a square patch zeroed at a random spot (images)
    image_shape:   (height, width) when the flat input is an image
    """

    kind: str
    noise_scale: float = 0.0
    dropout_prob: float = 0.0
    flip_prob: float = 0.0
    max_shift: int = 0
    erase_size: int = 0
    image_shape: tuple[int, int] | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigError(f"policy kind must be one of {_KINDS}, got {self.kind!r}")
        if self.noise_scale < 0.0:
            raise ConfigError("noise_scale must be >= 0")
        if not 0.0 <= self.dropout_prob < 1.0:
            raise ConfigError("dropout_prob must lie in [0, 1)")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ConfigError("flip_prob must lie in [0, 1]")
        if self.max_shift < 0 or self.erase_size < 0:
            raise ConfigError("max_shift and erase_size must be >= 0")
        needs_image = self.flip_prob > 0 or self.max_shift > 0 or self.erase_size > 0
        if needs_image and self.image_shape is None:
            raise ConfigError("image operations need image_shape")
        if self.image_shape is not None:
            h, w = self.image_shape
            if h < 1 or w < 1:
                raise ConfigError("image_shape entries must be >= 1")
            if self.erase_size > min(h, w):
                raise ConfigError("erase_size larger than the image")


def vector_policies(
    weak_noise: float = 0.05,
    strong_noise: float = 0.25,
    strong_dropout: float = 0.1,
) -> tuple[AugmentPolicy, AugmentPolicy]:
    """Weak/strong pair for plain feature vectors.

    The strong view must dominate the weak one (larger noise), otherwise the
    two views carry no usable consistency signal.
    """
    if strong_noise <= weak_noise:
        raise ConfigError(
            f"strong noise ({strong_noise}) must exceed weak noise ({weak_noise})"
        )
    weak = AugmentPolicy(kind="weak", noise_scale=weak_noise)
    strong = AugmentPolicy(kind="strong", noise_scale=strong_noise, dropout_prob=strong_dropout)
    return weak, strong


def image_policies(
    image_shape: tuple[int, int],
    flip_prob: float = 0.5,
    max_shift: int = 2,
    strong_noise: float = 0.1,
    erase_size: int = 3,
) -> tuple[AugmentPolicy, AugmentPolicy]:
    """Weak/strong pair for flattened grayscale images.

    Weak: mirror + small translation.  Strong: the same plus pixel noise and
    random erasing of one patch.
    """
    weak = AugmentPolicy(
        kind="weak", flip_prob=flip_prob, max_shift=max_shift, image_shape=tuple(image_shape)
    )
    strong = AugmentPolicy(
        kind="strong",
        flip_prob=flip_prob,
        max_shift=max_shift,
        noise_scale=strong_noise,
        erase_size=erase_size,
        image_shape=tuple(image_shape),
    )
    return weak, strong


def _shift2d(img: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """Translate with zero fill (no wrap-around)."""
    h, w = img.shape
    out = np.zeros_like(img)
    r0, r1 = max(0, dy), min(h, h + dy)
    c0, c1 = max(0, dx), min(w, w + dx)
    out[r0:r1, c0:c1] = img[r0 - dy : r1 - dy, c0 - dx : c1 - dx]
    return out


def apply_policy(x: np.ndarray, policy: AugmentPolicy, rng: np.random.Generator) -> np.ndarray:
    """Perturb a sample (dim,) or batch (n, dim).  Shape is preserved.

    Draw order is fixed: flips, shifts, erase corners, noise, dropout mask.
    Per-sample draws happen even for samples the op ends up not touching so
    that consumption depends only on the batch shape.
    """
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    batch = arr[None, :] if single else arr
    if batch.ndim != 2:
        raise ValueError(f"expected 1-d or 2-d input, got shape {arr.shape}")
    n, dim = batch.shape
    out = batch.copy()

    is_image = policy.image_shape is not None
    if is_image:
        h, w = policy.image_shape
        if h * w != dim:
            raise ValueError(f"input dim {dim} does not match image shape {policy.image_shape}")
        imgs = out.reshape(n, h, w)
        if policy.flip_prob > 0.0:
            flips = rng.random(n) < policy.flip_prob
            imgs[flips] = imgs[flips, :, ::-1]
        if policy.max_shift > 0:
            s = policy.max_shift
            shifts = rng.integers(-s, s + 1, size=(n, 2))
            for i in range(n):
                imgs[i] = _shift2d(imgs[i], int(shifts[i, 0]), int(shifts[i, 1]))
        if policy.erase_size > 0:
            e = policy.erase_size
            rows = rng.integers(0, h - e + 1, size=n)
            cols = rng.integers(0, w - e + 1, size=n)
            for i in range(n):
                imgs[i, rows[i] : rows[i] + e, cols[i] : cols[i] + e] = 0.0
        out = imgs.reshape(n, dim)

    if policy.noise_scale > 0.0:
        out = out + rng.normal(0.0, policy.noise_scale, size=(n, dim))
        if is_image:
            out = np.clip(out, 0.0, 1.0)
    if policy.dropout_prob > 0.0:
        keep = rng.random((n, dim)) >= policy.dropout_prob
        out = out * keep

    return out[0] if single else out


def augment_weak(x: np.ndarray, policy: AugmentPolicy, rng: np.random.Generator) -> np.ndarray:
    if policy.kind != "weak":
        raise ValueError(f"expected a weak policy, got kind={policy.kind!r}")
    return apply_policy(x, policy, rng)


def augment_strong(x: np.ndarray, policy: AugmentPolicy, rng: np.random.Generator) -> np.ndarray:
    if policy.kind != "strong":
        raise ValueError(f"expected a strong policy, got kind={policy.kind!r}")
    return apply_policy(x, policy, rng)
