"""Image augmentation: the none / light / heavier schemes.

Images are ``float32`` arrays of shape ``(height, width, channels)`` with
intensities in ``[0, 1]``.  Geometry uses pixel coordinates with ``x`` along
columns and ``y`` along rows; a transform maps input coordinates to output
coordinates and is applied by inverse mapping.
"""

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import InvalidCropError, InvalidTransformError

SCHEMES = ("none", "light", "heavier")

# heavier-scheme parameter ranges
FLIP_PROB = 0.5
TRANSLATE = (-0.1, 0.1)
SCALE = (0.85, 1.15)
ROTATE = (-math.pi / 180 * 22.5, math.pi / 180 * 22.5)
SHEAR = (-0.15, 0.15)
CONTRAST = (0.5, 1.5)
BRIGHTNESS = (-0.25, 0.25)


@dataclass(frozen=True)
class AugmentParams:
    flip: int = 1
    tx: float = 0.0
    ty: float = 0.0
    zx: float = 1.0
    zy: float = 1.0
    theta: float = 0.0
    phi: float = 0.0
    gamma: float = 1.0
    delta: float = 0.0

    @property
    def is_identity(self):
        return self == AugmentParams()


IDENTITY = AugmentParams()


@dataclass(frozen=True)
class Crop:
    height: int
    width: int
    # "auto" picks center for the none scheme and random otherwise
    mode: str = "auto"


@dataclass(frozen=True)
class Scheme:
    kind: str = "none"
    crop: Optional[Crop] = None

    def __post_init__(self):
        if self.kind not in SCHEMES:
            raise ValueError(f"unknown scheme {self.kind!r}; expected one of {SCHEMES}")


def as_image(img):
    img = np.asarray(img, dtype=np.float32)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3 or min(img.shape) < 1:
        raise ValueError(f"expected an (H, W, C) image, got shape {img.shape}")
    return img


def sample_flip(rng):
    return 1 - 2 * rng.bernoulli(FLIP_PROB)


def sample_heavier(rng):
    """Draw all nine parameters independently, in field order."""
    return AugmentParams(
        flip=sample_flip(rng),
        tx=rng.uniform(*TRANSLATE),
        ty=rng.uniform(*TRANSLATE),
        zx=rng.uniform(*SCALE),
        zy=rng.uniform(*SCALE),
        theta=rng.uniform(*ROTATE),
        phi=rng.uniform(*SHEAR),
        gamma=rng.uniform(*CONTRAST),
        delta=rng.uniform(*BRIGHTNESS),
    )


def sample_light(rng):
    """Flip and translation only; every other field stays at identity."""
    return AugmentParams(
        flip=sample_flip(rng),
        tx=rng.uniform(*TRANSLATE),
        ty=rng.uniform(*TRANSLATE),
    )


def affine_matrix(p, width=1, height=1):
    """The raw 3x3 matrix, anchored at the origin, translations scaled to pixels."""
    return np.array(
        [
            [p.flip * p.zx * math.cos(p.theta), -p.zy * math.sin(p.theta + p.phi), p.tx * width],
            [p.zx * math.sin(p.theta), p.zy * math.cos(p.theta + p.phi), p.ty * height],
            [0.0, 0.0, 1.0],
        ]
    )


def build_affine(p, width, height):
    """Affine matrix acting about the image center.

    Returns ``C @ A @ C^-1`` where ``C`` translates the origin to the center
    pixel ``((width - 1) / 2, (height - 1) / 2)`` and ``A`` is
    :func:`affine_matrix`.  Identity parameters give the identity exactly.
    """
    if width < 1 or height < 1:
        raise ValueError("width and height must be >= 1")
    m = affine_matrix(p, width, height)
    lin = m[:2, :2]
    center = np.array([(width - 1) / 2.0, (height - 1) / 2.0])
    out = np.eye(3)
    out[:2, :2] = lin
    out[:2, 2] = center + m[:2, 2] - lin @ center
    return out


def invert_affine(t):
    t = np.asarray(t, dtype=np.float64)
    if t.shape != (3, 3) or not np.all(np.isfinite(t)):
        raise InvalidTransformError("transform must be a finite 3x3 matrix")
    if t[2, 0] != 0 or t[2, 1] != 0 or t[2, 2] != 1:
        raise InvalidTransformError(f"bottom row must be [0, 0, 1], got {t[2]}")
    a, b, c, d = t[0, 0], t[0, 1], t[1, 0], t[1, 1]
    det = a * d - b * c
    if abs(det) < 1e-12:
        raise InvalidTransformError(f"singular transform (det={det:g})")
    inv = np.eye(3)
    if abs(det) == 1.0:
        # keeps flips and rotations by multiples of pi/2 exact
        inv[:2, :2] = np.array([[d, -b], [-c, a]]) * det
    else:
        inv[:2, :2] = np.array([[d, -b], [-c, a]]) / det
    inv[:2, 2] = -(inv[:2, :2] @ t[:2, 2])
    return inv


def reflect_coords(coord, n):
    """Mirror real coordinates into ``[0, n - 1]`` about the edge pixel centers."""
    if n == 1:
        return np.zeros_like(coord)
    period = 2.0 * (n - 1)
    c = np.mod(coord, period)
    return np.where(c > n - 1, period - c, c)


def warp(img, t):
    """Resample ``img`` under transform ``t`` by inverse mapping and bilinear interpolation."""
    img = as_image(img)
    h, w, _ = img.shape
    inv = invert_affine(t)
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    sx = inv[0, 0] * xs + inv[0, 1] * ys + inv[0, 2]
    sy = inv[1, 0] * xs + inv[1, 1] * ys + inv[1, 2]
    sx = reflect_coords(sx, w)
    sy = reflect_coords(sy, h)
    x0 = np.floor(sx).astype(np.intp)
    y0 = np.floor(sy).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    wx = (sx - x0)[:, :, None]
    wy = (sy - y0)[:, :, None]
    src = img.astype(np.float64)
    top = (1.0 - wx) * src[y0, x0] + wx * src[y0, x1]
    bottom = (1.0 - wx) * src[y1, x0] + wx * src[y1, x1]
    out = (1.0 - wy) * top + wy * bottom
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def adjust_contrast(img, gamma):
    """Scale deviations from the mean intensity (one scalar over all pixels and channels)."""
    img = as_image(img)
    if gamma == 1:
        return img.copy()
    src = img.astype(np.float64)
    mean = src.mean()
    return np.clip(gamma * (src - mean) + mean, 0.0, 1.0).astype(np.float32)


def adjust_brightness(img, delta):
    img = as_image(img)
    if delta == 0:
        return img.copy()
    return np.clip(img.astype(np.float64) + delta, 0.0, 1.0).astype(np.float32)


def crop(img, mode, h, w, rng=None):
    img = as_image(img)
    height, width, _ = img.shape
    if h < 1 or w < 1 or h > height or w > width:
        raise InvalidCropError(f"cannot crop {h}x{w} from a {height}x{width} image")
    if mode == "center":
        top, left = (height - h) // 2, (width - w) // 2
    elif mode == "random":
        top = rng.integers(0, height - h + 1)
        left = rng.integers(0, width - w + 1)
    else:
        raise ValueError(f"unknown crop mode {mode!r}")
    return img[top : top + h, left : left + w].copy()


def _crop_for(img, scheme, default_mode, rng):
    c = scheme.crop
    if c is None:
        return img
    mode = default_mode if c.mode == "auto" else c.mode
    return crop(img, mode, c.height, c.width, rng)


def apply_params(img, p):
    """Warp then contrast then brightness, skipping stages left at identity."""
    img = as_image(img)
    h, w, _ = img.shape
    geometric = replace(p, gamma=1.0, delta=0.0)
    out = img.copy() if geometric.is_identity else warp(img, build_affine(p, w, h))
    out = adjust_contrast(out, p.gamma)
    return adjust_brightness(out, p.delta)


def apply_scheme(img, scheme, rng):
    img = as_image(img)
    if scheme.kind == "none":
        return _crop_for(img.copy(), scheme, "center", rng)
    if scheme.kind == "light":
        p = sample_light(rng)
    else:
        p = sample_heavier(rng)
    out = apply_params(img, p)
    return _crop_for(out, scheme, "random", rng)


def load_png(path):
    from PIL import Image as PILImage

    with PILImage.open(path) as im:
        arr = np.asarray(im.convert("RGB") if im.mode not in ("L", "RGB") else im)
    return as_image(arr.astype(np.float32) / 255.0)


def save_png(img, path):
    from PIL import Image as PILImage

    img = as_image(img)
    data = np.floor(np.clip(img, 0.0, 1.0).astype(np.float64) * 255.0 + 0.5).astype(np.uint8)
    if data.shape[2] == 1:
        data = data[:, :, 0]
    PILImage.fromarray(data).save(path)
