"""Seeded image augmentations for synthetic query generation.

Appearance ops change photometry only; viewpoint ops resample the
geometry and always return an image of the original size. Every op
preserves the source pose, which is what makes augmented images usable
as training queries whose ground-truth place is known for free.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .colorops import adjust_contrast, luma, rotate_hue
from .dataset import ImageRecord
from .errors import NothingToSample, VprError
from .imageops import sample_bilinear

APPEARANCE_KINDS = (
    "identity",
    "brightness",
    "contrast",
    "hue_shift",
    "grayscale",
    "gamma",
    "gaussian_noise",
    "box_blur",
)
VIEWPOINT_KINDS = ("identity", "crop_resize", "horizontal_flip", "perspective_jitter")

DEFAULT_RANGES: dict[str, tuple[float, float]] = {
    "brightness": (-0.3, 0.3),
    "contrast": (0.6, 1.6),
    "hue_shift": (-40.0, 40.0),
    "gamma": (0.5, 2.0),
    "gaussian_noise": (0.01, 0.08),
    "box_blur": (1, 2),
    "crop_scale": (0.7, 1.0),
    "perspective": (0.0, 0.10),  # corner displacement as fraction of side
}


@dataclass(frozen=True)
class AugmentationOp:
    """One fully parameterized transform."""

    kind: str
    params: tuple[float, ...] = ()

    @property
    def category(self) -> str:
        if self.kind == "identity":
            return "appearance,viewpoint"
        return "appearance" if self.kind in APPEARANCE_KINDS else "viewpoint"

    def tag(self) -> str:
        if not self.params:
            return self.kind
        return self.kind + "(" + ",".join(f"{p:.3g}" for p in self.params) + ")"


@dataclass
class AugmentationSpec:
    """Which op categories are enabled and with what parameter ranges.

    ``categories`` is a subset of {"appearance", "viewpoint"}; the empty
    set is the explicit no-augmentation baseline (sample_op then always
    yields identity).
    """

    categories: frozenset[str] = frozenset({"appearance", "viewpoint"})
    ranges: dict[str, tuple[float, float]] = field(
        default_factory=lambda: dict(DEFAULT_RANGES)
    )
    include_flip: bool = False  # flips can alias symmetric synthetic scenes
    kind_whitelist: frozenset[str] | None = None  # None = all kinds of the categories
    seed: int = 0

    @classmethod
    def from_string(cls, text: str, seed: int = 0) -> "AugmentationSpec":
        """Parse the config-file form: 'appearance,viewpoint' | 'none' etc."""
        text = text.strip().lower()
        if text == "none":
            return cls(categories=frozenset(), seed=seed)
        cats = frozenset(p.strip() for p in text.split(",") if p.strip())
        bad = cats - {"appearance", "viewpoint"}
        if bad:
            raise VprError(f"unknown augmentation category {sorted(bad)[0]!r}")
        return cls(categories=cats, seed=seed)

    def enabled_kinds(self) -> list[str]:
        kinds: list[str] = []
        if "appearance" in self.categories:
            kinds += [k for k in APPEARANCE_KINDS if k != "identity"]
        if "viewpoint" in self.categories:
            kinds += [k for k in VIEWPOINT_KINDS if k != "identity"]
            if not self.include_flip:
                kinds.remove("horizontal_flip")
        if self.kind_whitelist is not None:
            kinds = [k for k in kinds if k in self.kind_whitelist]
        return kinds


def sample_op(spec: AugmentationSpec, rng: np.random.Generator) -> AugmentationOp:
    """Uniformly pick an enabled kind, then its parameters from the ranges."""
    if not spec.categories:
        return AugmentationOp("identity")
    kinds = spec.enabled_kinds()
    if not kinds:
        raise NothingToSample("augmentation spec enables no op kinds")
    kind = kinds[int(rng.integers(0, len(kinds)))]
    r = spec.ranges
    if kind in ("brightness", "contrast", "hue_shift", "gamma", "gaussian_noise"):
        lo, hi = r[kind]
        return AugmentationOp(kind, (float(rng.uniform(lo, hi)),))
    if kind == "box_blur":
        lo, hi = r[kind]
        return AugmentationOp(kind, (float(rng.integers(int(lo), int(hi) + 1)),))
    if kind == "crop_resize":
        lo, hi = r["crop_scale"]
        scale = float(rng.uniform(lo, hi))
        ox = float(rng.uniform(0.0, 1.0 - scale))
        oy = float(rng.uniform(0.0, 1.0 - scale))
        return AugmentationOp(kind, (scale, ox, oy))
    if kind == "perspective_jitter":
        lo, hi = r["perspective"]
        disp = rng.uniform(-hi, hi, size=8)
        return AugmentationOp(kind, tuple(float(d) for d in disp))
    return AugmentationOp(kind)  # grayscale, horizontal_flip, identity


def _box_blur(img: np.ndarray, radius: int) -> np.ndarray:
    h, w = img.shape[:2]
    pad = np.pad(img, ((radius, radius), (radius, radius), (0, 0)), mode="edge")
    integral = np.zeros((h + 2 * radius + 1, w + 2 * radius + 1, img.shape[2]))
    integral[1:, 1:] = np.cumsum(np.cumsum(pad, axis=0), axis=1)
    k = 2 * radius + 1
    out = (
        integral[k:, k:]
        - integral[:-k, k:]
        - integral[k:, :-k]
        + integral[:-k, :-k]
    )
    return out / (k * k)


def _homography_from_corners(dst: np.ndarray, src: np.ndarray) -> np.ndarray:
    """3x3 matrix mapping each dst corner (x, y) to its src corner."""
    a = np.zeros((8, 8))
    b = np.zeros(8)
    for i, ((x, y), (u, v)) in enumerate(zip(dst, src)):
        a[2 * i] = [x, y, 1, 0, 0, 0, -u * x, -u * y]
        b[2 * i] = u
        a[2 * i + 1] = [0, 0, 0, x, y, 1, -v * x, -v * y]
        b[2 * i + 1] = v
    h = np.linalg.solve(a, b)
    return np.append(h, 1.0).reshape(3, 3)


def _warp_perspective(img: np.ndarray, disp: tuple[float, ...]) -> np.ndarray:
    h, w = img.shape[:2]
    side = float(min(h, w))
    corners_dst = np.array([[0, 0], [w - 1, 0], [w - 1, h - 1], [0, h - 1]], float)
    d = np.asarray(disp, dtype=np.float64).reshape(4, 2) * side
    corners_src = corners_dst + d
    hom = _homography_from_corners(corners_dst, corners_src)
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    denom = hom[2, 0] * xs + hom[2, 1] * ys + hom[2, 2]
    u = (hom[0, 0] * xs + hom[0, 1] * ys + hom[0, 2]) / denom
    v = (hom[1, 0] * xs + hom[1, 1] * ys + hom[1, 2]) / denom
    return sample_bilinear(img, v, u)


def _crop_resize(img: np.ndarray, scale: float, ox: float, oy: float) -> np.ndarray:
    h, w = img.shape[:2]
    y0, x0 = oy * (h - 1), ox * (w - 1)
    ys = y0 + np.linspace(0.0, scale * (h - 1), h)
    xs = x0 + np.linspace(0.0, scale * (w - 1), w)
    grid_y, grid_x = np.meshgrid(ys, xs, indexing="ij")
    return sample_bilinear(img, grid_y, grid_x)


def apply(
    image: ImageRecord, op: AugmentationOp, rng: np.random.Generator
) -> ImageRecord:
    """Apply one op; same dimensions, pixels clamped to [0, 1], pose kept."""
    img = image.pixels
    kind = op.kind
    if kind == "identity":
        out = img.copy()
    elif kind == "brightness":
        out = img + op.params[0]
    elif kind == "contrast":
        out = adjust_contrast(img, op.params[0])
    elif kind == "hue_shift":
        out = rotate_hue(img, op.params[0])
    elif kind == "grayscale":
        out = np.repeat(luma(img)[..., None], 3, axis=-1)
    elif kind == "gamma":
        out = np.clip(img, 0.0, 1.0) ** op.params[0]
    elif kind == "gaussian_noise":
        out = img + rng.normal(0.0, op.params[0], size=img.shape)
    elif kind == "box_blur":
        out = _box_blur(img, int(op.params[0]))
    elif kind == "crop_resize":
        out = _crop_resize(img, *op.params)
    elif kind == "horizontal_flip":
        out = img[:, ::-1, :].copy()
    elif kind == "perspective_jitter":
        out = _warp_perspective(img, op.params)
    else:
        raise VprError(f"unknown augmentation kind {kind!r}")
    return ImageRecord(
        id=f"{image.id}#{op.tag()}",
        pixels=np.clip(out, 0.0, 1.0),
        pose=image.pose,
    )
