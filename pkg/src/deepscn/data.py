"""Dataset container, CSV round-trip, and synthetic data generators.

Two generators ship with the package: a 1-D bump-mixture regression target
used throughout the approximation experiments, and a rotated-glyph image set
(28x28 grayscale, rotation angle as the regression target) for the
angle-correction case study.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .exceptions import DimensionError, InvalidInputError
from .linalg import as_matrix

GLYPH_SIZE = 28
ANGLE_RANGE = 45.0  # degrees; glyph targets are uniform on [-45, 45]


@dataclass
class Dataset:
    """Paired input and target matrices over the same samples."""

    inputs: np.ndarray
    targets: np.ndarray
    feature_names: Optional[list[str]] = None
    target_names: Optional[list[str]] = None

    def __post_init__(self):
        self.inputs = as_matrix(self.inputs, "inputs")
        self.targets = as_matrix(self.targets, "targets")
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise DimensionError(
                f"inputs have {self.inputs.shape[0]} rows, targets "
                f"{self.targets.shape[0]}"
            )

    @property
    def n_samples(self) -> int:
        return self.inputs.shape[0]

    @property
    def n_features(self) -> int:
        return self.inputs.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.targets.shape[1]


def benchmark_function(x):
    """Three-bump test function on [0, 1]; two bumps are extremely narrow."""
    x = np.asarray(x, dtype=np.float64)
    return (0.2 * np.exp(-((10.0 * x - 4.0) ** 2))
            + 0.5 * np.exp(-((80.0 * x - 40.0) ** 2))
            + 0.3 * np.exp(-((80.0 * x - 20.0) ** 2)))


def gen_benchmark(n: int, lo: float = 0.0, hi: float = 1.0,
                  seed: int = 0) -> Dataset:
    """Noise-free samples of the bump mixture at uniform random abscissae."""
    if n < 1:
        raise InvalidInputError(f"need n >= 1, got {n}")
    if not lo < hi:
        raise InvalidInputError(f"need lo < hi, got lo={lo}, hi={hi}")
    rng = np.random.default_rng(seed)
    x = rng.uniform(lo, hi, size=(n, 1))
    return Dataset(inputs=x, targets=benchmark_function(x))


def rotate_image(pixels, angle: float) -> np.ndarray:
    """Rotate an image about its center by ``angle`` degrees.

    Inverse-mapped bilinear resampling; source coordinates falling outside
    the image read as 0.  Angle 0 is an exact identity.
    """
    img = np.asarray(pixels, dtype=np.float64)
    if img.ndim != 2:
        raise DimensionError("image must be 2-D")
    if not math.isfinite(angle):
        raise InvalidInputError("angle must be finite")
    if angle == 0.0:
        return img.copy()
    n_rows, n_cols = img.shape
    rc = (n_rows - 1) / 2.0
    cc = (n_cols - 1) / 2.0
    theta = math.radians(angle)
    cos_t, sin_t = math.cos(theta), math.sin(theta)

    rows, cols = np.meshgrid(np.arange(n_rows), np.arange(n_cols),
                             indexing="ij")
    dy = rows - rc
    dx = cols - cc
    # Inverse map: where did each output pixel come from?
    src_c = cos_t * dx + sin_t * dy + cc
    src_r = -sin_t * dx + cos_t * dy + rc

    r0 = np.floor(src_r).astype(np.int64)
    c0 = np.floor(src_c).astype(np.int64)
    fr = src_r - r0
    fc = src_c - c0

    def sample(ri, ci):
        valid = (ri >= 0) & (ri < n_rows) & (ci >= 0) & (ci < n_cols)
        out = np.zeros_like(src_r)
        out[valid] = img[ri[valid], ci[valid]]
        return out

    top = (1 - fc) * sample(r0, c0) + fc * sample(r0, c0 + 1)
    bottom = (1 - fc) * sample(r0 + 1, c0) + fc * sample(r0 + 1, c0 + 1)
    return (1 - fr) * top + fr * bottom


# Stroke endpoints (col, row) for ten digit-like glyphs on the 28x28 canvas.
# Kept within radius ~10 of the center so +-45 degree rotations never clip.
# The zero carries a slash and the one a flag so no template is rotation
# symmetric within the sampled angle range.
_SEG = {
    "top": ((9.5, 7.0), (18.5, 7.0)),
    "mid": ((9.5, 14.0), (18.5, 14.0)),
    "bot": ((9.5, 21.0), (18.5, 21.0)),
    "tl": ((9.5, 7.0), (9.5, 14.0)),
    "tr": ((18.5, 7.0), (18.5, 14.0)),
    "bl": ((9.5, 14.0), (9.5, 21.0)),
    "br": ((18.5, 14.0), (18.5, 21.0)),
}

_GLYPH_STROKES = [
    # 0: full ring plus a slash
    [_SEG["top"], _SEG["bot"], _SEG["tl"], _SEG["tr"], _SEG["bl"], _SEG["br"],
     ((17.0, 8.5), (11.0, 19.5))],
    # 1: center stroke with a flag
    [((14.0, 7.0), (14.0, 21.0)), ((10.5, 10.0), (14.0, 7.0))],
    # 2
    [_SEG["top"], _SEG["tr"], _SEG["mid"], _SEG["bl"], _SEG["bot"]],
    # 3
    [_SEG["top"], _SEG["tr"], _SEG["mid"], _SEG["br"], _SEG["bot"]],
    # 4
    [_SEG["tl"], _SEG["mid"], _SEG["tr"], _SEG["br"]],
    # 5
    [_SEG["top"], _SEG["tl"], _SEG["mid"], _SEG["br"], _SEG["bot"]],
    # 6
    [_SEG["top"], _SEG["tl"], _SEG["mid"], _SEG["br"], _SEG["bot"], _SEG["bl"]],
    # 7: top bar and a diagonal leg
    [_SEG["top"], ((18.5, 7.0), (12.5, 21.0))],
    # 8
    [_SEG["top"], _SEG["mid"], _SEG["bot"], _SEG["tl"], _SEG["tr"], _SEG["bl"],
     _SEG["br"]],
    # 9
    [_SEG["top"], _SEG["mid"], _SEG["bot"], _SEG["tl"], _SEG["tr"], _SEG["br"]],
]

# Gaussian stroke profile plus a final blur: the smoothness keeps the
# rotate/unrotate round trip accurate under double bilinear resampling.
_STROKE_SIGMA = 1.4
_TEMPLATE_BLUR = 1.2


def _render_strokes(strokes) -> np.ndarray:
    from scipy.ndimage import gaussian_filter

    rows, cols = np.meshgrid(np.arange(GLYPH_SIZE, dtype=np.float64),
                             np.arange(GLYPH_SIZE, dtype=np.float64),
                             indexing="ij")
    img = np.zeros((GLYPH_SIZE, GLYPH_SIZE))
    for (x0, y0), (x1, y1) in strokes:
        vx, vy = x1 - x0, y1 - y0
        length_sq = vx * vx + vy * vy
        t = ((cols - x0) * vx + (rows - y0) * vy) / length_sq
        t = np.clip(t, 0.0, 1.0)
        dist = np.hypot(cols - (x0 + t * vx), rows - (y0 + t * vy))
        img = np.maximum(img, np.exp(-((dist / _STROKE_SIGMA) ** 2)))
    img = gaussian_filter(img, _TEMPLATE_BLUR, mode="constant")
    return img / img.max()


_TEMPLATE_CACHE: Optional[list[np.ndarray]] = None


def glyph_templates() -> list[np.ndarray]:
    """The ten canonical 28x28 glyphs at upright orientation, values in [0, 1]."""
    global _TEMPLATE_CACHE
    if _TEMPLATE_CACHE is None:
        _TEMPLATE_CACHE = [_render_strokes(s) for s in _GLYPH_STROKES]
    return [img.copy() for img in _TEMPLATE_CACHE]


def gen_rotated_glyphs_labeled(n: int, seed: int = 0):
    """Rotated glyph set plus the template id of every sample.

    Returns ``(dataset, template_ids)`` where the dataset has the flattened
    784-pixel images as inputs and the rotation angle in degrees as target.
    """
    if n < 1:
        raise InvalidInputError(f"need n >= 1, got {n}")
    rng = np.random.default_rng(seed)
    templates = glyph_templates()
    ids = rng.integers(0, len(templates), size=n)
    angles = rng.uniform(-ANGLE_RANGE, ANGLE_RANGE, size=n)
    inputs = np.empty((n, GLYPH_SIZE * GLYPH_SIZE))
    for i in range(n):
        inputs[i] = rotate_image(templates[ids[i]], angles[i]).ravel()
    dataset = Dataset(inputs=inputs, targets=angles.reshape(-1, 1))
    return dataset, ids


def gen_rotated_glyphs(n: int, seed: int = 0) -> Dataset:
    """Rotated glyph regression set: 784 pixel features, angle target."""
    dataset, _ = gen_rotated_glyphs_labeled(n, seed)
    return dataset


def save_csv(dataset: Dataset, path) -> None:
    """Write the canonical CSV form: header ``x1..xd,y1..ym``, full precision."""
    d, m = dataset.n_features, dataset.n_outputs
    header = [f"x{j + 1}" for j in range(d)] + [f"y{j + 1}" for j in range(m)]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for xi, ti in zip(dataset.inputs, dataset.targets):
            row = [repr(float(v)) for v in xi] + [repr(float(v)) for v in ti]
            fh.write(",".join(row) + "\n")


def load_csv(path) -> Dataset:
    """Read the canonical CSV form back; errors carry the offending line."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise InvalidInputError(f"{path}: empty file")
    header = lines[0].split(",")
    d = sum(1 for name in header if name.startswith("x"))
    m = sum(1 for name in header if name.startswith("y"))
    if d < 1 or m < 1 or d + m != len(header):
        raise InvalidInputError(
            f"{path}: header must be x1..xd,y1..ym, got {lines[0]!r}"
        )
    rows = [line for line in lines[1:] if line]
    if not rows:
        raise InvalidInputError(f"{path}: empty dataset (header only)")
    data = np.empty((len(rows), d + m))
    for i, line in enumerate(rows):
        cells = line.split(",")
        if len(cells) != d + m:
            raise InvalidInputError(
                f"{path}: line {i + 2}: expected {d + m} cells, got {len(cells)}"
            )
        try:
            data[i] = [float(c) for c in cells]
        except ValueError as exc:
            raise InvalidInputError(f"{path}: line {i + 2}: {exc}") from exc
    return Dataset(inputs=data[:, :d], targets=data[:, d:])


def split(dataset: Dataset, fraction: float, seed: int = 0):
    """Deterministic shuffled split into (ceil(N*fraction), remainder) parts."""
    if not 0.0 < fraction < 1.0:
        raise InvalidInputError(f"fraction must lie in (0, 1), got {fraction}")
    n = dataset.n_samples
    k = math.ceil(n * fraction)
    perm = np.random.default_rng(seed).permutation(n)
    first, rest = perm[:k], perm[k:]
    make = lambda idx: Dataset(
        inputs=dataset.inputs[idx], targets=dataset.targets[idx],
        feature_names=dataset.feature_names, target_names=dataset.target_names,
    )
    return make(first), make(rest)
