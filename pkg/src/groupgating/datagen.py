"""Synthetic transformation datasets and natural-frame pair ingestion.

Every example draws from its own RNG substream keyed by
``(seed, split, index)``, so splits are disjoint and any example can be
regenerated on its own.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .core_math import fit_whitening, make_rng, rng_von_mises

log = logging.getLogger(__name__)

SPLITS = ("train", "valid", "test")
TASKS = ("translation", "rotation", "natural")
NUM_CLASSES = {"translation": 4, "rotation": 10}
MAX_ANGLE = math.radians(36.0)
MIN_ABS_SHIFT = 0.25

TASK_DEFAULTS = {
    "translation": {"max_shift": 3.0, "density": 0.1, "integer_shifts": False, "image": "dots"},
    "rotation": {"kappa": 1.0, "density": 0.1, "image": "dots"},
    "natural": {"frame_size": 64, "num_frames": 200, "retain": 0.95, "speed": 1.5,
                "scene_length": 20, "frames": None},
}


@dataclass
class DatasetSpec:
    task: str
    patch_size: int
    counts: tuple = (1000, 1000, 1000)
    seed: int = 0
    task_params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}; expected one of {TASKS}")
        self.counts = tuple(int(c) for c in self.counts)
        if len(self.counts) != 3 or min(self.counts) < 1:
            raise ValueError(f"counts must be three positive integers, got {self.counts}")
        unknown = set(self.task_params) - set(TASK_DEFAULTS[self.task])
        if unknown:
            raise ValueError(f"unknown {self.task} parameters: {sorted(unknown)}")
        self.task_params = {**TASK_DEFAULTS[self.task], **self.task_params}
        if self.patch_size < 2:
            raise ValueError("patch_size must be >= 2")
        if self.task == "translation":
            s = self.task_params["max_shift"]
            if self.patch_size < 2 * s + 1:
                raise ValueError(f"patch_size {self.patch_size} too small for shifts up to {s}")
        if self.task == "rotation" and self.task_params["kappa"] < 0:
            raise ValueError("von Mises kappa must be >= 0")

    @property
    def num_classes(self):
        return NUM_CLASSES.get(self.task, 0)


class PatchPair:
    """One input/output pair, as a read-only view into a dataset."""

    __slots__ = ("x", "y", "label", "params")

    def __init__(self, x, y, label=None, params=None):
        self.x, self.y, self.label, self.params = x, y, label, params

    def __repr__(self):
        return f"PatchPair(dim={self.x.size}, label={self.label}, params={self.params})"


@dataclass
class Dataset:
    """Stacked pairs: ``x`` and ``y`` are ``(n, patch_size**2)``."""

    x: np.ndarray
    y: np.ndarray
    labels: np.ndarray = None
    params: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.x.shape != self.y.shape:
            raise ValueError(f"x {self.x.shape} and y {self.y.shape} differ in shape")
        n = len(self.x)
        for name in ("labels", "params"):
            v = getattr(self, name)
            if v is not None and len(v) != n:
                raise ValueError(f"{name} has {len(v)} rows for {n} pairs")
        k = self.meta.get("num_classes")
        if self.labels is not None and k and len(self.labels) and self.labels.max() >= k:
            raise ValueError("label out of range for the task")

    def __len__(self):
        return len(self.x)

    def __getitem__(self, i):
        return PatchPair(self.x[i], self.y[i],
                         None if self.labels is None else int(self.labels[i]),
                         None if self.params is None else self.params[i])

    @property
    def pairs(self):
        """Pairs concatenated as ``[x | y]`` rows, the estimator input layout."""
        return np.hstack([self.x, self.y])

    def subset(self, idx):
        return Dataset(self.x[idx], self.y[idx],
                       None if self.labels is None else self.labels[idx],
                       None if self.params is None else self.params[idx], dict(self.meta))

    @staticmethod
    def concat(parts, meta=None):
        has_labels = all(p.labels is not None for p in parts)
        has_params = all(p.params is not None for p in parts)
        return Dataset(np.vstack([p.x for p in parts]), np.vstack([p.y for p in parts]),
                       np.concatenate([p.labels for p in parts]) if has_labels else None,
                       np.vstack([p.params for p in parts]) if has_params else None,
                       dict(meta if meta is not None else parts[0].meta))


@dataclass
class DatasetSplits:
    train: Dataset
    valid: Dataset
    test: Dataset
    spec: DatasetSpec = None
    whitening: object = None

    def __iter__(self):
        return iter((self.train, self.valid, self.test))


# --- image primitives ----------------------------------------------------------

def gen_random_dot_image(size, density, rng, standardize=True):
    """Bernoulli(``density``) dot image, standardized over the whole image."""
    if not 0.0 < density < 1.0:
        raise ValueError(f"density must lie in (0, 1), got {density}")
    img = (rng.random((size, size)) < density).astype(np.float64)
    return _standardize(img) if standardize else img


def gen_gaussian_image(size, rng):
    return rng.standard_normal((size, size))


def _standardize(img):
    std = img.std()
    return (img - img.mean()) / std if std > 0 else img - img.mean()


def bilinear_sample(img, rows, cols):
    """Bilinear lookup at real coordinates; integral coordinates are exact."""
    h, w = img.shape
    r0 = np.floor(rows).astype(int)
    c0 = np.floor(cols).astype(int)
    fr = rows - r0
    fc = cols - c0
    if r0.min() < 0 or c0.min() < 0 or r0.max() > h - 1 or c0.max() > w - 1:
        raise ValueError("sample coordinates fall outside the source image")
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    return ((1 - fr) * (1 - fc) * img[r0, c0] + (1 - fr) * fc * img[r0, c1]
            + fr * (1 - fc) * img[r1, c0] + fr * fc * img[r1, c1])


def crop_center(img, patch_size):
    o0 = (img.shape[0] - patch_size) // 2
    o1 = (img.shape[1] - patch_size) // 2
    return img[o0:o0 + patch_size, o1:o1 + patch_size]


def shift_patch(source, patch_size, dx, dy):
    """Centre crop of ``source`` with its content moved by ``dx`` columns
    and ``dy`` rows, so ``out[r, c] == crop[r - dy, c - dx]``."""
    o0 = (source.shape[0] - patch_size) // 2
    o1 = (source.shape[1] - patch_size) // 2
    r, c = np.mgrid[0:patch_size, 0:patch_size].astype(np.float64)
    return bilinear_sample(source, o0 + r - dy, o1 + c - dx)


def rotate_patch(source, patch_size, angle):
    """Centre crop of ``source`` rotated by ``angle`` radians about the
    patch centre (counter-clockwise as displayed, rows pointing down)."""
    o0 = (source.shape[0] - patch_size) // 2
    o1 = (source.shape[1] - patch_size) // 2
    cen = (patch_size - 1) / 2.0
    r, c = np.mgrid[0:patch_size, 0:patch_size].astype(np.float64)
    u, v = c - cen, cen - r  # v points up
    cs, sn = math.cos(angle), math.sin(angle)
    su = cs * u + sn * v
    sv = -sn * u + cs * v
    return bilinear_sample(source, o0 + cen - sv, o1 + cen + su)


def quadrant_label(dx, dy):
    """Motion-direction quadrant: 0 (+,+), 1 (-,+), 2 (-,-), 3 (+,-) in (dx, dy) signs."""
    if dx > 0:
        return 0 if dy > 0 else 3
    return 1 if dy > 0 else 2


def rotation_label(angle, num_bins=10, max_angle=MAX_ANGLE):
    b = math.floor((angle + max_angle) / (2.0 * max_angle / num_bins))
    return min(max(b, 0), num_bins - 1)


def _source_image(kind, size, density, rng):
    if kind == "dots":
        return gen_random_dot_image(size, density, rng)
    if kind == "gaussian":
        return gen_gaussian_image(size, rng)
    raise ValueError(f"unknown image kind {kind!r}")


# --- per-example generators ------------------------------------------------

def translation_example(patch_size, rng, max_shift=3.0, density=0.1,
                        integer_shifts=False, image="dots", shift=None):
    """One translated pair; ``shift`` forces ``(dx, dy)``."""
    if shift is None:
        while True:
            dx, dy = rng.uniform(-max_shift, max_shift, size=2)
            if integer_shifts:
                dx, dy = float(np.round(dx)), float(np.round(dy))
            if abs(dx) >= MIN_ABS_SHIFT and abs(dy) >= MIN_ABS_SHIFT:
                break
    else:
        dx, dy = shift
    size = patch_size + 2 * math.ceil(max(max_shift, abs(dx), abs(dy)))
    src = _source_image(image, size, density, rng)
    x = crop_center(src, patch_size).copy()
    y = shift_patch(src, patch_size, dx, dy)
    return x.ravel(), y.ravel(), quadrant_label(dx, dy), (dx, dy)


def rotation_example(patch_size, rng, kappa=1.0, density=0.1, image="dots", angle=None):
    """One rotated pair; ``angle`` (radians) bypasses the von Mises draw and the cap."""
    if angle is None:
        angle = float(rng_von_mises(rng, kappa, 1)[0]) * (MAX_ANGLE / math.pi)
    size = math.ceil(patch_size * math.sqrt(2.0)) + 2
    src = _source_image(image, size, density, rng)
    x = crop_center(src, patch_size).copy()
    y = rotate_patch(src, patch_size, angle)
    return x.ravel(), y.ravel(), rotation_label(angle), (angle,)


def _synthetic_split(spec, split_index, n):
    p = spec.patch_size
    tp = spec.task_params
    X = np.empty((n, p * p))
    Y = np.empty((n, p * p))
    labels = np.empty(n, dtype=np.int64)
    params = np.empty((n, 2 if spec.task == "translation" else 1))
    for i in range(n):
        rng = make_rng(spec.seed, split_index, i)
        if spec.task == "translation":
            ex = translation_example(p, rng, tp["max_shift"], tp["density"],
                                     tp["integer_shifts"], tp["image"])
        else:
            ex = rotation_example(p, rng, tp["kappa"], tp["density"], tp["image"])
        X[i], Y[i], labels[i], params[i] = ex
    meta = {"task": spec.task, "patch_size": p, "num_classes": spec.num_classes,
            "split": SPLITS[split_index]}
    return Dataset(X, Y, labels, params, meta)


def gen_translation_pairs(spec):
    if spec.task != "translation":
        raise ValueError("spec is not a translation task")
    return DatasetSplits(*(_synthetic_split(spec, k, n) for k, n in enumerate(spec.counts)), spec=spec)


def gen_rotation_pairs(spec):
    if spec.task != "rotation":
        raise ValueError("spec is not a rotation task")
    return DatasetSplits(*(_synthetic_split(spec, k, n) for k, n in enumerate(spec.counts)), spec=spec)


# --- natural-style frames --------------------------------------------------

def pink_noise_image(size, rng, exponent=1.0):
    """Gaussian image with a ``1/f**exponent`` amplitude spectrum, unit variance."""
    fy = np.fft.fftfreq(size)[:, None]
    fx = np.fft.fftfreq(size)[None, :]
    f = np.sqrt(fx * fx + fy * fy)
    f[0, 0] = 1.0
    amp = f ** -exponent
    amp[0, 0] = 0.0
    noise = rng.standard_normal((size, size)) + 1j * rng.standard_normal((size, size))
    img = np.real(np.fft.ifft2(noise * amp))
    return _standardize(img)


def gen_natural_frames(num_frames, frame_size, rng, speed=1.5, scene_length=20):
    """Frames of a camera panning over 1/f scenes, cutting to a new scene
    every ``scene_length`` frames; each scene pans at a constant random
    velocity of norm ``speed`` pixels per frame."""
    frames = np.empty((num_frames, frame_size, frame_size))
    margin = int(math.ceil(speed * scene_length)) + 2
    big = frame_size + 2 * margin
    t = 0
    while t < num_frames:
        scene = pink_noise_image(big, rng)
        theta = rng.uniform(-math.pi, math.pi)
        vx, vy = speed * math.cos(theta), speed * math.sin(theta)
        r, c = np.mgrid[0:frame_size, 0:frame_size].astype(np.float64)
        for j in range(min(scene_length, num_frames - t)):
            frames[t] = bilinear_sample(scene, margin + r - vy * j, margin + c - vx * j)
            t += 1
    return frames


def ingest_frame_pairs(frames, patch_size, rng, whiten=0.95, num_pairs=10000):
    """Pairs of co-located patches from consecutive frames, whitened by one
    transform fit on the input patches.

    Returns ``(dataset, whitening)``. When fewer distinct pairs exist than
    ``num_pairs``, all of them are returned and the shortfall is logged.
    """
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 3 or len(frames) < 2:
        raise ValueError("need a (frames, height, width) stack with at least 2 frames")
    T, H, W = frames.shape
    if H < patch_size or W < patch_size:
        raise ValueError(f"frames {H}x{W} are smaller than patch size {patch_size}")
    nr, nc = H - patch_size + 1, W - patch_size + 1
    available = (T - 1) * nr * nc
    if num_pairs >= available:
        if num_pairs > available:
            log.warning("requested=%d available=%d pairs; returning all", num_pairs, available)
        flat = np.arange(available)
    else:
        flat = rng.integers(0, available, size=num_pairs)
    t, rest = np.divmod(flat, nr * nc)
    r, c = np.divmod(rest, nc)
    idx_r = r[:, None, None] + np.arange(patch_size)[None, :, None]
    idx_c = c[:, None, None] + np.arange(patch_size)[None, None, :]
    X = frames[t[:, None, None], idx_r, idx_c].reshape(len(flat), -1)
    Y = frames[t[:, None, None] + 1, idx_r, idx_c].reshape(len(flat), -1)
    meta = {"task": "natural", "patch_size": patch_size, "num_classes": 0}
    if len(flat) < num_pairs:
        meta["requested"] = int(num_pairs)
    if not whiten:
        return Dataset(X, Y, meta=meta), None
    wt = fit_whitening(X, retain=whiten)
    meta["whitened"] = True
    return Dataset(wt.transform(X), wt.transform(Y), meta=meta), wt


def gen_natural_pairs(spec, frames=None):
    """Natural-style splits; frames are synthesized unless supplied."""
    tp = spec.task_params
    if frames is None:
        frames = gen_natural_frames(tp["num_frames"], tp["frame_size"], make_rng(spec.seed, 99),
                                    speed=tp["speed"], scene_length=tp["scene_length"])
    frames = np.asarray(frames, dtype=np.float64)
    total = sum(spec.counts)
    # contiguous, non-overlapping frame ranges per split (each keeps >= 2 frames)
    T = len(frames)
    if T < 6:
        raise ValueError("need at least 6 frames to form three splits")
    cuts = [0]
    for c in spec.counts[:2]:
        cuts.append(cuts[-1] + max(2, round(T * c / total)))
    cuts.append(T)
    if cuts[2] > T - 2:
        raise ValueError("too few frames for the requested split sizes")
    train, wt = ingest_frame_pairs(frames[cuts[0]:cuts[1]], spec.patch_size,
                                   make_rng(spec.seed, 98, 0), whiten=tp["retain"],
                                   num_pairs=spec.counts[0])
    parts = [train]
    for k in (1, 2):
        raw, _ = ingest_frame_pairs(frames[cuts[k]:cuts[k + 1]], spec.patch_size,
                                    make_rng(spec.seed, 98, k), whiten=None,
                                    num_pairs=spec.counts[k])
        if wt is not None:
            raw = Dataset(wt.transform(raw.x), wt.transform(raw.y), meta={**raw.meta, "whitened": True})
        parts.append(raw)
    for name, part in zip(SPLITS, parts):
        part.meta["split"] = name
    return DatasetSplits(*parts, spec=spec, whitening=wt)


def generate(spec, frames=None):
    if spec.task == "translation":
        return gen_translation_pairs(spec)
    if spec.task == "rotation":
        return gen_rotation_pairs(spec)
    return gen_natural_pairs(spec, frames)
