"""Dominant frequency, orientation and phase of learned filters.

A filter's strongest non-DC DFT component inside the Nyquist disc gives
its frequency (radial, cycles per patch), orientation in ``[0, pi)`` and
phase relative to pixel ``(0, 0)``. Conjugate bins are folded onto the
half plane, so the phase is read from the bin whose angle lies in
``[0, pi)``.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .core_math import dft2

NUM_ORIENTATION_BINS = 8
TIE_RTOL = 1e-9
DEGENERACY_RATIO = 2.0
PEAK_FLOOR = 1e-10


@dataclass
class FilterSpectrum:
    filter_index: int
    frequency: float = float("nan")
    orientation: float = float("nan")
    phase: float = float("nan")
    peak_magnitude: float = 0.0
    degenerate: bool = False

    @property
    def frequency_bin(self):
        return int(round(self.frequency))

    @property
    def orientation_bin(self):
        return orientation_bin(self.orientation)

    def row(self):
        return (self.filter_index, self.frequency, self.orientation, self.phase,
                self.peak_magnitude)


def wrap_phase(a):
    """Wrap angles to ``[-pi, pi)``."""
    return np.mod(np.asarray(a, dtype=np.float64) + np.pi, 2.0 * np.pi) - np.pi


def orientation_bin(theta, bins=NUM_ORIENTATION_BINS):
    return min(int(math.floor(theta / (math.pi / bins))), bins - 1)


def _signed(n):
    k = np.arange(n)
    return np.where(k < (n + 1) // 2, k, k - n)


def analyze_filter(filt, index=0):
    """Spectrum summary of one square filter (2-D array or flat vector)."""
    filt = np.asarray(filt, dtype=np.float64)
    if filt.ndim == 1:
        n = int(round(math.sqrt(filt.size)))
        if n * n != filt.size:
            raise ValueError(f"filter of length {filt.size} is not square")
        filt = filt.reshape(n, n)
    if filt.ndim != 2 or filt.shape[0] != filt.shape[1] or filt.shape[0] < 2:
        raise ValueError(f"need a square filter with side >= 2, got {filt.shape}")
    n = filt.shape[0]
    coef = dft2(filt)
    mag = np.abs(coef)
    ky = _signed(n)[:, None] * np.ones((1, n), dtype=int)
    kx = np.ones((n, 1), dtype=int) * _signed(n)[None, :]
    # the -n/2 Nyquist index equals +n/2; take the positive alias
    if n % 2 == 0:
        ky = np.where(ky == -n // 2, n // 2, ky)
        kx = np.where(kx == -n // 2, n // 2, kx)
    freq = np.sqrt(ky * ky + kx * kx)
    valid = (freq > 0) & (freq <= n / 2.0 + 1e-12)
    peak = mag[valid].max() if valid.any() else 0.0
    # non-DC energy at rounding level (e.g. a constant filter) is no peak
    if not np.isfinite(peak) or peak <= PEAK_FLOOR * mag.max():
        return FilterSpectrum(index, degenerate=True)
    angle = np.arctan2(ky, kx)
    upper = (angle >= 0) & (angle < math.pi)
    theta = np.where(upper, angle, angle + math.pi)
    theta = np.where(theta >= math.pi, theta - math.pi, theta)
    cand = np.argwhere(valid & (mag >= peak * (1.0 - TIE_RTOL)))
    # ties: lowest frequency, then lowest orientation, then upper half plane
    r, c = min(cand, key=lambda rc: (round(freq[tuple(rc)], 9), round(theta[tuple(rc)], 9),
                                     not upper[tuple(rc)]))
    ph = np.angle(coef[r, c])
    if not upper[r, c]:
        ph = -ph
    median = np.median(mag[valid])
    return FilterSpectrum(index, float(freq[r, c]), float(theta[r, c]), float(wrap_phase(ph)),
                          float(peak), bool(peak < DEGENERACY_RATIO * median))


def analyze_filters(W, inverse=None):
    """Analyze every column of ``W``; ``inverse`` maps whitened columns to pixels."""
    W = np.asarray(W, dtype=np.float64)
    if inverse is not None:
        W = inverse @ W
    return [analyze_filter(W[:, f], f) for f in range(W.shape[1])]


def property_histograms(spectra, patch_size=None, orientation_bins=NUM_ORIENTATION_BINS):
    """Counts over (integer frequency bin, orientation bin) of non-degenerate filters.

    Row ``f`` counts frequency bin ``f`` (0 is unused since DC is excluded).
    """
    if not spectra:
        raise ValueError("need at least one spectrum")
    good = [s for s in spectra if not s.degenerate]
    top = max([s.frequency_bin for s in good], default=0)
    if patch_size is not None:
        top = max(top, int(math.ceil(patch_size / 2)))
    counts = np.zeros((top + 1, orientation_bins), dtype=np.int64)
    for s in good:
        counts[s.frequency_bin, orientation_bin(s.orientation, orientation_bins)] += 1
    return counts


def circular_std(angles):
    """Circular standard deviation ``sqrt(-2 ln R)`` of angles in radians."""
    a = np.asarray(angles, dtype=np.float64)
    R = np.hypot(np.mean(np.cos(a)), np.mean(np.sin(a)))
    return float(np.sqrt(-2.0 * np.log(max(R, 1e-300))))


def orientation_difference(a, b):
    """Absolute difference of orientations on the ``pi``-periodic circle."""
    d = np.abs(np.asarray(a) - np.asarray(b)) % math.pi
    return np.minimum(d, math.pi - d)


@dataclass
class PhaseDifferenceTable:
    """Phase differences ``phi_y - phi_x`` keyed by (frequency bin, orientation bin)."""

    rows: dict = field(default_factory=dict)
    pairs: list = field(default_factory=list)

    def add(self, key, d, e, delta):
        self.rows.setdefault(key, []).append(float(delta))
        self.pairs.append((key, d, e, float(delta)))

    def all_differences(self):
        return np.array([p[3] for p in self.pairs])


def phase_difference_table(model, inverse=None):
    """Phase differences over every product pair whose input and output
    filters share a frequency/orientation bin."""
    if not model.core.symmetric and model.core.kind != "asym_grouped":
        raise ValueError("model has no matched input/output filters")
    sx = analyze_filters(model.Wx, inverse)
    sy = analyze_filters(model.Wy, inverse)
    table = PhaseDifferenceTable()
    seen = set()
    for d, e in model.core.pairs:
        d, e = int(d), int(e)
        if (d, e) in seen:
            continue
        seen.add((d, e))
        a, b = sx[d], sy[e]
        if a.degenerate or b.degenerate:
            continue
        key = (a.frequency_bin, a.orientation_bin)
        if key != (b.frequency_bin, b.orientation_bin):
            continue
        table.add(key, d, e, wrap_phase(b.phase - a.phase))
    return table


def group_statistics(spectra, groups):
    """Per-group dispersion: circular std of phase, and orientation and
    frequency spread (mean absolute deviation from the group's circular
    mean orientation / median frequency). Degenerate filters are skipped."""
    out = []
    for members in groups:
        ss = [spectra[m] for m in members if not spectra[m].degenerate]
        if len(ss) < 2:
            continue
        ph = np.array([s.phase for s in ss])
        th = np.array([s.orientation for s in ss])
        fr = np.array([s.frequency for s in ss])
        mean_th = (np.angle(np.mean(np.exp(2j * th))) / 2.0) % math.pi
        out.append({"phase_std": circular_std(ph),
                    "orientation_dispersion": float(np.mean(orientation_difference(th, mean_th))),
                    "frequency_dispersion": float(np.mean(np.abs(fr - np.median(fr))))})
    return out


def neighbor_orientation_differences(spectra, rows, cols, wraparound=True):
    """Orientation differences between 4-neighbours on the filter grid."""
    diffs = []
    for r in range(rows):
        for c in range(cols):
            for dr, dc in ((0, 1), (1, 0)):
                rr, cc = r + dr, c + dc
                if wraparound:
                    rr, cc = rr % rows, cc % cols
                elif rr >= rows or cc >= cols:
                    continue
                a, b = spectra[r * cols + c], spectra[rr * cols + cc]
                if a.degenerate or b.degenerate:
                    continue
                diffs.append(float(orientation_difference(a.orientation, b.orientation)))
    return np.array(diffs)


def random_pair_orientation_differences(spectra, num_pairs, rng):
    good = [s for s in spectra if not s.degenerate]
    i = rng.integers(0, len(good), size=num_pairs)
    j = rng.integers(0, len(good), size=num_pairs)
    keep = i != j
    return np.array([float(orientation_difference(good[a].orientation, good[b].orientation))
                     for a, b in zip(i[keep], j[keep])])
