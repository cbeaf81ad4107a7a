"""Translational motion from navigator images and respiratory binning.

Shift convention: ``estimate_translation(ref, nav)`` returns ``s`` such that
``nav[r] ~= ref[r - s]`` (the object moved by ``+s`` voxels).
``apply_phase_shift(coords, values, s, grid_shape)`` moves the object by
``+s``; correcting a heartbeat therefore uses ``-s``.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grid import zero_pad
from .igrid import DisplacementField

__all__ = [
    "MotionEstimate",
    "RespiratoryBins",
    "estimate_translation",
    "estimate_motion",
    "apply_phase_shift",
    "kmeans",
    "kmeans_bin",
    "ingest_displacement_fields",
    "write_motion_table",
]

# Relative curvature below which the correlation peak is treated as flat.
_FLAT = 1e-12


@dataclass(frozen=True)
class MotionEstimate:
    """Per-heartbeat shifts ``(heartbeats, ndim)`` in voxels."""

    shifts: np.ndarray
    reference_index: int = 0

    def __post_init__(self):
        shifts = np.array(self.shifts, dtype=np.float64)
        if shifts.ndim != 2:
            raise ValueError(f"shifts must be (heartbeats, ndim), got {shifts.shape}")
        if not 0 <= self.reference_index < shifts.shape[0]:
            raise ValueError("reference index out of range")
        if np.any(shifts[self.reference_index] != 0):
            raise ValueError("reference heartbeat must have zero shift")
        shifts.setflags(write=False)
        object.__setattr__(self, "shifts", shifts)

    @property
    def heartbeats(self) -> int:
        return self.shifts.shape[0]


@dataclass(frozen=True)
class RespiratoryBins:
    labels: np.ndarray
    centroids: np.ndarray
    reference_bin: int

    @property
    def K(self) -> int:
        return self.centroids.shape[0]

    def members(self, b: int) -> np.ndarray:
        return np.flatnonzero(self.labels == b)


def _parabolic_offset(cm: float, c0: float, cp: float) -> float:
    denom = cm - 2.0 * c0 + cp
    if abs(cp - cm) <= _FLAT * abs(c0) or denom >= 0:
        return 0.0
    off = 0.5 * (cm - cp) / denom
    return float(np.clip(off, -0.5, 0.5))


def _correlation(a: np.ndarray, b: np.ndarray, upsample: int) -> np.ndarray:
    spec = np.fft.fftn(b) * np.conj(np.fft.fftn(a))
    if upsample == 1:
        return np.fft.ifftn(spec).real
    big = tuple(n * upsample for n in a.shape)
    padded = zero_pad(np.fft.fftshift(spec), big)
    return np.fft.ifftn(np.fft.ifftshift(padded)).real * upsample**a.ndim


def estimate_translation(reference_nav, nav, upsample: int = 4) -> np.ndarray:
    """Shift of ``nav`` relative to ``reference_nav`` from magnitude cross-correlation.

    The correlation is computed by a Fourier product, optionally evaluated on
    an ``upsample``-times finer grid (zero-padded spectrum). Its integer peak
    is refined per axis with a three-point parabola.
    """
    a = np.abs(np.asarray(reference_nav))
    b = np.abs(np.asarray(nav))
    if a.shape != b.shape:
        raise ValueError(f"navigator shapes differ: {a.shape} vs {b.shape}")
    if upsample < 1:
        raise ValueError("upsample must be >= 1")
    corr = _correlation(a, b, int(upsample))
    if np.ptp(corr) <= _FLAT * max(np.abs(corr).max(), 1e-300):
        return np.zeros(a.ndim)
    peak = np.unravel_index(int(np.argmax(corr)), corr.shape)
    c0 = corr[peak]
    shift = np.zeros(a.ndim)
    for axis, n in enumerate(corr.shape):
        lo = list(peak)
        hi = list(peak)
        lo[axis] = (peak[axis] - 1) % n
        hi[axis] = (peak[axis] + 1) % n
        frac = _parabolic_offset(corr[tuple(lo)], c0, corr[tuple(hi)]) if n > 2 else 0.0
        p = peak[axis] if peak[axis] < n // 2 else peak[axis] - n
        shift[axis] = (p + frac) / upsample
    return shift


def estimate_motion(navs, reference_index: int = 0, scale=1.0, upsample: int = 4) -> MotionEstimate:
    """Estimate every heartbeat's shift against one reference navigator.

    ``scale`` converts navigator voxels into image voxels (per axis or scalar).
    """
    navs = list(navs)
    ref = navs[reference_index]
    shifts = np.array([estimate_translation(ref, n, upsample) for n in navs]) * np.asarray(scale, float)
    shifts[reference_index] = 0.0
    return MotionEstimate(shifts, reference_index)


def apply_phase_shift(coords, values, shift, grid_shape) -> np.ndarray:
    """Multiply samples by ``exp(-2 pi i k . shift / N)``.

    ``coords`` are in cycles per field of view, ``shift`` in voxels. Values may
    carry leading batch axes (coils).
    """
    values = np.asarray(values)
    shift = np.asarray(shift, dtype=np.float64)
    if not np.any(shift):
        return values.copy()
    coords = np.atleast_2d(np.asarray(coords, dtype=np.float64))
    phase = coords @ (shift / np.asarray(grid_shape, dtype=np.float64))
    return values * np.exp(-2j * np.pi * phase)


def _kmeanspp(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = [points[rng.integers(len(points))]]
    d2 = np.sum((points - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total == 0:
            break
        idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
        idx = min(idx, len(points) - 1)
        centers.append(points[idx])
        d2 = np.minimum(d2, np.sum((points - points[idx]) ** 2, axis=1))
    return np.array(centers)


def kmeans(points, k: int, seed: int = 0, max_iters: int = 100):
    """Lloyd's algorithm with k-means++ seeding.

    Points are processed in lexicographic order so the result does not depend
    on input order (up to label names). Returns ``(labels, centroids)``.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    if k < 1:
        raise ValueError("K must be >= 1")
    distinct = np.unique(pts, axis=0).shape[0]
    if k > distinct:
        raise ValueError(f"K={k} exceeds the number of distinct points ({distinct})")

    order = np.lexsort(pts.T[::-1])
    sp = pts[order]
    rng = np.random.default_rng(seed)
    centers = _kmeanspp(sp, k, rng)
    labels = np.full(len(sp), -1)
    for _ in range(max_iters):
        dist = np.sum((sp[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        new = np.argmin(dist, axis=1)
        if np.array_equal(new, labels):
            break
        labels = new
        for j in range(k):
            members = sp[labels == j]
            if len(members):
                centers[j] = members.mean(axis=0)
            else:
                # re-seed an emptied cluster at the worst-fit point
                far = int(np.argmax(dist[np.arange(len(sp)), labels]))
                centers[j] = sp[far]
                labels[far] = j
    out = np.empty_like(labels)
    out[order] = labels
    return out, centers


def kmeans_bin(estimates: MotionEstimate, K: int = 4, seed: int = 0) -> RespiratoryBins:
    """Group heartbeats into ``K`` respiratory bins by their shifts.

    The reference bin has the least within-bin shift variance; ties go to the
    larger bin.
    """
    shifts = estimates.shifts
    if K > estimates.heartbeats:
        raise ValueError(f"K={K} exceeds heartbeat count {estimates.heartbeats}")
    labels, centers = kmeans(shifts, K, seed)
    best = None
    for b in range(K):
        members = shifts[labels == b]
        var = float(np.sum(members.var(axis=0))) if len(members) else np.inf
        key = (var, -len(members))
        if best is None or key < best[0]:
            best = (key, b)
    return RespiratoryBins(labels=labels, centroids=centers, reference_bin=best[1])


def ingest_displacement_fields(path, grid_shape=None) -> dict[int, DisplacementField]:
    """Load per-bin fields written by :func:`isgrid.io.write_fields`.

    The reference bin's field must be identically zero.
    """
    from .io import read_fields

    fields, reference_bin = read_fields(path)
    if not fields:
        raise ValueError(f"{path}: no displacement fields")
    for b, f in fields.items():
        if grid_shape is not None and f.shape != tuple(grid_shape):
            raise ValueError(f"{path}: bin {b} field shape {f.shape} != grid {tuple(grid_shape)}")
    missing = sorted(set(range(max(fields) + 1)) - set(fields))
    if missing:
        raise ValueError(f"{path}: missing bins {missing}")
    if reference_bin not in fields:
        raise ValueError(f"{path}: reference bin {reference_bin} has no field")
    if not fields[reference_bin].is_zero():
        raise ValueError(f"{path}: reference bin {reference_bin} field is not zero")
    return fields


def write_motion_table(path, estimates: MotionEstimate, bins: RespiratoryBins | None = None) -> None:
    """Delimited text: heartbeat index, per-axis shift, bin label."""
    ndim = estimates.shifts.shape[1]
    header = ["heartbeat"] + [f"shift_{a}" for a in range(ndim)] + ["bin"]
    lines = [",".join(header)]
    for h, s in enumerate(estimates.shifts):
        label = "" if bins is None else str(int(bins.labels[h]))
        lines.append(",".join([str(h)] + [repr(float(v)) for v in s] + [label]))
    Path(path).write_text("\n".join(lines) + "\n")
