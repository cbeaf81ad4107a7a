"""Shared gridding machinery: Kaiser-Bessel kernel, deapodization, FFTs.

Conventions used throughout the package:

* Grids have even per-axis sizes. Index ``N // 2`` is the center (DC in
  k-space, isocenter in image space).
* FFTs are unitary (``norm="ortho"``) and centered.
* Non-Cartesian k-space coordinates are in cycles per field of view, i.e.
  N-grid units in ``[-N/2, N/2)``. Image-space coordinates are voxel indices.
  Internally both are mapped to oversampled-grid index units.
* Kernel taps that fall off the oversampled grid wrap around (periodic).
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.fft
import scipy.sparse
from scipy.special import i0

__all__ = [
    "ComplexGrid",
    "NonCartesianSet",
    "KernelSpec",
    "GriddingPlan",
    "beatty_beta",
    "kernel_eval",
    "kernel_transform",
    "make_plan",
    "fft_unitary",
    "zero_pad",
    "crop_center",
    "interp_matrix",
    "set_threads",
    "get_threads",
]

THREADS_ENV = "ISGRID_THREADS"

_threads: int | None = None


def set_threads(n: int | None) -> None:
    """Set the worker count used by FFTs (``None`` falls back to the env var)."""
    global _threads
    if n is not None and n < 1:
        raise ValueError("thread count must be >= 1")
    _threads = n


def get_threads() -> int:
    if _threads is not None:
        return _threads
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return 1


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ComplexGrid:
    """Complex samples on a Cartesian grid, tagged as image or k-space data."""

    data: np.ndarray
    space: str = "image"

    def __post_init__(self):
        if self.space not in ("image", "kspace"):
            raise ValueError(f"space must be 'image' or 'kspace', got {self.space!r}")
        data = np.array(self.data, dtype=np.complex128)
        if data.ndim == 0 or min(data.shape) < 1:
            raise ValueError("grid must have at least one sample per axis")
        object.__setattr__(self, "data", _readonly(data))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape


@dataclass(frozen=True)
class NonCartesianSet:
    """Coordinates (``count x ndim``) paired with complex values."""

    coords: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        coords = np.atleast_2d(np.asarray(self.coords, dtype=np.float64))
        values = np.asarray(self.values, dtype=np.complex128).reshape(-1)
        if coords.shape[0] != values.shape[0]:
            raise ValueError(
                f"{coords.shape[0]} coordinates but {values.shape[0]} values"
            )
        if not np.all(np.isfinite(coords)):
            raise ValueError("coordinates must be finite")
        object.__setattr__(self, "coords", _readonly(coords))
        object.__setattr__(self, "values", _readonly(values))

    @property
    def count(self) -> int:
        return self.values.shape[0]


def beatty_beta(width: float, oversampling: float) -> float:
    """Kaiser-Bessel shape parameter from Beatty et al. (2005)."""
    arg = (width / oversampling) ** 2 * (oversampling - 0.5) ** 2 - 0.8
    if arg <= 0:
        raise ValueError(
            f"no Beatty beta for width={width}, oversampling={oversampling}"
        )
    return math.pi * math.sqrt(arg)


@dataclass(frozen=True)
class KernelSpec:
    """Separable Kaiser-Bessel kernel. ``beta=None`` selects the Beatty value."""

    width: int = 4
    oversampling: float = 2.0
    beta: float | None = None

    def __post_init__(self):
        if int(self.width) != self.width or self.width < 2:
            raise ValueError(f"kernel width must be an integer >= 2, got {self.width}")
        if self.oversampling < 1.0:
            raise ValueError(f"oversampling must be >= 1, got {self.oversampling}")
        object.__setattr__(self, "width", int(self.width))
        beta = self.beta
        if beta is None:
            beta = beatty_beta(self.width, self.oversampling)
        if not beta > 0:
            raise ValueError(f"beta must be positive, got {beta}")
        object.__setattr__(self, "beta", float(beta))


def kernel_eval(spec: KernelSpec, distance) -> np.ndarray | float:
    """Kaiser-Bessel window ``I0(beta * sqrt(1 - (2 d / W)^2)) - 1`` on ``|d| <= W/2``.

    The unit pedestal is removed so the window falls continuously to zero at
    the support edge. Zero outside the support. Accepts scalars or arrays.
    """
    d = np.asarray(distance, dtype=np.float64)
    s = 1.0 - (2.0 * d / spec.width) ** 2
    inside = s >= 0.0
    out = np.where(inside, i0(spec.beta * np.sqrt(np.where(inside, s, 0.0))) - 1.0, 0.0)
    return float(out) if out.ndim == 0 else out


# Gauss-Legendre nodes for the kernel transform; the kernel is analytic on its
# support, so this converges far below double-precision round-off.
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(96)


def kernel_transform(spec: KernelSpec, freq) -> np.ndarray:
    """Continuous Fourier transform of the kernel, ``int C(t) cos(2 pi t f) dt``.

    ``t`` is in oversampled-grid units, ``freq`` in cycles per grid sample.
    Evaluated by Gauss-Legendre quadrature over the kernel support.
    """
    f = np.asarray(freq, dtype=np.float64)
    half = spec.width / 2.0
    t = half * _GL_NODES
    w = half * _GL_WEIGHTS * kernel_eval(spec, t)
    return np.cos(2.0 * np.pi * np.multiply.outer(f, t)) @ w


def _oversampled(n: int, oversampling: float) -> int:
    g = int(round(oversampling * n))
    return g + (g % 2)


def _axis_deapod(spec: KernelSpec, n: int, g: int) -> np.ndarray:
    idx = np.arange(n) - n // 2
    return math.sqrt(g / n) / kernel_transform(spec, idx / g)


@dataclass(frozen=True)
class GriddingPlan:
    """Kernel, grid sizes and deapodization weights shared by both directions.

    ``deapod_image`` undoes the kernel's apodization in image space (k-space
    gridding); ``deapod_kspace`` does the same in k-space (image-space
    gridding). Both include the ``sqrt(G/N)`` factor that makes the gridding
    chain approximate the unitary DFT.
    """

    kernel: KernelSpec
    grid_shape: tuple[int, ...]
    oversampled_shape: tuple[int, ...]
    deapod_image: np.ndarray = field(repr=False)
    deapod_kspace: np.ndarray = field(repr=False)

    @property
    def ndim(self) -> int:
        return len(self.grid_shape)


def make_plan(grid_shape: Sequence[int], kernel: KernelSpec | None = None) -> GriddingPlan:
    """Build a :class:`GriddingPlan` for an even-sized Cartesian grid."""
    kernel = kernel or KernelSpec()
    grid_shape = tuple(int(n) for n in grid_shape)
    if not grid_shape or any(n < 2 or n % 2 for n in grid_shape):
        raise ValueError(f"grid axes must be even and >= 2, got {grid_shape}")
    over = tuple(_oversampled(n, kernel.oversampling) for n in grid_shape)

    axes = [_axis_deapod(kernel, n, g) for n, g in zip(grid_shape, over)]
    for a in axes:
        # 1/x blows up when the kernel transform vanishes inside the field of view
        if not np.all(np.isfinite(a)) or np.any(np.abs(1.0 / a) < 1e-12) or np.any(a <= 0):
            raise ValueError("kernel too narrow for grid: deapodization is singular")
    weights = axes[0]
    for a in axes[1:]:
        weights = np.multiply.outer(weights, a)
    weights = np.ascontiguousarray(weights, dtype=np.float64)

    # The KB kernel is real and even, so both directions share one array.
    return GriddingPlan(
        kernel=kernel,
        grid_shape=grid_shape,
        oversampled_shape=over,
        deapod_image=_readonly(weights),
        deapod_kspace=_readonly(weights.copy()),
    )


def _axes(ndim: int) -> tuple[int, ...]:
    return tuple(range(-ndim, 0))


def fft_unitary(x: np.ndarray, ndim: int | None = None, inverse: bool = False) -> np.ndarray:
    """Centered, unitary FFT over the trailing ``ndim`` axes (default: all)."""
    x = np.asarray(x)
    ax = _axes(x.ndim if ndim is None else ndim)
    fn = scipy.fft.ifftn if inverse else scipy.fft.fftn
    y = scipy.fft.ifftshift(x, axes=ax)
    y = fn(y, axes=ax, norm="ortho", workers=get_threads())
    return scipy.fft.fftshift(y, axes=ax)


def _center_slices(small: Sequence[int], big: Sequence[int]) -> tuple[slice, ...]:
    out = []
    for s, b in zip(small, big):
        if s > b:
            raise ValueError(f"cannot fit axis of {s} into {b}")
        if (b - s) % 2:
            raise ValueError(f"pad/crop sizes must differ by an even amount ({s} vs {b})")
        start = b // 2 - s // 2
        out.append(slice(start, start + s))
    return (Ellipsis, *out)


def zero_pad(x: np.ndarray, target_shape: Sequence[int]) -> np.ndarray:
    """Center ``x`` (trailing axes) inside a zero array of ``target_shape``."""
    x = np.asarray(x)
    target_shape = tuple(target_shape)
    nd = len(target_shape)
    if x.ndim < nd:
        raise ValueError(f"array of rank {x.ndim} cannot be padded to {target_shape}")
    out = np.zeros(x.shape[: x.ndim - nd] + target_shape, dtype=x.dtype)
    out[_center_slices(x.shape[-nd:], target_shape)] = x
    return out


def crop_center(x: np.ndarray, target_shape: Sequence[int]) -> np.ndarray:
    """Extract the centered ``target_shape`` block of the trailing axes."""
    x = np.asarray(x)
    target_shape = tuple(target_shape)
    nd = len(target_shape)
    if x.ndim < nd:
        raise ValueError(f"array of rank {x.ndim} cannot be cropped to {target_shape}")
    return x[_center_slices(target_shape, x.shape[-nd:])].copy()


def interp_matrix(
    kernel: KernelSpec, coords: np.ndarray, oversampled_shape: Sequence[int]
) -> scipy.sparse.csr_matrix:
    """Sparse gather matrix (``count x prod(G)``) of separable kernel weights.

    ``coords`` are in oversampled-grid index units; every node within half a
    kernel width of a coordinate receives a tap, with periodic wrap.
    """
    coords = np.atleast_2d(np.asarray(coords, dtype=np.float64))
    over = tuple(oversampled_shape)
    m, nd = coords.shape
    if nd != len(over):
        raise ValueError(f"coordinates have {nd} axes, grid has {len(over)}")
    ntap = kernel.width + 1

    flat = np.zeros((m, 1), dtype=np.int64)
    weight = np.ones((m, 1), dtype=np.float64)
    for axis, g in enumerate(over):
        u = coords[:, axis]
        nodes = np.floor(u - kernel.width / 2.0)[:, None].astype(np.int64) + np.arange(ntap)
        w = kernel_eval(kernel, u[:, None] - nodes)
        nodes %= g
        taps = flat.shape[1] * ntap
        flat = (flat[:, :, None] * g + nodes[:, None, :]).reshape(m, taps)
        weight = (weight[:, :, None] * w[:, None, :]).reshape(m, taps)

    rows = np.repeat(np.arange(m), flat.shape[1])
    keep = weight.reshape(-1) != 0.0
    mat = scipy.sparse.csr_matrix(
        (weight.reshape(-1)[keep], (rows[keep], flat.reshape(-1)[keep])),
        shape=(m, int(np.prod(over))),
    )
    mat.sum_duplicates()
    return mat
