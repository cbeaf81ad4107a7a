"""k-space gridding (type-1 NUFFT) and inverse gridding (type-2 NUFFT).

The two directions form an exact forward-adjoint pair::

    forward:  samples -> project (scatter) -> inverse FFT -> crop -> deapodize
    inverse:  image -> deapodize -> zero-pad -> FFT -> backproject (gather)

Both accept leading batch axes (e.g. coils) in front of the sample or grid
axes.
"""
from __future__ import annotations

import numpy as np

from .grid import GriddingPlan, crop_center, fft_unitary, interp_matrix, zero_pad

__all__ = [
    "KSpaceGridder",
    "project_core_k",
    "backproject_core_k",
    "kgrid_forward",
    "kgrid_inverse",
]


def _matvec(mat, x: np.ndarray, out_len: int, batch: tuple[int, ...]) -> np.ndarray:
    flat = x.reshape(int(np.prod(batch, dtype=np.int64)), mat.shape[1])
    out = np.asarray(mat @ flat.T).T
    return out.reshape(batch + (out_len,))


class KSpaceGridder:
    """Fixed trajectory plus kernel bookkeeping.

    Parameters
    ----------
    plan : GriddingPlan
    coords : array (count, ndim)
        k-space locations in cycles per field of view, within ``[-N/2, N/2]``
        on every axis.
    density_weights : array (count,), optional
        Nonnegative per-sample weights applied on both sides of the pair.
        Defaults to ones.
    """

    def __init__(self, plan: GriddingPlan, coords, density_weights=None):
        coords = np.atleast_2d(np.asarray(coords, dtype=np.float64))
        if coords.shape[1] != plan.ndim:
            raise ValueError(f"trajectory is {coords.shape[1]}D, plan is {plan.ndim}D")
        half = np.asarray(plan.grid_shape) / 2.0
        if not np.all(np.isfinite(coords)) or np.any(np.abs(coords) > half):
            raise ValueError("trajectory leaves the k-space extent [-N/2, N/2]")
        if density_weights is None:
            density_weights = np.ones(coords.shape[0])
        weights = np.asarray(density_weights, dtype=np.float64).reshape(-1)
        if weights.shape[0] != coords.shape[0]:
            raise ValueError(
                f"{weights.shape[0]} density weights for {coords.shape[0]} samples"
            )
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ValueError("density weights must be finite and nonnegative")

        self.plan = plan
        self.coords = coords
        self.density_weights = weights
        self.coords.setflags(write=False)
        self.density_weights.setflags(write=False)

        g = np.asarray(plan.oversampled_shape, dtype=np.float64)
        u = coords * (g / np.asarray(plan.grid_shape)) + g / 2.0
        self._gather = interp_matrix(plan.kernel, u, plan.oversampled_shape)
        self._scatter = self._gather.T.tocsr()

    @property
    def count(self) -> int:
        return self.coords.shape[0]


def _check_samples(gridder: KSpaceGridder, samples: np.ndarray) -> np.ndarray:
    samples = np.asarray(samples)
    if samples.ndim == 0 or samples.shape[-1] != gridder.count:
        raise ValueError(
            f"expected {gridder.count} samples on the last axis, got shape {samples.shape}"
        )
    return samples


def _check_grid(grid: np.ndarray, shape: tuple[int, ...], what: str) -> np.ndarray:
    grid = np.asarray(grid)
    nd = len(shape)
    if grid.ndim < nd or grid.shape[-nd:] != shape:
        raise ValueError(f"{what} must end in shape {shape}, got {grid.shape}")
    return grid


def project_core_k(gridder: KSpaceGridder, samples) -> np.ndarray:
    """Spread density-weighted samples onto the oversampled k-space grid."""
    samples = _check_samples(gridder, samples)
    batch = samples.shape[:-1]
    over = gridder.plan.oversampled_shape
    weighted = samples * gridder.density_weights
    out = _matvec(gridder._scatter, weighted, int(np.prod(over)), batch)
    return out.reshape(batch + over)


def backproject_core_k(gridder: KSpaceGridder, grid) -> np.ndarray:
    """Gather oversampled-grid values at each trajectory point (adjoint of projection)."""
    over = gridder.plan.oversampled_shape
    grid = _check_grid(grid, over, "oversampled k-space grid")
    batch = grid.shape[: grid.ndim - len(over)]
    flat = grid.reshape(batch + (-1,))
    out = _matvec(gridder._gather, flat, gridder.count, batch)
    return out * gridder.density_weights


def kgrid_forward(gridder: KSpaceGridder, samples) -> np.ndarray:
    """Non-Cartesian samples to a Cartesian image on the N-grid."""
    plan = gridder.plan
    k = project_core_k(gridder, samples)
    img = fft_unitary(k, plan.ndim, inverse=True)
    return crop_center(img, plan.grid_shape) * plan.deapod_image


def kgrid_inverse(gridder: KSpaceGridder, image) -> np.ndarray:
    """Cartesian image to samples along the trajectory (adjoint of :func:`kgrid_forward`)."""
    plan = gridder.plan
    image = _check_grid(image, plan.grid_shape, "image")
    x = image * np.conj(plan.deapod_image)
    k = fft_unitary(zero_pad(x.astype(np.complex128), plan.oversampled_shape), plan.ndim)
    return backproject_core_k(gridder, k)
