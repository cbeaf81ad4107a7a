"""Image-space gridding: a nonrigid warp and its exact adjoint.

A displacement field ``d`` defines the pull-style warp

    m_j[r] = m(r + d[r])

where ``m`` is evaluated with periodic band-limited (Dirichlet)
interpolation. The warped voxel positions ``r + d[r]`` are treated as
non-Cartesian points on the reference grid, and the NUFFT machinery is reused
with the roles of image and k-space swapped:

    forward:  m -> FFT -> deapodize (k-space) -> zero-pad -> inverse FFT -> gather
    adjoint:  m_j -> scatter -> FFT -> crop -> deapodize (k-space) -> inverse FFT
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .grid import GriddingPlan, crop_center, fft_unitary, interp_matrix, zero_pad

__all__ = [
    "DisplacementField",
    "ImageGridder",
    "igrid_forward",
    "igrid_adjoint",
    "warp_oracle",
]


@dataclass(frozen=True)
class DisplacementField:
    """Per-voxel offsets in voxel units, stored as ``(ndim, *shape)``."""

    offsets: np.ndarray

    def __post_init__(self):
        off = np.array(self.offsets, dtype=np.float64)
        if off.ndim < 2 or off.shape[0] != off.ndim - 1:
            raise ValueError(
                f"offsets must have shape (ndim, *grid), got {off.shape}"
            )
        if not np.all(np.isfinite(off)):
            raise ValueError("displacement field contains non-finite entries")
        off.setflags(write=False)
        object.__setattr__(self, "offsets", off)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.offsets.shape[1:]

    @property
    def ndim(self) -> int:
        return self.offsets.shape[0]

    @classmethod
    def zeros(cls, shape) -> "DisplacementField":
        shape = tuple(shape)
        return cls(np.zeros((len(shape),) + shape))

    def is_zero(self) -> bool:
        return not np.any(self.offsets)

    def warped_positions(self) -> np.ndarray:
        """``r + d[r]`` for every voxel, as a ``(count, ndim)`` array in voxel units."""
        grid = np.indices(self.shape, dtype=np.float64)
        return (grid + self.offsets).reshape(self.ndim, -1).T

    def __neg__(self) -> "DisplacementField":
        return DisplacementField(-self.offsets)


class ImageGridder:
    """Warp operator for one displacement field; warped coordinates are cached."""

    def __init__(self, plan: GriddingPlan, field: DisplacementField):
        if field.shape != plan.grid_shape:
            raise ValueError(
                f"field shape {field.shape} does not match grid {plan.grid_shape}"
            )
        self.plan = plan
        self.field = field
        n = np.asarray(plan.grid_shape, dtype=np.float64)
        g = np.asarray(plan.oversampled_shape, dtype=np.float64)
        self.warped_coords = (field.warped_positions() - n / 2.0) * (g / n) + g / 2.0
        self.warped_coords.setflags(write=False)
        self._gather = interp_matrix(plan.kernel, self.warped_coords, plan.oversampled_shape)
        self._scatter = self._gather.T.tocsr()


def _check(gridder: ImageGridder, image) -> np.ndarray:
    image = np.asarray(image)
    shape = gridder.plan.grid_shape
    if image.ndim < len(shape) or image.shape[-len(shape):] != shape:
        raise ValueError(f"image must end in shape {shape}, got {image.shape}")
    return image


def _apply(mat, x: np.ndarray, batch: tuple[int, ...]) -> np.ndarray:
    flat = x.reshape(-1, mat.shape[1])
    return np.asarray(mat @ flat.T).T.reshape(batch + (mat.shape[0],))


def igrid_forward(gridder: ImageGridder, image) -> np.ndarray:
    """Warp ``image`` by the gridder's field (``T{m}``)."""
    plan = gridder.plan
    image = _check(gridder, image)
    batch = image.shape[: image.ndim - plan.ndim]
    k = fft_unitary(image, plan.ndim) * np.conj(plan.deapod_kspace)
    over = fft_unitary(zero_pad(k, plan.oversampled_shape), plan.ndim, inverse=True)
    out = _apply(gridder._gather, over, batch)
    return out.reshape(batch + plan.grid_shape)


def igrid_adjoint(gridder: ImageGridder, warped) -> np.ndarray:
    """Adjoint warp ``T^H{m_j}``."""
    plan = gridder.plan
    warped = _check(gridder, warped)
    batch = warped.shape[: warped.ndim - plan.ndim]
    over = _apply(gridder._scatter, warped.astype(np.complex128), batch)
    k = fft_unitary(over.reshape(batch + plan.oversampled_shape), plan.ndim)
    k = crop_center(k, plan.grid_shape) * plan.deapod_kspace
    return fft_unitary(k, plan.ndim, inverse=True)


def warp_oracle(image, field: DisplacementField, method: str = "linear") -> np.ndarray:
    """Direct per-voxel interpolation at ``r + d[r]`` with periodic wrap.

    ``method`` is ``"nearest"`` or ``"linear"``. Real and imaginary parts are
    interpolated separately.
    """
    image = np.asarray(image)
    if image.shape != field.shape:
        raise ValueError(f"image shape {image.shape} does not match field {field.shape}")
    if method not in ("nearest", "linear"):
        raise ValueError(f"unknown interpolation method {method!r}")
    if field.is_zero():
        return image.copy()
    pos = np.indices(field.shape, dtype=np.float64) + field.offsets
    if method == "nearest":
        idx = tuple(np.rint(p).astype(np.int64) % n for p, n in zip(pos, field.shape))
        return image[idx]
    order = 1

    def interp(a):
        return ndimage.map_coordinates(a, pos, order=order, mode="grid-wrap")

    if np.iscomplexobj(image):
        return interp(image.real) + 1j * interp(image.imag)
    return interp(image)
