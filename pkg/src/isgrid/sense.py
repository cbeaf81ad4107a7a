"""Nonrigid SENSE operators and their stacking over motion states.

For one state ``j`` with warp ``T_j``, coil maps ``S_c`` and inverse k-space
gridding ``G_j``::

    A_j x = [G_j (S_c * T_j x)]_c
    A_j^H y = T_j^H ( sum_c conj(S_c) * G_j^H y_c )

The stacked model concatenates the per-state blocks; its adjoint sums the
per-state adjoints.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .igrid import ImageGridder, igrid_adjoint, igrid_forward
from .kgrid import KSpaceGridder, kgrid_forward, kgrid_inverse

__all__ = [
    "CoilSet",
    "NonrigidSenseOp",
    "StackedSenseModel",
    "sense_forward",
    "sense_adjoint",
    "stacked_forward",
    "stacked_adjoint",
]


@dataclass(frozen=True)
class CoilSet:
    """Coil sensitivity maps, shape ``(ncoils, *grid)``."""

    maps: np.ndarray

    def __post_init__(self):
        maps = np.array(self.maps, dtype=np.complex128)
        if maps.ndim < 2 or maps.shape[0] < 1:
            raise ValueError(f"coil maps must be (ncoils, *grid), got {maps.shape}")
        maps.setflags(write=False)
        object.__setattr__(self, "maps", maps)

    @property
    def ncoils(self) -> int:
        return self.maps.shape[0]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.maps.shape[1:]

    @classmethod
    def unit(cls, shape) -> "CoilSet":
        return cls(np.ones((1,) + tuple(shape), dtype=np.complex128))

    def rss(self) -> np.ndarray:
        return np.sqrt(np.sum(np.abs(self.maps) ** 2, axis=0))


class NonrigidSenseOp:
    """Warp, coil multiply, inverse gridding. ``warp=None`` means identity."""

    def __init__(self, warp: ImageGridder | None, coils: CoilSet, gridder: KSpaceGridder):
        shape = gridder.plan.grid_shape
        if coils.shape != shape:
            raise ValueError(f"coil maps {coils.shape} do not match grid {shape}")
        if warp is not None and warp.plan.grid_shape != shape:
            raise ValueError(f"warp grid {warp.plan.grid_shape} does not match {shape}")
        self.warp = warp
        self.coils = coils
        self.gridder = gridder

    @property
    def grid_shape(self) -> tuple[int, ...]:
        return self.gridder.plan.grid_shape

    @property
    def data_shape(self) -> tuple[int, int]:
        return (self.coils.ncoils, self.gridder.count)

    def forward(self, x):
        return sense_forward(self, x)

    def adjoint(self, y):
        return sense_adjoint(self, y)


def sense_forward(op: NonrigidSenseOp, x) -> np.ndarray:
    """Per-coil samples, shape ``(ncoils, count)``."""
    x = np.asarray(x)
    if x.shape != op.grid_shape:
        raise ValueError(f"image shape {x.shape} does not match {op.grid_shape}")
    warped = x if op.warp is None else igrid_forward(op.warp, x)
    return kgrid_inverse(op.gridder, op.coils.maps * warped)


def sense_adjoint(op: NonrigidSenseOp, y) -> np.ndarray:
    y = np.asarray(y)
    if y.shape != op.data_shape:
        raise ValueError(f"data shape {y.shape} does not match {op.data_shape}")
    coil_images = kgrid_forward(op.gridder, y)
    combined = np.sum(np.conj(op.coils.maps) * coil_images, axis=0)
    return combined if op.warp is None else igrid_adjoint(op.warp, combined)


class StackedSenseModel:
    """Ordered states ``A_0 .. A_{K-1}`` with optional matching data blocks."""

    def __init__(self, states: Sequence[NonrigidSenseOp], data: Sequence[np.ndarray] | None = None):
        states = list(states)
        if not states:
            raise ValueError("model needs at least one state")
        shape = states[0].grid_shape
        if any(s.grid_shape != shape for s in states):
            raise ValueError("all states must share one image grid")
        self.states = states
        self.data = None
        if data is not None:
            self.data = _check_blocks(self, data)

    @property
    def grid_shape(self) -> tuple[int, ...]:
        return self.states[0].grid_shape

    def forward(self, x):
        return stacked_forward(self, x)

    def adjoint(self, blocks):
        return stacked_adjoint(self, blocks)


def _check_blocks(model: StackedSenseModel, blocks) -> list[np.ndarray]:
    blocks = [np.asarray(b) for b in blocks]
    if len(blocks) != len(model.states):
        raise ValueError(f"{len(blocks)} data blocks for {len(model.states)} states")
    for j, (b, s) in enumerate(zip(blocks, model.states)):
        if b.shape != s.data_shape:
            raise ValueError(f"state {j}: data shape {b.shape}, expected {s.data_shape}")
    return blocks


def stacked_forward(model: StackedSenseModel, x) -> list[np.ndarray]:
    return [sense_forward(op, x) for op in model.states]


def stacked_adjoint(model: StackedSenseModel, blocks) -> np.ndarray:
    blocks = _check_blocks(model, blocks)
    out = sense_adjoint(model.states[0], blocks[0])
    for op, y in zip(model.states[1:], blocks[1:]):
        out = out + sense_adjoint(op, y)
    return out
