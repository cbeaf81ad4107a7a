"""Wavelet-regularized least squares by FISTA.

Solves ``argmin_x ||y - A x||_2^2 + lam * ||W x||_1`` where ``W`` is an
orthonormal multi-level Haar transform and ``A`` is any linear operator with
``forward``/``adjoint`` methods (a :class:`~isgrid.sense.StackedSenseModel`,
a single warp, ...). Data may be a single array or a list of arrays.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "SolverConfig",
    "SolveReport",
    "SolverDivergence",
    "LinearOperator",
    "haar_forward",
    "haar_adjoint",
    "wavelet_forward",
    "wavelet_adjoint",
    "soft_threshold",
    "power_iteration",
    "fista_solve",
]

log = logging.getLogger(__name__)

_SQRT_HALF = math.sqrt(0.5)


@dataclass(frozen=True)
class SolverConfig:
    lam: float = 1e-6
    max_iters: int = 400
    step_size: float | str = "auto"
    wavelet_levels: int = 3
    tol: float | None = None
    power_iters: int = 50

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.step_size != "auto" and not (
            isinstance(self.step_size, (int, float)) and self.step_size > 0
        ):
            raise ValueError("step_size must be 'auto' or a positive number")
        if self.wavelet_levels < 1:
            raise ValueError("wavelet_levels must be >= 1")
        if self.power_iters < 30:
            raise ValueError("power_iters must be >= 30")
        if self.tol is not None and self.tol < 0:
            raise ValueError("tol must be >= 0")


@dataclass
class SolveReport:
    objective_trace: list[float] = field(default_factory=list)
    iterations_run: int = 0
    final_relative_change: float = float("nan")
    step_size: float = float("nan")


class SolverDivergence(RuntimeError):
    """Raised when the objective becomes non-finite; carries the partial report."""

    def __init__(self, message: str, report: SolveReport):
        super().__init__(message)
        self.report = report


class LinearOperator:
    """Plain forward/adjoint pair."""

    def __init__(self, forward: Callable, adjoint: Callable):
        self._forward = forward
        self._adjoint = adjoint

    def forward(self, x):
        return self._forward(x)

    def adjoint(self, y):
        return self._adjoint(y)


# -- Haar wavelet -----------------------------------------------------------

def _check_levels(shape, levels: int) -> None:
    if levels < 1:
        raise ValueError("wavelet levels must be >= 1")
    step = 2**levels
    bad = [n for n in shape if n % step]
    if bad:
        raise ValueError(f"grid {tuple(shape)} is not divisible by 2**{levels} on every axis")


def haar_forward(x, levels: int) -> np.ndarray:
    """Orthonormal multi-level Haar transform over all axes of ``x``.

    Coefficients are stored in place: after each level the approximation
    block occupies the low-index corner, detail bands fill the rest.
    """
    x = np.asarray(x)
    _check_levels(x.shape, levels)
    out = np.array(x, dtype=np.result_type(x.dtype, np.float64), copy=True)
    size = list(out.shape)
    for _ in range(levels):
        block = tuple(slice(0, s) for s in size)
        sub = out[block]
        for axis in range(out.ndim):
            even = np.take(sub, np.arange(0, sub.shape[axis], 2), axis=axis)
            odd = np.take(sub, np.arange(1, sub.shape[axis], 2), axis=axis)
            sub = np.concatenate(((even + odd) * _SQRT_HALF, (even - odd) * _SQRT_HALF), axis=axis)
        out[block] = sub
        size = [s // 2 for s in size]
    return out


def haar_adjoint(c, levels: int) -> np.ndarray:
    """Inverse (= adjoint) of :func:`haar_forward`."""
    c = np.asarray(c)
    _check_levels(c.shape, levels)
    out = np.array(c, dtype=np.result_type(c.dtype, np.float64), copy=True)
    for lev in reversed(range(levels)):
        size = [s // 2**lev for s in out.shape]
        block = tuple(slice(0, s) for s in size)
        sub = out[block]
        for axis in reversed(range(out.ndim)):
            half = sub.shape[axis] // 2
            a = np.take(sub, np.arange(half), axis=axis)
            d = np.take(sub, np.arange(half, 2 * half), axis=axis)
            merged = np.empty_like(sub)
            idx = [slice(None)] * sub.ndim
            idx[axis] = slice(0, None, 2)
            merged[tuple(idx)] = (a + d) * _SQRT_HALF
            idx[axis] = slice(1, None, 2)
            merged[tuple(idx)] = (a - d) * _SQRT_HALF
            sub = merged
        out[block] = sub
    return out


wavelet_forward = haar_forward
wavelet_adjoint = haar_adjoint


def soft_threshold(coeffs, threshold: float) -> np.ndarray:
    """Shrink magnitudes by ``threshold``, clip at zero, keep the phase."""
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    c = np.asarray(coeffs)
    mag = np.abs(c)
    scale = np.maximum(mag - threshold, 0.0) / np.where(mag > 0, mag, 1.0)
    return c * scale


# -- block arithmetic (data may be an array or a list of arrays) -------------

def _is_blocks(y) -> bool:
    return isinstance(y, (list, tuple))


def _combine(a, b, alpha: float, beta: float):
    if _is_blocks(a):
        return [alpha * u + beta * v for u, v in zip(a, b)]
    return alpha * a + beta * b


def _sqnorm(y) -> float:
    if _is_blocks(y):
        return float(sum(np.vdot(u, u).real for u in y))
    return float(np.vdot(y, y).real)


def power_iteration(op, shape, iters: int = 50, seed: int = 0) -> float:
    """Largest eigenvalue of ``A^H A`` by power iteration from a seeded start."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(iters):
        z = op.adjoint(op.forward(x))
        est = float(np.vdot(x, z).real)
        nz = np.linalg.norm(z)
        if nz == 0:
            return 0.0
        x = z / nz
    return est


def _shape_of(op, y):
    if hasattr(op, "grid_shape"):
        return tuple(op.grid_shape)
    return np.asarray(op.adjoint(y)).shape


def fista_solve(op, y=None, config: SolverConfig | None = None, x0=None):
    """Plain FISTA (no restart) with a Haar soft-threshold prox.

    Returns ``(x, report)``. ``y`` defaults to ``op.data`` when the operator
    carries its own data (stacked models).
    """
    config = config or SolverConfig()
    if y is None:
        y = getattr(op, "data", None)
        if y is None:
            raise ValueError("no data given and operator carries none")
    shape = _shape_of(op, y)
    _check_levels(shape, config.wavelet_levels)

    if config.step_size == "auto":
        lip = 2.0 * power_iteration(op, shape, config.power_iters)
        if not lip > 0:
            raise ValueError("operator appears to be zero; cannot choose a step size")
        step = 0.9 / lip
    else:
        step = float(config.step_size)
    levels = config.wavelet_levels
    thresh = config.lam * step

    def objective(ax, x):
        res = _sqnorm(_combine(y, ax, 1.0, -1.0))
        if config.lam == 0:
            return res
        return res + config.lam * float(np.abs(haar_forward(x, levels)).sum())

    x = np.zeros(shape, dtype=np.complex128) if x0 is None else np.array(x0, dtype=np.complex128)
    ax = op.forward(x)
    z, az = x, ax
    t = 1.0
    report = SolveReport(step_size=step)
    rel = float("nan")
    # overflow is detected through the objective below
    with np.errstate(over="ignore", invalid="ignore"):
        for it in range(config.max_iters):
            grad = op.adjoint(_combine(az, y, 2.0, -2.0))
            v = z - step * grad
            if config.lam > 0:
                x_new = haar_adjoint(soft_threshold(haar_forward(v, levels), thresh), levels)
            else:
                x_new = v
            ax_new = op.forward(x_new)
            obj = objective(ax_new, x_new)
            report.objective_trace.append(obj)
            report.iterations_run = it + 1
            if not math.isfinite(obj):
                raise SolverDivergence(f"objective became non-finite at iteration {it}", report)

            nx = np.linalg.norm(x_new)
            rel = float(np.linalg.norm(x_new - x) / nx) if nx > 0 else 0.0
            t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            mom = (t - 1.0) / t_new
            z = x_new + mom * (x_new - x)
            az = _combine(ax_new, _combine(ax_new, ax, 1.0, -1.0), 1.0, mom)
            x, ax, t = x_new, ax_new, t_new
            if config.tol is not None and rel < config.tol:
                break
    report.final_relative_change = rel
    log.debug("fista: %d iterations, final objective %.3e", report.iterations_run,
              report.objective_trace[-1])
    return x, report
