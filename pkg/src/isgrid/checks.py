"""Operator self-checks: adjoint identities, NDFT oracle, transform unitarity.

:func:`run_selftest` backs the ``selftest`` command. Every check draws its
inputs from a fixed seed.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .grid import crop_center, fft_unitary, make_plan, zero_pad
from .igrid import DisplacementField, ImageGridder, igrid_adjoint, igrid_forward
from .kgrid import KSpaceGridder, kgrid_forward, kgrid_inverse
from .sense import CoilSet, NonrigidSenseOp, StackedSenseModel
from .solver import haar_adjoint, haar_forward

__all__ = [
    "CheckResult",
    "adjoint_discrepancy",
    "ndft",
    "ndft_adjoint",
    "random_complex",
    "random_coords",
    "random_field",
    "run_selftest",
    "format_report",
    "ADJOINT_DIMS",
]

ADJOINT_DIMS = ((64,), (32, 32), (16, 16, 16))


@dataclass
class CheckResult:
    name: str
    worst: float
    tolerance: float
    seconds: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.worst) and self.worst < self.tolerance)


def _inner(a, b) -> complex:
    if isinstance(a, list):
        return sum(np.vdot(u, v) for u, v in zip(a, b))
    return np.vdot(a, b)


def _norm(a) -> float:
    if isinstance(a, list):
        return float(np.sqrt(sum(np.vdot(u, u).real for u in a)))
    return float(np.linalg.norm(a))


def adjoint_discrepancy(forward: Callable, adjoint: Callable, x, y) -> float:
    """``|<A x, y> - <x, A^H y>| / (||A x|| ||y||)``."""
    ax = forward(x)
    lhs = _inner(ax, y)
    rhs = _inner(x, adjoint(y))
    scale = _norm(ax) * _norm(y)
    return float(abs(lhs - rhs) / scale) if scale > 0 else float(abs(lhs - rhs))


def random_complex(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def random_coords(rng: np.random.Generator, count: int, shape) -> np.ndarray:
    half = np.asarray(shape, dtype=np.float64) / 2.0
    return rng.uniform(-half, half, (count, len(shape)))


def random_field(rng: np.random.Generator, shape, amplitude: float = 2.0) -> DisplacementField:
    return DisplacementField(amplitude * rng.standard_normal((len(shape),) + tuple(shape)))


def _phases(coords, shape) -> np.ndarray:
    grids = np.indices(shape).reshape(len(shape), -1).T - np.asarray(shape) // 2
    return np.exp(-2j * np.pi * (coords / np.asarray(shape)) @ grids.T)


def ndft(image, coords) -> np.ndarray:
    """Direct unitary nonuniform DFT, ``(1/sqrt(N)) sum_x m[x] exp(-2 pi i k.(x - N/2)/N)``."""
    image = np.asarray(image)
    e = _phases(np.atleast_2d(coords), image.shape)
    return e @ image.reshape(-1) / np.sqrt(image.size)


def ndft_adjoint(values, coords, shape) -> np.ndarray:
    e = _phases(np.atleast_2d(coords), tuple(shape))
    return (e.conj().T @ np.asarray(values)).reshape(shape) / np.sqrt(np.prod(shape))


def _flip_tap(mat) -> None:
    # fault hook: negate one stored kernel weight of a scatter matrix
    mat.data[mat.data.size // 2] *= -1.0


# -- individual checks -------------------------------------------------------------

def _check_fft(rng) -> float:
    worst = 0.0
    for shape in [(64,), (32, 32), (16, 16, 16)]:
        x = random_complex(rng, shape)
        y = random_complex(rng, shape)
        fx = fft_unitary(x)
        back = fft_unitary(fx, inverse=True)
        worst = max(worst, np.linalg.norm(back - x) / np.linalg.norm(x))
        worst = max(worst, abs(np.linalg.norm(fx) - np.linalg.norm(x)) / np.linalg.norm(x))
        ip = np.vdot(x, y)
        worst = max(worst, abs(np.vdot(fx, fft_unitary(y)) - ip) / (np.linalg.norm(x) * np.linalg.norm(y)))
    return float(worst)


def _check_pad_crop(rng) -> float:
    worst = 0.0
    for small, big in [((8,), (16,)), ((8, 8), (16, 16)), ((4, 6, 8), (8, 12, 16))]:
        x = random_complex(rng, small)
        y = random_complex(rng, big)
        if not np.array_equal(crop_center(zero_pad(x, big), small), x):
            return float("inf")
        worst = max(worst, adjoint_discrepancy(lambda v: zero_pad(v, big),
                                               lambda v: crop_center(v, small), x, y))
    return worst


def _check_wavelet_roundtrip(rng) -> float:
    worst = 0.0
    for shape in [(64,), (32, 32), (16, 16, 16)]:
        x = random_complex(rng, shape)
        back = haar_adjoint(haar_forward(x, 3), 3)
        worst = max(worst, np.linalg.norm(back - x) / np.linalg.norm(x))
    return float(worst)


def _check_wavelet_parseval(rng) -> float:
    worst = 0.0
    for shape in [(64,), (32, 32), (16, 16, 16)]:
        x = random_complex(rng, shape)
        c = haar_forward(x, 3)
        worst = max(worst, abs(np.linalg.norm(c) - np.linalg.norm(x)) / np.linalg.norm(x))
    return float(worst)


def _check_kgrid_adjoint(rng, trials, fault) -> float:
    worst = 0.0
    for shape in ADJOINT_DIMS:
        plan = make_plan(shape)
        for _ in range(trials):
            m = 3 * int(np.prod(shape)) // 4
            g = KSpaceGridder(plan, random_coords(rng, m, shape), rng.uniform(0.1, 2.0, m))
            if fault:
                _flip_tap(g._scatter)
            x = random_complex(rng, shape)
            y = random_complex(rng, m)
            worst = max(worst, adjoint_discrepancy(lambda v: kgrid_inverse(g, v),
                                                   lambda v: kgrid_forward(g, v), x, y))
    return worst


def _check_igrid_adjoint(rng, trials) -> float:
    worst = 0.0
    for shape in ADJOINT_DIMS:
        plan = make_plan(shape)
        for _ in range(trials):
            w = ImageGridder(plan, random_field(rng, shape))
            x = random_complex(rng, shape)
            y = random_complex(rng, shape)
            worst = max(worst, adjoint_discrepancy(lambda v: igrid_forward(w, v),
                                                   lambda v: igrid_adjoint(w, v), x, y))
    return worst


def _sense_state(rng, plan, shape, coils) -> NonrigidSenseOp:
    m = int(np.prod(shape)) // 2
    g = KSpaceGridder(plan, random_coords(rng, m, shape), rng.uniform(0.1, 2.0, m))
    return NonrigidSenseOp(ImageGridder(plan, random_field(rng, shape)), coils, g)


def _random_coils(rng, shape, count=3) -> CoilSet:
    return CoilSet(random_complex(rng, (count,) + tuple(shape)))


def _check_sense_adjoint(rng, trials) -> float:
    worst = 0.0
    for shape in ADJOINT_DIMS:
        plan = make_plan(shape)
        for _ in range(trials):
            op = _sense_state(rng, plan, shape, _random_coils(rng, shape))
            x = random_complex(rng, shape)
            y = random_complex(rng, op.data_shape)
            worst = max(worst, adjoint_discrepancy(op.forward, op.adjoint, x, y))
    return worst


def _check_stacked_adjoint(rng, trials) -> float:
    worst = 0.0
    for shape in ADJOINT_DIMS:
        plan = make_plan(shape)
        for _ in range(trials):
            coils = _random_coils(rng, shape)
            model = StackedSenseModel([_sense_state(rng, plan, shape, coils) for _ in range(3)])
            x = random_complex(rng, shape)
            y = [random_complex(rng, s.data_shape) for s in model.states]
            worst = max(worst, adjoint_discrepancy(model.forward, model.adjoint, x, y))
    return worst


def _check_kgrid_ndft(rng) -> float:
    shape = (32, 32)
    plan = make_plan(shape)
    worst = 0.0
    for _ in range(5):
        coords = random_coords(rng, 200, shape)
        g = KSpaceGridder(plan, coords)
        x = random_complex(rng, shape)
        y = random_complex(rng, 200)
        exact = ndft(x, coords)
        worst = max(worst, np.linalg.norm(kgrid_inverse(g, x) - exact) / np.linalg.norm(exact))
        exact = ndft_adjoint(y, coords, shape)
        worst = max(worst, np.linalg.norm(kgrid_forward(g, y) - exact) / np.linalg.norm(exact))
    return float(worst)


def _check_igrid_shift(rng) -> float:
    shape = (32, 32)
    plan = make_plan(shape)
    off = np.zeros((2,) + shape)
    off[1] = 3.0
    w = ImageGridder(plan, DisplacementField(off))
    x = random_complex(rng, shape)
    want = np.roll(x, -3, axis=1)
    return float(np.linalg.norm(igrid_forward(w, x) - want) / np.linalg.norm(want))


# name, tolerance, runner(rng, trials, fault)
_CHECKS = [
    ("fft_unitarity", 1e-13, lambda r, t, f: _check_fft(r)),
    ("pad_crop_adjoint", 1e-14, lambda r, t, f: _check_pad_crop(r)),
    ("wavelet_roundtrip", 1e-13, lambda r, t, f: _check_wavelet_roundtrip(r)),
    ("wavelet_parseval", 1e-13, lambda r, t, f: _check_wavelet_parseval(r)),
    ("kgrid_adjoint", 1e-12, _check_kgrid_adjoint),
    ("igrid_adjoint", 1e-12, lambda r, t, f: _check_igrid_adjoint(r, t)),
    ("sense_adjoint", 1e-12, lambda r, t, f: _check_sense_adjoint(r, t)),
    ("stacked_adjoint", 1e-12, lambda r, t, f: _check_stacked_adjoint(r, t)),
    ("kgrid_vs_ndft", 1e-3, lambda r, t, f: _check_kgrid_ndft(r)),
    ("igrid_integer_shift", 1e-3, lambda r, t, f: _check_igrid_shift(r)),
]


def run_selftest(trials: int = 4, seed: int = 0, fault: bool = False) -> list[CheckResult]:
    """Run every named check; ``fault`` corrupts one tap of a k-space scatter matrix."""
    results = []
    for i, (name, tol, fn) in enumerate(_CHECKS):
        rng = np.random.default_rng([seed, i])
        t0 = time.perf_counter()
        worst = fn(rng, trials, fault)
        results.append(CheckResult(name, float(worst), tol, time.perf_counter() - t0))
    return results


def format_report(results: list[CheckResult]) -> str:
    lines = []
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        lines.append(f"{status}  {r.name:<22} worst={r.worst:.3e}  tol={r.tolerance:.0e}  ({r.seconds:.2f} s)")
    n = sum(r.passed for r in results)
    lines.append(f"{n}/{len(results)} checks passed")
    return "\n".join(lines)
