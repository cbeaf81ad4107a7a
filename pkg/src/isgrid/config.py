"""Strict JSON experiment configuration.

A config is a JSON object with optional sections; anything not given falls
back to the per-command defaults below. Unknown keys are rejected at every
level. Example::

    {
      "phantom": {"shape": [64, 64], "blur": 1.0},
      "field": {"random": {"n_bumps": 3, "amplitude": 3.0, "radius": 6}},
      "acquisition": {"heartbeats": 40, "noise_sigma": 0.046},
      "kernel": {"width": 4, "oversampling": 2.0},
      "solver": {"lam": 1e-4, "max_iters": 100},
      "bins": 4,
      "seed": 0,
      "output": "out"
    }

The grid shape is set once in ``phantom.shape``; the field and acquisition
inherit it. ``field`` either lists ``bumps`` or asks for ``random`` ones
(seeded from the experiment seed unless given), or points at a field file
with ``file`` (recon only).
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

from .grid import KernelSpec
from .sim import AcquisitionSpec, Bump, FieldSpec, PhantomSpec, random_field_spec
from .solver import SolverConfig

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config", "DEFAULTS"]


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "invert-warp": {
        "phantom": {"shape": [128, 128], "scale": 0.7, "blur": 1.0, "margin": 8},
        "field": {"random": {"n_bumps": 3, "amplitude": 4.0, "radius": 10.0}},
        "kernel": {"width": 4, "oversampling": 2.0},
        "solver": {"lam": 1e-6, "max_iters": 400, "wavelet_levels": 3},
        "seed": 0,
        "output": "out-invert-warp",
    },
    "recon": {
        "phantom": {"shape": [64, 64], "scale": 0.7, "blur": 1.0, "margin": 6},
        "field": {"random": {"n_bumps": 3, "amplitude": 3.0, "radius": 6.0}},
        "acquisition": {},
        "kernel": {"width": 4, "oversampling": 2.0},
        "solver": {"lam": 1e-4, "max_iters": 100, "wavelet_levels": 3},
        "bins": 4,
        "seed": 0,
        "output": "out-recon",
    },
}

_TOP = {"phantom", "field", "acquisition", "kernel", "solver", "bins", "seed", "output"}
_PHANTOM = {"shape", "scale", "blur", "margin"}
_FIELD = {"bumps", "random", "smoothing", "file"}
_BUMP = {"center", "amplitude", "radius"}
_RANDOM = {"n_bumps", "amplitude", "radius", "seed", "margin"}
_ACQ = {"heartbeats", "interleaves_per_heartbeat", "trajectory", "samples_per_interleave",
        "nav_factor", "states", "shift_step", "shift_jitter", "noise_sigma", "ncoils",
        "coil_smoothness"}
_KERNEL = {"width", "oversampling", "beta"}
_SOLVER = {"lam", "max_iters", "step_size", "wavelet_levels", "tol", "power_iters"}


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    phantom: PhantomSpec
    field: FieldSpec
    kernel: KernelSpec
    solver: SolverConfig
    seed: int
    output: Path
    acquisition: AcquisitionSpec | None = None
    bins: int = 4
    fields_file: Path | None = None


def _check_keys(section: dict, allowed: set, where: str) -> None:
    if not isinstance(section, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "random":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    # an explicit bump list or file replaces the default random field
    fld = over.get("field", {})
    if isinstance(fld, dict) and ("bumps" in fld or "file" in fld) and "random" not in fld:
        out.get("field", {}).pop("random", None)
    return out


def _int_tuple(v, where: str) -> tuple[int, ...]:
    if not isinstance(v, (list, tuple)) or not v or not all(isinstance(n, int) for n in v):
        raise ConfigError(f"{where}: expected a non-empty list of integers")
    return tuple(v)


def _field(doc: dict, shape, seed: int, base: Path | None) -> tuple[FieldSpec, Path | None]:
    _check_keys(doc, _FIELD, "field")
    if "bumps" in doc and "random" in doc:
        raise ConfigError("field: give either 'bumps' or 'random', not both")
    smoothing = float(doc.get("smoothing", 0.0))
    path = None
    if "file" in doc:
        path = Path(doc["file"])
        if base is not None and not path.is_absolute():
            path = base / path
        hdr = path if path.suffix == ".json" else path.with_name(path.name + ".json")
        if not hdr.exists():
            raise ConfigError(f"field.file: {hdr} does not exist")
    if "random" in doc:
        r = dict(doc["random"])
        _check_keys(r, _RANDOM, "field.random")
        r.setdefault("seed", seed)
        spec = random_field_spec(shape, **r)
        return FieldSpec(spec.shape, spec.bumps, smoothing), path
    bumps = []
    for i, b in enumerate(doc.get("bumps", [])):
        _check_keys(b, _BUMP, f"field.bumps[{i}]")
        if set(b) != _BUMP:
            raise ConfigError(f"field.bumps[{i}]: needs center, amplitude and radius")
        bumps.append(Bump(tuple(map(float, b["center"])), tuple(map(float, b["amplitude"])),
                          float(b["radius"])))
    return FieldSpec(tuple(shape), tuple(bumps), smoothing), path


def parse_config(doc: dict, command: str, seed: int | None = None,
                 output=None, base: Path | None = None) -> ExperimentConfig:
    """Validate ``doc`` against ``command``'s defaults and build the specs.

    ``seed`` and ``output`` override the document (command-line flags).
    """
    if command not in DEFAULTS:
        raise ConfigError(f"no experiment config for command {command!r}")
    _check_keys(doc, _TOP, "config")
    if command == "invert-warp" and ("acquisition" in doc or "bins" in doc):
        raise ConfigError("invert-warp takes no 'acquisition' or 'bins' section")
    merged = _merge(DEFAULTS[command], doc)
    if seed is not None:
        merged["seed"] = seed
    if output is not None:
        merged["output"] = str(output)
    try:
        s = merged["seed"]
        if not isinstance(s, int) or isinstance(s, bool) or not 0 <= s < 2**64:
            raise ConfigError("seed: expected an unsigned 64-bit integer")

        ph = merged["phantom"]
        _check_keys(ph, _PHANTOM, "phantom")
        shape = _int_tuple(ph["shape"], "phantom.shape")
        phantom = PhantomSpec(shape=shape, scale=float(ph.get("scale", 0.7)),
                              blur=float(ph.get("blur", 0.0)), margin=int(ph.get("margin", 6)))

        field_spec, fields_file = _field(merged["field"], shape, s, base)
        if fields_file is not None and command != "recon":
            raise ConfigError("field.file is only used by recon")

        kd = merged["kernel"]
        _check_keys(kd, _KERNEL, "kernel")
        kernel = KernelSpec(**kd)

        sd = merged["solver"]
        _check_keys(sd, _SOLVER, "solver")
        solver = SolverConfig(**sd)

        acq = None
        if command == "recon":
            ad = dict(merged["acquisition"])
            _check_keys(ad, _ACQ, "acquisition")
            if "shift_step" in ad:
                ad["shift_step"] = tuple(float(v) for v in ad["shift_step"])
            elif len(shape) != 2:
                ad["shift_step"] = (2.0,) + (0.0,) * (len(shape) - 1)
            ad.setdefault("trajectory", "radial2d" if len(shape) == 2 else "radial3d")
            acq = AcquisitionSpec(shape=shape, field=field_spec, **ad)
            bins = merged["bins"]
            if not isinstance(bins, int) or bins < 1:
                raise ConfigError("bins: expected a positive integer")
        else:
            bins = 4
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return ExperimentConfig(command, phantom, field_spec, kernel, solver, s,
                            Path(merged["output"]), acq, bins, fields_file)


def load_config(path, command: str, seed: int | None = None, output=None) -> ExperimentConfig:
    """Read and validate a JSON config file; ``path=None`` gives the defaults."""
    if path is None:
        return parse_config({}, command, seed, output)
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{path}: config file does not exist")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON ({exc})") from None
    return parse_config(doc, command, seed, output, base=path.parent)
