"""File formats: raw arrays with JSON sidecars, displacement fields, image export.

An array is stored as two files: ``name.json`` (header) and ``name.bin``
(raw little-endian payload, row-major). The header fully describes how to
read the payload::

    {"format": "isgrid-array", "version": 1, "shape": [64, 64],
     "dtype": "complex128", "endianness": "little", "axis_order": ["x0", "x1"],
     "space": "image", "payload": "name.bin", "meta": {}}
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .igrid import DisplacementField
from .motion import MotionEstimate
from .solver import SolveReport

__all__ = [
    "ArrayFile",
    "write_array",
    "read_array",
    "write_fields",
    "read_fields",
    "write_motion",
    "read_motion",
    "write_metrics",
    "read_metrics",
    "write_trace",
    "magnitude_to_uint8",
    "export_image",
]

FORMAT = "isgrid-array"
VERSION = 1
DTYPES = ("complex64", "complex128", "float32", "float64")
SPACES = ("image", "kspace", "samples", "field", "none")
_HEADER_KEYS = {"format", "version", "shape", "dtype", "endianness", "axis_order",
                "space", "payload", "meta"}


def _header_path(path) -> Path:
    path = Path(path)
    return path if path.suffix == ".json" else path.with_name(path.name + ".json")


@dataclass
class ArrayFile:
    """An array plus the header fields that describe it."""

    data: np.ndarray
    space: str = "none"
    axis_order: list[str] | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.dtype.name not in DTYPES:
            raise ValueError(f"unsupported dtype {self.data.dtype}; use one of {DTYPES}")
        if self.space not in SPACES:
            raise ValueError(f"unknown space tag {self.space!r}")
        if self.axis_order is None:
            self.axis_order = [f"x{i}" for i in range(self.data.ndim)]
        if len(self.axis_order) != self.data.ndim:
            raise ValueError("axis_order needs one name per axis")

    def write(self, path) -> Path:
        """Write header and payload; returns the header path."""
        header = _header_path(path)
        payload = header.with_suffix(".bin")
        dt = self.data.dtype.newbyteorder("<")
        payload.write_bytes(np.ascontiguousarray(self.data, dtype=dt).tobytes())
        doc = {
            "format": FORMAT,
            "version": VERSION,
            "shape": list(self.data.shape),
            "dtype": self.data.dtype.name,
            "endianness": "little",
            "axis_order": list(self.axis_order),
            "space": self.space,
            "payload": payload.name,
            "meta": self.meta,
        }
        header.write_text(json.dumps(doc, indent=2) + "\n")
        return header

    @classmethod
    def read(cls, path) -> "ArrayFile":
        header = _header_path(path)
        if not header.exists():
            raise FileNotFoundError(f"{header}: no such array header")
        try:
            doc = json.loads(header.read_text())
        except json.JSONDecodeError as exc:
            raise ValueError(f"{header}: malformed header ({exc})") from None
        if not isinstance(doc, dict):
            raise ValueError(f"{header}: header must be a JSON object")
        unknown = set(doc) - _HEADER_KEYS
        if unknown:
            raise ValueError(f"{header}: unknown header keys {sorted(unknown)}")
        missing = _HEADER_KEYS - set(doc)
        if missing:
            raise ValueError(f"{header}: missing header keys {sorted(missing)}")
        if doc["format"] != FORMAT or doc["version"] != VERSION:
            raise ValueError(f"{header}: not an {FORMAT} v{VERSION} header")
        if doc["dtype"] not in DTYPES:
            raise ValueError(f"{header}: unsupported dtype {doc['dtype']!r}")
        if doc["endianness"] != "little":
            raise ValueError(f"{header}: only little-endian payloads are supported")
        shape = tuple(int(n) for n in doc["shape"])
        if any(n < 0 for n in shape):
            raise ValueError(f"{header}: negative axis length")
        dt = np.dtype(doc["dtype"]).newbyteorder("<")
        payload = header.parent / doc["payload"]
        if not payload.exists():
            raise FileNotFoundError(f"{payload}: payload missing")
        raw = payload.read_bytes()
        expected = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
        if len(raw) != expected:
            raise ValueError(f"{payload}: {len(raw)} bytes, header implies {expected}")
        data = np.frombuffer(raw, dtype=dt).reshape(shape).astype(doc["dtype"])
        return cls(data, doc["space"], list(doc["axis_order"]), dict(doc["meta"]))


def write_array(path, data, space: str = "none", axis_order=None, meta=None) -> Path:
    return ArrayFile(data, space, axis_order, meta or {}).write(path)


def read_array(path) -> np.ndarray:
    return ArrayFile.read(path).data


# -- displacement fields and motion estimates ---------------------------------

def write_fields(path, fields: dict[int, DisplacementField], reference_bin: int = 0) -> Path:
    """Per-bin fields as one ``(K, ndim, *grid)`` float64 array."""
    bins = sorted(fields)
    if bins != list(range(len(bins))):
        raise ValueError(f"bins must be 0..K-1, got {bins}")
    stack = np.stack([fields[b].offsets for b in bins]).astype(np.float64)
    ndim = stack.shape[1]
    meta = {"kind": "displacement_fields", "bins": len(bins), "reference_bin": int(reference_bin)}
    axes = ["bin", "component"] + [f"x{i}" for i in range(ndim)]
    return write_array(path, stack, "field", axes, meta)


def read_fields(path) -> tuple[dict[int, DisplacementField], int]:
    af = ArrayFile.read(path)
    if af.meta.get("kind") != "displacement_fields":
        raise ValueError(f"{path}: not a displacement-field file")
    a = af.data
    if a.dtype != np.float64 or a.ndim < 3 or a.shape[1] != a.ndim - 2:
        raise ValueError(f"{path}: expected (K, ndim, *grid) float64, got {a.shape} {a.dtype}")
    if af.meta.get("bins") != a.shape[0]:
        raise ValueError(f"{path}: header bin count does not match payload")
    fields = {b: DisplacementField(a[b]) for b in range(a.shape[0])}
    return fields, int(af.meta.get("reference_bin", 0))


def write_motion(path, est: MotionEstimate, labels=None) -> Path:
    meta = {"kind": "motion_estimate", "reference_index": int(est.reference_index)}
    if labels is not None:
        meta["bins"] = [int(v) for v in labels]
    return write_array(path, est.shifts, "none", ["heartbeat", "axis"], meta)


def read_motion(path) -> MotionEstimate:
    af = ArrayFile.read(path)
    if af.meta.get("kind") != "motion_estimate":
        raise ValueError(f"{path}: not a motion-estimate file")
    return MotionEstimate(af.data.astype(np.float64), int(af.meta["reference_index"]))


# -- metrics ----------------------------------------------------------------------

def write_metrics(path, metrics: dict, title: str = "") -> None:
    """One ``key=value`` line per metric (``repr`` floats, so values round-trip)."""
    lines = [f"# {title}"] if title else []
    for k, v in metrics.items():
        if "=" in k or "\n" in k:
            raise ValueError(f"bad metric name {k!r}")
        lines.append(f"{k}={v!r}" if isinstance(v, float) else f"{k}={v}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_metrics(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        if not line or line.startswith("#"):
            continue
        k, _, v = line.partition("=")
        out[k] = v
    return out


def write_trace(path, report: SolveReport) -> None:
    """Solver report as ``key=value`` lines followed by the objective trace."""
    lines = [
        f"iterations_run={report.iterations_run}",
        f"step_size={report.step_size!r}",
        f"final_relative_change={report.final_relative_change!r}",
        "# iteration objective",
    ]
    lines += [f"{i} {v!r}" for i, v in enumerate(report.objective_trace)]
    Path(path).write_text("\n".join(lines) + "\n")


# -- image export -------------------------------------------------------------------

def magnitude_to_uint8(image) -> np.ndarray:
    """Min-max window ``|image|`` onto 0..255. Constant images map to 0."""
    mag = np.abs(np.asarray(image))
    if mag.ndim == 3:
        mag = mag[mag.shape[0] // 2]
    if mag.ndim != 2:
        raise ValueError(f"can only export 2D images or 3D volumes, got {mag.ndim}D")
    if not np.all(np.isfinite(mag)):
        raise ValueError("image contains non-finite values")
    lo, hi = float(mag.min()), float(mag.max())
    if hi <= lo:
        return np.zeros(mag.shape, dtype=np.uint8)
    return np.round((mag - lo) / (hi - lo) * 255.0).astype(np.uint8)


def export_image(path, image) -> None:
    """Write an 8-bit grayscale magnitude image; format follows the suffix (.png, .pgm).

    3D volumes export their central slice along axis 0.
    """
    from PIL import Image

    path = Path(path)
    if path.suffix.lower() not in (".png", ".pgm"):
        raise ValueError(f"{path}: export supports .png and .pgm")
    Image.fromarray(magnitude_to_uint8(image)).save(path)
