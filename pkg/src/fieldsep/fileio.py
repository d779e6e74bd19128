"""Bit-exact file formats for volumes, masks, echo series, and reports.

A volume on disk is a pair of files sharing a path prefix:

* ``<prefix>.json`` - header sidecar: dims, voxel size, unit, dtype,
  optional orientation and description;
* ``<prefix>.raw``  - payload, little-endian IEEE-754 float32 (or uint8
  0/1 for masks) in x-fastest order.

Echo series add a ``<prefix>.manifest.json`` listing per-echo real and
imaginary volume prefixes. Study reports are written as ``report.json``
plus a flat ``metrics.csv``. All files are written atomically
(write-temp-then-rename), so a crashed run never leaves a torn payload.
"""

from __future__ import annotations

import csv
import hashlib
import io as _stdio
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .echo import AcquisitionParams, EchoSeries
from .volume import ComplexVolume, GridSpec, Mask, Orientation, ScalarVolume


class FormatError(ValueError):
    """A file failed header/payload validation."""


_VOLUME_DTYPE = "f32le"
_MASK_DTYPE = "u8"


def _atomic_write_bytes(path: Path, payload: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_write_text(path: Path, text: str) -> None:
    _atomic_write_bytes(path, text.encode("utf-8"))


def _write_json(path: Path, doc: dict) -> None:
    _atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def config_hash(doc) -> str:
    """Stable SHA-256 of a JSON-serializable document."""
    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _paths(prefix) -> tuple[Path, Path]:
    prefix = Path(prefix)
    name = prefix.name
    for suffix in (".json", ".raw"):
        if name.endswith(suffix):
            name = name[: -len(suffix)]
    prefix = prefix.with_name(name)
    return prefix.with_name(prefix.name + ".json"), prefix.with_name(prefix.name + ".raw")


def write_volume(
    prefix,
    v: ScalarVolume,
    orientation: Orientation | None = None,
    description: str | None = None,
) -> None:
    """Write a scalar volume as header + f32le payload."""
    header_path, raw_path = _paths(prefix)
    header = {
        "dims": list(v.grid.dims),
        "voxel_size_mm": list(v.grid.voxel_size_mm),
        "unit": v.unit,
        "dtype": _VOLUME_DTYPE,
    }
    if orientation is not None:
        header["orientation"] = [float(c) for c in orientation.direction]
    if description is not None:
        header["description"] = description
    payload = np.asarray(v.data, dtype="<f4").ravel(order="F").tobytes()
    _atomic_write_bytes(raw_path, payload)
    _write_json(header_path, header)


def read_header(prefix) -> dict:
    header_path, _ = _paths(prefix)
    try:
        with open(header_path, "r", encoding="utf-8") as fh:
            header = json.load(fh)
    except FileNotFoundError:
        raise FormatError(f"missing header file {header_path}") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"unreadable header {header_path}: {exc}") from None
    if "dims" not in header or "dtype" not in header:
        raise FormatError(f"header {header_path} lacks dims/dtype")
    dims = header["dims"]
    if len(dims) != 3 or any(int(d) != d or d < 1 for d in dims):
        raise FormatError(f"bad dims {dims} in {header_path}")
    return header


def _read_payload(prefix, header: dict, np_dtype, itemsize: int) -> np.ndarray:
    _, raw_path = _paths(prefix)
    dims = tuple(int(d) for d in header["dims"])
    expected = itemsize * dims[0] * dims[1] * dims[2]
    try:
        raw = raw_path.read_bytes()
    except FileNotFoundError:
        raise FormatError(f"missing payload file {raw_path}") from None
    if len(raw) != expected:
        raise FormatError(
            f"payload size mismatch in {raw_path}: expected {expected} bytes "
            f"for dims {dims}, got {len(raw)}"
        )
    return np.frombuffer(raw, dtype=np_dtype).reshape(dims, order="F")


def read_volume(prefix) -> ScalarVolume:
    """Read a scalar volume; validates dtype, size, and finiteness."""
    header = read_header(prefix)
    if header["dtype"] != _VOLUME_DTYPE:
        raise FormatError(f"expected dtype {_VOLUME_DTYPE}, got {header['dtype']!r}")
    data = _read_payload(prefix, header, "<f4", 4)
    if not np.all(np.isfinite(data)):
        raise FormatError(f"non-finite values in payload of {prefix}")
    grid = GridSpec(tuple(header["dims"]), tuple(header.get("voxel_size_mm", (1.0, 1.0, 1.0))))
    unit = header.get("unit", "dimensionless")
    return ScalarVolume(grid, np.asarray(data, dtype=np.float64), unit)


def read_volume_orientation(prefix) -> Orientation | None:
    header = read_header(prefix)
    if "orientation" not in header:
        return None
    return Orientation.from_vector(header["orientation"])


def write_mask(prefix, m: Mask, description: str | None = None) -> None:
    header_path, raw_path = _paths(prefix)
    header = {
        "dims": list(m.grid.dims),
        "voxel_size_mm": list(m.grid.voxel_size_mm),
        "dtype": _MASK_DTYPE,
    }
    if description is not None:
        header["description"] = description
    payload = m.data.astype(np.uint8).ravel(order="F").tobytes()
    _atomic_write_bytes(raw_path, payload)
    _write_json(header_path, header)


def read_mask(prefix) -> Mask:
    header = read_header(prefix)
    if header["dtype"] != _MASK_DTYPE:
        raise FormatError(f"expected dtype {_MASK_DTYPE}, got {header['dtype']!r}")
    data = _read_payload(prefix, header, np.uint8, 1)
    bad = np.unique(data[(data != 0) & (data != 1)])
    if bad.size:
        raise FormatError(f"mask payload of {prefix} contains values {bad.tolist()}")
    grid = GridSpec(tuple(header["dims"]), tuple(header.get("voxel_size_mm", (1.0, 1.0, 1.0))))
    return Mask(grid, data.astype(bool))


def write_echo_series(prefix, e: EchoSeries) -> None:
    """One real + one imaginary volume per echo, plus a manifest."""
    prefix = Path(prefix)
    entries = []
    for i, (te, v) in enumerate(zip(e.te_ms, e.volumes)):
        re_name = f"{prefix.name}_echo{i:03d}_real"
        im_name = f"{prefix.name}_echo{i:03d}_imag"
        grid = v.grid
        write_volume(prefix.with_name(re_name), ScalarVolume(grid, v.data.real, "dimensionless"))
        write_volume(prefix.with_name(im_name), ScalarVolume(grid, v.data.imag, "dimensionless"))
        entries.append({"te_ms": te, "real": re_name, "imag": im_name})
    manifest = {"echoes": entries}
    if e.params is not None:
        manifest["params"] = {
            "te_ms": list(e.params.te_ms),
            "b0_tesla": e.params.b0_tesla,
            "noise_sigma": e.params.noise_sigma,
            "t2star_ms": e.params.t2star_ms,
            "seed": e.params.seed,
        }
    _write_json(prefix.with_name(prefix.name + ".manifest.json"), manifest)


def read_echo_series(prefix) -> EchoSeries:
    prefix = Path(prefix)
    name = prefix.name
    if name.endswith(".manifest.json"):
        prefix = prefix.with_name(name[: -len(".manifest.json")])
    manifest_path = prefix.with_name(prefix.name + ".manifest.json")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise FormatError(f"missing echo manifest {manifest_path}") from None
    volumes = []
    te_ms = []
    for entry in manifest["echoes"]:
        re_vol = read_volume(prefix.with_name(entry["real"]))
        im_vol = read_volume(prefix.with_name(entry["imag"]))
        re_vol.grid.require_compatible(im_vol.grid)
        volumes.append(ComplexVolume(re_vol.grid, re_vol.data + 1j * im_vol.data))
        te_ms.append(float(entry["te_ms"]))
    params = None
    if "params" in manifest:
        p = manifest["params"]
        params = AcquisitionParams(
            te_ms=tuple(p["te_ms"]),
            b0_tesla=p["b0_tesla"],
            noise_sigma=p["noise_sigma"],
            t2star_ms=p["t2star_ms"],
            seed=p["seed"],
        )
    return EchoSeries(te_ms=tuple(te_ms), volumes=tuple(volumes), params=params)


def render_slice(
    v: ScalarVolume, axis: str, index: int, window: tuple[float, float] | None = None
) -> np.ndarray:
    """Window a slice to an 8-bit grayscale image.

    Values at or below the window floor map to 0, at or above the ceiling
    to 255. A degenerate window (hi <= lo, e.g. a constant slice under
    the default min/max window) renders uniform mid-gray.
    """
    ax = {"x": 0, "y": 1, "z": 2}[axis]
    if not 0 <= index < v.grid.dims[ax]:
        raise ValueError(f"slice {index} out of range for axis {axis} ({v.grid.dims[ax]})")
    sl = [slice(None)] * 3
    sl[ax] = index
    plane = v.data[tuple(sl)]
    if window is None:
        window = (float(plane.min()), float(plane.max()))
    lo, hi = float(window[0]), float(window[1])
    if hi <= lo:
        return np.full(plane.shape, 128, dtype=np.uint8)
    scaled = np.clip((plane - lo) / (hi - lo), 0.0, 1.0)
    return np.round(scaled * 255.0).astype(np.uint8)


def write_pgm(path, image: np.ndarray) -> None:
    """Binary 8-bit PGM (P5). Image rows run along the first array axis."""
    if image.ndim != 2 or image.dtype != np.uint8:
        raise ValueError("write_pgm needs a 2D uint8 array")
    h, w = image.shape
    buf = _stdio.BytesIO()
    buf.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
    buf.write(image.tobytes())
    _atomic_write_bytes(Path(path), buf.getvalue())


def write_metrics_csv(path, metrics) -> None:
    buf = _stdio.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["name", "value", "target", "tolerance", "criterion", "provenance", "passed"])
    for m in metrics:
        writer.writerow([
            m.name,
            repr(m.value),
            "" if m.target is None else repr(m.target),
            "" if m.tolerance is None else repr(m.tolerance),
            m.criterion,
            m.provenance,
            "" if m.passed is None else str(m.passed),
        ])
    _atomic_write_text(Path(path), buf.getvalue())


def write_study_report(report, out_dir) -> Path:
    """Write report.json and metrics.csv for a study; returns the report path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / "report.json"
    _write_json(report_path, report.to_dict())
    write_metrics_csv(out_dir / "metrics.csv", report.metrics)
    return report_path
