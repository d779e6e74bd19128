"""JSON run-configuration parsing and validation.

Configs are validated before any computation: unknown keys anywhere in
the document are rejected, so a typo cannot silently fall back to a
default. Each section maps onto the corresponding domain type.
"""

from __future__ import annotations

import json
from pathlib import Path

from .echo import AcquisitionParams
from .inversion import InversionParams
from .phantom import (
    BrainLikeGeometry,
    CylinderGeometry,
    HeartGeometry,
    PhantomSpec,
    PlacedShape,
    RegionProps,
    SphereGeometry,
    centered,
)
from .volume import GridSpec, Orientation


class ConfigError(ValueError):
    """A configuration document failed validation."""


_TOP_KEYS = {"seed", "output_dir", "phantom", "acquisition", "separation", "inversion", "study"}
_GRID_KEYS = {"dims", "voxel_size_mm"}
_BACKGROUND_KEYS = {"chi_ppm", "cs_ppm"}
_SHAPE_KEYS = {
    "type", "center", "label", "chi_ppm", "cs_ppm",
    "radius_vox", "height_vox", "long_axis", "scale",
}
_PHANTOM_KEYS = {"grid", "background", "shapes"}
_ACQ_KEYS = {"te_ms", "b0_tesla", "noise_sigma", "t2star_ms", "seed"}
_SEP_KEYS = {"method", "reg_epsilon", "orthogonality_tol_deg", "complete", "long_axis"}
_INV_KEYS = {"solver", "lambda", "tkd_threshold", "cg_max_iters", "cg_rel_tol"}
_STUDY_KEYS = {
    "name", "shapes", "grid_n", "chi_ppm", "cs_ppm", "fast_mode", "inversion",
    "angles_deg", "axis", "sigma_ppm", "trials", "lambdas", "acquisition",
    "background_hz",
}
_STUDY_NAMES = {
    "null_field", "fat_phantom", "misalignment", "noise_gain",
    "regularization", "end_to_end",
}


def _require_keys(section: dict, allowed: set, where: str) -> None:
    if not isinstance(section, dict):
        raise ConfigError(f"{where} must be a JSON object, got {type(section).__name__}")
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {where}")


def load_config(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return validate_config(doc)


def validate_config(doc: dict) -> dict:
    _require_keys(doc, _TOP_KEYS, "config")
    if "seed" in doc and not isinstance(doc["seed"], int):
        raise ConfigError("seed must be an integer")
    if "phantom" in doc:
        _validate_phantom(doc["phantom"])
    if "acquisition" in doc:
        _require_keys(doc["acquisition"], _ACQ_KEYS, "acquisition")
    if "separation" in doc:
        _require_keys(doc["separation"], _SEP_KEYS, "separation")
    if "inversion" in doc:
        _require_keys(doc["inversion"], _INV_KEYS, "inversion")
    if "study" in doc:
        _validate_study(doc["study"])
    return doc


def _validate_phantom(section: dict) -> None:
    _require_keys(section, _PHANTOM_KEYS, "phantom")
    if "grid" not in section or "shapes" not in section:
        raise ConfigError("phantom needs 'grid' and 'shapes'")
    _require_keys(section["grid"], _GRID_KEYS, "phantom.grid")
    if "background" in section:
        _require_keys(section["background"], _BACKGROUND_KEYS, "phantom.background")
    if not isinstance(section["shapes"], list) or not section["shapes"]:
        raise ConfigError("phantom.shapes must be a non-empty list")
    for i, shape in enumerate(section["shapes"]):
        _require_keys(shape, _SHAPE_KEYS, f"phantom.shapes[{i}]")
        if "type" not in shape:
            raise ConfigError(f"phantom.shapes[{i}] needs a 'type'")
        if shape["type"] not in ("cylinder", "sphere", "heart", "brain_like"):
            raise ConfigError(f"unknown shape type {shape['type']!r}")


def _validate_study(section: dict) -> None:
    _require_keys(section, _STUDY_KEYS, "study")
    name = section.get("name")
    if name not in _STUDY_NAMES:
        raise ConfigError(f"study.name must be one of {sorted(_STUDY_NAMES)}, got {name!r}")
    if "inversion" in section:
        _require_keys(section["inversion"], _INV_KEYS, "study.inversion")
    if "acquisition" in section:
        _require_keys(section["acquisition"], _ACQ_KEYS, "study.acquisition")


def parse_grid(section: dict) -> GridSpec:
    dims = tuple(section["dims"])
    voxel = tuple(section.get("voxel_size_mm", (1.0, 1.0, 1.0)))
    return GridSpec(dims, voxel)


def parse_phantom_spec(section: dict) -> PhantomSpec:
    grid = parse_grid(section["grid"])
    bg = section.get("background", {})
    background = RegionProps(
        label=0,
        chi_ppm=float(bg.get("chi_ppm", 0.0)),
        cs_ppm=float(bg.get("cs_ppm", 0.0)),
    )
    shapes = []
    next_label = 1
    for shape in section["shapes"]:
        center = tuple(shape.get("center", centered(grid)))
        kind = shape["type"]
        if kind == "brain_like":
            geom = BrainLikeGeometry(center, float(shape.get("scale", 1.0)))
            shapes.append(PlacedShape(geom, None))
            next_label += 5
            continue
        label = int(shape.get("label", next_label))
        next_label = max(next_label, label) + 1
        props = RegionProps(
            label=label,
            chi_ppm=float(shape.get("chi_ppm", 0.0)),
            cs_ppm=float(shape.get("cs_ppm", 0.0)),
        )
        if kind == "cylinder":
            height = shape.get("height_vox")
            geom = CylinderGeometry(
                center,
                float(shape["radius_vox"]),
                None if height is None else float(height),
                shape.get("long_axis", "z"),
            )
        elif kind == "sphere":
            geom = SphereGeometry(center, float(shape["radius_vox"]))
        elif kind == "heart":
            geom = HeartGeometry(center, float(shape["scale"]))
        else:  # pragma: no cover - rejected by validation
            raise ConfigError(f"unknown shape type {kind!r}")
        shapes.append(PlacedShape(geom, props))
    return PhantomSpec(grid=grid, shapes=tuple(shapes), background=background)


def parse_acquisition(section: dict, default_seed: int = 0) -> AcquisitionParams:
    return AcquisitionParams(
        te_ms=tuple(section["te_ms"]),
        b0_tesla=float(section.get("b0_tesla", 3.0)),
        noise_sigma=float(section.get("noise_sigma", 0.0)),
        t2star_ms=section.get("t2star_ms"),
        seed=int(section.get("seed", default_seed)),
    )


def parse_inversion(section: dict | None) -> InversionParams:
    if not section:
        return InversionParams()
    return InversionParams(
        solver=section.get("solver", "grad_l2_cg"),
        tkd_threshold=float(section.get("tkd_threshold", 0.2)),
        lam=float(section.get("lambda", 10.0)),
        cg_max_iters=int(section.get("cg_max_iters", 200)),
        cg_rel_tol=float(section.get("cg_rel_tol", 1e-6)),
    )


def parse_orientation(text: str) -> Orientation:
    """CLI orientation syntax: an axis name 'x'|'y'|'z' or 'theta,phi' in
    degrees (polar from +z, azimuth from +y toward +x)."""
    text = text.strip()
    if text in ("x", "y", "z"):
        return Orientation.along(text)
    parts = text.split(",")
    if len(parts) != 2:
        raise ConfigError(f"orientation must be 'x', 'y', 'z' or 'theta,phi', got {text!r}")
    try:
        theta, phi = float(parts[0]), float(parts[1])
    except ValueError:
        raise ConfigError(f"bad orientation angles {text!r}") from None
    return Orientation.from_angles(theta, phi)
