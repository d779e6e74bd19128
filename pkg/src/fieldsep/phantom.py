"""Procedural labeled phantoms: cylinders, spheres, an implicit heart,
and a brain-like arrangement of ellipsoids with literature susceptibility
values painted per region.

Geometry is sampled at voxel centers (no anti-aliasing); when shapes
overlap, the later shape wins. All coordinates are voxel indices; a
shape's ``center`` defaults to the grid center ``(dims - 1) / 2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .volume import GridSpec, Mask, ScalarVolume, _axis_index


@dataclass(frozen=True)
class RegionProps:
    """Material properties of one labeled region.

    ``chi_ppm`` is the magnetic susceptibility; ``cs_ppm`` the chemical
    shift/exchange frequency offset, both in ppm.
    """

    label: int
    chi_ppm: float
    cs_ppm: float

    def __post_init__(self):
        if self.label < 0:
            raise ValueError("labels must be >= 0 (0 is reserved for background)")


def _grid_extent_check(lo: float, hi: float, n: int, what: str) -> None:
    if lo < -0.5 or hi > n - 0.5:
        raise ValueError(f"{what} spans [{lo}, {hi}] outside grid extent [-0.5, {n - 0.5}]")


class CylinderGeometry:
    """Axis-aligned circular cylinder. ``height_vox=None`` spans the whole
    grid along the long axis (periodically an infinite cylinder)."""

    def __init__(self, center, radius_vox: float, height_vox: float | None, long_axis: str):
        self.center = tuple(float(c) for c in center)
        self.radius_vox = float(radius_vox)
        self.height_vox = None if height_vox is None else float(height_vox)
        self.long_axis = long_axis
        if self.radius_vox <= 0:
            raise ValueError("cylinder radius must be positive")
        if self.height_vox is not None and self.height_vox <= 0:
            raise ValueError("cylinder height must be positive (or None for through-grid)")
        _axis_index(long_axis)

    def check_bounds(self, grid: GridSpec) -> None:
        ax = _axis_index(self.long_axis)
        for i in range(3):
            if i == ax:
                if self.height_vox is not None:
                    _grid_extent_check(
                        self.center[i] - self.height_vox / 2,
                        self.center[i] + self.height_vox / 2,
                        grid.dims[i], "cylinder height",
                    )
            else:
                _grid_extent_check(
                    self.center[i] - self.radius_vox,
                    self.center[i] + self.radius_vox,
                    grid.dims[i], "cylinder radius",
                )

    def contains(self, x, y, z) -> np.ndarray:
        ax = _axis_index(self.long_axis)
        coords = [x - self.center[0], y - self.center[1], z - self.center[2]]
        axial = coords.pop(ax)
        inside = coords[0] ** 2 + coords[1] ** 2 <= self.radius_vox ** 2
        if self.height_vox is not None:
            inside = inside & (np.abs(axial) <= self.height_vox / 2)
        else:
            inside = inside & np.ones_like(axial, dtype=bool)
        return inside


class SphereGeometry:
    def __init__(self, center, radius_vox: float):
        self.center = tuple(float(c) for c in center)
        self.radius_vox = float(radius_vox)
        if self.radius_vox <= 0:
            raise ValueError("sphere radius must be positive")

    def check_bounds(self, grid: GridSpec) -> None:
        for i in range(3):
            _grid_extent_check(
                self.center[i] - self.radius_vox,
                self.center[i] + self.radius_vox,
                grid.dims[i], "sphere radius",
            )

    def contains(self, x, y, z) -> np.ndarray:
        return (
            (x - self.center[0]) ** 2
            + (y - self.center[1]) ** 2
            + (z - self.center[2]) ** 2
        ) <= self.radius_vox ** 2


class EllipsoidGeometry:
    def __init__(self, center, semi_axes_vox):
        self.center = tuple(float(c) for c in center)
        self.semi_axes_vox = tuple(float(a) for a in semi_axes_vox)
        if any(a <= 0 for a in self.semi_axes_vox):
            raise ValueError("ellipsoid semi-axes must be positive")

    def check_bounds(self, grid: GridSpec) -> None:
        for i in range(3):
            _grid_extent_check(
                self.center[i] - self.semi_axes_vox[i],
                self.center[i] + self.semi_axes_vox[i],
                grid.dims[i], "ellipsoid semi-axis",
            )

    def contains(self, x, y, z) -> np.ndarray:
        ax, ay, az = self.semi_axes_vox
        return (
            ((x - self.center[0]) / ax) ** 2
            + ((y - self.center[1]) / ay) ** 2
            + ((z - self.center[2]) / az) ** 2
        ) <= 1.0


# Bounding half-widths of the unit implicit heart, with margin.
_HEART_HALF_WIDTH = (1.3, 0.9, 1.5)


class HeartGeometry:
    """The classic sextic implicit heart surface, scaled to the grid.

    Inside test in normalized coordinates p = (voxel - center) / scale:
    (x^2 + 9/4 y^2 + z^2 - 1)^3 - x^2 z^3 - 9/80 y^2 z^3 <= 0.
    """

    def __init__(self, center, scale: float):
        self.center = tuple(float(c) for c in center)
        self.scale = float(scale)
        if self.scale <= 0:
            raise ValueError("heart scale must be positive")

    def check_bounds(self, grid: GridSpec) -> None:
        for i in range(3):
            half = _HEART_HALF_WIDTH[i] * self.scale
            _grid_extent_check(
                self.center[i] - half, self.center[i] + half, grid.dims[i], "heart extent"
            )

    def contains(self, x, y, z) -> np.ndarray:
        xn = (x - self.center[0]) / self.scale
        yn = (y - self.center[1]) / self.scale
        zn = (z - self.center[2]) / self.scale
        shell = (xn ** 2 + 2.25 * yn ** 2 + zn ** 2 - 1.0) ** 3
        return shell - (xn ** 2) * zn ** 3 - 0.1125 * (yn ** 2) * zn ** 3 <= 0.0


def heart_geometry(center, scale: float) -> HeartGeometry:
    """Analytic inside-test for the heart shape (see HeartGeometry)."""
    return HeartGeometry(center, scale)


class BrainLikeGeometry:
    """Marker geometry; build_phantom expands it into the five brain-like
    subregions from brain_like_regions."""

    def __init__(self, center, scale: float = 1.0):
        self.center = tuple(float(c) for c in center)
        self.scale = float(scale)
        if self.scale <= 0:
            raise ValueError("brain-like scale must be positive")

    def check_bounds(self, grid: GridSpec) -> None:
        for geom, _ in brain_like_regions(self.scale, self.center, first_label=1):
            geom.check_bounds(grid)


# (name, relative center, semi-axes, chi in ppm); painted in order, the
# deep-gray nuclei over white matter over cortical gray.
_BRAIN_SUBREGIONS = (
    ("gray_matter", (0.0, 0.0, 0.0), (22.0, 26.0, 20.0), 0.02),
    ("white_matter", (0.0, 0.0, 0.0), (15.0, 19.0, 13.0), -0.02),
    ("caudate_nucleus", (-7.0, 6.0, 2.0), (3.0, 5.0, 3.0), 0.04),
    ("putamen", (8.0, 3.0, 0.0), (4.0, 6.0, 4.0), 0.07),
    ("globus_pallidus", (7.0, -8.0, -2.0), (3.0, 4.0, 3.0), 0.12),
)


def brain_like_regions(scale: float, center=(0.0, 0.0, 0.0), first_label: int = 1):
    """Deterministic five-region ellipsoid arrangement with per-region
    susceptibilities (gray/white matter and three deep-gray nuclei) and
    zero chemical shift.

    Returns a list of (EllipsoidGeometry, RegionProps) in paint order;
    labels run from first_label.
    """
    if scale <= 0:
        raise ValueError("scale must be positive")
    out = []
    for i, (_, rel_center, semi, chi) in enumerate(_BRAIN_SUBREGIONS):
        geom = EllipsoidGeometry(
            tuple(c + scale * r for c, r in zip(center, rel_center)),
            tuple(scale * a for a in semi),
        )
        out.append((geom, RegionProps(label=first_label + i, chi_ppm=chi, cs_ppm=0.0)))
    return out


def brain_like_region_names() -> tuple[str, ...]:
    return tuple(name for name, *_ in _BRAIN_SUBREGIONS)


@dataclass(frozen=True)
class PlacedShape:
    """A geometry plus the properties painted inside it. ``props`` may be
    None only for BrainLikeGeometry, whose subregions carry their own."""

    geometry: object
    props: RegionProps | None = None

    def __post_init__(self):
        if self.props is None and not isinstance(self.geometry, BrainLikeGeometry):
            raise ValueError("props required for non-brain-like shapes")
        if self.props is not None and self.props.label == 0:
            raise ValueError("label 0 is reserved for the background")


@dataclass(frozen=True)
class PhantomSpec:
    """Declarative phantom description: grid, placed shapes, background."""

    grid: GridSpec
    shapes: tuple
    background: RegionProps = RegionProps(label=0, chi_ppm=0.0, cs_ppm=0.0)

    def __post_init__(self):
        shapes = tuple(self.shapes)
        if not shapes:
            raise ValueError("a phantom needs at least one shape")
        if self.background.label != 0:
            raise ValueError("background label must be 0")
        object.__setattr__(self, "shapes", shapes)


@dataclass(frozen=True)
class LabeledPhantom:
    """Voxelized phantom: integer labels, chi and cs maps, per-label masks."""

    labels: np.ndarray
    chi: ScalarVolume
    cs: ScalarVolume
    region_masks: dict

    @property
    def grid(self) -> GridSpec:
        return self.chi.grid

    def interior_mask(self, label: int) -> Mask:
        return self.region_masks[label]


def _expand_shapes(spec: PhantomSpec):
    """Resolve brain-like markers into concrete (geometry, props) pairs."""
    placed = []
    used_labels = {0}
    for shape in spec.shapes:
        if isinstance(shape.geometry, BrainLikeGeometry):
            first = max(used_labels) + 1
            subs = brain_like_regions(
                shape.geometry.scale, shape.geometry.center, first_label=first
            )
            placed.extend(subs)
            used_labels.update(p.label for _, p in subs)
        else:
            placed.append((shape.geometry, shape.props))
            if shape.props.label in used_labels:
                raise ValueError(f"duplicate region label {shape.props.label}")
            used_labels.add(shape.props.label)
    return placed


def build_phantom(spec: PhantomSpec) -> LabeledPhantom:
    """Voxelize a phantom spec: a voxel belongs to a shape iff its center
    lies inside the analytic geometry; later shapes overwrite earlier ones."""
    grid = spec.grid
    nx, ny, nz = grid.dims
    x = np.arange(nx, dtype=float)[:, None, None]
    y = np.arange(ny, dtype=float)[None, :, None]
    z = np.arange(nz, dtype=float)[None, None, :]

    labels = np.zeros(grid.dims, dtype=np.int32)
    chi = np.full(grid.dims, spec.background.chi_ppm)
    cs = np.full(grid.dims, spec.background.cs_ppm)

    placed = _expand_shapes(spec)
    for geom, props in placed:
        geom.check_bounds(grid)
    for geom, props in placed:
        inside = geom.contains(x, y, z)
        labels[inside] = props.label
        chi[inside] = props.chi_ppm
        cs[inside] = props.cs_ppm

    region_masks = {
        int(lab): Mask(grid, labels == lab) for lab in np.unique(labels)
    }
    labels.flags.writeable = False
    return LabeledPhantom(
        labels=labels,
        chi=ScalarVolume(grid, chi, "ppm"),
        cs=ScalarVolume(grid, cs, "ppm"),
        region_masks=region_masks,
    )


def centered(grid: GridSpec) -> tuple[float, float, float]:
    """The grid-center coordinate used as the default shape center."""
    c = grid.center
    return (float(c[0]), float(c[1]), float(c[2]))
