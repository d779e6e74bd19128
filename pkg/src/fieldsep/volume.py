"""Grid geometry, 3D volumes, DFT contract, rotations, and ROI statistics.

Conventions used throughout the package:

* arrays are indexed ``[x, y, z]`` with shape ``dims = (nx, ny, nz)``;
* the DFT is unnormalized forward / ``1/N`` inverse with the DC bin at
  index ``(0, 0, 0)`` and the standard signed-frequency wrap at ``N/2``;
* the grid center is the geometric center of the voxel-center cloud,
  ``(dims - 1) / 2``, which all rotations share.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

Axis = str  # "x" | "y" | "z"

_AXIS_INDEX = {"x": 0, "y": 1, "z": 2}
# Right-handed quarter turn about each axis as a numpy rot90 axes pair:
# about z rotates x toward y, about x rotates y toward z, about y rotates
# z toward x.
_ROT90_AXES = {"z": (0, 1), "x": (1, 2), "y": (2, 0)}


class GridMismatchError(ValueError):
    """Two volumes were combined whose grids are not identical."""


def _axis_index(axis: Axis) -> int:
    try:
        return _AXIS_INDEX[axis]
    except KeyError:
        raise ValueError(f"axis must be one of 'x', 'y', 'z', got {axis!r}") from None


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class GridSpec:
    """Voxel grid geometry: dimensions and voxel size in mm per axis."""

    dims: tuple[int, int, int]
    voxel_size_mm: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        vox = tuple(float(v) for v in self.voxel_size_mm)
        if len(dims) != 3 or len(vox) != 3:
            raise ValueError("GridSpec needs 3 dims and 3 voxel sizes")
        if any(d < 4 for d in dims):
            raise ValueError(f"all dims must be >= 4, got {dims}")
        if any(v <= 0 for v in vox):
            raise ValueError(f"voxel sizes must be positive, got {vox}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "voxel_size_mm", vox)

    @property
    def num_voxels(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    @property
    def center(self) -> np.ndarray:
        """Geometric center of the voxel-center cloud, in voxel coords."""
        return (np.asarray(self.dims, dtype=float) - 1.0) / 2.0

    def require_compatible(self, other: "GridSpec") -> None:
        """Voxelwise arithmetic requires exactly matching dims and voxel sizes."""
        if self.dims != other.dims or self.voxel_size_mm != other.voxel_size_mm:
            raise GridMismatchError(
                f"incompatible grids: {self.dims}@{self.voxel_size_mm} vs "
                f"{other.dims}@{other.voxel_size_mm}"
            )


def _check_shape(grid: GridSpec, data: np.ndarray, what: str) -> None:
    if data.shape != grid.dims:
        raise ValueError(f"{what} shape {data.shape} does not match grid dims {grid.dims}")


@dataclass(frozen=True)
class ScalarVolume:
    """A real-valued 3D volume with its grid and physical unit."""

    grid: GridSpec
    data: np.ndarray
    unit: str = "dimensionless"  # "ppm" | "Hz" | "dimensionless"

    def __post_init__(self):
        if self.unit not in ("ppm", "Hz", "dimensionless"):
            raise ValueError(f"unknown unit {self.unit!r}")
        data = np.asarray(self.data, dtype=np.float64)
        _check_shape(self.grid, data, "ScalarVolume data")
        if not np.all(np.isfinite(data)):
            raise ValueError("ScalarVolume data contains non-finite values")
        object.__setattr__(self, "data", _freeze(data))

    def with_data(self, data: np.ndarray, unit: str | None = None) -> "ScalarVolume":
        """New volume on the same grid; unit kept unless overridden."""
        return ScalarVolume(self.grid, data, self.unit if unit is None else unit)

    @staticmethod
    def full(grid: GridSpec, value: float, unit: str = "dimensionless") -> "ScalarVolume":
        return ScalarVolume(grid, np.full(grid.dims, float(value)), unit)

    @staticmethod
    def zeros(grid: GridSpec, unit: str = "dimensionless") -> "ScalarVolume":
        return ScalarVolume.full(grid, 0.0, unit)


@dataclass(frozen=True)
class ComplexVolume:
    """A complex-valued 3D volume (simulated MR signal or a spectrum)."""

    grid: GridSpec
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.complex128)
        _check_shape(self.grid, data, "ComplexVolume data")
        if not np.all(np.isfinite(data.real)) or not np.all(np.isfinite(data.imag)):
            raise ValueError("ComplexVolume data contains non-finite values")
        object.__setattr__(self, "data", _freeze(data))


@dataclass(frozen=True)
class Mask:
    """A boolean 3D volume selecting voxels on a grid."""

    grid: GridSpec
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.dtype != np.bool_:
            data = data.astype(bool)
        _check_shape(self.grid, data, "Mask data")
        object.__setattr__(self, "data", _freeze(data))

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.data))

    def intersect(self, other: "Mask") -> "Mask":
        self.grid.require_compatible(other.grid)
        return Mask(self.grid, self.data & other.data)


@dataclass(frozen=True)
class Orientation:
    """A unit vector giving the B0 direction in the object frame."""

    direction: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=np.float64).reshape(3)
        norm = float(np.linalg.norm(d))
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"orientation must be a unit vector, |v| = {norm!r}")
        object.__setattr__(self, "direction", _freeze(d.copy()))

    @staticmethod
    def along(axis: Axis) -> "Orientation":
        d = np.zeros(3)
        d[_axis_index(axis)] = 1.0
        return Orientation(d)

    @staticmethod
    def from_vector(v) -> "Orientation":
        v = np.asarray(v, dtype=np.float64).reshape(3)
        norm = np.linalg.norm(v)
        if norm == 0:
            raise ValueError("cannot orient along the zero vector")
        return Orientation(v / norm)

    @staticmethod
    def from_angles(theta_deg: float, phi_deg: float) -> "Orientation":
        """Polar angle theta from +z; azimuth phi measured from +y toward +x."""
        th = np.deg2rad(theta_deg)
        ph = np.deg2rad(phi_deg)
        return Orientation.from_vector(
            [np.sin(th) * np.sin(ph), np.sin(th) * np.cos(ph), np.cos(th)]
        )

    def angle_to(self, other: "Orientation") -> float:
        """Angle between the two directions in degrees."""
        c = float(np.clip(np.dot(self.direction, other.direction), -1.0, 1.0))
        return float(np.degrees(np.arccos(c)))


@dataclass(frozen=True)
class RoiStats:
    """Mean and population standard deviation over a masked region."""

    mean: float
    std: float
    count: int


def dft_3d(v: ComplexVolume, direction: str = "forward") -> ComplexVolume:
    """3D DFT with unnormalized forward and 1/N inverse; DC at index (0,0,0)."""
    if direction == "forward":
        out = np.fft.fftn(v.data)
    elif direction == "inverse":
        out = np.fft.ifftn(v.data)
    else:
        raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")
    return ComplexVolume(v.grid, out)


def _require_square_plane(grid: GridSpec, a: int, b: int) -> None:
    if grid.dims[a] != grid.dims[b] or grid.voxel_size_mm[a] != grid.voxel_size_mm[b]:
        raise ValueError(
            "90-degree rotation needs equal dims and voxel sizes in the rotation "
            f"plane; axes {a} and {b} have dims {grid.dims[a]}x{grid.dims[b]}, "
            f"voxels {grid.voxel_size_mm[a]}x{grid.voxel_size_mm[b]} mm"
        )


def rotate_90(v, axis: Axis, quarter_turns: int = 1):
    """Exact right-handed quarter-turn rotation about a grid axis.

    An index permutation, no interpolation; four turns compose to the
    identity bit-for-bit. At +90 degrees it agrees with
    ``rotate_arbitrary(v, axis, 90.0)``. Accepts a ScalarVolume or a Mask
    and returns the same type.
    """
    _axis_index(axis)
    a, b = _ROT90_AXES[axis]
    _require_square_plane(v.grid, a, b)
    out = np.rot90(v.data, k=quarter_turns % 4, axes=(a, b))
    if isinstance(v, Mask):
        return Mask(v.grid, out.copy())
    return ScalarVolume(v.grid, out.copy(), v.unit)


def _rotation_matrix(axis: Axis, angle_deg: float) -> np.ndarray:
    """Right-handed rotation matrix about a coordinate axis."""
    t = np.deg2rad(angle_deg)
    c, s = np.cos(t), np.sin(t)
    i = _axis_index(axis)
    j, k = (i + 1) % 3, (i + 2) % 3
    rot = np.eye(3)
    rot[j, j] = c
    rot[k, k] = c
    rot[k, j] = s
    rot[j, k] = -s
    return rot


def rotate_arbitrary(v: ScalarVolume, axis: Axis, angle_deg: float) -> ScalarVolume:
    """Rotate a volume about the grid center with trilinear interpolation.

    Out-of-grid samples read 0. Limited to |angle| <= 45 degrees; the
    misalignment analyses only need small tilts, and quarter turns are
    handled exactly by rotate_90.
    """
    if abs(angle_deg) > 45.0:
        raise ValueError(f"|angle| must be <= 45 degrees, got {angle_deg}")
    if angle_deg == 0.0:
        return v
    center = v.grid.center
    rot_inv = _rotation_matrix(axis, -angle_deg)
    offset = center - rot_inv @ center
    out = ndimage.affine_transform(
        v.data, rot_inv, offset=offset, order=1, mode="constant", cval=0.0,
        prefilter=False,
    )
    return ScalarVolume(v.grid, out, v.unit)


def roi_stats(v: ScalarVolume, m: Mask) -> RoiStats:
    """Mean and population std of the volume over the masked voxels."""
    v.grid.require_compatible(m.grid)
    if m.count == 0:
        raise ValueError("roi_stats needs at least one selected voxel")
    vals = v.data[m.data]
    return RoiStats(mean=float(vals.mean()), std=float(vals.std()), count=vals.size)


def central_slab_mask(label: Mask, n_slices: int, axis: Axis) -> Mask:
    """Intersect a mask with the central n_slices slab along an axis.

    The slab is centered; an odd remainder leaves one extra slice on the
    high side (start index (N - n) // 2).
    """
    i = _axis_index(axis)
    n_ax = label.grid.dims[i]
    if not 1 <= n_slices <= n_ax:
        raise ValueError(f"n_slices must be in [1, {n_ax}], got {n_slices}")
    start = (n_ax - n_slices) // 2
    slab = np.zeros(label.grid.dims, dtype=bool)
    sl = [slice(None)] * 3
    sl[i] = slice(start, start + n_slices)
    slab[tuple(sl)] = True
    return Mask(label.grid, label.data & slab)


def erode_mask(m: Mask, iterations: int = 1) -> Mask:
    """Binary erosion with the 6-connected structuring element."""
    if iterations <= 0:
        return m
    return Mask(m.grid, ndimage.binary_erosion(m.data, iterations=iterations))


def dilate_mask(m: Mask, iterations: int = 1) -> Mask:
    """Binary dilation with the 6-connected structuring element."""
    if iterations <= 0:
        return m
    return Mask(m.grid, ndimage.binary_dilation(m.data, iterations=iterations))
