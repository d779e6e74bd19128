"""Separation of the chemical shift/exchange and susceptibility-induced
components from multi-orientation total frequency-shift maps.

Two routes are provided. For three mutually orthogonal B0 orientations
the susceptibility fields cancel pointwise when summed (the squared
direction cosines of any k against an orthogonal triad add to one), so
the voxelwise average of the three total maps is the chemical
shift/exchange map and the per-orientation susceptibility fields follow
by subtraction. For arbitrary orientation sets, each k-sample is a
two-unknown linear model

    dF_i(k) = F_c(k) + D_i(k) X(k)

solved by least squares over the N orientations. Symmetric objects need
fewer scans: missing orientations of a cylinder or a sphere are
synthesized by exact quarter-turn rotations of acquired maps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forward import dipole_kernel
from .volume import Mask, Orientation, ScalarVolume, rotate_90, _axis_index

_AXES = ("x", "y", "z")


class OrthogonalityError(ValueError):
    """An orientation set expected to be orthogonal is not; carries the
    worst pairwise deviation from 90 degrees."""

    def __init__(self, message: str, worst_pair_angle_deg: float):
        super().__init__(message)
        self.worst_pair_angle_deg = worst_pair_angle_deg


@dataclass(frozen=True)
class OrientedField:
    """A total frequency-shift map with the B0 orientation it was
    acquired (or simulated) under."""

    orientation: Orientation
    field: ScalarVolume

    def __post_init__(self):
        if self.field.unit != "ppm":
            raise ValueError(f"oriented fields must be in ppm, got {self.field.unit!r}")


@dataclass(frozen=True)
class OrientationSet:
    """A collection of oriented field maps on one shared grid."""

    entries: tuple

    def __post_init__(self):
        entries = tuple(self.entries)
        if not entries:
            raise ValueError("orientation set cannot be empty")
        grid = entries[0].field.grid
        for e in entries[1:]:
            grid.require_compatible(e.field.grid)
        for i in range(len(entries)):
            for j in range(i + 1, len(entries)):
                ang = entries[i].orientation.angle_to(entries[j].orientation)
                if ang <= 0.1:
                    raise ValueError(
                        f"orientations {i} and {j} are only {ang:.4f} degrees apart"
                    )
        object.__setattr__(self, "entries", entries)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def grid(self):
        return self.entries[0].field.grid


@dataclass(frozen=True)
class SeparationResult:
    """Chemical shift/exchange map plus one susceptibility-induced field
    per input orientation. conditioning_report is the fraction of
    k-samples whose per-sample design was rank-deficient (general route
    only; the orthogonal route is direct averaging)."""

    f_c: ScalarVolume
    f_s: tuple
    method: str  # "orthogonal_average" | "general_lsq"
    conditioning_report: float = 0.0


def _check_orthogonal(entries, tol_deg: float) -> None:
    worst = 0.0
    worst_pair = (0, 1)
    for i in range(len(entries)):
        for j in range(i + 1, len(entries)):
            ang = entries[i].orientation.angle_to(entries[j].orientation)
            dev = abs(ang - 90.0)
            if dev > worst:
                worst, worst_pair = dev, (i, j)
    if worst > tol_deg:
        i, j = worst_pair
        raise OrthogonalityError(
            f"orientations {i} and {j} deviate {worst:.3f} degrees from orthogonal "
            f"(tolerance {tol_deg} degrees)",
            worst_pair_angle_deg=worst,
        )


def separate_orthogonal(s: OrientationSet, orthogonality_tol_deg: float = 0.5) -> SeparationResult:
    """Separate via the orthogonal-triad average.

    f_c is the voxelwise mean of the three total maps; each f_s is the
    input minus f_c, so f_c + f_s[i] reproduces the input exactly.
    """
    if len(s) != 3:
        raise ValueError(f"orthogonal separation needs exactly 3 orientations, got {len(s)}")
    _check_orthogonal(s.entries, orthogonality_tol_deg)
    grid = s.grid
    f_c = (s.entries[0].field.data + s.entries[1].field.data + s.entries[2].field.data) / 3.0
    f_s = tuple(
        ScalarVolume(grid, e.field.data - f_c, "ppm") for e in s.entries
    )
    return SeparationResult(
        f_c=ScalarVolume(grid, f_c, "ppm"),
        f_s=f_s,
        method="orthogonal_average",
    )


def separate_general(
    s: OrientationSet,
    reg_epsilon: float = 0.0,
    sigma_min_floor: float = 1e-6,
) -> SeparationResult:
    """Separate arbitrary orientation sets by per-k-sample least squares.

    At each k the N-row design [1, D_i(k)] is solved through its 2x2
    normal equations, Tikhonov-shifted by reg_epsilon. Samples whose
    design has smaller singular value below sigma_min_floor (always
    including k = 0, where every kernel vanishes) are rank-deficient in
    the susceptibility column: there X(k) is set to 0 while F_c(k) is
    still the well-posed ones-column solution (the mean). The fraction of
    such samples is returned as conditioning_report.
    """
    if len(s) < 2:
        raise ValueError(f"general separation needs at least 2 orientations, got {len(s)}")
    if reg_epsilon < 0:
        raise ValueError("reg_epsilon must be >= 0")
    grid = s.grid
    n = float(len(s))

    kernels = [dipole_kernel(grid, e.orientation).values for e in s.entries]
    spectra = [np.fft.fftn(e.field.data) for e in s.entries]

    sum_d = np.zeros(grid.dims)
    sum_d2 = np.zeros(grid.dims)
    sum_f = np.zeros(grid.dims, dtype=complex)
    sum_df = np.zeros(grid.dims, dtype=complex)
    for d, f in zip(kernels, spectra):
        sum_d += d
        sum_d2 += d * d
        sum_f += f
        sum_df += d * f

    # Smaller eigenvalue of the 2x2 normal matrix [[n, sum_d], [sum_d, sum_d2]]
    # is the squared smaller singular value of the design.
    tr = n + sum_d2
    det = n * sum_d2 - sum_d * sum_d
    lam_min = 0.5 * (tr - np.sqrt(np.maximum(tr * tr - 4.0 * det, 0.0)))
    degenerate = np.sqrt(np.maximum(lam_min, 0.0)) < sigma_min_floor

    det_reg = (n + reg_epsilon) * (sum_d2 + reg_epsilon) - sum_d * sum_d
    safe_det = np.where(degenerate, 1.0, det_reg)
    f_c_hat = np.where(
        degenerate,
        sum_f / n,
        ((sum_d2 + reg_epsilon) * sum_f - sum_d * sum_df) / safe_det,
    )
    x_hat = np.where(degenerate, 0.0, ((n + reg_epsilon) * sum_df - sum_d * sum_f) / safe_det)

    f_c = ScalarVolume(grid, np.fft.ifftn(f_c_hat).real, "ppm")
    f_s = tuple(
        ScalarVolume(grid, np.fft.ifftn(d * x_hat).real, "ppm") for d in kernels
    )
    return SeparationResult(
        f_c=f_c,
        f_s=f_s,
        method="general_lsq",
        conditioning_report=float(np.count_nonzero(degenerate)) / degenerate.size,
    )


def _remaining_axis(a: str, b: str) -> str:
    (rem,) = set(_AXES) - {a, b}
    return rem


def _closest_axis(o: Orientation) -> str | None:
    """Grid axis the orientation lies along (within 1e-6), or None."""
    for ax in _AXES:
        if abs(abs(o.direction[_axis_index(ax)]) - 1.0) < 1e-6:
            return ax
    return None


def complete_cylinder(
    parallel: OrientedField, perpendicular: OrientedField, long_axis: str
) -> OrientationSet:
    """Complete a two-scan cylinder acquisition to a full orthogonal triad.

    The object must be rotationally symmetric about long_axis. The missing
    short-axis map is the quarter-turn rotation of the perpendicular map
    about the long axis, assigned to the remaining short axis; this is
    exact (an index permutation) for square in-plane grids.
    """
    ax_par = _closest_axis(parallel.orientation)
    ax_perp = _closest_axis(perpendicular.orientation)
    if ax_par != long_axis:
        raise ValueError(
            f"parallel scan must be oriented along the long axis {long_axis!r}, "
            f"got {parallel.orientation.direction}"
        )
    if ax_perp is None or ax_perp == long_axis:
        raise ValueError(
            f"perpendicular scan must be oriented along a short grid axis, "
            f"got {perpendicular.orientation.direction}"
        )
    parallel.field.grid.require_compatible(perpendicular.field.grid)
    third_axis = _remaining_axis(long_axis, ax_perp)
    synthesized = rotate_90(perpendicular.field, long_axis, 1)
    return OrientationSet(
        entries=(
            parallel,
            perpendicular,
            OrientedField(orientation=Orientation.along(third_axis), field=synthesized),
        )
    )


def complete_sphere(single: OrientedField) -> OrientationSet:
    """Complete a one-scan sphere acquisition to a full orthogonal triad.

    The two missing maps are quarter-turn rotations of the acquired map
    about the two axes orthogonal to its B0; requires a cubic grid with
    isotropic voxels so both rotations are exact permutations.
    """
    ax = _closest_axis(single.orientation)
    if ax is None:
        raise ValueError(
            f"single-scan completion needs a grid-axis orientation, "
            f"got {single.orientation.direction}"
        )
    others = [a for a in _AXES if a != ax]
    entries = [single]
    for rot_axis in others:
        # Rotating about rot_axis carries the scan axis onto the remaining axis.
        target = _remaining_axis(ax, rot_axis)
        entries.append(
            OrientedField(
                orientation=Orientation.along(target),
                field=rotate_90(single.field, rot_axis, 1),
            )
        )
    return OrientationSet(entries=tuple(entries))
