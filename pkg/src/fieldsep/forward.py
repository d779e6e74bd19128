"""Fourier-domain dipole kernel and the forward frequency-shift model.

The susceptibility-induced frequency shift is the convolution of the
susceptibility map with a unit dipole response; in k-space this is the
multiplication by

    D(k) = 1/3 - (k . b)^2 / |k|^2

with b the unit B0 direction. k components are index frequencies scaled
by 1/voxel_size per axis, so anisotropic grids produce the correct
direction ratios. D(0) is set to 0: the mean of the susceptibility field
is unobservable and is pinned to zero by convention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .volume import GridSpec, Orientation, ScalarVolume


@dataclass(frozen=True)
class DipoleKernel:
    """Sampled k-space dipole kernel for one grid and B0 orientation."""

    grid: GridSpec
    orientation: Orientation
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", self.values)


@dataclass(frozen=True)
class FieldConversion:
    """ppm <-> Hz conversion constants: field strength and gyromagnetic
    ratio (MHz/T, default the proton value 42.5775)."""

    b0_tesla: float
    gamma_bar_mhz_per_t: float = 42.5775

    def __post_init__(self):
        if self.b0_tesla <= 0 or self.gamma_bar_mhz_per_t <= 0:
            raise ValueError("field strength and gyromagnetic ratio must be positive")


def _scaled_freq_grids(grid: GridSpec):
    nx, ny, nz = grid.dims
    vx, vy, vz = grid.voxel_size_mm
    kx = np.fft.fftfreq(nx, d=vx)[:, None, None]
    ky = np.fft.fftfreq(ny, d=vy)[None, :, None]
    kz = np.fft.fftfreq(nz, d=vz)[None, None, :]
    return kx, ky, kz


def dipole_kernel(grid: GridSpec, b: Orientation) -> DipoleKernel:
    """Evaluate D(k) on the signed-wrap index frequency grid; D(0) = 0."""
    kx, ky, kz = _scaled_freq_grids(grid)
    bx, by, bz = b.direction
    k2 = kx * kx + ky * ky + kz * kz
    kb = kx * bx + ky * by + kz * bz
    with np.errstate(divide="ignore", invalid="ignore"):
        values = 1.0 / 3.0 - (kb * kb) / k2
    values[0, 0, 0] = 0.0
    values.flags.writeable = False
    return DipoleKernel(grid=grid, orientation=b, values=values)


def susceptibility_field(chi: ScalarVolume, b: Orientation) -> ScalarVolume:
    """Susceptibility-induced frequency shift map (ppm) for one B0
    orientation, via k-space multiplication by the dipole kernel."""
    if chi.unit != "ppm":
        raise ValueError(f"chi must be in ppm, got unit {chi.unit!r}")
    kernel = dipole_kernel(chi.grid, b)
    f = np.fft.ifftn(kernel.values * np.fft.fftn(chi.data))
    scale = max(float(np.max(np.abs(f.real))), 1e-30)
    imag_residue = float(np.max(np.abs(f.imag)))
    if imag_residue > 1e-9 * scale:
        raise ValueError(
            f"imaginary residue {imag_residue:g} exceeds 1e-9 of field scale {scale:g}"
        )
    return ScalarVolume(chi.grid, f.real, "ppm")


def total_field(chi: ScalarVolume, cs: ScalarVolume, b: Orientation) -> ScalarVolume:
    """Total frequency shift: local chemical shift/exchange plus the
    nonlocal susceptibility-induced shift."""
    chi.grid.require_compatible(cs.grid)
    if cs.unit != "ppm":
        raise ValueError(f"cs must be in ppm, got unit {cs.unit!r}")
    fs = susceptibility_field(chi, b)
    return ScalarVolume(chi.grid, cs.data + fs.data, "ppm")


def ppm_to_hz(shift_ppm, c: FieldConversion):
    """Fractional shift (ppm) to absolute frequency (Hz) at field B0."""
    return shift_ppm * c.gamma_bar_mhz_per_t * c.b0_tesla


def hz_to_ppm(shift_hz, c: FieldConversion):
    return shift_hz / (c.gamma_bar_mhz_per_t * c.b0_tesla)
