"""Multi-echo gradient-echo signal simulation and frequency fitting.

The acquisition chain mirrors a reference-scan protocol: complex echoes
are synthesized from a frequency map, the background field is removed by
complex division against a reference series, and the frequency map is
recovered by temporal phase unwrapping plus linear least squares of phase
versus echo time. Phase unwrapping is valid only while the per-echo phase
step stays below half a cycle (|f| * dTE < 1/2); nyquist_echo_spacing_ms
gives that limit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forward import FieldConversion, ppm_to_hz
from .volume import ComplexVolume, Mask, ScalarVolume


@dataclass(frozen=True)
class AcquisitionParams:
    """Echo times (ms), field strength, complex noise level and seed."""

    te_ms: tuple
    b0_tesla: float = 3.0
    noise_sigma: float = 0.0
    t2star_ms: float | None = None
    seed: int = 0

    def __post_init__(self):
        te = tuple(float(t) for t in self.te_ms)
        if len(te) < 2:
            raise ValueError("need at least 2 echoes")
        if any(b <= a for a, b in zip(te, te[1:])):
            raise ValueError(f"echo times must be strictly increasing, got {te}")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.t2star_ms is not None and self.t2star_ms <= 0:
            raise ValueError("t2star_ms must be positive")
        object.__setattr__(self, "te_ms", te)

    @staticmethod
    def uniform(first_te_ms: float, spacing_ms: float, n_echoes: int, **kw) -> "AcquisitionParams":
        te = tuple(first_te_ms + i * spacing_ms for i in range(n_echoes))
        return AcquisitionParams(te_ms=te, **kw)


@dataclass(frozen=True)
class EchoSeries:
    """One complex volume per echo time, all on a shared grid."""

    te_ms: tuple
    volumes: tuple
    params: AcquisitionParams | None = None

    def __post_init__(self):
        te = tuple(float(t) for t in self.te_ms)
        vols = tuple(self.volumes)
        if len(te) != len(vols):
            raise ValueError("te_ms and volumes lengths differ")
        if not vols:
            raise ValueError("empty echo series")
        for v in vols[1:]:
            vols[0].grid.require_compatible(v.grid)
        object.__setattr__(self, "te_ms", te)
        object.__setattr__(self, "volumes", vols)

    @property
    def grid(self):
        return self.volumes[0].grid


def nyquist_echo_spacing_ms(freq_hz: float) -> float:
    """Largest echo spacing that keeps a frequency from phase-aliasing."""
    f = abs(float(freq_hz))
    if f == 0.0:
        return float("inf")
    return 1000.0 / (2.0 * f)


def synthesize_echoes(
    df_ppm: ScalarVolume, magnitude: ScalarVolume, p: AcquisitionParams
) -> EchoSeries:
    """Simulate complex multi-echo images for a frequency-shift map.

    S(r, TE) = M(r) exp(-TE/T2*) exp(i 2 pi f_Hz(r) TE) + n, with n
    complex Gaussian of std noise_sigma per component, drawn echo by echo
    from a generator seeded with p.seed (bit-reproducible).
    """
    df_ppm.grid.require_compatible(magnitude.grid)
    if np.any(magnitude.data < 0):
        raise ValueError("magnitude must be non-negative")
    f_hz = ppm_to_hz(df_ppm.data, FieldConversion(p.b0_tesla))
    rng = np.random.default_rng(p.seed)
    vols = []
    for te in p.te_ms:
        te_s = te * 1e-3
        signal = magnitude.data * np.exp(2j * np.pi * f_hz * te_s)
        if p.t2star_ms is not None:
            signal = signal * np.exp(-te / p.t2star_ms)
        if p.noise_sigma > 0:
            shape = df_ppm.grid.dims
            signal = signal + (
                rng.normal(0.0, p.noise_sigma, shape)
                + 1j * rng.normal(0.0, p.noise_sigma, shape)
            )
        vols.append(ComplexVolume(df_ppm.grid, signal))
    return EchoSeries(te_ms=p.te_ms, volumes=tuple(vols), params=p)


def reference_divide(main: EchoSeries, reference: EchoSeries) -> tuple[EchoSeries, Mask]:
    """Remove any field component common to both series by voxelwise
    complex division main/reference.

    Voxels where |reference| falls below 1e-6 of that echo's maximum are
    zeroed and flagged in the returned low-SNR mask (union over echoes).
    """
    main.grid.require_compatible(reference.grid)
    if main.te_ms != reference.te_ms:
        raise ValueError(f"echo time mismatch: {main.te_ms} vs {reference.te_ms}")
    low_snr = np.zeros(main.grid.dims, dtype=bool)
    vols = []
    for mv, rv in zip(main.volumes, reference.volumes):
        ref = rv.data
        eps = 1e-6 * float(np.max(np.abs(ref)))
        low = np.abs(ref) < eps
        low_snr |= low
        safe_ref = np.where(low, 1.0, ref)
        vols.append(ComplexVolume(main.grid, np.where(low, 0.0, mv.data / safe_ref)))
    return (
        EchoSeries(te_ms=main.te_ms, volumes=tuple(vols), params=main.params),
        Mask(main.grid, low_snr),
    )


def fit_frequency(e: EchoSeries) -> tuple[ScalarVolume, ScalarVolume]:
    """Per-voxel frequency map (Hz) from multi-echo phase.

    Phase is temporally unwrapped across echoes (nearest multiple of
    2 pi from the previous echo), then fitted against echo time by
    unweighted linear least squares with a free intercept. Returns the
    frequency map and the per-voxel RMS phase residual (radians,
    dimensionless volume). Aliasing beyond the half-cycle limit is a
    correctness limit of the input protocol, not detectable per voxel.
    """
    phases = np.stack([np.angle(v.data) for v in e.volumes], axis=0)
    phases = np.unwrap(phases, axis=0)
    t = np.asarray(e.te_ms, dtype=float) * 1e-3
    t_c = (t - t.mean()).reshape(-1, 1, 1, 1)
    denom = float(np.sum(t_c ** 2))
    ph_c = phases - phases.mean(axis=0)
    slope = np.sum(t_c * ph_c, axis=0) / denom
    resid = ph_c - t_c * slope
    rms = np.sqrt(np.mean(resid ** 2, axis=0))
    freq = ScalarVolume(e.grid, slope / (2.0 * np.pi), "Hz")
    return freq, ScalarVolume(e.grid, rms, "dimensionless")
