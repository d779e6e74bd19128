"""Scripted experiments: the null-field demonstration, the fat-cylinder
separation pipeline, misalignment and noise-amplification analyses,
regularization robustness, and the end-to-end echo chain.

Every study is deterministic under its parameters and returns a
StudyReport whose metrics carry explicit targets, tolerances, and a
provenance note: ``literature`` (value from the reference experiments),
``exact`` (an identity that must hold to numerical precision), or
``derived`` (an independently computed oracle). With an output directory
the report, a CSV metric table, key volumes, and mid-slice renders are
written through the file-format layer.
"""

from __future__ import annotations

import datetime
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError
from .echo import AcquisitionParams, fit_frequency, reference_divide, synthesize_echoes
from .forward import FieldConversion, hz_to_ppm, susceptibility_field, total_field
from .inversion import InversionParams, invert, invert_total_for_comparison, qsm_cg
from .phantom import (
    BrainLikeGeometry,
    CylinderGeometry,
    HeartGeometry,
    PhantomSpec,
    PlacedShape,
    RegionProps,
    SphereGeometry,
    build_phantom,
    centered,
)
from .separation import OrientationSet, OrientedField, separate_orthogonal
from .volume import (
    GridSpec,
    Mask,
    Orientation,
    ScalarVolume,
    central_slab_mask,
    dilate_mask,
    erode_mask,
    roi_stats,
    rotate_arbitrary,
)

_ORIENTS = {ax: Orientation.along(ax) for ax in ("x", "y", "z")}


@dataclass(frozen=True)
class MetricRecord:
    name: str
    value: float
    criterion: str
    provenance: str  # "literature" | "exact" | "derived"
    target: float | None = None
    tolerance: float | None = None
    passed: bool | None = None  # None = informational

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "value": self.value,
            "target": self.target,
            "tolerance": self.tolerance,
            "criterion": self.criterion,
            "provenance": self.provenance,
            "passed": self.passed,
        }


def metric_close(name, value, target, tol, provenance) -> MetricRecord:
    value = float(value)
    return MetricRecord(
        name=name, value=value, target=float(target), tolerance=float(tol),
        criterion=f"|value - {target}| <= {tol}", provenance=provenance,
        passed=bool(abs(value - target) <= tol),
    )


def metric_below(name, value, bound, provenance) -> MetricRecord:
    value = float(value)
    return MetricRecord(
        name=name, value=value, target=float(bound),
        criterion=f"value <= {bound}", provenance=provenance,
        passed=bool(value <= bound),
    )


def metric_above(name, value, bound, provenance) -> MetricRecord:
    value = float(value)
    return MetricRecord(
        name=name, value=value, target=float(bound),
        criterion=f"value >= {bound}", provenance=provenance,
        passed=bool(value >= bound),
    )


def metric_in_range(name, value, lo, hi, provenance) -> MetricRecord:
    value = float(value)
    return MetricRecord(
        name=name, value=value,
        criterion=f"{lo} <= value <= {hi}", provenance=provenance,
        passed=bool(lo <= value <= hi),
    )


def metric_flag(name, flag, criterion, provenance) -> MetricRecord:
    return MetricRecord(
        name=name, value=float(bool(flag)), criterion=criterion,
        provenance=provenance, passed=bool(flag),
    )


def metric_info(name, value, provenance) -> MetricRecord:
    return MetricRecord(
        name=name, value=float(value), criterion="informational", provenance=provenance,
    )


@dataclass
class StudyReport:
    study_id: str
    inputs: dict
    metrics: list = field(default_factory=list)
    artifacts: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(m.passed is not False for m in self.metrics)

    def to_dict(self) -> dict:
        from .fileio import config_hash

        return {
            "study_id": self.study_id,
            "toolkit_version": __version__,
            "inputs": self.inputs,
            "inputs_hash": config_hash(self.inputs),
            "metrics": [m.to_dict() for m in self.metrics],
            "artifacts": list(self.artifacts),
            "passed": self.passed,
            "meta": {"created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat()},
        }

    def metric(self, name: str) -> MetricRecord:
        for m in self.metrics:
            if m.name == name:
                return m
        raise KeyError(name)


def _write_artifacts(report: StudyReport, out_dir, volumes: dict, orientations=None):
    if out_dir is None:
        return
    from .fileio import render_slice, write_pgm, write_study_report, write_volume

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, vol in volumes.items():
        b = None if orientations is None else orientations.get(name)
        write_volume(out_dir / name, vol, orientation=b)
        img = render_slice(vol, "z", vol.grid.dims[2] // 2)
        write_pgm(out_dir / f"{name}_z{vol.grid.dims[2] // 2}.pgm", img)
        report.artifacts.extend([f"{name}.raw", f"{name}.json",
                                 f"{name}_z{vol.grid.dims[2] // 2}.pgm"])
    write_study_report(report, out_dir)
    report.artifacts.extend(["report.json", "metrics.csv"])


# ---------------------------------------------------------------------------
# phantom builders shared by the studies


def _shape_phantom(kind: str, grid_n: int, chi_ppm: float):
    grid = GridSpec((grid_n, grid_n, grid_n))
    c = centered(grid)
    if kind == "cylinder":
        geom = CylinderGeometry(c, grid_n / 5.0, 0.6 * grid_n, "z")
    elif kind == "sphere":
        geom = SphereGeometry(c, grid_n / 5.0)
    elif kind == "heart":
        geom = HeartGeometry(c, grid_n / 3.4)
    elif kind == "brain_like":
        spec = PhantomSpec(grid, (PlacedShape(BrainLikeGeometry(c, grid_n / 64.0), None),))
        return build_phantom(spec)
    else:
        raise ValueError(f"unknown phantom shape {kind!r}")
    spec = PhantomSpec(grid, (PlacedShape(geom, RegionProps(1, chi_ppm, 0.0)),))
    return build_phantom(spec)


def fat_cylinder_spec(fast_mode: bool = True, radius_vox: float | None = None) -> PhantomSpec:
    """The fat-cylinder phantom: chi 0.65 ppm, chemical shift -3.5 ppm,
    long axis z spanning the slab. Fast mode halves the reference
    256x256x40 geometry."""
    dims = (128, 128, 32) if fast_mode else (256, 256, 40)
    if radius_vox is None:
        radius_vox = 15.0 if fast_mode else 30.0
    grid = GridSpec(dims)
    geom = CylinderGeometry(centered(grid), radius_vox, None, "z")
    return PhantomSpec(grid, (PlacedShape(geom, RegionProps(1, 0.65, -3.5)),))


def _interior_roi(phantom, label: int = 1) -> Mask:
    """Interior mask eroded by one voxel, restricted to the central eight
    slices (the wall-exclusion stand-in used for all reported values)."""
    return central_slab_mask(erode_mask(phantom.region_masks[label], 1), 8, "z")


def _background_roi(phantom, label: int = 1, margin: int = 3) -> Mask:
    grid = phantom.grid
    return Mask(grid, ~dilate_mask(phantom.region_masks[label], margin).data)


def _referenced_mean(vol: ScalarVolume, roi: Mask, bg: Mask) -> float:
    """Region mean referenced to the background region; recovered
    susceptibility maps are zero-mean, so only referenced values are
    comparable across solvers."""
    return roi_stats(vol, roi).mean - roi_stats(vol, bg).mean


def _orthogonal_triad(phantom) -> OrientationSet:
    entries = tuple(
        OrientedField(_ORIENTS[ax], total_field(phantom.chi, phantom.cs, _ORIENTS[ax]))
        for ax in ("x", "y", "z")
    )
    return OrientationSet(entries)


# ---------------------------------------------------------------------------
# studies


def study_null_field(
    shapes=("heart", "cylinder", "sphere", "brain_like"),
    grid_n: int = 64,
    chi_ppm: float = 0.1,
    bound: float = 1e-9,
    out_dir=None,
) -> StudyReport:
    """Sum the susceptibility-induced fields of the three orthogonal B0
    orientations for each phantom shape; the sum must vanish."""
    allowed = {"heart", "cylinder", "sphere", "brain_like"}
    unknown = set(shapes) - allowed
    if unknown:
        raise ValueError(f"unknown shapes {sorted(unknown)}")
    report = StudyReport(
        study_id="null_field",
        inputs={"shapes": list(shapes), "grid_n": grid_n, "chi_ppm": chi_ppm, "bound": bound},
    )
    volumes = {}
    for kind in shapes:
        phantom = _shape_phantom(kind, grid_n, chi_ppm)
        fields = [susceptibility_field(phantom.chi, _ORIENTS[ax]) for ax in ("x", "y", "z")]
        total = fields[0].data + fields[1].data + fields[2].data
        report.metrics.append(
            metric_below(f"null_sum_max_abs_{kind}", float(np.max(np.abs(total))),
                         bound, "exact")
        )
        volumes[f"null_sum_{kind}"] = ScalarVolume(phantom.grid, total, "ppm")
    _write_artifacts(report, out_dir, volumes)
    return report


def study_fat_phantom(
    p: InversionParams | None = None,
    fast_mode: bool = True,
    out_dir=None,
) -> StudyReport:
    """The full separation pipeline on the fat cylinder: forward triad,
    orthogonal separation, per-orientation inversion of the separated
    fields, and the contaminated comparison arm on the total fields."""
    if p is None:
        p = InversionParams(solver="grad_l2_cg", lam=10.0)
    comparison = InversionParams(solver="tkd", tkd_threshold=p.tkd_threshold)
    phantom = build_phantom(fat_cylinder_spec(fast_mode))
    roi = _interior_roi(phantom)
    bg = _background_roi(phantom)
    triad = _orthogonal_triad(phantom)
    res = separate_orthogonal(triad)

    report = StudyReport(
        study_id="fat_phantom",
        inputs={
            "fast_mode": fast_mode,
            "inversion": {"solver": p.solver, "lambda": p.lam,
                          "tkd_threshold": p.tkd_threshold},
            "comparison_solver": comparison.solver,
        },
    )
    fc_stats = roi_stats(res.f_c, roi)
    report.metrics.append(
        metric_close("fc_interior_mean_ppm", fc_stats.mean, -3.5, 0.01, "literature"))
    report.metrics.append(
        metric_below("fc_interior_std_ppm", fc_stats.std, 0.005, "derived"))

    chi_means = {}
    volumes = {"f_c": res.f_c}
    orientations = {}
    for i, ax in enumerate(("x", "y", "z")):
        chi = invert(res.f_s[i], _ORIENTS[ax], p)
        chi_means[ax] = _referenced_mean(chi, roi, bg)
        report.metrics.append(
            metric_close(f"chi_mean_ppm_{ax}", chi_means[ax], 0.65, 0.04, "literature"))
        volumes[f"f_s_{ax}"] = res.f_s[i]
        volumes[f"chi_{ax}"] = chi
        orientations[f"f_s_{ax}"] = _ORIENTS[ax]
        orientations[f"chi_{ax}"] = _ORIENTS[ax]
    spread = max(chi_means.values()) - min(chi_means.values())
    report.metrics.append(
        metric_below("chi_cross_orientation_spread_ppm", spread, 0.03, "literature"))

    # Comparison arm: invert the chemical-shift-contaminated total fields.
    # The reference reconstruction reported +4.16 (perpendicular) and
    # -8.97 ppm (parallel); the values are solver-specific, the reproducible
    # signature is the sign flip and the gross (>1 ppm) error.
    for i, ax in enumerate(("x", "y", "z")):
        chi_tot = invert_total_for_comparison(triad.entries[i].field, _ORIENTS[ax], comparison)
        value = _referenced_mean(chi_tot, roi, bg)
        volumes[f"chi_total_{ax}"] = chi_tot
        orientations[f"chi_total_{ax}"] = _ORIENTS[ax]
        if ax == "z":  # B0 parallel to the cylinder axis
            report.metrics.append(
                metric_below(f"chi_total_mean_ppm_{ax}", value, 0.0, "literature"))
        else:
            report.metrics.append(
                metric_above(f"chi_total_mean_ppm_{ax}", value, 0.0, "literature"))
        report.metrics.append(
            metric_above(f"chi_total_abs_error_ppm_{ax}", abs(value - 0.65), 1.0,
                         "literature"))

    _write_artifacts(report, out_dir, volumes, orientations)
    return report


def tilt_study_spec(fast_mode: bool = True) -> PhantomSpec:
    """Cylinder for the misalignment analysis: a finite cylinder centered
    in a cubic grid with room to tilt, so rotation neither clips the
    object nor breaks its periodic continuation."""
    n = 128 if fast_mode else 256
    grid = GridSpec((n, n, n))
    geom = CylinderGeometry(centered(grid), n * 15.0 / 128.0, 0.75 * n, "z")
    return PhantomSpec(grid, (PlacedShape(geom, RegionProps(1, 0.65, -3.5)),))


def _misalignment_pipeline(phantom, fixed_fields, axis: str, angle_deg: float,
                           p: InversionParams):
    """Simulate the x-orientation scan with the object tilted about
    ``axis``, correct the map back after 'registration', separate, and
    invert all three orientations."""
    chi, cs = phantom.chi, phantom.cs
    if angle_deg != 0.0:
        chi_t = rotate_arbitrary(chi, axis, angle_deg)
        cs_t = rotate_arbitrary(cs, axis, angle_deg)
        tilted = total_field(chi_t, cs_t, _ORIENTS["x"])
        corrected = rotate_arbitrary(tilted, axis, -angle_deg)
    else:
        corrected = total_field(chi, cs, _ORIENTS["x"])
    entries = (
        OrientedField(_ORIENTS["x"], corrected),
        OrientedField(_ORIENTS["y"], fixed_fields["y"]),
        OrientedField(_ORIENTS["z"], fixed_fields["z"]),
    )
    res = separate_orthogonal(OrientationSet(entries))
    roi = _interior_roi(phantom)
    bg = _background_roi(phantom)
    cs_value = roi_stats(res.f_c, roi).mean
    # ROI mean of the recovered susceptibility, averaged over the three
    # orientations; single-orientation means wander with streak placement
    # at desk-scale grids while the three-map mean tracks the tilt effect.
    chi_value = float(np.mean([
        _referenced_mean(invert(res.f_s[i], _ORIENTS[ax], p), roi, bg)
        for i, ax in enumerate(("x", "y", "z"))
    ]))
    return cs_value, chi_value


def study_misalignment(
    angles_deg=(0.0, 2.5, 5.0, 7.5, 10.0),
    axis: str = "y",
    fast_mode: bool = True,
    p: InversionParams | None = None,
    out_dir=None,
) -> StudyReport:
    """Tilt one scan of the triad, correct it back during registration
    (the tilt angle is known, as it is when registering acquired maps),
    and track the percentage errors of the recovered values.

    Errors are measured against the untilted (0 degree) pipeline output,
    isolating the misalignment effect from any solver bias common to both.
    """
    angles = sorted(float(a) for a in angles_deg)
    if any(a < 0 or a > 10.0 for a in angles):
        raise ValueError("tilt angles must lie in [0, 10] degrees")
    if p is None:
        p = InversionParams(solver="tkd")
    phantom = build_phantom(tilt_study_spec(fast_mode))
    fixed = {ax: total_field(phantom.chi, phantom.cs, _ORIENTS[ax]) for ax in ("y", "z")}
    report = StudyReport(
        study_id="misalignment",
        inputs={"angles_deg": angles, "axis": axis, "fast_mode": fast_mode,
                "inversion": {"solver": p.solver, "lambda": p.lam,
                              "tkd_threshold": p.tkd_threshold}},
    )
    cs0, chi0 = _misalignment_pipeline(phantom, fixed, axis, 0.0, p)
    report.metrics.append(metric_info("cs_baseline_ppm", cs0, "derived"))
    report.metrics.append(metric_info("chi_baseline_ppm", chi0, "derived"))

    cs_err, chi_err = [], []
    for angle in angles:
        if angle == 0.0:
            cs_v, chi_v = cs0, chi0
        else:
            cs_v, chi_v = _misalignment_pipeline(phantom, fixed, axis, angle, p)
        ce = 100.0 * abs(cs_v - cs0) / abs(cs0)
        xe = 100.0 * abs(chi_v - chi0) / abs(chi0)
        cs_err.append(ce)
        chi_err.append(xe)
        report.metrics.append(metric_info(f"cs_value_ppm_theta{angle:g}", cs_v, "derived"))
        report.metrics.append(metric_info(f"chi_value_ppm_theta{angle:g}", chi_v, "derived"))
        if angle == 0.0:
            report.metrics.append(
                metric_below("cs_error_pct_theta0", ce, 1e-6, "exact"))
            report.metrics.append(
                metric_below("chi_error_pct_theta0", xe, 1e-6, "exact"))
        elif angle == 5.0:
            report.metrics.append(
                metric_below("cs_error_pct_theta5", ce, 0.1, "literature"))
            report.metrics.append(
                metric_below("chi_error_pct_theta5", xe, 1.0, "literature"))
        else:
            report.metrics.append(metric_info(f"cs_error_pct_theta{angle:g}", ce, "derived"))
            report.metrics.append(metric_info(f"chi_error_pct_theta{angle:g}", xe, "derived"))
    if len(angles) >= 2:
        slack = 1e-9
        report.metrics.append(metric_flag(
            "cs_error_monotone",
            all(b >= a - slack for a, b in zip(cs_err, cs_err[1:])),
            "errors non-decreasing with tilt angle", "derived"))
        report.metrics.append(metric_flag(
            "chi_error_monotone",
            all(b >= a - slack for a, b in zip(chi_err, chi_err[1:])),
            "errors non-decreasing with tilt angle", "derived"))
    _write_artifacts(report, out_dir, {})
    return report


def study_noise_gain(
    sigma_ppm: float = 0.01,
    trials: int = 100,
    seed: int = 0,
    grid_n: int = 24,
    out_dir=None,
) -> StudyReport:
    """Propagate i.i.d. Gaussian map noise through the orthogonal
    separation; averaging three maps leaves the chemical shift/exchange
    map with noise std sigma/sqrt(3)."""
    if trials < 30:
        raise ValueError(f"need at least 30 trials, got {trials}")
    grid = GridSpec((grid_n, grid_n, grid_n))
    rng = np.random.default_rng(seed)
    report = StudyReport(
        study_id="noise_gain",
        inputs={"sigma_ppm": sigma_ppm, "trials": trials, "seed": seed, "grid_n": grid_n},
    )
    sq_sum = 0.0
    mean_sum = 0.0
    count = 0
    for _ in range(trials):
        entries = tuple(
            OrientedField(
                _ORIENTS[ax],
                ScalarVolume(grid, rng.normal(0.0, sigma_ppm, grid.dims)
                             if sigma_ppm > 0 else np.zeros(grid.dims), "ppm"),
            )
            for ax in ("x", "y", "z")
        )
        f_c = separate_orthogonal(OrientationSet(entries)).f_c.data
        sq_sum += float(np.sum(f_c ** 2))
        mean_sum += float(np.sum(f_c))
        count += f_c.size
    mean = mean_sum / count
    std = float(np.sqrt(sq_sum / count - mean ** 2))
    report.metrics.append(metric_info("fc_noise_std_ppm", std, "derived"))
    if sigma_ppm == 0.0:
        report.metrics.append(metric_below("fc_abs_std_ppm", std, 1e-15, "exact"))
    else:
        report.metrics.append(
            metric_in_range("fc_noise_std_ratio", std / sigma_ppm, 0.55, 0.61, "literature"))
    _write_artifacts(report, out_dir, {})
    return report


def study_regularization(
    lambdas=(10.0, 100.0),
    fast_mode: bool = True,
    out_dir=None,
) -> StudyReport:
    """Fat-phantom susceptibility means across regularization weights.
    The reference measurements moved by at most 0.02 ppm between weights
    10 and 100; other weights are reported without a pass criterion."""
    lambdas = [float(l) for l in lambdas]
    if len(lambdas) < 2:
        raise ValueError("need at least 2 regularization weights")
    phantom = build_phantom(fat_cylinder_spec(fast_mode))
    roi = _interior_roi(phantom)
    bg = _background_roi(phantom)
    res = separate_orthogonal(_orthogonal_triad(phantom))
    report = StudyReport(
        study_id="regularization",
        inputs={"lambdas": lambdas, "fast_mode": fast_mode},
    )
    means: dict[float, dict[str, float]] = {}
    for lam in lambdas:
        p = InversionParams(solver="grad_l2_cg", lam=lam)
        means[lam] = {}
        for i, ax in enumerate(("x", "y", "z")):
            chi = qsm_cg(res.f_s[i], _ORIENTS[ax], p)
            means[lam][ax] = _referenced_mean(chi, roi, bg)
            report.metrics.append(
                metric_info(f"chi_mean_ppm_lambda{lam:g}_{ax}", means[lam][ax], "derived"))
    if 10.0 in means and 100.0 in means:
        for ax in ("x", "y", "z"):
            report.metrics.append(metric_below(
                f"chi_spread_lambda10_vs_100_ppm_{ax}",
                abs(means[10.0][ax] - means[100.0][ax]), 0.02, "literature"))
    else:
        pairwise = max(
            abs(means[a][ax] - means[b][ax])
            for a in means for b in means for ax in ("x", "y", "z")
        )
        report.metrics.append(metric_info("chi_max_pairwise_spread_ppm", pairwise, "derived"))
    _write_artifacts(report, out_dir, {})
    return report


def study_end_to_end_echoes(
    p: AcquisitionParams | None = None,
    chi_ppm: float = -0.059,
    cs_ppm: float = 0.008,
    background_hz: float = 15.0,
    grid_dims=(64, 64, 16),
    radius_vox: float = 8.0,
    inversion: InversionParams | None = None,
    out_dir=None,
) -> StudyReport:
    """The full acquisition chain on a solution-like cylinder: total
    fields for three orientations, complex echoes with a synthetic
    background field, a reference series carrying only the background,
    complex division, frequency fitting, separation, and inversion.

    Raises ConfigError when the echo spacing cannot sample the peak
    frequency without phase aliasing (half-cycle limit).
    """
    if p is None:
        p = AcquisitionParams.uniform(5.0, 3.75, 6, b0_tesla=3.0)
    if inversion is None:
        inversion = InversionParams(solver="grad_l2_cg", lam=10.0)
    grid = GridSpec(tuple(grid_dims))
    spec = PhantomSpec(
        grid,
        (PlacedShape(CylinderGeometry(centered(grid), radius_vox, None, "z"),
                     RegionProps(1, chi_ppm, cs_ppm)),),
    )
    phantom = build_phantom(spec)
    conv = FieldConversion(p.b0_tesla)

    nx, ny, nz = grid.dims
    x = np.arange(nx)[:, None, None] / nx - 0.5
    y = np.arange(ny)[None, :, None] / ny - 0.5
    z = np.arange(nz)[None, None, :] / nz - 0.5
    bg_hz = background_hz * (0.4 + 0.6 * x + 0.3 * y - 0.2 * z)
    bg_ppm = ScalarVolume(grid, hz_to_ppm(bg_hz, conv), "ppm")

    totals = {ax: total_field(phantom.chi, phantom.cs, _ORIENTS[ax]) for ax in ("x", "y", "z")}
    peak_hz = max(
        float(np.max(np.abs(totals[ax].data * conv.gamma_bar_mhz_per_t * conv.b0_tesla + bg_hz)))
        for ax in ("x", "y", "z")
    )
    max_spacing_ms = max(b - a for a, b in zip(p.te_ms, p.te_ms[1:]))
    if 2.0 * (max_spacing_ms * 1e-3) * peak_hz >= 1.0:
        raise ConfigError(
            f"echo spacing {max_spacing_ms:g} ms aliases the peak frequency "
            f"{peak_hz:.1f} Hz; need spacing < {1000.0 / (2 * peak_hz):.3f} ms"
        )

    report = StudyReport(
        study_id="end_to_end",
        inputs={
            "te_ms": list(p.te_ms), "b0_tesla": p.b0_tesla,
            "noise_sigma": p.noise_sigma, "seed": p.seed,
            "chi_ppm": chi_ppm, "cs_ppm": cs_ppm,
            "background_hz": background_hz, "grid_dims": list(grid.dims),
            "radius_vox": radius_vox,
        },
    )
    magnitude = ScalarVolume.full(grid, 1.0)
    fitted_fields = []
    fit_err = 0.0
    for i, ax in enumerate(("x", "y", "z")):
        df_main = ScalarVolume(grid, totals[ax].data + bg_ppm.data, "ppm")
        main = synthesize_echoes(df_main, magnitude, replace(p, seed=p.seed + i))
        ref = synthesize_echoes(bg_ppm, magnitude, replace(p, seed=p.seed + 100 + i))
        divided, _low_snr = reference_divide(main, ref)
        freq_hz, _resid = fit_frequency(divided)
        fitted = ScalarVolume(grid, hz_to_ppm(freq_hz.data, conv), "ppm")
        fit_err = max(fit_err, float(np.max(np.abs(fitted.data - totals[ax].data))))
        fitted_fields.append(OrientedField(_ORIENTS[ax], fitted))
    report.metrics.append(metric_info("fitted_field_max_abs_error_ppm", fit_err, "derived"))

    res = separate_orthogonal(OrientationSet(tuple(fitted_fields)))
    roi = _interior_roi(phantom)
    bg_mask = _background_roi(phantom)
    report.metrics.append(
        metric_close("cs_interior_mean_ppm", roi_stats(res.f_c, roi).mean,
                     cs_ppm, 0.001, "literature"))
    for i, ax in enumerate(("x", "y", "z")):
        chi = invert(res.f_s[i], _ORIENTS[ax], inversion)
        report.metrics.append(
            metric_close(f"chi_mean_ppm_{ax}", _referenced_mean(chi, roi, bg_mask),
                         chi_ppm, 0.005, "literature"))
    _write_artifacts(report, out_dir, {"f_c_recovered": res.f_c})
    return report


_STUDY_RUNNERS = {
    "null_field": study_null_field,
    "fat_phantom": study_fat_phantom,
    "misalignment": study_misalignment,
    "noise_gain": study_noise_gain,
    "regularization": study_regularization,
    "end_to_end": study_end_to_end_echoes,
}


def run_study_from_config(name: str, doc: dict, out_dir=None) -> StudyReport:
    """Dispatch a study by name with parameters from a validated config."""
    study_cfg = dict(doc.get("study", {}))
    study_cfg.pop("name", None)
    seed = int(doc.get("seed", 0))
    if name == "null_field":
        return study_null_field(
            shapes=tuple(study_cfg.get("shapes", ("heart", "cylinder", "sphere", "brain_like"))),
            grid_n=int(study_cfg.get("grid_n", 64)),
            chi_ppm=float(study_cfg.get("chi_ppm", 0.1)),
            out_dir=out_dir,
        )
    if name == "fat_phantom":
        from .config import parse_inversion

        return study_fat_phantom(
            p=parse_inversion(study_cfg.get("inversion")),
            fast_mode=bool(study_cfg.get("fast_mode", True)),
            out_dir=out_dir,
        )
    if name == "misalignment":
        from .config import parse_inversion

        return study_misalignment(
            angles_deg=tuple(study_cfg.get("angles_deg", (0.0, 2.5, 5.0, 7.5, 10.0))),
            axis=study_cfg.get("axis", "y"),
            fast_mode=bool(study_cfg.get("fast_mode", True)),
            p=parse_inversion(study_cfg.get("inversion")),
            out_dir=out_dir,
        )
    if name == "noise_gain":
        return study_noise_gain(
            sigma_ppm=float(study_cfg.get("sigma_ppm", 0.01)),
            trials=int(study_cfg.get("trials", 100)),
            seed=seed,
            grid_n=int(study_cfg.get("grid_n", 24)),
            out_dir=out_dir,
        )
    if name == "regularization":
        return study_regularization(
            lambdas=tuple(study_cfg.get("lambdas", (10.0, 100.0))),
            fast_mode=bool(study_cfg.get("fast_mode", True)),
            out_dir=out_dir,
        )
    if name == "end_to_end":
        from .config import parse_acquisition, parse_inversion

        acq = study_cfg.get("acquisition")
        return study_end_to_end_echoes(
            p=None if acq is None else parse_acquisition(acq, default_seed=seed),
            chi_ppm=float(study_cfg.get("chi_ppm", -0.059)),
            cs_ppm=float(study_cfg.get("cs_ppm", 0.008)),
            background_hz=float(study_cfg.get("background_hz", 15.0)),
            inversion=parse_inversion(study_cfg.get("inversion")),
            out_dir=out_dir,
        )
    raise ConfigError(f"unknown study {name!r}")
