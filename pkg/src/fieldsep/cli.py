"""Batch command-line frontend.

Every pipeline stage is a subcommand chained through the on-disk volume
format, so any library pipeline can be reproduced file-by-file. Exit
codes: 0 success (and, for studies, all metrics passing), 1 study metric
failure, 2 input or validation error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    ConfigError,
    load_config,
    parse_acquisition,
    parse_inversion,
    parse_orientation,
    parse_phantom_spec,
)
from .echo import fit_frequency, reference_divide, synthesize_echoes
from .fileio import (
    FormatError,
    read_echo_series,
    read_mask,
    read_volume,
    render_slice,
    write_echo_series,
    write_mask,
    write_pgm,
    write_volume,
)
from .forward import susceptibility_field, total_field
from .inversion import invert
from .phantom import build_phantom
from .separation import (
    OrientationSet,
    OrientedField,
    complete_cylinder,
    complete_sphere,
    separate_general,
    separate_orthogonal,
)
from .studies import run_study_from_config
from .volume import Mask, Orientation, ScalarVolume


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fieldsep",
        description="Separate susceptibility and chemical shift/exchange "
                    "frequency contributions; reconstruct susceptibility maps.",
    )
    parser.add_argument("--version", action="version", version=f"fieldsep {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="voxelize a phantom config to chi/cs/label volumes")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("forward", help="simulate total and susceptibility fields")
    p.add_argument("--chi", required=True, help="chi volume prefix (ppm)")
    p.add_argument("--cs", required=True, help="chemical shift volume prefix (ppm)")
    p.add_argument("--b0", required=True, help="orientation: x|y|z or theta,phi degrees")
    p.add_argument("--out", required=True)

    p = sub.add_parser("separate", help="separate multi-orientation field maps")
    p.add_argument("--inputs", required=True, help="JSON manifest of oriented field volumes")
    p.add_argument("--method", choices=("orthogonal", "general"), default="orthogonal")
    p.add_argument("--complete", choices=("cylinder", "sphere"))
    p.add_argument("--reg-epsilon", type=float, default=0.0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("invert", help="dipole inversion of a field map")
    p.add_argument("--field", required=True, help="field volume prefix (ppm)")
    p.add_argument("--b0", required=True)
    p.add_argument("--solver", choices=("tkd", "cg"), default="cg")
    p.add_argument("--lambda", dest="lam", type=float, default=10.0)
    p.add_argument("--threshold", type=float, default=0.2)
    p.add_argument("--fidelity-mask", help="mask prefix; excluded voxels get zero data weight")
    p.add_argument("--out", required=True)

    p = sub.add_parser("simulate-echoes", help="synthesize a multi-echo series")
    p.add_argument("--config", required=True, help="config with an 'acquisition' section")
    p.add_argument("--field", required=True, help="frequency-shift volume prefix (ppm)")
    p.add_argument("--magnitude", help="magnitude volume prefix (default: ones)")
    p.add_argument("--out", required=True, help="output echo-series prefix")

    p = sub.add_parser("fit-frequency", help="fit a frequency map from an echo series")
    p.add_argument("--echoes", required=True, help="echo-series prefix")
    p.add_argument("--reference", help="reference echo-series prefix for background removal")
    p.add_argument("--out", required=True)

    p = sub.add_parser("study", help="run a scripted study and write its report")
    p.add_argument("--name", required=True,
                   choices=("null_field", "fat_phantom", "misalignment",
                            "noise_gain", "regularization", "end_to_end"))
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("render", help="window a slice to an 8-bit PGM image")
    p.add_argument("--volume", required=True)
    p.add_argument("--axis", choices=("x", "y", "z"), default="z")
    p.add_argument("--slice", type=int, required=True)
    p.add_argument("--window", help="lo,hi (default: slice min,max)")
    p.add_argument("--out", required=True)

    return parser


def _cmd_phantom(args) -> int:
    doc = load_config(args.config)
    if "phantom" not in doc:
        raise ConfigError("config lacks a 'phantom' section")
    phantom = build_phantom(parse_phantom_spec(doc["phantom"]))
    out = Path(args.out)
    write_volume(out / "chi", phantom.chi)
    write_volume(out / "cs", phantom.cs)
    write_volume(out / "labels",
                 ScalarVolume(phantom.grid, phantom.labels.astype(float), "dimensionless"))
    for label, mask in sorted(phantom.region_masks.items()):
        write_mask(out / f"mask_{label:03d}", mask)
    return 0


def _cmd_forward(args) -> int:
    chi = read_volume(args.chi)
    cs = read_volume(args.cs)
    b = parse_orientation(args.b0)
    f_s = susceptibility_field(chi, b)
    total = total_field(chi, cs, b)
    out = Path(args.out)
    write_volume(out / "f_s", f_s, orientation=b)
    write_volume(out / "total", total, orientation=b)
    return 0


def _orientation_from_entry(entry) -> Orientation:
    raw = entry["orientation"]
    if isinstance(raw, str):
        return parse_orientation(raw)
    return Orientation.from_vector(raw)


def _cmd_separate(args) -> int:
    manifest_path = Path(args.inputs)
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"manifest not found: {manifest_path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"manifest is not valid JSON: {exc}") from None
    if "fields" not in manifest or not manifest["fields"]:
        raise ConfigError("manifest needs a non-empty 'fields' list")
    base = manifest_path.parent
    entries = []
    for entry in manifest["fields"]:
        vol = read_volume(base / entry["volume"])
        entries.append(OrientedField(_orientation_from_entry(entry), vol))

    if args.complete == "cylinder":
        if len(entries) != 2:
            raise ConfigError("cylinder completion needs exactly 2 oriented fields")
        long_axis = manifest.get("long_axis")
        if long_axis not in ("x", "y", "z"):
            raise ConfigError("cylinder completion needs manifest key 'long_axis'")
        oset = complete_cylinder(entries[0], entries[1], long_axis)
    elif args.complete == "sphere":
        if len(entries) != 1:
            raise ConfigError("sphere completion needs exactly 1 oriented field")
        oset = complete_sphere(entries[0])
    else:
        oset = OrientationSet(tuple(entries))

    if args.method == "orthogonal":
        res = separate_orthogonal(oset)
    else:
        res = separate_general(oset, reg_epsilon=args.reg_epsilon)

    out = Path(args.out)
    write_volume(out / "f_c", res.f_c)
    for i, (fs, entry) in enumerate(zip(res.f_s, oset.entries)):
        write_volume(out / f"f_s_{i:03d}", fs, orientation=entry.orientation)
    info = {
        "method": res.method,
        "conditioning_report": res.conditioning_report,
        "orientations": [[float(c) for c in e.orientation.direction] for e in oset.entries],
    }
    (out / "result.json").write_text(json.dumps(info, indent=2, sort_keys=True) + "\n")
    return 0


def _cmd_invert(args) -> int:
    f = read_volume(args.field)
    b = parse_orientation(args.b0)
    solver = "tkd" if args.solver == "tkd" else "grad_l2_cg"
    p = parse_inversion({"solver": solver, "lambda": args.lam, "tkd_threshold": args.threshold})
    mask = read_mask(args.fidelity_mask) if args.fidelity_mask else None
    chi = invert(f, b, p, fidelity_mask=mask)
    out = Path(args.out)
    write_volume(out / "chi", chi, orientation=b)
    (out / "invert.json").write_text(json.dumps({
        "solver": p.solver, "lambda": p.lam, "tkd_threshold": p.tkd_threshold,
    }, indent=2, sort_keys=True) + "\n")
    return 0


def _cmd_simulate_echoes(args) -> int:
    doc = load_config(args.config)
    if "acquisition" not in doc:
        raise ConfigError("config lacks an 'acquisition' section")
    p = parse_acquisition(doc["acquisition"], default_seed=int(doc.get("seed", 0)))
    field = read_volume(args.field)
    if field.unit != "ppm":
        raise ConfigError(f"field volume must be in ppm, got {field.unit!r}")
    if args.magnitude:
        magnitude = read_volume(args.magnitude)
    else:
        magnitude = ScalarVolume.full(field.grid, 1.0)
    series = synthesize_echoes(field, magnitude, p)
    write_echo_series(args.out, series)
    return 0


def _cmd_fit_frequency(args) -> int:
    series = read_echo_series(args.echoes)
    out = Path(args.out)
    if args.reference:
        reference = read_echo_series(args.reference)
        series, low_snr = reference_divide(series, reference)
        write_mask(out / "low_snr", low_snr)
    freq, resid = fit_frequency(series)
    write_volume(out / "freq_hz", freq)
    write_volume(out / "residual_rms", resid)
    return 0


def _cmd_study(args) -> int:
    doc = load_config(args.config)
    named = doc.get("study", {}).get("name")
    if named is not None and named != args.name:
        raise ConfigError(f"--name {args.name} conflicts with config study name {named!r}")
    report = run_study_from_config(args.name, doc, out_dir=args.out)
    for m in report.metrics:
        status = "PASS" if m.passed else ("FAIL" if m.passed is False else "info")
        print(f"[{status}] {m.name} = {m.value:.6g} ({m.criterion})")
    print(f"study {report.study_id}: {'all metrics pass' if report.passed else 'METRIC FAILURE'}")
    return 0 if report.passed else 1


def _cmd_render(args) -> int:
    v = read_volume(args.volume)
    window = None
    if args.window:
        parts = args.window.split(",")
        if len(parts) != 2:
            raise ConfigError(f"--window must be lo,hi, got {args.window!r}")
        window = (float(parts[0]), float(parts[1]))
    image = render_slice(v, args.axis, args.slice, window)
    write_pgm(args.out, image)
    return 0


_HANDLERS = {
    "phantom": _cmd_phantom,
    "forward": _cmd_forward,
    "separate": _cmd_separate,
    "invert": _cmd_invert,
    "simulate-echoes": _cmd_simulate_echoes,
    "fit-frequency": _cmd_fit_frequency,
    "study": _cmd_study,
    "render": _cmd_render,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except (ConfigError, FormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
