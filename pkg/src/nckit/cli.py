"""Command-line front end: design reports, trace analysis, lock simulation,
and alignment mixing, driven by one shared JSON config.

Exit codes: 0 success, 2 config, 3 ingest, 4 unstable loop, 5 saturation.
JSON output is deterministic: fixed key order, floats at 9 significant
digits, so identical invocations produce byte-identical reports.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import alignment, cavity, lockloop, noise

ENV_CONFIG = "NCKIT_CONFIG"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INGEST = 3
EXIT_LOOP = 4
EXIT_SATURATION = 5

DEFAULT_BANDS = "10:200,200:2500,2600:2900,3000:10000"


class ConfigError(ValueError):
    """Config file missing, unparsable, or failing a field invariant."""


@dataclass(frozen=True)
class ProjectConfig:
    cavity: cavity.CavityGeometry
    atom: cavity.AtomLine
    mixer: alignment.MixerConfig
    frame: alignment.FrameGeometry
    plant: lockloop.PlantModel
    pdh: lockloop.PDHConfig
    delta_l_rms: float


def _get(section: dict, key: str, default, path: str):
    val = section.get(key, default)
    if val is None:
        raise ConfigError(f"{path}.{key}: required field missing")
    return val


def build_config(raw: dict) -> ProjectConfig:
    """Assemble and validate a ProjectConfig from a raw JSON dict.

    Every field has a working default, so {} is a valid config; errors
    carry the dotted field path.
    """
    where = "config"
    try:
        where = "cavity"
        sec = raw.get("cavity", {})
        radius = _get(sec, "radius_of_curvature_m", 5.5e-3, "cavity")
        refl = _get(sec, "reflectivity", 0.995, "cavity")
        if "length_m" in sec and "critical_distance_m" in sec:
            raise ConfigError("cavity: give only one of length_m, critical_distance_m")
        if "length_m" in sec:
            geo = cavity.symmetric_cavity(radius, refl, length=sec["length_m"])
        else:
            geo = cavity.symmetric_cavity(
                radius, refl, critical_distance=sec.get("critical_distance_m", 7.8e-6))

        where = "atom"
        sec = raw.get("atom", {})
        atom = cavity.AtomLine(
            wavelength=_get(sec, "wavelength_m", 780e-9, "atom"),
            half_linewidth=_get(sec, "half_linewidth_rad_per_s", 2 * math.pi * 3.03e6, "atom"))

        where = "mixer"
        sec = raw.get("mixer", {})
        mixer = alignment.MixerConfig(
            gain=sec.get("gain_v_per_m"),
            voltage_limit=_get(sec, "voltage_limit_v", 100.0, "mixer"),
            expansion_per_volt=_get(sec, "expansion_per_volt_m", 15e-6 / 100.0, "mixer"))

        where = "frame"
        sec = raw.get("frame", {})
        if "actuator_positions_m" in sec:
            frame = alignment.FrameGeometry(tuple(map(tuple, sec["actuator_positions_m"])))
        else:
            frame = alignment.default_frame(sec.get("circumradius_m", 8e-3))

        where = "plant"
        sec = raw.get("plant", {})
        plant = lockloop.PlantModel(
            dc_gain=_get(sec, "dc_gain_m_per_v", 15e-6 / 100.0, "plant"),
            resonance_frequency=_get(sec, "resonance_frequency_hz", 2750.0, "plant"),
            quality_factor=_get(sec, "quality_factor", 10.0, "plant"),
            delay=_get(sec, "delay_s", 0.0, "plant"))

        where = "pdh"
        sec = raw.get("pdh", {})
        pdh = lockloop.PDHConfig(
            modulation_frequency=_get(sec, "modulation_frequency_hz", 100e6, "pdh"),
            modulation_depth=_get(sec, "modulation_depth", 1.08, "pdh"),
            mirrors=(geo.mirror_1, geo.mirror_2),
            cavity_length=geo.length)

        where = "noise"
        delta_l = raw.get("noise", {}).get("delta_l_rms_m", 0.36e-10)
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    return ProjectConfig(cavity=geo, atom=atom, mixer=mixer, frame=frame,
                         plant=plant, pdh=pdh, delta_l_rms=delta_l)


def load_config(path: str | None) -> ProjectConfig:
    """Load the shared config from --config, $NCKIT_CONFIG, or defaults."""
    if path is None:
        path = os.environ.get(ENV_CONFIG)
    if path is None:
        return build_config({})
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return build_config(raw)


# --- deterministic JSON ------------------------------------------------------

def format_json(obj, indent: int = 0) -> str:
    """Serialize with insertion-order keys and floats at 9 significant digits."""
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = ",\n".join(f'{pad}  {json.dumps(k)}: {format_json(v, indent + 1)}'
                           for k, v in obj.items())
        return "{\n" + items + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = ",\n".join(f"{pad}  {format_json(v, indent + 1)}" for v in obj)
        return "[\n" + items + "\n" + pad + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format(float(obj), ".9g")
    return json.dumps(obj)


def _emit(report: dict) -> None:
    sys.stdout.write(format_json(report) + "\n")


# --- subcommands -------------------------------------------------------------

def cmd_design(args) -> int:
    cfg = load_config(args.config)
    geo = cfg.cavity
    if args.target_d is not None:
        geo = cavity.symmetric_cavity(geo.mirror_1.radius_of_curvature,
                                      geo.mirror_1.reflectivity,
                                      critical_distance=args.target_d)
    note = None
    if args.target_g is not None:
        d = cavity.solve_critical_distance(
            geo.mirror_1.radius_of_curvature, cfg.atom, coupling_g=args.target_g,
            reflectivity=geo.mirror_1.reflectivity)
        geo = cavity.symmetric_cavity(geo.mirror_1.radius_of_curvature,
                                      geo.mirror_1.reflectivity, critical_distance=d)
        note = ("coupling target inverted under the documented standing-wave "
                "mode convention; the solved critical distance shifts with "
                "that convention")
    prof = cavity.spectral_profile(geo)
    mode = cavity.mode_geometry(geo, cfg.atom.wavelength)
    rep = cavity.coupling(geo, cfg.atom)
    report = {
        "cavity": {
            "radius_of_curvature_m": geo.mirror_1.radius_of_curvature,
            "length_m": geo.length,
            "critical_distance_m": geo.critical_distance,
            "stability_g": geo.g1,
        },
        "spectral": {
            "free_spectral_range_hz": prof.free_spectral_range,
            "finesse": prof.finesse,
            "full_linewidth_hz": prof.full_linewidth,
            "kappa_rad_per_s": prof.half_linewidth_kappa,
            "kappa_over_2pi_hz": prof.half_linewidth_kappa / (2 * math.pi),
        },
        "mode": {
            "rayleigh_range_m": mode.rayleigh_range,
            "waist_m": mode.waist,
            "waist_at_mirror_m": mode.waist_at_mirror,
        },
        "transverse_mode_offset_hz": cavity.transverse_mode_offset(geo),
        "coupling": {
            "mode_volume_m3": rep.mode_volume,
            "g_rad_per_s": rep.coupling_g,
            "g_over_2pi_hz": rep.coupling_g / (2 * math.pi),
            "cooperativity": rep.cooperativity,
        },
        "noise_limit": {
            "delta_l_rms_m": cfg.delta_l_rms,
            "xi": cavity.noise_limit_factor(cfg.delta_l_rms, cfg.atom.wavelength,
                                            prof.finesse),
        },
    }
    if note is not None:
        report["note"] = note
    _emit(report)
    return EXIT_OK


def _parse_bands(text: str):
    bands = []
    for part in text.split(","):
        lo, _, hi = part.partition(":")
        try:
            bands.append((float(lo), float(hi)))
        except ValueError:
            raise ValueError(f"bad band '{part}', expected lo:hi") from None
    return bands


def cmd_analyze(args) -> int:
    cfg = load_config(args.config)
    trace = noise.ingest_trace(args.trace, unit="volt" if args.slope else "meter")
    if args.slope:
        cal = noise.DiscriminatorCalibration(slope=args.slope,
                                             cavity_length=cfg.cavity.length,
                                             wavelength=cfg.atom.wavelength)
        trace = noise.error_to_length(trace, cal)
    seg = min(args.segment, trace.samples.size)
    psd = noise.estimate_psd(trace, segment_length=seg)
    fmax = psd.frequencies[-1]
    bands = [(lo, min(hi, fmax)) for lo, hi in _parse_bands(args.bands) if lo < fmax]
    budget = noise.make_budget(psd, bands, cavity_length=cfg.cavity.length,
                               wavelength=cfg.atom.wavelength)
    out = args.out or os.path.splitext(args.trace)[0]
    noise.save_psd(psd, out + "_psd.csv")
    report = {
        "total_rms_m": budget.total_rms,
        "frequency_rms_hz": budget.frequency_rms,
        "bands": [
            {"f_lo_hz": lo, "f_hi_hz": hi, "rms_m": rms, "fraction_of_variance": frac}
            for lo, hi, rms, frac in budget.band_rms
        ],
    }
    with open(out + "_budget.json", "w") as fh:
        fh.write(format_json(report) + "\n")
    _emit(report)
    if args.svg:
        _plot_psd(psd, out + "_psd.svg")
    return EXIT_OK


def _plot_psd(psd, path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    fig, ax = plt.subplots(figsize=(6, 4))
    keep = psd.frequencies > 0
    ax.loglog(psd.frequencies[keep], psd.density[keep], lw=0.8)
    ax.set_xlabel("frequency (Hz)")
    ax.set_ylabel("density (unit$^2$/Hz)")
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    trace = noise.ingest_trace(args.trace, unit="meter")
    slope = lockloop.discriminator_slope(cfg.pdh)
    disc = abs(lockloop.length_discriminator(slope, cfg.cavity.length,
                                             cfg.atom.wavelength))
    fs = trace.sample_rate
    if args.gain > 0:
        controller = lockloop.ControllerConfig(integral_gain=args.gain, sample_rate=fs)
        analysis = lockloop.loop_analysis(controller, cfg.plant, disc,
                                          margin_target=args.margin)
        crossover, margin = analysis.crossover_frequency, analysis.phase_margin
        max_bw = analysis.max_bandwidth_at_margin
    else:
        controller = lockloop.ControllerConfig(integral_gain=0.0, sample_rate=fs)
        # phase profile (and so the bandwidth ceiling) is gain independent
        ref = lockloop.ControllerConfig(integral_gain=1.0, sample_rate=fs)
        max_bw = lockloop.loop_analysis(ref, cfg.plant, disc,
                                        margin_target=args.margin).max_bandwidth_at_margin
        crossover = margin = None
    residual, budget = lockloop.simulate_lock(trace, controller, cfg.plant, disc)
    out = args.out or os.path.splitext(args.trace)[0]
    noise.save_trace(residual, out + "_residual.csv")
    report = {
        "integral_gain_per_s": args.gain,
        "discriminator_v_per_m": disc,
        "crossover_frequency_hz": crossover,
        "phase_margin_deg": margin,
        "max_bandwidth_at_margin_hz": max_bw,
        "margin_target_deg": args.margin,
        "input_rms_m": float(np.sqrt(np.mean(trace.samples ** 2))),
        "residual_rms_m": float(np.sqrt(np.mean(residual.samples ** 2))),
    }
    with open(out + "_analysis.json", "w") as fh:
        fh.write(format_json(report) + "\n")
    _emit(report)
    return EXIT_OK


def cmd_align(args) -> int:
    cfg = load_config(args.config)
    if args.volts is not None:
        v = alignment.ActuatorVoltages(*args.volts)
        cmd = alignment.unmix_voltages(v, cfg.mixer, midpoint=args.midpoint)
        _emit({"delta_length_m": cmd.delta_length, "tip_m": cmd.tip,
               "tilt_m": cmd.tilt})
        return EXIT_OK
    cmd = alignment.ActuatorCommand(delta_length=args.dl, tip=args.tip, tilt=args.tilt)
    volts = alignment.mix_commands(cmd, cfg.mixer, midpoint=args.midpoint)
    saturated = []
    try:
        alignment.validate_voltages(volts, cfg.mixer)
    except alignment.SaturationError as exc:
        if args.strict:
            raise
        saturated = [name for name, _ in exc.channels]
        print(f"warning: {exc}", file=sys.stderr)
    _emit({"v_a_v": volts.v_a, "v_b_v": volts.v_b, "v_c_v": volts.v_c,
           "saturated_channels": saturated})
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nckit",
        description="near-concentric cavity design, noise, and lock-loop toolkit")
    parser.add_argument("--config", default=None,
                        help=f"JSON config path (fallback: ${ENV_CONFIG}, then defaults)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", help="cavity/mode/coupling design report")
    grp = p.add_mutually_exclusive_group()
    grp.add_argument("--target-d", type=float, default=None,
                     help="override the critical distance (m)")
    grp.add_argument("--target-g", type=float, default=None,
                     help="solve the critical distance for this coupling g (rad/s)")
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("analyze", help="trace -> PSD + noise budget")
    p.add_argument("trace", help="CSV time series (time_s,value)")
    p.add_argument("--slope", type=float, default=None,
                   help="discriminator slope V/Hz; treats the trace as volts")
    p.add_argument("--bands", default=DEFAULT_BANDS,
                   help="comma list of lo:hi Hz bands")
    p.add_argument("--segment", type=int, default=4096, help="PSD segment length")
    p.add_argument("--out", default=None, help="output path prefix")
    p.add_argument("--svg", action="store_true", help="also write a PSD plot")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", help="closed-loop lock simulation on a trace")
    p.add_argument("trace", help="CSV length-noise series (time_s,value in m)")
    p.add_argument("--gain", type=float, default=0.0,
                   help="integral gain 1/s (0 runs open loop)")
    p.add_argument("--margin", type=float, default=60.0,
                   help="phase-margin target in degrees for the bandwidth ceiling")
    p.add_argument("--out", default=None, help="output path prefix")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("align", help="mix commands to voltages or back")
    p.add_argument("--dl", type=float, default=0.0, help="length command (m)")
    p.add_argument("--tip", type=float, default=0.0, help="tip command (m equivalent)")
    p.add_argument("--tilt", type=float, default=0.0, help="tilt command (m equivalent)")
    p.add_argument("--volts", type=float, nargs=3, metavar=("VA", "VB", "VC"),
                   default=None, help="unmix these channel voltages instead")
    p.add_argument("--midpoint", type=float, default=0.0,
                   help="voltage operating point added to every channel")
    p.add_argument("--strict", action="store_true",
                   help="fail (exit 5) when a channel saturates")
    p.set_defaults(func=cmd_align)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except noise.IngestError as exc:
        print(f"ingest error: {exc}", file=sys.stderr)
        return EXIT_INGEST
    except lockloop.UnstableLoopError as exc:
        print(f"loop error: {exc}", file=sys.stderr)
        return EXIT_LOOP
    except alignment.SaturationError as exc:
        print(f"saturation: {exc}", file=sys.stderr)
        return EXIT_SATURATION
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
