"""Actuator command mixing, piezo expansion, frame-plane kinematics, and
the transverse misalignment compensation geometry.

Commands are length-equivalents (m) at the actuator, so the transducer
gain G is a single V/m constant. Tip/tilt angles are small-angle slopes
(rad), which keeps every map here exactly linear.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

# Eq-style push-pull mixing pattern and its hand-checked inverse
MIX_MATRIX = np.array([[1.0, 1.0, 1.0],
                       [1.0, -1.0, 1.0],
                       [1.0, 1.0, -1.0]])
UNMIX_MATRIX = 0.25 * np.array([[0.0, 2.0, 2.0],
                                [2.0, -2.0, 0.0],
                                [2.0, 0.0, -2.0]])


class SaturationError(ValueError):
    """One or more channels outside the allowed voltage range."""

    def __init__(self, channels):
        self.channels = list(channels)
        names = ", ".join(f"{n}={v:.3f} V" for n, v in self.channels)
        super().__init__(f"voltage out of range on: {names}")


class CollinearGeometryError(ValueError):
    """Actuator positions do not span a plane."""


@dataclass(frozen=True)
class ActuatorCommand:
    delta_length: float
    tip: float
    tilt: float

    def __post_init__(self):
        for v in (self.delta_length, self.tip, self.tilt):
            if not math.isfinite(v):
                raise ValueError("command components must be finite")


@dataclass(frozen=True)
class ActuatorVoltages:
    v_a: float
    v_b: float
    v_c: float

    def as_array(self):
        return np.array([self.v_a, self.v_b, self.v_c])


@dataclass(frozen=True)
class MixerConfig:
    """Transducer gain and hardware range of the three piezo channels."""

    gain: float | None = None          # V per m of command; default 1/expansion_per_volt
    voltage_limit: float = 100.0
    expansion_per_volt: float = 15e-6 / 100.0

    def __post_init__(self):
        if self.expansion_per_volt <= 0:
            raise ValueError("expansion_per_volt must be > 0")
        if self.gain is None:
            object.__setattr__(self, "gain", 1.0 / self.expansion_per_volt)
        if self.gain <= 0:
            raise ValueError("gain must be > 0")


@dataclass(frozen=True)
class FrameGeometry:
    """Positions of the three actuator feet in the frame plane (m)."""

    actuator_positions: tuple

    def __post_init__(self):
        pts = np.asarray(self.actuator_positions, dtype=float)
        if pts.shape != (3, 2):
            raise ValueError("need exactly three 2-D actuator positions")
        # twice the triangle area; zero means no plane is defined
        area2 = abs((pts[1, 0] - pts[0, 0]) * (pts[2, 1] - pts[0, 1])
                    - (pts[2, 0] - pts[0, 0]) * (pts[1, 1] - pts[0, 1]))
        scale = np.abs(pts).max() or 1.0
        if area2 < 1e-12 * scale ** 2:
            raise CollinearGeometryError("actuator positions are collinear")
        object.__setattr__(self, "actuator_positions", tuple(map(tuple, pts)))


def default_frame(circumradius: float = 8e-3) -> FrameGeometry:
    """Equilateral actuator triangle with channel A on the +y symmetry axis."""
    if circumradius <= 0:
        raise ValueError("circumradius must be > 0")
    h = circumradius * math.sqrt(3.0) / 2.0
    return FrameGeometry(((0.0, circumradius), (-h, -circumradius / 2.0), (h, -circumradius / 2.0)))


@dataclass(frozen=True)
class TransverseState:
    delta_x: float
    axis_rotation: float
    mirror_tilt_correction: float


def mix_commands(cmd: ActuatorCommand, cfg: MixerConfig, *, midpoint: float = 0.0,
                 validate: bool = False) -> ActuatorVoltages:
    """Map a (dL, tip, tilt) command to the three channel voltages.

    Bipolar corrections come out negative unless driven around a midpoint
    offset (50 V keeps the full hardware range symmetric). Saturation is
    only checked when asked for, so the linear map itself stays total.
    """
    v = cfg.gain * MIX_MATRIX @ np.array([cmd.delta_length, cmd.tip, cmd.tilt]) + midpoint
    out = ActuatorVoltages(v_a=v[0], v_b=v[1], v_c=v[2])
    if validate:
        validate_voltages(out, cfg)
    return out


def unmix_voltages(v: ActuatorVoltages, cfg: MixerConfig, *, midpoint: float = 0.0) -> ActuatorCommand:
    """Inverse of mix_commands for the same midpoint."""
    cmd = UNMIX_MATRIX @ (v.as_array() - midpoint) / cfg.gain
    return ActuatorCommand(delta_length=cmd[0], tip=cmd[1], tilt=cmd[2])


def validate_voltages(v: ActuatorVoltages, cfg: MixerConfig) -> None:
    bad = [(name, val) for name, val in zip("ABC", v.as_array())
           if not 0.0 <= val <= cfg.voltage_limit]
    if bad:
        raise SaturationError(bad)


def actuator_expansion(voltage: float, cfg: MixerConfig) -> tuple[float, bool]:
    """Piezo stack expansion for a drive voltage, clamped to the hardware range.

    Returns (expansion, clamped). Clamping is signaled, not raised.
    """
    clamped_v = min(max(voltage, 0.0), cfg.voltage_limit)
    return cfg.expansion_per_volt * clamped_v, clamped_v != voltage


def frame_pose(expansions, frame: FrameGeometry) -> tuple[float, float, float]:
    """Tip, tilt, and mean displacement of the plane through the actuator tips.

    Solves z = a + b x + c y exactly through the three tips. Returns
    (tip, tilt, mean) where tip = dz/dx (rotation about y), tilt = dz/dy
    (rotation about x), both as small-angle slopes in rad, and mean is the
    plane height at the triangle centroid. With channel A on the +y axis,
    a single-actuator push (e, 0, 0) tilts about the line through B and C.
    """
    z = np.asarray(expansions, dtype=float)
    if z.shape != (3,):
        raise ValueError("need exactly three expansions")
    pts = np.asarray(frame.actuator_positions)
    design = np.column_stack([np.ones(3), pts[:, 0], pts[:, 1]])
    try:
        a, b, c = np.linalg.solve(design, z)
    except np.linalg.LinAlgError as exc:
        raise CollinearGeometryError("actuator positions are collinear") from exc
    centroid = pts.mean(axis=0)
    mean = a + b * centroid[0] + c * centroid[1]
    return b, c, mean


def transverse_compensation(delta_x: float, d: float, r: float) -> TransverseState:
    """Axis rotation and corrective mirror tilt for a transverse mirror offset.

    Shifting one mirror sideways by delta_x moves its center of curvature
    with it; the optical axis through the two centers rotates by
    atan(delta_x / d) and is restored by tilting the mirror delta_x / R.
    """
    if d <= 0:
        raise ValueError("d must be > 0; the concentric point d = 0 is degenerate")
    if r <= 0:
        raise ValueError("mirror radius must be > 0")
    return TransverseState(
        delta_x=delta_x,
        axis_rotation=math.atan(delta_x / d),
        mirror_tilt_correction=delta_x / r,
    )


class SupportConfiguration(Enum):
    CLAMP = "Clamp"
    SPRING = "Spring"
    PARALLEL_BASE = "ParallelBase"
    ROTATED_BASE_45 = "RotatedBase45"


# static transverse-displacement survey of the support options (m)
_DISPLACEMENT_TABLE = {
    SupportConfiguration.CLAMP: 3.75e-6,
    SupportConfiguration.SPRING: 1.25e-6,
    SupportConfiguration.PARALLEL_BASE: 7e-6,
    SupportConfiguration.ROTATED_BASE_45: 3.75e-6,
}


def displacement_budget(configuration) -> float:
    """Maximum observed transverse displacement for a support configuration."""
    if isinstance(configuration, str):
        configuration = SupportConfiguration(configuration)
    return _DISPLACEMENT_TABLE[configuration]
