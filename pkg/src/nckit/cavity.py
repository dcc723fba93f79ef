"""Resonator spectral properties, near-concentric Gaussian mode geometry,
noise-limit factor, and atom-light coupling figures.

Conventions: SI units throughout. Frequencies are plain Hz unless the name
carries an explicit angular tag (kappa, gamma, coupling_g are rad/s).
Vacuum propagation only, c exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.constants import c
from scipy.optimize import brentq

# relative tolerance handed to the root finders; keeps round trips near
# machine precision instead of brentq's loose absolute default
_RTOL = 4 * math.ulp(1.0)


class UnstableGeometryError(ValueError):
    """Cavity outside the stable near-concentric branch."""


class NoSolutionError(ValueError):
    """Requested target not attainable on the searched interval."""


@dataclass(frozen=True)
class MirrorSpec:
    """Single mirror: concave radius of curvature and intensity reflectivity."""

    radius_of_curvature: float
    reflectivity: float
    transmission_loss: float | None = None

    def __post_init__(self):
        if self.radius_of_curvature <= 0:
            raise ValueError("radius_of_curvature must be > 0")
        if not 0 < self.reflectivity < 1:
            raise ValueError("reflectivity must lie strictly inside (0, 1)")
        if self.transmission_loss is None:
            object.__setattr__(self, "transmission_loss", 1.0 - self.reflectivity)
        elif not 0 <= self.transmission_loss < 1:
            raise ValueError("transmission_loss must lie in [0, 1)")


@dataclass(frozen=True)
class CavityGeometry:
    """Two-mirror resonator on the near-concentric stable branch."""

    mirror_1: MirrorSpec
    mirror_2: MirrorSpec
    length: float

    def __post_init__(self):
        if self.length <= 0:
            raise ValueError("length must be > 0")
        if self.critical_distance <= 0:
            raise UnstableGeometryError(
                f"critical distance d = {self.critical_distance:.3e} m is not > 0; "
                "cavity is at or beyond the concentric point"
            )
        if not 0 <= self.stability_product < 1:
            raise UnstableGeometryError(
                f"stability product g1*g2 = {self.stability_product:.6f} outside [0, 1)"
            )

    @property
    def critical_distance(self) -> float:
        """Remaining length to the concentric point, d = R1 + R2 - L."""
        return self.mirror_1.radius_of_curvature + self.mirror_2.radius_of_curvature - self.length

    @property
    def g1(self) -> float:
        return 1.0 - self.length / self.mirror_1.radius_of_curvature

    @property
    def g2(self) -> float:
        return 1.0 - self.length / self.mirror_2.radius_of_curvature

    @property
    def stability_product(self) -> float:
        return self.g1 * self.g2

    @property
    def is_symmetric(self) -> bool:
        return self.mirror_1.radius_of_curvature == self.mirror_2.radius_of_curvature


def symmetric_cavity(radius: float, reflectivity: float, *, length: float | None = None,
                     critical_distance: float | None = None) -> CavityGeometry:
    """Convenience constructor for the R1 = R2 cavity.

    Give either the cavity length or the critical distance d; the other
    follows from L = 2R - d.
    """
    if (length is None) == (critical_distance is None):
        raise ValueError("give exactly one of length, critical_distance")
    if length is None:
        length = 2.0 * radius - critical_distance
    m = MirrorSpec(radius_of_curvature=radius, reflectivity=reflectivity)
    return CavityGeometry(mirror_1=m, mirror_2=m, length=length)


@dataclass(frozen=True)
class AtomLine:
    """Optical transition: wavelength (m) and half linewidth gamma (rad/s)."""

    wavelength: float
    half_linewidth: float

    def __post_init__(self):
        if self.wavelength <= 0 or self.half_linewidth <= 0:
            raise ValueError("wavelength and half_linewidth must be > 0")


@dataclass(frozen=True)
class ModeGeometry:
    rayleigh_range: float
    waist: float
    waist_at_mirror: float
    stability_product: float
    stable: bool


@dataclass(frozen=True)
class SpectralProfile:
    free_spectral_range: float
    finesse: float
    full_linewidth: float
    half_linewidth_kappa: float  # rad/s


@dataclass(frozen=True)
class CouplingReport:
    mode_volume: float
    coupling_g: float  # rad/s
    kappa: float       # rad/s
    cooperativity: float


def finesse(mirror_1: MirrorSpec, mirror_2: MirrorSpec) -> float:
    """Cavity finesse from the two intensity reflectivities.

    F = pi (r1 r2)^(1/4) / (1 - sqrt(r1 r2)). For r1 = r2 = 0.995 this gives
    626.7, the usual "F = 627" mirror set.
    """
    r1, r2 = mirror_1.reflectivity, mirror_2.reflectivity
    for r in (r1, r2):
        if not 0 < r < 1:
            raise ValueError("reflectivity must lie strictly inside (0, 1)")
    rr = math.sqrt(r1 * r2)
    return math.pi * rr ** 0.5 / (1.0 - rr)


def reflectivity_for_finesse(target: float) -> float:
    """Symmetric intensity reflectivity giving the requested finesse.

    Inverts F = pi x / (1 - x^2) with x = sqrt(r); closed form from the
    quadratic, exact not iterative.
    """
    if target <= 0:
        raise ValueError("finesse target must be > 0")
    x = (-math.pi + math.sqrt(math.pi ** 2 + 4.0 * target ** 2)) / (2.0 * target)
    return x * x


def spectral_profile(geometry: CavityGeometry) -> SpectralProfile:
    """FSR, finesse, full linewidth, and angular half-linewidth kappa."""
    fsr = c / (2.0 * geometry.length)
    f = finesse(geometry.mirror_1, geometry.mirror_2)
    full = fsr / f
    return SpectralProfile(
        free_spectral_range=fsr,
        finesse=f,
        full_linewidth=full,
        half_linewidth_kappa=math.pi * full,
    )


def quality_factor(geometry: CavityGeometry, wavelength: float) -> float:
    """Optical Q = nu / full_linewidth at the given wavelength."""
    return (c / wavelength) / spectral_profile(geometry).full_linewidth


def noise_limit_factor(delta_l_rms: float, wavelength: float, finesse_value: float) -> float:
    """Length noise normalized to the resonance width: xi = dL / (lambda/2) * F."""
    if delta_l_rms < 0 or wavelength <= 0 or finesse_value <= 0:
        raise ValueError("negative noise or nonpositive wavelength/finesse")
    return delta_l_rms / (wavelength / 2.0) * finesse_value


def length_noise_for_target(xi: float, wavelength: float, finesse_value: float) -> float:
    """Inverse of noise_limit_factor: allowed RMS length noise for a target xi."""
    if xi < 0 or wavelength <= 0 or finesse_value <= 0:
        raise ValueError("negative target or nonpositive wavelength/finesse")
    return xi * (wavelength / 2.0) / finesse_value


def length_noise_to_frequency(delta_l: float, geometry: CavityGeometry, wavelength: float) -> float:
    """Resonance frequency shift for a small length change: dnu = nu dL / L."""
    return (c / wavelength) * delta_l / geometry.length


def frequency_noise_to_length(delta_nu: float, geometry: CavityGeometry, wavelength: float) -> float:
    """Inverse map of length_noise_to_frequency."""
    return delta_nu * geometry.length / (c / wavelength)


def mode_geometry(geometry: CavityGeometry, wavelength: float) -> ModeGeometry:
    """Fundamental Gaussian mode of the symmetric near-concentric cavity.

    The waist sits at the center; wavefront curvature matches the mirrors at
    z = L/2, which fixes z_R^2 = L(2R - L)/4 = L d / 4.
    """
    if not geometry.is_symmetric:
        raise ValueError("mode_geometry handles only symmetric cavities (R1 = R2)")
    radius = geometry.mirror_1.radius_of_curvature
    d = geometry.critical_distance
    if geometry.length >= 2.0 * radius or d <= 0:
        raise UnstableGeometryError("length >= 2R: beyond the concentric point")
    z_r = math.sqrt(geometry.length * d) / 2.0
    w0 = math.sqrt(wavelength * z_r / math.pi)
    w_m = w0 * math.sqrt(1.0 + (geometry.length / (2.0 * z_r)) ** 2)
    gg = geometry.stability_product
    return ModeGeometry(
        rayleigh_range=z_r,
        waist=w0,
        waist_at_mirror=w_m,
        stability_product=gg,
        stable=0 <= gg < 1,
    )


def transverse_mode_offset(geometry: CavityGeometry) -> float:
    """Frequency spacing between a transverse order and the nearest
    longitudinal resonance on the concentric side of the spectrum.

    On the near-concentric branch (g <= 0) the Gouy phase puts the first
    transverse satellite at FSR * arccos(|g|) / pi above the longitudinal
    line it converges onto as d -> 0.
    """
    if not geometry.is_symmetric:
        raise ValueError("transverse_mode_offset handles only symmetric cavities")
    g = geometry.g1
    if g > 0:
        raise ValueError("near-concentric branch requires length >= R (g <= 0)")
    fsr = c / (2.0 * geometry.length)
    return fsr * math.acos(abs(g)) / math.pi


def critical_distance_from_offset(offset: float, radius: float,
                                  cavity_length_estimate: float) -> float:
    """Invert the transverse-mode spacing into a critical distance.

    The length estimate only bounds the admissible offset (0, FSR/2]; the
    inversion itself solves the exact forward relation with L = 2R - d.
    """
    fsr_est = c / (2.0 * cavity_length_estimate)
    if not 0 < offset <= fsr_est / 2.0 * (1.0 + 1e-9):
        raise ValueError(f"offset must lie in (0, FSR/2] = (0, {fsr_est / 2.0:.4e}] Hz")

    def h(d):
        length = 2.0 * radius - d
        g_mag = abs(1.0 - length / radius)
        return (c / (2.0 * length)) * math.acos(min(g_mag, 1.0)) / math.pi - offset

    lo, hi = radius * 1e-16, radius
    if h(hi) < 0:
        raise ValueError("offset exceeds the confocal spacing FSR/2 for this radius")
    return brentq(h, lo, hi, xtol=1e-24, rtol=_RTOL)


def coupling(geometry: CavityGeometry, atom: AtomLine) -> CouplingReport:
    """Mode volume, coherent coupling g, decay rate kappa, and cooperativity.

    Standing-wave convention with the atom at a central antinode:
    V_m = (pi/4) w0^2 L and g = sqrt(6 c lambda^2 gamma / (pi^3 w0^2 L)).
    The convention is isolated here so an alternate can be swapped in one place.
    """
    mode = mode_geometry(geometry, atom.wavelength)
    w0 = mode.waist
    length = geometry.length
    v_m = math.pi / 4.0 * w0 ** 2 * length
    g = math.sqrt(6.0 * c * atom.wavelength ** 2 * atom.half_linewidth
                  / (math.pi ** 3 * w0 ** 2 * length))
    kappa = spectral_profile(geometry).half_linewidth_kappa
    return CouplingReport(
        mode_volume=v_m,
        coupling_g=g,
        kappa=kappa,
        cooperativity=g ** 2 / (2.0 * kappa * atom.half_linewidth),
    )


def cooperativity(coupling_g: float, kappa: float, gamma: float) -> float:
    """C = g^2 / (2 kappa gamma), all rates angular."""
    return coupling_g ** 2 / (2.0 * kappa * gamma)


def solve_critical_distance(radius: float, atom: AtomLine, *, waist: float | None = None,
                            coupling_g: float | None = None,
                            reflectivity: float = 0.995) -> float:
    """Critical distance d that realizes a target waist or coupling rate.

    Exactly one target. The waist grows monotonically with d on (0, R].
    The coupling rate instead falls off with d near concentricity and turns
    around at d = R/2, so the g search is restricted to (0, R/2] where the
    map is monotone.
    """
    if (waist is None) == (coupling_g is None):
        raise ValueError("give exactly one of waist, coupling_g")

    def w0_of(d):
        return mode_geometry(symmetric_cavity(radius, reflectivity, critical_distance=d),
                             atom.wavelength).waist

    def g_of(d):
        return coupling(symmetric_cavity(radius, reflectivity, critical_distance=d), atom).coupling_g

    lo = radius * 1e-12
    if waist is not None:
        hi = radius
        f, target = w0_of, waist
        increasing = True
    else:
        hi = radius / 2.0
        f, target = g_of, coupling_g
        increasing = False
    f_lo, f_hi = f(lo), f(hi)
    lo_val, hi_val = (f_lo, f_hi) if increasing else (f_hi, f_lo)
    if not lo_val <= target <= hi_val:
        raise NoSolutionError(
            f"target {target:.6g} outside attainable range [{lo_val:.6g}, {hi_val:.6g}]"
        )
    return brentq(lambda d: f(d) - target, lo, hi, xtol=1e-24, rtol=_RTOL)
