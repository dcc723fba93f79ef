"""PDH discriminator model, resonant plant and controller transfer
functions, margin/bandwidth analysis, and a discrete-time simulation of
the loose integral lock.

Detunings and analysis frequencies are Hz. The open loop composes
discriminator (V/m) x controller (V/V per s terms) x plant (m/V), so loop
quantities are dimensionless.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal
from scipy.constants import c
from scipy.optimize import brentq
from scipy.special import j0, j1

from .cavity import MirrorSpec
from .noise import NoiseBudget, NoiseTrace, SpectralDensity, estimate_psd, make_budget

REFERENCE_BUDGET_BANDS = ((10.0, 200.0), (200.0, 2500.0), (2600.0, 2900.0), (3000.0, 10000.0))


class DegenerateSlopeError(ValueError):
    """Sidebands unresolved: cavity linewidth at or above the modulation frequency."""


class NoCrossoverError(ValueError):
    """Open loop never reaches unity gain on the searched grid."""


class UnstableLoopError(RuntimeError):
    """Closed-loop simulation diverged."""


# --- configuration types ---------------------------------------------------

@dataclass(frozen=True)
class PDHConfig:
    modulation_frequency: float          # Hz
    modulation_depth: float
    mirrors: tuple
    cavity_length: float

    def __post_init__(self):
        if self.modulation_frequency <= 0:
            raise ValueError("modulation_frequency must be > 0")
        if not 0 < self.modulation_depth <= 1.5:
            raise ValueError("modulation_depth must lie in (0, 1.5]")
        m1, m2 = self.mirrors
        if not isinstance(m1, MirrorSpec) or not isinstance(m2, MirrorSpec):
            raise ValueError("mirrors must be a MirrorSpec pair")
        if m1.reflectivity != m2.reflectivity:
            raise ValueError("reflection model assumes symmetric mirrors")
        if self.cavity_length <= 0:
            raise ValueError("cavity_length must be > 0")

    @property
    def free_spectral_range(self) -> float:
        return c / (2.0 * self.cavity_length)

    @property
    def full_linewidth(self) -> float:
        r = self.mirrors[0].reflectivity
        finesse = math.pi * r ** 0.5 / (1.0 - r)
        return self.free_spectral_range / finesse


@dataclass(frozen=True)
class PlantModel:
    """Second-order piezo/mirror mechanics seen by the controller."""

    dc_gain: float                 # m/V
    resonance_frequency: float     # Hz
    quality_factor: float
    delay: float = 0.0             # s

    def __post_init__(self):
        if min(self.dc_gain, self.resonance_frequency) <= 0:
            raise ValueError("dc_gain and resonance_frequency must be > 0")
        if self.quality_factor <= 0.5:
            raise ValueError("quality_factor must exceed 0.5 (underdamped)")
        if self.delay < 0:
            raise ValueError("delay must be >= 0")


@dataclass(frozen=True)
class ControllerConfig:
    """Integral (+ optional proportional) gains and the loop sample rate.

    Both gains zero is accepted as the explicit open-loop configuration;
    simulate_lock then passes the input through untouched.
    """

    integral_gain: float           # 1/s
    proportional_gain: float = 0.0
    sample_rate: float = 250e3

    def __post_init__(self):
        if self.integral_gain < 0 or self.proportional_gain < 0:
            raise ValueError("gains must be >= 0")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be > 0")


@dataclass(frozen=True)
class LoopAnalysis:
    crossover_frequency: float
    phase_margin: float            # deg, in (-180, 180]
    max_bandwidth_at_margin: float


# --- PDH discriminator ------------------------------------------------------

def cavity_reflection(detuning, mirrors, length: float):
    """Complex reflection coefficient of the symmetric lossless cavity.

    F(delta) = r (e^{i phi} - 1) / (1 - r^2 e^{i phi}) with phi = 2 pi
    delta / FSR and amplitude reflectivity r. Zero on resonance
    (impedance matched), |F| maximal and real at the antiresonance.
    """
    r = math.sqrt(mirrors[0].reflectivity)
    fsr = c / (2.0 * length)
    phase = np.exp(1j * 2.0 * np.pi * np.asarray(detuning, dtype=float) / fsr)
    return r * (phase - 1.0) / (1.0 - r * r * phase)


def cavity_transmission_intensity(detuning, mirrors, length: float):
    """|t|^2 of the same lossless cavity; complements |F|^2 to one."""
    r2 = mirrors[0].reflectivity
    fsr = c / (2.0 * length)
    phase = np.exp(1j * 2.0 * np.pi * np.asarray(detuning, dtype=float) / fsr)
    return (1.0 - r2) ** 2 / np.abs(1.0 - r2 * phase) ** 2


def pdh_error(detuning, cfg: PDHConfig):
    """Demodulated PDH error signal (detector-normalized volts).

    First-order sidebands only: eps proportional to
    Im[F(d) F*(d+Omega) - F*(d) F(d-Omega)], weighted by J0(beta) J1(beta).
    """
    omega = cfg.modulation_frequency
    f0 = cavity_reflection(detuning, cfg.mirrors, cfg.cavity_length)
    fp = cavity_reflection(np.asarray(detuning) + omega, cfg.mirrors, cfg.cavity_length)
    fm = cavity_reflection(np.asarray(detuning) - omega, cfg.mirrors, cfg.cavity_length)
    bessel = j0(cfg.modulation_depth) * j1(cfg.modulation_depth)
    return bessel * np.imag(f0 * np.conj(fp) - np.conj(f0) * fm)


def discriminator_slope(cfg: PDHConfig) -> float:
    """Error-signal slope at line center, V/Hz.

    Central difference with step full_linewidth / 1e4. Requires resolved
    sidebands (modulation frequency above the cavity linewidth).
    """
    if cfg.full_linewidth >= cfg.modulation_frequency:
        raise DegenerateSlopeError(
            f"full linewidth {cfg.full_linewidth:.3g} Hz >= modulation "
            f"frequency {cfg.modulation_frequency:.3g} Hz")
    h = cfg.full_linewidth / 1e4
    return float(pdh_error(h, cfg) - pdh_error(-h, cfg)) / (2.0 * h)


def linear_window(cfg: PDHConfig, deviation: float = 0.10) -> float:
    """Half-width of the linear capture range, Hz.

    Smallest detuning where the error signal departs from the central
    slope by the given relative deviation. Searched up to the modulation
    frequency or FSR/2, whichever is smaller.
    """
    slope = discriminator_slope(cfg)
    upper = min(cfg.modulation_frequency, cfg.free_spectral_range / 2.0) * (1.0 - 1e-9)
    grid = np.geomspace(cfg.full_linewidth * 1e-3, upper, 4096)
    dev = np.abs(pdh_error(grid, cfg) - slope * grid) / (abs(slope) * grid)
    above = np.nonzero(dev >= deviation)[0]
    if above.size == 0:
        return upper
    i = above[0]
    if i == 0:
        return float(grid[0])
    return brentq(
        lambda x: abs(float(pdh_error(x, cfg)) - slope * x) / (abs(slope) * x) - deviation,
        grid[i - 1], grid[i])


# --- transfer functions -----------------------------------------------------

def plant_response(plant: PlantModel, f):
    """H(f) = dc_gain / (1 - (f/f0)^2 + i f/(f0 Q)) with optional pure delay."""
    f = np.asarray(f, dtype=float)
    u = f / plant.resonance_frequency
    h = plant.dc_gain / (1.0 - u ** 2 + 1j * u / plant.quality_factor)
    if plant.delay:
        h = h * np.exp(-1j * 2.0 * np.pi * f * plant.delay)
    return h


def controller_response(controller: ControllerConfig, f):
    """C(f) = Ki / (i 2 pi f) + Kp."""
    f = np.asarray(f, dtype=float)
    return controller.integral_gain / (1j * 2.0 * np.pi * f) + controller.proportional_gain


def open_loop_response(f, controller: ControllerConfig, plant: PlantModel,
                       discriminator_gain: float):
    """L(f) = D x C(f) x P(f) with D the length discriminator in V/m."""
    return discriminator_gain * controller_response(controller, f) * plant_response(plant, f)


def length_discriminator(slope_v_per_hz: float, cavity_length: float,
                         wavelength: float) -> float:
    """Convert a V/Hz PDH slope into the V/m gain seen by the length loop."""
    return slope_v_per_hz * (c / wavelength) / cavity_length


def bode_sweep(system, freqs):
    """Magnitude/phase table of a transfer callable over the given grid.

    Returns an (n, 3) array of (freq_hz, mag_db, phase_deg) with the phase
    unwrapped along the sweep.
    """
    f = np.asarray(freqs, dtype=float)
    if f.ndim != 1 or f.size < 1 or np.any(f <= 0) or np.any(np.diff(f) <= 0):
        raise ValueError("freqs must be positive and strictly increasing")
    resp = np.asarray(system(f), dtype=complex)
    mag_db = 20.0 * np.log10(np.abs(resp))
    phase_deg = np.degrees(np.unwrap(np.angle(resp)))
    return np.column_stack([f, mag_db, phase_deg])


def save_bode(table, path) -> None:
    """Write a bode_sweep table as CSV `freq_hz,mag_db,phase_deg`."""
    arr = np.asarray(table, dtype=float)
    with open(path, "w", newline="") as fh:
        fh.write("freq_hz,mag_db,phase_deg\n")
        for row in arr:
            fh.write(f"{row[0]:.9g},{row[1]:.9g},{row[2]:.9g}\n")


# --- margin and bandwidth analysis -------------------------------------------

def _unwrapped_phase_deg(f_grid, phase_grid, loop, freq):
    # evaluate the loop phase at one frequency, pinned to the unwrapped
    # branch of the precomputed grid
    raw = math.degrees(np.angle(loop(freq)))
    anchor = float(np.interp(math.log(freq), np.log(f_grid), phase_grid))
    return raw + 360.0 * round((anchor - raw) / 360.0)


def loop_analysis(controller: ControllerConfig, plant: PlantModel,
                  discriminator_gain: float, margin_target: float = 60.0) -> LoopAnalysis:
    """Crossover, phase margin, and the margin-limited bandwidth ceiling.

    crossover_frequency is the lowest unity-gain crossing of |L|; the
    phase margin is evaluated there. max_bandwidth_at_margin is the
    highest frequency whose open-loop phase still leaves the target
    margin, i.e. the crossover a pure gain rescale could reach before the
    margin degrades below the target. It depends only on the phase
    profile, not on the current gain. Note the gain ceiling is the phase
    criterion alone; a resonant plant can lose gain margin at the
    resonance before phase margin runs out (simulate_lock will detect
    that as divergence).
    """
    def loop(f):
        return open_loop_response(f, controller, plant, discriminator_gain)

    f0 = plant.resonance_frequency
    grid = np.geomspace(f0 * 1e-4, f0 * 1e3, 6001)
    resp = loop(grid)
    mag = np.abs(resp)
    phase = np.degrees(np.unwrap(np.angle(resp)))

    sign = np.sign(mag - 1.0)
    crossings = np.nonzero(sign[:-1] * sign[1:] < 0)[0]
    if crossings.size == 0:
        raise NoCrossoverError("|L| never crosses unity on the analysis grid")
    i = crossings[0]
    fc = brentq(lambda ff: abs(loop(ff)) - 1.0, grid[i], grid[i + 1])
    pm = 180.0 + _unwrapped_phase_deg(grid, phase, loop, fc)
    pm = math.remainder(pm, 360.0)

    threshold = margin_target - 180.0
    ok = phase >= threshold
    if not ok.any():
        max_bw = 0.0
    elif ok.all():
        max_bw = float(grid[-1])
    else:
        j = int(np.nonzero(ok)[0][-1])
        if j == grid.size - 1:
            max_bw = float(grid[-1])
        else:
            max_bw = brentq(
                lambda ff: _unwrapped_phase_deg(grid, phase, loop, ff) - threshold,
                grid[j], grid[j + 1])
    return LoopAnalysis(crossover_frequency=fc, phase_margin=pm,
                        max_bandwidth_at_margin=max_bw)


def integral_gain_for_crossover(crossover: float, plant: PlantModel,
                                discriminator_gain: float) -> float:
    """Pure-integral gain placing the unity crossing at the given frequency."""
    if crossover <= 0:
        raise ValueError("crossover must be > 0")
    return 2.0 * math.pi * crossover / (discriminator_gain
                                        * abs(complex(plant_response(plant, crossover))))


# --- discrete-time closed loop -----------------------------------------------

def simulate_lock(noise: NoiseTrace, controller: ControllerConfig, plant: PlantModel,
                  discriminator_gain: float):
    """Run the loose lock against an injected length-noise trace.

    Bilinear-discretized plant and integrator at the trace sample rate;
    the residual is the sensitivity-filtered input, residual = S(z) noise
    with S = 1/(1 + D C P). Returns (residual trace, its noise budget).
    Divergence beyond 1e6x the input RMS raises UnstableLoopError.
    """
    if noise.unit != "meter":
        raise ValueError(f"expected a meter trace, got unit '{noise.unit}'")
    fs = noise.sample_rate
    if abs(controller.sample_rate - fs) > 1e-9 * fs:
        raise ValueError("controller sample_rate must match the trace")
    if fs < 20.0 * plant.resonance_frequency:
        raise ValueError("sample rate below 20x plant resonance; bilinear "
                         "plant mapping too coarse")

    ki, kp = controller.integral_gain, controller.proportional_gain
    if ki == 0.0 and kp == 0.0:
        residual = noise.samples.copy()
    else:
        w0 = 2.0 * math.pi * plant.resonance_frequency
        num_p, den_p = signal.bilinear(
            [plant.dc_gain],
            [1.0 / w0 ** 2, 1.0 / (w0 * plant.quality_factor), 1.0], fs)
        t = 1.0 / fs
        num_c = np.array([kp + ki * t / 2.0, -kp + ki * t / 2.0])
        den_c = np.array([1.0, -1.0])
        num_g = discriminator_gain * np.polymul(num_c, num_p)
        den_g = np.polymul(den_c, den_p)
        k_delay = int(round(plant.delay * fs))
        if k_delay:
            num_g = np.concatenate([np.zeros(k_delay), num_g])
            den_g = np.concatenate([den_g, np.zeros(k_delay)])
        with np.errstate(all="ignore"):
            residual = signal.lfilter(den_g, np.polyadd(den_g, num_g), noise.samples)
        limit = 1e6 * float(np.sqrt(np.mean(noise.samples ** 2)))
        if not np.all(np.isfinite(residual)) or np.max(np.abs(residual)) > limit:
            raise UnstableLoopError(
                "closed loop diverged (residual beyond 1e6x input RMS) at "
                f"integral_gain={ki:g} 1/s, proportional_gain={kp:g}")

    out = NoiseTrace(sample_rate=fs, samples=residual, unit="meter")
    psd = estimate_psd(out, segment_length=min(4096, residual.size))
    fmax = psd.frequencies[-1]
    bands = [(lo, min(hi, fmax)) for lo, hi in REFERENCE_BUDGET_BANDS if lo < fmax]
    return out, make_budget(psd, bands)
