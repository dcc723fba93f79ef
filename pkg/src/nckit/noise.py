"""Error-signal trace ingestion, PSD estimation, band-limited noise budgets,
and spectral synthesis for fixtures and loop studies.

All spectra are one-sided densities in unit^2/Hz on a uniform grid starting
at DC. Band integrals use trapezoids with linear splitting of the bins that
straddle a band edge, so disjoint bands add up exactly.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import signal
from scipy.constants import c

VALID_UNITS = ("volt", "meter", "hertz")
_WINDOWS = ("hann", "hamming", "blackman", "boxcar")


class IngestError(ValueError):
    """Trace file unreadable or malformed."""


class NonUniformSamplingError(IngestError):
    """Timestamp jitter above the uniform-sampling tolerance."""


class NyquistError(ValueError):
    """Spectral model extends beyond the Nyquist frequency."""


class GridMismatchError(ValueError):
    """Frequency grids differ beyond the resampling tolerance."""


@dataclass(frozen=True)
class NoiseTrace:
    sample_rate: float
    samples: np.ndarray
    unit: str = "volt"

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be > 0")
        if self.unit not in VALID_UNITS:
            raise ValueError(f"unit must be one of {VALID_UNITS}")
        arr = np.asarray(self.samples, dtype=float)
        if arr.ndim != 1 or arr.size < 2:
            raise ValueError("need at least 2 samples in a 1-D array")
        object.__setattr__(self, "samples", arr)

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class SpectralDensity:
    frequencies: np.ndarray
    density: np.ndarray
    resolution_bandwidth: float

    def __post_init__(self):
        f = np.asarray(self.frequencies, dtype=float)
        s = np.asarray(self.density, dtype=float)
        if f.shape != s.shape or f.ndim != 1 or f.size < 2:
            raise ValueError("frequencies and density must be matching 1-D arrays")
        if np.any(np.diff(f) <= 0):
            raise ValueError("frequencies must be strictly increasing")
        if np.any(s < 0):
            raise ValueError("density must be nonnegative")
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "density", s)


@dataclass(frozen=True)
class DiscriminatorCalibration:
    """Error-signal slope at line center plus the geometry that converts
    frequency noise back into cavity length noise."""

    slope: float           # V/Hz
    cavity_length: float   # m
    wavelength: float      # m

    def __post_init__(self):
        if self.slope == 0:
            raise ValueError("slope must be nonzero")
        if self.cavity_length <= 0 or self.wavelength <= 0:
            raise ValueError("cavity_length and wavelength must be > 0")


@dataclass(frozen=True)
class NoiseBudget:
    total_rms: float
    band_rms: list = field(default_factory=list)  # (f_lo, f_hi, rms, fraction_of_variance)
    frequency_rms: float | None = None


def ingest_trace(path, time_column: str = "time_s", value_column: str = "value",
                 unit: str = "volt", jitter_tolerance: float = 1e-3) -> NoiseTrace:
    """Read a two-column CSV time series and validate uniform sampling.

    The header row must name both requested columns. Sampling is accepted
    when every interval stays within jitter_tolerance (relative) of the
    median interval.
    """
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise IngestError(f"{path}: {exc.strerror or exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        for col in (time_column, value_column):
            if col not in header:
                raise IngestError(f"{path}: missing column '{col}' in header {header}")
        it, iv = header.index(time_column), header.index(value_column)
        t, v = [], []
        for ln, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                t.append(float(row[it]))
                v.append(float(row[iv]))
            except (ValueError, IndexError) as exc:
                raise IngestError(f"{path}:{ln}: bad row {row!r}") from exc
    if len(v) < 2:
        raise IngestError(f"{path}: need at least 2 samples, got {len(v)}")
    dt = np.diff(np.asarray(t))
    dt_med = float(np.median(dt))
    if dt_med <= 0:
        raise NonUniformSamplingError(f"{path}: time stamps not increasing")
    jitter = float(np.max(np.abs(dt - dt_med))) / dt_med
    if jitter > jitter_tolerance:
        raise NonUniformSamplingError(
            f"{path}: sampling jitter {jitter:.2%} exceeds {jitter_tolerance:.2%}")
    return NoiseTrace(sample_rate=1.0 / dt_med, samples=np.asarray(v), unit=unit)


def save_trace(trace: NoiseTrace, path, time_column: str = "time_s",
               value_column: str = "value") -> None:
    """Write a trace in the same CSV layout ingest_trace reads.

    Values are printed with 17 significant digits so a read-back round
    trip is lossless.
    """
    t = np.arange(trace.samples.size) / trace.sample_rate
    with open(path, "w", newline="") as fh:
        fh.write(f"{time_column},{value_column}\n")
        for ti, vi in zip(t, trace.samples):
            fh.write(f"{ti:.17g},{vi:.17g}\n")


def error_to_length(trace: NoiseTrace, cal: DiscriminatorCalibration,
                    linear_range: float | None = None) -> NoiseTrace:
    """Convert an error-signal voltage trace to cavity length excursion.

    Volts map to frequency detuning through the discriminator slope, and
    detuning to length through dL = dnu L / nu. Samples outside the stated
    linear window are converted anyway but counted in a warning.
    """
    if trace.unit != "volt":
        raise ValueError(f"expected a volt trace, got unit '{trace.unit}'")
    if linear_range is not None:
        n_bad = int(np.count_nonzero(np.abs(trace.samples) > linear_range))
        if n_bad:
            warnings.warn(f"{n_bad} samples outside the linear range +-{linear_range:g} V",
                          stacklevel=2)
    nu = c / cal.wavelength
    meters = trace.samples / cal.slope * cal.cavity_length / nu
    return NoiseTrace(sample_rate=trace.sample_rate, samples=meters, unit="meter")


def estimate_psd(trace: NoiseTrace, segment_length: int = 1024, overlap: float = 0.5,
                 window: str = "hann") -> SpectralDensity:
    """One-sided Welch PSD of a trace.

    Averaged modified periodograms, per-segment mean removal, 50% overlap
    by default. resolution_bandwidth is the grid spacing fs/segment_length;
    the hann equivalent noise bandwidth is 1.5x that.
    """
    n = trace.samples.size
    if segment_length > n:
        raise ValueError(f"segment_length {segment_length} exceeds trace length {n}")
    if not 0 <= overlap < 1:
        raise ValueError("overlap must lie in [0, 1)")
    if window not in _WINDOWS:
        raise ValueError(f"window must be one of {_WINDOWS}")
    f, p = signal.welch(trace.samples, fs=trace.sample_rate, window=window,
                        nperseg=segment_length, noverlap=int(overlap * segment_length),
                        detrend="constant")
    return SpectralDensity(frequencies=f, density=p,
                           resolution_bandwidth=trace.sample_rate / segment_length)


def _band_variance(psd: SpectralDensity, f_lo: float, f_hi: float) -> float:
    # trapezoid on the native grid, with the straddling bins split by
    # linear interpolation at the band edges
    f, s = psd.frequencies, psd.density
    if f_lo == f_hi:
        return 0.0
    inside = (f > f_lo) & (f < f_hi)
    grid = np.concatenate(([f_lo], f[inside], [f_hi]))
    vals = np.interp(grid, f, s)
    return float(np.trapezoid(vals, grid))


def band_rms(psd: SpectralDensity, f_lo: float, f_hi: float) -> tuple[float, float]:
    """RMS in a band and its share of the total variance.

    The total is the integral over the full grid support. Band edges must
    lie inside [0, f_max]; an empty band returns (0, 0).
    """
    f = psd.frequencies
    if not 0 <= f_lo <= f_hi:
        raise ValueError(f"need 0 <= f_lo <= f_hi, got [{f_lo}, {f_hi}]")
    if f_hi > f[-1] * (1 + 1e-12):
        raise ValueError(f"f_hi {f_hi:g} Hz beyond the grid maximum {f[-1]:g} Hz")
    lo = max(f_lo, f[0])
    var = _band_variance(psd, lo, max(f_hi, lo))
    total = _band_variance(psd, f[0], f[-1])
    fraction = var / total if total > 0 else 0.0
    return math.sqrt(var), fraction


def make_budget(psd: SpectralDensity, bands, cavity_length: float | None = None,
                wavelength: float | None = None) -> NoiseBudget:
    """Noise budget over the given (f_lo, f_hi) bands.

    frequency_rms is filled in when the cavity length and wavelength are
    supplied (dnu = nu dL / L applied to the total RMS of a meter PSD).
    """
    total = math.sqrt(_band_variance(psd, psd.frequencies[0], psd.frequencies[-1]))
    rows = []
    for f_lo, f_hi in bands:
        rms, frac = band_rms(psd, f_lo, f_hi)
        rows.append((f_lo, f_hi, rms, frac))
    freq_rms = None
    if cavity_length is not None and wavelength is not None:
        freq_rms = total * (c / wavelength) / cavity_length
    return NoiseBudget(total_rms=total, band_rms=rows, frequency_rms=freq_rms)


def synthesize(model, sample_rate: float, duration: float, seed: int,
               unit: str = "meter") -> NoiseTrace:
    """Gaussian noise trace whose expected one-sided PSD equals the model.

    model is either a vectorized callable S(f) or a SpectralDensity to be
    interpolated (zero outside its grid). Random-phase inverse-FFT
    synthesis: each rfft bin gets a complex normal deviate scaled so that
    E[|X_k|^2] matches the target density; DC and Nyquist stay real.
    Deterministic for a given seed.
    """
    n = int(round(sample_rate * duration))
    if n < 2:
        raise ValueError("duration too short for the sample rate")
    f = np.fft.rfftfreq(n, 1.0 / sample_rate)
    if callable(model):
        s = np.asarray(model(f), dtype=float)
    else:
        psd = model
        if psd.frequencies[-1] > f[-1] * (1 + 1e-9):
            tail = psd.density[psd.frequencies > f[-1]]
            if np.any(tail > 0):
                raise NyquistError(
                    f"model carries power above Nyquist ({f[-1]:g} Hz)")
        s = np.interp(f, psd.frequencies, psd.density, left=0.0, right=0.0)
    if s.shape != f.shape:
        raise ValueError("model must return one value per frequency")
    if np.any(s < 0):
        raise ValueError("model density must be nonnegative")
    rng = np.random.default_rng(seed)
    # interior bins: complex normal with E|X|^2 = S fs N / 2, split over re/im
    amp = np.sqrt(s * sample_rate * n / 4.0)
    x = amp * (rng.standard_normal(f.size) + 1j * rng.standard_normal(f.size))
    x[0] = np.sqrt(s[0] * sample_rate * n) * rng.standard_normal()
    if n % 2 == 0:
        x[-1] = np.sqrt(s[-1] * sample_rate * n) * rng.standard_normal()
    return NoiseTrace(sample_rate=sample_rate, samples=np.fft.irfft(x, n=n), unit=unit)


def separate_laser(total: SpectralDensity, laser: SpectralDensity) -> SpectralDensity:
    """Remove an independently measured laser spectrum in quadrature.

    Assumes the two noise sources are uncorrelated, so densities subtract;
    negative leftovers are clipped to zero. The laser grid is interpolated
    onto the total's grid and must cover it.
    """
    ft, fl = total.frequencies, laser.frequencies
    if ft.shape == fl.shape and np.allclose(ft, fl, rtol=1e-9, atol=0.0):
        laser_on_grid = laser.density
    else:
        rbw = max(total.resolution_bandwidth, laser.resolution_bandwidth)
        if ft[0] < fl[0] - rbw or ft[-1] > fl[-1] + rbw:
            raise GridMismatchError(
                f"laser grid [{fl[0]:g}, {fl[-1]:g}] Hz does not cover "
                f"total grid [{ft[0]:g}, {ft[-1]:g}] Hz")
        laser_on_grid = np.interp(ft, fl, laser.density)
    return SpectralDensity(frequencies=ft,
                           density=np.maximum(total.density - laser_on_grid, 0.0),
                           resolution_bandwidth=total.resolution_bandwidth)


# ---------------------------------------------------------------------------
# reference spectrum: the documented stand-in for the measured cavity noise
# ---------------------------------------------------------------------------

REFERENCE_TOTAL_RMS = 0.36e-10   # m
REFERENCE_BANDS = ((10.0, 200.0), (200.0, 2500.0), (2600.0, 2900.0), (3000.0, 10000.0))
# variance shares of the four components, in REFERENCE_BANDS order
_SHARES = (0.18, 0.75, 0.01, 0.06)
_BUMP_CENTER = 2750.0
_BUMP_HALFWIDTH = 70.0
_ROLL_TAU = 800.0


def reference_length_model():
    """Piecewise cavity length-noise model used by tests and demos.

    Four additive components on [10, 10000] Hz: a 1/f rise below 200 Hz,
    a dominant flat plateau 200-2500 Hz carrying 75% of the variance, a
    truncated Lorentzian resonance bump around 2750 Hz carrying 1%, and an
    exponential roll-off above 3 kHz. Each component is normalized on its
    band analytically and the sum is scaled to 0.36 angstrom total RMS.
    Returns a vectorized callable S(f) in m^2/Hz.
    """
    v_total = REFERENCE_TOTAL_RMS ** 2
    (lo1, hi1), (lo2, hi2), (lo3, hi3), (lo4, hi4) = REFERENCE_BANDS
    a = _SHARES[0] * v_total / math.log(hi1 / lo1)
    b = _SHARES[1] * v_total / (hi2 - lo2)
    hw = _BUMP_HALFWIDTH
    lor_int = hw * (math.atan((hi3 - _BUMP_CENTER) / hw) - math.atan((lo3 - _BUMP_CENTER) / hw))
    c3 = _SHARES[2] * v_total / lor_int
    tau = _ROLL_TAU
    d = _SHARES[3] * v_total / (tau * (1.0 - math.exp(-(hi4 - lo4) / tau)))

    def model(f):
        f = np.asarray(f, dtype=float)
        s = np.zeros_like(f)
        m = (f >= lo1) & (f < hi1)
        s[m] += a / f[m]
        m = (f >= lo2) & (f <= hi2)
        s[m] += b
        m = (f >= lo3) & (f <= hi3)
        s[m] += c3 * hw ** 2 / ((f[m] - _BUMP_CENTER) ** 2 + hw ** 2)
        m = (f >= lo4) & (f <= hi4)
        s[m] += d * np.exp(-(f[m] - lo4) / tau)
        return s

    return model


def save_psd(psd: SpectralDensity, path) -> None:
    """Write a PSD as CSV `freq_hz,density_unit2_per_hz`."""
    with open(path, "w", newline="") as fh:
        fh.write("freq_hz,density_unit2_per_hz\n")
        for fi, si in zip(psd.frequencies, psd.density):
            fh.write(f"{fi:.17g},{si:.17g}\n")


def load_psd(path) -> SpectralDensity:
    """Read a PSD written by save_psd."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise IngestError(f"{path}: empty file") from None
        if header[:2] != ["freq_hz", "density_unit2_per_hz"]:
            raise IngestError(f"{path}: unexpected header {header}")
        rows = [(float(r[0]), float(r[1])) for r in reader if r]
    if len(rows) < 2:
        raise IngestError(f"{path}: need at least 2 rows")
    f = np.array([r[0] for r in rows])
    s = np.array([r[1] for r in rows])
    return SpectralDensity(frequencies=f, density=s,
                           resolution_bandwidth=float(np.median(np.diff(f))))
