# From an error-signal trace to a length-noise budget. Everything here
# runs on synthetic data shaped like the bench: a documented length-noise
# model plus the PDH discriminator calibration.

import tempfile
from pathlib import Path

import numpy as np
from scipy.constants import c

from nckit import noise

FS = 25e3
CAL = noise.DiscriminatorCalibration(slope=-6.2e-8, cavity_length=11e-3,
                                     wavelength=780e-9)

# The documented model: 1/f rise, dominant plateau 200-2500 Hz, a small
# resonance bump at 2750 Hz, an exponential roll-off above 3 kHz.
model = noise.reference_length_model()
trace = noise.synthesize(model, FS, duration=8.0, seed=2)
print(f"synthesized {trace.samples.size} samples at {FS / 1e3:.0f} kS/s, "
      f"rms {np.sqrt(np.mean(trace.samples ** 2)) * 1e10:.3f} A")

# A scope would hand us volts. Fake that by running the length trace
# backwards through the calibration, then recover it the proper way.
dnu = trace.samples * (c / CAL.wavelength) / CAL.cavity_length
volts = noise.NoiseTrace(FS, dnu * CAL.slope, unit="volt")
recovered = noise.error_to_length(volts, CAL)
print(f"volt trace round trip, max error "
      f"{np.max(np.abs(recovered.samples - trace.samples)):.2e} m")

psd = noise.estimate_psd(recovered, segment_length=16384)
print(f"\nPSD grid {psd.frequencies.size} bins, "
      f"resolution {psd.resolution_bandwidth:.3f} Hz")

budget = noise.make_budget(psd, noise.REFERENCE_BANDS,
                           cavity_length=CAL.cavity_length,
                           wavelength=CAL.wavelength)
print(f"total rms {budget.total_rms * 1e10:.4f} A "
      f"({budget.frequency_rms / 1e6:.3f} MHz equivalent)")
print("band breakdown:")
for lo, hi, rms, frac in budget.band_rms:
    print(f"  {lo:7.0f} - {hi:7.0f} Hz   {rms * 1e10:7.4f} A   {frac * 100:5.1f}%")

# Split off the laser contribution. The laser rides at a flat equivalent
# length floor; subtracting its PSD leaves the cavity part.
floor = (0.11e6 * CAL.cavity_length / (c / CAL.wavelength)) ** 2 / (10000.0 - 10.0)
laser = noise.SpectralDensity(psd.frequencies,
                              np.where((psd.frequencies >= 10) & (psd.frequencies <= 10000),
                                       floor, 0.0),
                              psd.resolution_bandwidth)
cavity_only = noise.separate_laser(psd, laser)
t_all, _ = noise.band_rms(psd, 200.0, 2500.0)
t_cav, _ = noise.band_rms(cavity_only, 200.0, 2500.0)
print(f"\nplateau band rms: total {t_all * 1e10:.4f} A, "
      f"cavity alone {t_cav * 1e10:.4f} A")

# Budgets travel as CSV.
with tempfile.TemporaryDirectory() as tmp:
    out = Path(tmp) / "length_psd.csv"
    noise.save_psd(psd, out)
    again = noise.load_psd(out)
    print(f"\nsaved and reloaded PSD, max density delta "
          f"{np.max(np.abs(again.density - psd.density)):.2e}")
