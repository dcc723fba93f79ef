# Tour of the length lock: PDH discriminator, open-loop shaping, the
# bandwidth ceiling set by the mount resonance, and a time-domain run
# against the documented length-noise model.

import math

import numpy as np

from nckit import lockloop as ll
from nckit import noise
from nckit.cavity import MirrorSpec

R = 5.5e-3
L = 2 * R - 7.8e-6
WAVELENGTH = 780e-9
FS = 250e3

pdh = ll.PDHConfig(modulation_frequency=100e6, modulation_depth=1.08,
                   mirrors=(MirrorSpec(R, 0.995), MirrorSpec(R, 0.995)),
                   cavity_length=L)

print("== PDH discriminator ==")
print(f"cavity linewidth                {pdh.full_linewidth / 1e6:10.3f} MHz")
slope = ll.discriminator_slope(pdh)
print(f"slope at line center            {slope:10.3e} V/Hz")
window = ll.linear_window(pdh)
print(f"10% linear window               {window / 1e6:10.3f} MHz "
      f"({window / pdh.full_linewidth:.3f} of the linewidth)")

# Length units are what the loop actually corrects.
dgain = abs(ll.length_discriminator(slope, L, WAVELENGTH))
print(f"length discriminator            {dgain:10.3e} V/m")

# The mount behaves as a 2750 Hz resonance with Q near 10. An integrator
# crossing well below that leaves a comfortable margin.
plant = ll.PlantModel(dc_gain=1.5e-7, resonance_frequency=2750.0,
                      quality_factor=10.0)
ki = ll.integral_gain_for_crossover(150.0, plant, dgain)
controller = ll.ControllerConfig(integral_gain=ki, sample_rate=FS)
analysis = ll.loop_analysis(controller, plant, dgain)
print("\n== loop at a 150 Hz crossover ==")
print(f"integral gain                   {ki:10.4f} 1/s")
print(f"crossover                       {analysis.crossover_frequency:10.1f} Hz")
print(f"phase margin                    {analysis.phase_margin:10.1f} deg")
print(f"max bandwidth at 60 deg margin  {analysis.max_bandwidth_at_margin:10.1f} Hz")

# Pushing the crossover to the phase ceiling is not automatically safe.
# The resonance lifts |L| back through unity past the phase crossing, so
# the gain that would reach the ceiling diverges in simulation. The
# ceiling is a phase statement, not a guarantee of stability at that gain.
trace = noise.synthesize(noise.reference_length_model(), FS, 1.0, seed=77)
ki_max = ll.integral_gain_for_crossover(analysis.max_bandwidth_at_margin, plant, dgain)
hot = ll.ControllerConfig(integral_gain=ki_max, sample_rate=FS)
print(f"\ngain for a {analysis.max_bandwidth_at_margin:.0f} Hz crossover: {ki_max:.3f} 1/s")
try:
    ll.simulate_lock(trace, hot, plant, dgain)
    print("locked at the ceiling")
except ll.UnstableLoopError as err:
    print(f"diverged, as the gain margin predicts: {err}")

print("\n== time-domain run at the 150 Hz crossover ==")
residual, budget = ll.simulate_lock(trace, controller, plant, dgain)
rms_in = math.sqrt(float(np.mean(trace.samples ** 2)))
rms_out = math.sqrt(float(np.mean(residual.samples ** 2)))
print(f"input rms                       {rms_in * 1e10:10.4f} A")
print(f"residual rms                    {rms_out * 1e10:10.4f} A "
      f"({rms_out / rms_in * 100:.1f}% of input)")
print("residual budget:")
for lo, hi, rms, frac in budget.band_rms:
    print(f"  {lo:7.0f} - {hi:7.0f} Hz   {rms * 1e10:7.4f} A   {frac * 100:5.1f}%")

# Cross-check against the analytic sensitivity function: the residual PSD
# should be |1 / (1 + L)|^2 times the input PSD.
pin = noise.estimate_psd(trace, segment_length=4096)
pres = noise.estimate_psd(residual, segment_length=4096)
mask = noise.reference_length_model()(pin.frequencies) > 0
loop = ll.open_loop_response(pin.frequencies[mask], controller, plant, dgain)
predicted = np.abs(1.0 / (1.0 + loop)) ** 2 * pin.density[mask]
rel = (pres.density[mask] - predicted) / predicted
print(f"\nresidual PSD vs sensitivity prediction: "
      f"{math.sqrt(float(np.mean(rel ** 2))) * 100:.2f}% rms over bins")
