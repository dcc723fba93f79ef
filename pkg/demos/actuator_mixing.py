# Three piezo stacks under a mirror mount share the work of length, tip
# and tilt corrections. This script runs a command through the mixing
# matrix, checks what the frame actually does, and shows where the
# hardware range runs out.

import numpy as np

from nckit import alignment

cfg = alignment.MixerConfig()
frame = alignment.default_frame()
print(f"gain {cfg.gain:.0f} V/m, limit {cfg.voltage_limit:.0f} V, "
      f"stroke {cfg.expansion_per_volt * cfg.voltage_limit * 1e6:.0f} um")

# A mixed correction around the 50 V midpoint. The midpoint matters:
# bipolar tip/tilt needs headroom on both sides.
cmd = alignment.ActuatorCommand(delta_length=1.0e-6, tip=-0.4e-6, tilt=0.25e-6)
v = alignment.mix_commands(cmd, cfg, midpoint=50.0)
print(f"\ncommand  dL {cmd.delta_length * 1e6:+.3f} um   tip {cmd.tip * 1e6:+.3f} um   "
      f"tilt {cmd.tilt * 1e6:+.3f} um")
print(f"volts    A {v.v_a:7.3f}   B {v.v_b:7.3f}   C {v.v_c:7.3f}")

back = alignment.unmix_voltages(v, cfg, midpoint=50.0)
print(f"unmixed  dL {back.delta_length * 1e6:+.3f} um   tip {back.tip * 1e6:+.3f} um   "
      f"tilt {back.tilt * 1e6:+.3f} um")

# Feed the voltages through the stack model and fit the plane of the
# three actuator tips. The pose slopes should reproduce the command
# scaled by the frame size.
exps = [alignment.actuator_expansion(x, cfg)[0] for x in (v.v_a, v.v_b, v.v_c)]
tip, tilt, mean = alignment.frame_pose(exps, frame)
print(f"\nframe pose: tip {tip:.4e} rad, tilt {tilt:.4e} rad, mean lift {mean * 1e6:.3f} um")

# Saturation is opt-in. Ask for too much tip around a low midpoint and
# channel B runs past the rail.
big = alignment.ActuatorCommand(0.0, 4.0e-6, 0.0)
try:
    alignment.mix_commands(big, cfg, midpoint=10.0, validate=True)
except alignment.SaturationError as err:
    names = [n for n, _ in err.channels]
    print(f"\nsaturated channels {names}: {err}")

# Walking the cavity sideways: a transverse offset of the axis needs a
# compensating tilt of one mirror. Near concentricity the lever arm is
# tiny, so the angles get steep.
print("\ntransverse walk at d = 7.8 um:")
for dx_um in (0.1, 0.5, 1.0):
    state = alignment.transverse_compensation(dx_um * 1e-6, 7.8e-6, 5.5e-3)
    print(f"  dx = {dx_um:4.1f} um  axis rotation {state.axis_rotation * 1e3:7.3f} mrad  "
          f"mirror tilt {state.mirror_tilt_correction * 1e6:7.2f} urad")

# Expected transverse displacement for different ways of holding the mount.
print("\ndisplacement budget by support:")
for support in alignment.SupportConfiguration:
    budget = alignment.displacement_budget(support)
    print(f"  {support.value:14s} {budget * 1e6:6.2f} um")
