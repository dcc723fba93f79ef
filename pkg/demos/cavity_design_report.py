# Walk through the numbers for the reference near-concentric design:
# two R = 5.5 mm mirrors at r = 0.995, probed at 780 nm.

import math

from nckit import cavity

R = 5.5e-3
WAVELENGTH = 780e-9
MIRROR = cavity.MirrorSpec(radius_of_curvature=R, reflectivity=0.995)

print("== mirror set ==")
f = cavity.finesse(MIRROR, MIRROR)
print(f"finesse at r = 0.995            {f:10.2f}")
print(f"reflectivity for finesse 313    {cavity.reflectivity_for_finesse(313.0):10.6f}")

# Spectral numbers depend on length only, so quote them at the nominal
# 11 mm spacing. The linewidth times the finesse gives back the FSR.
geo = cavity.symmetric_cavity(0.011, 0.995, length=0.011)
profile = cavity.spectral_profile(geo)
print("\n== spectrum at L = 11 mm ==")
print(f"free spectral range             {profile.free_spectral_range / 1e9:10.3f} GHz")
print(f"full linewidth                  {profile.full_linewidth / 1e6:10.3f} MHz")
print(f"kappa / 2 pi                    {profile.half_linewidth_kappa / 2 / math.pi / 1e6:10.3f} MHz")

# Mode geometry at the operating point d = 7.8 um from concentricity.
d = 7.8e-6
near = cavity.symmetric_cavity(R, 0.995, critical_distance=d)
mode = cavity.mode_geometry(near, WAVELENGTH)
print(f"\n== mode at d = {d * 1e6:.1f} um ==")
print(f"rayleigh range                  {mode.rayleigh_range * 1e6:10.2f} um")
print(f"waist                           {mode.waist * 1e6:10.3f} um")
print(f"spot size on the mirrors        {mode.waist_at_mirror * 1e6:10.2f} um")
print(f"stability product g1 g2         {mode.stability_product:10.6f}")

# The transverse satellite line is the practical readout of d: measure the
# offset on a scan, invert it back to the critical distance.
off = cavity.transverse_mode_offset(near)
d_back = cavity.critical_distance_from_offset(off, R, near.length)
print(f"\ntransverse mode offset          {off / 1e6:10.1f} MHz")
print(f"inverted critical distance      {d_back * 1e6:10.4f} um   (injected {d * 1e6:.4f})")

print("\n== atom coupling ==")
atom = cavity.AtomLine(wavelength=WAVELENGTH, half_linewidth=2 * math.pi * 3.03e6)
report = cavity.coupling(near, atom)
print(f"mode volume                     {report.mode_volume * 1e18:10.1f} um^3")
print(f"g / 2 pi                        {report.coupling_g / 2 / math.pi / 1e6:10.2f} MHz")
print(f"cooperativity                   {report.cooperativity:10.3f}")

# How close to concentric do we have to push for g = 2 pi x 17.3 MHz?
target_g = 2 * math.pi * 17.3e6
d_target = cavity.solve_critical_distance(R, atom, coupling_g=target_g)
w_target = cavity.mode_geometry(
    cavity.symmetric_cavity(R, 0.995, critical_distance=d_target), WAVELENGTH).waist
print(f"\nd for g = 2 pi x 17.3 MHz       {d_target * 1e6:10.4f} um")
print(f"waist there                     {w_target * 1e6:10.3f} um")

# Length stability needed to stay useful: the lock budget in length units.
print("\n== length noise requirement ==")
for xi in (0.05, 0.10, 0.15):
    dl = cavity.length_noise_for_target(xi, WAVELENGTH, f)
    dnu = cavity.length_noise_to_frequency(dl, geo, WAVELENGTH)
    print(f"xi = {xi:.2f}   dL_rms = {dl * 1e10:6.3f} A   dnu_rms = {dnu / 1e6:6.3f} MHz")
