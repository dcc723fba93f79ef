import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.constants import c

from nckit import lockloop as ll
from nckit import noise
from nckit.cavity import MirrorSpec

R = 5.5e-3
L = 2 * R - 7.8e-6
MIRROR = MirrorSpec(R, 0.995)
PDH = ll.PDHConfig(modulation_frequency=100e6, modulation_depth=1.08,
                   mirrors=(MIRROR, MIRROR), cavity_length=L)
PLANT = ll.PlantModel(dc_gain=1.5e-7, resonance_frequency=2750.0, quality_factor=10.0)
# length discriminator for the slope above; sign absorbed in the demodulator wiring
DGAIN = 2153522566.230875


def ctrl(ki, kp=0.0, fs=250e3):
    return ll.ControllerConfig(integral_gain=ki, proportional_gain=kp, sample_rate=fs)


# --- cavity reflection --------------------------------------------------------

def test_reflection_null_on_resonance():
    assert abs(ll.cavity_reflection(0.0, (MIRROR, MIRROR), L)) < 1e-15


def test_reflection_antiresonance_real_and_maximal():
    fsr = c / (2 * L)
    f_half = complex(ll.cavity_reflection(fsr / 2, (MIRROR, MIRROR), L))
    assert abs(f_half.imag) < 1e-12
    sweep = np.abs(ll.cavity_reflection(np.linspace(0, fsr, 20001), (MIRROR, MIRROR), L))
    assert abs(f_half.real) >= sweep.max() - 1e-12


def test_reflection_transmission_energy_conservation():
    fsr = c / (2 * L)
    det = np.linspace(-fsr, fsr, 4001)
    refl2 = np.abs(ll.cavity_reflection(det, (MIRROR, MIRROR), L)) ** 2
    trans = ll.cavity_transmission_intensity(det, (MIRROR, MIRROR), L)
    assert np.max(np.abs(refl2 + trans - 1.0)) < 1e-12


# --- PDH error signal -----------------------------------------------------------

def test_pdh_null_and_antisymmetry():
    assert ll.pdh_error(0.0, PDH) == 0.0
    det = np.linspace(1.0, 200e6, 3000)
    eps_p = ll.pdh_error(det, PDH)
    eps_m = ll.pdh_error(-det, PDH)
    peak = np.max(np.abs(eps_p))
    assert np.max(np.abs(eps_p + eps_m)) < 1e-12 * peak


def demodulated_error(delta, omega, lo_sign=1.0, beta=1.08):
    # time-domain oracle: build the reflected first-order-sideband field,
    # square-law detect, demodulate against sin(lo_sign * omega t)
    from scipy.special import j0, j1
    t = np.linspace(0.0, 1.0 / omega, 4096, endpoint=False)
    f0 = complex(ll.cavity_reflection(delta, (MIRROR, MIRROR), L))
    fp = complex(ll.cavity_reflection(delta + omega, (MIRROR, MIRROR), L))
    fm = complex(ll.cavity_reflection(delta - omega, (MIRROR, MIRROR), L))
    field = (j0(beta) * f0
             + j1(beta) * fp * np.exp(1j * 2 * np.pi * omega * t)
             - j1(beta) * fm * np.exp(-1j * 2 * np.pi * omega * t))
    power = np.abs(field) ** 2
    return 2.0 * float(np.mean(power * np.sin(lo_sign * 2 * np.pi * omega * t)))


def test_pdh_matches_time_domain_demodulation():
    for delta in (2e6, 11e6, 40e6, -7e6):
        # detected quadrature is twice the analytic expression
        assert_allclose(demodulated_error(delta, 100e6) / 2.0,
                        ll.pdh_error(delta, PDH), rtol=1e-9, atol=1e-15)


def test_pdh_slope_sign_follows_demodulation_sign():
    # flipping the sign of the demodulation frequency at the mixer flips
    # the whole error signal, hence the slope
    h = PDH.full_linewidth / 1e4
    slope_pos = (demodulated_error(h, 100e6) - demodulated_error(-h, 100e6)) / (2 * h)
    slope_neg = (demodulated_error(h, 100e6, lo_sign=-1.0)
                 - demodulated_error(-h, 100e6, lo_sign=-1.0)) / (2 * h)
    assert_allclose(slope_neg, -slope_pos, rtol=1e-9)
    # whereas substituting -Omega into both sideband arguments and the LO
    # together leaves the expression unchanged: Im[X - Y] is even there
    def eps(delta, omega):
        f0 = ll.cavity_reflection(delta, (MIRROR, MIRROR), L)
        fp = ll.cavity_reflection(delta + omega, (MIRROR, MIRROR), L)
        fm = ll.cavity_reflection(delta - omega, (MIRROR, MIRROR), L)
        return np.imag(f0 * np.conj(fp) - np.conj(f0) * fm)
    assert_allclose(eps(11e6, -100e6), eps(11e6, 100e6), rtol=1e-12)


def test_discriminator_slope_value_and_sign():
    slope = ll.discriminator_slope(PDH)
    assert_allclose(slope, -6.158968010785635e-08, rtol=1e-9)
    assert slope < 0
    assert_allclose(abs(ll.length_discriminator(slope, L, 780e-9)), DGAIN, rtol=1e-9)


def test_slope_scales_with_finesse():
    # halving finesse, i.e. dropping to the reflectivity that gives F/2,
    # should halve the slope within 10%
    from nckit.cavity import finesse, reflectivity_for_finesse
    f1 = finesse(MIRROR, MIRROR)
    m_half = MirrorSpec(R, reflectivity_for_finesse(f1 / 2))
    pdh_half = ll.PDHConfig(100e6, 1.08, (m_half, m_half), L)
    ratio = ll.discriminator_slope(pdh_half) / ll.discriminator_slope(PDH)
    assert_allclose(ratio, 0.5, atol=0.05)


def test_degenerate_slope_unresolved_sidebands():
    wide = MirrorSpec(R, 0.5)  # linewidth far above 100 MHz
    with pytest.raises(ll.DegenerateSlopeError):
        ll.discriminator_slope(ll.PDHConfig(100e6, 1.08, (wide, wide), L))


def test_linear_window_value_and_oracle():
    win = ll.linear_window(PDH)
    assert_allclose(win, 3648994.16, rtol=1e-4)
    assert_allclose(win / PDH.full_linewidth, 0.16771, atol=2e-4)
    # independent dense-scan oracle for the first 10% departure
    slope = ll.discriminator_slope(PDH)
    grid = np.linspace(1e3, 10e6, 200_000)
    dev = np.abs(ll.pdh_error(grid, PDH) - slope * grid) / (abs(slope) * grid)
    first = grid[np.nonzero(dev >= 0.10)[0][0]]
    assert abs(win - first) < 2 * (grid[1] - grid[0])


def test_error_peak_sits_near_half_linewidth():
    # the usable monotone lobe extends to the signal extremum, which lands
    # at about half the linewidth
    det = np.linspace(1.0, 2 * PDH.full_linewidth, 4000)
    peak = det[np.argmax(np.abs(ll.pdh_error(det, PDH)))]
    assert_allclose(peak, 0.5 * PDH.full_linewidth, rtol=0.1)


def test_pdh_config_validation():
    with pytest.raises(ValueError):
        ll.PDHConfig(0.0, 1.08, (MIRROR, MIRROR), L)
    with pytest.raises(ValueError):
        ll.PDHConfig(100e6, 1.6, (MIRROR, MIRROR), L)
    with pytest.raises(ValueError):
        ll.PDHConfig(100e6, 1.08, (MIRROR, MirrorSpec(R, 0.99)), L)


# --- transfer functions ----------------------------------------------------------

def test_plant_low_frequency_flat():
    h = complex(ll.plant_response(PLANT, 10.0))
    assert_allclose(abs(h), PLANT.dc_gain, rtol=2e-5)
    assert abs(math.degrees(np.angle(h))) < 0.05


def test_plant_resonance_point():
    h = complex(ll.plant_response(PLANT, 2750.0))
    assert_allclose(abs(h), PLANT.quality_factor * PLANT.dc_gain, rtol=1e-12)
    assert_allclose(math.degrees(np.angle(h)), -90.0, atol=1e-9)


def test_plant_peak_near_2750():
    f = np.linspace(2000, 3500, 30001)
    mag = np.abs(ll.plant_response(PLANT, f))
    f_peak = f[np.argmax(mag)]
    # 2nd-order peak sits at f0 sqrt(1 - 1/(2Q^2)), a hair under f0
    assert_allclose(f_peak, 2750.0 * math.sqrt(1 - 1 / 200), rtol=1e-3)
    assert 2650 < f_peak < 2800


def test_plant_delay_adds_linear_phase():
    delayed = ll.PlantModel(1.5e-7, 2750.0, 10.0, delay=100e-6)
    f = np.array([100.0, 1000.0])
    base = ll.plant_response(PLANT, f)
    shifted = ll.plant_response(delayed, f)
    assert_allclose(np.abs(shifted), np.abs(base), rtol=1e-12)
    extra = np.angle(shifted / base)
    assert_allclose(extra, -2 * np.pi * f * 100e-6, rtol=1e-9)


def test_plant_validation():
    with pytest.raises(ValueError):
        ll.PlantModel(1.5e-7, 2750.0, 0.4)
    with pytest.raises(ValueError):
        ll.PlantModel(1.5e-7, 2750.0, 10.0, delay=-1e-6)
    with pytest.raises(ValueError):
        ll.PlantModel(-1.0, 2750.0, 10.0)


def test_bode_pure_integrator():
    table = ll.bode_sweep(lambda f: ll.controller_response(ctrl(10.0), f),
                          np.geomspace(1.0, 1e4, 41))
    f, mag, ph = table[:, 0], table[:, 1], table[:, 2]
    slopes = np.diff(mag) / np.diff(np.log10(f))
    assert_allclose(slopes, -20.0, atol=1e-9)
    assert_allclose(ph, -90.0, atol=1e-9)


def test_bode_composed_phase_walks_to_minus_270():
    def system(f):
        return ll.open_loop_response(f, ctrl(2.909), PLANT, DGAIN)
    table = ll.bode_sweep(system, np.geomspace(1.0, 1e5, 501))
    ph = table[:, 2]
    assert_allclose(ph[0], -90.0, atol=1.0)
    assert_allclose(ph[-1], -270.0, atol=2.0)
    assert np.all(np.diff(table[:, 0]) > 0)


def test_bode_rejects_bad_grid():
    with pytest.raises(ValueError):
        ll.bode_sweep(lambda f: f, np.array([1.0, 1.0, 2.0]))
    with pytest.raises(ValueError):
        ll.bode_sweep(lambda f: f, np.array([-1.0, 2.0]))


def test_save_bode_format(tmp_path):
    table = ll.bode_sweep(lambda f: ll.plant_response(PLANT, f),
                          np.geomspace(10, 1e4, 7))
    ll.save_bode(table, tmp_path / "bode.csv")
    lines = (tmp_path / "bode.csv").read_text().splitlines()
    assert lines[0] == "freq_hz,mag_db,phase_deg"
    assert len(lines) == 8


# --- loop analysis -----------------------------------------------------------------

def test_loop_analysis_default_configuration():
    an = ll.loop_analysis(ctrl(2.9089944902533533), PLANT, DGAIN)
    assert_allclose(an.crossover_frequency, 150.0, rtol=1e-6)
    assert_allclose(an.phase_margin, 89.6865, atol=1e-3)
    assert 2200.0 <= an.max_bandwidth_at_margin <= 2800.0
    assert_allclose(an.max_bandwidth_at_margin, 2522.136, rtol=1e-4)


def test_loop_analysis_margin_target_unachievable():
    an = ll.loop_analysis(ctrl(2.909), PLANT, DGAIN, margin_target=180.0)
    assert an.max_bandwidth_at_margin == 0.0


def test_loop_analysis_max_bandwidth_gain_independent():
    a = ll.loop_analysis(ctrl(0.5), PLANT, DGAIN)
    b = ll.loop_analysis(ctrl(5.0), PLANT, DGAIN)
    assert_allclose(a.max_bandwidth_at_margin, b.max_bandwidth_at_margin, rtol=1e-9)


def test_phase_margin_monotone_in_gain():
    # crossovers kept below the plant resonance; past f0 the margin
    # legitimately goes negative
    gains = np.geomspace(0.05, 16.0, 12)
    margins = [ll.loop_analysis(ctrl(g), PLANT, DGAIN).phase_margin for g in gains]
    assert np.all(np.diff(margins) < 0)
    assert all(0 < m <= 180 for m in margins)


def test_no_crossover_for_tiny_gain():
    with pytest.raises(ll.NoCrossoverError):
        ll.loop_analysis(ctrl(1e-4), PLANT, DGAIN)


def test_integral_gain_for_crossover_round_trip():
    for fc in (30.0, 150.0, 400.0):
        ki = ll.integral_gain_for_crossover(fc, PLANT, DGAIN)
        an = ll.loop_analysis(ctrl(ki), PLANT, DGAIN)
        assert_allclose(an.crossover_frequency, fc, rtol=1e-6)


def test_controller_validation():
    with pytest.raises(ValueError):
        ll.ControllerConfig(integral_gain=-1.0)
    ll.ControllerConfig(integral_gain=0.0)  # explicit open loop is allowed


# --- closed-loop simulation -----------------------------------------------------

FS = 250e3


def reference_trace(seed=77, duration=1.0):
    return noise.synthesize(noise.reference_length_model(), FS, duration, seed=seed)


def test_simulate_zero_gain_passthrough():
    tr = reference_trace(duration=0.2)
    res, budget = ll.simulate_lock(tr, ctrl(0.0), PLANT, DGAIN)
    assert np.array_equal(res.samples, tr.samples)
    assert res.unit == "meter"
    assert budget.total_rms > 0


def test_simulate_small_gain_suppresses_dc():
    tr = reference_trace()
    offset = 1e-10
    shifted = noise.NoiseTrace(FS, tr.samples + offset, unit="meter")
    res, _ = ll.simulate_lock(shifted, ctrl(2.9089944902533533), PLANT, DGAIN)
    tail = res.samples[-res.samples.size // 5:]
    assert abs(float(np.mean(tail))) < 0.01 * offset


def test_simulate_leaves_band_above_10x_crossover():
    tr = reference_trace()
    ki = ll.integral_gain_for_crossover(50.0, PLANT, DGAIN)
    res, _ = ll.simulate_lock(tr, ctrl(ki), PLANT, DGAIN)
    pin = noise.estimate_psd(tr, segment_length=4096)
    pres = noise.estimate_psd(res, segment_length=4096)
    hi_in, _ = noise.band_rms(pin, 500.0, 10000.0)
    hi_out, _ = noise.band_rms(pres, 500.0, 10000.0)
    assert abs(hi_out / hi_in - 1.0) < 0.05


def test_simulate_matches_sensitivity_prediction():
    tr = reference_trace()
    controller = ctrl(2.9089944902533533)
    res, _ = ll.simulate_lock(tr, controller, PLANT, DGAIN)
    pin = noise.estimate_psd(tr, segment_length=4096)
    pres = noise.estimate_psd(res, segment_length=4096)
    f = pin.frequencies
    model_mask = noise.reference_length_model()(f) > 0
    loop = ll.open_loop_response(f[model_mask], controller, PLANT, DGAIN)
    predicted = np.abs(1.0 / (1.0 + loop)) ** 2 * pin.density[model_mask]
    rel = (pres.density[model_mask] - predicted) / predicted
    assert math.sqrt(float(np.mean(rel ** 2))) < 0.10


def test_simulate_reports_reference_bands():
    tr = reference_trace(duration=0.2)
    _, budget = ll.simulate_lock(tr, ctrl(2.909), PLANT, DGAIN)
    assert [(lo, hi) for lo, hi, _, _ in budget.band_rms] == list(ll.REFERENCE_BUDGET_BANDS)
    for _, _, _, frac in budget.band_rms:
        assert 0.0 <= frac <= 1.0


def test_simulate_margin_limited_gain_diverges():
    # the 60 degree phase ceiling nominally allows a 2.5 kHz crossover, but
    # the Q=10 resonance re-crosses unity with the phase already past -180,
    # so that gain has no gain margin left. The honest outcome is
    # divergence, which the simulation must report, not hide.
    tr = reference_trace(duration=0.5)
    an = ll.loop_analysis(ctrl(1.0), PLANT, DGAIN)
    ki_max = ll.integral_gain_for_crossover(an.max_bandwidth_at_margin, PLANT, DGAIN)
    with pytest.raises(ll.UnstableLoopError, match="integral_gain"):
        ll.simulate_lock(tr, ctrl(ki_max), PLANT, DGAIN)


def test_simulate_stable_gain_reduces_rms():
    tr = reference_trace()
    res, _ = ll.simulate_lock(tr, ctrl(2.9089944902533533), PLANT, DGAIN)
    ratio = float(np.std(res.samples) / np.std(tr.samples))
    assert ratio < 1.0
    assert_allclose(ratio, 0.926, atol=0.02)


def test_simulate_with_delay_runs():
    delayed = ll.PlantModel(1.5e-7, 2750.0, 10.0, delay=20e-6)
    tr = reference_trace(duration=0.2)
    res, _ = ll.simulate_lock(tr, ctrl(2.909), delayed, DGAIN)
    assert res.samples.size == tr.samples.size
    assert np.all(np.isfinite(res.samples))


def test_simulate_input_validation():
    tr = reference_trace(duration=0.1)
    volt_trace = noise.NoiseTrace(FS, tr.samples, unit="volt")
    with pytest.raises(ValueError, match="meter"):
        ll.simulate_lock(volt_trace, ctrl(2.909), PLANT, DGAIN)
    with pytest.raises(ValueError, match="sample_rate"):
        ll.simulate_lock(tr, ctrl(2.909, fs=100e3), PLANT, DGAIN)
    slow = noise.NoiseTrace(20e3, tr.samples[:2000], unit="meter")
    with pytest.raises(ValueError, match="20x"):
        ll.simulate_lock(slow, ctrl(2.909, fs=20e3), PLANT, DGAIN)
