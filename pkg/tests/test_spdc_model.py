import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from polsource import spdc_model as sm
from polsource.errors import ConfigurationError, DegenerateFilterError

from conftest import random_amplitude

T0, TI, TII = sm.ProcessKind.TYPE0, sm.ProcessKind.TYPE_I, sm.ProcessKind.TYPE_II


def make_spec(b1h=0.0, b1v=0.0, b2h=2e-24, b2v=2e-24, length=1.05e-3, slope=-4000.0):
    procs = {k: sm.ProcessParams(816.7, 1e-10, slope) for k in (T0, TI, TII)}
    return sm.WaveguideSpec(
        length=length, processes=procs,
        dispersion=sm.DispersionParams({"H": b1h, "V": b1v}, {"H": b2h, "V": b2v}),
    )


def k_oracle(pol, omega, spec, omega0):
    """Polynomial dispersion relation k(omega) around omega0 (k0 arbitrary)."""
    d = omega - omega0
    k0 = {"H": 1.1e7, "V": 1.2e7}[pol]
    return k0 + spec.dispersion.beta1[pol] * d + 0.5 * spec.dispersion.beta2[pol] * d**2


def test_process_labels():
    assert T0.polarizations == ("V", "V")
    assert TI.polarizations == ("H", "H")
    assert TII.channel == "HV"
    assert T0.co_polarized and TI.co_polarized and not TII.co_polarized
    assert sm.ProcessKind.parse("typeII") is TII
    with pytest.raises(ConfigurationError):
        sm.ProcessKind.parse("type3")


def test_phase_mismatch_zero_at_pm():
    spec = make_spec()
    assert sm.phase_mismatch(TI, 0.0, 816.7, spec) == 0.0


def test_type0_is_pure_quadratic():
    spec = make_spec(b1h=3e-9, b1v=5e-9, b2v=2.5e-24)
    om = np.array([1e13, -3e13])
    np.testing.assert_allclose(sm.phase_mismatch(T0, om, 816.7, spec), -2.5e-24 * om**2, rtol=1e-14)


def test_type_ii_matches_dispersion_oracle():
    spec = make_spec(b1h=11.046e-9, b1v=11.0e-9, b2h=2.1e-24, b2v=2.3e-24)
    omega0 = 1.15e15
    lam_p = 816.9
    dk0 = sm.pump_mismatch(TII, lam_p, spec)
    # choose k_p so the degenerate mismatch equals dk0
    kp = dk0 + k_oracle("H", omega0, spec, omega0) + k_oracle("V", omega0, spec, omega0)
    om = np.linspace(-5e13, 5e13, 11)
    oracle = kp - k_oracle("H", omega0 + om, spec, omega0) - k_oracle("V", omega0 - om, spec, omega0)
    got = sm.phase_mismatch(TII, om, lam_p, spec)
    np.testing.assert_allclose(got, oracle, rtol=1e-9, atol=1e-6)
    # the linear part flips sign under Omega -> -Omega
    lin = got - sm.phase_mismatch(TII, -om, lam_p, spec)
    np.testing.assert_allclose(lin, -2 * 0.046e-9 * om, rtol=1e-6)


def test_pump_detuning_is_affine():
    spec = make_spec(slope=-3210.0)
    lam = np.array([815.0, 816.7, 818.1])
    dk0 = sm.pump_mismatch(T0, lam, spec)
    np.testing.assert_allclose(np.diff(dk0) / np.diff(lam), -3210.0, rtol=1e-12)
    assert dk0[1] == 0.0


def test_undeclared_process_is_config_error():
    spec = sm.WaveguideSpec(processes={T0: sm.ProcessParams(816.7, 1e-10, -1.0)})
    with pytest.raises(ConfigurationError):
        sm.phase_mismatch(TII, 0.0, 816.7, spec)


@pytest.mark.parametrize("bad", [
    dict(efficiency=-1.0), dict(detuning_slope=0.0), dict(pm_wavelength_nm=0.0),
])
def test_process_params_validation(bad):
    args = dict(pm_wavelength_nm=816.7, efficiency=1e-10, detuning_slope=-4000.0) | bad
    with pytest.raises(ConfigurationError):
        sm.ProcessParams(**args)


def test_dispersion_needs_some_gvd():
    with pytest.raises(ConfigurationError):
        sm.DispersionParams({"H": 0.0, "V": 0.0}, {"H": 0.0, "V": 0.0})


def test_grid_is_exactly_symmetric():
    g = sm.SpectralGrid.for_pump(816.7, 2.4e14, 4096)
    assert np.array_equal(g.omega[::-1], -g.omega)
    with pytest.raises(ValueError):
        sm.SpectralGrid.for_pump(816.7, 2.4e14, 1)


def test_flat_amplitude_when_mismatch_vanishes():
    # GVD small enough that dk L / 2 ~ 1e-20 over the grid
    spec = make_spec(b2h=1e-50, b2v=1e-50)
    g = sm.SpectralGrid.for_pump(816.7, 1e14, 1001)
    a = sm.joint_amplitude(TI, g, 816.7, spec)
    np.testing.assert_allclose(a.intensity, 1 / (2 * g.half_span), rtol=1e-12)


def test_co_polarized_evenness(spec, grid):
    for kind in (T0, TI):
        a = sm.joint_amplitude(kind, grid, spec.process(kind).pm_wavelength_nm, spec)
        np.testing.assert_allclose(np.abs(a.values), np.abs(a.values[::-1]), atol=1e-12)
        assert abs(a.norm() - 1) < 1e-10
        assert not a.truncated


def test_type_ii_reflection_is_bitwise(spec):
    g = sm.SpectralGrid.for_pump(812.92, 2.4e14, 4096)
    hv, vh = sm.type_ii_channels(g, 812.92, spec)
    assert vh.channel == "VH"
    assert np.array_equal(vh.values, hv.values[::-1])
    assert not np.array_equal(hv.intensity, vh.intensity)


def numeric_fwhm(x, y):
    half = y.max() / 2
    above = np.where(y >= half)[0]
    i, j = above[0], above[-1]
    # linear interpolation at both crossings
    xl = np.interp(half, [y[i - 1], y[i]], [x[i - 1], x[i]])
    xr = np.interp(half, [y[j + 1], y[j]], [x[j + 1], x[j]])
    return xr - xl


def test_walkoff_width_scales_inversely_with_length():
    delta = 1e-10
    fw = []
    for length in (1e-3, 2e-3):
        spec = make_spec(b1h=delta, b1v=0.0, b2h=1e-40, b2v=-1e-40, length=length)
        g = sm.SpectralGrid.for_pump(816.7, 2e14, 200001)
        a = sm.joint_amplitude(TII, g, 816.7, spec)
        fw.append(numeric_fwhm(g.omega, a.intensity))
    # sinc^2(x) = 1/2 at x = 1.391557...
    x_half = 1.3915573
    assert fw[0] == pytest.approx(4 * x_half / (delta * 1e-3), rel=1e-4)
    assert fw[1] / fw[0] == pytest.approx(0.5, rel=1e-4)


def test_truncation_flag():
    spec = make_spec()
    g = sm.SpectralGrid.for_pump(816.7, 1e13, 256)
    assert sm.joint_amplitude(TI, g, 816.7, spec).truncated


def test_spectral_intensity_flat_and_peak_normalized(spec, grid):
    flat = sm.JointAmplitude("HH", grid, np.full(grid.n, 1 / np.sqrt(2 * grid.half_span), complex))
    (wl, y), = sm.spectral_intensity([flat]).values()
    np.testing.assert_allclose(y, 1.0)
    np.testing.assert_allclose(wl, 2e9 * np.pi * sm.C_LIGHT / (grid.omega0 + grid.omega))


def test_type0_and_typei_curves_nearly_coincide(spec, grid):
    # shipped dispersion has beta2 differing by < 5 %
    b2 = spec.dispersion.beta2
    assert abs(b2["V"] / b2["H"] - 1) < 0.05
    amps = [sm.joint_amplitude(k, grid, 816.7, spec) for k in (TI, T0)]
    curves = sm.spectral_intensity(amps)
    assert np.max(np.abs(curves["HH"][1] - curves["VV"][1])) < 0.05


def test_type_ii_curves_mirror_about_degeneracy(spec):
    g = sm.SpectralGrid.for_pump(812.92, 2.4e14, 4096)
    curves = sm.spectral_intensity(list(sm.type_ii_channels(g, 812.92, spec)))
    np.testing.assert_array_equal(curves["VH"][1], curves["HV"][1][::-1])


def test_shg_tuning_curve_shape(spec):
    lam_pm = spec.process(T0).pm_wavelength_nm
    slope = spec.process(T0).detuning_slope
    curve = sm.shg_tuning_curve(T0, (lam_pm - 3, lam_pm + 3), 601, spec, axis="pump")
    assert curve[300, 0] == pytest.approx(lam_pm)
    assert curve[300, 1] == pytest.approx(1.0)
    np.testing.assert_allclose(curve[:, 1], curve[::-1, 1], atol=1e-12)
    zero = 2 * np.pi / (abs(slope) * spec.length)
    at = sm.shg_tuning_curve(T0, (lam_pm + zero, lam_pm + zero + 1), 2, spec, axis="pump")
    assert at[0, 1] < 1e-25
    # fundamental axis: same curve against twice the wavelength
    fund = sm.shg_tuning_curve(T0, (2 * lam_pm - 6, 2 * lam_pm + 6), 601, spec)
    np.testing.assert_allclose(fund[:, 1], curve[:, 1], atol=1e-12)
    with pytest.raises(ValueError):
        sm.shg_tuning_curve(T0, (1640, 1630), 10, spec)


def test_filter_wider_than_grid_is_identity(spec, grid):
    a = sm.joint_amplitude(TI, grid, 816.7, spec)
    b, frac = sm.apply_filter(a, sm.FilterSpec(grid.degenerate_wavelength_nm, 5000.0))
    assert abs(frac - 1) < 1e-10
    np.testing.assert_allclose(b.values, a.values, rtol=1e-12)


def test_filter_main_lobe_fraction():
    delta, length = 1e-8, 1e-3
    spec = make_spec(b1h=delta, b1v=0.0, b2h=1e-40, b2v=-1e-40, length=length)
    om1 = 2 * np.pi / (delta * length)  # first zero of sinc(delta Omega L / 2)
    g = sm.SpectralGrid.for_pump(816.7, 400 * om1, 400001)
    a = sm.joint_amplitude(TII, g, 816.7, spec)
    lo = 2e9 * np.pi * sm.C_LIGHT / (g.omega0 + om1)
    hi = 2e9 * np.pi * sm.C_LIGHT / (g.omega0 - om1)
    b, frac = sm.apply_filter(a, sm.FilterSpec((lo + hi) / 2, hi - lo))
    # oracle: quadrature of sinc^2 over the lobe and over the grid span
    f = lambda x: np.sinc(x / np.pi) ** 2
    lobe = 2 * quad(f, 0, np.pi)[0]
    span_x = 400 * np.pi
    total = 2 * quad(f, 0, span_x, limit=2000)[0]
    assert frac == pytest.approx(lobe / total, rel=1e-4)
    assert lobe / np.pi == pytest.approx(0.9028, abs=1e-4)
    assert abs(b.norm() - 1) < 1e-10


def test_filter_rejecting_everything(spec, grid):
    a = sm.joint_amplitude(TI, grid, 816.7, spec)
    with pytest.raises(DegenerateFilterError):
        sm.apply_filter(a, sm.FilterSpec(500.0, 1.0))


def test_filter_raises_co_polarized_overlap(spec, grid):
    a = sm.joint_amplitude(TI, grid, 816.7, spec)
    b = sm.joint_amplitude(T0, grid, 816.7, spec)
    base = abs(sm.overlap(a, b))
    f = sm.FilterSpec(grid.degenerate_wavelength_nm, 80.0)
    fa, _ = sm.apply_filter(a, f)
    fb, _ = sm.apply_filter(b, f)
    assert abs(sm.overlap(fa, fb)) > base


def test_overlap_examples(grid):
    rng = np.random.default_rng(3)
    a = random_amplitude(rng, grid)
    assert sm.overlap(a, a) == pytest.approx(1.0, abs=1e-12)
    om = grid.omega
    left = np.where(om < 0, 1.0, 0.0)
    right = np.where(om > 0, 1.0, 0.0)
    norm = lambda v: v / np.sqrt(np.trapezoid(v**2, dx=grid.step))
    da = sm.JointAmplitude("HH", grid, norm(left).astype(complex))
    db = sm.JointAmplitude("VV", grid, norm(right).astype(complex))
    assert sm.overlap(da, db) == 0


def test_half_shifted_rectangles():
    # closed form: equal rectangles of width w shifted by w/2 overlap by 1/2
    g = sm.SpectralGrid.for_pump(816.7, 1e14, 40001)
    om, w = g.omega, 4e13
    def rect(lo):
        v = ((om >= lo) & (om < lo + w)).astype(complex)
        return sm.JointAmplitude("HH", g, v / np.sqrt(np.sum(np.abs(v) ** 2) * g.step))
    a, b = rect(-w / 2 - w / 4), rect(-w / 4)
    # trapezoid end corrections vanish because the rectangles stay inside the grid
    assert sm.overlap(a, b).real == pytest.approx(0.5, abs=1e-3)


def test_overlap_grid_mismatch(grid):
    rng = np.random.default_rng(0)
    other = sm.SpectralGrid.for_pump(812.0, grid.half_span, grid.n)
    with pytest.raises(ValueError):
        sm.overlap(random_amplitude(rng, grid), random_amplitude(rng, other))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_cauchy_schwarz(seed):
    g = sm.SpectralGrid.for_pump(816.7, 1e14, 512)
    rng = np.random.default_rng(seed)
    a, b = random_amplitude(rng, g), random_amplitude(rng, g)
    assert abs(sm.overlap(a, b)) <= 1 + 1e-10


@pytest.mark.parametrize("name,pump", [("device_1p05mm", 816.76), ("typeII", 812.92), ("design_ratio2", 816.7)])
def test_grid_convergence(name, pump):
    from polsource import config as cf
    from polsource import polarization_state as ps
    cfg = cf.load_example(name)
    spec = cf.build_waveguide(cfg)
    filt = cf.build_filter(cfg)
    vals = []
    for n in (cfg.grid.n_samples, 2 * cfg.grid.n_samples):
        g = sm.SpectralGrid.for_pump(pump, cfg.grid.half_span_rad_per_ps * 1e12, n)
        src = (ps.type_ii_source if cfg.pump.polarization == "TE" else ps.concurrent_source)(spec, g, pump, filt)
        vals.append(src.overlap)
    assert abs(vals[0] - vals[1]) < 1e-6
