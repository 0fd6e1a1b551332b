from dataclasses import replace

import numpy as np
import pytest

from gevrey_lab.evolution import (
    DriftFitError, EvolutionConfig, NumericalAbort, drift_exponent, energy, energy_flux,
    mass, modified_energy, prepare, remainder_F, remainder_G, run_experiment, step,
)
from gevrey_lab.gevrey_weights import Weight, gevrey_norm
from gevrey_lab.initial_data import gaussian, sech, single_mode
from gevrey_lab.spectral_core import SpectralField, forward_transform, make_grid

GRID = make_grid(512, 40 * np.pi)


def cfg(equation="gkdv", power=4, **kw):
    # sech(x/4) on this box reaches ~1e-6 at the edges; the floor matches the acceptance runs
    kw.setdefault("edge_floor", 1e-3)
    return EvolutionConfig(equation, power, GRID, **kw)


def data(equation, amplitude=1.0):
    return sech(GRID, amplitude=amplitude, rate=0.25, complex_field=equation == "nls")


def band_limited(grid, top, real=True):
    """Sum of a few modes with |xi| <= top."""
    rng = np.random.default_rng(0)
    c = np.zeros(grid.n_points, complex)
    keep = (np.abs(grid.xi) <= top) & (grid.xi != 0)
    c[keep] = rng.standard_normal(keep.sum()) + 1j * rng.standard_normal(keep.sum())
    if real:
        c = 0.5 * (c + np.conj(c[(-np.arange(c.size)) % c.size]))
    return SpectralField(grid, 0.1 * c, real)


def test_config_validation():
    with pytest.raises(ValueError):
        cfg("gkdv", 3)
    with pytest.raises(ValueError):
        cfg("nls", 4)
    with pytest.raises(ValueError):
        cfg("gkdv", 4, scheme="strang")
    with pytest.raises(ValueError):
        cfg("heat", 4)


@pytest.mark.parametrize("eq,p", [("gkdv", 4), ("nls", 3)])
def test_zero_state_stays_zero(eq, p):
    c = cfg(eq, p)
    z = SpectralField(GRID, np.zeros(GRID.n_points), eq == "gkdv")
    out = step(prepare(z, c), c)
    assert np.all(out.coeffs == 0)


@pytest.mark.parametrize("eq,p,sign,power", [("gkdv", 4, 1, 3), ("nls", 3, -1, 2)])
def test_linear_mode_rotates_exactly(eq, p, sign, power):
    c = cfg(eq, p, dt=1e-2, nonlinear=False)
    j = 5
    xi = GRID.xi[j]
    coeffs = np.zeros(GRID.n_points, complex)
    coeffs[j] = 1.0
    if eq == "gkdv":
        coeffs[-j] = 1.0
    s = SpectralField(GRID, coeffs, eq == "gkdv")
    out = step(s, c)
    assert out.coeffs[j] == pytest.approx(np.exp(sign * 1j * xi**power * c.dt), abs=1e-14)


def test_gkdv_small_amplitude_mass_drift():
    c = cfg(dt=1e-3, t_end=1.0, stride=1000)
    led = run_experiment(data("gkdv", 0.3), c, with_flux=False).arrays()
    assert abs(led["mass"][-1] / led["mass"][0] - 1) < 1e-8


def test_etdrk4_fourth_order():
    c = cfg("gkdv", 4, t_end=0.5)
    u0 = data("gkdv", 1.5)

    def final(dt):
        return run_experiment(u0, replace(c, dt=dt, stride=10**6), with_flux=False).final_state.coeffs

    ref = final(0.00625)
    e1 = np.linalg.norm(final(0.05) - ref)
    e2 = np.linalg.norm(final(0.025) - ref)
    assert e1 / e2 > 12.0


def test_mass_of_sine():
    g = make_grid(32, 2 * np.pi)
    assert mass(forward_transform(np.sin(g.x), g)) == pytest.approx(np.pi, rel=1e-13)


def test_energy_of_cosine():
    g = make_grid(32, 2 * np.pi)
    c = EvolutionConfig("gkdv", 4, g)
    u = forward_transform(np.cos(g.x), g)
    assert energy(u, c) == pytest.approx(np.pi + np.pi / 24, rel=1e-13)


def test_energy_of_constant_nls():
    g = make_grid(32, 2 * np.pi)
    c = EvolutionConfig("nls", 3, g)
    v = forward_transform(np.full(32, 0.7 + 0.2j), g)
    assert energy(v, c) == pytest.approx(0.5 * abs(0.7 + 0.2j) ** 4 * g.box_length, rel=1e-13)


@pytest.mark.parametrize("eq,p", [("gkdv", 4), ("gkdv", 6), ("nls", 3)])
def test_modified_energy_sigma_zero(eq, p):
    c = cfg(eq, p)
    u = prepare(data(eq), c)
    assert modified_energy(u, 0.0, c) == mass(u) + energy(u, c)


def test_modified_energy_flat_weight_band_limited():
    c = cfg()
    u = band_limited(GRID, 2.0)
    sigma = 0.5   # sigma * top = 1
    assert modified_energy(u, sigma, c) == modified_energy(u, 0.0, c)


@pytest.mark.parametrize("eq,p", [("gkdv", 4), ("nls", 3)])
@pytest.mark.parametrize("sigma", [0.0, 0.3, 1.0, 3.0])
def test_defocusing_coercivity(eq, p, sigma):
    c = cfg(eq, p)
    u = prepare(data(eq), c)
    norm = gevrey_norm(u, Weight("smooth", sigma, sobolev_s=1.0))
    assert modified_energy(u, sigma, c) >= norm**2 * (1 - 1e-12)


def test_remainders_vanish_at_sigma_zero():
    u = prepare(data("gkdv"), cfg())
    assert np.all(remainder_F(u, 0.0, cfg()).coeffs == 0)
    v = prepare(data("nls"), cfg("nls", 3))
    assert np.all(remainder_G(v, 0.0, cfg("nls", 3)).coeffs == 0)


def test_remainder_F_vanishes_when_weight_flat_on_product_support():
    c = cfg()
    top = 1.0
    u = band_limited(GRID, top)
    sigma = 1.0 / ((c.power + 1) * top)
    F = remainder_F(u, sigma, c).coeffs
    scale = np.abs(remainder_F(u, 3.0, c).coeffs).max()
    assert np.abs(F).max() <= 1e-13 * max(scale, 1e-300)


def test_remainder_G_vanishes_when_weight_flat_on_product_support():
    c = cfg("nls", 3)
    top = 1.0
    v = band_limited(GRID, top, real=False)
    sigma = 1.0 / (c.power * top)
    G = remainder_G(v, sigma, c).coeffs
    scale = np.abs(remainder_G(v, 3.0, c).coeffs).max()
    assert np.abs(G).max() <= 1e-13 * scale


def test_remainders_reject_wrong_equation():
    with pytest.raises(ValueError):
        remainder_F(prepare(data("nls"), cfg("nls", 3)), 0.1, cfg("nls", 3))
    with pytest.raises(ValueError):
        remainder_G(prepare(data("gkdv"), cfg()), 0.1, cfg())


def test_flux_zero_at_sigma_zero():
    c = cfg()
    assert energy_flux(prepare(data("gkdv"), c), 0.0, c) == 0.0


def test_flux_scales_with_degree_k_plus_2():
    c = cfg()
    u = prepare(data("gkdv"), c)
    eps = np.array([1e-3, 2e-3, 4e-3])
    flux = [abs(energy_flux(SpectralField(GRID, e * u.coeffs, True), 2.0, c)) for e in eps]
    slope = np.polyfit(np.log(eps), np.log(flux), 1)[0]
    assert slope == pytest.approx(c.power + 2, abs=1e-3)


@pytest.mark.parametrize("eq,p", [("gkdv", 4), ("nls", 3)])
def test_flux_matches_centered_difference(eq, p):
    c = cfg(eq, p, dt=1e-3, t_end=0.2, stride=1)
    sigma = 10.0 / c.xi_max
    led = run_experiment(data(eq), c, sigmas=(sigma,)).arrays()
    e, fl = led["e_sigma"][:, 0], led["flux"][:, 0]
    fd = (e[2:] - e[:-2]) / (2 * c.dt)
    ref = np.abs(fl[1:-1]).max()
    assert np.max(np.abs(fd - fl[1:-1])) < 1e-2 * ref


def test_single_row_ledger_at_t_zero():
    led = run_experiment(data("gkdv"), cfg(t_end=0.0))
    assert led.times == [0.0]


@pytest.mark.parametrize("eq,p", [("gkdv", 4), ("nls", 3)])
def test_ledger_invariants(eq, p):
    c = cfg(eq, p, t_end=0.5, stride=50)
    led = run_experiment(data(eq), c, sigmas=(0.0, 1.0)).arrays()
    assert np.max(np.abs(led["mass"] / led["mass"][0] - 1)) < 1e-8
    assert np.allclose(led["e_sigma"][:, 0], led["mass"] + led["energy"], rtol=1e-12, atol=0)


def test_edge_floor_aborts():
    c = cfg(edge_floor=1e-12, t_end=0.1)
    with pytest.raises(NumericalAbort):
        run_experiment(gaussian(GRID, width=40.0), c)


def test_drift_grid_in_flat_region_is_an_error():
    c = cfg()
    sig = np.logspace(-3, -1.5, 4) / c.xi_max
    with pytest.raises(DriftFitError):
        drift_exponent(data("gkdv"), c, sig, horizon=0.2)


def test_drift_grid_must_span_decades():
    with pytest.raises(ValueError):
        drift_exponent(data("gkdv"), cfg(), [0.1, 0.2, 0.4], horizon=0.2)


def test_drift_exponent_large_for_analytic_data():
    c = cfg()
    sig = np.logspace(np.log10(0.5), np.log10(20.0), 10) / c.xi_max
    fit = drift_exponent(data("gkdv"), c, sig, horizon=0.5)
    assert fit.theta >= 1.8
    assert fit.envelope_constant(1.5) * sig[fit.used][0] ** 1.5 >= fit.drifts[fit.used][0] * (1 - 1e-12)


def test_single_mode_data_is_real():
    f = single_mode(GRID, xi0=GRID.xi[3])
    assert f.hermitian_residual() < 1e-14
