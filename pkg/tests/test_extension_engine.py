import numpy as np
import pytest
from hypothesis import given, strategies as st

from gevrey_lab.evolution import DriftFit
from gevrey_lab.extension_engine import (
    ExtensionParams, admissible_theta, gn_energy_bound, knee_time, local_lifespan, max_sigma,
    params_from_drift, sigma_curve, simulate_induction,
)


def P(**kw):
    base = dict(sigma0=1.0, equation="gkdv", power=4, E0=1.0)
    base.update(kw)
    return ExtensionParams(**base)


def test_ceiling_example():
    assert gn_energy_bound(P()) == 4.0


def test_ceiling_grows_with_k():
    assert gn_energy_bound(P(power=6, E0=2.0)) > gn_energy_bound(P(power=4, E0=2.0))


def test_lifespan_example():
    assert local_lifespan(P()) == pytest.approx(1 / 25, rel=1e-15)


@given(st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
def test_ceiling_and_lifespan_monotone_in_E0(a, b):
    lo, hi = sorted((a, b))
    assert gn_energy_bound(P(E0=lo)) <= gn_energy_bound(P(E0=hi))
    assert local_lifespan(P(E0=lo)) >= local_lifespan(P(E0=hi))


def test_lifespan_linear_in_c0():
    assert local_lifespan(P(c0=3.0)) == pytest.approx(3 * local_lifespan(P()), rel=1e-15)


def test_parameter_validation():
    with pytest.raises(ValueError):
        P(theta=2.0)
    with pytest.raises(ValueError):
        P(big_M=0.5)
    with pytest.raises(ValueError):
        P(equation="kdv")
    with pytest.raises(ValueError):
        P(E0=0.0)
    with pytest.raises(ValueError):
        max_sigma(P(), 0.0)


def test_nls_exponent_modes():
    assert P(equation="nls", power=3).k == 2
    assert P(equation="nls", power=3, nls_mode="corollary").k == 3


def test_small_T_saturates():
    p = P()
    assert max_sigma(p, 0.1 * knee_time(p)) == p.sigma0


def test_hundredfold_T_at_theta_two_minus():
    p = P(theta=2 - 1e-12)
    T = 1e3 * knee_time(p)
    assert max_sigma(p, T) / max_sigma(p, 100 * T) == pytest.approx(10.0, rel=1e-9)


@given(st.floats(1e-4, 1e4), st.floats(1e-4, 1e4), st.sampled_from([1.0, 1.5, 1.99]))
def test_max_sigma_nonincreasing_in_T(a, b, theta):
    p = P(theta=theta)
    lo, hi = sorted((a, b))
    assert max_sigma(p, hi) <= max_sigma(p, lo)


@given(st.floats(0.05, 20), st.floats(0.05, 20))
def test_max_sigma_nonincreasing_in_E0(a, b):
    lo, hi = sorted((a, b))
    assert max_sigma(P(E0=hi), 1e3) <= max_sigma(P(E0=lo), 1e3)


def test_continuous_at_knee():
    p = P(theta=1.5)
    K = knee_time(p)
    assert max_sigma(p, K * (1 - 1e-9)) == pytest.approx(max_sigma(p, K * (1 + 1e-9)), rel=1e-8)


@pytest.mark.parametrize("theta", [1.0, 1.5, 1.99])
def test_slope_is_minus_one_over_theta(theta):
    p = P(theta=theta)
    T = knee_time(p) * np.logspace(0.5, 3.5, 13)
    assert sigma_curve(p, T).slope == pytest.approx(-1 / theta, abs=1e-6)


def test_knee_matches_crossover():
    p = P(theta=1.5)
    T = np.logspace(-6, 3, 91)
    curve = sigma_curve(p, T)
    first_free = T[~curve.saturated][0]
    i = np.searchsorted(T, first_free)
    assert T[i - 1] <= curve.knee <= T[i]


def test_single_step_at_lifespan():
    p = P()
    led = simulate_induction(p, local_lifespan(p))
    assert led.n_steps == 1 and led.ok


@pytest.mark.parametrize("E0", [0.1, 1.0, 10.0])
@pytest.mark.parametrize("theta", [1.0, 1.5, 1.99])
def test_induction_closes_at_max_sigma(E0, theta):
    p = P(E0=E0, theta=theta)
    d = local_lifespan(p)
    for T in d * np.logspace(0, 3, 10):
        led = simulate_induction(p, T)
        assert led.ok, (E0, theta, T)
        assert led.margin >= -1e-12 * led.ceiling


@pytest.mark.parametrize("E0", [0.1, 1.0, 10.0])
def test_doubled_sigma_violates(E0):
    p = P(E0=E0)
    T = 1e3 * max(knee_time(p), local_lifespan(p))
    led = simulate_induction(p, T, sigma=2 * max_sigma(p, T))
    assert not led.ok
    assert led.first_violation is not None


def test_admissible_theta_caps_below_two():
    assert admissible_theta(14.9) == pytest.approx(1.99)
    assert admissible_theta(1.7) == 1.7
    with pytest.raises(ValueError):
        admissible_theta(0.8)


def test_params_from_drift_envelope():
    s = np.array([0.01, 0.02, 0.04])
    fit = DriftFit(3.0, 0.0, 0.0, s, 5 * s**3, np.array([True] * 3), 0.0, np.zeros(3))
    p = params_from_drift(fit, 1.0, "gkdv", 4, 1.0)
    assert p.theta == 1.99
    # C sigma**theta bounds every measured drift, tightly at one point
    assert np.all(p.C * s**p.theta >= fit.drifts * (1 - 1e-12))
    assert np.any(np.isclose(p.C * s**p.theta, fit.drifts, rtol=1e-12))


def test_curve_outputs(tmp_path):
    c = sigma_curve(P(), np.logspace(-3, 3, 7))
    c.write_csv(tmp_path / "s.csv")
    c.write_json(tmp_path / "s.json")
    assert (tmp_path / "s.csv").read_text().startswith("T,sigma,branch\n")
