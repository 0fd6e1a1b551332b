from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gevrey_lab.fre_lab import (
    CUBIC, NLS_SIGN_PATTERNS, QUADRATIC, FreConfig, NonintegrableDirection, PhaseSpec,
    auxiliary_square_integral, catalog_config, fit_beta, oracle_1d, oracle_2d, phase_value,
    restricted_integral, scaling_exponent, stationary_scan, sup_restricted_integral,
)


def test_phase_cubic_example():
    spec = PhaseSpec(CUBIC, (1, 1, 1, 1, 1))
    assert phase_value(spec, 2.0, [1, 1, 0, 0, 0]) == 6.0


def test_phase_quadratic_example():
    spec = PhaseSpec(QUADRATIC, (-1, 1, -1))
    assert phase_value(spec, 2.0, [2, 1, 1]) == 0.0


@pytest.mark.parametrize("spec", [PhaseSpec(CUBIC, (1,) * 5), PhaseSpec(QUADRATIC, (1, -1, 1))])
def test_phase_zero_input(spec):
    assert phase_value(spec, 0.0, [0.0] * spec.arity) == 0.0


def test_phase_spec_validation():
    with pytest.raises(ValueError):
        PhaseSpec("quartic", (1, 1))
    with pytest.raises(ValueError):
        PhaseSpec(CUBIC, (1, 2))
    with pytest.raises(ValueError):
        phase_value(PhaseSpec(CUBIC, (1, 1)), 1.0, [1.0])


@pytest.mark.parametrize("M", [1.0, 3.7, 10.0, 100.0])
def test_oracle_1d_exact(M):
    r = restricted_integral(oracle_1d(), [2.0], alpha=0.0, shift=0.0, M=M)
    assert r.values[0] == pytest.approx(2 * np.sqrt(M), rel=1e-8)


@pytest.mark.parametrize("M", [1.0, 5.0, 20.0])
def test_oracle_2d_annulus(M):
    alpha = 50.0   # alpha - M >= 0 and alpha + M < N**2
    r = restricted_integral(oracle_2d(N=100.0), [1.5], alpha=alpha, shift=0.0, M=M)
    assert r.values[0] == pytest.approx(2 * np.pi * M, rel=1e-3)


def test_oracle_2d_disk_at_zero_alpha():
    r = restricted_integral(oracle_2d(N=100.0), [1.5], alpha=0.0, shift=0.0, M=9.0)
    assert r.values[0] == pytest.approx(9.0 * np.pi, rel=1e-3)


def test_empty_indicator_gives_zero():
    r = restricted_integral(oracle_1d(), [2.0], alpha=-100.0, shift=0.0, M=1.0)
    assert r.values[0] == 0.0


@pytest.mark.parametrize("name", ["nls_a", "kdv_smooth_a"])
def test_zero_multiplier_gives_zero(name):
    cfg = replace(catalog_config(name), multiplier="zero")
    fixed = [10.0, 2.0] if name == "nls_a" else [10.0, 2.0, 1.0]
    r = restricted_integral(cfg, fixed, alpha=3.0, shift=0.0, M=[1.0, 10.0])
    assert np.all(r.values == 0.0)


@given(xi=st.floats(2, 200), x2=st.floats(0.1, 1.0), alpha=st.floats(-1e4, 1e4),
       pattern=st.sampled_from(NLS_SIGN_PATTERNS))
def test_monotone_in_M(xi, x2, alpha, pattern):
    cfg = catalog_config("nls_a", signs=pattern)
    r = restricted_integral(cfg, [xi, x2 * xi], alpha=alpha, shift=0.0, M=cfg.M_grid)
    assert np.all(np.diff(r.values) >= -1e-3 * np.abs(r.values[1:]))


@pytest.mark.parametrize("fixed,alpha,shift", [([20.0, 3.0, 1.0], 500.0, 0.2),
                                               ([8.0, -2.0, 0.5], -40.0, -0.1)])
def test_cubic_reflection_symmetry(fixed, alpha, shift):
    cfg = catalog_config("kdv_smooth_a")
    a = restricted_integral(cfg, fixed, alpha, shift, M=[1.0, 10.0]).values
    b = restricted_integral(cfg, [-x for x in fixed], -alpha, -shift, M=[1.0, 10.0]).values
    assert np.allclose(a, b, rtol=1e-3, atol=0)


def test_shift_policy():
    cfg = catalog_config("nls_a", signs=(1, 1, -1), avoid_list=(-2.0,))
    with pytest.raises(ValueError):
        restricted_integral(cfg, [10.0, 2.0], 0.0, shift=1.5, M=1.0)   # cap 0.5 * 2
    cfg = catalog_config("nls_a", signs=(1, 1, -1), avoid_list=(-0.05,), shift_cap=1.0)
    with pytest.raises(ValueError):
        restricted_integral(cfg, [10.0, 2.0], 0.0, shift=-0.5, M=1.0)  # exactly -0.05 * xi


def test_unbounded_direction_is_flagged():
    # Phi = xi_0**2 leaves xi_1 unconstrained: the region is an infinite strip
    cfg = FreConfig(PhaseSpec(QUADRATIC, (0, 0, 0), hyperplane=(1, 1, 1)), "unit", (3,),
                    xi_max=200.0)
    with pytest.raises(NonintegrableDirection):
        restricted_integral(cfg, [1.0], alpha=0.0, shift=0.0, M=1.0)


def test_scaling_exponent_oracles():
    r1 = scaling_exponent(oracle_1d(n_samples=64))
    assert r1.beta == pytest.approx(0.5, abs=0.05)
    r2 = scaling_exponent(oracle_2d(n_samples=64))
    assert r2.beta == pytest.approx(1.0, abs=0.05)


def test_fit_beta_exact_power():
    M = np.geomspace(1, 100, 5)
    beta, res = fit_beta(M, 3 * M**0.7)
    assert beta == pytest.approx(0.7, abs=1e-12) and res < 1e-12
    with pytest.raises(ValueError):
        fit_beta(M, np.zeros(5))


@pytest.mark.parametrize("name", ["nls_a", "nls_b"])
def test_nls_entries_below_linear(name):
    rep = scaling_exponent(catalog_config(name, n_samples=400))
    assert rep.beta <= 1.05
    assert rep.monotone
    assert rep.bprime[1] > rep.bprime[0]


def test_nosmooth_seed_stable_at_M10():
    sups = [sup_restricted_integral(catalog_config("kdv_nosmooth", n_samples=300, seed=s), M=10.0).sup[0]
            for s in (1, 2)]
    assert np.all(np.isfinite(sups))
    assert abs(sups[0] - sups[1]) <= 0.3 * max(sups)


def test_sup_deterministic_and_worker_independent():
    cfg = catalog_config("nls_a", n_samples=200, seed=5)
    a = sup_restricted_integral(cfg, workers=1)
    b = sup_restricted_integral(cfg, workers=3)
    assert np.array_equal(a.sup, b.sup)
    assert a.argmax == b.argmax


def test_stationary_plus_plus_plus():
    (res,) = stationary_scan(PhaseSpec(QUADRATIC, (1, 1, 1)), direction=1)
    assert res["second"] == "4"
    assert res["kind"] == "nondegenerate"


def test_stationary_plus_plus_minus_degenerate_line():
    (res,) = stationary_scan(PhaseSpec(QUADRATIC, (1, 1, -1)), direction=1)
    assert res["set"] == "xi1 = -xi3"
    assert res["first"] == "2*xi1 + 2*xi3"
    assert res["kind"] == "degenerate"


def test_stationary_cubic_pairing():
    out = stationary_scan(PhaseSpec(CUBIC, (1,) * 5), direction=1, eliminate=5)
    assert out[0]["first"] == "-3*xi1**2 + 3*xi5**2"
    kinds = {r["set"]: r["kind"] for r in out}
    assert kinds["xi1 = -xi5"] == "degenerate"


def test_aux_plus_sign_annulus():
    assert auxiliary_square_integral(10.0, 1.0, 100.0, +1) == pytest.approx(2 * np.pi, rel=0.01)


@pytest.mark.parametrize("alpha", [0.0, 3.0, 20.0])
def test_aux_full_square(alpha):
    N = 7.0
    # minus sign: p**2 - q**2 - alpha ranges over [-N**2 - alpha, N**2 - alpha]
    assert auxiliary_square_integral(alpha, alpha + N**2, N, -1) == pytest.approx((2 * N) ** 2, rel=1e-10)
    # plus sign: p**2 + q**2 reaches 2 N**2, so M >= alpha + N**2 is not enough
    assert auxiliary_square_integral(alpha, 2 * N**2 + alpha, N, +1) == pytest.approx((2 * N) ** 2, rel=1e-10)
    assert auxiliary_square_integral(alpha, alpha + N**2, N, +1) < (2 * N) ** 2


@pytest.mark.parametrize("sign,alpha", [(1, 5.0), (-1, 0.0), (-1, 20.0)])
def test_aux_against_monte_carlo(sign, alpha):
    N, M = 10.0, 2.0
    rng = np.random.default_rng(0)
    p, q = rng.uniform(-N, N, (2, 2_000_000))
    mc = np.mean(np.abs(p**2 + sign * q**2 - alpha) < M) * (2 * N) ** 2
    se = (2 * N) ** 2 * np.sqrt(mc / (2 * N) ** 2 / 2e6)
    assert abs(auxiliary_square_integral(alpha, M, N, sign) - mc) < 5 * se


def test_catalog_rejects_unknown():
    with pytest.raises(ValueError):
        catalog_config("kdv_smooth_z")
