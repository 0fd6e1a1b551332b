import numpy as np
import pytest
from hypothesis import given, strategies as st

from gevrey_lab.spectral_core import (
    SpectralField, apply_multiplier, dealias, derivative, edge_amplitude,
    forward_transform, inverse_transform, make_grid,
)

sizes = st.sampled_from([8, 16, 32, 64, 128])
seeds = st.integers(0, 2**31 - 1)


def random_values(n, seed, complex_values=False):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    if complex_values:
        v = v + 1j * rng.standard_normal(n)
    return v


def test_grid_integer_frequencies():
    g = make_grid(8, 2 * np.pi)
    assert np.allclose(np.sort(g.xi), np.arange(-4, 4))


def test_grid_half_spacing():
    g = make_grid(16, 4 * np.pi)
    assert g.dxi == pytest.approx(0.5)
    assert np.allclose(np.diff(np.sort(g.xi)), 0.5)


@pytest.mark.parametrize("n", [7, 6, 0])
def test_grid_rejects_odd_or_small(n):
    with pytest.raises(ValueError):
        make_grid(n, 2 * np.pi)


def test_grid_rejects_bad_length():
    with pytest.raises(ValueError):
        make_grid(8, -1.0)


def test_zero_field_round_trip():
    g = make_grid(16, 2 * np.pi)
    f = forward_transform(np.zeros(16), g)
    assert np.all(inverse_transform(f) == 0)


def test_hermitian_field_gives_real_samples():
    g = make_grid(32, 2 * np.pi)
    c = np.zeros(32, complex)
    c[3], c[-3] = 1 + 2j, 1 - 2j
    vals = inverse_transform(SpectralField(g, c, reality_flag=False))
    assert np.max(np.abs(vals.imag)) < 1e-12


def test_shifted_delta_matches_direct_dft():
    n, L = 16, 2 * np.pi
    g = make_grid(n, L)
    v = np.zeros(n)
    v[5] = 1.0
    f = forward_transform(v, g)
    j = np.arange(n)
    direct = np.sqrt(g.dx / n) * np.exp(-2j * np.pi * j * 5 / n)
    assert np.allclose(f.coeffs, direct, atol=1e-14)


@given(sizes, seeds, st.booleans())
def test_round_trip(n, seed, cplx):
    g = make_grid(n, 3.0)
    v = random_values(n, seed, cplx)
    back = inverse_transform(forward_transform(v, g))
    assert np.linalg.norm(back - v) <= 1e-12 * np.linalg.norm(v)


@given(sizes, seeds, st.booleans())
def test_parseval(n, seed, cplx):
    g = make_grid(n, 5.0)
    v = random_values(n, seed, cplx)
    f = forward_transform(v, g)
    phys = np.sum(np.abs(v) ** 2) * g.dx
    assert np.sum(np.abs(f.coeffs) ** 2) == pytest.approx(phys, rel=1e-12)


def test_dealias_cutoff_degree5():
    g = make_grid(64, 2 * np.pi)
    assert g.dealias_cutoff(5) == pytest.approx(g.nyquist / 3)
    f = forward_transform(random_values(64, 1), g)
    kept = np.abs(g.xi)[dealias(f, 5).coeffs != 0]
    assert kept.max() < g.nyquist / 3


@given(sizes, seeds, st.integers(2, 7))
def test_dealias_idempotent(n, seed, degree):
    g = make_grid(n, 2 * np.pi)
    f = dealias(forward_transform(random_values(n, seed), g), degree)
    assert np.array_equal(dealias(f, degree).coeffs, f.coeffs)


def test_dealias_degree_must_be_at_least_two():
    g = make_grid(8, 2 * np.pi)
    with pytest.raises(ValueError):
        dealias(forward_transform(np.ones(8), g), 1)


@given(seeds, st.floats(0.0, 0.3), st.floats(0.0, 0.3))
def test_exponential_multiplier_semigroup(seed, s1, s2):
    g = make_grid(32, 2 * np.pi)
    f = forward_transform(random_values(32, seed), g)
    def w(s):
        return lambda xi: np.exp(s * np.abs(xi))
    two = apply_multiplier(apply_multiplier(f, w(s1)), w(s2))
    one = apply_multiplier(f, w(s1 + s2))
    assert np.allclose(two.coeffs, one.coeffs, rtol=1e-12, atol=0)


@given(sizes, seeds)
def test_even_multiplier_preserves_hermitian(n, seed):
    g = make_grid(n, 2 * np.pi)
    f = forward_transform(random_values(n, seed), g)
    out = apply_multiplier(f, lambda xi: np.cosh(0.1 * xi))
    assert out.hermitian_residual() < 1e-14 * max(1.0, np.abs(out.coeffs).max())


def test_derivative_of_sine_and_nyquist_zeroed():
    g = make_grid(32, 2 * np.pi)
    f = forward_transform(np.sin(3 * g.x) + np.cos(16 * g.x), g)
    d = derivative(f)
    assert d.coeffs[g.nyquist_index] == 0
    assert np.allclose(inverse_transform(d), 3 * np.cos(3 * g.x), atol=1e-12)


def test_multiplier_must_be_finite():
    g = make_grid(8, 2 * np.pi)
    f = forward_transform(np.ones(8), g)
    with pytest.raises(FloatingPointError):
        apply_multiplier(f, lambda xi: 1.0 / xi)


def test_coefficients_are_immutable():
    g = make_grid(8, 2 * np.pi)
    f = forward_transform(np.ones(8), g)
    with pytest.raises(ValueError):
        f.coeffs[0] = 2.0


def test_edge_amplitude():
    g = make_grid(256, 40 * np.pi)
    assert edge_amplitude(1 / np.cosh(g.x), g) < 1e-20
    assert edge_amplitude(np.ones(256), g) == 1.0
