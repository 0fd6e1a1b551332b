import numpy as np
import pytest
from hypothesis import given, strategies as st

from gevrey_lab.multiplier_check import (
    classify, defect_ratio, multiplier_defect, multiplier_defect_direct, negative_control,
    sup_defect_ratio,
)

freq = st.floats(-50, 50, allow_nan=False)


def test_defect_example():
    # m(0) = 1 and m(+-3) = e^6 at sigma = 2
    assert multiplier_defect(2.0, [3.0, -3.0]) == pytest.approx(abs(1 - np.exp(-12)), rel=1e-14)


def test_defect_zero_when_all_flat():
    assert multiplier_defect(1.0, [0.2, 0.3, -0.1]) == 0.0


def test_defect_input_validation():
    with pytest.raises(ValueError):
        multiplier_defect(0.0, [1.0, 2.0])
    with pytest.raises(ValueError):
        multiplier_defect(1.0, [1.0])
    with pytest.raises(ValueError):
        multiplier_defect(1.0, [1.0, np.inf])
    with pytest.raises(ValueError):
        defect_ratio(1.0, 2.5, [1.0, 2.0])


@given(st.floats(1e-2, 2), st.lists(freq, min_size=2, max_size=5))
def test_two_evaluation_paths_agree(sigma, f):
    a = multiplier_defect(sigma, f)
    b = multiplier_defect_direct(sigma, f)
    assert a == pytest.approx(b, rel=1e-9, abs=1e-12)


@given(st.floats(1e-2, 2), st.lists(freq, min_size=2, max_size=6), st.randoms())
def test_permutation_invariance(sigma, f, rnd):
    g = list(f)
    rnd.shuffle(g)
    assert multiplier_defect(sigma, f) == pytest.approx(multiplier_defect(sigma, g), rel=1e-12, abs=1e-300)
    assert defect_ratio(sigma, 1.5, f).ratio == pytest.approx(defect_ratio(sigma, 1.5, g).ratio, rel=1e-12)


@given(st.floats(1e-2, 2), st.sampled_from([0.5, 2.0, 4.0, 0.125]),
       st.lists(freq, min_size=2, max_size=5), st.sampled_from([1.0, 1.5, 1.99]))
def test_homogeneity(sigma, lam, f, theta):
    f = np.asarray(f)
    a = defect_ratio(sigma, theta, f)
    b = defect_ratio(sigma / lam, theta, lam * f)
    assert a.defect == b.defect
    if np.isfinite(a.ratio):
        assert a.ratio == pytest.approx(b.ratio, rel=1e-12, abs=1e-300)


def test_defect_vanishes_as_second_frequency_shrinks():
    vals = [multiplier_defect(1.0, [5.0, x]) for x in (1.0, 0.1, 0.01, 0.001)]
    assert np.all(np.diff(vals) < 0)
    # linear decay in the second frequency
    assert vals[-1] / vals[-2] < 0.2


def test_ratio_sorts_by_magnitude():
    s = defect_ratio(1.0, 1.5, [0.5, -4.0, 2.0])
    assert s.freqs == (-4.0, 2.0, 0.5)
    assert s.bound == pytest.approx(4.0**0.5 * 2.0)


def test_classify_strata():
    eta = np.array([[0.3, 0.2], [0.9, 0.8], [3.0, 0.5], [3.0, 2.0]])
    assert list(classify(eta)) == ["1.1", "1.2", "2", "3"]


@pytest.mark.parametrize("k", [2, 5])
def test_stratum_11_is_zero(k):
    rep = sup_defect_ratio(k, 1.5, 40_000, seed=3)
    assert rep.strata["1.1"].sup == 0.0


def test_stratum_12_closed_form_at_theta_one():
    # in stratum 1.2 the largest ratio is e^k - 1 at theta = 1 (all frequencies near sigma|xi| = 1)
    rep = sup_defect_ratio(2, 1.0, 200_000, seed=1)
    assert rep.strata["1.2"].sup == pytest.approx(np.e**2 - 1, rel=1e-3)
    assert rep.strata["1.2"].sup <= np.e**2 - 1 + 1e-9


@pytest.mark.parametrize("theta", [1.0, 1.5, 1.99])
def test_sup_finite_and_seed_stable(theta):
    a = sup_defect_ratio(2, theta, 100_000, seed=1).sup
    b = sup_defect_ratio(2, theta, 100_000, seed=2).sup
    assert np.isfinite(a) and np.isfinite(b)
    assert abs(a - b) <= 0.25 * min(a, b)


def test_workers_do_not_change_results():
    a = sup_defect_ratio(3, 1.5, 100_000, seed=7, workers=1).as_dict()
    b = sup_defect_ratio(3, 1.5, 100_000, seed=7, workers=3).as_dict()
    assert a == b


def test_seed_changes_samples():
    a = sup_defect_ratio(2, 1.5, 40_000, seed=1, refine=False).strata["3"].sup
    b = sup_defect_ratio(2, 1.5, 40_000, seed=2, refine=False).strata["3"].sup
    assert a != b


def test_negative_control_below_one_grows():
    out = negative_control(2, 0.5, 40_000, seed=1)
    assert out["grows"]
    assert out["growth_rate"] > 0.1


def test_theta_outside_range_rejected_unless_allowed():
    with pytest.raises(ValueError):
        sup_defect_ratio(2, 2.5, 40_000, seed=1)
    sup_defect_ratio(2, 2.5, 40_000, seed=1, allow_any_theta=True)


def test_csv_has_top_samples(tmp_path):
    rep = sup_defect_ratio(2, 1.5, 40_000, seed=1, n_top=5)
    p = tmp_path / "s.csv"
    rep.write_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0].startswith("stratum,sigma,xi_1,xi_2")
    assert len(lines) >= 1 + 4 * 5
