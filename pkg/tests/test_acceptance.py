"""Acceptance criteria 1-9 at full scale, one PASS/FAIL line per criterion.

Shared inputs (the trajectories behind criteria 1-2 and the drift fits behind
criteria 3 and 8) are computed once per module. Lines are printed with
capture disabled so they show up in ``pytest -v`` logs.
"""
import filecmp

import pytest

from gevrey_lab import acceptance as acc
from gevrey_lab.cli import main

LINES = []


@pytest.fixture
def report(capsys):
    def emit(check):
        LINES.append(check.line())
        with capsys.disabled():
            print("\n" + check.line())
            for k, v in check.parts.items():
                print(f"    {'ok  ' if v else 'FAIL'} {k}")
        assert check.passed, check.line()
    return emit


@pytest.fixture(scope="module")
def runs():
    return acc.trajectories(quick=False)


@pytest.fixture(scope="module")
def fits():
    return acc.drift_fits(quick=False)


def test_criterion_1_conservation(runs, report):
    report(acc.check_conservation(runs))


def test_criterion_2_flux_identity(runs, report):
    report(acc.check_flux(runs))


def test_criterion_3_almost_conservation_exponent(fits, report):
    report(acc.check_drift(fits))


def test_criterion_4_multiplier_defect(report):
    report(acc.check_multiplier(quick=False, seed=0, workers=1))


def test_criterion_5_frequency_restricted_scaling(report):
    report(acc.check_fre(quick=False, workers=1, seed=0))


def test_criterion_6_radius(report):
    report(acc.check_radius())


def test_criterion_7_extension(report):
    report(acc.check_extension())


def test_criterion_8_end_to_end(fits, report):
    report(acc.check_end_to_end(fits))


def test_criterion_9_determinism(report):
    report(acc.check_determinism(seed=0))


def test_criterion_9_cli_verify_bytes_across_workers(tmp_path, capsys):
    a, b = tmp_path / "w1", tmp_path / "w3"
    codes = [main(["verify", "--quick", "--seed", "0", "--workers", str(w), "--out", str(d)])
             for w, d in ((1, a), (3, b))]
    names = sorted(p.name for p in a.iterdir())
    _, mismatch, errors = filecmp.cmpfiles(a, b, names, shallow=False)
    line = (f"[{'PASS' if not mismatch and not errors else 'FAIL'}] criterion 9: CLI verify --quick "
            f"outputs byte-identical for --workers 1 vs 3 ({len(names)} files, exit codes {codes})")
    LINES.append(line)
    with capsys.disabled():
        print("\n" + line)
    assert not mismatch and not errors, mismatch + errors
    assert codes[0] == codes[1]


def test_zz_summary(capsys):
    with capsys.disabled():
        print("\nacceptance summary:")
        for line in LINES:
            print("  " + line)
