import pytest

from soundshap.verify import CHECKS, VerifyConfig, run_checks


def test_default_battery_passes():
    results = run_checks()
    assert [r.name for r in results] == list(CHECKS)
    failed = {r.name: r.failing for r in results if not r.passed}
    assert not failed


def test_reports_are_deterministic():
    a = [r.to_json() for r in run_checks(["ignored_iff_zero", "simplex"], VerifyConfig(seed=3))]
    b = [r.to_json() for r in run_checks(["ignored_iff_zero", "simplex"], VerifyConfig(seed=3))]
    assert a == b


def test_fault_is_caught_and_cleared():
    assert not run_checks(["efficiency"], inject_fault=True)[0].passed
    assert run_checks(["efficiency"])[0].passed


def test_d_filter_and_scaling():
    (res,) = run_checks(["spectrum"], VerifyConfig(d=3, instances=0.2))
    assert res.passed and res.instances == 20


def test_tolerance_override_can_fail():
    (res,) = run_checks(["pq_guard"], VerifyConfig(tol=-1.0))
    assert not res.passed


def test_unknown():
    with pytest.raises(KeyError):
        run_checks(["nope"])
