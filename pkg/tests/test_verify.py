import csv
import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from freeknot.bspline import eval_bspline, eval_dknot
from freeknot.verify import (BoundReport, SubCheck, _holder_bound, _holder_lhs, _l2_norm, _smooth_integral,
                             boundedness_subchecks, c_bound, check_boundedness, check_holder,
                             check_interchange, format_table, holder_subchecks, sample_pair, sample_window,
                             to_csv)


def test_hat_norm_example():
    tau = np.array([0.0, 1.0, 2.0])
    norm_sq = _l2_norm(lambda x: eval_bspline(1, tau, x), tau, 1) ** 2
    assert norm_sq == pytest.approx(2 / 3, abs=1e-15)
    assert norm_sq <= c_bound(1) ** 2 * 2


def test_c_bound():
    assert c_bound(0) == 1.0
    assert c_bound(3) == 0.5


@given(st.integers(0, 2 ** 31 - 1), st.integers(2, 8), st.floats(0.0, 0.1))
def test_sampled_windows_respect_gap(seed, n, h):
    rng = np.random.default_rng(seed)
    t = sample_window(rng, n, h)
    assert np.all(np.diff(t) >= h - 1e-15)
    assert t[0] >= 0 and t[-1] <= 10.0
    s, u = sample_pair(rng, n, max(h, 1e-3))
    assert min(np.diff(s).min(), np.diff(u).min()) >= max(h, 1e-3) - 1e-15


def test_window_too_short():
    with pytest.raises(ValueError):
        sample_window(np.random.default_rng(0), 5, 1.0, length=2.0)


def test_subcheck_lists():
    assert boundedness_subchecks(0) == ["value"]
    assert boundedness_subchecks(1) == ["value", "dx", "dknot"]
    assert boundedness_subchecks(4) == ["value", "dx", "dknot", "dknot_dx"]
    assert holder_subchecks(0) == ["value_p0"]
    assert holder_subchecks(1) == ["value", "dx_p1", "dknot_p1"]
    assert holder_subchecks(2) == ["value", "dx", "dknot", "dknot_dx_p2"]
    assert holder_subchecks(5) == ["value", "dx", "dknot", "dknot_dx"]


def test_degree_zero_runs_only_the_value_check():
    rep = check_boundedness(0, samples=20)
    assert [c.name for c in rep.checks] == ["value"]
    # a normalised indicator meets the bound with equality
    assert rep.max_ratio == pytest.approx(1.0, abs=1e-12)
    assert rep.passed


@pytest.mark.parametrize("p", range(6))
def test_reports_pass_on_small_samples(p):
    for rep in (check_boundedness(p, samples=40, seed=p), check_holder(p, samples=40, seed=p)):
        assert rep.passed, format_table([rep])
        assert all(c.samples > 0 for c in rep.checks)


def test_identical_windows_give_zero():
    tau = np.array([0.0, 0.4, 1.1, 2.0, 2.2])
    for name in holder_subchecks(3):
        assert _holder_lhs(name, 3, tau, tau.copy(), 1) == 0.0


def test_p0_bound_scales_with_square_root():
    full = _holder_bound("value_p0", 0, 0.1, 0.5)
    half = _holder_bound("value_p0", 0, 0.1, 0.25)
    assert half / full == pytest.approx(2 ** -0.5)
    assert _holder_bound("dknot_dx_p2", 2, 0.1, 0.25) / _holder_bound("dknot_dx_p2", 2, 0.1, 0.5) \
        == pytest.approx(2 ** -0.5)
    with pytest.raises(KeyError):
        _holder_bound("missing", 2, 0.1, 0.1)


@pytest.mark.parametrize("p", range(1, 6))
def test_constant_integrand_interchange(p):
    tau = np.cumsum(np.r_[0.3, np.linspace(0.2, 0.9, p + 1)])
    one = lambda x: np.ones_like(x)
    for i in range(p + 2):
        val = _smooth_integral(one, lambda x: eval_dknot(p, tau, i, x), tau)
        expect = -1 / (p + 1) if i == 0 else (1 / (p + 1) if i == p + 1 else 0.0)
        assert val == pytest.approx(expect, abs=1e-13)


@pytest.mark.parametrize("p, order", [(1, 0), (3, 0), (2, 1), (5, 1)])
def test_interchange_checks(p, order):
    rep = check_interchange(p, samples=15, order=order, seed=3)
    assert rep.passed and rep.checks[0].samples == 15 * (p + 2)


def test_interchange_preconditions():
    with pytest.raises(ValueError):
        check_interchange(1, samples=1, order=1)
    with pytest.raises(ValueError):
        check_interchange(2, samples=1, order=2)


def test_report_pass_flag_threshold():
    ok = BoundReport("x", 1, (SubCheck("a", 3, 1.0 + 5e-10),))
    bad = BoundReport("x", 1, (SubCheck("a", 3, 1.0 + 5e-9), SubCheck("b", 2, 0.1)))
    assert ok.passed and not bad.passed
    assert bad.samples == 5 and bad.max_ratio == 1.0 + 5e-9
    assert BoundReport("empty", 0).max_ratio == 0.0


def test_table_and_csv_output():
    reps = [check_boundedness(1, samples=5), check_holder(2, samples=5)]
    table = format_table(reps)
    assert table.splitlines()[0].split() == ["lemma", "p", "check", "samples", "max_ratio", "pass"]
    assert len(table.splitlines()) == 1 + 3 + 4
    rows = list(csv.DictReader(io.StringIO(to_csv(reps))))
    assert [r["check"] for r in rows] == ["value", "dx", "dknot", "value", "dx", "dknot", "dknot_dx_p2"]
    assert all(r["pass"] == "yes" for r in rows)
