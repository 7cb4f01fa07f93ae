import io

import numpy as np
import pytest

from immunize.curves import (
    LIABILITY_KINDS,
    CashFlowSchedule,
    YieldCurve,
    cumulative_discount,
    load_cashflows,
    load_yield_history,
    present_value,
    rebucket,
    standard_liability,
    union_grid,
    write_yield_history,
)
from immunize.errors import ContractError, DomainError, FormatError, RowError


def test_flat_curve_cumulative_rate():
    c = YieldCurve.flat(0.05)
    assert c.x(10.0) == pytest.approx(0.5, abs=1e-15)
    assert c.x(80.0) == pytest.approx(4.0, abs=1e-12)


def test_interpolation_between_nodes_is_linear_in_x():
    c = YieldCurve([1.0, 2.0], [0.02, 0.03])
    # x(1) = 0.02, x(2) = 0.06
    assert c.x(1.5) == pytest.approx(0.04, abs=1e-15)
    assert c.x(0.5) == pytest.approx(0.01, abs=1e-15)


def test_constant_forward_beyond_last_term():
    c = YieldCurve([1.0, 2.0], [0.02, 0.03])
    fwd = c.x(2.0) - c.x(1.0)
    assert c.x(5.0) - c.x(2.0) == pytest.approx(3 * fwd)
    c2 = YieldCurve([1.0, 2.0], [0.02, 0.03], long_forward=0.01)
    assert c2.x(3.0) == pytest.approx(0.07)


def test_negative_term_rejected():
    with pytest.raises(DomainError):
        cumulative_discount(YieldCurve.flat(0.01), -1.0)


def test_bad_grid_rejected():
    with pytest.raises(ContractError):
        YieldCurve([2.0, 1.0], [0.01, 0.02])
    with pytest.raises(ContractError):
        YieldCurve([1.0], [np.nan])


def test_history_round_trip():
    rng = np.random.default_rng(3)
    terms = np.array([0.25, 1, 2, 5, 10, 30])
    curves = [YieldCurve(terms, rng.uniform(-0.01, 0.06, terms.size), date=f"d{k}") for k in range(5)]
    buf = io.StringIO()
    write_yield_history(curves, buf)
    back = load_yield_history(buf.getvalue())
    assert [c.date for c in back] == [c.date for c in curves]
    for a, b in zip(curves, back):
        np.testing.assert_allclose(a.grid_yields, b.grid_yields, atol=1e-12, rtol=0)


def test_history_percent_flag():
    back = load_yield_history("date,1,2\nd0,2.5,3.0\n", percent=True)
    np.testing.assert_allclose(back[0].grid_yields, [0.025, 0.03])


def test_nan_row_is_an_error_with_line_number():
    text = "date,1,2\nd0,0.01,0.02\nd1,nan,0.02\n"
    with pytest.raises(RowError) as info:
        load_yield_history(text)
    assert info.value.line == 3
    diag = []
    curves = load_yield_history(text, skip_bad_rows=True, diagnostics=diag)
    assert len(curves) == 1 and len(diag) == 1


def test_descending_header_rejected():
    with pytest.raises(FormatError):
        load_yield_history("date,2,1\nd0,0.01,0.02\n")


def test_non_numeric_header_rejected():
    with pytest.raises(FormatError):
        load_yield_history("date,1y,2y\nd0,0.01,0.02\n")


def test_full_horizon_liability():
    f = standard_liability("fullHorizon")
    assert f.dates.size == 600
    np.testing.assert_allclose(f.amounts, 1 / 600)
    assert f.dates[0] == pytest.approx(1 / 12) and f.dates[-1] == pytest.approx(50.0)


@pytest.mark.parametrize("kind", LIABILITY_KINDS)
def test_liabilities_sum_to_one(kind):
    f = standard_liability(kind)
    assert f.amounts.sum() == pytest.approx(1.0, abs=1e-12)


def test_liability_windows():
    assert standard_liability("longRun").dates.min() > 20
    med = standard_liability("medium")
    assert med.dates.min() > 15 and med.dates.max() <= 35 + 1e-9
    sl = standard_liability("shortAndLong").dates
    assert not np.any((sl > 15 + 1e-9) & (sl <= 35 + 1e-9))
    with pytest.raises(ContractError):
        standard_liability("nope")


def test_present_value_of_zero():
    c = YieldCurve.flat(0.02)
    assert present_value(c, CashFlowSchedule.zero_coupon(10.0)) == pytest.approx(np.exp(-0.2), rel=1e-14)


def test_present_value_decreases_under_upward_shift():
    c = YieldCurve([1, 5, 10, 30], [0.01, 0.02, 0.025, 0.03])
    f = standard_liability("fullHorizon")
    pvs = [present_value(c.shifted(d), f) for d in (-0.01, 0.0, 0.005, 0.01, 0.02)]
    assert np.all(np.diff(pvs) < 0)


def test_schedule_validation():
    with pytest.raises(ContractError):
        CashFlowSchedule([1.0, 1.0], [1.0, 1.0])
    with pytest.raises(ContractError):
        CashFlowSchedule([1.0], [-1.0])


def test_on_grid_requires_membership():
    cf = CashFlowSchedule([1.0, 2.0], [1.0, 2.0])
    np.testing.assert_array_equal(cf.on_grid([0.5, 1.0, 2.0]), [0.0, 1.0, 2.0])
    with pytest.raises(ContractError):
        cf.on_grid([1.0, 3.0])


def test_union_grid_merges_duplicates():
    g = union_grid([CashFlowSchedule([1.0, 2.0], [1, 1]), CashFlowSchedule([2.0 + 1e-13, 3.0], [1, 1])])
    np.testing.assert_allclose(g, [1.0, 2.0, 3.0])


def test_rebucket_preserves_total():
    f = standard_liability("medium")
    q = rebucket(f, 0.25)
    assert q.amounts.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(q.dates * 4, np.round(q.dates * 4))
    assert q.dates.size == 80


def test_load_cashflows():
    cf = load_cashflows("date,amount\n1,0.5\n2,0.5\n")
    np.testing.assert_allclose(cf.dates, [1, 2])
    with pytest.raises(RowError):
        load_cashflows("date,amount\n1,x\n")
