import numpy as np
import pytest

from conftest import sloped_curve
from immunize import abw
from immunize.curves import YieldCurve, rebucket, standard_liability, zero_coupon_bonds
from immunize.errors import ContractError
from immunize.hedging import (
    MethodSpec,
    build_portfolio,
    dynamic_experiment,
    dynamic_step,
    funding_ratio,
    initial_state,
    parse_method,
    run_path,
    static_experiment,
    underfunding,
)


def _history(n, seed=0):
    rng = np.random.default_rng(seed)
    base = sloped_curve()
    level = np.cumsum(rng.normal(0, 0.0005, n))
    slope = np.cumsum(rng.normal(0, 0.0003, n))
    tilt = (base.grid_terms - 10) / 20
    return [YieldCurve(base.grid_terms, base.grid_yields + level[k] + slope[k] * tilt, date=f"t{k:03d}")
            for k in range(n)]


def _flat_model(rate=0.01):
    return abw.single_regime(mu=np.zeros(3), Phi=np.zeros((3, 3)), sigma=np.zeros(3),
                             delta0=rate / 4, delta1=np.ones(3))


def test_parse_method_names():
    assert parse_method("ri2").name == "RI(2)"
    assert parse_method("RI(1)").level == 1
    assert parse_method("ri0-linf").name == "RI(0)-linf"
    assert parse_method("hd").name == "HD"
    assert parse_method("krd", I=4).kind == "krd"
    with pytest.raises(ContractError):
        parse_method("ri")
    with pytest.raises(ContractError):
        parse_method("ri1", norm="l1")


def test_underfunding():
    np.testing.assert_allclose(underfunding(np.array([0.9, 1.0, 1.2])), [0.1, 0.0, 0.0])


def test_unchanged_curve_keeps_full_funding():
    curve = sloped_curve()
    history = [curve] * 6
    res = static_experiment(history, "fullHorizon", horizons=[1, 3], methods=("ri0", "ri2", "hd", "krd"))
    np.testing.assert_allclose(res.rows["funding_ratio"], 1.0, atol=1e-10)
    assert np.all(res.rows["underfunding"] < 1e-10)


def test_static_row_count_and_skips():
    hist = _history(12)
    methods = ("ri0", "ri1", "krd")
    res = static_experiment(hist, "medium", methods=methods, horizons=range(1, 5))
    assert len(res.rows) == (12 - 4) * len(methods) * 4
    assert res.skipped_dates == 4
    assert set(res.rows["method"]) == {"RI(0)", "RI(1)", "KRD"}
    assert res.mean_underfunding().shape == (3, 4)
    assert list(res.percentile_table(d=4).columns) == ["p90", "p95", "p99"]
    assert list(res.leverage_table().columns) == ["median", "p95", "p99"]
    with pytest.raises(ContractError):
        res.percentile_table(d=30)


def test_static_too_short():
    with pytest.raises(ContractError):
        static_experiment(_history(3), "fullHorizon", horizons=[5])


def test_funding_ratio_invariant_to_liability_scale():
    curve = sloped_curve()
    liab = standard_liability("longRun")
    bonds = zero_coupon_bonds([1, 2, 5, 10, 30])
    z1 = build_portfolio("ri2", curve, liab, bonds).z
    z7 = build_portfolio("ri2", curve, liab.scaled(7.0), bonds).z
    np.testing.assert_allclose(z7, 7 * z1, rtol=1e-9)
    other = curve.shifted(0.004)
    assert funding_ratio(z7, bonds, liab.scaled(7.0), other) == pytest.approx(funding_ratio(z1, bonds, liab, other))


def test_static_threads_deterministic():
    hist = _history(10, seed=2)
    a = static_experiment(hist, "fullHorizon", methods=("ri1", "hd"), horizons=[1, 2], threads=1).rows
    b = static_experiment(hist, "fullHorizon", methods=("ri1", "hd"), horizons=[1, 2], threads=3).rows
    assert a.equals(b)


def test_initial_state_and_accounting():
    curve = YieldCurve.flat(0.02)
    liab = standard_liability("fullHorizon")
    spec = MethodSpec("ri", level=1, I=6)
    st = initial_state(spec, curve, liab, np.array([1.0, 2, 5, 10, 30]))
    P0 = float(np.sum(curve.discount(liab.dates) * liab.amounts))
    assert st.V == pytest.approx(P0) and st.P == pytest.approx(P0)
    assert st.C == pytest.approx(st.V - np.sum(st.z * curve.discount(st.maturities)))
    nxt = dynamic_step(st, curve, spec, liab, np.array([1.0, 2, 5, 10, 30]))
    assert nxt.C == pytest.approx(nxt.V - np.sum(nxt.z * curve.discount(nxt.maturities)))
    assert nxt.R == pytest.approx(np.exp(0.02 * 0.25))


def test_frozen_flat_curve_has_no_error():
    curve = YieldCurve.flat(0.03, max_term=60.0)
    liab = rebucket(standard_liability("fullHorizon"), 0.25)
    for spec in (MethodSpec("ri", level=2, I=6), MethodSpec("hd"), MethodSpec("krd")):
        errs = run_path([curve] * 9, spec, liab)
        np.testing.assert_allclose(errs, 0.0, atol=1e-12)
    with pytest.raises(ContractError):
        run_path([curve] * 3, MethodSpec("krd"), standard_liability("fullHorizon"))


def test_degenerate_model_gives_zero_errors():
    res = dynamic_experiment(_flat_model(), methods=("ri1", "hd", "krd"), horizon=2.0, paths=3, seed=5, I=6)
    for e in res.errors.values():
        assert e.shape == (3, 8)
        np.testing.assert_allclose(e, 0.0, atol=1e-12)
    assert res.dropped == 0


def test_dynamic_threads_deterministic():
    model = abw.table5()
    a = dynamic_experiment(model, methods=("ri2",), horizon=1.0, paths=4, seed=1, threads=1)
    b = dynamic_experiment(model, methods=("ri2",), horizon=1.0, paths=4, seed=1, threads=2)
    np.testing.assert_array_equal(a.errors["RI(2)"], b.errors["RI(2)"])
    rows = a.rows()
    assert len(rows) == 4 * 4
    mse = (rows[rows["quarter"] == 4]["error"] ** 2).mean()
    assert mse == pytest.approx(a.mse()["RI(2)"])


def test_tail_error_grows_with_time():
    res = dynamic_experiment(abw.table5(), methods=("ri2",), horizon=5.0, paths=40, seed=0)
    p99 = res.percentile_path(99)["RI(2)"]
    slope = np.polyfit(res.quarters, p99, 1)[0]
    assert slope >= 0


def test_dynamic_requires_quarterly_step():
    with pytest.raises(ContractError):
        dynamic_experiment(_flat_model(), delta=0.5, paths=1)
