import math

import numpy as np
import pandas as pd
import pytest

from sclockdown.analysis import (
    ONE_REGION_SPECS,
    RankDeficientError,
    build_regression_dataset,
    correlation_matrix,
    daily_gdp_from_index,
    firm_value_weights,
    ols_fit,
    one_region_variables,
    p_stars,
    partial_correlation,
    recovery_metrics,
    regression_report,
    two_region_variables,
    value_added,
)
from sclockdown.netgen import IoTable

from conftest import make_network


def _two_region_net():
    return make_network(4, [(0, 1, 1.0), (2, 3, 1.0)], [1.0] * 4, sectors=[1, 2, 1, 2],
                        regions=[1, 1, 2, 2])


class TestValueAdded:
    def test_flat_output_flat_gdp(self):
        net = _two_region_net()
        va = value_added(np.tile(net.p_ini, (5, 1)), net)
        assert np.all(va.gdp == va.gdp[0])
        assert va.grp[0, 0] == va.grp[0, 1]

    def test_io_share_weighted_sum(self):
        net = _two_region_net()
        p = np.array([[2.0, 3.0, 5.0, 7.0]])
        va = value_added(p, net, "io_share", ratios={1: 0.25, 2: 0.5})
        assert va.grp[0].tolist() == [2 * 0.25 + 3 * 0.5, 5 * 0.25 + 7 * 0.5]

    def test_io_share_from_table(self):
        io = IoTable({(1, 2): 30.0}, {}, {1: 10.0, 2: 70.0})
        assert io.value_added_ratio() == pytest.approx({1: 1.0, 2: 0.7})

    def test_missing_ratio(self):
        with pytest.raises(ValueError):
            firm_value_weights(_two_region_net(), "io_share", ratios={1: 0.5})
        with pytest.raises(ValueError):
            firm_value_weights(_two_region_net(), "bogus")

    def test_gdp_is_sum_of_grp(self, small_net):
        rng = np.random.default_rng(0)
        va = value_added(rng.uniform(0, 1, (3, small_net.n_firms)) * small_net.p_ini, small_net)
        assert np.allclose(va.gdp, va.grp.sum(axis=1), rtol=1e-12)
        frame = va.to_frame()
        assert list(frame.columns[:2]) == ["day", "gdp"]

    @pytest.mark.parametrize("yearly,base,month,want", [(365.0, 1.0, 1.0, 1.0),
                                                        (365.0, 100.0, 90.0, 0.9),
                                                        (730.0, 80.0, 80.0, 2.0)])
    def test_daily_gdp_from_index(self, yearly, base, month, want):
        assert daily_gdp_from_index(yearly, base, month) == pytest.approx(want)

    def test_daily_gdp_bad_base(self):
        with pytest.raises(ValueError):
            daily_gdp_from_index(365.0, 0.0, 1.0)


class TestRecovery:
    def test_limits(self):
        ref = np.full(5, 10.0)
        base = np.array([10, 8, 6, 7, 9.0])
        assert recovery_metrics(ref, base, ref).ratio == pytest.approx(1.0)
        assert recovery_metrics(ref, base, base).ratio == 0.0

    def test_hand_sum(self):
        ref = [10.0, 10.0, 10.0]
        base = [9.0, 7.0, 8.0]
        treated = [9.5, 9.0, 8.0]
        m = recovery_metrics(ref, base, treated, window=2)
        assert (m.loss, m.gain) == (4.0, 2.5)
        assert m.ratio == pytest.approx(0.625)

    def test_undefined(self):
        m = recovery_metrics([1.0], [1.0], [1.0])
        assert not m.defined

    def test_misaligned(self):
        with pytest.raises(ValueError):
            recovery_metrics([1.0, 2.0], [1.0], [1.0])


class TestOls:
    def test_exact_line(self):
        x = np.arange(1.0, 6.0)
        res = ols_fit(np.column_stack([x, np.ones(5)]), 2 * x, ["x", "Constant"])
        assert res.coef == pytest.approx([2.0, 0.0], abs=1e-12)
        assert res.r2 == pytest.approx(1.0) and res.sigma == pytest.approx(0.0, abs=1e-12)

    def test_intercept_only(self):
        y = np.array([1.0, 4.0, 2.0, 5.0])
        res = ols_fit(np.ones((4, 1)), y, ["Constant"])
        assert res.coef[0] == pytest.approx(y.mean())
        assert res.r2 == 0.0

    def test_five_point_normal_equations(self):
        # sums: n=5, Sx=10, Sxx=30, Sy=12, Sxy=34 -> slope 1.0, intercept 0.4
        x = np.array([0.0, 1.0, 2.0, 3.0, 4.0])
        y = np.array([1.0, 1.0, 2.0, 3.0, 5.0])
        res = ols_fit(np.column_stack([x, np.ones(5)]), y)
        assert res.coef == pytest.approx([1.0, 0.4], abs=1e-10)
        resid = y - (1.0 * x + 0.4)
        sigma2 = resid @ resid / 3
        assert res.se[0] == pytest.approx(math.sqrt(sigma2 / 10.0), abs=1e-10)
        assert res.se[1] == pytest.approx(math.sqrt(sigma2 * 30.0 / 50.0), abs=1e-10)

    def test_minimizes_squared_error(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=30)
        y = 1.5 * x - 0.3 + rng.normal(scale=0.5, size=30)
        res = ols_fit(np.column_stack([x, np.ones(30)]), y)
        best = res.coef
        sse = lambda b: float(((y - b[0] * x - b[1]) ** 2).sum())
        grid = np.linspace(-1e-3, 1e-3, 21)
        assert all(sse(best) <= sse(best + [d1, d2]) + 1e-6 for d1 in grid for d2 in grid)

    def test_rank_deficiency_names_columns(self):
        x = np.arange(6.0)
        X = pd.DataFrame({"a": x, "b": 2 * x, "Constant": np.ones(6)})
        with pytest.raises(RankDeficientError, match="'b'|'a'"):
            ols_fit(X, x + 1)

    def test_report_rows(self, tmp_path):
        x = np.arange(8.0)
        res = ols_fit(np.column_stack([x, np.ones(8)]), x + np.sin(x), ["x", "Constant"])
        rep = regression_report(res, tmp_path / "r.csv")
        assert rep["term"].tolist() == ["x", "Constant", "R-squared", "Observations"]
        assert (tmp_path / "r.csv").exists()

    @pytest.mark.parametrize("p,stars", [(0.005, "***"), (0.03, "**"), (0.07, "*"), (0.5, "")])
    def test_stars(self, p, stars):
        assert p_stars(p) == stars


class TestCorrelation:
    def test_identity_and_negation(self):
        x = np.array([1.0, 2.0, 4.0, 8.0])
        corr, flagged = correlation_matrix(pd.DataFrame({"x": x, "nx": -x}))
        assert corr.loc["x", "x"] == 1.0 and corr.loc["x", "nx"] == pytest.approx(-1.0)
        assert flagged == []

    def test_four_rows_by_hand(self):
        # deviations x: -1.5,-0.5,0.5,1.5 ; y: -1,-1,1,1 -> r = 4 / sqrt(5 * 4)
        df = pd.DataFrame({"x": [1.0, 2.0, 3.0, 4.0], "y": [0.0, 0.0, 2.0, 2.0]})
        corr, _ = correlation_matrix(df)
        assert corr.loc["x", "y"] == pytest.approx(4 / math.sqrt(20), abs=1e-12)

    def test_zero_variance_flagged(self):
        corr, flagged = correlation_matrix(pd.DataFrame({"x": [1.0, 2.0, 3.0], "c": [5.0] * 3}))
        assert flagged == ["c"] and math.isnan(corr.loc["x", "c"])

    def test_positive_semidefinite(self):
        rng = np.random.default_rng(0)
        corr, _ = correlation_matrix(pd.DataFrame(rng.normal(size=(20, 6))))
        c = corr.to_numpy()
        assert np.allclose(c, c.T)
        assert np.linalg.eigvalsh(c).min() > -1e-12

    def test_partial_correlation_removes_control(self):
        rng = np.random.default_rng(1)
        z = rng.normal(size=500)
        x = z + 0.1 * rng.normal(size=500)
        y = z + 0.1 * rng.normal(size=500)
        assert partial_correlation(x, y) > 0.9
        assert abs(partial_correlation(x, y, z)) < 0.15


def _region_frames():
    regions = pd.DataFrame({
        "region": [1, 2, 3, 4, 5], "grp": [10.0, 20.0, 30.0, 40.0, 50.0],
        "total_degree": [5, 6, 7, 8, 9], "in_link_share": [0.1, 0.2, 0.3, 0.4, 0.5],
        "in_loop_share": [0.0, 0.1, 0.0, 0.2, 0.1], "out_link_share": [0.5, 0.4, 0.3, 0.3, 0.1],
        "avg_potential": [0.3, -0.1, 0.2, 0.0, -0.4], "sub": [0.5, np.nan, 0.1, 0.3, 0.2],
    })
    lift = pd.DataFrame({"region": [1, 2, 3, 4, 5], "recovery": [0.4, 0.5, 0.6, 0.7, 0.75]})
    return regions, lift


class TestDatasets:
    def test_one_region_full_spec(self):
        regions, lift = _region_frames()
        ds = build_regression_dataset(one_region_variables(regions, lift), "one_region", 7)
        assert list(ds.X.columns) == ONE_REGION_SPECS[7] + ["GRP", "Constant"]
        assert ds.X.shape == (4, 7)
        assert ds.dropped == 1
        assert ds.X["GRP"].iloc[0] == pytest.approx(math.log(10.0))
        assert ds.keys["region"].tolist() == [1, 3, 4, 5]

    def test_two_region_assembly(self):
        regions, _ = _region_frames()
        pairs = pd.DataFrame({
            "region_a": [1, 2], "region_b": [2, 1], "link_ab": [0.1, 0.2], "link_ba": [0.2, 0.1],
            "pot_ab": [0.0, 0.3], "pot_ba": [0.3, 0.0], "loop_ab": [0.05, 0.05],
            "bi_links": [4, 4], "sub_ab": [0.6, 0.9],
        })
        lift2 = pd.DataFrame({"region_a": [1, 2], "region_b": [2, 1],
                              "relative_recovery": [1.1, 1.2]})
        v = two_region_variables(pairs, regions, lift2)
        row = v.iloc[0]
        assert row["Sub_ba"] == 0.9 and row["Sub_ab"] == 0.6
        assert row["GRP_b"] == pytest.approx(math.log(20.0))
        assert row["GRP_b2"] == pytest.approx(math.log(20.0) ** 2)
        assert row["Bi_ab"] == pytest.approx(math.log(4.0))

    def test_empty_dataset(self):
        regions, lift = _region_frames()
        regions["sub"] = np.nan
        with pytest.raises(ValueError):
            build_regression_dataset(one_region_variables(regions, lift), "one_region", 6)
