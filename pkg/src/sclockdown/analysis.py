"""Value-added aggregation, recovery statistics, OLS and correlation analysis."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import linalg, stats

from sclockdown.netgen import DAYS_PER_YEAR, Network

VALUE_ADDED_MODES = ("unit", "io_share")


# --------------------------------------------------------------------------- value added


def firm_value_weights(net: Network, mode: str = "unit",
                       ratios: dict[int, float] | None = None) -> np.ndarray:
    """Value added per unit of output for every firm.

    ``unit`` counts all output; ``io_share`` uses the sector value-added
    ratio, taken from ``ratios`` or else from the network's IO table.
    """
    if mode == "unit":
        return np.ones(net.n_firms)
    if mode != "io_share":
        raise ValueError(f"unknown value-added mode {mode!r}; expected one of {VALUE_ADDED_MODES}")
    if ratios is None:
        if net.io is None:
            raise ValueError("io_share mode needs an IO table with value-added rows")
        ratios = net.io.value_added_ratio()
    missing = [int(c) for c in net.sector_codes if int(c) not in ratios]
    if missing:
        raise ValueError(f"no value-added ratio for sectors {missing}")
    per_sector = np.array([ratios[int(c)] for c in net.sector_codes], dtype=np.float64)
    return per_sector[net.sector_idx]


@dataclass
class ValueAddedSeries:
    """Daily value added: national ``gdp`` and per-region ``grp`` (days x regions)."""

    regions: np.ndarray
    grp: np.ndarray
    mode: str

    @property
    def gdp(self) -> np.ndarray:
        return self.grp.sum(axis=1)

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.grp, columns=[f"grp_{int(r)}" for r in self.regions])
        df.insert(0, "gdp", self.gdp)
        df.insert(0, "day", np.arange(len(df)))
        return df


def value_added(p_act: np.ndarray, net: Network, mode: str = "unit",
                ratios: dict[int, float] | None = None) -> ValueAddedSeries:
    """Aggregate a ``(days, firms)`` output matrix (or one day) into GRP per region."""
    p = np.atleast_2d(np.asarray(p_act, dtype=np.float64))
    if p.shape[1] != net.n_firms:
        raise ValueError(f"expected {net.n_firms} firm columns, got {p.shape[1]}")
    va = p * firm_value_weights(net, mode, ratios)
    grp = np.stack([np.bincount(net.region_idx, weights=row, minlength=net.n_regions)
                    for row in va])
    return ValueAddedSeries(net.region_codes, grp, mode)


def daily_gdp_from_index(yearly_gdp: float, index_base: float, index_month: float) -> float:
    """Daily GDP scaled by an activity index relative to its base month."""
    if not index_base > 0:
        raise ValueError(f"index_base must be positive, got {index_base}")
    return yearly_gdp / DAYS_PER_YEAR * index_month / index_base


# --------------------------------------------------------------------------- recovery


@dataclass
class RecoveryMetrics:
    loss: float
    gain: float
    ratio: float

    @property
    def defined(self) -> bool:
        return not math.isnan(self.ratio)


def recovery_metrics(no_lockdown, baseline, treated, window: int | slice | None = None,
                     eps: float = 1e-12) -> RecoveryMetrics:
    """Loss of ``baseline`` against ``no_lockdown`` and gain of ``treated`` over ``baseline``.

    Sums run over the first ``window`` days (or a slice; default all). The
    ratio is ``gain / loss`` and NaN when the loss is not positive.
    """
    arrays = [np.asarray(x, dtype=np.float64) for x in (no_lockdown, baseline, treated)]
    if len({a.shape for a in arrays}) != 1:
        raise ValueError("series must be aligned (same shape)")
    sel = slice(None) if window is None else (window if isinstance(window, slice)
                                               else slice(0, window))
    ref, base, tr = (a[sel] for a in arrays)
    loss = float((ref - base).sum())
    gain = float((tr - base).sum())
    ratio = gain / loss if loss > eps else math.nan
    return RecoveryMetrics(loss, gain, ratio)


# --------------------------------------------------------------------------- regression


class RankDeficientError(ValueError):
    """The design matrix has linearly dependent columns."""


@dataclass
class RegressionResult:
    names: list[str]
    coef: np.ndarray
    se: np.ndarray
    r2: float
    n_obs: int
    sigma: float

    @property
    def t_values(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.coef / self.se

    @property
    def p_values(self) -> np.ndarray:
        dof = self.n_obs - len(self.coef)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.abs(self.t_values)
        p = 2.0 * stats.t.sf(t, dof)
        return np.where(self.se == 0, np.where(self.coef == 0, 1.0, 0.0), p)

    def report(self) -> pd.DataFrame:
        return pd.DataFrame({"term": self.names, "coef": self.coef, "se": self.se,
                             "p_stars": [p_stars(p) for p in self.p_values]})


def p_stars(p: float) -> str:
    if p < 0.01:
        return "***"
    if p < 0.05:
        return "**"
    if p < 0.1:
        return "*"
    return ""


def ols_fit(X, y, names: list[str] | None = None, rank_tol: float = 1e-10) -> RegressionResult:
    """Least squares via column-pivoted QR with classical standard errors.

    ``X`` must already contain the intercept column if one is wanted. R² is
    measured against the intercept-only model.

    Raises
    ------
    RankDeficientError
        Naming the columns that are linear combinations of the others.
    """
    if isinstance(X, pd.DataFrame):
        names = list(X.columns) if names is None else names
        X = X.to_numpy(dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n, k = X.shape
    names = [f"x{j}" for j in range(k)] if names is None else list(names)
    if len(names) != k or len(y) != n:
        raise ValueError("shape mismatch between X, y and names")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("X and y must be finite")
    if n <= k:
        raise ValueError(f"need more observations ({n}) than parameters ({k})")

    q, r, piv = linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    rank = int(np.sum(diag > rank_tol * max(diag[0], 1e-300)))
    if rank < k:
        dependent = sorted(names[j] for j in piv[rank:])
        raise RankDeficientError(f"design matrix is rank deficient; dependent columns: {dependent}")
    beta_p = linalg.solve_triangular(r, q.T @ y)
    coef = np.empty(k)
    coef[piv] = beta_p
    resid = y - X @ coef
    rss = float(resid @ resid)
    sigma2 = rss / (n - k)
    r_inv = linalg.solve_triangular(r, np.eye(k))
    cov_p = sigma2 * (r_inv @ r_inv.T)
    se = np.empty(k)
    se[piv] = np.sqrt(np.clip(np.diag(cov_p), 0.0, None))
    tss = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - rss / tss if tss > 0 else 0.0
    return RegressionResult(names, coef, se, float(r2), n, math.sqrt(sigma2))


def correlation_matrix(data: pd.DataFrame) -> tuple[pd.DataFrame, list[str]]:
    """Pearson correlations; zero-variance columns give NaN rows/columns and are listed."""
    if len(data) < 2:
        raise ValueError("need at least two rows")
    x = data.to_numpy(dtype=np.float64)
    xc = x - x.mean(axis=0)
    norm = np.sqrt((xc ** 2).sum(axis=0))
    flat = norm == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        z = xc / norm
    corr = z.T @ z
    corr[flat, :] = np.nan
    corr[:, flat] = np.nan
    ok = ~flat
    corr[np.ix_(ok, ok)] = np.clip(corr[np.ix_(ok, ok)], -1.0, 1.0)
    np.fill_diagonal(corr, np.where(flat, np.nan, 1.0))
    cols = list(data.columns)
    return pd.DataFrame(corr, index=cols, columns=cols), [c for c, f in zip(cols, flat) if f]


def partial_correlation(x, y, controls=None) -> float:
    """Correlation of ``x`` and ``y`` after regressing both on ``controls`` plus an intercept."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    z = np.ones((len(x), 1))
    if controls is not None:
        c = np.asarray(controls, dtype=np.float64)
        z = np.column_stack([z, c.reshape(len(x), -1)])
    rx = x - z @ np.linalg.lstsq(z, x, rcond=None)[0]
    ry = y - z @ np.linalg.lstsq(z, y, rcond=None)[0]
    denom = math.sqrt(float(rx @ rx) * float(ry @ ry))
    return float(rx @ ry / denom) if denom > 0 else math.nan


# --------------------------------------------------------------------------- datasets


ONE_REGION_SPECS: dict[int, list[str]] = {
    1: [],
    2: ["InLink"],
    3: ["InLoop"],
    4: ["OutLink"],
    5: ["Potential"],
    6: ["Sub"],
    7: ["InLink", "InLoop", "OutLink", "Potential", "Sub"],
}
TWO_REGION_SPECS: dict[int, list[str]] = {
    1: ["Link_ab"],
    2: ["Link_ba"],
    3: ["Pot_ab"],
    4: ["Pot_ba"],
    5: ["Loop_ab"],
    6: ["Sub_ba"],
    7: ["Link_ab", "Link_ba", "Pot_ab", "Pot_ba", "Loop_ab", "Sub_ba"],
}
ONE_REGION_CONTROLS = ["GRP"]
TWO_REGION_CONTROLS = ["Bi_ab", "GRP_b", "GRP_b2"]


@dataclass
class RegressionDataset:
    X: pd.DataFrame
    y: pd.Series
    dropped: int
    keys: pd.DataFrame


def one_region_variables(regions: pd.DataFrame, lift_one: pd.DataFrame) -> pd.DataFrame:
    """All one-region variables keyed by region; GRP and degree in logs."""
    df = regions.merge(lift_one[["region", "recovery"]], on="region", how="inner")
    with np.errstate(divide="ignore"):
        return pd.DataFrame({
            "region": df["region"],
            "RecRatio": df["recovery"],
            "GRP": np.log(df["grp"]),
            "Degree": np.log(df["total_degree"].astype(float)),
            "InLink": df["in_link_share"],
            "InLoop": df["in_loop_share"],
            "OutLink": df["out_link_share"],
            "Potential": df["avg_potential"],
            "Sub": df["sub"],
        })


def two_region_variables(pairs: pd.DataFrame, regions: pd.DataFrame,
                         lift_two: pd.DataFrame) -> pd.DataFrame:
    """All two-region variables keyed by ordered pair; Bi_ab and GRP_b in logs."""
    df = pairs.merge(lift_two[["region_a", "region_b", "relative_recovery"]],
                     on=["region_a", "region_b"], how="inner")
    rev = pairs[["region_a", "region_b", "sub_ab"]].rename(
        columns={"region_a": "region_b", "region_b": "region_a", "sub_ab": "sub_ba"})
    df = df.merge(rev, on=["region_a", "region_b"], how="left")
    grp = regions.set_index("region")["grp"]
    with np.errstate(divide="ignore"):
        log_grp_b = np.log(df["region_b"].map(grp).astype(float))
        return pd.DataFrame({
            "region_a": df["region_a"], "region_b": df["region_b"],
            "Recov_a": df["relative_recovery"],
            "Link_ab": df["link_ab"], "Link_ba": df["link_ba"],
            "Pot_ab": df["pot_ab"], "Pot_ba": df["pot_ba"],
            "Sub_ab": df["sub_ab"], "Sub_ba": df["sub_ba"],
            "Loop_ab": df["loop_ab"],
            "Bi_ab": np.log(df["bi_links"].astype(float)),
            "GRP_b": log_grp_b,
            "GRP_b2": log_grp_b ** 2,
        })


def build_regression_dataset(variables: pd.DataFrame, table: str = "one_region",
                             spec: int = 7) -> RegressionDataset:
    """Design matrix (with ``Constant``) and response for one column of a regression table.

    ``variables`` comes from :func:`one_region_variables` or
    :func:`two_region_variables`. Rows with any undefined value are dropped
    and counted.
    """
    if table == "one_region":
        cols = ONE_REGION_SPECS[spec] + ONE_REGION_CONTROLS
        response, key_cols = "RecRatio", ["region"]
    elif table == "two_region":
        cols = TWO_REGION_SPECS[spec] + TWO_REGION_CONTROLS
        response, key_cols = "Recov_a", ["region_a", "region_b"]
    else:
        raise ValueError(f"unknown table {table!r}; expected 'one_region' or 'two_region'")
    sub = variables[key_cols + [response] + cols].replace([np.inf, -np.inf], np.nan)
    ok = sub.notna().all(axis=1)
    kept = sub[ok].reset_index(drop=True)
    if kept.empty:
        raise ValueError("regression dataset is empty after dropping undefined rows")
    X = kept[cols].astype(float)
    X["Constant"] = 1.0
    return RegressionDataset(X, kept[response].astype(float), int((~ok).sum()), kept[key_cols])


def regression_report(result: RegressionResult, path: str | Path | None = None) -> pd.DataFrame:
    """``term, coef, se, p_stars`` plus ``r2`` and ``n_obs`` rows."""
    rep = result.report()
    extra = pd.DataFrame({"term": ["R-squared", "Observations"],
                          "coef": [result.r2, float(result.n_obs)], "se": [np.nan, np.nan],
                          "p_stars": ["", ""]})
    out = pd.concat([rep, extra], ignore_index=True)
    if path is not None:
        out.to_csv(path, index=False)
    return out
