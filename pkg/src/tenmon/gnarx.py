"""GNARX model: design construction, least-squares estimation, prediction.

The model regresses each node's value on its own lags, on weighted averages
of its stage-r neighbours' lags, and on lagged exogenous covariates:

    x[i, t] = sum_l alpha[i, l] * x[i, t-l]
            + sum_l sum_r beta[l, r] * sum_{j in N_r(i)} w[i, j] * x[j, t-l]
            + sum_h sum_q gamma[h, q] * z[h, i, t-q]
            + noise

Estimation stacks every usable (node, time) instance into one ordinary
least-squares system.  Missing values are NaN throughout; any row touching a
missing value is dropped and recorded, never imputed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.stats import norm

from tenmon.graph import Graph, NeighbourhoodTable, neighbourhoods

MIN_ROWS_PER_COEF = 10

SIGNIFICANCE_LEVELS = ((0.001, "***"), (0.01, "**"), (0.05, "*"), (0.1, "."))


class EstimationError(ValueError):
    """Raised when a regression system cannot be estimated as specified."""


def significance_stars(p_value: float) -> str:
    """Conventional significance marker for a p-value.

    ``***`` p < 0.001, ``**`` p < 0.01, ``*`` p < 0.05, ``.`` p <= 0.1.
    """
    for threshold, marker in SIGNIFICANCE_LEVELS[:3]:
        if p_value < threshold:
            return marker
    if p_value <= 0.1:
        return "."
    return ""


@dataclass(frozen=True)
class GnarxOrder:
    """Model order: p own lags, max neighbour stage s_l per lag, covariate
    lags q_h (lag 0 means the contemporaneous value is used)."""

    p: int
    s: tuple[int, ...]
    q: tuple[int, ...] = ()
    global_alpha: bool = True

    def __post_init__(self):
        object.__setattr__(self, "s", tuple(int(v) for v in self.s))
        object.__setattr__(self, "q", tuple(int(v) for v in self.q))
        if self.p < 1:
            raise ValueError("autoregressive order p must be >= 1")
        if len(self.s) != self.p:
            raise ValueError(f"s must have length p={self.p}, got {len(self.s)}")
        if any(v < 0 for v in self.s) or any(v < 0 for v in self.q):
            raise ValueError("stage and covariate lag orders must be >= 0")

    @property
    def n_covariates(self) -> int:
        return len(self.q)

    @property
    def max_stage(self) -> int:
        return max(self.s) if self.s else 0

    @property
    def min_t(self) -> int:
        """Earliest usable response index: every lag must exist."""
        return max(self.p, max(self.q, default=0))

    def n_coefficients(self, n_nodes: int) -> int:
        alpha = self.p * (n_nodes if not self.global_alpha else 1)
        return alpha + sum(self.s) + sum(qh + 1 for qh in self.q)

    def column_names(self, n_nodes: int) -> list[str]:
        names = []
        if self.global_alpha:
            names += [f"alpha_l{l}" for l in range(1, self.p + 1)]
        else:
            names += [
                f"alpha_l{l}_n{i}" for l in range(1, self.p + 1) for i in range(n_nodes)
            ]
        names += [
            f"beta_l{l}_r{r}"
            for l in range(1, self.p + 1)
            for r in range(1, self.s[l - 1] + 1)
        ]
        names += [
            f"gamma{h}_q{q}"
            for h in range(1, self.n_covariates + 1)
            for q in range(self.q[h - 1] + 1)
        ]
        return names


@dataclass(frozen=True)
class TenSeries:
    """Node-indexed observation panel plus covariate panels.

    ``values`` is |V| x T; ``covariates`` is H x |V| x T (H may be zero).
    Missing entries are NaN, never silently zero.
    """

    values: np.ndarray
    covariates: np.ndarray = None
    node_labels: tuple[str, ...] = None
    time_labels: tuple = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise ValueError("values must be a 2-D (nodes x time) array")
        object.__setattr__(self, "values", values)
        n, t = values.shape
        cov = self.covariates
        if cov is None:
            cov = np.empty((0, n, t))
        cov = np.asarray(cov, dtype=float)
        if cov.ndim != 3 or cov.shape[1:] != (n, t):
            raise ValueError(
                f"covariates must have shape (H, {n}, {t}), got {cov.shape}"
            )
        object.__setattr__(self, "covariates", cov)
        if self.node_labels is None:
            object.__setattr__(self, "node_labels", tuple(str(i) for i in range(n)))
        else:
            object.__setattr__(self, "node_labels", tuple(self.node_labels))
            if len(self.node_labels) != n:
                raise ValueError("node_labels length must match node count")
        if self.time_labels is not None:
            object.__setattr__(self, "time_labels", tuple(self.time_labels))
            if len(self.time_labels) != t:
                raise ValueError("time_labels length must match time count")

    @property
    def n_nodes(self) -> int:
        return self.values.shape[0]

    @property
    def n_time(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class DesignSystem:
    """Stacked regression system with row bookkeeping."""

    y: np.ndarray
    X: np.ndarray
    rows: list = field(repr=False)  # (node, t) per kept row
    dropped: list = field(repr=False)  # (node, t) removed for missing values
    columns: list[str] = field(repr=False)


@dataclass(frozen=True)
class GnarxFit:
    """Estimated GNARX coefficients with classical OLS inference."""

    order: GnarxOrder
    n_nodes: int
    names: tuple[str, ...]
    estimates: np.ndarray
    std_errors: np.ndarray
    p_values: np.ndarray
    residual_variance: float
    n_obs_used: int
    rmse: float

    @property
    def alpha(self) -> np.ndarray:
        """Own-lag coefficients, shape (p,) or (p, n_nodes)."""
        p = self.order.p
        if self.order.global_alpha:
            return self.estimates[:p]
        return self.estimates[: p * self.n_nodes].reshape(p, self.n_nodes)

    @property
    def beta(self) -> list[np.ndarray]:
        """Per lag, the stage coefficients (length s_l)."""
        start = self.order.p * (1 if self.order.global_alpha else self.n_nodes)
        out = []
        for sl in self.order.s:
            out.append(self.estimates[start : start + sl])
            start += sl
        return out

    @property
    def gamma(self) -> list[np.ndarray]:
        """Per covariate, the lag coefficients (length q_h + 1)."""
        start = self.order.p * (1 if self.order.global_alpha else self.n_nodes)
        start += sum(self.order.s)
        out = []
        for qh in self.order.q:
            out.append(self.estimates[start : start + qh + 1])
            start += qh + 1
        return out

    def to_report(self) -> dict:
        """JSON-ready fit report."""
        table = [
            {
                "name": name,
                "estimate": float(est),
                "std_error": float(se),
                "p_value": float(p),
                "significance": significance_stars(float(p)),
            }
            for name, est, se, p in zip(
                self.names, self.estimates, self.std_errors, self.p_values
            )
        ]
        return {
            "coefficients": table,
            "rmse": float(self.rmse),
            "n_obs_used": int(self.n_obs_used),
        }


def _neighbour_average(w_row_matrix: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Weighted neighbour average with NaN propagation only where a weighted
    neighbour is actually missing; empty neighbourhoods contribute zero."""
    missing = ~np.isfinite(x)
    agg = w_row_matrix @ np.where(missing, 0.0, x)
    if missing.any():
        touched = (w_row_matrix[:, missing] != 0).any(axis=1)
        agg[touched] = np.nan
    return agg


def _regressor_block(
    series: TenSeries,
    nbrs: NeighbourhoodTable | None,
    order: GnarxOrder,
    t: int,
) -> np.ndarray:
    """The (n_nodes x n_coefficients) regressor matrix for one time point."""
    values = series.values
    n = series.n_nodes
    parts = []
    for lag in range(1, order.p + 1):
        x_lag = values[:, t - lag]
        if order.global_alpha:
            parts.append(x_lag[:, None])
        else:
            # node i loads only its own column; a missing own lag puts the
            # NaN on the diagonal, zeros elsewhere are structural
            block = np.zeros((n, n))
            block[np.arange(n), np.arange(n)] = x_lag
            parts.append(block)
    for lag in range(1, order.p + 1):
        x_lag = values[:, t - lag]
        for stage in range(1, order.s[lag - 1] + 1):
            w = nbrs.weight_matrix(stage)
            parts.append(_neighbour_average(w, x_lag)[:, None])
    for h in range(order.n_covariates):
        for q_lag in range(order.q[h] + 1):
            parts.append(series.covariates[h][:, t - q_lag][:, None])
    return np.hstack(parts)


def _resolve_neighbourhoods(
    g: Graph, order: GnarxOrder, nbrs: NeighbourhoodTable | None
) -> NeighbourhoodTable | None:
    if order.max_stage == 0:
        return nbrs
    if nbrs is None:
        return neighbourhoods(g, order.max_stage)
    if nbrs.r_max < order.max_stage:
        raise ValueError(
            f"neighbourhood table covers stages up to {nbrs.r_max}, "
            f"model needs {order.max_stage}"
        )
    return nbrs


def build_design(
    series: TenSeries,
    g: Graph,
    nbrs: NeighbourhoodTable | None,
    order: GnarxOrder,
    t_range,
) -> DesignSystem:
    """Stack one regression row per (node, t) with t in ``t_range``.

    Rows containing any missing value (response or regressor) are dropped and
    recorded in the returned system.
    """
    nbrs = _resolve_neighbourhoods(g, order, nbrs)
    t_range = list(t_range)
    if not t_range:
        raise ValueError("t_range is empty")
    if min(t_range) < order.min_t:
        raise ValueError(
            f"t_range starts at {min(t_range)}, but lags require t >= {order.min_t}"
        )
    if max(t_range) >= series.n_time:
        raise ValueError("t_range extends past the end of the series")

    n = series.n_nodes
    node_ids = np.arange(n)
    x_parts, y_parts, rows, dropped = [], [], [], []
    for t in t_range:
        block = _regressor_block(series, nbrs, order, t)
        y_t = series.values[:, t]
        ok = np.isfinite(block).all(axis=1) & np.isfinite(y_t)
        x_parts.append(block[ok])
        y_parts.append(y_t[ok])
        rows.extend((int(i), t) for i in node_ids[ok])
        dropped.extend((int(i), t) for i in node_ids[~ok])
    X = np.vstack(x_parts)
    y = np.concatenate(y_parts)
    if X.shape[0] == 0:
        raise EstimationError("no usable observations: every design row had missing values")
    return DesignSystem(y=y, X=X, rows=rows, dropped=dropped, columns=order.column_names(n))


def fit(
    series: TenSeries,
    g: Graph,
    order: GnarxOrder,
    t_range=None,
    nbrs: NeighbourhoodTable | None = None,
) -> GnarxFit:
    """Ordinary least squares over the stacked design.

    Solves via pivoted QR (no explicit normal-equation inverse); standard
    errors from the classical covariance sigma^2 (X'X)^-1 and p-values from
    the normal approximation.
    """
    nbrs = _resolve_neighbourhoods(g, order, nbrs)
    if t_range is None:
        t_range = range(order.min_t, series.n_time)
    design = build_design(series, g, nbrs, order, t_range)
    X, y = design.X, design.y
    n_rows, k = X.shape
    if n_rows < MIN_ROWS_PER_COEF * k:
        raise EstimationError(
            f"insufficient rows: {n_rows} usable observations for {k} coefficients "
            f"(need at least {MIN_ROWS_PER_COEF * k})"
        )

    q_mat, r_mat, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    r_diag = np.abs(np.diag(r_mat))
    if r_diag[0] == 0.0:
        raise EstimationError(
            f"rank-deficient design: all columns are zero ({', '.join(design.columns)})"
        )
    tol = r_diag[0] * max(X.shape) * np.finfo(float).eps
    rank = int(np.count_nonzero(r_diag > tol))
    if rank < k:
        collinear = sorted(design.columns[j] for j in piv[rank:])
        raise EstimationError(
            "rank-deficient design: collinear columns " + ", ".join(collinear)
        )

    beta_piv = scipy.linalg.solve_triangular(r_mat, q_mat.T @ y)
    estimates = np.empty(k)
    estimates[piv] = beta_piv

    residuals = y - X @ estimates
    rss = float(residuals @ residuals)
    dof = n_rows - k
    sigma2 = rss / dof if dof > 0 else np.nan
    r_inv = scipy.linalg.solve_triangular(r_mat, np.eye(k))
    cov_piv = sigma2 * (r_inv @ r_inv.T)
    cov = np.empty((k, k))
    cov[np.ix_(piv, piv)] = cov_piv
    std_errors = np.sqrt(np.diag(cov))
    with np.errstate(divide="ignore", invalid="ignore"):
        z_scores = np.abs(estimates / std_errors)
    p_values = 2.0 * norm.sf(z_scores)

    return GnarxFit(
        order=order,
        n_nodes=series.n_nodes,
        names=tuple(design.columns),
        estimates=estimates,
        std_errors=std_errors,
        p_values=p_values,
        residual_variance=sigma2,
        n_obs_used=n_rows,
        rmse=float(np.sqrt(rss / n_rows)),
    )


def predict_one_step(
    fit_result: GnarxFit,
    series: TenSeries,
    g: Graph,
    t: int,
    nbrs: NeighbourhoodTable | None = None,
) -> np.ndarray:
    """One-step-ahead prediction for every node at time ``t``.

    Plugs the fitted coefficients into the model with zero noise; nodes with
    missing required history get a NaN prediction.
    """
    order = fit_result.order
    if t < order.min_t:
        raise ValueError(f"prediction at t={t} needs history back to t={order.min_t}")
    nbrs = _resolve_neighbourhoods(g, order, nbrs)
    block = _regressor_block(series, nbrs, order, t)
    return block @ fit_result.estimates


def forecast_errors(
    fit_result: GnarxFit,
    series: TenSeries,
    g: Graph,
    t_range,
    nbrs: NeighbourhoodTable | None = None,
) -> np.ndarray:
    """One-step forecast errors x - x_hat, NaN where either side is missing."""
    order = fit_result.order
    nbrs = _resolve_neighbourhoods(g, order, nbrs)
    t_range = list(t_range)
    out = np.empty((series.n_nodes, len(t_range)))
    for col, t in enumerate(t_range):
        out[:, col] = series.values[:, t] - predict_one_step(
            fit_result, series, g, t, nbrs=nbrs
        )
    return out
