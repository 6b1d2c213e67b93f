"""Residual-based CUSUM control charts and the network-level change signal.

Each flow gets its own chart.  Phase I (length m, assumed in control)
estimates the forecast-error mean b_hat and the standard deviation
sigma_hat of the centred squared errors.  Phase II tracks

    Q(m, k) = sum_{t=m+1..m+k} (u_t - b_hat)^2 - (k/m) * sum_{t<=m} (u_t - b_hat)^2

and the scan statistic D(m, k) = max_{0<=a<=k} |Q(m, k) - Q(m, a)|, which is
compared against the growing control limit sigma_hat * zeta * g(m, k, nu).
The critical value zeta is calibrated by Monte Carlo under an in-control
Gaussian reference over the finite monitoring horizon.

Network level: the cumulative change intensity is the fraction of flows
whose charts have signalled by time t; a network alarm fires when it reaches
the threshold W.  A signalled chart freezes and consumes no further updates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ChartConfig:
    """Chart calibration settings shared by a monitoring run."""

    alpha: float
    m: int
    k_max: int
    nu: float = 0.0
    mc_reps: int = 5000
    seed: int | None = None

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.nu < 0:
            raise ValueError(f"nu must be >= 0, got {self.nu}")
        if self.m < 2:
            raise ValueError(f"phase I length m must be >= 2, got {self.m}")
        if self.k_max < 1:
            raise ValueError(f"k_max must be >= 1, got {self.k_max}")
        if self.mc_reps < 1000:
            raise ValueError(f"mc_reps must be >= 1000, got {self.mc_reps}")


def weight_g(m, k, nu):
    """Boundary weight g(m, k, nu) = sqrt(m) * (1 + k/m) * (k/(k+m))^nu.

    Accepts scalar or array k.  With nu = 0 this is sqrt(m) * (1 + k/m).
    """
    m = np.asarray(m, dtype=float)
    k = np.asarray(k, dtype=float)
    if np.any(m < 1) or np.any(k < 1) or nu < 0:
        raise ValueError("weight_g requires m >= 1, k >= 1, nu >= 0")
    out = np.sqrt(m) * (1.0 + k / m) * (k / (k + m)) ** nu
    return float(out) if out.ndim == 0 else out


@dataclass
class ChartState:
    """Mutable per-flow chart: calibrated constants plus the running scan.

    ``m`` is the number of Phase I errors actually used (non-missing); with
    complete Phase I data it equals the configured length.
    """

    b_hat: float
    sigma_hat: float
    phase1_sum_sq: float
    m: int
    nu: float
    alpha: float
    zeta: float
    q_current: float = 0.0
    q_min: float = 0.0
    q_max: float = 0.0
    k: int = 0
    signalled: bool = False
    tau: int | None = None
    d_current: float = 0.0
    ucl_current: float = np.nan
    n_gaps: int = 0

    def update(self, u_next: float) -> bool:
        """Advance the chart one step; returns True when it signals.

        A missing (NaN) error holds the chart: nothing changes except a gap
        counter.  Updating a signalled chart is an error.
        """
        if self.signalled:
            raise RuntimeError(f"chart closed: signalled at step {self.tau}")
        if not np.isfinite(u_next):
            self.n_gaps += 1
            return False
        u_next = float(u_next)
        self.k += 1
        self.q_current += (u_next - self.b_hat) ** 2 - self.phase1_sum_sq / self.m
        self.q_min = min(self.q_min, self.q_current)
        self.q_max = max(self.q_max, self.q_current)
        self.d_current = max(self.q_max - self.q_current, self.q_current - self.q_min)
        self.ucl_current = self.sigma_hat * self.zeta * weight_g(self.m, self.k, self.nu)
        if self.d_current > self.ucl_current:
            self.signalled = True
            self.tau = self.k
            return True
        return False


def calibrate(phase1_errors, config: ChartConfig, zeta: float | None = None) -> ChartState:
    """Build a chart from Phase I forecast errors.

    Missing entries are ignored; at least two observed errors are required.
    ``zeta`` may be supplied to share one Monte Carlo critical value across
    many flows; otherwise it is computed from ``config``.
    """
    u = np.asarray(phase1_errors, dtype=float)
    if u.ndim != 1 or u.size != config.m:
        raise ValueError(
            f"phase I errors must be a vector of length m={config.m}, got shape {u.shape}"
        )
    obs = u[np.isfinite(u)]
    if obs.size < 2:
        raise ValueError("need at least 2 non-missing Phase I errors")
    b_hat = float(obs.mean())
    v = (obs - b_hat) ** 2
    sigma_hat = float(v.std(ddof=1))
    if sigma_hat == 0.0:
        raise ValueError("degenerate Phase I: centred squared errors are constant")
    if zeta is None:
        zeta = compute_critical_value(config)
    return ChartState(
        b_hat=b_hat,
        sigma_hat=sigma_hat,
        phase1_sum_sq=float(v.sum()),
        m=int(obs.size),
        nu=config.nu,
        alpha=config.alpha,
        zeta=float(zeta),
    )


def _scan_maxima(u: np.ndarray, m: int, k_max: int, nu: float) -> np.ndarray:
    """max_k D(m,k) / (sigma_hat * g(m,k,nu)) for each row of iid errors."""
    phase1 = u[:, :m]
    b = phase1.mean(axis=1, keepdims=True)
    v = (phase1 - b) ** 2
    sigma = v.std(axis=1, ddof=1)
    s = v.sum(axis=1)
    v2 = (u[:, m:] - b) ** 2
    q = np.cumsum(v2, axis=1) - np.arange(1, k_max + 1) * (s / m)[:, None]
    q_ext = np.concatenate([np.zeros((u.shape[0], 1)), q], axis=1)
    q_min = np.minimum.accumulate(q_ext, axis=1)[:, 1:]
    q_max = np.maximum.accumulate(q_ext, axis=1)[:, 1:]
    d = np.maximum(q_max - q, q - q_min)
    g = weight_g(m, np.arange(1, k_max + 1), nu)
    return (d / (sigma[:, None] * g[None, :])).max(axis=1)


def compute_critical_value(config: ChartConfig) -> float:
    """Monte Carlo critical value zeta_alpha over the finite horizon.

    Simulates in-control runs of iid standard-normal forecast errors, records
    the per-run maximum of D/(sigma_hat * g) over Phase II, and returns the
    empirical (1 - alpha) quantile.  Replication seeds are derived
    individually from the config seed, so the result does not depend on how
    replications are batched.
    """
    children = np.random.SeedSequence(config.seed).spawn(config.mc_reps)
    length = config.m + config.k_max
    u = np.empty((config.mc_reps, length))
    for i, child in enumerate(children):
        u[i] = np.random.default_rng(child).standard_normal(length)
    maxima = _scan_maxima(u, config.m, config.k_max, config.nu)
    return float(np.quantile(maxima, 1.0 - config.alpha))


@dataclass(frozen=True)
class FlowSignal:
    """One flow's change signal within a monitoring run."""

    flow_id: int
    tau: int
    d_at_signal: float
    ucl_at_signal: float


@dataclass(frozen=True)
class MonitorReport:
    """Network-level monitoring outcome."""

    intensity: np.ndarray
    n_signalled: np.ndarray
    signals: tuple[FlowSignal, ...]
    network_alarm_time: int | None
    W: float
    alpha: float
    zeta: float
    n_flows: int = field(default=0)

    def intensity_csv(self) -> str:
        lines = ["t,intensity,n_signalled"]
        for t, (ix, ns) in enumerate(zip(self.intensity, self.n_signalled), start=1):
            lines.append(f"{t},{float(ix)!r},{int(ns)}")
        return "\n".join(lines) + "\n"

    def signals_csv(self) -> str:
        lines = ["flow_id,tau,d_at_signal,ucl_at_signal"]
        for s in self.signals:
            lines.append(
                f"{s.flow_id},{s.tau},{float(s.d_at_signal)!r},{float(s.ucl_at_signal)!r}"
            )
        return "\n".join(lines) + "\n"

    def summary_json(self) -> str:
        return json.dumps(
            {
                "network_alarm_time": self.network_alarm_time,
                "W": self.W,
                "alpha": self.alpha,
                "zeta": self.zeta,
            }
        )


def monitor_network(charts: list[ChartState], errors: np.ndarray, W: float) -> MonitorReport:
    """Drive per-flow charts through a Phase II error matrix in time order.

    ``errors`` is |flows| x horizon; column t holds every flow's forecast
    error at monitoring step t.  Signalled flows stop consuming updates.  The
    recorded tau is the wall-clock monitoring step (1-based), which matches
    the chart's own step count when the flow had no missing errors.
    """
    errors = np.asarray(errors, dtype=float)
    if errors.ndim != 2 or errors.shape[0] != len(charts):
        raise ValueError(
            f"dimension mismatch: {len(charts)} charts but error matrix shape {errors.shape}"
        )
    if not 0.0 < W <= 1.0:
        raise ValueError(f"threshold W must be in (0, 1], got {W}")
    n, horizon = errors.shape
    intensity = np.empty(horizon)
    n_signalled = np.empty(horizon, dtype=np.int64)
    signals: list[FlowSignal] = []
    count = sum(c.signalled for c in charts)
    alarm_time = None
    for t in range(1, horizon + 1):
        for i, chart in enumerate(charts):
            if chart.signalled:
                continue
            if chart.update(errors[i, t - 1]):
                count += 1
                signals.append(
                    FlowSignal(
                        flow_id=i,
                        tau=t,
                        d_at_signal=float(chart.d_current),
                        ucl_at_signal=float(chart.ucl_current),
                    )
                )
        intensity[t - 1] = count / n
        n_signalled[t - 1] = count
        if alarm_time is None and intensity[t - 1] >= W:
            alarm_time = t
    return MonitorReport(
        intensity=intensity,
        n_signalled=n_signalled,
        signals=tuple(signals),
        network_alarm_time=alarm_time,
        W=W,
        alpha=charts[0].alpha if charts else np.nan,
        zeta=charts[0].zeta if charts else np.nan,
        n_flows=n,
    )
