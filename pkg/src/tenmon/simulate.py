"""Monte Carlo study of the monitoring pipeline on synthetic edge networks.

One iteration draws a 10-flow graph (fixed-edge-count uniform or two-block
SBM), simulates the network autoregression with two exogenous covariates,
injects a parameter change at the start of the out-of-control window, fits
the model on the fitting window, calibrates per-flow charts on Phase I
residuals, and monitors Phase II.  A scenario repeats this over many
iterations and averages the cumulative change-intensity curves pointwise.

The generator uses covariates at lag one.  The covariate panels stored in
the returned series are pre-shifted by that lag, so fitting with covariate
lag 0 sees exactly the values that drove the recursion.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from functools import lru_cache

import numpy as np

from tenmon.cusum import ChartConfig, FlowSignal, calibrate, compute_critical_value, monitor_network
from tenmon.gnarx import EstimationError, GnarxFit, GnarxOrder, TenSeries, fit, forecast_errors
from tenmon.graph import Graph, neighbourhoods, sample_erdos_renyi, sample_sbm

# fixed synthetic-network design shared by every scenario
N_FLOWS = 10
ER_EDGES = 30
SBM_CLUSTER_SIZES = (5, 5)
SBM_P_WITHIN = 0.8
SBM_P_BETWEEN = 0.2

ADJACENCY_SOURCES = ("erdos_renyi", "sbm")
CHANGED_PARAMETERS = ("alpha", "beta", "gamma1")
CHANGE_SCOPES = ("all_flows", "cluster_c1")

MAX_ATTEMPTS_PER_ITERATION = 5


@dataclass(frozen=True)
class ScenarioSpec:
    """One simulation scenario: which parameter changes, by how much, where."""

    adjacency_source: str
    iterations: int
    seed: int
    changed_parameter: str = "alpha"
    delta: float = 0.0
    change_scope: str = "all_flows"
    name: str | None = None
    burn_in: int = 300
    fit_len: int = 600
    phase1_len: int = 200
    phase2_ic: int = 50
    phase2_ooc: int = 50
    alpha: float = 0.2
    beta: float = 0.3
    gamma1: float = 2.0
    gamma2: float = 3.0
    chart_alpha: float = 0.05
    chart_nu: float = 0.0
    mc_reps: int = 5000

    def __post_init__(self):
        if self.adjacency_source not in ADJACENCY_SOURCES:
            raise ValueError(
                f"adjacency_source must be one of {ADJACENCY_SOURCES}, got {self.adjacency_source!r}"
            )
        if self.changed_parameter not in CHANGED_PARAMETERS:
            raise ValueError(
                f"changed_parameter must be one of {CHANGED_PARAMETERS}, got {self.changed_parameter!r}"
            )
        if self.change_scope not in CHANGE_SCOPES:
            raise ValueError(
                f"change_scope must be one of {CHANGE_SCOPES}, got {self.change_scope!r}"
            )
        if self.change_scope == "cluster_c1" and self.adjacency_source != "sbm":
            raise ValueError("change_scope 'cluster_c1' requires adjacency_source 'sbm'")
        for length_field in ("burn_in", "fit_len", "phase1_len", "phase2_ic", "phase2_ooc"):
            if getattr(self, length_field) < 1:
                raise ValueError(f"{length_field} must be positive")
        if self.phase2_ic + self.phase2_ooc != 100:
            raise ValueError(
                f"phase2_ic + phase2_ooc must total 100, got {self.phase2_ic + self.phase2_ooc}"
            )
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")

    @property
    def total_length(self) -> int:
        return self.burn_in + self.fit_len + self.phase1_len + self.phase2_ic + self.phase2_ooc

    @property
    def change_start(self) -> int:
        """First 0-based time index generated with the changed parameter."""
        return self.burn_in + self.fit_len + self.phase1_len + self.phase2_ic

    @property
    def phase2_len(self) -> int:
        return self.phase2_ic + self.phase2_ooc

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        src = "er" if self.adjacency_source == "erdos_renyi" else "sbm"
        scope = "all" if self.change_scope == "all_flows" else "c1"
        return f"{src}_{scope}_{self.changed_parameter}{self.delta:+g}"

    @classmethod
    def from_dict(cls, raw: dict) -> "ScenarioSpec":
        allowed = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - allowed)
        if unknown:
            raise ValueError(f"unknown scenario field(s): {', '.join(unknown)}")
        for required in ("adjacency_source", "iterations", "seed"):
            if required not in raw:
                raise ValueError(f"missing required scenario field: {required}")
        return cls(**raw)


@dataclass(frozen=True)
class IterationResult:
    """Single-iteration outcome: intensity curve, signals, fitted model."""

    intensity: np.ndarray
    signals: tuple[FlowSignal, ...]
    fit: GnarxFit


@dataclass(frozen=True)
class ScenarioResult:
    """Pointwise-averaged intensity plus per-iteration artifacts."""

    spec: ScenarioSpec
    mean_intensity: np.ndarray
    signals: tuple[tuple[FlowSignal, ...], ...] = field(repr=False)
    coefficients: np.ndarray = field(repr=False)
    coefficient_names: tuple[str, ...] = ()
    n_failed_attempts: int = 0
    failures: tuple[str, ...] = ()

    def curve_csv(self) -> str:
        lines = ["scenario,t,mean_intensity"]
        for t, v in enumerate(self.mean_intensity, start=1):
            lines.append(f"{self.spec.label},{t},{float(v)!r}")
        return "\n".join(lines) + "\n"

    def signals_csv(self) -> str:
        lines = ["scenario,iteration,flow_id,tau"]
        for it, sigs in enumerate(self.signals):
            for s in sigs:
                lines.append(f"{self.spec.label},{it},{s.flow_id},{s.tau}")
        return "\n".join(lines) + "\n"


def _scope_mask(spec: ScenarioSpec, labels: np.ndarray | None, n: int) -> np.ndarray:
    if spec.change_scope == "all_flows":
        return np.ones(n, dtype=bool)
    return labels == 0


def _as_seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        # fresh copy: spawning must not depend on the caller's spawn history
        return np.random.SeedSequence(entropy=seed.entropy, spawn_key=seed.spawn_key)
    return np.random.SeedSequence(seed)


def generate_ten(
    spec: ScenarioSpec, iteration_seed
) -> tuple[TenSeries, Graph, np.ndarray | None]:
    """Simulate one full-length series (burn-in included) on a fresh graph.

    From ``spec.change_start`` onward the changed parameter takes its base
    value plus ``spec.delta`` on the scoped flows; everything else stays at
    the base values.  Returns the series, the sampled graph and, for SBM
    draws, the cluster labels.
    """
    graph_ss, noise_ss = _as_seed_sequence(iteration_seed).spawn(2)
    if spec.adjacency_source == "erdos_renyi":
        g = sample_erdos_renyi(N_FLOWS, ER_EDGES, graph_ss)
        labels = None
    else:
        g, labels = sample_sbm(SBM_CLUSTER_SIZES, SBM_P_WITHIN, SBM_P_BETWEEN, graph_ss)
    n = g.n_nodes
    w = neighbourhoods(g, 1).weight_matrix(1)

    rng = np.random.default_rng(noise_ss)
    t_total = spec.total_length
    eps = rng.standard_normal((n, t_total))
    z1 = rng.standard_normal((n, t_total))
    z2 = rng.standard_normal((n, t_total))

    base = {"alpha": spec.alpha, "beta": spec.beta, "gamma1": spec.gamma1}
    pre = {k: np.full(n, v) for k, v in base.items()}
    post = {k: v.copy() for k, v in pre.items()}
    post[spec.changed_parameter] = post[spec.changed_parameter] + np.where(
        _scope_mask(spec, labels, n), spec.delta, 0.0
    )

    x = np.zeros((n, t_total))
    for t in range(t_total):
        params = post if t >= spec.change_start else pre
        x_prev = x[:, t - 1] if t > 0 else np.zeros(n)
        z1_prev = z1[:, t - 1] if t > 0 else np.zeros(n)
        z2_prev = z2[:, t - 1] if t > 0 else np.zeros(n)
        x[:, t] = (
            params["alpha"] * x_prev
            + params["beta"] * (w @ x_prev)
            + params["gamma1"] * z1_prev
            + spec.gamma2 * z2_prev
            + eps[:, t]
        )

    # store covariates pre-shifted by the generator's lag of one
    z1_panel = np.concatenate([np.zeros((n, 1)), z1[:, :-1]], axis=1)
    z2_panel = np.concatenate([np.zeros((n, 1)), z2[:, :-1]], axis=1)
    series = TenSeries(values=x, covariates=np.stack([z1_panel, z2_panel]))
    return series, g, labels


@lru_cache(maxsize=32)
def _cached_zeta(config: ChartConfig) -> float:
    return compute_critical_value(config)


def _attempt_seed(it_ss: np.random.SeedSequence, attempt: int) -> np.random.SeedSequence:
    """Seed for a retry of one iteration; attempt 0 is the iteration seed
    itself.  The offset keeps replacement keys clear of the children an
    iteration derives internally."""
    if attempt == 0:
        return it_ss
    return np.random.SeedSequence(
        entropy=it_ss.entropy, spawn_key=(*it_ss.spawn_key, 10_000 + attempt)
    )


def _chart_config(spec: ScenarioSpec, seed: int) -> ChartConfig:
    return ChartConfig(
        alpha=spec.chart_alpha,
        m=spec.phase1_len,
        k_max=spec.phase2_len,
        nu=spec.chart_nu,
        mc_reps=spec.mc_reps,
        seed=seed,
    )


def run_iteration(
    spec: ScenarioSpec, iteration_seed, zeta: float | None = None
) -> IterationResult:
    """One simulate -> fit -> calibrate -> monitor pass.

    ``zeta`` may be precomputed once per scenario (the critical value depends
    only on the chart settings, not on the iteration).
    """
    gen_ss, zeta_ss = _as_seed_sequence(iteration_seed).spawn(2)
    series, g, _labels = generate_ten(spec, gen_ss)

    order = GnarxOrder(p=1, s=(1,), q=(0, 0), global_alpha=True)
    fit_start = spec.burn_in
    phase1_start = fit_start + spec.fit_len
    phase2_start = phase1_start + spec.phase1_len

    nbrs = neighbourhoods(g, 1)
    fit_result = fit(
        series, g, order, t_range=range(fit_start + 1, phase1_start), nbrs=nbrs
    )

    u_phase1 = forecast_errors(
        fit_result, series, g, range(phase1_start, phase2_start), nbrs=nbrs
    )
    if zeta is None:
        config = _chart_config(spec, seed=int(zeta_ss.generate_state(1)[0]))
        zeta = compute_critical_value(config)
    else:
        config = _chart_config(spec, seed=0)
    charts = [calibrate(u_phase1[i], config, zeta=zeta) for i in range(series.n_nodes)]

    u_phase2 = forecast_errors(
        fit_result, series, g, range(phase2_start, spec.total_length), nbrs=nbrs
    )
    report = monitor_network(charts, u_phase2, W=1.0)
    return IterationResult(
        intensity=report.intensity, signals=report.signals, fit=fit_result
    )


def run_scenario(spec: ScenarioSpec, zeta: float | None = None) -> ScenarioResult:
    """Run all iterations of a scenario and average the intensity curves.

    Per-iteration seeds are split off the scenario seed, so serial and
    parallel execution orders would agree.  A failed fit is retried with a
    replacement seed derived from the same iteration (flagged in the result);
    more than 10% failed attempts aborts the scenario.
    """
    root = np.random.SeedSequence(spec.seed)
    zeta_ss, *iteration_seeds = root.spawn(1 + spec.iterations)
    if zeta is None:
        config = _chart_config(spec, seed=int(zeta_ss.generate_state(1)[0]))
        zeta = _cached_zeta(config)

    max_failures = max(1, int(0.1 * spec.iterations))
    failures: list[str] = []
    curves = np.zeros((spec.iterations, spec.phase2_len))
    all_signals: list[tuple[FlowSignal, ...]] = []
    coefficients = None
    names: tuple[str, ...] = ()
    for it, it_ss in enumerate(iteration_seeds):
        result = None
        for attempt in range(MAX_ATTEMPTS_PER_ITERATION):
            try:
                result = run_iteration(spec, _attempt_seed(it_ss, attempt), zeta=zeta)
                break
            except (EstimationError, ValueError) as exc:
                failures.append(f"iteration {it} attempt {attempt}: {exc}")
                if len(failures) > max_failures:
                    raise RuntimeError(
                        f"scenario {spec.label} aborted: {len(failures)} failed attempts "
                        f"over {spec.iterations} iterations; last failures: "
                        + " | ".join(failures[-3:])
                    ) from exc
        if result is None:
            raise RuntimeError(
                f"scenario {spec.label}: iteration {it} failed "
                f"{MAX_ATTEMPTS_PER_ITERATION} times; failures: " + " | ".join(failures[-3:])
            )
        curves[it] = result.intensity
        all_signals.append(result.signals)
        if coefficients is None:
            coefficients = np.zeros((spec.iterations, result.fit.estimates.size))
            names = result.fit.names
        coefficients[it] = result.fit.estimates

    # accumulate in fixed iteration order so the reduction is order-free
    mean_intensity = curves.sum(axis=0) / spec.iterations
    return ScenarioResult(
        spec=spec,
        mean_intensity=mean_intensity,
        signals=tuple(all_signals),
        coefficients=coefficients,
        coefficient_names=names,
        n_failed_attempts=len(failures),
        failures=tuple(failures),
    )


def paper_grid(iterations: int, seed: int) -> list[ScenarioSpec]:
    """The nine change cases crossed with both adjacency sources: each
    parameter family at three increasing magnitudes, applied to every flow
    on the uniform graph and to cluster one on the SBM graph."""
    deltas = {
        "alpha": (0.2, 0.3, 0.5),
        "beta": (0.3, 0.4, 0.5),
        "gamma1": (1.0, 1.5, 2.0),
    }
    specs = []
    idx = 0
    for param, magnitudes in deltas.items():
        for delta in magnitudes:
            for source, scope in (("erdos_renyi", "all_flows"), ("sbm", "cluster_c1")):
                specs.append(
                    ScenarioSpec(
                        adjacency_source=source,
                        changed_parameter=param,
                        delta=delta,
                        change_scope=scope,
                        iterations=iterations,
                        seed=seed + idx,
                    )
                )
                idx += 1
    return specs
