"""Command-line front end: graph generation, simulation, fitting, monitoring.

Subcommands: ``graph``, ``simulate``, ``fit``, ``monitor``.  Settings come
from an optional JSON config file with flags taking precedence.  Exit codes:
0 success, 2 configuration error, 3 data error, 4 numeric failure; failures
emit a machine-readable error JSON on stderr.  All randomness flows from
explicit seeds, so identical inputs reproduce identical outputs byte for
byte.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime as dt
import json
import sys
from pathlib import Path

import numpy as np

from tenmon import cusum, data, gnarx, graph, simulate


class ConfigError(ValueError):
    """Bad configuration file or flag combination."""


def _emit_error(kind: str, message: str) -> None:
    sys.stderr.write(json.dumps({"error": {"type": kind, "message": message}}) + "\n")


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, (dict, list)):
        raise ConfigError(f"config file {path} must hold a JSON object or array")
    return cfg


def _setting(args, cfg: dict, name: str, default=None, required: bool = False):
    """Flag value if given, else config field, else default."""
    value = getattr(args, name, None)
    if value is None:
        value = cfg.get(name, default)
    if required and value is None:
        raise ConfigError(f"missing required setting: {name}")
    return value


def _out_dir(args, cfg: dict) -> Path:
    out = Path(_setting(args, cfg, "out", default="."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, content: str) -> None:
    path.write_text(content)


def _json_dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------- graph ----


def cmd_graph(args) -> int:
    cfg = _load_config(args.config)
    model = _setting(args, cfg, "model", required=True)
    seed = int(_setting(args, cfg, "seed", default=0))
    out = _out_dir(args, cfg)
    if model == "er":
        n_nodes = int(_setting(args, cfg, "nodes", required=True))
        n_edges = int(_setting(args, cfg, "edges", required=True))
        g = graph.sample_erdos_renyi(n_nodes, n_edges, seed)
        labels = None
    elif model == "sbm":
        sizes = _setting(args, cfg, "cluster_sizes", required=True)
        if isinstance(sizes, str):
            sizes = tuple(int(s) for s in sizes.split(","))
        p_within = float(_setting(args, cfg, "p_within", required=True))
        p_between = float(_setting(args, cfg, "p_between", required=True))
        g, labels = graph.sample_sbm(tuple(sizes), p_within, p_between, seed)
    else:
        raise ConfigError(f"model must be 'er' or 'sbm', got {model!r}")
    graph.save_graph(g, out / "graph.csv")
    if labels is not None:
        lines = ["node,cluster"] + [f"{i},{c}" for i, c in enumerate(labels)]
        _write(out / "graph_clusters.csv", "\n".join(lines) + "\n")
    print(f"wrote {out / 'graph.csv'} ({g.n_nodes} nodes, {g.n_edges} edges)")
    return 0


# ------------------------------------------------------------- simulate ----


def _scenario_specs(cfg, seed_override) -> list[simulate.ScenarioSpec]:
    if isinstance(cfg, list):
        raw_list = cfg
    elif "scenarios" in cfg:
        raw_list = cfg["scenarios"]
        if not isinstance(raw_list, list):
            raise ConfigError("scenarios must be a JSON array")
    elif "paper_grid" in cfg:
        grid = cfg["paper_grid"]
        try:
            return simulate.paper_grid(int(grid["iterations"]), int(grid["seed"]))
        except KeyError as exc:
            raise ConfigError(f"paper_grid requires field {exc.args[0]!r}") from exc
    elif "adjacency_source" in cfg:
        raw_list = [cfg]
    else:
        raise ConfigError(
            "simulate config must define 'scenarios', 'paper_grid', or a single scenario"
        )
    specs = []
    for i, raw in enumerate(raw_list):
        try:
            spec = simulate.ScenarioSpec.from_dict(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"scenario {i}: {exc}") from exc
        if seed_override is not None:
            spec = dataclasses.replace(spec, seed=int(seed_override))
        specs.append(spec)
    return specs


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    if not cfg:
        raise ConfigError("simulate requires --config with scenario definitions")
    specs = _scenario_specs(cfg, args.seed)
    out = _out_dir(args, cfg if isinstance(cfg, dict) else {})
    summary = []
    for spec in specs:
        result = simulate.run_scenario(spec)
        _write(out / f"{spec.label}_intensity.csv", result.curve_csv())
        _write(out / f"{spec.label}_signals.csv", result.signals_csv())
        summary.append(
            {
                "scenario": spec.label,
                "iterations": spec.iterations,
                "final_mean_intensity": float(result.mean_intensity[-1]),
                "n_failed_attempts": result.n_failed_attempts,
            }
        )
        print(
            f"{spec.label}: final mean intensity "
            f"{result.mean_intensity[-1]:.3f} over {spec.iterations} iterations"
        )
    _write(out / "scenarios_summary.json", _json_dumps(summary))
    return 0


# ------------------------------------------------------------ fit/monitor --


def _parse_date(value, name: str) -> dt.date:
    if isinstance(value, dt.date):
        return value
    try:
        return dt.date.fromisoformat(str(value))
    except ValueError as exc:
        raise ConfigError(f"{name} must be an ISO date, got {value!r}") from exc


def _statistic(args, cfg) -> data.AggregationSpec:
    stat = str(_setting(args, cfg, "statistic", default="m1")).upper()
    try:
        return data.AggregationSpec(statistic=stat)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _build_dataset(args, cfg):
    """Ingest flows + renewables and assemble the pair-level panel."""
    flows_path = _setting(args, cfg, "flows", required=True)
    renewables_path = _setting(args, cfg, "renewables", required=True)
    flows, flow_issues = data.read_flows_csv(flows_path)
    renewables, ren_issues = data.read_renewables_csv(renewables_path)
    for issue in flow_issues + ren_issues:
        sys.stderr.write(f"skipped: {issue}\n")
    pairs = data.aggregate_weekly(flows)
    pair_graph, order = data.build_pair_graph(pairs)
    by_pair = {p.pair: p for p in pairs}
    pairs = [by_pair[p] for p in order]
    weeks = pairs[0].weeks
    covariates = data.build_covariates(renewables, pairs, weeks)
    if covariates.missing_countries:
        sys.stderr.write(
            "missing renewables for: " + ", ".join(covariates.missing_countries) + "\n"
        )
    return flows, pairs, pair_graph, weeks, covariates


def _build_series(pairs, weeks, covariates, agg: data.AggregationSpec) -> gnarx.TenSeries:
    values = np.vstack([data.apply_statistic(p, agg) for p in pairs])
    return gnarx.TenSeries(
        values=values,
        covariates=np.stack([covariates.z1, covariates.z2]),
        node_labels=tuple(p.label for p in pairs),
        time_labels=weeks,
    )


ORDER_P1 = gnarx.GnarxOrder(p=1, s=(1,), q=(0, 0), global_alpha=True)


def _fit_phase1(series, pair_graph, weeks, phase1_end):
    idx1, idx2 = data.split_phases(weeks, phase1_end)
    fit_result = gnarx.fit(series, pair_graph, ORDER_P1, t_range=idx1[1:])
    return fit_result, idx1, idx2


def _fit_report_json(fit_result: gnarx.GnarxFit, statistic: str) -> str:
    report = fit_result.to_report()
    report["statistic"] = statistic
    report["model"] = {
        "p": fit_result.order.p,
        "s": list(fit_result.order.s),
        "q": list(fit_result.order.q),
        "global_alpha": fit_result.order.global_alpha,
        "n_nodes": fit_result.n_nodes,
        "estimates": [float(v) for v in fit_result.estimates],
    }
    return _json_dumps(report)


def cmd_fit(args) -> int:
    cfg = _load_config(args.config)
    agg = _statistic(args, cfg)
    phase1_end = _parse_date(
        _setting(args, cfg, "phase1_end", required=True), "phase1_end"
    )
    out = _out_dir(args, cfg)
    _, pairs, pair_graph, weeks, covariates = _build_dataset(args, cfg)
    series = _build_series(pairs, weeks, covariates, agg)
    fit_result, _, _ = _fit_phase1(series, pair_graph, weeks, phase1_end)
    path = out / f"fit_{agg.statistic.lower()}.json"
    _write(path, _fit_report_json(fit_result, agg.statistic))
    for row in fit_result.to_report()["coefficients"]:
        print(
            f"{row['name']:<12} {row['estimate']:>10.4f} ({row['std_error']:.4f}) "
            f"{row['significance']}"
        )
    print(f"rmse {fit_result.rmse:.4f}  n_obs_used {fit_result.n_obs_used}")
    print(f"wrote {path}")
    return 0


def _load_fit(path: str) -> gnarx.GnarxFit:
    with open(path) as fh:
        report = json.load(fh)
    try:
        model = report["model"]
        order = gnarx.GnarxOrder(
            p=model["p"],
            s=tuple(model["s"]),
            q=tuple(model["q"]),
            global_alpha=model["global_alpha"],
        )
        table = report["coefficients"]
        return gnarx.GnarxFit(
            order=order,
            n_nodes=model["n_nodes"],
            names=tuple(row["name"] for row in table),
            estimates=np.array(model["estimates"]),
            std_errors=np.array([row["std_error"] for row in table]),
            p_values=np.array([row["p_value"] for row in table]),
            residual_variance=np.nan,
            n_obs_used=report["n_obs_used"],
            rmse=report["rmse"],
        )
    except KeyError as exc:
        raise ConfigError(f"fit file {path} is missing field {exc.args[0]!r}") from exc


def cmd_monitor(args) -> int:
    cfg = _load_config(args.config)
    agg = _statistic(args, cfg)
    phase1_end = _parse_date(
        _setting(args, cfg, "phase1_end", required=True), "phase1_end"
    )
    alpha = float(_setting(args, cfg, "alpha", default=0.05))
    nu = float(_setting(args, cfg, "nu", default=0.0))
    threshold_w = float(_setting(args, cfg, "threshold_w", default=0.2))
    mc_reps = int(_setting(args, cfg, "mc_reps", default=5000))
    seed = int(_setting(args, cfg, "seed", default=0))
    out = _out_dir(args, cfg)

    _, pairs, pair_graph, weeks, covariates = _build_dataset(args, cfg)
    series = _build_series(pairs, weeks, covariates, agg)
    idx1, idx2 = data.split_phases(weeks, phase1_end)
    fit_path = _setting(args, cfg, "fit", default=None)
    if fit_path:
        fit_result = _load_fit(fit_path)
        if fit_result.n_nodes != series.n_nodes:
            raise ConfigError(
                f"fit file covers {fit_result.n_nodes} flows, data has {series.n_nodes}"
            )
    else:
        fit_result = gnarx.fit(series, pair_graph, ORDER_P1, t_range=idx1[1:])

    u_phase1 = gnarx.forecast_errors(fit_result, series, pair_graph, idx1[1:])
    u_phase2 = gnarx.forecast_errors(fit_result, series, pair_graph, idx2)
    config = cusum.ChartConfig(
        alpha=alpha, m=u_phase1.shape[1], k_max=u_phase2.shape[1], nu=nu,
        mc_reps=mc_reps, seed=seed,
    )
    zeta = cusum.compute_critical_value(config)
    charts = [cusum.calibrate(u_phase1[i], config, zeta=zeta) for i in range(series.n_nodes)]
    report = cusum.monitor_network(charts, u_phase2, threshold_w)

    stat = agg.statistic.lower()
    _write(out / f"monitor_{stat}_intensity.csv", report.intensity_csv())
    signal_lines = ["flow_id,pair,week_end,tau,d_at_signal,ucl_at_signal"]
    for s in report.signals:
        week = weeks[idx2[s.tau - 1]]
        signal_lines.append(
            f"{s.flow_id},{pairs[s.flow_id].label},{week},{s.tau},"
            f"{s.d_at_signal!r},{s.ucl_at_signal!r}"
        )
    _write(out / f"monitor_{stat}_signals.csv", "\n".join(signal_lines) + "\n")
    summary = {
        "network_alarm_time": report.network_alarm_time,
        "W": report.W,
        "alpha": report.alpha,
        "zeta": report.zeta,
        "statistic": agg.statistic,
        "n_flows": report.n_flows,
        "n_signals": len(report.signals),
    }
    if report.network_alarm_time is not None:
        summary["network_alarm_week"] = str(weeks[idx2[report.network_alarm_time - 1]])
    _write(out / f"monitor_{stat}_summary.json", _json_dumps(summary))
    print(
        f"{agg.statistic}: {len(report.signals)} of {report.n_flows} flows signalled; "
        f"network alarm at "
        + (
            str(weeks[idx2[report.network_alarm_time - 1]])
            if report.network_alarm_time is not None
            else "none"
        )
    )
    return 0


# ----------------------------------------------------------------- main ----


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tenmon",
        description="Model edge flows on a fixed network and monitor them for change points.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_graph = sub.add_parser("graph", help="sample a graph and write its edge list")
    p_graph.add_argument("--config")
    p_graph.add_argument("--model", choices=["er", "sbm"])
    p_graph.add_argument("--nodes", type=int)
    p_graph.add_argument("--edges", type=int)
    p_graph.add_argument("--cluster-sizes", dest="cluster_sizes")
    p_graph.add_argument("--p-within", dest="p_within", type=float)
    p_graph.add_argument("--p-between", dest="p_between", type=float)
    p_graph.add_argument("--seed", type=int)
    p_graph.add_argument("--out")
    p_graph.set_defaults(func=cmd_graph)

    p_sim = sub.add_parser("simulate", help="run monitoring scenarios end to end")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--seed", type=int)
    p_sim.add_argument("--out")
    p_sim.set_defaults(func=cmd_simulate)

    for name, func, helptext in (
        ("fit", cmd_fit, "fit the network autoregression on Phase I data"),
        ("monitor", cmd_monitor, "fit, calibrate charts, and monitor Phase II"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config")
        p.add_argument("--flows")
        p.add_argument("--renewables")
        p.add_argument("--statistic", choices=["m1", "m2", "m3"])
        p.add_argument("--phase1-end", dest="phase1_end")
        p.add_argument("--out")
        if name == "monitor":
            p.add_argument("--fit", dest="fit")
            p.add_argument("--alpha", type=float)
            p.add_argument("--nu", type=float)
            p.add_argument("--threshold-w", dest="threshold_w", type=float)
            p.add_argument("--mc-reps", dest="mc_reps", type=int)
            p.add_argument("--seed", type=int)
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        _emit_error("config", str(exc))
        return 2
    except data.IngestError as exc:
        _emit_error("data", str(exc))
        return 3
    except (gnarx.EstimationError, ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
        _emit_error("numeric", str(exc))
        return 4


if __name__ == "__main__":
    sys.exit(main())
