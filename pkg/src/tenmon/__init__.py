"""Monitoring of random processes on the edges of fixed networks.

The package couples a generalized network autoregressive model with
exogenous regressors (GNARX) to per-flow residual-based CUSUM control
charts.  Edge processes are re-expressed as node processes on a derived
graph (line graph or a random-graph stand-in), modelled with the GNARX
recursion, and monitored sequentially: a Phase I window calibrates each
chart, Phase II updates a cumulative-sum scan statistic against a growing
control limit, and a network-level alarm fires when the fraction of
signalled flows crosses a threshold.
"""

from tenmon.graph import (
    Graph,
    NeighbourhoodTable,
    neighbourhoods,
    sample_erdos_renyi,
    sample_sbm,
    to_line_graph,
)
from tenmon.gnarx import (
    EstimationError,
    GnarxFit,
    GnarxOrder,
    TenSeries,
    build_design,
    fit,
    forecast_errors,
    predict_one_step,
)
from tenmon.cusum import (
    ChartConfig,
    ChartState,
    MonitorReport,
    calibrate,
    compute_critical_value,
    monitor_network,
    weight_g,
)

__all__ = [
    "Graph",
    "NeighbourhoodTable",
    "to_line_graph",
    "sample_erdos_renyi",
    "sample_sbm",
    "neighbourhoods",
    "GnarxOrder",
    "TenSeries",
    "GnarxFit",
    "EstimationError",
    "build_design",
    "fit",
    "predict_one_step",
    "forecast_errors",
    "ChartConfig",
    "ChartState",
    "MonitorReport",
    "weight_g",
    "calibrate",
    "compute_critical_value",
    "monitor_network",
]

__version__ = "0.1.0"
