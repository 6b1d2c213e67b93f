"""Ingestion and preparation of cross-border flow data.

Hourly directed flow records are summed into Monday-Sunday weeks labelled by
the Sunday end date.  Each country pair is canonically oriented (the
lexicographically smaller code is side 1), giving two weekly totals f1 and
f2 per pair that are reduced to a single pair-level series by one of three
aggregation statistics.  The pair-level adjacency is the line graph of the
country graph whose edges are the pairs.

Input CSVs: flows with header ``timestamp,from,to,mw`` and renewables with
``timestamp,country,mw``; timestamps ISO-8601 UTC.  Weeks with below 90%
hourly coverage are kept but flagged, never dropped; a direction with no
present hours in a week is missing (NaN), never zero.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

import numpy as np
import pandas as pd

from tenmon.graph import Graph, to_line_graph

HOURS_PER_WEEK = 168
COVERAGE_FLAG_BELOW = 0.90

STATISTICS = ("M1", "M2", "M3")


class IngestError(ValueError):
    """Raised when input files violate the ingestion contract."""


@dataclass(frozen=True)
class FlowRecord:
    """One directed hourly flow observation."""

    timestamp: dt.datetime
    from_country: str
    to_country: str
    value: float | None

    def __post_init__(self):
        if self.from_country == self.to_country:
            raise ValueError("flow endpoints must differ")
        if self.value is not None and self.value < 0:
            raise ValueError("flow value must be >= 0 when present")


@dataclass(frozen=True)
class PairSeries:
    """Weekly totals for one canonically oriented country pair.

    ``f1`` flows from the lexicographically smaller country to the larger,
    ``f2`` the reverse; NaN marks weeks with no present hours for that
    direction.
    """

    pair: tuple[str, str]
    weeks: tuple[dt.date, ...]
    f1: np.ndarray
    f2: np.ndarray
    low_coverage: np.ndarray

    def __post_init__(self):
        if self.pair[0] >= self.pair[1]:
            raise ValueError(f"pair must be lexicographically oriented, got {self.pair}")
        if any(b <= a for a, b in zip(self.weeks, self.weeks[1:])):
            raise ValueError("weeks must be strictly increasing")

    @property
    def label(self) -> str:
        return f"{self.pair[0]}-{self.pair[1]}"

    def swapped(self) -> "PairSeries":
        """The same data with sides exchanged (for antisymmetry checks);
        deliberately violates the canonical orientation, so bypasses it."""
        other = PairSeries.__new__(PairSeries)
        object.__setattr__(other, "pair", (self.pair[1], self.pair[0]))
        object.__setattr__(other, "weeks", self.weeks)
        object.__setattr__(other, "f1", self.f2)
        object.__setattr__(other, "f2", self.f1)
        object.__setattr__(other, "low_coverage", self.low_coverage)
        return other


@dataclass(frozen=True)
class AggregationSpec:
    """Choice of pair-level statistic; the log transforms are fixed to
    ln(x + 1)."""

    statistic: str
    box_cox: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        if self.statistic not in STATISTICS:
            raise ValueError(f"statistic must be one of {STATISTICS}, got {self.statistic!r}")
        if tuple(self.box_cox) != (0.0, 1.0):
            raise ValueError("only the ln(x + 1) transform (lambda1=0, lambda2=1) is supported")


def week_end_label(timestamps: pd.Series) -> pd.Series:
    """Sunday date of the Monday-Sunday week containing each timestamp."""
    days = timestamps.dt.normalize()
    return (days + pd.to_timedelta(6 - timestamps.dt.dayofweek, unit="D")).dt.date


def _parse_csv(path, value_col: str, key_cols: tuple[str, ...]) -> tuple[pd.DataFrame, list[str]]:
    raw = pd.read_csv(path, dtype=str, keep_default_na=False)
    expected = ["timestamp", *key_cols, value_col]
    if list(raw.columns) != expected:
        raise IngestError(f"{path}: expected header {','.join(expected)}, got {','.join(raw.columns)}")
    issues: list[str] = []
    ts = pd.to_datetime(raw["timestamp"], errors="coerce", utc=True, format="ISO8601")
    mw = pd.to_numeric(raw[value_col], errors="coerce")  # "" coerces to NaN
    bad_ts = ts.isna()
    bad_mw = mw.notna() & (mw < 0)
    bad_mw |= (raw[value_col] != "") & mw.isna()
    bad_key = pd.Series(False, index=raw.index)
    for col in key_cols:
        bad_key |= raw[col] == ""
    if len(key_cols) == 2:
        bad_key |= raw[key_cols[0]] == raw[key_cols[1]]
    bad = bad_ts | bad_mw | bad_key
    for idx in raw.index[bad]:
        issues.append(f"{path}: row {idx + 2}: {','.join(raw.loc[idx].astype(str))}")
    df = pd.DataFrame({"timestamp": ts, "mw": mw})
    for col in key_cols:
        df[col] = raw[col]
    df = df[~bad].reset_index(drop=True)
    dupes = df.duplicated(subset=["timestamp", *key_cols])
    if dupes.any():
        first = df.loc[dupes.idxmax()]
        keys = ", ".join(str(first[c]) for c in ("timestamp", *key_cols))
        raise IngestError(f"{path}: duplicate record for ({keys})")
    # fixed sort makes every downstream reduction independent of row order
    df = df.sort_values(["timestamp", *list(key_cols)], kind="mergesort").reset_index(drop=True)
    return df, issues


def read_flows_csv(path) -> tuple[pd.DataFrame, list[str]]:
    """Parse a flow export; returns the clean frame and the rejected rows."""
    return _parse_csv(path, value_col="mw", key_cols=("from", "to"))


def read_renewables_csv(path) -> tuple[pd.DataFrame, list[str]]:
    """Parse a per-country renewable-generation export."""
    return _parse_csv(path, value_col="mw", key_cols=("country",))


def aggregate_weekly(flows: pd.DataFrame) -> list[PairSeries]:
    """Weekly pair totals over the union of observed weeks, sorted by pair.

    Every pair is aligned to the same weekly axis; weeks where a direction
    has no present hours are NaN.  A week is flagged when either direction
    covers fewer than 90% of its hours.
    """
    df = flows.dropna(subset=["mw"]).copy()
    if df.empty:
        raise IngestError("no usable flow records after parsing")
    df["side1"] = df[["from", "to"]].min(axis=1)
    df["side2"] = df[["from", "to"]].max(axis=1)
    df["forward"] = df["from"] == df["side1"]
    df["week_end"] = week_end_label(df["timestamp"])

    grouped = (
        df.groupby(["side1", "side2", "week_end", "forward"], sort=True)
        .agg(total=("mw", "sum"), hours=("timestamp", "nunique"))
        .reset_index()
    )
    all_weeks = tuple(sorted(grouped["week_end"].unique()))
    week_index = {w: i for i, w in enumerate(all_weeks)}
    out = []
    for pair, sub in grouped.groupby(["side1", "side2"], sort=True):
        f1 = np.full(len(all_weeks), np.nan)
        f2 = np.full(len(all_weeks), np.nan)
        hours = np.zeros((2, len(all_weeks)))
        for row in sub.itertuples(index=False):
            col = week_index[row.week_end]
            if row.forward:
                f1[col] = row.total
                hours[0, col] = row.hours
            else:
                f2[col] = row.total
                hours[1, col] = row.hours
        # a direction with no hours at all is missing, not low-coverage
        observed = hours > 0
        low = ((hours / HOURS_PER_WEEK < COVERAGE_FLAG_BELOW) & observed).any(axis=0)
        out.append(
            PairSeries(pair=pair, weeks=all_weeks, f1=f1, f2=f2, low_coverage=low)
        )
    return out


def apply_statistic(pair: PairSeries, spec: AggregationSpec) -> np.ndarray:
    """Reduce (f1, f2) to the chosen weekly statistic.

    M1 = ln(f1 + f2 + 1), M2 = ln(f1 + 1) - ln(f2 + 1),
    M3 = (f1 - f2) / (f1 + f2) with 0/0 marked missing.
    Weeks with a missing side stay missing.
    """
    f1, f2 = pair.f1, pair.f2
    if spec.statistic == "M1":
        return np.log1p(f1 + f2)
    if spec.statistic == "M2":
        return np.log1p(f1) - np.log1p(f2)
    with np.errstate(invalid="ignore", divide="ignore"):
        m3 = (f1 - f2) / (f1 + f2)
    m3[(f1 == 0) & (f2 == 0)] = np.nan
    return m3


def build_pair_graph(pairs) -> tuple[Graph, tuple[tuple[str, str], ...]]:
    """Pair-level adjacency: two pair-nodes are connected iff the pairs share
    a country.  Constructed as the line graph of the country graph whose
    edges are the pairs; node k of the result is ``order[k]``.
    """
    pair_tuples = sorted({p.pair if isinstance(p, PairSeries) else tuple(p) for p in pairs})
    if len(pair_tuples) < 2:
        raise ValueError(f"need at least 2 pairs, got {len(pair_tuples)}")
    countries = sorted({c for p in pair_tuples for c in p})
    index = {c: i for i, c in enumerate(countries)}
    country_graph = Graph.from_edges(
        len(countries), [(index[a], index[b]) for a, b in pair_tuples]
    )
    line, edge_map = to_line_graph(country_graph)
    order = [None] * len(pair_tuples)
    for (a, b) in pair_tuples:
        order[edge_map[(index[a], index[b])]] = (a, b)
    return line, tuple(order)


@dataclass(frozen=True)
class CovariatePanels:
    """Per-pair weekly covariates: log renewables of side 1 and side 2."""

    z1: np.ndarray
    z2: np.ndarray
    missing_countries: tuple[str, ...]


def build_covariates(
    renewables: pd.DataFrame,
    pairs: list[PairSeries],
    weeks: tuple[dt.date, ...],
) -> CovariatePanels:
    """ln(weekly renewable generation + 1) per pair side, aligned to ``weeks``.

    Countries absent from the renewables feed yield NaN covariates and are
    reported in ``missing_countries``.
    """
    df = renewables.dropna(subset=["mw"]).copy()
    df["week_end"] = week_end_label(df["timestamp"])
    weekly = df.groupby(["country", "week_end"], sort=True)["mw"].sum()
    week_index = {w: i for i, w in enumerate(weeks)}
    by_country: dict[str, np.ndarray] = {}
    for (country, week), total in weekly.items():
        if week not in week_index:
            continue
        series = by_country.setdefault(country, np.full(len(weeks), np.nan))
        series[week_index[week]] = total
    z1 = np.full((len(pairs), len(weeks)), np.nan)
    z2 = np.full((len(pairs), len(weeks)), np.nan)
    missing = set()
    for i, pair in enumerate(pairs):
        for side, panel in zip(pair.pair, (z1, z2)):
            if side in by_country:
                panel[i] = np.log1p(by_country[side])
            else:
                missing.add(side)
    return CovariatePanels(z1=z1, z2=z2, missing_countries=tuple(sorted(missing)))


def split_phases(
    weeks: tuple[dt.date, ...], phase1_end: dt.date
) -> tuple[np.ndarray, np.ndarray]:
    """Index arrays splitting the weekly axis at the Phase I boundary.

    Weeks labelled on or before ``phase1_end`` are Phase I, the rest Phase
    II; the split is disjoint, contiguous and exhaustive.
    """
    labels = np.asarray(weeks)
    phase1 = np.nonzero(labels <= phase1_end)[0]
    phase2 = np.nonzero(labels > phase1_end)[0]
    if phase1.size == 0 or phase2.size == 0:
        raise ValueError(
            f"empty phase: boundary {phase1_end} leaves "
            f"{phase1.size} phase I and {phase2.size} phase II weeks"
        )
    return phase1, phase2


def panel_csv(weeks, pair_labels, values: np.ndarray) -> str:
    """Serialize a pair-by-week panel as week_end,pair,value rows."""
    lines = ["week_end,pair,value"]
    for j, week in enumerate(weeks):
        for i, pair in enumerate(pair_labels):
            v = values[i, j]
            lines.append(f"{week},{pair},{'' if np.isnan(v) else repr(float(v))}")
    return "\n".join(lines) + "\n"
