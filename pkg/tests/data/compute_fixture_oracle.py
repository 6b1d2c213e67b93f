"""Independent oracle for the bundled fixture: recompute the Phase I fit
with none of the package's code paths.

Everything is done from first principles: csv module parsing, hand-rolled
Monday-Sunday week labels, explicit per-(pair, week) sums, a literal
pair-shares-a-country adjacency, naive per-row design construction, and a
normal-equations solve.  The printed numbers are frozen into
tests/test_cli.py; rerun this script only to regenerate them after changing
the fixture.

Run from the repository root:  python tests/data/compute_fixture_oracle.py
"""

from __future__ import annotations

import csv
import datetime as dt
import math
from collections import defaultdict
from pathlib import Path

import numpy as np

HERE = Path(__file__).parent
PHASE1_END = dt.date(2019, 12, 31)


def week_end(day: dt.date) -> dt.date:
    return day + dt.timedelta(days=6 - day.weekday())


def load_weekly_flows():
    totals = defaultdict(float)
    with open(HERE / "flows.csv") as fh:
        for row in csv.DictReader(fh):
            day = dt.datetime.fromisoformat(row["timestamp"]).date()
            a, b = row["from"], row["to"]
            pair = (min(a, b), max(a, b))
            direction = 0 if a == pair[0] else 1
            totals[(pair, week_end(day), direction)] += float(row["mw"])
    return totals


def load_weekly_renewables():
    totals = defaultdict(float)
    with open(HERE / "renewables.csv") as fh:
        for row in csv.DictReader(fh):
            day = dt.datetime.fromisoformat(row["timestamp"]).date()
            totals[(row["country"], week_end(day))] += float(row["mw"])
    return totals


def main() -> None:
    flows = load_weekly_flows()
    renewables = load_weekly_renewables()
    pairs = sorted({key[0] for key in flows})
    weeks = sorted({key[1] for key in flows})
    phase1_weeks = [w for w in weeks if w <= PHASE1_END]

    def statistic(name, f1, f2):
        if name == "M1":
            return math.log(f1 + f2 + 1.0)
        if name == "M2":
            return math.log(f1 + 1.0) - math.log(f2 + 1.0)
        if f1 + f2 == 0.0:
            return float("nan")
        return (f1 - f2) / (f1 + f2)

    # pair adjacency: literal country-sharing test, equal weights
    neighbours = {
        p: [q for q in pairs if q != p and set(p) & set(q)] for p in pairs
    }

    for name in ("M1", "M2", "M3"):
        values = {}
        for p in pairs:
            for w in weeks:
                f1 = flows.get((p, w, 0))
                f2 = flows.get((p, w, 1))
                if f1 is None or f2 is None:
                    values[(p, w)] = float("nan")
                else:
                    values[(p, w)] = statistic(name, f1, f2)
        rows, ys = [], []
        for t in range(1, len(phase1_weeks)):
            w, w_prev = phase1_weeks[t], phase1_weeks[t - 1]
            for p in pairs:
                own_lag = values[(p, w_prev)]
                nbrs = neighbours[p]
                nbr_lag = sum(values[(q, w_prev)] for q in nbrs) / len(nbrs)
                z1 = math.log(renewables[(p[0], w)] + 1.0)
                z2 = math.log(renewables[(p[1], w)] + 1.0)
                y = values[(p, w)]
                row = [own_lag, nbr_lag, z1, z2]
                if all(math.isfinite(v) for v in row + [y]):
                    rows.append(row)
                    ys.append(y)
        x = np.array(rows)
        y = np.array(ys)
        theta = np.linalg.solve(x.T @ x, x.T @ y)
        resid = y - x @ theta
        rss = float(resid @ resid)
        n, k = x.shape
        sigma2 = rss / (n - k)
        cov = sigma2 * np.linalg.inv(x.T @ x)
        se = np.sqrt(np.diag(cov))
        rmse = math.sqrt(rss / n)
        print(f"\n{name}: n_obs_used={n}")
        for label, est, s in zip(("alpha", "beta", "gamma1", "gamma2"), theta, se):
            print(f"  {label:8s} {est!r}  (se {s!r})")
        print(f"  rmse {rmse!r}")


if __name__ == "__main__":
    main()
