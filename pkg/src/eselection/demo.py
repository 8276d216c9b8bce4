"""Synthetic demand and forecast series for demos and tests."""

from __future__ import annotations

import numpy as np

from .scores import ForecastTriple


def synthetic_triples(n: int = 2000, horizon: int = 96, seed: int = 0, switch: float = 0.5,
                      steps_per_day: int = 96) -> list[ForecastTriple]:
    """Daily-periodic demand with two forecasters that trade places.

    Forecast P is the sharper one for the first ``switch`` fraction of the
    steps, Q afterwards. Outcome rows are shifted by one step, as
    :func:`eselection.harness.ingest` expects.
    """
    rng = np.random.default_rng(seed)
    total = n + horizon
    k = np.arange(1, total + 1)
    demand = 800 + 300 * np.sin(2 * np.pi * k / steps_per_day) + rng.normal(0, 80, total)
    demand = np.maximum(demand, 0.0)
    cut = int(switch * n)
    triples = []
    for t in range(n):
        y = demand[t + 1:t + 1 + horizon] if t + 1 + horizon <= total else demand[-horizon:]
        good, bad = 60.0, 110.0
        sp, sq = (good, bad) if t < cut else (bad, good)
        p = y + rng.normal(0, sp, horizon)
        q = y + rng.normal(0, sq, horizon)
        triples.append(ForecastTriple(t + 1, p, q, y.copy()))
    return triples
