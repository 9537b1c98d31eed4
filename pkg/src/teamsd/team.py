"""Topology metrics of a team's prior co-authorship network."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .graphs import PriorNetwork, connected_components


@dataclass(frozen=True)
class TeamStructureMetrics:
    team_size: int
    cc_count: int
    sd: float
    freshness: float
    edge_density: float | None
    clustering: float | None


def structural_diversity(prior: PriorNetwork) -> tuple[int, float]:
    """Number of prior components and that count divided by team size."""
    n = prior.team_size
    if n == 0:
        raise ValueError("structural diversity is undefined for an empty team")
    cc, _ = connected_components(prior.nodes, prior.edges)
    return cc, cc / n


def team_freshness(prior: PriorNetwork) -> float:
    """Share of members with no prior tie to any other member."""
    deg = prior.degrees()
    return sum(1 for d in deg.values() if d == 0) / len(deg)


def edge_density(prior: PriorNetwork) -> float | None:
    n = prior.team_size
    if n < 2:
        return None
    return len(prior.edges) / (n * (n - 1) / 2)


def clustering_coefficient(prior: PriorNetwork) -> float | None:
    """Mean local clustering over all members; degree < 2 counts as 0."""
    n = prior.team_size
    if n < 2:
        return None
    nbrs: dict[str, set[str]] = {v: set() for v in prior.nodes}
    for a, b in prior.edges:
        nbrs[a].add(b)
        nbrs[b].add(a)
    total = 0.0
    for v, ns in nbrs.items():
        k = len(ns)
        if k < 2:
            continue
        links = sum(len(nbrs[u] & ns) for u in ns) / 2
        total += links / (k * (k - 1) / 2)
    return total / n


def team_metrics(prior: PriorNetwork) -> TeamStructureMetrics:
    cc, sd = structural_diversity(prior)
    return TeamStructureMetrics(
        team_size=prior.team_size,
        cc_count=cc,
        sd=sd,
        freshness=team_freshness(prior),
        edge_density=edge_density(prior),
        clustering=clustering_coefficient(prior),
    )


def standardize_sd(values: Sequence[float], sample: str = "analysis sample") -> np.ndarray:
    """z-scores with the n-1 standard deviation."""
    x = np.asarray(values, dtype=float)
    if x.size < 2:
        raise ValueError(f"cannot standardize SD over {sample}: need at least 2 values")
    sd = x.std(ddof=1)
    if not sd > 0 or not math.isfinite(sd):
        raise ValueError(f"cannot standardize SD over {sample}: zero variance")
    z = (x - x.mean()) / sd
    # second pass removes the residual mean left by floating point
    return z - z.mean()
