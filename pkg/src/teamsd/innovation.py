"""Disruption (CD) index, within-field z-scores, disciplinary integration."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Hashable, Iterable, Sequence

import numpy as np

from .graphs import CitationGraph


@dataclass(frozen=True)
class CDResult:
    """Citer tallies behind one CD value.

    ``focal_only`` citers contribute +1, ``both`` -1 and ``refs_only`` 0;
    all three count in the denominator ``n_citers``.
    """

    value: float | None
    n_citers: int
    focal_only: int
    both: int
    refs_only: int
    no_references: bool


def cd_detail(focal: str, graph: CitationGraph, window_years: int = 5) -> CDResult:
    if window_years < 1:
        raise ValueError("window_years must be >= 1")
    t = graph.years[focal]
    lo, hi = t + 1, t + window_years
    years = graph.years
    refs = graph.backward.get(focal, ())

    def in_window(p: str) -> bool:
        return lo <= years[p] <= hi

    focal_citers = {p for p in graph.forward.get(focal, ()) if in_window(p)}
    ref_citers: set[str] = set()
    for r in refs:
        ref_citers.update(p for p in graph.forward.get(r, ()) if in_window(p))
    ref_citers.discard(focal)

    both = len(focal_citers & ref_citers)
    focal_only = len(focal_citers) - both
    refs_only = len(ref_citers) - both
    n = focal_only + both + refs_only
    value = (focal_only - both) / n if n else None
    return CDResult(value, n, focal_only, both, refs_only, not refs)


def cd_index(focal: str, graph: CitationGraph, window_years: int = 5) -> float | None:
    """Mean of ``f - 2 f b`` over papers citing the focal paper or its references.

    Only citers published in ``t + 1 .. t + window_years`` count.  Returns
    ``None`` when there is no such citer.
    """
    return cd_detail(focal, graph, window_years).value


def field_normalize(values: Sequence[float | None], keys: Sequence[Hashable]) -> list[float | None]:
    """z-score each value within its key group (typically ``(year, discipline)``).

    Missing inputs stay missing.  Groups with fewer than two present values or
    zero variance yield missing outputs.
    """
    if len(values) != len(keys):
        raise ValueError("values and keys differ in length")
    groups: dict[Hashable, list[int]] = {}
    for i, (v, k) in enumerate(zip(values, keys)):
        if v is not None and not (isinstance(v, float) and np.isnan(v)):
            groups.setdefault(k, []).append(i)
    out: list[float | None] = [None] * len(values)
    for idx in groups.values():
        if len(idx) < 2:
            continue
        x = np.array([values[i] for i in idx], dtype=float)
        sd = x.std(ddof=1)
        if not sd > 0:
            continue
        z = (x - x.mean()) / sd
        z -= z.mean()
        for i, zi in zip(idx, z):
            out[i] = float(zi)
    return out


def disciplinary_integration(ref_disciplines: Iterable[str | None]) -> float | None:
    """Simpson diversity ``1 - sum(p_i ** 2)`` of the reference disciplines.

    ``None`` entries (unknown discipline) are left out of the proportions.
    """
    counts = Counter(d for d in ref_disciplines if d is not None)
    total = sum(counts.values())
    if total == 0:
        return None
    return 1.0 - sum((c / total) ** 2 for c in counts.values())
