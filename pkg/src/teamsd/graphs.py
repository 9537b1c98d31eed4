"""Citation and co-authorship graphs, prior-window subnetworks, components."""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Hashable, Iterable, Sequence

from .corpus import PaperRecord, check_window

logger = logging.getLogger(__name__)


class UnionFind:
    """Disjoint sets with path compression and union by size."""

    def __init__(self, items: Iterable[Hashable] = ()):
        self.parent: dict = {}
        self.size: dict = {}
        for x in items:
            self.add(x)

    def add(self, x) -> None:
        if x not in self.parent:
            self.parent[x] = x
            self.size[x] = 1

    def find(self, x):
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        return True


def connected_components(nodes: Sequence, edges: Iterable[tuple]) -> tuple[int, dict]:
    """Component count and a canonical label per node.

    Each node is labelled with the smallest member of its component, which
    makes labels independent of edge order.
    """
    uf = UnionFind(nodes)
    for a, b in edges:
        if a not in uf.parent or b not in uf.parent:
            raise ValueError(f"edge ({a!r}, {b!r}) references a node outside the node set")
        uf.union(a, b)
    smallest: dict = {}
    for x in uf.parent:
        r = uf.find(x)
        if r not in smallest or x < smallest[r]:
            smallest[r] = x
    labels = {x: smallest[uf.find(x)] for x in uf.parent}
    return len(smallest), labels


# -- citation graph ----------------------------------------------------------


@dataclass
class CitationGraph:
    """``backward[p]`` are the references of ``p``; ``forward[p]`` the in-corpus papers citing it.

    ``forward`` is also keyed by dangling targets so that citers sharing an
    out-of-corpus reference can still be found.
    """

    years: dict[str, int]
    forward: dict[str, tuple[str, ...]]
    backward: dict[str, tuple[str, ...]]
    dangling: frozenset[str] = frozenset()
    year_anomalies: int = 0

    def cites(self, citer: str, target: str) -> bool:
        return target in self._backward_sets.get(citer, ())

    @property
    def _backward_sets(self) -> dict[str, frozenset]:
        try:
            return self.__dict__["_bsets"]
        except KeyError:
            bsets = {k: frozenset(v) for k, v in self.backward.items()}
            self.__dict__["_bsets"] = bsets
            return bsets


def build_citation_graph(records: Iterable[PaperRecord]) -> CitationGraph:
    """Index references both ways.

    References to papers absent from the corpus stay in ``backward`` and are
    listed in ``dangling``; ``forward`` only holds in-corpus citers.  Citations
    to a later-published paper are counted in ``year_anomalies`` but kept.
    """
    records = list(records)
    years = {r.paper_id: r.year for r in records}
    forward: dict[str, list[str]] = {}
    backward: dict[str, tuple[str, ...]] = {}
    dangling = set()
    anomalies = 0
    for r in records:
        backward[r.paper_id] = tuple(sorted(set(r.references)))
        for ref in backward[r.paper_id]:
            forward.setdefault(ref, []).append(r.paper_id)
            if ref not in years:
                dangling.add(ref)
            elif years[ref] > r.year:
                anomalies += 1
    if anomalies:
        logger.warning("%d citations point to a later-published paper", anomalies)
    return CitationGraph(
        years=years,
        forward={k: tuple(sorted(v)) for k, v in forward.items()},
        backward=backward,
        dangling=frozenset(dangling),
        year_anomalies=anomalies,
    )


# -- co-authorship graph -----------------------------------------------------


def _key(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a < b else (b, a)


@dataclass
class CollabGraph:
    """Undirected co-authorship multigraph.

    ``adj[a][b]`` is the sorted tuple of collaboration years (one entry per
    shared paper) and is identical to ``adj[b][a]``.
    """

    adj: dict[str, dict[str, tuple[int, ...]]]
    skipped: tuple[str, ...] = ()

    def years(self, a: str, b: str) -> tuple[int, ...]:
        return self.adj.get(a, {}).get(b, ())

    def edges(self):
        for a, nbrs in self.adj.items():
            for b, ys in nbrs.items():
                if a < b:
                    yield a, b, ys


def build_collab_graph(records: Iterable[PaperRecord], team_size_cap: int = 500) -> CollabGraph:
    """Clique-expand every paper's author list into year-stamped edges.

    Papers with more than ``team_size_cap`` authors are not expanded; their
    ids end up in ``skipped``.
    """
    acc: dict[tuple[str, str], list[int]] = {}
    skipped = []
    for r in records:
        ids = r.author_ids
        if len(ids) > team_size_cap:
            skipped.append(r.paper_id)
            continue
        for a, b in combinations(ids, 2):
            acc.setdefault(_key(a, b), []).append(r.year)
    if skipped:
        logger.warning("%d papers above team_size_cap=%d skipped for edge expansion", len(skipped), team_size_cap)
    adj: dict[str, dict[str, tuple[int, ...]]] = {}
    for (a, b) in sorted(acc):
        ys = tuple(sorted(acc[(a, b)]))
        adj.setdefault(a, {})[b] = ys
        adj.setdefault(b, {})[a] = ys
    return CollabGraph(adj, tuple(sorted(skipped)))


@dataclass(frozen=True)
class PriorNetwork:
    nodes: tuple[str, ...]
    edges: tuple[tuple[str, str], ...]
    year: int
    window: int

    @property
    def team_size(self) -> int:
        return len(self.nodes)

    def degrees(self) -> dict[str, int]:
        deg = dict.fromkeys(self.nodes, 0)
        for a, b in self.edges:
            deg[a] += 1
            deg[b] += 1
        return deg


def prior_subnetwork(graph: CollabGraph, team: Iterable[str], t: int, w: int = 5) -> PriorNetwork:
    """Team-induced subgraph keeping edges with a collaboration year in ``[t - w, t - 1]``."""
    check_window(w)
    nodes = tuple(team)
    if not nodes:
        raise ValueError("team must be non-empty")
    lo, hi = t - w, t - 1
    edges = []
    for a, b in combinations(sorted(set(nodes)), 2):
        ys = graph.adj.get(a, {}).get(b)
        if ys and any(lo <= y <= hi for y in ys):
            edges.append((a, b))
    return PriorNetwork(nodes, tuple(edges), t, w)


# -- binary snapshots --------------------------------------------------------
#
# Layout (all integers little-endian):
#   magic b"TSDG", u16 version, u8 kind (1 = citation, 2 = collab)
#   u32 n_strings, then per string: u32 byte length + UTF-8 bytes
# citation: u32 n_papers; per paper: u32 string idx, i32 year, u32 n_refs, n_refs * u32 idx
#           u32 anomaly count
# collab:   u32 n_edges; per edge: u32 a, u32 b, u32 n_years, n_years * i32
#           u32 n_skipped, n_skipped * u32 idx

MAGIC = b"TSDG"
SNAPSHOT_VERSION = 1


class _Writer:
    def __init__(self):
        self.buf = bytearray()

    def put(self, fmt: str, *vals) -> None:
        self.buf += struct.pack("<" + fmt, *vals)


class _Reader:
    def __init__(self, data: bytes):
        self.data = memoryview(data)
        self.pos = 0

    def get(self, fmt: str):
        fmt = "<" + fmt
        vals = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += struct.calcsize(fmt)
        return vals


def _string_table(w: _Writer, strings: Sequence[str]) -> dict[str, int]:
    w.put("I", len(strings))
    for s in strings:
        b = s.encode("utf-8")
        w.put("I", len(b))
        w.buf += b
    return {s: i for i, s in enumerate(strings)}


def _read_strings(r: _Reader) -> list[str]:
    (n,) = r.get("I")
    out = []
    for _ in range(n):
        (k,) = r.get("I")
        out.append(bytes(r.data[r.pos : r.pos + k]).decode("utf-8"))
        r.pos += k
    return out


def save_snapshot(graph: CitationGraph | CollabGraph, path: str | Path) -> None:
    w = _Writer()
    w.buf += MAGIC
    if isinstance(graph, CitationGraph):
        w.put("HB", SNAPSHOT_VERSION, 1)
        strings = sorted(set(graph.years) | set(graph.dangling))
        idx = _string_table(w, strings)
        w.put("I", len(graph.years))
        for pid in sorted(graph.years):
            refs = graph.backward.get(pid, ())
            w.put("IiI", idx[pid], graph.years[pid], len(refs))
            w.put(f"{len(refs)}I", *(idx[x] for x in refs))
        w.put("I", graph.year_anomalies)
    else:
        w.put("HB", SNAPSHOT_VERSION, 2)
        edges = list(graph.edges())
        idx = _string_table(w, sorted(set(graph.adj) | set(graph.skipped)))
        w.put("I", len(edges))
        for a, b, ys in edges:
            w.put("III", idx[a], idx[b], len(ys))
            w.put(f"{len(ys)}i", *ys)
        w.put("I", len(graph.skipped))
        w.put(f"{len(graph.skipped)}I", *(idx[s] for s in graph.skipped))
    Path(path).write_bytes(bytes(w.buf))


def load_snapshot(path: str | Path) -> CitationGraph | CollabGraph:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise ValueError(f"{path}: not a graph snapshot")
    r = _Reader(data)
    r.pos = 4
    version, kind = r.get("HB")
    if version != SNAPSHOT_VERSION:
        raise ValueError(f"{path}: unsupported snapshot version {version}")
    strings = _read_strings(r)
    if kind == 1:
        (n,) = r.get("I")
        years, backward, forward, dangling = {}, {}, {}, set()
        for _ in range(n):
            i, year, k = r.get("IiI")
            pid = strings[i]
            years[pid] = year
            backward[pid] = tuple(strings[j] for j in r.get(f"{k}I"))
        for pid, refs in backward.items():
            for ref in refs:
                forward.setdefault(ref, []).append(pid)
                if ref not in years:
                    dangling.add(ref)
        (anom,) = r.get("I")
        return CitationGraph(
            years, {k: tuple(sorted(v)) for k, v in forward.items()}, backward, frozenset(dangling), anom
        )
    if kind == 2:
        (n,) = r.get("I")
        adj: dict[str, dict[str, tuple[int, ...]]] = {}
        for _ in range(n):
            a, b, k = r.get("III")
            ys = tuple(r.get(f"{k}i"))
            adj.setdefault(strings[a], {})[strings[b]] = ys
            adj.setdefault(strings[b], {})[strings[a]] = ys
        (k,) = r.get("I")
        skipped = tuple(strings[j] for j in r.get(f"{k}I"))
        return CollabGraph(adj, skipped)
    raise ValueError(f"{path}: unknown snapshot kind {kind}")
