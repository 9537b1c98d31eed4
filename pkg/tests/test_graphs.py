import random
import time
from itertools import combinations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from teamsd.corpus import ConfigError
from teamsd.graphs import (
    UnionFind,
    build_citation_graph,
    build_collab_graph,
    connected_components,
    load_snapshot,
    prior_subnetwork,
    save_snapshot,
)
from teamsd.synth import SynthConfig, generate_corpus

from conftest import rec


def dfs_components(nodes, edges):
    nbrs = {v: set() for v in nodes}
    for a, b in edges:
        nbrs[a].add(b)
        nbrs[b].add(a)
    seen, parts = set(), []
    for v in nodes:
        if v in seen:
            continue
        stack, part = [v], set()
        while stack:
            u = stack.pop()
            if u in seen:
                continue
            seen.add(u)
            part.add(u)
            stack.extend(nbrs[u] - seen)
        parts.append(frozenset(part))
    return parts


def random_graph(rnd, n_max=50):
    n = rnd.randint(1, n_max)
    nodes = list(range(n))
    p = rnd.random() * 3 / n
    edges = [(a, b) for a, b in combinations(nodes, 2) if rnd.random() < p]
    return nodes, edges


# -- citation graph ---------------------------------------------------------


def test_single_citation():
    g = build_citation_graph([rec("A", 2001, ["x"], refs=["B"]), rec("B", 2000, ["y"])])
    assert g.forward == {"B": ("A",)}
    assert g.backward == {"A": ("B",), "B": ()}
    assert g.cites("A", "B") and not g.cites("B", "A")


def test_no_references():
    g = build_citation_graph([rec(str(i), 2000, ["x"]) for i in range(4)])
    assert g.forward == {} and all(v == () for v in g.backward.values())


def test_dangling_and_anomalies():
    g = build_citation_graph([rec("A", 2000, ["x"], refs=["B", "Z"]), rec("B", 2005, ["y"])])
    assert g.dangling == {"Z"}
    assert g.forward["Z"] == ("A",)
    assert g.year_anomalies == 1


def test_random_dag_matches_rescan():
    rnd = random.Random(1)
    ids = [f"p{i}" for i in range(200)]
    records = []
    for i, pid in enumerate(ids):
        refs = [ids[j] for j in range(i) if rnd.random() < 0.05]
        records.append(rec(pid, 1900 + i, ["a"], refs=refs))
    g = build_citation_graph(records)
    for a in ids:
        for b in ids:
            linked = b in next(r for r in records if r.paper_id == a).references
            assert g.cites(a, b) == linked
            assert (a in g.forward.get(b, ())) == linked


# -- co-authorship graph ----------------------------------------------------


def test_clique_expansion():
    g = build_collab_graph([rec("p", 2000, ["A", "B", "C"])])
    assert sorted(g.edges()) == [("A", "B", (2000,)), ("A", "C", (2000,)), ("B", "C", (2000,))]


def test_multigraph_years():
    g = build_collab_graph([rec("p", 1999, ["A", "B"]), rec("q", 2001, ["B", "A"])])
    assert g.years("A", "B") == (1999, 2001) == g.years("B", "A")


def test_team_size_cap():
    g = build_collab_graph([rec("big", 2000, list("ABCDE")), rec("p", 2000, ["A", "B"])], team_size_cap=4)
    assert g.skipped == ("big",)
    assert list(g.edges()) == [("A", "B", (2000,))]


def test_synthetic_edges_match_enumeration():
    records, _, _ = generate_corpus(SynthConfig(seed=2, n_papers=300))
    g = build_collab_graph(records)
    expected = {}
    for r in records:
        ids = r.author_ids
        for i in range(len(ids)):
            for j in range(i + 1, len(ids)):
                key = tuple(sorted((ids[i], ids[j])))
                expected.setdefault(key, []).append(r.year)
    got = {(a, b): ys for a, b, ys in g.edges()}
    assert got == {k: tuple(sorted(v)) for k, v in expected.items()}


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(1990, 2000), st.lists(st.sampled_from("ABCDEFG"), min_size=1, max_size=4, unique=True)), max_size=12), st.randoms())
def test_build_order_invariance(papers, rnd):
    records = [rec(str(i), y, a) for i, (y, a) in enumerate(papers)]
    shuffled = list(records)
    rnd.shuffle(shuffled)
    assert build_collab_graph(records).adj == build_collab_graph(shuffled).adj
    assert build_citation_graph(records).backward == build_citation_graph(shuffled).backward


# -- prior subnetworks ------------------------------------------------------


def test_prior_no_edges():
    p = prior_subnetwork(build_collab_graph([]), ["A", "B", "C"], 2000, 5)
    assert p.team_size == 3 and p.edges == ()


def test_prior_excludes_year_t():
    g = build_collab_graph([rec("p", 2000, ["A", "B"])])
    assert prior_subnetwork(g, ["A", "B"], 2000, 5).edges == ()
    assert prior_subnetwork(g, ["A", "B"], 2001, 5).edges == (("A", "B"),)
    assert prior_subnetwork(g, ["A", "B"], 2005, 5).edges == (("A", "B"),)
    assert prior_subnetwork(g, ["A", "B"], 2006, 5).edges == ()


def test_prior_ignores_outside_authors():
    g = build_collab_graph([rec("p", 1999, ["A", "X", "B"])])
    assert prior_subnetwork(g, ["A", "C"], 2000, 5).edges == ()


def test_prior_window_checked():
    with pytest.raises(ConfigError):
        prior_subnetwork(build_collab_graph([]), ["A"], 2000, 9)


def _random_temporal(rnd):
    authors = [f"a{i}" for i in range(40)]
    records = [rec(f"p{i}", rnd.randint(1990, 2010), rnd.sample(authors, rnd.randint(2, 5))) for i in range(150)]
    return authors, records


def test_prior_matches_filtered_scan():
    rnd = random.Random(7)
    authors, records = _random_temporal(rnd)
    g = build_collab_graph(records)
    for _ in range(50):
        team = rnd.sample(authors, rnd.randint(1, 8))
        t, w = rnd.randint(1995, 2011), rnd.randint(2, 7)
        expect = set()
        for r in records:
            if t - w <= r.year <= t - 1:
                for a, b in combinations(sorted(set(r.author_ids) & set(team)), 2):
                    expect.add((a, b))
        assert set(prior_subnetwork(g, team, t, w).edges) == expect


def test_prior_monotone_in_window():
    rnd = random.Random(8)
    authors, records = _random_temporal(rnd)
    g = build_collab_graph(records)
    for _ in range(30):
        team = rnd.sample(authors, 6)
        t = rnd.randint(1995, 2011)
        sets = [set(prior_subnetwork(g, team, t, w).edges) for w in range(2, 8)]
        assert all(a <= b for a, b in zip(sets, sets[1:]))


# -- connected components ---------------------------------------------------


def test_components_trivial():
    assert connected_components("ABC", [])[0] == 3
    assert connected_components("ABC", [("A", "B"), ("B", "C")])[0] == 1


def test_components_unknown_node():
    with pytest.raises(ValueError):
        connected_components("AB", [("A", "Z")])


def test_components_match_dfs_fast():
    rnd = random.Random(0)
    graphs = [random_graph(rnd) for _ in range(1000)]
    start = time.perf_counter()
    for nodes, edges in graphs:
        count, labels = connected_components(nodes, edges)
        parts = dfs_components(nodes, edges)
        assert count == len(parts)
        for part in parts:
            assert {labels[v] for v in part} == {min(part)}
    assert time.perf_counter() - start < 5.0


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 20).flatmap(lambda n: st.tuples(st.just(n), st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=30))), st.randoms())
def test_components_permutation_invariant(graph, rnd):
    n, edges = graph
    nodes = list(range(n))
    count, labels = connected_components(nodes, edges)
    perm_nodes = list(nodes)
    rnd.shuffle(perm_nodes)
    perm_edges = [(b, a) for a, b in edges]
    rnd.shuffle(perm_edges)
    assert connected_components(perm_nodes, perm_edges) == (count, labels)
    assert 1 <= count <= n


def test_union_find():
    uf = UnionFind([1, 2, 3])
    assert uf.union(1, 2) and not uf.union(2, 1)
    assert uf.find(1) == uf.find(2) != uf.find(3)


# -- snapshots --------------------------------------------------------------


def test_snapshot_round_trip(tmp_path):
    records, _, _ = generate_corpus(SynthConfig(seed=9, n_papers=100))
    records.append(rec("odd", 2000, ["ü"], refs=["missing-ü"]))
    cg, kg = build_citation_graph(records), build_collab_graph(records, team_size_cap=3)
    save_snapshot(cg, tmp_path / "c.bin")
    save_snapshot(kg, tmp_path / "k.bin")
    c2, k2 = load_snapshot(tmp_path / "c.bin"), load_snapshot(tmp_path / "k.bin")
    assert (c2.years, c2.forward, c2.backward, c2.dangling, c2.year_anomalies) == (
        cg.years, cg.forward, cg.backward, cg.dangling, cg.year_anomalies
    )
    assert k2.adj == kg.adj and k2.skipped == kg.skipped


def test_snapshot_bad_magic(tmp_path):
    p = tmp_path / "x.bin"
    p.write_bytes(b"nope")
    with pytest.raises(ValueError):
        load_snapshot(p)
