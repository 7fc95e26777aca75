from fractions import Fraction

import networkx as nx
import pytest
from hypothesis import given, strategies as st

from conftest import CORPUS_DIRS, KERNELS, loop
from portmodel.asm import parse_listing
from portmodel.depgraph import (CycleInIntraGraph, CycleLimitExceeded, DependencyGraph, Edge,
                                build_graph, critical_path, loop_carried)


def edges(g, cross=False):
    return {(e.producer, e.consumer) for e in (g.cross_edges if cross else g.intra_edges)}


def test_self_recurrent_fma(gcs):
    g = build_graph(loop(["fmla z0.d, p0/m, z1.d, z2.d"]), gcs)
    assert g.intra_edges == ()
    assert [(e.producer, e.consumer, e.via) for e in g.cross_edges] == [(0, 0, "z0")]
    assert loop_carried(g).lcd == 4


def test_stream_triad_has_no_fp_cross_edges(gcs):
    k = parse_listing((CORPUS_DIRS["aarch64"] / "stream_triad.s").read_text(), "aarch64")
    g = build_graph(k, gcs)
    assert not [e for e in g.cross_edges if e.via.startswith("z")]


def test_gauss_seidel_register_recurrence(gcs, spr):
    for model, d in ((gcs, "aarch64"), (spr, "x86-att")):
        k = parse_listing((CORPUS_DIRS[d] / "gs2d5pt.s").read_text(), d)
        g = build_graph(k, model)
        fp = [e for e in g.cross_edges if e.via in ("z0", "zmm0")]
        assert fp, d
        assert loop_carried(g).lcd > 1


def test_chain_critical_path(gcs):
    k = loop(["ldr d0, [x1]", "fmadd d1, d0, d2, d3", "str d1, [x2]"])
    g = build_graph(k, gcs)
    assert edges(g) == {(0, 1), (1, 2)}
    lat = [gcs.lookup(i).latency for i in k.instructions]
    assert critical_path(g) == lat[0] + lat[1] + lat[2]
    assert lat[2] == 0


def test_independent_only(gcs):
    k = loop(["fadd d0, d1, d2", "fmul d3, d4, d5", "fdiv d6, d7, d8"])
    g = build_graph(k, gcs)
    assert critical_path(g) == max(gcs.lookup(i).latency for i in k.instructions)
    assert loop_carried(g).lcd == 0


def test_empty_graph():
    g = DependencyGraph(0, (), (), ())
    assert critical_path(g) == 0
    assert loop_carried(g).lcd == 0


def test_two_disjoint_recurrences():
    g = DependencyGraph(2, (4, 6), (), (Edge(0, 0, 4), Edge(1, 1, 6)))
    r = loop_carried(g)
    assert r.lcd == 6
    assert r.lcd_cycles == ((1,),)


def test_multi_iteration_cycle_is_averaged():
    # 0 -> 1 crosses back to 0 twice: total 10 over two iterations
    g = DependencyGraph(2, (5, 5), (), (Edge(0, 1, 5), Edge(1, 0, 5)))
    assert loop_carried(g).lcd == 5


def test_backward_intra_edge_is_rejected():
    with pytest.raises(CycleInIntraGraph):
        critical_path(DependencyGraph(2, (1, 1), (Edge(1, 0, 1),), ()))


def test_cycle_limit():
    # complete graph on 7 nodes has 1172 elementary cycles
    n = 7
    cross = tuple(Edge(i, j, 1) for i in range(n) for j in range(n))
    g = DependencyGraph(n, (1,) * n, (), cross)
    assert loop_carried(g, limit=5000).lcd == 1
    with pytest.raises(CycleLimitExceeded) as info:
        loop_carried(g, limit=100)
    assert info.value.partial.truncated
    assert info.value.partial.lcd == 1


def test_flags_and_predicates_participate(gcs):
    g = build_graph(loop(["whilelo p0.d, x8, x9", "ld1d { z0.d }, p0/z, [x0, x8, lsl #3]"]), gcs)
    assert (0, 1) in edges(g)


def test_memory_dependency_same_address(gcs):
    k = loop(["str d0, [x1, #8]", "ldr d1, [x1, #8]", "fadd d0, d1, d2"])
    g = build_graph(k, gcs)
    assert (0, 1) in edges(g)
    # the chain closes through memory and the register: store -> load -> add -> store
    assert loop_carried(g).lcd == sum(gcs.lookup(i).latency for i in k.instructions)


def test_memory_dependency_broken_by_address_update(gcs):
    k = loop(["str d0, [x1]", "add x1, x1, #8", "ldr d1, [x1]"])
    assert (0, 2) not in edges(build_graph(k, gcs))


def test_carried_memory_edge_only_for_invariant_address(gcs):
    k = loop(["ldr d1, [x1]", "fadd d0, d1, d2", "str d0, [x1]"])
    g = build_graph(k, gcs)
    assert (2, 0) in edges(g, cross=True)
    k = loop(["ldr d1, [x1]", "fadd d0, d1, d2", "str d0, [x1], #8"])
    assert (2, 0) not in {(e.producer, e.consumer) for e in build_graph(k, gcs).cross_edges
                          if e.via == "mem"}


def test_alias_x86_subregister(spr):
    k = loop(["movl (%rsi), %eax", "addq %rax, %rbx"], "x86-att")
    assert (0, 1) in edges(build_graph(k, spr))


def test_dump_format(gcs):
    text = build_graph(loop(["fadd d0, d0, d1", "fmul d2, d0, d3"]), gcs).dump()
    assert text.splitlines() == ["# intra-iteration", "0 -> 1 : 2", "# loop-carried", "0 -> 0 : 2"]


@pytest.mark.parametrize("dialect,machine", [("aarch64", "gcs"), ("x86-att", "spr"),
                                             ("x86-att", "genoa")])
def test_corpus_edge_invariants(models, dialect, machine):
    model = models[machine]
    for name in KERNELS:
        k = parse_listing((CORPUS_DIRS[dialect] / f"{name}.s").read_text(), dialect)
        g = build_graph(k, model)
        for e in g.intra_edges:
            assert e.producer < e.consumer
        for e in g.intra_edges + g.cross_edges:
            assert e.latency == g.latencies[e.producer]


# -- random graphs against networkx ----------------------------------------------

@st.composite
def random_graphs(draw):
    n = draw(st.integers(1, 7))
    lats = tuple(draw(st.lists(st.integers(0, 9), min_size=n, max_size=n)))
    pairs = st.tuples(st.integers(0, n - 1), st.integers(0, n - 1))
    intra = {(a, b) for a, b in draw(st.lists(pairs, max_size=10)) if a < b}
    cross = {(a, b) for a, b in draw(st.lists(pairs, max_size=5)) if a >= b}
    return DependencyGraph(n, lats, tuple(Edge(a, b, lats[a]) for a, b in sorted(intra)),
                           tuple(Edge(a, b, lats[a]) for a, b in sorted(cross)))


def nx_lcd(g):
    dg = nx.DiGraph()
    dg.add_nodes_from(range(g.n))
    for e in g.intra_edges:
        dg.add_edge(e.producer, e.consumer, w=e.latency, k=0)
    for e in g.cross_edges:
        dg.add_edge(e.producer, e.consumer, w=e.latency, k=1)
    best = Fraction(0)
    for cyc in nx.simple_cycles(dg):
        pairs = list(zip(cyc, cyc[1:] + cyc[:1]))
        w = sum(dg.edges[p]["w"] for p in pairs)
        k = sum(dg.edges[p]["k"] for p in pairs)
        best = max(best, Fraction(w, k))
    return best


def nx_cp(g):
    dg = nx.DiGraph()
    dg.add_nodes_from(range(g.n))
    for e in g.intra_edges:
        dg.add_edge(e.producer, e.consumer, w=e.latency)
    dist = {u: 0 for u in range(g.n)}
    for u in nx.topological_sort(dg):
        for _, w, d in dg.out_edges(u, data=True):
            dist[w] = max(dist[w], dist[u] + d["w"])
    return max((dist[v] + g.latencies[v] for v in range(g.n)), default=0)


@given(random_graphs())
def test_lcd_matches_networkx(g):
    assert loop_carried(g).lcd == nx_lcd(g)


@given(random_graphs())
def test_cp_matches_networkx(g):
    assert critical_path(g) == nx_cp(g)


@given(random_graphs(), st.randoms(use_true_random=False))
def test_lcd_invariant_under_relabelling(g, rnd):
    # any topological relabelling of the intra DAG preserves the bound
    dg = nx.DiGraph()
    dg.add_nodes_from(range(g.n))
    dg.add_edges_from((e.producer, e.consumer) for e in g.intra_edges)
    gens = list(nx.all_topological_sorts(dg))
    order = gens[rnd.randrange(len(gens))] if len(gens) < 500 else list(nx.topological_sort(dg))
    pos = {v: i for i, v in enumerate(order)}
    lats = [0] * g.n
    for v in range(g.n):
        lats[pos[v]] = g.latencies[v]

    def move(es):
        return [Edge(pos[e.producer], pos[e.consumer], e.latency) for e in es]

    intra = move(g.intra_edges)
    cross = move(g.cross_edges)
    h = DependencyGraph(g.n, tuple(lats), tuple(sorted(intra)), tuple(sorted(cross)))
    assert loop_carried(h).lcd == loop_carried(g).lcd


def test_renaming_soundness(gcs):
    base = ["ldr d1, [x1]", "fadd d0, d0, d1", "str d0, [x2]"]
    g0 = build_graph(loop(base), gcs)
    # reuse of d1 in WAR/WAW fashion only
    g1 = build_graph(loop(base + ["fmul d1, d5, d6"]), gcs)
    assert loop_carried(g1).lcd == loop_carried(g0).lcd
    assert critical_path(g1) == critical_path(g0)
