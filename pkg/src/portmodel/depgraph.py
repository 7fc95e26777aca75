"""Register dependency graph of one loop iteration and its latency bounds."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

DEFAULT_CYCLE_LIMIT = 10_000


class CycleInIntraGraph(Exception):
    """An intra-iteration edge points backwards (frontend bug)."""


class CycleLimitExceeded(Exception):
    """Cycle enumeration hit its cap; ``partial`` holds the best result so far."""

    def __init__(self, limit, partial):
        self.limit = limit
        self.partial = partial
        super().__init__(f"more than {limit} dependency cycles; lcd >= {partial.lcd} (partial)")


@dataclass(frozen=True, order=True)
class Edge:
    producer: int
    consumer: int
    latency: int
    via: str = field(default="", compare=False)


@dataclass(frozen=True)
class DependencyGraph:
    n: int
    latencies: tuple  # node latency (descriptor latency)
    intra_edges: tuple
    cross_edges: tuple

    def dump(self):
        """Edges as sorted ``i -> j : lat`` lines; carried edges in their own block."""
        lines = ["# intra-iteration"]
        lines += [f"{e.producer} -> {e.consumer} : {e.latency}" for e in sorted(self.intra_edges)]
        lines.append("# loop-carried")
        lines += [f"{e.producer} -> {e.consumer} : {e.latency}" for e in sorted(self.cross_edges)]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class LatencyResult:
    critical_path: int
    lcd: Fraction
    lcd_cycles: tuple = ()  # node tuples of the cycles realizing lcd
    truncated: bool = False


def _add_edge(edges, producer, consumer, latency, via):
    key = (producer, consumer)
    old = edges.get(key)
    if old is None or latency > old.latency:
        edges[key] = Edge(producer, consumer, latency, via)


def build_graph(kernel, model):
    """RAW dependencies of *kernel* (normalized) plus loop-carried back edges.

    Every edge carries its producer's latency.  Memory dependencies are only
    recognised between a store and a load with syntactically identical
    addresses; the model's ``store_forward_latency`` (if any) is added to
    those edges.  Carried memory edges additionally require the address
    registers to be loop invariant.
    """
    insts = kernel.instructions
    n = len(insts)
    lats = tuple(model.lookup(inst).latency for inst in insts)
    intra, cross = {}, {}

    last_writer = {}
    for i, inst in enumerate(insts):
        for r in inst.writes:
            last_writer[r] = i  # end-of-iteration writer of each register

    for j, inst in enumerate(insts):
        for r in inst.reads:
            producer = None
            for i in range(j - 1, -1, -1):
                if r in insts[i].writes:
                    producer = i
                    break
            if producer is not None:
                _add_edge(intra, producer, j, lats[producer], r)
            elif r in last_writer:
                i = last_writer[r]
                _add_edge(cross, i, j, lats[i], r)

    written_anywhere = set(last_writer)
    for j, load in enumerate(insts):
        if not load.is_load():
            continue
        extra = model.store_forward_latency or 0
        for mem in load.memory_operands():
            key = mem.address_key
            regs = mem.address_regs()
            producer = None
            for i in range(j - 1, -1, -1):
                if any(r in insts[i].writes for r in regs):
                    break  # address changed in between
                if insts[i].is_store() and any(m.address_key == key for m in insts[i].memory_operands()):
                    producer = i
                    break
            if producer is not None:
                _add_edge(intra, producer, j, lats[producer] + extra, "mem")
                continue
            if any(r in written_anywhere for r in regs):
                continue
            for i in range(n - 1, j - 1, -1):
                if insts[i].is_store() and any(m.address_key == key for m in insts[i].memory_operands()):
                    _add_edge(cross, i, j, lats[i] + extra, "mem")
                    break

    for e in intra.values():
        if e.producer >= e.consumer:
            raise CycleInIntraGraph(f"intra edge {e.producer} -> {e.consumer} is not forward")
    return DependencyGraph(n, lats, tuple(sorted(intra.values())), tuple(sorted(cross.values())))


def critical_path(graph):
    """Longest intra-iteration latency chain, ending node latency included."""
    if graph.n == 0:
        return 0
    incoming = {}
    for e in graph.intra_edges:
        if e.producer >= e.consumer:
            raise CycleInIntraGraph(f"intra edge {e.producer} -> {e.consumer} is not forward")
        incoming.setdefault(e.consumer, []).append(e)
    dist = [0] * graph.n
    for j in range(graph.n):
        for e in incoming.get(j, ()):
            dist[j] = max(dist[j], dist[e.producer] + e.latency)
    return max(dist[v] + graph.latencies[v] for v in range(graph.n))


class _LimitReached(Exception):
    pass


def _simple_cycles(n, succ, limit):
    """Johnson's elementary-cycle enumeration; yields node lists.

    Raises ``_LimitReached`` once more than *limit* cycles have been produced.
    """
    count = 0

    def sccs(nodes):
        # Tarjan restricted to *nodes*
        index, low, on, stack, out = {}, {}, set(), [], []
        counter = [0]

        def visit(v):
            index[v] = low[v] = counter[0]
            counter[0] += 1
            stack.append(v)
            on.add(v)
            for w in succ[v]:
                if w not in nodes:
                    continue
                if w not in index:
                    visit(w)
                    low[v] = min(low[v], low[w])
                elif w in on:
                    low[v] = min(low[v], index[w])
            if low[v] == index[v]:
                comp = set()
                while True:
                    w = stack.pop()
                    on.discard(w)
                    comp.add(w)
                    if w == v:
                        break
                out.append(comp)

        for v in sorted(nodes):
            if v not in index:
                visit(v)
        return out

    start = 0
    while start < n:
        remaining = set(range(start, n))
        comps = [c for c in sccs(remaining) if len(c) > 1 or any(v in succ[v] for v in c)]
        if not comps:
            return
        comp = min(comps, key=min)
        s = min(comp)
        blocked, bmap, path = set(), {v: set() for v in comp}, [s]

        def unblock(u):
            work = [u]
            while work:
                x = work.pop()
                if x in blocked:
                    blocked.discard(x)
                    work.extend(bmap[x])
                    bmap[x].clear()

        def circuit(v):
            nonlocal count
            found = False
            blocked.add(v)
            for w in sorted(succ[v]):
                if w not in comp:
                    continue
                if w == s:
                    count += 1
                    if count > limit:
                        raise _LimitReached
                    yield list(path)
                    found = True
                elif w not in blocked:
                    path.append(w)
                    sub = yield from circuit(w)
                    path.pop()
                    found = found or sub
            if found:
                unblock(v)
            else:
                for w in succ[v]:
                    if w in comp:
                        bmap[w].add(v)
            return found

        yield from circuit(s)
        start = s + 1


def loop_carried(graph, limit=DEFAULT_CYCLE_LIMIT):
    """Loop-carried dependency bound in cycles per iteration.

    Every elementary cycle of the combined graph contains at least one
    carried edge; a cycle crossing ``k`` iteration boundaries bounds the loop
    at ``sum(latencies) / k`` cycles per iteration.
    """
    cp = critical_path(graph)
    if not graph.cross_edges:
        return LatencyResult(cp, Fraction(0))
    succ = {v: set() for v in range(graph.n)}
    weight, carried = {}, {}
    for e in graph.intra_edges:
        succ[e.producer].add(e.consumer)
        weight[(e.producer, e.consumer)] = e.latency
        carried[(e.producer, e.consumer)] = 0
    for e in graph.cross_edges:
        succ[e.producer].add(e.consumer)
        weight[(e.producer, e.consumer)] = e.latency
        carried[(e.producer, e.consumer)] = 1

    best, best_cycles = Fraction(0), []
    truncated = False
    gen = _simple_cycles(graph.n, succ, limit)
    while True:
        try:
            cyc = next(gen)
        except StopIteration:
            break
        except _LimitReached:
            truncated = True
            break
        pairs = list(zip(cyc, cyc[1:] + cyc[:1]))
        k = sum(carried[p] for p in pairs)
        if k == 0:
            raise CycleInIntraGraph(f"cycle {cyc} has no carried edge")
        value = Fraction(sum(weight[p] for p in pairs), k)
        if value > best:
            best, best_cycles = value, [tuple(cyc)]
        elif value == best and value > 0:
            best_cycles.append(tuple(cyc))
    result = LatencyResult(cp, best, tuple(sorted(best_cycles)), truncated)
    if truncated:
        raise CycleLimitExceeded(limit, result)
    return result
