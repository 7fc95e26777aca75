"""Port-pressure throughput bound.

Every µ-op may be split over its eligible ports; the bound is the smallest
``T`` such that all µ-op occupancy fits with no port loaded above ``T``.
That optimum equals the densest port subset,

    T* = max over port sets S of  occ(µ-ops eligible only within S) / |S|,

which is found exactly with a parametric max-flow: start at ``T = 0``, and
while the flow network (source -> µ-op groups -> ports -> sink, port
capacity ``T``) cannot route all occupancy, jump ``T`` to the density of the
set of groups still reachable from the source in the residual graph.  Each
jump strictly increases ``T`` and lands on a subset density, so the loop
terminates at ``T*``.  All arithmetic is on :class:`fractions.Fraction`.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction


@dataclass(frozen=True)
class PortPressureResult:
    per_port_load: dict  # port -> Fraction
    assignment: dict  # (instruction index, µ-op index) -> tuple[(port, Fraction)]
    t_port: Fraction
    ports: tuple = field(default=())

    def load_table(self):
        """Loads in the model's port order (stable column order for reports)."""
        return [(p, self.per_port_load.get(p, Fraction(0))) for p in self.ports]


def _max_flow(n, cap, source, sink):
    """Edmonds-Karp on a dense capacity matrix; mutates *cap* into the residual."""
    total = Fraction(0)
    adj = [[v for v in range(n) if cap[u][v] > 0 or cap[v][u] > 0] for u in range(n)]
    while True:
        parent = [-1] * n
        parent[source] = source
        queue = deque([source])
        while queue and parent[sink] == -1:
            u = queue.popleft()
            for v in adj[u]:
                if parent[v] == -1 and cap[u][v] > 0:
                    parent[v] = u
                    queue.append(v)
        if parent[sink] == -1:
            return total, parent
        push = None
        v = sink
        while v != source:
            u = parent[v]
            push = cap[u][v] if push is None else min(push, cap[u][v])
            v = u
        v = sink
        while v != source:
            u = parent[v]
            cap[u][v] -= push
            cap[v][u] += push
            v = u
        total += push


def solve_uops(uops):
    """Optimal fractional µ-op-to-port assignment.

    *uops* is a sequence of ``(eligible_ports, occupancy)``.  Returns
    ``(t, per_port_load, fractions)`` where ``fractions[k]`` lists
    ``(port, share)`` for µ-op ``k`` (shares sum to 1).
    """
    uops = [(frozenset(ports), Fraction(occ)) for ports, occ in uops]
    for ports, occ in uops:
        if not ports:
            raise ValueError("µ-op without eligible ports")
        if occ < 0:
            raise ValueError("negative occupancy")
    groups = {}
    for ports, occ in uops:
        if occ > 0:
            groups[ports] = groups.get(ports, Fraction(0)) + occ
    port_list = sorted({p for ports in groups for p in ports})
    if not groups:
        return Fraction(0), {p: Fraction(0) for p in port_list}, [[] for _ in uops]

    group_list = sorted(groups, key=lambda s: sorted(s))
    g_index = {g: 1 + i for i, g in enumerate(group_list)}
    p_index = {p: 1 + len(group_list) + i for i, p in enumerate(port_list)}
    source, sink = 0, 1 + len(group_list) + len(port_list)
    n = sink + 1
    total = sum(groups.values())

    t = Fraction(0)
    while True:
        cap = [[Fraction(0)] * n for _ in range(n)]
        for g, occ in groups.items():
            cap[source][g_index[g]] = occ
            for p in g:
                cap[g_index[g]][p_index[p]] = total + 1
        for p in port_list:
            cap[p_index[p]][sink] = t
        flow, parent = _max_flow(n, cap, source, sink)
        if flow == total:
            break
        # groups/ports still reachable from the source span a too-dense set
        reach_occ = sum(groups[g] for g in group_list if parent[g_index[g]] != -1)
        reach_ports = sum(1 for p in port_list if parent[p_index[p]] != -1)
        t = Fraction(reach_occ, 1) / reach_ports

    loads = {p: t - cap[p_index[p]][sink] for p in port_list}
    # split each group's routed flow back onto its member µ-ops pro rata
    fractions = []
    for ports, occ in uops:
        if occ == 0:
            p0 = min(ports)
            fractions.append([(p0, Fraction(1))])
            continue
        gi = g_index[ports]
        g_occ = groups[ports]
        shares = []
        for p in sorted(ports):
            routed = cap[p_index[p]][gi]  # reverse residual = flow on g -> p
            if routed > 0:
                shares.append((p, routed / g_occ))
        fractions.append(shares)
    return t, loads, fractions


def port_pressure(kernel, model):
    """Throughput bound of one loop iteration of *kernel* on *model*."""
    uops, keys = [], []
    for i, inst in enumerate(kernel.instructions):
        desc = model.lookup(inst)
        for k, (ports, occ) in enumerate(desc.uops):
            uops.append((ports, occ))
            keys.append((i, k))
    t, loads, fractions = solve_uops(uops)
    per_port = {p: Fraction(0) for p in model.ports}
    per_port.update(loads)
    assignment = {key: tuple(fr) for key, fr in zip(keys, fractions)}
    return PortPressureResult(per_port, assignment, t, tuple(model.ports))


def issue_bound(kernel, model):
    """µ-ops per iteration divided by the issue width, as a Fraction."""
    n = sum(len(model.lookup(inst).uops) for inst in kernel.instructions)
    return Fraction(n, model.issue_width)
