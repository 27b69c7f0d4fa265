"""Weighted modularity and two-phase Louvain community detection.

Modularity follows the standard weighted form
    Q = (1/2m) * sum_ij [w_ij - k_i k_j / 2m] * delta(c_i, c_j)
computed community-wise. Internal aggregated graphs carry self-loops whose
stored weight is the full intra-community weight (ordered pairs), counted
once in node strength; this makes the coarsened partition's modularity equal
the fine-grained one exactly.
"""

from __future__ import annotations

import json
import random
from collections import defaultdict
from dataclasses import dataclass

from .graph import WeightedGraph

GAIN_TOL = 1e-7


@dataclass
class Partition:
    assignment: dict[int, int]
    num_communities: int

    @classmethod
    def from_assignment(cls, assignment: dict[int, int]) -> "Partition":
        """Renumber community ids contiguously in first-appearance order."""
        remap: dict[int, int] = {}
        out = {}
        for node in assignment:
            c = assignment[node]
            if c not in remap:
                remap[c] = len(remap)
            out[node] = remap[c]
        return cls(assignment=out, num_communities=len(remap))

    def communities(self) -> dict[int, list[int]]:
        groups: dict[int, list[int]] = defaultdict(list)
        for node, c in self.assignment.items():
            groups[c].append(node)
        return dict(groups)


def _check_symmetric(adj):
    for u, nbrs in adj.items():
        for v, w in nbrs.items():
            if w < 0:
                raise ValueError(f"negative edge weight on ({u}, {v})")
            if u != v and abs(adj.get(v, {}).get(u, 0.0) - w) > 1e-9:
                raise ValueError(f"graph is not symmetric at ({u}, {v})")


def _partition_q(adj, node2comm) -> float:
    """Community-wise modularity; self-loops contribute to strength and intra weight."""
    strength = {u: sum(nbrs.values()) for u, nbrs in adj.items()}
    two_m = sum(strength.values())
    if two_m <= 0:
        raise ValueError("modularity undefined: total edge weight is zero")
    intra = defaultdict(float)
    tot = defaultdict(float)
    for u, nbrs in adj.items():
        cu = node2comm[u]
        tot[cu] += strength[u]
        for v, w in nbrs.items():
            if u == v or node2comm[v] == cu:
                intra[cu] += w  # ordered pairs; aggregated self-loops count once
    q = 0.0
    for c in tot:
        q += intra[c] / two_m - (tot[c] / two_m) ** 2
    return q


def modularity(g: WeightedGraph, p: Partition) -> float:
    """Modularity of a partition of a symmetric nonnegative graph. Q in [-1, 1]."""
    if not g.nodes:
        raise ValueError("modularity of an empty graph is undefined")
    _check_symmetric(g.adj)
    missing = [u for u in g.adj if u not in p.assignment]
    if missing:
        raise ValueError(f"partition does not cover nodes {missing[:5]}")
    return _partition_q(g.adj, dict(p.assignment))


def _one_level(nodes, adj, node2comm, rng):
    """Phase 1: greedy local moves until no single-node move gains modularity."""
    strength = {u: sum(adj[u].values()) for u in nodes}
    two_m = sum(strength.values())
    comm_tot = defaultdict(float)
    for u in nodes:
        comm_tot[node2comm[u]] += strength[u]
    moved_any = False
    while True:
        moves = 0
        order = list(nodes)
        rng.shuffle(order)
        for u in order:
            cu = node2comm[u]
            neigh_w = defaultdict(float)
            for v, w in adj[u].items():
                if v != u:
                    neigh_w[node2comm[v]] += w
            comm_tot[cu] -= strength[u]
            # gain (up to a constant per node) of joining community c
            def gain(c):
                return neigh_w.get(c, 0.0) - comm_tot[c] * strength[u] / two_m
            best_c = cu
            best_gain = gain(cu)
            for c in sorted(neigh_w):
                gc = gain(c)
                if gc > best_gain + 1e-12:
                    best_c, best_gain = c, gc
            node2comm[u] = best_c
            comm_tot[best_c] += strength[u]
            if best_c != cu:
                moves += 1
                moved_any = True
        if moves == 0:
            return moved_any


def _aggregate(nodes, adj, node2comm):
    """Phase 2: one super node per community; self-loops hold intra weight."""
    comm_ids = []
    seen = set()
    for u in nodes:
        c = node2comm[u]
        if c not in seen:
            seen.add(c)
            comm_ids.append(c)
    renum = {c: i for i, c in enumerate(comm_ids)}
    new_nodes = list(range(len(comm_ids)))
    new_adj = {c: defaultdict(float) for c in new_nodes}
    for u, nbrs in adj.items():
        cu = renum[node2comm[u]]
        for v, w in nbrs.items():
            cv = renum[node2comm[v]]
            new_adj[cu][cv] += w
    new_adj = {c: dict(nbrs) for c, nbrs in new_adj.items()}
    node2new = {u: renum[node2comm[u]] for u in nodes}
    return new_nodes, new_adj, node2new


def louvain(
    g: WeightedGraph,
    init: Partition | None = None,
    rng_seed: int = 0,
    gain_tol: float = GAIN_TOL,
) -> Partition:
    """Two-phase Louvain on a symmetric graph.

    Starts from singleton communities unless an initial partition is given.
    Node visitation order is shuffled by rng_seed. Levels repeat until the
    modularity gain drops below gain_tol.
    """
    _check_symmetric(g.adj)
    orig = g.node_ids()
    if not orig:
        return Partition(assignment={}, num_communities=0)
    rng = random.Random(rng_seed)
    adj = {u: dict(nbrs) for u, nbrs in g.adj.items()}
    nodes = list(orig)
    if sum(sum(nbrs.values()) for nbrs in adj.values()) == 0:
        if init is not None:
            return Partition.from_assignment({u: init.assignment[u] for u in orig})
        return Partition.from_assignment({u: u for u in orig})

    if init is not None:
        node2comm = {u: init.assignment[u] for u in nodes}
    else:
        node2comm = {u: u for u in nodes}
    orig2cur = {o: o for o in orig}
    prev_q = _partition_q(adj, node2comm)
    while True:
        moved = _one_level(nodes, adj, node2comm, rng)
        q = _partition_q(adj, node2comm)
        assert q >= prev_q - 1e-9, "modularity decreased within a level"
        nodes, adj, node2new = _aggregate(nodes, adj, node2comm)
        orig2cur = {o: node2new[orig2cur[o]] for o in orig}
        # aggregation preserves the partition's modularity exactly
        assert abs(_partition_q(adj, {u: u for u in nodes}) - q) < 1e-9
        if not moved or q - prev_q < gain_tol:
            break
        prev_q = q
        node2comm = {u: u for u in nodes}
    return Partition.from_assignment({o: orig2cur[o] for o in orig})


def dump_partition(p: Partition, path):
    with open(path, "w", encoding="utf-8") as fh:
        for node in sorted(p.assignment):
            fh.write(json.dumps({"node_id": node, "community": p.assignment[node]}) + "\n")
