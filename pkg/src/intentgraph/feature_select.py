"""Greedy recursive elimination of keyphrase features under modularity pressure."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

from .graph import build_lexical_graph, row_minmax_normalize, symmetrize
from .keyphrase import KeyphraseSet
from .louvain import louvain

DEFAULT_MAX_ITERS = 3


@dataclass
class RfeState:
    active: KeyphraseSet
    q_current: float
    clusters_current: int
    components: int
    iterations_done: int


def _num_components(g) -> int:
    seen = set()
    comps = 0
    for start in g.adj:
        if start in seen:
            continue
        comps += 1
        stack = [start]
        seen.add(start)
        while stack:
            u = stack.pop()
            for v in g.adj[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
    return comps


def _evaluate(nodes, kpset: KeyphraseSet, rng_seed):
    g = symmetrize(row_minmax_normalize(build_lexical_graph(nodes, kpset)))
    comps = _num_components(g)
    if g.num_edges() == 0:
        return float("-inf"), len(g.nodes), comps
    part = louvain(g, rng_seed=rng_seed)
    from .louvain import modularity

    q = modularity(g, part)
    return q, part.num_communities, comps


def rfe_select(
    nodes,
    candidates: KeyphraseSet,
    k_intents: int,
    max_iters=DEFAULT_MAX_ITERS,
    rng_seed=0,
) -> tuple[KeyphraseSet, RfeState]:
    """Drop low-scoring keyphrases while modularity rises and the cluster
    count stays close to the known number of intents.

    A feature is removed when dropping it strictly raises Louvain modularity
    without widening the |clusters - K| gap, or when keeping it widens that
    gap; removals that would split the graph into more components are always
    rejected. Stops after max_iters full passes or a pass with no removal.
    """
    if not candidates.items:
        raise ValueError("candidate keyphrase set is empty")
    if k_intents < 1:
        raise ValueError("k_intents must be >= 1")

    active = list(candidates.items)
    q, clusters, comps = _evaluate(nodes, candidates.restrict([kp.ngram for kp in active]), rng_seed)
    if comps > 1:
        warnings.warn(
            f"initial keyphrase graph has {comps} components; isolated parts "
            "are kept as their own communities",
            stacklevel=2,
        )
    passes = 0
    for passes in range(1, max_iters + 1):
        removed_any = False
        # least promising first: lowest score, ties reverse-lexicographic
        order = sorted(active, key=lambda kp: kp.ngram, reverse=True)
        order.sort(key=lambda kp: kp.score)
        for kp in order:
            if len(active) == 1:
                break
            if kp not in active:
                continue
            trial = [item for item in active if item is not kp]
            t_q, t_clusters, t_comps = _evaluate(
                nodes, candidates.restrict([it.ngram for it in trial]), rng_seed
            )
            if t_comps > comps:
                continue  # removal would disconnect the graph
            gap_with = abs(clusters - k_intents)
            gap_without = abs(t_clusters - k_intents)
            if gap_without < gap_with or (t_q > q and gap_without <= gap_with):
                active = trial
                q, clusters, comps = t_q, t_clusters, t_comps
                removed_any = True
        if not removed_any:
            break
    selected = candidates.restrict([kp.ngram for kp in active])
    state = RfeState(
        active=selected,
        q_current=q,
        clusters_current=clusters,
        components=comps,
        iterations_done=passes,
    )
    return selected, state
