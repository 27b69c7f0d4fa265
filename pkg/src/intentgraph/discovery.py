"""Intent discovery orchestration over the blended graph."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .corpus import Dataset, EmbeddingTable, SeedMask
from .graph import (
    DEFAULT_ALPHA_GRID,
    DEFAULT_SIMILARITY_THRESHOLD,
    WeightedGraph,
    _blended_dissimilarity,
    add_nodes_incremental,
    blend,
    build_lexical_graph,
    build_similarity_graph,
    merge_labeled_nodes,
    row_minmax_normalize,
    symmetrize,
    tune_alpha,
)
from .keyphrase import KeyphraseSet
from .louvain import Partition, louvain
from .metrics import UndefinedSilhouette, silhouette


@dataclass
class DiscoveryConfig:
    similarity_threshold: float = DEFAULT_SIMILARITY_THRESHOLD
    alpha_grid: tuple = DEFAULT_ALPHA_GRID
    alpha: float | None = None  # fixed blend weight; None means grid search
    rng_seed: int = 0


@dataclass
class DiscoveryResult:
    assignment: dict[str, int]
    alpha_used: float
    num_clusters: int
    quality: float  # silhouette of the final partition; nan when undefined
    graph: WeightedGraph = field(repr=False, default=None)
    partition: Partition = field(repr=False, default=None)


def _finalize(g_pred: WeightedGraph, part: Partition, alpha) -> DiscoveryResult:
    assignment = {}
    for nd in g_pred.nodes:
        for member in nd.member_ids:
            assignment[member] = part.assignment[nd.node_id]
    ids, d = _blended_dissimilarity(g_pred)
    try:
        quality = silhouette([part.assignment[u] for u in ids], d)
    except UndefinedSilhouette:
        quality = math.nan
    return DiscoveryResult(
        assignment=assignment,
        alpha_used=alpha,
        num_clusters=part.num_communities,
        quality=quality,
        graph=g_pred,
        partition=part,
    )


def discover(
    dataset: Dataset,
    embeddings: EmbeddingTable,
    keyphrases: KeyphraseSet,
    seed: SeedMask,
    cfg: DiscoveryConfig | None = None,
) -> DiscoveryResult:
    """Cluster the corpus by Louvain on the blended lexical/similarity graph.

    Labeled utterances sharing a label are merged into one pinned node first,
    so they can never end up in different clusters. An empty seed mask gives
    the fully unsupervised path.
    """
    cfg = cfg or DiscoveryConfig()
    nodes = merge_labeled_nodes(dataset, seed)
    w = row_minmax_normalize(build_lexical_graph(nodes, keyphrases))
    a = build_similarity_graph(nodes, embeddings, threshold=cfg.similarity_threshold)
    if cfg.alpha is not None:
        alpha = cfg.alpha
    else:
        alpha = tune_alpha(w, a, grid=cfg.alpha_grid, rng_seed=cfg.rng_seed)
    g_pred = blend(w, a, alpha)
    part = louvain(symmetrize(g_pred), rng_seed=cfg.rng_seed)
    return _finalize(g_pred, part, alpha)


def assign_new(
    result: DiscoveryResult,
    g_pred: WeightedGraph,
    new_utterances,
    embeddings: EmbeddingTable,
    keyphrases: KeyphraseSet,
    cfg: DiscoveryConfig | None = None,
) -> DiscoveryResult:
    """Add unseen utterances to an existing discovery result.

    New nodes join the frozen graph (frozen keyphrases and alpha) and Louvain
    restarts from the existing partition with the newcomers as singletons, so
    existing cluster ids only change when modularity strictly improves.
    """
    cfg = cfg or DiscoveryConfig()
    if not new_utterances:
        return result
    grown = add_nodes_incremental(
        g_pred,
        new_utterances,
        embeddings,
        keyphrases,
        alpha=result.alpha_used,
        threshold=cfg.similarity_threshold,
    )
    old_ids = {nd.node_id for nd in g_pred.nodes}
    init_assignment = {}
    next_comm = result.partition.num_communities
    for nd in grown.nodes:
        if nd.node_id in old_ids:
            init_assignment[nd.node_id] = result.partition.assignment[nd.node_id]
        else:
            init_assignment[nd.node_id] = next_comm
            next_comm += 1
    init = Partition.from_assignment(init_assignment)
    part = louvain(symmetrize(grown), init=init, rng_seed=cfg.rng_seed)
    return _finalize(grown, part, result.alpha_used)


def dump_discovery(result: DiscoveryResult, path):
    with open(path, "w", encoding="utf-8") as fh:
        for utt_id in sorted(result.assignment):
            fh.write(
                json.dumps({"id": utt_id, "cluster": result.assignment[utt_id]}) + "\n"
            )
