"""Lexical, similarity, and blended transductive graphs over (possibly merged) nodes."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .corpus import Dataset, EmbeddingTable, SeedMask, tokenize
from .keyphrase import KeyphraseSet, iter_ngrams

DEFAULT_SIMILARITY_THRESHOLD = 0.05
DEFAULT_ALPHA_GRID = tuple(round(0.1 * i, 1) for i in range(11))


class GraphError(Exception):
    pass


@dataclass(frozen=True)
class Node:
    node_id: int
    member_ids: frozenset[str]
    pinned_label: int | None = None


@dataclass
class WeightedGraph:
    """Sparse weighted graph; adj[u][v] = w. Symmetric kinds store both directions."""

    nodes: list[Node]
    adj: dict[int, dict[int, float]]
    kind: str

    def __post_init__(self):
        for nd in self.nodes:
            self.adj.setdefault(nd.node_id, {})

    def node_ids(self):
        return [nd.node_id for nd in self.nodes]

    def edge_weight(self, u, v) -> float:
        return self.adj.get(u, {}).get(v, 0.0)

    def num_edges(self) -> int:
        return sum(len(nbrs) for nbrs in self.adj.values())

    def member_to_node(self) -> dict[str, int]:
        mapping = {}
        for nd in self.nodes:
            for m in nd.member_ids:
                mapping[m] = nd.node_id
        return mapping

    def copy(self) -> "WeightedGraph":
        return WeightedGraph(
            nodes=list(self.nodes),
            adj={u: dict(nbrs) for u, nbrs in self.adj.items()},
            kind=self.kind,
        )


def merge_labeled_nodes(dataset: Dataset, seed: SeedMask) -> list[Node]:
    """One merged node per seeded label, singleton nodes for everything else."""
    members_by_label: dict[int, set[str]] = {}
    for utt_id in sorted(seed.labeled_ids):
        u = dataset.get(utt_id)
        if not u.labels:
            raise GraphError(f"labeled utterance {utt_id!r} has an empty label set")
        if len(u.labels) > 1:
            raise GraphError(
                f"labeled utterance {utt_id!r} is multilabel; node merging is "
                "defined for single-label seeds only"
            )
        (label,) = u.labels
        members_by_label.setdefault(label, set()).add(utt_id)

    nodes = []
    next_id = 0
    for label in sorted(members_by_label):
        nodes.append(
            Node(
                node_id=next_id,
                member_ids=frozenset(members_by_label[label]),
                pinned_label=label,
            )
        )
        next_id += 1
    for u in dataset.utterances:
        if u.id in seed.labeled_ids:
            continue
        nodes.append(Node(node_id=next_id, member_ids=frozenset({u.id})))
        next_id += 1
    return nodes


def build_lexical_graph(nodes, keyphrases: KeyphraseSet) -> WeightedGraph:
    """Edge weight = sum of scores of keyphrases shared by members of both nodes."""
    member_to_node = {}
    for nd in nodes:
        for m in nd.member_ids:
            member_to_node[m] = nd.node_id
    adj: dict[int, dict[int, float]] = {nd.node_id: {} for nd in nodes}
    for kp in keyphrases.items:
        covered = sorted(
            {member_to_node[m] for m in keyphrases.inverted_index[kp.ngram]
             if m in member_to_node}
        )
        for i, u in enumerate(covered):
            for v in covered[i + 1 :]:
                adj[u][v] = adj[u].get(v, 0.0) + kp.score
                adj[v][u] = adj[v].get(u, 0.0) + kp.score
    return WeightedGraph(nodes=list(nodes), adj=adj, kind="lexical_W")


def row_minmax_normalize(g: WeightedGraph) -> WeightedGraph:
    """Per-row (w - min) / (max - min); degenerate rows map to 1.

    The result is asymmetric in general; symmetrize() before community
    detection or label propagation.
    """
    adj: dict[int, dict[int, float]] = {}
    for u, nbrs in g.adj.items():
        if not nbrs:
            adj[u] = {}
            continue
        lo = min(nbrs.values())
        hi = max(nbrs.values())
        if hi == lo:
            adj[u] = {v: 1.0 for v in nbrs}
        else:
            adj[u] = {v: (w - lo) / (hi - lo) for v, w in nbrs.items()}
    return WeightedGraph(nodes=list(g.nodes), adj=adj, kind=g.kind)


def symmetrize(g: WeightedGraph) -> WeightedGraph:
    """M = (W + W^T) / 2. Required by modularity and adsorption."""
    adj: dict[int, dict[int, float]] = {nd.node_id: {} for nd in g.nodes}
    for u, nbrs in g.adj.items():
        for v, w in nbrs.items():
            m = (w + g.adj.get(v, {}).get(u, 0.0)) / 2.0
            if m > 0:
                adj[u][v] = m
                adj[v][u] = m
    return WeightedGraph(nodes=list(g.nodes), adj=adj, kind=g.kind)


def _node_embedding(node: Node, table: EmbeddingTable) -> np.ndarray:
    vecs = [table.get(m) for m in sorted(node.member_ids)]
    return np.mean(vecs, axis=0)


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def build_similarity_graph(
    nodes, table: EmbeddingTable, threshold=DEFAULT_SIMILARITY_THRESHOLD
) -> WeightedGraph:
    """Cosine similarity of mean member embeddings; negatives clipped, then thresholded."""
    nodes = list(nodes)
    embs = np.stack([_node_embedding(nd, table) for nd in nodes])
    norms = np.linalg.norm(embs, axis=1)
    safe = np.where(norms == 0, 1.0, norms)
    unit = embs / safe[:, None]
    unit[norms == 0] = 0.0
    sims = unit @ unit.T
    adj: dict[int, dict[int, float]] = {nd.node_id: {} for nd in nodes}
    n = len(nodes)
    for i in range(n):
        for j in range(i + 1, n):
            w = max(0.0, float(sims[i, j]))
            if w >= threshold and w > 0:
                u, v = nodes[i].node_id, nodes[j].node_id
                adj[u][v] = w
                adj[v][u] = w
    return WeightedGraph(nodes=nodes, adj=adj, kind="similarity_A")


def _same_node_set(g1: WeightedGraph, g2: WeightedGraph) -> bool:
    a = {(nd.node_id, nd.member_ids) for nd in g1.nodes}
    b = {(nd.node_id, nd.member_ids) for nd in g2.nodes}
    return a == b


def blend(w_graph: WeightedGraph, a_graph: WeightedGraph, alpha) -> WeightedGraph:
    """alpha * A + (1 - alpha) * W over the union of edge supports."""
    if not 0 <= alpha <= 1:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    if not _same_node_set(w_graph, a_graph):
        raise GraphError("blend requires identical node sets")
    adj: dict[int, dict[int, float]] = {nd.node_id: {} for nd in w_graph.nodes}
    for u in adj:
        support = set(w_graph.adj.get(u, {})) | set(a_graph.adj.get(u, {}))
        for v in support:
            w = (
                alpha * a_graph.edge_weight(u, v)
                + (1 - alpha) * w_graph.edge_weight(u, v)
            )
            if w > 0:
                adj[u][v] = w
    return WeightedGraph(nodes=list(w_graph.nodes), adj=adj, kind="blended_G_pred")


def _blended_dissimilarity(g: WeightedGraph):
    """d(u, v) = 1 - similarity, missing edges -> 1. Returns (ids, matrix)."""
    ids = g.node_ids()
    pos = {u: i for i, u in enumerate(ids)}
    n = len(ids)
    d = np.ones((n, n))
    np.fill_diagonal(d, 0.0)
    sym = symmetrize(g)
    for u, nbrs in sym.adj.items():
        for v, w in nbrs.items():
            d[pos[u], pos[v]] = max(0.0, 1.0 - w)
    return ids, d


def tune_alpha(w_graph, a_graph, grid=DEFAULT_ALPHA_GRID, rng_seed=0) -> float:
    """Grid-search the blend weight by silhouette of the Louvain partition.

    Silhouette is computed in blended-similarity space with d = 1 - s.
    Ties and an all-undefined grid fall back to the smaller / default alpha.
    """
    from .louvain import louvain
    from .metrics import UndefinedSilhouette, silhouette

    if not grid:
        raise ValueError("alpha grid must be nonempty")
    best_alpha = None
    best_score = None
    for alpha in grid:
        g = blend(w_graph, a_graph, alpha)
        part = louvain(symmetrize(g), rng_seed=rng_seed)
        ids, d = _blended_dissimilarity(g)
        labels = [part.assignment[u] for u in ids]
        try:
            score = silhouette(labels, d)
        except UndefinedSilhouette:
            continue
        if best_score is None or score > best_score:
            best_score = score
            best_alpha = alpha
    if best_alpha is None:
        warnings.warn(
            "silhouette undefined for every alpha in the grid; using 0.5",
            stacklevel=2,
        )
        return 0.5
    return float(best_alpha)


def _text_keyphrases(text, keyphrases: KeyphraseSet):
    """Keyphrases of the frozen set occurring in a new utterance text."""
    n_max = max((len(kp.ngram) for kp in keyphrases.items), default=1)
    grams = set(iter_ngrams(tokenize(text), n_max))
    return {kp.ngram for kp in keyphrases.items if kp.ngram in grams}


def add_nodes_incremental(
    g_pred: WeightedGraph,
    new_utterances,
    table: EmbeddingTable,
    keyphrases: KeyphraseSet,
    alpha,
    threshold=DEFAULT_SIMILARITY_THRESHOLD,
) -> WeightedGraph:
    """Add new singleton nodes to a blended graph without touching existing edges.

    Lexical weights against the frozen keyphrase set are min-max normalized
    over each new node's row and applied symmetrically; similarity edges use
    the frozen alpha and threshold. No new feature selection happens here.
    """
    if not new_utterances:
        return g_pred.copy()
    existing_members = {m for nd in g_pred.nodes for m in nd.member_ids}
    for u in new_utterances:
        if u.id in existing_members:
            raise GraphError(f"utterance id {u.id!r} already present in the graph")
    ids_seen = [u.id for u in new_utterances]
    if len(set(ids_seen)) != len(ids_seen):
        raise GraphError("duplicate ids among new utterances")

    out = g_pred.copy()
    next_id = max(out.adj.keys(), default=-1) + 1
    old_nodes = list(g_pred.nodes)
    old_embs = {nd.node_id: _node_embedding(nd, table) for nd in old_nodes}

    new_nodes = []
    new_kps = {}
    for u in new_utterances:
        nd = Node(node_id=next_id, member_ids=frozenset({u.id}))
        next_id += 1
        new_nodes.append(nd)
        new_kps[nd.node_id] = _text_keyphrases(u.text, keyphrases)
        out.nodes.append(nd)
        out.adj.setdefault(nd.node_id, {})

    kp_score = {kp.ngram: kp.score for kp in keyphrases.items}
    member_cover = {
        ng: {m for m in members}
        for ng, members in keyphrases.inverted_index.items()
    }
    new_embs = {nd.node_id: table.get(next(iter(nd.member_ids))) for nd in new_nodes}

    for nd in new_nodes:
        # raw lexical weights for this new node's row
        lex_row: dict[int, float] = {}
        for ng in new_kps[nd.node_id]:
            covered_old = member_cover.get(ng, set())
            for other in old_nodes:
                if other.member_ids & covered_old:
                    lex_row[other.node_id] = lex_row.get(other.node_id, 0.0) + kp_score[ng]
            for other in new_nodes:
                if other.node_id != nd.node_id and ng in new_kps[other.node_id]:
                    lex_row[other.node_id] = lex_row.get(other.node_id, 0.0) + kp_score[ng]
        if lex_row:
            lo, hi = min(lex_row.values()), max(lex_row.values())
            if hi == lo:
                lex_row = {v: 1.0 for v in lex_row}
            else:
                lex_row = {v: (w - lo) / (hi - lo) for v, w in lex_row.items()}

        sim_row: dict[int, float] = {}
        for other in old_nodes:
            c = max(0.0, _cosine(new_embs[nd.node_id], old_embs[other.node_id]))
            if c >= threshold and c > 0:
                sim_row[other.node_id] = c
        for other in new_nodes:
            if other.node_id == nd.node_id:
                continue
            c = max(0.0, _cosine(new_embs[nd.node_id], new_embs[other.node_id]))
            if c >= threshold and c > 0:
                sim_row[other.node_id] = c

        for v in set(lex_row) | set(sim_row):
            w = alpha * sim_row.get(v, 0.0) + (1 - alpha) * lex_row.get(v, 0.0)
            if w > 0:
                prev = out.adj[nd.node_id].get(v)
                w = max(w, prev) if prev is not None else w
                out.adj[nd.node_id][v] = w
                out.adj[v][nd.node_id] = w
    return out


def dump_graph(g: WeightedGraph, edges_path, nodes_path):
    """TSV edge list plus JSONL node manifest."""
    with open(edges_path, "w", encoding="utf-8") as fh:
        for u in sorted(g.adj):
            for v in sorted(g.adj[u]):
                fh.write(f"{u}\t{v}\t{g.adj[u][v]:.12g}\n")
    with open(nodes_path, "w", encoding="utf-8") as fh:
        for nd in g.nodes:
            rec = {
                "node_id": nd.node_id,
                "member_ids": sorted(nd.member_ids),
                "pinned_label": nd.pinned_label,
            }
            fh.write(json.dumps(rec) + "\n")


def load_graph(edges_path, nodes_path, kind="blended_G_pred") -> WeightedGraph:
    nodes = []
    with open(nodes_path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            nodes.append(
                Node(
                    node_id=rec["node_id"],
                    member_ids=frozenset(rec["member_ids"]),
                    pinned_label=rec["pinned_label"],
                )
            )
    adj: dict[int, dict[int, float]] = {nd.node_id: {} for nd in nodes}
    with open(edges_path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            u_s, v_s, w_s = line.rstrip("\n").split("\t")
            adj[int(u_s)][int(v_s)] = float(w_s)
    return WeightedGraph(nodes=nodes, adj=adj, kind=kind)
