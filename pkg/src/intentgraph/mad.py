"""Modified Adsorption: graph label propagation with per-node action probabilities.

Minimizes, per label column, a quadratic with three terms: seed fidelity,
edge smoothness, and a prior (dummy-label) regularizer, each weighted by the
node's injection / continuation / abandonment probability. Solved by Jacobi
iteration; every node row is updated from the previous iterate, so rows may
be updated in any order (or in parallel) with identical results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .graph import WeightedGraph


@dataclass
class MadConfig:
    mu_inj: float = 1.0
    mu1: float = 1e-2
    mu2: float = 1e-2
    beta: float = 2.0
    tol: float = 1e-6
    max_iters: int = 1000

    def __post_init__(self):
        for name in ("mu_inj", "mu1", "mu2", "beta", "tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class MadProbabilities:
    p_inj: dict[int, float]
    p_cont: dict[int, float]
    p_abnd: dict[int, float]


@dataclass
class MadResult:
    y_hat: dict[int, np.ndarray]
    converged: bool
    iterations: int
    objective_trace: list[float] = field(default_factory=list)


def compute_probabilities(g: WeightedGraph, seeds, beta) -> MadProbabilities:
    """Entropy-based split of each node's unit mass into continue/inject/abandon.

    High-entropy transition rows (hubs) get less continuation probability;
    only seed nodes receive injection mass.
    """
    seeds = set(seeds)
    p_inj, p_cont, p_abnd = {}, {}, {}
    for nd in g.nodes:
        v = nd.node_id
        nbrs = {u: w for u, w in g.adj.get(v, {}).items() if w > 0 and u != v}
        deg = sum(nbrs.values())
        if deg == 0:
            inj = 1.0 if v in seeds else 0.0
            p_inj[v] = inj
            p_cont[v] = 0.0
            p_abnd[v] = 1.0 - inj
            continue
        ent = 0.0
        for w in nbrs.values():
            p = w / deg
            ent -= p * math.log(p)
        c = math.log(beta) / (math.log(beta) + math.log(beta + math.exp(ent)))
        d = (1.0 - c) * math.sqrt(ent) if v in seeds else 0.0
        z = max(c + d, 1.0)
        p_cont[v] = c / z
        p_inj[v] = d / z
        p_abnd[v] = 1.0 - p_cont[v] - p_inj[v]
    return MadProbabilities(p_inj=p_inj, p_cont=p_cont, p_abnd=p_abnd)


def _as_matrix(rows: dict[int, np.ndarray], ids, width) -> np.ndarray:
    out = np.zeros((len(ids), width))
    for i, v in enumerate(ids):
        if v in rows:
            out[i] = rows[v]
    return out


def mad_objective(
    g: WeightedGraph,
    y: dict[int, np.ndarray],
    y_hat: dict[int, np.ndarray],
    r: dict[int, np.ndarray],
    seeds,
    cfg: MadConfig,
    probs: MadProbabilities | None = None,
) -> float:
    """Value of the three-term quadratic.

    With probs=None the terms are unweighted (seed indicator, raw smoothness,
    uniform prior). Passing the solver's probabilities gives the objective
    the iteration actually minimizes.
    """
    ids = g.node_ids()
    widths = {len(np.atleast_1d(row)) for rows in (y, y_hat, r) for row in rows.values()}
    if len(widths) > 1:
        raise ValueError(f"inconsistent label dimensions: {sorted(widths)}")
    width = widths.pop() if widths else 0
    seeds = set(seeds)
    ym = _as_matrix(y, ids, width)
    yh = _as_matrix(y_hat, ids, width)
    rm = _as_matrix(r, ids, width)
    pos = {v: i for i, v in enumerate(ids)}

    if probs is None:
        w_seed = {v: (cfg.mu_inj if v in seeds else 0.0) for v in ids}
        w_edge = {v: 1.0 for v in ids}
        w_prior = {v: cfg.mu2 for v in ids}
    else:
        w_seed = {v: (cfg.mu_inj * probs.p_inj[v] if v in seeds else 0.0) for v in ids}
        w_edge = {v: probs.p_cont[v] for v in ids}
        w_prior = {v: cfg.mu2 * probs.p_abnd[v] for v in ids}

    total = 0.0
    for v in ids:
        i = pos[v]
        total += w_seed[v] * float(np.sum((yh[i] - ym[i]) ** 2))
        total += w_prior[v] * float(np.sum((yh[i] - rm[i]) ** 2))
    for v in ids:
        i = pos[v]
        for u, w in g.adj.get(v, {}).items():
            if u == v:
                continue
            j = pos[u]
            total += cfg.mu1 * w_edge[v] * w * float(np.sum((yh[i] - yh[j]) ** 2))
    return total


def mad_solve(
    g: WeightedGraph,
    y: dict[int, np.ndarray],
    seeds,
    r: dict[int, np.ndarray] | None = None,
    cfg: MadConfig | None = None,
    diagnostics=None,
) -> MadResult:
    """Jacobi iteration to the minimizer of the probability-weighted objective.

    y maps node ids to K+1 length rows (dummy label last). r defaults to all
    mass on the dummy label. Non-convergence after max_iters is flagged on
    the result, not raised. diagnostics, if given, is called with
    (iteration, objective, max_delta) once per iteration.
    """
    cfg = cfg or MadConfig()
    seeds = set(seeds)
    ids = g.node_ids()
    if not ids:
        return MadResult(y_hat={}, converged=True, iterations=0)
    width = len(np.atleast_1d(next(iter(y.values())))) if y else 1
    if r is None:
        dummy = np.zeros(width)
        dummy[-1] = 1.0
        r = {v: dummy for v in ids}

    probs = compute_probabilities(g, seeds, cfg.beta)
    pos = {v: i for i, v in enumerate(ids)}
    ym = _as_matrix(y, ids, width)
    rm = _as_matrix(r, ids, width)

    # precompute, per node, the symmetric propagation weights and normalizer
    prop: list[list[tuple[int, float]]] = [[] for _ in ids]
    z = np.zeros(len(ids))
    for v in ids:
        i = pos[v]
        acc = 0.0
        for u, w in g.adj.get(v, {}).items():
            if u == v:
                continue
            j = pos[u]
            pw = probs.p_cont[v] * w + probs.p_cont[u] * g.adj.get(u, {}).get(v, 0.0)
            if pw > 0:
                prop[i].append((j, cfg.mu1 * pw))
                acc += cfg.mu1 * pw
        inj = cfg.mu_inj * probs.p_inj[v] if v in seeds else 0.0
        z[i] = inj + acc + cfg.mu2 * probs.p_abnd[v]

    yh = ym.copy()
    converged = False
    trace = []
    iters = 0
    for iters in range(1, cfg.max_iters + 1):
        new = np.zeros_like(yh)
        for v in ids:
            i = pos[v]
            num = cfg.mu2 * probs.p_abnd[v] * rm[i]
            if v in seeds:
                num = num + cfg.mu_inj * probs.p_inj[v] * ym[i]
            for j, pw in prop[i]:
                num = num + pw * yh[j]
            if z[i] > 0:
                new[i] = num / z[i]
            else:
                new[i] = yh[i]
        max_delta = float(np.max(np.abs(new - yh))) if len(ids) else 0.0
        yh = new
        if diagnostics is not None:
            rows = {v: yh[pos[v]] for v in ids}
            obj = mad_objective(g, y, rows, r, seeds, cfg, probs=probs)
            trace.append(obj)
            diagnostics(iters, obj, max_delta)
        if max_delta < cfg.tol:
            converged = True
            break
    return MadResult(
        y_hat={v: yh[pos[v]].copy() for v in ids},
        converged=converged,
        iterations=iters,
        objective_trace=trace,
    )
