"""Single-hidden-layer base classifier and the two propagation post-processing steps."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .corpus import DataError, Dataset, EmbeddingTable
from .graph import WeightedGraph, symmetrize
from .mad import MadConfig, mad_solve

MAGIC = b"IGMLP1\x00"


@dataclass
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 1e-3
    label_smoothing_eps: float = 0.1
    hidden_size: int = 256
    rng_seed: int = 0
    batch_size: int = 32

    def __post_init__(self):
        if not 0 <= self.label_smoothing_eps < 1:
            raise ValueError("label_smoothing_eps must be in [0, 1)")
        for name in ("epochs", "hidden_size", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass
class MlpModel:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    mode: str  # multiclass | multilabel


@dataclass
class PredictionMatrix:
    rows: dict[str, np.ndarray]
    mode: str

    def num_labels(self) -> int:
        return len(next(iter(self.rows.values())))


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def forward(model: MlpModel, x: np.ndarray):
    hidden = np.maximum(0.0, x @ model.w1 + model.b1)
    logits = hidden @ model.w2 + model.b2
    if model.mode == "multiclass":
        return _softmax(logits), hidden
    return _sigmoid(logits), hidden


def loss_and_grads(model: MlpModel, x: np.ndarray, targets: np.ndarray):
    """Mean cross-entropy over the batch and gradients for all parameters."""
    probs, hidden = forward(model, x)
    n = x.shape[0]
    eps = 1e-12
    if model.mode == "multiclass":
        loss = -float(np.sum(targets * np.log(probs + eps))) / n
    else:
        loss = -float(
            np.sum(targets * np.log(probs + eps) + (1 - targets) * np.log(1 - probs + eps))
        ) / n
    dlogits = (probs - targets) / n
    dw2 = hidden.T @ dlogits
    db2 = dlogits.sum(axis=0)
    dhidden = dlogits @ model.w2.T
    dhidden = dhidden * (hidden > 0)
    dw1 = x.T @ dhidden
    db1 = dhidden.sum(axis=0)
    return loss, {"w1": dw1, "b1": db1, "w2": dw2, "b2": db2}


def smoothed_targets(dataset: Dataset, ids, mode, eps):
    """Label-smoothed target matrix for the given utterance ids."""
    k = dataset.K
    out = np.zeros((len(ids), k))
    for i, utt_id in enumerate(ids):
        u = dataset.get(utt_id)
        if not u.labels:
            raise DataError(f"utterance {utt_id!r} has no labels")
        if mode == "multiclass":
            if len(u.labels) != 1:
                raise DataError(f"utterance {utt_id!r} is not single-label")
            (lab,) = u.labels
            out[i] = eps / k
            out[i, lab] = 1 - eps + eps / k
        else:
            hot = np.zeros(k)
            hot[sorted(u.labels)] = 1.0
            out[i] = (1 - eps) * hot + eps * 0.5
    return out


def train_mlp(
    features: EmbeddingTable,
    dataset: Dataset,
    cfg: TrainConfig,
    mode="multiclass",
    train_ids=None,
) -> MlpModel:
    """Mini-batch gradient descent on frozen input features. Deterministic in rng_seed."""
    if train_ids is None:
        train_ids = dataset.split_ids("train")
    train_ids = list(train_ids)
    if not train_ids:
        raise DataError("no training utterances")
    x = np.stack([features.get(i) for i in train_ids])
    targets = smoothed_targets(dataset, train_ids, mode, cfg.label_smoothing_eps)

    rng = np.random.default_rng(cfg.rng_seed)
    dim, h, k = x.shape[1], cfg.hidden_size, dataset.K
    model = MlpModel(
        w1=rng.normal(0.0, np.sqrt(2.0 / dim), size=(dim, h)),
        b1=np.zeros(h),
        w2=rng.normal(0.0, np.sqrt(2.0 / h), size=(h, k)),
        b2=np.zeros(k),
        mode=mode,
    )
    n = len(train_ids)
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            _, grads = loss_and_grads(model, x[batch], targets[batch])
            model.w1 -= cfg.learning_rate * grads["w1"]
            model.b1 -= cfg.learning_rate * grads["b1"]
            model.w2 -= cfg.learning_rate * grads["w2"]
            model.b2 -= cfg.learning_rate * grads["b2"]
    return model


def predict(model: MlpModel, features: EmbeddingTable, ids) -> PredictionMatrix:
    ids = list(ids)
    x = np.stack([features.get(i) for i in ids])
    probs, _ = forward(model, x)
    return PredictionMatrix(rows={i: probs[j] for j, i in enumerate(ids)}, mode=model.mode)


def _gold_row(dataset: Dataset, utt_id, mode):
    u = dataset.get(utt_id)
    row = np.zeros(dataset.K)
    if mode == "multiclass":
        (lab,) = u.labels
        row[lab] = 1.0
    else:
        row[sorted(u.labels)] = 1.0
    return row


def _clip_valid(rows, mode):
    out = {}
    for utt_id, row in rows.items():
        if mode == "multiclass":
            row = np.maximum(row, 0.0)
            s = row.sum()
            out[utt_id] = row / s if s > 0 else np.full_like(row, 1.0 / len(row))
        else:
            out[utt_id] = np.clip(row, 0.0, 1.0)
    return out


def propagate_residuals(
    g_pred: WeightedGraph,
    base: PredictionMatrix,
    dataset: Dataset,
    seeds,
    cfg: MadConfig | None = None,
) -> PredictionMatrix:
    """Propagate training-set residual errors and add the smoothed errors to base.

    seeds are utterance ids from the train split; graph nodes must be
    singletons covering every id in base.
    """
    cfg = cfg or MadConfig()
    k = base.num_labels()
    member_map = g_pred.member_to_node()
    seeds = set(seeds)
    y = {}
    for nd in g_pred.nodes:
        (utt_id,) = nd.member_ids
        row = np.zeros(k + 1)
        if utt_id in seeds:
            row[:k] = _gold_row(dataset, utt_id, base.mode) - base.rows[utt_id]
        y[nd.node_id] = row
    seed_nodes = {member_map[i] for i in seeds}
    r = {nd.node_id: np.zeros(k + 1) for nd in g_pred.nodes}
    result = mad_solve(symmetrize(g_pred), y, seed_nodes, r=r, cfg=cfg)
    corrected = {}
    for nd in g_pred.nodes:
        (utt_id,) = nd.member_ids
        corrected[utt_id] = base.rows[utt_id] + result.y_hat[nd.node_id][:k]
    return PredictionMatrix(rows=_clip_valid(corrected, base.mode), mode=base.mode)


def smooth_labels(
    g_pred: WeightedGraph,
    corrected: PredictionMatrix,
    dataset: Dataset,
    seeds,
    cfg: MadConfig | None = None,
) -> PredictionMatrix:
    """Homophily smoothing: gold seeds on train nodes, soft seeds elsewhere."""
    cfg = cfg or MadConfig()
    k = corrected.num_labels()
    seeds = set(seeds)
    y = {}
    for nd in g_pred.nodes:
        (utt_id,) = nd.member_ids
        row = np.zeros(k + 1)
        if utt_id in seeds:
            row[:k] = _gold_row(dataset, utt_id, corrected.mode)
        else:
            row[:k] = corrected.rows[utt_id]
        y[nd.node_id] = row
    all_nodes = {nd.node_id for nd in g_pred.nodes}
    result = mad_solve(symmetrize(g_pred), y, all_nodes, cfg=cfg)
    rows = {}
    for nd in g_pred.nodes:
        (utt_id,) = nd.member_ids
        rows[utt_id] = result.y_hat[nd.node_id][:k]
    return PredictionMatrix(rows=_clip_valid(rows, corrected.mode), mode=corrected.mode)


def decide(final: PredictionMatrix, mode=None, threshold=0.5):
    """Map score rows to label sets; multilabel falls back to argmax when empty."""
    mode = mode or final.mode
    if mode == "multilabel" and not 0 < threshold < 1:
        raise ValueError("threshold must be in (0, 1)")
    out = {}
    for utt_id, row in final.rows.items():
        if mode == "multiclass":
            out[utt_id] = {int(np.argmax(row))}
        else:
            chosen = {int(i) for i in np.flatnonzero(row > threshold)}
            out[utt_id] = chosen or {int(np.argmax(row))}
    return out


def save_model(model: MlpModel, path):
    """Versioned binary checkpoint: shape header + row-major float64 payload."""
    dim, h = model.w1.shape
    k = model.w2.shape[1]
    mode_byte = b"\x00" if model.mode == "multiclass" else b"\x01"
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(mode_byte)
        fh.write(struct.pack("<III", dim, h, k))
        for arr in (model.w1, model.b1, model.w2, model.b2):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_model(path) -> MlpModel:
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise DataError(f"{path}: not a model checkpoint")
        mode = "multiclass" if fh.read(1) == b"\x00" else "multilabel"
        dim, h, k = struct.unpack("<III", fh.read(12))
        def read(shape):
            count = int(np.prod(shape))
            buf = fh.read(count * 8)
            if len(buf) != count * 8:
                raise DataError(f"{path}: truncated checkpoint")
            return np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
        return MlpModel(
            w1=read((dim, h)), b1=read((h,)), w2=read((h, k)), b2=read((k,)), mode=mode
        )
