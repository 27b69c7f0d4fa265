"""Stage-wise command-line pipeline: keyphrases, discover, classify, metrics, export-graph."""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import random
import sys
from dataclasses import asdict, dataclass, fields

from . import classifier as clf
from . import corpus, discovery, feature_select, graph, keyphrase, louvain, metrics
from .corpus import DataError
from .graph import GraphError
from .mad import MadConfig

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


@dataclass
class PipelineConfig:
    # paths (no defaults; must come from config file or flags)
    dataset: str = ""
    background: str = ""
    embeddings: str = ""
    workdir: str = "."
    # keyphrase params
    n_max: int = keyphrase.DEFAULT_N_MAX
    min_df: int = keyphrase.DEFAULT_MIN_DF
    top_k: int = keyphrase.DEFAULT_TOP_K
    # rfe params
    rfe_max_iters: int = feature_select.DEFAULT_MAX_ITERS
    rfe: bool = True
    # discovery params
    kir: float = 0.0
    labeled_fraction: float = 0.1
    alpha: float = -1.0  # < 0 means grid search
    similarity_threshold: float = graph.DEFAULT_SIMILARITY_THRESHOLD
    # mad params
    mu_inj: float = 1.0
    mu1: float = 1e-2
    mu2: float = 1e-2
    beta: float = 2.0
    mad_tol: float = 1e-6
    mad_max_iters: int = 1000
    # classifier params
    epochs: int = 200
    learning_rate: float = 1e-3
    label_smoothing_eps: float = 0.1
    hidden_size: int = 256
    batch_size: int = 32
    shots: int = 0  # 0 = use the full train split
    stage: str = "full"  # base | residual | full
    threshold: float = 0.5
    # global
    task: str = "discover"  # discover | classify_mc | classify_ml
    rng_seed: int = 0


def load_config_file(path) -> dict:
    """Parse a flat key = value config file; '#' starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DataError(f"{path}: line {lineno}: expected key = value")
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip().strip('"')
    return out


def build_config(args) -> PipelineConfig:
    cfg = PipelineConfig()
    overrides = {}
    if getattr(args, "config", None):
        overrides.update(load_config_file(args.config))
    for f in fields(PipelineConfig):
        flag_val = getattr(args, f.name, None)
        if flag_val is not None:
            overrides[f.name] = flag_val
    for key, value in overrides.items():
        if not hasattr(cfg, key):
            raise DataError(f"unknown config key {key!r}")
        current = getattr(cfg, key)
        if isinstance(value, str) and not isinstance(current, str):
            if isinstance(current, bool):
                value = value.lower() in ("1", "true", "yes")
            elif isinstance(current, int):
                value = int(value)
            elif isinstance(current, float):
                value = float(value)
        setattr(cfg, key, value)
    return cfg


def config_hash(cfg: PipelineConfig, keys=None) -> str:
    payload = asdict(cfg)
    if keys is not None:
        payload = {k: payload[k] for k in sorted(keys)}
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def log(msg):
    print(msg, file=sys.stderr)


def _mad_config(cfg: PipelineConfig) -> MadConfig:
    return MadConfig(
        mu_inj=cfg.mu_inj,
        mu1=cfg.mu1,
        mu2=cfg.mu2,
        beta=cfg.beta,
        tol=cfg.mad_tol,
        max_iters=cfg.mad_max_iters,
    )


KEYPHRASE_KEYS = (
    "dataset", "background", "n_max", "min_df", "top_k", "rfe", "rfe_max_iters",
    "rng_seed",
)


def _build_keyphrases(cfg: PipelineConfig, dataset):
    if not cfg.background:
        raise DataError("no background corpus configured (--background)")
    background = corpus.load_background(cfg.background)
    stats, occurrences = keyphrase.extract_ngrams(dataset, background, n_max=cfg.n_max)
    n_target = len(dataset)
    n_union = n_target + len(background.utterances)
    kpset = keyphrase.build_keyphrase_set(
        stats, occurrences, n_target, n_union, min_df=cfg.min_df, top_k=cfg.top_k
    )
    if cfg.rfe and kpset.items:
        nodes = graph.merge_labeled_nodes(
            dataset, corpus.SeedMask(frozenset(), frozenset())
        )
        kpset, state = feature_select.rfe_select(
            nodes, kpset, max(dataset.K, 1),
            max_iters=cfg.rfe_max_iters, rng_seed=cfg.rng_seed,
        )
        log(
            f"rfe: kept {len(kpset)} keyphrases, Q={state.q_current:.4f}, "
            f"clusters={state.clusters_current}"
        )
    stats_by_ngram = {st.ngram: st for st in stats}
    return kpset, stats_by_ngram


def _keyphrase_paths(cfg: PipelineConfig, workdir):
    h = config_hash(cfg, KEYPHRASE_KEYS)
    return workdir / f"keyphrases-{h}.tsv", workdir / f"keyphrases-{h}.index.json"


def _write_keyphrase_artifacts(cfg, kpset, stats_by_ngram, tsv_path, index_path):
    keyphrase.dump_keyphrases(kpset, stats_by_ngram, tsv_path)
    index = {
        " ".join(kp.ngram): {
            "score": kp.score,
            "ids": sorted(kpset.inverted_index[kp.ngram]),
        }
        for kp in kpset.items
    }
    with open(index_path, "w", encoding="utf-8") as fh:
        json.dump(index, fh, sort_keys=True, indent=0)
        fh.write("\n")


def _load_keyphrase_index(index_path) -> keyphrase.KeyphraseSet:
    with open(index_path, encoding="utf-8") as fh:
        index = json.load(fh)
    items = [
        keyphrase.ScoredKeyphrase(ngram=tuple(name.split(" ")), score=rec["score"])
        for name, rec in index.items()
    ]
    items.sort(key=lambda kp: (-kp.score, kp.ngram))
    inverted = {
        tuple(name.split(" ")): frozenset(rec["ids"]) for name, rec in index.items()
    }
    return keyphrase.KeyphraseSet(items=items, inverted_index=inverted)


def _ensure_keyphrases(cfg: PipelineConfig, dataset, workdir):
    tsv_path, index_path = _keyphrase_paths(cfg, workdir)
    if index_path.exists():
        log(f"using cached keyphrases: {index_path.name}")
        return _load_keyphrase_index(index_path)
    kpset, stats_by_ngram = _build_keyphrases(cfg, dataset)
    _write_keyphrase_artifacts(cfg, kpset, stats_by_ngram, tsv_path, index_path)
    return kpset


def _workdir(cfg: PipelineConfig):
    from pathlib import Path

    wd = Path(cfg.workdir)
    wd.mkdir(parents=True, exist_ok=True)
    return wd


def cmd_keyphrases(cfg: PipelineConfig) -> int:
    dataset = corpus.load_dataset(cfg.dataset)
    if not len(dataset):
        raise DataError(f"{cfg.dataset}: dataset is empty")
    workdir = _workdir(cfg)
    tsv_path, index_path = _keyphrase_paths(cfg, workdir)
    kpset, stats_by_ngram = _build_keyphrases(cfg, dataset)
    _write_keyphrase_artifacts(cfg, kpset, stats_by_ngram, tsv_path, index_path)
    log(f"wrote {tsv_path} ({len(kpset)} keyphrases)")
    print(str(tsv_path))
    return EXIT_OK


def _discovery_config(cfg: PipelineConfig) -> discovery.DiscoveryConfig:
    return discovery.DiscoveryConfig(
        similarity_threshold=cfg.similarity_threshold,
        alpha=None if cfg.alpha < 0 else cfg.alpha,
        rng_seed=cfg.rng_seed,
    )


def _gold_clusters(dataset):
    """Single gold label per utterance, or None when gold is absent/partial."""
    gold = {}
    for u in dataset.utterances:
        if len(u.labels) != 1:
            return None
        (lab,) = u.labels
        gold[u.id] = lab
    return gold


def cmd_discover(cfg: PipelineConfig) -> int:
    dataset = corpus.load_dataset(cfg.dataset)
    if not len(dataset):
        raise DataError(f"{cfg.dataset}: dataset is empty")
    workdir = _workdir(cfg)
    kpset = _ensure_keyphrases(cfg, dataset, workdir)
    embeddings = corpus.load_embeddings(cfg.embeddings)
    seed = corpus.make_seed_mask(dataset, cfg.kir, cfg.labeled_fraction, cfg.rng_seed)
    result = discovery.discover(dataset, embeddings, kpset, seed, _discovery_config(cfg))
    h = config_hash(cfg)
    out_path = workdir / f"discovery-{h}.jsonl"
    discovery.dump_discovery(result, out_path)
    log(
        f"discovered {result.num_clusters} clusters "
        f"(alpha={result.alpha_used}, silhouette={result.quality:.4f})"
        if not math.isnan(result.quality)
        else f"discovered {result.num_clusters} clusters (alpha={result.alpha_used})"
    )
    gold = _gold_clusters(dataset)
    if gold is None:
        log("gold labels absent or multilabel; clustering metrics skipped")
    else:
        ids = sorted(result.assignment)
        score = metrics.ClusteringScore(
            acc=metrics.clustering_accuracy(
                [result.assignment[i] for i in ids], [gold[i] for i in ids]
            ),
            nmi=metrics.nmi([result.assignment[i] for i in ids], [gold[i] for i in ids]),
            ari=metrics.ari([result.assignment[i] for i in ids], [gold[i] for i in ids]),
        )
        metrics_path = workdir / f"discovery-{h}.metrics.json"
        with open(metrics_path, "w", encoding="utf-8") as fh:
            json.dump(score.as_json(), fh, sort_keys=True)
            fh.write("\n")
        log(f"metrics: {json.dumps(score.as_json(), sort_keys=True)}")
    print(str(out_path))
    return EXIT_OK


def _subsample_shots(dataset, shots, rng_seed):
    """Deterministically keep `shots` labeled train examples per class."""
    by_class = {}
    for u in dataset.utterances:
        if u.split != "train":
            continue
        for lab in sorted(u.labels):
            by_class.setdefault(lab, []).append(u.id)
    rng = random.Random(rng_seed)
    keep = set()
    for lab in sorted(by_class):
        ids = sorted(by_class[lab])
        rng.shuffle(ids)
        keep.update(ids[:shots])
    return sorted(keep)


def cmd_classify(cfg: PipelineConfig) -> int:
    if cfg.task not in ("classify_mc", "classify_ml"):
        raise DataError(f"classify requires task classify_mc or classify_ml, got {cfg.task!r}")
    mode = "multiclass" if cfg.task == "classify_mc" else "multilabel"
    dataset = corpus.load_dataset(cfg.dataset)
    if not len(dataset):
        raise DataError(f"{cfg.dataset}: dataset is empty")
    workdir = _workdir(cfg)
    kpset = _ensure_keyphrases(cfg, dataset, workdir)
    embeddings = corpus.load_embeddings(cfg.embeddings)

    train_ids = (
        _subsample_shots(dataset, cfg.shots, cfg.rng_seed)
        if cfg.shots > 0
        else dataset.split_ids("train")
    )
    eval_split = "test" if dataset.split_ids("test") else "validation"
    eval_ids = dataset.split_ids(eval_split) or dataset.ids()

    train_cfg = clf.TrainConfig(
        epochs=cfg.epochs,
        learning_rate=cfg.learning_rate,
        label_smoothing_eps=cfg.label_smoothing_eps,
        hidden_size=cfg.hidden_size,
        rng_seed=cfg.rng_seed,
        batch_size=cfg.batch_size,
    )
    model = clf.train_mlp(embeddings, dataset, train_cfg, mode=mode, train_ids=train_ids)
    all_ids = dataset.ids()
    base = clf.predict(model, embeddings, all_ids)

    stage_preds = {"base": base}
    if cfg.stage in ("residual", "full"):
        nodes = graph.merge_labeled_nodes(dataset, corpus.SeedMask(frozenset(), frozenset()))
        w = graph.row_minmax_normalize(graph.build_lexical_graph(nodes, kpset))
        a = graph.build_similarity_graph(nodes, embeddings, threshold=cfg.similarity_threshold)
        alpha = cfg.alpha if cfg.alpha >= 0 else graph.tune_alpha(w, a, rng_seed=cfg.rng_seed)
        g_pred = graph.blend(w, a, alpha)
        mad_cfg = _mad_config(cfg)
        corrected = clf.propagate_residuals(g_pred, base, dataset, train_ids, mad_cfg)
        stage_preds["residual"] = corrected
        if cfg.stage == "full":
            stage_preds["full"] = clf.smooth_labels(
                g_pred, corrected, dataset, train_ids, mad_cfg
            )

    gold = {
        i: set(dataset.get(i).labels) for i in eval_ids if dataset.get(i).labels
    }
    h = config_hash(cfg)
    report = {}
    final_stage = max(stage_preds, key=lambda s: ("base", "residual", "full").index(s))
    for stage, preds in stage_preds.items():
        decided = clf.decide(preds, mode=mode, threshold=cfg.threshold)
        if gold and set(gold) <= set(decided):
            score = metrics.classification_scores(
                {i: decided[i] for i in gold}, gold, mode
            )
            report[stage] = score.as_json()
    model_path = workdir / f"model-{h}.bin"
    clf.save_model(model, model_path)
    preds_path = workdir / f"predictions-{h}.jsonl"
    final = stage_preds[final_stage]
    decided = clf.decide(final, mode=mode, threshold=cfg.threshold)
    with open(preds_path, "w", encoding="utf-8") as fh:
        for utt_id in sorted(final.rows):
            fh.write(
                json.dumps(
                    {
                        "id": utt_id,
                        "scores": [round(float(x), 6) for x in final.rows[utt_id]],
                        "decided": sorted(
                            dataset.label_vocab[i] for i in decided[utt_id]
                        ),
                    }
                )
                + "\n"
            )
    if report:
        metrics_path = workdir / f"classify-{h}.metrics.json"
        with open(metrics_path, "w", encoding="utf-8") as fh:
            json.dump(report, fh, sort_keys=True, indent=2)
            fh.write("\n")
        log(f"metrics per stage: {json.dumps(report, sort_keys=True)}")
    else:
        log("no gold labels on the evaluation split; metrics skipped")
    print(str(preds_path))
    return EXIT_OK


def cmd_metrics(cfg: PipelineConfig, predictions_path) -> int:
    dataset = corpus.load_dataset(cfg.dataset)
    gold = _gold_clusters(dataset)
    assignment = {}
    with open(predictions_path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                assignment[rec["id"]] = rec["cluster"]
    if gold is None:
        raise DataError("metrics command needs a fully single-labeled dataset")
    if set(assignment) != set(gold):
        raise DataError("predictions do not cover the dataset ids")
    ids = sorted(assignment)
    pred = [assignment[i] for i in ids]
    gold_list = [gold[i] for i in ids]
    score = metrics.ClusteringScore(
        acc=metrics.clustering_accuracy(pred, gold_list),
        nmi=metrics.nmi(pred, gold_list),
        ari=metrics.ari(pred, gold_list),
    )
    print(json.dumps(score.as_json(), sort_keys=True))
    return EXIT_OK


def cmd_export_graph(cfg: PipelineConfig) -> int:
    dataset = corpus.load_dataset(cfg.dataset)
    if not len(dataset):
        raise DataError(f"{cfg.dataset}: dataset is empty")
    workdir = _workdir(cfg)
    kpset = _ensure_keyphrases(cfg, dataset, workdir)
    embeddings = corpus.load_embeddings(cfg.embeddings)
    seed = corpus.make_seed_mask(dataset, cfg.kir, cfg.labeled_fraction, cfg.rng_seed)
    nodes = graph.merge_labeled_nodes(dataset, seed)
    w = graph.row_minmax_normalize(graph.build_lexical_graph(nodes, kpset))
    a = graph.build_similarity_graph(nodes, embeddings, threshold=cfg.similarity_threshold)
    alpha = cfg.alpha if cfg.alpha >= 0 else graph.tune_alpha(w, a, rng_seed=cfg.rng_seed)
    g_pred = graph.blend(w, a, alpha)
    h = config_hash(cfg)
    edges_path = workdir / f"graph-{h}.edges.tsv"
    nodes_path = workdir / f"graph-{h}.nodes.jsonl"
    graph.dump_graph(g_pred, edges_path, nodes_path)
    log(f"wrote {edges_path} and {nodes_path} (alpha={alpha})")
    print(str(edges_path))
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _add_common(sub):
    sub.add_argument("--config", help="key = value config file; flags override it")
    for f in fields(PipelineConfig):
        arg = "--" + f.name.replace("_", "-")
        if f.type == "bool" or isinstance(f.default, bool):
            sub.add_argument(arg, default=None, type=lambda s: s.lower() in ("1", "true", "yes"))
        elif isinstance(f.default, int):
            sub.add_argument(arg, default=None, type=int)
        elif isinstance(f.default, float):
            sub.add_argument(arg, default=None, type=float)
        else:
            sub.add_argument(arg, default=None)


def build_parser():
    parser = _Parser(prog="intentgraph", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True)
    for name in ("keyphrases", "discover", "classify", "export-graph"):
        _add_common(subs.add_parser(name))
    m = subs.add_parser("metrics")
    _add_common(m)
    m.add_argument("predictions", help="discovery JSONL to score")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = build_config(args)
        if args.command == "keyphrases":
            return cmd_keyphrases(cfg)
        if args.command == "discover":
            return cmd_discover(cfg)
        if args.command == "classify":
            return cmd_classify(cfg)
        if args.command == "metrics":
            return cmd_metrics(cfg, args.predictions)
        if args.command == "export-graph":
            return cmd_export_graph(cfg)
        parser.error(f"unknown command {args.command!r}")
    except (DataError, GraphError, OSError) as exc:
        log(f"error: {exc}")
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
