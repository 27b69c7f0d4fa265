"""Graph-based intent discovery and transductive intent classification."""

from .corpus import (
    BackgroundCorpus,
    DataError,
    Dataset,
    EmbeddingTable,
    SeedMask,
    Utterance,
    load_background,
    load_dataset,
    load_embeddings,
    make_seed_mask,
    save_dataset,
    save_embeddings,
)
from .keyphrase import (
    KeyphraseSet,
    NgramStats,
    ScoredKeyphrase,
    build_keyphrase_set,
    extract_ngrams,
    score_keyphrase,
)
from .graph import (
    GraphError,
    Node,
    WeightedGraph,
    add_nodes_incremental,
    blend,
    build_lexical_graph,
    build_similarity_graph,
    merge_labeled_nodes,
    row_minmax_normalize,
    symmetrize,
    tune_alpha,
)
from .louvain import Partition, louvain, modularity
from .feature_select import rfe_select
from .mad import MadConfig, MadProbabilities, compute_probabilities, mad_objective, mad_solve
from .classifier import (
    MlpModel,
    PredictionMatrix,
    TrainConfig,
    decide,
    predict,
    propagate_residuals,
    smooth_labels,
    train_mlp,
)
from .discovery import DiscoveryConfig, DiscoveryResult, assign_new, discover
from .metrics import (
    ClassificationScore,
    ClusteringScore,
    UndefinedSilhouette,
    ari,
    classification_scores,
    clustering_accuracy,
    nmi,
    silhouette,
)

__version__ = "0.1.0"
