"""Hierarchical topic modeling over document graphs in hyperbolic space.

The model couples three structures: a topic tree whose node embeddings
live on a hyperboloid, a document graph aggregated by tangent-space
attention, and a Transformer encoder that mixes both into each
document's representation. Training grows and prunes the tree from
usage statistics while optimizing reconstruction and contrastive
neighborhood objectives.
"""

from .checkpoint import Checkpoint, load_checkpoint, restore_model, save_checkpoint
from .config import ConfigError, RunConfig, make_config
from .corpus import (
    DataError,
    DocumentGraph,
    Split,
    Vocab,
    build_graph,
    build_graph_with_vocab,
    build_vocab,
    knn_edges,
    load_corpus,
    load_edges,
    split,
    tokenize,
)
from .doctopic import (
    TopicDistributionTriple,
    child_selection_probs,
    level_distribution,
    path_distribution,
    topic_distribution,
    topic_triple,
    tree_embedding,
)
from .drnn import (
    DoublyRnn,
    EmbeddingTable,
    HypRnnCell,
    build_embedding_table,
    compute_level_embeddings,
    compute_topic_embeddings,
    fermi_dirac,
    hyp_drnn_combine,
    hyp_rnn_step,
)
from .encoder import (
    EgoBatch,
    GraphTopicModel,
    TokenEmbedder,
    asym_mha,
    hyp_trm_layer,
)
from .evaluate import (
    CorpusWindowReference,
    EvalReport,
    f1_scores,
    knn_classify,
    link_auc,
    npmi,
    perplexity_exponent,
)
from .evaluate import evaluate as evaluate_model
from .geometry import (
    EuclideanSpace,
    Hyperboloid,
    distance,
    distance_sq,
    exp_map,
    exp_map0,
    hyp_activation,
    log_map,
    log_map0,
    minkowski_inner,
    parallel_transport,
    project_to_manifold,
    tangent_at_origin,
)
from .graphattn import GraphAttnParams, graph_embed, hgnn_aggregate, hgnn_transform
from .objective import (
    NumericalError,
    TrainResult,
    graph_loss,
    reconstruct,
    supervised_loss,
    topic_loss,
    topic_word_distribution,
    total_loss,
    train,
)
from .tree import TopicTree, TreeChange, init_tree, enumerate_paths, left_siblings, topic_word_mass, update_tree

__version__ = "0.1.0"
