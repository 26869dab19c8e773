"""Deep Dirichlet priors on topic word-distributions with Gibbs inference."""

from .corpus import (
    Corpus,
    CorpusFormatError,
    HeldoutSplit,
    load_corpus,
    save_corpus,
    split_documents,
    split_words,
    subsample_words,
)
from .distributions import (
    ParameterError,
    RngStream,
    crt_expectation,
    sample_beta,
    sample_crt,
    sample_dirichlet,
    sample_gamma,
    sample_multinomial,
)
from .evaluation import (
    build_cooccurrence,
    extract_hierarchy,
    npmi_coherence,
    perplexity,
    shrinkage_stats,
    top_words,
)
from .network import (
    DirBNConfig,
    DirBNState,
    LatentCounts,
    PriorCache,
    compute_prior,
    compute_prior_cache,
    downward_pass,
    generate_corpus,
    init_state,
    upward_pass,
)
from .snapshot import load_samples, load_state, save_samples, save_state
from .topicmodel import (
    TopicModelState,
    TrainResult,
    TrainSettings,
    infer_theta_heldout,
    init_model,
    sample_assignments,
    train,
    update_theta,
)

__version__ = "0.1.0"
