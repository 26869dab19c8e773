"""Multi-layer Dirichlet prior on topic word-distributions.

Layer t holds a column-stochastic topic matrix phi[t] (V x K_t).  The top
layer's columns are symmetric-Dirichlet draws with concentration eta; every
other layer's column k is a Dirichlet draw whose parameter vector is a
mixture of the layer above's topics,

    prior[t][:, k] = phi[t+1] @ link_weights[t][:, k],

with gamma-distributed link weights under a hierarchical gamma prior
(per-parent shapes ``link_shape``, shared rate ``link_rate``, and one more
level ``shape_budget`` / ``budget_rate`` above the shapes).

Inference alternates an upward pass that turns the bottom word-topic counts
into per-layer latent counts (beta auxiliary scale per column, CRT table
counts per cell, multinomial allocation of tables to parents) and a downward
pass that resamples hyperparameters, link weights and topics by conjugacy.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .corpus import Corpus
from .distributions import (
    TINY,
    ParameterError,
    RngStream,
    dirichlet_columns,
    multinomial_rows,
    sample_beta,
    sample_beta_vector,
    sample_crt,
    sample_crt_array,
    sample_gamma,
    sample_multinomial,
)

__all__ = [
    "DirBNConfig",
    "DirBNState",
    "PriorCache",
    "LatentCounts",
    "init_state",
    "compute_prior",
    "compute_prior_cache",
    "sample_column_scale",
    "sample_table_count",
    "allocate_to_parents",
    "upward_pass",
    "sample_link_weights",
    "sample_topics",
    "update_top_concentration",
    "update_layer_hypers",
    "downward_pass",
    "generate_corpus",
]

_ALLOC_CHUNK = 65536

# substream tags for the sweep phases
_S_INIT = 1
_S_UPWARD = 2
_S_DOWN_TOP = 3
_S_DOWN_LAYER = 4
_S_GENERATE = 5


@dataclass(frozen=True)
class DirBNConfig:
    """Shape and hyperparameters of the layered prior.

    ``layer_widths`` lists K_1..K_T bottom-up.  a0/b0 parameterise the prior
    on the top-layer concentration eta, e0/f0 the prior on each layer's shape
    budget, g0/h0 the priors on the gamma rates.  All gamma priors are
    (shape, scale) with scale = 1 / rate.
    """

    layer_widths: tuple[int, ...]
    vocab_size: int
    a0: float = 1.0
    b0: float = 1.0
    e0: float = 0.01
    f0: float = 0.01
    g0: float = 1.0
    h0: float = 1.0
    sample_top_hypers: bool = True
    # constants used for shape_budget / budget_rate when sample_top_hypers is off
    fixed_shape_budget: float = 1.0
    fixed_budget_rate: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "layer_widths", tuple(int(k) for k in self.layer_widths))
        if self.num_layers < 1 or any(k < 1 for k in self.layer_widths):
            raise ParameterError("need at least one layer and positive widths")
        if self.vocab_size < 2:
            raise ParameterError("vocab_size must be >= 2")
        for name in ("a0", "b0", "e0", "f0", "g0", "h0",
                     "fixed_shape_budget", "fixed_budget_rate"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"hyperparameter {name} must be positive")

    @property
    def num_layers(self) -> int:
        return len(self.layer_widths)


@dataclass
class DirBNState:
    """All layer matrices and scalars of the prior.

    phi[t]           V x K_t column-stochastic topics, t = 0..T-1
    link_weights[t]  K_{t+1} x K_t positive weights, t = 0..T-2
    link_shape[t]    per-parent gamma shapes for link_weights[t]
    link_rate[t]     shared gamma rate for link_weights[t]
    shape_budget[t]  total shape mass spread as shape_budget[t]/K_t per parent
    budget_rate[t]   gamma rate on link_shape[t]
    eta              symmetric Dirichlet concentration of the top layer
    """

    config: DirBNConfig
    phi: list[np.ndarray]
    link_weights: list[np.ndarray]
    link_shape: list[np.ndarray]
    link_rate: list[float]
    shape_budget: list[float]
    budget_rate: list[float]
    eta: float

    def copy(self) -> "DirBNState":
        return DirBNState(
            config=self.config,
            phi=[p.copy() for p in self.phi],
            link_weights=[b.copy() for b in self.link_weights],
            link_shape=[g.copy() for g in self.link_shape],
            link_rate=list(self.link_rate),
            shape_budget=list(self.shape_budget),
            budget_rate=list(self.budget_rate),
            eta=self.eta,
        )

    def validate(self, atol: float = 1e-9) -> None:
        cfg = self.config
        for t, p in enumerate(self.phi):
            if p.shape != (cfg.vocab_size, cfg.layer_widths[t]):
                raise ParameterError(f"phi[{t}] has shape {p.shape}")
            if np.any(p < 0) or np.max(np.abs(p.sum(axis=0) - 1.0)) > atol:
                raise ParameterError(f"phi[{t}] columns are not on the simplex")
        for t, b in enumerate(self.link_weights):
            if b.shape != (cfg.layer_widths[t + 1], cfg.layer_widths[t]):
                raise ParameterError(f"link_weights[{t}] has shape {b.shape}")
            if not np.all(b > 0):
                raise ParameterError(f"link_weights[{t}] must be strictly positive")
        scalars = (
            [self.eta]
            + list(self.link_rate)
            + list(self.shape_budget)
            + list(self.budget_rate)
        )
        if not all(s > 0 for s in scalars):
            raise ParameterError("state scalars must be strictly positive")
        if not all(np.all(g > 0) for g in self.link_shape):
            raise ParameterError("link shapes must be strictly positive")


@dataclass
class PriorCache:
    """Cached per-layer Dirichlet parameters phi[t+1] @ link_weights[t].

    ``colsums`` holds the link-weight column sums, which equal the parameter
    column sums because topic columns sum to one.
    """

    params: list[np.ndarray]
    colsums: list[np.ndarray]


@dataclass
class LatentCounts:
    """Per-sweep latent counts produced by the upward pass.

    input_counts[t]  V x K_t counts entering layer t (t = 0 is the word-topic
                     count matrix from the host topic model)
    aux_scale[t]     per-column beta auxiliary in (0, 1]; exactly 1 for empty
                     columns
    table_counts[t]  V x K_t CRT table counts drawn from input_counts[t]
    link_counts[t]   K_{t+1} x K_t tables allocated to each parent-child pair
    """

    input_counts: list[np.ndarray]
    aux_scale: list[np.ndarray] = field(default_factory=list)
    table_counts: list[np.ndarray] = field(default_factory=list)
    link_counts: list[np.ndarray] = field(default_factory=list)
    degenerate_allocations: int = 0


def _check_layer(t: int, upper: int, what: str) -> None:
    if not 0 <= t < upper:
        raise IndexError(f"{what} index {t} out of range 0..{upper - 1}")


def compute_prior(state: DirBNState, t: int) -> tuple[np.ndarray, np.ndarray]:
    """Dirichlet parameter matrix and column sums for layer t (t < T-1).

    The matrix product is floored at TINY: mathematically every entry is
    positive, but products of clamped draws can underflow to exact zero.
    """
    _check_layer(t, state.config.num_layers - 1, "link layer")
    params = np.maximum(state.phi[t + 1] @ state.link_weights[t], TINY)
    colsums = state.link_weights[t].sum(axis=0)
    return params, colsums


def compute_prior_cache(state: DirBNState) -> PriorCache:
    params, colsums = [], []
    for t in range(state.config.num_layers - 1):
        p, s = compute_prior(state, t)
        params.append(p)
        colsums.append(s)
    return PriorCache(params=params, colsums=colsums)


def init_state(config: DirBNConfig, rng: RngStream) -> DirBNState:
    """Single ancestral draw of the full state from its priors."""
    stream = rng.substream(_S_INIT)
    T = config.num_layers
    eta = sample_gamma(config.a0, 1.0 / config.b0, stream)
    link_rate, budget_rate, shape_budget, link_shape, link_weights = [], [], [], [], []
    for t in range(T - 1):
        k_child, k_parent = config.layer_widths[t], config.layer_widths[t + 1]
        c = sample_gamma(config.g0, 1.0 / config.h0, stream)
        if config.sample_top_hypers:
            c0 = sample_gamma(config.g0, 1.0 / config.h0, stream)
            g0_total = sample_gamma(config.e0, 1.0 / config.f0, stream)
        else:
            c0 = config.fixed_budget_rate
            g0_total = config.fixed_shape_budget
        shapes = sample_gamma(
            np.full(k_parent, g0_total / k_child), 1.0 / c0, stream
        )
        weights = sample_gamma(
            np.repeat(shapes[:, None], k_child, axis=1), 1.0 / c, stream
        )
        link_rate.append(c)
        budget_rate.append(c0)
        shape_budget.append(g0_total)
        link_shape.append(shapes)
        link_weights.append(weights)

    state = DirBNState(
        config=config,
        phi=[np.empty((config.vocab_size, k)) for k in config.layer_widths],
        link_weights=link_weights,
        link_shape=link_shape,
        link_rate=link_rate,
        shape_budget=shape_budget,
        budget_rate=budget_rate,
        eta=eta,
    )
    redraw_topics_from_prior(state, stream)
    return state


def redraw_topics_from_prior(state: DirBNState, rng: RngStream) -> None:
    """Ancestral top-down redraw of every topic matrix, in place."""
    cfg = state.config
    T = cfg.num_layers
    top = np.full((cfg.vocab_size, cfg.layer_widths[T - 1]), state.eta)
    state.phi[T - 1] = dirichlet_columns(top, rng)
    for t in range(T - 2, -1, -1):
        params, _ = compute_prior(state, t)
        state.phi[t] = dirichlet_columns(params, rng)


def sample_column_scale(prior_colsum: float, count_colsum: int, rng: RngStream) -> float:
    """Beta auxiliary for one topic column; exactly 1 when the column is empty."""
    if not prior_colsum > 0:
        raise ParameterError("prior column sum must be positive")
    return sample_beta(prior_colsum, float(count_colsum), rng)


def sample_table_count(count: int, prior_param: float, rng: RngStream) -> int:
    """CRT table count for one cell given its Dirichlet prior parameter."""
    if not prior_param > 0:
        raise ParameterError("prior parameter must be positive")
    return sample_crt(count, prior_param, rng)


def allocate_to_parents(
    tables: int,
    parent_topic_row: np.ndarray,
    weight_column: np.ndarray,
    rng: RngStream,
    on_degenerate: str = "error",
) -> np.ndarray:
    """Distribute one cell's table count over parent topics.

    Weights are parent_topic_row * weight_column (proportional to the
    mixture responsibilities).  If every weight underflows to zero while
    tables > 0, ``on_degenerate`` selects between raising and allocating
    uniformly.
    """
    w = np.asarray(parent_topic_row, dtype=np.float64) * np.asarray(
        weight_column, dtype=np.float64
    )
    if tables > 0 and w.sum() <= 0:
        if on_degenerate == "error":
            raise ParameterError("zero allocation mass with a positive table count")
        w = np.ones_like(w)
    return sample_multinomial(int(tables), w, rng)


def upward_pass(
    state: DirBNState,
    prior_cache: PriorCache,
    word_topic_counts: np.ndarray,
    rng: RngStream,
    audit: bool = False,
) -> LatentCounts:
    """Propagate the bottom counts to the top layer via the augmentations.

    For every link level t: draw the per-column beta scale, the per-cell CRT
    table counts, allocate tables to parents, and aggregate the allocations
    into the next layer's input counts.  Underflowed allocation rows fall
    back to uniform and are tallied in ``degenerate_allocations``.
    """
    cfg = state.config
    T = cfg.num_layers
    x0 = np.asarray(word_topic_counts, dtype=np.int64)
    if x0.shape != (cfg.vocab_size, cfg.layer_widths[0]):
        raise ParameterError(f"word-topic counts have shape {x0.shape}")
    counts = LatentCounts(input_counts=[x0])
    for t in range(T - 1):
        stream = rng.substream(_S_UPWARD, t)
        xt = counts.input_counts[t]
        params = prior_cache.params[t]
        colsums = prior_cache.colsums[t]
        k_child = cfg.layer_widths[t]
        k_parent = cfg.layer_widths[t + 1]
        try:
            q = sample_beta_vector(colsums, xt.sum(axis=0).astype(np.float64), stream)
            rows, cols = np.nonzero(xt)
            cell_counts = xt[rows, cols]
            tables = sample_crt_array(cell_counts, params[rows, cols], stream)
            y = np.zeros_like(xt)
            y[rows, cols] = tables

            phi_parent = state.phi[t + 1]
            weights = state.link_weights[t]
            x_next = np.zeros((cfg.vocab_size, k_parent), dtype=np.int64)
            link_counts = np.zeros((k_parent, k_child), dtype=np.int64)
            for lo in range(0, rows.size, _ALLOC_CHUNK):
                sl = slice(lo, min(lo + _ALLOC_CHUNK, rows.size))
                w = phi_parent[rows[sl], :] * weights[:, cols[sl]].T
                dead = (w.sum(axis=1) <= 0) & (tables[sl] > 0)
                if np.any(dead):
                    counts.degenerate_allocations += int(dead.sum())
                    w[dead] = 1.0
                alloc = multinomial_rows(tables[sl], w, stream)
                if audit and np.any(alloc.sum(axis=1) != tables[sl]):
                    raise AssertionError(f"allocation does not conserve tables at layer {t}")
                np.add.at(x_next, rows[sl], alloc)
                np.add.at(link_counts.T, cols[sl], alloc)
        except ParameterError as exc:
            raise ParameterError(f"upward pass failed at link level {t}: {exc}") from exc
        counts.aux_scale.append(q)
        counts.table_counts.append(y)
        counts.link_counts.append(link_counts)
        counts.input_counts.append(x_next)
    return counts


def sample_link_weights(state: DirBNState, counts: LatentCounts, t: int, rng: RngStream) -> np.ndarray:
    """Gamma-posterior draw of link_weights[t] given link counts and scales.

    Shape is the prior shape plus the allocated tables; the rate adds the
    per-column exposure -log(aux scale) to the layer rate, so empty columns
    (scale exactly 1) reduce to the prior.
    """
    _check_layer(t, state.config.num_layers - 1, "link layer")
    shapes = state.link_shape[t][:, None] + counts.link_counts[t]
    rates = state.link_rate[t] - np.log(counts.aux_scale[t])[None, :]
    return sample_gamma(shapes, 1.0 / rates, rng)


def sample_topics(
    state: DirBNState,
    counts: LatentCounts,
    t: int,
    rng: RngStream,
    prior_params: np.ndarray | None = None,
) -> np.ndarray:
    """Dirichlet-posterior draw of phi[t] given its layer input counts.

    The top layer uses the scalar eta as its symmetric prior; other layers
    use the mixture parameters (pass ``prior_params`` when the layer above
    was just updated, otherwise they are recomputed from the state).
    """
    cfg = state.config
    _check_layer(t, cfg.num_layers, "layer")
    x = counts.input_counts[t]
    if t == cfg.num_layers - 1:
        alpha = state.eta + x
    else:
        if prior_params is None:
            prior_params, _ = compute_prior(state, t)
        alpha = prior_params + x
    return dirichlet_columns(alpha, rng)


def update_top_concentration(state: DirBNState, counts: LatentCounts, rng: RngStream) -> float:
    """Resample eta by the beta/CRT augmentation of the top-layer marginal.

    Columns of the top layer are integrated out: per column draw a
    Beta(V*eta, column total) scale, per cell a CRT(count, eta) table count,
    then eta ~ Gamma(a0 + tables, 1 / (b0 - V * sum(log scales))).  The top
    topic matrix must be redrawn right after this update.
    """
    cfg = state.config
    x_top = counts.input_counts[cfg.num_layers - 1]
    V = cfg.vocab_size
    col_totals = x_top.sum(axis=0).astype(np.float64)
    q = sample_beta_vector(np.full(x_top.shape[1], V * state.eta), col_totals, rng)
    rows, cols = np.nonzero(x_top)
    tables = sample_crt_array(
        x_top[rows, cols], np.full(rows.size, state.eta), rng
    )
    shape = cfg.a0 + tables.sum()
    rate = cfg.b0 - V * np.log(q).sum()
    return sample_gamma(shape, 1.0 / rate, rng)


def update_layer_hypers(
    state: DirBNState, counts: LatentCounts, t: int, rng: RngStream
) -> tuple[np.ndarray, float, float, float]:
    """Resample (link_shape, link_rate, shape_budget, budget_rate) at level t.

    The rate updates are plain conjugate conditionals on the current values.
    The shape updates marginalise the variables below them (link weights for
    link_shape, link_shape for shape_budget) via CRT table counts, so the
    caller must redraw the link weights immediately afterwards.  When
    sample_top_hypers is off, shape_budget and budget_rate are left fixed.
    """
    cfg = state.config
    _check_layer(t, cfg.num_layers - 1, "link layer")
    k_child = cfg.layer_widths[t]
    k_parent = cfg.layer_widths[t + 1]
    z = counts.link_counts[t]
    shapes = state.link_shape[t]

    rate = sample_gamma(
        cfg.g0 + k_child * shapes.sum(),
        1.0 / (cfg.h0 + state.link_weights[t].sum()),
        rng,
    )

    # exposure of the negative-binomial marginal with the weights integrated out
    neg_log_q = -np.log(counts.aux_scale[t])
    exposure = float(np.log1p(neg_log_q / rate).sum())

    rows, cols = np.nonzero(z)
    cell_tables = sample_crt_array(z[rows, cols], shapes[rows], rng)
    parent_tables = np.bincount(rows, weights=cell_tables, minlength=k_parent).astype(np.int64)

    budget = state.shape_budget[t]
    budget_rate = state.budget_rate[t]
    if cfg.sample_top_hypers:
        budget_rate = sample_gamma(
            cfg.g0 + k_parent * budget / k_child,
            1.0 / (cfg.h0 + shapes.sum()),
            rng,
        )
        budget_tables = sample_crt_array(
            parent_tables, np.full(k_parent, budget / k_child), rng
        )
        budget = sample_gamma(
            cfg.e0 + budget_tables.sum(),
            1.0 / (cfg.f0 + (k_parent / k_child) * np.log1p(exposure / budget_rate)),
            rng,
        )

    new_shapes = sample_gamma(
        budget / k_child + parent_tables,
        1.0 / (budget_rate + exposure),
        rng,
    )
    return new_shapes, rate, budget, budget_rate


def downward_pass(state: DirBNState, counts: LatentCounts, rng: RngStream) -> PriorCache:
    """Top-down conjugate refresh of the whole state, in place.

    Order per sweep: eta then the top topics; then for each link level from
    the top down: hyperparameters, link weights, recomputed priors, topics.
    Returns the refreshed prior cache consistent with the updated state.
    """
    cfg = state.config
    T = cfg.num_layers
    top_stream = rng.substream(_S_DOWN_TOP)
    state.eta = update_top_concentration(state, counts, top_stream)
    state.phi[T - 1] = sample_topics(state, counts, T - 1, top_stream)
    cache = PriorCache(params=[None] * (T - 1), colsums=[None] * (T - 1))
    for t in range(T - 2, -1, -1):
        stream = rng.substream(_S_DOWN_LAYER, t)
        shapes, rate, budget, budget_rate = update_layer_hypers(state, counts, t, stream)
        state.link_shape[t] = shapes
        state.link_rate[t] = rate
        state.shape_budget[t] = budget
        state.budget_rate[t] = budget_rate
        state.link_weights[t] = sample_link_weights(state, counts, t, stream)
        params, colsums = compute_prior(state, t)
        state.phi[t] = sample_topics(state, counts, t, stream, prior_params=params)
        cache.params[t] = params
        cache.colsums[t] = colsums
    return cache


def generate_corpus(
    state: DirBNState,
    num_docs: int,
    doc_length: int,
    theta_concentration: float,
    rng: RngStream,
) -> tuple[Corpus, np.ndarray, np.ndarray]:
    """Sample a corpus from the state's bottom topics.

    Each document draws topic proportions from a symmetric Dirichlet, each
    token a topic then a word.  Returns the corpus together with the
    generating proportions and bottom topic matrix for recovery tests.
    """
    if num_docs < 0 or doc_length < 0:
        raise ParameterError("num_docs and doc_length must be nonnegative")
    if not theta_concentration > 0:
        raise ParameterError("theta concentration must be positive")
    stream = rng.substream(_S_GENERATE)
    cfg = state.config
    k = cfg.layer_widths[0]
    V = cfg.vocab_size
    phi1 = state.phi[0]
    theta = np.maximum(
        stream.generator.standard_gamma(theta_concentration, size=(num_docs, k)), 1e-300
    )
    theta /= theta.sum(axis=1, keepdims=True)
    docword = np.zeros((num_docs, V), dtype=np.int64)
    if num_docs > 0 and doc_length > 0:
        doc_topic = multinomial_rows(np.full(num_docs, doc_length), theta, stream)
        d_idx, k_idx = np.nonzero(doc_topic)
        cell = doc_topic[d_idx, k_idx]
        for lo in range(0, d_idx.size, _ALLOC_CHUNK):
            sl = slice(lo, min(lo + _ALLOC_CHUNK, d_idx.size))
            words = multinomial_rows(cell[sl], phi1[:, k_idx[sl]].T, stream)
            np.add.at(docword, d_idx[sl], words)
    corpus = Corpus.from_dense(docword)
    return corpus, theta, phi1.copy()
