"""Bernoulli-Bernoulli RBM: energy, conditionals, Gibbs sampling, CD updates.

The model is the classic two-layer bipartite energy-based network with m
binary visible units and n binary hidden units,

    E(v, h) = - sum_i a_i v_i - sum_j b_j h_j - sum_ij v_i h_j w_ij,

trained by k-step Contrastive Divergence.  Mask hooks let regularizers
shut hidden units off (probability forced to zero in every phase) or blank
individual weights (read as zero while sampling, zero gradient).
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logsumexp

from rbmdrop.errors import DivergenceError
from rbmdrop.rng import STREAM_INIT, substream

# largest m + n for which exact enumeration over 2^(m+n) states is allowed
ENUMERATION_LIMIT = 20

# chunk of examples processed at once when per-example weight masks are in
# play; bounds the (chunk, m, n) intermediate to ~100 MB at MNIST scale
_MASK_CHUNK = 32


@dataclass
class RbmParams:
    """Learned model state: weight matrix and the two bias vectors."""

    weights: np.ndarray        # (m, n)
    visible_bias: np.ndarray   # (m,)
    hidden_bias: np.ndarray    # (n,)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.visible_bias = np.asarray(self.visible_bias, dtype=np.float64)
        self.hidden_bias = np.asarray(self.hidden_bias, dtype=np.float64)
        if self.weights.ndim != 2:
            raise ValueError(f"weights must be 2-D, got shape {self.weights.shape}")
        m, n = self.weights.shape
        if self.visible_bias.shape != (m,):
            raise ValueError(
                f"visible_bias shape {self.visible_bias.shape} does not match m={m}"
            )
        if self.hidden_bias.shape != (n,):
            raise ValueError(
                f"hidden_bias shape {self.hidden_bias.shape} does not match n={n}"
            )

    @property
    def m(self) -> int:
        return self.weights.shape[0]

    @property
    def n(self) -> int:
        return self.weights.shape[1]

    def copy(self) -> "RbmParams":
        return RbmParams(
            self.weights.copy(), self.visible_bias.copy(), self.hidden_bias.copy()
        )


@dataclass
class UpdateDelta:
    """Parameter increments produced by one CD step (pre learning rate)."""

    d_weights: np.ndarray
    d_visible_bias: np.ndarray
    d_hidden_bias: np.ndarray


@dataclass
class GibbsChainState:
    """Intermediate quantities of one CD chain, kept for diagnostics.

    `vk_sample` is the binary chain state after k steps; `vk_prob` is the
    real-valued visible probability used for reconstruction error.
    """

    v0: np.ndarray         # (B, m) data
    h0_prob: np.ndarray    # (B, n) masked P(h|v0)
    h0_sample: np.ndarray  # (B, n) binary
    vk_prob: np.ndarray    # (B, m) P(v|h_{k-1})
    vk_sample: np.ndarray  # (B, m) binary
    hk_prob: np.ndarray    # (B, n) masked P(h|vk_sample)


@dataclass
class TrainConfig:
    """Hyperparameters for one training run."""

    learning_rate: float
    epochs: int
    batch_size: int
    cd_steps: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.cd_steps < 1:
            raise ValueError("cd_steps must be >= 1")


def init_params(m: int, n: int, seed: int) -> RbmParams:
    """Fresh parameters: N(0, 0.01) weights, zero biases, deterministic per seed."""
    if m < 1 or n < 1:
        raise ValueError("m and n must be >= 1")
    rng = substream(seed, STREAM_INIT)
    weights = rng.normal(0.0, 0.01, size=(m, n))
    return RbmParams(weights, np.zeros(m), np.zeros(n))


def energy(params: RbmParams, v: np.ndarray, h: np.ndarray) -> float:
    """Joint energy of one (v, h) configuration."""
    v = np.asarray(v, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if v.shape != (params.m,):
        raise ValueError(f"v has shape {v.shape}, expected ({params.m},)")
    if h.shape != (params.n,):
        raise ValueError(f"h has shape {h.shape}, expected ({params.n},)")
    return float(
        -(v @ params.visible_bias)
        - (h @ params.hidden_bias)
        - v @ params.weights @ h
    )


def batch_energy(params: RbmParams, v: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Row-wise joint energies for matched (B, m) and (B, n) batches."""
    v = np.atleast_2d(np.asarray(v, dtype=np.float64))
    h = np.atleast_2d(np.asarray(h, dtype=np.float64))
    if v.shape[1] != params.m or h.shape[1] != params.n or v.shape[0] != h.shape[0]:
        raise ValueError(
            f"batch shapes {v.shape} / {h.shape} do not match model "
            f"({params.m} visible, {params.n} hidden)"
        )
    return (
        -(v @ params.visible_bias)
        - (h @ params.hidden_bias)
        - ((v @ params.weights) * h).sum(axis=1)
    )


def hidden_probabilities(params: RbmParams, v: np.ndarray) -> np.ndarray:
    """P(h_j = 1 | v) for a single visible vector or a (B, m) batch."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != params.m:
        raise ValueError(f"visible dimension {v.shape[-1]} != m={params.m}")
    return expit(v @ params.weights + params.hidden_bias)


def visible_probabilities(params: RbmParams, h: np.ndarray) -> np.ndarray:
    """P(v_i = 1 | h) for a single hidden vector or a (B, n) batch."""
    h = np.asarray(h, dtype=np.float64)
    if h.shape[-1] != params.n:
        raise ValueError(f"hidden dimension {h.shape[-1]} != n={params.n}")
    return expit(h @ params.weights.T + params.visible_bias)


def sample_binary(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Bernoulli sample: element is 1 iff its uniform draw falls below prob."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.size and (probs.min() < 0.0 or probs.max() > 1.0):
        raise ValueError("probabilities must lie in [0, 1]")
    return (rng.random(probs.shape) < probs).astype(np.float64)


def _chunked_masked_matvec(x, weights, masks, transpose):
    """x through per-example masked weights, in memory-bounded chunks.

    transpose=False: (B, m) @ masked (m, n) -> (B, n).
    transpose=True:  (B, n) @ masked (m, n)^T -> (B, m).
    """
    subscripts = "bj,ij,bij->bi" if transpose else "bi,ij,bij->bj"
    out_dim = weights.shape[0] if transpose else weights.shape[1]
    out = np.empty((x.shape[0], out_dim))
    for s in range(0, x.shape[0], _MASK_CHUNK):
        e = s + _MASK_CHUNK
        out[s:e] = np.einsum(subscripts, x[s:e], weights, masks[s:e], optimize=True)
    return out


def _chunked_masked_outer(v, h, masks):
    """Sum over examples of mask_b * outer(v_b, h_b), chunked."""
    out = np.zeros((v.shape[1], h.shape[1]))
    for s in range(0, v.shape[0], _MASK_CHUNK):
        e = s + _MASK_CHUNK
        out += np.einsum("bi,bj,bij->ij", v[s:e], h[s:e], masks[s:e], optimize=True)
    return out


def cd_step(
    params: RbmParams,
    batch: np.ndarray,
    cd_steps: int,
    rng: np.random.Generator,
    hidden_mask: np.ndarray | None = None,
    weight_mask: np.ndarray | None = None,
) -> tuple[UpdateDelta, GibbsChainState, float]:
    """One Contrastive Divergence step over a mini-batch.

    Positive phase pairs the data with its masked hidden probabilities;
    the negative phase pairs the binary chain state after `cd_steps` Gibbs
    steps with the hidden probabilities it induces.  Deltas are averaged
    over the batch.  `cd_steps=0` is a degenerate test hook that forces
    the reconstruction to equal the data (all deltas vanish).

    hidden_mask: (n,) binary; masked units have probability forced to zero
    in every phase, so their weight columns and bias entries get exactly
    zero gradient.

    weight_mask: (m, n) binary applied to the whole batch, or (B, m, n)
    with one mask per example.  Masked weights read as zero during
    sampling and receive zero gradient.

    RNG consumption order (row-major draws): one uniform per hidden unit
    for the initial hidden sample, then per Gibbs step one uniform per
    visible unit, plus one per hidden unit on steps after the first.

    Returns (delta, chain_state, batch_mse) where batch_mse is the mean
    over rows of the summed squared error between the data and the
    real-valued reconstruction probabilities.
    """
    batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if batch.size == 0:
        raise ValueError("batch must be nonempty")
    if batch.shape[1] != params.m:
        raise ValueError(f"batch width {batch.shape[1]} != m={params.m}")
    if cd_steps < 0:
        raise ValueError("cd_steps must be >= 0")
    B = batch.shape[0]
    weights, a, b = params.weights, params.visible_bias, params.hidden_bias

    if hidden_mask is not None:
        hidden_mask = np.asarray(hidden_mask, dtype=np.float64)
        if hidden_mask.shape != (params.n,):
            raise ValueError(
                f"hidden_mask shape {hidden_mask.shape} != ({params.n},)"
            )

    per_example_masks = None
    if weight_mask is not None:
        # per-example stacks keep their storage dtype (uint8 stacks stay small);
        # einsum upcasts chunk by chunk
        weight_mask = np.asarray(weight_mask)
        if weight_mask.shape == (params.m, params.n):
            weight_mask = weight_mask.astype(np.float64)
            weights = weights * weight_mask
        elif weight_mask.shape == (B, params.m, params.n):
            per_example_masks = weight_mask
        else:
            raise ValueError(
                f"weight_mask shape {weight_mask.shape} matches neither "
                f"({params.m}, {params.n}) nor ({B}, {params.m}, {params.n})"
            )

    def h_prob_of(v):
        if per_example_masks is None:
            pre = v @ weights + b
        else:
            pre = _chunked_masked_matvec(v, weights, per_example_masks, False) + b
        p = expit(pre)
        return p if hidden_mask is None else p * hidden_mask

    def v_prob_of(h):
        if per_example_masks is None:
            return expit(h @ weights.T + a)
        return expit(_chunked_masked_matvec(h, weights, per_example_masks, True) + a)

    h0_prob = h_prob_of(batch)
    h0_sample = sample_binary(h0_prob, rng)

    v_prob, v_sample, h_prob = batch, batch, h0_prob
    h_sample = h0_sample
    for step in range(cd_steps):
        if step > 0:
            h_sample = sample_binary(h_prob, rng)
        v_prob = v_prob_of(h_sample)
        v_sample = sample_binary(v_prob, rng)
        h_prob = h_prob_of(v_sample)

    if per_example_masks is None:
        d_weights = (batch.T @ h0_prob - v_sample.T @ h_prob) / B
        if weight_mask is not None:
            d_weights *= weight_mask
    else:
        pos = _chunked_masked_outer(batch, h0_prob, per_example_masks)
        neg = _chunked_masked_outer(v_sample, h_prob, per_example_masks)
        d_weights = (pos - neg) / B
    d_visible_bias = (batch - v_sample).mean(axis=0)
    d_hidden_bias = (h0_prob - h_prob).mean(axis=0)

    batch_mse = float(((batch - v_prob) ** 2).sum(axis=1).mean())
    chain = GibbsChainState(batch, h0_prob, h0_sample, v_prob, v_sample, h_prob)
    return UpdateDelta(d_weights, d_visible_bias, d_hidden_bias), chain, batch_mse


def apply_update(
    params: RbmParams,
    delta: UpdateDelta,
    learning_rate: float,
    l2_coeff: float = 0.0,
) -> RbmParams:
    """New parameters after one scaled update step.

    Weight decay enters as -l2_coeff * W inside the learning-rate scaling;
    l2_coeff=0 disables it.  All three parameter groups share the same
    learning rate.
    """
    if delta.d_weights.shape != params.weights.shape:
        raise ValueError("delta does not match parameter shapes")
    w = params.weights + learning_rate * (delta.d_weights - l2_coeff * params.weights)
    a = params.visible_bias + learning_rate * delta.d_visible_bias
    b = params.hidden_bias + learning_rate * delta.d_hidden_bias
    if not (np.isfinite(w).all() and np.isfinite(a).all() and np.isfinite(b).all()):
        raise DivergenceError("parameter update produced non-finite values")
    return RbmParams(w, a, b)


def _all_states(k: int) -> np.ndarray:
    """All 2^k binary vectors of length k as a (2^k, k) float matrix."""
    return ((np.arange(2**k)[:, None] >> np.arange(k)) & 1).astype(np.float64)


def _joint_energy_table(params: RbmParams) -> np.ndarray:
    """(2^m, 2^n) table of E(v, h) over every configuration."""
    V = _all_states(params.m)
    H = _all_states(params.n)
    return (
        -(V @ params.visible_bias)[:, None]
        - (H @ params.hidden_bias)[None, :]
        - V @ params.weights @ H.T
    )


def _check_enumeration_size(params: RbmParams):
    if params.m + params.n > ENUMERATION_LIMIT:
        raise ValueError(
            f"exact enumeration limited to m+n <= {ENUMERATION_LIMIT}, "
            f"got {params.m + params.n}"
        )


def exact_partition(params: RbmParams) -> float:
    """Partition function by brute-force enumeration (small models only)."""
    _check_enumeration_size(params)
    return float(np.exp(-_joint_energy_table(params)).sum())


def marginal_log_likelihood(params: RbmParams, dataset: np.ndarray) -> float:
    """Sum over dataset rows of log P(v), via exact enumeration."""
    _check_enumeration_size(params)
    data = np.atleast_2d(np.asarray(dataset, dtype=np.float64))
    if data.shape[1] != params.m:
        raise ValueError(f"dataset width {data.shape[1]} != m={params.m}")
    log_z = logsumexp(-_joint_energy_table(params))
    H = _all_states(params.n)
    # unnormalized log P(v, h) for every data row against every hidden state
    scores = (
        (data @ params.visible_bias)[:, None]
        + (H @ params.hidden_bias)[None, :]
        + data @ params.weights @ H.T
    )
    return float(logsumexp(scores, axis=1).sum() - data.shape[0] * log_z)


def mean_field_reconstruction(params: RbmParams, v: np.ndarray) -> np.ndarray:
    """Deterministic one half-step reconstruction: v -> P(h|v) -> P(v|h)."""
    return visible_probabilities(params, hidden_probabilities(params, v))


def sampled_reconstruction(
    params: RbmParams, v: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Stochastic counterpart: v -> h ~ P(h|v) -> P(v|h)."""
    return visible_probabilities(params, sample_binary(hidden_probabilities(params, v), rng))
