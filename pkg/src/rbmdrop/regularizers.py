"""Regularization schemes for CD training, all behind one small interface.

Five schemes are supported:

* no regularization — plain CD;
* weight decay — an L2 penalty folded into the weight update;
* dropout — a fresh Bernoulli mask over hidden units per mini-batch;
* dropconnect — a fresh Bernoulli mask over individual weights per
  training example;
* energy dropout — hidden units are dropped with probability equal to an
  importance level derived from how the last update moved each unit's
  activation relative to how much it moved the batch energy.  Units whose
  activity grew a lot while the energy barely moved are considered
  redundant and are the most likely to be dropped.

The scheme descriptors below are inert value objects; the training loop
in `rbmdrop.experiment` interprets them.  Mask-producing ops live here so
they can be tested in isolation.
"""

from dataclasses import dataclass

import numpy as np

from rbmdrop.rbm import RbmParams, batch_energy, hidden_probabilities

# floor for ratios and energy shifts so importance levels stay finite
EPSILON = 1e-8


class RegularizerKind:
    """Base marker for scheme descriptors."""


@dataclass(frozen=True)
class NoRegularization(RegularizerKind):
    name = "none"


@dataclass(frozen=True)
class WeightDecay(RegularizerKind):
    name = "l2"
    l2_coeff: float = 0.005

    def __post_init__(self):
        if self.l2_coeff < 0:
            raise ValueError("l2_coeff must be >= 0")


@dataclass(frozen=True)
class Dropout(RegularizerKind):
    """Hidden-unit dropout; `p` is the probability a unit is dropped."""

    name = "dropout"
    p: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.p < 1.0:
            raise ValueError("drop probability must lie in [0, 1)")


@dataclass(frozen=True)
class DropConnect(RegularizerKind):
    """Per-weight dropout; `p` is the probability a weight is blanked."""

    name = "dropconnect"
    p: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.p < 1.0:
            raise ValueError("drop probability must lie in [0, 1)")


@dataclass(frozen=True)
class EnergyDropout(RegularizerKind):
    name = "edropout"


_KINDS = {
    "none": lambda p, l2: NoRegularization(),
    "l2": lambda p, l2: WeightDecay(l2_coeff=l2),
    "dropout": lambda p, l2: Dropout(p=p),
    "dropconnect": lambda p, l2: DropConnect(p=p),
    "edropout": lambda p, l2: EnergyDropout(),
}


def kind_from_name(name: str, p: float = 0.5, l2_coeff: float = 0.005) -> RegularizerKind:
    """Descriptor for a scheme named on the command line."""
    try:
        return _KINDS[name](p, l2_coeff)
    except KeyError:
        raise ValueError(
            f"unknown regularizer {name!r}; expected one of {sorted(_KINDS)}"
        ) from None


@dataclass
class ImportanceState:
    """Per-hidden-unit importance levels driving energy dropout.

    `importance` lives in [0, 1] after rescaling; a unit's drop
    probability for the next mini-batch equals its level.  The mean
    activations and energy shift it was derived from ride along for
    diagnostics.  The initial state is all-zero, which keeps every unit.
    """

    importance: np.ndarray
    p_initial: np.ndarray | None = None   # mean activation before the update
    p_trained: np.ndarray | None = None   # mean activation after the update
    delta_energy: float = 0.0             # |mean energy shift| of the update

    def __post_init__(self):
        self.importance = np.asarray(self.importance, dtype=np.float64)
        if self.importance.ndim != 1:
            raise ValueError("importance must be a vector")
        if self.importance.size and (
            self.importance.min() < 0.0 or self.importance.max() > 1.0
        ):
            raise ValueError("importance entries must lie in [0, 1]")
        if self.delta_energy < 0.0:
            raise ValueError("delta_energy is an absolute value, must be >= 0")

    @classmethod
    def initial(cls, n: int) -> "ImportanceState":
        return cls(np.zeros(n))


def bernoulli_mask(size: int, drop_prob: float, rng: np.random.Generator) -> np.ndarray:
    """Keep mask over `size` units: entry is 1 with probability 1 - drop_prob."""
    if not 0.0 <= drop_prob <= 1.0:
        raise ValueError("drop_prob must lie in [0, 1]")
    return (rng.random(size) >= drop_prob).astype(np.float64)


def dropconnect_mask(m: int, n: int, drop_prob: float, rng: np.random.Generator) -> np.ndarray:
    """Keep mask over an (m, n) weight matrix, same convention as above."""
    if not 0.0 <= drop_prob <= 1.0:
        raise ValueError("drop_prob must lie in [0, 1]")
    return (rng.random((m, n)) >= drop_prob).astype(np.float64)


def stacked_dropconnect_masks(
    count: int, m: int, n: int, drop_prob: float, rng: np.random.Generator
) -> np.ndarray:
    """One weight keep-mask per training example, as a compact uint8 stack.

    For the common drop_prob=0.5 the mask bits come straight from the
    generator's byte stream (each bit is an independent fair coin), which
    is substantially cheaper than drawing uniforms for count*m*n cells.
    """
    if not 0.0 <= drop_prob <= 1.0:
        raise ValueError("drop_prob must lie in [0, 1]")
    total = count * m * n
    if drop_prob == 0.5:
        nbytes = (total + 7) // 8
        bits = np.unpackbits(np.frombuffer(rng.bytes(nbytes), dtype=np.uint8), count=total)
        return bits.reshape(count, m, n)
    return (rng.random((count, m, n)) >= drop_prob).astype(np.uint8)


def importance_level(
    prob_trained: np.ndarray,
    prob_initial: np.ndarray,
    energy_shift: float,
    eps: float = EPSILON,
) -> np.ndarray:
    """Raw importance of each hidden unit after one parameter update.

    The level is the growth ratio of the unit's mean activation (trained
    over initial) divided by the magnitude of the batch-energy shift the
    update caused; both the ratio's denominator and the shift are floored
    at `eps` so the result stays finite.
    """
    trained = np.asarray(prob_trained, dtype=np.float64)
    initial = np.maximum(np.asarray(prob_initial, dtype=np.float64), eps)
    if trained.shape != initial.shape:
        raise ValueError(
            f"activation vectors differ in shape: {trained.shape} vs {initial.shape}"
        )
    shift = max(abs(float(energy_shift)), eps)
    return trained / initial / shift


def rescale_importance(importance: np.ndarray) -> np.ndarray:
    """Importance normalized to [0, 1] by its maximum (zeros stay zeros)."""
    importance = np.asarray(importance, dtype=np.float64)
    peak = importance.max() if importance.size else 0.0
    if peak <= 0.0:
        return np.zeros_like(importance)
    return importance / peak


def energy_dropout_mask(importance: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Keep mask where unit j survives iff its importance falls below u_j ~ U[0,1).

    Highly important units in the sense above are the redundant ones, so a
    unit's drop probability equals its rescaled importance level: level 0
    always keeps, level 1 always drops.
    """
    importance = np.asarray(importance, dtype=np.float64)
    if importance.size and (importance.min() < 0.0 or importance.max() > 1.0):
        raise ValueError("importance entries must lie in [0, 1]")
    return (importance < rng.random(importance.shape)).astype(np.float64)


def update_importance_state(
    state: ImportanceState,
    params_before: RbmParams,
    params_after: RbmParams,
    batch: np.ndarray,
    hidden_sample: np.ndarray,
    eps: float = EPSILON,
) -> ImportanceState:
    """Importance state for the next mini-batch, from one update's effect.

    Activation growth is measured on unmasked hidden probabilities
    averaged over the batch; the energy shift pairs the batch with the
    hidden sample drawn during the positive phase, averaged the same way.
    The previous state only fixes the expected vector length.
    """
    if params_before.n != len(state.importance):
        raise ValueError("state length does not match model")
    p_initial = hidden_probabilities(params_before, batch).mean(axis=0)
    p_trained = hidden_probabilities(params_after, batch).mean(axis=0)
    shift = abs(
        float(
            batch_energy(params_after, batch, hidden_sample).mean()
            - batch_energy(params_before, batch, hidden_sample).mean()
        )
    )
    raw = importance_level(p_trained, p_initial, shift, eps)
    return ImportanceState(rescale_importance(raw), p_initial, p_trained, shift)


def rescale_weights_for_inference(params: RbmParams, kind: RegularizerKind) -> RbmParams:
    """Model to evaluate with: weights scaled by the keep probability.

    Dropout and dropconnect train against thinned networks, so their
    weights are scaled by 1 - p before inference.  Every other scheme,
    energy dropout included, evaluates with weights as trained.
    """
    if isinstance(kind, (Dropout, DropConnect)):
        return RbmParams(
            params.weights * (1.0 - kind.p),
            params.visible_bias.copy(),
            params.hidden_bias.copy(),
        )
    return params
