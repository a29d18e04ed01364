"""RBM training with interchangeable regularizers and an experiment CLI.

The package trains Bernoulli-Bernoulli Restricted Boltzmann Machines with
one-step Contrastive Divergence under five regularization schemes: none,
L2 weight decay, standard Dropout, DropConnect, and energy-based dropout
(drop decisions driven by per-unit importance derived from the model's
energy dynamics).  Reconstruction quality is assessed with MSE and SSIM,
and paired runs are compared with the Wilcoxon signed-rank test.
"""

from rbmdrop.errors import DataFormatError, DivergenceError
from rbmdrop.rbm import (
    GibbsChainState,
    RbmParams,
    TrainConfig,
    UpdateDelta,
    apply_update,
    batch_energy,
    cd_step,
    energy,
    exact_partition,
    hidden_probabilities,
    init_params,
    marginal_log_likelihood,
    sample_binary,
    visible_probabilities,
)
from rbmdrop.regularizers import (
    Dropout,
    DropConnect,
    EnergyDropout,
    ImportanceState,
    NoRegularization,
    WeightDecay,
    bernoulli_mask,
    dropconnect_mask,
    energy_dropout_mask,
    importance_level,
    rescale_importance,
    rescale_weights_for_inference,
    update_importance_state,
)
from rbmdrop.metrics import WilcoxonResult, reconstruction_mse, ssim, wilcoxon_signed_rank
from rbmdrop.data import Dataset, BatchPlan, batches, load_dataset, parse_idx
from rbmdrop.checkpoint import load_checkpoint, save_checkpoint

__version__ = "0.1.0"
