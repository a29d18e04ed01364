"""End-to-end experiment harness: train, evaluate, persist, compare.

A run trains one (architecture, regularizer) pair for a number of
independent repetitions, each under seed base+r, and leaves behind a
self-describing directory:

    out/
      summary.json            aggregate metrics over repetitions
      rep00/
        checkpoint.rbmc       final parameters
        record.json           full config echo + test metrics (no clocks)
        epochs.csv            epoch, train_mse, dropped_units
        timing.json           wall-clock only, kept out of record.json so
                              everything else is byte-reproducible
        filters.pgm           first hidden-unit filters
        recon/                original-vs-reconstruction sheets

Random streams are split by purpose (init / shuffle / masks / Gibbs /
eval), so two runs that differ only in regularizer see the same data
order and the same initial weights.
"""

import csv
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from rbmdrop.checkpoint import save_checkpoint
from rbmdrop.data import batches, load_dataset
from rbmdrop.errors import DataFormatError, DivergenceError
from rbmdrop.export import export_reconstructions, export_weight_filters
from rbmdrop.metrics import WilcoxonResult, reconstruction_mse, ssim, wilcoxon_signed_rank
from rbmdrop.rbm import (
    RbmParams,
    TrainConfig,
    apply_update,
    cd_step,
    init_params,
    mean_field_reconstruction,
    sampled_reconstruction,
)
from rbmdrop.regularizers import (
    DropConnect,
    Dropout,
    EnergyDropout,
    ImportanceState,
    RegularizerKind,
    WeightDecay,
    bernoulli_mask,
    energy_dropout_mask,
    rescale_weights_for_inference,
    stacked_dropconnect_masks,
    update_importance_state,
)
from rbmdrop.rng import STREAM_EVAL, STREAM_GIBBS, STREAM_MASK, substream

# named architectures: hidden units and the learning rate tuned for them
ARCHITECTURES = {
    "Ma": (512, 0.1),
    "Mb": (1024, 0.1),
    "Mc": (1024, 0.03),
    "Md": (1024, 0.01),
}

# training is declared divergent once the epoch error exceeds this multiple
# of the first epoch's error (or stops being finite)
DIVERGENCE_FACTOR = 10.0

EVAL_MODES = ("mean_field", "sample")


@dataclass
class EpochStats:
    epoch: int          # 1-based
    train_mse: float    # weighted mean over the epoch's batches
    dropped_units: int  # hidden units switched off, summed over batches


@dataclass
class TrainResult:
    params: RbmParams
    epoch_stats: list
    seed: int

    @property
    def final_train_mse(self):
        """Last epoch's training error, or None for an untrained model."""
        return self.epoch_stats[-1].train_mse if self.epoch_stats else None


def architecture(name: str) -> tuple[int, float]:
    try:
        return ARCHITECTURES[name]
    except KeyError:
        raise ValueError(
            f"unknown architecture {name!r}; expected one of {sorted(ARCHITECTURES)}"
        ) from None


def train_rbm(
    train_data: np.ndarray,
    n_hidden: int,
    config: TrainConfig,
    kind: RegularizerKind,
    progress=None,
) -> TrainResult:
    """Train one model with CD under the given regularization scheme.

    `train_data` is (N, m) with entries in [0, 1].  Masks are drawn per
    mini-batch (hidden-unit schemes) or per example (weight scheme); the
    importance-driven scheme additionally measures each update's effect
    to set the next batch's drop probabilities.  Raises DivergenceError
    if the reconstruction error stops being finite or grows past
    DIVERGENCE_FACTOR times the first epoch's value.
    """
    train_data = np.asarray(train_data, dtype=np.float64)
    if train_data.ndim != 2:
        raise ValueError("train_data must be (N, m)")
    n_examples, m = train_data.shape

    params = init_params(m, n_hidden, config.seed)
    mask_rng = substream(config.seed, STREAM_MASK)
    gibbs_rng = substream(config.seed, STREAM_GIBBS)
    l2 = kind.l2_coeff if isinstance(kind, WeightDecay) else 0.0
    importance = (
        ImportanceState.initial(n_hidden) if isinstance(kind, EnergyDropout) else None
    )

    epoch_stats = []
    reference_mse = None
    for epoch in range(1, config.epochs + 1):
        squared_sum = 0.0
        seen = 0
        dropped = 0
        for idx in batches(n_examples, config.batch_size, config.seed, epoch - 1):
            batch = train_data[idx]
            hidden_mask = None
            weight_mask = None
            if isinstance(kind, Dropout):
                hidden_mask = bernoulli_mask(n_hidden, kind.p, mask_rng)
                dropped += int(n_hidden - hidden_mask.sum())
            elif isinstance(kind, EnergyDropout):
                hidden_mask = energy_dropout_mask(importance.importance, mask_rng)
                dropped += int(n_hidden - hidden_mask.sum())
            elif isinstance(kind, DropConnect):
                weight_mask = stacked_dropconnect_masks(
                    len(idx), m, n_hidden, kind.p, mask_rng
                )

            delta, chain, batch_mse = cd_step(
                params, batch, config.cd_steps, gibbs_rng, hidden_mask, weight_mask
            )
            new_params = apply_update(params, delta, config.learning_rate, l2)
            if importance is not None:
                importance = update_importance_state(
                    importance, params, new_params, batch, chain.h0_sample
                )
            params = new_params
            squared_sum += batch_mse * len(idx)
            seen += len(idx)

        epoch_mse = squared_sum / seen
        if not np.isfinite(epoch_mse):
            raise DivergenceError(
                f"epoch {epoch}: reconstruction error is not finite"
            )
        if reference_mse is None:
            reference_mse = epoch_mse
        elif epoch_mse > DIVERGENCE_FACTOR * reference_mse:
            raise DivergenceError(
                f"epoch {epoch}: error {epoch_mse:.4g} exceeds "
                f"{DIVERGENCE_FACTOR:g}x the first epoch's {reference_mse:.4g}"
            )
        stats = EpochStats(epoch, epoch_mse, dropped)
        epoch_stats.append(stats)
        if progress is not None:
            progress(stats)

    return TrainResult(params, epoch_stats, config.seed)


@dataclass
class EvalReport:
    mse: float
    ssim: float
    reconstructions: np.ndarray  # (T, m) probabilities


def evaluate_model(
    params: RbmParams,
    kind: RegularizerKind,
    test_images: np.ndarray,
    eval_mode: str = "mean_field",
    seed: int = 0,
) -> EvalReport:
    """Reconstruction metrics on held-out images ((T, H, W), values in [0, 1]).

    Weights are rescaled for inference where the scheme calls for it.
    The default reconstruction is the deterministic mean-field half-step;
    "sample" draws the hidden layer instead, using the evaluation stream.
    """
    if eval_mode not in EVAL_MODES:
        raise ValueError(f"eval_mode must be one of {EVAL_MODES}")
    test_images = np.asarray(test_images, dtype=np.float64)
    if test_images.ndim != 3:
        raise ValueError("test_images must be (T, H, W)")
    flat = test_images.reshape(test_images.shape[0], -1)
    inference = rescale_weights_for_inference(params, kind)
    if eval_mode == "sample":
        recon = sampled_reconstruction(inference, flat, substream(seed, STREAM_EVAL))
    else:
        recon = mean_field_reconstruction(inference, flat)
    mse = reconstruction_mse(flat, recon)
    similarity = ssim(test_images, recon.reshape(test_images.shape))
    return EvalReport(mse, similarity, recon)


@dataclass
class ExperimentConfig:
    """Everything one `train` invocation needs."""

    dataset: str
    arch: str
    regularizer: RegularizerKind
    out_dir: Path
    epochs: int = 50
    batch_size: int = 256
    repetitions: int = 10
    seed: int = 42
    cd_steps: int = 1
    binarize: bool = False
    eval_mode: str = "mean_field"
    data_root: str | None = None

    def __post_init__(self):
        self.out_dir = Path(self.out_dir)
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.eval_mode not in EVAL_MODES:
            raise ValueError(f"eval_mode must be one of {EVAL_MODES}")


def _regularizer_record(kind: RegularizerKind) -> dict:
    record = {"name": kind.name}
    if isinstance(kind, (Dropout, DropConnect)):
        record["p"] = kind.p
    if isinstance(kind, WeightDecay):
        record["l2_coeff"] = kind.l2_coeff
    return record


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def filter_grid(n_hidden: int, limit: int = 100) -> tuple[int, int]:
    """Largest clean (rows, cols) grid of at most `limit` filters."""
    count = min(n_hidden, limit)
    cols = min(10, count)
    return max(count // cols, 1), cols


def _write_epochs_csv(path: Path, epoch_stats) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "train_mse", "dropped_units"])
        for s in epoch_stats:
            writer.writerow([s.epoch, repr(s.train_mse), s.dropped_units])


def run_experiment(config: ExperimentConfig, log=None) -> dict:
    """Run every repetition, persist artifacts, and return the summary dict."""

    def say(msg):
        if log is not None:
            log(msg)

    dataset = load_dataset(config.dataset, config.data_root, config.binarize)
    n_hidden, learning_rate = architecture(config.arch)
    config.out_dir.mkdir(parents=True, exist_ok=True)

    mses, ssims = [], []
    for rep in range(config.repetitions):
        rep_seed = config.seed + rep
        train_config = TrainConfig(
            learning_rate=learning_rate,
            epochs=config.epochs,
            batch_size=config.batch_size,
            cd_steps=config.cd_steps,
            seed=rep_seed,
        )
        say(
            f"[{config.arch}/{config.regularizer.name}] repetition {rep + 1}/"
            f"{config.repetitions} (seed {rep_seed})"
        )
        t0 = time.perf_counter()
        result = train_rbm(
            dataset.train_flat,
            n_hidden,
            train_config,
            config.regularizer,
            progress=lambda s: say(
                f"  epoch {s.epoch:3d}  train_mse {s.train_mse:.4f}"
                + (f"  dropped {s.dropped_units}" if s.dropped_units else "")
            ),
        )
        t1 = time.perf_counter()
        report = evaluate_model(
            result.params, config.regularizer, dataset.test, config.eval_mode, rep_seed
        )
        t2 = time.perf_counter()
        say(f"  test_mse {report.mse:.4f}  test_ssim {report.ssim:.4f}")

        rep_dir = config.out_dir / f"rep{rep:02d}"
        rep_dir.mkdir(parents=True, exist_ok=True)
        save_checkpoint(
            rep_dir / "checkpoint.rbmc", result.params, rep_seed, config.epochs
        )
        _write_epochs_csv(rep_dir / "epochs.csv", result.epoch_stats)
        record = {
            "dataset": dataset.name,
            "arch": config.arch,
            "regularizer": _regularizer_record(config.regularizer),
            "n_hidden": n_hidden,
            "learning_rate": learning_rate,
            "epochs": config.epochs,
            "batch_size": config.batch_size,
            "cd_steps": config.cd_steps,
            "repetition": rep,
            "seed": rep_seed,
            "binarize": config.binarize,
            "eval_mode": config.eval_mode,
            "image_height": dataset.image_shape[0],
            "image_width": dataset.image_shape[1],
            "final_train_mse": result.final_train_mse,
            "test_mse": report.mse,
            "test_ssim": report.ssim,
        }
        _write_json(rep_dir / "record.json", record)
        _write_json(
            rep_dir / "timing.json",
            {"train_seconds": t1 - t0, "eval_seconds": t2 - t1},
        )
        export_weight_filters(
            result.params.weights,
            dataset.image_shape,
            rep_dir / "filters.pgm",
            grid=filter_grid(n_hidden),
        )
        export_reconstructions(
            dataset.test[:16],
            report.reconstructions[:16],
            dataset.image_shape,
            rep_dir / "recon",
        )
        mses.append(report.mse)
        ssims.append(report.ssim)

    def stats(values):
        arr = np.asarray(values, dtype=np.float64)
        return {
            "mean": float(arr.mean()),
            "std": float(arr.std(ddof=1)) if arr.size > 1 else 0.0,
            "values": [float(v) for v in values],
        }

    summary = {
        "dataset": dataset.name,
        "arch": config.arch,
        "regularizer": _regularizer_record(config.regularizer),
        "repetitions": config.repetitions,
        "seed": config.seed,
        "epochs": config.epochs,
        "batch_size": config.batch_size,
        "eval_mode": config.eval_mode,
        "test_mse": stats(mses),
        "test_ssim": stats(ssims),
    }
    _write_json(config.out_dir / "summary.json", summary)
    return summary


def load_run_records(run_dir) -> list:
    """record.json dicts for every repetition under `run_dir`, in order."""
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise DataFormatError(f"{run_dir}: not a run directory")
    records = []
    for record_path in sorted(run_dir.glob("rep*/record.json")):
        try:
            records.append(json.loads(record_path.read_text()))
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{record_path}: invalid JSON ({exc})") from exc
    if not records:
        raise DataFormatError(f"{run_dir}: no rep*/record.json found")
    return records


_METRIC_KEYS = {"mse": "test_mse", "ssim": "test_ssim"}


@dataclass
class ComparisonReport:
    metric: str
    dir_a: str
    dir_b: str
    values_a: list
    values_b: list
    mean_a: float
    mean_b: float
    std_a: float
    std_b: float
    test: WilcoxonResult


def compare_runs(dir_a, dir_b, metric: str = "mse") -> ComparisonReport:
    """Paired significance test between two runs' per-repetition metrics.

    Repetition i of one run is paired with repetition i of the other,
    which is meaningful here because matching repetitions share seeds and
    therefore initial weights and data order.
    """
    if metric not in _METRIC_KEYS:
        raise ValueError(f"metric must be one of {sorted(_METRIC_KEYS)}")
    key = _METRIC_KEYS[metric]

    def values_of(run_dir):
        records = load_run_records(run_dir)
        try:
            return [float(r[key]) for r in records]
        except KeyError:
            raise DataFormatError(f"{run_dir}: records lack {key!r}") from None

    values_a = values_of(dir_a)
    values_b = values_of(dir_b)
    if len(values_a) != len(values_b):
        raise DataFormatError(
            f"cannot pair {len(values_a)} repetitions with {len(values_b)}"
        )
    try:
        test = wilcoxon_signed_rank(values_a, values_b)
    except ValueError as exc:
        raise DataFormatError(f"runs cannot be compared: {exc}") from exc

    def sd(vals):
        return float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0

    return ComparisonReport(
        metric=metric,
        dir_a=str(dir_a),
        dir_b=str(dir_b),
        values_a=values_a,
        values_b=values_b,
        mean_a=float(np.mean(values_a)),
        mean_b=float(np.mean(values_b)),
        std_a=sd(values_a),
        std_b=sd(values_b),
        test=test,
    )


def _read_epochs_csv(path: Path) -> list:
    rows = []
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            for row in reader:
                rows.append(
                    (int(row["epoch"]), float(row["train_mse"]), int(row["dropped_units"]))
                )
    except (OSError, KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"{path}: bad epochs file ({exc})") from None
    return rows


FIGURES = ("train_mse", "drop_counts", "ssim_bars")


def emit_figure_data(run_dir, which: str, out_path=None) -> Path:
    """Write one figure's plotting data as CSV; returns the path written.

    All figures share the layout `epoch,repetition,value,epoch_mean`:
    per-epoch curves emit one row per (epoch, repetition) with the
    cross-repetition mean alongside; the per-repetition SSIM bars emit a
    single row per repetition at the final epoch.
    """
    if which not in FIGURES:
        raise ValueError(f"unknown figure {which!r}; expected one of {FIGURES}")
    run_dir = Path(run_dir)
    records = load_run_records(run_dir)
    out_path = (
        Path(out_path) if out_path is not None else run_dir / "figures" / f"{which}.csv"
    )
    out_path.parent.mkdir(parents=True, exist_ok=True)

    rows = []  # (epoch, repetition, value)
    if which == "ssim_bars":
        for record in records:
            rows.append((int(record["epochs"]), int(record["repetition"]), float(record["test_ssim"])))
    else:
        column = 1 if which == "train_mse" else 2
        for record in records:
            rep = int(record["repetition"])
            rep_rows = _read_epochs_csv(run_dir / f"rep{rep:02d}" / "epochs.csv")
            for entry in rep_rows:
                rows.append((entry[0], rep, float(entry[column])))

    by_epoch = {}
    for epoch, _, value in rows:
        by_epoch.setdefault(epoch, []).append(value)
    epoch_means = {epoch: float(np.mean(vals)) for epoch, vals in by_epoch.items()}

    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "repetition", "value", "epoch_mean"])
        for epoch, rep, value in sorted(rows):
            writer.writerow([epoch, rep, repr(value), repr(epoch_means[epoch])])
    return out_path
