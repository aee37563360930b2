import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from autodiff import graph as G
from config.defaults import SAMPLING_DEFAULTS, TRAINING_DEFAULTS
from data.normalization import compute_stats
from data.samples import TrainSample, draw_collocation
from physics.fundamental_diagram import FDParams
from physics.losses import LossTerms, LossWeights, PhysicsSettings, total_loss
from training.checkpoint import save_checkpoint
from training.optimizer import AdamConfig, AdamState, NonFiniteGradientError, adam_step

logger = logging.getLogger(__name__)

COMPONENTS = ("data", "physics", "parameter", "total")


class TrainingDivergedError(RuntimeError):
    """The loss or a gradient became non-finite; the last good weights were kept."""

    def __init__(self, message: str, epoch: int, step: int, checkpoint: Optional[Path] = None):
        self.epoch = epoch
        self.step = step
        self.checkpoint = checkpoint
        suffix = f"; last good weights saved to {checkpoint}" if checkpoint else ""
        super().__init__(f"Training diverged at epoch {epoch}, step {step}: {message}{suffix}")


@dataclass(frozen=True)
class TrainConfig:
    """
    Attributes:
        adam: Optimizer settings
        epochs: Maximum number of passes over the training split
        batch_size: Samples per Adam step
        patience: Epochs without validation improvement before stopping
        collocation: P, points drawn per sample when resampling
        loss_weights: alpha1..alpha3
        seed: Seed of the shuffling and collocation generator
        resample_collocation: Draw fresh collocation points every epoch
        max_steps: Optional cap on the total number of Adam steps
    """

    adam: AdamConfig = field(default_factory=AdamConfig)
    epochs: int = TRAINING_DEFAULTS["epochs"]
    batch_size: int = TRAINING_DEFAULTS["batch_size"]
    patience: int = TRAINING_DEFAULTS["patience"]
    collocation: int = SAMPLING_DEFAULTS["collocation"]
    loss_weights: LossWeights = field(default_factory=LossWeights)
    seed: int = TRAINING_DEFAULTS["seed"]
    resample_collocation: bool = TRAINING_DEFAULTS["resample_collocation"]
    max_steps: Optional[int] = None

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.patience}")
        if self.collocation < 0:
            raise ValueError(f"Collocation count must be non-negative, got {self.collocation}")
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError(f"max_steps must be >= 1, got {self.max_steps}")

    @classmethod
    def from_dict(cls, values: dict, collocation: int = SAMPLING_DEFAULTS["collocation"]) -> "TrainConfig":
        unknown = set(values) - set(TRAINING_DEFAULTS)
        if unknown:
            raise ValueError(f"Unknown training keys: {sorted(unknown)}")
        merged = {**TRAINING_DEFAULTS, **values}
        return cls(
            adam=AdamConfig(
                lr=float(merged["lr"]),
                betas=tuple(float(b) for b in merged["betas"]),
                eps=float(merged["eps"]),
            ),
            epochs=int(merged["epochs"]),
            batch_size=int(merged["batch_size"]),
            patience=int(merged["patience"]),
            collocation=int(collocation),
            loss_weights=LossWeights.from_sequence(merged["loss_weights"]),
            seed=int(merged["seed"]),
            resample_collocation=bool(merged["resample_collocation"]),
            max_steps=None if merged["max_steps"] is None else int(merged["max_steps"]),
        )


@dataclass
class TrainReport:
    """
    Outcome of a training run.

    Attributes:
        history: One row per epoch reached, columns epoch, train_<component>, val_<component>
        best_epoch: Epoch whose weights were restored
        steps: Adam steps taken
        stopped_early: Patience ran out before the epoch budget
        wall_time: Seconds spent (kept in memory only)
        checkpoint: Where the final weights were written, if anywhere
    """

    history: pd.DataFrame
    best_epoch: int
    steps: int
    stopped_early: bool
    wall_time: float = 0.0
    checkpoint: Optional[str] = None

    @property
    def epochs(self) -> int:
        return len(self.history)

    def to_dict(self) -> dict:
        history = {
            column: [float(v) if column != "epoch" else int(v) for v in self.history[column]]
            for column in self.history.columns
        }
        return {
            "best_epoch": self.best_epoch,
            "checkpoint": self.checkpoint,
            "epochs": self.epochs,
            "history": history,
            "steps": self.steps,
            "stopped_early": self.stopped_early,
        }

    def write(self, path: Union[str, Path]) -> Path:
        """JSON with sorted keys; wall time is left out so reruns compare byte-equal."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path


def loss_and_gradients(
    model,
    batch: Sequence[TrainSample],
    weights: LossWeights,
    settings: Optional[PhysicsSettings] = None,
    param_source: Optional[Sequence[FDParams]] = None,
) -> Tuple[LossTerms, Dict[str, np.ndarray]]:
    """Total loss of one batch and its gradient for every model parameter."""
    bound = model.params.bind()
    terms = total_loss(batch, model, weights, settings=settings, bound=bound, param_source=param_source)
    if not np.isfinite(terms.total.value).all():
        raise FloatingPointError(f"Loss is not finite: {terms.values()}")
    return terms, G.backward(terms.total, bound)


def _batches(samples: Sequence[TrainSample], order: np.ndarray, size: int) -> List[List[TrainSample]]:
    return [[samples[i] for i in order[start : start + size]] for start in range(0, len(order), size)]


def evaluate_losses(
    model,
    samples: Sequence[TrainSample],
    weights: LossWeights,
    settings: Optional[PhysicsSettings] = None,
    param_source: Optional[Sequence[FDParams]] = None,
    batch_size: int = 8,
) -> Dict[str, float]:
    """Sample-weighted mean of every loss component, without touching the weights."""
    sums = dict.fromkeys(COMPONENTS, 0.0)
    for batch in _batches(samples, np.arange(len(samples)), batch_size):
        terms = total_loss(batch, model, weights, settings=settings, param_source=param_source)
        for name, value in terms.values().items():
            sums[name] += value * len(batch)
    return {name: total / len(samples) for name, total in sums.items()}


class Trainer:
    """
    Adam over every weight of a field estimator (operator model or PINN).

    Samples are shuffled each epoch by a generator seeded from the config, so
    (seed, data, config) fix the whole loss trajectory. The weights with the
    lowest validation total (training total without a validation split) are
    restored at the end.
    """

    def __init__(
        self,
        model,
        config: TrainConfig,
        settings: Optional[PhysicsSettings] = None,
        param_source: Optional[Sequence[FDParams]] = None,
        checkpoint_path: Optional[Union[str, Path]] = None,
    ):
        self.model = model
        self.config = config
        self.settings = settings or PhysicsSettings()
        self.param_source = param_source
        self.checkpoint_path = Path(checkpoint_path) if checkpoint_path else None
        self.state = AdamState()
        self.rng = np.random.default_rng(config.seed)
        self.rows: List[dict] = []
        self._best_loss = np.inf
        self._best_epoch = 0
        self._best_weights = model.params.snapshot()

    def _update_collocation(self, samples: List[TrainSample]) -> List[TrainSample]:
        if not self.config.resample_collocation:
            return samples
        return [s.with_collocation(draw_collocation(self.rng, self.config.collocation)) for s in samples]

    def _diverged(self, message: str, epoch: int) -> TrainingDivergedError:
        self.model.params.assign(self._best_weights)
        saved = save_checkpoint(self.model, self.checkpoint_path) if self.checkpoint_path else None
        return TrainingDivergedError(message, epoch, self.state.step, saved)

    def _run_epoch(self, samples: List[TrainSample], epoch: int) -> Dict[str, float]:
        config = self.config
        sums = dict.fromkeys(COMPONENTS, 0.0)
        seen = 0
        order = self.rng.permutation(len(samples))
        for batch in _batches(samples, order, config.batch_size):
            try:
                terms, grads = loss_and_gradients(
                    self.model, batch, config.loss_weights, self.settings, self.param_source
                )
                adam_step(self.model.params, grads, self.state, config.adam)
            except (FloatingPointError, NonFiniteGradientError) as exc:
                raise self._diverged(str(exc), epoch) from exc
            for name, value in terms.values().items():
                sums[name] += value * len(batch)
            seen += len(batch)
            if config.max_steps is not None and self.state.step >= config.max_steps:
                break
        return {name: total / seen for name, total in sums.items()}

    def _update_best(self, row: dict, monitored: float) -> bool:
        if monitored < self._best_loss:
            self._best_loss = monitored
            self._best_epoch = row["epoch"]
            self._best_weights = self.model.params.snapshot()
            return True
        return False

    def fit(self, train: Sequence[TrainSample], val: Sequence[TrainSample] = ()) -> TrainReport:
        if not train:
            raise ValueError("Training split is empty")
        config = self.config
        if self.model.stats is None:
            self.model.stats = compute_stats(train)
        samples = list(train)
        started = time.perf_counter()
        waited, stopped_early = 0, False

        for epoch in range(1, config.epochs + 1):
            samples = self._update_collocation(samples)
            train_losses = self._run_epoch(samples, epoch)
            if val:
                try:
                    val_losses = evaluate_losses(
                        self.model, val, config.loss_weights, self.settings, self.param_source, config.batch_size
                    )
                except FloatingPointError as exc:
                    raise self._diverged(f"validation loss: {exc}", epoch) from exc
            else:
                val_losses = dict.fromkeys(COMPONENTS, np.nan)
            row = {"epoch": epoch}
            row.update({f"train_{k}": v for k, v in train_losses.items()})
            row.update({f"val_{k}": v for k, v in val_losses.items()})
            self.rows.append(row)
            monitored = val_losses["total"] if val else train_losses["total"]
            if not np.isfinite(monitored):
                raise self._diverged(f"monitored loss is {monitored}", epoch)

            waited = 0 if self._update_best(row, monitored) else waited + 1
            logger.info(
                "Epoch %d: train %.4g (data %.4g, physics %.4g, parameter %.4g), val %.4g",
                epoch, train_losses["total"], train_losses["data"], train_losses["physics"],
                train_losses["parameter"], val_losses["total"],
            )
            if waited >= config.patience:
                logger.warning("Early stopping at epoch %d, best epoch %d", epoch, self._best_epoch)
                stopped_early = True
                break
            if config.max_steps is not None and self.state.step >= config.max_steps:
                logger.info("Reached %d steps", self.state.step)
                break

        self.model.params.assign(self._best_weights)
        wall_time = time.perf_counter() - started
        saved = save_checkpoint(self.model, self.checkpoint_path) if self.checkpoint_path else None
        logger.info("Training finished in %.1fs after %d steps", wall_time, self.state.step)
        return TrainReport(
            history=pd.DataFrame(self.rows),
            best_epoch=self._best_epoch,
            steps=self.state.step,
            stopped_early=stopped_early,
            wall_time=wall_time,
            checkpoint=None if saved is None else str(saved),
        )


def train(
    model,
    train_samples: Sequence[TrainSample],
    val_samples: Sequence[TrainSample],
    config: TrainConfig,
    settings: Optional[PhysicsSettings] = None,
    param_source: Optional[Sequence[FDParams]] = None,
    checkpoint_path: Optional[Union[str, Path]] = None,
) -> TrainReport:
    """
    Fit a model on the training split with early stopping on the validation split.

    Args:
        model: OperatorModel or PINNModel; statistics are computed from train if unset
        train_samples: Nonempty training split
        val_samples: Validation split (may be empty)
        config: Optimizer and loop settings
        settings: Physics constants and floors
        param_source: Fixed per-segment FDs overriding the model's own
        checkpoint_path: Where to write the final (or last good) weights

    Returns:
        TrainReport with one history row per epoch reached
    """
    trainer = Trainer(model, config, settings, param_source, checkpoint_path)
    return trainer.fit(train_samples, val_samples)
