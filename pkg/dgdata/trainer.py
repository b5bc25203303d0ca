"""
The DGDATA training loop: fine-grained, temporal plus relabelling, then classifier, every epoch.
"""
import logging
import math
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List, NoReturn, Optional, Tuple, Union

import numpy as np

from dgdata.attention import (
    WindowLayout,
    assign_temporal_states,
    build_pseudo_labels,
    build_sequences,
    fit_attention,
    refine_features,
    vote_along_runs,
    write_attention_diagnostics,
)
from dgdata.checkpoint import load_checkpoint, save_checkpoint
from dgdata.components.base import BaseComponent, ComponentBatch, configure_logging
from dgdata.exceptions import (
    ConfigurationError,
    DataError,
    DivergenceError,
    DGDATAError,
    NonFiniteError,
)
from dgdata.model import DGDATAModel, TrainingState
from dgdata.models.config import LossWeights, TrainConfig
from dgdata.models.data import DatasetSplit, UnlabeledWindow
from dgdata.models.history import EpochRecord, LossBreakdown, TrainHistory
from dgdata.models.labels import AttentionWeights, PseudoLabels, TemporalStateLabels
from dgdata.nn import functional as F
from dgdata.nn.tensor import Tensor, backward

logger = logging.getLogger("dgdata")

# Config fields that may differ between a checkpointed run and its resumption
RESUMABLE_OVERRIDES = {"diagnostics_dir", "checkpoint_every"}


def grl_lambda(progress: float, gamma: float = 10.0) -> float:
    """
    Reversal strength ramp ``2 / (1 + exp(-gamma * progress)) - 1``.

    Raises:
        ConfigurationError: If progress is outside [0, 1]
    """
    if not 0.0 <= progress <= 1.0:
        raise ConfigurationError("progress must lie in [0, 1]", details={"progress": progress})
    return 2.0 / (1.0 + math.exp(-gamma * progress)) - 1.0


@dataclass
class TrainingData:
    """
    The training windows as arrays: source windows first, then target windows.

    Target rows carry no label; ``source_labels`` is -1 there.
    """

    windows: List[UnlabeledWindow]
    values: np.ndarray
    domains: np.ndarray
    source_labels: np.ndarray
    layout: WindowLayout

    @classmethod
    def from_split(cls, split: DatasetSplit) -> "TrainingData":
        if not split.source_train or not split.target_train:
            raise DataError("training needs both source and target windows",
                            details={"source": split.n_source, "target": split.n_target})
        windows: List[UnlabeledWindow] = list(split.source_train) + list(split.target_train)
        source_labels = np.full(len(windows), -1, dtype=np.int64)
        for i, window in enumerate(split.source_train):
            if window.activity is None:
                raise DataError("source window without an activity label", details={"window": window.window_id})
            source_labels[i] = window.activity
        return cls(
            windows=windows,
            values=np.stack([w.values for w in windows]),
            domains=np.array([0] * split.n_source + [1] * split.n_target, dtype=np.int64),
            source_labels=source_labels,
            layout=WindowLayout.from_windows(windows),
        )

    @property
    def source_rows(self) -> np.ndarray:
        return np.flatnonzero(self.domains == 0)

    @property
    def target_rows(self) -> np.ndarray:
        return np.flatnonzero(self.domains == 1)

    @property
    def window_ids(self) -> List[str]:
        return [w.window_id for w in self.windows]

    def initial_pseudo_labels(self, k: int) -> PseudoLabels:
        """All states 0; source rows carry their labels, target rows are unknown."""
        return PseudoLabels(temporal_states=TemporalStateLabels.initial(len(self.windows), k),
                            classes=self.source_labels.copy())


@dataclass
class Relabeling:
    """Outcome of one pseudo-label refresh."""

    pseudo: PseudoLabels
    churn: float
    weights: Optional[AttentionWeights]


class DGDATATrainer:
    """
    Trainer for the three-component DGDATA model.

    Each epoch runs, in order: the fine-grained component over one sweep of
    domain-balanced minibatches; the temporal component, followed by
    attention fitting and temporal-state relabelling; the classifier
    component with the scheduled reversal strength. Target pseudo classes
    are refreshed from the classifier at the start of every epoch after
    warm-up.
    """

    def __init__(self, cfg: TrainConfig, logging_enabled: bool = True):
        """
        Initialize a new trainer.

        Args:
            cfg: Training configuration
            logging_enabled: Whether to enable logging

        Raises:
            ConfigurationError: If epochs < 1 or checkpoints are requested without a directory
        """
        if cfg.epochs < 1:
            raise ConfigurationError("epochs must be >= 1", details={"epochs": cfg.epochs})
        if cfg.checkpoint_every is not None and cfg.diagnostics_dir is None:
            raise ConfigurationError("checkpoint_every requires diagnostics_dir")
        self.cfg = cfg
        self._logging_enabled = logging_enabled
        configure_logging(logging_enabled)

    def _batches(self, data: TrainingData, rng: np.random.Generator) -> Iterator[np.ndarray]:
        """One sweep of minibatches, each half source and half target rows."""
        half = self.cfg.batch_size // 2
        source, target = data.source_rows, data.target_rows
        n_batches = math.ceil(max(source.size, target.size) / half)
        needed = n_batches * half

        def cycled(rows: np.ndarray) -> np.ndarray:
            repeats = math.ceil(needed / rows.size)
            return np.concatenate([rows[rng.permutation(rows.size)] for _ in range(repeats)])[:needed]

        source_order, target_order = cycled(source), cycled(target)
        for b in range(n_batches):
            part = slice(b * half, (b + 1) * half)
            yield np.concatenate([source_order[part], target_order[part]])

    def _component_batch(
        self, state: TrainingState, data: TrainingData, rows: np.ndarray, detach: bool = False
    ) -> ComponentBatch:
        model = state.model
        features = model.extractor(Tensor(data.values[rows]))
        if detach:
            features = features.detach()
        feature_range = model.feature_range
        feature_range.update(features.data)
        target = F.squash(features, feature_range.lower, feature_range.upper)
        return ComponentBatch(features=features, target=target, domains=data.domains[rows],
                              window_index=rows, source_labels=data.source_labels[rows])

    def _run_phase(
        self,
        state: TrainingState,
        data: TrainingData,
        component: BaseComponent,
        weights: LossWeights,
        lam: float,
        update_extractor: bool = True,
    ) -> LossBreakdown:
        """
        Train one component for one sweep of minibatches.

        With ``update_extractor`` off the component reads detached features, so
        none of its gradients (reversed ones included) reach the extractor.
        """
        model = state.model
        model.extractor.train()
        component.train()
        opt_component = state.optimizers[component.name]
        opt_extractor = state.optimizers["extractor"]
        breakdowns = []
        for rows in self._batches(data, state.rngs["batching"]):
            opt_component.zero_grad()
            opt_extractor.zero_grad()
            try:
                batch = self._component_batch(state, data, rows, detach=not update_extractor)
                loss = component.loss(batch, weights, state.pseudo, state.rngs[component.name], lam)
                if not math.isfinite(loss.breakdown.total):
                    raise NonFiniteError("loss is not finite", details={"terms": loss.breakdown.terms})
                backward(loss.total)
            except NonFiniteError as e:
                self._diverge(state, component.name, e)
            opt_component.step()
            if update_extractor:
                opt_extractor.step()
            breakdowns.append(loss.breakdown)
        return LossBreakdown.average(breakdowns)

    def _diverge(self, state: TrainingState, component: str, cause: DGDATAError) -> NoReturn:
        directory = Path(self.cfg.diagnostics_dir) if self.cfg.diagnostics_dir else Path(tempfile.gettempdir())
        dump: Optional[Path] = directory / f"divergence_epoch_{state.epoch + 1:03d}_{component}.ckpt"
        try:
            save_checkpoint(dump, state)
        except OSError as e:
            logger.error("Could not write the divergence dump: %s", e)
            dump = None
        logger.error("Training diverged in the %s component at epoch %d; dump: %s",
                     component, state.epoch + 1, dump)
        raise DivergenceError("non-finite loss during training",
                              details={"epoch": state.epoch + 1, "component": component,
                                       "dump": str(dump) if dump else None}) from cause

    def refresh_target_classes(self, state: TrainingState, data: TrainingData) -> None:
        """Replace the target rows' classes by the classifier's current predictions, voted along runs."""
        model = state.model
        target_rows = data.target_rows
        features = model.extractor.embed([data.windows[i] for i in target_rows])
        probabilities = model.classifier.predict_proba(Tensor(features))
        classes = state.pseudo.classes.copy()
        classes[target_rows] = probabilities.argmax(axis=1)
        if self.cfg.vote_target_classes:
            classes = vote_along_runs(classes, data.layout)
        state.pseudo = build_pseudo_labels(state.pseudo.temporal_states, classes)

    def refresh_pseudo_labels(self, state: TrainingState, data: TrainingData, epoch: int) -> Relabeling:
        """
        Fit attention on the current features, refine them and reassign temporal states.

        Falls back to unrefined features when no sequence is long enough
        for the configured lag count.
        """
        att = self.cfg.attention
        features = state.model.extractor.embed(data.windows)
        refined = features
        weights: Optional[AttentionWeights] = None
        if self.cfg.use_temporal_attention:
            sequences = build_sequences(data.layout, features)
            try:
                weights = fit_attention(sequences, att.lags, ridge=att.ridge)
            except DataError as e:
                logger.warning("Attention not fitted at epoch %d (%s); using unrefined features", epoch, e)
            if weights is not None:
                refined = features.copy()
                for seq in sequences:
                    refined[seq.window_index] = refine_features(seq, weights, att.top_k, att.rho).values
        states = assign_temporal_states(
            refined, state.pseudo.classes, data.layout, att.states_per_class,
            seed=self.cfg.seed, max_iter=att.kmeans_max_iter,
            median_width=att.median_width, epoch=epoch,
        )
        pseudo = build_pseudo_labels(states, state.pseudo.classes)
        return Relabeling(pseudo=pseudo, churn=pseudo.churn(state.pseudo), weights=weights)

    def _validation_accuracy(self, model: DGDATAModel, split: DatasetSplit) -> Optional[float]:
        if not split.target_val:
            return None
        predictions = model.predict(split.target_val)
        truths = np.array([w.activity for w in split.target_val])
        return float(np.mean(predictions == truths))

    def _run_epoch(self, state: TrainingState, data: TrainingData, split: DatasetSplit) -> EpochRecord:
        cfg = self.cfg
        epoch = state.epoch + 1
        model = state.model
        if epoch > cfg.warmup_epochs:
            self.refresh_target_classes(state, data)

        fine_grained = None
        if cfg.use_fine_grained:
            fine_grained = self._run_phase(state, data, model.fine_grained, cfg.weights.fine_grained, 1.0)
        temporal = self._run_phase(state, data, model.temporal, cfg.weights.temporal, cfg.temporal_grl_lambda,
                                   update_extractor=cfg.temporal_updates_extractor)
        relabel = self.refresh_pseudo_labels(state, data, epoch)
        state.pseudo = relabel.pseudo
        lam = grl_lambda(epoch / cfg.epochs, cfg.grl_gamma)
        classifier = self._run_phase(state, data, model.classifier, cfg.weights.classifier, lam)
        model.classifier.trained = True
        if epoch == 1:
            model.feature_range.freeze()

        beta = relabel.weights.beta if relabel.weights is not None else []
        state.betas[epoch] = beta
        record = EpochRecord(
            epoch=epoch,
            fine_grained=fine_grained,
            temporal=temporal,
            classifier=classifier,
            grl_lambda=lam,
            state_churn=relabel.churn,
            attention_beta=beta,
            target_val_accuracy=self._validation_accuracy(model, split),
        )
        state.history.append(record)
        state.epoch = epoch
        return record

    def _log_epoch(self, record: EpochRecord) -> None:
        if not self._logging_enabled:
            return
        fine = f"{record.fine_grained.total:.4f}" if record.fine_grained else "skipped"
        accuracy = "n/a" if record.target_val_accuracy is None else f"{record.target_val_accuracy:.4f}"
        logger.info("Epoch %d/%d: fine_grained=%s temporal=%.4f classifier=%.4f lambda=%.4f churn=%.4f val_acc=%s",
                    record.epoch, self.cfg.epochs, fine, record.temporal.total, record.classifier.total,
                    record.grl_lambda, record.state_churn, accuracy)

    def _resume(self, path: Union[str, Path], data: TrainingData) -> TrainingState:
        state = load_checkpoint(path)
        saved = state.config.model_dump(exclude=RESUMABLE_OVERRIDES)
        current = self.cfg.model_dump(exclude=RESUMABLE_OVERRIDES)
        if saved != current:
            changed = sorted(k for k in current if saved.get(k) != current[k])
            raise ConfigurationError("checkpoint was written with a different configuration",
                                     details={"fields": changed})
        if state.window_count() != len(data.windows):
            raise DataError("checkpoint does not match the training windows",
                            details={"checkpoint": state.window_count(), "split": len(data.windows)})
        state.config = self.cfg
        return state

    def fit(
        self,
        split: DatasetSplit,
        resume_from: Optional[Union[str, Path]] = None,
    ) -> TrainingState:
        """
        Train on a split, optionally continuing from a checkpoint.

        Args:
            split: Source and target windows; only target_val labels are read, for reporting
            resume_from: Checkpoint written by an earlier run with the same configuration

        Returns:
            The final training state (model, optimizers, pseudo labels, history)

        Raises:
            DataError: If either domain has no windows
            DivergenceError: If a loss becomes non-finite
        """
        data = TrainingData.from_split(split)
        n_channels, window_length = split.window_shape
        if resume_from is not None:
            state = self._resume(resume_from, data)
        else:
            state = TrainingState.fresh(self.cfg, n_channels, window_length, split.label_names,
                                        data.initial_pseudo_labels(self.cfg.attention.states_per_class),
                                        logging_enabled=self._logging_enabled)

        if self._logging_enabled:
            logger.info("Training on %d source and %d target windows for epochs %d..%d",
                        split.n_source, split.n_target, state.epoch + 1, self.cfg.epochs)
        while state.epoch < self.cfg.epochs:
            record = self._run_epoch(state, data, split)
            self._log_epoch(record)
            self._write_diagnostics(state, data)
        return state

    def train(
        self,
        split: DatasetSplit,
        resume_from: Optional[Union[str, Path]] = None,
    ) -> Tuple[DGDATAModel, TrainHistory]:
        """Train and return the model with its per-epoch history; see :meth:`fit`."""
        state = self.fit(split, resume_from=resume_from)
        return state.model, state.history

    def _write_diagnostics(self, state: TrainingState, data: TrainingData) -> None:
        directory = self.cfg.diagnostics_dir
        if directory is None:
            return
        write_attention_diagnostics(directory, state.epoch, data.window_ids, data.layout, state.pseudo, state.betas)
        every = self.cfg.checkpoint_every
        if every is not None and state.epoch % every == 0:
            save_checkpoint(Path(directory) / f"checkpoint_epoch_{state.epoch:03d}.ckpt", state)


def train(
    cfg: TrainConfig,
    split: DatasetSplit,
    resume_from: Optional[Union[str, Path]] = None,
    logging_enabled: bool = False,
) -> Tuple[DGDATAModel, TrainHistory]:
    """Train a DGDATA model; see :meth:`DGDATATrainer.train`."""
    return DGDATATrainer(cfg, logging_enabled=logging_enabled).train(split, resume_from=resume_from)
