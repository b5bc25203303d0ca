"""
Evaluation, the source-only baseline and run reports.
"""
import hashlib
import io
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from contextlib import ExitStack
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy.special import softmax
from sklearn.metrics import confusion_matrix as sk_confusion_matrix

from dgdata.components.base import configure_logging
from dgdata.components.feature_extractor import FeatureExtractor
from dgdata.data.storage import PARTITIONS, partition_arrays
from dgdata.exceptions import ConfigurationError, DataError, LabelError, ReportError
from dgdata.fileio import write_bytes_atomic, write_text_atomic
from dgdata.model import STREAM_BATCHING, STREAM_INIT, DGDATAModel, stream_rng
from dgdata.models.config import TrainConfig
from dgdata.models.data import DatasetSplit, UnlabeledWindow, WindowedSample
from dgdata.models.history import TrainHistory
from dgdata.models.metrics import ConfusionMatrix, Metrics, RunManifest
from dgdata.nn import functional as F
from dgdata.nn.module import Linear, Module
from dgdata.nn.optim import Adam
from dgdata.nn.tensor import Tensor, backward

logger = logging.getLogger("dgdata")

THREADS_ENV = "DGDATA_THREADS"

# Reference target accuracies per dataset; recorded in reports, never used as gates
REFERENCE_ACCURACY = {"oppt": 1.0, "pamap2": 0.9029, "dsads": 0.6669}


def worker_count() -> int:
    """
    Evaluation worker threads from ``DGDATA_THREADS`` (default 1).

    Raises:
        ConfigurationError: If the variable is set but not a positive integer
    """
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw.strip() == "":
        return 1
    try:
        value = int(raw)
    except ValueError as e:
        raise ConfigurationError(f"{THREADS_ENV} must be an integer", details={"value": raw}) from e
    if value < 1:
        raise ConfigurationError(f"{THREADS_ENV} must be >= 1", details={"value": raw})
    return value


class SourceOnlyModel:
    """
    Feature extractor plus a linear softmax head, trained on source labels only.

    Args:
        n_channels: Sensor channels per window
        window_length: Samples per window
        label_names: Activity names in label-index order
        cfg: Training configuration (architecture is read from it)
        rng: Generator for weight initialisation
    """

    def __init__(
        self,
        n_channels: int,
        window_length: int,
        label_names: Sequence[str],
        cfg: TrainConfig,
        rng: np.random.Generator,
    ):
        self.label_names = list(label_names)
        self.extractor = FeatureExtractor(n_channels, window_length, cfg.architecture, rng)
        self.head = Linear(self.extractor.output_dim, len(self.label_names), rng)

    @property
    def modules(self) -> Dict[str, Module]:
        return {"extractor": self.extractor, "head": self.head}

    @property
    def n_classes(self) -> int:
        return len(self.label_names)

    def logits(self, values: np.ndarray) -> Tensor:
        return self.head(self.extractor(Tensor(values)))

    def predict_proba(self, windows: Sequence[UnlabeledWindow]) -> np.ndarray:
        features = self.extractor.embed(windows)
        if features.shape[0] == 0:
            return np.zeros((0, self.n_classes))
        with self.head.inference():
            logits = self.head(Tensor(features)).data
        return softmax(logits, axis=1)

    def predict(self, windows: Sequence[UnlabeledWindow]) -> np.ndarray:
        probabilities = self.predict_proba(windows)
        return probabilities.argmax(axis=1) if len(probabilities) else np.zeros(0, dtype=np.int64)


Classifier = Union[DGDATAModel, SourceOnlyModel]


def confusion_matrix(
    preds: Sequence[int],
    truths: Sequence[int],
    n_classes: int,
    label_names: Optional[Sequence[str]] = None,
) -> ConfusionMatrix:
    """
    Count ``(true, predicted)`` pairs; rows are true activities, columns predictions.

    Raises:
        LabelError: If a label is outside [0, n_classes) or the sequences differ in length
    """
    preds = np.asarray(preds, dtype=np.int64)
    truths = np.asarray(truths, dtype=np.int64)
    if preds.shape != truths.shape:
        raise LabelError("predictions and truths differ in length",
                         details={"preds": preds.shape, "truths": truths.shape})
    for name, labels in (("prediction", preds), ("truth", truths)):
        if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
            raise LabelError(f"{name} label out of range", details={"min": int(labels.min()),
                                                                    "max": int(labels.max()), "C": n_classes})
    names = list(label_names) if label_names is not None else [str(i) for i in range(n_classes)]
    if preds.size == 0:
        counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    else:
        counts = sk_confusion_matrix(truths, preds, labels=np.arange(n_classes))
    return ConfusionMatrix(counts=counts.astype(int).tolist(), label_names=names)


def metrics_from_confusion(cm: ConfusionMatrix, reference_accuracy: Optional[float] = None) -> Metrics:
    """Accuracy, per-class precision and recall from the counts; empty rows or columns give 0."""
    counts = np.asarray(cm.counts, dtype=np.int64)
    diagonal = np.diag(counts).astype(np.float64)
    support = counts.sum(axis=1)
    predicted = counts.sum(axis=0)
    recall = np.divide(diagonal, support, out=np.zeros_like(diagonal), where=support > 0)
    precision = np.divide(diagonal, predicted, out=np.zeros_like(diagonal), where=predicted > 0)
    return Metrics(
        accuracy=cm.trace / cm.total if cm.total else 0.0,
        precision=precision.tolist(),
        recall=recall.tolist(),
        support=support.astype(int).tolist(),
        confusion=cm,
        reference_accuracy=reference_accuracy,
    )


def combine_metrics(runs: Sequence[Metrics]) -> Metrics:
    """
    Average several tasks by summing their confusion counts.

    Raises:
        DataError: If no runs are given
        LabelError: If the runs use different label sets
    """
    if not runs:
        raise DataError("no metrics to combine")
    names = runs[0].confusion.label_names
    if any(m.confusion.label_names != names for m in runs):
        raise LabelError("cannot combine metrics over different label sets")
    counts = np.sum([np.asarray(m.confusion.counts) for m in runs], axis=0)
    return metrics_from_confusion(ConfusionMatrix(counts=counts.tolist(), label_names=names),
                                  reference_accuracy=runs[0].reference_accuracy)


def evaluate(model: Classifier, windows: Sequence[WindowedSample],
             reference_accuracy: Optional[float] = None) -> Metrics:
    """
    Classify labelled windows with the latent-mean inference path.

    The model is held in eval mode for the whole call, so parameters and
    batch-norm statistics are untouched. Windows are split into contiguous
    chunks over ``DGDATA_THREADS`` worker threads; the result does not
    depend on the thread count.

    Raises:
        DataError: If ``windows`` is empty or a window has no label
    """
    if not windows:
        raise DataError("cannot evaluate on an empty window set")
    truths = []
    for window in windows:
        if window.activity is None:
            raise DataError("evaluation windows must carry labels", details={"window": window.window_id})
        truths.append(window.activity)

    threads = min(worker_count(), len(windows))
    chunk = math.ceil(len(windows) / threads)
    chunks = [list(windows[i:i + chunk]) for i in range(0, len(windows), chunk)]
    with ExitStack() as stack:
        for module in model.modules.values():
            stack.enter_context(module.inference())
        if threads == 1:
            parts = [model.predict(c) for c in chunks]
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                parts = list(pool.map(model.predict, chunks))
    preds = np.concatenate(parts)
    cm = confusion_matrix(preds, truths, model.n_classes, model.label_names)
    return metrics_from_confusion(cm, reference_accuracy=reference_accuracy)


def train_source_only(cfg: TrainConfig, split: DatasetSplit, logging_enabled: bool = False) -> SourceOnlyModel:
    """
    Train the baseline with cross-entropy on source windows and the same Adam settings.

    Raises:
        ConfigurationError: If epochs < 1
        DataError: If the split has no source windows
    """
    configure_logging(logging_enabled)
    if cfg.epochs < 1:
        raise ConfigurationError("epochs must be >= 1", details={"epochs": cfg.epochs})
    if not split.source_train:
        raise DataError("the source-only baseline needs source windows")
    n_channels, window_length = split.window_shape
    model = SourceOnlyModel(n_channels, window_length, split.label_names, cfg, stream_rng(cfg.seed, STREAM_INIT))
    rng = stream_rng(cfg.seed, STREAM_BATCHING)
    values = np.stack([w.values for w in split.source_train])
    labels = np.array([w.activity for w in split.source_train], dtype=np.int64)
    params = {**model.extractor.named_parameters("extractor."), **model.head.named_parameters("head.")}
    optimizer = Adam(params, lr=cfg.learning_rate, beta1=cfg.beta1, beta2=cfg.beta2,
                     eps=cfg.adam_eps, weight_decay=cfg.weight_decay)
    n_batches = math.ceil(len(labels) / cfg.batch_size)
    for module in model.modules.values():
        module.train()
    for epoch in range(1, cfg.epochs + 1):
        total = 0.0
        for rows in np.array_split(rng.permutation(len(labels)), n_batches):
            optimizer.zero_grad()
            loss = F.softmax_cross_entropy(model.logits(values[rows]), labels[rows])
            backward(loss)
            optimizer.step()
            total += loss.item()
        if logging_enabled:
            logger.info("Source-only epoch %d/%d: cross_entropy=%.4f", epoch, cfg.epochs, total / n_batches)
    return model


def source_only_baseline(cfg: TrainConfig, split: DatasetSplit, logging_enabled: bool = False) -> Metrics:
    """Train the source-only baseline and evaluate it on ``target_test``."""
    model = train_source_only(cfg, split, logging_enabled=logging_enabled)
    return evaluate(model, split.target_test)


def latent_means(model: DGDATAModel, windows: Sequence[UnlabeledWindow]) -> np.ndarray:
    """Classifier-component latent means [n, Z] of many windows."""
    features = model.extractor.embed(windows)
    if features.shape[0] == 0:
        return np.zeros((0, model.config.architecture.latent_dim))
    with model.classifier.inference():
        return model.classifier.encode(Tensor(features)).mean.data


def dump_features(model: DGDATAModel, split: DatasetSplit, path: Union[str, Path]) -> Path:
    """
    Write ``features.npz`` with raw and learned representations of source-train and target-test.

    Arrays: ``raw`` (flattened windows), ``latent`` (classifier latent
    means), ``domain`` (0 source, 1 target) and ``label``.
    """
    windows: List[WindowedSample] = list(split.source_train) + list(split.target_test)
    raw = np.stack([w.values.reshape(-1) for w in windows])
    arrays = {
        "raw": raw,
        "latent": latent_means(model, windows),
        "domain": np.array([0] * split.n_source + [1] * len(split.target_test), dtype=np.int64),
        "label": np.array([w.activity for w in windows], dtype=np.int64),
    }
    return write_bytes_atomic(path, _npz_bytes(arrays))


def _npz_bytes(arrays: Dict[str, np.ndarray]) -> bytes:
    buffer = io.BytesIO()
    np.savez(buffer, **arrays)
    return buffer.getvalue()


def split_digests(split: DatasetSplit) -> Dict[str, str]:
    """SHA-256 of every partition's window values, positions, labels and provenance."""
    digests = {}
    for name in PARTITIONS:
        windows = getattr(split, name)
        sha = hashlib.sha256()
        for key, array in sorted(partition_arrays(windows).items()):
            sha.update(key.encode("utf-8"))
            sha.update(np.ascontiguousarray(array, dtype="<f8" if key == "values" else "<i8").tobytes())
        for window in windows:
            sha.update(f"{window.user_id}/{window.recording_id}\n".encode("utf-8"))
        digests[name] = sha.hexdigest()
    return digests


def build_manifest(
    command: str,
    config: Dict[str, Any],
    split: DatasetSplit,
    seeds: Dict[str, int],
    wall_clock_seconds: float,
) -> RunManifest:
    from dgdata import __version__

    return RunManifest(
        command=command,
        config=config,
        dataset_digests=split_digests(split),
        seeds=seeds,
        tool_version=__version__,
        wall_clock_seconds=max(0.0, wall_clock_seconds),
    )


def _dump_json(payload: Any) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def confusion_frame(cm: ConfusionMatrix) -> pd.DataFrame:
    """Confusion counts labelled by activity; rows true, columns predicted, both in label-index order."""
    frame = pd.DataFrame(cm.counts, index=cm.label_names, columns=cm.label_names)
    frame.index.name = "true\\predicted"
    return frame


def report(
    metrics: Metrics,
    history: Optional[TrainHistory],
    out_dir: Union[str, Path],
    manifest: Optional[RunManifest] = None,
) -> List[Path]:
    """
    Write ``metrics.json``, ``confusion.csv``, ``history.csv`` and ``manifest.json``.

    ``history.csv`` is skipped when there is no history (baseline runs) and
    ``manifest.json`` when no manifest is given.

    Returns:
        The written files

    Raises:
        ReportError: If the directory cannot be written
    """
    out_dir = Path(out_dir)
    files = {
        "metrics.json": _dump_json(metrics.model_dump(mode="json")),
        "confusion.csv": confusion_frame(metrics.confusion).to_csv(lineterminator="\n"),
    }
    if history is not None:
        files["history.csv"] = history.to_csv()
    if manifest is not None:
        files["manifest.json"] = _dump_json(manifest.model_dump(mode="json"))
    written = []
    try:
        for name, text in files.items():
            written.append(write_text_atomic(out_dir / name, text))
    except OSError as e:
        raise ReportError(f"cannot write report: {e}", details={"out_dir": str(out_dir)}) from e
    logger.info("Wrote %s to %s", ", ".join(files), out_dir)
    return written
