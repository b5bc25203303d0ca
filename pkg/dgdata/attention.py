"""
Temporal relation attention: lag weights, feature refinement and temporal-state labels.
"""
import logging
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Union

import numpy as np
import pandas as pd
from scipy import linalg
from scipy.ndimage import median_filter
from sklearn.cluster import KMeans
from sklearn.exceptions import ConvergenceWarning

from dgdata.exceptions import ConfigurationError, DataError, DimensionError, LabelError
from dgdata.fileio import write_text_atomic
from dgdata.models.data import UnlabeledWindow
from dgdata.models.labels import AttentionWeights, PseudoLabels, TemporalStateLabels, composite_label

logger = logging.getLogger("dgdata.attention")


@dataclass
class FeatureSequence:
    """
    Chronological features of one uninterrupted run of windows.

    Attributes:
        values: Features [T, D], row t is the window at time t
        window_index: Row of every window in the training-window arrays
    """

    values: np.ndarray
    window_index: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 2 or self.window_index.shape != (self.values.shape[0],):
            raise DimensionError("sequence values must be [T, D] with one window index per row",
                                 details={"values": self.values.shape, "window_index": self.window_index.shape})

    def __len__(self) -> int:
        return int(self.values.shape[0])


@dataclass
class WindowLayout:
    """
    Where every training window sits in time.

    Attributes:
        domains: 0 for source windows, 1 for target windows
        recording: Rank of the window's recording id in sorted order
        seq_index: Position on the recording's sliding grid
    """

    domains: np.ndarray
    recording: np.ndarray
    seq_index: np.ndarray

    @classmethod
    def from_windows(cls, windows: Sequence[UnlabeledWindow]) -> "WindowLayout":
        _, recording = np.unique([w.recording_id for w in windows], return_inverse=True)
        return cls(
            domains=np.array([0 if w.domain == "source" else 1 for w in windows], dtype=np.int64),
            recording=np.asarray(recording, dtype=np.int64).reshape(-1),
            seq_index=np.array([w.seq_index for w in windows], dtype=np.int64),
        )

    def chronological_order(self) -> np.ndarray:
        """Source windows first, then by recording, then by time."""
        return np.lexsort((self.seq_index, self.recording, self.domains))


def window_runs(layout: WindowLayout) -> List[np.ndarray]:
    """Rows of every run of consecutive ``seq_index`` within one recording, in time order."""
    order = layout.chronological_order()
    runs = []
    start = 0
    for i in range(1, len(order) + 1):
        boundary = (
            i == len(order)
            or layout.recording[order[i]] != layout.recording[order[i - 1]]
            or layout.domains[order[i]] != layout.domains[order[i - 1]]
            or layout.seq_index[order[i]] != layout.seq_index[order[i - 1]] + 1
        )
        if boundary:
            runs.append(order[start:i])
            start = i
    return runs


def build_sequences(layout: WindowLayout, features: np.ndarray) -> List[FeatureSequence]:
    """Split the training windows into runs of consecutive ``seq_index`` within one recording."""
    return [FeatureSequence(values=features[rows], window_index=rows) for rows in window_runs(layout)]


def vote_along_runs(classes: np.ndarray, layout: WindowLayout, domain: int = 1) -> np.ndarray:
    """
    Give every labelled window of a run the most frequent class of that run.

    Windows crossing an activity change are discarded, so an uninterrupted
    run holds a single activity. Only runs of ``domain`` are voted; ties go
    to the smaller class id and -1 entries stay -1.
    """
    voted = np.asarray(classes, dtype=np.int64).copy()
    for rows in window_runs(layout):
        if layout.domains[rows[0]] != domain:
            continue
        known = rows[voted[rows] >= 0]
        if known.size:
            voted[known] = np.bincount(voted[known]).argmax()
    return voted


def _lag_design(values: np.ndarray, p: int):
    """Pooled scalar regression of every dimension at t on the same dimension at t-1..t-p."""
    t = values.shape[0]
    design = np.stack([values[p - lag:t - lag].reshape(-1) for lag in range(1, p + 1)], axis=1)
    return design, values[p:].reshape(-1)


def fit_attention(
    sequences: Union[FeatureSequence, Sequence[FeatureSequence]],
    p: int,
    ridge: float = 1e-10,
) -> AttentionWeights:
    """
    Fit one coefficient per lag by least squares over all sequences.

    Every feature dimension of every sequence contributes scalar samples
    ``h_t[d] ~ sum_i beta_i h_{t-i}[d]``. The normal equations carry a
    ridge of ``ridge * trace / p`` so rank-deficient problems (constant
    sequences) resolve to the minimum-norm solution. Sequences no longer
    than ``p`` are skipped.

    Args:
        sequences: One sequence or several
        p: Number of lags
        ridge: Relative ridge on the normal equations

    Returns:
        The fitted lag weights and the residual norm

    Raises:
        ConfigurationError: If p < 1
        DataError: If no sequence is longer than p
    """
    if p < 1:
        raise ConfigurationError("attention needs at least one lag", details={"p": p})
    if isinstance(sequences, FeatureSequence):
        sequences = [sequences]

    gram = np.zeros((p, p))
    moment = np.zeros(p)
    used = []
    for seq in sequences:
        if len(seq) <= p:
            logger.debug("Skipping a sequence of %d windows (p=%d)", len(seq), p)
            continue
        design, response = _lag_design(seq.values, p)
        gram += design.T @ design
        moment += design.T @ response
        used.append(seq)
    if not used:
        raise DataError("no feature sequence is longer than the lag count",
                        details={"p": p, "longest": max((len(s) for s in sequences), default=0)})

    scale = np.trace(gram) / p
    penalty = ridge * (scale if scale > 0 else 1.0)
    system = gram + penalty * np.eye(p)
    try:
        beta = linalg.solve(system, moment, assume_a="pos")
    except linalg.LinAlgError:
        beta = linalg.lstsq(system, moment)[0]

    squared = 0.0
    for seq in used:
        design, response = _lag_design(seq.values, p)
        residual = response - design @ beta
        squared += float(residual @ residual)
    return AttentionWeights(beta=beta.tolist(), p=p, residual=float(np.sqrt(squared)))


def refine_features(seq: FeatureSequence, weights: AttentionWeights, top_k: int, rho: float) -> FeatureSequence:
    """
    Blend every feature with its most significant past features.

    ``refined_t = (1 - rho) h_t + rho * sum_i w_i h_{t - lag_i}`` over the
    ``top_k`` lags of largest ``|beta|``, with the selected betas divided by
    the sum of their absolute values. The first ``p`` windows are unchanged.

    Raises:
        ConfigurationError: If top_k is not in [1, p] or rho is not in [0, 1]
    """
    p = weights.p
    if not 1 <= top_k <= p:
        raise ConfigurationError("top_k must lie in [1, p]", details={"top_k": top_k, "p": p})
    if not 0.0 <= rho <= 1.0:
        raise ConfigurationError("rho must lie in [0, 1]", details={"rho": rho})
    beta = np.asarray(weights.beta)
    lags = np.argsort(-np.abs(beta), kind="stable")[:top_k]
    norm = np.abs(beta[lags]).sum()
    refined = seq.values.copy()
    if rho == 0.0 or norm == 0.0 or len(seq) <= p:
        return FeatureSequence(values=refined, window_index=seq.window_index.copy())

    t = len(seq)
    context = np.zeros_like(seq.values[p:])
    for lag_pos in lags:
        lag = int(lag_pos) + 1
        context += (beta[lag_pos] / norm) * seq.values[p - lag:t - lag]
    refined[p:] = (1.0 - rho) * seq.values[p:] + rho * context
    return FeatureSequence(values=refined, window_index=seq.window_index.copy())


def _first_appearance_ids(labels: np.ndarray) -> np.ndarray:
    """Map cluster ids to 0, 1, ... in order of first appearance."""
    unique, first = np.unique(labels, return_index=True)
    remap = np.empty(unique.max() + 1, dtype=np.int64)
    remap[unique[np.argsort(first)]] = np.arange(unique.size)
    return remap


def assign_temporal_states(
    features: np.ndarray,
    classes: np.ndarray,
    layout: WindowLayout,
    k: int,
    seed: int,
    max_iter: int = 50,
    median_width: int = 3,
    epoch: int = 1,
) -> TemporalStateLabels:
    """
    Cluster each activity class into ``k`` temporal states.

    Per class, k-means (k-means++ seeding, one initialisation) runs on the
    class's windows in chronological order, source user first; state ids
    are renumbered by first appearance in that order. Windows whose class is
    unknown (-1) take the state of the nearest class-state centroid. A
    median filter then smooths states along every recording within runs of
    equal class.

    Args:
        features: Features [N, D] of every training window (refined or not)
        classes: Class per window, -1 when unknown
        layout: Time position of every window
        k: States per class
        seed: k-means random state
        max_iter: k-means iteration cap
        median_width: Odd median-filter width (1 disables smoothing)
        epoch: Epoch recorded on the result

    Raises:
        ConfigurationError: If k < 1 or median_width is even
        DimensionError: If the inputs disagree in length
    """
    if k < 1:
        raise ConfigurationError("k must be >= 1", details={"k": k})
    if median_width < 1 or median_width % 2 == 0:
        raise ConfigurationError("median_width must be a positive odd number", details={"width": median_width})
    n = features.shape[0]
    if classes.shape != (n,) or layout.seq_index.shape != (n,):
        raise DimensionError("features, classes and layout must cover the same windows",
                             details={"features": features.shape, "classes": classes.shape})

    order = layout.chronological_order()
    states = np.zeros(n, dtype=np.int64)
    centroids: List[np.ndarray] = []
    centroid_states: List[int] = []
    ordered_classes = classes[order]
    for c in np.unique(classes[classes >= 0]):
        rows = order[ordered_classes == c]
        k_c = min(k, rows.size)
        if k_c < k:
            logger.warning("Class %d has %d windows (< %d states); using %d states", c, rows.size, k, k_c)
        if k_c == 1:
            states[rows] = 0
            centroids.append(features[rows].mean(axis=0))
            centroid_states.append(0)
            continue
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            km = KMeans(n_clusters=k_c, init="k-means++", n_init=1, max_iter=max_iter,
                        random_state=seed).fit(features[rows])
        remap = _first_appearance_ids(km.labels_)
        states[rows] = remap[km.labels_]
        for old in np.unique(km.labels_):
            centroids.append(km.cluster_centers_[old])
            centroid_states.append(int(remap[old]))

    unknown = np.flatnonzero(classes < 0)
    if unknown.size and centroids:
        centers = np.stack(centroids)
        distances = ((features[unknown, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        states[unknown] = np.asarray(centroid_states)[distances.argmin(axis=1)]

    if median_width > 1:
        start = 0
        for i in range(1, n + 1):
            if (i == n or layout.recording[order[i]] != layout.recording[order[i - 1]]
                    or layout.domains[order[i]] != layout.domains[order[i - 1]]
                    or classes[order[i]] != classes[order[i - 1]]):
                run = order[start:i]
                states[run] = median_filter(states[run], size=median_width, mode="nearest")
                start = i
    return TemporalStateLabels(states=states, k=k, epoch=epoch)


def composite_pseudo_label(activity: int, state: int, k: int) -> int:
    """
    Composite class-state label ``activity * k + state``.

    Raises:
        LabelError: If the state is not in [0, k) or the activity is negative
    """
    if k < 1 or not 0 <= state < k or activity < 0:
        raise LabelError("class/state out of range", details={"class": activity, "state": state, "k": k})
    return int(composite_label(activity, state, k))


def build_pseudo_labels(states: TemporalStateLabels, classes: np.ndarray) -> PseudoLabels:
    """Pair temporal states with the class of every training window."""
    return PseudoLabels(temporal_states=states, classes=np.asarray(classes, dtype=np.int64).copy())


def write_attention_diagnostics(
    out_dir: Union[str, Path],
    epoch: int,
    window_ids: Sequence[str],
    layout: WindowLayout,
    pseudo: PseudoLabels,
    betas: Dict[int, List[float]],
) -> None:
    """
    Write ``attention_epoch_XXX.csv`` with every window's labels and ``betas.csv`` with the lag weights so far.
    """
    out_dir = Path(out_dir)
    frame = pd.DataFrame({
        "window": list(window_ids),
        "domain": np.where(layout.domains == 0, "source", "target"),
        "class": pseudo.classes,
        "state": pseudo.states,
        "composite": pseudo.composite,
    })
    write_text_atomic(out_dir / f"attention_epoch_{epoch:03d}.csv", frame.to_csv(index=False, lineterminator="\n"))
    rows = [{"epoch": e, **{f"beta_{i + 1}": b for i, b in enumerate(beta)}} for e, beta in sorted(betas.items())]
    write_text_atomic(out_dir / "betas.csv", pd.DataFrame(rows).to_csv(index=False, lineterminator="\n"))
