"""
Persist a :class:`DatasetSplit` as ``split.npz`` (window arrays) plus
``split.json`` (names, statistics, window provenance and diagnostics).
"""
import io
import json
import logging
from pathlib import Path
from typing import Dict, List, Union

import numpy as np
from pydantic import ValidationError

from dgdata.exceptions import DataError
from dgdata.fileio import write_bytes_atomic, write_text_atomic
from dgdata.models.data import (
    ChannelStats,
    DatasetSplit,
    SynthDiagnostics,
    UnlabeledWindow,
    WindowedSample,
)

logger = logging.getLogger("dgdata.data")

PARTITIONS = ("source_train", "target_train", "target_val", "target_test")
SPLIT_ARRAYS = "split.npz"
SPLIT_META = "split.json"


def partition_arrays(windows: List[UnlabeledWindow]) -> Dict[str, np.ndarray]:
    """Stack a partition into values [n, ch, W], seq_index [n] and activity [n] (-1 when absent)."""
    if windows:
        values = np.stack([w.values for w in windows])
    else:
        values = np.zeros((0, 0, 0))
    labels = [getattr(w, "activity", None) for w in windows]
    activity = np.array([-1 if label is None else label for label in labels], dtype=np.int64)
    return {
        "values": values,
        "seq_index": np.array([w.seq_index for w in windows], dtype=np.int64),
        "activity": activity,
    }


def save_split(split: DatasetSplit, out_dir: Union[str, Path]) -> Path:
    """
    Write a split into ``out_dir``.

    Returns:
        The directory holding both files
    """
    out_dir = Path(out_dir)
    arrays: Dict[str, np.ndarray] = {}
    meta: Dict[str, object] = {
        "label_names": split.label_names,
        "channel_names": split.channel_names,
        "sample_rate_hz": split.sample_rate_hz,
        "channel_stats": split.channel_stats.model_dump() if split.channel_stats else None,
        "diagnostics": split.diagnostics.model_dump() if split.diagnostics else None,
        "partitions": {},
    }
    for name in PARTITIONS:
        windows = getattr(split, name)
        for key, array in partition_arrays(windows).items():
            arrays[f"{name}.{key}"] = array
        meta["partitions"][name] = {  # type: ignore[index]
            "domain": [w.domain for w in windows],
            "recording_id": [w.recording_id for w in windows],
            "user_id": [w.user_id for w in windows],
        }

    buffer = io.BytesIO()
    np.savez(buffer, **arrays)
    write_bytes_atomic(out_dir / SPLIT_ARRAYS, buffer.getvalue())
    write_text_atomic(out_dir / SPLIT_META, json.dumps(meta, indent=2, sort_keys=True))
    logger.info("Saved split with %d source / %d target windows to %s", split.n_source, split.n_target, out_dir)
    return out_dir


def load_split(path: Union[str, Path]) -> DatasetSplit:
    """
    Read a split written by :func:`save_split`.

    Raises:
        DataError: If either file is missing or inconsistent
    """
    path = Path(path)
    try:
        meta = json.loads((path / SPLIT_META).read_text(encoding="utf-8"))
        with np.load(path / SPLIT_ARRAYS, allow_pickle=False) as npz:
            arrays = {key: npz[key] for key in npz.files}
    except FileNotFoundError as e:
        raise DataError("split files not found", details={"path": str(path)}) from e
    except (json.JSONDecodeError, ValueError, OSError) as e:
        raise DataError(f"cannot read split: {e}", details={"path": str(path)}) from e

    partitions: Dict[str, List[UnlabeledWindow]] = {}
    try:
        for name in PARTITIONS:
            info = meta["partitions"][name]
            values = arrays[f"{name}.values"]
            seq_index = arrays[f"{name}.seq_index"]
            activity = arrays[f"{name}.activity"]
            windows: List[UnlabeledWindow] = []
            for i in range(len(seq_index)):
                fields = dict(values=values[i], domain=info["domain"][i], seq_index=int(seq_index[i]),
                              recording_id=info["recording_id"][i], user_id=info["user_id"][i])
                if name == "target_train":
                    windows.append(UnlabeledWindow(**fields))
                else:
                    label = int(activity[i])
                    windows.append(WindowedSample(**fields, activity=None if label < 0 else label))
            partitions[name] = windows
        return DatasetSplit(
            **partitions,
            label_names=meta["label_names"],
            channel_names=meta["channel_names"],
            sample_rate_hz=meta["sample_rate_hz"],
            channel_stats=ChannelStats(**meta["channel_stats"]) if meta.get("channel_stats") else None,
            diagnostics=SynthDiagnostics(**meta["diagnostics"]) if meta.get("diagnostics") else None,
        )
    except (KeyError, IndexError, ValidationError) as e:
        raise DataError(f"split files are inconsistent: {e}", details={"path": str(path)}) from e
