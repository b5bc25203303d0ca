"""
Loaders for the supported sensor datasets.

Only the accelerometer and gyroscope of the (lower) right arm / wrist are
kept, in the channel order acc_x, acc_y, acc_z, gyr_x, gyr_y, gyr_z.
"""
import json
import logging
import re
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, ValidationError

from dgdata.exceptions import ConfigurationError, DataError, SchemaError
from dgdata.models.data import RawRecording

logger = logging.getLogger("dgdata.data")

CHANNELS = ["acc_x", "acc_y", "acc_z", "gyr_x", "gyr_y", "gyr_z"]
GENERIC_COLUMNS = ["timestamp", "user", "activity"] + CHANNELS


class DatasetSchema(BaseModel):
    """
    Layout of one raw dataset.

    Attributes:
        name: Schema name accepted by :func:`load_dataset`
        sample_rate_hz: Native sampling rate
        label_names: Activity names in label-index order
        raw_labels: Raw activity code of every label, same order
        channel_columns: 0-based raw column of every retained channel
        label_column: 0-based raw column of the activity code
    """

    name: str
    sample_rate_hz: float
    label_names: List[str]
    raw_labels: List[int] = Field(default_factory=list)
    channel_columns: List[int] = Field(default_factory=list)
    label_column: Optional[int] = None

    def label_index(self) -> Dict[int, int]:
        return {raw: i for i, raw in enumerate(self.raw_labels)}


SCHEMAS: Dict[str, DatasetSchema] = {
    # Right-lower-arm IMU (columns 64-69, 1-based) and the locomotion track (244)
    "oppt": DatasetSchema(
        name="oppt",
        sample_rate_hz=30.0,
        label_names=["standing", "walking", "sitting", "lying"],
        raw_labels=[1, 2, 4, 5],
        channel_columns=[63, 64, 65, 66, 67, 68],
        label_column=243,
    ),
    # Hand IMU: +-16 g accelerometer (columns 5-7, 1-based) and gyroscope (11-13)
    "pamap2": DatasetSchema(
        name="pamap2",
        sample_rate_hz=100.0,
        label_names=["lying", "sitting", "standing", "walking", "running", "cycling",
                     "Nordic walking", "ascending stairs", "descending stairs",
                     "vacuum cleaning", "ironing"],
        raw_labels=[1, 2, 3, 4, 5, 6, 7, 12, 13, 16, 17],
        channel_columns=[4, 5, 6, 10, 11, 12],
        label_column=1,
    ),
    # Right-arm unit: accelerometer (columns 10-12, 1-based) and gyroscope (13-15)
    "dsads": DatasetSchema(
        name="dsads",
        sample_rate_hz=25.0,
        label_names=["sitting", "standing", "lying on back", "lying on right",
                     "ascending stairs", "descending stairs", "standing in elevator still",
                     "moving around in elevator", "walking in parking lot",
                     "walking on treadmill in flat", "walking on treadmill inclined positions",
                     "running on treadmill in flat", "exercising on stepper",
                     "exercising on cross trainer", "cycling on exercise bike in horizontal positions",
                     "cycling on exercise bike in vertical positions", "rowing", "jumping",
                     "playing basketball"],
        raw_labels=list(range(1, 20)),
        channel_columns=[9, 10, 11, 12, 13, 14],
    ),
}


class GenericManifest(BaseModel):
    """
    Manifest of a generic-csv dataset directory.

    Attributes:
        sample_rate_hz: Fixed sampling rate of every file
        label_names: Declared activity labels
        files: File name (relative to the manifest) per user
    """

    sample_rate_hz: float = Field(gt=0)
    label_names: List[str] = Field(min_length=1)
    files: Dict[str, str] = Field(min_length=1)


def _read_table(path: Path, **kwargs) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, **kwargs)
    except pd.errors.EmptyDataError as e:
        raise DataError("empty data file", details={"path": str(path)}) from e
    if frame.empty:
        raise DataError("empty data file", details={"path": str(path)})
    return frame


def _kept_segments(keep: np.ndarray) -> List[slice]:
    """Maximal runs of consecutive kept rows."""
    edges = np.flatnonzero(np.diff(np.concatenate([[0], keep.astype(np.int8), [0]])))
    return [slice(int(start), int(stop)) for start, stop in zip(edges[::2], edges[1::2])]


def _segment_id(recording_id: str, index: int, count: int) -> str:
    return recording_id if count == 1 else f"{recording_id}-seg{index:03d}"


def _recording_from_codes(
    frame: pd.DataFrame,
    schema: DatasetSchema,
    user_id: str,
    recording_id: str,
    sample_rate_hz: float,
) -> List[RawRecording]:
    """
    Build recordings from a raw numeric table.

    Rows with an undeclared activity or a missing channel value are dropped
    and split the table, so every returned recording is gap-free.
    """
    needed = max(schema.channel_columns + [schema.label_column or 0]) + 1
    if frame.shape[1] < needed:
        raise SchemaError("data file has too few columns",
                          details={"recording": recording_id, "columns": frame.shape[1], "needed": needed})
    codes = frame.iloc[:, schema.label_column].to_numpy()
    samples = frame.iloc[:, schema.channel_columns].to_numpy(dtype=np.float64)
    mapping = schema.label_index()
    keep = np.isin(codes, schema.raw_labels) & np.all(np.isfinite(samples), axis=1)
    if not keep.any():
        logger.warning("Recording %s has no rows with a declared activity", recording_id)
        return []
    segments = _kept_segments(keep)
    return [
        RawRecording(user_id=user_id, recording_id=_segment_id(recording_id, i, len(segments)),
                     sample_rate_hz=sample_rate_hz, channel_names=list(CHANNELS), samples=samples[part],
                     activity=np.array([mapping[int(code)] for code in codes[part]], dtype=np.int64),
                     label_names=list(schema.label_names))
        for i, part in enumerate(segments)
    ]


def _load_oppt(root: Path, sample_rate_hz: float) -> List[RawRecording]:
    schema = SCHEMAS["oppt"]
    recordings = []
    for path in sorted(root.rglob("S*-*.dat")):
        user = path.stem.split("-")[0]
        frame = _read_table(path, sep=r"\s+", header=None)
        recordings.extend(_recording_from_codes(frame, schema, user, path.stem, sample_rate_hz))
    return recordings


def _load_pamap2(root: Path, sample_rate_hz: float) -> List[RawRecording]:
    schema = SCHEMAS["pamap2"]
    recordings = []
    for path in sorted(root.rglob("subject*.dat")):
        match = re.match(r"subject1?0*(\d+)", path.stem)
        user = match.group(1) if match else path.stem
        frame = _read_table(path, sep=r"\s+", header=None)
        recordings.extend(
            _recording_from_codes(frame, schema, user, f"{path.parent.name}-{path.stem}", sample_rate_hz))
    return recordings


def _load_dsads(root: Path, sample_rate_hz: float) -> List[RawRecording]:
    """One recording per (subject, activity): the activity's segments concatenated in order."""
    schema = SCHEMAS["dsads"]
    recordings = []
    for activity_dir in sorted(root.rglob("a[0-9][0-9]")):
        if not activity_dir.is_dir():
            continue
        code = int(activity_dir.name[1:])
        if code not in schema.raw_labels:
            continue
        for person_dir in sorted(p for p in activity_dir.glob("p*") if p.is_dir()):
            segments = sorted(person_dir.glob("s*.txt"))
            if not segments:
                continue
            frames = [_read_table(seg, header=None) for seg in segments]
            samples_frame = pd.concat(frames, ignore_index=True)
            if samples_frame.shape[1] <= max(schema.channel_columns):
                raise SchemaError("segment file has too few columns",
                                  details={"path": str(person_dir), "columns": samples_frame.shape[1]})
            samples = samples_frame.iloc[:, schema.channel_columns].to_numpy(dtype=np.float64)
            activity = np.full(len(samples), schema.label_index()[code], dtype=np.int64)
            user = person_dir.name[1:]
            recordings.append(RawRecording(
                user_id=user, recording_id=f"p{user}-{activity_dir.name}", sample_rate_hz=sample_rate_hz,
                channel_names=list(CHANNELS), samples=samples, activity=activity,
                label_names=list(schema.label_names),
            ))
    return recordings


def _load_generic(root: Path, sample_rate_override: Optional[float]) -> List[RawRecording]:
    manifest_path = root / "manifest.json" if root.is_dir() else root
    try:
        manifest = GenericManifest.model_validate(json.loads(manifest_path.read_text(encoding="utf-8")))
    except FileNotFoundError as e:
        raise DataError("generic-csv dataset needs a manifest.json", details={"path": str(manifest_path)}) from e
    except (json.JSONDecodeError, ValidationError) as e:
        raise SchemaError(f"invalid dataset manifest: {e}", details={"path": str(manifest_path)}) from e

    rate = sample_rate_override or manifest.sample_rate_hz
    names = {name: i for i, name in enumerate(manifest.label_names)}
    recordings = []
    for user, file_name in sorted(manifest.files.items()):
        path = manifest_path.parent / file_name
        frame = _read_table(path, dtype={"user": str, "activity": str}, encoding="utf-8")
        missing = [c for c in GENERIC_COLUMNS if c not in frame.columns]
        if missing:
            raise SchemaError("missing columns", details={"path": str(path), "missing": missing})
        frame = frame[frame["user"] == user].sort_values("timestamp", kind="stable")
        labelled = (frame["activity"].notna() & (frame["activity"].str.strip() != "")).to_numpy()
        if not labelled.any():
            logger.warning("File %s has no labelled rows for user %s", file_name, user)
            continue
        unknown = sorted(set(frame["activity"][labelled]) - set(names))
        if unknown:
            raise SchemaError("activity labels outside the declared label set",
                              details={"path": str(path), "unknown": unknown[:5]})
        # Unlabelled rows split the file so no window spans them
        segments = _kept_segments(labelled)
        for i, part in enumerate(segments):
            piece = frame.iloc[part]
            recordings.append(RawRecording(
                user_id=user,
                recording_id=_segment_id(f"{user}-{Path(file_name).stem}", i, len(segments)),
                sample_rate_hz=rate,
                channel_names=list(CHANNELS),
                samples=piece[CHANNELS].to_numpy(dtype=np.float64),
                activity=piece["activity"].map(names).to_numpy(dtype=np.int64),
                label_names=list(manifest.label_names),
            ))
    return recordings


def load_dataset(
    path: Union[str, Path],
    schema_name: str,
    sample_rate_hz: Optional[float] = None,
) -> List[RawRecording]:
    """
    Load every recording of a dataset, grouped by user.

    Args:
        path: Dataset root directory (or the manifest file for generic-csv)
        schema_name: One of "oppt", "pamap2", "dsads", "generic-csv"
        sample_rate_hz: Override of the schema's native rate

    Returns:
        Recordings sorted by user id, then recording id

    Raises:
        ConfigurationError: If the schema name is unknown
        DataError: If the path does not exist or holds no data
        SchemaError: If a file does not match the schema
    """
    root = Path(path)
    if not root.exists():
        raise DataError("dataset path does not exist", details={"path": str(root)})
    if schema_name == "generic-csv":
        recordings = _load_generic(root, sample_rate_hz)
    elif schema_name in SCHEMAS:
        rate = sample_rate_hz or SCHEMAS[schema_name].sample_rate_hz
        loader = {"oppt": _load_oppt, "pamap2": _load_pamap2, "dsads": _load_dsads}[schema_name]
        recordings = loader(root, rate)
    else:
        raise ConfigurationError("unknown dataset schema", details={"schema": schema_name})

    if not recordings:
        raise DataError("no recordings found", details={"path": str(root), "schema": schema_name})
    recordings.sort(key=lambda r: (r.user_id, r.recording_id))
    logger.info("Loaded %d recordings for users %s (%s)", len(recordings),
                sorted({r.user_id for r in recordings}), schema_name)
    return recordings
