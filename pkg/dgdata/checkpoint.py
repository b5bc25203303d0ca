"""
Versioned binary checkpoints of a training run.

Layout::

    magic (8 bytes) | version (uint32 LE) | header length (uint32 LE)
    | header (UTF-8 JSON, sorted keys) | blobs (little-endian, C order)
    | SHA-256 of everything before it (32 bytes)

The header holds the blob table (name, dtype, shape, offset, size) and all
non-array state: configuration, history, rng states, counters.
"""
import hashlib
import json
import logging
import struct
from pathlib import Path
from typing import Any, Dict, Tuple, Union

import numpy as np

from dgdata.exceptions import DimensionError, IncompatibleCheckpointError, IntegrityError
from dgdata.fileio import write_bytes_atomic
from dgdata.model import OPTIMIZED, DGDATAModel, TrainingState, build_optimizers
from dgdata.models.config import TrainConfig
from dgdata.models.features import FeatureRange
from dgdata.models.history import TrainHistory
from dgdata.models.labels import PseudoLabels, TemporalStateLabels
from dgdata.nn.optim import AdamState

logger = logging.getLogger("dgdata")

MAGIC = b"DGDATACK"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sII")
_DIGEST_SIZE = 32
_DTYPES = {"f8": np.dtype("<f8"), "i8": np.dtype("<i8")}


def encode_checkpoint(meta: Dict[str, Any], blobs: Dict[str, np.ndarray]) -> bytes:
    """Serialise a header and named arrays; blobs are stored in sorted name order."""
    table = []
    chunks = []
    offset = 0
    for name in sorted(blobs):
        array = np.asarray(blobs[name])
        kind = "i8" if np.issubdtype(array.dtype, np.integer) else "f8"
        payload = np.ascontiguousarray(array, dtype=_DTYPES[kind]).tobytes()
        table.append({"name": name, "dtype": kind, "shape": list(array.shape), "offset": offset,
                      "nbytes": len(payload)})
        chunks.append(payload)
        offset += len(payload)
    header = json.dumps({"blobs": table, "meta": meta}, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = _PREFIX.pack(MAGIC, FORMAT_VERSION, len(header)) + header + b"".join(chunks)
    return body + hashlib.sha256(body).digest()


def decode_checkpoint(payload: bytes) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
    """
    Parse and verify a checkpoint payload.

    Raises:
        IntegrityError: If the magic, length or digest is wrong
        IncompatibleCheckpointError: If the format version is not supported
    """
    if len(payload) < _PREFIX.size + _DIGEST_SIZE:
        raise IntegrityError("checkpoint is truncated", details={"size": len(payload)})
    magic, version, header_len = _PREFIX.unpack_from(payload)
    if magic != MAGIC:
        raise IntegrityError("not a DGDATA checkpoint", details={"magic": magic})
    body, digest = payload[:-_DIGEST_SIZE], payload[-_DIGEST_SIZE:]
    if hashlib.sha256(body).digest() != digest:
        raise IntegrityError("checkpoint digest mismatch (corrupt or truncated file)",
                             details={"size": len(payload)})
    if version != FORMAT_VERSION:
        raise IncompatibleCheckpointError("unsupported checkpoint format version",
                                          details={"found": version, "supported": FORMAT_VERSION})
    start = _PREFIX.size
    try:
        header = json.loads(body[start:start + header_len].decode("utf-8"))
        data_start = start + header_len
        blobs = {}
        for entry in header["blobs"]:
            begin = data_start + entry["offset"]
            raw = body[begin:begin + entry["nbytes"]]
            if len(raw) != entry["nbytes"]:
                raise IntegrityError("blob extends past the end of the file", details={"blob": entry["name"]})
            blobs[entry["name"]] = np.frombuffer(raw, dtype=_DTYPES[entry["dtype"]]).reshape(entry["shape"]).copy()
    except (KeyError, ValueError, UnicodeDecodeError) as e:
        raise IntegrityError(f"malformed checkpoint header: {e}") from e
    return header["meta"], blobs


def _state_to_payload(state: TrainingState) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
    model = state.model
    blobs: Dict[str, np.ndarray] = {f"model.{k}": v for k, v in model.state_dict().items()}
    adam_steps = {}
    for name in OPTIMIZED:
        adam = state.optimizers[name].state
        adam_steps[name] = adam.step
        for param, moment in adam.m.items():
            blobs[f"adam.{name}.m.{param}"] = moment
            blobs[f"adam.{name}.v.{param}"] = adam.v[param]
    if model.feature_range.lower is not None and model.feature_range.upper is not None:
        blobs["feature_range.lower"] = model.feature_range.lower
        blobs["feature_range.upper"] = model.feature_range.upper
    blobs["pseudo.states"] = state.pseudo.states
    blobs["pseudo.classes"] = state.pseudo.classes

    meta = {
        "epoch": state.epoch,
        "config": state.config.model_dump(mode="json"),
        "model": {"n_channels": model.n_channels, "window_length": model.window_length,
                  "label_names": model.label_names, "classifier_trained": model.classifier.trained},
        "feature_range_frozen": model.feature_range.frozen,
        "pseudo": {"k": state.pseudo.k, "epoch": state.pseudo.epoch},
        "adam_steps": adam_steps,
        "rngs": {name: rng.bit_generator.state for name, rng in sorted(state.rngs.items())},
        "history": state.history.model_dump(mode="json"),
        "betas": {str(epoch): beta for epoch, beta in sorted(state.betas.items())},
    }
    return meta, blobs


def save_checkpoint(path: Union[str, Path], state: TrainingState) -> Path:
    """
    Write a checkpoint atomically (temporary file, then rename).

    Returns:
        The checkpoint path
    """
    meta, blobs = _state_to_payload(state)
    path = write_bytes_atomic(path, encode_checkpoint(meta, blobs))
    logger.info("Saved checkpoint for epoch %d to %s", state.epoch, path)
    return path


def load_checkpoint(path: Union[str, Path]) -> TrainingState:
    """
    Rebuild a training state from a checkpoint.

    Nothing is constructed until the whole file has been verified.

    Raises:
        IntegrityError: If the file is missing, corrupt or truncated
        IncompatibleCheckpointError: If the format version is not supported
    """
    path = Path(path)
    try:
        payload = path.read_bytes()
    except FileNotFoundError as e:
        raise IntegrityError("checkpoint file not found", details={"path": str(path)}) from e
    meta, blobs = decode_checkpoint(payload)

    try:
        cfg = TrainConfig.model_validate(meta["config"])
        info = meta["model"]
        model = DGDATAModel(info["n_channels"], info["window_length"], info["label_names"], cfg,
                            np.random.default_rng(0))
        model.load_state_dict({k[len("model."):]: v for k, v in blobs.items() if k.startswith("model.")})
        model.classifier.trained = bool(info["classifier_trained"])
        if "feature_range.lower" in blobs:
            model.feature_range = FeatureRange(lower=blobs["feature_range.lower"], upper=blobs["feature_range.upper"],
                                               frozen=meta["feature_range_frozen"])
        else:
            model.feature_range = FeatureRange(frozen=meta["feature_range_frozen"])

        optimizers = build_optimizers(model, cfg)
        for name in OPTIMIZED:
            prefix_m, prefix_v = f"adam.{name}.m.", f"adam.{name}.v."
            optimizers[name].state = AdamState(
                m={k[len(prefix_m):]: v for k, v in blobs.items() if k.startswith(prefix_m)},
                v={k[len(prefix_v):]: v for k, v in blobs.items() if k.startswith(prefix_v)},
                step=int(meta["adam_steps"][name]),
            )

        pseudo = PseudoLabels(
            temporal_states=TemporalStateLabels(states=blobs["pseudo.states"], k=meta["pseudo"]["k"],
                                                epoch=meta["pseudo"]["epoch"]),
            classes=blobs["pseudo.classes"],
        )
        rngs = {}
        for name, rng_state in meta["rngs"].items():
            generator = np.random.default_rng()
            generator.bit_generator.state = rng_state
            rngs[name] = generator
        state = TrainingState(
            config=cfg,
            model=model,
            optimizers=optimizers,
            pseudo=pseudo,
            rngs=rngs,
            history=TrainHistory.model_validate(meta["history"]),
            betas={int(epoch): beta for epoch, beta in meta["betas"].items()},
            epoch=int(meta["epoch"]),
        )
    except (KeyError, ValueError, TypeError, DimensionError) as e:
        raise IntegrityError(f"checkpoint content is inconsistent: {e}", details={"path": str(path)}) from e
    logger.info("Loaded checkpoint for epoch %d from %s", state.epoch, path)
    return state
