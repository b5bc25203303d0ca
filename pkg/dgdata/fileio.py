"""
Atomic file writes shared by checkpoints, split storage and reports.
"""
import logging
import os
import tempfile
from pathlib import Path
from typing import Union

from tenacity import (
    RetryCallState,
    retry,
    retry_if_exception_type,
    stop_after_attempt,
    wait_exponential,
)

logger = logging.getLogger("dgdata")

PathLike = Union[str, Path]


def _log_retry(state: RetryCallState) -> None:
    error = state.outcome.exception() if state.outcome else None
    logger.warning("Write attempt %d failed (%s), retrying", state.attempt_number, error)


@retry(
    retry=retry_if_exception_type(OSError),
    stop=stop_after_attempt(3),
    wait=wait_exponential(multiplier=0.05, min=0.05, max=0.5),
    before_sleep=_log_retry,
    reraise=True,
)
def write_bytes_atomic(path: PathLike, payload: bytes) -> Path:
    """
    Write ``payload`` to a temporary file beside ``path`` and rename it into place.

    Readers never observe a partially written file. Transient ``OSError``s
    are retried with exponential backoff before being re-raised.

    Args:
        path: Destination file
        payload: Bytes to write

    Returns:
        The destination path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp_name, path)
    except BaseException:
        Path(tmp_name).unlink(missing_ok=True)
        raise
    return path


def write_text_atomic(path: PathLike, text: str) -> Path:
    """UTF-8 variant of :func:`write_bytes_atomic`."""
    return write_bytes_atomic(path, text.encode("utf-8"))
