"""
Checkpoint container:

    TSE-CHECKPOINT
    {"format_version": 1, "sha256": "...", "length": N, "config": {...}}
    <N bytes of npz payload with one float64 array per parameter>
"""

import hashlib
import io
import json
import logging
import zipfile
from pathlib import Path
from typing import Optional, Union

import numpy as np

logger = logging.getLogger(__name__)

MAGIC = b"TSE-CHECKPOINT\n"
FORMAT_VERSION = 1
# fixed member timestamp so equal weights give equal bytes
ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)


class CheckpointError(ValueError):
    """Unreadable, corrupt or incompatible checkpoint."""


class ConfigMismatchError(CheckpointError):
    """The checkpoint was written for a different model configuration."""


def _canonical(value) -> str:
    return json.dumps(value, sort_keys=True)


def _differences(expected: dict, found: dict, prefix: str = "") -> list:
    keys = sorted(set(expected) | set(found))
    diffs = []
    for key in keys:
        path = f"{prefix}{key}"
        a, b = expected.get(key), found.get(key)
        if isinstance(a, dict) and isinstance(b, dict):
            diffs.extend(_differences(a, b, f"{path}."))
        elif _canonical(a) != _canonical(b):
            diffs.append(f"{path}: expected {a!r}, found {b!r}")
    return diffs


def _npz_bytes(arrays) -> bytes:
    """An npz archive np.load can read, with sorted members and no wall-clock timestamps."""
    buffer = io.BytesIO()
    with zipfile.ZipFile(buffer, "w", compression=zipfile.ZIP_STORED) as archive:
        for name, array in sorted(arrays, key=lambda item: item[0]):
            info = zipfile.ZipInfo(f"{name}.npy", date_time=ZIP_EPOCH)
            with archive.open(info, "w", force_zip64=True) as member:
                np.lib.format.write_array(member, np.asarray(array), allow_pickle=False)
    return buffer.getvalue()


def save_checkpoint(model, path: Union[str, Path]) -> Path:
    """
    Write every weight of a model together with its config echo.

    Args:
        model: OperatorModel or PINNModel (anything with params and to_echo())
        path: Destination file
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = _npz_bytes(model.params.items())
    header = {
        "format_version": FORMAT_VERSION,
        "sha256": hashlib.sha256(payload).hexdigest(),
        "length": len(payload),
        "config": json.loads(json.dumps(model.to_echo())),
    }
    with path.open("wb") as handle:
        handle.write(MAGIC)
        handle.write(_canonical(header).encode() + b"\n")
        handle.write(payload)
    logger.debug("Saved checkpoint with %d arrays to %s", len(model.params), path)
    return path


def read_header(path: Union[str, Path]) -> dict:
    header, _ = _read(Path(path))
    return header


def _read(path: Path):
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"Cannot read checkpoint {path}: {exc}") from exc
    if not raw.startswith(MAGIC):
        raise CheckpointError(f"{path} is not a checkpoint file")
    end = raw.find(b"\n", len(MAGIC))
    if end < 0:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(raw[len(MAGIC) : end])
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: corrupt header") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: format version {header.get('format_version')} is not supported "
            f"(expected {FORMAT_VERSION})"
        )
    payload = raw[end + 1 :]
    if len(payload) != header["length"] or hashlib.sha256(payload).hexdigest() != header["sha256"]:
        raise CheckpointError(f"{path}: checksum mismatch, file is truncated or corrupt")
    return header, payload


def build_model(echo: dict):
    """Rebuild an untrained-weight model from its config echo."""
    from baselines.pinn import PINNModel
    from models.operator import OperatorModel

    kinds = {OperatorModel.kind: OperatorModel, PINNModel.kind: PINNModel}
    kind = echo.get("kind")
    if kind not in kinds:
        raise CheckpointError(f"Unknown model kind in checkpoint: {kind}")
    return kinds[kind].from_echo(echo)


def load_checkpoint(path: Union[str, Path], expected: Optional[dict] = None):
    """
    Read a checkpoint back into a model.

    Args:
        path: Checkpoint file
        expected: Config echo the caller requires; any difference raises

    Returns:
        The model with every weight restored bit-exactly
    """
    path = Path(path)
    header, payload = _read(path)
    config = header["config"]
    if expected is not None:
        diffs = _differences(json.loads(json.dumps(expected)), config)
        if diffs:
            raise ConfigMismatchError(f"{path} was written for another configuration: " + "; ".join(diffs))
    model = build_model(config)
    with np.load(io.BytesIO(payload)) as arrays:
        stored = {name: arrays[name] for name in arrays.files}
    try:
        model.params.assign(stored)
    except (KeyError, ValueError) as exc:
        raise ConfigMismatchError(f"{path}: weights do not fit the configured model ({exc})") from exc
    return model
