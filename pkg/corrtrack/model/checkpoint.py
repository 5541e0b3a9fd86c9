"""Checkpoint container for network parameters.

Layout, little-endian::

    magic     4 bytes  b"CKPT"
    version   u16
    meta_len  u32
    metadata  UTF-8 JSON (arch config echo, tensor names, extra fields)
    tensors   one ``.bt`` record per name, in metadata order

The metadata is written with sorted keys and no timestamps so identical
parameters give identical files.
"""

from __future__ import annotations

import json
import logging
import struct
from pathlib import Path
from typing import Any, Final

import numpy as np
import torch

from corrtrack.core.exceptions import ArchMismatch, StorageError, TensorFormatError
from corrtrack.model.network import ArchConfig, CorrespondenceNet
from corrtrack.utils.tensor_io import decode_tensor, encode_tensor

LOG = logging.getLogger(__name__)

MAGIC: Final[bytes] = b"CKPT"
VERSION: Final[int] = 1
HEADER: Final[struct.Struct] = struct.Struct("<4sHI")


def encode_checkpoint(model: CorrespondenceNet, extra: dict[str, Any] | None = None) -> bytes:
    state = model.state_dict()
    names = list(state.keys())
    metadata = {"arch": model.arch.to_dict(), "tensors": names, "extra": extra or {}}
    meta_bytes = json.dumps(metadata, sort_keys=True).encode("utf-8")
    records = [encode_tensor(state[name].detach().cpu().numpy()) for name in names]
    return HEADER.pack(MAGIC, VERSION, len(meta_bytes)) + meta_bytes + b"".join(records)


def save_checkpoint(
    model: CorrespondenceNet, path: Path, extra: dict[str, Any] | None = None
) -> Path:
    """Write the model parameters and arch echo to ``path``."""
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(encode_checkpoint(model, extra))
    except OSError as exc:
        raise StorageError(f"Failed to write checkpoint {path}: {exc}") from exc
    LOG.info("Saved checkpoint %s", path)
    return path


def read_checkpoint(path: Path) -> tuple[dict[str, Any], dict[str, np.ndarray]]:
    """Parse a checkpoint file into (metadata, named arrays).

    Raises:
        StorageError: If the file cannot be read
        TensorFormatError: On a malformed container
    """
    try:
        buffer = path.read_bytes()
    except OSError as exc:
        raise StorageError(f"Failed to read checkpoint {path}: {exc}") from exc

    if len(buffer) < HEADER.size:
        raise TensorFormatError(f"{path}: truncated checkpoint header")
    magic, version, meta_len = HEADER.unpack_from(buffer, 0)
    if magic != MAGIC:
        raise TensorFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise TensorFormatError(f"{path}: unsupported checkpoint version {version}")

    offset = HEADER.size
    try:
        metadata = json.loads(buffer[offset : offset + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise TensorFormatError(f"{path}: unreadable metadata: {exc}") from exc
    offset += meta_len

    arrays: dict[str, np.ndarray] = {}
    for name in metadata["tensors"]:
        arrays[name], offset = decode_tensor(buffer, offset)
    if offset != len(buffer):
        raise TensorFormatError(f"{path}: {len(buffer) - offset} trailing bytes")
    return metadata, arrays


def load_checkpoint(path: Path, arch: ArchConfig | None = None) -> CorrespondenceNet:
    """Rebuild a network from a checkpoint.

    Args:
        path: Checkpoint file
        arch: Expected architecture; a differing echo is rejected

    Raises:
        ArchMismatch: If the stored arch differs from ``arch`` or tensors disagree in shape
    """
    metadata, arrays = read_checkpoint(path)
    stored = ArchConfig.from_dict(metadata["arch"])
    if arch is not None and stored != arch:
        diff = {
            key: (value, getattr(arch, key))
            for key, value in stored.to_dict().items()
            if getattr(arch, key) != value
        }
        raise ArchMismatch(f"{path}: checkpoint arch differs from config: {diff}")

    model = CorrespondenceNet(stored)
    state = model.state_dict()
    if set(state) != set(arrays):
        raise ArchMismatch(f"{path}: tensor names do not match the architecture")
    for name, array in arrays.items():
        if tuple(state[name].shape) != array.shape:
            raise ArchMismatch(
                f"{path}: tensor {name} has shape {array.shape}, expected {tuple(state[name].shape)}"
            )
        state[name] = torch.from_numpy(array)
    model.load_state_dict(state)
    return model


def checkpoint_extra(path: Path) -> dict[str, Any]:
    """Extra metadata stored alongside the weights (step, seed, ...)."""
    metadata, _ = read_checkpoint(path)
    return dict(metadata.get("extra", {}))
