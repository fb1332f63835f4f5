"""Checkpoint persistence with content digests.

A checkpoint is a directory holding ``params.pt`` (the state dict) and a
``metadata.json`` sidecar (schema version, epoch, validation loss, config
snapshot, digest). The digest is a SHA-256 over every named array's name,
dtype, shape and bytes, so it is recomputable after any round trip and proves
bit-identity of parameters (used to show the shape prior stayed frozen).
Writes are atomic: files land under temporary names and are renamed into
place.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import torch
import torch.nn as nn

from .errors import ContractViolation, MissingArtifact
from .types import Checkpoint

CHECKPOINT_SCHEMA = 1
PARAMS_FILE = "params.pt"
METADATA_FILE = "metadata.json"


def state_digest(state: dict[str, torch.Tensor]) -> str:
    h = hashlib.sha256()
    for name in sorted(state):
        t = state[name].detach().cpu().contiguous()
        h.update(name.encode())
        h.update(str(t.dtype).encode())
        h.update(",".join(map(str, t.shape)).encode())
        h.update(t.numpy().tobytes())
    return h.hexdigest()


def module_digest(module: nn.Module) -> str:
    return state_digest(dict(module.state_dict()))


def make_checkpoint(module: nn.Module, **metadata) -> Checkpoint:
    """Snapshot a module's full state (parameters and buffers)."""
    state = {k: v.detach().clone() for k, v in module.state_dict().items()}
    return Checkpoint(parameters=state, digest=state_digest(state), metadata=dict(metadata))


def save_checkpoint(ckpt: Checkpoint, directory: str | Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    params_tmp = directory / (PARAMS_FILE + ".tmp")
    torch.save(ckpt.parameters, params_tmp)
    os.replace(params_tmp, directory / PARAMS_FILE)

    meta = {
        "schema": CHECKPOINT_SCHEMA,
        "digest": ckpt.digest,
        **ckpt.metadata,
    }
    meta_tmp = directory / (METADATA_FILE + ".tmp")
    meta_tmp.write_text(json.dumps(meta, indent=2, sort_keys=True))
    os.replace(meta_tmp, directory / METADATA_FILE)
    return directory


def load_checkpoint(directory: str | Path) -> Checkpoint:
    directory = Path(directory)
    params_path = directory / PARAMS_FILE
    meta_path = directory / METADATA_FILE
    if not params_path.exists() or not meta_path.exists():
        raise MissingArtifact(f"no checkpoint at {directory}")
    meta = json.loads(meta_path.read_text())
    if meta.get("schema") != CHECKPOINT_SCHEMA:
        raise ContractViolation(
            f"unsupported checkpoint schema {meta.get('schema')!r} at {directory}"
        )
    state = torch.load(params_path, weights_only=True)
    digest = state_digest(state)
    stored = meta.pop("digest")
    if digest != stored:
        raise ContractViolation(f"checkpoint digest mismatch at {directory}")
    meta.pop("schema")
    return Checkpoint(parameters=state, digest=digest, metadata=meta)


def restore_module(module: nn.Module, ckpt: Checkpoint) -> nn.Module:
    module.load_state_dict(ckpt.parameters)
    return module
