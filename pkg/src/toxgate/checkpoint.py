"""Binary checkpoint container: magic, version, JSON header, tensor table.

Layout (all integers little-endian):

    8 bytes   magic ``TOXGATE\\0``
    u32       format version (currently 1)
    u64       header length, then that many bytes of UTF-8 JSON
    u32       tensor count, then per tensor:
                  u32 name length + name bytes
                  u32 ndim + u64 per extent
                  row-major float64 little-endian payload

The header carries the architecture, task names, vocabulary, and the
training-config fingerprint. Tensors round-trip bit-exactly; any size or
version mismatch is a hard error with no partial model.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .encoder import EncoderConfig
from .model import Model
from .autodiff import Tensor
from .tokenizer import Vocabulary

__all__ = ["CheckpointError", "save_checkpoint", "load_checkpoint", "FORMAT_VERSION"]

MAGIC = b"TOXGATE\x00"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Checkpoint file is unreadable, corrupt, or from another version."""


def save_checkpoint(
    path: str | Path,
    model: Model,
    vocab: Vocabulary,
    train_fingerprint: dict | None = None,
) -> None:
    header = {
        "architecture": model.architecture(),
        "vocab_tokens": vocab.tokens,
        "train_fingerprint": train_fingerprint or {},
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    chunks = [MAGIC, struct.pack("<I", FORMAT_VERSION),
              struct.pack("<Q", len(header_bytes)), header_bytes,
              struct.pack("<I", len(model.params))]
    for name, tensor in model.params.items():
        name_bytes = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(name_bytes)))
        chunks.append(name_bytes)
        chunks.append(struct.pack("<I", tensor.data.ndim))
        for extent in tensor.data.shape:
            chunks.append(struct.pack("<Q", extent))
        chunks.append(np.ascontiguousarray(tensor.data, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


class _Reader:
    def __init__(self, blob: bytes, source: str) -> None:
        self.blob = blob
        self.pos = 0
        self.source = source

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CheckpointError(f"checkpoint {self.source} is truncated")
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]


def load_checkpoint(path: str | Path) -> tuple[Model, Vocabulary, dict]:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint file not found: {path}")
    reader = _Reader(path.read_bytes(), str(path))
    if reader.take(len(MAGIC)) != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint (bad magic bytes)")
    version = reader.u32()
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"{path} has format version {version}; this build reads "
            f"version {FORMAT_VERSION}"
        )
    try:
        header = json.loads(reader.take(reader.u64()).decode("utf-8"))
        arch = header["architecture"]
        vocab = Vocabulary(tokens=list(header["vocab_tokens"]))
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"{path} has a corrupt header: {exc}") from exc

    params: dict[str, Tensor] = {}
    for _ in range(reader.u32()):
        name = reader.take(reader.u32()).decode("utf-8")
        shape = tuple(reader.u64() for _ in range(reader.u32()))
        count = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(reader.take(count * 8), dtype="<f8").reshape(shape)
        params[name] = Tensor(data.copy())
    if reader.pos != len(reader.blob):
        raise CheckpointError(f"{path} has trailing bytes after the tensor table")

    config = EncoderConfig(
        vocab_size=arch["vocab_size"],
        hidden_dim=arch["hidden_dim"],
        n_layers=arch["n_layers"],
        n_heads=arch["n_heads"],
        ffn_dim=arch["ffn_dim"],
        max_len=arch["max_len"],
        dropout=arch["dropout"],
    )
    model = Model(
        config=config,
        task_names=list(arch["task_names"]),
        mask_hidden_dim=arch["mask_hidden_dim"],
        mask_norm=arch["mask_norm"],
        pool_eps=arch["pool_eps"],
        params=params,
    )
    if len(vocab) != config.vocab_size:
        raise CheckpointError(
            f"{path}: vocabulary size {len(vocab)} does not match "
            f"configured vocab_size {config.vocab_size}"
        )
    return model, vocab, header.get("train_fingerprint", {})
