"""Binary checkpoint format.

Layout, all little-endian:

    magic "JGR1" | version u32 | tensor count u32
    per tensor: name length u16, UTF-8 name, rank u8, dims u32 each,
                float32 values in row-major order

The training config rides in a JSON sidecar at <path>.json and the
vocabulary at <path>.vocab, one token per line; the tensor file alone
does not identify the tokens it was trained with.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from ..config import TrainConfig
from ..errors import CheckpointFormatError, SchemaError
from ..model import JaegerModel
from ..text import Vocabulary

MAGIC = b"JGR1"
VERSION = 1


def config_path(path: str) -> str:
    return path + ".json"


def vocab_path(path: str) -> str:
    return path + ".vocab"


def save_checkpoint(path: str, model: JaegerModel) -> None:
    """Write the model's named tensors, config sidecar and vocabulary."""
    arrays = model.state_arrays()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        f.write(struct.pack("<I", len(arrays)))
        for name, arr in arrays.items():
            encoded = name.encode("utf-8")
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<B", arr.ndim))
            for dim in arr.shape:
                f.write(struct.pack("<I", dim))
            f.write(np.array(arr, dtype="<f4", order="C").tobytes())
    with open(config_path(path), "w", encoding="utf-8") as f:
        json.dump({"format_version": VERSION, "config": model.cfg.to_dict()}, f,
                  indent=2, sort_keys=True)
        f.write("\n")
    model.vocab.save(vocab_path(path))


class _Reader:
    def __init__(self, blob: bytes, path: str):
        self.blob = blob
        self.path = path
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CheckpointFormatError(f"{self.path} is truncated at byte {self.pos}")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return struct.unpack("<B", self.take(1))[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def load_checkpoint(path: str) -> tuple[dict[str, np.ndarray], TrainConfig, Vocabulary]:
    """Read tensors, config and vocabulary; rejects corrupt files."""
    with open(path, "rb") as f:
        blob = f.read()
    r = _Reader(blob, path)
    magic = r.take(4)
    if magic != MAGIC:
        raise CheckpointFormatError(f"{path} has bad magic {magic!r}, expected {MAGIC!r}")
    version = r.u32()
    if version != VERSION:
        raise CheckpointFormatError(f"{path} has unsupported version {version}")
    count = r.u32()
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        name = r.take(r.u16()).decode("utf-8")
        if name in arrays:
            raise CheckpointFormatError(f"{path} repeats tensor {name!r}")
        rank = r.u8()
        dims = tuple(r.u32() for _ in range(rank))
        n_values = 1
        for d in dims:
            n_values *= d
        raw = r.take(4 * n_values)
        arrays[name] = np.frombuffer(raw, dtype="<f4").reshape(dims).copy()
    if r.pos != len(blob):
        raise CheckpointFormatError(f"{path} has {len(blob) - r.pos} trailing bytes")

    with open(config_path(path), encoding="utf-8") as f:
        sidecar = json.load(f)
    if not isinstance(sidecar, dict) or "config" not in sidecar:
        raise SchemaError(f"{config_path(path)} is missing the config object")
    cfg = TrainConfig.from_dict(sidecar["config"])
    vocab = Vocabulary.load(vocab_path(path))
    return arrays, cfg, vocab


def load_model(path: str) -> JaegerModel:
    """Rebuild a model from a checkpoint; raises CompatibilityError on mismatch."""
    arrays, cfg, vocab = load_checkpoint(path)
    model = JaegerModel(cfg, vocab)
    model.load_arrays(arrays)
    return model
