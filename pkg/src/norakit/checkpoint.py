"""Binary checkpoint format.

Layout (little-endian)::

    b"NORAKIT1"            magic
    u32                    format version
    u32 + utf8             config fingerprint
    u32 + utf8             JSON metadata (label spaces, tokenizer vocabulary, flat config)
    u32                    tensor count
    per tensor:
        u32 + utf8         name
        u32                rank
        u32 * rank         dims
        f32 * prod(dims)   values
    u32                    CRC-32 of every preceding byte

Values are stored as 32-bit floats; the trainer keeps parameters on the
float32 grid so the round trip is exact.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .dataset import LabelSpaces
from .encoder import EncoderParams, Tokenizer, param_names
from .errors import CheckpointError, CorruptChecksum, VersionMismatch

MAGIC = b"NORAKIT1"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    params: EncoderParams
    spaces: LabelSpaces
    tokenizer: Tokenizer
    config: dict
    fingerprint: str
    extra: dict

    @property
    def external(self) -> bool:
        return bool(self.extra.get("external", False))


def _pack_str(s: str) -> bytes:
    b = s.encode("utf-8")
    return struct.pack("<I", len(b)) + b


def encode_checkpoint(params, spaces, tokenizer, config: dict, fingerprint: str, extra=None) -> bytes:
    meta = {
        "spaces": spaces.to_dict(),
        "vocab": tokenizer.itos,
        "config": config,
        "extra": extra or {},
    }
    parts = [MAGIC, struct.pack("<I", FORMAT_VERSION), _pack_str(fingerprint),
             _pack_str(json.dumps(meta, sort_keys=True, ensure_ascii=False)),
             struct.pack("<I", len(params.tensors))]
    for name, t in params.items():
        arr = np.asarray(t, dtype="<f4")  # ascontiguousarray would turn 0-d into 1-d
        parts.append(_pack_str(name))
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def save_checkpoint(path, params, spaces, tokenizer, config: dict, fingerprint: str, extra=None):
    data = encode_checkpoint(params, spaces, tokenizer, config, fingerprint, extra)
    with open(path, "wb") as fh:
        fh.write(data)


class _Reader:
    def __init__(self, data: bytes, pos: int):
        self.data = data
        self.pos = pos

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CorruptChecksum("checkpoint truncated")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def string(self) -> str:
        return self.take(self.u32()).decode("utf-8")


def decode_checkpoint(data: bytes) -> Checkpoint:
    if len(data) < len(MAGIC) + 4 or data[:len(MAGIC)] != MAGIC:
        raise VersionMismatch("not a checkpoint file (bad magic)")
    version = struct.unpack("<I", data[len(MAGIC):len(MAGIC) + 4])[0]
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"checkpoint format version {version}, expected {FORMAT_VERSION}")
    if len(data) < len(MAGIC) + 8:
        raise CorruptChecksum("checkpoint truncated")
    body, crc = data[:-4], struct.unpack("<I", data[-4:])[0]
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise CorruptChecksum("CRC-32 mismatch")
    r = _Reader(body, len(MAGIC) + 4)
    try:
        fingerprint = r.string()
        meta = json.loads(r.string())
        n = r.u32()
        tensors = {}
        for _ in range(n):
            name = r.string()
            rank = r.u32()
            dims = struct.unpack(f"<{rank}I", r.take(4 * rank))
            count = int(np.prod(dims)) if rank else 1
            vals = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(dims)
            tensors[name] = vals.astype(np.float64)
    except (UnicodeDecodeError, ValueError, struct.error) as exc:
        raise CorruptChecksum(f"unreadable checkpoint: {exc}") from None
    if r.pos != len(body):
        raise CorruptChecksum("trailing bytes after tensors")
    if set(tensors) != set(param_names()):
        raise CheckpointError("checkpoint tensor names do not match the model")
    return Checkpoint(
        params=EncoderParams(tensors),
        spaces=LabelSpaces.from_dict(meta["spaces"]),
        tokenizer=Tokenizer(meta["vocab"]),
        config=meta["config"],
        fingerprint=fingerprint,
        extra=meta.get("extra", {}),
    )


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        return decode_checkpoint(fh.read())
