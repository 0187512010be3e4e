"""Binary checkpoint files.

Layout, all little-endian::

    b"BDN1" | u32 version | u64 arch hash | u32 record count | records...

    record: u16 name length | name (utf-8) | u8 role | u8 precision | u8 rank
            | u32 dims[rank] | payload

Payloads are raw arrays for the float/int precisions. A ``packed`` payload
holds ``rows * ceil(k / 64)`` u64 words laid out as in :mod:`binnet.tensor`,
where ``dims`` is the logical shape. Binary-conv weights get two records:
the latent floats under their name and the packed signs under
``name + "#packed"``.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import CheckpointError, HashMismatch
from ..nn.autograd import ROLES
from ..tensor import BitTensor, WORD_DTYPE, sign_quantize, unpack, words_for

MAGIC = b"BDN1"
VERSION = 1
PACKED_SUFFIX = "#packed"

EXTRA_ROLES = ("buffer", "optimizer", "meta")
ROLE_CODES = {r: i for i, r in enumerate(ROLES + EXTRA_ROLES)}
ROLE_NAMES = {i: r for r, i in ROLE_CODES.items()}

PRECISIONS = {0: np.dtype("<f4"), 2: np.dtype("<f8"), 3: np.dtype("<i8"), 4: np.dtype("u1")}
PACKED = 1
_PRECISION_CODES = {np.dtype(v).newbyteorder("=") if v.itemsize > 1 else v: k for k, v in PRECISIONS.items()}


@dataclass
class Record:
    name: str
    role: str
    value: np.ndarray | BitTensor


@dataclass
class Checkpoint:
    arch_hash: int
    records: dict[str, Record] = field(default_factory=dict)

    def add(self, name: str, role: str, value) -> None:
        if role not in ROLE_CODES:
            raise CheckpointError(f"unknown role {role!r}")
        self.records[name] = Record(name, role, value)

    def get(self, name: str):
        return self.records[name].value

    def by_role(self, role: str) -> dict[str, np.ndarray | BitTensor]:
        return {n: r.value for n, r in self.records.items() if r.role == role}

    def check_hash(self, expected: int) -> None:
        if self.arch_hash != expected:
            raise HashMismatch(f"checkpoint arch hash {self.arch_hash:#018x} != model {expected:#018x}")

    def check_packed(self) -> None:
        """Every packed record equals the sign of its latent twin, when both exist."""
        for name, rec in self.records.items():
            if name.endswith(PACKED_SUFFIX):
                latent = self.records.get(name[:-len(PACKED_SUFFIX)])
                if latent is not None and sign_quantize(latent.value) != rec.value:
                    raise CheckpointError(f"{name} disagrees with the sign of its latent weights")


def _encode(rec: Record) -> bytes:
    name = rec.name.encode()
    v = rec.value
    if isinstance(v, BitTensor):
        prec, shape, payload = PACKED, v.logical_shape, v.words.astype(WORD_DTYPE, copy=False).tobytes()
    else:
        arr = np.asarray(v)
        key = arr.dtype.newbyteorder("=") if arr.dtype.itemsize > 1 else arr.dtype
        if key not in _PRECISION_CODES:
            raise CheckpointError(f"{rec.name}: cannot store dtype {arr.dtype}")
        prec = _PRECISION_CODES[key]
        shape, payload = arr.shape, np.ascontiguousarray(arr, dtype=PRECISIONS[prec]).tobytes()
    head = struct.pack("<H", len(name)) + name + struct.pack("<BBB", ROLE_CODES[rec.role], prec, len(shape))
    return head + struct.pack(f"<{len(shape)}I", *shape) + payload


def dumps(ckpt: Checkpoint) -> bytes:
    parts = [MAGIC, struct.pack("<IQI", VERSION, ckpt.arch_hash, len(ckpt.records))]
    parts += [_encode(r) for r in ckpt.records.values()]
    return b"".join(parts)


class _Reader:
    def __init__(self, blob: bytes):
        self.blob, self.pos = blob, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CheckpointError("truncated checkpoint")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def loads(blob: bytes) -> Checkpoint:
    r = _Reader(blob)
    if r.take(4) != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    version, arch_hash, count = r.unpack("<IQI")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    ckpt = Checkpoint(arch_hash)
    for _ in range(count):
        (nlen,) = r.unpack("<H")
        name = r.take(nlen).decode()
        role, prec, rank = r.unpack("<BBB")
        shape = r.unpack(f"<{rank}I")
        if role not in ROLE_NAMES:
            raise CheckpointError(f"{name}: unknown role code {role}")
        if prec == PACKED:
            rows = shape[0] if shape else 1
            k = int(np.prod(shape[1:])) if len(shape) > 1 else 1
            words = np.frombuffer(r.take(8 * rows * words_for(k)), dtype=WORD_DTYPE).reshape(rows, words_for(k))
            value = BitTensor(tuple(shape), words.copy(), k)
            value.check_padding()
        elif prec in PRECISIONS:
            dt = PRECISIONS[prec]
            count_ = int(np.prod(shape)) if shape else 1
            value = np.frombuffer(r.take(dt.itemsize * count_), dtype=dt).reshape(shape).astype(
                dt.newbyteorder("="))
        else:
            raise CheckpointError(f"{name}: unknown precision code {prec}")
        ckpt.records[name] = Record(name, ROLE_NAMES[role], value)
    if r.pos != len(blob):
        raise CheckpointError(f"{len(blob) - r.pos} trailing bytes after the last record")
    return ckpt


def save(ckpt: Checkpoint, path: str | Path) -> None:
    Path(path).write_bytes(dumps(ckpt))


def load(path: str | Path) -> Checkpoint:
    return loads(Path(path).read_bytes())


def snapshot(model, optimizer=None, meta: dict[str, int] | None = None, config_text: str | None = None,
             inference_only: bool = False) -> Checkpoint:
    """Capture a model (and optionally optimizer state) as a :class:`Checkpoint`.

    ``inference_only`` drops the latent binary weights and optimizer state,
    keeping packed bits, full-precision parameters and BN statistics.
    """
    ckpt = Checkpoint(model.arch_hash)
    for name, p in model.named_parameters():
        if p.role == "binary-conv weight":
            ckpt.add(name + PACKED_SUFFIX, p.role, sign_quantize(p.data))
            if inference_only:
                continue
        ckpt.add(name, p.role, p.data.copy())
    for name, buf in model.named_buffers():
        ckpt.add(name, "buffer", buf.copy())
    if optimizer is not None and not inference_only:
        for key, arr in optimizer.state_arrays().items():
            ckpt.add(f"optim.{key}", "optimizer", np.asarray(arr).copy())
    for key, val in (meta or {}).items():
        ckpt.add(f"meta.{key}", "meta", np.asarray(val, dtype=np.int64))
    if config_text is not None:
        ckpt.add("meta.config", "meta", np.frombuffer(config_text.encode(), dtype=np.uint8).copy())
    return ckpt


def restore(model, ckpt: Checkpoint, optimizer=None, strict: bool = True) -> dict[str, int]:
    """Load parameters, buffers and optimizer state in place; returns the meta integers."""
    ckpt.check_hash(model.arch_hash)
    for name, p in model.named_parameters():
        if name in ckpt.records:
            value = ckpt.get(name)
        elif name + PACKED_SUFFIX in ckpt.records:
            value = unpack(ckpt.get(name + PACKED_SUFFIX), p.data.dtype)
        elif strict:
            raise CheckpointError(f"checkpoint lacks parameter {name}")
        else:
            continue
        if value.shape != p.data.shape:
            raise CheckpointError(f"{name}: shape {value.shape} vs model {p.data.shape}")
        p.data[...] = value
    for name, buf in model.named_buffers():
        if name in ckpt.records:
            buf[...] = ckpt.get(name)
        elif strict:
            raise CheckpointError(f"checkpoint lacks buffer {name}")
    if optimizer is not None:
        state = {n[len("optim."):]: v for n, v in ckpt.by_role("optimizer").items()}
        if not state and strict:
            raise CheckpointError("checkpoint has no optimizer state")
        optimizer.load_state_arrays(state)
    return {n[len("meta."):]: int(v) for n, v in ckpt.by_role("meta").items() if n != "meta.config"}


def config_text(ckpt: Checkpoint) -> str | None:
    rec = ckpt.records.get("meta.config")
    return None if rec is None else rec.value.tobytes().decode()
