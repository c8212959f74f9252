"""Parameter store, Adam, L2 decay, and the checkpoint format.

Checkpoint file layout (all integers little-endian):

    magic "RGCP" | u32 version=1 | u64 step | u32 entry_count
    then per entry:
    u8 kind | u16 name_len | name utf-8 | u32 ndim | u32*ndim dims | payload

Kinds: 0 = parameter, 1 = Adam first moment, 2 = Adam second moment,
3 = buffer (e.g. batch-norm running stats), 4 = metadata (payload is raw
UTF-8 JSON; dims = [byte length]). Array payloads are float32 little-endian.
Metadata entries carry the model config record and the weight-decay name
list, so a checkpoint is self-describing.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CKPT_MAGIC = b"RGCP"
CKPT_VERSION = 1

_KIND_PARAM = 0
_KIND_ADAM_M = 1
_KIND_ADAM_V = 2
_KIND_BUFFER = 3
_KIND_META = 4


@dataclass
class Hyper:
    """Optimizer and regularization knobs. All config-overridable."""

    lr0: float = 1e-3
    lr_decay: float = 0.95          # multiplicative, per epoch
    l2_lambda: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    dropout_p: float = 0.3
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.lr_decay <= 1.0:
            raise ValueError(f"lr_decay must be in (0, 1], got {self.lr_decay}")
        for name in ("adam_beta1", "adam_beta2"):
            b = getattr(self, name)
            if not 0.0 < b < 1.0:
                raise ValueError(f"{name} must be in (0, 1), got {b}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError(f"dropout_p must be in [0, 1), "
                             f"got {self.dropout_p}")


class ParamStore:
    """Named parameters with gradients, Adam moments, and buffers.

    Insertion order is the canonical parameter order; every traversal
    (updates, checkpointing, gradient checking) follows it, which keeps
    runs deterministic.
    """

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.adam_m: dict[str, np.ndarray] = {}
        self.adam_v: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}
        self.decay_names: set[str] = set()
        self.t: int = 0

    def add_param(self, name: str, value: np.ndarray, *,
                  decay: bool = False) -> None:
        if name in self.params or name in self.buffers:
            raise ValueError(f"duplicate entry {name!r}")
        value = np.ascontiguousarray(value, dtype=self.dtype)
        self.params[name] = value
        self.grads[name] = np.zeros_like(value)
        self.adam_m[name] = np.zeros_like(value)
        self.adam_v[name] = np.zeros_like(value)
        if decay:
            self.decay_names.add(name)

    def add_buffer(self, name: str, value: np.ndarray) -> None:
        if name in self.params or name in self.buffers:
            raise ValueError(f"duplicate entry {name!r}")
        self.buffers[name] = np.ascontiguousarray(value, dtype=self.dtype)

    def zero_grads(self) -> None:
        for g in self.grads.values():
            g.fill(0)

    def clone(self) -> "ParamStore":
        out = ParamStore(self.dtype)
        for name, p in self.params.items():
            out.add_param(name, p.copy(), decay=name in self.decay_names)
            out.grads[name][...] = self.grads[name]
            out.adam_m[name][...] = self.adam_m[name]
            out.adam_v[name][...] = self.adam_v[name]
        for name, b in self.buffers.items():
            out.add_buffer(name, b.copy())
        out.t = self.t
        return out

    def num_values(self) -> int:
        return sum(p.size for p in self.params.values())


def l2_penalty(store: ParamStore, lam: float) -> float:
    """Add lam * sum ||W||^2 over decay-flagged tensors; grads get 2*lam*W.

    Only weight matrices are flagged at model build time (no biases, no
    batch-norm gamma/beta, no gate biases).
    """
    if lam == 0.0:
        return 0.0
    total = 0.0
    for name in store.params:
        if name not in store.decay_names:
            continue
        w = store.params[name]
        total += float((w * w).sum())
        store.grads[name] += (2.0 * lam) * w
    return lam * total


def adam_step(store: ParamStore, hyper: Hyper, lr_t: float) -> None:
    """One Adam update with bias correction; zeroes gradients afterward."""
    b1, b2, eps = hyper.adam_beta1, hyper.adam_beta2, hyper.adam_eps
    store.t += 1
    t = store.t
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, p in store.params.items():
        g = store.grads[name]
        m = store.adam_m[name]
        v = store.adam_v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        mhat = m / c1
        vhat = v / c2
        p -= lr_t * mhat / (np.sqrt(vhat) + eps)
    store.zero_grads()


def _write_entry(fh, kind: int, name: str, payload: bytes,
                 dims: tuple[int, ...]) -> None:
    nb = name.encode("utf-8")
    fh.write(struct.pack("<BH", kind, len(nb)))
    fh.write(nb)
    fh.write(struct.pack("<I", len(dims)))
    for d in dims:
        fh.write(struct.pack("<I", d))
    fh.write(payload)


def save_checkpoint(store: ParamStore, config_record: dict,
                    path: str | Path) -> None:
    """Write parameters, optimizer state, buffers, and config metadata."""
    entries = []
    for name, p in store.params.items():
        entries.append((_KIND_PARAM, name, p))
        entries.append((_KIND_ADAM_M, name, store.adam_m[name]))
        entries.append((_KIND_ADAM_V, name, store.adam_v[name]))
    for name, b in store.buffers.items():
        entries.append((_KIND_BUFFER, name, b))
    meta = [("config", config_record),
            ("decay", sorted(store.decay_names))]

    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<IQI", CKPT_VERSION, store.t,
                             len(entries) + len(meta)))
        for kind, name, arr in entries:
            payload = np.ascontiguousarray(arr, dtype="<f4").tobytes()
            _write_entry(fh, kind, name, payload, arr.shape)
        for name, obj in meta:
            blob = json.dumps(obj).encode("utf-8")
            _write_entry(fh, _KIND_META, name, blob, (len(blob),))


def load_checkpoint(path: str | Path,
                    dtype=np.float32) -> tuple[ParamStore, dict]:
    """Read a checkpoint; returns (store, config record)."""
    blob = Path(path).read_bytes()
    if blob[:4] != CKPT_MAGIC:
        raise ValueError(f"{path}: bad checkpoint magic {blob[:4]!r}")
    version, step, count = struct.unpack_from("<IQI", blob, 4)
    if version != CKPT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    pos = 4 + struct.calcsize("<IQI")

    raw: dict[int, dict[str, np.ndarray]] = {
        _KIND_PARAM: {}, _KIND_ADAM_M: {}, _KIND_ADAM_V: {}, _KIND_BUFFER: {}}
    meta: dict[str, object] = {}
    for _ in range(count):
        kind, name_len = struct.unpack_from("<BH", blob, pos)
        pos += 3
        name = blob[pos:pos + name_len].decode("utf-8")
        pos += name_len
        (ndim,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        dims = struct.unpack_from(f"<{ndim}I", blob, pos)
        pos += 4 * ndim
        if kind == _KIND_META:
            nbytes = dims[0]
            meta[name] = json.loads(blob[pos:pos + nbytes].decode("utf-8"))
            pos += nbytes
        else:
            size = int(np.prod(dims, dtype=np.int64)) if dims else 1
            arr = np.frombuffer(blob, dtype="<f4", count=size,
                                offset=pos).reshape(dims)
            pos += 4 * size
            raw[kind][name] = arr
    if pos != len(blob):
        raise ValueError(f"{path}: {len(blob) - pos} trailing bytes")

    store = ParamStore(dtype)
    decay = set(meta.get("decay", []))
    for name, p in raw[_KIND_PARAM].items():
        store.add_param(name, p, decay=name in decay)
        if name in raw[_KIND_ADAM_M]:
            store.adam_m[name][...] = raw[_KIND_ADAM_M][name]
        if name in raw[_KIND_ADAM_V]:
            store.adam_v[name][...] = raw[_KIND_ADAM_V][name]
    for name, b in raw[_KIND_BUFFER].items():
        store.add_buffer(name, b)
    store.t = step
    config = meta.get("config")
    if not isinstance(config, dict):
        raise ValueError(f"{path}: missing config metadata entry")
    return store, config
