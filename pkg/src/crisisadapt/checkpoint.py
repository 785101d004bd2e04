"""Binary checkpoint files.

Layout: 8 magic bytes ``CASTCKPT``, a little-endian u32 format version, a
u32 byte length followed by a UTF-8 JSON manifest, then the concatenated
raw little-endian IEEE-754 tensor payloads. The manifest lists every
tensor (name, dtype, shape, offset, byte_length), carries the model
config, the vocabulary content hash, the optimizer step, the seed, and a
SHA-256 digest of the payload section. Serialization is canonical, so
save(load(file)) reproduces the file byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass

import numpy as np

from .errors import CheckpointError, CompatibilityError, IntegrityError
from .model import ModelConfig, ParameterStore
from .train import AdamState

MAGIC = b"CASTCKPT"
FORMAT_VERSION = 1

_DTYPES = {"float32": "<f4", "float64": "<f8"}


@dataclass
class CheckpointData:
    arrays: dict[str, np.ndarray]
    config: ModelConfig
    vocab_hash: str
    step: int
    seed: int
    adam_m: dict[str, np.ndarray] | None
    adam_v: dict[str, np.ndarray] | None
    adam_t: int | None
    extra: dict

    def restore_optimizer(self, params: ParameterStore) -> AdamState | None:
        if self.adam_t is None:
            return None
        state = AdamState(params)
        state.t = self.adam_t
        for name in params.names():
            state.m[name][...] = self.adam_m[name]
            state.v[name][...] = self.adam_v[name]
        return state


def _dtype_name(arr: np.ndarray) -> str:
    for name, code in _DTYPES.items():
        if arr.dtype == np.dtype(code):
            return name
    raise CheckpointError(f"unsupported tensor dtype {arr.dtype}")


def save_checkpoint(
    path,
    params: ParameterStore,
    config: ModelConfig,
    vocab_hash: str,
    step: int,
    seed: int,
    optimizer: AdamState | None = None,
    extra: dict | None = None,
) -> None:
    entries: list[tuple[str, np.ndarray]] = list(params.items())
    entries = [(name, t.data) for name, t in entries]
    if optimizer is not None:
        for name in params.names():
            entries.append((f"adam.m.{name}", optimizer.m[name]))
        for name in params.names():
            entries.append((f"adam.v.{name}", optimizer.v[name]))

    chunks: list[bytes] = []
    manifest_tensors = []
    offset = 0
    for name, arr in entries:
        dtype = _dtype_name(arr)
        raw = np.ascontiguousarray(arr, dtype=_DTYPES[dtype]).tobytes()
        manifest_tensors.append(
            {
                "name": name,
                "dtype": dtype,
                "shape": list(arr.shape),
                "offset": offset,
                "byte_length": len(raw),
            }
        )
        chunks.append(raw)
        offset += len(raw)
    payload = b"".join(chunks)

    manifest = {
        "tensors": manifest_tensors,
        "config": asdict(config),
        "vocab_hash": vocab_hash,
        "step": int(step),
        "seed": int(seed),
        "adam_t": None if optimizer is None else int(optimizer.t),
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
        "extra": extra or {},
    }
    body = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")

    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<I", len(body)))
        fh.write(body)
        fh.write(payload)


def load_checkpoint(path, expected_vocab_hash: str | None = None) -> CheckpointData:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(MAGIC) + 8:
        raise IntegrityError(f"checkpoint truncated: {len(blob)} bytes")
    if blob[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"not a checkpoint file: bad magic {blob[:8]!r}")
    pos = len(MAGIC)
    (version,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    if version != FORMAT_VERSION:
        raise CompatibilityError(
            f"checkpoint format version {version}, this build reads {FORMAT_VERSION}"
        )
    (mlen,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    if pos + mlen > len(blob):
        raise IntegrityError("checkpoint truncated inside the manifest")
    try:
        manifest = json.loads(blob[pos : pos + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise IntegrityError(f"checkpoint manifest unreadable: {exc}") from exc
    pos += mlen
    payload = blob[pos:]

    digest = hashlib.sha256(payload).hexdigest()
    if digest != manifest.get("payload_sha256"):
        raise IntegrityError(
            f"payload digest mismatch: file says {manifest.get('payload_sha256')}, "
            f"content is {digest}"
        )

    arrays: dict[str, np.ndarray] = {}
    for entry in manifest["tensors"]:
        dtype = entry["dtype"]
        if dtype not in _DTYPES:
            raise CompatibilityError(f"tensor {entry['name']} has unknown dtype {dtype!r}")
        start, length = entry["offset"], entry["byte_length"]
        shape = tuple(entry["shape"])
        if start + length > len(payload):
            raise IntegrityError(f"tensor {entry['name']} extends past the payload")
        expected = int(np.prod(shape, dtype=np.int64)) * np.dtype(_DTYPES[dtype]).itemsize
        if expected != length:
            raise IntegrityError(
                f"tensor {entry['name']}: shape {shape} implies {expected} bytes, "
                f"manifest says {length}"
            )
        arrays[entry["name"]] = (
            np.frombuffer(payload[start : start + length], dtype=_DTYPES[dtype])
            .reshape(shape)
            .copy()
        )

    if expected_vocab_hash is not None and manifest["vocab_hash"] != expected_vocab_hash:
        raise CompatibilityError(
            f"checkpoint was built against vocabulary {manifest['vocab_hash']}, "
            f"current vocabulary is {expected_vocab_hash}"
        )

    config = ModelConfig(**manifest["config"])
    adam_t = manifest.get("adam_t")
    adam_m = adam_v = None
    if adam_t is not None:
        adam_m = {}
        adam_v = {}
        for name in list(arrays):
            if name.startswith("adam.m."):
                adam_m[name[len("adam.m.") :]] = arrays.pop(name)
            elif name.startswith("adam.v."):
                adam_v[name[len("adam.v.") :]] = arrays.pop(name)

    return CheckpointData(
        arrays=arrays,
        config=config,
        vocab_hash=manifest["vocab_hash"],
        step=int(manifest["step"]),
        seed=int(manifest["seed"]),
        adam_m=adam_m,
        adam_v=adam_v,
        adam_t=adam_t,
        extra=manifest.get("extra", {}),
    )
