"""Binary checkpoint format with bit-exact round trips.

Layout: magic ``CNCK``, u32 version, u32 config length + canonical JSON
config blob (model config, optimizer hyperparameters and step counter,
training step, rng state), then one record per tensor: u32 name length,
UTF-8 name, u32 rank, u32 dims, u8 dtype tag (0 = float32), raw
little-endian values. Parameters appear in registry order, each followed by
its Adam moments under ``opt.m.<name>`` and ``opt.v.<name>``.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .model import CrossModalModel, ModelConfig
from .trainer import Adam

MAGIC = b"CNCK"
VERSION = 1
DTYPE_F32 = 0


class CheckpointError(ValueError):
    pass


def _canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _write_tensor(f, name, array):
    arr = np.ascontiguousarray(array, dtype="<f4")
    name_b = name.encode("utf-8")
    f.write(struct.pack("<I", len(name_b)))
    f.write(name_b)
    f.write(struct.pack("<I", arr.ndim))
    f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    f.write(struct.pack("<B", DTYPE_F32))
    f.write(arr.tobytes())


def save(model, optimizer, path, step=0, rng_state=None):
    config = {
        "model": model.config.to_dict(),
        "optimizer": {
            "t": optimizer.t,
            "learning_rate": optimizer.learning_rate,
            "beta1": optimizer.beta1,
            "beta2": optimizer.beta2,
            "eps": optimizer.eps,
        },
        "step": int(step),
        "rng_state": rng_state,
    }
    blob = _canonical_json(config)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for name, p in model.registry.items():
            _write_tensor(f, name, p.data)
            _write_tensor(f, f"opt.m.{name}", optimizer.m[name])
            _write_tensor(f, f"opt.v.{name}", optimizer.v[name])


class _Reader:
    def __init__(self, f):
        self.f = f

    def read(self, n, what):
        b = self.f.read(n)
        if len(b) != n:
            raise CheckpointError(f"truncated checkpoint while reading {what}")
        return b

    def u32(self, what):
        return struct.unpack("<I", self.read(4, what))[0]

    def u8(self, what):
        return struct.unpack("<B", self.read(1, what))[0]


def _read_all_tensors(reader):
    tensors = {}
    while True:
        head = reader.f.read(4)
        if not head:
            return tensors
        if len(head) != 4:
            raise CheckpointError("truncated checkpoint while reading a record header")
        (name_len,) = struct.unpack("<I", head)
        name = reader.read(name_len, "tensor name").decode("utf-8")
        rank = reader.u32(f"rank of {name}")
        dims = struct.unpack(f"<{rank}I", reader.read(4 * rank, f"dims of {name}"))
        tag = reader.u8(f"dtype of {name}")
        if tag != DTYPE_F32:
            raise CheckpointError(f"unsupported dtype tag {tag} for {name}")
        count = 1
        for d in dims:
            count *= d
        raw = reader.read(4 * count, f"data of {name}")
        tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(dims).copy()


def load(path, expected_model_config=None):
    """Rebuild (model, optimizer, step, rng_state) from a checkpoint.

    The file is parsed fully before any model state is touched; on any
    format error nothing is returned.
    """
    with open(path, "rb") as f:
        reader = _Reader(f)
        magic = reader.read(4, "magic")
        if magic != MAGIC:
            raise CheckpointError(f"bad checkpoint magic {magic!r}")
        version = reader.u32("version")
        if version > VERSION:
            raise CheckpointError(f"checkpoint version {version} is newer than supported {VERSION}")
        blob_len = reader.u32("config length")
        try:
            config = json.loads(reader.read(blob_len, "config blob").decode("utf-8"))
        except json.JSONDecodeError as e:
            raise CheckpointError(f"invalid checkpoint config JSON: {e}") from None
        tensors = _read_all_tensors(reader)

    model_config = ModelConfig.from_dict(config["model"])
    if expected_model_config is not None:
        if model_config.skip_mode != expected_model_config.skip_mode:
            raise CheckpointError(
                f"checkpoint skip_mode {model_config.skip_mode!r} does not match "
                f"the requested {expected_model_config.skip_mode!r}"
            )
        if model_config.to_dict() != expected_model_config.to_dict():
            raise CheckpointError("checkpoint model config does not match the requested config")

    model = CrossModalModel(model_config)
    opt_cfg = config["optimizer"]
    optimizer = Adam(
        model.registry,
        learning_rate=opt_cfg["learning_rate"],
        beta1=opt_cfg["beta1"],
        beta2=opt_cfg["beta2"],
        eps=opt_cfg["eps"],
    )
    optimizer.t = int(opt_cfg["t"])

    expected = set(model.registry.names())
    seen = set()
    for name, arr in tensors.items():
        if name.startswith("opt.m.") or name.startswith("opt.v."):
            base = name[6:]
            if base not in expected:
                raise CheckpointError(f"checkpoint optimizer entry {name!r} has no matching parameter")
            target = optimizer.m if name.startswith("opt.m.") else optimizer.v
            if target[base].shape != arr.shape:
                raise CheckpointError(
                    f"dimension mismatch for {name!r}: checkpoint {arr.shape} vs model {target[base].shape}"
                )
            target[base] = arr
            continue
        if name not in expected:
            raise CheckpointError(f"checkpoint parameter {name!r} is absent from the model registry")
        p = model.registry[name]
        if p.data.shape != arr.shape:
            raise CheckpointError(
                f"dimension mismatch for {name!r}: checkpoint {arr.shape} vs model {p.data.shape}"
            )
        p.data = arr
        seen.add(name)
    missing = expected - seen
    if missing:
        raise CheckpointError(f"checkpoint is missing parameters: {sorted(missing)[:3]} ...")

    return model, optimizer, int(config.get("step", 0)), config.get("rng_state")
