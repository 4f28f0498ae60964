"""Binary checkpoint container: magic, JSON header (version, vocabulary,
hyperparameters, tensor directory), then little-endian float64 payloads.
Load followed by save reproduces the file byte for byte."""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .model import HyperParams, ModelParams
from .scenegraph import Vocabulary

MAGIC = b"G23DCK1"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _tensor_table(params):
    """Named map of every persisted array: generator and discriminator
    parameters plus batch-norm running buffers."""
    table = {}
    for name in params.gen.names():
        table[f"gen.{name}"] = params.gen[name].values
    for name in params.disc.names():
        table[f"disc.{name}"] = params.disc[name].values
    for name, state in params.bn_states.items():
        table[f"buffer.{name}.mean"] = state.running_mean
        table[f"buffer.{name}.var"] = state.running_var
    return table


def save_checkpoint(path, params, vocab):
    table = _tensor_table(params)
    directory = []
    offset = 0
    for name in sorted(table):
        arr = table[name]
        directory.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size * 8
    header = {
        "version": VERSION,
        "vocab": {"name": vocab.name, "objects": list(vocab.object_names),
                  "predicates": list(vocab.predicate_names)},
        "hyperparams": params.hp.to_dict(),
        "tensors": directory,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for entry in directory:
            fh.write(np.ascontiguousarray(table[entry["name"]], dtype="<f8").tobytes())
    return Path(path)


def read_header(data):
    if data[: len(MAGIC)] != MAGIC:
        raise CheckpointError("not a checkpoint: bad magic")
    if len(data) < len(MAGIC) + 8:
        raise CheckpointError("corrupt checkpoint: truncated header length")
    (header_len,) = struct.unpack_from("<Q", data, len(MAGIC))
    start = len(MAGIC) + 8
    if len(data) < start + header_len:
        raise CheckpointError("corrupt checkpoint: truncated header")
    try:
        header = json.loads(data[start:start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise CheckpointError(f"corrupt checkpoint header: {err}") from err
    if header.get("version") != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {header.get('version')!r}")
    return header, start + header_len


def load_checkpoint(path):
    """Rebuild (ModelParams, Vocabulary) from a checkpoint file."""
    data = Path(path).read_bytes()
    header, payload_start = read_header(data)
    vocab = Vocabulary(tuple(header["vocab"]["objects"]),
                       tuple(header["vocab"]["predicates"]),
                       name=header["vocab"].get("name", "default"))
    hp = HyperParams.from_dict(header["hyperparams"])
    params = ModelParams(hp, seed=0)
    table = _tensor_table(params)

    seen = set()
    for entry in header["tensors"]:
        name = entry["name"]
        if name not in table:
            raise CheckpointError(f"unknown tensor {name!r} in checkpoint")
        expected = table[name].shape
        stored = tuple(entry["shape"])
        if stored != tuple(expected):
            raise CheckpointError(
                f"tensor {name!r} shape {stored} does not match expected {tuple(expected)}")
        size = int(np.prod(stored)) if stored else 1
        start = payload_start + entry["offset"]
        end = start + size * 8
        if end > len(data):
            raise CheckpointError(f"corrupt checkpoint: payload for {name!r} is truncated")
        values = np.frombuffer(data, dtype="<f8", count=size, offset=start).reshape(stored)
        table[name][...] = values
        seen.add(name)
    missing = set(table) - seen
    if missing:
        raise CheckpointError(f"checkpoint is missing tensors: {sorted(missing)[:3]}")
    return params, vocab
