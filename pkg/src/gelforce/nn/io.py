"""Versioned binary weights format and training-history CSV.

Layout (little-endian): magic ``GFNW``, u32 version, u32 layer count, then a
JSON metadata block describing the branch/tap/head structure, then one entry
per layer: kind tag, per-parameter shapes and float64 parameter blocks.
"""

from __future__ import annotations

import io
import json
import struct

import numpy as np

from .layers import LAYER_KINDS, Layer
from .network import Branch, Network

MAGIC = b"GFNW"
VERSION = 1


class WeightsFormatError(ValueError):
    pass


def _iter_layers(net: Network):
    for br in net.branches:
        yield from br.layers
    yield from net.head


def _write_layer(buf, lyr: Layer):
    kind = lyr.kind.encode()
    buf.write(struct.pack("<H", len(kind)))
    buf.write(kind)
    buf.write(struct.pack("<H", len(lyr.params)))
    for p in lyr.params:
        p64 = np.ascontiguousarray(p, dtype="<f8")
        buf.write(struct.pack("<B", p64.ndim))
        for d in p64.shape:
            buf.write(struct.pack("<I", d))
        buf.write(p64.tobytes())


def _read_layer(buf, dtype):
    (klen,) = struct.unpack("<H", buf.read(2))
    kind = buf.read(klen).decode()
    (nparams,) = struct.unpack("<H", buf.read(2))
    params = []
    for _ in range(nparams):
        (ndim,) = struct.unpack("<B", buf.read(1))
        shape = tuple(struct.unpack("<I", buf.read(4))[0] for _ in range(ndim))
        count = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(buf.read(8 * count), dtype="<f8").reshape(shape)
        params.append(data.astype(dtype))
    return kind, params


def save_weights(net: Network, path) -> None:
    """Write the network to a path or binary file object."""
    layers = list(_iter_layers(net))
    dtype = "float64"
    for lyr in layers:
        if lyr.params:
            dtype = str(lyr.params[0].dtype)
            break
    meta = {
        "dtype": dtype,
        "branches": [
            {"taps": list(br.taps),
             "layers": [{"kind": l.kind, "config": l.config()} for l in br.layers]}
            for br in net.branches
        ],
        "head": [{"kind": l.kind, "config": l.config()} for l in net.head],
    }
    mbytes = json.dumps(meta).encode()

    def _emit(f):
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        f.write(struct.pack("<I", len(layers)))
        f.write(struct.pack("<I", len(mbytes)))
        f.write(mbytes)
        for lyr in layers:
            _write_layer(f, lyr)

    if hasattr(path, "write"):
        _emit(path)
    else:
        with open(path, "wb") as f:
            _emit(f)


def _build_layer(kind: str, config: dict, dtype) -> Layer:
    if kind not in LAYER_KINDS:
        raise WeightsFormatError(f"unknown layer kind {kind!r}")
    cls = LAYER_KINDS[kind]
    if kind in ("dense", "conv2d", "resblock"):
        return cls(**config, rng=np.random.default_rng(0), dtype=dtype)
    return cls(**config)


def load_weights(path) -> Network:
    """Read a network from a path or binary file object."""
    if hasattr(path, "read"):
        buf = path
    else:
        with open(path, "rb") as f:
            buf = io.BytesIO(f.read())
    if buf.read(4) != MAGIC:
        raise WeightsFormatError(f"{path}: not a weights file (bad magic)")
    (version,) = struct.unpack("<I", buf.read(4))
    if version != VERSION:
        raise WeightsFormatError(f"{path}: unsupported version {version}")
    (n_layers,) = struct.unpack("<I", buf.read(4))
    (mlen,) = struct.unpack("<I", buf.read(4))
    meta = json.loads(buf.read(mlen).decode())
    dtype = np.dtype(meta["dtype"])

    branches = []
    for bmeta in meta["branches"]:
        layers = [_build_layer(l["kind"], l["config"], dtype) for l in bmeta["layers"]]
        branches.append(Branch(layers, tuple(bmeta["taps"])))
    head = [_build_layer(l["kind"], l["config"], dtype) for l in meta["head"]]
    net = Network(branches, head)

    stored = []
    for _ in range(n_layers):
        kind, params = _read_layer(buf, dtype)
        stored.append((kind, params))
    own = list(_iter_layers(net))
    if len(own) != len(stored):
        raise WeightsFormatError(f"{path}: layer count mismatch")
    for lyr, (kind, params) in zip(own, stored):
        if lyr.kind != kind:
            raise WeightsFormatError(f"{path}: layer kind mismatch {lyr.kind} vs {kind}")
        if len(lyr.params) != len(params):
            raise WeightsFormatError(f"{path}: parameter count mismatch in {kind}")
        for dst, src in zip(lyr.params, params):
            if dst.shape != src.shape:
                raise WeightsFormatError(f"{path}: shape mismatch in {kind}")
            dst[...] = src
    return net


def write_history(path, history: list[dict]) -> None:
    """CSV of per-epoch losses: epoch,train_loss,val_loss (full precision)."""
    with open(path, "w") as f:
        f.write("epoch,train_loss,val_loss\n")
        for row in history:
            f.write(f"{row['epoch']},{row['train_loss']!r},{row['val_loss']!r}\n")
