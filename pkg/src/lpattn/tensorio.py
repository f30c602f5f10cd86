"""Bit-exact on-disk tensor format plus deterministic tensor generation.

Layout (all integers little-endian):

    bytes 0..15   magic  b"LPATTN-TENSOR\\0\\0\\0"
    bytes 16..23  format version, uint64 (currently 1)
    next 8        rank, uint64
    rank * 8      dimension sizes, uint64 each
    rest          row-major float32 payload

A JSON sidecar (same stem, ``.meta.json``) records how the tensor was
produced: distribution, parameters, seed and the RNG.  Generation uses
numpy's Philox bit generator, a named counter-based RNG whose stream is
stable across platforms and numpy releases, so a seed fully determines
the file bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"LPATTN-TENSOR\x00\x00\x00"
VERSION = 1
GENERATOR_NAME = "numpy.random.Philox (philox4x64-10)"

DISTRIBUTIONS = ("gaussian", "uniform", "adversarial-max")


class TensorFormatError(ValueError):
    """The file is not a valid tensor container."""


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(Path(path).suffix + ".meta.json")


def write_tensor(path, array, meta: dict | None = None) -> None:
    """Write a tensor file and, when ``meta`` is given, its JSON sidecar."""
    arr = np.ascontiguousarray(np.asarray(array), dtype="<f4")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", VERSION))
        fh.write(struct.pack("<Q", arr.ndim))
        for size in arr.shape:
            fh.write(struct.pack("<Q", size))
        fh.write(arr.tobytes())
    if meta is not None:
        with open(sidecar_path(path), "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")


def read_tensor(path) -> np.ndarray:
    """Read a tensor file back as float32."""
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise TensorFormatError(f"{path}: bad magic {magic!r}")
        (version,) = struct.unpack("<Q", fh.read(8))
        if version != VERSION:
            raise TensorFormatError(f"{path}: unsupported version {version}")
        (rank,) = struct.unpack("<Q", fh.read(8))
        shape = struct.unpack(f"<{rank}Q", fh.read(8 * rank))
        count = int(np.prod(shape, dtype=np.int64)) if rank else 1
        payload = fh.read(4 * count)
        if len(payload) != 4 * count:
            raise TensorFormatError(f"{path}: truncated payload")
        if fh.read(1):
            raise TensorFormatError(f"{path}: trailing bytes")
    return np.frombuffer(payload, dtype="<f4").reshape(shape).astype(np.float32)


def generate(shape, distribution: str, seed: int, **params) -> tuple[np.ndarray, dict]:
    """Deterministically sample a tensor; returns (array, sidecar metadata).

    Distributions: ``gaussian`` (mu, sigma), ``uniform`` (low, high) and
    ``adversarial-max`` (magnitude: every entry equals that constant).
    """
    shape = tuple(int(s) for s in shape)
    if any(s < 1 for s in shape):
        raise ValueError(f"invalid shape {shape}")
    rng = np.random.Generator(np.random.Philox(seed))
    if distribution == "gaussian":
        mu = float(params.pop("mu", 0.0))
        sigma = float(params.pop("sigma", 1.0))
        arr = rng.normal(mu, sigma, size=shape)
        meta_params = {"mu": mu, "sigma": sigma}
    elif distribution == "uniform":
        low = float(params.pop("low", 0.0))
        high = float(params.pop("high", 1.0))
        arr = rng.uniform(low, high, size=shape)
        meta_params = {"low": low, "high": high}
    elif distribution == "adversarial-max":
        magnitude = float(params.pop("magnitude", 1.0))
        arr = np.full(shape, magnitude)
        meta_params = {"magnitude": magnitude}
    else:
        raise ValueError(f"unknown distribution {distribution!r}")
    if params:
        raise ValueError(f"unused parameters for {distribution}: {sorted(params)}")
    meta = {
        "distribution": distribution,
        "parameters": meta_params,
        "seed": int(seed),
        "generator": GENERATOR_NAME,
        "shape": list(shape),
        "dtype": "float32",
    }
    return arr.astype(np.float32), meta
