"""Versioned text checkpoints that round-trip bit-exactly.

Layout: four header lines (version, stage, config_hash, seed), then one
record per tensor: ``name shape d0,d1 values v1 v2 ...`` with repr-formatted
floats (shortest decimal that reloads to the same double). Normalization
statistics ride along as ``stats.<domain>.mean`` / ``.std`` scalar records.
"""

from __future__ import annotations

import numpy as np

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


class Checkpoint:
    def __init__(self, stage, config_hash, seed, tensors, stats=None):
        self.stage = stage
        self.config_hash = config_hash
        self.seed = seed
        self.tensors = dict(tensors)  # name -> ndarray (float64)
        self.stats = dict(stats or {})  # domain -> (mean, std)

    def __eq__(self, other):
        return (
            isinstance(other, Checkpoint)
            and self.stage == other.stage
            and self.config_hash == other.config_hash
            and self.seed == other.seed
            and self.stats == other.stats
            and self.tensors.keys() == other.tensors.keys()
            and all(
                self.tensors[k].shape == other.tensors[k].shape
                and np.array_equal(self.tensors[k], other.tensors[k])
                for k in self.tensors
            )
        )


def _shape_token(shape):
    return ",".join(str(d) for d in shape) if shape else "-"


def _parse_shape(token):
    if token == "-":
        return ()
    return tuple(int(d) for d in token.split(","))


def save_checkpoint(ckpt, path):
    with open(path, "w") as fh:
        fh.write(f"version={FORMAT_VERSION}\n")
        fh.write(f"stage={ckpt.stage}\n")
        fh.write(f"config_hash={ckpt.config_hash}\n")
        fh.write(f"seed={ckpt.seed}\n")
        records = dict(ckpt.tensors)
        for domain, (mean, std) in sorted(ckpt.stats.items()):
            records[f"stats.{domain}.mean"] = np.asarray(mean)
            records[f"stats.{domain}.std"] = np.asarray(std)
        for name in sorted(records):
            arr = np.asarray(records[name], dtype=np.float64)
            vals = " ".join(repr(float(v)) for v in arr.reshape(-1))
            fh.write(f"{name} shape {_shape_token(arr.shape)} values {vals}\n")


def load_checkpoint(path, expect_config_hash=None):
    with open(path) as fh:
        lines = fh.read().splitlines()
    if len(lines) < 4:
        raise CheckpointError("truncated checkpoint: missing header")
    header = {}
    for line in lines[:4]:
        key, _, val = line.partition("=")
        header[key] = val
    if header.get("version") != str(FORMAT_VERSION):
        raise CheckpointError(
            f"unsupported checkpoint version {header.get('version')!r}")
    if expect_config_hash is not None and header["config_hash"] != expect_config_hash:
        raise CheckpointError(
            f"config hash mismatch: checkpoint {header['config_hash']} "
            f"vs current {expect_config_hash}")
    tensors, stats_raw = {}, {}
    for ln, line in enumerate(lines[4:], start=5):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) < 4 or parts[1] != "shape" or parts[3] != "values":
            raise CheckpointError(f"line {ln}: malformed tensor record")
        name = parts[0]
        try:
            shape = _parse_shape(parts[2])
        except ValueError as exc:
            raise CheckpointError(f"line {ln}: bad shape {parts[2]!r}") from exc
        vals = np.array([float(v) for v in parts[4:]], dtype=np.float64)
        expected = int(np.prod(shape)) if shape else 1
        if vals.size != expected:
            raise CheckpointError(
                f"line {ln}: {name} expects {expected} values, found {vals.size}")
        arr = vals.reshape(shape)
        if name.startswith("stats."):
            stats_raw[name] = float(arr)
        else:
            tensors[name] = arr
    stats = {}
    for name, val in stats_raw.items():
        parts = name.split(".")
        domain, kind = ".".join(parts[1:-1]), parts[-1]
        stats.setdefault(domain, [None, None])
        stats[domain][0 if kind == "mean" else 1] = val
    for domain, pair in stats.items():
        if pair[0] is None or pair[1] is None:
            raise CheckpointError(f"incomplete stats for domain {domain!r}")
    return Checkpoint(
        header["stage"],
        header["config_hash"],
        int(header["seed"]),
        tensors,
        {d: (m, s) for d, (m, s) in stats.items()},
    )
