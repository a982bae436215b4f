"""Training records ``(learning state, optimal compositions)`` and their file format.

File layout (little endian)::

    b"RAILMPCD" | u32 version | u32 header length | JSON header | column blocks

The header lists each column's name, dtype and shape in storage order,
followed by free-form metadata.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..errors import ModelFormatError, VersionMismatchError

MAGIC = b"RAILMPCD"
VERSION = 1
_COLUMNS = ("features", "labels", "episode", "step")


@dataclass(frozen=True)
class Dataset:
    """Rows share one feature dimension; labels are composition values.

    ``meta`` records how the features were built: ``x_dim``,
    ``n_platforms``, ``n_segments``, ``seg_len``, ``horizon``, ``origins``,
    ``ell_min`` and ``ell_max``.
    """

    features: np.ndarray
    labels: np.ndarray
    episode: np.ndarray
    step: np.ndarray
    meta: dict = field(default_factory=dict)
    train_idx: np.ndarray | None = None
    val_idx: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "features", np.asarray(self.features, dtype=np.float64).reshape(len(self.labels), -1))
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.int64).reshape(len(self.labels), -1))
        object.__setattr__(self, "episode", np.asarray(self.episode, dtype=np.int64))
        object.__setattr__(self, "step", np.asarray(self.step, dtype=np.int64))
        if self.train_idx is None:
            object.__setattr__(self, "train_idx", np.arange(len(self)))
            object.__setattr__(self, "val_idx", np.arange(0))

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    @property
    def nbytes(self) -> int:
        return int(sum(getattr(self, c).nbytes for c in _COLUMNS))

    @property
    def bytes_per_record(self) -> float:
        return self.nbytes / max(len(self), 1)

    def split(self, val_fraction: float, seed: int) -> "Dataset":
        """Assign a validation split by whole episodes."""
        eps = np.unique(self.episode)
        rng = np.random.default_rng(seed)
        n_val = int(round(val_fraction * len(eps))) if len(eps) > 1 else 0
        val_eps = set(rng.permutation(eps)[:n_val].tolist())
        is_val = np.array([e in val_eps for e in self.episode], dtype=bool)
        return replace(self, train_idx=np.flatnonzero(~is_val), val_idx=np.flatnonzero(is_val))

    def head(self, n: int) -> "Dataset":
        n = min(n, len(self))
        return Dataset(self.features[:n], self.labels[:n], self.episode[:n], self.step[:n], dict(self.meta))

    def checksum(self) -> str:
        import hashlib
        h = hashlib.sha256()
        for c in _COLUMNS:
            h.update(np.ascontiguousarray(getattr(self, c)).tobytes())
        return h.hexdigest()

    # io -----------------------------------------------------------------
    def save(self, path) -> None:
        cols = [(c, np.ascontiguousarray(getattr(self, c))) for c in _COLUMNS]
        cols += [("train_idx", np.asarray(self.train_idx, dtype=np.int64)),
                 ("val_idx", np.asarray(self.val_idx, dtype=np.int64))]
        header = {
            "columns": [{"name": n, "dtype": a.dtype.str, "shape": list(a.shape)} for n, a in cols],
            "meta": self.meta,
        }
        hb = json.dumps(header, sort_keys=True).encode()
        with open(path, "wb") as fh:
            fh.write(MAGIC + struct.pack("<II", VERSION, len(hb)) + hb)
            for _, a in cols:
                fh.write(a.astype(a.dtype.newbyteorder("<"), copy=False).tobytes())

    @classmethod
    def load(cls, path) -> "Dataset":
        raw = Path(path).read_bytes()
        if len(raw) < 16 or raw[:8] != MAGIC:
            raise ModelFormatError(f"{path}: not a dataset file")
        version, hlen = struct.unpack("<II", raw[8:16])
        if version != VERSION:
            raise VersionMismatchError(f"{path}: dataset version {version}, expected {VERSION}")
        try:
            header = json.loads(raw[16:16 + hlen])
        except ValueError as exc:
            raise ModelFormatError(f"{path}: corrupt header") from exc
        pos = 16 + hlen
        arrays = {}
        for col in header["columns"]:
            dt = np.dtype(col["dtype"])
            count = int(np.prod(col["shape"])) if col["shape"] else 1
            size = count * dt.itemsize
            if pos + size > len(raw):
                raise ModelFormatError(f"{path}: truncated column {col['name']}")
            arrays[col["name"]] = np.frombuffer(raw, dtype=dt, count=count, offset=pos).reshape(col["shape"]).copy()
            pos += size
        if pos != len(raw):
            raise ModelFormatError(f"{path}: {len(raw) - pos} trailing bytes")
        return cls(arrays["features"], arrays["labels"], arrays["episode"], arrays["step"],
                   header.get("meta", {}), arrays["train_idx"], arrays["val_idx"])


def concat(parts: list[Dataset]) -> Dataset:
    parts = [p for p in parts if len(p)]
    if not parts:
        raise ValueError("nothing to concatenate")
    return Dataset(
        np.concatenate([p.features for p in parts]), np.concatenate([p.labels for p in parts]),
        np.concatenate([p.episode for p in parts]), np.concatenate([p.step for p in parts]),
        dict(parts[0].meta))
