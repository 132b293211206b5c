"""Binary sequence store: versioned header, float32 values, float64 times, packed mask bits.

Layout (little-endian)::

    b"AISCGSQ\\0" | u32 version | u64 header length | JSON header
    | float32 values [N, T, d] | float64 times [N, T] | packbits(mask [N, T, d])

The header carries T, d, feature names, count and per-sequence metadata
(mmsi, start time, domain, split).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import CorruptCheckpointError, VersionMismatchError
from .ingest import AisSequence

MAGIC = b"AISCGSQ\x00"
STORE_VERSION = 1
_PREAMBLE = struct.Struct("<8sIQ")


@dataclass
class StoredSequences:
    values: np.ndarray  # N x T x d float32
    times: np.ndarray  # N x T float64
    mask: np.ndarray  # N x T x d bool
    feature_names: tuple
    mmsi: list
    start_time: list
    domain: list  # "source" | "target" | "" per sequence
    split: list  # "train" | "val" | "test" | "" per sequence
    extra: dict | None = None

    def __len__(self) -> int:
        return len(self.values)

    def select(self, domain: str | None = None, split: str | None = None) -> np.ndarray:
        keep = [i for i in range(len(self))
                if (domain is None or self.domain[i] == domain) and (split is None or self.split[i] == split)]
        return np.array(keep, dtype=np.int64)

    def sequences(self, idx=None) -> list[AisSequence]:
        idx = range(len(self)) if idx is None else idx
        return [AisSequence(int(self.mmsi[i]), float(self.start_time[i]), self.values[i].astype(np.float64),
                            self.feature_names, self.mask[i], self.times[i], split=self.split[i] or None)
                for i in idx]

    @classmethod
    def from_sequences(cls, seqs: list[AisSequence], domains: list[str], splits: list[str],
                       feature_names=None, extra: dict | None = None) -> "StoredSequences":
        if seqs:
            names = seqs[0].feature_names
            values = np.stack([s.values for s in seqs]).astype(np.float32)
            times = np.stack([s.times for s in seqs]).astype(np.float64)
            mask = np.stack([s.mask for s in seqs]).astype(bool)
        else:
            names = tuple(feature_names or ())
            values = np.zeros((0, 0, len(names)), np.float32)
            times = np.zeros((0, 0))
            mask = np.zeros((0, 0, len(names)), bool)
        return cls(values, times, mask, tuple(names), [int(s.mmsi) for s in seqs],
                   [float(s.start_time) for s in seqs], list(domains), list(splits), extra)


def write_store(path, store: StoredSequences) -> None:
    N = len(store)
    T = store.values.shape[1] if N else 0
    header = {
        "T": T,
        "d": len(store.feature_names),
        "count": N,
        "feature_names": list(store.feature_names),
        "mmsi": store.mmsi,
        "start_time": store.start_time,
        "domain": store.domain,
        "split": store.split,
        "extra": store.extra or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_PREAMBLE.pack(MAGIC, STORE_VERSION, len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(store.values, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(store.times, dtype="<f8").tobytes())
        fh.write(np.packbits(store.mask.astype(bool).ravel()).tobytes())


def read_store(path) -> StoredSequences:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _PREAMBLE.size:
        raise CorruptCheckpointError(f"{path}: too short for a sequence store")
    magic, version, hlen = _PREAMBLE.unpack_from(raw)
    if magic != MAGIC:
        raise CorruptCheckpointError(f"{path}: not a sequence store (bad magic)")
    if version != STORE_VERSION:
        raise VersionMismatchError(version, STORE_VERSION)
    off = _PREAMBLE.size
    try:
        h = json.loads(raw[off:off + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptCheckpointError(f"{path}: unreadable header ({exc})") from None
    off += hlen
    N, T, d = h["count"], h["T"], h["d"]
    n_vals, n_times = N * T * d, N * T
    n_mask = (n_vals + 7) // 8
    if len(raw) != off + 4 * n_vals + 8 * n_times + n_mask:
        raise CorruptCheckpointError(f"{path}: payload size does not match header")
    values = np.frombuffer(raw, "<f4", n_vals, off).reshape(N, T, d).astype(np.float32)
    off += 4 * n_vals
    times = np.frombuffer(raw, "<f8", n_times, off).reshape(N, T).astype(np.float64)
    off += 8 * n_times
    bits = np.unpackbits(np.frombuffer(raw, np.uint8, n_mask, off))[:n_vals]
    mask = bits.reshape(N, T, d).astype(bool)
    return StoredSequences(values, times, mask, tuple(h["feature_names"]), h["mmsi"], h["start_time"],
                           h["domain"], h["split"], h.get("extra") or {})
