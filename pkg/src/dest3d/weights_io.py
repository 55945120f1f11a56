"""Weight serialization: one flat little-endian binary blob plus a JSON
manifest mapping each array name to its shape, dtype, and byte offset.

flatten_weights/unflatten_weights walk the weight dataclasses generically
(nested dataclasses join names with '.', list items with their index), so
the container stays schema-free: loading fills a freshly initialized weight
bundle of the same configuration in place.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np

from .sceneio import atomic_write_bytes

__all__ = [
    "flatten_weights",
    "unflatten_weights",
    "save_weights",
    "load_weights",
    "manifest_path",
]

def _walk(obj, prefix: str, out: dict[str, np.ndarray]) -> None:
    if dataclasses.is_dataclass(obj):
        for f in dataclasses.fields(obj):
            value = getattr(obj, f.name)
            name = f"{prefix}.{f.name}" if prefix else f.name
            if value is None or isinstance(value, (int, bool, str)):
                continue  # structural config, not a weight
            if isinstance(value, float):
                out[name] = np.asarray(value)  # learnable scalar, stored 0-d
            else:
                _walk(value, name, out)
    elif isinstance(obj, list):
        for i, item in enumerate(obj):
            _walk(item, f"{prefix}.{i}", out)
    elif isinstance(obj, np.ndarray):
        out[prefix] = obj
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__} at {prefix!r}")


def flatten_weights(weights) -> dict[str, np.ndarray]:
    """Name -> array view of every tensor reachable from a weight bundle."""
    out: dict[str, np.ndarray] = {}
    _walk(weights, "", out)
    return out


def unflatten_weights(weights, arrays: dict[str, np.ndarray]) -> None:
    """Fill an initialized weight bundle in place from a flat name map."""
    template = flatten_weights(weights)
    missing = sorted(set(template) - set(arrays))
    extra = sorted(set(arrays) - set(template))
    if missing or extra:
        raise ValueError(f"weight name mismatch: missing={missing[:4]} extra={extra[:4]}")

    def assign(obj, parts: list[str], value: np.ndarray):
        head = parts[0]
        if isinstance(obj, list):
            target = obj[int(head)]
        else:
            target = getattr(obj, head)
        if len(parts) == 1:
            if isinstance(target, float):
                setattr(obj, head, float(value))
            elif isinstance(obj, list):
                obj[int(head)] = value.reshape(target.shape)
            else:
                if target.shape != value.shape:
                    raise ValueError(
                        f"shape mismatch at {head}: {target.shape} vs {value.shape}")
                setattr(obj, head, value.astype(target.dtype))
            return
        assign(target, parts[1:], value)

    for name, value in arrays.items():
        assign(weights, name.split("."), np.asarray(value))


def manifest_path(bin_path: str | Path) -> Path:
    return Path(bin_path).with_suffix(".manifest.json")


def save_weights(bin_path: str | Path, arrays: dict[str, np.ndarray]) -> None:
    """Write the arrays back-to-back (little-endian) plus the manifest."""
    entries = {}
    blobs = []
    offset = 0
    for name in sorted(arrays):
        arr = np.asarray(arrays[name])
        le = arr.astype(arr.dtype.newbyteorder("<")) if arr.dtype.byteorder == ">" else arr
        payload = np.ascontiguousarray(le).tobytes()
        entries[name] = {
            "shape": list(arr.shape),
            "dtype": str(arr.dtype),
            "offset": offset,
            "nbytes": len(payload),
        }
        blobs.append(payload)
        offset += len(payload)
    atomic_write_bytes(bin_path, b"".join(blobs))
    atomic_write_bytes(manifest_path(bin_path),
                       (json.dumps(entries, indent=1, sort_keys=True) + "\n").encode())


def load_weights(bin_path: str | Path) -> dict[str, np.ndarray]:
    raw = Path(bin_path).read_bytes()
    manifest = json.loads(manifest_path(bin_path).read_text())
    out = {}
    for name, meta in manifest.items():
        dtype = np.dtype(meta["dtype"]).newbyteorder("<")
        count = int(np.prod(meta["shape"])) if meta["shape"] else 1
        arr = np.frombuffer(raw, dtype=dtype, count=count, offset=meta["offset"])
        out[name] = arr.reshape(meta["shape"]).astype(np.dtype(meta["dtype"]))
    return out
