"""Flat binary checkpoint container.

Layout (format version 1):

    PNCKPT1\\n                      magic line
    format_version=1\\n             text manifest, one key=value per line
    config_hash=<hex>\\n
    seed=<int>\\n
    params=<count>\\n
    <name> <d0,d1,...>\\n           one line per parameter, "-" for scalars
    ---\\n                          header terminator
    <raw little-endian float64>     data blocks in manifest order

Round-trips are bit-exact: values are written as raw '<f8' bytes.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError

MAGIC = b"PNCKPT1\n"
FORMAT_VERSION = 1
_SEP = b"---\n"


@dataclass
class CheckpointMeta:
    format_version: int
    config_hash: str
    seed: int


def save_checkpoint(path: str | Path, arrays: dict[str, np.ndarray],
                    config_hash: str = "", seed: int = 0) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = sorted(arrays)
    lines = [
        f"format_version={FORMAT_VERSION}",
        f"config_hash={config_hash}",
        f"seed={int(seed)}",
        f"params={len(names)}",
    ]
    for name in names:
        shape = arrays[name].shape
        dims = ",".join(str(d) for d in shape) if shape else "-"
        if " " in name or "\n" in name:
            raise ContractError(f"parameter name not serializable: {name!r}")
        lines.append(f"{name} {dims}")
    blob = b"".join(np.ascontiguousarray(arrays[n], dtype="<f8").tobytes() for n in names)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(("\n".join(lines) + "\n").encode())
        fh.write(_SEP)
        fh.write(blob)


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], CheckpointMeta]:
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise ContractError(f"not a checkpoint file: {path}")
    head_end = raw.find(_SEP, len(MAGIC))
    if head_end < 0:
        raise ContractError(f"corrupt checkpoint header: {path}")
    header = raw[len(MAGIC):head_end].decode().splitlines()
    if len(header) < 4:
        raise ContractError(f"corrupt checkpoint header: {path}")
    kv = {}
    for line in header[:4]:
        k, v = line.split("=", 1)
        kv[k] = v
    entries: list[tuple[str, tuple[int, ...]]] = []
    for line in header[4:]:
        name, dims = line.rsplit(" ", 1)
        shape = () if dims == "-" else tuple(int(d) for d in dims.split(","))
        entries.append((name, shape))
    version = int(kv.get("format_version", "0"))
    if version != FORMAT_VERSION:
        raise ContractError(f"unsupported checkpoint format version: {version}")
    if len(entries) != int(kv.get("params", "-1")):
        raise ContractError(f"checkpoint parameter count mismatch: {path}")
    meta = CheckpointMeta(version, kv.get("config_hash", ""), int(kv.get("seed", "0")))
    out: dict[str, np.ndarray] = {}
    offset = head_end + len(_SEP)
    for name, shape in entries:
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).reshape(shape)
        out[name] = arr.astype(np.float64, copy=True)
        offset += nbytes
    if offset != len(raw):
        raise ContractError(f"trailing bytes in checkpoint: {path}")
    return out, meta
