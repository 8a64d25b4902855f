"""Reading and writing vector files, tensors, indexes and TREC text files.

Byte layouts are documented in FORMATS.md.  All binary integers are
little-endian.  Every reader rejects NaN/Inf payloads.
"""

from __future__ import annotations

import os
import struct
import zlib
from pathlib import Path
from typing import Union

import numpy as np

from .errors import ChecksumError, FormatError, UnsupportedVersionError
from .index import LinkIndex
from .irmetrics import QrelSet, RunRanking
from .vecstore import VectorSet

__all__ = [
    "read_fvecs",
    "write_fvecs",
    "read_ivecs",
    "write_ivecs",
    "read_tensor",
    "write_tensor",
    "read_index",
    "write_index",
    "index_bytes",
    "index_from_bytes",
    "tensor_bytes",
    "tensor_from_bytes",
    "parse_qrels",
    "parse_run",
    "write_run",
    "TENSOR_MAGIC",
    "INDEX_MAGIC",
    "FORMAT_VERSION",
]

PathLike = Union[str, os.PathLike]

TENSOR_MAGIC = b"DLST"
INDEX_MAGIC = b"DLSI"
FORMAT_VERSION = 1
DTYPE_F32 = 0

# magic, version, N, dim, root, k_index, seed, distance_evals
_INDEX_HEADER = struct.Struct("<4sHQIQIQQ")
_LINK = np.dtype([("end", "<u8"), ("len", "<f4")])


def _atomic_write(path: PathLike, payload: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(payload)
    os.replace(tmp, path)


def _check_finite(a: np.ndarray, path) -> None:
    if a.dtype.kind == "f" and not np.all(np.isfinite(a)):
        bad = int(np.flatnonzero(~np.isfinite(a.reshape(-1)))[0])
        raise FormatError(f"non-finite value at flat offset {bad}", path)


# ------------------------------------------------------------ fvecs / ivecs


def _read_vecs(path: PathLike, dtype: str) -> np.ndarray:
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size == 0:
        return np.empty((0, 0), dtype=dtype)
    if raw.size < 4:
        raise FormatError("truncated row header", path)
    d = int(raw[:4].view("<i4")[0])
    if d <= 0:
        raise FormatError(f"row 0 has dimension {d}", path)
    row = 4 * (d + 1)
    if raw.size % row:
        raise FormatError(
            f"file size {raw.size} is not a multiple of the row size {row} (truncated row?)",
            path,
        )
    body = raw.view("<i4").reshape(-1, d + 1)
    dims = body[:, 0]
    if np.any(dims != d):
        r = int(np.flatnonzero(dims != d)[0])
        raise FormatError(f"row {r} has dimension {int(dims[r])}, expected {d}", path)
    out = np.ascontiguousarray(body[:, 1:]).view(dtype).astype(dtype.lstrip("<"))
    _check_finite(out, path)
    return out


def _write_vecs(path: PathLike, a: np.ndarray, dtype: str) -> None:
    a = np.asarray(a)
    if a.ndim != 2 or (a.shape[0] and a.shape[1] < 1):
        raise ValueError(f"expected a 2-D array with dim >= 1, got {a.shape}")
    n, d = a.shape
    body = np.empty((n, d + 1), dtype="<i4")
    body[:, 0] = d
    body[:, 1:] = np.ascontiguousarray(a, dtype=dtype).view("<i4")
    _atomic_write(path, body.tobytes())


def read_fvecs(path: PathLike) -> VectorSet:
    """Rows of ``<i32 dim><dim x f32>``; an empty file gives an empty set."""
    a = _read_vecs(path, "<f4")
    if a.size == 0 and a.shape[1] == 0:
        return VectorSet.empty(1)
    return VectorSet(a)


def write_fvecs(path: PathLike, vectors) -> None:
    data = vectors.data if isinstance(vectors, VectorSet) else np.asarray(vectors, np.float32)
    _write_vecs(path, data, "<f4")


def read_ivecs(path: PathLike) -> np.ndarray:
    return _read_vecs(path, "<i4").astype(np.int64)


def write_ivecs(path: PathLike, a) -> None:
    a = np.asarray(a)
    if a.size and (a.min() < np.iinfo(np.int32).min or a.max() > np.iinfo(np.int32).max):
        raise ValueError("ivecs values must fit in int32")
    _write_vecs(path, a, "<i4")


# ------------------------------------------------------------ flat tensors


def tensor_bytes(a) -> bytes:
    a = np.array(a, dtype="<f4", order="C")  # keeps rank 0, unlike ascontiguousarray
    if a.ndim > 255:
        raise ValueError("tensor rank must be < 256")
    if not np.all(np.isfinite(a)):
        raise ValueError("tensor contains NaN or Inf")
    head = TENSOR_MAGIC + struct.pack("<HB", FORMAT_VERSION, a.ndim)
    head += struct.pack(f"<{a.ndim}Q", *a.shape) + struct.pack("<B", DTYPE_F32)
    body = head + a.tobytes()
    return body + struct.pack("<I", zlib.crc32(body))


def tensor_from_bytes(buf: bytes, path=None) -> np.ndarray:
    if len(buf) < 4 or buf[:4] != TENSOR_MAGIC:
        raise FormatError("not a tensor file (bad magic)", path)
    if len(buf) < 11:
        raise FormatError("truncated header", path)
    version, rank = struct.unpack_from("<HB", buf, 4)
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"tensor format version {version} is not supported", path)
    pos = 7
    if len(buf) < pos + 8 * rank + 1 + 4:
        raise FormatError("truncated header", path)
    dims = struct.unpack_from(f"<{rank}Q", buf, pos)
    pos += 8 * rank
    (dtype,) = struct.unpack_from("<B", buf, pos)
    pos += 1
    if dtype != DTYPE_F32:
        raise FormatError(f"unknown dtype code {dtype}", path)
    count = 1
    for d in dims:
        count *= d
    need = pos + 4 * count + 4
    if len(buf) != need:
        raise FormatError(f"expected {need} bytes for shape {tuple(dims)}, got {len(buf)}", path)
    (crc,) = struct.unpack_from("<I", buf, need - 4)
    if zlib.crc32(buf[: need - 4]) != crc:
        raise ChecksumError("CRC32 mismatch", path)
    a = np.frombuffer(buf, dtype="<f4", count=count, offset=pos).reshape(dims)
    _check_finite(a, path)
    return a.astype(np.float32)


def write_tensor(path: PathLike, a) -> None:
    _atomic_write(path, tensor_bytes(a))


def read_tensor(path: PathLike) -> np.ndarray:
    return tensor_from_bytes(Path(path).read_bytes(), path)


# ------------------------------------------------------------ index files


def index_bytes(index: LinkIndex) -> bytes:
    head = _INDEX_HEADER.pack(
        INDEX_MAGIC, FORMAT_VERSION, index.count, index.dim, index.root,
        index.k_index, index.seed & ((1 << 64) - 1), index.distance_evals,
    )
    n = index.count
    deg = np.diff(index.offsets)
    # each node: u32 count followed by its (u64, f32) pairs, 12 bytes each
    rec = np.zeros(4 * n + 12 * index.num_links, dtype=np.uint8)
    starts = 4 * np.arange(n, dtype=np.int64) + 12 * index.offsets[:-1]
    cnt = deg.astype("<u4").view(np.uint8).reshape(n, 4)
    rec[starts[:, None] + np.arange(4)] = cnt
    pairs = np.empty(index.num_links, dtype=_LINK)
    pairs["end"] = index.endpoints
    pairs["len"] = index.lengths
    owner = np.repeat(np.arange(n, dtype=np.int64), deg)
    pos = 4 * (owner + 1) + 12 * np.arange(index.num_links, dtype=np.int64)
    rec[pos[:, None] + np.arange(12)] = pairs.view(np.uint8).reshape(-1, 12)
    body = head + rec.tobytes()
    return body + struct.pack("<I", zlib.crc32(body))


def index_from_bytes(buf: bytes, path=None) -> LinkIndex:
    if len(buf) < 4 or buf[:4] != INDEX_MAGIC:
        raise FormatError("not an index file (bad magic)", path)
    if len(buf) < _INDEX_HEADER.size + 4:
        raise FormatError("truncated header", path)
    _, version, n, dim, root, k_index, seed, evals = _INDEX_HEADER.unpack_from(buf)
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"index format version {version} is not supported", path)
    (crc,) = struct.unpack_from("<I", buf, len(buf) - 4)
    if zlib.crc32(buf[:-4]) != crc:
        raise ChecksumError("CRC32 mismatch", path)
    if dim < 1 or (n and root >= n) or k_index < 1:
        raise FormatError(f"bad header values N={n} dim={dim} root={root} k={k_index}", path)
    body = np.frombuffer(buf, dtype=np.uint8, offset=_INDEX_HEADER.size, count=len(buf) - _INDEX_HEADER.size - 4)
    # walk the count words; link records are fixed size so this is cheap
    degs = np.empty(n, dtype=np.int64)
    pos = 0
    starts = np.empty(n, dtype=np.int64)
    for v in range(n):
        if pos + 4 > body.size:
            raise FormatError(f"truncated at node {v}", path)
        c = int(body[pos : pos + 4].view("<u4")[0])
        starts[v] = pos + 4
        degs[v] = c
        pos += 4 + 12 * c
    if pos != body.size:
        raise FormatError(f"{body.size - pos} trailing bytes after the last node", path)
    total = int(degs.sum())
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(degs, out=offsets[1:])
    owner = np.repeat(np.arange(n, dtype=np.int64), degs)
    idx = starts[owner] + 12 * (np.arange(total, dtype=np.int64) - offsets[owner])
    raw = body[idx[:, None] + np.arange(12)].reshape(-1).view(_LINK)
    ends = raw["end"].astype(np.int64)
    lens = raw["len"].astype(np.float32)
    if total:
        if np.any(raw["end"] >= n) or np.any(ends == owner):
            raise FormatError("link endpoint out of range or self-link", path)
        if not np.all(np.isfinite(lens)) or np.any(lens < 0):
            raise FormatError("link length is negative or not finite", path)
        same = owner[1:] == owner[:-1]
        ordered = (lens[1:] > lens[:-1]) | ((lens[1:] == lens[:-1]) & (ends[1:] > ends[:-1]))
        if np.any(same & ~ordered):
            v = int(owner[1:][same & ~ordered][0])
            raise FormatError(f"links of node {v} are not sorted and unique", path)
    return LinkIndex(
        count=int(n), dim=int(dim), root=int(root), k_index=int(k_index),
        seed=int(seed), offsets=offsets, endpoints=ends, lengths=lens,
        distance_evals=int(evals),
    )


def write_index(index: LinkIndex, path: PathLike) -> None:
    _atomic_write(path, index_bytes(index))


def read_index(path: PathLike) -> LinkIndex:
    return index_from_bytes(Path(path).read_bytes(), path)


# ------------------------------------------------------------ TREC text


def parse_qrels(path: PathLike) -> QrelSet:
    """``qid iter docid judgment`` lines; judgment > 0 means relevant."""
    q = QrelSet()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 4:
                raise FormatError(f"expected 4 fields, got {len(parts)}", path, lineno)
            qid, _, doc, j = parts
            try:
                rel = int(j) > 0
            except ValueError:
                raise FormatError(f"judgment {j!r} is not an integer", path, lineno) from None
            try:
                q.add(qid, doc, rel)
            except ValueError as e:
                raise FormatError(str(e), path, lineno) from None
    return q


def parse_run(path: PathLike) -> RunRanking:
    """``qid Q0 docid rank score tag`` lines, ordered by score then rank."""
    rows: dict[str, list[tuple[float, int, str]]] = {}
    seen: set[tuple[str, str]] = set()
    tag = "run"
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 6:
                raise FormatError(f"expected 6 fields, got {len(parts)}", path, lineno)
            qid, _, doc, rank, score, tag = parts
            try:
                r = int(rank)
                s = float(score)
            except ValueError:
                raise FormatError("rank must be an integer and score a number", path, lineno) from None
            if not np.isfinite(s):
                raise FormatError("score is not finite", path, lineno)
            if (qid, doc) in seen:
                raise FormatError(f"document {doc} appears twice for query {qid}", path, lineno)
            seen.add((qid, doc))
            rows.setdefault(qid, []).append((s, r, doc))
    run = RunRanking(tag=tag)
    for qid, items in rows.items():
        items.sort(key=lambda t: (-t[0], t[1], t[2]))
        run.rankings[qid] = [t[2] for t in items]
        run.scores[qid] = [t[0] for t in items]
    return run


def write_run(ranking: RunRanking, path: PathLike) -> None:
    lines = []
    for qid in ranking.queries():
        docs = ranking.rankings[qid]
        scores = ranking.scores.get(qid) or [float(len(docs) - i) for i in range(len(docs))]
        if any(b > a for a, b in zip(scores, scores[1:])):
            raise ValueError(f"scores of query {qid} are not non-increasing")
        for i, (d, s) in enumerate(zip(docs, scores), start=1):
            lines.append(f"{qid} Q0 {d} {i} {s!r} {ranking.tag}\n")
    _atomic_write(path, "".join(lines).encode("utf-8"))
