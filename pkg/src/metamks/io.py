"""Artifact containers and atomic file writes.

MKSD holds binary unit cells, MKSM holds named float64 arrays with a JSON
header, and labels/curves are plain CSV. Every writer goes through
:func:`atomic_write` (temporary file in the target directory, then rename).
"""

import csv
import hashlib
import io
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import FormatError, ImportValidationError

MKSD_MAGIC = b"MKSD"
MKSD_VERSION = 1
MKSD_HEADER = struct.Struct("<4sHIHH")
MKSM_MAGIC = "MKSM"

LABEL_FIELDS = ("index", "normalized_c11", "converged", "iterations", "residual")
CURVE_FIELDS = ("rep", "iter", "n_labeled", "pool_mae", "max_pool_std", "chosen_index", "stopped")


def atomic_write(path, data):
    """Write bytes (or text, encoded UTF-8) to ``path`` via temp file + rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


# -- MKSD --------------------------------------------------------------------


def encode_mksd(cells):
    arr = np.asarray(cells)
    if arr.ndim != 3:
        raise FormatError(f"cells must be a (count, height, width) stack, got shape {arr.shape}")
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise FormatError("cells must contain only 0 and 1")
    count, h, w = arr.shape
    if h > 0xFFFF or w > 0xFFFF or count > 0xFFFFFFFF:
        raise FormatError("dataset dimensions exceed the container limits")
    return MKSD_HEADER.pack(MKSD_MAGIC, MKSD_VERSION, count, h, w) + np.ascontiguousarray(arr, dtype=np.uint8).tobytes()


def decode_mksd(data):
    if len(data) < MKSD_HEADER.size:
        raise FormatError("file shorter than the MKSD header", offset=len(data))
    magic, version, count, h, w = MKSD_HEADER.unpack_from(data)
    if magic != MKSD_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MKSD_MAGIC!r}", offset=0)
    if version != MKSD_VERSION:
        raise FormatError(f"unsupported MKSD version {version}", offset=4)
    expected = MKSD_HEADER.size + count * h * w
    if len(data) != expected:
        raise FormatError(f"payload length mismatch: file has {len(data)} bytes, header implies {expected}", offset=min(len(data), expected))
    cells = np.frombuffer(data, dtype=np.uint8, offset=MKSD_HEADER.size).reshape(count, h, w)
    bad = np.flatnonzero(cells.reshape(-1) > 1)
    if bad.size:
        raise FormatError(f"non-binary byte value {cells.reshape(-1)[bad[0]]}", offset=MKSD_HEADER.size + int(bad[0]))
    return cells.copy()


def write_mksd(path, cells):
    return atomic_write(path, encode_mksd(cells))


def read_mksd(path):
    return decode_mksd(Path(path).read_bytes())


# -- MKSM --------------------------------------------------------------------


def encode_mksm(arrays, meta=None):
    """Pack named arrays (cast to little-endian float64) with optional JSON metadata."""
    entries, chunks, offset = [], [], 0
    for name in sorted(arrays):
        a = np.array(arrays[name], dtype="<f8", order="C")
        entries.append({"name": name, "shape": list(a.shape), "offset": offset})
        chunks.append(a.tobytes())
        offset += a.nbytes
    header = {"format": MKSM_MAGIC, "version": 1, "arrays": entries, "meta": meta or {}}
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return struct.pack("<I", len(blob)) + blob + b"".join(chunks)


def decode_mksm(data):
    if len(data) < 4:
        raise FormatError("file shorter than the MKSM length prefix", offset=len(data))
    (hlen,) = struct.unpack_from("<I", data)
    if 4 + hlen > len(data):
        raise FormatError(f"header length {hlen} runs past the end of the file", offset=0)
    try:
        header = json.loads(data[4 : 4 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        pos = getattr(exc, "pos", getattr(exc, "start", 0))
        raise FormatError(f"malformed JSON header: {exc}", offset=4 + pos) from None
    if header.get("format") != MKSM_MAGIC:
        raise FormatError("header does not declare the MKSM format", offset=4)
    payload = memoryview(data)[4 + hlen :]
    arrays = {}
    for entry in header.get("arrays", []):
        shape = tuple(entry["shape"])
        n = int(np.prod(shape, dtype=np.int64))
        start = int(entry["offset"])
        end = start + 8 * n
        if start < 0 or end > len(payload):
            raise FormatError(f"array {entry['name']!r} exceeds the payload", offset=4 + hlen + min(start, len(payload)))
        arrays[entry["name"]] = np.frombuffer(payload[start:end], dtype="<f8").reshape(shape).astype(np.float64)
    return arrays, header.get("meta", {})


def write_mksm(path, arrays, meta=None):
    return atomic_write(path, encode_mksm(arrays, meta))


def read_mksm(path):
    return decode_mksm(Path(path).read_bytes())


# -- CSV ---------------------------------------------------------------------


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def encode_csv(fields, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path, fields, rows):
    return atomic_write(path, encode_csv(fields, rows))


def read_csv(path, expected_fields=None):
    """Return ``(fields, rows)``; rows are lists of strings."""
    text = Path(path).read_text()
    reader = csv.reader(io.StringIO(text))
    try:
        fields = next(reader)
    except StopIteration:
        raise FormatError(f"{path}: empty CSV", offset=0) from None
    if expected_fields is not None and tuple(fields) != tuple(expected_fields):
        raise FormatError(f"{path}: header {fields} != expected {list(expected_fields)}", offset=0)
    rows = list(reader)
    for i, r in enumerate(rows):
        if len(r) != len(fields):
            raise FormatError(f"{path}: row {i + 1} has {len(r)} fields, expected {len(fields)}")
    return fields, rows


def write_labels(path, result):
    rows = [
        (i, result.labels[i], result.converged[i], result.iterations[i], result.residuals[i])
        for i in range(len(result.labels))
    ]
    return write_csv(path, LABEL_FIELDS, rows)


def read_labels(path):
    """Labels CSV -> dict of arrays keyed by column name."""
    _, rows = read_csv(path, LABEL_FIELDS)
    try:
        return {
            "index": np.array([int(r[0]) for r in rows], dtype=np.int64),
            "normalized_c11": np.array([float(r[1]) for r in rows]),
            "converged": np.array([r[2] in ("1", "True", "true") for r in rows]),
            "iterations": np.array([int(r[3]) for r in rows], dtype=np.int64),
            "residual": np.array([float(r[4]) for r in rows]),
        }
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None


def write_index_list(path, indices, name="index"):
    return write_csv(path, (name,), [(int(i),) for i in indices])


def read_index_list(path):
    _, rows = read_csv(path)
    return np.array([int(r[0]) for r in rows], dtype=np.int64)


# -- import validation -------------------------------------------------------


def validate_cells(arr, shape=(96, 96)):
    """Check a (N, h, w) stack for shape and binarity; list the first 10 bad records."""
    arr = np.asarray(arr)
    if arr.ndim != 3 or (shape is not None and arr.shape[1:] != tuple(shape)):
        raise ImportValidationError(f"expected cells of shape (N, {shape[0]}, {shape[1]}), got {arr.shape}")
    flat = arr.reshape(arr.shape[0], -1)
    bad = np.flatnonzero(~np.isin(flat, (0, 1)).all(axis=1))
    if bad.size:
        raise ImportValidationError("cells contain values other than 0 and 1", offending=[int(i) for i in bad])
    return arr.astype(np.uint8)


def validate_labels(values, low=0.0, high=None):
    v = np.asarray(values, dtype=np.float64)
    bad = ~np.isfinite(v) | (v < low)
    if high is not None:
        bad |= v > high
    idx = np.flatnonzero(bad)
    if idx.size:
        raise ImportValidationError("labels outside the admissible range", offending=[int(i) for i in idx])
    return v
