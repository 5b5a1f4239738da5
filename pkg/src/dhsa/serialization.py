"""Binary and text file formats.

Three little-endian binary containers share one layout: an 8-byte magic
string, a uint32 length-prefixed JSON header, then raw payload bytes.

* tensors  — magic ``DHSATEN1``, header {rows, cols, dtype:"f32"},
  payload row-major float32;
* masks    — magic ``DHSAMSK1``, header {length}, payload one bitset per
  row (ceil(L / 8) bytes, LSB-first within each byte);
* predictor checkpoints — magic ``DHSAPRD1``, header with model dims and
  the parameter name/shape manifest, payload the concatenated flat
  float32 parameters in manifest order.

All writers are deterministic (sorted JSON keys, no timestamps), so a
file written twice from the same data is byte-identical, and every
binary format round-trips bit-exactly.  Masks also have a JSON form
{"length", "rows"} for interchange, and label records are stored as
JSON lines.
"""

from __future__ import annotations

import json
import struct

import numpy as np

TENSOR_MAGIC = b"DHSATEN1"
MASK_MAGIC = b"DHSAMSK1"
PREDICTOR_MAGIC = b"DHSAPRD1"

__all__ = [
    "save_tensor", "load_tensor",
    "save_mask", "load_mask", "mask_to_json", "mask_from_json",
    "save_checkpoint", "load_checkpoint",
    "write_jsonl", "read_jsonl", "write_csv", "write_json",
]


def _write_header(fh, magic, header: dict):
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    fh.write(magic)
    fh.write(struct.pack("<I", len(blob)))
    fh.write(blob)


def _read_header(fh, magic, path):
    got = fh.read(len(magic))
    if got != magic:
        raise ValueError(f"{path}: bad magic {got!r}, expected {magic!r}")
    (n,) = struct.unpack("<I", fh.read(4))
    return json.loads(fh.read(n).decode("utf-8"))


def save_tensor(path, array):
    """Write a 2-D array as little-endian float32, row-major."""
    a = np.asarray(array)
    if a.ndim != 2:
        raise ValueError("tensor files hold 2-D arrays")
    a32 = np.ascontiguousarray(a, dtype="<f4")
    with open(path, "wb") as fh:
        _write_header(fh, TENSOR_MAGIC,
                      {"rows": a.shape[0], "cols": a.shape[1], "dtype": "f32"})
        fh.write(a32.tobytes())


def load_tensor(path) -> np.ndarray:
    """Read a tensor file; returns float64 (exact over float32 values)."""
    with open(path, "rb") as fh:
        header = _read_header(fh, TENSOR_MAGIC, path)
        if header.get("dtype") != "f32":
            raise ValueError(f"{path}: unsupported dtype {header.get('dtype')}")
        rows, cols = int(header["rows"]), int(header["cols"])
        data = np.frombuffer(fh.read(rows * cols * 4), dtype="<f4")
        if data.size != rows * cols:
            raise ValueError(f"{path}: truncated payload")
    return data.astype(np.float64).reshape(rows, cols)


def _mask_rows_to_bits(length, rows) -> bytes:
    nbytes = (length + 7) // 8
    out = bytearray()
    for idx in rows:
        bits = np.zeros(length, dtype=np.uint8)
        bits[np.asarray(idx, dtype=np.intp)] = 1
        out += np.packbits(bits, bitorder="little").tobytes()[:nbytes]
    return bytes(out)


def save_mask(path, mask):
    """Write a sparsity mask as per-row bitsets."""
    with open(path, "wb") as fh:
        _write_header(fh, MASK_MAGIC, {"length": mask.length})
        fh.write(_mask_rows_to_bits(mask.length, mask.rows))


def load_mask(path):
    """Read a bitset mask file; returns (length, list of row index arrays)."""
    with open(path, "rb") as fh:
        header = _read_header(fh, MASK_MAGIC, path)
        length = int(header["length"])
        nbytes = (length + 7) // 8
        rows = []
        for i in range(length):
            chunk = fh.read(nbytes)
            if len(chunk) != nbytes:
                raise ValueError(f"{path}: truncated at row {i}")
            bits = np.unpackbits(np.frombuffer(chunk, dtype=np.uint8),
                                 bitorder="little")[:length]
            rows.append(np.flatnonzero(bits).astype(np.intp))
    return length, rows


def mask_to_json(mask) -> str:
    """JSON text form of a mask: {"length": L, "rows": [[...], ...]}."""
    payload = {"length": mask.length,
               "rows": [np.asarray(r).tolist() for r in mask.rows]}
    return json.dumps(payload, sort_keys=True)


def mask_from_json(text):
    """Parse the JSON mask form; returns (length, list of row arrays)."""
    payload = json.loads(text)
    return (int(payload["length"]),
            [np.asarray(r, dtype=np.intp) for r in payload["rows"]])


def save_checkpoint(path, meta: dict, tensors):
    """Write predictor parameters.

    ``meta`` holds the model dims (dim, window, heads, hidden);
    ``tensors`` is an ordered (name, array) mapping whose order defines
    the payload layout and is recorded in the header manifest.
    """
    names = list(tensors)
    header = dict(meta)
    header["params"] = [[n, list(np.asarray(tensors[n]).shape)] for n in names]
    with open(path, "wb") as fh:
        _write_header(fh, PREDICTOR_MAGIC, header)
        for n in names:
            fh.write(np.ascontiguousarray(tensors[n], dtype="<f4").tobytes())


def load_checkpoint(path):
    """Read a predictor checkpoint; returns (meta, ordered name->array)."""
    with open(path, "rb") as fh:
        header = _read_header(fh, PREDICTOR_MAGIC, path)
        manifest = header.pop("params")
        tensors = {}
        for name, shape in manifest:
            count = int(np.prod(shape, dtype=np.int64)) if shape else 1
            data = np.frombuffer(fh.read(count * 4), dtype="<f4")
            if data.size != count:
                raise ValueError(f"{path}: truncated parameter {name}")
            tensors[name] = data.astype(np.float64).reshape(shape)
    return header, tensors


def write_jsonl(path, records):
    """Write records as sorted-key JSON, one per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True))
            fh.write("\n")


def read_jsonl(path):
    with open(path, "r", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def _fmt(value):
    if isinstance(value, float):
        return format(value, ".10g")
    return str(value)


def write_csv(path, header, rows):
    """Write a report table with deterministic float formatting."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_json(path, payload):
    """Write a summary object as stable, human-readable JSON."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")
