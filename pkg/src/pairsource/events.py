"""TDC-style event streams and their on-disk formats.

A stream holds one row per pulse slot in which any recorded detector fired.
The CSV layout is::

    # key=value            (zero or more metadata lines)
    pulse_index,H,A,B,offset_n
    17,1,0,0,0

with LF line endings and 0/1 flags. The binary layout is a little-endian
uint64 record count followed by packed ``int64, u8, u8, u8, int32`` records.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .errors import StreamFormatError

CSV_HEADER = "pulse_index,H,A,B,offset_n"
RECORD_DTYPE = np.dtype(
    [("pulse_index", "<i8"), ("H", "u1"), ("A", "u1"), ("B", "u1"), ("offset_n", "<i4")]
)
assert RECORD_DTYPE.itemsize == 15


@dataclass(frozen=True)
class EventRecord:
    pulse_index: int
    clicked_H: bool
    clicked_A: bool
    clicked_B: bool
    herald_offset_n: int = 0


@dataclass
class EventStream:
    pulse_index: np.ndarray
    H: np.ndarray
    A: np.ndarray
    B: np.ndarray
    offset_n: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.pulse_index = np.asarray(self.pulse_index, dtype=np.int64)
        self.H = np.asarray(self.H, dtype=bool)
        self.A = np.asarray(self.A, dtype=bool)
        self.B = np.asarray(self.B, dtype=bool)
        self.offset_n = np.asarray(self.offset_n, dtype=np.int32)
        n = len(self.pulse_index)
        if not all(len(x) == n for x in (self.H, self.A, self.B, self.offset_n)):
            raise StreamFormatError("stream columns differ in length")
        if n and np.any(np.diff(self.pulse_index) <= 0):
            raise StreamFormatError("pulse_index must be strictly increasing")

    def __len__(self):
        return len(self.pulse_index)

    def __iter__(self):
        for row in zip(self.pulse_index.tolist(), self.H.tolist(), self.A.tolist(), self.B.tolist(), self.offset_n.tolist()):
            yield EventRecord(*row)

    @classmethod
    def empty(cls, metadata=None):
        z = np.zeros(0)
        return cls(z, z, z, z, z, dict(metadata or {}))

    @classmethod
    def from_records(cls, records, metadata=None):
        records = list(records)
        cols = list(zip(*[(r.pulse_index, r.clicked_H, r.clicked_A, r.clicked_B, r.herald_offset_n) for r in records])) or [[]] * 5
        return cls(*cols, metadata=dict(metadata or {}))

    def to_array(self):
        out = np.empty(len(self), dtype=RECORD_DTYPE)
        out["pulse_index"] = self.pulse_index
        out["H"] = self.H
        out["A"] = self.A
        out["B"] = self.B
        out["offset_n"] = self.offset_n
        return out


def _format_meta_value(v):
    if isinstance(v, (list, tuple)):
        return ",".join(str(x) for x in v)
    return str(v)


def write_csv(stream: EventStream, path):
    buf = io.StringIO()
    for key in sorted(stream.metadata):
        buf.write(f"# {key}={_format_meta_value(stream.metadata[key])}\n")
    buf.write(CSV_HEADER + "\n")
    if len(stream):
        rows = np.column_stack(
            [stream.pulse_index, stream.H.astype(np.int64), stream.A.astype(np.int64), stream.B.astype(np.int64), stream.offset_n.astype(np.int64)]
        )
        np.savetxt(buf, rows, fmt="%d", delimiter=",", newline="\n")
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(buf.getvalue())


def read_csv(path) -> EventStream:
    metadata = {}
    header_seen = False
    cols = ([], [], [], [], [])
    with open(path, encoding="ascii", newline="") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if line.endswith("\r"):
                raise StreamFormatError("CRLF line ending", lineno)
            if not header_seen:
                if line.startswith("#"):
                    key, sep, value = line[1:].strip().partition("=")
                    if not sep:
                        raise StreamFormatError("metadata line without '='", lineno)
                    metadata[key.strip()] = value.strip()
                    continue
                if line != CSV_HEADER:
                    raise StreamFormatError(f"expected header {CSV_HEADER!r}", lineno)
                header_seen = True
                continue
            if not line:
                raise StreamFormatError("empty row", lineno)
            parts = line.split(",")
            if len(parts) != 5:
                raise StreamFormatError(f"expected 5 fields, got {len(parts)}", lineno)
            try:
                values = [int(p) for p in parts]
            except ValueError:
                raise StreamFormatError("non-integer field", lineno) from None
            if any(v not in (0, 1) for v in values[1:4]):
                raise StreamFormatError("flags must be 0 or 1", lineno)
            if cols[0] and values[0] <= cols[0][-1]:
                raise StreamFormatError("pulse_index not strictly increasing", lineno)
            for c, v in zip(cols, values):
                c.append(v)
    if not header_seen:
        raise StreamFormatError("missing header")
    return EventStream(*cols, metadata=metadata)


def write_binary(stream: EventStream, path):
    with open(path, "wb") as fh:
        fh.write(np.uint64(len(stream)).astype("<u8").tobytes())
        fh.write(stream.to_array().tobytes())


def read_binary(path, metadata=None) -> EventStream:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 8:
        raise StreamFormatError("binary stream shorter than its length prefix")
    n = int(np.frombuffer(data[:8], dtype="<u8")[0])
    body = data[8:]
    if len(body) != n * RECORD_DTYPE.itemsize:
        raise StreamFormatError(f"length prefix says {n} records, body holds {len(body) / RECORD_DTYPE.itemsize:g}")
    arr = np.frombuffer(body, dtype=RECORD_DTYPE)
    if np.any(arr["H"] > 1) or np.any(arr["A"] > 1) or np.any(arr["B"] > 1):
        raise StreamFormatError("flags must be 0 or 1")
    return EventStream(arr["pulse_index"], arr["H"], arr["A"], arr["B"], arr["offset_n"], dict(metadata or {}))


def read_stream(path) -> EventStream:
    path = str(path)
    if path.endswith((".bin", ".evb")):
        return read_binary(path)
    return read_csv(path)
