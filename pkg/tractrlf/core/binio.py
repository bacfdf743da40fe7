"""Little-endian header helpers shared by the TRLF-* binary formats."""

import struct
from typing import BinaryIO

from tractrlf.core.errors import FormatError

MAGIC_LEN = 8


def write_magic(fh: BinaryIO, magic: bytes) -> None:
    assert len(magic) == MAGIC_LEN
    fh.write(magic)


def read_magic(fh: BinaryIO, expected: bytes) -> None:
    magic = fh.read(MAGIC_LEN)
    if magic != expected:
        raise FormatError(f"bad magic {magic!r}, expected {expected!r}")


def pack(fh: BinaryIO, fmt: str, *values) -> None:
    fh.write(struct.pack("<" + fmt, *values))


def unpack(fh: BinaryIO, fmt: str) -> tuple:
    size = struct.calcsize("<" + fmt)
    raw = fh.read(size)
    if len(raw) != size:
        raise FormatError("unexpected end of file")
    return struct.unpack("<" + fmt, raw)


def read_exact(fh: BinaryIO, n_bytes: int) -> bytes:
    raw = fh.read(n_bytes)
    if len(raw) != n_bytes:
        raise FormatError("unexpected end of file")
    return raw
