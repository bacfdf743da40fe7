"""
TRLF-CKP parameter checkpoints: magic, u32 version, u32 segment count, then per
segment u16 name length, utf-8 name, u8 trainable flag, u32 ndim, ndim x u32
shape, f64 data (little-endian). Round trips are bit-exact.
"""

from pathlib import Path

import numpy as np

from tractrlf.core.binio import pack, read_exact, read_magic, unpack, write_magic
from tractrlf.core.errors import FormatError
from tractrlf.diffcore.params import ModelParams

MAGIC = b"TRLF-CKP"
VERSION = 1


def save_checkpoint(path: Path, params: ModelParams) -> None:
    with open(path, "wb") as fh:
        write_magic(fh, MAGIC)
        pack(fh, "II", VERSION, len(params))
        for name, t in params.items():
            raw_name = name.encode("utf-8")
            pack(fh, "H", len(raw_name))
            fh.write(raw_name)
            pack(fh, "BI", int(t.requires_grad), t.data.ndim)
            if t.data.ndim:
                pack(fh, f"{t.data.ndim}I", *t.data.shape)
            fh.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())


def load_checkpoint(path: Path) -> ModelParams:
    params = ModelParams()
    with open(path, "rb") as fh:
        read_magic(fh, MAGIC)
        version, count = unpack(fh, "II")
        if version != VERSION:
            raise FormatError(f"unsupported checkpoint version {version}")
        for _ in range(count):
            (name_len,) = unpack(fh, "H")
            name = read_exact(fh, name_len).decode("utf-8")
            trainable, ndim = unpack(fh, "BI")
            shape = unpack(fh, f"{ndim}I") if ndim else ()
            n = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(read_exact(fh, 8 * n), dtype="<f8").reshape(shape)
            params.add(name, data.astype(np.float64), trainable=bool(trainable))
    return params
