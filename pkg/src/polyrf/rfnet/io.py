"""Weight file: ``u32 header length | JSON header | little-endian arrays``.

Arrays follow in declaration order (conv filters, conv bias, ..., dense
weights row-major, dense bias). The header carries the architecture, the
storage format (``"float32"`` or ``"fixed(32,10)"``) and the array shapes.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import ParameterError
from .arch import FloatParams, RfnetArch, RfnetModel
from .fixed import FixedFormat, QuantizedParams

_MAGIC = b"RFNW"


def save_model(path, model: RfnetModel) -> None:
    params = model.params
    if isinstance(params, QuantizedParams):
        fmt, dtype = params.fmt.name, "<i4"
    elif isinstance(params, FloatParams):
        fmt, dtype = "float32", "<f4"
    else:
        raise ParameterError(f"cannot save parameters of type {type(params).__name__}")
    arrays = [np.ascontiguousarray(a, dtype=dtype) for a in params.arrays()]
    header = dict(model.arch.to_dict(), format=fmt, shapes=[list(a.shape) for a in arrays], meta=model.meta)
    blob = json.dumps(header, sort_keys=True).encode()
    with open(Path(path), "wb") as fh:
        fh.write(_MAGIC + struct.pack("<I", len(blob)) + blob)
        for a in arrays:
            fh.write(a.tobytes())


def read_header(path) -> dict:
    with open(Path(path), "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ParameterError(f"{path}: not an RFNet weight file")
        (n,) = struct.unpack("<I", fh.read(4))
        return json.loads(fh.read(n))


def load_model(path) -> RfnetModel:
    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC:
        raise ParameterError(f"{path}: not an RFNet weight file")
    (n,) = struct.unpack("<I", raw[4:8])
    header = json.loads(raw[8:8 + n])
    arch = RfnetArch.from_dict(header)
    fixed = header["format"] != "float32"
    dtype = np.dtype("<i4") if fixed else np.dtype("<f4")
    pos, arrays = 8 + n, []
    for shape in header["shapes"]:
        count = int(np.prod(shape))
        a = np.frombuffer(raw, dtype=dtype, count=count, offset=pos).reshape(shape)
        arrays.append(a.astype(np.int32) if fixed else a.astype(np.float64))
        pos += count * dtype.itemsize
    if pos != len(raw):
        raise ParameterError(f"{path}: {len(raw) - pos} trailing bytes")
    fp = FloatParams.from_arrays(arch, arrays)
    params = QuantizedParams(fp.conv, fp.dense, FixedFormat.parse(header["format"])) if fixed else fp
    return RfnetModel(arch, params, header.get("meta", {}))
