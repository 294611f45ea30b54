"""Binary tensor interchange format (.ipnt) shared with the secondary trainer.

Layout: magic "IPNT" | u32 LE version=1 | u32 LE header length | JSON header
{dtype: "c64"|"f32", shape, axes, frame_ids, meta} | little-endian float32
payload, complex entries interleaved (re, im), row-major, no padding.
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

MAGIC = b"IPNT"
VERSION = 1


class TensorFormatError(IOError):
    """Malformed .ipnt file; `code` distinguishes the failure class."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


def write_tensor_file(
    path: str | os.PathLike,
    data,
    *,
    axes: list[str] | None = None,
    frame_ids: list[int] | None = None,
    meta: dict | None = None,
) -> None:
    """Write an array (or an IpnSeries-like object exposing .stack()) to .ipnt.

    Complex input is stored as dtype "c64" (interleaved float32 pairs), real
    input as "f32"; the round trip is lossless at 32-bit precision.
    """
    if hasattr(data, "stack"):
        if frame_ids is None:
            frame_ids = [f.t for f in data.frames]
        data = data.stack()
    arr = np.asarray(data)
    if not np.all(np.isfinite(arr)):
        raise ValueError("refusing to write non-finite entries")
    if np.iscomplexobj(arr):
        dtype = "c64"
        flat = np.empty(arr.size * 2, dtype="<f4")
        flat[0::2] = arr.real.reshape(-1).astype("<f4")
        flat[1::2] = arr.imag.reshape(-1).astype("<f4")
    else:
        dtype = "f32"
        flat = arr.reshape(-1).astype("<f4")
    header = {
        "dtype": dtype,
        "shape": list(arr.shape),
        "axes": list(axes) if axes is not None else [f"axis{i}" for i in range(arr.ndim)],
        "frame_ids": list(frame_ids) if frame_ids is not None else [],
        "meta": dict(meta) if meta is not None else {},
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(flat.tobytes())


def read_tensor_file(path: str | os.PathLike, with_header: bool = False):
    """Read a .ipnt file back into an ndarray (complex64 or float32).

    Raises TensorFormatError with codes "bad magic", "bad version",
    "truncated header", "bad header", "truncated payload" or
    "shape mismatch".
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise TensorFormatError("bad magic", f"expected {MAGIC!r}, got {raw[:4]!r}")
    if len(raw) < 12:
        raise TensorFormatError("truncated header", "file shorter than fixed header")
    version, hlen = struct.unpack("<II", raw[4:12])
    if version != VERSION:
        raise TensorFormatError("bad version", f"unsupported version {version}")
    if len(raw) < 12 + hlen:
        raise TensorFormatError("truncated header", "JSON header cut short")
    try:
        header = json.loads(raw[12 : 12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise TensorFormatError("bad header", str(exc)) from exc
    for key in ("dtype", "shape"):
        if key not in header:
            raise TensorFormatError("bad header", f"missing {key!r}")
    shape = tuple(int(s) for s in header["shape"])
    count = int(np.prod(shape, dtype=np.int64)) if shape else 1
    dtype = header["dtype"]
    if dtype == "c64":
        nfloats = count * 2
    elif dtype == "f32":
        nfloats = count
    else:
        raise TensorFormatError("bad header", f"unknown dtype {dtype!r}")
    payload = raw[12 + hlen :]
    if len(payload) < 4 * nfloats:
        raise TensorFormatError(
            "truncated payload", f"need {4 * nfloats} bytes, have {len(payload)}"
        )
    if len(payload) > 4 * nfloats:
        raise TensorFormatError(
            "shape mismatch", f"payload holds {len(payload)} bytes for shape {shape}"
        )
    flat = np.frombuffer(payload, dtype="<f4")
    if dtype == "c64":
        arr = (flat[0::2] + 1j * flat[1::2]).astype(np.complex64).reshape(shape)
    else:
        arr = flat.astype(np.float32).reshape(shape)
    return (arr, header) if with_header else arr
