"""File formats: RCN1 tensors, RCP1 generator checkpoints, CSV dumps and PGM heat maps."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from reconet.tensor import as_tensor

TENSOR_MAGIC = b"RCN1"
PARAMS_MAGIC = b"RCP1"


class FormatError(ValueError):
    pass


def encode_tensor(t: np.ndarray) -> bytes:
    t = as_tensor(t)
    header = TENSOR_MAGIC + struct.pack("<3I", *t.shape)
    return header + t.astype("<f4").tobytes()


def decode_tensor(data: bytes) -> np.ndarray:
    """Parse an RCN1 blob into a float64 tensor (values exactly representable in float32)."""
    if data[:4] != TENSOR_MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}, expected {TENSOR_MAGIC!r}")
    if len(data) < 16:
        raise FormatError("truncated RCN1 header")
    C, H, W = struct.unpack("<3I", data[4:16])
    n = C * H * W
    body = data[16:]
    if len(body) != 4 * n:
        raise FormatError(f"expected {4 * n} payload bytes for {C}x{H}x{W}, found {len(body)}")
    return np.frombuffer(body, dtype="<f4").astype(np.float64).reshape(C, H, W)


def write_tensor(path, t: np.ndarray) -> None:
    Path(path).write_bytes(encode_tensor(t))


def read_tensor(path) -> np.ndarray:
    return decode_tensor(Path(path).read_bytes())


def write_tensor_csv(path, t: np.ndarray) -> None:
    t = as_tensor(t)
    C, H, W = t.shape
    with open(path, "w") as fh:
        fh.write("c,h,w,value\n")
        for c in range(C):
            for h in range(H):
                for w in range(W):
                    fh.write(f"{c},{h},{w},{float(t[c, h, w])!r}\n")


def read_tensor_csv(path) -> np.ndarray:
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    idx = rows[:, :3].astype(int)
    shape = tuple(idx.max(axis=0) + 1)
    t = np.zeros(shape)
    t[idx[:, 0], idx[:, 1], idx[:, 2]] = rows[:, 3]
    return t


def encode_params(params) -> bytes:
    """Serialize a TgmParams: header (C, r), then each repetition in field order, then lambda_raw."""
    out = [PARAMS_MAGIC, struct.pack("<2I", params.channels, params.rank)]
    for i in range(params.rank):
        rep = params.rep(i)
        for field in (
            rep.channel_weight,
            rep.channel_bias,
            rep.height_weight,
            rep.height_bias,
            rep.width_weight,
            rep.width_bias,
        ):
            out.append(np.asarray(field, dtype="<f8").tobytes())
    out.append(np.asarray(params.lambda_raw, dtype="<f8").tobytes())
    return b"".join(out)


def decode_params(data: bytes):
    from reconet.tgm import TgmParams

    if data[:4] != PARAMS_MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}, expected {PARAMS_MAGIC!r}")
    C, r = struct.unpack("<2I", data[4:12])
    per_rep = C * C + C + C + 1 + C + 1
    values = np.frombuffer(data[12:], dtype="<f8")
    if values.size != r * per_rep + r:
        raise FormatError(f"payload holds {values.size} floats, expected {r * per_rep + r}")
    reps = values[: r * per_rep].reshape(r, per_rep)
    splits = np.cumsum([C * C, C, C, 1, C])
    cw, cb, hw, hb, ww, wb = np.split(reps, splits, axis=1)
    return TgmParams(
        channel_weight=cw.reshape(r, C, C).copy(),
        channel_bias=cb.copy(),
        height_weight=hw.copy(),
        height_bias=hb[:, 0].copy(),
        width_weight=ww.copy(),
        width_bias=wb[:, 0].copy(),
        lambda_raw=values[r * per_rep :].copy(),
    )


def write_params(path, params) -> None:
    Path(path).write_bytes(encode_params(params))


def read_params(path):
    return decode_params(Path(path).read_bytes())


def to_gray(image: np.ndarray) -> np.ndarray:
    """Min-max normalize a 2-D map to 0..255; a constant map renders as mid-gray 128."""
    image = np.asarray(image, dtype=np.float64)
    lo, hi = image.min(), image.max()
    if hi == lo:
        return np.full(image.shape, 128, dtype=np.uint8)
    return np.rint((image - lo) / (hi - lo) * 255.0).astype(np.uint8)


def write_pgm(path, image: np.ndarray) -> None:
    gray = to_gray(image)
    rows, cols = gray.shape
    Path(path).write_bytes(f"P5\n{cols} {rows}\n255\n".encode("ascii") + gray.tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise FormatError("not a binary PGM")
    cols, rows = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(rows, cols)
