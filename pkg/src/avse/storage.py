"""On-disk formats: parameter containers, visual-feature files, WAV audio.

Parameter container layout (all little-endian)::

    8 bytes   magic  b"AVSEPRM\\0"
    4 bytes   uint32 format version
    4 bytes   uint32 header length H
    H bytes   UTF-8 JSON: {"arrays": [{"name": ..., "shape": [...]}, ...]}
    ...       float64 values of every array, row-major, in header order

Visual-feature file layout::

    8 bytes   magic  b"AVSEVIS\\0"
    4 bytes   uint32 format version
    8 bytes   uint64 N (frames)
    8 bytes   uint64 M (feature length)
    N*M*8     float64 values, row-major
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .errors import ValidationError
from .signal import Waveform

PARAM_MAGIC = b"AVSEPRM\0"
VISUAL_MAGIC = b"AVSEVIS\0"
FORMAT_VERSION = 1


def save_arrays(path, arrays: dict[str, np.ndarray]) -> None:
    names = sorted(arrays)
    header = json.dumps(
        {"arrays": [{"name": n, "shape": list(np.shape(arrays[n]))} for n in names]},
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(PARAM_MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(header)))
        fh.write(header)
        for n in names:
            fh.write(np.ascontiguousarray(arrays[n], dtype="<f8").tobytes())


def load_arrays(path) -> dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    if data[:8] != PARAM_MAGIC:
        raise ValidationError(f"{path}: not a parameter container")
    version, hlen = struct.unpack_from("<II", data, 8)
    if version != FORMAT_VERSION:
        raise ValidationError(f"{path}: unsupported container version {version}")
    header = json.loads(data[16 : 16 + hlen].decode("utf-8"))
    offset = 16 + hlen
    out = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        if offset + 8 * count > len(data):
            raise ValidationError(f"{path}: truncated parameter container")
        values = np.frombuffer(data, dtype="<f8", count=count, offset=offset)
        out[entry["name"]] = values.reshape(shape).astype(np.float64)
        offset += 8 * count
    if offset != len(data):
        raise ValidationError(f"{path}: trailing or missing bytes in container")
    return out


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())


def save_visual(path, features: np.ndarray) -> None:
    v = np.ascontiguousarray(features, dtype="<f8")
    if v.ndim != 2:
        raise ValidationError("visual features must be a 2-D (N, M) array")
    with open(path, "wb") as fh:
        fh.write(VISUAL_MAGIC)
        fh.write(struct.pack("<IQQ", FORMAT_VERSION, v.shape[0], v.shape[1]))
        fh.write(v.tobytes())


def load_visual(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:8] != VISUAL_MAGIC:
        raise ValidationError(f"{path}: not a visual-feature file")
    version, n, m = struct.unpack_from("<IQQ", data, 8)
    if version != FORMAT_VERSION:
        raise ValidationError(f"{path}: unsupported visual file version {version}")
    offset = 8 + struct.calcsize("<IQQ")
    if len(data) - offset != 8 * n * m:
        raise ValidationError(f"{path}: expected {n}x{m} values")
    return np.frombuffer(data, dtype="<f8", offset=offset).reshape(n, m).astype(np.float64)


def write_wav(path, w: Waveform, subtype: str = "float32") -> None:
    if subtype == "float32":
        data = w.samples.astype(np.float32)
    elif subtype == "pcm16":
        data = np.round(np.clip(w.samples, -1.0, 1.0) * 32767).astype(np.int16)
    else:
        raise ValidationError(f"unknown WAV subtype {subtype!r}")
    wavfile.write(path, w.sample_rate, data)


def read_wav(path, expected_rate: int | None = None) -> Waveform:
    rate, data = wavfile.read(path)
    if data.ndim != 1:
        raise ValidationError(f"{path}: only mono WAV files are supported")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32 or data.dtype == np.float64:
        samples = data.astype(np.float64)
    else:
        raise ValidationError(f"{path}: unsupported sample format {data.dtype}")
    if expected_rate is not None and rate != expected_rate:
        raise ValidationError(f"{path}: sample rate {rate} Hz does not match configured {expected_rate} Hz")
    return Waveform(samples, rate)
