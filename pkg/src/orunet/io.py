"""Checkpoint archives and raw tensor dumps.

A checkpoint is an uncompressed zip archive with fixed timestamps:

    model.ini       ModelConfig as sectioned key-value text
    train.ini       TrainConfig (optional)
    state.json      epoch counter, rng states, free-form metadata
    manifest.json   name -> {dtype, shape, file} for every tensor
    tensors/<n>.bin raw little-endian tensor data

Writing the same content twice produces identical bytes.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
import json
import os
import struct
import tempfile
import zipfile
from contextlib import contextmanager
from pathlib import Path

import numpy as np

_ZIP_DATE = (1980, 1, 1, 0, 0, 0)
_DTYPES = {"float32": "<f4", "float64": "<f8", "int64": "<i8", "int32": "<i4", "uint8": "|u1"}


@contextmanager
def atomic_path(path):
    """Yield a temporary path next to ``path``; rename over it on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    os.close(fd)
    try:
        yield Path(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    with atomic_path(path) as tmp:
        tmp.write_text(text)


def _entry(zf, name, data: bytes):
    info = zipfile.ZipInfo(name, date_time=_ZIP_DATE)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    zf.writestr(info, data)


def write_archive(path, texts: dict, tensors: dict) -> None:
    """``texts``: archive name -> str; ``tensors``: name -> numpy array."""
    manifest = {}
    blobs = []
    for i, name in enumerate(sorted(tensors)):
        arr = np.asarray(tensors[name])
        dt = arr.dtype.name
        if dt not in _DTYPES:
            raise TypeError(f"unsupported dtype {dt} for tensor {name}")
        fname = f"tensors/{i:05d}.bin"
        manifest[name] = {"dtype": dt, "shape": list(arr.shape), "file": fname}
        blobs.append((fname, np.ascontiguousarray(arr, dtype=_DTYPES[dt]).tobytes()))
    with atomic_path(path) as tmp:
        with zipfile.ZipFile(tmp, "w") as zf:
            for name in sorted(texts):
                _entry(zf, name, texts[name].encode())
            _entry(zf, "manifest.json", json.dumps(manifest, indent=1, sort_keys=True).encode())
            for fname, data in blobs:
                _entry(zf, fname, data)


def read_archive(path):
    """Return (texts, tensors)."""
    texts, tensors = {}, {}
    with zipfile.ZipFile(path) as zf:
        manifest = json.loads(zf.read("manifest.json"))
        for name in zf.namelist():
            if name != "manifest.json" and not name.startswith("tensors/"):
                texts[name] = zf.read(name).decode()
        for name, meta in manifest.items():
            raw = zf.read(meta["file"])
            arr = np.frombuffer(raw, dtype=_DTYPES[meta["dtype"]]).reshape(meta["shape"])
            tensors[name] = arr.astype(meta["dtype"])
    return texts, tensors


# ---------------------------------------------------------------------------
# dataclasses as key-value sections
# ---------------------------------------------------------------------------

def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_scalar(text: str, like):
    text = text.strip()
    if isinstance(like, bool):
        low = text.lower()
        if low not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"not a boolean: {text!r}")
        return low in ("true", "1", "yes")
    if isinstance(like, int):
        return int(text)
    if isinstance(like, float):
        return float(text)
    return text


def _parse(text: str, like):
    if isinstance(like, (list, tuple)):
        items = [t for t in text.split(",") if t.strip()]
        elem = like[0] if like else ""
        if isinstance(elem, (int, float)) and not isinstance(elem, bool):
            # ranges given as "1" or "1.5" in a float tuple stay floats
            elem = 0.0 if any(isinstance(v, float) for v in like) else 0
        vals = [_parse_scalar(t, elem) for t in items]
        return type(like)(vals)
    return _parse_scalar(text, like)


def section_to_dict(obj) -> dict:
    return {f.name: _format(getattr(obj, f.name)) for f in dataclasses.fields(obj)}


def dataclass_from_section(cls, section):
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.default is not dataclasses.MISSING:
            like = f.default
        elif f.default_factory is not dataclasses.MISSING:
            like = f.default_factory()
        else:
            like = ""
        if section is not None and f.name in section:
            kwargs[f.name] = _parse(section[f.name], like)
    unknown = set(section or ()) - {f.name for f in dataclasses.fields(cls)}
    if unknown:
        raise ValueError(f"unknown keys for {cls.__name__}: {sorted(unknown)}")
    return cls(**kwargs)


def dataclass_to_ini(obj, section: str) -> str:
    lines = [f"[{section}]\n"]
    lines += [f"{k} = {v}\n" for k, v in section_to_dict(obj).items()]
    return "".join(lines)


def dataclass_from_ini(cls, text: str, section: str):
    cp = configparser.ConfigParser()
    cp.read_string(text)
    return dataclass_from_section(cls, cp[section] if cp.has_section(section) else None)


# ---------------------------------------------------------------------------
# raw softmax dump
# ---------------------------------------------------------------------------

NPYISH_MAGIC = b"ORSM"
NPYISH_FLOAT32 = 1


def write_npyish(path, array) -> None:
    """16-byte header (magic, dtype code, rank, reserved; uint32 LE each),
    then ``rank`` uint32 dims, then little-endian float32 data."""
    arr = np.ascontiguousarray(array, dtype="<f4")
    buf = io.BytesIO()
    buf.write(struct.pack("<4sIII", NPYISH_MAGIC, NPYISH_FLOAT32, arr.ndim, 0))
    buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    buf.write(arr.tobytes())
    with atomic_path(path) as tmp:
        tmp.write_bytes(buf.getvalue())


def read_npyish(path) -> np.ndarray:
    data = Path(path).read_bytes()
    magic, code, rank, _ = struct.unpack_from("<4sIII", data, 0)
    if magic != NPYISH_MAGIC or code != NPYISH_FLOAT32:
        raise ValueError(f"{path}: not a float32 softmax dump")
    dims = struct.unpack_from(f"<{rank}I", data, 16)
    off = 16 + 4 * rank
    return np.frombuffer(data, dtype="<f4", offset=off).reshape(dims).astype(np.float32)
