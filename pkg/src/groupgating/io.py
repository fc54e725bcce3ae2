"""Binary containers for datasets, models, whitening transforms and frames.

Layout shared by every file kind::

    0        4 bytes   magic, e.g. b"RGD1" (last byte is the format version)
    4        uint32    header length H (little-endian)
    8        H bytes   UTF-8 JSON header (sorted keys)
    8+H      payload   blocks, each: uint64 element count, then the elements

The header lists the blocks (name, dtype, shape) in payload order and
stores ``payload_bytes`` and a CRC32 of the payload. All numbers are
little-endian; floats are IEEE 64-bit.
"""

import csv
import hashlib
import json
import struct
import zlib
from importlib.metadata import PackageNotFoundError, version

import numpy as np

from .core_math import PCAWhitening
from .cores import CoreStructure
from .datagen import Dataset
from .model import PARAM_NAMES, FactorModel, SquarePoolingModel

FORMAT_VERSION = 1
MAGIC_DATASET = b"RGD"
MAGIC_MODEL = b"RGM"
MAGIC_WHITENING = b"RGW"
MAGIC_FRAMES = b"RGF"
_DTYPES = {"f8": "<f8", "u2": "<u2"}


class FormatError(ValueError):
    def __init__(self, message, offset=None):
        where = "" if offset is None else f" (byte offset {offset})"
        super().__init__(message + where)
        self.offset = offset


class BadMagic(FormatError):
    pass


class UnsupportedVersion(FormatError):
    pass


class HeaderError(FormatError):
    pass


class CorruptPayload(FormatError):
    pass


class TruncatedFile(FormatError):
    pass


def library_version():
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "0+unknown"


def _pack(magic, header, blocks):
    payload = bytearray()
    specs = []
    for name, arr, code in blocks:
        arr = np.ascontiguousarray(arr, dtype=_DTYPES[code])
        specs.append({"name": name, "dtype": code, "shape": list(arr.shape)})
        payload += struct.pack("<Q", arr.size)
        payload += arr.tobytes()
    header = dict(header, format_version=FORMAT_VERSION, blocks=specs,
                  payload_bytes=len(payload), crc32=zlib.crc32(payload))
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return magic + str(FORMAT_VERSION).encode() + struct.pack("<I", len(hbytes)) + hbytes + bytes(payload)


def _unpack(data, magic):
    if len(data) < 8:
        raise TruncatedFile("file shorter than the fixed preamble", len(data))
    if data[:3] != magic:
        raise BadMagic(f"expected magic {magic!r}x, found {data[:4]!r}", 0)
    if data[3:4] != str(FORMAT_VERSION).encode():
        raise UnsupportedVersion(f"format version {data[3:4]!r} is not supported", 3)
    (hlen,) = struct.unpack_from("<I", data, 4)
    if 8 + hlen > len(data):
        raise TruncatedFile(f"header of {hlen} bytes runs past end of file", 8)
    try:
        header = json.loads(data[8:8 + hlen].decode("utf-8"))
        if not isinstance(header, dict):
            raise TypeError("header is not an object")
        if header.get("format_version") != FORMAT_VERSION:
            raise UnsupportedVersion(f"header declares version {header.get('format_version')}", 8)
        specs = header["blocks"]
        payload_bytes = int(header["payload_bytes"])
        crc = int(header["crc32"])
        shapes = [(str(s["name"]), _DTYPES[s["dtype"]], tuple(int(d) for d in s["shape"])) for s in specs]
    except FormatError:
        raise
    except Exception as exc:  # any malformed header is reported, never raised raw
        raise HeaderError(f"malformed header: {exc}", 8) from None
    start = 8 + hlen
    payload = data[start:]
    if len(payload) < payload_bytes:
        raise TruncatedFile(f"payload has {len(payload)} of {payload_bytes} bytes", start + len(payload))
    if len(payload) > payload_bytes:
        raise CorruptPayload("trailing bytes after payload", start + payload_bytes)
    if zlib.crc32(payload) != crc:
        raise CorruptPayload("payload CRC32 mismatch", start)
    blocks = {}
    pos = 0
    for name, dt, shape in shapes:
        if pos + 8 > payload_bytes:
            raise TruncatedFile(f"block {name!r} length prefix missing", start + pos)
        (count,) = struct.unpack_from("<Q", payload, pos)
        if any(d < 0 for d in shape) or count != int(np.prod(shape, dtype=np.int64)):
            raise HeaderError(f"block {name!r} holds {count} elements, header shape {shape}", start + pos)
        pos += 8
        nbytes = count * np.dtype(dt).itemsize
        if pos + nbytes > payload_bytes:
            raise TruncatedFile(f"block {name!r} truncated", start + pos)
        blocks[name] = np.frombuffer(payload, dtype=dt, count=count, offset=pos).reshape(shape).copy()
        pos += nbytes
    if pos != payload_bytes:
        raise HeaderError("payload length disagrees with declared blocks", start + pos)
    return header, blocks


def _read(path, magic):
    with open(path, "rb") as fh:
        return _unpack(fh.read(), magic)


def _write(path, data):
    with open(path, "wb") as fh:
        fh.write(data)


# --- datasets ----------------------------------------------------------------

def dataset_bytes(splits_or_dataset, spec=None, whitened=False):
    """Serialize a dataset; ``DatasetSplits`` are stored as train|valid|test."""
    if isinstance(splits_or_dataset, Dataset):
        data = splits_or_dataset
        counts = [len(data), 0, 0]
        meta = data.meta
    else:
        parts = list(splits_or_dataset)
        data = Dataset.concat(parts)
        counts = [len(p) for p in parts]
        meta = parts[0].meta
        spec = spec or getattr(splits_or_dataset, "spec", None)
        whitened = whitened or getattr(splits_or_dataset, "whitening", None) is not None
    header = {"task": meta.get("task"), "patch_size": meta.get("patch_size"),
              "counts": counts, "num_classes": meta.get("num_classes", 0),
              "whitening": bool(whitened or meta.get("whitened", False)),
              "seed": None if spec is None else spec.seed,
              "task_params": None if spec is None else _jsonable(spec.task_params)}
    n, dim = data.x.shape
    labels = np.zeros(0, dtype=np.uint16) if data.labels is None else data.labels
    if data.labels is not None and (labels.min(initial=0) < 0 or labels.max(initial=0) > 0xFFFF):
        raise ValueError("labels do not fit in 16 bits")
    params = np.zeros((0, 0)) if data.params is None else data.params
    return _pack(MAGIC_DATASET, header, [("x", data.x, "f8"), ("y", data.y, "f8"),
                                         ("labels", labels, "u2"), ("params", params, "f8")])


def write_dataset(path, splits_or_dataset, spec=None, whitened=False):
    _write(path, dataset_bytes(splits_or_dataset, spec, whitened))


def read_dataset(path):
    """Returns ``(header, [train, valid, test])``; empty splits are omitted
    when the file holds a single dataset."""
    header, b = _read(path, MAGIC_DATASET)
    x, y = b["x"], b["y"]
    if x.shape != y.shape:
        raise HeaderError("x and y blocks differ in shape")
    n = len(x)
    labels = b["labels"].astype(np.int64) if b["labels"].size else None
    params = b["params"] if b["params"].size else None
    counts = header.get("counts") or [n, 0, 0]
    if sum(counts) != n or (labels is not None and len(labels) != n):
        raise HeaderError(f"header counts {counts} disagree with {n} stored pairs")
    meta = {"task": header.get("task"), "patch_size": header.get("patch_size"),
            "num_classes": header.get("num_classes", 0)}
    if header.get("whitening"):
        meta["whitened"] = True
    full = Dataset(x, y, labels, params, meta)
    parts, s = [], 0
    for name, c in zip(("train", "valid", "test"), counts):
        if c or name == "train":
            part = full.subset(slice(s, s + c))
            part.meta["split"] = name
            parts.append(part)
        s += c
    return header, parts


# --- models ----------------------------------------------------------------

def config_digest(config):
    blob = json.dumps(_jsonable(config), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def model_bytes(model, train_config=None, extra=None):
    if isinstance(model, FactorModel):
        header = {"model": "gated", "core": model.core.to_dict(),
                  "dims": {"input_dim": model.input_dim, "output_dim": model.output_dim,
                           "num_hidden": model.num_hidden}}
        blocks = [(n, getattr(model, n), "f8") for n in PARAM_NAMES]
    elif isinstance(model, SquarePoolingModel):
        header = {"model": "square_pooling",
                  "dims": {"input_dim": model.input_dim, "num_factors": model.Wc.shape[1],
                           "num_hidden": model.num_hidden}}
        blocks = [(n, v, "f8") for n, v in model.params().items()]
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    header["train_config"] = None if train_config is None else _jsonable(train_config)
    header["train_config_digest"] = None if train_config is None else config_digest(train_config)
    header["library_version"] = library_version()
    if extra:
        header["extra"] = _jsonable(extra)
    return _pack(MAGIC_MODEL, header, blocks)


def write_model(path, model, train_config=None, extra=None):
    _write(path, model_bytes(model, train_config, extra))


def read_model(path):
    """Returns ``(model, header)``."""
    header, b = _read(path, MAGIC_MODEL)
    try:
        if header["model"] == "gated":
            core = CoreStructure.from_dict(header["core"])
            model = FactorModel(*(b[n] for n in PARAM_NAMES), core=core)
        elif header["model"] == "square_pooling":
            model = SquarePoolingModel(b["Wc"], b["Wh"], b["bh"], b["bz"])
        else:
            raise ValueError(f"unknown model type {header['model']!r}")
    except FormatError:
        raise
    except Exception as exc:
        raise HeaderError(f"model header inconsistent with payload: {exc}") from None
    return model, header


# --- whitening & frames ----------------------------------------------------

def write_whitening(path, wt):
    header = {"retain": wt.retain, "n_components": wt.n_components_,
              "retained_variance": wt.retained_variance_}
    _write(path, _pack(MAGIC_WHITENING, header, [
        ("mean", wt.mean_, "f8"), ("forward", wt.forward_, "f8"),
        ("inverse", wt.inverse_, "f8"), ("eigenvalues", wt.eigenvalues_, "f8")]))


def read_whitening(path):
    header, b = _read(path, MAGIC_WHITENING)
    wt = PCAWhitening(retain=header["retain"])
    wt.mean_, wt.forward_, wt.inverse_ = b["mean"], b["forward"], b["inverse"]
    wt.eigenvalues_ = b["eigenvalues"]
    wt.n_components_ = header["n_components"]
    wt.retained_variance_ = header["retained_variance"]
    return wt


def write_frames(path, frames):
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 3:
        raise ValueError("frames must be a (num_frames, height, width) array")
    t, h, w = frames.shape
    _write(path, _pack(MAGIC_FRAMES, {"num_frames": t, "height": h, "width": w},
                       [("frames", frames, "f8")]))


def read_frames(path):
    return _read(path, MAGIC_FRAMES)[1]["frames"]


# --- reports ---------------------------------------------------------------

def write_csv_report(path_or_file, columns, rows):
    """CSV with a header row; floats are written with ``repr`` precision."""
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    finally:
        if own:
            fh.close()


def write_json_report(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _jsonable(obj):
    if hasattr(obj, "to_dict"):
        obj = obj.to_dict()
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj
