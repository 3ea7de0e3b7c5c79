"""On-disk formats: public store, key file, run config and PGM/PPM images.

All binary integers are little-endian. Store and key records keep indices
ascending so that write -> read -> write is byte-identical.
"""

from __future__ import annotations

import io
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .data import from_uint8, to_uint8
from .net import NetworkConfig
from .protocol import AmbiguatedCodes, SupportKey

log = logging.getLogger(__name__)

STORE_MAGIC = b"SCAP"
KEYS_MAGIC = b"SCAK"
FORMAT_VERSION = 1
MAX_INDEX = 0xFFFF

_RECORD = np.dtype([("index", "<u2"), ("value", "<f4")])


def _read(f: BinaryIO, n: int) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise EOFError(f"truncated file: wanted {n} bytes, got {len(data)}")
    return data


def _write_id(f: BinaryIO, item_id: str) -> None:
    raw = item_id.encode("utf-8")
    f.write(struct.pack("<I", len(raw)))
    f.write(raw)


def _read_id(f: BinaryIO) -> str:
    (n,) = struct.unpack("<I", _read(f, 4))
    return _read(f, n).decode("utf-8")


def _header(f: BinaryIO, magic: bytes, kind: str) -> tuple[int, int, int, int]:
    got = f.read(4)
    if got != magic:
        raise ValueError(f"not a {kind} file (magic {got!r})")
    (version,) = struct.unpack("<B", _read(f, 1))
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported {kind} version {version}")
    return struct.unpack("<HIII", _read(f, 14))


@dataclass
class PublicStore:
    """Ambiguated codes of many items, as held by the storage provider."""

    L: int
    m: int
    k_prime: int
    records: dict[str, AmbiguatedCodes] = field(default_factory=dict)

    def __post_init__(self):
        if self.m - 1 > MAX_INDEX:
            raise ValueError(f"m={self.m} does not fit u16 indices")

    def add(self, codes: AmbiguatedCodes) -> None:
        if (codes.L, codes.m, codes.k_prime) != (self.L, self.m, self.k_prime):
            raise ValueError(
                f"record shape (L={codes.L}, m={codes.m}, k'={codes.k_prime}) does not match store"
            )
        if codes.item_id in self.records:
            raise ValueError(f"duplicate item id {codes.item_id!r}")
        self.records[codes.item_id] = codes

    def __getitem__(self, item_id: str) -> AmbiguatedCodes:
        try:
            return self.records[item_id]
        except KeyError:
            raise KeyError(f"item {item_id!r} not in public store") from None

    def __len__(self) -> int:
        return len(self.records)

    def write(self, f: BinaryIO) -> None:
        f.write(STORE_MAGIC)
        f.write(struct.pack("<BHIII", FORMAT_VERSION, self.L, self.m, self.k_prime, len(self.records)))
        for item_id, rec in self.records.items():
            _write_id(f, item_id)
            arr = np.empty(rec.indices.shape, dtype=_RECORD)
            arr["index"] = rec.indices
            arr["value"] = rec.values
            f.write(arr.tobytes())

    @classmethod
    def read(cls, f: BinaryIO) -> "PublicStore":
        L, m, k_prime, count = _header(f, STORE_MAGIC, "public store")
        store = cls(L, m, k_prime)
        for _ in range(count):
            item_id = _read_id(f)
            arr = np.frombuffer(_read(f, L * k_prime * _RECORD.itemsize), dtype=_RECORD).reshape(L, k_prime)
            store.add(AmbiguatedCodes(arr["index"].astype(np.int64), arr["value"].astype(np.float32), m, item_id))
        return store

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        self.write(buf)
        return buf.getvalue()

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "PublicStore":
        with open(path, "rb") as f:
            return cls.read(f)


@dataclass
class KeyFile:
    """Support keys of many items; indices only, never values."""

    L: int
    m: int
    k: int
    records: dict[str, SupportKey] = field(default_factory=dict)

    def __post_init__(self):
        if self.m - 1 > MAX_INDEX:
            raise ValueError(f"m={self.m} does not fit u16 indices")

    def add(self, key: SupportKey) -> None:
        if (key.L, key.m, key.k) != (self.L, self.m, self.k):
            raise ValueError(f"key shape (L={key.L}, m={key.m}, k={key.k}) does not match key file")
        if key.item_id in self.records:
            raise ValueError(f"duplicate item id {key.item_id!r}")
        self.records[key.item_id] = key

    def __getitem__(self, item_id: str) -> SupportKey:
        try:
            return self.records[item_id]
        except KeyError:
            raise KeyError(f"item {item_id!r} not in key file") from None

    def __len__(self) -> int:
        return len(self.records)

    def write(self, f: BinaryIO) -> None:
        f.write(KEYS_MAGIC)
        f.write(struct.pack("<BHIII", FORMAT_VERSION, self.L, self.m, self.k, len(self.records)))
        for item_id, key in self.records.items():
            _write_id(f, item_id)
            f.write(key.indices.astype("<u2").tobytes())

    @classmethod
    def read(cls, f: BinaryIO) -> "KeyFile":
        L, m, k, count = _header(f, KEYS_MAGIC, "key file")
        keys = cls(L, m, k)
        for _ in range(count):
            item_id = _read_id(f)
            idx = np.frombuffer(_read(f, 2 * L * k), dtype="<u2").reshape(L, k)
            keys.add(SupportKey(idx.astype(np.int64), m, item_id))
        return keys

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        self.write(buf)
        return buf.getvalue()

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "KeyFile":
        with open(path, "rb") as f:
            return cls.read(f)


# -- run configuration ---------------------------------------------------------
@dataclass
class RunConfig:
    network: NetworkConfig = field(default_factory=NetworkConfig)
    epochs: int = 40
    batch_size: int = 32
    lr: float = 1e-3
    seed: int = 0
    split_seed: int = 0
    k_n: int | None = None  # None means k


_TUPLE_KEYS = ("input_shape", "block_ratios", "block_channels")
_NET_INT_KEYS = ("L", "m", "k")
_RUN_KEYS = {"epochs": int, "batch_size": int, "lr": float, "seed": int, "split_seed": int, "k_n": int}


def parse_config(text: str) -> RunConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment, lists are comma-separated."""
    net_fields: dict = {}
    run_fields: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            if key in _TUPLE_KEYS:
                net_fields[key] = tuple(int(v) for v in value.replace(" ", "").split(",") if v)
            elif key in _NET_INT_KEYS:
                net_fields[key] = int(value)
            elif key in _RUN_KEYS:
                run_fields[key] = _RUN_KEYS[key](value)
            else:
                raise ValueError(f"unknown key {key!r}")
        except ValueError as exc:
            raise ValueError(f"config line {lineno}: {exc}") from None
    return RunConfig(network=NetworkConfig(**net_fields), **run_fields)


def format_config(cfg: RunConfig) -> str:
    net = cfg.network
    lines = [
        f"input_shape = {','.join(map(str, net.input_shape))}",
        f"block_ratios = {','.join(map(str, net.block_ratios))}",
        f"block_channels = {','.join(map(str, net.block_channels))}",
        f"L = {net.L}",
        f"m = {net.m}",
        f"k = {net.k}",
        f"epochs = {cfg.epochs}",
        f"batch_size = {cfg.batch_size}",
        f"lr = {cfg.lr!r}",
        f"seed = {cfg.seed}",
        f"split_seed = {cfg.split_seed}",
    ]
    if cfg.k_n is not None:
        lines.append(f"k_n = {cfg.k_n}")
    return "\n".join(lines) + "\n"


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text())


# -- PGM / PPM -------------------------------------------------------------------
def _tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """First ``count`` whitespace-separated header tokens (skipping comments) and the payload offset."""
    toks, pos = [], 0
    while len(toks) < count:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise ValueError("truncated PNM header")
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        toks.append(data[start:pos])
    return toks, pos + 1  # exactly one whitespace byte before the raster


def decode_pnm(data: bytes) -> np.ndarray:
    """Binary PGM (P5) or PPM (P6) bytes -> uint8 array ``[C, H, W]``."""
    toks, offset = _tokens(data, 4)
    magic = toks[0]
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"unsupported PNM type {magic!r}; only P5 and P6 are read")
    width, height, maxval = (int(t) for t in toks[1:])
    if not 0 < maxval <= 255:
        raise ValueError(f"only 8-bit PNM supported (maxval {maxval})")
    channels = 1 if magic == b"P5" else 3
    n = width * height * channels
    raster = data[offset : offset + n]
    if len(raster) != n:
        raise ValueError("truncated PNM raster")
    img = np.frombuffer(raster, dtype=np.uint8).reshape(height, width, channels)
    if maxval != 255:
        img = np.rint(img.astype(np.float64) * 255.0 / maxval).astype(np.uint8)
    return np.ascontiguousarray(img.transpose(2, 0, 1))


def encode_pnm(img) -> bytes:
    """uint8 ``[C, H, W]`` (C in {1, 3}) or float image in [0, 1] -> P5/P6 bytes."""
    arr = np.asarray(img)
    if arr.ndim == 4 and arr.shape[0] == 1:
        arr = arr[0]
    if arr.ndim == 2:
        arr = arr[None]
    if arr.dtype != np.uint8:
        arr = to_uint8(arr)
    c, h, w = arr.shape
    if c not in (1, 3):
        raise ValueError(f"PNM needs 1 or 3 channels, got {c}")
    magic = b"P5" if c == 1 else b"P6"
    header = magic + f"\n{w} {h}\n255\n".encode("ascii")
    return header + np.ascontiguousarray(arr.transpose(1, 2, 0)).tobytes()


def read_image(path) -> np.ndarray:
    """Image file -> float32 ``[C, H, W]`` in [0, 1]."""
    return from_uint8(decode_pnm(Path(path).read_bytes()))


def write_image(path, img) -> None:
    Path(path).write_bytes(encode_pnm(img))


IMAGE_SUFFIXES = (".pgm", ".ppm", ".pnm")


def load_image_dir(directory, shape: tuple[int, int, int] | None = None) -> list[tuple[str, np.ndarray]]:
    """Read every PGM/PPM in ``directory`` (sorted); unreadable or mis-shaped files are skipped with a warning."""
    items = []
    for path in sorted(Path(directory).iterdir()):
        if path.suffix.lower() not in IMAGE_SUFFIXES:
            continue
        try:
            img = read_image(path)
        except (OSError, ValueError) as exc:
            log.warning("skipping %s: %s", path.name, exc)
            continue
        if shape is not None and tuple(img.shape) != tuple(shape):
            log.warning("skipping %s: shape %s, expected %s", path.name, img.shape, tuple(shape))
            continue
        items.append((path.stem, img))
    return items
