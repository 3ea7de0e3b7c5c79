"""Bottlenecked convolutional autoencoder with grouped k-sparse code-maps.

The encoder trunk down-samples the image to ``L`` feature maps. Each map is
flattened and passed through its own small fully-connected layer, then
sparsified to its ``k`` largest-magnitude entries. The decoder pushes every
code back through the transpose of the same group matrix (tied weights) and
mirrors the trunk with bilinear up-sampling blocks.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO

import numpy as np

from . import functional as F
from .tensor import ShapeError, Tensor, no_grad, read_tensor, write_tensor


@dataclass(frozen=True)
class NetworkConfig:
    input_shape: tuple[int, int, int] = (1, 32, 32)
    block_ratios: tuple[int, ...] = (1, 2, 1, 2, 1, 2)
    block_channels: tuple[int, ...] = (32, 64, 64, 128, 128, 4)
    L: int = 4
    m: int = 64
    k: int = 8

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(v) for v in self.input_shape))
        object.__setattr__(self, "block_ratios", tuple(int(v) for v in self.block_ratios))
        object.__setattr__(self, "block_channels", tuple(int(v) for v in self.block_channels))
        self.validate()

    def validate(self) -> None:
        c, h, w = self.input_shape
        if min(c, h, w) < 1:
            raise ValueError(f"input_shape must be positive, got {self.input_shape}")
        if len(self.block_ratios) != len(self.block_channels) or not self.block_ratios:
            raise ValueError("block_ratios and block_channels must be non-empty and equally long")
        if any(r not in (1, 2) for r in self.block_ratios):
            raise ValueError(f"block ratios must be 1 or 2, got {self.block_ratios}")
        down = self.downsample
        if h % down or w % down:
            raise ValueError(f"downsampling factor {down} does not divide {h}x{w}")
        if not 1 <= self.k <= self.m:
            raise ValueError(f"need 1 <= k <= m, got k={self.k}, m={self.m}")
        if self.block_channels[-1] != self.L:
            raise ValueError(
                f"last block must emit L={self.L} bottleneck maps, got {self.block_channels[-1]}"
            )

    @property
    def downsample(self) -> int:
        return int(np.prod(self.block_ratios))

    @property
    def bottleneck_hw(self) -> tuple[int, int]:
        _, h, w = self.input_shape
        return h // self.downsample, w // self.downsample

    @property
    def p(self) -> int:
        """Flattened size of one bottleneck feature map."""
        bh, bw = self.bottleneck_hw
        return bh * bw

    def block_merge(self, i: int) -> str:
        # down-sampling blocks concatenate their skip branch, the rest add it
        return "concat" if self.block_ratios[i] > 1 else "add"

    @classmethod
    def desk(cls) -> "NetworkConfig":
        """32x32 grayscale, 4x4 bottleneck maps, L=4, m=64, k=8, half-width trunk."""
        return cls(block_channels=(16, 32, 32, 64, 64, 4))

    @classmethod
    def full_scale(cls) -> "NetworkConfig":
        return cls(
            input_shape=(3, 128, 128),
            block_ratios=(1, 2, 1, 2, 1, 2),
            block_channels=(32, 64, 64, 128, 128, 20),
            L=20,
            m=512,
            k=128,
        )


@dataclass
class SparseCodeMaps:
    """L length-m codes of one item; ``support`` holds the k kept indices per group."""

    values: np.ndarray  # [L, m]
    support: np.ndarray  # [L, k], ascending
    item_id: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        self.support = np.asarray(self.support, dtype=np.int64)
        if self.values.ndim != 2 or self.support.ndim != 2:
            raise ValueError("values must be [L, m] and support [L, k]")
        if self.support.shape[0] != self.values.shape[0]:
            raise ShapeError("SparseCodeMaps", "L", self.values.shape[0], self.support.shape[0])
        if self.support.size and (self.support.min() < 0 or self.support.max() >= self.m):
            raise ValueError("support index out of range")
        if np.any(np.diff(self.support, axis=1) <= 0):
            raise ValueError("support indices must be strictly increasing per group")
        off = np.ones(self.values.shape, dtype=bool)
        np.put_along_axis(off, self.support, False, axis=1)
        if np.any(self.values[off] != 0):
            raise ValueError("values outside the support must be zero")

    @classmethod
    def from_dense(cls, values, k: int, item_id: str = "") -> "SparseCodeMaps":
        """Wrap k-sparse dense codes, taking the support by top-k magnitude."""
        values = np.asarray(values, dtype=np.float32)
        support = F.top_k_indices(values, k)
        kept = np.zeros_like(values)
        np.put_along_axis(kept, support, np.take_along_axis(values, support, axis=1), axis=1)
        return cls(kept, support, item_id)

    @property
    def L(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    @property
    def k(self) -> int:
        return self.support.shape[1]

    def nonzero_counts(self) -> np.ndarray:
        return np.count_nonzero(self.values, axis=1)


def _kaiming_uniform(rng: np.random.Generator, shape, fan_in: int, gain: float = 2.0) -> np.ndarray:
    bound = np.sqrt(3.0 * gain / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


class CodecNet:
    """Parameters plus forward passes of the autoencoder.

    ``params`` is an ordered name -> Tensor mapping. The decoder's grouped
    linear layer reads ``group.weight`` transposed, so tying holds by
    construction.
    """

    def __init__(self, config: NetworkConfig, params: dict[str, Tensor] | None = None, seed: int = 0):
        self.config = config
        self.params = params if params is not None else self._init_params(seed)
        expected = self._param_shapes()
        if list(self.params) != list(expected):
            raise ValueError("parameter names do not match the config")
        for name, shape in expected.items():
            if self.params[name].shape != shape:
                raise ShapeError("CodecNet", name, shape, self.params[name].shape)

    # -- parameters ------------------------------------------------------
    def _block_specs(self):
        """(prefix, c_in, c_out, ratio, merge, kind) for each trunk block."""
        cfg = self.config
        chans = cfg.block_channels
        c_in = cfg.input_shape[0]
        specs = []
        for i, (r, c_out) in enumerate(zip(cfg.block_ratios, chans)):
            specs.append((f"enc{i}", c_in, c_out, r, cfg.block_merge(i), "down"))
            c_in = c_out
        n = len(chans)
        for j in range(n):
            i = n - 1 - j  # mirrors encoder block i
            c_out = chans[i - 1] if i > 0 else chans[0]
            specs.append((f"dec{j}", chans[i], c_out, cfg.block_ratios[i], cfg.block_merge(i), "up"))
        return specs

    def _param_shapes(self) -> dict[str, tuple[int, ...]]:
        cfg = self.config
        shapes: dict[str, tuple[int, ...]] = {}
        for prefix, c_in, c_out, _r, merge, _kind in self._block_specs():
            if merge == "concat":
                main, skip = c_out - c_out // 2, c_out // 2
            else:
                main, skip = c_out, c_out
            shapes[f"{prefix}.conv1.weight"] = (main, c_in, 3, 3)
            shapes[f"{prefix}.conv1.bias"] = (main,)
            shapes[f"{prefix}.conv2.weight"] = (main, main, 3, 3)
            shapes[f"{prefix}.conv2.bias"] = (main,)
            shapes[f"{prefix}.skip.weight"] = (skip, c_in, 1, 1)
            shapes[f"{prefix}.skip.bias"] = (skip,)
            if prefix == f"enc{len(cfg.block_ratios) - 1}":
                shapes["group.weight"] = (cfg.L, cfg.m, cfg.p)
                shapes["group.enc_bias"] = (cfg.L, cfg.m)
                shapes["group.dec_bias"] = (cfg.L, cfg.p)
        shapes["out.weight"] = (cfg.input_shape[0], cfg.block_channels[0], 3, 3)
        shapes["out.bias"] = (cfg.input_shape[0],)
        return shapes

    def _init_params(self, seed: int) -> dict[str, Tensor]:
        rng = np.random.default_rng(seed)
        merges = {spec[0]: spec[4] for spec in self._block_specs()}
        params = {}
        for name, shape in self._param_shapes().items():
            prefix = name.split(".")[0]
            if name.endswith("bias"):
                arr = np.zeros(shape, dtype=np.float32)
            elif name == "group.weight":
                arr = _kaiming_uniform(rng, shape, fan_in=shape[2], gain=1.0)
            else:
                gain = 2.0 if name.endswith("conv1.weight") else 1.0
                if merges.get(prefix) == "add" and not name.endswith("conv1.weight"):
                    # two summed branches: halve each so the block keeps its scale
                    gain *= 0.5
                arr = _kaiming_uniform(rng, shape, fan_in=int(np.prod(shape[1:])), gain=gain)
            params[name] = Tensor(arr, requires_grad=True, name=name)
        return params

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.params.values())

    @property
    def decoder_group_weight(self) -> np.ndarray:
        """Decoder grouped-linear matrices, ``[L, p, m]`` (transposes of the encoder's)."""
        return self.params["group.weight"].data.transpose(0, 2, 1)

    def astype(self, dtype) -> "CodecNet":
        params = {
            n: Tensor(p.data.astype(dtype), requires_grad=True, dtype=dtype, name=n)
            for n, p in self.params.items()
        }
        return CodecNet(self.config, params)

    # -- graph pieces ----------------------------------------------------
    def _block(self, prefix: str, x: Tensor, ratio: int, merge: str, kind: str) -> Tensor:
        p = self.params
        if kind == "down":
            h = F.relu(F.conv2d(x, p[f"{prefix}.conv1.weight"], p[f"{prefix}.conv1.bias"], stride=ratio))
            s = F.conv2d(x, p[f"{prefix}.skip.weight"], p[f"{prefix}.skip.bias"], stride=ratio)
        else:
            x = F.bilinear_upsample(x, ratio)
            h = F.relu(F.conv2d(x, p[f"{prefix}.conv1.weight"], p[f"{prefix}.conv1.bias"]))
            s = F.conv2d(x, p[f"{prefix}.skip.weight"], p[f"{prefix}.skip.bias"])
        h = F.relu(F.conv2d(h, p[f"{prefix}.conv2.weight"], p[f"{prefix}.conv2.bias"]))
        return F.concat([h, s], axis=1) if merge == "concat" else h + s

    def pre_codes(self, x: Tensor) -> Tensor:
        """Dense grouped-linear outputs ``[N, L, m]`` before sparsification."""
        cfg = self.config
        if x.ndim != 4 or x.shape[1:] != cfg.input_shape:
            raise ShapeError("encode", "input", ("N",) + cfg.input_shape, x.shape)
        h = x
        for prefix, _ci, _co, r, merge, kind in self._block_specs():
            if kind == "down":
                h = self._block(prefix, h, r, merge, kind)
        n = h.shape[0]
        h = h.reshape(n, cfg.L, cfg.p)
        return F.grouped_linear(h, self.params["group.weight"], self.params["group.enc_bias"])

    def code_tensor(self, x: Tensor, k: int | None = None) -> Tensor:
        """k-sparse codes ``[N, L, m]``."""
        return F.top_k_sparsify(self.pre_codes(x), self.config.k if k is None else k)

    def bottleneck_maps(self, z: Tensor) -> Tensor:
        """Tied transposed group layer: codes ``[N,L,m]`` -> feature maps ``[N,L,p]``."""
        cfg = self.config
        if z.ndim != 3 or z.shape[1:] != (cfg.L, cfg.m):
            raise ShapeError("decode", "codes", ("N", cfg.L, cfg.m), z.shape)
        return F.grouped_linear(z, self.params["group.weight"], self.params["group.dec_bias"], transpose=True)

    def decode_tensor(self, z: Tensor) -> Tensor:
        """Unclamped reconstruction ``[N, C, H, W]`` from codes ``[N, L, m]``."""
        cfg = self.config
        h = self.bottleneck_maps(z)
        bh, bw = cfg.bottleneck_hw
        h = h.reshape(z.shape[0], cfg.L, bh, bw)
        for prefix, _ci, _co, r, merge, kind in self._block_specs():
            if kind == "up":
                h = self._block(prefix, h, r, merge, kind)
        return F.conv2d(h, self.params["out.weight"], self.params["out.bias"])

    def forward(self, x: Tensor) -> Tensor:
        return self.decode_tensor(self.code_tensor(x))

    # -- array-level API -------------------------------------------------
    def _as_batch(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=self.params["out.weight"].dtype)
        if x.ndim == 3:
            x = x[None]
        if x.ndim != 4 or x.shape[1:] != self.config.input_shape:
            raise ShapeError("encode", "input", ("N",) + self.config.input_shape, x.shape)
        return x

    def encode_batch(self, x, item_ids=None) -> list[SparseCodeMaps]:
        x = self._as_batch(x)
        if len(x) == 0:
            return []
        # one item per pass: BLAS blocking depends on batch size, and codes
        # must not depend on which other items were encoded alongside
        with no_grad():
            pre = np.concatenate([self.pre_codes(Tensor(x[i : i + 1])).data for i in range(len(x))])
        support = F.top_k_indices(pre, self.config.k)
        out = []
        for i in range(len(x)):
            vals = np.zeros_like(pre[i])
            np.put_along_axis(vals, support[i], np.take_along_axis(pre[i], support[i], axis=1), axis=1)
            out.append(SparseCodeMaps(vals, support[i], "" if item_ids is None else str(item_ids[i])))
        return out

    def encode(self, x, item_id: str = "") -> SparseCodeMaps:
        """Encode one image ``[C,H,W]`` or ``[1,C,H,W]``."""
        x = self._as_batch(x)
        if len(x) != 1:
            raise ShapeError("encode", "N", 1, len(x))
        return self.encode_batch(x, [item_id])[0]

    def decode_values(self, values) -> np.ndarray:
        """Decode dense code arrays ``[N,L,m]`` (or ``[L,m]``), clamped to [0, 1]."""
        values = np.asarray(values, dtype=self.params["out.weight"].dtype)
        single = values.ndim == 2
        if single:
            values = values[None]
        with no_grad():
            out = np.concatenate([self.decode_tensor(Tensor(v[None])).data for v in values])
        out = np.clip(out, 0.0, 1.0)
        return out[0] if single else out

    def decode(self, codes: SparseCodeMaps) -> np.ndarray:
        """Reconstruct ``[1, C, H, W]`` in [0, 1]."""
        cfg = self.config
        if codes.values.shape != (cfg.L, cfg.m):
            raise ShapeError("decode", "codes", (cfg.L, cfg.m), codes.values.shape)
        return self.decode_values(codes.values[None])

    def decode_single_group(self, codes: SparseCodeMaps, l: int) -> np.ndarray:
        """Decode with every group but ``l`` (1-based) zeroed."""
        if not 1 <= l <= self.config.L:
            raise ValueError(f"group index must be in [1, {self.config.L}], got {l}")
        vals = np.zeros_like(codes.values)
        vals[l - 1] = codes.values[l - 1]
        return self.decode_values(vals[None])

    # -- persistence -----------------------------------------------------
    def save(self, path) -> None:
        Path(path).write_bytes(checkpoint_bytes(self))

    @classmethod
    def load(cls, path) -> "CodecNet":
        with open(path, "rb") as f:
            return read_checkpoint(f)


# -- checkpoint format ------------------------------------------------------
CHECKPOINT_MAGIC = b"SCAM"
CHECKPOINT_VERSION = 1
_CONFIG_TAGS = {
    "input_shape": 1,
    "block_ratios": 2,
    "block_channels": 3,
    "L": 4,
    "m": 5,
    "k": 6,
}


def write_config(f: BinaryIO, cfg: NetworkConfig) -> None:
    """Field-tagged integers: u8 field count, then (u8 tag, u16 n, n x u32)."""
    f.write(struct.pack("<B", len(_CONFIG_TAGS)))
    for name, tag in _CONFIG_TAGS.items():
        val = getattr(cfg, name)
        vals = tuple(val) if isinstance(val, tuple) else (val,)
        f.write(struct.pack(f"<BH{len(vals)}I", tag, len(vals), *vals))


def read_config(f: BinaryIO) -> NetworkConfig:
    (count,) = struct.unpack("<B", f.read(1))
    names = {v: k for k, v in _CONFIG_TAGS.items()}
    fields = {}
    for _ in range(count):
        tag, n = struct.unpack("<BH", f.read(3))
        vals = struct.unpack(f"<{n}I", f.read(4 * n))
        if tag not in names:
            raise ValueError(f"unknown config tag {tag}")
        name = names[tag]
        fields[name] = vals if name in ("input_shape", "block_ratios", "block_channels") else vals[0]
    return NetworkConfig(**fields)


def write_checkpoint(f: BinaryIO, net: CodecNet) -> None:
    f.write(CHECKPOINT_MAGIC)
    f.write(struct.pack("<B", CHECKPOINT_VERSION))
    write_config(f, net.config)
    f.write(struct.pack("<I", len(net.params)))
    for name, t in net.params.items():
        raw = name.encode("utf-8")
        f.write(struct.pack("<H", len(raw)))
        f.write(raw)
        write_tensor(f, t.data)


def read_checkpoint(f: BinaryIO) -> CodecNet:
    magic = f.read(4)
    if magic != CHECKPOINT_MAGIC:
        raise ValueError(f"not a model checkpoint (magic {magic!r})")
    (version,) = struct.unpack("<B", f.read(1))
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    cfg = read_config(f)
    (count,) = struct.unpack("<I", f.read(4))
    params = {}
    for _ in range(count):
        (n,) = struct.unpack("<H", f.read(2))
        name = f.read(n).decode("utf-8")
        arr = read_tensor(f)
        params[name] = Tensor(arr, requires_grad=True, dtype=arr.dtype, name=name)
    return CodecNet(cfg, params)


def checkpoint_bytes(net: CodecNet) -> bytes:
    buf = io.BytesIO()
    write_checkpoint(buf, net)
    return buf.getvalue()
