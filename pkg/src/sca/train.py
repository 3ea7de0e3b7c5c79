"""Dataset split, Adam, and the reconstruction training loop."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import functional as F
from .net import CodecNet, NetworkConfig
from .tensor import Tensor, grads_of

log = logging.getLogger(__name__)

TRAIN_FRACTION = 0.8


class TrainingError(RuntimeError):
    pass


@dataclass
class Dataset:
    """Labelled images in [0, 1] with a seeded 80/20 train/test split."""

    items: list[tuple[str, np.ndarray]]
    split_seed: int = 0

    def __post_init__(self):
        ids = [item_id for item_id, _ in self.items]
        if len(set(ids)) != len(ids):
            raise ValueError("item ids must be unique")
        self._index = {item_id: i for i, item_id in enumerate(ids)}
        order = sorted(ids)
        perm = np.random.default_rng(self.split_seed).permutation(len(order))
        n_train = int(math.floor(TRAIN_FRACTION * len(order)))
        self.train_ids = [order[i] for i in perm[:n_train]]
        self.test_ids = [order[i] for i in perm[n_train:]]

    @classmethod
    def from_array(cls, images: np.ndarray, split_seed: int = 0, prefix: str = "img") -> "Dataset":
        width = len(str(max(len(images) - 1, 0)))
        return cls([(f"{prefix}{i:0{width}d}", img) for i, img in enumerate(images)], split_seed)

    def __len__(self) -> int:
        return len(self.items)

    def image(self, item_id: str) -> np.ndarray:
        return self.items[self._index[item_id]][1]

    def stack(self, ids: Sequence[str]) -> np.ndarray:
        return np.stack([self.image(i) for i in ids]).astype(np.float32)


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[Tensor], **hyper) -> "AdamState":
        return cls(
            m=[np.zeros_like(p.data) for p in params],
            v=[np.zeros_like(p.data) for p in params],
            **hyper,
        )


def adam_step(params: Sequence[Tensor], grads: Sequence[np.ndarray], state: AdamState) -> None:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    if len(grads) != len(params) or len(state.m) != len(params):
        raise ValueError("params, grads and optimizer state differ in length")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for i, (p, g) in enumerate(zip(params, grads)):
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape} ({p.name})")
        state.m[i] = b1 * state.m[i] + (1 - b1) * g
        state.v[i] = b2 * state.v[i] + (1 - b2) * g * g
        m_hat = state.m[i] / c1
        v_hat = state.v[i] / c2
        p.data = (p.data - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(p.dtype)


@dataclass
class TrainResult:
    model: CodecNet
    history: list[float]


def train(
    config: NetworkConfig,
    dataset: Dataset,
    epochs: int = 40,
    batch_size: int = 32,
    seed: int = 0,
    lr: float = 1e-3,
    model: CodecNet | None = None,
    on_batch: Callable[[int, int, list[str]], None] | None = None,
) -> TrainResult:
    """Minimise pixel MSE of decode(encode(x)) over the train split.

    ``on_batch(epoch, batch_index, item_ids)`` is called before every step.
    Returns the model and the per-epoch mean training loss.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    net = model if model is not None else CodecNet(config, seed=seed)
    history: list[float] = []
    if epochs <= 0:
        return TrainResult(net, history)
    train_ids = list(dataset.train_ids)
    if not train_ids:
        raise TrainingError("train split is empty")
    first = dataset.image(train_ids[0])
    if tuple(first.shape) != config.input_shape:
        raise TrainingError(f"images have shape {first.shape}, config expects {config.input_shape}")

    params = net.parameters()
    state = AdamState.for_params(params, lr=lr)
    for epoch in range(epochs):
        order = np.random.default_rng([seed, epoch]).permutation(len(train_ids))
        total, count = 0.0, 0
        for b, start in enumerate(range(0, len(order), batch_size)):
            ids = [train_ids[i] for i in order[start : start + batch_size]]
            if on_batch is not None:
                on_batch(epoch, b, ids)
            x = dataset.stack(ids)
            for p in params:
                p.zero_grad()
            try:
                codes = net.code_tensor(Tensor(x))
                if b == 0:
                    nnz = np.count_nonzero(codes.data, axis=-1)
                    if np.any(nnz > config.k):
                        raise TrainingError(f"epoch {epoch}: code with more than k={config.k} nonzeros")
                loss = F.mse_loss(net.decode_tensor(codes), x)
                value = loss.item()
                if not math.isfinite(value):
                    raise FloatingPointError("loss")
                loss.backward()
            except FloatingPointError as exc:
                raise TrainingError(f"non-finite values at epoch {epoch}, batch {b}: {exc}") from exc
            adam_step(params, grads_of(params), state)
            total += value * len(ids)
            count += len(ids)
        history.append(total / count)
        log.info("epoch %d  mean train mse %.6f", epoch, history[-1])
    return TrainResult(net, history)


def write_loss_csv(path, history: Sequence[float]) -> None:
    lines = ["epoch,mean_train_mse"] + [f"{i},{v:.9g}" for i, v in enumerate(history)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_loss_csv(path) -> list[float]:
    rows = Path(path).read_text().strip().splitlines()[1:]
    return [float(r.split(",")[1]) for r in rows]
