"""Owner / server / user flow built from the codec and protocol pieces."""

from __future__ import annotations

import logging
from typing import Iterable

import numpy as np

from . import functional as F
from .net import CodecNet, SparseCodeMaps
from .protocol import (
    NoiseModel,
    ambiguate,
    attack_random_guess,
    extract_support,
    fit_noise_model,
    purify,
)
from .storage import KeyFile, PublicStore

log = logging.getLogger(__name__)


def encode_items(model: CodecNet, items: Iterable[tuple[str, np.ndarray]], batch_size: int = 64) -> list[SparseCodeMaps]:
    """Encode (item_id, image) pairs; items that fail are logged and dropped."""
    out: list[SparseCodeMaps] = []
    good: list[tuple[str, np.ndarray]] = []
    for item_id, img in items:
        if tuple(np.shape(img)) != model.config.input_shape:
            log.warning("skipping %s: shape %s does not match model input %s", item_id, np.shape(img), model.config.input_shape)
            continue
        good.append((item_id, img))
    for start in range(0, len(good), batch_size):
        chunk = good[start : start + batch_size]
        x = np.stack([img for _, img in chunk])
        out.extend(model.encode_batch(x, [i for i, _ in chunk]))
    return out


def share(
    model: CodecNet,
    items: Iterable[tuple[str, np.ndarray]],
    k_n: int | None = None,
    seed: int = 0,
    noise: NoiseModel | None = None,
) -> tuple[PublicStore, KeyFile, list[SparseCodeMaps]]:
    """Encode, split into public ambiguated codes and secret keys.

    The noise model is fitted on the encoded batch unless one is given.
    """
    cfg = model.config
    k_n = cfg.k if k_n is None else k_n
    codes = encode_items(model, items)
    if not codes:
        raise ValueError("no items could be encoded")
    noise = fit_noise_model(codes) if noise is None else noise
    store = PublicStore(cfg.L, cfg.m, cfg.k + k_n)
    keys = KeyFile(cfg.L, cfg.m, cfg.k)
    for c in codes:
        store.add(ambiguate(c, noise, k_n, seed))
        keys.add(extract_support(c))
    return store, keys, codes


def reconstruct(model: CodecNet, store: PublicStore, item_id: str, keys: KeyFile | None = None) -> np.ndarray:
    """Authorized decode with a key, otherwise the curious-server view."""
    u_p = store[item_id]
    if keys is None:
        return keyless_decode(model, u_p)
    return model.decode(purify(u_p, keys[item_id]))


def keyless_decode(model: CodecNet, u_p) -> np.ndarray:
    """Decode public codes re-sparsified to their own k' largest magnitudes."""
    dense = F.top_k_sparsify(u_p.to_dense(), u_p.k_prime) if u_p.k_prime else u_p.to_dense()
    return model.decode_values(dense[None])


def guess_decode(model: CodecNet, u_p, k: int, seed: int = 0) -> tuple[np.ndarray, object]:
    """Decode with a randomly guessed k-subset of the public support."""
    guess = attack_random_guess(u_p, k, seed)
    return model.decode(purify(u_p, guess)), guess


def resparsify(codes: SparseCodeMaps, k: int) -> SparseCodeMaps:
    """Keep only the k largest-magnitude entries of already-sparse codes."""
    return SparseCodeMaps.from_dense(codes.values, k, codes.item_id)
