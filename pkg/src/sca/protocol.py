"""Support keys, ambiguation, purification and the random-guess attack.

The data owner keeps ``extract_support(z)`` secret and publishes
``ambiguate(z)``: the true entries plus ``k_n`` decoys placed on the support
complement, drawn from the same magnitude law as the real nonzeros. Anyone
holding the key zeroes the decoys back out with ``purify``.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import optimize, stats

from .net import SparseCodeMaps


def _check_indices(indices: np.ndarray, m: int, what: str) -> None:
    if indices.ndim != 2:
        raise ValueError(f"{what}: indices must be [L, n]")
    if indices.size and (indices.min() < 0 or indices.max() >= m):
        raise ValueError(f"{what}: index out of range [0, {m})")
    if np.any(np.diff(indices, axis=1) <= 0):
        raise ValueError(f"{what}: indices must be strictly increasing per group")


@dataclass
class SupportKey:
    """Secret part of one item: the k kept indices of each of the L groups."""

    indices: np.ndarray  # [L, k]
    m: int
    item_id: str = ""

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        _check_indices(self.indices, self.m, "SupportKey")

    @property
    def L(self) -> int:
        return self.indices.shape[0]

    @property
    def k(self) -> int:
        return self.indices.shape[1]


@dataclass
class AmbiguatedCodes:
    """Public part of one item: k' = k + k_n (index, value) pairs per group."""

    indices: np.ndarray  # [L, k']
    values: np.ndarray  # [L, k']
    m: int
    item_id: str = ""

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.indices.shape != self.values.shape:
            raise ValueError("indices and values must have the same shape")
        _check_indices(self.indices, self.m, "AmbiguatedCodes")

    @property
    def L(self) -> int:
        return self.indices.shape[0]

    @property
    def k_prime(self) -> int:
        return self.indices.shape[1]

    def to_dense(self) -> np.ndarray:
        """Dense ``[L, m]`` codes as seen by a party without the key."""
        dense = np.zeros((self.L, self.m), dtype=np.float32)
        np.put_along_axis(dense, self.indices, self.values, axis=1)
        return dense


@dataclass
class NoiseModel:
    """Per-group magnitude law of true nonzeros.

    ``mean``/``std``/``threshold`` summarise the observed magnitudes;
    ``loc``/``scale`` are the parent Gaussian whose lower truncation at
    ``threshold`` reproduces them, and are what decoys are drawn from.
    """

    mean: np.ndarray
    std: np.ndarray
    threshold: np.ndarray
    sign_prob: np.ndarray
    loc: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        for name in ("mean", "std", "threshold", "sign_prob", "loc", "scale"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64).reshape(-1))
        if np.any(self.std < 0) or np.any(self.threshold < 0) or np.any(self.scale < 0):
            raise ValueError("std, scale and threshold must be nonnegative")
        if np.any((self.sign_prob < 0) | (self.sign_prob > 1)):
            raise ValueError("sign_prob must lie in [0, 1]")

    @property
    def L(self) -> int:
        return self.mean.shape[0]

    def sample(self, group: int, n: int, rng: np.random.Generator) -> np.ndarray:
        """Signed decoy values for one group."""
        u = rng.uniform(size=n)
        signs = np.where(rng.uniform(size=n) < self.sign_prob[group], 1.0, -1.0)
        return signs * sample_truncated_magnitudes(
            u, self.loc[group], self.scale[group], self.threshold[group]
        )


def sample_truncated_magnitudes(u: np.ndarray, loc: float, scale: float, threshold: float) -> np.ndarray:
    """Map uniforms to N(loc, scale) truncated below at ``threshold`` (inverse CDF)."""
    if scale == 0:
        return np.full(u.shape, max(loc, threshold))
    a = (threshold - loc) / scale
    x = stats.truncnorm.ppf(u, a, np.inf, loc=loc, scale=scale)
    return np.maximum(x, threshold)


def fit_truncated_gaussian(samples: np.ndarray, threshold: float) -> tuple[float, float]:
    """Maximum-likelihood parent (loc, scale) of a normal truncated below at ``threshold``."""
    samples = np.asarray(samples, dtype=np.float64)
    mean, std = samples.mean(), samples.std()
    if std == 0 or len(samples) < 3:
        return float(mean), float(std)

    def nll(theta):
        loc, log_scale = theta
        scale = np.exp(log_scale)
        a = (threshold - loc) / scale
        return -np.sum(stats.truncnorm.logpdf(samples, a, np.inf, loc=loc, scale=scale))

    x0 = np.array([mean, np.log(std)])
    bounds = [(threshold - 50 * std, mean + 50 * std), (np.log(std) - 5, np.log(std) + 5)]
    res = optimize.minimize(nll, x0, method="L-BFGS-B", bounds=bounds)
    loc, log_scale = res.x if np.isfinite(res.fun) else x0
    return float(loc), float(np.exp(log_scale))


def extract_support(codes: SparseCodeMaps) -> SupportKey:
    return SupportKey(codes.support.copy(), codes.m, codes.item_id)


def support_of(vector) -> np.ndarray:
    """Sorted indices of the nonzero entries of a vector."""
    return np.flatnonzero(np.asarray(vector))


def fit_noise_model(collection: Sequence[SparseCodeMaps]) -> NoiseModel:
    """Fit per-group magnitude statistics of the true nonzeros over a collection."""
    if not collection:
        raise ValueError("cannot fit a noise model on an empty collection")
    n_groups = collection[0].L
    kept = [[] for _ in range(n_groups)]
    for codes in collection:
        if codes.L != n_groups:
            raise ValueError("codes in the collection disagree on L")
        vals = np.take_along_axis(codes.values, codes.support, axis=1)
        for g in range(n_groups):
            kept[g].append(vals[g])
    fields = {n: np.zeros(n_groups) for n in ("mean", "std", "threshold", "sign_prob", "loc", "scale")}
    for g in range(n_groups):
        v = np.concatenate(kept[g]).astype(np.float64)
        mag = np.abs(v)
        fields["mean"][g] = mag.mean()
        fields["std"][g] = mag.std(ddof=1) if len(mag) > 1 else 0.0
        fields["threshold"][g] = mag.min()
        fields["sign_prob"][g] = np.mean(v > 0)
        fields["loc"][g], fields["scale"][g] = fit_truncated_gaussian(mag, mag.min())
    return NoiseModel(**fields)


def item_rng(seed: int, item_id: str, stream: int = 0) -> np.random.Generator:
    """Counter-based generator keyed by (seed, item, stream); reproducible per item."""
    tag = zlib.crc32(item_id.encode("utf-8"))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, tag, stream])))


def ambiguate(codes: SparseCodeMaps, noise: NoiseModel, k_n: int, rng_seed: int = 0) -> AmbiguatedCodes:
    """Add ``k_n`` decoys per group on the support complement."""
    L, m, k = codes.L, codes.m, codes.k
    if not 0 <= k_n <= m - k:
        raise ValueError(f"k_n must lie in [0, {m - k}], got {k_n}")
    if noise.L != L:
        raise ValueError(f"noise model has {noise.L} groups, codes have {L}")
    rng = item_rng(rng_seed, codes.item_id, stream=0)
    k_prime = k + k_n
    indices = np.empty((L, k_prime), dtype=np.int64)
    values = np.empty((L, k_prime), dtype=np.float32)
    for g in range(L):
        true_idx = codes.support[g]
        complement = np.setdiff1d(np.arange(m), true_idx, assume_unique=True)
        fake_idx = rng.choice(complement, size=k_n, replace=False)
        fake_val = noise.sample(g, k_n, rng).astype(np.float32)
        idx = np.concatenate([true_idx, fake_idx])
        val = np.concatenate([codes.values[g, true_idx], fake_val])
        order = np.argsort(idx)
        indices[g], values[g] = idx[order], val[order]
    return AmbiguatedCodes(indices, values, m, codes.item_id)


def purify(u_p: AmbiguatedCodes, key: SupportKey) -> SparseCodeMaps:
    """Keep only the public entries whose index is in the key."""
    if u_p.item_id != key.item_id:
        raise ValueError(f"key is for item {key.item_id!r}, codes are {u_p.item_id!r}")
    if key.L != u_p.L or key.m != u_p.m:
        raise ValueError(f"key shape (L={key.L}, m={key.m}) does not match codes (L={u_p.L}, m={u_p.m})")
    dense = u_p.to_dense()
    out = np.zeros_like(dense)
    np.put_along_axis(out, key.indices, np.take_along_axis(dense, key.indices, axis=1), axis=1)
    return SparseCodeMaps(out, key.indices, u_p.item_id)


def attack_random_guess(u_p: AmbiguatedCodes, k: int, rng_seed: int = 0) -> SupportKey:
    """Claim a key by picking k of the k' public nonzeros uniformly per group."""
    if not 0 <= k <= u_p.k_prime:
        raise ValueError(f"k must lie in [0, {u_p.k_prime}], got {k}")
    rng = item_rng(rng_seed, u_p.item_id, stream=1)
    guess = np.stack([np.sort(rng.choice(row, size=k, replace=False)) for row in u_p.indices])
    return SupportKey(guess.reshape(u_p.L, k), u_p.m, u_p.item_id)


def verify_support(candidate: SupportKey, reference: SupportKey) -> list[int]:
    """Per-group intersection sizes |candidate ∩ reference|."""
    if (candidate.L, candidate.m, candidate.k) != (reference.L, reference.m, reference.k):
        raise ValueError(
            f"key shapes differ: (L, m, k) = {(candidate.L, candidate.m, candidate.k)} "
            f"vs {(reference.L, reference.m, reference.k)}"
        )
    return [
        len(np.intersect1d(c, r, assume_unique=True))
        for c, r in zip(candidate.indices, reference.indices)
    ]
