"""Private image sharing with ambiguated sparse codes.

A convolutional autoencoder produces L k-sparse code-maps per image. The
support of each code is the secret key; the codes padded with statistically
matched decoys are public.
"""

from .net import CodecNet, NetworkConfig, SparseCodeMaps
from .protocol import (
    AmbiguatedCodes,
    NoiseModel,
    SupportKey,
    ambiguate,
    attack_random_guess,
    extract_support,
    fit_noise_model,
    purify,
    verify_support,
)
from .rate import RateReport, binary_entropy, guess_log2, public_bits, rate_bpp, rate_report, secret_bits
from .tensor import Tensor, backprop, no_grad
from .train import AdamState, Dataset, adam_step, train

__all__ = [
    "AdamState",
    "AmbiguatedCodes",
    "CodecNet",
    "Dataset",
    "NetworkConfig",
    "NoiseModel",
    "RateReport",
    "SparseCodeMaps",
    "SupportKey",
    "Tensor",
    "adam_step",
    "ambiguate",
    "attack_random_guess",
    "backprop",
    "binary_entropy",
    "extract_support",
    "fit_noise_model",
    "guess_log2",
    "no_grad",
    "public_bits",
    "purify",
    "rate_bpp",
    "rate_report",
    "secret_bits",
    "train",
    "verify_support",
]
