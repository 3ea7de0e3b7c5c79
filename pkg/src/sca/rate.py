"""Key size, public-store size, rate and guessing-complexity accounting.

Exact values use arbitrary-precision binomials; the approximate values use
``log2 C(m, k) ~ m * H2(k / m)``. Both are reported side by side.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

EXACT_LIMIT = 4096

# Published (m, k, L, image shape) -> rate in bits per pixel, kept for comparison.
REFERENCE_RATES = {
    (512, 64, 20, (3, 128, 128)): 0.0845,
    (512, 128, 20, (3, 128, 128)): 0.1690,
}
REFERENCE_TOLERANCE = 0.0005


def binary_entropy(alpha: float) -> float:
    """H2(a) = -a log2 a - (1-a) log2(1-a), with H2(0) = H2(1) = 0."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"binary_entropy needs 0 <= alpha <= 1, got {alpha}")
    if alpha in (0.0, 1.0):
        return 0.0
    return -alpha * math.log2(alpha) - (1.0 - alpha) * math.log2(1.0 - alpha)


def log2_binomial(n: int, k: int) -> float:
    """log2 C(n, k); big-integer exact up to n = 4096, log-gamma beyond."""
    if n < 0 or not 0 <= k <= n:
        raise ValueError(f"need 0 <= k <= n, got n={n}, k={k}")
    if n <= EXACT_LIMIT:
        return math.log2(math.comb(n, k))
    ln = math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)
    return ln / math.log(2)


class SecretBits(NamedTuple):
    exact: float
    stirling: float


def _check_group(m: int, k: int, L: int) -> None:
    if L < 1:
        raise ValueError(f"L must be >= 1, got {L}")
    if not 0 <= k <= m:
        raise ValueError(f"need 0 <= k <= m, got k={k}, m={m}")


def secret_bits(m: int, k: int, L: int) -> SecretBits:
    """Bits needed for the support key of one item: L * log2 C(m, k)."""
    _check_group(m, k, L)
    return SecretBits(L * log2_binomial(m, k), m * L * binary_entropy(k / m))


def public_bits(m: int, k_prime: int, L: int, bits_per_value: int = 32) -> float:
    """Approximate public-store bits per item, ``bits_per_value * m * L * H2(k'/m)``."""
    if bits_per_value < 1:
        raise ValueError("bits_per_value must be >= 1")
    _check_group(m, k_prime, L)
    return bits_per_value * m * L * binary_entropy(k_prime / m)


def guess_log2(k_prime: int, k: int, L: int) -> float:
    """log2 of the number of support guesses, L * log2 C(k', k)."""
    if L < 1:
        raise ValueError(f"L must be >= 1, got {L}")
    if not 0 <= k <= k_prime:
        raise ValueError(f"need 0 <= k <= k', got k={k}, k'={k_prime}")
    return L * log2_binomial(k_prime, k)


def rate_bpp(bits: float, image_shape: tuple[int, ...]) -> float:
    """Bits per pixel, counting every channel."""
    pixels = math.prod(image_shape)
    if pixels <= 0 or any(d <= 0 for d in image_shape):
        raise ValueError(f"image shape must be positive, got {image_shape}")
    return bits / pixels


@dataclass
class RateReport:
    m: int
    k: int
    k_prime: int
    L: int
    image_shape: tuple[int, int, int]
    bits_per_value: int
    secret_bits_exact: float
    secret_bits_stirling: float
    public_bits: float
    rate_bpp: float
    rate_bpp_exact: float
    guess_log2: float
    key_kbytes: float
    reference_rate_bpp: float | None = None
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["image_shape"] = list(self.image_shape)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_text(self) -> str:
        rows = [
            ("m, k, k', L", f"{self.m}, {self.k}, {self.k_prime}, {self.L}"),
            ("image shape", "x".join(str(d) for d in self.image_shape)),
            ("secret bits (exact)", f"{self.secret_bits_exact:.3f}"),
            ("secret bits (stirling)", f"{self.secret_bits_stirling:.3f}"),
            ("key size (KB, stirling)", f"{self.key_kbytes:.4f}"),
            (f"public bits ({self.bits_per_value}-bit values)", f"{self.public_bits:.1f}"),
            ("rate bpp (stirling)", f"{self.rate_bpp:.4f}"),
            ("rate bpp (exact)", f"{self.rate_bpp_exact:.4f}"),
            ("log2 guesses", f"{self.guess_log2:.3f}"),
        ]
        if self.reference_rate_bpp is not None:
            rows.append(("published rate bpp", f"{self.reference_rate_bpp:.4f}"))
        width = max(len(r[0]) for r in rows)
        lines = [f"{name:<{width}}  {value}" for name, value in rows]
        lines += [f"note: {n}" for n in self.notes]
        return "\n".join(lines)


def rate_report(
    m: int,
    k: int,
    k_prime: int,
    L: int,
    image_shape: tuple[int, int, int],
    bits_per_value: int = 32,
) -> RateReport:
    image_shape = tuple(int(d) for d in image_shape)
    secret = secret_bits(m, k, L)
    report = RateReport(
        m=m,
        k=k,
        k_prime=k_prime,
        L=L,
        image_shape=image_shape,
        bits_per_value=bits_per_value,
        secret_bits_exact=secret.exact,
        secret_bits_stirling=secret.stirling,
        public_bits=public_bits(m, k_prime, L, bits_per_value),
        rate_bpp=rate_bpp(secret.stirling, image_shape),
        rate_bpp_exact=rate_bpp(secret.exact, image_shape),
        guess_log2=guess_log2(k_prime, k, L),
        key_kbytes=secret.stirling / 8 / 1024,
    )
    ref = REFERENCE_RATES.get((m, k, L, image_shape))
    if ref is not None:
        report.reference_rate_bpp = ref
        if abs(ref - report.rate_bpp) > REFERENCE_TOLERANCE:
            report.notes.append(_mismatch_note(m, k, L, image_shape, ref, report.rate_bpp))
    return report


def _mismatch_note(m, k, L, image_shape, ref, computed) -> str:
    note = f"published rate {ref:.4f} bpp differs from m*L*H2(k/m)/pixels = {computed:.4f} bpp"
    for (rm, rk, rl, rs), other in REFERENCE_RATES.items():
        if (rm, rl, rs) == (m, L, image_shape) and rk != k and math.isclose(ref, other * k / rk, rel_tol=1e-3):
            note += (
                f"; it equals the k={rk} figure scaled linearly by {k}/{rk},"
                " but the log-binomial key size is not linear in k"
            )
    return note
