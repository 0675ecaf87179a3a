"""Prime-field arithmetic, additive secret sharing, and fixed-point encoding.

All secret state in the MPC phase lives in a public prime field. Elements are
plain Python ints in [0, p) (not numpy integers: 61-bit by 61-bit products
overflow uint64). The default modulus is the Mersenne prime 2^61 - 1, which
leaves headroom for fixed-point products and matches the 8-byte wire format.
A tiny field (e.g. p = 101) is supported for exhaustive property tests.

Negative rationals are encoded into the upper half of the field, so share-wise
addition is sign-correct for free.
"""

from __future__ import annotations

import secrets
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, RangeError

M61 = (1 << 61) - 1  # default modulus: Mersenne prime 2^61 - 1

ELEMENT_BYTES = 8  # wire size of one field element (little-endian unsigned)


class PrimeField:
    """Arithmetic mod a public prime, plus additive (t,t) secret sharing."""

    def __init__(self, modulus: int = M61):
        if modulus < 3:
            raise ParameterError(f"modulus must be an odd prime >= 3, got {modulus}")
        self.p = modulus
        self.half = modulus // 2  # values > half decode as negatives

    def __repr__(self):
        return f"PrimeField(2^61-1)" if self.p == M61 else f"PrimeField({self.p})"

    # -- element arithmetic ------------------------------------------------

    def add(self, a: int, b: int) -> int:
        s = a + b
        return s - self.p if s >= self.p else s

    def sub(self, a: int, b: int) -> int:
        s = a - b
        return s + self.p if s < 0 else s

    def mul(self, a: int, b: int) -> int:
        return (a * b) % self.p

    def neg(self, a: int) -> int:
        return self.p - a if a else 0

    def inv(self, a: int) -> int:
        if a == 0:
            raise ZeroDivisionError("cannot invert zero")
        return pow(a, self.p - 2, self.p)

    def lift(self, x: int) -> int:
        """Map a (possibly negative) integer to its field representative."""
        return x % self.p

    def signed(self, a: int) -> int:
        """Map a field element back to a signed integer (upper half is negative)."""
        return a - self.p if a > self.half else a

    def rand(self, rng: np.random.Generator | None = None) -> int:
        """Uniform element. With no generator, uses the OS CSPRNG (for share
        randomness); with a seeded generator the draw is reproducible."""
        if rng is None:
            return secrets.randbelow(self.p)
        return int(rng.integers(self.p, dtype=np.uint64))

    # -- additive secret sharing -------------------------------------------

    def share(self, secret: int, count: int, rng: np.random.Generator | None = None) -> list[int]:
        """Split ``secret`` into ``count`` additive shares summing to it mod p.

        The first count-1 shares are independent uniform field elements, so any
        proper subset of shares is uniformly distributed regardless of the secret.
        """
        if count < 2:
            raise ParameterError(f"need at least 2 shares, got {count}")
        shares = [self.rand(rng) for _ in range(count - 1)]
        shares.append(self.sub(secret % self.p, sum(shares) % self.p))
        return shares

    def reconstruct(self, shares: list[int]) -> int:
        """Sum of all shares mod p. Requires every share produced for the secret."""
        if not shares:
            raise ParameterError("cannot reconstruct from an empty share list")
        return sum(shares) % self.p

    def linear_combine(
        self,
        coeffs: list[int],
        share_vectors: list[list[int]],
        constant: int = 0,
    ) -> list[int]:
        """Local evaluation of c1*[x1] + c2*[x2] + ... + constant.

        All inputs must be shared among the same holder set (equal-length
        vectors, holder = position). The public constant is folded into the
        first holder's share. No communication is performed.
        """
        if len(coeffs) != len(share_vectors):
            raise ParameterError("one coefficient per share vector required")
        sizes = {len(v) for v in share_vectors}
        if len(sizes) > 1:
            raise ParameterError(f"mismatched holder sets: sizes {sorted(sizes)}")
        width = sizes.pop() if sizes else 0
        if width == 0:
            raise ParameterError("empty share vectors")
        out = []
        for i in range(width):
            acc = constant % self.p if i == 0 else 0
            for c, vec in zip(coeffs, share_vectors):
                acc = self.add(acc, self.mul(c % self.p, vec[i]))
            out.append(acc)
        return out

    # -- wire format ---------------------------------------------------------

    def to_bytes(self, a: int) -> bytes:
        return a.to_bytes(ELEMENT_BYTES, "little")

    def from_bytes(self, raw: bytes) -> int:
        a = int.from_bytes(raw, "little")
        if a >= self.p:
            raise ParameterError(f"serialized value {a} is not a field element")
        return a


@dataclass(frozen=True)
class FixedPointCodec:
    """Fixed-point encoding of signed rationals as field elements.

    x is represented as round(x * 2^frac_bits) mod p; the upper half of the
    field encodes negatives. ``2 * range_bound * 2^frac_bits`` must stay below
    the modulus so that sums of two in-range values never cross the sign
    boundary.
    """

    field: PrimeField
    frac_bits: int = 20
    range_bound: int = 1 << 18

    def __post_init__(self):
        if self.frac_bits < 1:
            raise ParameterError("frac_bits must be >= 1")
        if self.range_bound < 1:
            raise ParameterError("range_bound must be >= 1")
        if 2 * self.range_bound * self.scale >= self.field.p:
            raise ParameterError(
                "fixed-point range does not fit the field: "
                f"2 * {self.range_bound} * 2^{self.frac_bits} >= {self.field.p}"
            )

    @property
    def scale(self) -> int:
        return 1 << self.frac_bits

    def encode(self, x: float) -> int:
        """Field representative of round(x * 2^f); raises RangeError out of range."""
        if abs(x) > self.range_bound:
            raise RangeError(f"|{x}| exceeds range bound {self.range_bound}")
        return self.field.lift(round(x * self.scale))

    def decode(self, a: int) -> float:
        """Inverse of encode on in-range values: signed(a) / 2^f."""
        return self.field.signed(a) / self.scale
