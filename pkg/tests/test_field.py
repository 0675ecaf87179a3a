"""Field arithmetic, additive sharing, and fixed-point codec."""

import numpy as np
import pytest
from scipy import stats as sps

from kvmpc.errors import ParameterError, RangeError
from kvmpc.field import ELEMENT_BYTES, FixedPointCodec, M61, PrimeField


def test_modulus_default():
    assert PrimeField().p == M61 == 2**61 - 1


def test_share_reconstruct_round_trip(field, rng):
    for _ in range(50):
        secret = field.rand(rng)
        count = int(rng.integers(2, 8))
        shares = field.share(secret, count, rng)
        assert len(shares) == count
        assert field.reconstruct(shares) == secret


def test_share_zero(field, rng):
    shares = field.share(0, 3, rng)
    assert sum(shares) % field.p == 0


def test_share_round_trip_exhaustive_tiny(tiny_field, rng):
    for secret in range(tiny_field.p):
        for count in (2, 3):
            assert tiny_field.reconstruct(tiny_field.share(secret, count, rng)) == secret


def test_share_requires_two(field, rng):
    with pytest.raises(ParameterError):
        field.share(5, 1, rng)


def test_reconstruct_empty(field):
    with pytest.raises(ParameterError):
        field.reconstruct([])


def test_share_deterministic_under_seed(field):
    a = field.share(5, 2, np.random.default_rng(7))
    b = field.share(5, 2, np.random.default_rng(7))
    assert a == b
    c = field.share(5, 2, np.random.default_rng(8))
    assert a != c


def test_share_hiding_single_share_uniform(rng):
    # on a tiny field the first share's histogram must be uniform regardless
    # of the secret
    f = PrimeField(11)
    for secret in (0, 7):
        draws = [f.share(secret, 2, rng)[0] for _ in range(22000)]
        counts = np.bincount(draws, minlength=11)
        assert sps.chisquare(counts).pvalue > 0.01


def test_share_hiding_pair_uniform(rng):
    # joint distribution of two of three shares over GF(11)^2
    f = PrimeField(11)
    cells = np.zeros((11, 11), dtype=int)
    for _ in range(36300):
        s = f.share(5, 3, rng)
        cells[s[0], s[1]] += 1
    assert sps.chisquare(cells.ravel()).pvalue > 0.01


def test_partial_reconstruction_uniform(tiny_field, rng):
    # summing t-1 of t shares reveals nothing: uniform over repeated sharings
    partials = [
        sum(tiny_field.share(42, 3, rng)[:2]) % tiny_field.p for _ in range(50500)
    ]
    counts = np.bincount(partials, minlength=tiny_field.p)
    assert sps.chisquare(counts).pvalue > 0.01


def test_sharewise_addition_linearity(field, rng):
    x, y = 123456789, 987654321
    xs = field.share(x, 4, rng)
    ys = field.share(y, 4, rng)
    summed = [field.add(a, b) for a, b in zip(xs, ys)]
    assert field.reconstruct(summed) == x + y


def test_linear_combine(field, rng):
    x, y = 31337, 271828
    v1, v2, v3 = 17, 23, 99
    xs = field.share(x, 3, rng)
    ys = field.share(y, 3, rng)
    out = field.linear_combine([v1, v2], [xs, ys], v3)
    assert field.reconstruct(out) == (v1 * x + v2 * y + v3) % field.p


def test_linear_combine_sum_and_constant(field, rng):
    xs = field.share(10, 3, rng)
    ys = field.share(20, 3, rng)
    assert field.reconstruct(field.linear_combine([1, 1], [xs, ys])) == 30
    assert field.reconstruct(field.linear_combine([0, 0], [xs, ys], 77)) == 77


def test_linear_combine_mismatched_holders(field, rng):
    xs = field.share(1, 3, rng)
    ys = field.share(2, 4, rng)
    with pytest.raises(ParameterError):
        field.linear_combine([1, 1], [xs, ys])


def test_rand_uses_csprng_without_generator(field):
    values = {field.rand() for _ in range(8)}
    assert all(0 <= v < field.p for v in values)
    assert len(values) > 1


@pytest.mark.parametrize("x", [0.0, 1.5, -2.25, 0.25, -0.5])
def test_fixed_point_dyadic_round_trip(codec, x):
    assert codec.decode(codec.encode(x)) == x


def test_fixed_point_zero_is_zero(codec):
    assert codec.encode(0.0) == 0


def test_fixed_point_random_dyadics(codec, rng):
    for _ in range(200):
        k = int(rng.integers(-(1 << 30), 1 << 30))
        x = k / codec.scale
        assert codec.decode(codec.encode(x)) == x


def test_fixed_point_rounding(codec):
    got = codec.decode(codec.encode(0.1))
    assert got != 0.1  # 0.1 is not dyadic
    assert abs(got - 0.1) <= 0.5 / codec.scale


def test_fixed_point_negative_in_upper_half(codec, field):
    assert codec.encode(-1.0) == field.p - codec.scale


def test_fixed_point_range_error(codec):
    with pytest.raises(RangeError):
        codec.encode(codec.range_bound + 1)


def test_codec_must_fit_field(tiny_field):
    with pytest.raises(ParameterError):
        FixedPointCodec(tiny_field, frac_bits=4, range_bound=8)


def test_serialization_round_trip(field, rng):
    for _ in range(20):
        a = field.rand(rng)
        raw = field.to_bytes(a)
        assert len(raw) == ELEMENT_BYTES
        assert field.from_bytes(raw) == a


def test_serialization_rejects_non_elements(field):
    with pytest.raises(ParameterError):
        field.from_bytes((field.p).to_bytes(8, "little"))
