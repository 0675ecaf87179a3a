"""Simulated semi-honest computation nodes over an instrumented message bus.

The bus is a deterministic round-based scheduler: all sends within a round are
buffered and delivered together at a barrier, and every exchange advances the
round counter once. Byte counts assume the 8-byte wire format for field
elements. Beaver triples and truncation pairs come from a simulated trusted
dealer (preprocessing, accounted separately from online traffic).

Fixed-point truncation opens a statistically masked value and applies a public
2^-f scale correction; the carry of the masked low bits makes the rounding
probabilistic, so each truncation costs at most one unit in the last place and
is unbiased.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import ParameterError, ProtocolError
from .field import ELEMENT_BYTES, FixedPointCodec, PrimeField

# statistical masking head-room for truncation (bits); truncation refuses to
# run with fewer masking bits than this
MIN_MASK_BITS = 8
MAX_MASK_BITS = 40

LATENCY_PRESETS_MS = {"local": 0.5, "remote": 25.0, "distant": 45.0}
PER_BYTE_MS = 8e-6  # nominal 1 Gbit/s serialization term


@dataclass(frozen=True)
class LatencyModel:
    """Nominal per-link delay; produces model time, never wall-clock claims."""

    preset: str
    one_way_ms: float
    per_byte_ms: float = PER_BYTE_MS

    def model_time_ms(self, rounds: int, total_bytes: int) -> float:
        return rounds * self.one_way_ms + total_bytes * self.per_byte_ms


def latency_model(preset: str) -> LatencyModel:
    if preset not in LATENCY_PRESETS_MS:
        raise ParameterError(f"unknown latency preset {preset!r}")
    return LatencyModel(preset, LATENCY_PRESETS_MS[preset])


@dataclass
class TranscriptMetrics:
    """Per-run communication accounting.

    rounds only advance at bus barriers; per-key protocol instances are
    independent, so merging them in parallel takes the max of their rounds
    while bytes and message counts add up.
    """

    link_bytes: dict = dc_field(default_factory=dict)  # (src, dst) -> bytes
    messages: int = 0
    rounds: int = 0
    client_elements: int = 0  # field elements sent client->node
    client_bytes: int = 0
    preprocessing_bytes: int = 0  # dealer -> node material

    def record(self, src, dst, nbytes: int):
        key = (src, dst)
        self.link_bytes[key] = self.link_bytes.get(key, 0) + nbytes
        self.messages += 1

    @property
    def node_bytes(self) -> int:
        return sum(self.link_bytes.values())

    @property
    def total_bytes(self) -> int:
        return self.node_bytes + self.client_bytes

    def merge_parallel(self, other: "TranscriptMetrics"):
        for k, v in other.link_bytes.items():
            self.link_bytes[k] = self.link_bytes.get(k, 0) + v
        self.messages += other.messages
        self.rounds = max(self.rounds, other.rounds)
        self.client_elements += other.client_elements
        self.client_bytes += other.client_bytes
        self.preprocessing_bytes += other.preprocessing_bytes

    def merge_serial(self, other: "TranscriptMetrics"):
        rounds = self.rounds + other.rounds
        self.merge_parallel(other)
        self.rounds = rounds


class MessageBus:
    """Round-based broadcast/scatter primitive among a fixed node set."""

    def __init__(self, node_count: int, metrics: TranscriptMetrics | None = None):
        self.node_count = node_count
        self.metrics = metrics if metrics is not None else TranscriptMetrics()

    def exchange(self, values_by_node: dict[int, list[int]]) -> dict[int, list[int]]:
        """Every participating node broadcasts its list to the others; all of
        them see the full map after the barrier. One round."""
        holders = sorted(values_by_node)
        if len(holders) < 2:
            raise ProtocolError("an exchange needs at least two participants")
        for src in holders:
            nbytes = ELEMENT_BYTES * len(values_by_node[src])
            for dst in holders:
                if dst != src:
                    self.metrics.record(src, dst, nbytes)
        self.metrics.rounds += 1
        return values_by_node

    def scatter(self, rows: dict[int, dict[int, list[int]]]) -> dict[int, list[list[int]]]:
        """Point-to-point: rows[src][dst] is delivered to dst. One round.
        Returns received[dst] = payload list in ascending src order."""
        received: dict[int, list[list[int]]] = {}
        for src in sorted(rows):
            for dst in sorted(rows[src]):
                payload = rows[src][dst]
                if dst != src:
                    self.metrics.record(src, dst, ELEMENT_BYTES * len(payload))
                received.setdefault(dst, []).append(payload)
        self.metrics.rounds += 1
        return received


# -- preprocessing material ---------------------------------------------------


@dataclass
class BeaverTriple:
    """Shares of random (a, b, a*b) among a holder set; single use."""

    a: list[int]
    b: list[int]
    c: list[int]
    holders: tuple
    used: bool = False


@dataclass
class TruncPair:
    """Shares of a random mask s and of s >> shift_bits; single use."""

    masked: list[int]
    shifted: list[int]
    holders: tuple
    int_bits: int
    shift_bits: int
    used: bool = False


class TrustedDealer:
    """Simulated semi-honest preprocessing dealer.

    Hands out Beaver triples and truncation pairs; its traffic is counted as
    preprocessing, not online communication.
    """

    def __init__(self, field: PrimeField, rng: np.random.Generator,
                 metrics: TranscriptMetrics | None = None):
        self.field = field
        self.rng = rng
        self.metrics = metrics

    def _count(self, elements: int):
        if self.metrics is not None:
            self.metrics.preprocessing_bytes += ELEMENT_BYTES * elements

    def triple(self, holders: tuple) -> BeaverTriple:
        f = self.field
        a = f.rand(self.rng)
        b = f.rand(self.rng)
        n = len(holders)
        self._count(3 * n)
        return BeaverTriple(
            f.share(a, n, self.rng), f.share(b, n, self.rng),
            f.share(f.mul(a, b), n, self.rng), tuple(holders),
        )

    def trunc_pair(self, int_bits: int, shift_bits: int, holders: tuple) -> TruncPair:
        """Mask for truncating a value whose signed integer magnitude is below
        2^int_bits by shift_bits bits. The mask width adds as many statistical
        hiding bits as the field leaves room for."""
        mask_bits = min(MAX_MASK_BITS, self.field.p.bit_length() - 3 - int_bits)
        if mask_bits < MIN_MASK_BITS:
            raise ParameterError(
                f"cannot truncate a {int_bits}-bit value in this field: "
                f"only {mask_bits} masking bits would remain"
            )
        width = int_bits + 1 + mask_bits
        if width <= 63:
            s = int(self.rng.integers(0, 1 << width, dtype=np.uint64))
        else:
            s = (int(self.rng.integers(0, 1 << (width - 32), dtype=np.uint64)) << 32) | int(
                self.rng.integers(0, 1 << 32, dtype=np.uint64)
            )
        n = len(holders)
        self._count(2 * n)
        return TruncPair(
            self.field.share(s, n, self.rng),
            self.field.share(s >> shift_bits, n, self.rng),
            tuple(holders), int_bits, shift_bits,
        )


# -- node state ---------------------------------------------------------------


@dataclass
class NodeState:
    """One computation node: its inbox and per-key accumulated shares.

    A node only ever holds its own shares; everything it learns beyond that
    arrives through bus exchanges (opened values).
    """

    node_id: int
    inbox: list = dc_field(default_factory=list)  # list[ShareMessage]
    _acc: dict = dc_field(default_factory=dict)  # key -> [flag_sum, value_sum]
    _acc_built: bool = False

    def _build(self, field: PrimeField):
        acc: dict[int, list[int]] = {}
        for msg in self.inbox:
            slot = acc.setdefault(msg.key, [0, 0])
            slot[0] = field.add(slot[0], msg.flag_share)
            slot[1] = field.add(slot[1], msg.value_share)
        self._acc = acc
        self._acc_built = True

    def accumulate(self, field: PrimeField, key: int) -> tuple[int, int]:
        """Local (flag-sum, value-sum) shares for one key; no communication."""
        if not self._acc_built:
            self._build(field)
        slot = self._acc.get(key)
        return (slot[0], slot[1]) if slot else (0, 0)

    def key_histogram(self) -> dict[int, int]:
        """The node's observable view: how many triples arrived per key."""
        hist: dict[int, int] = {}
        for msg in self.inbox:
            hist[msg.key] = hist.get(msg.key, 0) + 1
        return hist


def accumulate(node: NodeState, field: PrimeField, key: int) -> tuple[int, int]:
    return node.accumulate(field, key)


# -- share-level protocol operations ------------------------------------------


def open_shares(
    bus: MessageBus, field: PrimeField, shares: dict[int, int], expected: int | None = None
) -> int:
    """Broadcast every holder's share and reconstruct. All holders learn it.
    With ``expected`` set, a missing contribution stalls the protocol."""
    if not shares:
        raise ProtocolError("no contributions to open")
    if expected is not None and len(shares) != expected:
        raise ProtocolError(
            f"protocol stall: {len(shares)} of {expected} holders contributed"
        )
    opened = bus.exchange({h: [v] for h, v in shares.items()})
    return sum(v[0] for v in opened.values()) % field.p


def share_constant(field: PrimeField, value: int, holders: tuple) -> dict[int, int]:
    """Trivial sharing of a public constant (first holder carries it)."""
    return {h: (value % field.p if i == 0 else 0) for i, h in enumerate(holders)}


def add_shares(field: PrimeField, x: dict[int, int], y: dict[int, int]) -> dict[int, int]:
    if x.keys() != y.keys():
        raise ProtocolError("addends are shared among different holder sets")
    return {h: field.add(x[h], y[h]) for h in x}


def sub_shares(field: PrimeField, x: dict[int, int], y: dict[int, int]) -> dict[int, int]:
    if x.keys() != y.keys():
        raise ProtocolError("operands are shared among different holder sets")
    return {h: field.sub(x[h], y[h]) for h in x}


def scale_shares(field: PrimeField, x: dict[int, int], c: int) -> dict[int, int]:
    c %= field.p
    return {h: field.mul(x[h], c) for h in x}


def beaver_multiply(
    bus: MessageBus,
    field: PrimeField,
    x: dict[int, int],
    y: dict[int, int],
    triple: BeaverTriple,
) -> dict[int, int]:
    """One secure multiplication: open x-a and y-b (two elements per node in a
    single round), then assemble shares of x*y. Consumes the triple."""
    if triple.used:
        raise ProtocolError("Beaver triple reuse")
    holders = triple.holders
    if set(holders) != set(x) or set(holders) != set(y):
        raise ProtocolError("triple holder set does not match the operands")
    triple.used = True
    idx = {h: i for i, h in enumerate(holders)}
    blinded = {
        h: [field.sub(x[h], triple.a[idx[h]]), field.sub(y[h], triple.b[idx[h]])]
        for h in holders
    }
    opened = bus.exchange(blinded)
    d = sum(v[0] for v in opened.values()) % field.p
    e = sum(v[1] for v in opened.values()) % field.p
    out = {}
    for i, h in enumerate(holders):
        z = triple.c[i]
        z = field.add(z, field.mul(d, triple.b[i]))
        z = field.add(z, field.mul(e, triple.a[i]))
        if i == 0:
            z = field.add(z, field.mul(d, e))
        out[h] = z
    return out


def truncate_scale(
    bus: MessageBus,
    field: PrimeField,
    shares: dict[int, int],
    pair: TruncPair,
) -> dict[int, int]:
    """Drop pair.shift_bits of fixed-point scale from a shared value.

    Opens the masked, offset value (one round), floor-divides it publicly by
    2^shift and subtracts the mask's shifted shares. The result is the exact
    shifted value plus a {0,1} carry with probability equal to the dropped
    fraction, i.e. unbiased rounding within one ulp.
    """
    if pair.used:
        raise ProtocolError("truncation pair reuse")
    if set(pair.holders) != set(shares):
        raise ProtocolError("truncation pair holder set does not match the value")
    pair.used = True
    offset = 1 << pair.int_bits
    idx = {h: i for i, h in enumerate(pair.holders)}
    masked = {}
    for h in shares:
        v = field.add(shares[h], pair.masked[idx[h]])
        if idx[h] == 0:
            v = field.add(v, offset)
        masked[h] = v
    opened = open_shares(bus, field, masked)
    public_hi = opened >> pair.shift_bits
    out = {}
    for h in shares:
        i = idx[h]
        v = field.neg(pair.shifted[i])
        if i == 0:
            v = field.add(v, field.lift(public_hi - (offset >> pair.shift_bits)))
        out[h] = v
    return out


def fixed_div(
    bus: MessageBus,
    field: PrimeField,
    codec: FixedPointCodec,
    dealer: TrustedDealer,
    dividend: dict[int, int],
    divisor: dict[int, int],
    divisor_range: tuple[float, float],
    quotient_bound: float,
) -> dict[int, int]:
    """Shares of dividend/divisor at the codec scale.

    dividend is fixed-point encoded, divisor is an integer-scale share (so
    divisor-by-fixed-point products need no truncation). The public divisor
    range [lo, hi] with lo >= 1 drives a Newton-Raphson reciprocal iteration
    from w0 = 2/(lo+hi); two residual-refinement steps afterwards squash the
    accumulated truncation noise, keeping the result within a few ulp of the
    exact quotient. Round count is public and data-independent.
    """
    lo, hi = divisor_range
    if lo <= 0 or lo > hi:
        raise ParameterError(f"invalid divisor range [{lo}, {hi}]")
    if quotient_bound <= 0:
        raise ParameterError("quotient_bound must be positive")
    f_bits = codec.frac_bits
    holders = tuple(sorted(dividend))
    if set(divisor) != set(holders):
        raise ProtocolError("dividend and divisor holder sets differ")

    contraction = (hi - lo) / (hi + lo)
    if contraction == 0.0:
        iterations = 1
    else:
        # error after i steps is contraction^(2^i); land below 2^-(f+2)
        iterations = max(1, math.ceil(math.log2((f_bits + 2) / -math.log2(contraction))))
        iterations = min(64, iterations)

    small_bits = 2 + 2 * f_bits  # |w*e| < 2 during the iteration
    q_mag = max(2.0, quotient_bound, 3.0 * hi * hi * quotient_bound * 2.0 ** (-f_bits))
    q_bits = max(1, math.ceil(math.log2(q_mag)) + 1) + 2 * f_bits

    w = share_constant(field, codec.encode(2.0 / (lo + hi)), holders)
    two = field.lift(2 << f_bits)
    for _ in range(iterations):
        bw = beaver_multiply(bus, field, divisor, w, dealer.triple(holders))
        e = {h: field.sub(two if i == 0 else 0, bw[h]) for i, h in enumerate(holders)}
        we = beaver_multiply(bus, field, w, e, dealer.triple(holders))
        w = truncate_scale(bus, field, we, dealer.trunc_pair(small_bits, f_bits, holders))

    # quotient estimate, then two refinements with exact residuals
    aw = beaver_multiply(bus, field, dividend, w, dealer.triple(holders))
    y = truncate_scale(bus, field, aw, dealer.trunc_pair(q_bits, f_bits, holders))
    for _ in range(2):
        by = beaver_multiply(bus, field, divisor, y, dealer.triple(holders))
        resid = sub_shares(field, dividend, by)
        wr = beaver_multiply(bus, field, w, resid, dealer.triple(holders))
        delta = truncate_scale(bus, field, wr, dealer.trunc_pair(q_bits, f_bits, holders))
        y = add_shares(field, y, delta)
    return y


def distributed_laplace(
    bus: MessageBus,
    field: PrimeField,
    codec: FixedPointCodec,
    scale: float,
    node_rngs: list[np.random.Generator],
) -> dict[int, int]:
    """Shares of one Laplace(scale) variate assembled from local samples only.

    Each node draws g1, g2 ~ Gamma(1/n, scale) and reshares g1 - g2; the sum
    of n such differences is exactly Laplace(scale) (up to fixed-point
    rounding of each contribution). One scatter round.
    """
    if scale <= 0:
        raise ParameterError("noise scale must be positive")
    n = len(node_rngs)
    if n < 2:
        raise ParameterError("need at least two nodes for distributed noise")
    shape = 1.0 / n
    rows = {}
    own = {}
    for i, rng in enumerate(node_rngs):
        g = float(rng.gamma(shape, scale)) - float(rng.gamma(shape, scale))
        pieces = field.share(codec.encode(g), n, rng)
        own[i] = pieces[i]
        rows[i] = {j: [pieces[j]] for j in range(n) if j != i}
    received = bus.scatter(rows)
    out = {}
    for j in range(n):
        total = own[j]
        for payload in received.get(j, []):
            total = field.add(total, payload[0])
        out[j] = total
    return out


class NoiseBank:
    """Pre-generated noise shares, filled offline before data arrives."""

    def __init__(self):
        self._bank: dict = {}

    def deposit(self, tag, shares: dict[int, int]):
        self._bank.setdefault(tag, []).append(shares)

    def withdraw(self, tag) -> dict[int, int]:
        queue = self._bank.get(tag)
        if not queue:
            raise ProtocolError(f"no banked noise left for {tag!r}")
        return queue.pop(0)

    def __len__(self):
        return sum(len(q) for q in self._bank.values())


def validate_flag(
    bus: MessageBus,
    field: PrimeField,
    flag_shares: dict[int, int],
    triple: BeaverTriple,
) -> tuple[bool, int]:
    """Check x*(1-x) = 0 among the recipients of one pair.

    Returns (accepted, opened_product). Any flag outside {0,1} opens to a
    nonzero field element, since a prime field has no zero divisors.
    """
    holders = tuple(sorted(flag_shares))
    one_minus = {
        h: field.sub(1 if i == 0 else 0, flag_shares[h]) for i, h in enumerate(holders)
    }
    prod = beaver_multiply(bus, field, flag_shares, one_minus, triple)
    opened = open_shares(bus, field, prod)
    return opened == 0, opened
