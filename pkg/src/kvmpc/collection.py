"""Client-side share preparation, dummy generation, and the anonymizing
shuffle channel.

Each key-value pair is split into `subset_size` additive shares of its value
and of a presence flag (1 for real pairs, 0 for dummies), addressed to a
uniform random subset of nodes chosen without replacement. Envelopes carry an
opaque serialized payload and no client identity; the shuffler only ever
learns how many envelopes each submitting party handed in.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .accounting import ProtocolParams
from .distributions import geometric_sample
from .errors import ParameterError, RangeError
from .field import FixedPointCodec, PrimeField

MESSAGE_BYTES = 32  # key, flag share, value share, pair tag: 8 bytes each
ELEMENTS_PER_MESSAGE = 2  # flag share + value share


@dataclass(frozen=True)
class KeyValuePair:
    key: int
    value: float


@dataclass(frozen=True)
class ShareMessage:
    """The wire triple one node receives for one pair, plus a random pair tag
    that lets the recipients of the same pair run validation together."""

    recipient: int
    key: int
    flag_share: int
    value_share: int
    pair_tag: int

    def to_bytes(self) -> bytes:
        return (
            self.key.to_bytes(8, "little")
            + self.flag_share.to_bytes(8, "little")
            + self.value_share.to_bytes(8, "little")
            + self.pair_tag.to_bytes(8, "little")
        )

    @staticmethod
    def from_bytes(recipient: int, raw: bytes) -> "ShareMessage":
        if len(raw) != MESSAGE_BYTES:
            raise ParameterError(f"payload must be {MESSAGE_BYTES} bytes, got {len(raw)}")
        return ShareMessage(
            recipient=recipient,
            key=int.from_bytes(raw[0:8], "little"),
            flag_share=int.from_bytes(raw[8:16], "little"),
            value_share=int.from_bytes(raw[16:24], "little"),
            pair_tag=int.from_bytes(raw[24:32], "little"),
        )


@dataclass(frozen=True)
class Envelope:
    """Addressed, origin-free carrier of one serialized ShareMessage."""

    recipient: int
    payload: bytes


@dataclass(frozen=True)
class ShufflerView:
    """Everything the shuffle channel learns: per-party envelope counts."""

    party_counts: tuple


def sample_subset(total: int, size: int, rng: np.random.Generator) -> list[int]:
    """Uniform size-subset of range(total) without replacement (partial
    Fisher-Yates, O(size) swaps)."""
    if not 1 <= size <= total:
        raise ParameterError(f"subset size {size} not in [1, {total}]")
    pool = list(range(total))
    for i in range(size):
        j = int(rng.integers(i, total))
        pool[i], pool[j] = pool[j], pool[i]
    return pool[:size]


def _share_pair(
    key: int,
    flag: int,
    value_encoded: int,
    params: ProtocolParams,
    field: PrimeField,
    rng: np.random.Generator,
) -> list[Envelope]:
    t = params.subset_size
    recipients = sample_subset(params.nodes, t, rng)
    flag_shares = field.share(flag, t, rng)
    value_shares = field.share(value_encoded, t, rng)
    tag = int(rng.integers(0, 1 << 62, dtype=np.uint64))
    return [
        Envelope(r, ShareMessage(r, key, flag_shares[i], value_shares[i], tag).to_bytes())
        for i, r in enumerate(recipients)
    ]


def check_pairs(pairs: list[KeyValuePair], params: ProtocolParams) -> list[str]:
    """Client-set invariant violations, empty when the set is admissible."""
    problems = []
    if len(pairs) > params.max_keys:
        problems.append(f"client holds {len(pairs)} pairs, limit is {params.max_keys}")
    keys = [kv.key for kv in pairs]
    if len(set(keys)) != len(keys):
        problems.append("duplicate keys within one client set")
    for kv in pairs:
        if not 0 <= kv.key < params.num_keys:
            problems.append(f"key {kv.key} outside [0, {params.num_keys})")
        if not params.value_low <= kv.value <= params.value_high:
            problems.append(
                f"value {kv.value} for key {kv.key} outside "
                f"[{params.value_low}, {params.value_high}]"
            )
    return problems


def client_prepare(
    pairs: list[KeyValuePair],
    params: ProtocolParams,
    codec: FixedPointCodec,
    rng: np.random.Generator,
) -> list[Envelope]:
    """Turn one client's pairs into addressed envelopes (flag 1).

    An empty set legally produces no envelopes. Raises on invariant
    violations; batch callers should screen with check_pairs first.
    """
    problems = check_pairs(pairs, params)
    if problems:
        if any(p.startswith("value") for p in problems):
            raise RangeError("; ".join(problems))
        raise ParameterError("; ".join(problems))
    envelopes = []
    for kv in pairs:
        envelopes.extend(
            _share_pair(kv.key, 1, codec.encode(kv.value), params, codec.field, rng)
        )
    return envelopes


def dummy_generate(
    params: ProtocolParams,
    codec: FixedPointCodec,
    rng: np.random.Generator,
) -> list[Envelope]:
    """One dummy party's envelopes: per key, a geometric(dummy_rate) number of
    pairs with flag 0 and value 0, shared and addressed exactly like real ones."""
    envelopes = []
    for key in range(params.num_keys):
        for _ in range(geometric_sample(params.dummy_rate, rng)):
            envelopes.extend(_share_pair(key, 0, 0, params, codec.field, rng))
    return envelopes


def multi_party_dummy_generate(
    count: int,
    params: ProtocolParams,
    codec: FixedPointCodec,
    rngs: list[np.random.Generator],
) -> list[list[Envelope]]:
    """Independent dummy batches from ``count`` parties (one rng each)."""
    if count < 1:
        raise ParameterError("need at least one dummy party")
    if len(rngs) != count:
        raise ParameterError(f"expected {count} generators, got {len(rngs)}")
    return [dummy_generate(params, codec, rng) for rng in rngs]


def shuffle_channel(
    batches: list[list[Envelope]],
    node_count: int,
    rng: np.random.Generator,
) -> tuple[list[list[bytes]], ShufflerView]:
    """Deliver envelopes to per-node inboxes in uniformly random order.

    ``batches`` holds each submitting party's envelopes (clients and dummy
    parties alike); the view retains only their sizes.
    """
    view = ShufflerView(tuple(len(batch) for batch in batches))
    flat = [env for batch in batches for env in batch]
    order = rng.permutation(len(flat))
    inboxes: list[list[bytes]] = [[] for _ in range(node_count)]
    for idx in order:
        env = flat[int(idx)]
        inboxes[env.recipient].append(env.payload)
    return inboxes, view
