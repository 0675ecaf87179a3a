"""End-to-end orchestration: data collection, optional input validation, and
per-key frequency/mean estimation over the simulated node runtime.

Per-key protocol instances are independent: every key draws its noise,
triples, and masks from substreams keyed on (seed, key), so keys can run in
any order (or conceptually in parallel) with identical outputs, and the merged
transcript takes the maximum of per-key round counts.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy import stats as sps

from .accounting import (
    PrivacyReport,
    ProtocolParams,
    build_report,
    sensitivity_frequency,
    sensitivity_mean,
)
from .collection import (
    ELEMENTS_PER_MESSAGE,
    MESSAGE_BYTES,
    KeyValuePair,
    ShareMessage,
    check_pairs,
    client_prepare,
    dummy_generate,
    shuffle_channel,
)
from .errors import ParameterError
from .field import FixedPointCodec, PrimeField
from .runtime import (
    MessageBus,
    NodeState,
    NoiseBank,
    TranscriptMetrics,
    TrustedDealer,
    add_shares,
    distributed_laplace,
    fixed_div,
    open_shares,
    scale_shares,
    validate_flag,
)

# substream tags so every protocol phase has an independent, replayable stream
_RNG_CLIENT = 10
_RNG_DUMMY = 20
_RNG_SHUFFLE = 30
_RNG_NOISE = 40
_RNG_DEALER = 50


@dataclass(frozen=True)
class StatisticsRequest:
    """What to compute and under which output budget semantics."""

    statistic: str = "both"  # frequency | mean | both
    keys: tuple | None = None  # None means every key in [0, num_keys)
    noise: bool = True
    confidence_beta: float = 0.05

    def __post_init__(self):
        if self.statistic not in ("frequency", "mean", "both"):
            raise ParameterError(f"unknown statistic {self.statistic!r}")

    @property
    def wants_frequency(self) -> bool:
        return self.statistic in ("frequency", "both")

    @property
    def wants_mean(self) -> bool:
        return self.statistic in ("mean", "both")


@dataclass
class PrivateStatisticsReport:
    """Per-key outputs plus the accounting that produced them."""

    frequencies: dict
    means: dict
    key_flags: dict  # key -> ok | no_data | below_min_frequency
    privacy: PrivacyReport
    metrics: TranscriptMetrics
    ingest_errors: list = dc_field(default_factory=list)
    validation_rejects: list = dc_field(default_factory=list)  # (key, pair_tag)
    dummy_pair_count: int = 0
    real_pair_count: int = 0


def default_codec(field: PrimeField | None = None) -> FixedPointCodec:
    return FixedPointCodec(field if field is not None else PrimeField())


def divisor_upper_bound(params: ProtocolParams) -> int:
    """Public upper bound on any key's frequency used by secure division:
    client count plus a 1-1e-6 quantile of the total dummies per key."""
    dummy_tail = int(
        sps.nbinom.ppf(1.0 - 1e-6, params.dummy_parties, params.dummy_rate)
    )
    return params.num_clients + max(1, dummy_tail)


def _noise_rngs(seed: int, key: int, statistic_tag: int, nodes: int):
    return [
        np.random.default_rng([seed, _RNG_NOISE, key, statistic_tag, i])
        for i in range(nodes)
    ]


# -- single-key protocols ------------------------------------------------------


def frequency_protocol(
    bus: MessageBus,
    field: PrimeField,
    codec: FixedPointCodec,
    nodes: list[NodeState],
    key: int,
    noise_scale: float | None,
    node_rngs: list | None = None,
    noise_shares: dict | None = None,
) -> float:
    """Open the flag sum for one key, plus Laplace(noise_scale) when noisy.

    With noise_scale None the exact count is opened (exact mode: only the
    share-distribution leakage budget is spent).
    """
    flag_sums = {i: node.accumulate(field, key)[0] for i, node in enumerate(nodes)}
    if noise_scale is None:
        return float(field.signed(open_shares(bus, field, flag_sums)))
    lifted = scale_shares(field, flag_sums, codec.scale)
    if noise_shares is None:
        noise_shares = distributed_laplace(bus, field, codec, noise_scale, node_rngs)
    noisy = add_shares(field, lifted, noise_shares)
    return codec.decode(open_shares(bus, field, noisy))


def mean_protocol(
    bus: MessageBus,
    field: PrimeField,
    codec: FixedPointCodec,
    dealer: TrustedDealer,
    nodes: list[NodeState],
    key: int,
    divisor_range: tuple[float, float],
    quotient_bound: float,
    noise_scale: float | None,
    node_rngs: list | None = None,
    noise_shares: dict | None = None,
) -> float:
    """Open sum/count for one key via secure division, noisy when requested."""
    flag_sums = {i: node.accumulate(field, key)[0] for i, node in enumerate(nodes)}
    value_sums = {i: node.accumulate(field, key)[1] for i, node in enumerate(nodes)}
    quotient = fixed_div(
        bus, field, codec, dealer, value_sums, flag_sums, divisor_range, quotient_bound
    )
    if noise_scale is not None:
        if noise_shares is None:
            noise_shares = distributed_laplace(bus, field, codec, noise_scale, node_rngs)
        quotient = add_shares(field, quotient, noise_shares)
    return codec.decode(open_shares(bus, field, quotient))


# -- full pipeline -------------------------------------------------------------


def collect(
    datasets: list[list[KeyValuePair]],
    params: ProtocolParams,
    codec: FixedPointCodec,
    seed: int,
    metrics: TranscriptMetrics,
    with_dummies: bool = True,
):
    """Run the collection phase; returns (nodes, shuffler_view, ingest_errors,
    excluded_clients, real_pairs, dummy_pairs). Clients with invariant
    violations are excluded and reported, mirroring ingestion-time rejection."""
    batches = []
    ingest_errors = []
    excluded = set()
    real_pairs = 0
    for i, pairs in enumerate(datasets):
        problems = check_pairs(list(pairs), params)
        if problems:
            ingest_errors.append(f"client {i}: " + "; ".join(problems))
            excluded.add(i)
            continue
        rng = np.random.default_rng([seed, _RNG_CLIENT, i])
        batches.append(client_prepare(list(pairs), params, codec, rng))
        real_pairs += len(pairs)
    dummy_pairs = 0
    if with_dummies:
        for j in range(params.dummy_parties):
            rng = np.random.default_rng([seed, _RNG_DUMMY, j])
            batch = dummy_generate(params, codec, rng)
            dummy_pairs += len(batch) // params.subset_size
            batches.append(batch)
    message_count = sum(len(b) for b in batches)
    metrics.client_elements += ELEMENTS_PER_MESSAGE * message_count
    metrics.client_bytes += MESSAGE_BYTES * message_count
    inboxes, view = shuffle_channel(
        batches, params.nodes, np.random.default_rng([seed, _RNG_SHUFFLE])
    )
    nodes = [
        NodeState(i, [ShareMessage.from_bytes(i, raw) for raw in inboxes[i]])
        for i in range(params.nodes)
    ]
    return nodes, view, ingest_errors, excluded, real_pairs, dummy_pairs


def validation_sweep(
    nodes: list[NodeState],
    field: PrimeField,
    seed: int,
) -> tuple[list, TranscriptMetrics]:
    """Validate every received pair's flag among its recipients and drop the
    pairs that open to a nonzero product. Validations are independent, so the
    sweep's round count is the (common) per-validation round count."""
    by_tag: dict[int, dict[int, ShareMessage]] = {}
    for node in nodes:
        for msg in node.inbox:
            by_tag.setdefault(msg.pair_tag, {})[node.node_id] = msg
    sweep_metrics = TranscriptMetrics()
    dealer_rng = np.random.default_rng([seed, _RNG_DEALER, 0xFA6])
    rejects = []
    bad_tags = set()
    for tag in sorted(by_tag):
        group = by_tag[tag]
        one = TranscriptMetrics()
        bus = MessageBus(len(group), one)
        dealer = TrustedDealer(field, dealer_rng, one)
        holders = tuple(sorted(group))
        flag_shares = {h: group[h].flag_share for h in holders}
        ok, _ = validate_flag(bus, field, flag_shares, dealer.triple(holders))
        if not ok:
            rejects.append((group[holders[0]].key, tag))
            bad_tags.add(tag)
        sweep_metrics.merge_parallel(one)
    if bad_tags:
        for node in nodes:
            node.inbox = [m for m in node.inbox if m.pair_tag not in bad_tags]
            node._acc_built = False
    return rejects, sweep_metrics


def run_end_to_end(
    datasets: list[list[KeyValuePair]],
    request: StatisticsRequest,
    params: ProtocolParams,
    seed: int,
    codec: FixedPointCodec | None = None,
    validate: bool = False,
    with_dummies: bool = True,
    offline_noise: bool = False,
) -> PrivateStatisticsReport:
    """Full pipeline: prepare, shuffle, (validate,) per-key protocols, report."""
    codec = codec if codec is not None else default_codec()
    field = codec.field
    metrics = TranscriptMetrics()

    nodes, _view, ingest_errors, excluded, real_pairs, dummy_pairs = collect(
        datasets, params, codec, seed, metrics, with_dummies
    )

    rejects = []
    if validate:
        rejects, sweep_metrics = validation_sweep(nodes, field, seed)
        metrics.merge_serial(sweep_metrics)

    # harness-side ground truth for assumption checks and no-data detection
    present: dict[int, int] = {}
    for node in nodes:
        for k, c in node.key_histogram().items():
            present[k] = present.get(k, 0) + c
    true_counts = [0] * params.num_keys
    for i, pairs in enumerate(datasets):
        if i in excluded:
            continue
        for kv in pairs:
            true_counts[kv.key] += 1

    keys = list(request.keys) if request.keys is not None else list(range(params.num_keys))
    freq_scale = (
        sensitivity_frequency(params.max_keys) / params.eps_frequency
        if request.noise
        else None
    )
    mean_scale = (
        sensitivity_mean(params.max_keys, params.value_radius, params.min_frequency)
        / params.eps_mean
        if request.noise
        else None
    )
    div_hi = divisor_upper_bound(params)
    quotient_bound = abs(params.value_center) + params.value_radius + 1.0

    bank = NoiseBank()
    if offline_noise and request.noise:
        offline_metrics = TranscriptMetrics()
        for key in keys:
            one = TranscriptMetrics()
            bus = MessageBus(params.nodes, one)
            if request.wants_frequency:
                bank.deposit(
                    (key, "freq"),
                    distributed_laplace(
                        bus, field, codec, freq_scale, _noise_rngs(seed, key, 0, params.nodes)
                    ),
                )
            if request.wants_mean:
                bank.deposit(
                    (key, "mean"),
                    distributed_laplace(
                        bus, field, codec, mean_scale, _noise_rngs(seed, key, 1, params.nodes)
                    ),
                )
            offline_metrics.merge_parallel(one)
        metrics.merge_serial(offline_metrics)

    frequencies: dict[int, float] = {}
    means: dict[int, float | None] = {}
    key_flags: dict[int, str] = {}
    online = TranscriptMetrics()
    for key in keys:
        one = TranscriptMetrics()
        bus = MessageBus(params.nodes, one)
        dealer = TrustedDealer(field, np.random.default_rng([seed, _RNG_DEALER, key]), one)
        if request.wants_frequency:
            noise_shares = bank.withdraw((key, "freq")) if offline_noise and request.noise else None
            frequencies[key] = frequency_protocol(
                bus, field, codec, nodes, key, freq_scale,
                _noise_rngs(seed, key, 0, params.nodes), noise_shares,
            )
        flag = "ok"
        if request.wants_mean:
            if present.get(key, 0) == 0:
                means[key] = None
                flag = "no_data"
            else:
                if 0 < true_counts[key] < params.min_frequency:
                    flag = "below_min_frequency"
                noise_shares = (
                    bank.withdraw((key, "mean")) if offline_noise and request.noise else None
                )
                means[key] = mean_protocol(
                    bus, field, codec, dealer, nodes, key,
                    (params.min_frequency, div_hi), quotient_bound, mean_scale,
                    _noise_rngs(seed, key, 1, params.nodes), noise_shares,
                )
        key_flags[key] = flag
        online.merge_parallel(one)
    metrics.merge_serial(online)

    privacy = build_report(
        params, request.statistic, request.noise, request.confidence_beta
    )
    if rejects:
        privacy.notes.append(f"validation rejected {len(rejects)} pairs")
    gamma_violations = sum(1 for f in key_flags.values() if f == "below_min_frequency")
    if gamma_violations:
        privacy.notes.append(
            f"{gamma_violations} keys fall below the assumed minimum frequency; "
            "their mean DP guarantee is void"
        )
    return PrivateStatisticsReport(
        frequencies=frequencies,
        means=means,
        key_flags=key_flags,
        privacy=privacy,
        metrics=metrics,
        ingest_errors=ingest_errors,
        validation_rejects=rejects,
        dummy_pair_count=dummy_pairs,
        real_pair_count=real_pairs,
    )


def plaintext_statistics(
    datasets: list[list[KeyValuePair]], num_keys: int
) -> tuple[list[int], list[float | None]]:
    """Brute-force reference: exact per-key counts and means."""
    counts = [0] * num_keys
    sums = [0.0] * num_keys
    for pairs in datasets:
        for kv in pairs:
            counts[kv.key] += 1
            sums[kv.key] += kv.value
    means = [sums[k] / counts[k] if counts[k] else None for k in range(num_keys)]
    return counts, means
