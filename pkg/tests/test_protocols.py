"""End-to-end pipeline: exact-mode equivalence, noise calibration,
determinism, assumption handling."""

import math

import numpy as np
import pytest
from scipy import stats as sps

from kvmpc.accounting import ProtocolParams, build_report
from kvmpc.collection import KeyValuePair
from kvmpc.errors import ParameterError
from kvmpc.protocols import (
    StatisticsRequest,
    collect,
    divisor_upper_bound,
    frequency_protocol,
    plaintext_statistics,
    run_end_to_end,
    validation_sweep,
    default_codec,
)
from kvmpc.runtime import MessageBus, TranscriptMetrics

ULP_TOL = 4 / 2**20


def make_params(**kw):
    base = dict(nodes=5, subset_size=2, dummy_rate=0.5, max_keys=3,
                min_frequency=1, value_radius=5.0, num_keys=6, num_clients=12,
                eps_frequency=1.0, eps_mean=1.0)
    base.update(kw)
    return ProtocolParams(**base)


def random_instance(params, seed):
    rng = np.random.default_rng(seed)
    data = []
    for _ in range(params.num_clients):
        k = int(rng.integers(0, params.max_keys + 1))
        keys = rng.choice(params.num_keys, size=min(k, params.num_keys), replace=False)
        data.append([
            KeyValuePair(int(key), float(rng.uniform(params.value_low, params.value_high)))
            for key in keys
        ])
    return data


def test_exact_mode_matches_plaintext_oracle():
    params = make_params()
    for seed in range(20):
        data = random_instance(params, seed)
        counts, means = plaintext_statistics(data, params.num_keys)
        rep = run_end_to_end(
            data, StatisticsRequest(statistic="both", noise=False), params, seed=seed
        )
        for k in range(params.num_keys):
            assert rep.frequencies[k] == counts[k]
            if counts[k] == 0:
                assert rep.means[k] is None
                assert rep.key_flags[k] == "no_data"
            else:
                assert rep.means[k] == pytest.approx(means[k], abs=ULP_TOL + 2**-21)


def test_three_clients_same_key():
    params = make_params(num_keys=8, num_clients=3, max_keys=1)
    data = [[KeyValuePair(5, 1.0)] for _ in range(3)]
    rep = run_end_to_end(data, StatisticsRequest("frequency", noise=False), params, 1)
    assert rep.frequencies[5] == 3.0


def test_all_equal_values_mean_exact():
    params = make_params(num_clients=4, max_keys=1)
    data = [[KeyValuePair(2, 3.5)] for _ in range(4)]
    rep = run_end_to_end(data, StatisticsRequest("mean", noise=False), params, 3)
    assert rep.means[2] == pytest.approx(3.5, abs=ULP_TOL)


def test_dummies_do_not_change_exact_outputs():
    params = make_params()
    data = random_instance(params, 77)
    req = StatisticsRequest(statistic="both", noise=False)
    with_d = run_end_to_end(data, req, params, seed=5, with_dummies=True)
    without = run_end_to_end(data, req, params, seed=5, with_dummies=False)
    assert with_d.frequencies == without.frequencies
    for k in with_d.means:
        a, b = with_d.means[k], without.means[k]
        if a is None or b is None:
            # a key served only by dummies has data in one run and not the other
            assert with_d.frequencies[k] == 0.0
        else:
            assert a == pytest.approx(b, abs=2 * ULP_TOL)


def test_empty_dataset_exact_zero():
    params = make_params(num_clients=3)
    rep = run_end_to_end([[], [], []], StatisticsRequest("frequency", noise=False),
                         params, seed=9)
    assert all(v == 0.0 for v in rep.frequencies.values())


def test_frequency_noise_distribution():
    params = make_params(num_keys=2, num_clients=6, max_keys=1, eps_frequency=0.8)
    data = [[KeyValuePair(0, 1.0)] for _ in range(6)]
    scale = params.max_keys / params.eps_frequency
    reps = 4000
    resid = np.empty(reps)
    for i in range(reps):
        rep = run_end_to_end(
            data, StatisticsRequest("frequency", noise=True, keys=(0,)),
            params, seed=10_000 + i, with_dummies=False,
        )
        resid[i] = rep.frequencies[0] - 6.0
    assert sps.kstest(resid, sps.laplace(scale=scale).cdf).pvalue > 0.01


def test_mean_noise_distribution():
    params = make_params(num_keys=2, num_clients=5, max_keys=1, min_frequency=2,
                         eps_mean=1.0, value_radius=2.0)
    data = [[KeyValuePair(0, 1.0)] for _ in range(5)]
    scale = params.max_keys * 2 * params.value_radius / (
        params.eps_mean * params.min_frequency
    )
    reps = 3000
    resid = np.empty(reps)
    for i in range(reps):
        rep = run_end_to_end(
            data, StatisticsRequest("mean", noise=True, keys=(0,)),
            params, seed=50_000 + i, with_dummies=False,
        )
        resid[i] = rep.means[0] - 1.0
    assert sps.kstest(resid, sps.laplace(scale=scale).cdf).pvalue > 0.01


def test_gamma_violation_flagged_not_fatal():
    params = make_params(min_frequency=3, num_clients=2, max_keys=1)
    data = [[KeyValuePair(1, 2.0)], [KeyValuePair(1, 4.0)]]  # frequency 2 < 3
    rep = run_end_to_end(data, StatisticsRequest("mean", noise=False), params, 4)
    assert rep.key_flags[1] == "below_min_frequency"
    assert rep.means[1] == pytest.approx(3.0, abs=ULP_TOL)
    assert any("minimum frequency" in n for n in rep.privacy.notes)


def test_no_data_key_skips_mean_but_runs_frequency():
    params = make_params(num_clients=1, max_keys=1, num_keys=3)
    data = [[KeyValuePair(0, 1.0)]]
    rep = run_end_to_end(data, StatisticsRequest("both", noise=False), params, 8,
                         with_dummies=False)
    assert rep.means[2] is None and rep.key_flags[2] == "no_data"
    assert rep.frequencies[2] == 0.0


def test_deterministic_replay():
    params = make_params()
    data = random_instance(params, 3)
    req = StatisticsRequest("both", noise=True)
    a = run_end_to_end(data, req, params, seed=123)
    b = run_end_to_end(data, req, params, seed=123)
    assert a.frequencies == b.frequencies
    assert a.means == b.means
    assert a.metrics.rounds == b.metrics.rounds
    assert a.metrics.total_bytes == b.metrics.total_bytes
    c = run_end_to_end(data, req, params, seed=124)
    assert c.frequencies != a.frequencies


def test_per_key_outputs_independent_of_order():
    params = make_params()
    data = random_instance(params, 15)
    req_fwd = StatisticsRequest("both", noise=True, keys=(0, 1, 2, 3))
    req_rev = StatisticsRequest("both", noise=True, keys=(3, 2, 0, 1))
    a = run_end_to_end(data, req_fwd, params, seed=55)
    b = run_end_to_end(data, req_rev, params, seed=55)
    assert a.frequencies == b.frequencies
    assert a.means == b.means


def test_offline_noise_matches_online():
    params = make_params()
    data = random_instance(params, 21)
    req = StatisticsRequest("both", noise=True)
    online = run_end_to_end(data, req, params, seed=77, offline_noise=False)
    offline = run_end_to_end(data, req, params, seed=77, offline_noise=True)
    assert online.frequencies == offline.frequencies
    assert online.means == offline.means


def test_report_budget_is_recomputable():
    params = make_params()
    data = random_instance(params, 2)
    rep = run_end_to_end(data, StatisticsRequest("both", noise=True), params, 6)
    again = build_report(params, "both", True, 0.05)
    assert rep.privacy.eps_total == again.eps_total
    rep_exact = run_end_to_end(data, StatisticsRequest("both", noise=False), params, 6)
    assert rep_exact.privacy.eps_total == rep_exact.privacy.eps_leakage


def test_client_element_accounting_exact():
    params = make_params()
    for seed in (1, 2, 3):
        data = random_instance(params, seed)
        rep = run_end_to_end(data, StatisticsRequest("frequency", noise=False),
                             params, seed=seed)
        expected = 2 * params.subset_size * (rep.real_pair_count + rep.dummy_pair_count)
        assert rep.metrics.client_elements == expected


def test_invalid_client_excluded_and_reported():
    params = make_params(max_keys=1, num_clients=3)
    data = [
        [KeyValuePair(0, 1.0)],
        [KeyValuePair(0, 1.0), KeyValuePair(1, 1.0)],  # exceeds max_keys
        [KeyValuePair(1, 3.0)],
    ]
    rep = run_end_to_end(data, StatisticsRequest("frequency", noise=False), params, 5)
    assert len(rep.ingest_errors) == 1 and "client 1" in rep.ingest_errors[0]
    assert rep.frequencies[0] == 1.0 and rep.frequencies[1] == 1.0


def test_validation_drops_forged_flag():
    # a misbehaving client claims flag 2 for a pair; the recipients' check
    # x*(1-x) != 0 must reject it and exclude it from the count
    params = make_params(num_clients=3, max_keys=1, num_keys=2)
    codec = default_codec()
    field = codec.field
    data = [[KeyValuePair(0, 1.0)], [KeyValuePair(0, 2.0)]]
    metrics = TranscriptMetrics()
    nodes, _, _, _, _, _ = collect(data, params, codec, 31, metrics, with_dummies=False)

    # forge one extra pair with flag 2 addressed to nodes 0 and 1
    tag = 0xDEAD
    f_sh = field.share(2, 2, np.random.default_rng(1))
    v_sh = field.share(codec.encode(4.0), 2, np.random.default_rng(2))
    from kvmpc.collection import ShareMessage
    for i in (0, 1):
        nodes[i].inbox.append(ShareMessage(i, 0, f_sh[i], v_sh[i], tag))

    rejects, _ = validation_sweep(nodes, field, seed=31)
    assert rejects == [(0, tag)]
    bus = MessageBus(params.nodes, TranscriptMetrics())
    opened = frequency_protocol(bus, field, codec, nodes, 0, None)
    assert opened == 2.0  # forged pair dropped, honest pairs intact


def test_divisor_upper_bound_covers_counts():
    params = make_params(num_clients=100, dummy_rate=0.4)
    bound = divisor_upper_bound(params)
    assert bound > 100
    assert bound < 100 + 200  # the dummy-tail quantile is modest


def test_request_validation():
    with pytest.raises(ParameterError):
        StatisticsRequest(statistic="median")
