"""Differentially private key-value statistics over selectively distributed
secret shares: protocol simulator, privacy accountant, and leakage verifier."""

from .accounting import (
    PrivacyReport,
    ProtocolParams,
    accuracy_bounds,
    build_report,
    collusion_epsilon,
    expected_dummies,
    leakage_epsilon,
    leakage_lower_bound,
    min_leakage_epsilon,
    one_sided_shift,
    optimal_rate,
    sensitivity_frequency,
    sensitivity_mean,
)
from .collection import Envelope, KeyValuePair, ShareMessage, ShufflerView
from .field import FixedPointCodec, M61, PrimeField
from .leakage import (
    DpRatioResult,
    LeakagePmfSpec,
    empirical_view_check,
    leakage_pmf,
    leakage_pmf_table,
    one_sided_dp_divergence,
    one_sided_mechanism,
    one_sided_tail,
    verify_collusion_bound,
    verify_leakage_bound,
)
from .protocols import (
    PrivateStatisticsReport,
    StatisticsRequest,
    plaintext_statistics,
    run_end_to_end,
)
from .runtime import LatencyModel, TranscriptMetrics, latency_model

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
