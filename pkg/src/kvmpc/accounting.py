"""Closed-form privacy and accuracy accounting.

Everything here is a pure function of public protocol parameters: the leakage
bound for a single node's view, its degradation under collusion, the dummy
rate minimizing leakage, the asymptotic lower bound on leakage, sensitivities,
Laplace tail accuracy bounds, and the dummy-count economics of the one-sided
baseline mechanism.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

from .errors import ParameterError


@dataclass(frozen=True)
class ProtocolParams:
    """Public parameters of one deployment.

    nodes:             number of computation nodes (>= 3)
    subset_size:       how many nodes receive shares of each pair (t)
    dummy_rate:        geometric parameter for per-key dummy counts, in (0,1)
    max_keys:          maximum number of distinct keys per client
    min_frequency:     assumed minimum frequency of any key (>= 1)
    value_radius:      values lie in [value_center - R, value_center + R]
    num_keys:          size of the key domain
    num_clients:       number of clients
    collusion:         tolerated number of colluding nodes (subset_size >= collusion+1)
    eps_frequency:     output budget for the frequency statistic
    eps_mean:          output budget for the mean statistic
    dummy_parties:     independent dummy generators (d)
    """

    nodes: int
    subset_size: int = 2
    dummy_rate: float = 0.5
    max_keys: int = 1
    min_frequency: int = 1
    value_radius: float = 1.0
    value_center: float = 0.0
    num_keys: int = 1
    num_clients: int = 1
    collusion: int = 1
    eps_frequency: float = 1.0
    eps_mean: float = 1.0
    dummy_parties: int = 1

    def __post_init__(self):
        if self.nodes < 3:
            raise ParameterError(f"need at least 3 computation nodes, got {self.nodes}")
        if not 2 <= self.subset_size <= self.nodes - 1:
            raise ParameterError(
                f"subset size must be in [2, {self.nodes - 1}], got {self.subset_size}"
            )
        if not 0.0 < self.dummy_rate < 1.0:
            raise ParameterError(f"dummy rate must be in (0,1), got {self.dummy_rate}")
        if self.max_keys < 1:
            raise ParameterError("max_keys must be >= 1")
        if self.min_frequency < 1:
            raise ParameterError("min_frequency must be >= 1")
        if self.value_radius <= 0:
            raise ParameterError("value_radius must be positive")
        if self.num_keys < 1 or self.num_clients < 0:
            raise ParameterError("num_keys must be >= 1 and num_clients >= 0")
        if self.collusion < 1:
            raise ParameterError("collusion threshold must be >= 1")
        if self.subset_size < self.collusion + 1:
            raise ParameterError(
                f"subset size {self.subset_size} below collusion threshold + 1 "
                f"({self.collusion + 1}): colluding nodes could reconstruct values"
            )
        if self.eps_frequency <= 0 or self.eps_mean <= 0:
            raise ParameterError("output budgets must be positive")
        if self.dummy_parties < 1:
            raise ParameterError("dummy_parties must be >= 1")

    @property
    def selection_probability(self) -> float:
        """Probability any fixed node receives a given pair (t / nodes)."""
        return self.subset_size / self.nodes

    @property
    def value_low(self) -> float:
        return self.value_center - self.value_radius

    @property
    def value_high(self) -> float:
        return self.value_center + self.value_radius


# -- leakage of the share-distribution algorithm ---------------------------


def leakage_epsilon(max_keys: int, rate: float, selection_p: float) -> float:
    """Pure-DP bound on a single node's view of the distributed shares.

    Equals max_keys * ln(max{1/(1-rate), 1/(1-selection_p) + 1 - rate}): the
    first branch bounds the ratio when a pair is removed (geometric shift),
    the second when one is added (binomial thinning plus dummy floor).
    """
    if max_keys < 1:
        raise ParameterError("max_keys must be >= 1")
    if not 0.0 < rate < 1.0:
        raise ParameterError(f"rate must be in (0,1), got {rate}")
    if not 0.0 < selection_p < 1.0:
        raise ParameterError(f"selection probability must be in (0,1), got {selection_p}")
    return max_keys * math.log(max(1.0 / (1.0 - rate), 1.0 / (1.0 - selection_p) + 1.0 - rate))


def collusion_selection_probability(nodes: int, colluders: int) -> float:
    """Probability a coalition of ``colluders`` nodes sees a given pair when
    subset_size = colluders + 1: 1 - C(nodes-c, c+1)/C(nodes, c+1)."""
    if not 1 <= colluders <= nodes - 2:
        raise ParameterError(f"colluders must be in [1, {nodes - 2}], got {colluders}")
    return 1.0 - math.comb(nodes - colluders, colluders + 1) / math.comb(nodes, colluders + 1)


def collusion_epsilon(max_keys: int, rate: float, nodes: int, colluders: int) -> float:
    """Leakage bound when up to ``colluders`` nodes pool their views
    (subset_size fixed at colluders + 1, the minimum safe choice).

    Once colluders exceed (nodes-1)/2 every subset intersects the coalition,
    the subtractive-noise side vanishes, and no finite pure-DP bound exists.
    """
    if max_keys < 1:
        raise ParameterError("max_keys must be >= 1")
    if not 0.0 < rate < 1.0:
        raise ParameterError(f"rate must be in (0,1), got {rate}")
    if not 1 <= colluders <= nodes - 2:
        raise ParameterError(f"colluders must be in [1, {nodes - 2}], got {colluders}")
    unseen = math.comb(nodes - colluders, colluders + 1)
    if unseen == 0:
        return math.inf
    ratio = math.comb(nodes, colluders + 1) / unseen
    return max_keys * math.log(max(1.0 / (1.0 - rate), ratio + 1.0 - rate))


def _equalizing_rate(one_minus_p: float) -> float:
    """Rate where both branches of the leakage max coincide, for a given 1-p."""
    return 1.0 - (math.sqrt(1.0 + 4.0 * one_minus_p**2) - 1.0) / (2.0 * one_minus_p)


def optimal_rate(nodes: int) -> float:
    """Dummy rate minimizing the leakage bound at subset_size = 2."""
    if nodes < 3:
        raise ParameterError(f"need at least 3 nodes, got {nodes}")
    return _equalizing_rate(1.0 - 2.0 / nodes)


def optimal_collusion_rate(nodes: int, colluders: int) -> float:
    """Dummy rate minimizing the collusion leakage bound at subset_size = c+1."""
    p = collusion_selection_probability(nodes, colluders)
    return _equalizing_rate(1.0 - p)


def min_leakage_epsilon(nodes: int, max_keys: int = 1) -> float:
    """Smallest achievable leakage bound for a fixed node count (at t=2 and
    the optimal dummy rate)."""
    if nodes < 3:
        raise ParameterError(f"need at least 3 nodes, got {nodes}")
    if max_keys < 1:
        raise ParameterError("max_keys must be >= 1")
    u = 1.0 - 2.0 / nodes
    return max_keys * math.log(2.0 * u / (math.sqrt(1.0 + 4.0 * u**2) - 1.0))


def leakage_lower_bound(max_keys: int = 1) -> float:
    """Infimum of the leakage bound over all node counts: max_keys * ln(2/(sqrt(5)-1))."""
    if max_keys < 1:
        raise ParameterError("max_keys must be >= 1")
    return max_keys * math.log(2.0 / (math.sqrt(5.0) - 1.0))


def max_feasible_rate(eps: float, max_keys: int, nodes: int, subset_size: int = 2) -> float | None:
    """Largest dummy rate whose leakage bound stays within ``eps`` (fewest
    dummies at that budget), or None when even the optimum exceeds it."""
    if eps <= 0:
        raise ParameterError("eps must be positive")
    p = subset_size / nodes
    r_opt = _equalizing_rate(1.0 - p)
    if leakage_epsilon(max_keys, r_opt, p) > eps:
        return None
    # beyond the optimum the binding branch is 1/(1-r)
    return 1.0 - math.exp(-eps / max_keys)


# -- one-sided dummy baseline ----------------------------------------------


def one_sided_shift(eps: float, delta: float, max_keys: int = 1) -> float:
    """Shift beta making the one-sided two-sided-geometric dummy mechanism
    (eps, delta)-DP: -(1/eps) * ln(delta * (1 + e^-eps) / max_keys)."""
    if eps <= 0:
        raise ParameterError("eps must be positive")
    if not 0.0 < delta < 1.0:
        raise ParameterError(f"delta must be in (0,1), got {delta}")
    if max_keys < 1:
        raise ParameterError("max_keys must be >= 1")
    return -(1.0 / eps) * math.log(delta * (1.0 + math.exp(-eps)) / max_keys)


@dataclass(frozen=True)
class DummyEstimate:
    """Expected dummy volume. The geometric sampler's mean is (1-r)/r
    (pmf_mean); the reciprocal 1/r convention counts one extra per key and is
    reported alongside because deployment discussions commonly quote it."""

    per_key_pmf_mean: float
    per_key_reciprocal: float
    total_pmf_mean: float
    total_reciprocal: float


def expected_dummies(
    params: ProtocolParams, method: str = "selective", delta: float | None = None
) -> DummyEstimate:
    """Expected dummies per key and in total for either dummy scheme.

    selective: dummy_parties independent geometric(dummy_rate) draws per key.
    one_sided: lower-bounded by the shift beta per key (requires delta).
    """
    if method == "selective":
        d = params.dummy_parties
        per_pmf = d * (1.0 - params.dummy_rate) / params.dummy_rate
        per_rec = d / params.dummy_rate
        return DummyEstimate(
            per_pmf, per_rec, params.num_keys * per_pmf, params.num_keys * per_rec
        )
    if method == "one_sided":
        if delta is None:
            raise ParameterError("one_sided dummy estimate requires delta")
        beta = one_sided_shift(params.eps_frequency, delta, params.max_keys)
        return DummyEstimate(beta, beta, params.num_keys * beta, params.num_keys * beta)
    raise ParameterError(f"unknown dummy method {method!r}")


# -- sensitivities and accuracy ---------------------------------------------


def sensitivity_frequency(max_keys: int) -> float:
    """L1 sensitivity of the frequency vector under user-level neighbouring."""
    if max_keys < 1:
        raise ParameterError("max_keys must be >= 1")
    return float(max_keys)


def sensitivity_mean(max_keys: int, value_radius: float, min_frequency: int) -> float:
    """L1 sensitivity of the mean vector: max_keys * 2R / min_frequency."""
    if max_keys < 1:
        raise ParameterError("max_keys must be >= 1")
    if value_radius <= 0:
        raise ParameterError("value_radius must be positive")
    if min_frequency < 1:
        raise ParameterError("min_frequency must be >= 1")
    return max_keys * 2.0 * value_radius / min_frequency


def accuracy_bounds(params: ProtocolParams, confidence_beta: float) -> tuple[float, float]:
    """Laplace tail bounds holding simultaneously for all keys with
    probability 1 - confidence_beta: (frequency bound, mean bound)."""
    if not 0.0 < confidence_beta <= 1.0:
        raise ParameterError(f"confidence_beta must be in (0,1], got {confidence_beta}")
    log_term = math.log(params.num_keys / confidence_beta)
    freq_bound = log_term * sensitivity_frequency(params.max_keys) / params.eps_frequency
    mean_bound = (
        log_term
        * sensitivity_mean(params.max_keys, params.value_radius, params.min_frequency)
        / params.eps_mean
    )
    return freq_bound, mean_bound


# -- composed report ---------------------------------------------------------


@dataclass
class PrivacyReport:
    """Privacy and accuracy accounting attached to every protocol run."""

    eps_leakage: float
    eps_frequency: float
    eps_mean: float
    eps_total: float
    statistic: str  # frequency | mean | both
    mode: str  # noisy | exact
    expected_dummies_per_key: float  # geometric pmf mean convention (canonical)
    expected_dummies_per_key_reciprocal: float
    confidence_beta: float
    freq_error_bound: float
    mean_error_bound: float
    notes: list[str] = dc_field(default_factory=list)

    FIELDS = (
        "eps_leakage",
        "eps_frequency",
        "eps_mean",
        "eps_total",
        "statistic",
        "mode",
        "expected_dummies_per_key",
        "expected_dummies_per_key_reciprocal",
        "confidence_beta",
        "freq_error_bound",
        "mean_error_bound",
    )

    def as_text(self) -> str:
        lines = [f"{name} = {getattr(self, name)}" for name in self.FIELDS]
        for note in self.notes:
            lines.append(f"note = {note}")
        return "\n".join(lines)

    def csv_header(self) -> list[str]:
        return list(self.FIELDS)

    def csv_row(self) -> list:
        return [getattr(self, name) for name in self.FIELDS]


def build_report(
    params: ProtocolParams,
    statistic: str = "both",
    noise: bool = True,
    confidence_beta: float = 0.05,
) -> PrivacyReport:
    """Compose the total budget for a run: leakage plus the output budgets of
    the statistics actually released (naive composition). With noise disabled
    only the leakage budget is spent and the report says so."""
    if statistic not in ("frequency", "mean", "both"):
        raise ParameterError(f"unknown statistic {statistic!r}")
    eps_l = leakage_epsilon(params.max_keys, params.dummy_rate, params.selection_probability)
    eps_f = params.eps_frequency if statistic in ("frequency", "both") else 0.0
    eps_m = params.eps_mean if statistic in ("mean", "both") else 0.0
    notes = []
    if noise:
        eps_total = eps_l + eps_f + eps_m
        mode = "noisy"
    else:
        eps_total = eps_l
        mode = "exact"
        notes.append("exact mode, eps spent = leakage only; outputs are unperturbed")
    notes.append(
        "distributed noise caveat: a coalition of nodes can subtract its own "
        "gamma contributions, leaving residual noise of a smaller effective scale"
    )
    dummies = expected_dummies(params, "selective")
    freq_bound, mean_bound = accuracy_bounds(params, confidence_beta)
    return PrivacyReport(
        eps_leakage=eps_l,
        eps_frequency=eps_f,
        eps_mean=eps_m,
        eps_total=eps_total,
        statistic=statistic,
        mode=mode,
        expected_dummies_per_key=dummies.per_key_pmf_mean,
        expected_dummies_per_key_reciprocal=dummies.per_key_reciprocal,
        confidence_beta=confidence_beta,
        freq_error_bound=freq_bound if statistic != "mean" else 0.0,
        mean_error_bound=mean_bound if statistic != "frequency" else 0.0,
        notes=notes,
    )
