"""Numerical certification of the privacy claims.

The view of a single node for one key is a count Z distributed as a geometric
mixture of binomials: Pr[Z = z] = sum_v G(v; rate) * B(z; q + v, p). This
module evaluates that mass function in log-space with a controlled truncation
tail, maximizes neighbouring-input probability ratios by brute force against
the closed-form bounds, reproduces the analytic view distribution empirically,
and checks the one-sided dummy baseline's approximate-DP guarantee with exact
hockey-stick sums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

from .accounting import (
    collusion_epsilon,
    collusion_selection_probability,
    leakage_epsilon,
)
from .distributions import (
    binomial_pmf,
    geometric_samples,
    two_sided_geometric_pmf,
    two_sided_geometric_sample,
)
from .errors import ParameterError

RATIO_SLACK = 1e-9  # numerical tolerance added to every closed-form bound


@dataclass(frozen=True)
class LeakagePmfSpec:
    """One key's view distribution: true count, dummy rate, selection p."""

    count: int
    rate: float
    selection_p: float
    tail: float = 1e-15

    def __post_init__(self):
        if self.count < 0:
            raise ParameterError("count must be nonnegative")
        if not 0.0 < self.rate < 1.0:
            raise ParameterError(f"rate must be in (0,1), got {self.rate}")
        if not 0.0 < self.selection_p <= 1.0:
            raise ParameterError(f"selection_p must be in (0,1], got {self.selection_p}")
        if not 0.0 < self.tail < 1e-6:
            raise ParameterError("tail bound must be tiny and positive")


def leakage_pmf_table(
    count: int, rate: float, selection_p: float, z_max: int, tail: float = 1e-15
) -> np.ndarray:
    """Pr[Z = z] for z in [0, z_max], evaluated in log-space.

    Substituting w = count + v collapses the geometric-binomial mixture to

        r * p^z * (1-r)^-count * (1-p)^-z * sum_{w >= count} C(w, z) * x^w

    with x = (1-r)(1-p), whose terms peak near w = z/(1-x) and then decay
    geometrically. The w-sum is carried ``tail``-deep past its peak, keeping
    the RELATIVE error of every entry near machine precision (a fixed-depth
    cut of the v-sum would be exponentially wrong in the deep tail).
    """
    if z_max < 0:
        raise ParameterError("z_max must be nonnegative")
    z = np.arange(z_max + 1)
    if selection_p == 1.0:
        # every pair is observed: the view is count + dummies exactly
        out = np.zeros(z_max + 1)
        for zz in range(count, z_max + 1):
            out[zz] = (1.0 - rate) ** (zz - count) * rate
        return out
    x = (1.0 - rate) * (1.0 - selection_p)
    log_x = math.log(x)
    peak = z_max / (1.0 - x)
    tail_terms = max(30, math.ceil(math.log(tail * 1e-3) / math.log(max(x, 0.5))))
    w_hi = int(max(peak, count)) + tail_terms
    w = np.arange(count, w_hi + 1)
    wz = w[None, :] - z[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        log_comb = np.where(
            wz >= 0,
            gammaln(w + 1.0)[None, :] - gammaln(z + 1.0)[:, None] - gammaln(wz + 1.0),
            -np.inf,
        )
    log_series = logsumexp(log_comb + w[None, :] * log_x, axis=1)
    log_pmf = (
        math.log(rate)
        + z * math.log(selection_p)
        - z * math.log1p(-selection_p)
        - count * math.log1p(-rate)
        + log_series
    )
    return np.exp(log_pmf)


def leakage_pmf(spec: LeakagePmfSpec, z: int) -> float:
    """Pr[Z = z] for one observation value."""
    if z < 0:
        return 0.0
    return float(
        leakage_pmf_table(spec.count, spec.rate, spec.selection_p, z, spec.tail)[z]
    )


@dataclass(frozen=True)
class DpRatioResult:
    """Outcome of a brute-force neighbouring-ratio maximization."""

    max_log_ratio: float  # already scaled by max_keys
    bound: float  # closed-form epsilon being certified
    at_count: int
    at_observation: int
    direction: str  # "add" or "remove"
    max_log_ratio_add: float
    max_log_ratio_remove: float

    @property
    def ok(self) -> bool:
        return math.exp(self.max_log_ratio) <= math.exp(self.bound) + RATIO_SLACK

    def describe(self) -> str:
        status = "ok" if self.ok else "VIOLATED"
        return (
            f"max ratio e^{self.max_log_ratio:.6f} vs bound e^{self.bound:.6f} "
            f"[{status}] at count={self.at_count}, z={self.at_observation}, "
            f"direction={self.direction}"
        )


def _ratio_sweep(
    rate: float, selection_p: float, max_keys: int, q_max: int, bound: float, tail: float
) -> DpRatioResult:
    # beyond z = q + 1 both neighbours' series start at w = z, so the ratio is
    # exactly 1/(1-rate) (or its reciprocal); a modest buffer past q_max + 1
    # covers the full support that can attain anything new
    z_max = q_max + 20
    tables = [
        leakage_pmf_table(q, rate, selection_p, z_max, tail) for q in range(q_max + 2)
    ]
    # ignore observations whose probability is already below floating noise;
    # the truncated series is accurate to ~tail relative error
    floor = 1e-290
    best = (-np.inf, 0, 0, "add")
    best_add = -np.inf
    best_remove = -np.inf
    for q in range(q_max + 1):
        small, big = tables[q], tables[q + 1]
        mask = (small > floor) & (big > floor)
        if not mask.any():
            continue
        logs_small = np.log(small[mask])
        logs_big = np.log(big[mask])
        zs = np.nonzero(mask)[0]
        # remove direction: true count q+1 against neighbour q
        diff = logs_big - logs_small
        i = int(np.argmax(diff))
        if diff[i] > best_remove:
            best_remove = float(diff[i])
        if diff[i] > best[0]:
            best = (float(diff[i]), q + 1, int(zs[i]), "remove")
        # add direction: true count q against neighbour q+1
        diff = logs_small - logs_big
        i = int(np.argmax(diff))
        if diff[i] > best_add:
            best_add = float(diff[i])
        if diff[i] > best[0]:
            best = (float(diff[i]), q, int(zs[i]), "add")
    return DpRatioResult(
        max_log_ratio=max_keys * best[0],
        bound=bound,
        at_count=best[1],
        at_observation=best[2],
        direction=best[3],
        max_log_ratio_add=max_keys * best_add,
        max_log_ratio_remove=max_keys * best_remove,
    )


def verify_leakage_bound(
    rate: float,
    selection_p: float,
    max_keys: int = 1,
    q_max: int = 50,
    tail: float = 1e-15,
) -> DpRatioResult:
    """Brute-force check that no neighbouring pair of counts up to q_max
    exceeds the closed-form leakage bound. A violation would falsify the
    implementation, not the theorem."""
    if q_max < 1:
        raise ParameterError("q_max must be >= 1")
    bound = leakage_epsilon(max_keys, rate, selection_p)
    return _ratio_sweep(rate, selection_p, max_keys, q_max, bound, tail)


def verify_collusion_bound(
    rate: float,
    nodes: int,
    colluders: int,
    max_keys: int = 1,
    q_max: int = 50,
    tail: float = 1e-15,
) -> DpRatioResult:
    """Same sweep with the selection probability of a colluding coalition
    (subset size fixed at colluders + 1) against the collusion bound."""
    p = collusion_selection_probability(nodes, colluders)
    bound = collusion_epsilon(max_keys, rate, nodes, colluders)
    return _ratio_sweep(rate, p, max_keys, q_max, bound, tail)


# -- empirical distribution check (single node's view) -------------------------


@dataclass(frozen=True)
class ViewCheckResult:
    tv_distance: float
    tv_distance_no_dummies: float
    prob_above_count_no_dummies: float
    empirical: np.ndarray
    analytic: np.ndarray


def empirical_view_check(
    count: int,
    rate: float,
    selection_p: float,
    trials: int,
    rng: np.random.Generator,
    tail: float = 1e-15,
) -> ViewCheckResult:
    """Simulate collections of a single key and compare one node's observed
    count against the analytic mixture (total-variation distance).

    Each pair lands at a fixed node independently with probability
    selection_p (the exact marginal of uniform subset choice), so a trial
    draws dummies geometrically and thins count + dummies binomially. The
    no-dummy variant exhibits the clipped right tail: Pr[Z > count] = 0.
    """
    if trials < 1000:
        raise ParameterError("need at least 1000 trials for a stable histogram")
    dummies = geometric_samples(rate, trials, rng)
    z = rng.binomial(count + dummies, selection_p)
    z_no = rng.binomial(count, selection_p, size=trials)

    z_max = int(z.max())
    analytic = leakage_pmf_table(count, rate, selection_p, z_max, tail)
    emp = np.bincount(z, minlength=z_max + 1) / trials
    # account for analytic mass beyond the observed support
    tv = 0.5 * (np.abs(emp - analytic).sum() + max(0.0, 1.0 - analytic.sum()))

    bin_table = np.array([binomial_pmf(k, count, selection_p) for k in range(count + 1)])
    emp_no = np.bincount(z_no, minlength=count + 1) / trials
    tv_no = 0.5 * np.abs(emp_no - bin_table).sum()
    return ViewCheckResult(
        tv_distance=float(tv),
        tv_distance_no_dummies=float(tv_no),
        prob_above_count_no_dummies=float((z_no > count).mean()),
        empirical=emp,
        analytic=analytic,
    )


# -- one-sided dummy baseline ---------------------------------------------------


def one_sided_tail(alpha: float, shift: float) -> float:
    """Closed-form clipping-mass bound alpha^shift / (1 + alpha).

    Equals Pr[shift + TwoSidedGeometric(alpha) <= 0] exactly when shift is an
    integer; for fractional shifts the exact mass is alpha^ceil(shift)/(1+alpha),
    strictly below this bound (which is what the delta calibration consumes).
    """
    if not 0.0 < alpha < 1.0:
        raise ParameterError(f"alpha must be in (0,1), got {alpha}")
    if shift < 0:
        raise ParameterError("shift must be nonnegative")
    return alpha**shift / (1.0 + alpha)


def one_sided_clip_mass(alpha: float, shift: float) -> float:
    """Exact Pr[shift + TwoSidedGeometric(alpha) <= 0] for any shift >= 0."""
    if not 0.0 < alpha < 1.0:
        raise ParameterError(f"alpha must be in (0,1), got {alpha}")
    if shift < 0:
        raise ParameterError("shift must be nonnegative")
    return alpha ** (-math.floor(-shift)) / (1.0 + alpha)


def calibrated_shift(eps: float, delta: float, max_keys: int = 1) -> int:
    """Integer dummy shift strictly above the closed-form calibration bound.

    Dummy counts are integers, and integrality matters beyond rounding: with a
    fractional shift the lowest surviving lattice point of one count has no
    counterpart in a neighbour's output support, pushing the exact divergence
    to delta * (1-alpha) * alpha^(ceil(shift)-1-shift) > delta. An integer
    shift aligns the lattice with the clipping atoms, the neighbour's atom
    absorbs the boundary, and the divergence is exactly the clipping mass,
    which the strict inequality keeps below delta / max_keys.
    """
    from .accounting import one_sided_shift

    return math.floor(one_sided_shift(eps, delta, max_keys)) + 1


def one_sided_mechanism(
    count: int, eps: float, shift: float, rng: np.random.Generator
) -> int | float:
    """Noisy count of the one-sided dummy baseline:
    count + max(0, shift + TwoSidedGeometric(e^-eps))."""
    if eps <= 0:
        raise ParameterError("eps must be positive")
    if shift < 0:
        raise ParameterError("shift must be nonnegative")
    noise = shift + two_sided_geometric_sample(math.exp(-eps), rng)
    return count + max(0.0, noise)


def _one_sided_output_pmf(count: int, alpha: float, shift: float, z_hi: int):
    """Exact output distribution of the mechanism for one count.

    Returns (atoms, lattice): atoms maps an integer output to the clipped
    mass; lattice maps the integer part of count + z (actual output value
    count + shift + z) to the two-sided geometric mass. For integral shift the
    lattice is folded into the atoms, since the supports then coincide.
    """
    clip = one_sided_clip_mass(alpha, shift)
    z_lo = math.floor(-shift) + 1  # smallest z with shift + z > 0
    atoms = {count: clip}
    lattice = {}
    for z in range(z_lo, z_hi + 1):
        mass = two_sided_geometric_pmf(z, alpha)
        if float(shift).is_integer():
            y = count + int(shift) + z
            atoms[y] = atoms.get(y, 0.0) + mass
        else:
            lattice[count + z] = mass
    return atoms, lattice


def one_sided_dp_divergence(eps: float, shift: float, q_max: int = 20) -> float:
    """Worst hockey-stick divergence sup_T (P[D(S) in T] - e^eps P[D(S') in T])
    over neighbouring counts up to q_max, from exact output distributions.

    For the shift produced by the closed-form delta calibration this equals
    the clipping mass, i.e. exactly the advertised delta.
    """
    if eps <= 0 or shift < 0:
        raise ParameterError("eps must be positive and shift nonnegative")
    alpha = math.exp(-eps)
    e_eps = math.exp(eps)
    z_hi = math.floor(-shift) + 1 + max(200, int(80 / eps))  # tail far below any delta

    worst = 0.0
    for q in range(q_max + 1):
        atoms_q, lat_q = _one_sided_output_pmf(q, alpha, shift, z_hi)
        for q_other in (q - 1, q + 1):
            if q_other < 0:
                continue
            atoms_o, lat_o = _one_sided_output_pmf(q_other, alpha, shift, z_hi)
            div = 0.0
            for y, mass in atoms_q.items():
                div += max(0.0, mass - e_eps * atoms_o.get(y, 0.0))
            for y, mass in lat_q.items():
                div += max(0.0, mass - e_eps * lat_o.get(y, 0.0))
            worst = max(worst, div)
    return worst
