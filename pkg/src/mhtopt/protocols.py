"""Constructors for optimal recommendation rules from economic primitives.

The inputs are the research production cost C(J) = c_f + c_v(J), the
publication rule (linear in the number of discoveries, or a count-threshold
rule paying gamma once at least kappa discoveries are reported), and the
statistic covariance. The outputs are calibrated rule objects from
:mod:`mhtopt.rules`:

- ``make_separate_ttests``: one-sided t-tests at per-test size C(J)/J, the
  optimal protocol under a linear publication rule. Fixed costs give a
  Bonferroni correction; costs proportional to J give unadjusted testing.
- ``solve_publication_size`` / ``make_threshold_pub_ttests``: the common
  per-test size p solving  sum_{k=kappa}^{J} binom(J,k) p^k = C(J)/gamma
  under a count-threshold publication rule, and the t-tests at that size.
- ``make_min_statistic_rule``: the conservative all-or-nothing protocol for
  multiple outcomes (joint size = per-component size ** dim under
  independence).
- ``make_group_max_rule``: group-level argmax-max protocol with a Bonferroni
  correction across publishable treatment groups.
- ``make_index_rule`` / ``variance_min_weights`` / ``factor_index_weights``:
  one-sided tests on weighted averages for the single-decision case.
- ``make_endogenous_family``: per-test size C(S)/S for every number S of
  hypotheses the researcher might select.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from itertools import combinations
from typing import Mapping, Optional

import numpy as np
from scipy import stats as sps

from .errors import DegenerateRuleWarning, InfeasibleError, InputError
from .rules import GroupArgmaxMax, IndexTest, MinStatistic, SeparateThresholds
from .stats import norm_quantile

__all__ = [
    "CostFunction",
    "LinearPub",
    "ThresholdPub",
    "MalevolentPub",
    "make_separate_ttests",
    "make_never_reject",
    "solve_publication_size",
    "make_threshold_pub_ttests",
    "make_min_statistic_rule",
    "make_group_max_rule",
    "make_index_rule",
    "variance_min_weights",
    "factor_index_weights",
    "EndogenousFamily",
    "make_endogenous_family",
]


@dataclass(frozen=True)
class CostFunction:
    """Research production cost C(J) = fixed + variable(J).

    The variable part is either an affine slope (c_v(J) = slope * J) or a
    per-J table, which accommodates arbitrary shapes including diseconomies
    of scale. Evaluation enforces 0 < C(J) <= J.
    """

    fixed: float = 0.0
    slope: float = 0.0
    table: Optional[Mapping[int, float]] = None

    def __post_init__(self):
        if self.fixed < 0:
            raise InputError("fixed cost must be nonnegative")
        if self.table is not None:
            object.__setattr__(self, "table", dict(self.table))

    @classmethod
    def affine(cls, fixed: float = 0.0, slope: float = 0.0) -> "CostFunction":
        return cls(fixed=fixed, slope=slope)

    @classmethod
    def from_table(cls, table: Mapping[int, float], fixed: float = 0.0) -> "CostFunction":
        return cls(fixed=fixed, table=table)

    def variable(self, j: int) -> float:
        if self.table is not None:
            if j not in self.table:
                raise InputError(f"cost table has no entry for J={j}")
            return float(self.table[j])
        return self.slope * j

    def __call__(self, j: int) -> float:
        if j < 1:
            raise InputError(f"hypothesis count must be positive, got {j}")
        c = self.fixed + self.variable(j)
        if not c > 0:
            raise InputError(f"C({j}) = {c} must be strictly positive")
        if c > j:
            raise InputError(f"C({j}) = {c} exceeds J = {j}; experimenting could never pay")
        return c


@dataclass(frozen=True)
class LinearPub:
    """Publication reward linear in the number of discoveries."""


@dataclass(frozen=True)
class ThresholdPub:
    """Reward gamma iff at least kappa discoveries are reported."""

    kappa: int
    gamma: float

    def __post_init__(self):
        if self.kappa < 1:
            raise InputError("kappa must be a positive integer")
        if not self.gamma > 0:
            raise InputError("gamma must be positive")


@dataclass(frozen=True)
class MalevolentPub:
    """Reward equal to the expected false discovery proportion."""


def make_separate_ttests(j: int, cost: CostFunction, cov_diag=None) -> SeparateThresholds:
    """One-sided t-tests with per-test size C(J)/J.

    Each component rejects iff X_j / sqrt(Sigma_jj) >= Phi^{-1}(1 - C(J)/J),
    so every component has size exactly C(J)/J at theta = 0 and the sizes sum
    to C(J) (average size control). If C(J)/J >= 1 the calibration is
    degenerate: an explicit always-reject rule is returned with a warning
    (the C(J) = J boundary is admissible).
    """
    if j < 1:
        raise InputError("j must be a positive integer")
    scale = _as_scale(cov_diag, j)
    c = cost(j)
    size = c / j
    meta = {"J": j, "C": c, "per_test_size": size}
    if size >= 1.0:
        warnings.warn(
            f"per-test size C(J)/J = {size} >= 1: returning an always-reject rule",
            DegenerateRuleWarning,
            stacklevel=2,
        )
        return SeparateThresholds(
            np.full(j, -np.inf), scale, degenerate=True, meta=meta
        )
    t = norm_quantile(1.0 - size)
    return SeparateThresholds(np.full(j, t), scale, meta=meta)


def make_never_reject(j: int) -> SeparateThresholds:
    """The trivial protocol that never recommends anything."""
    return SeparateThresholds(
        np.full(j, np.inf), np.ones(j), degenerate=True, meta={"J": j}
    )


def _as_scale(cov_diag, j: int) -> np.ndarray:
    if cov_diag is None:
        return np.ones(j)
    d = np.atleast_1d(np.asarray(cov_diag, dtype=float))
    if d.shape != (j,):
        raise InputError(f"cov_diag must have {j} entries")
    if np.any(d <= 0):
        raise InputError("covariance diagonal must be strictly positive")
    return np.sqrt(d)


def _publication_polynomial(j: int, kappa: int, p: float) -> float:
    """sum_{k=kappa}^{J} binom(J,k) p^k, evaluated stably for any J.

    Uses the identity binom(J,k) p^k = (1+p)^J binom(J,k) q^k (1-q)^{J-k}
    with q = p / (1+p), so the sum equals (1+p)^J * P(Bin(J, q) >= kappa).
    All terms are positive (no cancellation), so the absolute error is a few
    ulps of the value.
    """
    if p <= 0.0:
        return 0.0
    q = p / (1.0 + p)
    tail = float(sps.binom.sf(kappa - 1, j, q))
    return (1.0 + p) ** j * tail


def solve_publication_size(j: int, kappa: int, cost_over_gamma: float) -> float:
    """Per-test size p under a count-threshold publication rule.

    Solves  sum_{k=kappa}^{J} binom(J,k) p^k = C(J)/gamma  by bisection on
    [0, 1]; the left side is a strictly increasing polynomial in p, so
    convergence is unconditional. The returned root has residual <= 1e-12.

    Raises:
        InfeasibleError: if ``cost_over_gamma`` falls outside the feasible
            interval (0, sum_{k=kappa}^{J} binom(J,k)), i.e. the value range
            of the polynomial on (0, 1].
    """
    if not (1 <= kappa <= j):
        raise InputError(f"need 1 <= kappa <= J, got kappa={kappa}, J={j}")
    upper = float(sum(math.comb(j, k) for k in range(kappa, j + 1)))
    if not (0.0 < cost_over_gamma < upper):
        raise InfeasibleError(
            f"C(J)/gamma = {cost_over_gamma} is outside the feasible interval "
            f"(0, {upper}) for J={j}, kappa={kappa}"
        )
    lo, hi = 0.0, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if _publication_polynomial(j, kappa, mid) < cost_over_gamma:
            lo = mid
        else:
            hi = mid
    # pick the bracket endpoint with the smaller residual
    res_lo = abs(_publication_polynomial(j, kappa, lo) - cost_over_gamma)
    res_hi = abs(_publication_polynomial(j, kappa, hi) - cost_over_gamma)
    return lo if res_lo <= res_hi else hi


def make_threshold_pub_ttests(
    j: int, kappa: int, cost: CostFunction, gamma: float, cov_diag=None
) -> SeparateThresholds:
    """One-sided t-tests calibrated for a count-threshold publication rule.

    Each component has size p at theta = 0, where p solves the publication
    polynomial equation for (J, kappa, C(J)/gamma). Requires gamma > C(J)
    so that experimenting can ever pay.
    """
    scale = _as_scale(cov_diag, j)
    c = cost(j)
    if not gamma > c:
        raise InputError(f"gamma = {gamma} must exceed C(J) = {c}")
    p = solve_publication_size(j, kappa, c / gamma)
    t = norm_quantile(1.0 - p)
    meta = {"J": j, "kappa": kappa, "C": c, "gamma": gamma, "per_test_size": p}
    return SeparateThresholds(np.full(j, t), scale, meta=meta)


def make_min_statistic_rule(
    dim: int, per_component_size: float, cov_diag=None
) -> MinStatistic:
    """All-or-nothing protocol: recommend everything iff min_j X_j >= t.

    t = Phi^{-1}(1 - per_component_size); under independence the joint size
    at theta = 0 is per_component_size ** dim, an exponentially stringent
    control in the number of outcomes.
    """
    if dim < 1:
        raise InputError("dim must be a positive integer")
    if not (0.0 < per_component_size < 1.0):
        raise InputError(
            f"per-component size must lie in (0, 1), got {per_component_size}"
        )
    t = norm_quantile(1.0 - per_component_size)
    scale = None if cov_diag is None else _as_scale(cov_diag, dim)
    meta = {
        "per_component_size": per_component_size,
        "joint_size_independent": per_component_size**dim,
    }
    return MinStatistic(dim, t, scale, meta=meta)


def make_group_max_rule(
    j: int, kappa: int, cost: CostFunction, gamma: float
) -> GroupArgmaxMax:
    """Group-level protocol for publishable combinations of treatments.

    One independent standard-normal statistic per group of >= kappa
    treatments (|K| = sum_{k=kappa}^{J} binom(J,k) groups); group j is
    recommended iff its statistic beats all others and the threshold
    t = Phi^{-1}((1 - C(J)/gamma)^{1/|K|}). The calibration makes
    P(max > t | theta=0) = C(J)/gamma, i.e. each group's rejection
    probability at the origin is C(J)/(gamma |K|): a Bonferroni correction
    at the level of groups.
    """
    if kappa > j:
        raise InputError(f"kappa = {kappa} exceeds the number of treatments J = {j}")
    if kappa < 1:
        raise InputError("kappa must be a positive integer")
    c = cost(j)
    cg = c / gamma
    if not (0.0 < cg < 1.0):
        raise InputError(f"C(J)/gamma must lie in (0, 1), got {cg}")
    groups = tuple(
        combo
        for size in range(kappa, j + 1)
        for combo in combinations(range(j), size)
    )
    t = norm_quantile((1.0 - cg) ** (1.0 / len(groups)))
    meta = {"C": c, "gamma": gamma, "cost_over_gamma": cg}
    return GroupArgmaxMax(t, groups, j, kappa=kappa, meta=meta)


def make_index_rule(weights, cov, size: float) -> IndexTest:
    """One-sided test on the index w'X at level ``size``.

    Rejection happens iff w'X / sqrt(w' Sigma w) > Phi^{-1}(1 - size), so the
    rejection probability equals ``size`` exactly whenever w'theta = 0
    (similarity on the boundary of the null space).
    """
    w = np.atleast_1d(np.asarray(weights, dtype=float))
    cov = np.asarray(cov, dtype=float)
    if cov.ndim == 0:
        cov = cov.reshape(1, 1)
    if not (0.0 < size < 1.0):
        raise InputError(f"size must lie in (0, 1), got {size}")
    var = float(w @ cov @ w)
    if var <= 0:
        raise InputError("index variance w' Sigma w must be positive")
    t = norm_quantile(1.0 - size)
    return IndexTest(w, t, math.sqrt(var), meta={"C": size})


def variance_min_weights(cov) -> np.ndarray:
    """Weights minimizing w' Sigma w subject to sum(w) = 1.

    The minimizer is Sigma^{-1} 1 / (1' Sigma^{-1} 1).
    """
    cov = np.asarray(cov, dtype=float)
    if cov.ndim == 0:
        cov = cov.reshape(1, 1)
    ones = np.ones(cov.shape[0])
    try:
        raw = np.linalg.solve(cov, ones)
    except np.linalg.LinAlgError as exc:
        raise InputError("covariance is singular") from exc
    return raw / raw.sum()


def factor_index_weights(loadings, cov) -> np.ndarray:
    """Statistic weights for the factor-model index.

    With loadings lambda and statistic covariance Sigma, the index
    sum_g X_g / (lambda_g * sqrt(lambda^{-1}' Sigma lambda^{-1})) has unit
    variance; the returned vector w satisfies w'X = that index. When Sigma
    is the pure factor covariance lambda lambda' (statistic variation driven
    by the common factor alone), the index mean equals the factor effect
    exactly. Note these weights standardize the statistic and do not sum
    to 1.
    """
    lam = np.atleast_1d(np.asarray(loadings, dtype=float))
    cov = np.asarray(cov, dtype=float)
    if cov.ndim == 0:
        cov = cov.reshape(1, 1)
    if np.any(lam <= 0):
        raise InputError("factor loadings must be strictly positive")
    if cov.shape != (lam.size, lam.size):
        raise InputError("covariance shape must match the loadings")
    inv = 1.0 / lam
    denom = float(inv @ cov @ inv)
    if denom <= 0:
        raise InputError("lambda^{-1}' Sigma lambda^{-1} must be positive")
    return inv / math.sqrt(denom)


@dataclass(frozen=True)
class EndogenousFamily:
    """Rules indexed by the number S of hypotheses the researcher selects."""

    rules: dict = field(repr=False)
    j_max: int = 0

    def rule_for(self, s: int) -> SeparateThresholds:
        if s not in self.rules:
            raise InputError(f"no rule for S={s} (family covers 1..{self.j_max})")
        return self.rules[s]

    def __len__(self) -> int:
        return len(self.rules)


def make_endogenous_family(
    j_max: int, cost: CostFunction, cov_diags: Optional[Mapping[int, np.ndarray]] = None
) -> EndogenousFamily:
    """Threshold rules for every possible selected count S in 1..j_max.

    The rule for S hypotheses uses per-test size C(S)/S, so the single-
    hypothesis entry is the plain one-sided t-test. Infeasible costs at any
    S (C(S) <= 0 or C(S) > S) raise with the offending S named.
    """
    if j_max < 1:
        raise InputError("j_max must be a positive integer")
    rules = {}
    for s in range(1, j_max + 1):
        diag = None if cov_diags is None else cov_diags.get(s)
        try:
            rules[s] = make_separate_ttests(s, cost, diag)
        except InputError as exc:
            raise InputError(f"cost is infeasible at S={s}: {exc}") from exc
    return EndogenousFamily(rules, j_max)
