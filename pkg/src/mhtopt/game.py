"""Researcher and editor payoffs for the publication game.

The researcher observes theta, anticipates the expected reward from the
publication rule net of the research cost, and experiments iff that payoff
beta is positive (indifference resolves toward the welfare-maximizing choice).
The editor's payoff v is the expected welfare of the implemented
recommendations when the researcher experiments and zero otherwise:

    v(theta) = E[welfare of r(X)]      if beta > 0
             = max{E[welfare], 0}      if beta = 0       (tie-breaking)
             = 0                       if beta < 0.

Welfare comes in three flavors:

- ``AdditiveTreatments``: a combination of treatments is worth the sum of its
  members' effects, so expected welfare is sum_j theta_j P(r_j = 1).
- ``GeneralTreatments``: statistics and welfare live on *combination*
  coordinates (interaction effects allowed); only selector-style rules that
  implement at most one combination are supported.
- ``OutcomesPolicyMakers``: policy-maker j implements the j-th recommendation
  and values outcomes via u_j = theta' w_j; the editor scores the worst-off
  policy-maker, min_j P(r_j = 1) u_j(theta).

All functions accept theta as a vector or as an (n, dim) grid and are pure.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ClosedFormUnavailableError, InputError
from .protocols import CostFunction, LinearPub, MalevolentPub, ThresholdPub
from .rules import GroupArgmaxMax, IndexTest, MinStatistic, SeparateThresholds
from .stats import GaussianModel, McConfig, mvn_sample, poisson_binomial_pmf, poisson_binomial_sf

__all__ = [
    "AdditiveTreatments",
    "GeneralTreatments",
    "OutcomesPolicyMakers",
    "GameOutcome",
    "researcher_utility",
    "editor_utility",
    "expected_welfare_given_experiment",
    "best_subset",
    "BETA_TIE_TOL",
]

#: |beta| below this counts as researcher indifference (tie-breaking applies).
BETA_TIE_TOL = 1e-12


@dataclass(frozen=True)
class AdditiveTreatments:
    """Additive welfare over J treatments: a combination is worth the sum."""

    n_treatments: int

    @property
    def n_decisions(self) -> int:
        return self.n_treatments

    def u_components(self, thetas: np.ndarray) -> np.ndarray:
        """Singleton welfares: u_j(theta) = theta_j."""
        return thetas

    def combination_welfare(self, theta, members) -> float:
        """Welfare of implementing a set of treatments together."""
        theta = np.asarray(theta, dtype=float)
        return float(sum(theta[m] for m in members))


@dataclass(frozen=True)
class GeneralTreatments:
    """Welfare on combination coordinates: u_k(theta) = theta_k.

    ``dim`` counts the combination coordinates carried by the statistic
    vector (2^J - 1 in the fully saturated design, or just the publishable
    groups when the rule only scores those).
    """

    dim: int

    @property
    def n_decisions(self) -> int:
        return self.dim

    def u_components(self, thetas: np.ndarray) -> np.ndarray:
        return thetas


@dataclass(frozen=True)
class OutcomesPolicyMakers:
    """J policy-makers weighting G outcomes; column j holds w_j, summing to 1."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim == 1:
            w = w[:, None]
        if w.ndim != 2:
            raise InputError("weights must be a G x J matrix")
        colsums = w.sum(axis=0)
        if np.any(np.abs(colsums - 1.0) > 1e-12):
            raise InputError(f"policy-maker weight columns must sum to 1, got {colsums}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def n_outcomes(self) -> int:
        return self.weights.shape[0]

    @property
    def n_decisions(self) -> int:
        return self.weights.shape[1]

    def u_components(self, thetas: np.ndarray) -> np.ndarray:
        """Per-policy-maker welfares u_j = theta' w_j, shape (n, J)."""
        return thetas @ self.weights


@dataclass(frozen=True)
class GameOutcome:
    experimented: bool
    researcher_utility: float
    editor_utility: float
    tie_broken: bool
    selection: Optional[tuple] = None

    def to_json_dict(self) -> dict:
        doc = {
            "experimented": self.experimented,
            "researcher_utility": self.researcher_utility,
            "editor_utility": self.editor_utility,
            "tie_broken": self.tie_broken,
        }
        if self.selection is not None:
            doc["selection"] = list(self.selection)
        return doc


# ---------------------------------------------------------------------------
# Vectorized internals (theta as an (n, dim) grid). Monte Carlo fallbacks draw
# one independent Philox stream per grid row so sweeps stay reproducible.
# ---------------------------------------------------------------------------


def _theta_grid(theta, dim: int) -> tuple[np.ndarray, bool]:
    arr = np.atleast_1d(np.asarray(theta, dtype=float))
    if arr.ndim == 1:
        arr = arr[None, :]
        squeeze = True
    else:
        squeeze = False
    if arr.shape[1] != dim:
        raise InputError(f"theta has dimension {arr.shape[1]}, expected {dim}")
    return arr, squeeze


def _mc_hits(rule, theta_row: np.ndarray, cov: np.ndarray, mc: McConfig, stream: int):
    model = GaussianModel(theta_row, cov)
    return rule.evaluate(mvn_sample(model, mc, stream=stream))


def _component_probs_grid(rule, thetas, cov, mc=None, stream_base: int = 0):
    try:
        return np.atleast_2d(rule.component_probs(thetas, cov))
    except ClosedFormUnavailableError:
        if mc is None:
            raise
    out = np.empty((thetas.shape[0], rule.n_components))
    for i, row in enumerate(thetas):
        out[i] = _mc_hits(rule, row, cov, mc, stream_base + i).mean(axis=0)
    return out


def _count_sf_grid(rule, thetas, cov, kappa, mc=None, stream_base: int = 0):
    try:
        return np.atleast_1d(rule.count_sf(thetas, cov, kappa))
    except (ClosedFormUnavailableError, AttributeError):
        if mc is None:
            raise
    out = np.empty(thetas.shape[0])
    for i, row in enumerate(thetas):
        hits = _mc_hits(rule, row, cov, mc, stream_base + i)
        out[i] = np.mean(hits.sum(axis=1) >= kappa)
    return out


def _false_mask(rule, thetas: np.ndarray) -> np.ndarray:
    """Which recommendation components are false discoveries at theta.

    Per-component falseness is a negative effect on the component's own
    coordinate; for a single index recommendation it is a negative index
    welfare w'theta.
    """
    if isinstance(rule, IndexTest):
        return (thetas @ rule.weights < 0.0)[:, None]
    return thetas < 0.0


def _expected_fdp_grid(rule, thetas, cov, mc=None, stream_base: int = 0):
    """E[FDP] with the 0/0 -> 0 convention (no rejections count as zero)."""
    false = _false_mask(rule, thetas)
    if isinstance(rule, SeparateThresholds):
        try:
            probs = _component_probs_grid(rule, thetas, cov)
            covd = np.asarray(cov, dtype=float)
            if np.count_nonzero(covd - np.diag(np.diag(covd))) == 0:
                j = rule.n_components
                out = np.zeros(thetas.shape[0])
                for comp in range(j):
                    # E[r_comp / (1 + B)] with B = rejections among the others
                    others = np.delete(probs, comp, axis=1)
                    pmf = poisson_binomial_pmf(others)
                    inv_count = pmf @ (1.0 / (1.0 + np.arange(j)))
                    out += false[:, comp] * probs[:, comp] * inv_count
                return out
        except ClosedFormUnavailableError:
            pass
    elif isinstance(rule, MinStatistic):
        joint = np.atleast_1d(rule.joint_prob(thetas, cov))
        frac = false.sum(axis=1) / rule.n_components
        return joint * frac
    elif isinstance(rule, (GroupArgmaxMax, IndexTest)):
        # components are mutually exclusive single recommendations
        probs = _component_probs_grid(rule, thetas, cov)
        return (probs * false).sum(axis=1)
    if mc is None:
        raise ClosedFormUnavailableError(
            "expected FDP needs a Monte Carlo config for this rule/covariance"
        )
    out = np.empty(thetas.shape[0])
    for i, row in enumerate(thetas):
        hits = _mc_hits(rule, row, cov, mc, stream_base + i)
        counts = hits.sum(axis=1)
        false_counts = (hits & false[i]).sum(axis=1)
        fdp = np.where(counts > 0, false_counts / np.maximum(counts, 1), 0.0)
        out[i] = fdp.mean()
    return out


def _beta_grid(rule, pub, thetas, cov, cost: CostFunction, mc=None) -> np.ndarray:
    c = cost(rule.cost_arity)
    if isinstance(pub, LinearPub):
        probs = _component_probs_grid(rule, thetas, cov, mc=mc)
        return probs.sum(axis=1) - c
    if isinstance(pub, ThresholdPub):
        if not pub.gamma > c:
            raise InputError(f"gamma = {pub.gamma} must exceed C = {c}")
        if isinstance(rule, GroupArgmaxMax):
            # publication counts at the group level: the kappa filter is
            # already built into the group recommendations
            probs = _component_probs_grid(rule, thetas, cov, mc=mc)
            return pub.gamma * probs.sum(axis=1) - c
        sf = _count_sf_grid(rule, thetas, cov, pub.kappa, mc=mc)
        return pub.gamma * sf - c
    if isinstance(pub, MalevolentPub):
        return _expected_fdp_grid(rule, thetas, cov, mc=mc) - c
    raise InputError(f"unknown publication rule {pub!r}")


def _welfare_grid(rule, welfare, pub, thetas, cov, mc=None) -> np.ndarray:
    """Expected welfare conditional on the researcher experimenting."""
    if isinstance(welfare, AdditiveTreatments):
        if welfare.n_treatments != rule.n_components:
            raise InputError("additive welfare needs one recommendation per treatment")
        if isinstance(rule, GroupArgmaxMax):
            raise InputError(
                "group-level rules need GeneralTreatments welfare on combination "
                "coordinates"
            )
        if isinstance(pub, ThresholdPub):
            return _filtered_additive_welfare(rule, pub.kappa, thetas, cov, mc)
        probs = _component_probs_grid(rule, thetas, cov, mc=mc)
        return (thetas * probs).sum(axis=1)
    if isinstance(welfare, GeneralTreatments):
        if not isinstance(rule, GroupArgmaxMax):
            raise InputError(
                "GeneralTreatments welfare requires a selector-style rule that "
                "implements at most one combination (got "
                f"{type(rule).__name__})"
            )
        probs = _component_probs_grid(rule, thetas, cov, mc=mc)
        return (thetas * probs).sum(axis=1)
    if isinstance(welfare, OutcomesPolicyMakers):
        u = welfare.u_components(thetas)
        probs = _component_probs_grid(rule, thetas, cov, mc=mc)
        if probs.shape[1] == 1 and welfare.n_decisions >= 1:
            probs = np.repeat(probs, welfare.n_decisions, axis=1)
        elif probs.shape[1] != welfare.n_decisions:
            raise InputError(
                "rule must emit one recommendation per policy-maker (or a single "
                "shared recommendation)"
            )
        return np.min(probs * u, axis=1)
    raise InputError(f"unknown welfare specification {welfare!r}")


def _filtered_additive_welfare(rule, kappa, thetas, cov, mc=None) -> np.ndarray:
    """sum_j theta_j P(r_j = 1 and total count >= kappa).

    Under a count-threshold publication rule the researcher only writes up
    publishable draws, so recommendations are implemented only on the event
    {count >= kappa}.
    """
    if isinstance(rule, MinStatistic):
        # all components recommend together
        joint = np.atleast_1d(rule.joint_prob(thetas, cov))
        if kappa > rule.n_components:
            return np.zeros(thetas.shape[0])
        return thetas.sum(axis=1) * joint
    if isinstance(rule, SeparateThresholds):
        covd = np.asarray(cov, dtype=float)
        if np.count_nonzero(covd - np.diag(np.diag(covd))) == 0:
            probs = _component_probs_grid(rule, thetas, cov)
            j = rule.n_components
            out = np.zeros(thetas.shape[0])
            for comp in range(j):
                others = np.delete(probs, comp, axis=1)
                tail = poisson_binomial_sf(others, kappa - 1)
                out += thetas[:, comp] * probs[:, comp] * tail
            return out
    if mc is None:
        raise ClosedFormUnavailableError(
            "publication-filtered welfare needs a Monte Carlo config for this "
            "rule/covariance"
        )
    out = np.empty(thetas.shape[0])
    for i, row in enumerate(thetas):
        # offset streams so welfare draws are independent of the beta draws
        hits = _mc_hits(rule, row, cov, mc, (1 << 32) + i)
        published = hits.sum(axis=1) >= kappa
        out[i] = (hits[published] @ row).sum() / hits.shape[0]
    return out


def _v_grid(rule, welfare, pub, thetas, cov, cost, mc=None, beta_tol=BETA_TIE_TOL):
    beta = _beta_grid(rule, pub, thetas, cov, cost, mc=mc)
    w = _welfare_grid(rule, welfare, pub, thetas, cov, mc=mc)
    return np.where(
        beta > beta_tol, w, np.where(beta < -beta_tol, 0.0, np.maximum(w, 0.0))
    ), beta


# ---------------------------------------------------------------------------
# Public scalar API
# ---------------------------------------------------------------------------


def researcher_utility(rule, pub, model: GaussianModel, cost: CostFunction,
                       mc: McConfig | None = None) -> float:
    """Expected researcher payoff beta(theta) from experimenting.

    Linear rule: sum_j P(r_j = 1 | theta) - C. Count-threshold rule:
    gamma P(count >= kappa | theta) - C. Malevolent: E[FDP] - C, where the
    false discovery proportion uses the 0/0 -> 0 convention.
    """
    thetas, _ = _theta_grid(model.mean, rule.dim)
    return float(_beta_grid(rule, pub, thetas, model.cov, cost, mc=mc)[0])


def expected_welfare_given_experiment(rule, welfare, pub, model: GaussianModel,
                                      mc: McConfig | None = None) -> float:
    """Expected welfare of the implemented recommendations at model.mean."""
    thetas, _ = _theta_grid(model.mean, rule.dim)
    return float(_welfare_grid(rule, welfare, pub, thetas, model.cov, mc=mc)[0])


def editor_utility(rule, welfare, pub, model: GaussianModel, cost: CostFunction,
                   mc: McConfig | None = None,
                   beta_tol: float = BETA_TIE_TOL) -> float:
    """Editor payoff v(theta): welfare if the researcher experiments, else 0.

    At researcher indifference (|beta| <= beta_tol) the tie-breaking rule
    picks the welfare-maximizing action, i.e. v = max{expected welfare, 0};
    both branches are evaluated exactly before taking the max.
    """
    outcome = play_game(rule, welfare, pub, model, cost, mc=mc, beta_tol=beta_tol)
    return outcome.editor_utility


def play_game(rule, welfare, pub, model: GaussianModel, cost: CostFunction,
              mc: McConfig | None = None,
              beta_tol: float = BETA_TIE_TOL) -> GameOutcome:
    """Resolve the one-shot game at model.mean and report both payoffs."""
    thetas, _ = _theta_grid(model.mean, rule.dim)
    v, beta = _v_grid(rule, welfare, pub, thetas, model.cov, cost,
                      mc=mc, beta_tol=beta_tol)
    beta0, v0 = float(beta[0]), float(v[0])
    tie = abs(beta0) <= beta_tol
    if tie:
        experimented = v0 > 0.0
    else:
        experimented = beta0 > 0.0
    return GameOutcome(
        experimented=experimented,
        researcher_utility=beta0,
        editor_utility=v0,
        tie_broken=tie,
    )


def best_subset(theta, family, cost: CostFunction,
                beta_tol: float = BETA_TIE_TOL) -> tuple[tuple, GameOutcome]:
    """Exhaustive researcher best response with endogenous hypothesis choice.

    Enumerates all 2^J subsets s of treatments; selecting S = |s| hypotheses
    gives payoff sum_{j in s} P(r_{S,j} = 1 | theta_j) - C(S) under the
    family's rule for S hypotheses. Ties in the researcher payoff break
    toward the higher editor welfare, then toward selecting fewer hypotheses
    (so the empty set wins when nothing is gained). J <= 20 enforced.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    j = theta.size
    if j > 20:
        raise InputError(f"exhaustive enumeration supports J <= 20, got {j}")
    if j > family.j_max:
        raise InputError(f"family only covers up to {family.j_max} hypotheses")

    best = None  # (utility, welfare, -S, subset)
    for mask in range(2**j):
        members = tuple(idx for idx in range(j) if mask >> idx & 1)
        s = len(members)
        if s == 0:
            utility, welf = 0.0, 0.0
        else:
            rule = family.rule_for(s)
            sub_theta = theta[list(members)]
            probs = rule.component_probs(sub_theta, np.diag(rule.scale**2))
            utility = float(probs.sum()) - cost(s)
            welf = float(probs @ sub_theta)
        if best is None:
            best = (utility, welf, -s, members)
        elif utility > best[0] + beta_tol:
            best = (utility, welf, -s, members)
        elif abs(utility - best[0]) <= beta_tol and (welf, -s) > (best[1], best[2]):
            best = (utility, welf, -s, members)

    utility, welf, _, members = best
    tie = abs(utility) <= beta_tol
    experimented = bool(members) and (utility > beta_tol or (tie and welf > 0.0))
    if not experimented:
        members = ()
        editor = 0.0
    else:
        editor = welf
    outcome = GameOutcome(
        experimented=experimented,
        researcher_utility=utility,
        editor_utility=editor,
        tie_broken=tie,
        selection=members,
    )
    return members, outcome
