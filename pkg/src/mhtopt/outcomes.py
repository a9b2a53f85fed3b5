"""Multiple-outcome aggregation on synthetic single-treatment trials.

Trials follow the known-variance regression model Y_{i,g} = theta_g D_i +
eps_{i,g} with homoskedastic Gaussian noise, so the per-outcome OLS effect is
the treated-minus-control difference in means and its covariance is closed
form. ``aggregation_equivalence`` checks the exact linear-algebra identity
between (i) aggregating per-outcome OLS effects with weights w and (ii)
running OLS on the pre-aggregated outcome Y'w. ``policy_maker_indices`` turns
a policy-maker weight matrix into one welfare-index test per column.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .protocols import make_index_rule
from .stats import McConfig

__all__ = [
    "SyntheticTrial",
    "make_trial",
    "ols_effects",
    "aggregation_equivalence",
    "policy_maker_indices",
    "trial_to_csv",
    "trial_from_csv",
]


@dataclass(frozen=True)
class SyntheticTrial:
    """A completed trial: binary treatment vector and an (n, G) outcome matrix."""

    treatment: np.ndarray
    outcomes: np.ndarray
    theta: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.treatment)
        y = np.asarray(self.outcomes, dtype=float)
        if set(np.unique(d)) - {0, 1}:
            raise InputError("treatment must be binary")
        if y.ndim != 2 or y.shape[0] != d.size:
            raise InputError("outcomes must be (n, G) aligned with treatment")
        if d.sum() == 0 or d.sum() == d.size:
            raise InputError("need at least one treated and one control unit")
        object.__setattr__(self, "treatment", d.astype(int))
        object.__setattr__(self, "outcomes", y)
        object.__setattr__(self, "theta", np.atleast_1d(np.asarray(self.theta, float)))
        object.__setattr__(self, "sigma", np.atleast_1d(np.asarray(self.sigma, float)))

    @property
    def n(self) -> int:
        return self.treatment.size

    @property
    def n_outcomes(self) -> int:
        return self.outcomes.shape[1]


def make_trial(n: int, theta, sigma, cfg: McConfig, treated_fraction: float = 0.5) -> SyntheticTrial:
    """Simulate a trial with fixed treated share and iid Gaussian noise."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    g = theta.size
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (g,)).copy()
    if np.any(sigma <= 0):
        raise InputError("noise standard deviations must be positive")
    n1 = int(round(n * treated_fraction))
    if not 0 < n1 < n:
        raise InputError("treated fraction leaves an empty arm")
    rng = np.random.Generator(np.random.Philox(key=[int(cfg.seed), 0]))
    treatment = np.zeros(n, dtype=int)
    treatment[rng.permutation(n)[:n1]] = 1
    noise = rng.standard_normal((n, g)) * sigma
    outcomes = treatment[:, None] * theta + noise
    return SyntheticTrial(treatment, outcomes, theta, sigma)


def ols_effects(trial: SyntheticTrial) -> tuple[np.ndarray, np.ndarray]:
    """Per-outcome OLS effect and its known-variance covariance.

    For the single-treatment design the OLS coefficient is the difference in
    means, theta_hat_g = mean(Y_g | D=1) - mean(Y_g | D=0), with covariance
    diag(sigma_g^2 (1/N1 + 1/N0)). Degenerate designs (single arm) are
    rejected at construction, so the design matrix is full rank here.
    """
    d = trial.treatment.astype(bool)
    n1, n0 = int(d.sum()), int((~d).sum())
    theta_hat = trial.outcomes[d].mean(axis=0) - trial.outcomes[~d].mean(axis=0)
    cov = np.diag(trial.sigma**2 * (1.0 / n1 + 1.0 / n0))
    return theta_hat, cov


def aggregation_equivalence(trial: SyntheticTrial, weights) -> float:
    """|w' theta_hat - OLS effect on the pre-aggregated outcome Y'w|.

    Exact identity for linear estimators; any discrepancy is float rounding.
    """
    w = np.atleast_1d(np.asarray(weights, dtype=float))
    if w.size != trial.n_outcomes:
        raise InputError("one weight per outcome required")
    theta_hat, _ = ols_effects(trial)
    d = trial.treatment.astype(bool)
    aggregated = trial.outcomes @ w
    direct = aggregated[d].mean() - aggregated[~d].mean()
    return float(abs(w @ theta_hat - direct))


def policy_maker_indices(weight_matrix, cov, size: float) -> list:
    """One welfare-index test per policy-maker (column of the weight matrix)."""
    w = np.asarray(weight_matrix, dtype=float)
    if w.ndim == 1:
        w = w[:, None]
    colsums = w.sum(axis=0)
    if np.any(np.abs(colsums - 1.0) > 1e-12):
        raise InputError(f"weight columns must sum to 1, got {colsums}")
    return [make_index_rule(w[:, j], cov, size) for j in range(w.shape[1])]


def trial_to_csv(trial: SyntheticTrial) -> str:
    """Serialize as unit_id, treatment, outcome_1..G rows."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(
        ["unit_id", "treatment"]
        + [f"outcome_{g + 1}" for g in range(trial.n_outcomes)]
    )
    for i in range(trial.n):
        writer.writerow(
            [i, int(trial.treatment[i])] + [repr(float(v)) for v in trial.outcomes[i]]
        )
    return buf.getvalue()


def trial_from_csv(text: str, theta=None, sigma=None) -> SyntheticTrial:
    """Rebuild a trial from its CSV form; theta/sigma default to zeros/ones."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or not rows[0][:2] == ["unit_id", "treatment"]:
        raise InputError("trial CSV must start with unit_id, treatment columns")
    g = len(rows[0]) - 2
    treatment = np.array([int(r[1]) for r in rows[1:]])
    outcomes = np.array([[float(v) for v in r[2:]] for r in rows[1:]])
    return SyntheticTrial(
        treatment,
        outcomes,
        np.zeros(g) if theta is None else theta,
        np.ones(g) if sigma is None else sigma,
    )
