"""Recommendation rules: protocol families mapping statistics to 0/1 vectors.

A rule consumes a draw of statistics X in R^dim and emits a vector of binary
recommendations. Four families cover every optimal protocol the constructors
in :mod:`mhtopt.protocols` produce:

- ``SeparateThresholds``: one-sided t-tests, r_j = 1{X_j / s_j >= t_j};
- ``MinStatistic``: all components recommend together iff min_j X_j/s_j >= t;
- ``GroupArgmaxMax``: group-of-treatments statistics, group j recommended iff
  its statistic beats every other group's and clears t (at most one group);
- ``IndexTest``: a single one-sided t-test on a weighted average of the
  statistics, standardized by the index standard deviation.

Each family knows how to evaluate itself on draws (for Monte Carlo) and, where
exact expressions exist, how to compute its per-component rejection
probabilities and rejection-count survival function under X ~ N(theta, Sigma).
``rejection_probs`` dispatches between the two paths. Closed forms are
mandatory whenever defined; Monte Carlo is a fallback, never the default.

Rules are frozen dataclasses: immutable after construction and freely
shareable across threads. They serialize to the JSON document
``{variant, thresholds, weights, metadata}`` used by the CLI.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ClosedFormUnavailableError, InputError
from .stats import GaussianModel, McConfig, mvn_sample, poisson_binomial_sf

__all__ = [
    "SeparateThresholds",
    "MinStatistic",
    "GroupArgmaxMax",
    "IndexTest",
    "RejectionEstimate",
    "rejection_probs",
    "rule_from_json_dict",
]

_GAUSS_NODES = 240  # Gauss-Legendre panel size for the argmax-max integral


def _as_theta_grid(theta) -> tuple[np.ndarray, bool]:
    """Normalize theta to shape (n, dim); report whether input was 1-D."""
    arr = np.atleast_1d(np.asarray(theta, dtype=float))
    if arr.ndim == 1:
        return arr[None, :], True
    if arr.ndim != 2:
        raise InputError(f"theta must be a vector or matrix, got ndim={arr.ndim}")
    return arr, False


def _diag_sd(cov: np.ndarray, dim: int) -> np.ndarray:
    cov = np.asarray(cov, dtype=float)
    if cov.ndim == 0:
        cov = cov.reshape(1, 1)
    if cov.shape != (dim, dim):
        raise InputError(f"cov must be ({dim}, {dim}), got {cov.shape}")
    return np.sqrt(np.diag(cov))


def _require_diagonal(cov: np.ndarray, what: str) -> None:
    cov = np.asarray(cov, dtype=float)
    if np.count_nonzero(cov - np.diag(np.diag(cov))):
        raise ClosedFormUnavailableError(
            f"{what} has a closed form only for diagonal covariance; "
            "pass a Monte Carlo config for general Sigma"
        )


@dataclass(frozen=True)
class SeparateThresholds:
    """Separate one-sided tests: component j fires iff X_j / scale_j >= t_j.

    ``scale`` holds the standardizing standard deviations (sqrt of the
    covariance diagonal the rule was calibrated for). ``degenerate`` marks
    constructor output whose thresholds are infinite (always/never reject).
    """

    thresholds: np.ndarray
    scale: np.ndarray
    degenerate: bool = False
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        t = np.atleast_1d(np.asarray(self.thresholds, dtype=float))
        s = np.atleast_1d(np.asarray(self.scale, dtype=float))
        if t.ndim != 1 or s.shape != t.shape:
            raise InputError("thresholds and scale must be 1-D with equal length")
        if np.any(s <= 0) or np.any(~np.isfinite(s)):
            raise InputError("scale entries must be finite and positive")
        if np.any(np.isnan(t)):
            raise InputError("thresholds must not be NaN")
        if np.any(~np.isfinite(t)) and not self.degenerate:
            raise InputError(
                "non-finite thresholds require the explicit degenerate flag"
            )
        t.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "thresholds", t)
        object.__setattr__(self, "scale", s)

    @property
    def dim(self) -> int:
        return self.thresholds.size

    @property
    def n_components(self) -> int:
        return self.thresholds.size

    @property
    def cost_arity(self) -> int:
        return self.n_components

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return x / self.scale >= self.thresholds

    def component_probs(self, theta, cov) -> np.ndarray:
        """P(r_j = 1 | theta) = 1 - Phi((t_j s_j - theta_j) / sigma_j).

        Exact for any covariance: each event only involves the marginal of X_j.
        """
        grid, squeeze = _as_theta_grid(theta)
        sd = _diag_sd(cov, self.dim)
        # t * s can be -inf * s; guard the 0-avoidance only, inf is fine here
        z = (self.thresholds * self.scale - grid) / sd
        from .stats import norm_cdf

        probs = 1.0 - norm_cdf(z)
        return probs[0] if squeeze else probs

    def count_sf(self, theta, cov, kappa: int) -> np.ndarray:
        """P(at least kappa components fire); needs independence."""
        _require_diagonal(cov, "rejection-count distribution")
        grid, squeeze = _as_theta_grid(theta)
        probs = self.component_probs(grid, cov)
        out = poisson_binomial_sf(probs, kappa)
        return out[0] if squeeze else out

    def to_json_dict(self) -> dict:
        return {
            "variant": "separate_thresholds",
            "thresholds": [float(v) for v in self.thresholds],
            "weights": None,
            "metadata": {
                "scale": [float(v) for v in self.scale],
                "degenerate": self.degenerate,
                **_clean_meta(self.meta),
            },
        }


@dataclass(frozen=True)
class MinStatistic:
    """Worst-case protocol: every component fires iff min_j X_j/s_j >= t."""

    dim_: int
    threshold: float
    scale: np.ndarray = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.dim_ < 1:
            raise InputError("dimension must be positive")
        s = (
            np.ones(self.dim_)
            if self.scale is None
            else np.atleast_1d(np.asarray(self.scale, dtype=float))
        )
        if s.shape != (self.dim_,) or np.any(s <= 0):
            raise InputError("scale must be positive with one entry per dimension")
        s.setflags(write=False)
        object.__setattr__(self, "scale", s)
        object.__setattr__(self, "threshold", float(self.threshold))

    @property
    def dim(self) -> int:
        return self.dim_

    @property
    def n_components(self) -> int:
        return self.dim_

    @property
    def cost_arity(self) -> int:
        return self.dim_

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        joint = np.min(x / self.scale, axis=1) >= self.threshold
        return np.repeat(joint[:, None], self.dim_, axis=1)

    def joint_prob(self, theta, cov) -> np.ndarray:
        _require_diagonal(cov, "the min-statistic rule")
        grid, squeeze = _as_theta_grid(theta)
        sd = _diag_sd(cov, self.dim_)
        from .stats import norm_cdf

        marg = 1.0 - norm_cdf((self.threshold * self.scale - grid) / sd)
        out = np.prod(marg, axis=1)
        return out[0] if squeeze else out

    def component_probs(self, theta, cov) -> np.ndarray:
        grid, squeeze = _as_theta_grid(theta)
        joint = self.joint_prob(grid, cov)
        probs = np.repeat(joint[:, None], self.dim_, axis=1)
        return probs[0] if squeeze else probs

    def count_sf(self, theta, cov, kappa: int) -> np.ndarray:
        # The count is 0 or dim: all components recommend together.
        grid, squeeze = _as_theta_grid(theta)
        if kappa <= 0:
            out = np.ones(grid.shape[0])
        elif kappa <= self.dim_:
            out = self.joint_prob(grid, cov)
        else:
            out = np.zeros(grid.shape[0])
        return out[0] if squeeze else out

    def to_json_dict(self) -> dict:
        return {
            "variant": "min_statistic",
            "thresholds": [self.threshold],
            "weights": None,
            "metadata": {
                "dim": self.dim_,
                "scale": [float(v) for v in self.scale],
                **_clean_meta(self.meta),
            },
        }


@dataclass(frozen=True)
class GroupArgmaxMax:
    """Group-level rule on independent standard-normal group statistics.

    Component j (one per publishable group of treatments) fires iff that
    group's statistic strictly exceeds every other group's and the level t.
    At most one component fires per draw. Only Sigma = I is supported; the
    existence of an optimal rule is not guaranteed under dependence.
    """

    threshold: float
    groups: tuple
    n_treatments: int
    kappa: int = 1
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        groups = tuple(tuple(sorted(int(i) for i in g)) for g in self.groups)
        if not groups:
            raise InputError("at least one publishable group is required")
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "threshold", float(self.threshold))

    @property
    def dim(self) -> int:
        return len(self.groups)

    @property
    def n_components(self) -> int:
        return len(self.groups)

    @property
    def cost_arity(self) -> int:
        return self.n_treatments

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        is_max = x >= np.max(x, axis=1, keepdims=True)
        # break exact ties toward the lowest index (measure-zero event)
        first = np.cumsum(is_max, axis=1) == 1
        return is_max & first & (x > self.threshold)

    def _check_identity(self, cov) -> None:
        cov = np.asarray(cov, dtype=float)
        if cov.shape != (self.dim, self.dim) or not np.allclose(
            cov, np.eye(self.dim), atol=1e-12, rtol=0.0
        ):
            raise ClosedFormUnavailableError(
                "the group argmax-max rule assumes independent standard-normal "
                "group statistics (Sigma = I)"
            )

    def component_probs(self, theta, cov) -> np.ndarray:
        """P(group j wins and clears t) via a 1-D integral.

        P_j(theta) = int_t^inf phi(x - theta_j) prod_{k != j} Phi(x - theta_k) dx,
        evaluated by fixed Gauss-Legendre quadrature on [t, max theta + 10]
        (the integrand is smooth and decays like the normal density, so the
        panel is accurate to ~1e-13; treated as the closed-form path).
        """
        self._check_identity(cov)
        grid, squeeze = _as_theta_grid(theta)
        if grid.shape[1] != self.dim:
            raise InputError("theta dimension must match the number of groups")
        hi = max(self.threshold + 2.0, float(np.max(grid, initial=0.0)) + 10.0)
        nodes, weights = np.polynomial.legendre.leggauss(_GAUSS_NODES)
        x = 0.5 * (hi - self.threshold) * (nodes + 1.0) + self.threshold
        w = 0.5 * (hi - self.threshold) * weights
        from .stats import norm_cdf

        # diff[n, q, k] = x_q - theta_{n,k}
        diff = x[None, :, None] - grid[:, None, :]
        cdf = norm_cdf(diff)
        pdf = np.exp(-0.5 * diff**2) / np.sqrt(2.0 * np.pi)
        probs = np.empty((grid.shape[0], self.dim))
        for j in range(self.dim):
            others = np.prod(np.delete(cdf, j, axis=2), axis=2)
            probs[:, j] = (pdf[:, :, j] * others) @ w
        return probs[0] if squeeze else probs

    def count_sf(self, theta, cov, kappa: int) -> np.ndarray:
        # At most one group is ever recommended, so the count is 0 or 1.
        grid, squeeze = _as_theta_grid(theta)
        if kappa <= 0:
            out = np.ones(grid.shape[0])
        elif kappa == 1:
            out = self.component_probs(grid, cov).sum(axis=1)
        else:
            out = np.zeros(grid.shape[0])
        return out[0] if squeeze else out

    def to_json_dict(self) -> dict:
        return {
            "variant": "group_argmax_max",
            "thresholds": [self.threshold],
            "weights": None,
            "metadata": {
                "groups": [list(g) for g in self.groups],
                "J": self.n_treatments,
                "kappa": self.kappa,
                **_clean_meta(self.meta),
            },
        }


@dataclass(frozen=True)
class IndexTest:
    """One-sided test on a weighted average: fires iff w'X / index_sd > t.

    ``index_sd`` is sqrt(w' Sigma w) for the covariance the rule was built
    against; weights must sum to one.
    """

    weights: np.ndarray
    threshold: float
    index_sd: float
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if w.ndim != 1:
            raise InputError("weights must be a vector")
        if abs(float(w.sum()) - 1.0) > 1e-12:
            raise InputError(f"index weights must sum to 1, got {w.sum()!r}")
        if not (self.index_sd > 0):
            raise InputError("index standard deviation must be positive")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "threshold", float(self.threshold))
        object.__setattr__(self, "index_sd", float(self.index_sd))

    @property
    def dim(self) -> int:
        return self.weights.size

    @property
    def n_components(self) -> int:
        return 1

    @property
    def cost_arity(self) -> int:
        return self.weights.size

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        stat = (x @ self.weights) / self.index_sd
        return (stat > self.threshold)[:, None]

    def component_probs(self, theta, cov) -> np.ndarray:
        """Exact for any covariance: the index is univariate normal."""
        grid, squeeze = _as_theta_grid(theta)
        cov = np.asarray(cov, dtype=float)
        if cov.ndim == 0:
            cov = cov.reshape(1, 1)
        var = float(self.weights @ cov @ self.weights)
        if var <= 0:
            raise InputError("index variance under this covariance is not positive")
        from .stats import norm_cdf

        mean = grid @ self.weights
        z = (self.threshold * self.index_sd - mean) / np.sqrt(var)
        probs = (1.0 - norm_cdf(z))[:, None]
        return probs[0] if squeeze else probs

    def count_sf(self, theta, cov, kappa: int) -> np.ndarray:
        grid, squeeze = _as_theta_grid(theta)
        if kappa <= 0:
            out = np.ones(grid.shape[0])
        elif kappa == 1:
            out = self.component_probs(grid, cov)[:, 0]
        else:
            out = np.zeros(grid.shape[0])
        return out[0] if squeeze else out

    def to_json_dict(self) -> dict:
        return {
            "variant": "index_test",
            "thresholds": [self.threshold],
            "weights": [float(v) for v in self.weights],
            "metadata": {"index_sd": self.index_sd, **_clean_meta(self.meta)},
        }


def _clean_meta(meta: dict) -> dict:
    return {k: v for k, v in meta.items() if v is not None}


@dataclass(frozen=True)
class RejectionEstimate:
    """Per-component rejection probabilities with provenance.

    ``se`` is None on the closed-form path; on the Monte Carlo path it holds
    the binomial standard error of each entry.
    """

    probs: np.ndarray
    se: Optional[np.ndarray]
    method: str


def rejection_probs(rule, model: GaussianModel, mc: McConfig | None = None,
                    method: str = "auto") -> RejectionEstimate:
    """Rejection probability of each recommendation component under ``model``.

    method="auto" uses the exact expression whenever the rule/covariance
    pairing admits one and otherwise falls back to Monte Carlo (requiring
    ``mc``). Closed forms exist for: separate thresholds and index tests
    under any covariance; the min-statistic rule under diagonal covariance;
    the group rule under the identity covariance.
    """
    if rule.dim != model.dim:
        raise InputError(
            f"rule dimension {rule.dim} does not match model dimension {model.dim}"
        )
    if method not in ("auto", "closed_form", "mc"):
        raise InputError(f"unknown method {method!r}")
    if method != "mc":
        try:
            probs = rule.component_probs(model.mean, model.cov)
            return RejectionEstimate(np.asarray(probs, dtype=float), None, "closed_form")
        except ClosedFormUnavailableError:
            if method == "closed_form":
                raise
    if mc is None:
        raise ClosedFormUnavailableError(
            "no closed form for this rule/covariance pairing and no Monte Carlo "
            "config was given"
        )
    draws = mvn_sample(model, mc)
    hits = rule.evaluate(draws)
    probs = hits.mean(axis=0)
    se = np.sqrt(probs * (1.0 - probs) / mc.n_draws)
    return RejectionEstimate(probs, se, "monte_carlo")


_VARIANTS = {
    "separate_thresholds": SeparateThresholds,
    "min_statistic": MinStatistic,
    "group_argmax_max": GroupArgmaxMax,
    "index_test": IndexTest,
}


def rule_from_json_dict(doc: dict):
    """Rebuild a rule from its ``{variant, thresholds, weights, metadata}`` form."""
    try:
        variant = doc["variant"]
        thresholds = doc["thresholds"]
        meta = dict(doc.get("metadata") or {})
    except (KeyError, TypeError) as exc:
        raise InputError(f"malformed rule document: {exc}") from exc
    if variant not in _VARIANTS:
        raise InputError(f"unknown rule variant {variant!r}")
    if variant == "separate_thresholds":
        scale = meta.pop("scale", None)
        if scale is None:
            scale = np.ones(len(thresholds))
        degenerate = bool(meta.pop("degenerate", False))
        return SeparateThresholds(
            np.asarray(thresholds, dtype=float),
            np.asarray(scale, dtype=float),
            degenerate=degenerate,
            meta=meta,
        )
    if variant == "min_statistic":
        dim = int(meta.pop("dim"))
        scale = meta.pop("scale", None)
        return MinStatistic(
            dim,
            float(thresholds[0]),
            None if scale is None else np.asarray(scale, dtype=float),
            meta=meta,
        )
    if variant == "group_argmax_max":
        groups = tuple(tuple(g) for g in meta.pop("groups"))
        return GroupArgmaxMax(
            float(thresholds[0]),
            groups,
            int(meta.pop("J")),
            kappa=int(meta.pop("kappa", 1)),
            meta=meta,
        )
    weights = doc.get("weights")
    if weights is None:
        raise InputError("index_test documents require weights")
    return IndexTest(
        np.asarray(weights, dtype=float),
        float(thresholds[0]),
        float(meta.pop("index_sd")),
        meta=meta,
    )
