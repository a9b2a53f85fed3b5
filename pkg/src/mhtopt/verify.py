"""Grid verification of maximin optimality, local power, and error rates.

``check_maximin`` discretizes the parameter box and tests the two defining
conditions of a maximin protocol: the researcher must be deterred everywhere
on the null region (beta <= 0), and in strong mode the editor's payoff must be
nonnegative on the complement. Violations for slightly-too-liberal rules
concentrate near the origin, so the grid always contains 0 and a +-1e-3 shell
in every coordinate on top of the requested resolution.

``local_power`` evaluates the worst-case editor payoff over alternatives where
at least one welfare component clears epsilon (all components nonnegative),
rescaled by epsilon. The reported number is the finite-epsilon infimum on the
grid, not an extrapolated limit; sweep epsilon downward to see the approach to
the limiting value.

``error_rates`` computes the compound error rates a protocol induces at a
stated parameter (average size, weak FWER, kappa-FWER, FDR), exactly for the
built-in families under independence and by Monte Carlo otherwise.
``brute_force_optimal_threshold`` is the independent search oracle: it
enumerates threshold rules on a grid, keeps the maximin ones, and ranks them
by local power.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ClosedFormUnavailableError, InfeasibleError, InputError
from .game import _beta_grid, _component_probs_grid, _count_sf_grid, _expected_fdp_grid, _false_mask, _mc_hits, _v_grid
from .protocols import CostFunction, LinearPub
from .rules import SeparateThresholds
from .stats import GaussianModel, McConfig, mvn_sample, norm_cdf

__all__ = [
    "NullRegion",
    "ParameterSpace",
    "VerificationReport",
    "check_maximin",
    "local_power",
    "ErrorRates",
    "error_rates",
    "HolmStepDown",
    "bonferroni_vs_holm_gap",
    "BruteForceResult",
    "brute_force_optimal_threshold",
    "separate_vs_index_demo",
]

#: Numerical floor of closed-form rejection probabilities.
CLOSED_FORM_FLOOR = 1e-9
#: Boundary-shell offset always forced into each grid axis.
SHELL = 1e-3


class NullRegion(enum.Enum):
    """Which parameters count as states where research should be deterred.

    ALL_NEGATIVE: every welfare component strictly negative (multiple
    treatments). ANY_NEGATIVE: some welfare component strictly negative
    (multiple outcomes / policy-makers). COMBINATION_NULL: every combination
    coordinate strictly negative (general welfare on combination statistics).
    """

    ALL_NEGATIVE = "all_negative"
    ANY_NEGATIVE = "any_negative"
    COMBINATION_NULL = "combination_null"


@dataclass(frozen=True)
class ParameterSpace:
    """A gridded box of parameters with a null-region predicate.

    Bounds default to [-1, 1] per dimension and must straddle 0 so the grid
    covers every orthant sign pattern. Grid axes are the requested uniform
    points plus 0 and +-1e-3.
    """

    dim: int
    bounds: Optional[tuple] = None
    grid_points_per_dim: int = 21
    null_region: NullRegion = NullRegion.ALL_NEGATIVE

    def __post_init__(self):
        if self.dim < 1:
            raise InputError("dim must be positive")
        if self.grid_points_per_dim < 3:
            raise InputError("need at least 3 grid points per dimension")
        if self.bounds is None:
            bounds = tuple((-1.0, 1.0) for _ in range(self.dim))
        else:
            bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        if len(bounds) != self.dim:
            raise InputError("one (lo, hi) pair per dimension required")
        for lo, hi in bounds:
            if not lo < 0.0 < hi:
                raise InputError(f"bounds must contain 0 in the interior, got ({lo}, {hi})")
        object.__setattr__(self, "bounds", bounds)

    def axis(self, d: int) -> np.ndarray:
        lo, hi = self.bounds[d]
        pts = np.linspace(lo, hi, self.grid_points_per_dim)
        extra = [0.0]
        if lo < -SHELL:
            extra.append(-SHELL)
        if hi > SHELL:
            extra.append(SHELL)
        return np.unique(np.concatenate([pts, extra]))

    def grid(self) -> np.ndarray:
        axes = [self.axis(d) for d in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def null_mask(self, thetas: np.ndarray, welfare) -> np.ndarray:
        """Strict inequalities define membership; welfare-zero points are
        alternatives."""
        if self.null_region is NullRegion.COMBINATION_NULL:
            return np.all(thetas < 0.0, axis=1)
        u = welfare.u_components(thetas)
        if self.null_region is NullRegion.ALL_NEGATIVE:
            return np.all(u < 0.0, axis=1)
        return np.any(u < 0.0, axis=1)


@dataclass(frozen=True)
class VerificationReport:
    """Outcome of a maximin grid check, with worst-case witnesses."""

    passed: bool
    mode: str
    tol: float
    tolerance_floor: float
    method: str
    worst_null_beta: Optional[float]
    null_witness: Optional[tuple]
    worst_alt_welfare: Optional[float]
    alt_witness: Optional[tuple]
    n_grid: int
    n_null: int
    grid_points_per_dim: int
    bounds: tuple

    def to_json_dict(self) -> dict:
        return {
            "passed": self.passed,
            "mode": self.mode,
            "tol": self.tol,
            "tolerance_floor": self.tolerance_floor,
            "method": self.method,
            "worst_null_beta": self.worst_null_beta,
            "null_witness": list(self.null_witness) if self.null_witness else None,
            "worst_alt_welfare": self.worst_alt_welfare,
            "alt_witness": list(self.alt_witness) if self.alt_witness else None,
            "grid": {
                "n_points": self.n_grid,
                "n_null": self.n_null,
                "points_per_dim": self.grid_points_per_dim,
                "bounds": [list(b) for b in self.bounds],
            },
        }


def check_maximin(rule, welfare, pub, space: ParameterSpace, cost: CostFunction,
                  tol: float, mode: str = "strong", cov=None,
                  mc: McConfig | None = None) -> VerificationReport:
    """Grid test of the maximin conditions for a protocol.

    Strong mode checks both defining conditions: researcher deterrence
    (beta <= tol) on the null-region grid and nonnegative editor welfare
    (v >= -tol) on the complement. Weak mode checks deterrence only.
    Failures are reported with witnesses, never raised.
    """
    if mode not in ("strong", "weak"):
        raise InputError(f"mode must be 'strong' or 'weak', got {mode!r}")
    if rule.dim != space.dim:
        raise InputError(f"rule dimension {rule.dim} != space dimension {space.dim}")
    cov = np.eye(space.dim) if cov is None else np.asarray(cov, dtype=float)
    grid = space.grid()
    null = space.null_mask(grid, welfare)

    method = "closed_form"
    floor = CLOSED_FORM_FLOOR
    try:
        beta = _beta_grid(rule, pub, grid, cov, cost)
        if mode == "strong":
            v, _ = _v_grid(rule, welfare, pub, grid, cov, cost)
    except ClosedFormUnavailableError:
        if mc is None:
            raise
        if mc.n_draws < 1000:
            raise InputError("verification verdicts need n_draws >= 1000")
        method = "monte_carlo"
        # binomial worst case: 4 standard errors at p = 1/2 per component
        floor = 4.0 * rule.n_components * np.sqrt(0.25 / mc.n_draws)
        beta = _beta_grid(rule, pub, grid, cov, cost, mc=mc)
        if mode == "strong":
            v, _ = _v_grid(rule, welfare, pub, grid, cov, cost, mc=mc)
    if tol < floor:
        raise InputError(
            f"tol = {tol} is below the numerical floor {floor} of the "
            f"{method} evaluation"
        )

    worst_null_beta = None
    null_witness = None
    if np.any(null):
        idx = int(np.argmax(np.where(null, beta, -np.inf)))
        worst_null_beta = float(beta[idx])
        null_witness = tuple(grid[idx])
    worst_alt = None
    alt_witness = None
    if mode == "strong" and np.any(~null):
        idx = int(np.argmin(np.where(~null, v, np.inf)))
        worst_alt = float(v[idx])
        alt_witness = tuple(grid[idx])

    passed = (worst_null_beta is None or worst_null_beta <= tol) and (
        mode == "weak" or worst_alt is None or worst_alt >= -tol
    )
    return VerificationReport(
        passed=bool(passed),
        mode=mode,
        tol=tol,
        tolerance_floor=floor,
        method=method,
        worst_null_beta=worst_null_beta,
        null_witness=null_witness,
        worst_alt_welfare=worst_alt,
        alt_witness=alt_witness,
        n_grid=grid.shape[0],
        n_null=int(null.sum()),
        grid_points_per_dim=space.grid_points_per_dim,
        bounds=space.bounds,
    )


def local_power(rule, welfare, pub, cost: CostFunction, epsilon: float,
                space: ParameterSpace, cov=None,
                mc: McConfig | None = None) -> float:
    """inf v(theta)/epsilon over alternatives with some welfare >= epsilon.

    The alternative set is {theta : u_j(theta) >= 0 for all j, u_j >= epsilon
    for some j}. Welfare components are linear in theta, so rescaling every
    nonnegative-welfare grid direction onto the surface max_j u_j = epsilon
    grids the binding face at the grid's angular resolution; coarse in-region
    grid points are kept as additional candidates. Reports the
    finite-epsilon infimum.
    """
    if epsilon <= 0:
        raise InputError("epsilon must be positive")
    cov = np.eye(space.dim) if cov is None else np.asarray(cov, dtype=float)
    grid = space.grid()
    u = welfare.u_components(grid)
    nonneg = np.all(u >= 0.0, axis=1)
    umax = u.max(axis=1)

    rays = nonneg & (umax > 0.0)
    face = grid[rays] * (epsilon / umax[rays])[:, None]
    lo = np.array([b[0] for b in space.bounds])
    hi = np.array([b[1] for b in space.bounds])
    face = face[np.all((face >= lo) & (face <= hi), axis=1)]
    candidates = [face]
    inside = grid[nonneg & (umax >= epsilon)]
    if inside.size:
        candidates.append(inside)
    thetas = np.unique(np.concatenate(candidates, axis=0), axis=0)
    if thetas.size == 0:
        raise InputError("no grid candidates in the local alternative set")
    v, _ = _v_grid(rule, welfare, pub, thetas, cov, cost, mc=mc)
    return float(np.min(v) / epsilon)


@dataclass(frozen=True)
class ErrorRates:
    """Compound error rates of a protocol at a stated parameter."""

    avg_size: float
    weak_fwer: float
    k_fwer: Optional[float]
    fdr: float
    method: str

    def to_json_dict(self) -> dict:
        return {
            "avg_size": self.avg_size,
            "weak_fwer": self.weak_fwer,
            "k_fwer": self.k_fwer,
            "fdr": self.fdr,
            "method": self.method,
        }


def error_rates(rule, model: GaussianModel, kappa: Optional[int] = None,
                mc: McConfig | None = None) -> ErrorRates:
    """Average size, weak FWER, kappa-FWER, and FDR at model.mean.

    avg_size = sum_j P(r_j = 1); weak FWER = P(any recommendation);
    kappa-FWER = P(at least kappa recommendations) when kappa is given;
    FDR = E[FDP] with false discoveries defined by strictly negative welfare
    on the recommended coordinate. Closed forms under independence for the
    built-in families, Monte Carlo otherwise.
    """
    thetas = model.mean[None, :]
    try:
        probs = _component_probs_grid(rule, thetas, model.cov)
        weak = float(_count_sf_grid(rule, thetas, model.cov, 1)[0])
        kf = (
            float(_count_sf_grid(rule, thetas, model.cov, kappa)[0])
            if kappa is not None
            else None
        )
        fdr = float(_expected_fdp_grid(rule, thetas, model.cov)[0])
        return ErrorRates(float(probs.sum()), weak, kf, fdr, "closed_form")
    except ClosedFormUnavailableError:
        if mc is None:
            raise
    hits = rule.evaluate(mvn_sample(model, mc))
    counts = hits.sum(axis=1)
    false = _false_mask(rule, thetas)[0]
    false_counts = (hits & false).sum(axis=1)
    fdp = np.where(counts > 0, false_counts / np.maximum(counts, 1), 0.0)
    return ErrorRates(
        avg_size=float(hits.mean(axis=0).sum()),
        weak_fwer=float(np.mean(counts >= 1)),
        k_fwer=float(np.mean(counts >= kappa)) if kappa is not None else None,
        fdr=float(fdp.mean()),
        method="monte_carlo",
    )


@dataclass(frozen=True)
class HolmStepDown:
    """One-sided Holm step-down at a nominal level, as a comparison baseline.

    Rejects hypotheses in increasing p-value order while
    p_(i) <= level / (J - i); data-dependent thresholds mean no closed-form
    rejection probabilities (Monte Carlo only). Holm controls FWER but is
    not average-size preserving: its expected rejection count at the global
    null differs from the nominal level.
    """

    dim_: int
    level: float
    scale: np.ndarray = None

    def __post_init__(self):
        if not (0.0 < self.level < 1.0):
            raise InputError("level must lie in (0, 1)")
        s = (
            np.ones(self.dim_)
            if self.scale is None
            else np.atleast_1d(np.asarray(self.scale, dtype=float))
        )
        s.setflags(write=False)
        object.__setattr__(self, "scale", s)

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
        pvals = 1.0 - norm_cdf(x / self.scale)
        order = np.argsort(pvals, axis=1)
        sorted_p = np.take_along_axis(pvals, order, axis=1)
        j = self.dim_
        steps = self.level / (j - np.arange(j))
        ok = np.cumprod(sorted_p <= steps, axis=1).astype(bool)
        out = np.zeros_like(ok)
        np.put_along_axis(out, order, ok, axis=1)
        return out

    def component_probs(self, theta, cov):
        raise ClosedFormUnavailableError("Holm rejections have no closed form")

    def count_sf(self, theta, cov, kappa):
        raise ClosedFormUnavailableError("Holm rejections have no closed form")


def bonferroni_vs_holm_gap(j: int, cost: CostFunction, mc: McConfig) -> dict:
    """Average size at theta = 0: optimal separate tests vs Holm step-down.

    The optimal separate tests control average size exactly at C(J); a Holm
    step-down at the same nominal level does not. Returns both numbers, the
    gap, and the Monte Carlo standard error of the Holm estimate.
    """
    from .protocols import make_separate_ttests

    c = cost(j)
    rule = make_separate_ttests(j, cost)
    model = GaussianModel(np.zeros(j), np.eye(j))
    exact = error_rates(rule, model)
    holm = HolmStepDown(j, c)
    hits = holm.evaluate(mvn_sample(model, mc))
    counts = hits.sum(axis=1)
    holm_avg = float(counts.mean())
    holm_se = float(counts.std(ddof=1) / np.sqrt(mc.n_draws))
    return {
        "bonferroni_avg_size": exact.avg_size,
        "holm_avg_size": holm_avg,
        "holm_avg_size_se": holm_se,
        "gap": holm_avg - exact.avg_size,
    }


@dataclass(frozen=True)
class BruteForceResult:
    """Winner of the brute-force search plus the full certificate."""

    best_rule: SeparateThresholds
    best_thresholds: tuple
    best_local_power: float
    certificate: tuple  # records: {thresholds, passed, local_power, worst_null_beta}

    def runner_ups(self) -> list:
        return [
            rec
            for rec in self.certificate
            if rec["passed"] and tuple(rec["thresholds"]) != self.best_thresholds
        ]


def brute_force_optimal_threshold(
    j: int, welfare, pub, cost: CostFunction, space: ParameterSpace,
    threshold_grid, cov=None, epsilon: float = 0.01, tol: float = CLOSED_FORM_FLOOR,
) -> BruteForceResult:
    """Enumerate threshold rules, keep the maximin ones, rank by local power.

    ``threshold_grid`` is either a 1-D array of common thresholds (symmetric
    rules) or an iterable of length-J threshold vectors; +inf entries switch
    a component off. This is the search oracle used to cross-check the
    closed-form constructors, and with asymmetric grids it exhibits pairs of
    maximin rules whose welfare curves cross (no rule dominates).
    """
    if j > 4:
        raise InputError("brute force enumeration supports J <= 4")
    cov = np.eye(j) if cov is None else np.asarray(cov, dtype=float)
    scale = np.sqrt(np.diag(cov))
    grid = np.asarray(list(threshold_grid), dtype=float)
    if grid.ndim == 1:
        grid = np.repeat(grid[:, None], j, axis=1)
    if grid.ndim != 2 or grid.shape[1] != j:
        raise InputError("threshold_grid must be scalars or length-J vectors")

    certificate = []
    best = None
    for vec in grid:
        degenerate = bool(np.any(~np.isfinite(vec)))
        rule = SeparateThresholds(vec, scale, degenerate=degenerate)
        report = check_maximin(rule, welfare, pub, space, cost, tol, "strong", cov)
        power = None
        if report.passed:
            power = local_power(rule, welfare, pub, cost, epsilon, space, cov)
            if best is None or power > best[1]:
                best = (rule, power, tuple(vec))
        certificate.append(
            {
                "thresholds": tuple(float(t) for t in vec),
                "passed": report.passed,
                "local_power": power,
                "worst_null_beta": report.worst_null_beta,
            }
        )
    if best is None:
        raise InfeasibleError(
            f"no maximin rule on the {grid.shape[0]}-point threshold grid"
        )
    rule, power, vec = best
    return BruteForceResult(rule, vec, power, tuple(certificate))


def separate_vs_index_demo(m_shift: float, u_gain: float, size: float) -> dict:
    """Conjunction testing vs index testing at theta = (-M, M + u).

    Both components use the unadjusted one-sided critical value
    t = Phi^{-1}(1 - size). The conjunction (both-significant) protocol needs
    X_1 to clear t despite theta_1 = -M, so its power collapses for large M;
    the equal-weight index has mean u/2 over standard deviation sqrt(1/2)
    and retains power. Exact closed forms, no simulation.
    """
    if u_gain <= 0:
        raise InputError("u_gain must be positive")
    from .stats import norm_quantile

    t = norm_quantile(1.0 - size)
    theta = (-m_shift, m_shift + u_gain)
    conjunction = (1.0 - norm_cdf(t - theta[0])) * (1.0 - norm_cdf(t - theta[1]))
    index_mean = 0.5 * (theta[0] + theta[1])  # = u/2
    index_power = 1.0 - norm_cdf(t - index_mean / np.sqrt(0.5))
    return {
        "theta": theta,
        "threshold": float(t),
        "conjunction_power": float(conjunction),
        "index_power": float(index_power),
    }
