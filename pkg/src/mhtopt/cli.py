"""Command-line surface.

Subcommands:

- ``critval``: per-test size and critical value implied by the cost and
  publication primitives, tagging which regime applies (no adjustment,
  Bonferroni, or the threshold-publication size).
- ``figure3``: CSV of optimal per-test size against the number of hypotheses
  for linear and count-threshold publication rules under fixed and
  proportional cost schemes.
- ``verify``: run the maximin grid check plus local power on a rule file,
  exit 0/1 on pass/fail.
- ``simulate``: resolve the one-shot game at a given theta (optionally with
  endogenous hypothesis selection) and print the outcome.
- ``index``: construct welfare-weighted, variance-minimizing, or
  factor-model index tests from a covariance file.

Every run prints its fully resolved configuration (JSON outputs carry a
"config" key; CSV outputs start with a ``# config:`` comment line), all
numbers round-trip exactly, and exit codes are scriptable: 0 pass, 1
verification failure, 2 invalid input, 3 parse error.
"""

from __future__ import annotations

import argparse
import csv as _csv
import io
import json
import sys

import numpy as np

from . import protocols, verify
from .errors import InfeasibleError, InputError, MhtOptError
from .game import (
    AdditiveTreatments,
    GeneralTreatments,
    OutcomesPolicyMakers,
    best_subset,
    play_game,
)
from .rules import GroupArgmaxMax, IndexTest, MinStatistic, rule_from_json_dict
from .stats import GaussianModel, McConfig, norm_quantile

PASS, FAIL, INVALID, PARSE_ERROR = 0, 1, 2, 3


class ParseFileError(MhtOptError):
    """An input file failed to parse."""


def _config_dict(args: argparse.Namespace) -> dict:
    return {
        k: v
        for k, v in sorted(vars(args).items())
        if k not in ("func",) and v is not None
    }


def _emit_json(payload: dict, args) -> None:
    print(json.dumps({"config": _config_dict(args), **payload}, indent=2))


def _emit_csv(rows: list[dict], fieldnames: list[str], args) -> None:
    buf = io.StringIO()
    writer = _csv.DictWriter(buf, fieldnames=fieldnames)
    writer.writeheader()
    for row in rows:
        writer.writerow(
            {k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()}
        )
    print(f"# config: {json.dumps(_config_dict(args))}")
    print(buf.getvalue(), end="")


def _cost_from_args(args) -> protocols.CostFunction:
    return protocols.CostFunction.affine(
        fixed=getattr(args, "cost_fixed", 0.0) or 0.0,
        slope=getattr(args, "cost_variable", 0.0) or 0.0,
    )


def _load_json_file(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseFileError(f"cannot parse {path}: {exc}") from exc


def _load_rule(path: str):
    doc = _load_json_file(path)
    if isinstance(doc, dict) and "variant" not in doc and "rule" in doc:
        doc = doc["rule"]  # accept documents produced by --emit-rule / index
    try:
        return rule_from_json_dict(doc)
    except InputError as exc:
        raise ParseFileError(f"cannot parse rule file {path}: {exc}") from exc


def _load_sigma(path: str) -> np.ndarray:
    if path.endswith(".csv"):
        try:
            with open(path) as fh:
                rows = [[float(v) for v in row] for row in _csv.reader(fh) if row]
        except (OSError, ValueError) as exc:
            raise ParseFileError(f"cannot parse {path}: {exc}") from exc
        return np.asarray(rows)
    doc = _load_json_file(path)
    return np.asarray(doc, dtype=float)


def _parse_floats(text: str) -> np.ndarray:
    try:
        return np.asarray([float(v) for v in text.split(",") if v != ""])
    except ValueError as exc:
        raise InputError(f"cannot parse float list {text!r}") from exc


# ---------------------------------------------------------------------------
# critval
# ---------------------------------------------------------------------------


def _regime(args) -> str:
    if args.pub == "threshold":
        return "p_star"
    if (args.cost_fixed or 0.0) > 0 and not args.cost_variable:
        return "bonferroni"
    if not args.cost_fixed and (args.cost_variable or 0.0) > 0:
        return "no_adjustment"
    return "mixed"


def cmd_critval(args) -> int:
    cost = _cost_from_args(args)
    c = cost(args.J)
    if args.pub == "threshold":
        if args.kappa is None or args.gamma is None:
            raise InputError("threshold publication rule needs --kappa and --gamma")
        size = protocols.solve_publication_size(args.J, args.kappa, c / args.gamma)
    else:
        size = c / args.J
    critical = float("-inf") if size >= 1.0 else norm_quantile(1.0 - size)
    if args.emit_rule:
        if args.pub == "threshold":
            rule = protocols.make_threshold_pub_ttests(
                args.J, args.kappa, cost, args.gamma
            )
        else:
            rule = protocols.make_separate_ttests(args.J, cost)
        _emit_json({"rule": rule.to_json_dict()}, args)
        return PASS
    row = {
        "j": args.J,
        "per_test_size": float(size),
        "critical_value": float(critical),
        "regime": _regime(args),
    }
    if args.format == "json":
        _emit_json(row, args)
    else:
        _emit_csv([row], list(row), args)
    return PASS


# ---------------------------------------------------------------------------
# figure3
# ---------------------------------------------------------------------------


def _parse_cost_schemes(spec: str) -> list[tuple[str, float]]:
    if spec is None:
        return [("fixed", 0.1), ("linear", 0.1)]
    name, _, value = spec.partition(":")
    value = float(value) if value else 0.1
    if name == "both":
        return [("fixed", value), ("linear", value)]
    if name not in ("fixed", "linear"):
        raise InputError(f"cost scheme must be fixed|linear|both, got {name!r}")
    return [(name, value)]


def cmd_figure3(args) -> int:
    lo, _, hi = args.J_range.partition(":")
    j_values = range(int(lo), int(hi) + 1)
    kappas = [int(k) for k in args.kappa_list.split(",")]
    schemes = _parse_cost_schemes(args.cost)
    rows = []
    for scheme, value in schemes:
        for j in j_values:
            c = value if scheme == "fixed" else value * j
            rows.append(
                {
                    "rule": "linear",
                    "cost_scheme": scheme,
                    "kappa": "",
                    "j": j,
                    "cost": float(c),
                    "gamma": "",
                    "size": c / j,
                }
            )
            for kappa in kappas:
                if j < kappa:
                    continue
                gamma = float(j)  # threshold rule fixes gamma = J
                rows.append(
                    {
                        "rule": "threshold",
                        "cost_scheme": scheme,
                        "kappa": kappa,
                        "j": j,
                        "cost": float(c),
                        "gamma": gamma,
                        "size": protocols.solve_publication_size(j, kappa, c / gamma),
                    }
                )
    _emit_csv(rows, ["rule", "cost_scheme", "kappa", "j", "cost", "gamma", "size"], args)
    return PASS


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def _welfare_for(rule, name: str):
    if name == "additive":
        return AdditiveTreatments(rule.n_components), verify.NullRegion.ALL_NEGATIVE
    if name == "general":
        return GeneralTreatments(rule.dim), verify.NullRegion.COMBINATION_NULL
    if name == "outcomes":
        return (
            OutcomesPolicyMakers(np.eye(rule.dim)),
            verify.NullRegion.ANY_NEGATIVE,
        )
    raise InputError(f"unknown welfare {name!r}")


def _pub_from_args(args, cost, j):
    if args.pub == "threshold":
        if args.kappa is None or args.gamma is None:
            raise InputError("threshold publication rule needs --kappa and --gamma")
        return protocols.ThresholdPub(args.kappa, args.gamma)
    if args.pub == "malevolent":
        return protocols.MalevolentPub()
    return protocols.LinearPub()


def cmd_verify(args) -> int:
    rule = _load_rule(args.rule_file)
    cost = _cost_from_args(args)
    welfare, null_region = _welfare_for(rule, args.welfare)
    pub = _pub_from_args(args, cost, rule.cost_arity)
    space = verify.ParameterSpace(
        rule.dim,
        tuple((-args.bound, args.bound) for _ in range(rule.dim)),
        grid_points_per_dim=args.points,
        null_region=null_region,
    )
    mc = McConfig(args.mc_draws, seed=args.seed) if args.mc_draws else None
    report = verify.check_maximin(
        rule, welfare, pub, space, cost, args.tol, mode=args.mode, mc=mc
    )
    power = verify.local_power(
        rule, welfare, pub, cost, args.epsilon, space, mc=mc
    )
    _emit_json(
        {"maximin": report.to_json_dict(), "local_power": power}, args
    )
    return PASS if report.passed else FAIL


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def _model_for_rule(rule, theta, sigma_path=None) -> GaussianModel:
    if sigma_path is not None:
        return GaussianModel(theta, _load_sigma(sigma_path))
    if isinstance(rule, IndexTest):
        # any covariance with w' Sigma w = index_sd^2 reproduces the rule's
        # calibrated behavior
        w = rule.weights
        return GaussianModel(
            theta, np.eye(rule.dim) * rule.index_sd**2 / float(w @ w)
        )
    if isinstance(rule, GroupArgmaxMax):
        return GaussianModel(theta, np.eye(rule.dim))
    return GaussianModel(theta, np.diag(rule.scale**2))


def cmd_simulate(args) -> int:
    theta = _parse_floats(args.theta)
    cost = _cost_from_args(args)
    if args.endogenous:
        family = protocols.make_endogenous_family(theta.size, cost)
        selection, outcome = best_subset(theta, family, cost)
        _emit_json({"outcome": outcome.to_json_dict()}, args)
        return PASS
    if not args.rule_file:
        raise InputError("--rule-file is required unless --endogenous is given")
    rule = _load_rule(args.rule_file)
    if theta.size != rule.dim:
        raise InputError(
            f"theta has dimension {theta.size}, rule expects {rule.dim}"
        )
    welfare, _ = _welfare_for(rule, args.welfare)
    pub = _pub_from_args(args, cost, rule.cost_arity)
    model = _model_for_rule(rule, theta, args.sigma_file)
    mc = McConfig(args.mc_draws, seed=args.seed) if args.mc_draws else None
    outcome = play_game(rule, welfare, pub, model, cost, mc=mc)
    _emit_json({"outcome": outcome.to_json_dict()}, args)
    return PASS


# ---------------------------------------------------------------------------
# index
# ---------------------------------------------------------------------------


def cmd_index(args) -> int:
    sigma = _load_sigma(args.sigma_file)
    try:
        np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise InputError("sigma file is not a positive-definite matrix") from exc
    if args.mode == "welfare":
        if args.weights is None:
            raise InputError("welfare mode needs --weights")
        weights = _parse_floats(args.weights)
    elif args.mode == "variance":
        weights = protocols.variance_min_weights(sigma)
    else:
        if args.loadings is None:
            raise InputError("factor mode needs --loadings")
        factor_w = protocols.factor_index_weights(_parse_floats(args.loadings), sigma)
        # the equivalent sum-to-one index test (scale-invariant)
        weights = factor_w / factor_w.sum()
    rule = protocols.make_index_rule(weights, sigma, args.cost)
    payload = {
        "weights": [float(w) for w in weights],
        "critical_value": rule.threshold,
        "index_variance": float(weights @ sigma @ weights),
        "rule": rule.to_json_dict(),
    }
    if args.mode == "factor":
        payload["factor_weights"] = [float(w) for w in factor_w]
    _emit_json(payload, args)
    return PASS


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mhtopt",
        description="Optimal multiple-hypothesis-testing protocols from "
        "research costs and publication rules.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_cost_flags(p):
        p.add_argument("--cost-fixed", type=float, default=0.0)
        p.add_argument("--cost-variable", type=float, default=0.0,
                       help="variable cost per hypothesis (affine slope)")

    def add_pub_flags(p):
        p.add_argument("--pub", choices=["linear", "threshold", "malevolent"],
                       default="linear")
        p.add_argument("--kappa", type=int)
        p.add_argument("--gamma", type=float)

    p = sub.add_parser("critval", help="per-test size and critical value")
    p.add_argument("--J", type=int, required=True)
    add_cost_flags(p)
    add_pub_flags(p)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--emit-rule", action="store_true",
                   help="print the calibrated rule document instead of the table")
    p.set_defaults(func=cmd_critval)

    p = sub.add_parser("figure3", help="optimal size vs J for both publication rules")
    p.add_argument("--J-range", default="1:15", help="inclusive range lo:hi")
    p.add_argument("--kappa-list", default="1,2,3")
    p.add_argument("--cost", help="fixed:VAL | linear:VAL | both:VAL (default both:0.1)")
    p.set_defaults(func=cmd_figure3)

    p = sub.add_parser("verify", help="maximin grid check + local power")
    p.add_argument("--rule-file", required=True)
    p.add_argument("--welfare", choices=["additive", "general", "outcomes"],
                   default="additive")
    add_pub_flags(p)
    add_cost_flags(p)
    p.add_argument("--mode", choices=["strong", "weak"], default="strong")
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--points", type=int, default=21)
    p.add_argument("--bound", type=float, default=1.0)
    p.add_argument("--epsilon", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mc-draws", type=int)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("simulate", help="resolve the game at a given theta")
    p.add_argument("--theta", required=True, help="comma-separated parameter vector")
    p.add_argument("--rule-file")
    p.add_argument("--welfare", choices=["additive", "general", "outcomes"],
                   default="additive")
    add_pub_flags(p)
    add_cost_flags(p)
    p.add_argument("--endogenous", action="store_true",
                   help="researcher selects which hypotheses to test")
    p.add_argument("--sigma-file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mc-draws", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("index", help="index tests from a covariance file")
    p.add_argument("--sigma-file", required=True)
    p.add_argument("--mode", choices=["welfare", "variance", "factor"], required=True)
    p.add_argument("--weights", help="comma-separated welfare weights (sum to 1)")
    p.add_argument("--loadings", help="comma-separated positive factor loadings")
    p.add_argument("--cost", type=float, default=0.05,
                   help="research cost C(G), the index test size")
    p.set_defaults(func=cmd_index)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ParseFileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return PARSE_ERROR
    except (InputError, InfeasibleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return INVALID


if __name__ == "__main__":
    sys.exit(main())
