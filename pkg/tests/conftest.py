"""Shared high-precision oracles, independent of the package's own numerics."""

import mpmath as mp
import numpy as np
import pytest

mp.mp.dps = 40


def phi_oracle(z) -> float:
    """Normal CDF via mpmath's erfc (40-digit arithmetic)."""
    return float(0.5 * mp.erfc(-mp.mpf(z) / mp.sqrt(2)))


def phi_inv_oracle(p) -> float:
    """Inverse normal CDF by safeguarded Newton iteration on phi_oracle."""
    p = mp.mpf(p)
    lo, hi = mp.mpf(-40), mp.mpf(40)
    z = mp.mpf(0)
    for _ in range(200):
        f = 0.5 * mp.erfc(-z / mp.sqrt(2)) - p
        fp = mp.exp(-z * z / 2) / mp.sqrt(2 * mp.pi)
        step = f / fp
        z_new = z - step
        if not (lo < z_new < hi):
            z_new = (lo + hi) / 2
        if 0.5 * mp.erfc(-z_new / mp.sqrt(2)) > p:
            hi = z_new
        else:
            lo = z_new
        if abs(z_new - z) < mp.mpf(10) ** -35:
            return float(z_new)
        z = z_new
    return float(z)


def publication_polynomial_oracle(j: int, kappa: int, p) -> float:
    """Direct high-precision sum of binom(J,k) p^k over k = kappa..J."""
    import math

    p = mp.mpf(p)
    return float(sum(math.comb(j, k) * p**k for k in range(kappa, j + 1)))


def random_pd_matrix(rng: np.random.Generator, dim: int) -> np.ndarray:
    a = rng.standard_normal((dim, dim))
    return a @ a.T + dim * np.eye(dim)


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion at the end of the run."""
    lines = []
    for status in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(status, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance.py::test_criterion_" in nodeid and report.when == "call":
                name = nodeid.split("::test_criterion_")[1]
                verdict = "PASS" if status == "passed" else "FAIL"
                lines.append((name, verdict))
    if lines:
        terminalreporter.write_sep("-", "acceptance criteria")
        for name, verdict in sorted(lines):
            terminalreporter.write_line(f"criterion {name}: {verdict}")
