from __future__ import annotations

import numpy as np
import pytest

from flatflow.grid import Jet2


def random_convex_jets(n: int, count: int, seed: int, f_low: float = 1e-4, grad_scale: float = 0.7) -> Jet2:
    """Batched jets with positive definite Hessians and f in [f_low, 1]."""
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(count, n, n))
    hess = a @ np.swapaxes(a, 1, 2) + 0.1 * np.eye(n)
    grad = grad_scale * rng.normal(size=(count, n))
    value = rng.uniform(f_low, 1.0, size=count)
    return Jet2(value, grad, hess)


def sphere_jet(radius: float, point) -> Jet2:
    """Jet of the lower cap ``R - sqrt(R² - |x|²)`` at ``point``."""
    x = np.asarray(point, dtype=float)
    root = np.sqrt(radius**2 - x @ x)
    grad = x / root
    hess = np.eye(x.size) / root + np.outer(x, x) / root**3
    return Jet2(radius - root, grad, hess)


@pytest.fixture
def convex_jets():
    return random_convex_jets


ACCEPTANCE_LINES: list[str] = []


def record_verdict(number: int, ok: bool, detail: str) -> bool:
    """Print and remember one PASS/FAIL line for an acceptance criterion."""
    line = f"{'PASS' if ok else 'FAIL'} criterion {number:2d}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
