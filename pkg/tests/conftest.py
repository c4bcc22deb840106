"""Shared fixtures.

Every Baum-Welch run in the suite is routed through a wrapper that checks
the per-iteration log-likelihood never drops by more than 1e-10, so the EM
guarantee is asserted on every training run, not only in dedicated tests.
"""

import itertools

import numpy as np
import pytest

from canhmm import hmm as hmm_module

EM_TOL = 1e-10
EM_TRACES: list[list[float]] = []
ACCEPTANCE_LINES: list[str] = []

_original_em = hmm_module._em


def _checked_em(*args, **kwargs):
    model, trace = _original_em(*args, **kwargs)
    EM_TRACES.append(list(trace))
    drops = [b - a for a, b in itertools.pairwise(trace) if b < a - EM_TOL]
    assert not drops, f"EM log-likelihood decreased by {-min(drops):.3g}"
    return model, trace


@pytest.fixture(autouse=True)
def _em_monotone_guard(monkeypatch):
    monkeypatch.setattr(hmm_module, "_em", _checked_em)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def criterion():
    """Record one acceptance line; printed in the terminal summary."""
    def record(number: int, ok: bool, detail: str) -> bool:
        ACCEPTANCE_LINES.append(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
