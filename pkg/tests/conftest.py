"""Shared fixtures and the acceptance verdict summary."""

import numpy as np
import pytest

from gnnbandit.graph import load_edge_list

VERDICTS: list[str] = []


def record_verdict(number: int, ok: bool, detail: str) -> str:
    line = f"CRITERION {number:2d} {'PASS' if ok else 'FAIL'}: {detail}"
    VERDICTS.append(line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(VERDICTS):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def small_graph():
    """10-node ring with two chords, self-loops and random 3-dim features."""
    edges = [(i, (i + 1) % 10) for i in range(10)] + [(0, 5), (2, 7)]
    feats = np.random.default_rng(3).standard_normal((10, 3))
    return load_edge_list(edges, 10, self_loops=True, features=feats)
