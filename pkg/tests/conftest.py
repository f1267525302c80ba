import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from motiftgn.graph import BIPARTITE, DIRECTED, TemporalGraph  # noqa: E402


def random_graph(seed, max_nodes=12, max_edges=30, t_max=20, bipartite=False, min_edges=1):
    """Small random stream with integer timestamps (ties are common)."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, max_nodes + 1))
    E = int(rng.integers(min_edges, max_edges + 1))
    ts = np.sort(rng.integers(0, t_max + 1, size=E)).astype(float)
    if bipartite:
        users = int(rng.integers(1, n - 1))
        src = rng.integers(0, users, size=E)
        dst = rng.integers(users, n, size=E)
        return TemporalGraph(src, dst, ts, n, BIPARTITE, bipartite_boundary=users)
    src = rng.integers(0, n, size=E)
    dst = (src + rng.integers(1, n, size=E)) % n
    return TemporalGraph(src, dst, ts, n, DIRECTED)


@pytest.fixture
def tiny_graph():
    # 0->1 at 1, 1->2 at 2, 2->0 at 3, 0->2 at 4, 2->1 at 6, 1->0 at 6
    return TemporalGraph([0, 1, 2, 0, 2, 1], [1, 2, 0, 2, 1, 0], [1, 2, 3, 4, 6, 6], 3)


_VERDICTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_VERDICTS] = []


@pytest.fixture
def verdict(request, capsys):
    """Record and print one ``PASS``/``FAIL`` line for an acceptance criterion."""
    def record(name, ok, detail):
        line = "%s  %s: %s" % ("PASS" if ok else "FAIL", name, detail)
        request.config.stash[_VERDICTS].append(line)
        with capsys.disabled():
            print("\n" + line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
