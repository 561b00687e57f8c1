import numpy as np
import pytest

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(0xC0FFEE)


def gf2_rank_oracle(rows_as_ints, ncols):
    """Naive O(R * k^2) elimination over Python ints; the reference for
    every bit-packed solver result."""
    pivots = {}
    rank = 0
    for v in rows_as_ints:
        v = int(v)
        while v:
            b = v.bit_length() - 1
            if b in pivots:
                v ^= pivots[b]
            else:
                pivots[b] = v
                rank += 1
                break
    return rank, pivots


def gf2_in_span(vec, pivots):
    v = int(vec)
    while v:
        b = v.bit_length() - 1
        if b not in pivots:
            return False
        v ^= pivots[b]
    return True


def rows_to_ints(index_rows):
    out = []
    for idx in index_rows:
        v = 0
        for j in idx:
            v |= 1 << int(j)
        out.append(v)
    return out


def peel_oracle(index_rows, n):
    """Step-by-step ripple simulation over an explicit bipartite graph,
    independent of the library's decoder bookkeeping."""
    remaining = [set(int(j) for j in idx) for idx in index_rows]
    recovered = set()
    progress = True
    while progress:
        progress = False
        for r in remaining:
            live = r - recovered
            if len(live) == 1:
                recovered.add(live.pop())
                progress = True
    return recovered
