import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from phylotomo.generate import balanced_tree, caterpillar_tree, random_tree, star_tree
from phylotomo.tree import RoutingTree

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def star3():
    # source 0 and receivers 1, 2 around hub 3
    return RoutingTree([(0, 3), (3, 1), (3, 2)])


@pytest.fixture(scope="session")
def quartet():
    # 0 and 1 on one side of the internal edge (4, 5), 2 and 3 on the other
    return RoutingTree([(0, 4), (4, 1), (4, 5), (5, 2), (5, 3)])


@pytest.fixture(scope="session")
def balanced16():
    return balanced_tree(16)


@pytest.fixture(scope="session")
def caterpillar5():
    return caterpillar_tree(5)


def random_trees(count, lo, hi, seed=0):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        yield random_tree(int(rng.integers(lo, hi + 1)), rng)


def brute_paths(tree):
    """BFS distances between all node pairs, independent of the tree's own lca logic."""
    from collections import deque

    dist = {}
    for s in tree.nodes:
        seen = {s: 0}
        q = deque([s])
        while q:
            x = q.popleft()
            for y in tree.neighbors(x):
                if y not in seen:
                    seen[y] = seen[x] + 1
                    q.append(y)
        dist[s] = seen
    return dist


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
