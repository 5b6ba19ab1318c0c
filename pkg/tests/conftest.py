import numpy as np
import pytest

from htlmm import ht
from htlmm.dimtree import build_balanced
from htlmm.tensor_core import matricize


def random_ht(rng, shape, max_size=3, tree=None):
    """HT tensor with random factors and random sizes in 1..max_size."""
    tree = tree or build_balanced(len(shape))
    size = {0: 1}
    for t in range(1, len(tree.nodes)):
        cap = shape[tree.nodes[t].modes[0]] if tree.is_leaf(t) else max_size
        size[t] = int(rng.integers(1, min(max_size, cap) + 1))
    factors = []
    for t, node in enumerate(tree.nodes):
        if node.is_leaf:
            factors.append(rng.standard_normal((shape[node.modes[0]], size[t])))
        else:
            l, r = node.children
            dims = (size[l], size[r]) if t == 0 else (size[l], size[r], size[t])
            factors.append(rng.standard_normal(dims))
    return ht.HTTensor(tree, factors)


def dense_layered_truncation(A, tree, cap):
    """Oracle for T_r: project with the top-``cap`` left singular vectors of each
    matricization of ``A`` (all computed from the input), layer by layer."""
    d = A.ndim
    out = A.copy()
    for layer in range(1, tree.depth + 1):
        for t in range(1, len(tree.nodes)):
            if tree.layer(t) != layer:
                continue
            modes = tree.nodes[t].modes
            U, s, _ = np.linalg.svd(matricize(A, modes).matrix, full_matrices=False)
            k = max(1, min(cap, int(np.count_nonzero(s > ht.ZERO_TOL * s[0]))))
            P = U[:, :k] @ U[:, :k].T
            M = matricize(out, modes)
            rest = [m for m in range(d) if m not in modes]
            Y = (P @ M.matrix).reshape([A.shape[m] for m in modes] + [A.shape[m] for m in rest], order="F")
            out = np.transpose(Y, np.argsort(list(modes) + rest))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# one line per acceptance criterion part, printed after the test summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
