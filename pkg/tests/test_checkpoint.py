import numpy as np
import pytest

from conftest import random_ht
from htlmm import checkpoint, ht
from htlmm.dimtree import from_nested


@pytest.mark.parametrize("shape", [(3, 4), (2, 3, 4), (3, 2, 4, 2, 3, 2)])
def test_roundtrip_bit_exact(rng, shape, tmp_path):
    X = random_ht(rng, shape)
    path = tmp_path / "x.ht"
    checkpoint.save(X, path)
    Y = checkpoint.load(path)
    assert Y.tree == X.tree and Y.shape == X.shape and Y.sizes == X.sizes
    for a, b in zip(X.factors, Y.factors):
        np.testing.assert_array_equal(a, b)
    assert checkpoint.to_bytes(Y) == path.read_bytes()


def test_roundtrip_unbalanced_tree(rng):
    tree = from_nested((0, (1, (2, 3))))
    X = random_ht(rng, (2, 3, 2, 3), tree=tree)
    Y = checkpoint.from_bytes(checkpoint.to_bytes(X))
    assert Y.tree == tree
    np.testing.assert_array_equal(Y.to_dense(), X.to_dense())


def test_size_of_file(rng):
    X = random_ht(rng, (3, 4, 5))
    raw = checkpoint.to_bytes(X)
    m = sum(len(n.modes) for n in X.tree.nodes)
    header = 8 + 16 + 8 * (len(X.tree.nodes) + m) + 8 * len(X.tree.nodes) + 8 * X.d
    assert len(raw) == header + ht.storage_report(X).actual_float64_bytes


def test_corrupt_inputs(rng):
    raw = checkpoint.to_bytes(random_ht(rng, (3, 4)))
    with pytest.raises(ValueError, match="magic"):
        checkpoint.from_bytes(b"NOTHT" + raw[5:])
    with pytest.raises(ValueError, match="truncated"):
        checkpoint.from_bytes(raw[:-8])
    with pytest.raises(ValueError, match="trailing"):
        checkpoint.from_bytes(raw + b"\0")
    with pytest.raises(ValueError):
        checkpoint.from_bytes(raw[:12])
