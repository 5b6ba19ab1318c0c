import pytest

from htlmm.dimtree import DimTree, Node, build_balanced, from_nested, layers, validate


def modes(tree, t):
    return [m + 1 for m in tree.nodes[t].modes]


def test_balanced_small_trees():
    t2 = build_balanced(2)
    assert modes(t2, 0) == [1, 2]
    assert [modes(t2, c) for c in t2.children(0)] == [[1], [2]]
    t3 = build_balanced(3)
    l, r = t3.children(0)
    assert modes(t3, l) == [1, 2] and modes(t3, r) == [3]
    assert [modes(t3, c) for c in t3.children(l)] == [[1], [2]]


def test_balanced_d6():
    t = build_balanced(6)
    l, r = t.children(0)
    assert modes(t, l) == [1, 2, 3] and modes(t, r) == [4, 5, 6]
    assert [modes(t, c) for c in t.children(l)] == [[1, 2], [3]]


@pytest.mark.parametrize("d", range(1, 10))
def test_balanced_invariants(d):
    t = build_balanced(d)
    assert validate(t) is None
    assert len(t.leaves) == d
    assert len(t.nodes) - d == max(d - 1, 0)
    for node in t.nodes:
        assert list(node.modes) == list(range(node.modes[0], node.modes[0] + len(node.modes)))
    if d > 1:
        import math

        assert t.depth == math.ceil(math.log2(d))
        seen = sorted(i for layer in layers(t) for i in layer)
        assert seen == list(range(1, len(t.nodes)))


def test_build_balanced_rejects_zero():
    with pytest.raises(ValueError):
        build_balanced(0)


def test_layers_examples():
    assert [sorted(modes(build_balanced(2), t)[0] for t in layers(build_balanced(2))[0])] == [[1, 2]]
    t6 = build_balanced(6)
    assert sorted(modes(t6, t) for t in layers(t6)[0]) == [[1, 2, 3], [4, 5, 6]]
    assert len(layers(build_balanced(4))) == 2


def test_validate_reports_order_violation():
    bad = DimTree([Node((0, 1), (1, 2), None), Node((1,), None, 0), Node((0,), None, 0)])
    assert "concatenate" in validate(bad)


def test_validate_reports_fat_leaf():
    bad = DimTree([Node((0, 1, 2), (1, 2), None), Node((0, 1), None, 0), Node((2,), None, 0)])
    assert "leaf" in validate(bad)


def test_validate_reports_bad_root_and_parent():
    assert validate(DimTree([Node((1, 0), (1, 2), None), Node((1,), None, 0), Node((0,), None, 0)])) is not None
    assert "parent" in validate(DimTree([Node((0, 1), (1, 2), None), Node((0,), None, 2), Node((1,), None, 0)]))


def test_from_nested_and_format():
    t = from_nested(((0, 1), 2))
    assert validate(t) is None
    assert t == build_balanced(3)
    text = t.format([1, 2, 3, 4, 5])
    assert text.splitlines()[0] == "modes=[1, 2, 3] r=1"
    assert "  modes=[1, 2] r=2" in text
    assert "    modes=[1] r=3" in text
