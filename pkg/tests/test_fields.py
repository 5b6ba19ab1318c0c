import math

import numpy as np
import pytest

from htlmm.fields import Factor, FieldTerm, SeparableField


def grid_nodes(d, n=7):
    return [np.arange(n) * 2 * math.pi / n for _ in range(d)]


def brute(fn, nodes):
    mesh = np.meshgrid(*nodes, indexing="ij")
    return fn(*mesh)


@pytest.mark.parametrize(
    "text, fn, d",
    [
        ("5*cos(x6)^2 + 6", lambda *x: 5 * np.cos(x[5]) ** 2 + 6, 6),
        ("1/(4*pi^2) * (1 - cos(2x1)*cos(2x2))", lambda a, b: (1 - np.cos(2 * a) * np.cos(2 * b)) / (4 * math.pi**2), 2),
        ("sin(x2)", lambda a, b: np.sin(b) + 0 * a, 2),
        ("-3*sin(2*x1 + 0.5) * cos(x3 - 1)", lambda a, b, c: -3 * np.sin(2 * a + 0.5) * np.cos(c - 1) + 0 * b, 3),
        ("(sin(x1) + cos(x2))^2 - 2", lambda a, b: (np.sin(a) + np.cos(b)) ** 2 - 2, 2),
        ("const * 2.5e-1", lambda a, b: 0.25 + 0 * a, 2),
    ],
)
def test_parse_and_evaluate_match_brute_force(text, fn, d):
    nodes = grid_nodes(d)
    np.testing.assert_allclose(SeparableField.parse(text).evaluate(nodes), brute(fn, nodes), atol=1e-13)


@pytest.mark.parametrize("bad", ["sin(x1*x2)", "sin(x1+x2)", "cos(x0)", "x1", "sin(x1)/cos(x2)", "2^x1", "1 +", "foo(x1)", "2^1.5"])
def test_parse_rejects(bad):
    with pytest.raises(ValueError):
        SeparableField.parse(bad)


def test_terms_merge_and_constants():
    f = SeparableField.parse("sin(x1) + 2*sin(x1) - 3*sin(x1)")
    assert f.terms == ()
    c = SeparableField.parse("2 + 3")
    assert c.is_constant and c.constant_value == 5.0
    with pytest.raises(ValueError):
        SeparableField.parse("sin(x1)").constant_value
    assert SeparableField.parse("cos(x4)").max_mode == 3
    assert SeparableField.constant(1.0).max_mode == -1


def test_mode_vector():
    term = FieldTerm(2.0, (Factor(0, "sin"), Factor(0, "cos"), Factor(2, "cos")))
    x = np.linspace(0, 1, 5)
    np.testing.assert_allclose(term.mode_vector(0, x), np.sin(x) * np.cos(x))
    assert term.mode_vector(1, x) is None
    assert term.modes == (0, 2)


def test_equality_is_order_independent():
    assert SeparableField.parse("sin(x1)*cos(x2)") == SeparableField.parse("cos(x2)*sin(x1)")
    assert SeparableField.parse("1 + sin(x1)") == SeparableField.parse("sin(x1) + 1")
