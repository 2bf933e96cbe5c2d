import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qsd1d.expr import BinOp, Call, Neg, Num, ParseError, Var, evaluate, parse, to_text


def ev(text, x):
    return float(evaluate(parse(text), np.array(x, dtype=float)))


def test_power_example():
    assert ev("x^3", 2.0) == 8.0


def test_affine_example():
    assert ev("2*x + 1", 0.0) == 1.0


def test_trailing_operator_offset():
    with pytest.raises(ParseError) as info:
        parse("x +")
    assert info.value.pos == 3


@pytest.mark.parametrize("text, x, expected", [
    ("2+3*4", 0, 14.0),
    ("(2+3)*4", 0, 20.0),
    ("2^3^2", 0, 512.0),        # right-associative
    ("-x^2", 3, -9.0),          # ^ binds tighter than unary minus
    ("--x", 2, 2.0),
    ("8/4/2", 0, 1.0),          # / is left-associative
    ("1 - 2 - 3", 0, -4.0),
    ("exp(0) + log(e)", 0, 2.0),
    ("sin(pi/2)*cos(0)", 0, 1.0),
    ("sqrt(x)", 16, 4.0),
    ("2.5e-1*x", 4, 1.0),
    ("  x\t*\nx ", 3, 9.0),
])
def test_precedence_and_functions(text, x, expected):
    assert ev(text, x) == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize("text, fragment", [
    ("y + 1", "unknown identifier"),
    ("foo(x)", "unknown"),
    ("exp(x, 1)", "takes 1 argument"),
    ("(x + 1", ")"),
    ("x 1", ""),
    ("", "empty expression"),
    ("2 $ x", ""),
])
def test_errors(text, fragment):
    with pytest.raises(ParseError) as info:
        parse(text)
    assert fragment in str(info.value)
    assert 0 <= info.value.pos <= len(text)


def test_evaluate_broadcasts_constants():
    out = evaluate(parse("3"), np.zeros(5))
    assert out.shape == (5,) and np.all(out == 3.0)


# random well-formed expressions over x
leaf = st.one_of(st.just(Var()), st.floats(0.1, 5.0).map(Num))


def _extend(children):
    return st.one_of(
        st.tuples(st.sampled_from("+-*"), children, children).map(lambda t: BinOp(*t)),
        children.map(Neg),
        children.map(lambda c: Call("sin", c)),
        children.map(lambda c: Call("exp", Call("cos", c))),
    )


exprs = st.recursive(leaf, _extend, max_leaves=8)


@settings(max_examples=200, deadline=None)
@given(exprs, st.floats(0.0, 3.0))
def test_to_text_round_trip(node, x):
    again = parse(to_text(node))
    a = evaluate(node, np.array(x))
    b = evaluate(again, np.array(x))
    assert (math.isnan(a) and math.isnan(b)) or a == b


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from([" ", "\t", "\n"]), min_size=0, max_size=4))
def test_whitespace_insensitive(ws):
    pad = "".join(ws)
    assert ev(f"{pad}x{pad}*{pad}(x{pad}+{pad}1){pad}", 2.0) == 6.0
