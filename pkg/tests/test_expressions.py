import math

import numpy as np
import pytest

from kslab.errors import ConfigError
from kslab.expressions import parse_expression


def test_numbers_and_constants():
    assert parse_expression("2.5e-3")() == pytest.approx(2.5e-3)
    assert parse_expression("pi")() == pytest.approx(math.pi)
    assert parse_expression("e")() == pytest.approx(math.e)


def test_precedence_and_power():
    assert parse_expression("2 + 3*4^2")() == pytest.approx(50.0)
    assert parse_expression("2^3^2")() == pytest.approx(512.0)  # right assoc
    assert parse_expression("-2^2")() == pytest.approx(-4.0)
    assert parse_expression("(2+3)*4")() == pytest.approx(20.0)
    assert parse_expression("2**3")() == pytest.approx(8.0)


def test_functions_and_variables():
    f = parse_expression("sin(pi*x) + cos(0*t)")
    x = np.linspace(0, 1, 5)
    out = f(x=x, t=0.0)
    assert out == pytest.approx(np.sin(np.pi * x) + 1.0)


def test_unary_minus_and_division():
    f = parse_expression("-x/2 + 1")
    assert f(x=np.array([2.0]))[0] == pytest.approx(0.0)


def test_broadcast_to_argument_shape():
    f = parse_expression("1")
    out = f(x=np.zeros(7))
    assert out.shape == (7,)


def test_variable_whitelist():
    with pytest.raises(ConfigError):
        parse_expression("x + t", variables=("x",))._eval  # parse fails
    f = parse_expression("x", variables=("x",))
    with pytest.raises(ConfigError):
        f(t=1.0)  # x missing at call time


def test_parse_errors():
    for bad in ("1 +* x", "sin x", "2 +", "(1+2", "1 2", "", "foo(3)", "x $ y"):
        with pytest.raises(ConfigError):
            parse_expression(bad)
