"""Closed-form expression strings for coefficients and data.

A deliberately small arithmetic grammar so configs stay portable: binary
+ - * / ^, unary minus, parentheses, the functions sin, cos, exp, sqrt, the
constants pi and e, numeric literals, and the variables x and t.  Parsed
into a tiny AST and evaluated with numpy broadcasting.
"""

from __future__ import annotations

import math
import re

import numpy as np

from .errors import ConfigError

_TOKEN = re.compile(r"\s*(?:(\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
                    r"|([A-Za-z_][A-Za-z_0-9]*)|(\*\*|[()+\-*/^]))")

_FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "sqrt": np.sqrt}
_CONSTANTS = {"pi": math.pi, "e": math.e}


def _tokenize(text: str):
    pos, out = 0, []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            if text[pos:].strip() == "":
                break
            raise ConfigError(
                f"cannot tokenize expression at position {pos}: {text[pos:]!r}")
        num, name, op = m.groups()
        if num is not None:
            out.append(("num", float(num), pos))
        elif name is not None:
            out.append(("name", name, pos))
        else:
            out.append(("op", "^" if op == "**" else op, pos))
        pos = m.end()
    out.append(("end", None, len(text)))
    return out


class Expression:
    """Compiled expression; call with keyword arrays, e.g. f(x=..., t=...)."""

    def __init__(self, text: str, variables: tuple = ("x", "t")):
        self.text = text
        self.variables = tuple(variables)
        self._tokens = _tokenize(text)
        self._pos = 0
        self._ast = self._parse_sum()
        kind, _, at = self._tokens[self._pos]
        if kind != "end":
            raise ConfigError(f"unexpected trailing input at position {at} "
                              f"in expression {text!r}")

    # -- recursive descent ---------------------------------------------
    def _peek(self):
        return self._tokens[self._pos]

    def _next(self):
        tok = self._tokens[self._pos]
        self._pos += 1
        return tok

    def _expect_op(self, op: str):
        kind, val, at = self._next()
        if kind != "op" or val != op:
            raise ConfigError(f"expected {op!r} at position {at} in "
                              f"expression {self.text!r}")

    def _parse_sum(self):
        node = self._parse_term()
        while True:
            kind, val, _ = self._peek()
            if kind == "op" and val in "+-":
                self._next()
                node = (val, node, self._parse_term())
            else:
                return node

    def _parse_term(self):
        node = self._parse_unary()
        while True:
            kind, val, _ = self._peek()
            if kind == "op" and val in "*/":
                self._next()
                node = (val, node, self._parse_unary())
            else:
                return node

    def _parse_unary(self):
        kind, val, _ = self._peek()
        if kind == "op" and val in "+-":
            self._next()
            child = self._parse_unary()
            return child if val == "+" else ("neg", child)
        return self._parse_power()

    def _parse_power(self):
        base = self._parse_atom()
        kind, val, _ = self._peek()
        if kind == "op" and val == "^":
            self._next()
            return ("^", base, self._parse_unary())  # right associative
        return base

    def _parse_atom(self):
        kind, val, at = self._next()
        if kind == "num":
            return ("const", val)
        if kind == "name":
            if val in _FUNCTIONS:
                self._expect_op("(")
                arg = self._parse_sum()
                self._expect_op(")")
                return ("call", val, arg)
            if val in _CONSTANTS:
                return ("const", _CONSTANTS[val])
            if val in self.variables:
                return ("var", val)
            raise ConfigError(f"unknown name {val!r} at position {at} in "
                              f"expression {self.text!r} "
                              f"(variables here: {self.variables})")
        if kind == "op" and val == "(":
            node = self._parse_sum()
            self._expect_op(")")
            return node
        raise ConfigError(f"unexpected token at position {at} in "
                          f"expression {self.text!r}")

    # -- evaluation ----------------------------------------------------
    def __call__(self, **kw):
        out = self._eval(self._ast, kw)
        shapes = [np.shape(v) for v in kw.values() if np.ndim(v) > 0]
        if shapes and np.ndim(out) == 0:
            out = np.broadcast_to(np.asarray(out, dtype=float),
                                  np.broadcast_shapes(*shapes)).copy()
        return out

    def _eval(self, node, kw):
        op = node[0]
        if op == "const":
            return node[1]
        if op == "var":
            if node[1] not in kw:
                raise ConfigError(f"expression {self.text!r} needs variable "
                                  f"{node[1]!r}")
            return np.asarray(kw[node[1]], dtype=float)
        if op == "neg":
            return -self._eval(node[1], kw)
        if op == "call":
            return _FUNCTIONS[node[1]](self._eval(node[2], kw))
        a, b = self._eval(node[1], kw), self._eval(node[2], kw)
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            return a / b
        return np.power(a, b)


def parse_expression(text: str, variables: tuple = ("x", "t")) -> Expression:
    if not isinstance(text, str) or not text.strip():
        raise ConfigError("empty expression string")
    return Expression(text, variables)
