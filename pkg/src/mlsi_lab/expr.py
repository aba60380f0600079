"""A small arithmetic grammar for test functions and perturbations.

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('+' | '-') unary | atom
    atom   := NUMBER | VAR | NAME '(' expr (',' expr)* ')' | '(' expr ')'

Variables are ``x`` (dimension 1, or the whole vector inside ``norm``) and
``x1 .. xn``.  Functions: pow, exp, log, norm, sqrt, abs, sin, cos.
Evaluation is vectorised and carries forward-mode derivatives, so every
parsed expression has an exact gradient.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import MLSIError

__all__ = ["Expression", "ExpressionError", "parse_expression"]

_TOKEN = re.compile(r"\s*(?:(?P<num>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)|"
                    r"(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/(),]))")

_FUNCS = {"pow": 2, "exp": 1, "log": 1, "norm": None, "sqrt": 1, "abs": 1, "sin": 1, "cos": 1}


class ExpressionError(MLSIError, ValueError):
    def __init__(self, message, offset):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


def _tokenize(text):
    pos, out = 0, []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None:
            off = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ExpressionError(f"unexpected character {text[off]!r}", off)
        kind = m.lastgroup
        out.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    out.append(("end", "", len(text)))
    return out


class _Parser:
    def __init__(self, text, dim):
        self.text, self.dim = text, dim
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self, value=None):
        tok = self.toks[self.i]
        if value is not None and tok[1] != value:
            raise ExpressionError(f"expected {value!r}, found {tok[1] or 'end of input'!r}", tok[2])
        self.i += 1
        return tok

    def parse(self):
        node = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise ExpressionError(f"unexpected {tok[1]!r}", tok[2])
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = (op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = (op, node, self.unary())
        return node

    def unary(self):
        tok = self.peek()
        if tok[0] == "op" and tok[1] in ("+", "-"):
            self.take()
            inner = self.unary()
            return inner if tok[1] == "+" else ("neg", inner)
        return self.atom()

    def atom(self):
        kind, val, off = self.take()
        if kind == "num":
            return ("const", float(val))
        if kind == "op" and val == "(":
            node = self.expr()
            self.take(")")
            return node
        if kind == "name":
            if val in _FUNCS:
                self.take("(")
                args = [self.expr() if not self._vector_arg(val) else self._vec()]
                while self.peek()[1] == ",":
                    self.take()
                    args.append(self.expr())
                self.take(")")
                arity = _FUNCS[val]
                if arity is not None and len(args) != arity:
                    raise ExpressionError(f"{val} takes {arity} argument(s), got {len(args)}", off)
                return ("call", val, args)
            return self._variable(val, off)
        raise ExpressionError(f"unexpected {val or 'end of input'!r}", off)

    def _vector_arg(self, fname):
        kind, val, _ = self.peek()
        nxt = self.toks[self.i + 1] if self.i + 1 < len(self.toks) else ("end", "", 0)
        return fname == "norm" and kind == "name" and val == "x" and nxt[1] == ")"

    def _vec(self):
        self.take()
        return ("vec",)

    def _variable(self, name, off):
        if name == "x":
            if self.dim != 1:
                raise ExpressionError(f"x is a {self.dim}-vector; use x1..x{self.dim} or norm(x)", off)
            return ("var", 0)
        m = re.fullmatch(r"x([1-9][0-9]*)", name)
        if m:
            k = int(m.group(1))
            if k > self.dim:
                raise ExpressionError(f"variable {name} exceeds dimension {self.dim}", off)
            return ("var", k - 1)
        raise ExpressionError(f"unknown name {name!r}", off)


def _ev(node, x):
    """Return (value, gradient) arrays of shapes (m,) and (m, n)."""
    tag = node[0]
    m, n = x.shape
    if tag == "const":
        return np.full(m, node[1]), np.zeros((m, n))
    if tag == "var":
        d = np.zeros((m, n))
        d[:, node[1]] = 1.0
        return x[:, node[1]].copy(), d
    if tag == "neg":
        v, d = _ev(node[1], x)
        return -v, -d
    if tag in "+-*/":
        a, da = _ev(node[1], x)
        b, db = _ev(node[2], x)
        if tag == "+":
            return a + b, da + db
        if tag == "-":
            return a - b, da - db
        if tag == "*":
            return a * b, da * b[:, None] + a[:, None] * db
        with np.errstate(divide="ignore", invalid="ignore"):
            return a / b, (da * b[:, None] - a[:, None] * db) / (b * b)[:, None]
    if tag == "call":
        name, args = node[1], node[2]
        if name == "norm":
            if args[0] == ("vec",):
                parts = [(x[:, i], np.eye(n)[i][None, :].repeat(m, 0)) for i in range(n)]
            else:
                parts = [_ev(a, x) for a in args]
            r = np.sqrt(sum(v * v for v, _ in parts))
            with np.errstate(divide="ignore", invalid="ignore"):
                d = sum(v[:, None] * dv for v, dv in parts) / r[:, None]
            return r, np.where(r[:, None] > 0, d, 0.0)
        a, da = _ev(args[0], x)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if name == "pow":
                b, db = _ev(args[1], x)
                v = np.power(a, b)
                if not np.any(db):
                    dv = np.where(b == 0, 0.0, b * np.power(a, b - 1.0))[:, None] * da
                else:
                    dv = v[:, None] * (np.log(a)[:, None] * db + (b / a)[:, None] * da)
                return v, dv
            if name == "exp":
                v = np.exp(a)
                return v, v[:, None] * da
            if name == "log":
                return np.log(a), da / a[:, None]
            if name == "sqrt":
                v = np.sqrt(a)
                return v, da / (2.0 * v)[:, None]
            if name == "abs":
                return np.abs(a), np.sign(a)[:, None] * da
            if name == "sin":
                return np.sin(a), np.cos(a)[:, None] * da
            if name == "cos":
                return np.cos(a), -np.sin(a)[:, None] * da
    raise AssertionError(f"bad node {node!r}")


@dataclass(frozen=True, eq=False)
class Expression:
    text: str
    dim: int
    tree: tuple

    def _flat(self, x):
        x = np.asarray(x, dtype=float)
        if self.dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            x = x[..., None]
        return x.reshape(-1, self.dim), x.shape[:-1]

    def __call__(self, x):
        flat, lead = self._flat(x)
        return _ev(self.tree, flat)[0].reshape(lead)

    def gradient(self, x):
        flat, lead = self._flat(x)
        return _ev(self.tree, flat)[1].reshape(lead + (self.dim,))


def parse_expression(text: str, dim: int = 1) -> Expression:
    """Parse ``text``; raises :class:`ExpressionError` with the byte offset."""
    if not text or not text.strip():
        raise ExpressionError("empty expression", 0)
    return Expression(text, int(dim), _Parser(text, int(dim)).parse())
