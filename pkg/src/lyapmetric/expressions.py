"""Vector-field specification language.

A system is described by a small whitespace-insensitive text format made of
``name = value`` statements separated by ``;`` or newlines.  Recognized names:

* ``dim``     total state dimension n (variables are ``x1`` .. ``xn``)
* ``e_dim``   optional; splits the state into an e-block (first ``e_dim``
              variables) and an x-block for coupled two-block systems
* ``F1..Fk``  field expressions (k = dim, or e_dim when an x-block exists)
* ``G1..Gm``  x-block field expressions (m = dim - e_dim)
* ``g1..gn``  optional input vector field for controlled systems
* ``Q``       optional dense row-major matrix (whitespace/comma separated)
* any other ``name = number`` defines a scalar parameter

Expressions support ``+ - * / ^`` (power with constant exponent, ``**`` is an
alias), unary minus, parentheses, the functions ``sin cos exp ln log sqrt
abs2``, the reserved constants ``pi`` and ``e``, state variables ``x<k>`` and
declared parameters.  ``#`` starts a comment running to end of line.

Parsed expressions are immutable trees.  They can be evaluated, symbolically
differentiated, compiled to fast closures, and evaluated with second-order
forward-mode jets (value, gradient, Hessian in one pass).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatchError,
    DomainEvaluationError,
    SpecTextError,
    UnknownIdentifierError,
)

_FUNCTIONS = ("sin", "cos", "exp", "ln", "log", "sqrt", "abs2")
_CONSTANTS = {"pi": math.pi, "e": math.e}


# ---------------------------------------------------------------------------
# second-order jets
# ---------------------------------------------------------------------------

class Jet2:
    """Value, gradient and Hessian of a scalar quantity at a point.

    Arithmetic on jets propagates first and second derivatives exactly
    (forward mode), so a single tree walk yields F, its Jacobian row and its
    Hessian with no differencing error.
    """

    __slots__ = ("value", "grad", "hess")

    def __init__(self, value, grad, hess):
        self.value = float(value)
        self.grad = grad
        self.hess = hess

    @staticmethod
    def constant(value, n):
        return Jet2(value, np.zeros(n), np.zeros((n, n)))

    @staticmethod
    def variable(value, index, n):
        g = np.zeros(n)
        g[index] = 1.0
        return Jet2(value, g, np.zeros((n, n)))

    def __add__(self, other):
        return Jet2(self.value + other.value, self.grad + other.grad,
                    self.hess + other.hess)

    def __sub__(self, other):
        return Jet2(self.value - other.value, self.grad - other.grad,
                    self.hess - other.hess)

    def __mul__(self, other):
        cross = np.outer(self.grad, other.grad)
        return Jet2(
            self.value * other.value,
            self.value * other.grad + other.value * self.grad,
            self.value * other.hess + other.value * self.hess
            + cross + cross.T,
        )

    def __truediv__(self, other):
        return self * other._reciprocal()

    def _reciprocal(self):
        w = self.value
        if w == 0.0:
            raise ZeroDivisionError("division by zero")
        outer = np.outer(self.grad, self.grad)
        return Jet2(1.0 / w, -self.grad / w**2,
                    -self.hess / w**2 + 2.0 * outer / w**3)

    def __neg__(self):
        return Jet2(-self.value, -self.grad, -self.hess)

    def chain(self, f, df, d2f):
        """Apply a scalar function with known first/second derivatives."""
        outer = np.outer(self.grad, self.grad)
        return Jet2(f, df * self.grad, df * self.hess + d2f * outer)


# ---------------------------------------------------------------------------
# expression nodes
# ---------------------------------------------------------------------------

class Node:
    """Immutable expression-tree node."""

    __slots__ = ()

    def eval(self, x, params):
        raise NotImplementedError

    def jet2(self, jets, params):
        raise NotImplementedError

    def diff(self, index):
        """Symbolic partial derivative with respect to variable `index`."""
        raise NotImplementedError

    def emit(self):
        """Python source for the compiled fast path (params already bound)."""
        raise NotImplementedError

    def text(self):
        """Round-trippable pretty print."""
        raise NotImplementedError

    def variables(self):
        return set()

    def parameters(self):
        return set()

    def __repr__(self):
        return f"<{type(self).__name__} {self.text()}>"


class Num(Node):
    __slots__ = ("v",)

    def __init__(self, v):
        self.v = float(v)

    def eval(self, x, params):
        return self.v

    def jet2(self, jets, params):
        n = len(jets)
        return Jet2.constant(self.v, n)

    def diff(self, index):
        return Num(0.0)

    def emit(self):
        return repr(self.v)

    def text(self):
        return repr(self.v)


class Var(Node):
    __slots__ = ("index",)

    def __init__(self, index):
        self.index = index

    def eval(self, x, params):
        return float(x[self.index])

    def jet2(self, jets, params):
        return jets[self.index]

    def diff(self, index):
        return Num(1.0 if index == self.index else 0.0)

    def emit(self):
        return f"_x{self.index}"

    def text(self):
        return f"x{self.index + 1}"

    def variables(self):
        return {self.index}


class Param(Node):
    __slots__ = ("name", "_bound")

    def __init__(self, name, bound=None):
        self.name = name
        self._bound = bound

    def eval(self, x, params):
        return float(params[self.name])

    def jet2(self, jets, params):
        return Jet2.constant(params[self.name], len(jets))

    def diff(self, index):
        return Num(0.0)

    def emit(self):
        if self._bound is None:
            raise UnknownIdentifierError(f"parameter '{self.name}' has no value")
        return repr(float(self._bound))

    def text(self):
        return self.name

    def parameters(self):
        return {self.name}


def _is_zero(node):
    return isinstance(node, Num) and node.v == 0.0


def _is_one(node):
    return isinstance(node, Num) and node.v == 1.0


class Bin(Node):
    __slots__ = ("op", "a", "b")

    def __init__(self, op, a, b):
        self.op = op
        self.a = a
        self.b = b

    def eval(self, x, params):
        a = self.a.eval(x, params)
        b = self.b.eval(x, params)
        try:
            if self.op == "+":
                return a + b
            if self.op == "-":
                return a - b
            if self.op == "*":
                return a * b
            return a / b
        except ZeroDivisionError:
            raise DomainEvaluationError("division by zero", self.text()) from None

    def jet2(self, jets, params):
        a = self.a.jet2(jets, params)
        b = self.b.jet2(jets, params)
        try:
            if self.op == "+":
                return a + b
            if self.op == "-":
                return a - b
            if self.op == "*":
                return a * b
            return a / b
        except ZeroDivisionError:
            raise DomainEvaluationError("division by zero", self.text()) from None

    def diff(self, index):
        da, db = self.a.diff(index), self.b.diff(index)
        if self.op == "+":
            return add(da, db)
        if self.op == "-":
            return sub(da, db)
        if self.op == "*":
            return add(mul(da, self.b), mul(self.a, db))
        # quotient rule
        num = sub(mul(da, self.b), mul(self.a, db))
        return Bin("/", num, Pow(self.b, 2.0)) if not _is_zero(num) else Num(0.0)

    def emit(self):
        return f"({self.a.emit()} {self.op} {self.b.emit()})"

    def text(self):
        return f"({self.a.text()} {self.op} {self.b.text()})"

    def variables(self):
        return self.a.variables() | self.b.variables()

    def parameters(self):
        return self.a.parameters() | self.b.parameters()


def add(a, b):
    if _is_zero(a):
        return b
    if _is_zero(b):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.v + b.v)
    return Bin("+", a, b)


def sub(a, b):
    if _is_zero(b):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.v - b.v)
    if _is_zero(a):
        return Neg(b)
    return Bin("-", a, b)


def mul(a, b):
    if _is_zero(a) or _is_zero(b):
        return Num(0.0)
    if _is_one(a):
        return b
    if _is_one(b):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.v * b.v)
    return Bin("*", a, b)


class Neg(Node):
    __slots__ = ("a",)

    def __init__(self, a):
        self.a = a

    def eval(self, x, params):
        return -self.a.eval(x, params)

    def jet2(self, jets, params):
        return -self.a.jet2(jets, params)

    def diff(self, index):
        d = self.a.diff(index)
        return Num(0.0) if _is_zero(d) else Neg(d)

    def emit(self):
        return f"(-{self.a.emit()})"

    def text(self):
        return f"(-{self.a.text()})"

    def variables(self):
        return self.a.variables()

    def parameters(self):
        return self.a.parameters()


class Pow(Node):
    """Power with a constant exponent (keeps derivatives closed form)."""

    __slots__ = ("a", "p")

    def __init__(self, a, p):
        self.a = a
        self.p = float(p)

    def eval(self, x, params):
        base = self.a.eval(x, params)
        try:
            result = base ** self.p
        except (ZeroDivisionError, ValueError, OverflowError) as exc:
            raise DomainEvaluationError(str(exc), self.text()) from None
        if isinstance(result, complex):
            raise DomainEvaluationError(
                "fractional power of a negative base", self.text())
        return result

    def jet2(self, jets, params):
        u = self.a.jet2(jets, params)
        p = self.p
        try:
            f = u.value ** p
            df = p * u.value ** (p - 1.0) if p != 0.0 else 0.0
            d2f = p * (p - 1.0) * u.value ** (p - 2.0) if p not in (0.0, 1.0) else 0.0
        except (ZeroDivisionError, ValueError, OverflowError) as exc:
            raise DomainEvaluationError(str(exc), self.text()) from None
        if isinstance(f, complex) or isinstance(df, complex) \
                or isinstance(d2f, complex):
            raise DomainEvaluationError(
                "fractional power of a negative base", self.text())
        return u.chain(f, df, d2f)

    def diff(self, index):
        da = self.a.diff(index)
        if _is_zero(da) or self.p == 0.0:
            return Num(0.0)
        if self.p == 1.0:
            return da
        return mul(mul(Num(self.p), Pow(self.a, self.p - 1.0)), da)

    def emit(self):
        return f"({self.a.emit()} ** {repr(self.p)})"

    def text(self):
        p = self.p
        ptxt = repr(int(p)) if p == int(p) else repr(p)
        return f"({self.a.text()} ^ {ptxt})"

    def variables(self):
        return self.a.variables()

    def parameters(self):
        return self.a.parameters()


class Call(Node):
    __slots__ = ("fn", "a")

    def __init__(self, fn, a):
        self.fn = fn
        self.a = a

    def eval(self, x, params):
        u = self.a.eval(x, params)
        try:
            if self.fn == "sin":
                return math.sin(u)
            if self.fn == "cos":
                return math.cos(u)
            if self.fn == "exp":
                return math.exp(u)
            if self.fn in ("ln", "log"):
                return math.log(u)
            if self.fn == "sqrt":
                return math.sqrt(u)
            return u * u  # abs2
        except (ValueError, OverflowError) as exc:
            raise DomainEvaluationError(str(exc), self.text()) from None

    def jet2(self, jets, params):
        u = self.a.jet2(jets, params)
        v = u.value
        try:
            if self.fn == "sin":
                return u.chain(math.sin(v), math.cos(v), -math.sin(v))
            if self.fn == "cos":
                return u.chain(math.cos(v), -math.sin(v), -math.cos(v))
            if self.fn == "exp":
                ev = math.exp(v)
                return u.chain(ev, ev, ev)
            if self.fn in ("ln", "log"):
                return u.chain(math.log(v), 1.0 / v, -1.0 / v**2)
            if self.fn == "sqrt":
                s = math.sqrt(v)
                return u.chain(s, 0.5 / s, -0.25 / (s * v))
            return u.chain(v * v, 2.0 * v, 2.0)  # abs2
        except (ValueError, OverflowError, ZeroDivisionError) as exc:
            raise DomainEvaluationError(str(exc), self.text()) from None

    def diff(self, index):
        da = self.a.diff(index)
        if _is_zero(da):
            return Num(0.0)
        if self.fn == "sin":
            outer = Call("cos", self.a)
        elif self.fn == "cos":
            outer = Neg(Call("sin", self.a))
        elif self.fn == "exp":
            outer = Call("exp", self.a)
        elif self.fn in ("ln", "log"):
            outer = Bin("/", Num(1.0), self.a)
        elif self.fn == "sqrt":
            outer = Bin("/", Num(0.5), Call("sqrt", self.a))
        else:  # abs2
            outer = mul(Num(2.0), self.a)
        return mul(outer, da)

    def emit(self):
        if self.fn == "abs2":
            inner = self.a.emit()
            return f"({inner} * {inner})"
        fn = "log" if self.fn == "ln" else self.fn
        return f"{fn}({self.a.emit()})"

    def text(self):
        return f"{self.fn}({self.a.text()})"

    def variables(self):
        return self.a.variables()

    def parameters(self):
        return self.a.parameters()


# ---------------------------------------------------------------------------
# tokenizer / Pratt parser
# ---------------------------------------------------------------------------

@dataclass
class _Token:
    kind: str   # num ident op lparen rparen sep end
    value: object
    pos: int


def _tokenize(text):
    tokens = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c == "#":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if c in " \t\r":
            i += 1
            continue
        if c in ";\n":
            tokens.append(_Token("sep", c, i))
            i += 1
            continue
        if c.isdigit() or (c == "." and i + 1 < n and text[i + 1].isdigit()):
            j = i
            while j < n and (text[j].isdigit() or text[j] == "."):
                j += 1
            if j < n and text[j] in "eE" and (
                j + 1 < n and (text[j + 1].isdigit() or text[j + 1] in "+-")
            ):
                j += 2
                while j < n and text[j].isdigit():
                    j += 1
            try:
                value = float(text[i:j])
            except ValueError:
                raise SpecTextError(f"bad number '{text[i:j]}'", i) from None
            tokens.append(_Token("num", value, i))
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(_Token("ident", text[i:j], i))
            i = j
            continue
        if c == "*" and i + 1 < n and text[i + 1] == "*":
            tokens.append(_Token("op", "^", i))
            i += 2
            continue
        if c in "+-*/^=,":
            tokens.append(_Token("op", c, i))
            i += 1
            continue
        if c == "(":
            tokens.append(_Token("lparen", c, i))
            i += 1
            continue
        if c == ")":
            tokens.append(_Token("rparen", c, i))
            i += 1
            continue
        raise SpecTextError(f"unexpected character '{c}'", i)
    tokens.append(_Token("end", None, n))
    return tokens


_BIN_PRECEDENCE = {"+": 10, "-": 10, "*": 20, "/": 20, "^": 40}
_UNARY_PRECEDENCE = 30


class _ExprParser:
    """Pratt parser over a token stream (expression sub-grammar)."""

    def __init__(self, tokens, start):
        self.tokens = tokens
        self.i = start

    def peek(self):
        if self.i >= len(self.tokens):
            return _Token("end", None, -1)
        return self.tokens[self.i]

    def advance(self):
        tok = self.peek()
        self.i += 1
        return tok

    def parse(self, min_prec=0):
        tok = self.advance()
        left = self._prefix(tok)
        while True:
            nxt = self.peek()
            if nxt.kind != "op" or nxt.value not in _BIN_PRECEDENCE:
                break
            prec = _BIN_PRECEDENCE[nxt.value]
            if prec < min_prec:
                break
            self.advance()
            if nxt.value == "^":
                right = self.parse(prec)  # right associative
                left = self._make_pow(left, right, nxt.pos)
            else:
                right = self.parse(prec + 1)
                left = Bin(nxt.value, left, right)
        return left

    def _prefix(self, tok):
        if tok.kind == "num":
            return Num(tok.value)
        if tok.kind == "op" and tok.value == "-":
            return Neg(self.parse(_UNARY_PRECEDENCE))
        if tok.kind == "op" and tok.value == "+":
            return self.parse(_UNARY_PRECEDENCE)
        if tok.kind == "lparen":
            inner = self.parse(0)
            closing = self.advance()
            if closing.kind != "rparen":
                raise SpecTextError("expected ')'", closing.pos)
            return inner
        if tok.kind == "ident":
            name = tok.value
            if self.peek().kind == "lparen":
                if name not in _FUNCTIONS:
                    raise UnknownIdentifierError(f"unknown function '{name}'", tok.pos)
                self.advance()
                arg = self.parse(0)
                closing = self.advance()
                if closing.kind != "rparen":
                    raise SpecTextError("expected ')'", closing.pos)
                return Call(name, arg)
            if name in _CONSTANTS:
                return Num(_CONSTANTS[name])
            if len(name) > 1 and name[0] == "x" and name[1:].isdigit():
                return Var(int(name[1:]) - 1)
            return Param(name)
        raise SpecTextError("expected an expression", tok.pos)

    @staticmethod
    def _make_pow(base, exponent, pos):
        if exponent.variables():
            raise SpecTextError("power exponent must be constant", pos)
        if exponent.parameters():
            raise SpecTextError("power exponent must be a plain constant", pos)
        return Pow(base, exponent.eval((), {}))


def parse_expression(text):
    """Parse a single expression string into a tree."""
    tokens = [t for t in _tokenize(text) if t.kind != "sep"]
    parser = _ExprParser(tokens, 0)
    tree = parser.parse(0)
    if parser.peek().kind != "end":
        raise SpecTextError("trailing input after expression", parser.peek().pos)
    return tree


# ---------------------------------------------------------------------------
# compiled closures
# ---------------------------------------------------------------------------

_COMPILE_GLOBALS = {
    "sin": math.sin, "cos": math.cos, "exp": math.exp,
    "log": math.log, "sqrt": math.sqrt, "float": float,
    "__builtins__": {},
}


def bind_params(tree, params):
    """Return an equivalent tree with parameter values attached (for emit)."""
    if isinstance(tree, Param):
        if tree.name not in params:
            raise UnknownIdentifierError(f"unknown identifier '{tree.name}'")
        return Param(tree.name, params[tree.name])
    if isinstance(tree, Bin):
        return Bin(tree.op, bind_params(tree.a, params), bind_params(tree.b, params))
    if isinstance(tree, Neg):
        return Neg(bind_params(tree.a, params))
    if isinstance(tree, Pow):
        return Pow(bind_params(tree.a, params), tree.p)
    if isinstance(tree, Call):
        return Call(tree.fn, bind_params(tree.a, params))
    return tree


def _unpack_preamble(trees):
    used = sorted(set().union(*(t.variables() for t in trees)) or set())
    return "".join(f"    _x{i} = float(_x[{i}])\n" for i in used)


def _has_fractional_power(tree):
    if isinstance(tree, Pow) and tree.p != int(tree.p):
        return True
    children = []
    if isinstance(tree, (Neg, Pow, Call)):
        children = [tree.a]
    elif isinstance(tree, Bin):
        children = [tree.a, tree.b]
    return any(_has_fractional_power(c) for c in children)


def compile_scalar(tree, params):
    """Compile one expression into a float-returning closure of the state."""
    bound = bind_params(tree, params)
    src = (f"def _fn(_x):\n{_unpack_preamble([tree])}"
           f"    return {bound.emit()}\n")
    namespace = dict(_COMPILE_GLOBALS)
    exec(src, namespace)
    fast = namespace["_fn"]
    check_complex = _has_fractional_power(tree)

    def wrapped(x, _fast=fast, _tree=tree, _params=params,
                _check=check_complex):
        try:
            value = _fast(x)
        except (ZeroDivisionError, ValueError, OverflowError):
            # re-run the tree walker, which localizes the failing node
            return _tree.eval(x, _params)
        if _check and isinstance(value, complex):
            return _tree.eval(x, _params)
        return value

    return wrapped


def compile_vector(trees, params):
    """Compile a list of expressions into one tuple-returning closure."""
    bound = [bind_params(t, params) for t in trees]
    body = ", ".join(b.emit() for b in bound)
    if len(bound) == 1:
        body += ","
    src = f"def _fn(_x):\n{_unpack_preamble(trees)}    return ({body})\n"
    namespace = dict(_COMPILE_GLOBALS)
    exec(src, namespace)
    fast = namespace["_fn"]
    check_complex = any(_has_fractional_power(t) for t in trees)

    def wrapped(x, _fast=fast, _trees=trees, _params=params,
                _check=check_complex):
        try:
            values = _fast(x)
        except (ZeroDivisionError, ValueError, OverflowError):
            return tuple(t.eval(x, _params) for t in _trees)
        if _check and any(isinstance(v, complex) for v in values):
            return tuple(t.eval(x, _params) for t in _trees)
        return values

    return wrapped


# ---------------------------------------------------------------------------
# system-text parsing
# ---------------------------------------------------------------------------

class ParsedSystem:
    """Statements of a system text, validated and ready to build models."""

    def __init__(self, dim, e_dim, params, f_trees, g_trees, input_trees, q):
        self.dim = dim
        self.e_dim = e_dim
        self.params = dict(params)
        self.f_trees = list(f_trees)
        self.g_trees = list(g_trees)
        self.input_trees = list(input_trees)
        self.q = q

    # -- evaluation helpers -------------------------------------------------

    def eval_block(self, trees, x):
        return np.array([t.eval(x, self.params) for t in trees])

    def jet2_block(self, trees, x):
        n = self.dim
        jets = [Jet2.variable(float(x[i]), i, n) for i in range(n)]
        return [t.jet2(jets, self.params) for t in trees]

    def compiled_field(self, trees):
        fn = compile_vector(trees, self.params)

        def field(x, _fn=fn):
            return np.array(_fn(x))

        return field

    def compiled_jacobian(self, trees):
        n = self.dim
        rows = [[t.diff(j) for j in range(n)] for t in trees]
        fn = compile_vector([d for row in rows for d in row], self.params)
        m = len(trees)

        def jacobian(x, _fn=fn, _m=m, _n=n):
            return np.array(_fn(x)).reshape(_m, _n)

        return jacobian

    def hessian_evaluator(self, trees):
        def hessians(x):
            return np.array([j.hess for j in self.jet2_block(trees, x)])

        return hessians

    # -- round trip ---------------------------------------------------------

    def to_text(self):
        lines = [f"dim = {self.dim}"]
        if self.e_dim is not None:
            lines.append(f"e_dim = {self.e_dim}")
        for name in sorted(self.params):
            lines.append(f"{name} = {repr(self.params[name])}")
        for k, t in enumerate(self.f_trees):
            lines.append(f"F{k + 1} = {t.text()}")
        for k, t in enumerate(self.g_trees):
            lines.append(f"G{k + 1} = {t.text()}")
        for k, t in enumerate(self.input_trees):
            lines.append(f"g{k + 1} = {t.text()}")
        if self.q is not None:
            flat = " ".join(repr(v) for v in self.q.ravel())
            lines.append(f"Q = {flat}")
        return "\n".join(lines) + "\n"


def _split_statements(tokens):
    groups, current = [], []
    for tok in tokens:
        if tok.kind == "sep":
            if current:
                groups.append(current)
                current = []
        elif tok.kind == "end":
            if current:
                groups.append(current)
        else:
            current.append(tok)
    return groups


def _indexed_name(name, prefix):
    if name.startswith(prefix) and name[len(prefix):].isdigit():
        return int(name[len(prefix):])
    return None


def parse_spec_text(text, params=None):
    """Parse a full system text into a :class:`ParsedSystem`.

    `params` overrides/extends parameter values declared in the text.
    """
    tokens = _tokenize(text)
    statements = _split_statements(tokens)

    dim = None
    e_dim = None
    declared = {}
    f_exprs, g_exprs, u_exprs = {}, {}, {}
    q_values = None

    for stmt in statements:
        if len(stmt) < 3 or stmt[0].kind != "ident" or not (
            stmt[1].kind == "op" and stmt[1].value == "="
        ):
            raise SpecTextError("expected 'name = value'", stmt[0].pos)
        name = stmt[0].value
        rest_start = 2

        if name in ("dim", "e_dim"):
            if len(stmt) != 3 or stmt[2].kind != "num":
                raise SpecTextError(f"'{name}' must be an integer", stmt[0].pos)
            value = stmt[2].value
            if value != int(value) or value < 1:
                raise SpecTextError(f"'{name}' must be a positive integer", stmt[2].pos)
            if name == "dim":
                dim = int(value)
            else:
                e_dim = int(value)
            continue

        if name == "Q":
            q_values = []
            toks = stmt[rest_start:]
            j = 0
            while j < len(toks):
                tok = toks[j]
                if tok.kind == "op" and tok.value == ",":
                    j += 1
                    continue
                sign = 1.0
                if tok.kind == "op" and tok.value == "-":
                    sign = -1.0
                    j += 1
                    tok = toks[j] if j < len(toks) else None
                if tok is None or tok.kind != "num":
                    raise SpecTextError("Q must be a list of numbers", stmt[0].pos)
                q_values.append(sign * tok.value)
                j += 1
            continue

        for prefix, store in (("F", f_exprs), ("G", g_exprs), ("g", u_exprs)):
            k = _indexed_name(name, prefix)
            if k is not None:
                parser = _ExprParser(stmt, rest_start)
                tree = parser.parse(0)
                if parser.i != len(stmt):
                    raise SpecTextError("trailing input after expression",
                                        stmt[parser.i].pos)
                store[k] = tree
                break
        else:
            # plain parameter: name = <constant expression>
            parser = _ExprParser(stmt, rest_start)
            tree = parser.parse(0)
            if parser.i != len(stmt) or tree.variables() or tree.parameters():
                raise SpecTextError(f"parameter '{name}' must be a constant",
                                    stmt[0].pos)
            declared[name] = tree.eval((), {})

    if params:
        declared.update({k: float(v) for k, v in params.items()})

    if dim is None:
        raise SpecTextError("missing 'dim' declaration")

    n_f = e_dim if e_dim is not None else dim
    if e_dim is not None and not (1 <= e_dim < dim):
        raise DimensionMismatchError(f"e_dim = {e_dim} must satisfy 1 <= e_dim < dim")

    def collect(store, label, count):
        if not store and count == 0:
            return []
        missing = [k for k in range(1, count + 1) if k not in store]
        extra = [k for k in store if k < 1 or k > count]
        if missing or extra:
            raise DimensionMismatchError(
                f"{label}-block needs exactly {label}1..{label}{count}; "
                f"missing {missing or 'none'}, unexpected indices {extra or 'none'}"
            )
        return [store[k] for k in range(1, count + 1)]

    f_trees = collect(f_exprs, "F", n_f)
    if not f_trees:
        raise DimensionMismatchError("no F expressions declared")
    g_trees = collect(g_exprs, "G", dim - n_f) if e_dim is not None else []
    if e_dim is None and g_exprs:
        raise DimensionMismatchError("G expressions require an e_dim declaration")
    input_trees = collect(u_exprs, "g", dim) if u_exprs else []

    # identifier validation against dim and declared parameters
    for tree in f_trees + g_trees + input_trees:
        bad = [i for i in tree.variables() if i >= dim]
        if bad:
            raise DimensionMismatchError(
                f"variable x{bad[0] + 1} exceeds dim = {dim}")
        unknown = sorted(tree.parameters() - set(declared))
        if unknown:
            raise UnknownIdentifierError(
                f"unknown identifier '{unknown[0]}' (no parameter value)")

    q = None
    if q_values is not None:
        k = n_f
        if len(q_values) != k * k:
            raise DimensionMismatchError(
                f"Q needs {k * k} entries (row-major {k}x{k}), got {len(q_values)}")
        q = np.array(q_values).reshape(k, k)

    return ParsedSystem(dim, e_dim, declared, f_trees, g_trees, input_trees, q)


def parse_system(text, params=None):
    """Parse a system text and build the appropriate model object.

    Returns a :class:`~lyapmetric.systems.SystemModel` for a plain field, a
    :class:`~lyapmetric.systems.TransverseModel` when an ``e_dim``/``G`` block
    is present, and a :class:`~lyapmetric.systems.ControlSystem` when an input
    field ``g`` is declared.
    """
    from . import systems

    parsed = parse_spec_text(text, params)
    if parsed.input_trees:
        return systems.ControlSystem.from_parsed(parsed)
    if parsed.e_dim is not None:
        return systems.TransverseModel.from_parsed(parsed)
    return systems.SystemModel.from_parsed(parsed)


def eval_jet2(model, point):
    """Value, gradient and Hessian of every field component at `point`."""
    return model.jet2(point)
