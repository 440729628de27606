"""Minimal arithmetic expression grammar for user-supplied frame components.

Supported: +, -, *, /, ^ (or **), unary minus, exp, sin, cos, pow(a, b),
numbers, and the variables x, y.  Expressions are parsed once at model load
time, differentiated symbolically, and compiled to vectorized numpy callables.
"""

from __future__ import annotations

import math

import numpy as np

_FUNCS = ("exp", "sin", "cos")


class ExprError(ValueError):
    pass


# ---------------------------------------------------------------------------
# tokenizer / parser (recursive descent)
# ---------------------------------------------------------------------------

def _tokenize(src):
    toks = []
    i, n = 0, len(src)
    while i < n:
        c = src[i]
        if c.isspace():
            i += 1
        elif c.isdigit() or (c == "." and i + 1 < n and src[i + 1].isdigit()):
            j = i
            while j < n and (src[j].isdigit() or src[j] in ".eE" or
                             (src[j] in "+-" and src[j - 1] in "eE")):
                j += 1
            toks.append(("num", float(src[i:j])))
            i = j
        elif c.isalpha() or c == "_":
            j = i
            while j < n and (src[j].isalnum() or src[j] == "_"):
                j += 1
            toks.append(("name", src[i:j]))
            i = j
        elif src.startswith("**", i):
            toks.append(("op", "^"))
            i += 2
        elif c in "+-*/^(),":
            toks.append(("op", c))
            i += 1
        else:
            raise ExprError(f"unexpected character {c!r} in expression")
    toks.append(("end", None))
    return toks


class _Parser:
    def __init__(self, toks):
        self.toks = toks
        self.pos = 0

    def peek(self):
        return self.toks[self.pos]

    def take(self, kind=None, val=None):
        k, v = self.toks[self.pos]
        if (kind and k != kind) or (val and v != val):
            raise ExprError(f"expected {val or kind}, got {v!r}")
        self.pos += 1
        return v

    def parse(self):
        node = self.expr()
        if self.peek()[0] != "end":
            raise ExprError(f"trailing input at token {self.peek()[1]!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek() == ("op", "+") or self.peek() == ("op", "-"):
            op = self.take("op")
            rhs = self.term()
            node = ("add" if op == "+" else "sub", node, rhs)
        return node

    def term(self):
        node = self.unary()
        while self.peek() == ("op", "*") or self.peek() == ("op", "/"):
            op = self.take("op")
            rhs = self.unary()
            node = ("mul" if op == "*" else "div", node, rhs)
        return node

    def unary(self):
        if self.peek() == ("op", "-"):
            self.take("op")
            return ("neg", self.unary())
        if self.peek() == ("op", "+"):
            self.take("op")
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek() == ("op", "^"):
            self.take("op")
            return ("pow", base, self.unary())
        return base

    def atom(self):
        kind, val = self.peek()
        if kind == "num":
            self.take()
            return ("num", val)
        if kind == "name":
            self.take()
            if self.peek() == ("op", "("):
                self.take("op")
                args = [self.expr()]
                while self.peek() == ("op", ","):
                    self.take("op")
                    args.append(self.expr())
                self.take("op", ")")
                if val == "pow":
                    if len(args) != 2:
                        raise ExprError("pow takes two arguments")
                    return ("pow", args[0], args[1])
                if val not in _FUNCS:
                    raise ExprError(f"unknown function {val!r}")
                if len(args) != 1:
                    raise ExprError(f"{val} takes one argument")
                return ("call", val, args[0])
            if val == "pi":
                return ("num", math.pi)
            if val not in ("x", "y"):
                raise ExprError(f"unknown variable {val!r}")
            return ("var", val)
        if (kind, val) == ("op", "("):
            self.take("op")
            node = self.expr()
            self.take("op", ")")
            return node
        raise ExprError(f"unexpected token {val!r}")


def parse(src):
    """Parse an expression string into an AST of nested tuples."""
    return _Parser(_tokenize(src)).parse()


# ---------------------------------------------------------------------------
# simplification, differentiation, compilation
# ---------------------------------------------------------------------------

def _is_num(node, value=None):
    return node[0] == "num" and (value is None or node[1] == value)


def simplify(node):
    tag = node[0]
    if tag in ("num", "var"):
        return node
    if tag == "neg":
        a = simplify(node[1])
        if _is_num(a):
            return ("num", -a[1])
        if a[0] == "neg":
            return a[1]
        return ("neg", a)
    if tag == "call":
        a = simplify(node[2])
        if _is_num(a):
            return ("num", getattr(math, node[1])(a[1]))
        return ("call", node[1], a)
    a, b = simplify(node[1]), simplify(node[2])
    if _is_num(a) and _is_num(b):
        try:
            return ("num", _APPLY[tag](a[1], b[1]))
        except (ZeroDivisionError, OverflowError, ValueError):
            pass
    if tag == "add":
        if _is_num(a, 0.0):
            return b
        if _is_num(b, 0.0):
            return a
    elif tag == "sub":
        if _is_num(b, 0.0):
            return a
        if _is_num(a, 0.0):
            return simplify(("neg", b))
    elif tag == "mul":
        if _is_num(a, 0.0) or _is_num(b, 0.0):
            return ("num", 0.0)
        if _is_num(a, 1.0):
            return b
        if _is_num(b, 1.0):
            return a
    elif tag == "div":
        if _is_num(a, 0.0):
            return ("num", 0.0)
        if _is_num(b, 1.0):
            return a
    elif tag == "pow":
        if _is_num(b, 0.0):
            return ("num", 1.0)
        if _is_num(b, 1.0):
            return a
    return (tag, a, b)


_APPLY = {
    "add": lambda a, b: a + b,
    "sub": lambda a, b: a - b,
    "mul": lambda a, b: a * b,
    "div": lambda a, b: a / b,
    "pow": lambda a, b: a ** b,
}


def _contains_var(node):
    tag = node[0]
    if tag == "var":
        return True
    if tag == "num":
        return False
    return any(_contains_var(ch) for ch in node[1:] if isinstance(ch, tuple))


def diff(node, var):
    """Symbolic derivative d(node)/d(var), var in {'x', 'y'}."""
    tag = node[0]
    if tag == "num":
        return ("num", 0.0)
    if tag == "var":
        return ("num", 1.0 if node[1] == var else 0.0)
    if tag == "neg":
        return simplify(("neg", diff(node[1], var)))
    if tag == "add" or tag == "sub":
        return simplify((tag, diff(node[1], var), diff(node[2], var)))
    if tag == "mul":
        a, b = node[1], node[2]
        return simplify(("add", ("mul", diff(a, var), b), ("mul", a, diff(b, var))))
    if tag == "div":
        a, b = node[1], node[2]
        num = ("sub", ("mul", diff(a, var), b), ("mul", a, diff(b, var)))
        return simplify(("div", num, ("pow", b, ("num", 2.0))))
    if tag == "pow":
        a, b = node[1], node[2]
        if _contains_var(b):
            raise ExprError("cannot differentiate variable exponents "
                            "(no log in the grammar)")
        da = diff(a, var)
        return simplify(("mul", ("mul", b, ("pow", a, ("sub", b, ("num", 1.0)))), da))
    if tag == "call":
        fn, a = node[1], node[2]
        da = diff(a, var)
        if fn == "exp":
            outer = ("call", "exp", a)
        elif fn == "sin":
            outer = ("call", "cos", a)
        elif fn == "cos":
            outer = ("neg", ("call", "sin", a))
        else:  # pragma: no cover
            raise ExprError(f"unknown function {fn!r}")
        return simplify(("mul", outer, da))
    raise ExprError(f"bad node {tag!r}")  # pragma: no cover


def to_source(node):
    tag = node[0]
    if tag == "num":
        return repr(node[1])
    if tag == "var":
        return node[1]
    if tag == "neg":
        return f"(-{to_source(node[1])})"
    if tag == "call":
        return f"np.{node[1]}({to_source(node[2])})"
    if tag == "pow":
        return f"({to_source(node[1])})**({to_source(node[2])})"
    op = {"add": "+", "sub": "-", "mul": "*", "div": "/"}[tag]
    return f"({to_source(node[1])}{op}{to_source(node[2])})"


def compile_ast(node):
    """Compile an AST to a vectorized callable f(x, y) -> ndarray."""
    src = to_source(node)
    fn = eval(f"lambda x, y: {src}", {"np": np, "__builtins__": {}})

    def wrapped(x, y):
        out = fn(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        return np.broadcast_to(np.asarray(out, dtype=float),
                               np.broadcast_shapes(np.shape(x), np.shape(y))).copy()

    wrapped.source = src
    return wrapped


def to_source_scalar(node):
    tag = node[0]
    if tag == "num":
        return repr(node[1])
    if tag == "var":
        return node[1]
    if tag == "neg":
        return f"(-{to_source_scalar(node[1])})"
    if tag == "call":
        return f"math.{node[1]}({to_source_scalar(node[2])})"
    if tag == "pow":
        return f"({to_source_scalar(node[1])})**({to_source_scalar(node[2])})"
    op = {"add": "+", "sub": "-", "mul": "*", "div": "/"}[tag]
    return f"({to_source_scalar(node[1])}{op}{to_source_scalar(node[2])})"


def compile_ast_scalar(node):
    """Compile an AST to a float-only callable (math module, no numpy)."""
    src = to_source_scalar(node)
    return eval(f"lambda x, y: {src}", {"math": math, "__builtins__": {}})


class Expr:
    """A parsed expression with compiled value and derivatives up to order 2."""

    def __init__(self, src):
        if isinstance(src, Expr):
            self.ast = src.ast
            self.src = src.src
        else:
            self.ast = simplify(parse(src))
            self.src = src
        self._fn = compile_ast(self.ast)
        dx, dy = diff(self.ast, "x"), diff(self.ast, "y")
        self._d = {"x": compile_ast(dx), "y": compile_ast(dy)}
        self._dd = {
            ("x", "x"): compile_ast(diff(dx, "x")),
            ("x", "y"): compile_ast(diff(dx, "y")),
            ("y", "y"): compile_ast(diff(dy, "y")),
        }

    def __call__(self, x, y):
        return self._fn(x, y)

    def d(self, var):
        return self._d[var]

    def dd(self, v1, v2):
        return self._dd[(v1, v2) if (v1, v2) in self._dd else (v2, v1)]

    def __repr__(self):
        return f"Expr({self.src!r})"
