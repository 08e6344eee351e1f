"""Piecewise-smooth maps as expression DAGs with tagged kink nodes.

A map f: R^n -> R^m is described in a small text DSL, one map per file
(conventionally ``*.map``)::

    # branch gains 1 and 3 on the two kinks
    f(x, y) = (2*x - abs(x), abs(y) - 2*y)

Grammar: ``name(v1, ..., vn) = (expr1, ..., exprm)`` with binary operators
``+ - * /``, unary ``-``, the functions ``abs``, ``relu``, ``sin``, ``cos``,
``exp``, ``max``, ``min`` (two or more arguments, desugared
left-associatively into binary nodes), nonnegative integer powers
``expr^k``, and decimal literals.  Whitespace is insignificant and ``#``
starts a line comment.

All nonsmoothness is confined to ``abs``/``relu``/``max``/``min`` nodes.
Fixing one branch at every such node yields a smooth selection function;
:func:`eval_piece_jacobian` differentiates it exactly by forward
accumulation over the DAG.  The set of selection Jacobians active at a
point is what the generalized-Jacobian machinery downstream consumes.

Parsed maps are immutable and safe to share across threads; evaluation
allocates its own scratch per call and is reentrant.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

KINK_TOL = 1e-9          # default activity tolerance on switching quantities
DIV_EPS = 1e-12          # |denominator| at or below this raises
PATTERN_CAP = 20         # near-active kink count beyond which enumeration refuses

NONSMOOTH_KINDS = frozenset({"abs", "max", "min", "relu"})

_ARITY = {
    "var": 0, "const": 0,
    "neg": 1, "abs": 1, "relu": 1, "sin": 1, "cos": 1, "exp": 1, "powi": 1,
    "add": 2, "sub": 2, "mul": 2, "div": 2, "max": 2, "min": 2,
}
_UNARY_FUNCS = ("abs", "relu", "sin", "cos", "exp")
_NARY_FUNCS = ("max", "min")


class MapError(Exception):
    """Base class for map construction and evaluation failures."""


class MapSyntaxError(MapError):
    """Source text does not conform to the map DSL."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at offset {position})")
        self.position = position


class MapValidationError(MapError):
    """Structurally invalid map or mismatched dimensions."""


class EvaluationError(MapError):
    """Numeric failure (near-zero denominator, overflow, NaN) during evaluation."""

    def __init__(self, message: str, node_id: int | None = None):
        super().__init__(message)
        self.node_id = node_id


class PatternExplosionError(MapError):
    """Too many simultaneously near-active kinks to enumerate."""


@dataclass(frozen=True)
class ExprNode:
    """One DAG node.  ``payload`` holds the variable index for ``var``,
    the value for ``const`` and the exponent for ``powi``."""

    kind: str
    children: tuple[int, ...] = ()
    payload: float | int | None = None


@dataclass(frozen=True)
class SignPattern:
    """One branch choice per nonsmooth node, aligned with
    ``MapDefinition.nonsmooth_nodes``: ``'+'``/``'-'`` for abs and relu,
    ``'left'``/``'right'`` for max and min."""

    assignments: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.assignments)


@dataclass(frozen=True)
class MapDefinition:
    """A validated map.  ``nodes`` is topologically ordered (children come
    before parents), so a single forward sweep evaluates every node once."""

    name: str
    var_names: tuple[str, ...]
    nodes: tuple[ExprNode, ...]
    outputs: tuple[int, ...]
    nonsmooth_nodes: tuple[int, ...]

    @property
    def n_in(self) -> int:
        return len(self.var_names)

    @property
    def n_out(self) -> int:
        return len(self.outputs)

    @staticmethod
    def build(name: str, var_names: Sequence[str],
              nodes: Sequence[ExprNode], outputs: Sequence[int]) -> "MapDefinition":
        """Validate and construct; the nonsmooth-node list is derived in
        node-id order, which is deterministic for a given source text."""
        var_names = tuple(var_names)
        nodes = tuple(nodes)
        outputs = tuple(outputs)
        if not var_names:
            raise MapValidationError("a map needs at least one input variable")
        if len(set(var_names)) != len(var_names):
            raise MapValidationError("duplicate variable names")
        if not outputs:
            raise MapValidationError("a map needs at least one output")
        n_in = len(var_names)
        for i, node in enumerate(nodes):
            if node.kind not in _ARITY:
                raise MapValidationError(f"unknown node kind '{node.kind}'")
            if len(node.children) != _ARITY[node.kind]:
                raise MapValidationError(
                    f"node {i} ({node.kind}) has {len(node.children)} children, "
                    f"expected {_ARITY[node.kind]}")
            if any(c < 0 or c >= i for c in node.children):
                raise MapValidationError(f"node {i} references a non-prior node")
            if node.kind == "var":
                if not isinstance(node.payload, int) or not 0 <= node.payload < n_in:
                    raise MapValidationError(f"node {i} references variable index {node.payload}")
            elif node.kind == "const":
                if not isinstance(node.payload, float) or not math.isfinite(node.payload):
                    raise MapValidationError(f"node {i} has a non-finite constant")
            elif node.kind == "powi":
                if not isinstance(node.payload, int) or node.payload < 0:
                    raise MapValidationError(f"node {i} has exponent {node.payload}; "
                                             "only nonnegative integers are allowed")
        for o in outputs:
            if not 0 <= o < len(nodes):
                raise MapValidationError(f"output id {o} out of range")
        nonsmooth = tuple(i for i, nd in enumerate(nodes) if nd.kind in NONSMOOTH_KINDS)
        return MapDefinition(name, var_names, nodes, outputs, nonsmooth)


class DagBuilder:
    """Arena builder with hash-consing: structurally identical
    subexpressions collapse to one node, so repeated ``abs(x)`` is shared."""

    def __init__(self):
        self.nodes: list[ExprNode] = []
        self._memo: dict[tuple, int] = {}

    def add(self, kind: str, children: tuple[int, ...] = (),
            payload: float | int | None = None) -> int:
        key = (kind, children, payload)
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        self.nodes.append(ExprNode(kind, children, payload))
        nid = len(self.nodes) - 1
        self._memo[key] = nid
        return nid

    def var(self, index: int) -> int:
        return self.add("var", (), index)

    def const(self, value: float) -> int:
        return self.add("const", (), float(value))

    def finish(self, name: str, var_names: Sequence[str],
               outputs: Sequence[int]) -> MapDefinition:
        return MapDefinition.build(name, var_names, self.nodes, outputs)


# ---------------------------------------------------------------------------
# DSL parsing
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"(?P<ws>\s+)"
    r"|(?P<comment>#[^\n]*)"
    r"|(?P<num>(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),=])"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise MapSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        if kind not in ("ws", "comment"):
            tokens.append((kind, m.group(), pos))
        pos = m.end()
    tokens.append(("eof", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0
        self.builder = DagBuilder()
        self.var_ids: dict[str, int] = {}

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text: str):
        kind, val, pos = self.peek()
        if val != text:
            got = val if val else "end of input"
            raise MapSyntaxError(f"expected '{text}', found {got!r}", pos)
        return self.next()

    def parse(self) -> MapDefinition:
        kind, name, pos = self.next()
        if kind != "name":
            raise MapSyntaxError("map must start with an identifier", pos)
        self.expect("(")
        var_names = [self._var_name()]
        while self.peek()[1] == ",":
            self.next()
            var_names.append(self._var_name())
        self.expect(")")
        for idx, (v, vpos) in enumerate(var_names):
            if v in self.var_ids:
                raise MapSyntaxError(f"duplicate variable '{v}'", vpos)
            self.var_ids[v] = idx
        var_names = [v for v, _ in var_names]
        self.expect("=")
        self.expect("(")
        outputs = [self._expr()]
        while self.peek()[1] == ",":
            self.next()
            outputs.append(self._expr())
        self.expect(")")
        kind, val, pos = self.peek()
        if kind != "eof":
            raise MapSyntaxError(f"trailing input {val!r}", pos)
        try:
            return self.builder.finish(name, var_names, outputs)
        except MapValidationError as exc:
            raise MapSyntaxError(str(exc), 0) from exc

    def _var_name(self) -> tuple[str, int]:
        kind, val, pos = self.next()
        if kind != "name":
            raise MapSyntaxError("expected a variable name", pos)
        return val, pos

    def _expr(self) -> int:
        nid = self._term()
        while self.peek()[1] in ("+", "-"):
            op = self.next()[1]
            rhs = self._term()
            nid = self.builder.add("add" if op == "+" else "sub", (nid, rhs))
        return nid

    def _term(self) -> int:
        nid = self._factor()
        while self.peek()[1] in ("*", "/"):
            op = self.next()[1]
            rhs = self._factor()
            nid = self.builder.add("mul" if op == "*" else "div", (nid, rhs))
        return nid

    def _factor(self) -> int:
        if self.peek()[1] == "-":
            self.next()
            return self.builder.add("neg", (self._factor(),))
        return self._power()

    def _power(self) -> int:
        nid = self._atom()
        if self.peek()[1] == "^":
            self.next()
            kind, val, pos = self.next()
            if kind != "num" or not val.isdigit():
                raise MapSyntaxError("exponent must be a nonnegative integer literal", pos)
            nid = self.builder.add("powi", (nid,), int(val))
        return nid

    def _atom(self) -> int:
        kind, val, pos = self.next()
        if val == "(":
            nid = self._expr()
            self.expect(")")
            return nid
        if kind == "num":
            value = float(val)
            if not math.isfinite(value):
                raise MapSyntaxError(f"literal {val!r} overflows", pos)
            return self.builder.const(value)
        if kind == "name":
            if self.peek()[1] == "(":
                return self._call(val, pos)
            if val in self.var_ids:
                return self.builder.var(self.var_ids[val])
            raise MapSyntaxError(f"unknown identifier '{val}'", pos)
        got = val if val else "end of input"
        raise MapSyntaxError(f"expected an expression, found {got!r}", pos)

    def _call(self, fname: str, pos: int) -> int:
        if fname not in _UNARY_FUNCS and fname not in _NARY_FUNCS:
            raise MapSyntaxError(f"unknown function '{fname}'", pos)
        self.expect("(")
        if fname in _UNARY_FUNCS:
            arg = self._expr()
            if self.peek()[1] == ",":
                raise MapSyntaxError(f"'{fname}' expects 1 argument", pos)
            self.expect(")")
            return self.builder.add(fname, (arg,))
        # n-ary max/min fold left-associatively as arguments arrive, so the
        # node order matches a reparse of the printed nested form
        nid = self._expr()
        n_args = 1
        while self.peek()[1] == ",":
            self.next()
            nid = self.builder.add(fname, (nid, self._expr()))
            n_args += 1
        self.expect(")")
        if n_args < 2:
            raise MapSyntaxError(
                f"'{fname}' expects at least 2 arguments, got {n_args}", pos)
        return nid


def parse_map(text: str) -> MapDefinition:
    """Parse DSL source into a validated :class:`MapDefinition`.

    Node ids are assigned in first-occurrence order of subexpressions, so
    they are a deterministic function of the source text.
    """
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# Pretty printing (inverse of the parser up to whitespace)
# ---------------------------------------------------------------------------

_LEVEL = {"add": 1, "sub": 1, "mul": 2, "div": 2, "neg": 3, "powi": 4}


def pretty_print(m: MapDefinition) -> str:
    """Render back to DSL source.  ``parse_map(pretty_print(parse_map(s)))``
    equals ``parse_map(s)`` for any valid source ``s``."""

    def fmt(nid: int, min_level: int) -> str:
        node = m.nodes[nid]
        k = node.kind
        if k == "var":
            s = m.var_names[node.payload]
        elif k == "const":
            s = repr(node.payload)
        elif k == "neg":
            s = "-" + fmt(node.children[0], 3)
        elif k in ("add", "sub"):
            op = " + " if k == "add" else " - "
            s = fmt(node.children[0], 1) + op + fmt(node.children[1], 2)
        elif k in ("mul", "div"):
            op = "*" if k == "mul" else "/"
            s = fmt(node.children[0], 2) + op + fmt(node.children[1], 3)
        elif k == "powi":
            s = fmt(node.children[0], 5) + f"^{node.payload}"
        else:  # function call
            s = k + "(" + ", ".join(fmt(c, 1) for c in node.children) + ")"
        if _LEVEL.get(k, 5) < min_level:
            s = "(" + s + ")"
        return s

    head = m.name + "(" + ", ".join(m.var_names) + ")"
    body = ", ".join(fmt(o, 1) for o in m.outputs)
    return f"{head} = ({body})"


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def _check_point(m: MapDefinition, x) -> list[float]:
    xs = [float(v) for v in x]
    if len(xs) != m.n_in:
        raise MapValidationError(
            f"dimension mismatch: map '{m.name}' takes {m.n_in} inputs, point has {len(xs)}")
    return xs


def _values(m: MapDefinition, xs: list[float], div_eps: float) -> list[float]:
    vals = [0.0] * len(m.nodes)
    for i, node in enumerate(m.nodes):
        k = node.kind
        ch = node.children
        if k == "var":
            v = xs[node.payload]
        elif k == "const":
            v = node.payload
        elif k == "add":
            v = vals[ch[0]] + vals[ch[1]]
        elif k == "sub":
            v = vals[ch[0]] - vals[ch[1]]
        elif k == "mul":
            v = vals[ch[0]] * vals[ch[1]]
        elif k == "div":
            b = vals[ch[1]]
            if abs(b) <= div_eps:
                raise EvaluationError(
                    f"division by near-zero denominator ({b!r}) at node {i}", node_id=i)
            v = vals[ch[0]] / b
        elif k == "neg":
            v = -vals[ch[0]]
        elif k == "abs":
            v = abs(vals[ch[0]])
        elif k == "relu":
            u = vals[ch[0]]
            v = u if u > 0.0 else 0.0
        elif k == "max":
            v = max(vals[ch[0]], vals[ch[1]])
        elif k == "min":
            v = min(vals[ch[0]], vals[ch[1]])
        elif k == "sin":
            v = math.sin(vals[ch[0]])
        elif k == "cos":
            v = math.cos(vals[ch[0]])
        elif k == "exp":
            try:
                v = math.exp(vals[ch[0]])
            except OverflowError:
                raise EvaluationError(f"exp overflow at node {i}", node_id=i) from None
        elif k == "powi":
            try:
                v = vals[ch[0]] ** node.payload
            except OverflowError:
                raise EvaluationError(f"power overflow at node {i}", node_id=i) from None
        else:  # pragma: no cover - excluded by build validation
            raise MapValidationError(f"unknown node kind '{k}'")
        if not math.isfinite(v):
            raise EvaluationError(f"non-finite value at node {i} ({k})", node_id=i)
        vals[i] = v
    return vals


def eval_map(m: MapDefinition, x, *, div_eps: float = DIV_EPS) -> np.ndarray:
    """Evaluate f(x).  Each DAG node is computed exactly once; numeric
    failures raise :class:`EvaluationError` carrying the offending node id."""
    xs = _check_point(m, x)
    vals = _values(m, xs, div_eps)
    return np.array([vals[o] for o in m.outputs], dtype=float)


def switching_values(m: MapDefinition, x, *, div_eps: float = DIV_EPS) -> list[float]:
    """Switching quantity per nonsmooth node (child value for abs/relu,
    left minus right for max/min), in ``nonsmooth_nodes`` order."""
    xs = _check_point(m, x)
    vals = _values(m, xs, div_eps)
    out = []
    for nid in m.nonsmooth_nodes:
        node = m.nodes[nid]
        if node.kind in ("abs", "relu"):
            out.append(vals[node.children[0]])
        else:
            out.append(vals[node.children[0]] - vals[node.children[1]])
    return out


def _branch_options(kind: str, s: float, tol: float) -> tuple[str, ...]:
    if kind in ("abs", "relu"):
        if s > tol:
            return ("+",)
        if s < -tol:
            return ("-",)
        return ("+", "-")
    if kind == "max":
        if s > tol:
            return ("left",)
        if s < -tol:
            return ("right",)
    else:  # min picks the smaller argument
        if s > tol:
            return ("right",)
        if s < -tol:
            return ("left",)
    return ("left", "right")


def active_patterns(m: MapDefinition, x, tol: float = KINK_TOL, *,
                    cap: int = PATTERN_CAP, div_eps: float = DIV_EPS) -> tuple[SignPattern, ...]:
    """All sign patterns consistent with ``x`` within ``tol``, in
    lexicographic branch order.  Exactly one pattern comes back when no
    switching quantity is within ``tol`` of zero."""
    if tol < 0:
        raise MapValidationError("tolerance must be nonnegative")
    sw = switching_values(m, x, div_eps=div_eps)
    options = []
    near_active = 0
    for nid, s in zip(m.nonsmooth_nodes, sw):
        opts = _branch_options(m.nodes[nid].kind, s, tol)
        near_active += len(opts) > 1
        options.append(opts)
    if near_active > cap:
        raise PatternExplosionError(
            f"{near_active} near-active kink nodes at tolerance {tol:g} "
            f"exceed the enumeration cap {cap}")
    return tuple(SignPattern(assign) for assign in itertools.product(*options))


def pattern_is_active(m: MapDefinition, x, pattern: SignPattern,
                      tol: float = KINK_TOL, *, div_eps: float = DIV_EPS) -> bool:
    """True when every switching quantity lies on the assigned side or
    within ``tol`` of zero."""
    _check_pattern(m, pattern)
    sw = switching_values(m, x, div_eps=div_eps)
    for nid, s, sym in zip(m.nonsmooth_nodes, sw, pattern.assignments):
        kind = m.nodes[nid].kind
        if kind in ("abs", "relu"):
            ok = s >= -tol if sym == "+" else s <= tol
        elif kind == "max":
            ok = s >= -tol if sym == "left" else s <= tol
        else:
            ok = s <= tol if sym == "left" else s >= -tol
        if not ok:
            return False
    return True


def _check_pattern(m: MapDefinition, pattern: SignPattern):
    if len(pattern.assignments) != len(m.nonsmooth_nodes):
        raise MapValidationError(
            f"pattern has {len(pattern.assignments)} assignments, map has "
            f"{len(m.nonsmooth_nodes)} nonsmooth nodes")


def _piece_forward(m: MapDefinition, xs: list[float], pattern: SignPattern,
                   div_eps: float, want_grad: bool):
    branch = dict(zip(m.nonsmooth_nodes, pattern.assignments))
    n = m.n_in
    vals = [0.0] * len(m.nodes)
    grads: list[np.ndarray] = [None] * len(m.nodes) if want_grad else None
    zero = np.zeros(n)
    basis = np.eye(n)
    for i, node in enumerate(m.nodes):
        k = node.kind
        ch = node.children
        g = None
        if k == "var":
            v = xs[node.payload]
            g = basis[node.payload]
        elif k == "const":
            v = node.payload
            g = zero
        elif k == "add":
            v = vals[ch[0]] + vals[ch[1]]
            if want_grad:
                g = grads[ch[0]] + grads[ch[1]]
        elif k == "sub":
            v = vals[ch[0]] - vals[ch[1]]
            if want_grad:
                g = grads[ch[0]] - grads[ch[1]]
        elif k == "mul":
            a, b = vals[ch[0]], vals[ch[1]]
            v = a * b
            if want_grad:
                g = b * grads[ch[0]] + a * grads[ch[1]]
        elif k == "div":
            a, b = vals[ch[0]], vals[ch[1]]
            if abs(b) <= div_eps:
                raise EvaluationError(
                    f"division by near-zero denominator ({b!r}) at node {i}", node_id=i)
            v = a / b
            if want_grad:
                g = (grads[ch[0]] - v * grads[ch[1]]) / b
        elif k == "neg":
            v = -vals[ch[0]]
            if want_grad:
                g = -grads[ch[0]]
        elif k == "abs":
            u = vals[ch[0]]
            if branch[i] == "+":
                v = u
                g = grads[ch[0]] if want_grad else None
            else:
                v = -u
                if want_grad:
                    g = -grads[ch[0]]
        elif k == "relu":
            if branch[i] == "+":
                v = vals[ch[0]]
                g = grads[ch[0]] if want_grad else None
            else:
                v = 0.0
                g = zero
        elif k in ("max", "min"):
            pick = ch[0] if branch[i] == "left" else ch[1]
            v = vals[pick]
            g = grads[pick] if want_grad else None
        elif k == "sin":
            u = vals[ch[0]]
            v = math.sin(u)
            if want_grad:
                g = math.cos(u) * grads[ch[0]]
        elif k == "cos":
            u = vals[ch[0]]
            v = math.cos(u)
            if want_grad:
                g = -math.sin(u) * grads[ch[0]]
        elif k == "exp":
            try:
                v = math.exp(vals[ch[0]])
            except OverflowError:
                raise EvaluationError(f"exp overflow at node {i}", node_id=i) from None
            if want_grad:
                g = v * grads[ch[0]]
        elif k == "powi":
            u = vals[ch[0]]
            p = node.payload
            try:
                if p == 0:
                    v = 1.0
                    g = zero
                else:
                    v = u ** p
                    if want_grad:
                        g = (p * u ** (p - 1)) * grads[ch[0]]
            except OverflowError:
                raise EvaluationError(f"power overflow at node {i}", node_id=i) from None
        if not math.isfinite(v):
            raise EvaluationError(f"non-finite value at node {i} ({k})", node_id=i)
        vals[i] = v
        if want_grad:
            grads[i] = g
    return vals, grads


def eval_piece(m: MapDefinition, x, pattern: SignPattern, *,
               div_eps: float = DIV_EPS) -> np.ndarray:
    """Value of the smooth selection function obtained by fixing every
    nonsmooth node to its branch in ``pattern``.  At the point where the
    pattern is active this agrees with :func:`eval_map` exactly."""
    xs = _check_point(m, x)
    _check_pattern(m, pattern)
    vals, _ = _piece_forward(m, xs, pattern, div_eps, want_grad=False)
    return np.array([vals[o] for o in m.outputs], dtype=float)


def eval_piece_jacobian(m: MapDefinition, x, pattern: SignPattern, *,
                        div_eps: float = DIV_EPS) -> np.ndarray:
    """Exact m-by-n Jacobian of the selection function for ``pattern``,
    computed by forward accumulation over the DAG."""
    xs = _check_point(m, x)
    _check_pattern(m, pattern)
    _, grads = _piece_forward(m, xs, pattern, div_eps, want_grad=True)
    return np.array([grads[o] for o in m.outputs], dtype=float)
