"""Expression trees over measured signal channels.

Candidate model terms are small symbolic expressions built from signal
variables (``X0``, ``X1``, ...), floating-point constants, the unary
functions ``abs`` and ``sgn``, and the four arithmetic operators.  Trees are
immutable: the genetic operators return new trees that share unmodified
subtrees with their parents.

Every tree carries a canonical string (``key``) computed at construction.
Operands of commutative operators are ordered lexicographically, so two
trees that differ only by commutative operand order render identically and
can be deduplicated by string comparison.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ExpressionTree",
    "NonFiniteColumn",
    "PrimitiveSet",
    "binary",
    "canonical_string",
    "constant",
    "crossover",
    "default_primitives",
    "eval_columns",
    "eval_tree",
    "mutate",
    "parse_expression",
    "random_leaf",
    "random_tree",
    "subtree_at",
    "swap_subtrees",
    "unary",
    "variable",
]

VAR = "var"
CONST = "const"
UNARY_OPS = ("abs", "sgn")
BINARY_OPS = ("+", "-", "*", "/")
COMMUTATIVE = ("+", "*")

# CLI/config spellings for operators.
OP_NAMES = {
    "plus": "+",
    "minus": "-",
    "times": "*",
    "divide": "/",
    "abs": "abs",
    "sgn": "sgn",
}


class NonFiniteColumn(Exception):
    """Evaluating a tree produced NaN or +/-inf (e.g. division by zero)."""


@dataclass(frozen=True)
class ExpressionTree:
    """Immutable expression node.

    ``kind`` is ``"var"`` (value = variable index), ``"const"`` (value =
    float), one of the unary function names, or one of the binary operator
    symbols.  ``depth`` counts nodes along the longest root-to-leaf path, so
    a bare leaf has depth 1.
    """

    kind: str
    value: float | int | None = None
    children: tuple["ExpressionTree", ...] = ()
    depth: int = field(init=False, compare=False, repr=False)
    size: int = field(init=False, compare=False, repr=False)
    key: str = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        if self.kind == VAR:
            if self.children or not isinstance(self.value, (int, np.integer)) or self.value < 0:
                raise ValueError("variable node needs a non-negative index and no children")
            key = f"X{int(self.value)}"
        elif self.kind == CONST:
            if self.children or self.value is None or not math.isfinite(float(self.value)):
                raise ValueError("constant node needs a finite value and no children")
            key = repr(float(self.value))
        elif self.kind in UNARY_OPS:
            if len(self.children) != 1:
                raise ValueError(f"{self.kind} takes exactly one child")
            key = f"{self.kind}({self.children[0].key})"
        elif self.kind in BINARY_OPS:
            if len(self.children) != 2:
                raise ValueError(f"{self.kind} takes exactly two children")
            a, b = self.children[0].key, self.children[1].key
            if self.kind in COMMUTATIVE and b < a:
                a, b = b, a
            key = f"({a} {self.kind} {b})"
        else:
            raise ValueError(f"unknown node kind {self.kind!r}")
        depth = 1 + max((c.depth for c in self.children), default=0)
        size = 1 + sum(c.size for c in self.children)
        object.__setattr__(self, "depth", depth)
        object.__setattr__(self, "size", size)
        object.__setattr__(self, "key", key)

    def __str__(self):
        return self.key


def variable(index):
    return ExpressionTree(VAR, int(index))


def constant(value):
    return ExpressionTree(CONST, float(value))


def unary(op, child):
    return ExpressionTree(op, None, (child,))


def binary(op, left, right):
    return ExpressionTree(op, None, (left, right))


def canonical_string(tree):
    """Deterministic rendering; equal strings imply equal functions."""
    return tree.key


@dataclass(frozen=True)
class PrimitiveSet:
    """Operators and leaf settings available to the tree generators.

    Constants are drawn log-uniformly in magnitude over
    ``[const_low, const_high]`` with a random sign; a leaf is a constant
    with probability ``p_constant``, otherwise a variable.
    """

    unary: tuple[str, ...] = ("abs", "sgn")
    binary: tuple[str, ...] = ("+", "-", "*")
    n_variables: int = 3
    const_low: float = 1e-2
    const_high: float = 1e2
    p_constant: float = 0.1

    def __post_init__(self):
        ops = tuple(self.unary) + tuple(self.binary)
        if not ops:
            raise ValueError("primitive set needs at least one operator")
        for op in self.unary:
            if op not in UNARY_OPS:
                raise ValueError(f"unknown unary operator {op!r}")
        for op in self.binary:
            if op not in BINARY_OPS:
                raise ValueError(f"unknown binary operator {op!r}")
        if self.n_variables < 1:
            raise ValueError("need at least one variable")
        if not (0.0 <= self.p_constant <= 1.0):
            raise ValueError("p_constant must lie in [0, 1]")
        if not (0.0 < self.const_low <= self.const_high):
            raise ValueError("constant magnitude range must satisfy 0 < low <= high")

    @property
    def operators(self):
        return tuple(self.unary) + tuple(self.binary)


def default_primitives(divide=False, n_variables=3):
    """Operator set used for the oscillator studies; divide is optional."""
    ops = ("+", "-", "*", "/") if divide else ("+", "-", "*")
    return PrimitiveSet(unary=("abs", "sgn"), binary=ops, n_variables=n_variables)


def random_leaf(primitives, rng):
    if rng.random() < primitives.p_constant:
        lo, hi = math.log(primitives.const_low), math.log(primitives.const_high)
        magnitude = math.exp(rng.uniform(lo, hi))
        sign = -1.0 if rng.random() < 0.5 else 1.0
        return constant(sign * magnitude)
    return variable(rng.integers(primitives.n_variables))


def random_tree(primitives, max_depth, rng):
    """Grow a random tree of depth <= max_depth.

    Each node becomes a leaf with probability level/max_depth, so trees thin
    out toward the depth limit; max_depth == 1 forces a single leaf.  Binary
    operators are drawn with twice the weight of unary ones, keeping the
    arithmetic structure dominant over wrapper functions.
    """
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    weighted = tuple(primitives.binary) * 2 + tuple(primitives.unary)

    def grow(level):
        if level >= max_depth or rng.random() < level / max_depth:
            return random_leaf(primitives, rng)
        op = weighted[rng.integers(len(weighted))]
        if op in UNARY_OPS:
            return unary(op, grow(level + 1))
        return binary(op, grow(level + 1), grow(level + 1))

    return grow(1)


def _node_at(tree, index):
    """Preorder node lookup; returns (subtree, level with root at 1)."""
    if not 0 <= index < tree.size:
        raise IndexError(f"node index {index} out of range for size {tree.size}")
    node, level = tree, 1
    while index > 0:
        index -= 1
        for child in node.children:
            if index < child.size:
                node = child
                level += 1
                break
            index -= child.size
    return node, level


def subtree_at(tree, index):
    return _node_at(tree, index)[0]


def _replace_at(tree, index, replacement):
    if index == 0:
        return replacement
    index -= 1
    rebuilt = []
    for child in tree.children:
        if 0 <= index < child.size:
            rebuilt.append(_replace_at(child, index, replacement))
        else:
            rebuilt.append(child)
        index -= child.size
    return ExpressionTree(tree.kind, tree.value, tuple(rebuilt))


def swap_subtrees(a, b, index_a, index_b):
    """Exchange the subtrees rooted at the given preorder indices."""
    sub_a = subtree_at(a, index_a)
    sub_b = subtree_at(b, index_b)
    return _replace_at(a, index_a, sub_b), _replace_at(b, index_b, sub_a)


def crossover(a, b, primitives, max_depth, rng):
    """Subtree-swap crossover returning two offspring.

    Crossover points are chosen uniformly over the nodes of each parent.  An
    offspring that would exceed max_depth has the incoming subtree replaced
    by a random leaf instead.
    """
    index_a = int(rng.integers(a.size))
    index_b = int(rng.integers(b.size))
    child_a, child_b = swap_subtrees(a, b, index_a, index_b)
    if child_a.depth > max_depth:
        child_a = _replace_at(a, index_a, random_leaf(primitives, rng))
    if child_b.depth > max_depth:
        child_b = _replace_at(b, index_b, random_leaf(primitives, rng))
    return child_a, child_b


def mutate(a, primitives, max_depth, rng):
    """Replace a uniformly chosen subtree with a fresh random tree.

    The regrown subtree gets the depth budget left at the mutation point, so
    the result never exceeds max_depth.  Mutating at the root regrows the
    whole individual.
    """
    index = int(rng.integers(a.size))
    _, level = _node_at(a, index)
    budget = max_depth - level + 1
    if budget < 1:
        raise ValueError("tree deeper than max_depth")
    return _replace_at(a, index, random_tree(primitives, budget, rng))


def _eval(tree, X):
    if tree.kind == VAR:
        return X[:, int(tree.value)]
    if tree.kind == CONST:
        return np.full(X.shape[0], float(tree.value))
    if tree.kind == "abs":
        return np.abs(_eval(tree.children[0], X))
    if tree.kind == "sgn":
        return np.sign(_eval(tree.children[0], X))
    left = _eval(tree.children[0], X)
    right = _eval(tree.children[1], X)
    if tree.kind == "+":
        return left + right
    if tree.kind == "-":
        return left - right
    if tree.kind == "*":
        return left * right
    return left / right


def eval_columns(tree, X, check=True):
    """Evaluate a tree column-wise over a (n, p) matrix of signal samples.

    Division is left unprotected; with ``check`` the resulting column is
    required to be finite everywhere and NonFiniteColumn is raised
    otherwise.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be a 2-d sample matrix")
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = _eval(tree, X)
    if out.base is not None or not out.flags.writeable:
        out = out.copy()
    if check and not np.isfinite(out).all():
        raise NonFiniteColumn(tree.key)
    return out


def eval_tree(tree, signals):
    """Evaluate a tree over the full columns of a SignalSet."""
    return eval_columns(tree, signals.state_matrix())


_TOKEN = re.compile(
    r"\s*(X\d+|[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?|sgn|abs|[()+\-*/])"
)


def _tokenize(text):
    tokens, pos = [], 0
    while pos < len(text):
        match = _TOKEN.match(text, pos)
        if match is None:
            if text[pos:].strip():
                raise ValueError(f"cannot tokenize expression at {text[pos:]!r}")
            break
        tokens.append(match.group(1))
        pos = match.end()
    return tokens


def parse_expression(text):
    """Parse the canonical rendering back into a tree (inverse of key)."""
    tokens = _tokenize(text)
    pos = 0

    def expect(token):
        nonlocal pos
        if pos >= len(tokens) or tokens[pos] != token:
            raise ValueError(f"expected {token!r} at token {pos} of {text!r}")
        pos += 1

    def parse():
        nonlocal pos
        if pos >= len(tokens):
            raise ValueError(f"unexpected end of expression in {text!r}")
        tok = tokens[pos]
        pos += 1
        if tok == "(":
            left = parse()
            if pos >= len(tokens) or tokens[pos] not in BINARY_OPS:
                raise ValueError(f"expected binary operator at token {pos} of {text!r}")
            op = tokens[pos]
            pos += 1
            right = parse()
            expect(")")
            return binary(op, left, right)
        if tok in UNARY_OPS:
            expect("(")
            child = parse()
            expect(")")
            return unary(tok, child)
        if tok.startswith("X"):
            return variable(int(tok[1:]))
        return constant(float(tok))

    tree = parse()
    if pos != len(tokens):
        raise ValueError(f"trailing tokens in {text!r}")
    return tree
