"""Arithmetic expression trees used as evolvable MCTS tree policies.

Every internal node is a binary operator (+, -, *, /) and every leaf is a
constant or one of the gameplay variables in :data:`VARIABLES`. Text form is
fully parenthesised infix, e.g. ``((PE + 1.0) * ST)``.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Union

# Order matters: compiled policies receive metric values in this order, with the
# mean reward "R" passed separately.
VARIABLES = ("ST", "PE", "PD", "TO", "MTK", "MS", "JT", "HL", "TU", "TS", "R", "IC")
METRIC_VARIABLES = tuple(v for v in VARIABLES if v != "R")
VAR_ALIASES = {"R̄": "R", "Rbar": "R"}
OPERATORS = ("+", "-", "*", "/")

MAX_DEPTH = 8
INIT_MIN_DEPTH = 2
INIT_MAX_DEPTH = 5
DIV_EPS = 1e-9
CROSSOVER_RETRIES = 20
LEAF_PROBABILITY = 0.5


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "ExprTree"
    right: "ExprTree"


ExprTree = Union[Const, Var, BinOp]


class ExprParseError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


def _as_rng(rng) -> random.Random:
    return rng if isinstance(rng, random.Random) else random.Random(rng)


def depth(tree: ExprTree) -> int:
    if isinstance(tree, BinOp):
        return 1 + max(depth(tree.left), depth(tree.right))
    return 1


def size(tree: ExprTree) -> int:
    if isinstance(tree, BinOp):
        return 1 + size(tree.left) + size(tree.right)
    return 1


def variables(tree: ExprTree) -> set[str]:
    if isinstance(tree, BinOp):
        return variables(tree.left) | variables(tree.right)
    return {tree.name} if isinstance(tree, Var) else set()


def protected_div(a: float, b: float) -> float:
    return 0.0 if abs(b) < DIV_EPS else a / b


def _random_leaf(rng: random.Random) -> ExprTree:
    if rng.random() < 0.5:
        return Const(rng.uniform(-1.0, 1.0))
    return Var(rng.choice(VARIABLES))


def random_tree(rng=None, min_depth: int = INIT_MIN_DEPTH, max_depth: int = INIT_MAX_DEPTH) -> ExprTree:
    """Grow a random tree whose depth lies in ``[min_depth, max_depth]``.

    Nodes shallower than ``min_depth`` are always operators and nodes at
    ``max_depth`` are always leaves; in between a node is a leaf with probability
    :data:`LEAF_PROBABILITY`.
    """
    if not INIT_MIN_DEPTH <= min_depth <= max_depth <= MAX_DEPTH:
        raise ValueError(f"bad depth bounds {min_depth}..{max_depth}")
    rng = _as_rng(rng)

    def grow(d: int) -> ExprTree:
        if d >= max_depth or (d >= min_depth and rng.random() < LEAF_PROBABILITY):
            return _random_leaf(rng)
        return BinOp(rng.choice(OPERATORS), grow(d + 1), grow(d + 1))

    return grow(1)


def evaluate(tree: ExprTree, bindings: dict[str, float]) -> float:
    """Recursive evaluation; never raises and always returns a finite float."""
    value = _eval(tree, bindings)
    return value if math.isfinite(value) else 0.0


def _eval(tree: ExprTree, b: dict[str, float]) -> float:
    if isinstance(tree, Const):
        return tree.value
    if isinstance(tree, Var):
        return float(b[tree.name])
    x = _eval(tree.left, b)
    y = _eval(tree.right, b)
    op = tree.op
    if op == "+":
        return x + y
    if op == "-":
        return x - y
    if op == "*":
        return x * y
    return protected_div(x, y)


def _source(tree: ExprTree) -> str:
    if isinstance(tree, Const):
        return repr(tree.value)
    if isinstance(tree, Var):
        return "R" if tree.name == "R" else f"m[{METRIC_VARIABLES.index(tree.name)}]"
    a, b = _source(tree.left), _source(tree.right)
    if tree.op == "/":
        return f"_div({a}, {b})"
    return f"({a} {tree.op} {b})"


def compile_tree(tree: ExprTree):
    """Compile to a fast ``f(metrics, R)`` where ``metrics`` follows :data:`METRIC_VARIABLES`.

    Same semantics as :func:`evaluate`, including the non-finite guard.
    """
    code = f"lambda m, R: {_source(tree)}"
    raw = eval(code, {"_div": protected_div, "__builtins__": {}})  # noqa: S307 - generated from our own AST
    isfinite = math.isfinite

    def f(m, R):
        v = raw(m, R)
        return v if isfinite(v) else 0.0

    return f


def format_tree(tree: ExprTree) -> str:
    if isinstance(tree, Const):
        return repr(float(tree.value))
    if isinstance(tree, Var):
        return tree.name
    return f"({format_tree(tree.left)} {tree.op} {format_tree(tree.right)})"


def parse_tree(text: str) -> ExprTree:
    """Parse fully parenthesised infix; raises :class:`ExprParseError` with an offset."""
    pos = 0
    n = len(text)

    def skip():
        nonlocal pos
        while pos < n and text[pos].isspace():
            pos += 1

    def atom() -> ExprTree:
        nonlocal pos
        skip()
        if pos >= n:
            raise ExprParseError("unexpected end of input", pos)
        ch = text[pos]
        if ch == "(":
            pos += 1
            left = atom()
            skip()
            if pos >= n or text[pos] not in OPERATORS:
                raise ExprParseError("expected operator", pos)
            op = text[pos]
            pos += 1
            right = atom()
            skip()
            if pos >= n or text[pos] != ")":
                raise ExprParseError("expected ')'", pos)
            pos += 1
            return BinOp(op, left, right)
        start = pos
        if ch in "+-" or ch.isdigit() or ch == ".":
            pos += 1
            while pos < n and (text[pos].isdigit() or text[pos] in ".eE" or
                               (text[pos] in "+-" and text[pos - 1] in "eE")):
                pos += 1
            try:
                return Const(float(text[start:pos]))
            except ValueError:
                raise ExprParseError(f"bad number {text[start:pos]!r}", start) from None
        while pos < n and (text[pos].isalnum() or text[pos] in "_̄"):
            pos += 1
        word = text[start:pos]
        name = VAR_ALIASES.get(word, word)
        if name not in VARIABLES:
            raise ExprParseError(f"unexpected token {word or ch!r}", start)
        return Var(name)

    tree = atom()
    skip()
    if pos != n:
        raise ExprParseError("trailing input", pos)
    return tree


def subtrees(tree: ExprTree, path: tuple = ()):
    """Yield ``(path, subtree)`` in preorder; a path is a tuple of 0 (left) / 1 (right)."""
    yield path, tree
    if isinstance(tree, BinOp):
        yield from subtrees(tree.left, path + (0,))
        yield from subtrees(tree.right, path + (1,))


def get_subtree(tree: ExprTree, path: tuple) -> ExprTree:
    for side in path:
        tree = tree.right if side else tree.left
    return tree


def replace_subtree(tree: ExprTree, path: tuple, new: ExprTree) -> ExprTree:
    if not path:
        return new
    if path[0] == 0:
        return BinOp(tree.op, replace_subtree(tree.left, path[1:], new), tree.right)
    return BinOp(tree.op, tree.left, replace_subtree(tree.right, path[1:], new))


def crossover(a: ExprTree, b: ExprTree, rng=None, max_depth: int = MAX_DEPTH):
    """Swap one uniformly chosen subtree of each parent.

    Choices that would exceed ``max_depth`` are redrawn; after
    :data:`CROSSOVER_RETRIES` failures the parents are returned unchanged.
    """
    rng = _as_rng(rng)
    paths_a = [p for p, _ in subtrees(a)]
    paths_b = [p for p, _ in subtrees(b)]
    for _ in range(CROSSOVER_RETRIES):
        pa = rng.choice(paths_a)
        pb = rng.choice(paths_b)
        sa = get_subtree(a, pa)
        sb = get_subtree(b, pb)
        # depth of a grafted subtree = its path length + its own depth
        if len(pa) + depth(sb) > max_depth or len(pb) + depth(sa) > max_depth:
            continue
        return replace_subtree(a, pa, sb), replace_subtree(b, pb, sa)
    return a, b


def mutate(tree: ExprTree, rng=None) -> ExprTree:
    """Full replacement by a fresh random tree; the input is ignored by design."""
    return random_tree(rng)


def simplify(tree: ExprTree) -> ExprTree:
    """Fold operators whose operands are both constants."""
    if not isinstance(tree, BinOp):
        return tree
    left, right = simplify(tree.left), simplify(tree.right)
    if isinstance(left, Const) and isinstance(right, Const):
        return Const(evaluate(BinOp(tree.op, left, right), {}))
    return BinOp(tree.op, left, right)
