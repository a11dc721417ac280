"""Typed expression trees for evolved visual operators.

Trees transform named image grids into an image grid. Every primitive is
total: protected variants never produce NaN or infinity, and intermediate
magnitudes are clamped to +-1e9 so arbitrarily composed programs stay finite.
Primitives operate on the last two axes, so batched (n, h, w) environments
evaluate all images at once.
"""

import enum
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import maximum_filter, minimum_filter, uniform_filter

from .grids import gaussian_blur, minmax_rescale

MAX_DEPTH = 8
_BOUND = 1e9
_DIV_EPS = 1e-6


class Dimension(enum.Enum):
    ORIENTATION = "orientation"
    COLOR = "color"
    SHAPE = "shape"
    INTENSITY = "intensity"
    MERGE = "merge"


class EvalError(Exception):
    """Raised when a tree references a terminal missing from the environment."""


class ParseError(Exception):
    """Raised on malformed tree text; carries the offending position."""

    def __init__(self, message, pos):
        super().__init__(f"{message} (at position {pos})")
        self.pos = pos


def _clip(x):
    """In-place magnitude bound; only ever applied to freshly allocated
    results, never to environment arrays."""
    return np.clip(x, -_BOUND, _BOUND, out=x)


def _div_p(a, b):
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a / b
    np.copyto(out, 1.0, where=np.abs(b) < _DIV_EPS)
    return _clip(out)


def _log_p(x):
    out = np.abs(x)
    out += _DIV_EPS
    np.log(out, out=out)
    return minmax_rescale(out)


def _exp_s(x):
    out = np.clip(x, -20.0, 20.0)
    return np.exp(out, out=out)


def _thr(x):
    mean = x.mean(axis=(-2, -1), keepdims=True)
    return (x >= mean).astype(x.dtype)


def _dx(x):
    return np.gradient(x, axis=-1)


def _dy(x):
    return np.gradient(x, axis=-2)


def _win(x):
    return (1,) * (x.ndim - 2) + (3, 3)


def _dilate(x):
    return maximum_filter(x, size=_win(x), mode="nearest")


def _erode(x):
    return minimum_filter(x, size=_win(x), mode="nearest")


def _local_mean(x):
    return uniform_filter(x, size=_win(x), mode="nearest")


@dataclass(frozen=True)
class Primitive:
    name: str
    arity: int
    kind: str  # "terminal" | "pointwise" | "spatial"
    fn: object = None


def _sqrt_p(x):
    out = np.abs(x)
    return np.sqrt(out, out=out)


_POINTWISE = [
    Primitive("add", 2, "pointwise", lambda a, b: _clip(a + b)),
    Primitive("sub", 2, "pointwise", lambda a, b: _clip(a - b)),
    Primitive("mul", 2, "pointwise", lambda a, b: _clip(a * b)),
    Primitive("div_p", 2, "pointwise", _div_p),
    Primitive("abs", 1, "pointwise", np.abs),
    Primitive("sqrt_p", 1, "pointwise", _sqrt_p),
    Primitive("log_p", 1, "pointwise", _log_p),
    Primitive("exp_s", 1, "pointwise", _exp_s),
    Primitive("complement", 1, "pointwise", lambda x: 1.0 - x),
    Primitive("max2", 2, "pointwise", np.maximum),
    Primitive("min2", 2, "pointwise", np.minimum),
    Primitive("half", 1, "pointwise", lambda x: 0.5 * x),
    Primitive("thr", 1, "pointwise", _thr),
]

_SPATIAL = {
    "dx": Primitive("dx", 1, "spatial", _dx),
    "dy": Primitive("dy", 1, "spatial", _dy),
    "gauss_1": Primitive("gauss_1", 1, "spatial", lambda x: gaussian_blur(x, 1.0)),
    "gauss_2": Primitive("gauss_2", 1, "spatial", lambda x: gaussian_blur(x, 2.0)),
    "orient_edge": Primitive("orient_edge", 1, "spatial",
                             lambda x: np.abs(_dx(x)) + np.abs(_dy(x))),
    "dilate_3": Primitive("dilate_3", 1, "spatial", _dilate),
    "erode_3": Primitive("erode_3", 1, "spatial", _erode),
    "open_3": Primitive("open_3", 1, "spatial", lambda x: _dilate(_erode(x))),
    "close_3": Primitive("close_3", 1, "spatial", lambda x: _erode(_dilate(x))),
    "skel_proxy": Primitive("skel_proxy", 1, "spatial", lambda x: x - _erode(x)),
    "local_mean_3": Primitive("local_mean_3", 1, "spatial", _local_mean),
}

_SPATIAL_BY_DIM = {
    Dimension.ORIENTATION: ["dx", "dy", "gauss_1", "gauss_2", "orient_edge"],
    Dimension.COLOR: [],
    Dimension.SHAPE: ["dilate_3", "erode_3", "open_3", "close_3", "skel_proxy"],
    Dimension.INTENSITY: ["gauss_1", "gauss_2", "local_mean_3"],
    Dimension.MERGE: [],
}

_TERMINALS_BY_DIM = {
    Dimension.ORIENTATION: ["r", "g", "b", "k", "v"],
    Dimension.COLOR: ["r", "g", "b", "c", "m", "y", "k", "h", "s", "v"],
    Dimension.SHAPE: ["r", "g", "b", "k", "v"],
    Dimension.INTENSITY: ["r", "g", "b", "k", "v"],
    Dimension.MERGE: ["cm"],
}

# Function lookup shared by evaluation and parsing; names are globally unique.
FUNCTIONS = {p.name: p for p in _POINTWISE}
FUNCTIONS.update(_SPATIAL)

_ALL_TERMINAL_NAMES = sorted({t for ts in _TERMINALS_BY_DIM.values() for t in ts})


def primitive_table(dim):
    """Return the fixed primitive list (functions then terminals) for dim."""
    funcs = list(_POINTWISE) + [_SPATIAL[n] for n in _SPATIAL_BY_DIM[dim]]
    terms = [Primitive(n, 0, "terminal") for n in _TERMINALS_BY_DIM[dim]]
    return funcs + terms


@dataclass(frozen=True)
class Node:
    """One tree node: a primitive or terminal name plus its children."""

    name: str
    children: tuple = ()

    def __iter__(self):
        yield self
        for child in self.children:
            yield from child


def depth(tree):
    if not tree.children:
        return 1
    return 1 + max(depth(c) for c in tree.children)


def node_count(tree):
    return 1 + sum(node_count(c) for c in tree.children)


def node_paths(tree):
    """All node paths in preorder; a path is a tuple of child indices."""
    paths = [()]
    stack = [(tree, ())]
    while stack:
        node, path = stack.pop()
        for i, child in enumerate(node.children):
            cp = path + (i,)
            paths.append(cp)
            stack.append((child, cp))
    paths.sort()
    return paths


def subtree_at(tree, path):
    node = tree
    for i in path:
        node = node.children[i]
    return node


def replace_at(tree, path, new_subtree):
    """Rebuild the tree with the node at path swapped for new_subtree."""
    if not path:
        return new_subtree
    i = path[0]
    children = list(tree.children)
    children[i] = replace_at(children[i], path[1:], new_subtree)
    return Node(tree.name, tuple(children))


def random_tree(dim, depth_cap, rng):
    """Ramped half-and-half tree for a dimension's primitive table.

    Grow or full is picked with probability 0.5 and the target depth is
    uniform in [2, depth_cap]. Full trees put every leaf at the target depth;
    grow trees may terminate early.
    """
    if not 2 <= depth_cap <= MAX_DEPTH:
        raise ValueError(f"depth_cap must be in [2, {MAX_DEPTH}], got {depth_cap}")
    target = int(rng.integers(2, depth_cap + 1))
    full = rng.random() < 0.5
    if full:
        return _full_tree(dim, target, 1, rng)
    return grow_tree(dim, target, rng)


def _full_tree(dim, target, level, rng):
    terms = _TERMINALS_BY_DIM[dim]
    if level == target:
        return Node(terms[rng.integers(len(terms))])
    funcs = _function_names(dim)
    prim = FUNCTIONS[funcs[rng.integers(len(funcs))]]
    kids = tuple(_full_tree(dim, target, level + 1, rng) for _ in range(prim.arity))
    return Node(prim.name, kids)


def grow_tree(dim, max_d, rng):
    """Grow-method tree of depth at most max_d (a bare terminal when 1)."""
    terms = _TERMINALS_BY_DIM[dim]
    if max_d <= 1:
        return Node(terms[rng.integers(len(terms))])
    pool = _function_names(dim) + terms
    pick = pool[rng.integers(len(pool))]
    if pick in FUNCTIONS:
        prim = FUNCTIONS[pick]
        kids = tuple(grow_tree(dim, max_d - 1, rng) for _ in range(prim.arity))
        return Node(prim.name, kids)
    return Node(pick)


def _function_names(dim):
    return [p.name for p in _POINTWISE] + _SPATIAL_BY_DIM[dim]


def evaluate_tree(tree, env, rescale=True):
    """Evaluate a tree against an environment of named grids.

    Terminal names resolve through env (a mapping name -> array); all arrays
    must share trailing dimensions. The root output is min-max rescaled to
    [0, 1] per image slice unless rescale is False; constant slices rescale
    to all zeros.
    """
    out = _eval_node(tree, env)
    if rescale:
        out = minmax_rescale(out)
    return out


def _eval_node(node, env):
    if not node.children:
        if node.name in env:
            return np.asarray(env[node.name])
        if node.name in FUNCTIONS:
            raise EvalError(
                f"function {node.name!r} used with no arguments")
        raise EvalError(f"terminal {node.name!r} is not bound in the environment")
    prim = FUNCTIONS.get(node.name)
    if prim is None:
        raise EvalError(f"unknown primitive {node.name!r}")
    args = [_eval_node(c, env) for c in node.children]
    return prim.fn(*args)


def serialize(tree):
    """Prefix s-expression text, e.g. (add (gauss_1 r) v)."""
    if not tree.children:
        return tree.name
    inner = " ".join(serialize(c) for c in tree.children)
    return f"({tree.name} {inner})"


def parse(text):
    """Parse s-expression text into a tree, validating arity and symbols."""
    tree, pos = _parse_expr(text, _skip_ws(text, 0))
    pos = _skip_ws(text, pos)
    if pos != len(text):
        raise ParseError("trailing input after expression", pos)
    return tree


def _skip_ws(text, pos):
    while pos < len(text) and text[pos].isspace():
        pos += 1
    return pos


def _read_symbol(text, pos):
    start = pos
    while pos < len(text) and not text[pos].isspace() and text[pos] not in "()":
        pos += 1
    if pos == start:
        raise ParseError("expected a symbol", start)
    return text[start:pos], pos


def _parse_expr(text, pos):
    if pos >= len(text):
        raise ParseError("unexpected end of input", pos)
    if text[pos] == ")":
        raise ParseError("unbalanced ')'", pos)
    if text[pos] != "(":
        sym, end = _read_symbol(text, pos)
        if sym in FUNCTIONS:
            raise ParseError(f"function {sym!r} requires arguments", pos)
        if sym not in _ALL_TERMINAL_NAMES:
            raise ParseError(f"unknown symbol {sym!r}", pos)
        return Node(sym), end
    open_pos = pos
    pos = _skip_ws(text, pos + 1)
    sym, pos = _read_symbol(text, pos)
    prim = FUNCTIONS.get(sym)
    if prim is None:
        raise ParseError(f"unknown function {sym!r}", pos - len(sym))
    children = []
    while True:
        pos = _skip_ws(text, pos)
        if pos >= len(text):
            raise ParseError("unbalanced '('", open_pos)
        if text[pos] == ")":
            pos += 1
            break
        child, pos = _parse_expr(text, pos)
        children.append(child)
    if len(children) != prim.arity:
        raise ParseError(
            f"{sym!r} takes {prim.arity} argument(s), got {len(children)}", open_pos)
    return Node(sym, tuple(children)), pos


def validate_tree(tree, dim):
    """Check arity, symbol membership and the depth cap for a dimension."""
    allowed_funcs = set(_function_names(dim))
    allowed_terms = set(_TERMINALS_BY_DIM[dim])
    for node in tree:
        if node.children:
            prim = FUNCTIONS.get(node.name)
            if prim is None or node.name not in allowed_funcs:
                raise ValueError(f"function {node.name!r} not allowed for {dim}")
            if len(node.children) != prim.arity:
                raise ValueError(f"arity mismatch at {node.name!r}")
        else:
            if node.name not in allowed_terms:
                raise ValueError(f"terminal {node.name!r} not allowed for {dim}")
    if depth(tree) > MAX_DEPTH:
        raise ValueError(f"tree depth {depth(tree)} exceeds {MAX_DEPTH}")
    return True
