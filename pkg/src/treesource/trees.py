"""Full binary trees counted by leaves.

A tree is either a single leaf or an inner node with exactly two children.
Size is the number of leaves, so a tree of size n has n - 1 inner nodes.
Height counts edges on a longest root-to-leaf path; a leaf has height 0.

Trees are immutable. Size, height and a structural hash are computed once
at construction, which keeps every query O(1) and lets trees of millions
of leaves be built bottom-up without touching the call stack.
"""

from __future__ import annotations

import math
from typing import Iterator

__all__ = [
    "BinaryTree",
    "LEAF",
    "leaf",
    "node",
    "count_trees",
    "enumerate_trees",
    "shape_bits",
    "tree_from_shape_bits",
    "inner_split_sizes",
]

ENUMERATION_LIMIT = 15


class BinaryTree:
    """Immutable full binary tree node.

    Either a leaf (no children) or an inner node with two children.
    Children must be built before their parent, so all cached attributes
    are available in O(1) without recursion.
    """

    __slots__ = ("left", "right", "size", "height", "_hash")

    def __init__(self, left: "BinaryTree | None" = None, right: "BinaryTree | None" = None):
        if (left is None) != (right is None):
            raise ValueError("an inner node needs both children, a leaf neither")
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)
        if left is None:
            object.__setattr__(self, "size", 1)
            object.__setattr__(self, "height", 0)
            object.__setattr__(self, "_hash", hash((1, 0)))
        else:
            object.__setattr__(self, "size", left.size + right.size)
            object.__setattr__(self, "height", 1 + max(left.height, right.height))
            object.__setattr__(self, "_hash", hash((self.size, left._hash, right._hash)))

    def __setattr__(self, name, value):
        raise AttributeError("BinaryTree is immutable")

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other) -> bool:
        if self is other:
            return True
        if not isinstance(other, BinaryTree):
            return NotImplemented
        # iterative structural comparison; trees can be too deep for recursion
        stack = [(self, other)]
        while stack:
            a, b = stack.pop()
            if a is b:
                continue
            if a.size != b.size or a.height != b.height or a._hash != b._hash:
                return False
            if a.is_leaf:
                if not b.is_leaf:
                    return False
                continue
            if b.is_leaf:
                return False
            stack.append((a.left, b.left))
            stack.append((a.right, b.right))
        return True

    def __repr__(self) -> str:
        bits = shape_bits(self)
        if len(bits) > 40:
            bits = bits[:37] + "..."
        return f"BinaryTree(size={self.size}, height={self.height}, shape={bits})"


LEAF = BinaryTree()


def leaf() -> BinaryTree:
    """The unique tree of size 1 (shared instance)."""
    return LEAF


def node(left: BinaryTree, right: BinaryTree) -> BinaryTree:
    """Join two trees under a new root."""
    return BinaryTree(left, right)


def count_trees(n: int) -> int:
    """Number of full binary trees with n leaves, the (n-1)-st Catalan number.

    Exact integer arithmetic for any n >= 1.
    """
    if n < 1:
        raise ValueError(f"size must be >= 1, got {n}")
    m = n - 1
    return math.comb(2 * m, m) // (m + 1)


_enum_cache: dict[int, tuple[BinaryTree, ...]] = {1: (LEAF,)}
_ENUM_CACHE_LIMIT = 12


def _enumerated(n: int) -> Iterator[BinaryTree]:
    if n <= _ENUM_CACHE_LIMIT:
        if n not in _enum_cache:
            _enum_cache[n] = tuple(
                BinaryTree(l, r)
                for i in range(1, n)
                for l in _enumerated(i)
                for r in _enumerated(n - i)
            )
        yield from _enum_cache[n]
    else:
        # beyond the cache limit trees are produced lazily and not retained
        for i in range(1, n):
            for l in _enumerated(i):
                for r in _enumerated(n - i):
                    yield BinaryTree(l, r)


def enumerate_trees(n: int) -> Iterator[BinaryTree]:
    """Yield every tree of size n exactly once, in a fixed order.

    Order: left-subtree size ascending; for equal splits, trees follow the
    enumeration order of the left subtree first, then of the right.
    Restricted to 1 <= n <= 15; the count is Catalan(n-1) and explodes
    beyond that.
    """
    if not 1 <= n <= ENUMERATION_LIMIT:
        raise ValueError(f"enumeration supports 1 <= n <= {ENUMERATION_LIMIT}, got {n}")
    return _enumerated(n)


def shape_bits(t: BinaryTree) -> str:
    """Serialize a tree shape as pre-order bits: '1' inner node, '0' leaf.

    The string has 2*size - 1 characters and identifies the shape uniquely.
    """
    out: list[str] = []
    stack = [t]
    while stack:
        cur = stack.pop()
        if cur.is_leaf:
            out.append("0")
        else:
            out.append("1")
            stack.append(cur.right)
            stack.append(cur.left)
    return "".join(out)


def tree_from_shape_bits(bits: str) -> BinaryTree:
    """Rebuild a tree from its pre-order bit string (inverse of shape_bits)."""
    if not bits or any(c not in "01" for c in bits):
        raise ValueError("shape string must be nonempty and consist of 0/1")
    # reversed pre-order is a post-order of the mirrored tree: build with a stack
    build: list[BinaryTree] = []
    for c in reversed(bits):
        if c == "0":
            build.append(LEAF)
        else:
            if len(build) < 2:
                raise ValueError("malformed shape string")
            left = build.pop()
            right = build.pop()
            build.append(BinaryTree(left, right))
    if len(build) != 1:
        raise ValueError("malformed shape string")
    return build[0]


def inner_split_sizes(t: BinaryTree) -> Iterator[tuple[int, int]]:
    """Yield (left size, right size) for every inner node, iteratively."""
    stack = [t]
    while stack:
        cur = stack.pop()
        if cur.is_leaf:
            continue
        yield cur.left.size, cur.right.size
        stack.append(cur.right)
        stack.append(cur.left)
