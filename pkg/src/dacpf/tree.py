"""Binary decomposition trees over state components.

Chain-structured states split into contiguous blocks; 2D lattices split
vertically into row bands down to single rows, then horizontally within each
row, which is the same thing as merging horizontal blocks first and row bands
second when read bottom-up. Both builders are pure functions of their
arguments and use a left-heavy ceil/floor split for odd sizes, so no node
ever has a single child.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import InvalidParams

__all__ = ["DecompositionTree", "build_chain_tree", "build_lattice_tree", "bottom_up_levels"]


@dataclass(frozen=True)
class DecompositionTree:
    """Immutable binary tree over global component indices (0-based).

    Attributes
    ----------
    parent, left, right : ndarray of int
        Link arrays, -1 where absent. Node ids index these arrays.
    comps : tuple of ndarray
        ``comps[u]`` lists node u's components in ascending global order.
    depth : ndarray of int
        Root depth 0.
    height : ndarray of int
        Leaves 0; a parent is 1 + max of its children.
    root : int
    leaves : tuple of int
        Ordered by contained component.
    """

    parent: np.ndarray
    left: np.ndarray
    right: np.ndarray
    comps: tuple
    depth: np.ndarray
    height: np.ndarray
    root: int
    leaves: tuple

    @property
    def n_nodes(self) -> int:
        return len(self.comps)

    @property
    def n_components(self) -> int:
        return len(self.comps[self.root])

    def components_of(self, node: int) -> np.ndarray:
        return self.comps[node]

    def depth_of(self, node: int) -> int:
        return int(self.depth[node])

    def is_leaf(self, node: int) -> bool:
        return self.left[node] < 0

    def internal_nodes(self) -> list:
        return [u for u in range(self.n_nodes) if not self.is_leaf(u)]


def _finish(comp_lists, children):
    n = len(comp_lists)
    parent = np.full(n, -1, dtype=int)
    left = np.full(n, -1, dtype=int)
    right = np.full(n, -1, dtype=int)
    for u, (l, r) in children.items():
        left[u], right[u] = l, r
        parent[l] = u
        parent[r] = u
    depth = np.zeros(n, dtype=int)
    # ids are assigned preorder, so parents precede children
    for u in range(n):
        if parent[u] >= 0:
            depth[u] = depth[parent[u]] + 1
    height = np.zeros(n, dtype=int)
    for u in range(n - 1, -1, -1):
        if left[u] >= 0:
            height[u] = 1 + max(height[left[u]], height[right[u]])
    leaves = [u for u in range(n) if left[u] < 0]
    leaves.sort(key=lambda u: comp_lists[u][0])
    comps = tuple(np.array(c, dtype=int) for c in comp_lists)
    return DecompositionTree(
        parent=parent, left=left, right=right, comps=comps,
        depth=depth, height=height, root=0, leaves=tuple(leaves),
    )


def build_chain_tree(d: int) -> DecompositionTree:
    """Binary tree over components 0..d-1 by recursive contiguous splits.

    A block of size n splits into a left block of size ceil(n/2) and a right
    block of size floor(n/2); for d a power of two this is the perfect tree
    whose depth-k nodes are contiguous blocks of size d / 2^k.

    Examples
    --------
    >>> t = build_chain_tree(3)
    >>> [list(t.components_of(u)) for u in t.leaves]
    [[0], [1], [2]]
    """
    if d < 1:
        raise InvalidParams("d must be >= 1")
    comp_lists: list[list[int]] = []
    children: dict[int, tuple[int, int]] = {}

    def rec(lo: int, hi: int) -> int:
        u = len(comp_lists)
        comp_lists.append(list(range(lo, hi)))
        n = hi - lo
        if n > 1:
            mid = lo + (n + 1) // 2
            children[u] = (rec(lo, mid), rec(mid, hi))
        return u

    rec(0, d)
    return _finish(comp_lists, children)


def build_lattice_tree(rows: int, cols: int) -> DecompositionTree:
    """Tree over a rows x cols lattice, vertices numbered row major r*cols+c.

    Read bottom-up, adjacent horizontal blocks merge pairwise within each row
    until every row is one block, then row bands merge pairwise vertically.
    Odd counts use the same left-heavy rule per direction, the left (upper)
    child holding the larger half.
    """
    if rows < 1 or cols < 1:
        raise InvalidParams("rows and cols must be >= 1")
    comp_lists: list[list[int]] = []
    children: dict[int, tuple[int, int]] = {}

    def block_comps(r0, r1, c0, c1):
        return [r * cols + c for r in range(r0, r1) for c in range(c0, c1)]

    def rec(r0, r1, c0, c1) -> int:
        u = len(comp_lists)
        comp_lists.append(block_comps(r0, r1, c0, c1))
        if r1 - r0 > 1:
            rm = r0 + (r1 - r0 + 1) // 2
            children[u] = (rec(r0, rm, c0, c1), rec(rm, r1, c0, c1))
        elif c1 - c0 > 1:
            cm = c0 + (c1 - c0 + 1) // 2
            children[u] = (rec(r0, r1, c0, cm), rec(r0, r1, cm, c1))
        return u

    rec(0, rows, 0, cols)
    return _finish(comp_lists, children)


def bottom_up_levels(tree: DecompositionTree) -> list:
    """Group node ids by height: level 0 = all leaves, last level = [root].

    Within a level, nodes are ordered by their smallest contained component.
    A block whose sibling sits deeper in the tree simply stays active across
    levels until its parent's level; it appears only at its own height.
    """
    levels: list[list[int]] = [[] for _ in range(int(tree.height[tree.root]) + 1)]
    for u in range(tree.n_nodes):
        levels[int(tree.height[u])].append(u)
    for lvl in levels:
        lvl.sort(key=lambda u: int(tree.comps[u][0]))
    return levels
