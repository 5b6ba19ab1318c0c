"""Binary dimension trees for the hierarchical Tucker format."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence


@dataclass(frozen=True)
class Node:
    modes: tuple[int, ...]
    children: tuple[int, int] | None = None
    parent: int | None = None

    @property
    def is_leaf(self) -> bool:
        return self.children is None


class DimTree:
    """A binary dimension tree stored as a preorder node list (root first).

    Nodes are referenced by their index in :attr:`nodes`.  Construction does
    not validate; use :func:`validate` (``build_balanced`` output is always
    valid).
    """

    def __init__(self, nodes: Sequence[Node]):
        self.nodes: tuple[Node, ...] = tuple(nodes)
        self.d = len(self.nodes[0].modes) if self.nodes else 0
        self._layer = [0] * len(self.nodes)
        for i, node in enumerate(self.nodes):
            if node.children is not None:
                for c in node.children:
                    if 0 <= c < len(self.nodes):
                        self._layer[c] = self._layer[i] + 1

    root = 0

    def __len__(self) -> int:
        return len(self.nodes)

    def __eq__(self, other) -> bool:
        return isinstance(other, DimTree) and self.nodes == other.nodes

    def __hash__(self) -> int:
        return hash(self.nodes)

    def __repr__(self) -> str:
        return f"DimTree(d={self.d}, nodes={len(self.nodes)})"

    def layer(self, t: int) -> int:
        return self._layer[t]

    @property
    def depth(self) -> int:
        return max(self._layer) if self._layer else 0

    def is_leaf(self, t: int) -> bool:
        return self.nodes[t].children is None

    def children(self, t: int) -> tuple[int, int]:
        ch = self.nodes[t].children
        if ch is None:
            raise ValueError(f"node {t} is a leaf")
        return ch

    def leaf_of_mode(self, mode: int) -> int:
        for i, node in enumerate(self.nodes):
            if node.is_leaf and node.modes == (mode,):
                return i
        raise KeyError(mode)

    @property
    def leaves(self) -> list[int]:
        return [i for i, n in enumerate(self.nodes) if n.is_leaf]

    @property
    def interior(self) -> list[int]:
        return [i for i, n in enumerate(self.nodes) if not n.is_leaf and i != self.root]

    def postorder(self) -> list[int]:
        """Node indices with every child before its parent."""
        return list(reversed(range(len(self.nodes))))

    def format(self, sizes: Sequence[int] | None = None) -> str:
        """Indented text, one node per line: ``modes=[...] r=...`` (1-based modes)."""
        lines = []

        def walk(t: int, indent: int) -> None:
            node = self.nodes[t]
            r = "?" if sizes is None else str(sizes[t])
            modes = ", ".join(str(m + 1) for m in node.modes)
            lines.append(f"{'  ' * indent}modes=[{modes}] r={r}")
            if node.children is not None:
                for c in node.children:
                    walk(c, indent + 1)

        walk(self.root, 0)
        return "\n".join(lines)


def build_balanced(d: int) -> DimTree:
    """Recursive bisection of ``[0, ..., d-1]``; odd arrays give the left child
    the extra mode."""
    if d < 1:
        raise ValueError("dimension must be at least 1")
    nodes: list[Node] = []

    def build(modes: tuple[int, ...], parent: int | None) -> int:
        idx = len(nodes)
        nodes.append(Node(modes, None, parent))
        if len(modes) > 1:
            half = (len(modes) + 1) // 2
            left = build(modes[:half], idx)
            right = build(modes[half:], idx)
            nodes[idx] = Node(modes, (left, right), parent)
        return idx

    build(tuple(range(d)), None)
    return DimTree(nodes)


def from_nested(spec) -> DimTree:
    """Tree from nested pairs of 0-based modes, e.g. ``((0, 1), 2)``."""
    nodes: list[Node] = []

    def build(s, parent):
        idx = len(nodes)
        nodes.append(None)  # type: ignore[arg-type]
        if isinstance(s, int):
            nodes[idx] = Node((s,), None, parent)
            return idx, (s,)
        if len(s) != 2:
            raise ValueError("only binary trees are supported")
        left, lm = build(s[0], idx)
        right, rm = build(s[1], idx)
        nodes[idx] = Node(lm + rm, (left, right), parent)
        return idx, lm + rm

    build(spec, None)
    return DimTree(nodes)


def validate(tree: DimTree) -> str | None:
    """Return a description of the first violated invariant, or ``None``."""
    nodes = tree.nodes
    if not nodes:
        return "tree has no nodes"
    d = len(nodes[0].modes)
    if nodes[0].modes != tuple(range(d)):
        return f"root modes {nodes[0].modes} are not [0..{d - 1}]"
    if nodes[0].parent is not None:
        return "root has a parent"
    seen_leaves: list[int] = []
    reached = {0}
    for i, node in enumerate(nodes):
        if node.children is None:
            if len(node.modes) != 1:
                return f"leaf {i} carries {len(node.modes)} modes {node.modes}"
            seen_leaves.append(node.modes[0])
            continue
        if len(node.children) != 2:
            return f"node {i} is not binary"
        left, right = node.children
        for c in (left, right):
            if not i < c < len(nodes):
                return f"node {i} has child {c} outside preorder position"
            if nodes[c].parent != i:
                return f"node {c} does not point back to parent {i}"
            reached.add(c)
        if nodes[left].modes + nodes[right].modes != node.modes:
            return (
                f"children of node {i} concatenate to "
                f"{nodes[left].modes + nodes[right].modes}, not {node.modes}"
            )
    if len(reached) != len(nodes):
        return "tree has unreachable nodes"
    if sorted(seen_leaves) != list(range(d)) or len(seen_leaves) != d:
        return f"leaf modes {sorted(seen_leaves)} do not cover each mode exactly once"
    return None


def layers(tree: DimTree) -> list[list[int]]:
    """Non-root nodes grouped by layer 1..p (distance to the root)."""
    out: list[list[int]] = [[] for _ in range(tree.depth)]
    for t in range(1, len(tree.nodes)):
        out[tree.layer(t) - 1].append(t)
    return out
