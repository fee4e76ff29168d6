"""Guttman R-tree over 3D boxes with quadratic node splitting.

Boxes are plain 6-tuples ``(x0, y0, z0, x1, y1, z1)``.  Every node whose
box intersects a search query counts as one visit; together with the
byte model (``NODE_HEADER_BYTES + NODE_ENTRY_BYTES * entries``) this is
the memory-traffic proxy the metrics module consumes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Callable, Iterable

NODE_HEADER_BYTES = 16
NODE_ENTRY_BYTES = 28

Box = tuple  # (x0, y0, z0, x1, y1, z1)


class RTreeError(Exception):
    pass


class DuplicateIdError(RTreeError, KeyError):
    pass


class UnknownIdError(RTreeError, KeyError):
    pass


class RTreeInvariantError(RTreeError, AssertionError):
    pass


@dataclass
class RTreeStats:
    nodes_visited: int = 0
    leaf_hits: int = 0
    inserts: int = 0
    removals: int = 0
    searches: int = 0
    splits: int = 0
    bytes_touched: int = 0

    def snapshot(self) -> dict[str, int]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def reset(self) -> None:
        for f in fields(self):
            setattr(self, f.name, 0)


class _Node:
    __slots__ = ("leaf", "boxes", "children", "parent", "nid", "box")

    def __init__(self, leaf: bool, nid: int):
        self.leaf = leaf
        self.boxes: list[Box] = []
        self.children: list = []
        self.parent: _Node | None = None
        self.nid = nid
        self.box: Box | None = None

    def recompute(self) -> None:
        bs = self.boxes
        if not bs:
            self.box = None
            return
        x0, y0, z0, x1, y1, z1 = bs[0]
        for b in bs[1:]:
            if b[0] < x0:
                x0 = b[0]
            if b[1] < y0:
                y0 = b[1]
            if b[2] < z0:
                z0 = b[2]
            if b[3] > x1:
                x1 = b[3]
            if b[4] > y1:
                y1 = b[4]
            if b[5] > z1:
                z1 = b[5]
        self.box = (x0, y0, z0, x1, y1, z1)


def _union(a: Box, b: Box) -> Box:
    return (a[0] if a[0] < b[0] else b[0], a[1] if a[1] < b[1] else b[1],
            a[2] if a[2] < b[2] else b[2], a[3] if a[3] > b[3] else b[3],
            a[4] if a[4] > b[4] else b[4], a[5] if a[5] > b[5] else b[5])


def _volume(b: Box) -> float:
    return (b[3] - b[0]) * (b[4] - b[1]) * (b[5] - b[2])


def _enlargement(a: Box, b: Box) -> float:
    return _volume(_union(a, b)) - _volume(a)


def intersects(a: Box, b: Box) -> bool:
    return (a[0] <= b[3] and b[0] <= a[3] and a[1] <= b[4] and b[1] <= a[4]
            and a[2] <= b[5] and b[2] <= a[5])


class RTree:
    def __init__(self, node_max: int = 8):
        if node_max < 3:
            raise ValueError("node_max must be at least 3")
        self.node_max = node_max
        self.node_min = math.ceil(node_max / 2)
        self.stats = RTreeStats()
        self.on_visit: Callable[[int, int], None] | None = None
        self._next_nid = 0
        self.root = self._new_node(leaf=True)
        self.height = 1
        self._leaf_of: dict[int, _Node] = {}
        self._box_of: dict[int, Box] = {}

    # -- bookkeeping ---------------------------------------------------------

    def _new_node(self, leaf: bool) -> _Node:
        n = _Node(leaf, self._next_nid)
        self._next_nid += 1
        return n

    def __len__(self) -> int:
        return len(self._box_of)

    def __contains__(self, ident: int) -> bool:
        return ident in self._box_of

    def box_of(self, ident: int) -> Box:
        return self._box_of[ident]

    def ids(self) -> list[int]:
        return sorted(self._box_of)

    @property
    def bounds(self) -> Box | None:
        return self.root.box

    @staticmethod
    def node_bytes(n_entries: int) -> int:
        return NODE_HEADER_BYTES + NODE_ENTRY_BYTES * n_entries

    @property
    def node_stride(self) -> int:
        return self.node_bytes(self.node_max + 1)

    def _touch(self, node: _Node) -> None:
        nb = NODE_HEADER_BYTES + NODE_ENTRY_BYTES * len(node.boxes)
        st = self.stats
        st.nodes_visited += 1
        st.bytes_touched += nb
        if self.on_visit is not None:
            self.on_visit(node.nid, nb)

    def iter_nodes(self) -> Iterable[tuple[_Node, int]]:
        stack = [(self.root, 1)]
        while stack:
            node, depth = stack.pop()
            yield node, depth
            if not node.leaf:
                stack.extend((c, depth + 1) for c in reversed(node.children))

    def node_count(self) -> int:
        return sum(1 for _ in self.iter_nodes())

    # -- insertion -------------------------------------------------------------

    def insert(self, ident: int, box) -> None:
        if ident in self._box_of:
            raise DuplicateIdError(f"id {ident} already present")
        box = tuple(float(v) for v in box)
        if len(box) != 6 or any(box[i] > box[i + 3] for i in range(3)):
            raise ValueError(f"invalid box {box}")
        self.stats.inserts += 1
        self._insert_leaf_entry(ident, box)

    def _insert_leaf_entry(self, ident: int, box: Box) -> None:
        self._box_of[ident] = box
        node = self.root
        self._touch(node)
        while not node.leaf:
            best = 0
            best_enl = best_vol = math.inf
            for i, cb in enumerate(node.boxes):
                vol = _volume(cb)
                enl = _volume(_union(cb, box)) - vol
                if enl < best_enl or (enl == best_enl and vol < best_vol):
                    best, best_enl, best_vol = i, enl, vol
            node = node.children[best]
            self._touch(node)
        node.boxes.append(box)
        node.children.append(ident)
        self._leaf_of[ident] = node
        self._adjust(node)

    def _adjust(self, node: _Node) -> None:
        """Fix boxes from ``node`` to the root, splitting overfull nodes."""
        while True:
            sibling = self._split(node) if len(node.boxes) > self.node_max else None
            node.recompute()
            parent = node.parent
            if parent is None:
                if sibling is not None:
                    root = self._new_node(leaf=False)
                    for ch in (node, sibling):
                        root.boxes.append(ch.box)
                        root.children.append(ch)
                        ch.parent = root
                    root.recompute()
                    self.root = root
                    self.height += 1
                return
            idx = parent.children.index(node)
            parent.boxes[idx] = node.box
            if sibling is not None:
                parent.boxes.append(sibling.box)
                parent.children.append(sibling)
                sibling.parent = parent
            node = parent

    def _pick_seeds(self, boxes: list[Box]) -> tuple[int, int]:
        n = len(boxes)
        best = None
        best_sep = -math.inf
        for d in range(3):
            lo_all = min(b[d] for b in boxes)
            hi_all = max(b[d + 3] for b in boxes)
            width = hi_all - lo_all
            # entry with the highest low side and the one with the lowest high side
            hl = max(range(n), key=lambda i: (boxes[i][d], -i))
            lh = min(range(n), key=lambda i: (boxes[i][d + 3], i))
            if hl == lh:
                others = [i for i in range(n) if i != lh]
                hl = max(others, key=lambda i: (boxes[i][d], -i))
            sep = (boxes[hl][d] - boxes[lh][d + 3]) / width if width > 0 else 0.0
            if sep > best_sep:
                best_sep = sep
                best = (min(lh, hl), max(lh, hl))
        return best

    def _split(self, node: _Node) -> _Node:
        self.stats.splits += 1
        boxes = node.boxes
        children = node.children
        s1, s2 = self._pick_seeds(boxes)
        g1, g2 = [s1], [s2]
        b1, b2 = boxes[s1], boxes[s2]
        rest = [i for i in range(len(boxes)) if i not in (s1, s2)]
        m = self.node_min
        while rest:
            if len(g1) + len(rest) == m:
                g1.extend(rest)
                break
            if len(g2) + len(rest) == m:
                g2.extend(rest)
                break
            pick = 0
            pick_diff = -1.0
            for j, i in enumerate(rest):
                diff = abs(_enlargement(b1, boxes[i]) - _enlargement(b2, boxes[i]))
                if diff > pick_diff:
                    pick, pick_diff = j, diff
            i = rest.pop(pick)
            e1 = _enlargement(b1, boxes[i])
            e2 = _enlargement(b2, boxes[i])
            if e1 < e2 or (e1 == e2 and (_volume(b1), len(g1)) <= (_volume(b2), len(g2))):
                g1.append(i)
                b1 = _union(b1, boxes[i])
            else:
                g2.append(i)
                b2 = _union(b2, boxes[i])
        g1.sort()
        g2.sort()
        sib = self._new_node(node.leaf)
        node.boxes = [boxes[i] for i in g1]
        node.children = [children[i] for i in g1]
        sib.boxes = [boxes[i] for i in g2]
        sib.children = [children[i] for i in g2]
        if node.leaf:
            for ident in sib.children:
                self._leaf_of[ident] = sib
        else:
            for ch in sib.children:
                ch.parent = sib
        sib.recompute()
        self._touch(sib)
        return sib

    # -- removal ---------------------------------------------------------------

    def remove(self, ident: int) -> None:
        leaf = self._leaf_of.pop(ident, None)
        if leaf is None:
            raise UnknownIdError(f"id {ident} not present")
        del self._box_of[ident]
        self.stats.removals += 1
        idx = leaf.children.index(ident)
        del leaf.children[idx]
        del leaf.boxes[idx]
        orphans: list[tuple[int, Box]] = []
        node = leaf
        while node.parent is not None:
            self._touch(node)
            parent = node.parent
            pidx = parent.children.index(node)
            if len(node.boxes) < self.node_min:
                del parent.children[pidx]
                del parent.boxes[pidx]
                self._collect(node, orphans)
            else:
                node.recompute()
                parent.boxes[pidx] = node.box
            node = parent
        self._touch(node)
        node.recompute()
        while not self.root.leaf and len(self.root.children) == 1:
            self.root = self.root.children[0]
            self.root.parent = None
            self.height -= 1
        if not self.root.leaf and not self.root.children:
            self.root = self._new_node(leaf=True)
            self.height = 1
        for oid, obox in orphans:
            del self._leaf_of[oid]
            self._insert_leaf_entry(oid, obox)

    def _collect(self, node: _Node, out: list) -> None:
        if node.leaf:
            out.extend((i, b) for i, b in zip(node.children, node.boxes))
        else:
            for ch in node.children:
                self._collect(ch, out)

    # -- search ------------------------------------------------------------------

    def search(self, query) -> set[int]:
        return set(self.search_list(query))

    def search_list(self, query) -> list[int]:
        q0, q1, q2, q3, q4, q5 = (float(v) for v in query)
        st = self.stats
        st.searches += 1
        out: list[int] = []
        touch = self._touch
        root = self.root
        touch(root)
        stack = [root]
        while stack:
            node = stack.pop()
            if node.leaf:
                for b, ident in zip(node.boxes, node.children):
                    if q0 <= b[3] and b[0] <= q3 and q1 <= b[4] and b[1] <= q4 and q2 <= b[5] and b[2] <= q5:
                        out.append(ident)
            else:
                for b, child in zip(node.boxes, node.children):
                    if q0 <= b[3] and b[0] <= q3 and q1 <= b[4] and b[1] <= q4 and q2 <= b[5] and b[2] <= q5:
                        touch(child)
                        stack.append(child)
        st.leaf_hits += len(out)
        return out

    def visits_for(self, queries) -> tuple[list[set[int]], int]:
        before = self.stats.nodes_visited
        results = [self.search(q) for q in queries]
        return results, self.stats.nodes_visited - before

    # -- audit -------------------------------------------------------------------

    def audit(self) -> None:
        """Raise :class:`RTreeInvariantError` on any structural violation."""
        leaf_depths = set()
        seen: dict[int, _Node] = {}

        def fail(msg: str):
            raise RTreeInvariantError(msg)

        if self.root.parent is not None:
            fail("root has a parent")
        for node, depth in self.iter_nodes():
            n = len(node.boxes)
            if n != len(node.children):
                fail(f"node {node.nid}: box/child count mismatch")
            if n > self.node_max:
                fail(f"node {node.nid}: overfull ({n})")
            if node is self.root:
                if not node.leaf and n < 2:
                    fail("internal root with fewer than 2 children")
            elif n < self.node_min:
                fail(f"node {node.nid}: underfull ({n})")
            tight = _Node(node.leaf, -1)
            tight.boxes = node.boxes
            tight.recompute()
            if tight.box != node.box:
                fail(f"node {node.nid}: stored box {node.box} is not tight ({tight.box})")
            if node.leaf:
                leaf_depths.add(depth)
                for b, ident in zip(node.boxes, node.children):
                    if ident in seen:
                        fail(f"id {ident} stored twice")
                    seen[ident] = node
                    if self._box_of.get(ident) != b:
                        fail(f"id {ident}: leaf box differs from record")
                    if self._leaf_of.get(ident) is not node:
                        fail(f"id {ident}: leaf pointer stale")
            else:
                for b, ch in zip(node.boxes, node.children):
                    if ch.parent is not node:
                        fail(f"node {ch.nid}: parent pointer stale")
                    if ch.box != b:
                        fail(f"node {node.nid}: child entry box differs from child's box")
        if len(leaf_depths) > 1:
            fail(f"leaves at unequal depths {sorted(leaf_depths)}")
        if leaf_depths and leaf_depths != {self.height}:
            fail(f"height {self.height} but leaves at depth {leaf_depths}")
        if set(seen) != set(self._box_of):
            fail("entry records disagree with stored leaves")
