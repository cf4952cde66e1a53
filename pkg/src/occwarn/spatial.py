"""Dynamic R-tree over axis-aligned boxes (Guttman, quadratic split)."""

from __future__ import annotations

from typing import Hashable, Iterator

BBox = tuple[float, float, float, float]


def _area(b: BBox) -> float:
    return (b[2] - b[0]) * (b[3] - b[1])


def _merge(a: BBox, b: BBox) -> BBox:
    return (min(a[0], b[0]), min(a[1], b[1]), max(a[2], b[2]), max(a[3], b[3]))


def _overlaps(a: BBox, b: BBox) -> bool:
    return a[0] <= b[2] and b[0] <= a[2] and a[1] <= b[3] and b[1] <= a[3]


def _covers(a: BBox, b: BBox) -> bool:
    return a[0] <= b[0] and a[1] <= b[1] and a[2] >= b[2] and a[3] >= b[3]


class _Node:
    __slots__ = ("leaf", "entries", "parent")

    def __init__(self, leaf: bool, parent=None):
        self.leaf = leaf
        # leaf: [(bbox, key)], inner: [(bbox, _Node)]
        self.entries: list = []
        self.parent = parent

    def bbox(self) -> BBox:
        b = self.entries[0][0]
        for e in self.entries[1:]:
            b = _merge(b, e[0])
        return b


class RTree:
    def __init__(self, max_entries: int = 8):
        if max_entries < 4:
            raise ValueError("max_entries must be >= 4")
        self.max_entries = max_entries
        self.min_entries = max(2, max_entries // 3)
        self._root = _Node(leaf=True)
        self._boxes: dict[Hashable, BBox] = {}

    def __len__(self):
        return len(self._boxes)

    def __contains__(self, key):
        return key in self._boxes

    def keys(self) -> Iterator[Hashable]:
        return iter(self._boxes)

    def bbox_of(self, key) -> BBox:
        return self._boxes[key]

    def insert(self, key: Hashable, bbox: BBox) -> None:
        if key in self._boxes:
            raise KeyError(f"duplicate key {key!r}")
        bbox = tuple(float(v) for v in bbox)
        if bbox[0] > bbox[2] or bbox[1] > bbox[3]:
            raise ValueError(f"malformed bbox {bbox}")
        self._boxes[key] = bbox
        self._insert_entry((bbox, key), leaf_level=True)

    def _insert_entry(self, entry, leaf_level: bool, level_node_height: int = 0):
        node = self._choose(entry[0], level_node_height if not leaf_level else 0)
        node.entries.append(entry)
        if not node.leaf:
            entry[1].parent = node
        self._adjust(node)

    def _height(self, node: _Node) -> int:
        h = 0
        while not node.leaf:
            node = node.entries[0][1]
            h += 1
        return h

    def _choose(self, bbox: BBox, height: int) -> _Node:
        """Descend to the node at ``height`` above the leaves with least enlargement."""
        node = self._root
        while self._height(node) > height:
            best = None
            for b, child in node.entries:
                m = _merge(b, bbox)
                key = (_area(m) - _area(b), _area(b))
                if best is None or key < best[0]:
                    best = (key, child)
            node = best[1]
        return node

    def _adjust(self, node: _Node) -> None:
        while True:
            if len(node.entries) > self.max_entries:
                sibling = self._split(node)
                if node.parent is None:
                    root = _Node(leaf=False)
                    root.entries = [(node.bbox(), node), (sibling.bbox(), sibling)]
                    node.parent = sibling.parent = root
                    self._root = root
                    return
                parent = node.parent
                sibling.parent = parent
                parent.entries.append((sibling.bbox(), sibling))
            parent = node.parent
            if parent is None:
                return
            for i, (b, child) in enumerate(parent.entries):
                if child is node:
                    parent.entries[i] = (node.bbox(), node)
                    break
            node = parent

    def _split(self, node: _Node) -> _Node:
        entries = node.entries
        # quadratic seed pick: the pair wasting the most area
        worst, seeds = -1.0, (0, 1)
        for i in range(len(entries)):
            for j in range(i + 1, len(entries)):
                d = _area(_merge(entries[i][0], entries[j][0])) - _area(entries[i][0]) - _area(entries[j][0])
                if d > worst:
                    worst, seeds = d, (i, j)
        a, b = [entries[seeds[0]]], [entries[seeds[1]]]
        ba, bb = a[0][0], b[0][0]
        rest = [e for k, e in enumerate(entries) if k not in seeds]
        while rest:
            if len(a) + len(rest) <= self.min_entries:
                a.extend(rest)
                break
            if len(b) + len(rest) <= self.min_entries:
                b.extend(rest)
                break
            pick, best_diff = 0, -1.0
            for k, e in enumerate(rest):
                da = _area(_merge(ba, e[0])) - _area(ba)
                db = _area(_merge(bb, e[0])) - _area(bb)
                if abs(da - db) > best_diff:
                    pick, best_diff = k, abs(da - db)
            e = rest.pop(pick)
            da = _area(_merge(ba, e[0])) - _area(ba)
            db = _area(_merge(bb, e[0])) - _area(bb)
            if (da, _area(ba), len(a)) <= (db, _area(bb), len(b)):
                a.append(e)
                ba = _merge(ba, e[0])
            else:
                b.append(e)
                bb = _merge(bb, e[0])
        node.entries = a
        sibling = _Node(leaf=node.leaf)
        sibling.entries = b
        if not node.leaf:
            for _, child in a:
                child.parent = node
            for _, child in b:
                child.parent = sibling
        return sibling

    def search(self, bbox: BBox) -> list:
        """Keys whose boxes overlap ``bbox`` (closed boxes)."""
        out = []
        if not self._boxes:
            return out
        stack = [self._root]
        while stack:
            node = stack.pop()
            for b, item in node.entries:
                if _overlaps(b, bbox):
                    if node.leaf:
                        out.append(item)
                    else:
                        stack.append(item)
        return out

    def remove(self, key: Hashable) -> None:
        bbox = self._boxes.pop(key)
        leaf = self._find_leaf(self._root, key, bbox)
        if leaf is None:  # pragma: no cover - index corruption
            raise RuntimeError(f"key {key!r} missing from tree")
        leaf.entries = [e for e in leaf.entries if e[1] != key]
        self._condense(leaf)

    def _find_leaf(self, node: _Node, key, bbox: BBox):
        if node.leaf:
            return node if any(e[1] == key for e in node.entries) else None
        for b, child in node.entries:
            if _covers(b, bbox):
                hit = self._find_leaf(child, key, bbox)
                if hit is not None:
                    return hit
        return None

    def _condense(self, node: _Node) -> None:
        orphans: list[tuple[int, tuple]] = []
        while node.parent is not None:
            parent = node.parent
            if len(node.entries) < self.min_entries:
                parent.entries = [e for e in parent.entries if e[1] is not node]
                h = self._height(node) if node.entries else 0
                orphans.extend((h, e) for e in node.entries)
            else:
                for i, (b, child) in enumerate(parent.entries):
                    if child is node:
                        parent.entries[i] = (node.bbox(), node)
            node = parent
        root = self._root
        while not root.leaf and len(root.entries) == 1:
            root = root.entries[0][1]
            root.parent = None
        if not root.leaf and not root.entries:
            root = _Node(leaf=True)
        self._root = root
        for h, entry in orphans:
            if h == 0:
                self._insert_entry(entry, leaf_level=True)
            else:
                self._reinsert_subtree(entry[1])

    def _reinsert_subtree(self, node: _Node) -> None:
        # orphaned inner subtrees are flattened back to leaf entries
        stack = [node]
        while stack:
            n = stack.pop()
            if n.leaf:
                for e in n.entries:
                    self._insert_entry(e, leaf_level=True)
            else:
                stack.extend(child for _, child in n.entries)

    def depth(self) -> int:
        return self._height(self._root)
