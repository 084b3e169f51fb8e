"""Sampled structures: decoding kernel traces into trees, plus serialisation.

All traversals are iterative so structures of size 10^5 and beyond never hit
the interpreter's recursion limit.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .tables import CLASS, CYCLE, MSET, MSET1, SEQ, BranchTable

# node kinds
CONSTRUCTOR, SEQUENCE, MULTISET, CYCLIC, ATOM = "con", "seq", "mset", "cycle", "atom"


@dataclass(eq=False)
class Node:
    tag: str
    kind: str = CONSTRUCTOR
    children: list = field(default_factory=list)
    alt: int = -1          # alternative id for constructor and colour nodes
    repeat: int = 1        # cycles: the pattern in ``children`` repeats this often

    def expanded(self) -> list:
        return self.children * self.repeat if self.kind == CYCLIC else self.children


@dataclass
class Structure:
    root: Node
    counts: np.ndarray
    names: list
    attempts: int = 1

    @property
    def size(self) -> int:
        return int(self.counts[0])

    def composition(self) -> dict:
        return {n: int(c) for n, c in zip(self.names, self.counts)}

    def key(self) -> str:
        return canonical_key(self.root)

    def dumps(self) -> str:
        """One ND-JSON line: size, composition and the tree."""
        head = json.dumps({"size": self.size, "counts": self.composition()}, separators=(",", ":"))
        return head[:-1] + ',"tree":' + to_json_text(self.root) + "}"

    def text(self) -> str:
        return to_text(self.root)


def decode(table: BranchTable, trace, start: int = 0, stop: Optional[int] = None,
           root: Optional[int] = None) -> Node:
    """Rebuild the tree encoded by ``trace[start:stop]``, generated from state ``root``."""
    K = table.kernel
    trace = np.asarray(trace)
    pos = start
    top: list = []
    stack = [(CLASS, table.root if root is None else root, top, 1)]
    while stack:
        kind, ref, parent, copies = stack.pop()
        if kind == CLASS:
            k = int(trace[pos])
            pos += 1
            a = int(K.sa_alt[k])
            node = Node(table.alt_tag(a), CONSTRUCTOR, alt=a)
            parent.extend([node] * copies)
            first, n_items = int(K.sa_item_start[k]), int(K.sa_item_len[k])
            for it in range(first + n_items - 1, first - 1, -1):
                stack.append((int(K.item_kind[it]), int(K.item_ref[it]), node.children, 1))
        elif kind == SEQ:
            length = int(trace[pos])
            pos += 1
            node = Node("Seq", SEQUENCE)
            parent.extend([node] * copies)
            child = int(K.seq_child[ref])
            stack.extend([(CLASS, child, node.children, 1)] * length)
        elif kind == MSET:
            big = int(trace[pos])
            groups = [int(q) for q in trace[pos + 1: pos + 1 + big]]
            pos += 1 + big
            node = Node("MSet", MULTISET)
            parent.extend([node] * copies)
            off = int(K.ms_off[ref])
            for i in range(big, 0, -1):
                child = int(K.ms_child[off + i - 1])
                stack.extend([(CLASS, child, node.children, i)] * groups[i - 1])
        elif kind == CYCLE:
            k, length = int(trace[pos]), int(trace[pos + 1])
            pos += 2
            node = Node("Cycle", CYCLIC, repeat=k)
            parent.extend([node] * copies)
            off = int(K.cy_off[ref])
            stack.extend([(CLASS, int(K.cy_child[off + k - 1]), node.children, 1)] * length)
        elif kind == MSET1:
            n_colours = int(trace[pos])
            pos += 1
            node = Node("MSet1", MULTISET)
            parent.extend([node] * copies)
            coff = int(K.m1_coff[ref])
            for _ in range(n_colours):
                colour, count = int(trace[pos]), int(trace[pos + 1])
                pos += 2
                a = int(K.m1_calt[coff + colour])
                node.children.extend([Node(table.alt_tag(a), ATOM, alt=a)] * count)
        else:
            raise ValueError(f"corrupt trace: unknown task kind {kind}")
    if stop is not None and pos != stop:
        raise ValueError(f"trace length mismatch: consumed {pos - start}, expected {stop - start}")
    return top[0]


def tally(table: BranchTable, root: Node) -> np.ndarray:
    """Size and marker counts recomputed from the tree itself."""
    K = table.kernel
    n_marks = len(table.markers)
    out = np.zeros(1 + n_marks, dtype=np.int64)
    stack = [(root, 1)]
    while stack:
        node, mult = stack.pop()
        if node.alt >= 0:
            out[0] += K.alt_weight[node.alt] * mult
            out[1:] += K.alt_markers[node.alt, :n_marks] * mult
        if node.kind == CYCLIC:
            stack.extend((c, mult * node.repeat) for c in node.children)
        else:
            stack.extend((c, mult) for c in node.children)
    return out


def _walk_postorder(root: Node):
    """Yield nodes children-first without recursion (shared nodes visited once)."""
    seen = set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            yield node
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        stack.extend((c, False) for c in node.children if id(c) not in seen)


def canonical_key(root: Node) -> str:
    """A string equal for two trees iff they are the same unlabelled object.

    Multiset children are sorted, cycles take their least rotation.
    """
    keys: dict = {}
    for node in _walk_postorder(root):
        parts = [keys[id(c)] for c in node.children]
        if node.kind == MULTISET:
            parts.sort()
        elif node.kind == CYCLIC:
            parts = parts * node.repeat
            if parts:
                parts = min(parts[i:] + parts[:i] for i in range(len(parts)))
        keys[id(node)] = node.tag + ("(" + ",".join(parts) + ")" if parts else "")
    return keys[id(root)]


def _emit(root: Node, open_, sep, close, leaf) -> str:
    """Serialise without recursion; ``open_/leaf`` map a node to text."""
    pieces = []
    stack: list = [root]
    while stack:
        item = stack.pop()
        if isinstance(item, str):
            pieces.append(item)
            continue
        kids = item.expanded()
        if not kids:
            pieces.append(leaf(item))
            continue
        pieces.append(open_(item))
        stack.append(close)
        for i in range(len(kids) - 1, -1, -1):
            stack.append(kids[i])
            if i:
                stack.append(sep)
    return "".join(pieces)


def to_json_text(root: Node) -> str:
    """``{"tag": ..., "children": [...]}`` with cycles expanded."""
    return _emit(
        root,
        lambda n: '{"tag":' + json.dumps(n.tag) + ',"children":[',
        ",",
        "]}",
        lambda n: '{"tag":' + json.dumps(n.tag) + ',"children":[]}',
    )


def to_text(root: Node) -> str:
    """Compact parenthesised form, e.g. ``Binary(Leaf Unary(Leaf))``."""
    return _emit(root, lambda n: n.tag + "(", " ", ")", lambda n: n.tag)
