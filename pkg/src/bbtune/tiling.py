"""Rational specifications of strip tilings built from a transfer automaton.

A strip of width ``W`` is filled row by row. A tile has a horizontal base of
``w`` cells and an optional set of cells directly above the base (the top
mask). Placing tiles always at the leftmost empty cell of the lowest
unfinished row makes the decomposition of a tiling unique; the automaton
state is the occupancy of that row and of the row above it. Every path from
the empty profile back to itself spells one tiling of a ``W x h`` rectangle.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Iterable, Optional

from .grammar import parse
from .grammar.spec import SpecError

MAX_WIDTH = 9


class TileTooWide(SpecError):
    pass


class EmptyTileSet(SpecError):
    pass


@dataclass(frozen=True)
class Tile:
    width: int
    top: int = 0         # bit i set: a cell above base column i
    name: str = ""

    def __post_init__(self):
        if self.width < 1:
            raise ValueError("tile width must be at least 1")
        if self.top >> self.width:
            raise ValueError(f"top mask {self.top:b} wider than the base")

    @property
    def cells(self) -> int:
        return self.width + bin(self.top).count("1")


class TileSet(list):
    """Tiles with distinct colour names (``T0``, ``T1``, ... when unnamed)."""

    def __init__(self, tiles: Iterable = ()):
        named = []
        for i, t in enumerate(tiles):
            t = t if isinstance(t, Tile) else Tile(*t)
            named.append(t if t.name else Tile(t.width, t.top, f"T{i}"))
        if len({t.name for t in named}) != len(named):
            raise ValueError("tile colour names must be distinct")
        super().__init__(named)

    @classmethod
    def family(cls, max_width: int, top_cells: Optional[int] = None) -> "TileSet":
        """Every base width up to ``max_width`` with every top subset (optionally
        only those with at most ``top_cells`` top cells)."""
        tiles = []
        for w in range(1, max_width + 1):
            for top in range(1 << w):
                if top_cells is None or bin(top).count("1") <= top_cells:
                    tiles.append(Tile(w, top, f"W{w}M{top}"))
        return cls(tiles)


def _placements(tiles, W, low, high):
    """Successor profiles after placing each tile at the first empty cell of ``low``."""
    full = (1 << W) - 1
    col = 0
    while low >> col & 1:
        col += 1
    for t in tiles:
        if col + t.width > W:
            continue
        base = ((1 << t.width) - 1) << col
        top = t.top << col
        if low & base or high & top:
            continue
        nl, nh = low | base, high | top
        while nl == full:
            nl, nh = nh, 0
        yield t, (nl, nh)


def transfer_automaton(tiles: TileSet, W: int) -> dict:
    """Map each live profile to its ``(tile, next profile)`` transitions.

    Profiles unreachable from the empty one, or unable to return to it, are
    pruned.
    """
    if not tiles:
        raise EmptyTileSet("no tiles given")
    if not 1 <= W <= MAX_WIDTH:
        raise ValueError(f"strip width must lie in 1..{MAX_WIDTH}")
    for t in tiles:
        if t.width > W:
            raise TileTooWide(f"tile {t.name} of width {t.width} exceeds the strip width {W}")
    start = (0, 0)
    edges, pending = {}, [start]
    while pending:
        s = pending.pop()
        if s in edges:
            continue
        edges[s] = list(_placements(tiles, W, *s))
        pending.extend(n for _, n in edges[s] if n not in edges)
    reverse: dict = {s: set() for s in edges}
    for s, out in edges.items():
        for _, n in out:
            reverse[n].add(s)
    live, pending = set(), [start]
    while pending:
        s = pending.pop()
        if s not in live:
            live.add(s)
            pending.extend(reverse[s])
    if len(live) == 1 and not any(n == start for _, n in edges[start]):
        raise EmptyTileSet("the tiles cannot fill any rectangle of this width")
    return {s: [(t, n) for t, n in edges[s] if n in live] for s in edges if s in live}


def build_tiling_spec(tiles, W: int, freqs: Optional[dict] = None) -> str:
    """DSL text of the rational specification of ``W``-wide strip tilings.

    Each transition is a constructor named after the tile, weighted by the
    number of cells it covers and carrying its colour marker once per cell,
    so marker counts are areas. ``freqs`` maps colour names to target area
    shares. The empty profile ``S0`` is both start and final state.
    """
    tiles = TileSet(tiles)
    auto = transfer_automaton(tiles, W)
    order = sorted(auto, key=lambda s: (s != (0, 0), s))
    label = {s: f"S{i}" for i, s in enumerate(order)}
    used = sorted({t.name for out in auto.values() for t, _ in out})
    freqs = freqs or {}
    lines = [f"-- {len(tiles)} tiles on a strip of width {W}: {len(auto)} profiles"]
    lines.append("@marker " + " ".join(f"{c}{_freq(freqs.get(c))}" for c in used) + ".")
    for s in order:
        alts = [f"{t.name}_ ({t.cells}) " + " ".join([t.name] * t.cells) + f" {label[n]}"
                for t, n in auto[s]]
        if s == (0, 0):
            alts.append("End (0)")
        lines.append(f"{label[s]} = " + "\n    | ".join(alts) + ".")
    return "\n".join(lines) + "\n"


def _freq(f):
    return "" if f is None else f" [{f}]"


def tiling_ast(tiles, W: int, freqs: Optional[dict] = None):
    return parse(build_tiling_spec(tiles, W, freqs))


def count_tilings(tiles, W: int, height: int) -> int:
    """Tilings of a ``W x height`` rectangle by exhaustive search on the grid."""
    tiles = TileSet(tiles)
    grid = [[False] * W for _ in range(height)]

    def first_empty():
        for r in range(height):
            for c in range(W):
                if not grid[r][c]:
                    return r, c
        return None

    def cells(t, r, c):
        out = [(r, c + i) for i in range(t.width)]
        out += [(r + 1, c + i) for i in range(t.width) if t.top >> i & 1]
        return out

    def go():
        spot = first_empty()
        if spot is None:
            return 1
        total = 0
        for t in tiles:
            cs = cells(t, *spot)
            if all(r < height and c < W and not grid[r][c] for r, c in cs):
                for r, c in cs:
                    grid[r][c] = True
                total += go()
                for r, c in cs:
                    grid[r][c] = False
        return total

    return go()


def random_automaton_spec(n_states: int, n_markers: int, out_degree: int = 3,
                          seed: int = 0) -> str:
    """A random strongly connected rational specification.

    States form a Hamiltonian cycle plus ``out_degree - 1`` random extra
    transitions each; every transition carries one atom and one of
    ``n_markers`` colour markers, and ``S0`` may stop.
    """
    rng = random.Random(seed)
    lines = ["@marker " + " ".join(f"M{m}" for m in range(n_markers)) + "."]
    for s in range(n_states):
        targets = [(s + 1) % n_states] + [rng.randrange(n_states) for _ in range(out_degree - 1)]
        alts = [f"A{s}_{i} M{rng.randrange(n_markers)} S{t}" for i, t in enumerate(targets)]
        if s == 0:
            alts.append("Stop (0)")
        lines.append(f"S{s} = " + " | ".join(alts) + ".")
    return "\n".join(lines) + "\n"


__all__ = [
    "EmptyTileSet", "Tile", "TileSet", "TileTooWide", "build_tiling_spec", "count_tilings",
    "random_automaton_spec", "tiling_ast", "transfer_automaton",
]
