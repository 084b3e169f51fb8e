import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bbtune.grammar import (
    classify,
    count_series,
    dependency_graph,
    strongly_connected_components,
    well_founded,
)
from bbtune.tiling import (
    EmptyTileSet,
    Tile,
    TileSet,
    TileTooWide,
    count_tilings,
    random_automaton_spec,
    tiling_ast,
    transfer_automaton,
)
from bbtune.grammar import parse

DOMINOES = [Tile(2, 0, "H"), Tile(1, 1, "V")]


def rectangle_counts(tiles, W, max_cells):
    series = count_series(tiling_ast(tiles, W), max_cells)
    return [series[W * h] for h in range(max_cells // W + 1)]


def test_single_cell_is_sequence():
    ast = tiling_ast([Tile(1)], 1)
    assert len(ast.classes) == 1
    assert count_series(ast, 8) == [1] * 9


def test_dominoes_follow_fibonacci():
    assert rectangle_counts(DOMINOES, 2, 10) == [1, 1, 2, 3, 5, 8]
    assert [count_tilings(DOMINOES, 2, h) for h in range(6)] == [1, 1, 2, 3, 5, 8]


@st.composite
def small_tilesets(draw):
    W = draw(st.integers(1, 3))
    n = draw(st.integers(1, 4))
    tiles = []
    for _ in range(n):
        w = draw(st.integers(1, W))
        tiles.append((w, draw(st.integers(0, (1 << w) - 1))))
    tiles = list(dict.fromkeys(tiles))
    if (1, 0) not in tiles and draw(st.booleans()):
        tiles.append((1, 0))
    return W, [Tile(w, top, f"T{i}") for i, (w, top) in enumerate(tiles)]


@given(small_tilesets())
@settings(max_examples=60, deadline=None)
def test_counts_match_brute_force(case):
    W, tiles = case
    try:
        ast = tiling_ast(tiles, W)
    except EmptyTileSet:
        assert all(count_tilings(tiles, W, h) == 0 for h in range(1, 12 // W + 1))
        return
    series = count_series(ast, 12)
    for cells in range(13):
        expected = count_tilings(tiles, W, cells // W) if cells % W == 0 else 0
        assert series[cells] == expected


@given(small_tilesets())
@settings(max_examples=40, deadline=None)
def test_output_is_rational_well_founded_and_connected(case):
    W, tiles = case
    try:
        ast = tiling_ast(tiles, W)
    except EmptyTileSet:
        return
    well_founded(ast)
    assert classify(ast) == "rational"
    assert strongly_connected_components(dependency_graph(ast)).strongly_connected


def test_wide_strip_has_many_states():
    auto = transfer_automaton(TileSet.family(4), 7)
    assert 10**2 <= len(auto) <= 10**4
    assert sum(len(v) for v in auto.values()) > 1000


def test_errors():
    with pytest.raises(TileTooWide):
        transfer_automaton(TileSet([Tile(3)]), 2)
    with pytest.raises(EmptyTileSet):
        transfer_automaton(TileSet([]), 2)
    with pytest.raises(EmptyTileSet):
        transfer_automaton(TileSet([Tile(2)]), 3)
    with pytest.raises(ValueError):
        Tile(2, 0b100)


def test_frequencies_are_written_as_targets():
    ast = tiling_ast(DOMINOES, 2, {"H": 0.25})
    assert ast.targets() == {"H": 0.25}


def test_random_automaton_is_strongly_connected():
    ast = parse(random_automaton_spec(50, 7, seed=1))
    assert len(ast.classes) == 50 and len(ast.markers) == 7
    assert classify(ast) == "rational"
    assert strongly_connected_components(dependency_graph(ast)).strongly_connected
