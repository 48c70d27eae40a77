import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from artistic.gdsii import GdsUnits, LayerKey, parse_library, write_library
from artistic.geom import FlatPolygon, OccupancyGrid, build_occupancy
from artistic.meerkat import (SHAPES, ArtError, ArtPolyomino, ArtRules, InkGrid, check_drc,
                              clipped_area, export_art_gds, export_svg, generate_art,
                              image_to_bw, map_logo_to_grid, min_width, shape_polygon)

SVG = "{http://www.w3.org/2000/svg}"


def grid_of(ink, rules, origin=(0, 0)):
    ink = np.asarray(ink, dtype=bool)
    rows, cols = ink.shape
    p = rules.pitch
    return InkGrid(cols, rows, ink, (origin[0], origin[1], origin[0] + cols * p,
                                     origin[1] + rows * p), p)


def free_occ(grid, occupied=None):
    occ = np.zeros((grid.rows, grid.cols), bool) if occupied is None else occupied
    return OccupancyGrid(grid.origin, grid.pitch, grid.cols, grid.rows, occ)


def mask_area(shapes, extent):
    """Brute-force drawn area per dbu cell (rectilinear integer polygons)."""
    mask = np.zeros((extent, extent), dtype=np.int64)
    ys, xs = np.mgrid[0:extent, 0:extent] + 0.5
    for s in shapes:
        v = np.array(s.polygon.vertices, dtype=float)
        inside = np.zeros_like(mask, dtype=bool)
        for k in range(len(v)):
            (x0, y0), (x1, y1) = v[k], v[(k + 1) % len(v)]
            if (y0 > y1):
                x0, y0, x1, y1 = x1, y1, x0, y0
            if y0 == y1:
                continue
            hit = (ys >= y0) & (ys < y1) & (xs < x0 + (ys - y0) * (x1 - x0) / (y1 - y0))
            inside ^= hit
        mask += inside
    return mask


# -- image -> grid ---------------------------------------------------------------------


def test_image_to_bw_examples():
    assert not image_to_bw(np.full((4, 4, 3), 255, np.uint8), 128).any()
    grey = np.array([[[127] * 3, [128] * 3]], np.uint8)
    assert image_to_bw(grey, 128).tolist() == [[True, False]]
    # 0.2126 * 255 = 54.2 < 128
    assert image_to_bw(np.array([[[255, 0, 0]]], np.uint8), 128).tolist() == [[True]]
    assert image_to_bw(np.array([[[255, 0, 0]]], np.uint8), 54).tolist() == [[False]]


def test_image_to_bw_alpha_over_white():
    rgba = np.array([[[0, 0, 0, 0], [0, 0, 0, 255], [0, 0, 0, 128], [0, 0, 0, 127]]], np.uint8)
    # black at alpha a over white has luma 255 - a
    assert image_to_bw(rgba, 128).tolist() == [[False, True, True, False]]
    assert image_to_bw(np.array([[0, 200]], np.uint8), 128).tolist() == [[True, False]]


RULES = ArtRules(cell_size=3, gap=1)


def test_map_examples():
    assert map_logo_to_grid(np.ones((8, 8), bool), (0, 0, 32, 32), RULES).ink.all()
    g = map_logo_to_grid(np.array([[1, 0], [0, 0]], bool), (0, 0, 8, 8), RULES)
    # image row 0 is the top -> grid row 1
    assert np.argwhere(g.ink).tolist() == [[1, 0]]
    checker = (np.indices((100, 100)).sum(axis=0) % 2).astype(bool)
    g = map_logo_to_grid(checker, (0, 0, 40, 40), RULES)
    assert (g.cols, g.rows) == (10, 10) and g.ink.all()


def test_map_majority_and_upsampling():
    bw = np.zeros((10, 10), bool)
    bw[:, :3] = True  # cols 0..2 ink: cell 0 of a 2-wide grid sees 3/5 ink, ties nowhere
    g = map_logo_to_grid(bw, (0, 0, 8, 8), RULES)
    assert g.ink.tolist() == [[True, False], [True, False]]
    # upsampling: each grid cell takes the pixel under its centre
    g = map_logo_to_grid(np.array([[1, 0], [0, 1]], bool), (0, 0, 16, 16), RULES)
    expect = np.kron(np.array([[1, 0], [0, 1]]), np.ones((2, 2)))[::-1].astype(bool)
    assert (g.ink == expect).all()


def test_map_errors():
    with pytest.raises(ArtError, match="aspect"):
        map_logo_to_grid(np.ones((10, 10), bool), (0, 0, 40, 20), RULES)
    with pytest.raises(ArtError, match="2x2"):
        map_logo_to_grid(np.ones((10, 10), bool), (0, 0, 7, 7), RULES)
    map_logo_to_grid(np.ones((100, 100), bool), (0, 0, 4036, 4000), RULES)  # within 1 %


def test_rules_validation():
    with pytest.raises(ArtError):
        ArtRules(3, 1, min_spacing=2)
    with pytest.raises(ArtError):
        ArtRules(3, 1, min_width=4)
    with pytest.raises(ArtError):
        ArtRules(3, 1, max_width=6)
    with pytest.raises(ArtError):
        ArtRules(3, 1, min_cells=3, max_cells=2)
    ArtRules(3, 1, min_width=3, min_spacing=1, max_width=7)


# -- shape catalogue and polygons ---------------------------------------------------------


def test_catalogue_order_and_anchor():
    names = []
    for n, _ in SHAPES:
        if not names or names[-1] != n:
            names.append(n)
    assert names == ["O", "I", "L", "J", "T", "S", "Z", "I3", "V3", "D", "M"]
    for _, off in SHAPES:
        assert off[0] == (0, 0) and min(off) == (0, 0)  # anchor first in raster order
        assert len(set(off)) == len(off)


@pytest.mark.parametrize("name_off", SHAPES, ids=[n for n, _ in SHAPES])
def test_shape_polygon_area_and_width(name_off):
    name, off = name_off
    rules = ArtRules(cell_size=5, gap=2)
    cells = [(c + 3, 10 - r) for r, c in off]
    poly = shape_polygon(cells, (100, 200), rules)
    members = set(cells)
    bridges = sum((c + 1, r) in members for c, r in members) + \
        sum((c, r + 1) in members for c, r in members)
    corners = sum({(c + 1, r), (c, r + 1), (c + 1, r + 1)} <= members for c, r in members)
    assert poly.area == len(cells) * 25 + bridges * 10 + corners * 4  # CCW, exact
    expected_width = 2 * 5 + 2 if name == "O" else 5
    assert min_width(poly.vertices) == expected_width
    assert all(a[0] == b[0] or a[1] == b[1]
               for a, b in zip(poly.vertices, poly.vertices[1:] + poly.vertices[:1]))


# -- generation examples -------------------------------------------------------------------


def test_generate_examples():
    assert generate_art(grid_of(np.zeros((3, 3)), RULES), free_occ(grid_of(np.zeros((3, 3)), RULES)), RULES) == []
    lone = np.zeros((3, 3), bool)
    lone[1, 1] = True
    g = grid_of(lone, RULES)
    assert generate_art(g, free_occ(g), ArtRules(3, 1, min_cells=2)) == []
    (sq,) = generate_art(g, free_occ(g), ArtRules(3, 1, min_cells=1))
    assert sq.cells == ((1, 1),) and sorted(sq.polygon.vertices) == [(4, 4), (4, 7), (7, 4), (7, 7)]


def test_two_by_two_block_is_one_o_tetromino():
    rules = ArtRules(cell_size=10, gap=4)
    g = grid_of(np.ones((2, 2)), rules)
    (o,) = generate_art(g, free_occ(g), rules)
    side = 2 * rules.cell_size + rules.gap
    assert sorted(o.polygon.vertices) == [(0, 0), (0, side), (side, 0), (side, side)]
    assert check_drc([o], free_occ(g), rules).clean


def test_flow_around_occupied_cell():
    g = grid_of(np.ones((6, 7)), RULES)
    occ = np.zeros((6, 7), bool)
    occ[2, 3] = True
    shapes = generate_art(g, free_occ(g, occ), RULES)
    cells = {c for s in shapes for c in s.cells}
    assert (3, 2) not in cells and len(cells) == 41


def test_greedy_prefers_catalogue_order():
    g = grid_of(np.ones((1, 4)), RULES)
    (s,) = generate_art(g, free_occ(g), RULES)
    assert s.cells == ((0, 0), (1, 0), (2, 0), (3, 0))  # I beats everything a row allows
    g = grid_of(np.ones((2, 4)), RULES)
    shapes = generate_art(g, free_occ(g), RULES)
    assert [len(s.cells) for s in shapes] == [4, 4]  # two O tetrominoes


# -- check_drc --------------------------------------------------------------------------------


def one_cell(col, row, rules, dx=0):
    p = rules.pitch
    x, y = col * p + dx, row * p
    verts = ((x, y), (x + rules.cell_size, y), (x + rules.cell_size, y + rules.cell_size),
             (x, y + rules.cell_size))
    return ArtPolyomino(((col, row),), FlatPolygon(LayerKey(0), verts))


def test_spacing_boundary_case():
    rules = ArtRules(cell_size=10, gap=4)
    occ = OccupancyGrid((0, 0), 14, 4, 4, np.zeros((4, 4), bool))
    a, b = one_cell(0, 0, rules), one_cell(1, 0, rules)
    rep = check_drc([a, b], occ, rules)
    assert rep.clean  # distance exactly gap passes
    rep = check_drc([a, one_cell(1, 0, rules, dx=-1)], occ, rules)
    assert len(rep.spacing) == 1 and rep.count == 1
    # diagonal neighbours are sqrt(2)*gap apart
    assert check_drc([a, one_cell(1, 1, rules)], occ, rules).clean


def test_width_and_occupancy_violations():
    rules = ArtRules(cell_size=10, gap=4)
    thin = ArtPolyomino(((0, 0),), FlatPolygon(LayerKey(0), ((0, 0), (9, 0), (9, 10), (0, 10))))
    occ_arr = np.zeros((3, 3), bool)
    occ_arr[0, 0] = True
    rep = check_drc([thin], OccupancyGrid((0, 0), 14, 3, 3, occ_arr), rules)
    assert len(rep.width) == 1 and len(rep.occupancy) == 1
    # touching an occupied cell only along its border is not an overlap
    touching = one_cell(1, 0, rules)
    assert check_drc([touching], OccupancyGrid((0, 0), 14, 3, 3, occ_arr), rules).clean


def test_density_violations_match_brute_force():
    rules_free = ArtRules(cell_size=3, gap=1, density_window=3, max_density=1.0)
    g = grid_of(np.ones((8, 8)), rules_free)
    shapes = generate_art(g, free_occ(g), rules_free)
    strict = ArtRules(cell_size=3, gap=1, density_window=3, max_density=0.5)
    rep = check_drc(shapes, free_occ(g), strict)
    mask = mask_area(shapes, 32)
    w = 3 * 4
    expected = sum(mask[y:y + w, x:x + w].sum() > 0.5 * w * w
                   for y in range(0, 32 - w + 1, 4) for x in range(0, 32 - w + 1, 4))
    assert expected > 0
    assert len(rep.density) == expected and rep.count == expected


def test_clipped_area_exact():
    tri = ((0, 0), (10, 0), (0, 10))
    assert clipped_area(tri, (0, 0, 5, 5)) == 25
    assert clipped_area(tri, (0, 0, 10, 10)) == 50
    assert clipped_area(tri, (20, 20, 30, 30)) == 0


# -- properties ----------------------------------------------------------------------------------


def random_case(rng):
    cs, gap = int(rng.integers(2, 12)), int(rng.integers(1, 6))
    mn = int(rng.integers(1, 5))
    rules = ArtRules(cs, gap, min_cells=mn, max_cells=int(rng.integers(mn, 5)),
                     density_window=int(rng.integers(1, 7)),
                     max_density=float(rng.choice([1.0, rng.uniform(0.1, 1.0)])),
                     seed=int(rng.integers(0, 2**63)))
    cols, rows = int(rng.integers(2, 16)), int(rng.integers(2, 16))
    g = grid_of(rng.random((rows, cols)) < rng.uniform(0.2, 1.0), rules,
                tuple(rng.integers(-100, 100, 2).tolist()))
    obstacles = []
    for _ in range(int(rng.integers(0, 5))):
        x, y = rng.integers(0, cols * rules.pitch, 2) + g.origin
        obstacles.append(FlatPolygon(LayerKey(1), ((x, y), (x + 3, y), (x + 3, y + 7), (x, y + 7))))
    occ = build_occupancy(obstacles, g.origin, rules.pitch, cols, rows, int(rng.integers(0, gap + 1)))
    return g, occ, rules


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_generated_art_is_drc_clean(seed):
    g, occ, rules = random_case(np.random.default_rng(seed))
    shapes = generate_art(g, occ, rules)
    assert check_drc(shapes, occ, rules).clean
    cells = [c for s in shapes for c in s.cells]
    assert len(cells) == len(set(cells))
    for c, r in cells:  # ink only, never occupied
        assert g.ink[r, c] and not occ.occupied[r, c]
    for s in shapes:
        x0, y0, x1, y1 = s.polygon.bbox
        px0, py0, px1, py1 = g.placement
        assert px0 <= x0 and py0 <= y0 and x1 <= px1 and y1 <= py1


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_generation_is_deterministic(seed):
    g, occ, rules = random_case(np.random.default_rng(seed))
    a = generate_art(g, occ, rules)
    b = generate_art(g, occ, rules)
    units = GdsUnits()
    assert write_library(export_art_gds(a, LayerKey(134), units)) == \
        write_library(export_art_gds(b, LayerKey(134), units))
    assert export_svg(a, units, g.placement) == export_svg(b, units, g.placement)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_keepout_monotone_without_size_floor_or_thinning(seed):
    rng = np.random.default_rng(seed)
    rules = ArtRules(3, 1, min_cells=1, max_density=1.0)
    g = grid_of(rng.random((9, 11)) < 0.7, rules)
    occ_a = rng.random((9, 11)) < 0.1
    occ_b = occ_a | (rng.random((9, 11)) < 0.2)
    cells_a = {c for s in generate_art(g, free_occ(g, occ_a), rules) for c in s.cells}
    cells_b = {c for s in generate_art(g, free_occ(g, occ_b), rules) for c in s.cells}
    assert cells_b <= cells_a


def test_keepout_monotonicity_counterexample_with_min_cells():
    # documented limitation of greedy tiling with a size floor (see decisions ledger)
    rules = ArtRules(3, 1, min_cells=2)
    g = grid_of([[0, 1, 1], [1, 1, 1]], rules)  # row 0 = bottom
    occ_b = np.zeros((2, 3), bool)
    occ_b[0, 2] = True
    cells_a = {c for s in generate_art(g, free_occ(g), rules) for c in s.cells}
    cells_b = {c for s in generate_art(g, free_occ(g, occ_b), rules) for c in s.cells}
    assert (1, 0) in cells_b - cells_a


def test_thinning_respects_density_and_seed():
    base = dict(cell_size=3, gap=1, density_window=4, max_density=0.4)
    g = grid_of(np.ones((12, 12)), ArtRules(**base))
    runs = {seed: generate_art(g, free_occ(g), ArtRules(**base, seed=seed)) for seed in (1, 2)}
    for seed, shapes in runs.items():
        assert check_drc(shapes, free_occ(g), ArtRules(**base, seed=seed)).clean
    assert [s.cells for s in runs[1]] != [s.cells for s in runs[2]]


# -- export ----------------------------------------------------------------------------------------


def test_svg_examples():
    units = GdsUnits(1e-3, 1e-9)
    root = ET.fromstring(export_svg([], units))
    assert root.tag == f"{SVG}svg" and len(root) == 0
    rules = ArtRules(cell_size=2000, gap=1000)
    sq = one_cell(0, 0, rules)
    root = ET.fromstring(export_svg([sq], units, (0, 0, 6000, 6000)))
    (path,) = root.iter(f"{SVG}path")
    assert path.get("d") == "M 0 0 L 2 0 L 2 -2 L 0 -2 Z"
    assert root.get("viewBox") == "0 -6 6 6"


def test_svg_path_count_and_gds_roundtrip():
    g, occ, rules = random_case(np.random.default_rng(11))
    shapes = generate_art(g, occ, rules)
    units = GdsUnits()
    root = ET.fromstring(export_svg(shapes, units, g.placement))
    assert len(list(root.iter(f"{SVG}path"))) == len(shapes)
    lib = export_art_gds(shapes, LayerKey(134, 0), units)
    (s,) = lib.structures
    assert s.name == "MEERKAT_ART" and len(s.elements) == len(shapes)
    back = parse_library(write_library(lib))
    assert [e.points for e in back.structures[0].elements] == [sh.polygon.vertices for sh in shapes]
    empty = export_art_gds([], LayerKey(134, 0), units)
    assert len(empty.structures) == 1 and empty.structures[0].elements == ()
