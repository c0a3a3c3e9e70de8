import numpy as np
from hypothesis import given, settings, strategies as st

from vrpipe.raster import SUBPIXEL, coverage, covers_point, pixel_bbox, setup_triangles

coord = st.floats(-6, 38, allow_nan=False).map(lambda v: round(v * 4) / 4)  # quarter pixels hit ties often
tri_st = st.lists(st.tuples(coord, coord), min_size=3, max_size=3)


def _brute(tri, w, h):
    """Float64 edge test with the same top-left rule, for cross-checking the int64 path."""
    v = np.round(np.asarray(tri) * SUBPIXEL) / SUBPIXEL
    (ax, ay), (bx, by), (cx, cy) = v
    area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    if area == 0:
        return np.zeros((h, w), bool)
    if area < 0:
        (bx, by), (cx, cy) = (cx, cy), (bx, by)
    out = np.zeros((h, w), bool)
    for y in range(h):
        for x in range(w):
            px, py = x + 0.5, y + 0.5
            ok = True
            for (x0, y0, x1, y1) in ((ax, ay, bx, by), (bx, by, cx, cy), (cx, cy, ax, ay)):
                dx, dy = x1 - x0, y1 - y0
                e = dx * (py - y0) - dy * (px - x0)
                top_left = dy < 0 or (dy == 0 and dx > 0)
                if not (e > 0 or (e == 0 and top_left)):
                    ok = False
                    break
            out[y, x] = ok
    return out


@settings(max_examples=300)
@given(tri_st)
def test_coverage_matches_bruteforce(tri):
    e = setup_triangles(np.array([tri]))[0]
    assert np.array_equal(coverage(e, 0, 0, 32, 32), _brute(tri, 32, 32))


@settings(max_examples=300)
@given(tri_st, coord, coord)
def test_shared_edge_owned_once(tri, qx, qy):
    """Two triangles sharing an edge never both cover a pixel centre."""
    a, b, _ = tri
    t1 = np.array([a, b, tri[2]])
    t2 = np.array([b, a, (qx, qy)])
    e = setup_triangles(np.stack([t1, t2]))
    # only meaningful when the apexes sit on opposite sides of the shared edge
    def side(p):
        return (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
    if side(tri[2]) * side((qx, qy)) >= 0:
        return
    m1 = coverage(e[0], 0, 0, 32, 32)
    m2 = coverage(e[1], 0, 0, 32, 32)
    assert not np.any(m1 & m2)


def test_square_split_covers_every_centre_once():
    tris = np.array([[[0, 0], [8, 0], [0, 8]], [[0, 8], [8, 0], [8, 8]]], dtype=float)
    e = setup_triangles(tris)
    total = coverage(e[0], 0, 0, 8, 8).astype(int) + coverage(e[1], 0, 0, 8, 8)
    assert np.all(total == 1)


def test_degenerate_triangle_covers_nothing():
    e = setup_triangles(np.array([[[0, 0], [4, 4], [8, 8]]], dtype=float))[0]
    assert not coverage(e, 0, 0, 10, 10).any()


def test_single_pixel_triangle():
    tri = np.array([[[2.2, 3.2], [2.9, 3.2], [2.2, 3.9]]])
    e = setup_triangles(tri)[0]
    assert np.argwhere(coverage(e, 0, 0, 8, 8)).tolist() == [[3, 2]]
    assert covers_point(e, 2, 3)


@settings(max_examples=200)
@given(tri_st)
def test_bbox_contains_coverage(tri):
    e = setup_triangles(np.array([tri]))[0]
    m = coverage(e, 0, 0, 32, 32)
    box = pixel_bbox(np.array(tri), 32, 32)
    if box is None:
        assert not m.any()
        return
    x0, y0, x1, y1 = box
    outside = m.copy()
    outside[y0:y1 + 1, x0:x1 + 1] = False
    assert not outside.any()
