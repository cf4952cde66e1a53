import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from occwarn.geometry import (
    DegenerateGeometryError,
    GeometryError,
    OffsetError,
    Polygon,
    PolygonSet,
    Polyline,
    SensorInsideError,
    buffer_polyline,
    clip_polyline,
    complement_intervals,
    convex_hull,
    is_convex,
    polygon_difference,
    polygon_intersection,
    polygon_union,
    polyline_crossing,
    polyline_crossings,
    regular_polygon,
    signed_area,
    visible_vertices,
)

SQUARE = [[0, 0], [2, 0], [2, 2], [0, 2]]


class TestPolyline:
    def test_length_and_interpolation(self):
        line = Polyline([[0, 0], [3, 0], [3, 4]])
        assert line.length == pytest.approx(7.0)
        np.testing.assert_allclose(line.point_at(5.0), [3.0, 2.0])
        np.testing.assert_allclose(line.point_at(np.array([0.0, 3.0])), [[0, 0], [3, 0]])

    def test_extrapolates_past_both_ends(self):
        line = Polyline([[0, 0], [10, 0]])
        np.testing.assert_allclose(line.point_at(12.0), [12.0, 0.0])
        np.testing.assert_allclose(line.point_at(-1.0), [-1.0, 0.0])

    def test_heading_and_tangent(self):
        line = Polyline([[0, 0], [0, 5]])
        assert line.heading_at(2.0) == pytest.approx(math.pi / 2)
        np.testing.assert_allclose(line.tangent_at(2.0), [0.0, 1.0], atol=1e-12)

    def test_project(self):
        line = Polyline([[0, 0], [10, 0]])
        s, d, foot = line.project([4.0, 3.0])
        assert s == pytest.approx(4.0) and d == pytest.approx(3.0)
        np.testing.assert_allclose(foot, [4.0, 0.0])

    def test_sub_and_reverse(self):
        line = Polyline([[0, 0], [10, 0], [10, 10]])
        part = line.sub(5.0, 15.0)
        assert part.length == pytest.approx(10.0)
        np.testing.assert_allclose(part.start, [5, 0])
        np.testing.assert_allclose(part.end, [10, 5])
        assert line.reversed().reversed() == line

    def test_concat_merges_joints_and_bridges_gaps(self):
        a, b = Polyline([[0, 0], [1, 0]]), Polyline([[1, 0], [2, 0]])
        joined = Polyline.concat([a, b])
        assert joined.length == pytest.approx(2.0) and len(joined) == 3
        assert Polyline.concat([a, Polyline([[5, 0], [6, 0]])]).length == pytest.approx(6.0)

    def test_offset_left_positive(self):
        line = Polyline([[0, 0], [10, 0]])
        np.testing.assert_allclose(line.offset(1.5).points, [[0, 1.5], [10, 1.5]])

    def test_offset_self_intersection_reports_vertex(self):
        hairpin = Polyline([[0, 0], [10, 0], [10, 1], [0, 1]])
        with pytest.raises(OffsetError) as exc:
            hairpin.offset(2.0)
        assert exc.value.vertex >= 0

    def test_needs_two_points(self):
        with pytest.raises(GeometryError):
            Polyline([[0, 0]])

    def test_resample_keeps_endpoints(self):
        line = Polyline([[0, 0], [10, 0]]).resample(3.0)
        np.testing.assert_allclose(line.end, [10, 0])
        assert len(line) == 5


class TestPolygon:
    def test_orientation_normalized(self):
        cw = Polygon(SQUARE[::-1])
        assert signed_area(cw.ring) > 0
        assert cw.area == pytest.approx(4.0)

    def test_closing_vertex_dropped(self):
        assert len(Polygon(SQUARE + [SQUARE[0]]).ring) == 4

    def test_degenerate_rejected(self):
        with pytest.raises(DegenerateGeometryError):
            Polygon([[0, 0], [1, 1], [2, 2]])

    def test_self_intersecting_rejected(self):
        with pytest.raises(GeometryError):
            Polygon([[0, 0], [2, 2], [2, 0], [0, 2]])

    def test_contains_and_centroid(self):
        sq = Polygon(SQUARE)
        assert sq.contains([[1, 1], [3, 1]]).tolist() == [True, False]
        np.testing.assert_allclose(sq.centroid, [1, 1])

    def test_regular_polygon_area(self):
        disc = regular_polygon((0, 0), 50.0)
        assert len(disc.ring) == 128
        exact = 0.5 * 128 * 50.0**2 * math.sin(2 * math.pi / 128)
        assert disc.area == pytest.approx(exact, rel=1e-12)
        assert abs(disc.area - math.pi * 2500) / (math.pi * 2500) < 5e-4


class TestHull:
    def test_drops_interior_and_collinear(self):
        pts = [[0, 0], [1, 0], [2, 0], [2, 2], [0, 2], [1, 1]]
        hull = convex_hull(pts)
        assert len(hull.ring) == 4
        assert hull.area == pytest.approx(4.0)

    def test_collinear_input_rejected(self):
        with pytest.raises(DegenerateGeometryError):
            convex_hull([[0, 0], [1, 1], [3, 3]])

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.tuples(st.floats(-100, 100), st.floats(-100, 100)), min_size=3, max_size=40))
    def test_hull_contains_all_points(self, pts):
        pts = np.array(pts)
        try:
            hull = convex_hull(pts)
        except DegenerateGeometryError:
            return
        assert is_convex(hull)
        a, b = hull.edges()
        cross = (b[:, 0] - a[:, 0])[None, :] * (pts[:, 1:2] - a[:, 1]) - (b[:, 1] - a[:, 1])[None, :] * (pts[:, 0:1] - a[:, 0])
        scale = max(1.0, float(np.abs(pts).max())) ** 2
        assert np.all(cross >= -1e-9 * scale)

    def test_visible_vertices_face_viewer(self):
        sq = Polygon([[4, -1], [6, -1], [6, 1], [4, 1]])
        chain = visible_vertices(sq, (0, 0))
        # from the west only the west face is seen: tangents are the two west corners
        assert {tuple(p) for p in chain} == {(4.0, 1.0), (4.0, -1.0)}
        assert tuple(chain[0]) == (4.0, 1.0)

    def test_visible_vertices_inside_raises(self):
        with pytest.raises(SensorInsideError):
            visible_vertices(Polygon(SQUARE), (1, 1))


class TestBooleans:
    def test_union_difference_intersection(self):
        a = Polygon(SQUARE)
        b = Polygon([[1, 1], [3, 1], [3, 3], [1, 3]])
        assert polygon_union(a, b).area == pytest.approx(7.0)
        assert polygon_intersection(a, b).area == pytest.approx(1.0)
        assert polygon_difference(a, b).area == pytest.approx(3.0)

    def test_hole_survives(self):
        outer = regular_polygon((0, 0), 10, 32)
        inner = regular_polygon((0, 0), 2, 16)
        ring = polygon_difference(outer, inner)
        assert len(ring.parts) == 1 and len(ring.parts[0][1]) == 1
        assert not ring.contains([[0, 0]])[0] and ring.contains([[5, 0]])[0]

    def test_disjoint_parts(self):
        s = PolygonSet.from_polygons([Polygon(SQUARE), Polygon([[5, 0], [6, 0], [6, 1], [5, 1]])])
        assert len(s.parts) == 2
        assert s.area == pytest.approx(5.0)

    def test_empty(self):
        assert PolygonSet().is_empty
        assert polygon_intersection(Polygon(SQUARE), Polygon([[5, 5], [6, 5], [6, 6]])).is_empty

    def test_buffer_flat_caps(self):
        band = buffer_polyline(Polyline([[0, 0], [10, 0]]), 1.5)
        assert band.area == pytest.approx(30.0)


class TestCurves:
    def test_clip_polyline(self):
        region = PolygonSet(Polygon([[2, -1], [4, -1], [4, 1], [2, 1]]))
        ivs = clip_polyline(Polyline([[0, 0], [10, 0]]), region)
        assert len(ivs) == 1
        assert ivs[0][0] == pytest.approx(2.0) and ivs[0][1] == pytest.approx(4.0)

    def test_complement(self):
        assert complement_intervals([(2, 3), (5, 6)], 0, 10) == [(0, 2), (3, 5), (6, 10)]
        assert complement_intervals([], 1, 2) == [(1, 2)]
        assert complement_intervals([(0, 10)], 1, 2) == []

    def test_crossings(self):
        a = Polyline([[-5, 0], [5, 0]])
        b = Polyline([[0, -5], [0, 5]])
        c = polyline_crossing(a, b)
        assert c.s_a == pytest.approx(5.0) and c.s_b == pytest.approx(5.0)
        assert polyline_crossing(a, Polyline([[0, 1], [1, 1]])) is None
        zig = Polyline([[-3, -1], [-2, 1], [-1, -1], [0, 1]])
        assert len(polyline_crossings(a, zig)) == 3
