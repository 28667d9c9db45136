import json
import math
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import ray_cast_inside
from pyrotime.geodata import (
    AfDetection, AfParseError, GriddingStats, PerimeterPolygon, SchemaError, grid_detections,
    load_perimeter, parse_af_csv, perimeter_to_geojson, rasterize_perimeter, square_polygon,
)
from pyrotime.rastercore import GridSpec, latlon_to_fractional, pixel_to_latlon

SPEC = GridSpec(64, 64, 60.0, 34.26, -117.96)
DAY = datetime(2020, 9, 6, tzinfo=timezone.utc)


def write_csv(tmp_path, text):
    path = tmp_path / "af.csv"
    path.write_text(text)
    return path


def det(hours, east_m=0.0, north_m=0.0, conf="high"):
    lat = SPEC.origin_lat + north_m / 111_132.95
    lon = SPEC.origin_lon + east_m / (111_320.0 * math.cos(math.radians(SPEC.origin_lat)))
    return AfDetection(lat, lon, DAY + timedelta(hours=hours), conf)


class TestParse:
    def test_bobcat_row(self, tmp_path):
        p = write_csv(tmp_path, "lat,lon,time_utc,confidence\n34.26,-117.96,2020-09-07T03:15:00Z,high\n")
        (d,) = parse_af_csv(p)
        assert (d.lat, d.lon, d.confidence) == (34.26, -117.96, "high")
        assert d.time_utc == datetime(2020, 9, 7, 3, 15, tzinfo=timezone.utc)

    def test_confidence_case(self, tmp_path):
        p = write_csv(tmp_path, "lat,lon,time_utc,confidence\n1,2,2020-09-07T03:15:00Z,HIGH\n"
                                "1,2,2020-09-07T03:15:00Z,Nominal\n")
        assert [d.confidence for d in parse_af_csv(p)] == ["high", "nominal"]

    def test_malformed_rows_are_line_numbered(self, tmp_path):
        p = write_csv(tmp_path, "lat,lon,time_utc,confidence\n1,2,2020-09-07T03:15:00Z,low\n"
                                "abc,2,2020-09-07T03:15:00Z,low\n1,2,yesterday,low\n")
        with pytest.raises(AfParseError) as info:
            parse_af_csv(p)
        assert [n for n, _ in info.value.problems] == [3, 4]
        assert "line 3" in str(info.value)

    def test_missing_column(self, tmp_path):
        with pytest.raises(SchemaError, match="confidence"):
            parse_af_csv(write_csv(tmp_path, "lat,lon,time_utc\n1,2,2020-09-07T03:15:00Z\n"))

    def test_empty_file(self, tmp_path):
        assert parse_af_csv(write_csv(tmp_path, "")) == []

    def test_bad_confidence_and_coordinates(self, tmp_path):
        p = write_csv(tmp_path, "lat,lon,time_utc,confidence\n1,2,2020-09-07T03:15:00Z,medium\n"
                                "91,2,2020-09-07T03:15:00Z,low\n")
        with pytest.raises(AfParseError) as info:
            parse_af_csv(p)
        assert len(info.value.problems) == 2


class TestGridding:
    def test_earliest_wins(self):
        f = grid_detections([det(35.0), det(30.0)], SPEC, DAY)
        c = SPEC.nx // 2, SPEC.ny // 2
        assert f.values[c[1], c[0]] == pytest.approx(30 / 72)
        assert (np.delete(f.values.ravel(), c[1] * 64 + c[0]) == 1.0).all()

    def test_no_detections(self):
        assert (grid_detections([], SPEC, DAY).values == 1.0).all()

    def test_600m_east(self):
        f = grid_detections([det(30.0, east_m=600.0)], SPEC, DAY)
        assert f.values[32, 42] == pytest.approx(30 / 72)
        assert (f.values < 1).sum() == 1

    def test_filters_and_counters(self):
        stats = GriddingStats()
        dets = [det(10.0), det(10.0, conf="low"), det(50.0), det(-1.0), det(5.0, east_m=1e5)]
        grid_detections(dets, SPEC, DAY, stats=stats)
        assert (stats.used, stats.wrong_tier, stats.outside_window, stats.outside_domain) == (1, 1, 2, 1)

    def test_window_limit(self):
        with pytest.raises(ValueError):
            grid_detections([], SPEC, DAY, window=80.0)

    @given(st.lists(st.tuples(st.floats(0, 48), st.floats(-1800, 1800), st.floats(-1800, 1800),
                              st.sampled_from(["low", "nominal", "high"])), max_size=30),
           st.randoms())
    def test_order_free_and_tier_monotone(self, rows, rnd):
        dets = [det(h, e, n, c) for h, e, n, c in rows]
        shuffled = list(dets)
        rnd.shuffle(shuffled)
        high = grid_detections(dets, SPEC, DAY)
        assert np.array_equal(high.values, grid_detections(shuffled, SPEC, DAY).values)
        both = grid_detections(dets, SPEC, DAY, tiers=("high", "nominal"))
        assert not ((high.values < 1) & (both.values == 1)).any()


class TestPerimeter:
    def test_central_square(self):
        poly = square_polygon(SPEC, 29.5, 29.5, 33.5, 33.5)
        mask = rasterize_perimeter(poly, SPEC).values
        assert mask.sum() == 16 and mask[30:34, 30:34].all()

    def test_hole_gives_annulus(self):
        outer = square_polygon(SPEC, 9.7, 9.7, 40.3, 40.3).rings[0]
        hole = square_polygon(SPEC, 19.7, 19.7, 30.3, 30.3).rings[0][::-1]
        mask = rasterize_perimeter(PerimeterPolygon((outer, hole), 24.0), SPEC).values
        assert mask.sum() == 31 * 31 - 11 * 11
        assert not mask[25, 25] and mask[12, 12]

    def test_fully_outside(self):
        with pytest.raises(ValueError):
            rasterize_perimeter(square_polygon(SPEC, 100.2, 100.2, 120.7, 120.7), SPEC)

    def test_degenerate_rings(self):
        with pytest.raises(ValueError):
            PerimeterPolygon((((0, 0), (1, 1), (0, 0)),), 1.0)
        with pytest.raises(ValueError):
            PerimeterPolygon((((0, 0), (1, 1), (2, 0), (1, 0)),), 1.0)

    def test_edge_pixel_counts_inside(self):
        mask = rasterize_perimeter(square_polygon(SPEC, 30.0, 30.0, 32.0, 32.0), SPEC).values
        assert mask.sum() == 9

    def test_random_polygons_match_ray_casting(self):
        rng = np.random.default_rng(2024)
        jj, ii = np.mgrid[0:SPEC.ny, 0:SPEC.nx]
        lat_c, lon_c = pixel_to_latlon(SPEC, ii, jj)
        for _ in range(100):
            n = rng.integers(3, 12)
            angles = np.sort(rng.uniform(0, 2 * np.pi, n))
            radii = rng.uniform(3, 30, n)
            ci, cj = rng.uniform(10, 54, 2)
            vi, vj = ci + radii * np.cos(angles), cj + radii * np.sin(angles)
            lat, lon = pixel_to_latlon(SPEC, vi, vj)
            ring = [(float(a), float(b)) for a, b in zip(lat, lon)]
            ring.append(ring[0])
            poly = PerimeterPolygon((tuple(ring),), 12.0)
            got = rasterize_perimeter(poly, SPEC).values
            lonlat = [(b, a) for a, b in ring]
            near = _near_edge(ii, jj, vi, vj)
            for j in range(SPEC.ny):
                for i in range(SPEC.nx):
                    if near[j, i]:
                        continue
                    assert got[j, i] == ray_cast_inside(lon_c[j, i], lat_c[j, i], lonlat), (i, j)

    def test_geojson_round_trip(self, tmp_path):
        poly = square_polygon(SPEC, 20.3, 21.1, 40.2, 35.9, observed_time=30.5)
        (tmp_path / "p.geojson").write_text(json.dumps(perimeter_to_geojson(poly)))
        assert load_perimeter(tmp_path / "p.geojson") == poly

    def test_geojson_needs_time(self, tmp_path):
        doc = perimeter_to_geojson(square_polygon(SPEC, 1.5, 1.5, 5.5, 5.5))
        doc["properties"] = {}
        (tmp_path / "p.geojson").write_text(json.dumps(doc))
        with pytest.raises(ValueError, match="observed_time_hours"):
            load_perimeter(tmp_path / "p.geojson")


def _near_edge(i, j, vi, vj, tol=1e-6):
    """Pixel centres within ``tol`` of an edge or level with a vertex."""
    near = np.zeros(i.shape, dtype=bool)
    xs, ys = np.append(vi, vi[0]), np.append(vj, vj[0])
    for x0, y0, x1, y1 in zip(xs[:-1], ys[:-1], xs[1:], ys[1:]):
        dx, dy = x1 - x0, y1 - y0
        s = np.clip(((i - x0) * dx + (j - y0) * dy) / (dx * dx + dy * dy), 0, 1)
        near |= np.hypot(x0 + s * dx - i, y0 + s * dy - j) < tol
        near |= np.abs(j - y0) < tol
    return near
