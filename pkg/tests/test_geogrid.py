import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helioseer import ssgf
from helioseer.geogrid import (Field, FieldStack, GridError, HOUR, UNITS_PERCENT, UNITS_WM2,
                               bilinear_regrid, bilinear_sample, cell_coords, cell_index,
                               conus_grid, day_of_year, make_grid, regrid_stack, to_epoch,
                               toy_grid)


def test_make_grid_examples():
    g = make_grid(26.00, 49.95, -126.00, -68.55, 0.05)
    assert g.shape == (480, 1150)
    assert make_grid(0, 0, 0, 0, 1.0).shape == (1, 1)
    assert make_grid(30.0, 33.15, -100.0, -96.85, 0.05).shape == (64, 64)


def test_make_grid_rejects_non_integral_span():
    with pytest.raises(GridError, match="integral multiple"):
        make_grid(0.0, 1.03, 0.0, 1.0, 0.05)
    with pytest.raises(GridError):
        make_grid(1.0, 0.0, 0.0, 1.0, 0.1)
    with pytest.raises(GridError):
        make_grid(0.0, 1.0, 0.0, 1.0, 0.0)


def test_cell_coords_examples():
    g = conus_grid()
    assert cell_coords(g, 0, 0) == pytest.approx((26.00, -126.00), abs=1e-9)
    assert cell_coords(g, 479, 1149) == pytest.approx((49.95, -68.55), abs=1e-9)
    assert cell_coords(toy_grid(64), 10, 20) == pytest.approx((30.50, -99.00), abs=1e-9)
    with pytest.raises(IndexError):
        cell_coords(g, 480, 0)


@given(st.integers(0, 479), st.integers(0, 1149))
def test_cell_coords_round_trip(i, j):
    g = conus_grid()
    fi, fj = cell_index(g, *cell_coords(g, i, j))
    assert abs(fi - i) * g.res < 1e-9 and abs(fj - j) * g.res < 1e-9


def test_day_of_year_examples():
    assert day_of_year("2023-01-01T00:00Z") == 1
    assert day_of_year("2023-12-31T12:00Z") == 365
    assert day_of_year("2020-03-01T00:00Z") == 61
    assert day_of_year("2020-12-31T23:59:59Z") == 366


def test_field_invariants():
    g = make_grid(0, 1, 0, 1, 0.5)
    with pytest.raises(GridError):
        Field(g, 0, np.zeros((2, 2)))
    with pytest.raises(ValueError):
        Field(g, 0, np.full((3, 3), 120.0), UNITS_PERCENT)
    mask = np.zeros((3, 3), bool)
    mask[0, 0] = True
    vals = np.full((3, 3), 50.0)
    vals[0, 0] = 150.0
    Field(g, 0, vals, UNITS_PERCENT, mask)  # out-of-range value hidden by the mask is fine


def test_fieldstack_requires_hourly_spacing():
    g = make_grid(0, 1, 0, 1, 0.5)
    with pytest.raises(GridError, match="1-hour"):
        FieldStack(g, [0, 2 * HOUR], np.zeros((2, 3, 3)))
    st_ = FieldStack(g, [0, HOUR, 2 * HOUR], np.arange(27.0).reshape(3, 3, 3))
    assert st_.window(HOUR, 2).values.shape == (2, 3, 3)
    with pytest.raises(KeyError):
        st_.index_of(HOUR // 2)


# --- regridding -------------------------------------------------------------------------

def test_regrid_constant_and_affine():
    src_g = make_grid(30.0, 31.0, -100.0, -99.0, 0.1)
    dst_g = make_grid(30.05, 30.95, -99.95, -99.05, 0.15)
    c = bilinear_regrid(Field(src_g, 0, np.full(src_g.shape, 7.5)), dst_g)
    assert np.all(c.values == np.float32(7.5))
    lat, lon = src_g.mesh()
    f = Field(src_g, 0, 2.0 * (lat - 30) + 3.0 * (lon + 100))
    out = bilinear_regrid(f, dst_g)
    dlat, dlon = dst_g.mesh()
    assert np.max(np.abs(out.values - (2.0 * (dlat - 30) + 3.0 * (dlon + 100)))) < 1e-5


def test_regrid_matches_four_corner_loop(rng):
    src_g = make_grid(0.0, 7.0, 0.0, 7.0, 1.0)
    dst_g = make_grid(0.5, 6.5, 0.5, 6.5, 1.5)
    v = rng.normal(size=src_g.shape)
    out = bilinear_regrid(Field(src_g, 0, v), dst_g).values
    v32 = v.astype(np.float32).astype(np.float64)
    for i, la in enumerate(dst_g.lats):
        for j, lo in enumerate(dst_g.lons):
            i0, j0 = int(np.floor(la)), int(np.floor(lo))
            a, b = la - i0, lo - j0
            ref = ((1 - a) * (1 - b) * v32[i0, j0] + (1 - a) * b * v32[i0, j0 + 1]
                   + a * (1 - b) * v32[i0 + 1, j0] + a * b * v32[i0 + 1, j0 + 1])
            assert out[i, j] == pytest.approx(ref, abs=1e-5)


def test_regrid_idempotent_bounded_and_mask(rng):
    g = make_grid(0.0, 3.0, 0.0, 3.0, 0.5)
    v = rng.normal(size=g.shape).astype(np.float32)
    f = Field(g, 0, v)
    assert np.array_equal(bilinear_regrid(f, g).values, v)
    dst = make_grid(0.25, 2.75, 0.25, 2.75, 0.5)
    out = bilinear_regrid(f, dst).values
    for i in range(dst.n_lat):
        for j in range(dst.n_lon):
            corners = v[i:i + 2, j:j + 2]
            assert corners.min() - 1e-6 <= out[i, j] <= corners.max() + 1e-6
    mask = np.zeros(g.shape, bool)
    mask[2, 2] = True
    masked = bilinear_regrid(Field(g, 0, v, mask=mask), dst)
    assert masked.mask[1, 1] and masked.mask[2, 2] and masked.mask[1, 2] and masked.mask[2, 1]
    assert masked.mask.sum() == 4


def test_regrid_disjoint_grids_rejected():
    with pytest.raises(GridError):
        bilinear_regrid(Field(make_grid(0, 1, 0, 1, 0.5), 0, np.zeros((3, 3))),
                        make_grid(10, 11, 10, 11, 0.5))


def test_regrid_stack_shape():
    g = make_grid(0.0, 2.0, 0.0, 2.0, 0.5)
    s = FieldStack(g, [0, HOUR], np.ones((2,) + g.shape), UNITS_WM2)
    out = regrid_stack(s, make_grid(0.0, 2.0, 0.0, 2.0, 1.0))
    assert out.values.shape == (2, 3, 3) and np.all(out.values == 1)


def test_bilinear_sample_exact_cell_center(rng):
    g = toy_grid(16)
    v = rng.normal(size=g.shape)
    lat, lon = cell_coords(g, 5, 7)
    s, _ = bilinear_sample(v, g, np.array(lat), np.array(lon))
    assert float(s) == v[5, 7]


# --- SSGF ----------------------------------------------------------------------------------

def test_ssgf_round_trip_with_mask(tmp_path, rng):
    g = toy_grid(8)
    mask = rng.random((3,) + g.shape) > 0.8
    stack = FieldStack(g, to_epoch("2023-06-01T00:00Z") + HOUR * np.arange(3),
                       rng.uniform(0, 900, (3,) + g.shape), UNITS_WM2, mask)
    p = tmp_path / "x.ssgf"
    ssgf.write(p, stack)
    back = ssgf.read_stack(p)
    assert back.grid.same_as(g) and back.units == UNITS_WM2
    assert np.array_equal(back.values, stack.values) and np.array_equal(back.mask, mask)
    assert np.array_equal(back.times, stack.times)
    raw = p.read_bytes()
    assert raw[:4] == b"SSGF"


def test_ssgf_rejects_corruption(tmp_path):
    g = toy_grid(4)
    data = ssgf.dumps(g, [0], np.zeros((1,) + g.shape))
    with pytest.raises(ssgf.SSGFError):
        ssgf.loads(b"XXXX" + data[4:])
    with pytest.raises(ssgf.SSGFError):
        ssgf.loads(data[:-3])


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 3))
def test_ssgf_round_trip_property(h, w, t):
    g = make_grid(10.0, 10.0 + (h - 1) * 0.25, 20.0, 20.0 + (w - 1) * 0.25, 0.25)
    vals = np.arange(t * h * w, dtype=np.float32).reshape(t, h, w)
    back = ssgf.loads(ssgf.dumps(g, HOUR * np.arange(t), vals))
    assert np.array_equal(back.values, vals) and back.grid.same_as(g)
