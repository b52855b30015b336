"""Grid substrate: measures, means, dyadic cubes, membership, serialization."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lpsquare.grid import (
    Cube,
    GridFunction,
    axis_coords,
    ball_region,
    cube_region,
    dilate_cube,
    dyadic_address,
    dyadic_cubes,
    ess_inf,
    ess_sup,
    from_callable,
    full_region,
    level_blocks,
    load_grid_function,
    mean_value,
    measure,
    periodic_displacement,
    save_grid_function,
)


def make_grid(n=1, L=1.0, N=8, values=None):
    if values is None:
        shape = (N,) if n == 1 else (N, N)
        values = np.zeros(shape)
    return GridFunction(n, L, N, values)


# Expected values below were computed by hand from the sample-sum
# definitions: mean of f(x)=x over [0,1) with N samples is (0+1+...+(N-1))/N^2
# = 1/2 - h/2, and a level-2 cube in the unit square has measure (1/4)^2.

def test_mean_of_identity_is_half_minus_half_h():
    N = 8
    f = from_callable(1, 1.0, N, lambda x: x)
    got = mean_value(f, full_region(f))
    assert got == pytest.approx(0.4375, abs=1e-15)
    assert got == pytest.approx(0.5 - 0.5 / N, abs=1e-15)


def test_level2_cube_measure_in_unit_square():
    f = make_grid(n=2, N=16)
    q = [c for c in dyadic_cubes(f, 2) if c.level == 2][0]
    assert measure(cube_region(f, q)) == pytest.approx(1.0 / 16.0, abs=1e-15)


def test_dyadic_cube_counts():
    f1 = make_grid(n=1, N=16)
    assert len(dyadic_cubes(f1, 3)) == 15
    f2 = make_grid(n=2, N=16)
    assert len(dyadic_cubes(f2, 2)) == 21


def test_half_open_membership_1d():
    f = make_grid(N=8)
    q = Cube((0.25,), 0.5)
    idx = cube_region(f, q).indices
    # [0, 0.5): left edge in, right edge out
    assert list(idx) == [0, 1, 2, 3]


def test_membership_wraps_periodically():
    f = make_grid(N=8)
    q = Cube((0.0,), 0.5)
    idx = cube_region(f, q).indices
    assert list(idx) == [0, 1, 6, 7]


def test_dyadic_fast_path_matches_mask_path():
    f = make_grid(n=2, N=16)
    for q in dyadic_cubes(f, 3):
        masked = cube_region(f, Cube(q.center, q.side, level=None))
        fast = cube_region(f, q)
        assert np.array_equal(masked.indices, fast.indices)


def test_dilate_cube_doubles_sample_count():
    f = make_grid(N=32)
    q = [c for c in dyadic_cubes(f, 3) if c.level == 3][5]
    r1 = cube_region(f, q)
    r2 = cube_region(f, dilate_cube(q, 2.0))
    assert r2.size == 2 * r1.size
    assert set(r1.indices).issubset(set(r2.indices))


def test_dilate_beyond_box_captures_everything():
    f = make_grid(N=16)
    q = Cube((0.3,), 0.25)
    r = cube_region(f, dilate_cube(q, 8.0))
    assert r.size == f.N


def test_dyadic_nesting():
    f = make_grid(n=2, N=16)
    cubes = dyadic_cubes(f, 2)
    by_level = {}
    for q in cubes:
        by_level.setdefault(q.level, []).append(q)
    for q in by_level[2]:
        child = set(cube_region(f, q).indices)
        parents = [p for p in by_level[1]
                   if set(cube_region(f, p).indices) >= child]
        assert len(parents) == 1


def test_level_partition_is_disjoint_cover():
    f = make_grid(n=2, N=8)
    lvl2 = [q for q in dyadic_cubes(f, 2) if q.level == 2]
    seen = np.concatenate([cube_region(f, q).indices for q in lvl2])
    assert np.array_equal(np.sort(seen), np.arange(f.N**2))


def test_level_blocks_match_cube_regions():
    rng = np.random.default_rng(7)
    for n, N in [(1, 16), (2, 8)]:
        shape = (N,) if n == 1 else (N, N)
        f = make_grid(n=n, N=N, values=rng.normal(size=shape))
        for k in range(0, 3):
            blocks = level_blocks(f.values, n, k)
            cubes = [q for q in dyadic_cubes(f, k) if q.level == k]
            assert blocks.shape[0] == len(cubes)
            for b, q in zip(blocks, cubes):
                assert b.mean() == pytest.approx(
                    mean_value(f, cube_region(f, q)), rel=1e-12)


def test_dyadic_address_roundtrip():
    f = make_grid(n=2, N=8)
    for k in range(0, 3):
        cubes = [q for q in dyadic_cubes(f, k) if q.level == k]
        for i, q in enumerate(cubes):
            assert dyadic_address(f, q) == (k, i)
    assert dyadic_address(f, Cube((0.3, 0.3), 0.2)) is None


def test_ball_region_1d_is_interval():
    f = make_grid(N=16)
    r = ball_region(f, (0.5,), 0.2)
    x = axis_coords(f)
    expect = np.nonzero(np.abs(x - 0.5) < 0.2)[0]
    assert np.array_equal(r.indices, expect)


def test_ball_region_2d_symmetry():
    f = make_grid(n=2, N=32)
    r = ball_region(f, (0.5, 0.5), 0.3)
    x = axis_coords(f)
    dx = periodic_displacement(x, 0.5, 1.0)
    cnt = int(((dx[:, None] ** 2 + dx[None, :] ** 2) < 0.09).sum())
    assert r.size == cnt
    assert r.size > 0


def test_periodic_displacement_range():
    x = np.linspace(0, 1, 64, endpoint=False)
    d = periodic_displacement(x, 0.9, 1.0)
    assert np.all(d >= -0.5) and np.all(d < 0.5)
    assert d[0] == pytest.approx(0.1, abs=1e-12)


def test_ess_bounds_and_validation():
    f = make_grid(N=8, values=np.arange(8.0))
    reg = full_region(f)
    assert ess_inf(f, reg) == 0.0
    assert ess_sup(f, reg) == 7.0
    with pytest.raises(ValueError):
        GridFunction(1, 1.0, 12, np.zeros(12))
    with pytest.raises(ValueError):
        GridFunction(1, 1.0, 8, np.full(8, np.nan))
    with pytest.raises(ValueError):
        dyadic_cubes(f, 5)


def test_save_load_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    for n, N in [(1, 16), (2, 8)]:
        shape = (N,) if n == 1 else (N, N)
        f = make_grid(n=n, L=2.0, N=N, values=rng.normal(size=shape))
        p = tmp_path / f"f{n}.csv"
        save_grid_function(f, p)
        g = load_grid_function(p)
        assert (g.n, g.L, g.N) == (f.n, f.L, f.N)
        assert np.array_equal(g.values, f.values)


@settings(max_examples=40, deadline=None)
@given(level=st.integers(min_value=0, max_value=3),
       seed=st.integers(min_value=0, max_value=2**31 - 1))
def test_measure_additivity_over_partitions(level, seed):
    rng = np.random.default_rng(seed)
    f = make_grid(n=1, N=16, values=rng.normal(size=16))
    cubes = [q for q in dyadic_cubes(f, level) if q.level == level]
    total = sum(measure(cube_region(f, q)) for q in cubes)
    assert total == pytest.approx(measure(full_region(f)), rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(a=st.floats(-5, 5), b=st.floats(-5, 5),
       seed=st.integers(min_value=0, max_value=2**31 - 1))
def test_mean_value_linearity(a, b, seed):
    rng = np.random.default_rng(seed)
    u = rng.normal(size=16)
    v = rng.normal(size=16)
    f = make_grid(N=16, values=u)
    g = make_grid(N=16, values=v)
    fg = make_grid(N=16, values=a * u + b * v)
    reg = cube_region(f, Cube((0.25,), 0.5))
    lhs = mean_value(fg, reg)
    rhs = a * mean_value(f, reg) + b * mean_value(g, reg)
    assert lhs == pytest.approx(rhs, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**31 - 1),
       c=st.floats(0, 1), s=st.sampled_from([0.25, 0.5, 1.0]))
def test_mean_between_ess_bounds(seed, c, s):
    rng = np.random.default_rng(seed)
    f = make_grid(N=32, values=rng.normal(size=32))
    reg = cube_region(f, Cube((c,), s))
    if reg.size == 0:
        return
    assert ess_inf(f, reg) - 1e-12 <= mean_value(f, reg) <= ess_sup(f, reg) + 1e-12
