"""Square operators: quadrature correctness, orderings, truncations."""

import math

import numpy as np
import pytest

from lpsquare.grid import GridFunction, from_callable
from lpsquare.kernels import (
    Kernel,
    dilate,
    evaluate,
    gauss_derivative_kernel,
    nonvanishing_hat_kernel,
    poisson_derivative_kernel,
)
from lpsquare.operators import (
    ScaleGrid,
    _periodic_conv,
    annulus_level_cap,
    area_integral,
    convolve,
    default_scales,
    dilated_area_integral,
    g_function,
    g_star,
    l2_norm,
    lambda_warn_threshold,
    load_result,
    save_result,
    split_at_scale,
)
from lpsquare.weights import Weight, constant_weight

POISSON1 = poisson_derivative_kernel(1)


def sine(N=256, k=3, L=1.0):
    return from_callable(1, L, N, lambda x: np.sin(2 * math.pi * k * x / L))


def test_scale_grid_weights_sum_to_log_span():
    sg = ScaleGrid(0.01, 1.28, 64)
    assert np.all(np.diff(sg.nodes) > 0)
    assert np.all(sg.weights > 0)
    assert sg.weights.sum() == pytest.approx(math.log(128.0), rel=1e-13)
    with pytest.raises(ValueError):
        ScaleGrid(1.0, 0.5, 8)
    with pytest.raises(ValueError):
        ScaleGrid(0.1, 1.0, 1)


def test_default_scales_conventions():
    f = sine(N=512)
    sg = default_scales(f)
    assert sg.t_min == pytest.approx(2.0 / 512)
    assert sg.t_max == pytest.approx(0.25)
    assert sg.M == 64
    r = sg.refined()
    assert r.t_min == sg.t_min and r.t_max == sg.t_max and r.M == 127


def test_convolve_annihilates_constants_to_rounding():
    f = GridFunction(1, 1.0, 128, np.full(128, 3.25))
    out = convolve(dilate(POISSON1, 0.05), f)
    # mean correction leaves only float rounding, far below tol_vanish
    assert np.max(np.abs(out.values)) < 1e-12


def test_convolve_zero_function():
    f = GridFunction(1, 1.0, 64, np.zeros(64))
    out = convolve(dilate(POISSON1, 0.1), f)
    assert np.all(out.values == 0.0)


def test_convolve_delta_reproduces_kernel_samples():
    N, L, t = 256, 1.0, 0.03
    h = L / N
    i0 = 77
    vals = np.zeros(N)
    vals[i0] = 1.0 / h
    f = GridFunction(1, L, N, vals)
    out = convolve(dilate(POISSON1, t), f).values
    d = ((np.arange(N) - i0 + N // 2) % N - N // 2) * h
    kern = evaluate(POISSON1, d / t) / t
    kern_corr = kern - kern.mean()
    assert np.allclose(out, kern_corr, atol=1e-12)
    # and the raw profile up to the small DC shift
    assert np.max(np.abs(out - kern)) < 5e-3 * np.max(np.abs(kern))


def test_fft_and_direct_convolution_agree():
    rng = np.random.default_rng(5)
    a, k = rng.normal(size=512), rng.normal(size=512)
    d = _periodic_conv(a, k, force="direct")
    ff = _periodic_conv(a, k, force="fft")
    assert np.allclose(d, ff, rtol=0, atol=1e-10 * np.max(np.abs(d)))
    a2, k2 = rng.normal(size=(8, 8)), rng.normal(size=(8, 8))
    d2 = _periodic_conv(a2, k2, force="direct")
    f2 = _periodic_conv(a2, k2, force="fft")
    assert np.allclose(d2, f2, rtol=0, atol=1e-10)


def test_requires_certified_kernel():
    f = sine(N=64)
    sg = default_scales(f, M=8)
    with pytest.raises(ValueError):
        g_function(nonvanishing_hat_kernel(), f, sg)
    bare = Kernel("anon", 1, lambda p: np.zeros(p.shape[0]), 1.0, 1.0)
    with pytest.raises(ValueError):
        area_integral(bare, f, sg)


def test_g_of_constant_is_negligible():
    f = GridFunction(1, 1.0, 256, np.full(256, 7.0))
    sg = default_scales(f, M=16)
    assert np.max(g_function(POISSON1, f, sg).values.values) < 1e-13
    assert np.max(area_integral(POISSON1, f, sg).values.values) < 1e-13


def test_sine_response_matches_discrete_multiplier():
    # translation invariance forces G(sin) = |multiplier| * |sin|, where the
    # multiplier is the cosine sum of the mean-corrected sampled kernel
    N, k = 256, 3
    f = sine(N=N, k=k)
    sg = ScaleGrid(2.0 / N, 0.25, 32)
    res = g_function(POISSON1, f, sg).values.values
    h = 1.0 / N
    d = ((np.arange(N) + N // 2) % N - N // 2) * h
    amp2 = 0.0
    for t, w in zip(sg.nodes, sg.weights):
        kern = evaluate(POISSON1, d / t) / t
        kern -= kern.mean()
        a = h * float((kern * np.cos(2 * math.pi * k * np.arange(N) / N)).sum())
        amp2 += w * a * a
    expect = math.sqrt(amp2) * np.abs(f.values)
    assert np.allclose(res, expect, atol=1e-10)


def test_sine_l2_ratio_near_closed_form():
    # scale quadrature of the profile's Fourier transform
    # -2 pi |xi| exp(-2 pi |xi|), frozen for L=1, N=256, k=3, M=64
    f = sine(N=256, k=3)
    sg = ScaleGrid(2.0 / 256, 0.25, 64)
    ratio = l2_norm(g_function(POISSON1, f, sg).values) / l2_norm(f)
    assert ratio == pytest.approx(0.4907622537547583, rel=1e-2)


def test_sine_ratio_stable_under_scale_refinement():
    f = sine(N=256, k=3)
    sg = ScaleGrid(2.0 / 256, 0.25, 32)
    r1 = l2_norm(g_function(POISSON1, f, sg).values) / l2_norm(f)
    r2 = l2_norm(g_function(POISSON1, f, sg.refined()).values) / l2_norm(f)
    assert r2 == pytest.approx(r1, rel=0.02)


def test_scaling_covariance_of_g():
    # sin(16 pi x) is sin(32 pi x) dilated by 2 and stays periodic, so
    # G(f_2)(2u) should match G(f)(u); both spectra sit well inside the
    # scale range at this resolution
    N = 4096
    f = sine(N=N, k=8)
    f2 = sine(N=N, k=4)
    sg = ScaleGrid(2.0 / N, 0.25, 96)
    gf = g_function(POISSON1, f, sg).values.values
    gf2 = g_function(POISSON1, f2, sg).values.values
    i = np.arange(N // 2)
    num, den = gf2[2 * i], gf[i]
    keep = den > 1e-3 * den.max()
    assert np.max(np.abs(num[keep] / den[keep] - 1.0)) < 0.01


def test_area_integral_saturates_to_no_cone_quadrature():
    N = 128
    f = sine(N=N, k=5)
    sg = ScaleGrid(2.0 / N, 0.25, 8)
    # aperture so large every sample is inside the cone at every scale
    ell = annulus_level_cap(1, 1.0, sg) + 1
    res = dilated_area_integral(POISSON1, f, ell, sg).values.values
    h = 1.0 / N
    flat = 0.0
    for t, w in zip(sg.nodes, sg.weights):
        F = convolve(dilate(POISSON1, float(t)), f).values
        flat += w / t * float((F * F).sum()) * h
    assert np.allclose(res, math.sqrt(flat), rtol=1e-12)


def test_dilated_aperture_monotone():
    f = sine(N=128, k=4)
    sg = ScaleGrid(2.0 / 128, 0.25, 8)
    s = area_integral(POISSON1, f, sg).values.values
    s1 = dilated_area_integral(POISSON1, f, 1, sg).values.values
    s2 = dilated_area_integral(POISSON1, f, 2, sg).values.values
    assert np.all(s <= s1 * (1 + 1e-12))
    assert np.all(s1 <= s2 * (1 + 1e-12))
    with pytest.raises(ValueError):
        dilated_area_integral(POISSON1, f, 0, sg)


@pytest.mark.filterwarnings("ignore:lambda")
def test_gstar_lambda_monotone_and_errors():
    f = sine(N=128, k=4)
    sg = ScaleGrid(2.0 / 128, 0.25, 8)
    g3 = g_star(POISSON1, f, 3.0, sg).values.values
    g4 = g_star(POISSON1, f, 4.0, sg).values.values
    assert np.all(g4 <= g3 * (1 + 1e-12))
    with pytest.raises(ValueError):
        g_star(POISSON1, f, 0.0, sg)
    with pytest.raises(ValueError):
        g_star(POISSON1, f, -3.0, sg)


def test_gstar_warns_below_threshold():
    f = sine(N=64, k=2)
    sg = ScaleGrid(2.0 / 64, 0.25, 4)
    thr = lambda_warn_threshold(POISSON1, 1)
    assert thr == pytest.approx(7.0)
    with pytest.warns(UserWarning):
        g_star(POISSON1, f, 4.0, sg)
    import warnings as _w
    with _w.catch_warnings():
        _w.simplefilter("error")
        g_star(POISSON1, f, 8.0, sg)


@pytest.mark.filterwarnings("ignore:lambda")
def test_cone_domination_exact_in_quadrature():
    f = sine(N=128, k=4)
    sg = ScaleGrid(2.0 / 128, 0.25, 8)
    lam = 4.0
    s = area_integral(POISSON1, f, sg).values.values
    gs = g_star(POISSON1, f, lam, sg).values.values
    assert np.all(s <= 2 ** (lam / 2) * gs * (1 + 1e-12))


def test_annulus_decomposition_bound():
    f = sine(N=256, k=5)
    sg = ScaleGrid(2.0 / 256, 0.25, 12)
    lam = 8.0
    gs2 = g_star(POISSON1, f, lam, sg).values.values ** 2
    s2 = area_integral(POISSON1, f, sg).values.values ** 2
    cap = annulus_level_cap(1, 1.0, sg)
    rhs = s2.copy()
    for ell in range(1, cap + 1):
        sl = dilated_area_integral(POISSON1, f, ell, sg).values.values
        rhs += 2.0 ** (-ell * lam) * sl**2
    assert np.all(gs2 <= 2.0**lam * rhs * (1 + 1e-10))


def test_split_sandwich_and_energy_partition():
    f = sine(N=256, k=4)
    sg = ScaleGrid(2.0 / 256, 0.25, 16)
    full = g_function(POISSON1, f, sg).values.values
    lo, hi = split_at_scale("g", POISSON1, f, 0.05, sg)
    lov, hiv = lo.values.values, hi.values.values
    assert lo.part == "low" and hi.part == "high"
    assert np.all(lov <= full * (1 + 1e-12))
    assert np.all(hiv <= full * (1 + 1e-12))
    assert np.all(full <= lov + hiv + 1e-12)
    assert np.allclose(lov**2 + hiv**2, full**2, rtol=1e-10, atol=1e-14)


def test_split_at_top_scale_leaves_negligible_high_part():
    # k=16 pushes the spectral mass far below t_max, so the top node is empty
    f = sine(N=256, k=16)
    sg = ScaleGrid(2.0 / 256, 0.25, 16)
    full = g_function(POISSON1, f, sg).values.values
    lo, hi = split_at_scale("g", POISSON1, f, sg.t_max, sg)
    assert np.max(hi.values.values) < 1e-4 * np.max(full)
    assert np.allclose(lo.values.values, full, rtol=1e-7)
    with pytest.raises(ValueError):
        split_at_scale("g", POISSON1, f, sg.t_min, sg)
    with pytest.raises(ValueError):
        split_at_scale("g", POISSON1, f, 2 * sg.t_max, sg)
    with pytest.raises(ValueError):
        split_at_scale("gstar", POISSON1, f, 0.05, sg)


def test_split_works_for_area_integral():
    f = sine(N=128, k=4)
    sg = ScaleGrid(2.0 / 128, 0.25, 8)
    full = area_integral(POISSON1, f, sg).values.values
    lo, hi = split_at_scale("s", POISSON1, f, 0.06, sg)
    assert np.allclose(lo.values.values ** 2 + hi.values.values ** 2,
                       full**2, rtol=1e-10, atol=1e-14)


def test_sublinearity_pointwise():
    rng = np.random.default_rng(3)
    N = 128
    u = GridFunction(1, 1.0, N, rng.normal(size=N))
    v = GridFunction(1, 1.0, N, rng.normal(size=N))
    s = GridFunction(1, 1.0, N, u.values + v.values)
    sg = ScaleGrid(2.0 / N, 0.25, 8)
    for op in (g_function, area_integral):
        a = op(POISSON1, u, sg).values.values
        b = op(POISSON1, v, sg).values.values
        c = op(POISSON1, s, sg).values.values
        assert np.all(c <= a + b + 1e-10)


def test_two_dimensional_smoke():
    N = 16
    f = from_callable(2, 1.0, N,
                      lambda x, y: np.sin(2 * math.pi * x) * np.cos(2 * math.pi * y))
    k2 = gauss_derivative_kernel(2)
    sg = ScaleGrid(2.0 / N, 0.25, 6)
    g = g_function(k2, f, sg).values.values
    s = area_integral(k2, f, sg).values.values
    gs = g_star(k2, f, 8.0, sg).values.values
    assert g.shape == (N, N) and np.all(g >= 0)
    assert np.all(s <= 2 ** (8.0 * 2 / 2) * gs * (1 + 1e-12))
    const = GridFunction(2, 1.0, N, np.full((N, N), 2.0))
    assert np.max(g_function(k2, const, sg).values.values) < 1e-13


def test_tail_bound_reported_and_decreasing():
    f = sine(N=128, k=2)
    r1 = g_function(POISSON1, f, ScaleGrid(2.0 / 128, 0.125, 8))
    r2 = g_function(POISSON1, f, ScaleGrid(2.0 / 128, 0.25, 8))
    assert r1.tail_bound > r2.tail_bound > 0


def test_l2_norm_weighted():
    f = GridFunction(1, 1.0, 16, np.full(16, 2.0))
    assert l2_norm(f) == pytest.approx(2.0)
    w = constant_weight(1, 1.0, 16, 4.0)
    assert l2_norm(f, w) == pytest.approx(4.0)


def test_result_serialization_roundtrip(tmp_path):
    f = sine(N=64, k=2)
    sg = ScaleGrid(2.0 / 64, 0.25, 8)
    res = g_star(POISSON1, f, 8.0, sg)
    p = tmp_path / "gstar.csv"
    save_result(res, p)
    back, meta = load_result(p)
    assert np.array_equal(back.values, res.values.values)
    assert meta["op"] == "gstar"
    assert float(meta["lambda"]) == 8.0
    assert int(meta["M"]) == 8
    assert float(meta["tmin"]) == pytest.approx(2.0 / 64)
