import math

import numpy as np
import pytest

from diagline.core import InstanceError, flagship, relaxed_line_system
from diagline.realdensity import (
    BoxSpec, FitRejected, RealDensityConfig, SlabSpec, conditional_length,
    cross_check_real_density, extrapolate, fit_slab, sigma_infinity_slab, slab_volume,
    slab_volume_grid, slab_volumes_mc, truncated_singular_integral,
)

K1 = relaxed_line_system(1, (1, -1), (1, 1))
K2 = relaxed_line_system(2, (1, 1, 1, -1, -1, -1), (1, 1, 1, 1, 1, 2))
T = relaxed_line_system(2, (1, 2, -3), (1, 1, 1))
Q = relaxed_line_system(2, (2, 1, -1, -1), (1, 1, 1, 2))

# I(20) for the k = 1 chain, i.e. the sinc^2 integral cut at |theta| <= 20
K1_I20 = 1.994934101193397
# flagship I(2), agreed by box widths 1 and 1/2
FLAGSHIP_I2 = 79.68231783


def sinc2_truncated(D, n=2_000_001):
    th = np.linspace(-D, D, n)
    f = np.where(th == 0, 4.0, np.sin(2 * np.pi * th) ** 2 / np.where(th == 0, 1, np.pi * th) ** 2)
    h = th[1] - th[0]
    return h / 3 * (f[0] + f[-1] + 4 * f[1:-1:2].sum() + 2 * f[2:-1:2].sum())


def brute_integral(ls, D, n_outer=240, n_inner=160):
    """Plain tensor Gauss-Legendre in theta, with each factor also by Gauss-Legendre."""
    g, w = np.polynomial.legendre.leggauss(n_outer)
    x, wx = np.polynomial.legendre.leggauss(n_inner)
    t1, t2 = np.meshgrid(D * g, D * g, indexing="ij")
    W = np.outer(w, w) * D * D
    F = np.ones_like(t1, dtype=complex)
    for i in range(ls.s):
        a1, a2 = ls.A[0][i], ls.A[1][i]
        phase = a1 * t1[..., None] * x + a2 * t2[..., None] * x**2
        F *= np.exp(2j * np.pi * phase) @ wx
    return (F * W).sum()


def test_specs_validate():
    with pytest.raises(InstanceError):
        SlabSpec(K1, 0)
    with pytest.raises(InstanceError):
        BoxSpec(0.5)
    assert SlabSpec(K1, 2.5).vacuous
    assert not SlabSpec(K1, 1.5).vacuous


def test_conditional_length_against_fine_grid():
    rng = np.random.default_rng(5)
    a = np.array([1.5, -2.0, 0.7])
    partial = rng.uniform(-2, 2, size=(40, 3))
    z = np.linspace(-1, 1, 400_001)
    for eta in (0.3, 1.0):
        exact = conditional_length(partial, a, eta)
        for row, L in zip(partial, exact):
            ok = np.ones_like(z, dtype=bool)
            for j in range(3):
                ok &= np.abs(row[j] + a[j] * z ** (j + 1)) < eta
            assert L == pytest.approx(ok.mean() * 2, abs=2e-5)


def test_k1_slab_area():
    # {|x - y| < eta} in the square has area 4 eta - eta^2
    v = slab_volume(SlabSpec(K1, 0.5), sampler="grid", nodes=64)
    assert v.value == pytest.approx(1.75, abs=1e-12)
    mc = slab_volume(SlabSpec(K1, 0.5), sampler="plain", N=10**5, seed=3)
    assert abs(mc.value - 1.75) < 3 * mc.stderr


def test_vacuous_slab_is_full_cube():
    assert slab_volume(SlabSpec(K2, 100.0)).value == 2.0**6


def test_halving_eta_scales_by_two_to_minus_k():
    a, b = slab_volumes_mc(K2, [0.02, 0.01], 10**5, seed=1)
    assert b.value / a.value == pytest.approx(0.25, abs=0.02)


def test_monotone_in_eta():
    vols = slab_volumes_mc(K2, [0.4, 0.2, 0.1, 0.05], 10**5, seed=4)
    values = [v.value for v in vols]
    assert values == sorted(values, reverse=True)


def test_grid_and_montecarlo_agree():
    grid = slab_volume_grid(T, 0.05, 400)
    mc = slab_volumes_mc(T, [0.05], 10**5, seed=2)[0]
    assert abs(grid.value - mc.value) < 3 * math.hypot(grid.stderr, mc.stderr)
    plain = slab_volumes_mc(T, [0.05], 10**5, seed=2, conditional=False)[0]
    assert abs(grid.value - plain.value) < 3 * math.hypot(grid.stderr, plain.stderr)


def test_montecarlo_ignores_thread_count():
    one = slab_volumes_mc(K2, [0.1], 3 * 10**5, seed=9, threads=1)[0]
    three = slab_volumes_mc(K2, [0.1], 3 * 10**5, seed=9, threads=3)[0]
    assert one == three


def test_montecarlo_refuses_small_n():
    with pytest.raises(InstanceError):
        slab_volumes_mc(K1, [0.1], 1000)


def test_k1_slab_intercept():
    fit = sigma_infinity_slab(K1, [0.4, 0.2, 0.1], sampler="grid", nodes=80)
    assert fit.estimate.value == pytest.approx(2.0, abs=1e-12)
    assert fit.slope == pytest.approx(-0.5, abs=1e-12)
    assert [g for _, g, _ in fit.g_table] == pytest.approx([1.8, 1.9, 1.95], abs=1e-12)


def test_full_cube_fit_rejected():
    with pytest.raises(FitRejected):
        sigma_infinity_slab(K1, [40.0, 20.0, 10.0])


def test_fit_refusals():
    with pytest.raises(InstanceError):
        fit_slab([0.1, 0.1, 0.1], [1, 1, 1])
    with pytest.raises(InstanceError):
        fit_slab([0.2, 0.1], [1, 1])
    with pytest.raises(FitRejected):
        fit_slab([0.3, 0.2, 0.1], [1.0, 3.0, 1.0])


def test_slab_estimate_permutation_invariant():
    a = sigma_infinity_slab(Q, [0.2, 0.1, 0.05], sampler="grid", nodes=200)
    b = sigma_infinity_slab(Q.permuted([3, 0, 2, 1]), [0.2, 0.1, 0.05], sampler="grid", nodes=200)
    assert a.estimate.value == pytest.approx(b.estimate.value, rel=1e-3)


def test_doubling_eta_keeps_intercept():
    # g bends at small s, so this only holds to a few fit residuals
    a = sigma_infinity_slab(Q, [0.2, 0.1, 0.05], sampler="grid", nodes=200)
    b = sigma_infinity_slab(Q, [0.1, 0.05, 0.025], sampler="grid", nodes=200)
    assert abs(a.estimate.value - b.estimate.value) < 5 * (a.residual + b.residual)


def test_k1_singular_integral():
    est = truncated_singular_integral(K1, 20, tol=1e-9)
    assert est.converged
    assert est.value == pytest.approx(K1_I20, abs=1e-8)
    assert sinc2_truncated(20) == pytest.approx(K1_I20, abs=1e-8)


def test_integral_matches_plain_tensor_rule():
    est = truncated_singular_integral(T, 2, tol=1e-7)
    assert est.value == pytest.approx(brute_integral(T, 2).real, abs=1e-6)


def test_symmetric_half_matches_full_box():
    half = truncated_singular_integral(T, 4, tol=1e-6)
    full = truncated_singular_integral(T, 4, tol=1e-6, symmetric=False)
    assert half.value == pytest.approx(full.value, abs=2e-6)
    assert abs(full.imag) < 1e-8


def test_flagship_small_box():
    a = truncated_singular_integral(flagship(), 2, tol=1e-4)
    b = truncated_singular_integral(flagship(), 2, tol=1e-4, box_width=0.5)
    assert a.value == pytest.approx(FLAGSHIP_I2, abs=1e-4)
    assert b.value == pytest.approx(FLAGSHIP_I2, abs=1e-4)


def test_extrapolate_exact_model():
    Ds = [4.0, 8.0, 16.0]
    vals = [3.0 - 2.0 * D ** (-1 / 3) for D in Ds]
    ex = extrapolate(Ds, vals, 1 / 3)
    assert ex.value == pytest.approx(3.0)
    assert ex.tail_coefficient == pytest.approx(-2.0)
    assert ex.residual == pytest.approx(0, abs=1e-12)
    with pytest.raises(InstanceError):
        extrapolate([4.0, 4.0], [1.0, 1.0], 1.0)


def test_k1_cross_check():
    cfg = RealDensityConfig(etas=(0.4, 0.2, 0.1), sampler="grid", Ds=(20.0, 40.0), tol=1e-8)
    rep = cross_check_real_density(K1, cfg)
    assert rep.sigma_slab == pytest.approx(2.0, abs=1e-12)
    assert rep.rel_diff < 1e-3 and rep.passed
    assert rep.digest == K1.digest()


def test_cross_check_refuses_mismatched_instances():
    with pytest.raises(InstanceError):
        cross_check_real_density(K1, RealDensityConfig(), ls_integral=relaxed_line_system(1, (1, -2), (1, 1)))
