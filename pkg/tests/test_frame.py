import math

import numpy as np
import pytest

from conftest import make_context
from hkframe.cubes import subcube_grid
from hkframe.errors import IndexMismatch, InfeasibleMoments, InvalidParams, LevelTooCoarse, ValidationError
from hkframe.frame import (
    FrameCoefficients,
    _quartile_threshold,
    analysis,
    build_synthesis_frame,
    composition_constant,
    cubature_weights,
    mz_sampling_check,
    neumann_terms,
    sequence_norm,
    stopping_functional,
    synthesis,
)
from hkframe.norms import SpaceParams
from hkframe.spectral import decay_diagnostic


@pytest.fixture(scope="module")
def c64_frame(c64):
    return build_synthesis_frame(c64.calib, c64.grid, 1e-12)


def test_analysis_zero_and_linearity(c64, rng):
    z = analysis(np.zeros(64), c64.calib, c64.grid)
    assert np.all(z.flat() == 0)
    f, g = rng.standard_normal(64), rng.standard_normal(64)
    lhs = analysis(2 * f - 3 * g, c64.calib, c64.grid).flat()
    rhs = 2 * analysis(f, c64.calib, c64.grid).flat() - 3 * analysis(g, c64.calib, c64.grid).flat()
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_analysis_band_vanishing(c64):
    cal = c64.calib
    for j_star in range(cal.J_max + 1):
        prof = cal.level_profile_values(j_star)
        if not np.any(prof):
            continue
        # eigenvector inside level j_star only
        i = int(np.argmax(prof))
        f = c64.op.eigenvectors[:, i]
        co = analysis(f, cal, c64.grid)
        for j in range(cal.J_max + 1):
            if abs(j - j_star) >= 2:
                assert np.max(np.abs(co.levels[j].values)) < 1e-12


def test_frame_report_and_tails(c64_frame):
    rep = c64_frame.report()
    for j, d in c64_frame.diagnostics.items():
        assert 0 <= d.r_norm < 1
        if d.r_norm > 0:
            assert d.r_norm ** (d.terms + 1) / (1 - d.r_norm) <= 1e-12
            assert d.tail_bound <= 1e-12
        assert rep["levels"][str(j)]["terms"] == d.terms
    assert rep["tail_total"] == pytest.approx(c64_frame.tail_total)


def test_neumann_terms():
    assert neumann_terms(0.0, 1e-12) == 0
    assert neumann_terms(0.5, 1e-12) == 40
    for r in (0.1, 0.3, 0.5):
        K = neumann_terms(r, 1e-12)
        assert r ** (K + 1) / (1 - r) <= 1e-12 < r**K / (1 - r)
    with pytest.raises(ValueError):
        neumann_terms(1.0, 1e-12)


def test_singleton_grid_small_residual():
    ctx = make_context("cycle", 16)
    grid = subcube_grid(ctx.cubes, j0=ctx.cubes.k_max)
    fr = build_synthesis_frame(ctx.calib, grid)
    for d in fr.diagnostics.values():
        assert d.terms <= 40
        assert d.eps0_effective == pytest.approx(0.0, abs=1e-12)


def test_synthesis_zero_and_linearity(c64, c64_frame, rng):
    zero = analysis(np.zeros(64), c64.calib, c64.grid)
    assert np.all(synthesis(zero, c64_frame) == 0)
    a = analysis(rng.standard_normal(64), c64.calib, c64.grid)
    b = analysis(rng.standard_normal(64), c64.calib, c64.grid)
    lhs = synthesis(a + b.scaled(2.0), c64_frame)
    rhs = synthesis(a, c64_frame) + 2 * synthesis(b, c64_frame)
    assert np.allclose(lhs, rhs, atol=1e-12)


@pytest.mark.parametrize("kind,args", [("cycle", (64,)), ("gasket", (3,)), ("torus", (6, 6)), ("path", (20,))])
def test_roundtrip(kind, args):
    ctx = make_context(kind, *args)
    fr = build_synthesis_frame(ctx.calib, ctx.grid, 1e-12)
    battery = ctx.ensure_battery(0, 20)
    bound = max(10 * fr.tail_total, 1e-6)
    for name, f in battery:
        g = synthesis(analysis(f, ctx.calib, ctx.grid), fr)
        err = np.linalg.norm(g - f) / np.linalg.norm(f)
        assert err <= 1e-6, name
        assert err <= bound, name


def test_index_mismatch(c64, c64_frame):
    coarse = subcube_grid(c64.cubes, j0=1, finest=c64.cubes.k_max - 2)
    co = analysis(np.ones(64), c64.calib, coarse)
    assert not np.array_equal(co.levels[0].samples, c64_frame.samples[0])
    with pytest.raises(IndexMismatch):
        synthesis(co, c64_frame)
    base = analysis(np.ones(64), c64.calib, c64.grid)
    with pytest.raises(IndexMismatch):
        base + co
    with pytest.raises(IndexMismatch):
        synthesis(FrameCoefficients({0: base.levels[0]}), c64_frame)


def test_delta_mismatch_rejected(c64):
    other = make_context("cycle", 64, delta=0.4)
    with pytest.raises(ValidationError):
        analysis(np.ones(64), c64.calib, other.grid)
    with pytest.raises(ValidationError):
        build_synthesis_frame(c64.calib, other.grid)


def test_sequence_norm_examples(c64, rng):
    zero = analysis(np.zeros(64), c64.calib, c64.grid)
    P = SpaceParams(s=0.5, tau=0.25, p=1.5, q=1.5)
    assert sequence_norm(zero, c64.grid, c64.cubes, P) == 0.0
    co = analysis(rng.standard_normal(64), c64.calib, c64.grid)
    for variant in ("plain", "tilde"):
        b = sequence_norm(co, c64.grid, c64.cubes, SpaceParams(s=0.3, tau=0.2, p=1.5, q=1.5, family="B", variant=variant))
        f = sequence_norm(co, c64.grid, c64.cubes, SpaceParams(s=0.3, tau=0.2, p=1.5, q=1.5, family="F", variant=variant))
        assert b == pytest.approx(f, rel=1e-12)


def test_single_coefficient_sequence_norm(c64):
    co = analysis(np.zeros(64), c64.calib, c64.grid)
    g = c64.grid.level(0)
    co.levels[0].values[3] = 1.0
    val = sequence_norm(co, c64.grid, c64.cubes, SpaceParams(s=0.0, tau=0.0, p=2, q=2))
    assert val == pytest.approx(math.sqrt(g.measures[3]), rel=1e-12)


def _quartile_oracle(values, weights):
    total = weights.sum()
    for lam in sorted(set(values.tolist()) | {0.0}):
        if lam >= 0 and weights[values > lam].sum() < total / 4:
            return lam
    raise AssertionError


def test_quartile_threshold_matches_oracle(rng):
    for _ in range(200):
        n = int(rng.integers(1, 12))
        v = np.round(np.abs(rng.standard_normal(n)), 1)
        w = rng.uniform(0.1, 2.0, n)
        assert _quartile_threshold(v, w) == _quartile_oracle(v, w)


def test_stopping_functional(c64, rng):
    co = analysis(rng.standard_normal(64), c64.calib, c64.grid)
    m = stopping_functional(co, c64.grid, 0.5, 2.0)
    assert m.shape == (64,) and np.all(m >= 0) and np.all(np.isfinite(m))
    zero = analysis(np.zeros(64), c64.calib, c64.grid)
    assert np.all(stopping_functional(zero, c64.grid, 0.5, 2.0) == 0)
    assert np.all(np.isfinite(stopping_functional(co, c64.grid, 0.5, math.inf)))
    with pytest.raises(InvalidParams):
        stopping_functional(co, c64.grid, 0.5, 0.0)


def test_mz_constant_and_singletons(c32):
    g = subcube_grid(c32.cubes, j0=c32.cubes.k_max)
    for p in (1.0, 1.5, 2.0):
        r = mz_sampling_check(c32.op, g, 1.0, p, j=0)
        assert abs(r.low - 1) <= 1e-12 and abs(r.high - 1) <= 1e-12
        assert r.passed


@pytest.mark.parametrize("kind,args", [("cycle", (32,)), ("gasket", (3,))])
def test_mz_coarser_level_within_eps(kind, args):
    ctx = make_context(kind, *args)
    a = ctx.calib.a
    lam = 1 / a  # delta^(beta0/2): admissible one level above the singleton grid
    for p in (1.0, 1.5, 2.0):
        r = mz_sampling_check(ctx.op, ctx.grid, lam, p, j=-1)
        assert 0 < r.eps < 1
        assert r.passed, r.to_dict()


def test_mz_rejects_bad_input(c32):
    with pytest.raises(InvalidParams):
        mz_sampling_check(c32.op, c32.grid, 1.0, 0.5)
    with pytest.raises(LevelTooCoarse):
        mz_sampling_check(c32.op, c32.grid, 2.0, 2.0, j=-1)


def test_cubature_c32(c32):
    lam = float(np.sqrt(c32.op.eigenvalues[5]))
    res = cubature_weights(c32.op, c32.grid, lam, j=0)
    assert res.moments >= 6
    assert res.residual <= 1e-8
    assert res.constant_error <= 1e-10
    assert np.all(res.weights >= 0)


def test_cubature_constant_row_only(c32):
    res = cubature_weights(c32.op, c32.grid, 0.0, j=0)
    assert res.moments == 1
    g = c32.grid.level(0)
    assert res.weights @ g.measures == pytest.approx(c32.op.space.total_measure, abs=1e-10)


def test_cubature_singletons_are_ones(c32):
    g = subcube_grid(c32.cubes, j0=c32.cubes.k_max)
    res = cubature_weights(c32.op, g, 1.0, j=0)
    assert np.allclose(res.weights, 1.0, atol=1e-10)
    assert res.in_range_fraction == 1.0


def test_cubature_infeasible():
    ctx = make_context("cycle", 32)
    lam = float(np.sqrt(ctx.op.eigenvalues[-1]))
    g = ctx.grid.level(-3)
    if g.size >= 32:
        pytest.skip("grid too fine")
    with pytest.raises((InfeasibleMoments, LevelTooCoarse)):
        cubature_weights(ctx.op, ctx.grid, lam, j=-3)


def test_composition_constant_finite(c32):
    for j in (0, 1):
        C = composition_constant(c32.op.space, c32.grid, j, 1.0, 0.5)
        assert math.isfinite(C) and C > 0


def test_psi_decay_finite(c64, c64_frame):
    d = 1.0  # cycle graphs are one-dimensional
    for sigma in (2 * d + 0.5, 3 * d):
        for j, psi in c64_frame.psi.items():
            r = decay_diagnostic(psi.T, c64.op.space, c64.cubes.delta**j, sigma)
            assert math.isfinite(r.value)
