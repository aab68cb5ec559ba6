"""Acceptance criteria. Each test prints one PASS/FAIL line and asserts it."""

import math
import time

import numpy as np
import pytest

from conftest import make_context
from hkframe import workspace as wsio
from hkframe.calibration import build_calibration, j_max_for, make_bump_pair, verify_crf
from hkframe.cubes import build_cubes, subcube_grid, verify_cube_axioms
from hkframe.frame import analysis, build_synthesis_frame, cubature_weights, mz_sampling_check, synthesis
from hkframe.generate import GENERATORS, generate, space_and_operator
from hkframe.norms import SpaceParams, besov_type_norm, heat_norm_continuous, triebel_type_norm
from hkframe.space import load_space
from hkframe.spectral import compose, heat_kernel
from hkframe.verify import build_context, make_battery, refine_doc, run_id, verify_all, verify_claims

RESULTS = {}

SMALL = {
    "cycle": (24,),
    "path": (12,),
    "torus": (4, 5),
    "binary_tree": (3,),
    "gasket": (2,),
    "random_geometric": (25, 0.4, 3),
}


def report(n, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    RESULTS[n] = line
    print(line)
    assert ok, line


def test_criterion_01_continuous_crf():
    t0 = time.perf_counter()
    space, op = space_and_operator(generate("cycle", 64))
    cal = build_calibration(op, make_bump_pair(0.5, 2.0))
    rep = verify_crf(cal)
    dt = time.perf_counter() - t0
    ok = rep.operator_norm <= 1e-10 and dt < 5
    report(1, ok, f"cycle(64) CRF operator residual {rep.operator_norm:.2e} (<= 1e-10), {dt:.2f} s (< 5 s)")


def test_criterion_02_discrete_crf_roundtrip():
    parts, ok = [], True
    for kind, args in (("cycle", (64,)), ("gasket", (3,))):
        t0 = time.perf_counter()
        ctx = make_context(kind, *args)
        fr = build_synthesis_frame(ctx.calib, ctx.grid, 1e-12)
        bat = make_battery(ctx.op, 0, 20, ctx.calib)
        worst = 0.0
        for _, f in bat:
            rec = synthesis(analysis(f, ctx.calib, ctx.grid), fr)
            worst = max(worst, np.linalg.norm(rec - f) / np.linalg.norm(f))
        dt = time.perf_counter() - t0
        ok &= worst <= 1e-6 and dt < 60 and len(bat) == 20
        parts.append(f"{kind}{args}: max rel err {worst:.2e} in {dt:.2f} s")
    report(2, ok, "; ".join(parts) + " (<= 1e-6, < 60 s)")


def test_criterion_03_b_equals_f_when_p_equals_q():
    rng = np.random.default_rng(2024)
    ctxs = [make_context("cycle", 64), make_context("gasket", 2, measure="degree"), make_context("torus", 5, 6)]
    worst = 0.0
    for _ in range(200):
        ctx = ctxs[int(rng.integers(len(ctxs)))]
        p = float(rng.choice([0.5, 0.8, 1.0, 1.5, 2.0, 3.0, 6.0]))  # F needs p < infinity
        P = SpaceParams(
            s=float(rng.uniform(-1, 1.5)),
            tau=float(rng.uniform(0, 1.5)),
            p=p,
            q=p,
            variant=str(rng.choice(["plain", "tilde"])),
        )
        f = rng.standard_normal(ctx.op.space.n)
        b = besov_type_norm(f, ctx.calib, ctx.cubes, P).value
        F = triebel_type_norm(f, ctx.calib, ctx.cubes, P.with_(family="F")).value
        worst = max(worst, abs(b - F) / max(abs(b), 1e-300))
    report(3, worst <= 1e-12, f"200 draws, max relative |B - F| = {worst:.2e} (<= 1e-12)")


def test_criterion_04_stochastic_completeness():
    worst, count = 0.0, 0
    for kind, args in SMALL.items():
        for lap in ("unnormalized", "random_walk_symmetrized"):
            sp, op = space_and_operator(generate(kind, *args, laplacian=lap))
            for t in (0.01, 0.1, 1.0, 10.0):
                rows = heat_kernel(op, t) @ sp.mu
                worst = max(worst, float(np.max(np.abs(rows - 1))))
                count += 1
    assert set(SMALL) == set(GENERATORS)
    report(4, worst <= 1e-10, f"{count} (graph, Laplacian, t) cases, max |row integral - 1| = {worst:.2e} (<= 1e-10)")


def test_criterion_05_cube_axioms():
    total, passed, cmin = 0, 0, math.inf
    for kind, args in SMALL.items():
        sp = load_space(generate(kind, *args))
        for delta in (0.4, 0.5, 0.6):
            rep = verify_cube_axioms(build_cubes(sp, delta, 0))
            total += 1
            passed += rep.ok and rep.c_nat > 0
            cmin = min(cmin, rep.c_nat)
    report(5, passed == total, f"{passed}/{total} geometry x delta cases pass every axiom, min c_nat = {cmin:.3g} (> 0)")


def test_criterion_06_mz_sampling():
    ok, single_dev, parts = True, 0.0, []
    for kind, args in (("cycle", (32,)), ("cycle", (64,)), ("gasket", (3,))):
        ctx = make_context(kind, *args)
        cs = ctx.cubes
        fine = subcube_grid(cs, j0=cs.k_max - cs.k_min + 1)
        for p in (1.0, 1.5, 2.0):
            r = mz_sampling_check(ctx.op, fine, 1.0, p, j=0)
            single_dev = max(single_dev, abs(r.low - 1), abs(r.high - 1))
        # grid level j has subcubes at level j + 1, so j = k_max - 2 is one level above singletons
        j = cs.k_max - 2
        lam = cs.delta ** (-j * ctx.calib.beta0 / 2)
        for p in (1.0, 1.5, 2.0):
            r = mz_sampling_check(ctx.op, ctx.grid, lam, p, j=j)
            ok &= r.passed
            parts.append(f"{kind}{args} p={p:g}: [{r.low:.3f}, {r.high:.3f}] eps={r.eps:.3f}")
    ok &= single_dev <= 1e-12
    report(6, ok, f"singleton max |ratio - 1| = {single_dev:.1e} (<= 1e-12); coarser level " + "; ".join(parts))


def test_criterion_07_spectral_support():
    ok, worst, parts = True, 0.0, []
    for kind, args in (("cycle", (64,)), ("gasket", (3,)), ("torus", (6, 6))):
        ctx = make_context(kind, *args)
        cal, mu = ctx.calib, ctx.op.mu
        J = cal.J_max
        for j in range(J + 1):
            for k in range(J + 1):
                if abs(j - k) >= 2:
                    A, B = cal.level_op(j), cal.level_op(k)
                    scale = max(np.abs(A).max(), np.abs(B).max(), 1.0)
                    worst = max(worst, np.abs(compose(A, B, mu)).max() / scale)
        lam = ctx.op.sqrt_eigenvalues
        beyond = all(np.all(cal.bumps.level(j, lam) == 0) for j in range(J + 1, J + 6))
        closed = J == j_max_for(ctx.op.lambda_max, cal.delta, cal.beta0)
        ok &= beyond and closed
        parts.append(f"{kind}{args} J_max={J}")
    ok &= worst < 1e-14
    report(7, ok, f"max |M_j M_k| / scale = {worst:.1e} (< 1e-14); Phi_j = 0 past J_max and closed form matches: " + ", ".join(parts))


CRITERION_8_CLAIMS = [
    ("thm6.2", {}),
    ("thm6.7", {}),
    ("thm7.8", {"p": 0.5}),
    ("thm7.8", {"p": 1.0}),
    ("thm7.8", {"p": 2.0}),
    ("prop4.9", {"p": 0.5, "tau": 4.0}),
    ("prop4.9", {"p": 1.0, "tau": 2.0}),
    ("prop4.9", {"p": 2.0, "tau": 1.0}),
    ("bump_independence", {}),
]


def test_criterion_08_equivalence_spreads():
    t0 = time.perf_counter()
    doc = generate("cycle", 64)
    coarse = build_context(doc)
    fine = build_context(refine_doc(doc))
    results = verify_all(coarse, fine, runs=verify_claims())
    dt = time.perf_counter() - t0
    ok = dt < 600
    parts = []
    for claim, cfg in CRITERION_8_CLAIMS:
        rid = run_id(claim, cfg)
        rep = results[rid]
        rs = rep.refinement_stability
        change = rs["relative_change"]
        good = math.isfinite(rs["spread_n"]) and math.isfinite(rs["spread_refined"]) and abs(change) <= 0.5
        ok &= good
        parts.append(f"{rid} {rs['spread_n']:.3f}->{rs['spread_refined']:.3f} ({change:+.1%}){'' if good else ' !'}")
    report(8, ok, f"verify suite {dt:.1f} s (< 600 s); spreads cycle(64)->cycle(128), |change| <= 50%: " + "; ".join(parts))


def test_criterion_09_heat_quadrature_stability(c64):
    P = SpaceParams(s=0.5, tau=0.0, p=2, q=2)
    worst = 0.0
    for _, f in c64.battery:
        a = heat_norm_continuous(f, c64.op, c64.cubes, P, 1, t_grid_size=8)
        b = heat_norm_continuous(f, c64.op, c64.cubes, P, 1, t_grid_size=16)
        worst = max(worst, abs(a - b) / b)
    report(9, worst < 0.005 and len(c64.battery) == 20, f"cycle(64) 20-function battery, max change 8->16 per octave = {worst:.2e} (< 0.5%)")


def test_criterion_10_cubature(c32):
    lam = float(np.sqrt(c32.op.eigenvalues[5]))
    res = cubature_weights(c32.op, c32.grid, lam, j=0)
    ok = res.residual <= 1e-8 and res.constant_error <= 1e-10 and res.moments >= 6
    report(10, ok, f"cycle(32) {res.moments} moments, residual {res.residual:.1e} (<= 1e-8), |sum eps|Q| - mu(M)| = {res.constant_error:.1e} (<= 1e-10)")


def test_criterion_11_determinism(tmp_path):
    src = tmp_path / "cycle64.json"
    wsio.write_json(src, generate("cycle", 64))
    t0 = time.perf_counter()
    a = wsio.pipeline(src, None, tmp_path / "a")
    dt = time.perf_counter() - t0
    b = wsio.pipeline(src, None, tmp_path / "b")

    def tree(root):
        return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}

    ta, tb = tree(a.root), tree(b.root)
    same = ta == tb
    report(11, same and dt < 60, f"two cycle(64) pipeline runs, {len(ta)} files, byte-identical={same}, first run {dt:.1f} s (< 60 s)")
