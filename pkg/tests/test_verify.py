import math

import numpy as np
import pytest

from conftest import make_context
from hkframe.errors import HypothesisViolation, PrerequisiteMissing, ValidationError
from hkframe.generate import generate
from hkframe.space import from_distance_matrix
from hkframe.spectral import eigendecompose
from hkframe.calibration import build_calibration, make_bump_pair
from hkframe.cubes import build_cubes
from hkframe.verify import (
    PAPER_TAGS,
    Context,
    make_battery,
    max_workers,
    peetre_domination_check,
    refine_doc,
    run_equivalence,
    run_id,
    verify_all,
    verify_claims,
)


def test_battery_deterministic_and_nonzero(c64):
    a = make_battery(c64.op, 3, 20, c64.calib)
    b = make_battery(c64.op, 3, 20, c64.calib)
    assert a.names == b.names
    assert len(a) == 20
    for (_, f), (_, g) in zip(a, b):
        assert np.array_equal(f, g)
        assert np.linalg.norm(f) > 0


def test_battery_covers_every_nonempty_band(c64):
    bat = make_battery(c64.op, 0, 20, c64.calib)
    for j in range(c64.calib.J_max + 1):
        if not np.any(c64.calib.level_profile_values(j)):
            continue
        assert any(np.linalg.norm(c64.calib.bands(f)[j]) > 1e-8 for _, f in bat)


def test_battery_rejects_tiny_size(c64):
    with pytest.raises(ValidationError):
        make_battery(c64.op, 0, 4)


@pytest.mark.parametrize(
    "claim,cfg",
    [
        ("prop4.9", {"p": 2.0, "tau": 0.5}),
        ("prop4.9", {"p": 1.0, "tau": 0.9}),
        ("thm6.7", {"s": 1.0, "m": 0}),
        ("thm6.2", {"a": 0.1}),
        ("thm6.8", {"p": 0.5}),
        ("thm6.8", {"s": 2.0, "m": 1}),
    ],
)
def test_guards_refuse(c64, claim, cfg):
    with pytest.raises(HypothesisViolation):
        run_equivalence(claim, c64, cfg)


def test_prop410_boundary_is_allowed(c64):
    rep = run_equivalence("prop4.10", c64, {"p": 2.0, "tau": 0.5})
    assert math.isfinite(rep.spread)


def test_unknown_claim(c64):
    with pytest.raises(ValidationError):
        run_equivalence("thm99", c64)


def test_prerequisite_missing(c64):
    with pytest.raises(PrerequisiteMissing):
        run_equivalence("thm6.2", Context(c64.op, None, None))


def test_thm75_reports_reconstruction(c64):
    rep = run_equivalence("thm7.5", c64)
    assert math.isfinite(rep.spread) and rep.spread >= 1
    assert max(rep.extra["reconstruction_errors"]) <= 1e-6
    d = rep.to_dict()
    assert d["paper_tag"] == PAPER_TAGS["thm7.5"]
    assert len(d["ratios"]) == 20


def test_prop49_reports_all_three_norms(c64):
    rep = run_equivalence("prop4.9", c64, {"p": 2.0})
    assert rep.params["tau"] == pytest.approx(1.0)
    assert math.isfinite(rep.spread)


def test_spread_is_max_over_min(c64):
    rep = run_equivalence("thm6.2", c64)
    r = np.asarray(rep.ratios)
    assert rep.spread == pytest.approx(r.max() / r.min())


def test_peetre_domination():
    ctx = make_context("cycle", 64)
    assert peetre_domination_check(np.zeros(64), ctx.calib, ctx.cubes, 1.0, 1.0) == 0.0
    f = np.random.default_rng(0).standard_normal(64)
    C = peetre_domination_check(f, ctx.calib, ctx.cubes, 1.0, 1.0)
    assert math.isfinite(C) and C > 0
    with pytest.raises(ValidationError):
        peetre_domination_check(f, ctx.calib, ctx.cubes, 0.0, 1.0)


def test_peetre_domination_single_point():
    sp = from_distance_matrix([[0.0]])
    op = eigendecompose(sp, np.zeros((1, 1)))
    cal = build_calibration(op, make_bump_pair(0.5, 2.0))
    C = peetre_domination_check(np.array([2.0]), cal, build_cubes(sp, 0.5, 0), 1.0, 1.0)
    # only level 0 is active; M_1 of one point is the value itself
    assert C == pytest.approx(1.0, rel=1e-12)


def test_refine_doc():
    assert len(refine_doc(generate("cycle", 8))["points"]) == 16
    assert len(refine_doc(generate("torus", 3, 4))["points"]) == 48
    assert len(refine_doc(generate("gasket", 1))["points"]) == 15
    assert refine_doc({"points": [0], "distance_matrix": [[0]]}) is None


def test_run_ids_unique():
    ids = [run_id(c, cfg) for c, cfg in verify_claims()]
    assert len(ids) == len(set(ids))
    assert "prop4.9_p0.5_tau4" in ids


def test_max_workers_env(monkeypatch):
    monkeypatch.setenv("HKFRAME_THREADS", "2")
    assert max_workers() == 2


def test_verify_all_deterministic(c64):
    runs = [("thm6.2", {}), ("thm7.8", {"p": 0.5}), ("prop4.9", {"p": 2.0, "tau": 0.5})]
    a = verify_all(c64, runs=runs)
    b = verify_all(c64, runs=runs)
    assert list(a) == ["thm6.2", "thm7.8_p0.5", "prop4.9_p2_tau0.5"]
    assert isinstance(a["prop4.9_p2_tau0.5"], HypothesisViolation)
    assert a["thm6.2"].to_dict() == b["thm6.2"].to_dict()
