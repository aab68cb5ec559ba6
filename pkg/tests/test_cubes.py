import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hkframe.cubes import Cube, CubeSystem, build_cubes, subcube_grid, verify_cube_axioms
from hkframe.errors import InvalidDelta, ValidationError
from hkframe.generate import generate
from hkframe.space import from_distance_matrix, load_space

GEOMETRIES = [
    ("cycle", (16,)),
    ("path", (8,)),
    ("torus", (4, 5)),
    ("binary_tree", (3,)),
    ("gasket", (2,)),
    ("random_geometric", (25, 0.4, 3)),
]


@pytest.fixture(scope="module")
def p8_cubes():
    return build_cubes(load_space(generate("path", 8)), 0.5, 0)


def test_endpoint_levels(p8_cubes):
    cs = p8_cubes
    for c in cs.cubes(cs.k_max):
        assert c.members == (c.center,)
    (top,) = cs.cubes(cs.k_min)
    assert set(top.members) == set(range(8))


def test_path8_axioms(p8_cubes):
    rep = verify_cube_axioms(p8_cubes)
    assert rep.ok
    assert rep.c_nat > 0
    assert rep.C_nat <= 4


def test_path8_C_nat_by_diameter_scan(p8_cubes):
    cs = p8_cubes
    worst = 0.0
    for k in range(cs.k_min, cs.k_max + 1):
        for c in cs.cubes(k):
            m = np.array(c.members)
            worst = max(worst, cs.space.rho[np.ix_(m, m)].max() / cs.delta**k)
    assert verify_cube_axioms(cs).C_nat == pytest.approx(max(worst, verify_cube_axioms(cs).c_nat))


def test_overlapping_siblings_fail_partition():
    sp = load_space(generate("path", 4))
    good = build_cubes(sp, 0.5, 0)
    levels = {k: list(v) for k, v in good.levels.items()}
    k = good.k_max
    first, other = levels[k][0], levels[k][1]
    levels[k][0] = Cube(first.id, tuple(sorted(set(first.members) | {other.members[0]})), first.center, first.parent)
    bad = CubeSystem(sp, good.delta, 0, good.k_min, good.k_max, levels)
    rep = verify_cube_axioms(bad)
    assert not rep.passed["partition"]
    assert "cubes" in rep.witnesses["partition"]


@pytest.mark.parametrize("kind,args", GEOMETRIES)
@pytest.mark.parametrize("delta", [0.4, 0.5, 0.6])
def test_axioms_on_generated(kind, args, delta):
    cs = build_cubes(load_space(generate(kind, *args)), delta, 0)
    rep = verify_cube_axioms(cs)
    assert rep.ok, rep.witnesses
    assert rep.c_nat > 0


def test_partition_telescoping_exact():
    sp = load_space(generate("gasket", 2, measure="degree"))
    cs = build_cubes(sp, 0.5, 0)
    for k in range(cs.k_min, cs.k_max + 1):
        assert sorted(m for c in cs.cubes(k) for m in c.members) == list(range(sp.n))
        assert cs.measures(k).sum() == pytest.approx(sp.total_measure, rel=0, abs=1e-12)


def test_determinism():
    sp = load_space(generate("random_geometric", 30, 0.4, 2))
    a, b = build_cubes(sp, 0.5, 7), build_cubes(sp, 0.5, 7)
    assert a.to_dict() == b.to_dict()


def test_roundtrip_dict(p8_cubes):
    again = CubeSystem.from_dict(p8_cubes.space, p8_cubes.to_dict())
    assert again.to_dict() == p8_cubes.to_dict()


def test_invalid_delta():
    sp = load_space(generate("path", 3))
    for d in (0.0, 1.0, 1.5):
        with pytest.raises(InvalidDelta):
            build_cubes(sp, d, 0)


def test_single_point_space():
    sp = from_distance_matrix([[0.0]])
    cs = build_cubes(sp, 0.5, 0)
    assert cs.k_min == cs.k_max
    assert verify_cube_axioms(cs).ok


def test_grid_children_are_subcubes(p8_cubes):
    cs = p8_cubes
    grid = subcube_grid(cs, j0=1)
    for j in range(0, cs.k_max):
        g = grid.level(j)
        assert g.sub_level == j + 1
        for t, sid in zip(g.tau, g.sub_ids):
            assert cs.cubes(j + 1)[sid].parent == t
        for t in set(g.tau.tolist()):
            kids = {c.id for c in cs.cubes(j + 1) if c.parent == t}
            assert kids == set(g.sub_ids[g.tau == t].tolist())


def test_grid_singletons_at_finest(p8_cubes):
    cs = p8_cubes
    grid = subcube_grid(cs, j0=cs.k_max)
    g = grid.level(0)
    assert all(m.size == 1 for m in g.members)
    assert np.array_equal(np.sort(g.samples), np.arange(cs.space.n))


def test_grid_center_rule_and_measure_bound(p8_cubes):
    cs = p8_cubes
    grid = subcube_grid(cs, j0=1, sample_rule="center")
    g = grid.level(0)
    for sid, xi in zip(g.sub_ids, g.samples):
        assert cs.cubes(1)[sid].center == xi
    parent_meas = cs.measures(0)
    for t, m in zip(g.tau, g.measures):
        assert m <= parent_meas[t] + 1e-15


def test_grid_sample_rules(p8_cubes):
    a = subcube_grid(p8_cubes, 1, sample_rule="random(3)").level(0)
    b = subcube_grid(p8_cubes, 1, sample_rule="random(3)").level(0)
    assert np.array_equal(a.samples, b.samples)
    for mem, xi in zip(a.members, a.samples):
        assert xi in mem
    mn = subcube_grid(p8_cubes, 1, sample_rule="min_id").level(0)
    assert all(xi == mem.min() for mem, xi in zip(mn.members, mn.samples))
    with pytest.raises(ValidationError):
        subcube_grid(p8_cubes, 1, sample_rule="median")
    with pytest.raises(ValidationError):
        subcube_grid(p8_cubes, 0)


def test_grid_clamps_past_finest(p8_cubes):
    g = subcube_grid(p8_cubes, j0=3).level(p8_cubes.k_max)
    assert g.clamped
    assert g.sub_level == p8_cubes.k_max


@settings(max_examples=20, deadline=None)
@given(st.integers(4, 30), st.integers(0, 50), st.sampled_from([0.4, 0.5, 0.6]))
def test_axioms_property_random_geometric(n, seed, delta):
    try:
        doc = generate("random_geometric", n, 0.5, seed)
    except ValidationError:
        return
    cs = build_cubes(load_space(doc), delta, seed)
    assert verify_cube_axioms(cs).ok
