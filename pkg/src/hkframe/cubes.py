"""Christ-type dyadic cube systems and the subcube sample grids built on them."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidDelta, ValidationError
from .space import MetricMeasureSpace


@dataclass(frozen=True)
class Cube:
    id: int
    members: tuple
    center: int
    parent: int | None


@dataclass(eq=False)
class CubeSystem:
    """Nested partitions indexed by level k in [k_min, k_max].

    Level k cubes have diameter comparable to delta**k; larger k is finer.
    Point references are indices into ``space.point_ids``.
    """

    space: MetricMeasureSpace
    delta: float
    seed: int
    k_min: int
    k_max: int
    levels: dict
    c_nat: float = float("nan")
    C_nat: float = float("nan")

    def cubes(self, k: int) -> list:
        return self.levels[self.clamp(k)]

    def clamp(self, k: int) -> int:
        return min(max(k, self.k_min), self.k_max)

    def labels(self, k: int) -> np.ndarray:
        """labels[x] = id of the level-k cube containing x (levels are clamped)."""
        cache = self.__dict__.setdefault("_labels", {})
        k = self.clamp(k)
        if k not in cache:
            lab = np.full(self.space.n, -1, dtype=int)
            for c in self.levels[k]:
                lab[list(c.members)] = c.id
            cache[k] = lab
        return cache[k]

    def measures(self, k: int) -> np.ndarray:
        mu = self.space.mu
        return np.array([mu[list(c.members)].sum() for c in self.cubes(k)])

    def ancestor(self, k: int, cube_id: int, target: int) -> int:
        """Id of the level-``target`` cube containing cube ``cube_id`` of level k."""
        k = self.clamp(k)
        target = self.clamp(target)
        if target > k:
            raise ValidationError("ancestor level must be coarser")
        cid = cube_id
        while k > target:
            cid = self.levels[k][cid].parent
            k -= 1
        return cid

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "seed": self.seed,
            "k_min": self.k_min,
            "k_max": self.k_max,
            "c_nat": self.c_nat,
            "C_nat": self.C_nat,
            "levels": {
                str(k): [
                    {"id": c.id, "members": list(c.members), "center": c.center, "parent": c.parent}
                    for c in self.levels[k]
                ]
                for k in range(self.k_min, self.k_max + 1)
            },
        }

    @classmethod
    def from_dict(cls, space: MetricMeasureSpace, doc: dict) -> "CubeSystem":
        levels = {
            int(k): [Cube(c["id"], tuple(c["members"]), c["center"], c["parent"]) for c in cubes]
            for k, cubes in doc["levels"].items()
        }
        return cls(
            space=space,
            delta=float(doc["delta"]),
            seed=int(doc["seed"]),
            k_min=int(doc["k_min"]),
            k_max=int(doc["k_max"]),
            levels=levels,
            c_nat=float(doc.get("c_nat", float("nan"))),
            C_nat=float(doc.get("C_nat", float("nan"))),
        )


def level_range(space: MetricMeasureSpace, delta: float) -> tuple[int, int]:
    """(k_min, k_max): largest k with delta**k > diam, smallest k with delta**k < min distance."""
    if space.n == 1:
        return 0, 0
    lg = math.log(delta)
    k_max = math.floor(math.log(space.min_distance) / lg) + 1
    while delta ** (k_max - 1) < space.min_distance:
        k_max -= 1
    while not delta**k_max < space.min_distance:
        k_max += 1
    k_min = math.ceil(math.log(space.diam) / lg) - 1
    while delta ** (k_min + 1) > space.diam:
        k_min += 1
    while not delta**k_min > space.diam:
        k_min -= 1
    return k_min, k_max


def build_cubes(space: MetricMeasureSpace, delta: float = 0.5, seed: int = 0) -> CubeSystem:
    """Greedy hierarchical nets, fine to coarse.

    At level k the net is a maximal subset of the level-(k+1) centers with pairwise
    distance > delta**k, scanned in a seed-determined order. Each finer cube joins the
    nearest net point, ties broken by lowest point index.
    """
    if not 0 < delta < 1:
        raise InvalidDelta(f"delta must lie in (0, 1), got {delta}")
    rho = space.rho
    k_min, k_max = level_range(space, delta)
    order = np.random.default_rng(seed).permutation(space.n)
    rank = np.empty(space.n, dtype=int)
    rank[order] = np.arange(space.n)

    levels: dict = {}
    finest = [Cube(i, (i,), i, None) for i in range(space.n)]
    levels[k_max] = finest
    prev = finest
    for k in range(k_max - 1, k_min - 1, -1):
        sep = delta**k
        cand = sorted((c.center for c in prev), key=lambda z: rank[z])
        net: list = []
        for z in cand:
            if all(rho[z, w] > sep for w in net):
                net.append(z)
        net.sort()
        net_arr = np.array(net)
        groups: dict = {z: [] for z in net}
        assign = []
        for c in prev:
            dists = rho[c.center, net_arr]
            # argmin returns the first minimum, i.e. the lowest point index
            z = int(net_arr[int(np.argmin(dists))])
            groups[z].append(c)
            assign.append(z)
        new_level = []
        cid_of = {}
        for i, z in enumerate(net):
            members = tuple(sorted(m for c in groups[z] for m in c.members))
            new_level.append(Cube(i, members, z, None))
            cid_of[z] = i
        levels[k + 1] = [Cube(c.id, c.members, c.center, cid_of[z]) for c, z in zip(prev, assign)]
        levels[k] = new_level
        prev = new_level
    if k_min == k_max:
        levels[k_min] = [Cube(0, tuple(range(space.n)), 0, None)]
    system = CubeSystem(space, float(delta), int(seed), k_min, k_max, levels)
    rep = verify_cube_axioms(system)
    system.c_nat = rep.c_nat
    system.C_nat = rep.C_nat
    return system


@dataclass
class AxiomReport:
    passed: dict
    witnesses: dict
    c_nat: float
    C_nat: float

    @property
    def ok(self) -> bool:
        return all(self.passed.values())

    def to_dict(self) -> dict:
        return {
            "passed": dict(self.passed),
            "witnesses": {k: v for k, v in self.witnesses.items()},
            "c_nat": self.c_nat,
            "C_nat": self.C_nat,
            "ok": self.ok,
        }


def verify_cube_axioms(cubes: CubeSystem) -> AxiomReport:
    """Brute-force check of partition, nesting, endpoint levels and the size axioms.

    Reports the tightest constants: C_nat = max diam(Q)/delta**k and
    c_nat = min dist(center, complement of Q)/delta**k over proper cubes.
    """
    space = cubes.space
    n = space.n
    rho = space.rho
    passed = {"partition": True, "nesting": True, "centers": True, "endpoints": True, "size": True}
    wit: dict = {}
    c_nat = math.inf
    C_meas = 0.0
    for k in range(cubes.k_min, cubes.k_max + 1):
        level = cubes.levels.get(k)
        if level is None:
            passed["partition"] = False
            wit.setdefault("partition", {"missing_level": k})
            continue
        owner = {}
        for c in level:
            for m in c.members:
                if m in owner and passed["partition"]:
                    passed["partition"] = False
                    wit["partition"] = {"level": k, "cubes": [owner[m], c.id], "point": int(m)}
                owner.setdefault(m, c.id)
        if len(owner) != n and passed["partition"]:
            passed["partition"] = False
            missing = sorted(set(range(n)) - set(owner))
            wit["partition"] = {"level": k, "uncovered": missing[:5]}
        for c in level:
            if c.center not in c.members and passed["centers"]:
                passed["centers"] = False
                wit["centers"] = {"level": k, "cube": c.id}
            if k > cubes.k_min:
                parent_level = cubes.levels.get(k - 1, [])
                ok = c.parent is not None and 0 <= c.parent < len(parent_level)
                if ok:
                    ok = set(c.members) <= set(parent_level[c.parent].members)
                if not ok and passed["nesting"]:
                    passed["nesting"] = False
                    wit["nesting"] = {"level": k, "cube": c.id, "parent": c.parent}
            idx = np.array(c.members)
            scale = cubes.delta**k
            diam = float(rho[np.ix_(idx, idx)].max())
            C_meas = max(C_meas, diam / scale)
            outside = np.setdiff1d(np.arange(n), idx)
            if outside.size:
                c_nat = min(c_nat, float(rho[c.center, outside].min()) / scale)
    if cubes.k_max in cubes.levels and any(len(c.members) != 1 for c in cubes.levels[cubes.k_max]):
        passed["endpoints"] = False
        wit["endpoints"] = {"level": cubes.k_max, "reason": "finest level has a non-singleton cube"}
    if cubes.k_min in cubes.levels and len(cubes.levels[cubes.k_min]) != 1:
        passed["endpoints"] = False
        wit["endpoints"] = {"level": cubes.k_min, "reason": "coarsest level is not a single cube"}
    if not math.isfinite(c_nat):
        c_nat = 1.0
    if not c_nat > 0:
        passed["size"] = False
        wit["size"] = {"c_nat": c_nat}
    return AxiomReport(passed, wit, float(c_nat), float(max(C_meas, c_nat)))


@dataclass
class GridLevel:
    """Subcubes of every level-j cube, flattened in (tau, nu) order."""

    j: int
    cube_level: int
    sub_level: int
    clamped: bool
    tau: np.ndarray
    nu: np.ndarray
    sub_ids: np.ndarray
    samples: np.ndarray
    measures: np.ndarray
    members: list
    labels: np.ndarray  # labels[x] = flat subcube index containing x

    @property
    def size(self) -> int:
        return int(self.samples.size)


@dataclass(eq=False)
class SubcubeGrid:
    cubes: CubeSystem
    j0: int = 1
    eps0: float = 0.1
    sample_rule: str = "center"
    seed: int = 0
    finest: int | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def level(self, j: int) -> GridLevel:
        if j not in self._cache:
            self._cache[j] = self._build(j)
        return self._cache[j]

    def _sample(self, level: int, cube: Cube) -> int:
        rule = self.sample_rule
        if rule == "center":
            return int(cube.center)
        if rule == "min_id":
            return int(min(cube.members))
        if rule == "random":
            rng = np.random.default_rng([self.seed, level - self.cubes.k_min, cube.id])
            return int(cube.members[int(rng.integers(len(cube.members)))])
        raise ValidationError(f"unknown sample rule {rule!r}")

    def _build(self, j: int) -> GridLevel:
        cs = self.cubes
        top = cs.k_max if self.finest is None else min(cs.k_max, self.finest)
        want = j + self.j0
        sub_level = min(want, top)
        cube_level = cs.clamp(j)
        sub_level = max(sub_level, cube_level)
        clamped = sub_level != want
        subs = cs.cubes(sub_level)
        taus = np.array([cs.ancestor(sub_level, c.id, cube_level) for c in subs], dtype=int)
        order = np.lexsort((np.arange(len(subs)), taus))
        tau = taus[order]
        nu = np.zeros_like(tau)
        for i in range(1, tau.size):
            nu[i] = nu[i - 1] + 1 if tau[i] == tau[i - 1] else 0
        mu = cs.space.mu
        members = [np.array(subs[i].members) for i in order]
        labels = np.empty(cs.space.n, dtype=int)
        for flat, mem in enumerate(members):
            labels[mem] = flat
        return GridLevel(
            j=j,
            cube_level=cube_level,
            sub_level=sub_level,
            clamped=clamped,
            tau=tau,
            nu=nu,
            sub_ids=np.array([subs[i].id for i in order], dtype=int),
            samples=np.array([self._sample(sub_level, subs[i]) for i in order], dtype=int),
            measures=np.array([mu[m].sum() for m in members]),
            members=members,
            labels=labels,
        )

    def to_dict(self, levels) -> dict:
        out = {
            "j0": self.j0,
            "eps0": self.eps0,
            "sample_rule": self.sample_rule,
            "seed": self.seed,
            "finest": self.finest,
            "levels": {},
        }
        for j in levels:
            g = self.level(j)
            out["levels"][str(j)] = {
                "cube_level": g.cube_level,
                "sub_level": g.sub_level,
                "clamped": g.clamped,
                "tau": g.tau.tolist(),
                "nu": g.nu.tolist(),
                "sub_ids": g.sub_ids.tolist(),
                "samples": g.samples.tolist(),
            }
        return out


def subcube_grid(
    cubes: CubeSystem,
    j0: int = 1,
    eps0: float = 0.1,
    sample_rule: str = "center",
    seed: int = 0,
    finest: int | None = None,
) -> SubcubeGrid:
    """Level-(j+j0) descendants of every level-j cube with one sample point each.

    Levels past ``k_max`` (or past ``finest`` when given) are clamped; the
    ``clamped`` flag of each :class:`GridLevel` records it.
    """
    if j0 < 1:
        raise ValidationError("j0 must be a positive integer")
    if not 0 < eps0 < 1:
        raise ValidationError("eps0 must lie in (0, 1)")
    if sample_rule.startswith("random(") and sample_rule.endswith(")"):
        seed = int(sample_rule[7:-1])
        sample_rule = "random"
    if sample_rule not in ("center", "min_id", "random"):
        raise ValidationError(f"unknown sample rule {sample_rule!r}")
    return SubcubeGrid(cubes, int(j0), float(eps0), sample_rule, int(seed), finest)
