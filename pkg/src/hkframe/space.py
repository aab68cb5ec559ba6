"""Finite metric measure spaces, open balls and measured geometric constants."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Hashable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import shortest_path

from .errors import (
    AsymmetricDistance,
    NonpositiveMeasure,
    TriangleInequalityViolation,
    UnknownPoint,
    ValidationError,
)

_REL_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class MetricMeasureSpace:
    """A finite set with a metric matrix ``rho`` and positive weights ``mu``.

    Construct through :func:`from_distance_matrix`, :func:`from_edges` or
    :func:`load_space`; those validate the metric axioms.
    """

    point_ids: tuple
    rho: np.ndarray
    mu: np.ndarray
    edges: tuple | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.rho.setflags(write=False)
        self.mu.setflags(write=False)

    @property
    def n(self) -> int:
        return len(self.point_ids)

    @property
    def total_measure(self) -> float:
        return float(self.mu.sum())

    @property
    def diam(self) -> float:
        return float(self.rho.max()) if self.n > 1 else 0.0

    @property
    def min_distance(self) -> float:
        if self.n < 2:
            return np.inf
        off = self.rho[~np.eye(self.n, dtype=bool)]
        return float(off.min())

    def index(self, x: Hashable) -> int:
        try:
            return self._lookup[x]
        except KeyError:
            raise UnknownPoint(f"unknown point {x!r}") from None

    @property
    def _lookup(self) -> dict:
        cache = self.__dict__.get("_lookup_cache")
        if cache is None:
            cache = {pid: i for i, pid in enumerate(self.point_ids)}
            object.__setattr__(self, "_lookup_cache", cache)
        return cache

    def ball_measures(self, r: float) -> np.ndarray:
        """mu(B(x, r)) for every x, as a vector."""
        return (np.where(self.rho < r, 1.0, 0.0) @ self.mu) if r > 0 else np.zeros(self.n)

    def ball_measures_nonempty(self, r: float) -> tuple[np.ndarray, bool]:
        """Ball measures with the empty-ball fallback B(x, r] union {x}.

        The flag is True when some strict ball was empty and the fallback was used.
        """
        vol = self.ball_measures(r)
        empty = vol <= 0
        if not empty.any():
            return vol, False
        closed = np.where(self.rho <= r, 1.0, 0.0)
        np.fill_diagonal(closed, 1.0)
        vol = np.where(empty, closed @ self.mu, vol)
        return vol, True


def _validate(rho: np.ndarray, mu: np.ndarray) -> None:
    n = rho.shape[0]
    if rho.shape != (n, n):
        raise ValidationError(f"distance matrix must be square, got {rho.shape}")
    if mu.shape != (n,):
        raise ValidationError(f"measure has length {mu.shape}, expected {n}")
    if not np.all(np.isfinite(rho)):
        raise ValidationError("distance matrix has non-finite entries (disconnected graph?)")
    bad = np.flatnonzero(~(mu > 0))
    if bad.size:
        raise NonpositiveMeasure(f"measure at index {int(bad[0])} is {mu[bad[0]]!r}, must be > 0")
    scale = max(float(np.abs(rho).max()), 1.0)
    asym = np.abs(rho - rho.T)
    if asym.max() > _REL_TOL * scale:
        i, j = np.unravel_index(np.argmax(asym), asym.shape)
        raise AsymmetricDistance(f"rho[{i}][{j}] = {rho[i, j]} but rho[{j}][{i}] = {rho[j, i]}")
    if np.any(np.diag(rho) != 0):
        raise ValidationError("distance matrix must vanish on the diagonal")
    off = rho[~np.eye(n, dtype=bool)]
    if off.size and off.min() <= 0:
        raise ValidationError("distinct points must have positive distance")
    for y in range(n):
        excess = rho - (rho[:, y][:, None] + rho[y, :][None, :])
        k = int(np.argmax(excess))
        if excess.flat[k] > _REL_TOL * scale:
            x, z = np.unravel_index(k, excess.shape)
            raise TriangleInequalityViolation((int(x), y, int(z)), excess.flat[k])


def from_distance_matrix(
    rho: Any,
    mu: Any = None,
    point_ids: Sequence | None = None,
    metadata: dict | None = None,
    edges: Sequence | None = None,
) -> MetricMeasureSpace:
    rho = np.array(rho, dtype=float)
    n = rho.shape[0]
    mu = np.ones(n) if mu is None else np.array(mu, dtype=float)
    _validate(rho, mu)
    ids = tuple(range(n)) if point_ids is None else tuple(point_ids)
    if len(ids) != n or len(set(ids)) != n:
        raise ValidationError("point ids must be unique and match the matrix size")
    return MetricMeasureSpace(
        point_ids=ids,
        rho=rho,
        mu=mu,
        edges=None if edges is None else tuple(tuple(e) for e in edges),
        metadata=dict(metadata or {}),
    )


def from_edges(
    point_ids: Sequence,
    edges: Sequence,
    mu: Any = None,
    metadata: dict | None = None,
) -> MetricMeasureSpace:
    """Graph metric: shortest-path distances over a weighted edge list of (id, id, weight)."""
    ids = tuple(point_ids)
    pos = {p: i for i, p in enumerate(ids)}
    n = len(ids)
    rows, cols, w = [], [], []
    norm_edges = []
    for e in edges:
        a, b = e[0], e[1]
        wt = float(e[2]) if len(e) > 2 else 1.0
        if a not in pos or b not in pos:
            raise UnknownPoint(f"edge ({a!r}, {b!r}) references an unknown point")
        if not wt > 0:
            raise ValidationError(f"edge ({a!r}, {b!r}) has nonpositive weight {wt}")
        rows.append(pos[a])
        cols.append(pos[b])
        w.append(wt)
        norm_edges.append((pos[a], pos[b], wt))
    graph = coo_matrix((w, (rows, cols)), shape=(n, n)).tocsr()
    rho = shortest_path(graph, method="D", directed=False)
    return from_distance_matrix(rho, mu, ids, metadata, edges=norm_edges)


def load_space(source: dict | str | Path) -> MetricMeasureSpace:
    """Build a space from a parsed document or a JSON file path.

    Fields: ``points``, one of ``distance_matrix`` / ``edges``, optional ``measure``
    and ``metadata``.
    """
    if isinstance(source, (str, Path)):
        source = json.loads(Path(source).read_text())
    points = source.get("points")
    has_d = "distance_matrix" in source
    has_e = "edges" in source
    if has_d == has_e:
        raise ValidationError("space document needs exactly one of 'distance_matrix' or 'edges'")
    if points is None:
        n = len(source["distance_matrix"]) if has_d else None
        if n is None:
            raise ValidationError("'points' is required with an edge list")
        points = list(range(n))
    mu = source.get("measure")
    if isinstance(mu, dict):
        mu = [mu.get(str(p), mu.get(p, 1.0)) for p in points]
    meta = source.get("metadata", {})
    if has_d:
        return from_distance_matrix(source["distance_matrix"], mu, points, meta)
    return from_edges(points, source["edges"], mu, meta)


def normalize_min_distance(space: MetricMeasureSpace) -> MetricMeasureSpace:
    """Rescale distances so the smallest positive distance is 1."""
    scale = space.min_distance
    edges = None
    if space.edges is not None:
        edges = [(a, b, w / scale) for a, b, w in space.edges]
    return MetricMeasureSpace(space.point_ids, space.rho / scale, space.mu.copy(), edges and tuple(edges), dict(space.metadata))


def ball(space: MetricMeasureSpace, x: Hashable, r: float) -> tuple[frozenset, float]:
    """Open ball B(x, r) = {y : rho(x, y) < r} and its measure."""
    if r < 0:
        raise ValidationError("radius must be nonnegative")
    i = space.index(x)
    members = np.flatnonzero(space.rho[i] < r)
    return frozenset(space.point_ids[k] for k in members), float(space.mu[members].sum())


@dataclass
class GeometryReport:
    K: float
    d: float
    K_star: float | None
    kappa: float | None
    c0: float
    diam: float
    radius_grid: list
    reverse_doubling_checkable: bool
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "d": self.d,
            "K_star": self.K_star,
            "kappa": self.kappa,
            "c0": self.c0,
            "diam": self.diam,
            "radius_grid": list(self.radius_grid),
            "reverse_doubling_checkable": self.reverse_doubling_checkable,
            "flags": list(self.flags),
        }


def radius_grid(space: MetricMeasureSpace) -> np.ndarray:
    """Radii at which every ball-ratio step is represented.

    Distinct positive distances, their halves (breakpoints of r -> mu(B(x, 2r))),
    midpoints between consecutive distances, and one radius past the diameter.
    """
    dist = np.unique(space.rho)
    pos = dist[dist > 0]
    if pos.size == 0:
        return np.array([1.0])
    mids = 0.5 * (dist[:-1] + dist[1:])
    tail = pos[-1] + 0.5 * (pos[-1] - (dist[-2] if dist.size > 1 else 0.0))
    return np.unique(np.concatenate([pos, pos / 2, mids, [tail]]))


def _ball_table(space: MetricMeasureSpace, radii: np.ndarray) -> np.ndarray:
    """Table V[x, i] = mu(B(x, radii[i]))."""
    order = np.argsort(space.rho, axis=1, kind="stable")
    sorted_d = np.take_along_axis(space.rho, order, axis=1)
    cum = np.concatenate([np.zeros((space.n, 1)), np.cumsum(space.mu[order], axis=1)], axis=1)
    out = np.empty((space.n, radii.size))
    for x in range(space.n):
        idx = np.searchsorted(sorted_d[x], radii, side="left")
        out[x] = cum[x, idx]
    return out


def geometry_report(space: MetricMeasureSpace) -> GeometryReport:
    if space.n < 2:
        raise ValidationError("geometry report needs at least two points")
    grid = radius_grid(space)
    small = _ball_table(space, grid)
    big = _ball_table(space, 2 * grid)
    ratio = big / small
    K = float(ratio.max())
    diam = space.diam
    mask = grid <= diam / 3
    flags = []
    if mask.any():
        K_star = float(ratio[:, mask].min())
        kappa = float(np.log2(K_star))
        checkable = True
    else:
        K_star = kappa = None
        checkable = False
        flags.append("reverse doubling not checkable: no radius r <= diam/3")
    c0 = float(space.ball_measures(1.0).min())
    if c0 <= 0:
        flags.append("some unit ball is empty; rescale distances")
    return GeometryReport(
        K=K,
        d=float(np.log2(K)),
        K_star=K_star,
        kappa=kappa,
        c0=c0,
        diam=diam,
        radius_grid=[float(r) for r in grid],
        reverse_doubling_checkable=checkable,
        flags=flags,
    )
