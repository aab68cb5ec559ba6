"""Graph generators and graph Laplacians."""

from __future__ import annotations

import math
from itertools import product

import numpy as np

from .errors import InvalidSize, ValidationError
from .space import MetricMeasureSpace, load_space
from .spectral import SpectralOperator, eigendecompose

GASKET_BETA0 = math.log(5) / math.log(2)


def _doc(n: int, edges, measure="unit", laplacian="unnormalized", metadata=None) -> dict:
    edges = sorted({(min(a, b), max(a, b)) for a, b in edges})
    doc = {
        "points": list(range(n)),
        "edges": [[a, b, 1.0] for a, b in edges],
        "laplacian": laplacian,
        "metadata": dict(metadata or {}),
    }
    if measure == "degree":
        deg = np.zeros(n)
        for a, b in edges:
            deg[a] += 1
            deg[b] += 1
        doc["measure"] = deg.tolist()
    elif measure == "unit":
        doc["measure"] = [1.0] * n
    else:
        raise ValidationError(f"unknown measure {measure!r}")
    return doc


def cycle(n: int, **kw) -> dict:
    if n < 3:
        raise InvalidSize("cycle needs n >= 3")
    return _doc(n, [(i, (i + 1) % n) for i in range(n)], metadata={"kind": f"cycle({n})"}, **kw)


def path(n: int, **kw) -> dict:
    if n < 2:
        raise InvalidSize("path needs n >= 2")
    return _doc(n, [(i, i + 1) for i in range(n - 1)], metadata={"kind": f"path({n})"}, **kw)


def torus(n: int, m: int, **kw) -> dict:
    if n < 3 or m < 3:
        raise InvalidSize("torus needs n, m >= 3")
    idx = lambda i, j: i * m + j  # noqa: E731
    edges = []
    for i, j in product(range(n), range(m)):
        edges.append((idx(i, j), idx((i + 1) % n, j)))
        edges.append((idx(i, j), idx(i, (j + 1) % m)))
    return _doc(n * m, edges, metadata={"kind": f"torus({n},{m})"}, **kw)


def binary_tree(depth: int, **kw) -> dict:
    if depth < 1:
        raise InvalidSize("binary tree needs depth >= 1")
    n = 2 ** (depth + 1) - 1
    edges = [(i, (i - 1) // 2) for i in range(1, n)]
    return _doc(n, edges, metadata={"kind": f"binary_tree({depth})"}, **kw)


def gasket(level: int, **kw) -> dict:
    """Level-n Sierpinski graph: 3(3^n + 1)/2 vertices, 3^(n+1) edges."""
    if level < 1:
        raise InvalidSize("gasket needs level >= 1")
    side = 2**level
    tris = [((0, 0), (side, 0), (0, side))]
    for _ in range(level):
        nxt = []
        for a, b, c in tris:
            ab = ((a[0] + b[0]) // 2, (a[1] + b[1]) // 2)
            bc = ((b[0] + c[0]) // 2, (b[1] + c[1]) // 2)
            ca = ((c[0] + a[0]) // 2, (c[1] + a[1]) // 2)
            nxt += [(a, ab, ca), (ab, b, bc), (ca, bc, c)]
        tris = nxt
    verts = sorted({v for t in tris for v in t})
    pos = {v: i for i, v in enumerate(verts)}
    edges = []
    for a, b, c in tris:
        edges += [(pos[a], pos[b]), (pos[b], pos[c]), (pos[c], pos[a])]
    meta = {"kind": f"gasket({level})", "beta0_hint": GASKET_BETA0}
    return _doc(len(verts), edges, metadata=meta, **kw)


def random_geometric(n: int, radius: float, seed: int = 0, **kw) -> dict:
    """Uniform points in the unit square joined when closer than ``radius``; hop metric."""
    if n < 2:
        raise InvalidSize("random geometric graph needs n >= 2")
    pts = np.random.default_rng(seed).random((n, 2))
    dist = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
    edges = [(i, j) for i in range(n) for j in range(i + 1, n) if dist[i, j] < radius]
    doc = _doc(n, edges, metadata={"kind": f"random_geometric({n},{radius},{seed})", "coordinates": pts.tolist()}, **kw)
    if not _connected(n, edges):
        raise InvalidSize("random geometric graph is disconnected; increase radius or n")
    return doc


def _connected(n, edges) -> bool:
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in edges:
        parent[find(a)] = find(b)
    return len({find(i) for i in range(n)}) == 1


GENERATORS = {
    "cycle": cycle,
    "path": path,
    "torus": torus,
    "binary_tree": binary_tree,
    "gasket": gasket,
    "random_geometric": random_geometric,
}


def generate(kind: str, *args, **kw) -> dict:
    """Space document for a named family, e.g. ``generate('cycle', 64)``."""
    if kind not in GENERATORS:
        raise ValidationError(f"unknown generator {kind!r}")
    if kw.get("laplacian") == "random_walk_symmetrized" and "measure" not in kw:
        kw["measure"] = "degree"
    return GENERATORS[kind](*args, **kw)


def parse_kind(text: str) -> tuple[str, list]:
    """'cycle(64)' -> ('cycle', [64])."""
    text = text.strip()
    if "(" not in text:
        return text, []
    name, rest = text.split("(", 1)
    args = []
    for tok in rest.rstrip(")").split(","):
        tok = tok.strip()
        if tok:
            args.append(float(tok) if any(ch in tok for ch in ".e") else int(tok))
    return name.strip(), args


def graph_laplacian(space: MetricMeasureSpace, kind: str = "unnormalized") -> np.ndarray:
    """Constant-annihilating graph Laplacian, self-adjoint in L^2(mu).

    ``unnormalized``: (L f)(x) = mu(x)^{-1} sum_y w_xy (f(x) - f(y)), which is D - A for
    unit measure. ``random_walk_symmetrized``: I - D^{-1} A, self-adjoint when mu is
    the degree measure. Conductances are reciprocal edge lengths.
    """
    if space.edges is None:
        raise ValidationError("a generated Laplacian needs an edge list")
    n = space.n
    A = np.zeros((n, n))
    for a, b, w in space.edges:
        if a != b:
            A[a, b] = A[b, a] = 1.0 / w
    deg = A.sum(axis=1)
    if kind == "unnormalized":
        return (np.diag(deg) - A) / space.mu[:, None]
    if kind == "random_walk_symmetrized":
        if np.any(deg == 0):
            raise ValidationError("isolated vertex")
        return np.eye(n) - A / deg[:, None]
    raise ValidationError(f"unknown Laplacian kind {kind!r}")


def operator_from_doc(space: MetricMeasureSpace, doc: dict, override: str | None = None) -> SpectralOperator:
    lap = override or doc.get("laplacian", "unnormalized")
    if isinstance(lap, str):
        return eigendecompose(space, graph_laplacian(space, lap), source=lap)
    return eigendecompose(space, np.asarray(lap, dtype=float), source="matrix")


def space_and_operator(doc: dict, laplacian: str | None = None) -> tuple[MetricMeasureSpace, SpectralOperator]:
    space = load_space(doc)
    return space, operator_from_doc(space, doc, laplacian)
