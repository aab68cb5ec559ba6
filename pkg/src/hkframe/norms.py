"""Besov-type and Triebel-Lizorkin-type (quasi-)norms and their characterizations.

Every norm reduces to the mixed norms ell^q(L^p_tau) (family B) or
L^p_tau(ell^q) (family F) of a weighted level sequence, supremized over dyadic cubes.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .calibration import LPCalibration
from .cubes import CubeSystem
from .errors import InvalidM, InvalidParams, ValidationError
from .space import MetricMeasureSpace, geometry_report
from .spectral import SpectralOperator

INF = math.inf


@dataclass(frozen=True)
class SpaceParams:
    s: float = 0.0
    tau: float = 0.0
    p: float = 2.0
    q: float = 2.0
    family: str = "B"
    variant: str = "plain"
    k_range_policy: str = "full"

    def __post_init__(self):
        if self.family not in ("B", "F"):
            raise InvalidParams(f"family must be B or F, got {self.family!r}")
        if self.variant not in ("plain", "tilde"):
            raise InvalidParams(f"variant must be plain or tilde, got {self.variant!r}")
        if self.k_range_policy not in ("full", "nonnegative_only"):
            raise InvalidParams(f"unknown k-range policy {self.k_range_policy!r}")
        if not self.p > 0 or not self.q > 0:
            raise InvalidParams("p and q must be positive")
        if self.tau < 0:
            raise InvalidParams("tau must be nonnegative")
        if self.family == "F" and self.p == INF:
            raise InvalidParams("family F requires p < infinity")

    def with_(self, **kw) -> "SpaceParams":
        return replace(self, **kw)


@dataclass
class NormBreakdown:
    """Value of a norm together with the cube attaining the outer supremum.

    ``per_level_terms`` holds, for the maximizing cube, the weighted level values on
    the cube's points (rows follow ``levels``); :meth:`recompute` rebuilds the value.
    """

    value: float
    argmax_cube: tuple
    levels: list
    per_level_terms: np.ndarray
    cube_weights: np.ndarray
    cube_measure: float
    params: SpaceParams
    level_weights: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    def recompute(self) -> float:
        return _cube_value(
            self.per_level_terms,
            self.cube_weights,
            self.cube_measure,
            self.params,
            self.level_weights,
        )

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "argmax_cube": list(self.argmax_cube),
            "levels": list(self.levels),
            "per_level_terms": self.per_level_terms.tolist(),
            "cube_measure": self.cube_measure,
            "params": self.params.__dict__,
            "extra": self.extra,
        }

    def __float__(self) -> float:
        return self.value


def _pow_sum(x: np.ndarray, r: float, axis: int, weights=None) -> np.ndarray:
    """(sum w x^r)^(1/r), or max when r is infinite. x is nonnegative."""
    if r == INF:
        return x.max(axis=axis) if x.shape[axis] else np.zeros(np.delete(x.shape, axis))
    xr = x**r
    if weights is not None:
        shape = [1] * x.ndim
        shape[axis] = -1
        xr = xr * np.reshape(weights, shape)
    return xr.sum(axis=axis) ** (1.0 / r)


def _cube_value(T: np.ndarray, mu: np.ndarray, measure: float, params: SpaceParams, level_weights=None) -> float:
    """Mixed norm of the rows of T (levels x points in one cube), times |Q|^-tau."""
    p, q = params.p, params.q
    if T.shape[0] == 0:
        return 0.0
    if params.family == "B" or p == q:
        if p == INF:
            inner = T.max(axis=1)
        else:
            inner = ((T**p) @ mu) ** (1.0 / p)
        val = _pow_sum(inner, q, 0, level_weights)
    else:
        h = _pow_sum(T, q, 0, level_weights)
        val = ((h**p) @ mu) ** (1.0 / p)
    return float(measure ** (-params.tau) * val)


def k_levels(cubes: CubeSystem, policy: str) -> list:
    """Cube levels needed for the outer supremum.

    Levels below k_min repeat the single cube M with the same inner sum as level
    min(k_min, 0); levels above k_max repeat the singletons with fewer terms, so they
    never raise the supremum.
    """
    lo = min(cubes.k_min, 0) if policy == "full" else 0
    hi = max(cubes.k_max, lo)
    return list(range(lo, hi + 1))


def _membership(cubes: CubeSystem, k: int) -> tuple[np.ndarray, np.ndarray]:
    cache = cubes.__dict__.setdefault("_membership", {})
    kk = cubes.clamp(k)
    if kk not in cache:
        lab = cubes.labels(kk)
        C = np.zeros((lab.size, lab.max() + 1))
        C[np.arange(lab.size), lab] = 1.0
        cache[kk] = (lab, C)
    return cache[kk]


def mixed_norm(
    G: np.ndarray,
    params: SpaceParams,
    cubes: CubeSystem,
    levels: list | None = None,
    level_weights: np.ndarray | None = None,
    ks: list | None = None,
    start=None,
) -> NormBreakdown:
    """sup over cubes Q of |Q|^-tau times the B- or F-type mixed norm of the rows of |G|.

    ``levels[i]`` is the level index of row i (default 0, 1, ...). For cube level k
    only rows with level >= ``start(k)`` enter (default max(k, 0)).
    ``level_weights`` multiply the q-th powers (quadrature weights).
    """
    G = np.abs(np.asarray(G, dtype=float))
    if G.ndim == 1:
        G = G[None, :]
    nlev, n = G.shape
    levels = list(range(nlev)) if levels is None else list(levels)
    lev = np.asarray(levels)
    mu = cubes.space.mu
    p, q = params.p, params.q
    ks = k_levels(cubes, params.k_range_policy) if ks is None else ks
    start = (lambda k: max(k, 0)) if start is None else start
    lw = None if level_weights is None else np.asarray(level_weights, dtype=float)

    # for p == q both families are the same double sum; share one code path
    family = "B" if p == q else params.family
    if family == "F":
        if q == INF:
            suffix = np.maximum.accumulate(G[::-1], axis=0)[::-1]
        else:
            Gq = G**q if lw is None else (G**q) * lw[:, None]
            suffix = np.cumsum(Gq[::-1], axis=0)[::-1] ** (1.0 / q)
    else:
        Gp = None if p == INF else G**p

    best = (-1.0, None, None)
    for k in ks:
        first = int(np.searchsorted(lev, start(k), side="left"))
        if first >= nlev:
            if best[1] is None:
                best = (0.0, k, 0)
            continue
        lab, C = _membership(cubes, k)
        meas = mu @ C
        if family == "B":
            if p == INF:
                I = np.zeros((nlev - first, C.shape[1]))
                for c in range(C.shape[1]):
                    idx = lab == c
                    I[:, c] = G[first:, idx].max(axis=1)
            else:
                I = ((Gp[first:] * mu) @ C) ** (1.0 / p)
            inner = _pow_sum(I, q, 0, None if lw is None else lw[first:])
        else:
            h = suffix[first]
            inner = ((h**p * mu) @ C) ** (1.0 / p)
        vals = meas ** (-params.tau) * inner
        c = int(np.argmax(vals))
        if vals[c] > best[0]:
            best = (float(vals[c]), k, c)
    value, k, c = best
    lab, C = _membership(cubes, k)
    idx = np.flatnonzero(lab == c)
    first = int(np.searchsorted(lev, start(k), side="left"))
    T = G[first:, :][:, idx]
    return NormBreakdown(
        value=max(value, 0.0),
        argmax_cube=(int(k), int(c)),
        levels=levels[first:],
        per_level_terms=T,
        cube_weights=mu[idx],
        cube_measure=float(mu[idx].sum()),
        params=params,
        level_weights=None if lw is None else lw[first:],
    )


def lp_tau_seq_norm(g, params: SpaceParams, cubes: CubeSystem) -> float:
    """ell^q(L^p_tau) (family B) or L^p_tau(ell^q) (family F) norm of g_0, g_1, ..."""
    return mixed_norm(np.asarray(g, dtype=float), params, cubes).value


def _dimension(space: MetricMeasureSpace, d: float | None) -> float:
    if d is not None:
        return float(d)
    cache = space.__dict__.get("_dimension")
    if cache is None:
        cache = geometry_report(space).d if space.n > 1 else 1.0
        object.__setattr__(space, "_dimension", cache)
    return cache


def level_weights(space: MetricMeasureSpace, delta: float, levels, params: SpaceParams, d: float | None = None) -> np.ndarray:
    """Weight matrix W[i, x]: delta^{-j s} (plain) or |B(x, delta^j)|^{-s/d} (tilde)."""
    levels = list(levels)
    if params.variant == "plain":
        w = np.array([delta ** (-j * params.s) for j in levels])
        return np.broadcast_to(w[:, None], (len(levels), space.n))
    if params.s == 0:
        return np.ones((len(levels), space.n))
    dd = _dimension(space, d)
    if dd <= 0:
        raise InvalidParams("tilde weights need a positive dimension d")
    return np.stack([space.ball_measures_nonempty(delta**j)[0] ** (-params.s / dd) for j in levels])


def _check_cubes(calib: LPCalibration, cubes: CubeSystem) -> None:
    if abs(calib.delta - cubes.delta) > 1e-15:
        raise ValidationError(f"calibration delta {calib.delta} differs from cube delta {cubes.delta}")


def _norm(f, calib, cubes, params, d=None) -> NormBreakdown:
    _check_cubes(calib, cubes)
    bands = calib.bands(np.asarray(f, dtype=float))
    W = level_weights(cubes.space, calib.delta, range(bands.shape[0]), params, d)
    return mixed_norm(W * bands, params, cubes)


def besov_type_norm(f, calib: LPCalibration, cubes: CubeSystem, params: SpaceParams, d: float | None = None) -> NormBreakdown:
    if params.family != "B":
        raise InvalidParams("besov_type_norm needs family B")
    return _norm(f, calib, cubes, params, d)


def triebel_type_norm(f, calib: LPCalibration, cubes: CubeSystem, params: SpaceParams, d: float | None = None) -> NormBreakdown:
    if params.family != "F":
        raise InvalidParams("triebel_type_norm needs family F")
    return _norm(f, calib, cubes, params, d)


def type_norm(f, calib, cubes, params, d=None) -> NormBreakdown:
    """Dispatch on ``params.family``."""
    return _norm(f, calib, cubes, params, d)


def besov_infinity_norm(f, calib, cubes, s: float) -> float:
    """B^{s}_{infty,infty} value: sup_{j, x} delta^{-js} |M_j f(x)|."""
    bands = np.abs(calib.bands(np.asarray(f, dtype=float)))
    w = calib.delta ** (-s * np.arange(bands.shape[0]))
    return float((w[:, None] * bands).max())


def peetre_weighted_max(values: np.ndarray, space: MetricMeasureSpace, scale: float, a: float) -> np.ndarray:
    """max_y values(y) / (1 + rho(x, y)/scale)^a for every x."""
    D = (1.0 + space.rho / scale) ** (-a)
    return (D * np.abs(values)[None, :]).max(axis=1)


def peetre_maximal(f, calib: LPCalibration, level: int, a: float, gamma: float = 0.0, band=None) -> np.ndarray:
    """[P_l]*_{a,gamma} f(x) = max_y |B(y, delta^l)|^gamma |M_l f(y)| / (1 + delta^{-l} rho(x, y))^a."""
    if not a > 0:
        raise InvalidParams("a must be positive")
    space = calib.op.space
    if band is None:
        band = calib.op.apply(calib.level_profile_values(level), np.asarray(f, dtype=float))
    scale = calib.delta**level
    vals = np.abs(band)
    if gamma != 0:
        vals = vals * space.ball_measures_nonempty(scale)[0] ** gamma
    return peetre_weighted_max(vals, space, scale, a)


def peetre_threshold(params: SpaceParams, d: float) -> float:
    if params.family == "B":
        return d * (params.tau + 1.0 / params.p)
    return d * (params.tau + 1.0 / min(params.p, params.q))


def peetre_norm(f, calib: LPCalibration, cubes: CubeSystem, params: SpaceParams, a: float, d: float | None = None) -> float:
    _check_cubes(calib, cubes)
    space = cubes.space
    dd = _dimension(space, d)
    thr = peetre_threshold(params, dd)
    if not a > thr:
        warnings.warn(f"Peetre exponent a={a} is not above the threshold {thr:.4g}", stacklevel=2)
    bands = calib.bands(np.asarray(f, dtype=float))
    rows = []
    for j in range(bands.shape[0]):
        if params.variant == "plain":
            rows.append(calib.delta ** (-j * params.s) * peetre_maximal(None, calib, j, a, 0.0, band=bands[j]))
        else:
            gamma = -params.s / dd if params.s else 0.0
            rows.append(peetre_maximal(None, calib, j, a, gamma, band=bands[j]))
    return mixed_norm(np.array(rows), params, cubes).value


def heat_profile_level(j: int, a: float, m: int):
    """h_0(l) = exp(-l^2), h_j(l) = (l/a^j)^{2m} exp(-(l/a^j)^2)."""
    if j == 0:
        return lambda lam: np.exp(-(lam**2))
    return lambda lam: (lam / a**j) ** (2 * m) * np.exp(-((lam / a**j) ** 2))


def _check_m(m: int, s: float, beta0: float) -> None:
    if not (isinstance(m, (int, np.integer)) and m >= 1):
        raise InvalidM(f"m must be a positive integer, got {m!r}")
    if not m > s / beta0:
        raise InvalidM(f"need m > s/beta0 = {s / beta0:.4g}, got m = {m}")


def heat_levels(op: SpectralOperator, delta: float, beta0: float, s: float, m: int, rel: float = 2.0**-60) -> int:
    """Last level j needed so the neglected heat terms are below ``rel`` of the level-J term scale."""
    a = delta ** (-beta0 / 2)
    root = math.sqrt(max(op.lambda_max, 0.0))
    j = 0
    while a**j < max(root, 1.0):
        j += 1
    rate = 2 * m - 2 * s / beta0
    extra = math.ceil(-math.log(rel) / (rate * math.log(a)))
    return j + max(extra, 1)


def heat_norm_discrete(f, op: SpectralOperator, cubes: CubeSystem, params: SpaceParams, m: int, beta0: float = 2.0, d: float | None = None) -> float:
    """Mixed norm of g_j = h_j(sqrt L) f with the usual level weights."""
    _check_m(m, params.s, beta0)
    delta = cubes.delta
    a = delta ** (-beta0 / 2)
    J = heat_levels(op, delta, beta0, params.s, m)
    c = op.coefficients(np.asarray(f, dtype=float))
    lam = op.sqrt_eigenvalues
    vals = np.stack([heat_profile_level(j, a, m)(lam) for j in range(J + 1)])
    G = (vals * c) @ op.eigenvectors.T
    W = level_weights(cubes.space, delta, range(J + 1), params, d)
    return mixed_norm(W * G, params, cubes).value


def _boundary_term(f, op, cubes, params, d) -> float:
    """sup over cubes of level <= 0 of |Q|^-tau (int_Q |w e^{-L} f|^p)^{1/p}."""
    g = np.abs(op.apply(lambda lam: np.exp(-(lam**2)), np.asarray(f, dtype=float)))
    if params.variant == "tilde" and params.s:
        g = g * cubes.space.ball_measures_nonempty(1.0)[0] ** (-params.s / _dimension(cubes.space, d))
    bparams = params.with_(family="B", q=INF, k_range_policy="full")
    ks = [k for k in k_levels(cubes, "full") if k <= 0]
    return mixed_norm(g[None, :], bparams, cubes, ks=ks or [0], start=lambda k: 0).value


def heat_norm_continuous(
    f,
    op: SpectralOperator,
    cubes: CubeSystem,
    params: SpaceParams,
    m: int,
    t_grid_size: int = 8,
    beta0: float = 2.0,
    d: float | None = None,
    return_parts: bool = False,
):
    """Boundary term plus the continuous-time mixed norm over (0, min(1, delta^k)].

    The t-integral uses the trapezoid rule in log t with ``t_grid_size`` points per
    octave. Below the grid the integrand behaves like t^alpha with
    alpha = q (beta0 m - s) (plain) or q beta0 m (tilde), and that tail is added
    in closed form.
    """
    _check_m(m, params.s, beta0)
    if params.p < 1:
        warnings.warn("the continuous heat characterization assumes p >= 1", stacklevel=2)
    if params.family == "F" and params.q < 1:
        warnings.warn("the continuous F characterization assumes q >= 1", stacklevel=2)
    f = np.asarray(f, dtype=float)
    space = cubes.space
    delta = cubes.delta
    lam = op.sqrt_eigenvalues
    c = op.coefficients(f)
    root = math.sqrt(max(op.lambda_max, 1e-300))
    s, q = params.s, params.q
    dd = _dimension(space, d) if params.variant == "tilde" and s else None
    alpha = q * (beta0 * m - (s if params.variant == "plain" else 0.0))

    ks = k_levels(cubes, params.k_range_policy)
    groups: dict = {}
    for k in ks:
        groups.setdefault(min(1.0, delta**k), []).append(k)
    best = 0.0
    for t_top, group in sorted(groups.items(), reverse=True):
        # go down until t^{beta0/2} sqrt(lambda_max) <= 1e-4, at least 4 octaves
        t_floor = min(t_top / 16, (1e-4 / root) ** (2 / beta0))
        octaves = math.ceil(math.log2(t_top / t_floor))
        npts = octaves * t_grid_size + 1
        u = np.linspace(0.0, -octaves * math.log(2), npts)
        t = t_top * np.exp(u)
        h = (t[:, None] ** (beta0 / 2) * lam[None, :]) ** (2 * m)
        h = h * np.exp(-(t[:, None] ** beta0) * lam[None, :] ** 2)
        G = (h * c) @ op.eigenvectors.T
        if params.variant == "plain":
            W = t[:, None] ** (-s) * np.ones((1, space.n))
        elif s == 0:
            W = np.ones((npts, space.n))
        else:
            W = np.stack([space.ball_measures_nonempty(tt)[0] ** (-s / dd) for tt in t])
        du = math.log(2) / t_grid_size
        wts = np.full(npts, du)
        wts[0] = wts[-1] = du / 2
        wts[-1] += 1.0 / alpha
        if q == INF:
            wts = None
        res = mixed_norm(W * G, params, cubes, levels=list(range(npts)), level_weights=wts, ks=group, start=lambda k: 0)
        best = max(best, res.value)
    boundary = _boundary_term(f, op, cubes, params, d)
    if return_parts:
        return boundary + best, boundary, best
    return boundary + best


def endpoint_finfty_norm(f, calib: LPCalibration, cubes: CubeSystem, s: float, q: float, variant: str = "plain", d: float | None = None) -> float:
    """F^s_{infty,q} := F^{s,1/q}_{q,q}; for q = infinity the sup form over all j and x."""
    if not q > 0:
        raise InvalidParams("q must be positive")
    if q == INF:
        params = SpaceParams(s=s, tau=0.0, p=INF, q=INF, family="B", variant=variant)
        return besov_type_norm(f, calib, cubes, params, d).value
    params = SpaceParams(s=s, tau=1.0 / q, p=q, q=q, family="F", variant=variant)
    return triebel_type_norm(f, calib, cubes, params, d).value


def hl_maximal(g, space: MetricMeasureSpace, r: float = 1.0) -> np.ndarray:
    """M_r g = (M |g|^r)^{1/r}, M the uncentered maximal operator over all distinct balls.

    The distinct open balls around y are the closed balls {z : rho(y, z) <= t} with t
    a distance from y, so an exact maximum needs only those.
    """
    if not r > 0:
        raise InvalidParams("r must be positive")
    g = np.abs(np.asarray(g, dtype=float)) ** r
    mu = space.mu
    n = space.n
    out = np.zeros(n)
    for y in range(n):
        d = space.rho[y]
        order = np.argsort(d, kind="stable")
        ds = d[order]
        num = np.cumsum((mu * g)[order])
        den = np.cumsum(mu[order])
        # close ties: a ball includes every point at its radius
        last = np.searchsorted(ds, ds, side="right") - 1
        avg = num[last] / den[last]
        # best ball containing x: any radius >= rho(y, x)
        suffix = np.maximum.accumulate(avg[::-1])[::-1]
        out[order] = np.maximum(out[order], suffix)
    return out ** (1.0 / r)
