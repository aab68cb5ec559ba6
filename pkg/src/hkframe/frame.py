"""Frame analysis and synthesis, sequence norms, sampling and cubature.

The synthesis kernels come from a Neumann series: on the range of the window
Gamma_j, the sampled operator V_j = Gamma_j U_j Gamma_j is inverted by
T_j = sum_k R_j^k with R_j = Gamma_j^2 - V_j.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls

from .calibration import LPCalibration, smooth_cutoff, smooth_window
from .cubes import CubeSystem, GridLevel, SubcubeGrid
from .errors import IndexMismatch, InfeasibleMoments, InvalidParams, LevelTooCoarse, NeumannDivergence, ValidationError
from .norms import INF, SpaceParams, _dimension, mixed_norm
from .spectral import SpectralOperator, apply_profile, compose


def theta_profile(a: float):
    """Theta: 1 on [0, a^3], 0 on [a^4, inf)."""
    return lambda lam: smooth_cutoff(lam, a**3, a**4)


def gamma0_profile(a: float):
    """Gamma_0: 1 on [0, a], 0 on [a^2, inf)."""
    return lambda lam: smooth_cutoff(lam, a, a**2)


def gamma_profile(a: float):
    """Gamma: 1 on [1/a, a], 0 outside (1/a^2, a^2)."""
    return lambda lam: smooth_window(lam, a**-2, a**-1, a, a**2)


def window_level(a: float, j: int):
    g = gamma0_profile(a) if j == 0 else gamma_profile(a)
    return lambda lam: g(np.asarray(lam, dtype=float) / a**j)


def theta_level(a: float, j: int):
    th = theta_profile(a)
    return lambda lam: th(np.asarray(lam, dtype=float) / a**j)


@dataclass
class LevelCoefficients:
    values: np.ndarray
    measures: np.ndarray
    samples: np.ndarray
    tau: np.ndarray
    nu: np.ndarray


@dataclass
class FrameCoefficients:
    levels: dict

    def __add__(self, other: "FrameCoefficients") -> "FrameCoefficients":
        _same_index(self, other)
        return FrameCoefficients(
            {j: LevelCoefficients(c.values + other.levels[j].values, c.measures, c.samples, c.tau, c.nu) for j, c in self.levels.items()}
        )

    def scaled(self, factor: float) -> "FrameCoefficients":
        return FrameCoefficients(
            {j: LevelCoefficients(factor * c.values, c.measures, c.samples, c.tau, c.nu) for j, c in self.levels.items()}
        )

    def flat(self) -> np.ndarray:
        return np.concatenate([self.levels[j].values for j in sorted(self.levels)])


def _same_index(a: FrameCoefficients, b) -> None:
    la = a.levels
    lb = b.levels if isinstance(b, FrameCoefficients) else b
    if sorted(la) != sorted(lb):
        raise IndexMismatch("coefficient level sets differ")
    for j in la:
        sa, sb = la[j], lb[j]
        if not (np.array_equal(sa.samples, sb.samples) and np.allclose(sa.measures, sb.measures, rtol=1e-14, atol=0)):
            raise IndexMismatch(f"sample grids differ at level {j}")


def _level_coeffs(values: np.ndarray, g: GridLevel) -> LevelCoefficients:
    return LevelCoefficients(values, g.measures, g.samples, g.tau, g.nu)


def analysis(f, calib: LPCalibration, grid: SubcubeGrid) -> FrameCoefficients:
    """a_{tau}^{j,nu} = (M_j f)(xi_{tau}^{j,nu}) for j = 0..J_max."""
    if abs(calib.delta - grid.cubes.delta) > 1e-15:
        raise ValidationError("grid and calibration use different delta")
    bands = calib.bands(np.asarray(f, dtype=float))
    out = {}
    for j in range(calib.J_max + 1):
        g = grid.level(j)
        out[j] = _level_coeffs(bands[j][g.samples], g)
    return FrameCoefficients(out)


@dataclass
class LevelDiagnostics:
    r_norm: float
    terms: int
    tail_bound: float
    eps0_effective: float
    sub_level: int
    clamped: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(eq=False)
class SynthesisFrame:
    """Per-level synthesis kernels with Psi[j][xi, x] the atom of sample xi evaluated at x."""

    psi: dict
    samples: dict
    measures: dict
    eps0: float
    tol: float
    diagnostics: dict
    theta_tag: dict = field(default_factory=dict)

    @property
    def tail_total(self) -> float:
        return float(sum(d.tail_bound for d in self.diagnostics.values()))

    def report(self) -> dict:
        return {
            "eps0": self.eps0,
            "tol": self.tol,
            "tail_total": self.tail_total,
            "levels": {str(j): d.to_dict() for j, d in sorted(self.diagnostics.items())},
            "theta": self.theta_tag,
        }


def operator_norm_mu(K: np.ndarray, mu: np.ndarray, symmetric: bool = True) -> float:
    """L^2(mu) operator norm of the kernel K (mu-convention)."""
    sq = np.sqrt(mu)
    A = sq[:, None] * K * sq[None, :]
    if symmetric:
        A = 0.5 * (A + A.T)
        return float(np.max(np.abs(np.linalg.eigvalsh(A)))) if A.size else 0.0
    return float(np.linalg.norm(A, 2)) if A.size else 0.0


def neumann_terms(r: float, tol: float) -> int:
    """Smallest K with r^(K+1)/(1-r) <= tol."""
    if r <= 0:
        return 0
    if r >= 1:
        raise ValueError("Neumann series needs r < 1")
    K = 0
    while r ** (K + 1) / (1 - r) > tol:
        K += 1
    return K


def sampling_interpolation_error(op: SpectralOperator, g: GridLevel, cutoff) -> float:
    """max(||(I - P) theta||_{1->1}, ||(I - P) theta||_{2->2}) in L^p(mu).

    P replaces a function on each subcube by its value at the sample point and
    theta(sqrt L) is a cutoff equal to 1 on the band. For band-limited f,
    |sampled L^p norm - ||f||_p| <= ||(I - P) f||_p, and Riesz-Thorin interpolation
    covers every p in [1, 2].
    """
    mu = op.mu
    Th = apply_profile(op, cutoff)
    rep = g.samples[g.labels]
    K = Th - Th[rep, :]
    one = float(np.max((mu[:, None] * np.abs(K)).sum(axis=0))) if K.size else 0.0
    two = operator_norm_mu(K, mu, symmetric=False)
    return max(one, two)


def _level_kernels(calib: LPCalibration, j: int):
    op = calib.op
    lam = op.sqrt_eigenvalues
    return apply_profile(op, window_level(calib.a, j)(lam)), apply_profile(op, theta_level(calib.a, j)(lam))


def build_synthesis_frame(
    calib: LPCalibration,
    grid: SubcubeGrid,
    tol: float = 1e-12,
    eps0_start: float = 0.1,
    max_halvings: int = 10,
) -> SynthesisFrame:
    """Neumann-series synthesis kernels for every level j = 0..J_max.

    eps0 starts at ``eps0_start`` and is halved until every measured ||R_j|| <= 1/2;
    if that never happens the eps0 with the smallest worst-level norm is kept.
    """
    if abs(calib.delta - grid.cubes.delta) > 1e-15:
        raise ValidationError("grid and calibration use different delta")
    op = calib.op
    mu = op.mu
    J = calib.J_max
    levels = list(range(J + 1))
    Gam, Th, grids = {}, {}, {}
    for j in levels:
        Gam[j], Th[j] = _level_kernels(calib, j)
        grids[j] = grid.level(j)

    def residual(j, c):
        g = grids[j]
        S, qm = g.samples, g.measures
        U = c * (Th[j][:, S] * qm) @ Th[j][S, :]
        V = compose(compose(Gam[j], U, mu), Gam[j], mu)
        return compose(Gam[j], Gam[j], mu) - V

    candidates = [eps0_start / 2**i for i in range(max_halvings + 1)]
    best = None
    for eps0 in candidates:
        c = (1 + eps0) ** -2
        Rs = {j: residual(j, c) for j in levels}
        norms = {j: operator_norm_mu(Rs[j], mu) for j in levels}
        worst = max(norms.values())
        if best is None or worst < best[0]:
            best = (worst, eps0, Rs, norms)
        if worst <= 0.5:
            break
    worst, eps0, Rs, norms = best
    for j in levels:
        if norms[j] >= 1:
            raise NeumannDivergence(j, norms[j])
    c = (1 + eps0) ** -2
    psi, diag, samples, measures = {}, {}, {}, {}
    for j in levels:
        r = norms[j]
        K = neumann_terms(r, tol)
        term = Gam[j]
        acc = term.copy()
        for _ in range(K):
            term = compose(Rs[j], term, mu)
            acc += term
        phit = c * acc  # phit[x, y] = c T_j(Gamma_j(., y))(x)
        atoms = compose(calib.dual_ops[j], phit, mu)  # atoms[x, y]: atom of sample y at x
        g = grids[j]
        psi[j] = atoms.T.copy()
        samples[j] = g.samples.copy()
        measures[j] = g.measures.copy()
        eff = sampling_interpolation_error(op, g, theta_level(calib.a, j))
        tail = r ** (K + 1) / (1 - r) if r > 0 else 0.0
        diag[j] = LevelDiagnostics(r, K, tail, eff, g.sub_level, g.clamped)
    tag = {"theta": "exp-glue cutoff 1 on [0, a^3], 0 beyond a^4", "a": calib.a}
    return SynthesisFrame(psi, samples, measures, eps0, tol, diag, tag)


def synthesis(coeffs: FrameCoefficients, frame: SynthesisFrame) -> np.ndarray:
    """T_Psi a(x) = sum_{j, tau, nu} |Q| Psi_j(xi, x) a."""
    if sorted(coeffs.levels) != sorted(frame.psi):
        raise IndexMismatch("coefficient levels do not match the frame")
    out = None
    for j, c in coeffs.levels.items():
        if not (np.array_equal(c.samples, frame.samples[j]) and np.allclose(c.measures, frame.measures[j], rtol=1e-14, atol=0)):
            raise IndexMismatch(f"sample grid mismatch at level {j}")
        term = (c.measures * c.values) @ frame.psi[j][c.samples, :]
        out = term if out is None else out + term
    return out


def sequence_rows(coeffs: FrameCoefficients, grid: SubcubeGrid, s: float, variant: str, d: float | None = None) -> np.ndarray:
    """Indicator expansions sum_{tau,nu} w |a| chi_Q as rows over j."""
    cubes = grid.cubes
    space = cubes.space
    rows = []
    dd = _dimension(space, d) if variant == "tilde" and s else None
    for j in sorted(coeffs.levels):
        c = coeffs.levels[j]
        g = grid.level(j)
        if not np.array_equal(g.samples, c.samples):
            raise IndexMismatch(f"coefficients do not match the grid at level {j}")
        if variant == "plain":
            w = np.full(c.values.size, cubes.delta ** (-j * s))
        elif s == 0:
            w = np.ones(c.values.size)
        else:
            w = c.measures ** (-s / dd)
        rows.append((w * np.abs(c.values))[g.labels])
    return np.array(rows)


def sequence_norm(coeffs: FrameCoefficients, grid: SubcubeGrid, cubes: CubeSystem, params: SpaceParams, d: float | None = None) -> float:
    """b (family B) or f (family F) sequence norm, plain or tilde."""
    if grid.cubes is not cubes and abs(grid.cubes.delta - cubes.delta) > 1e-15:
        raise InvalidParams("grid and cube system disagree")
    rows = sequence_rows(coeffs, grid, params.s, params.variant, d)
    return mixed_norm(rows, params, cubes).value


def _quartile_threshold(values: np.ndarray, weights: np.ndarray) -> float:
    """inf{lam > 0 : mu({G > lam}) < mu(Q)/4} on a finite set."""
    total = weights.sum()
    order = np.argsort(-values, kind="stable")
    v = values[order]
    w = weights[order]
    distinct, first = np.unique(-v, return_index=True)
    distinct = -distinct
    # measure of {G >= distinct[i]}
    cum = np.cumsum(w)
    last = np.append(first[1:], v.size) - 1
    mass_ge = cum[last]
    ok = mass_ge < total / 4
    i = int(np.sum(ok))  # count of leading levels whose superlevel sets stay small
    if i >= distinct.size:
        return 0.0
    return float(max(distinct[i], 0.0))


def stopping_functional(coeffs: FrameCoefficients, grid: SubcubeGrid, s: float, q: float, variant: str = "tilde", d: float | None = None) -> np.ndarray:
    """m(a)(x) = sup_k of the quartile thresholds of G_k over the level-k subcube containing x."""
    if not q > 0:
        raise InvalidParams("q must be positive")
    rows = sequence_rows(coeffs, grid, s, variant, d)
    mu = grid.cubes.space.mu
    if q == INF:
        tails = np.maximum.accumulate(rows[::-1], axis=0)[::-1]
    else:
        tails = np.cumsum((rows**q)[::-1], axis=0)[::-1] ** (1.0 / q)
    out = np.zeros(mu.size)
    levels = sorted(coeffs.levels)
    for i, k in enumerate(levels):
        g = grid.level(k)
        G = tails[i]
        for members in g.members:
            m = _quartile_threshold(G[members], mu[members])
            out[members] = np.maximum(out[members], m)
    return out


@dataclass
class MZResult:
    low: float
    high: float
    eps: float
    p: float
    count: int

    @property
    def passed(self) -> bool:
        return self.low >= 1 - self.eps - 1e-12 and self.high <= 1 + self.eps + 1e-12

    def to_dict(self) -> dict:
        return {"low": self.low, "high": self.high, "eps": self.eps, "p": self.p, "count": self.count, "passed": self.passed}


def band_basis(op: SpectralOperator, lam: float) -> np.ndarray:
    keep = op.sqrt_eigenvalues <= lam * (1 + 1e-12) + 1e-12
    return op.eigenvectors[:, keep]


def _check_level(j: int, lam: float, delta: float, beta0: float) -> None:
    if lam > 0 and j < -(2.0 / beta0) * math.log(lam) / math.log(delta) - 1e-12:
        raise LevelTooCoarse(f"level {j} is too coarse for band {lam}")


def mz_sampling_check(
    op: SpectralOperator,
    grid: SubcubeGrid,
    lam: float,
    p: float,
    j: int = 0,
    beta0: float = 2.0,
    battery: int = 50,
    seed: int = 0,
    eps: float | None = None,
) -> MZResult:
    """Extremes of (sum |Q| |f(xi)|^p)^(1/p) / ||f||_p over band-limited f.

    ``eps`` defaults to the measured interpolation bound used by the frame builder,
    evaluated with a cutoff equal to 1 on [0, lam].
    """
    if not 1 <= p <= 2:
        raise InvalidParams("p must lie in [1, 2]")
    delta = grid.cubes.delta
    _check_level(j, lam, delta, beta0)
    g = grid.level(j)
    mu = op.mu
    B = band_basis(op, lam)
    rng = np.random.default_rng(seed)
    funcs = [np.ones(mu.size)]
    if B.shape[1] > 0:
        funcs += list((B @ rng.standard_normal((B.shape[1], battery))).T)
    ratios = []
    for f in funcs:
        true = (mu @ np.abs(f) ** p) ** (1 / p)
        samp = (g.measures @ np.abs(f[g.samples]) ** p) ** (1 / p)
        ratios.append(samp / true)
    if eps is None:
        a = delta ** (-beta0 / 2)
        eps = sampling_interpolation_error(op, g, lambda x: smooth_cutoff(x, max(lam, 1e-12), a * max(lam, 1e-12)))
    return MZResult(float(min(ratios)), float(max(ratios)), float(eps), p, len(funcs))


@dataclass
class CubatureResult:
    weights: np.ndarray
    residual: float
    constant_error: float
    in_range_fraction: float
    moments: int
    method: str

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "residual": self.residual,
            "constant_error": self.constant_error,
            "in_range_fraction": self.in_range_fraction,
            "moments": self.moments,
            "method": self.method,
        }


def cubature_weights(op: SpectralOperator, grid: SubcubeGrid, lam: float, j: int = 0, beta0: float = 2.0) -> CubatureResult:
    """Nonnegative weights eps with sum eps |Q| f(xi) = int f for band-limited f.

    The minimum-norm correction of the all-ones weights is tried first; if it has a
    negative entry, nonnegative least squares on the moment system is used instead.
    """
    _check_level(j, lam, grid.cubes.delta, beta0)
    g = grid.level(j)
    mu = op.mu
    B = band_basis(op, lam)
    A = (B[g.samples, :] * g.measures[:, None]).T
    b = B.T @ mu
    ones = np.ones(g.size)
    w = ones + np.linalg.lstsq(A, b - A @ ones, rcond=None)[0]
    method = "min-norm"
    if np.any(w < 0):
        w, _ = nnls(A, b)
        method = "nnls"
    res = float(np.max(np.abs(A @ w - b))) if b.size else 0.0
    if res > 1e-8:
        raise InfeasibleMoments(f"moment residual {res:.3g} exceeds 1e-8")
    const = float(abs(w @ g.measures - mu.sum()))
    frac = float(np.mean((w >= 2 / 3) & (w <= 2)))
    return CubatureResult(w, res, const, frac, int(b.size), method)


def composition_constant(space, grid: SubcubeGrid, j: int, gamma: float, beta: float) -> float:
    """Smallest C with sum_{tau,nu} |Q| E(x, xi) E(xi, y) <= C E(x, y), E at scale delta^j."""
    from .spectral import subexp_function

    E, _ = subexp_function(space, grid.cubes.delta**j, gamma, beta)
    g = grid.level(j)
    S = g.samples
    lhs = (E[:, S] * g.measures) @ E[S, :]
    return float(np.max(lhs / E))
