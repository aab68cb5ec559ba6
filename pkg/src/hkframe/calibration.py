"""Littlewood-Paley bump pairs, their duals and the level operators Phi_j(sqrt L).

All profiles are built from one smooth step glued with exp(-1/x).
The dilation between consecutive levels is a = delta^{-beta0/2}, so
Phi_j(lambda) = Phi(lambda / a^j).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateLowerBound, ValidationError
from .spectral import SpectralOperator, apply_profile, compose


def _h(t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(t, dtype=float)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def smooth_step(t) -> np.ndarray:
    """C-infinity step: exactly 1 for t <= 0, exactly 0 for t >= 1."""
    t = np.asarray(t, dtype=float)
    a = _h(1.0 - t)
    b = _h(t)
    return a / (a + b)


def smooth_cutoff(lam, inner: float, outer: float) -> np.ndarray:
    """Profile in lambda^2: 1 on [0, inner], 0 on [outer, inf)."""
    lam = np.asarray(lam, dtype=float)
    return smooth_step((lam**2 - inner**2) / (outer**2 - inner**2))


def smooth_window(lam, lo_out: float, lo_in: float, hi_in: float, hi_out: float) -> np.ndarray:
    """1 on [lo_in, hi_in], 0 outside (lo_out, hi_out), values in [0, 1]."""
    return smooth_cutoff(lam, hi_in, hi_out) * (1.0 - smooth_cutoff(lam, lo_out, lo_in))


@dataclass(frozen=True)
class BumpPair:
    """Admissible pair (Phi0, Phi).

    ``psi`` ramps from 1 at a^e0 to 0 at a^e1 with 0 <= e0 < 1/4 and 3/4 < e1 <= 1.
    ``kind='telescoping'`` gives Phi0 = psi, Phi = psi - psi(a .) so the levels sum to 1;
    ``kind='tight'`` takes square roots so the squares sum to 1.
    """

    delta: float
    beta0: float
    e0: float = 0.0
    e1: float = 1.0
    kind: str = "telescoping"
    lower_bound: float = field(default=float("nan"), compare=False)

    @property
    def a(self) -> float:
        return self.delta ** (-self.beta0 / 2)

    def psi(self, lam) -> np.ndarray:
        return smooth_cutoff(lam, self.a**self.e0, self.a**self.e1)

    def phi0(self, lam) -> np.ndarray:
        v = self.psi(lam)
        return np.sqrt(v) if self.kind == "tight" else v

    def phi(self, lam) -> np.ndarray:
        lam = np.asarray(lam, dtype=float)
        v = np.maximum(self.psi(lam) - self.psi(self.a * lam), 0.0)
        return np.sqrt(v) if self.kind == "tight" else v

    def level(self, j: int, lam) -> np.ndarray:
        return self.phi0(lam) if j == 0 else self.phi(np.asarray(lam, dtype=float) / self.a**j)

    def tag(self) -> dict:
        return {
            "family": "exp-glue",
            "kind": self.kind,
            "delta": self.delta,
            "beta0": self.beta0,
            "e0": self.e0,
            "e1": self.e1,
        }

    def certificates(self, samples: int = 20001) -> dict:
        """Support and lower-bound checks on dense grids."""
        a = self.a
        out_grid = np.concatenate([np.linspace(a, 10 * a, samples), [a]])
        lo_grid = np.linspace(0, 1 / a, samples)
        phi0_support = float(np.abs(self.phi0(out_grid)).max())
        phi_support = max(float(np.abs(self.phi(out_grid)).max()), float(np.abs(self.phi(lo_grid)).max()))
        g0 = np.linspace(0, a**0.75, samples)
        g1 = np.geomspace(a**-0.75, a**0.75, samples)
        c = min(float(self.phi0(g0).min()), float(self.phi(g1).min()))
        return {"phi0_outside_support_max": phi0_support, "phi_outside_support_max": phi_support, "lower_bound": c}


def make_bump_pair(delta: float = 0.5, beta0: float = 2.0, e0: float = 0.0, e1: float = 1.0, kind: str = "telescoping") -> BumpPair:
    if not 0 < delta < 1:
        raise ValidationError("delta must lie in (0, 1)")
    if beta0 < 2:
        raise ValidationError("beta0 must be at least 2")
    if not (0 <= e0 < 0.25 and 0.75 < e1 <= 1):
        raise ValidationError("glue exponents need 0 <= e0 < 1/4 and 3/4 < e1 <= 1")
    if kind not in ("telescoping", "tight"):
        raise ValidationError(f"unknown bump kind {kind!r}")
    pair = BumpPair(float(delta), float(beta0), float(e0), float(e1), kind)
    c = pair.certificates(4001)["lower_bound"]
    return BumpPair(pair.delta, pair.beta0, pair.e0, pair.e1, kind, lower_bound=c)


def _level_range(a: float, lam: np.ndarray) -> tuple[int, int]:
    pos = lam[lam > 0]
    if pos.size == 0:
        return 0, 0
    lo = math.floor(math.log(pos.min(), a)) - 2
    hi = math.ceil(math.log(pos.max(), a)) + 2
    return lo, hi


def square_sum(bumps: BumpPair, lam) -> np.ndarray:
    """S(lambda) = Phi0(lambda)^2 + sum_{j >= 1} Phi_j(lambda)^2."""
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    s = bumps.phi0(lam) ** 2
    _, hi = _level_range(bumps.a, lam)
    for j in range(1, hi + 1):
        s = s + bumps.level(j, lam) ** 2
    return s


def square_sum_full(bumps: BumpPair, lam) -> np.ndarray:
    """Dilation-invariant S_inf(lambda) = sum over all integers j of Phi(lambda / a^j)^2."""
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    s = np.zeros_like(lam)
    lo, hi = _level_range(bumps.a, lam)
    for j in range(lo, hi + 1):
        s = s + bumps.phi(lam / bumps.a**j) ** 2
    return s


@dataclass(frozen=True)
class DualPair:
    bumps: BumpPair

    def phi0(self, lam) -> np.ndarray:
        lam = np.asarray(lam, dtype=float)
        v = self.bumps.phi0(lam)
        out = np.zeros_like(v)
        nz = v != 0
        out[nz] = v[nz] / square_sum(self.bumps, lam[nz])
        return out

    def phi(self, lam) -> np.ndarray:
        lam = np.asarray(lam, dtype=float)
        v = self.bumps.phi(lam)
        out = np.zeros_like(v)
        nz = v != 0
        out[nz] = v[nz] / square_sum_full(self.bumps, lam[nz])
        return out

    def level(self, j: int, lam) -> np.ndarray:
        return self.phi0(lam) if j == 0 else self.phi(np.asarray(lam, dtype=float) / self.bumps.a**j)


def make_dual_pair(bumps: BumpPair, samples: int = 10_000) -> DualPair:
    """Dual pair Phi~ = Phi / S, with S the (dilation-invariant) square sum."""
    a = bumps.a
    grid = np.concatenate([np.linspace(0, a, samples), np.geomspace(a, a**3, samples)])
    smin = float(square_sum(bumps, grid).min())
    if smin < 1e-8:
        raise DegenerateLowerBound(f"square sum drops to {smin:.3g}")
    return DualPair(bumps)


def j_max_for(lambda_max: float, delta: float, beta0: float) -> int:
    """Smallest j with delta^{j beta0/2} sqrt(lambda_max) < delta^{beta0/2}."""
    root = math.sqrt(max(lambda_max, 0.0))
    j = 0
    while not delta ** (j * beta0 / 2) * root < delta ** (beta0 / 2):
        j += 1
    return j


@dataclass(eq=False)
class LPCalibration:
    op: SpectralOperator
    bumps: BumpPair
    duals: DualPair
    J_max: int
    level_ops: list
    dual_ops: list

    @property
    def delta(self) -> float:
        return self.bumps.delta

    @property
    def beta0(self) -> float:
        return self.bumps.beta0

    @property
    def a(self) -> float:
        return self.bumps.a

    @property
    def spectral_grid(self) -> np.ndarray:
        return self.op.sqrt_eigenvalues

    def level_profile_values(self, j: int) -> np.ndarray:
        return self.bumps.level(j, self.op.sqrt_eigenvalues)

    def dual_profile_values(self, j: int) -> np.ndarray:
        return self.duals.level(j, self.op.sqrt_eigenvalues)

    def level_op(self, j: int) -> np.ndarray:
        if 0 <= j <= self.J_max:
            return self.level_ops[j]
        return apply_profile(self.op, self.bumps.level(j, self.op.sqrt_eigenvalues))

    def bands(self, f: np.ndarray) -> np.ndarray:
        """Rows j = 0..J_max of M_j f, computed spectrally."""
        c = self.op.coefficients(f)
        vals = np.stack([self.level_profile_values(j) for j in range(self.J_max + 1)])
        return (vals * c) @ self.op.eigenvectors.T

    def partition_values(self) -> np.ndarray:
        """sum_j Phi~_j Phi_j at every eigenvalue."""
        return sum(self.dual_profile_values(j) * self.level_profile_values(j) for j in range(self.J_max + 1))


def build_calibration(op: SpectralOperator, bumps: BumpPair) -> LPCalibration:
    duals = make_dual_pair(bumps)
    J = j_max_for(op.lambda_max, bumps.delta, bumps.beta0)
    lam = op.sqrt_eigenvalues
    level_ops = [apply_profile(op, bumps.level(j, lam)) for j in range(J + 1)]
    dual_ops = [apply_profile(op, duals.level(j, lam)) for j in range(J + 1)]
    return LPCalibration(op, bumps, duals, J, level_ops, dual_ops)


@dataclass
class CRFReport:
    operator_norm: float
    battery_residual: float
    eigen_residual: float
    levels_used: int

    def to_dict(self) -> dict:
        return {
            "operator_norm": self.operator_norm,
            "battery_residual": self.battery_residual,
            "eigen_residual": self.eigen_residual,
            "levels_used": self.levels_used,
        }


def crf_operator(calib: LPCalibration, levels=None) -> np.ndarray:
    """Matrix of sum_j M~_j M_j - Id acting on point-value vectors."""
    mu = calib.op.mu
    levels = range(calib.J_max + 1) if levels is None else levels
    n = mu.size
    K = np.zeros((n, n))
    for j in levels:
        K += compose(calib.dual_ops[j], calib.level_ops[j], mu)
    return K * mu - np.eye(n)


def verify_crf(calib: LPCalibration, levels=None, seed: int = 0) -> CRFReport:
    """Residual of the continuous reproducing formula.

    The operator norm in L^2(mu) is the spectral norm of W^{1/2} A W^{-1/2}; a
    20-vector random battery gives the max relative residual.
    """
    mu = calib.op.mu
    A = crf_operator(calib, levels)
    rng = np.random.default_rng(seed)
    n = mu.size
    sq = np.sqrt(mu)

    def mnorm(v):
        return float(np.sqrt(np.sum(mu * v * v)))

    est = float(np.linalg.norm(sq[:, None] * A / sq[None, :], 2)) if n else 0.0
    battery = rng.standard_normal((n, 20))
    res = A @ battery
    rel = max(mnorm(res[:, i]) / mnorm(battery[:, i]) for i in range(20))
    used = list(range(calib.J_max + 1)) if levels is None else list(levels)
    part = sum(calib.dual_profile_values(j) * calib.level_profile_values(j) for j in used)
    eig = float(np.max(np.abs(part - 1.0))) if n else 0.0
    return CRFReport(est, rel, eig, len(used))
