"""Spectral calculus of a self-adjoint operator in the mu-weighted inner product.

Kernels follow the convention (T f)(x) = sum_y K[x, y] f(y) mu[y].
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DivisionByZeroBall, NegativeSpectrum, NotSelfAdjoint, ValidationError
from .space import MetricMeasureSpace

Profile = Callable[[np.ndarray], np.ndarray]


@dataclass(eq=False)
class SpectralOperator:
    """Eigenpairs (lambda_i, u_i) with sum_x u_a(x) u_b(x) mu(x) = delta_ab."""

    space: MetricMeasureSpace
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    source: str = "user"

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[-1]) if self.eigenvalues.size else 0.0

    @property
    def sqrt_eigenvalues(self) -> np.ndarray:
        return np.sqrt(self.eigenvalues)

    @property
    def mu(self) -> np.ndarray:
        return self.space.mu

    def coefficients(self, f: np.ndarray) -> np.ndarray:
        """Spectral coefficients <f, u_i>_mu (columns of f are handled too)."""
        f = np.asarray(f, dtype=float)
        w = self.mu if f.ndim == 1 else self.mu[:, None]
        return self.eigenvectors.T @ (w * f)

    def apply(self, profile: Profile | np.ndarray, f: np.ndarray) -> np.ndarray:
        """profile(sqrt L) f without forming the kernel."""
        vals = _profile_values(self, profile)
        c = self.coefficients(f)
        c = vals * c if c.ndim == 1 else vals[:, None] * c
        return self.eigenvectors @ c

    def matrix(self) -> np.ndarray:
        """L as a plain matrix acting on vectors of point values."""
        U = self.eigenvectors
        return (U * self.eigenvalues) @ (U.T * self.mu)


def _profile_values(op: SpectralOperator, profile) -> np.ndarray:
    if callable(profile):
        vals = np.asarray(profile(op.sqrt_eigenvalues), dtype=float)
        return np.broadcast_to(vals, op.eigenvalues.shape).astype(float)
    vals = np.asarray(profile, dtype=float)
    if vals.shape != op.eigenvalues.shape:
        raise ValidationError("profile values must match the number of eigenvalues")
    return vals


def eigendecompose(space: MetricMeasureSpace, L, source: str = "user") -> SpectralOperator:
    """Diagonalize L through the symmetric matrix W^{1/2} L W^{-1/2}."""
    L = np.asarray(L, dtype=float)
    n = space.n
    if L.shape != (n, n):
        raise ValidationError(f"operator has shape {L.shape}, expected {(n, n)}")
    mu = space.mu
    sq = np.sqrt(mu)
    A = sq[:, None] * L / sq[None, :]
    asym = float(np.abs(A - A.T).max()) if n else 0.0
    scale = max(float(np.abs(A).max()), 1.0) if n else 1.0
    if asym > 1e-8 * scale:
        raise NotSelfAdjoint(asym)
    A = 0.5 * (A + A.T)
    lam, V = np.linalg.eigh(A)
    lam_max = max(float(lam[-1]), 0.0) if n else 0.0
    tol = 1e-8 * lam_max
    if n and lam[0] < -max(tol, 1e-12):
        raise NegativeSpectrum(float(lam[0]))
    lam = np.where(lam < tol, 0.0, lam)
    lam = np.maximum.accumulate(lam)
    U = V / sq[:, None]
    # deterministic sign: largest-magnitude entry of each eigenvector is positive
    idx = np.argmax(np.abs(U), axis=0)
    sign = np.sign(U[idx, np.arange(n)])
    sign[sign == 0] = 1.0
    U = U * sign
    return SpectralOperator(space, lam, U, source)


def apply_profile(op: SpectralOperator, f: Profile | np.ndarray) -> np.ndarray:
    """Kernel of f(sqrt L): K = sum_i f(sqrt lambda_i) u_i u_i^T."""
    vals = _profile_values(op, f)
    U = op.eigenvectors
    K = (U * vals) @ U.T
    return 0.5 * (K + K.T)


def apply_kernel(K: np.ndarray, f: np.ndarray, mu: np.ndarray) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    return K @ (mu * f if f.ndim == 1 else mu[:, None] * f)


def compose(A: np.ndarray, B: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Kernel of the composition: (AB)(x, y) = sum_z A(x, z) B(z, y) mu(z)."""
    return (A * mu) @ B


def heat_profile(t: float) -> Profile:
    return lambda lam: np.exp(-t * lam**2)


def heat_kernel(op: SpectralOperator, t: float) -> np.ndarray:
    if not t > 0:
        raise ValidationError("t must be positive")
    return apply_profile(op, heat_profile(t))


def decay_function(space: MetricMeasureSpace, delta: float, sigma: float) -> tuple[np.ndarray, bool]:
    """D_{delta,sigma}(x, y) = [|B(x,delta)| |B(y,delta)|]^{-1/2} (1 + rho/delta)^{-sigma}."""
    if not delta > 0:
        raise ValidationError("scale must be positive")
    vol, flagged = space.ball_measures_nonempty(delta)
    D = (1.0 / np.sqrt(np.outer(vol, vol))) * (1.0 + space.rho / delta) ** (-sigma)
    return D, flagged


def subexp_function(space: MetricMeasureSpace, delta: float, gamma: float, beta: float) -> tuple[np.ndarray, bool]:
    """E_delta^{gamma,beta}(x, y) = [|B(x,delta)| |B(y,delta)|]^{-1/2} exp(-gamma (rho/delta)^beta)."""
    if not delta > 0:
        raise ValidationError("scale must be positive")
    vol, flagged = space.ball_measures_nonempty(delta)
    E = (1.0 / np.sqrt(np.outer(vol, vol))) * np.exp(-gamma * (space.rho / delta) ** beta)
    return E, flagged


@dataclass
class DiagnosticResult:
    value: float
    fallback_used: bool

    def __float__(self) -> float:
        return self.value


def _ratio(kernel: np.ndarray, ref: np.ndarray, flagged: bool, strict: bool) -> DiagnosticResult:
    if flagged and strict:
        raise DivisionByZeroBall("some strict ball is empty at this scale")
    return DiagnosticResult(float(np.max(np.abs(kernel) / ref)), flagged)


def decay_diagnostic(kernel, space, delta: float, sigma: float, strict: bool = False) -> DiagnosticResult:
    """max |K(x, y)| / D_{delta,sigma}(x, y).

    Empty strict balls fall back to B(x, delta] union {x} and set ``fallback_used``;
    with ``strict=True`` they raise :class:`DivisionByZeroBall` instead.
    """
    D, flagged = decay_function(space, delta, sigma)
    return _ratio(np.asarray(kernel), D, flagged, strict)


def subexp_diagnostic(kernel, space, delta: float, gamma: float, beta: float, strict: bool = False) -> DiagnosticResult:
    if not gamma > 0 or not 0 < beta < 1:
        raise ValidationError("need gamma > 0 and beta in (0, 1)")
    E, flagged = subexp_function(space, delta, gamma, beta)
    return _ratio(np.asarray(kernel), E, flagged, strict)


def almost_orthogonality_report(calib, m: int, sigma: float, d: float | None = None) -> np.ndarray:
    """Entry (j, k): max |(Phi_j Psi_k)(x, y)| / [delta^{|k-j|(m beta0 - d)} D_{delta^{min(j,k)}, sigma}].

    The second family is the level family of the profile lambda^{2m} Phi~(lambda), i.e.
    Psi_k(sqrt L) = delta^{-k beta0 m} L^m Phi~_k(sqrt L), the form in which the
    decay factor appears.
    """
    from .space import geometry_report

    op = calib.op
    space = op.space
    delta, beta0 = calib.delta, calib.beta0
    if d is None:
        d = geometry_report(space).d if space.n > 1 else 0.0
    lam = op.sqrt_eigenvalues
    J = calib.J_max
    out = np.zeros((J + 1, J + 1))
    phis = [calib.level_profile_values(j) for j in range(J + 1)]
    psis = [
        (calib.a ** (-k) * lam) ** (2 * m) * calib.dual_profile_values(k) for k in range(J + 1)
    ]
    U = op.eigenvectors
    for j in range(J + 1):
        for k in range(J + 1):
            prod = phis[j] * psis[k]
            if not np.any(prod):
                continue
            K = (U * prod) @ U.T
            D, _ = decay_function(space, delta ** min(j, k), sigma)
            factor = delta ** (abs(k - j) * (m * beta0 - d))
            out[j, k] = float(np.max(np.abs(K) / (factor * D)))
    return out


def almost_orthogonality_flags(calib, m_low: int, m_high: int, sigma: float, d: float | None = None) -> list:
    """Off-diagonal (j, k) whose entry grows when m increases from ``m_low`` to ``m_high``."""
    lo = almost_orthogonality_report(calib, m_low, sigma, d)
    hi = almost_orthogonality_report(calib, m_high, sigma, d)
    J = lo.shape[0]
    return [(j, k) for j in range(J) for k in range(J) if j != k and hi[j, k] > lo[j, k] * (1 + 1e-12)]
