"""Function batteries, equivalence-ratio reports and maximal-function checks."""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import spearmanr

from .calibration import LPCalibration, build_calibration, make_bump_pair
from .cubes import CubeSystem, SubcubeGrid, build_cubes, subcube_grid
from .errors import HypothesisViolation, PrerequisiteMissing, ValidationError
from .frame import SynthesisFrame, analysis, build_synthesis_frame, sequence_norm, synthesis
from .generate import generate, parse_kind, space_and_operator
from .norms import (
    INF,
    SpaceParams,
    _dimension,
    besov_infinity_norm,
    heat_norm_continuous,
    heat_norm_discrete,
    hl_maximal,
    peetre_maximal,
    peetre_norm,
    peetre_threshold,
    type_norm,
)
from .spectral import SpectralOperator

PAPER_TAGS = {
    "thm6.2": "Peetre maximal characterization",
    "thm6.7": "discrete heat semigroup characterization",
    "thm6.8": "continuous heat semigroup characterization",
    "thm7.5": "frame analysis boundedness",
    "thm7.8": "endpoint F_{infty,q} identification",
    "prop4.9": "collapse to B_{infty,infty} for large tau",
    "prop4.10": "restriction of the cube supremum to k >= 0",
    "prop7.9": "endpoint sequence space identification",
    "bump_independence": "independence of the bump pair",
}
CLAIMS = tuple(PAPER_TAGS)


def max_workers() -> int:
    env = os.environ.get("HKFRAME_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return min(4, os.cpu_count() or 1)


@dataclass
class FunctionBattery:
    names: list
    functions: np.ndarray  # rows are functions
    seed: int
    size: int

    def __iter__(self):
        return iter(zip(self.names, self.functions))

    def __len__(self) -> int:
        return len(self.names)


def make_battery(op: SpectralOperator, seed: int = 0, size: int = 20, calib: LPCalibration | None = None) -> FunctionBattery:
    """Eigenvectors at fixed spectral positions, random band-limited functions,
    point indicators and heat-smoothed noise, all defined relative to the spectrum so
    that batteries on refined geometries are comparable.
    """
    if size < 5:
        raise ValidationError("battery size must be at least 5")
    rng = np.random.default_rng(seed)
    n = op.space.n
    lam = op.sqrt_eigenvalues
    root = lam[-1] if lam.size else 0.0
    names, funcs = [], []

    def add(name, f):
        f = np.asarray(f, dtype=float)
        if np.linalg.norm(f) > 0 and name not in names:
            names.append(name)
            funcs.append(f)

    if calib is not None:
        bands = range(calib.J_max + 1)
        for j in bands:
            vals = calib.level_profile_values(j)
            idx = np.flatnonzero(vals > 1e-3 * max(vals.max(), 1e-300))
            if idx.size:
                add(f"band{j}", op.eigenvectors[:, idx] @ rng.standard_normal(idx.size))
    for frac in (0.1, 0.5, 0.9):
        i = int(np.argmin(np.abs(lam - frac * root)))
        add(f"eig@{frac:g}", op.eigenvectors[:, i])
    add("point0", np.eye(n)[0])
    add(f"point{n // 3}", np.eye(n)[n // 3])
    for t in (0.5, 2.0, 8.0):
        add(f"heat{t:g}", op.apply(lambda x, t=t: np.exp(-t * x**2), rng.standard_normal(n)))
    k = 0
    while len(names) < size:
        cut = (0.25 + 0.75 * ((k * 0.618034) % 1.0)) * max(root, 1e-12)
        B = op.eigenvectors[:, lam <= cut + 1e-12]
        add(f"bandlimited{k}", B @ rng.standard_normal(B.shape[1]))
        k += 1
    return FunctionBattery(names[:size], np.array(funcs[:size]), seed, size)


@dataclass
class Context:
    """Prerequisite artifacts for the equivalence runs on one geometry."""

    op: SpectralOperator
    cubes: CubeSystem
    calib: LPCalibration
    grid: SubcubeGrid | None = None
    frame: SynthesisFrame | None = None
    battery: FunctionBattery | None = None
    doc: dict | None = None
    d: float | None = None

    def ensure_battery(self, seed=0, size=20) -> FunctionBattery:
        if self.battery is None:
            self.battery = make_battery(self.op, seed, size, self.calib)
        return self.battery

    def ensure_frame(self, tol: float = 1e-12) -> SynthesisFrame:
        if self.grid is None:
            raise PrerequisiteMissing("a subcube grid is required")
        if self.frame is None:
            self.frame = build_synthesis_frame(self.calib, self.grid, tol)
        return self.frame


def build_context(doc: dict, delta: float = 0.5, beta0: float = 2.0, j0: int = 1, seed: int = 0,
                  sample_rule: str = "center", frame: bool = False, tol: float = 1e-12) -> Context:
    space, op = space_and_operator(doc)
    cubes = build_cubes(space, delta, seed)
    calib = build_calibration(op, make_bump_pair(delta, beta0))
    grid = subcube_grid(cubes, j0, sample_rule=sample_rule, seed=seed)
    ctx = Context(op, cubes, calib, grid, doc=doc)
    if frame:
        ctx.ensure_frame(tol)
    return ctx


@dataclass
class EquivalenceReport:
    claim: str
    paper_tag: str
    norm_a: str
    norm_b: str
    names: list
    ratios: list
    spread: float
    params: dict
    refinement_stability: dict | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "claim": self.claim,
            "paper_tag": self.paper_tag,
            "norm_a": self.norm_a,
            "norm_b": self.norm_b,
            "ratios": dict(zip(self.names, self.ratios)),
            "spread": self.spread,
            "params": self.params,
            "refinement_stability": self.refinement_stability,
            "extra": self.extra,
        }


def _spread(r) -> float:
    r = np.asarray(r, dtype=float)
    if r.size == 0 or not np.all(np.isfinite(r)) or np.any(r <= 0):
        return math.inf
    return float(r.max() / r.min())


DEFAULTS = {
    "thm6.2": dict(s=0.5, tau=0.0, p=2.0, q=2.0, family="B", variant="plain"),
    "thm6.7": dict(s=0.5, tau=0.0, p=2.0, q=2.0, family="B", variant="plain"),
    "thm6.8": dict(s=0.5, tau=0.0, p=2.0, q=2.0, family="B", variant="plain"),
    "thm7.5": dict(s=0.5, tau=0.0, p=2.0, q=2.0, family="B", variant="tilde"),
    "thm7.8": dict(s=0.5, p=1.0, q=2.0, variant="plain"),
    "prop4.9": dict(s=0.5, p=2.0, q=2.0, family="B", variant="plain"),
    "prop4.10": dict(s=0.5, tau=0.75, p=2.0, q=2.0, family="B", variant="plain"),
    "prop7.9": dict(s=0.5, p=1.0, q=2.0, variant="tilde"),
    "bump_independence": dict(s=0.5, tau=0.0, p=2.0, q=2.0, family="F", variant="plain"),
}


def _params(claim: str, config: dict) -> dict:
    out = dict(DEFAULTS[claim])
    out.update({k: v for k, v in config.items() if k in ("s", "tau", "p", "q", "family", "variant", "m", "a", "t_grid_size")})
    return out


def run_equivalence(claim: str, ctx: Context, config: dict | None = None) -> EquivalenceReport:
    """Both norms on every battery function and the ratio statistics.

    Claim hypotheses are guarded: a violation raises :class:`HypothesisViolation`.
    """
    if claim not in PAPER_TAGS:
        raise ValidationError(f"unknown claim {claim!r}")
    config = dict(config or {})
    if ctx is None or ctx.calib is None or ctx.cubes is None:
        raise PrerequisiteMissing("calibration and cube system are required")
    battery = ctx.ensure_battery(config.get("seed", 0), config.get("size", 20))
    par = _params(claim, config)
    cal, cubes = ctx.calib, ctx.cubes
    d = _dimension(cubes.space, ctx.d)
    beta0 = cal.beta0
    extra: dict = {}

    def sp(**kw):
        base = {k: par[k] for k in ("s", "tau", "p", "q", "family", "variant") if k in par}
        base.update(kw)
        return SpaceParams(**base)

    if claim == "thm6.2":
        P = sp()
        thr = peetre_threshold(P, d)
        a = par.get("a", thr + 1.0)
        if not a > thr:
            raise HypothesisViolation(f"Peetre exponent a={a} must exceed {thr:.4g}")
        par["a"] = a
        fa = lambda f: peetre_norm(f, cal, cubes, P, a, d)  # noqa: E731
        fb = lambda f: type_norm(f, cal, cubes, P, d).value  # noqa: E731
        na, nb = f"peetre a={a:.4g}", "Phi-norm"
    elif claim == "thm6.7":
        P = sp()
        m = par.get("m", math.ceil(P.s / beta0) + 1)
        if not m > P.s / beta0:
            raise HypothesisViolation(f"m={m} must exceed s/beta0={P.s / beta0:.4g}")
        par["m"] = m
        fa = lambda f: heat_norm_discrete(f, ctx.op, cubes, P, m, beta0, d)  # noqa: E731
        fb = lambda f: type_norm(f, cal, cubes, P, d).value  # noqa: E731
        na, nb = f"heat discrete m={m}", "Phi-norm"
    elif claim == "thm6.8":
        P = sp()
        m = par.get("m", math.ceil(P.s / beta0) + 1)
        if not m > P.s / beta0:
            raise HypothesisViolation(f"m={m} must exceed s/beta0={P.s / beta0:.4g}")
        if P.p < 1 or (P.family == "F" and P.q < 1):
            raise HypothesisViolation("the continuous characterization needs p >= 1 (and q >= 1 for F)")
        par["m"] = m
        tg = par.get("t_grid_size", 8)
        fa = lambda f: heat_norm_continuous(f, ctx.op, cubes, P, m, tg, beta0, d)  # noqa: E731
        fb = lambda f: type_norm(f, cal, cubes, P, d).value  # noqa: E731
        na, nb = f"heat continuous m={m}", "Phi-norm"
    elif claim == "thm7.5":
        frame = ctx.ensure_frame(config.get("tol", 1e-12))
        P = sp()
        seqP = P
        errs = []

        def fa(f):
            coeffs = analysis(f, cal, ctx.grid)
            rec = synthesis(coeffs, frame)
            errs.append(float(np.linalg.norm(rec - f) / np.linalg.norm(f)))
            return sequence_norm(coeffs, ctx.grid, cubes, seqP, d)

        fb = lambda f: type_norm(f, cal, cubes, P, d).value  # noqa: E731
        na, nb = "sequence norm of S_Phi f", "function norm"
        extra["reconstruction_errors"] = errs
    elif claim == "thm7.8":
        s, p, q = par["s"], par["p"], par["q"]
        P1 = SpaceParams(s=s, tau=1.0 / q, p=q, q=q, family="F", variant=par["variant"])
        P2 = SpaceParams(s=s, tau=1.0 / p, p=p, q=q, family="F", variant=par["variant"])
        fa = lambda f: type_norm(f, cal, cubes, P1, d).value  # noqa: E731
        fb = lambda f: type_norm(f, cal, cubes, P2, d).value  # noqa: E731
        na, nb = f"F^s_(infty,{q:g})", f"F^(s,1/{p:g})_({p:g},{q:g})"
    elif claim == "prop4.9":
        p = par["p"]
        tau = par.get("tau", 2.0 / p)
        par["tau"] = tau
        if not tau > 1.0 / p:
            raise HypothesisViolation(f"collapse needs tau > 1/p; got tau={tau}, 1/p={1 / p:.4g}")
        PB = sp(tau=tau, family="B")
        PF = sp(tau=tau, family="F") if p < INF else None
        s_inf = par["s"] + d * tau - d / p
        vals = {"B": [], "F": [], "Binf": []}

        def fa(f):
            b = type_norm(f, cal, cubes, PB, d).value
            vals["B"].append(b)
            if PF is not None:
                vals["F"].append(type_norm(f, cal, cubes, PF, d).value)
            return b

        def fb(f):
            v = besov_infinity_norm(f, cal, cubes, s_inf)
            vals["Binf"].append(v)
            return v

        na, nb = "B^(s,tau)_(p,q)", f"B^({s_inf:.4g})_(infty,infty)"
        extra["values"] = vals
    elif claim == "prop4.10":
        P = sp()
        if not P.tau >= 1.0 / P.p:
            raise HypothesisViolation("the k >= 0 reduction needs tau >= 1/p")
        fa = lambda f: type_norm(f, cal, cubes, P, d).value  # noqa: E731
        fb = lambda f: type_norm(f, cal, cubes, P.with_(k_range_policy="nonnegative_only"), d).value  # noqa: E731
        na, nb = "full k-range", "k >= 0"
    elif claim == "prop7.9":
        if ctx.grid is None:
            raise PrerequisiteMissing("a subcube grid is required")
        s, p, q = par["s"], par["p"], par["q"]
        P1 = SpaceParams(s=s, tau=1.0 / q, p=q, q=q, family="F", variant=par["variant"])
        P2 = SpaceParams(s=s, tau=1.0 / p, p=p, q=q, family="F", variant=par["variant"])
        fa = lambda f: sequence_norm(analysis(f, cal, ctx.grid), ctx.grid, cubes, P1, d)  # noqa: E731
        fb = lambda f: sequence_norm(analysis(f, cal, ctx.grid), ctx.grid, cubes, P2, d)  # noqa: E731
        na, nb = f"f^(s,1/{q:g})_({q:g},{q:g})", f"f^(s,1/{p:g})_({p:g},{q:g})"
    else:  # bump_independence
        P = sp()
        other = build_calibration(ctx.op, make_bump_pair(cal.delta, beta0, e0=0.125, e1=0.875))
        fa = lambda f: type_norm(f, cal, cubes, P, d).value  # noqa: E731
        fb = lambda f: type_norm(f, other, cubes, P, d).value  # noqa: E731
        na, nb = "bump pair (0, 1)", "bump pair (1/8, 7/8)"

    names, ratios, A, B = [], [], [], []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for name, f in battery:
            va, vb = fa(f), fb(f)
            names.append(name)
            A.append(va)
            B.append(vb)
            ratios.append(va / vb if vb > 0 else math.inf)
    spread = _spread(ratios)
    if claim == "prop4.9":
        v = extra["values"]
        pair = {"B/Binf": _spread(np.array(v["B"]) / np.array(v["Binf"]))}
        if v["F"]:
            pair["F/Binf"] = _spread(np.array(v["F"]) / np.array(v["Binf"]))
            pair["B/F"] = _spread(np.array(v["B"]) / np.array(v["F"]))
            extra["rank_correlation_B_F"] = float(spearmanr(v["B"], v["F"])[0])
        extra["rank_correlation_B_Binf"] = float(spearmanr(v["B"], v["Binf"])[0])
        extra["pairwise_spreads"] = pair
        spread = max(pair.values())
    if claim == "prop7.9":
        extra["argmax_agrees"] = bool(int(np.argmax(A)) == int(np.argmax(B)))
    if claim == "thm7.5" and extra.get("reconstruction_errors"):
        extra["max_reconstruction_error"] = max(extra["reconstruction_errors"])
    extra["norm_a_values"] = A
    extra["norm_b_values"] = B
    return EquivalenceReport(claim, PAPER_TAGS[claim], na, nb, names, ratios, spread, par, None, extra)


def refine_doc(doc: dict) -> dict | None:
    """Space document for the same family at twice the size, when the family has one."""
    kind = (doc.get("metadata") or {}).get("kind")
    if not kind:
        return None
    name, args = parse_kind(kind)
    lap = doc.get("laplacian", "unnormalized")
    lap = lap if isinstance(lap, str) else "unnormalized"
    if name in ("cycle", "path"):
        return generate(name, 2 * args[0], laplacian=lap)
    if name == "torus":
        return generate(name, 2 * args[0], 2 * args[1], laplacian=lap)
    if name in ("binary_tree", "gasket"):
        return generate(name, args[0] + 1, laplacian=lap)
    return None


def refinement_study(claim: str, ctx: Context, fine: Context, config: dict | None = None) -> EquivalenceReport:
    """Run a claim on two geometries of one family; the report keeps both spreads."""
    rep = run_equivalence(claim, ctx, config)
    rep2 = run_equivalence(claim, fine, config)
    change = rep2.spread / rep.spread - 1 if math.isfinite(rep.spread) and math.isfinite(rep2.spread) else math.inf
    rep.refinement_stability = {
        "n": ctx.op.space.n,
        "spread_n": rep.spread,
        "n_refined": fine.op.space.n,
        "spread_refined": rep2.spread,
        "relative_change": change,
    }
    return rep


def peetre_domination_check(f, calib: LPCalibration, cubes: CubeSystem, r: float, nu: float, gamma: float = 0.0, d: float | None = None) -> float:
    """Smallest C with [P_l]*_{nu+d/r,gamma} f <= C sum_{j>=l} delta^{(j-l)nu} M_r(|B(., delta^j)|^gamma |P_j f|).

    Returns 0 when the left side vanishes everywhere (vacuous inequality).
    """
    if not (r > 0 and nu > 0):
        raise ValidationError("r and nu must be positive")
    space = cubes.space
    dd = _dimension(space, d)
    a = nu + dd / r
    bands = calib.bands(np.asarray(f, dtype=float))
    J = bands.shape[0] - 1
    delta = calib.delta
    maxf = []
    for j in range(J + 1):
        vals = np.abs(bands[j])
        if gamma:
            vals = vals * space.ball_measures_nonempty(delta**j)[0] ** gamma
        maxf.append(hl_maximal(vals, space, r))
    C = 0.0
    for ell in range(J + 1):
        lhs = peetre_maximal(None, calib, ell, a, gamma, band=bands[ell])
        rhs = sum(delta ** ((j - ell) * nu) * maxf[j] for j in range(ell, J + 1))
        pos = lhs > 1e-300
        if not pos.any():
            continue
        if np.any(rhs[pos] <= 0):
            return math.inf
        C = max(C, float(np.max(lhs[pos] / rhs[pos])))
    return C


def verify_claims() -> list:
    """Claim configurations run by ``verify all``."""
    runs = [
        ("thm6.2", {}),
        ("thm6.7", {}),
        ("thm6.8", {}),
        ("thm7.5", {}),
        ("prop4.10", {}),
        ("prop7.9", {}),
        ("bump_independence", {}),
    ]
    for p in (0.5, 1.0, 2.0):
        runs.append(("thm7.8", {"p": p}))
        runs.append(("prop4.9", {"p": p, "tau": 2.0 / p}))
    return runs


def run_id(claim: str, config: dict) -> str:
    if not config:
        return claim
    return claim + "_" + "_".join(f"{k}{v:g}" if isinstance(v, (int, float)) else f"{k}{v}" for k, v in sorted(config.items()))


def verify_all(ctx: Context, fine: Context | None = None, runs: list | None = None) -> dict:
    """Every claim run; with ``fine`` each report also records refinement stability."""
    from concurrent.futures import ThreadPoolExecutor

    runs = verify_claims() if runs is None else runs
    ctx.ensure_battery()
    if fine is not None:
        fine.ensure_battery()
    if any(c == "thm7.5" for c, _ in runs):
        ctx.ensure_frame()
        if fine is not None:
            fine.ensure_frame()

    def one(item):
        claim, cfg = item
        try:
            if fine is not None:
                return run_id(claim, cfg), refinement_study(claim, ctx, fine, cfg)
            return run_id(claim, cfg), run_equivalence(claim, ctx, cfg)
        except HypothesisViolation as exc:
            return run_id(claim, cfg), exc

    with ThreadPoolExecutor(max_workers=max_workers()) as pool:
        results = list(pool.map(one, runs))
    return dict(results)
