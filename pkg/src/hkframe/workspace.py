"""Artifact files, the workspace manifest and the staged pipeline.

Structured artifacts are JSON with sorted keys. Calibration and frame kernels use a
dense binary layout: a 16-byte magic, a little-endian uint64 header length, a JSON
header, then each array as uint64 ndim, uint64 dims and row-major little-endian f64.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .calibration import BumpPair, LPCalibration, build_calibration, make_bump_pair, make_dual_pair
from .cubes import CubeSystem, SubcubeGrid, build_cubes, subcube_grid, verify_cube_axioms
from .errors import HashMismatch, HKFrameError, StageError, ValidationError
from .frame import LevelDiagnostics, SynthesisFrame, build_synthesis_frame
from .generate import operator_from_doc
from .space import MetricMeasureSpace, load_space, normalize_min_distance
from .spectral import SpectralOperator

CALIB_MAGIC = b"HKFRAME-CALIB\x00\x00\x01"
FRAME_MAGIC = b"HKFRAME-FRAME\x00\x00\x01"
assert len(CALIB_MAGIC) == len(FRAME_MAGIC) == 16

DEFAULT_CONFIG = {
    "delta": 0.5,
    "beta0": 2.0,
    "j0": 1,
    "tol": 1e-12,
    "seed": 0,
    "sample_rule": "center",
    "laplacian": None,
    "normalize": False,
    "bump_kind": "telescoping",
    "battery_size": 20,
    "refine": True,
}


def _plain(obj):
    """Convert numpy scalars and arrays so the JSON encoder accepts them."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, indent=1) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj))


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ValidationError(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from None


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


# ---------------------------------------------------------------- binary kernels


def write_binary(path, magic: bytes, header: dict, arrays: list) -> None:
    buf = io.BytesIO()
    head = json.dumps(_plain(header), sort_keys=True).encode()
    buf.write(magic)
    buf.write(struct.pack("<Q", len(head)))
    buf.write(head)
    for arr in arrays:
        arr = np.ascontiguousarray(arr, dtype="<f8")
        buf.write(struct.pack("<Q", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(arr.tobytes(order="C"))
    Path(path).write_bytes(buf.getvalue())


def read_binary(path, magic: bytes) -> tuple[dict, list]:
    try:
        data = Path(path).read_bytes()
    except FileNotFoundError:
        raise ValidationError(f"file not found: {path}") from None
    if data[:16] != magic:
        raise ValidationError(f"{path}: wrong file type (bad magic)")
    (hlen,) = struct.unpack_from("<Q", data, 16)
    pos = 24
    header = json.loads(data[pos : pos + hlen])
    pos += hlen
    arrays = []
    while pos < len(data):
        (ndim,) = struct.unpack_from("<Q", data, pos)
        pos += 8
        shape = struct.unpack_from(f"<{ndim}Q", data, pos)
        pos += 8 * ndim
        count = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=pos).reshape(shape).astype(float)
        pos += 8 * count
        arrays.append(arr)
    return header, arrays


# ---------------------------------------------------------------- space documents


def space_to_doc(space: MetricMeasureSpace, laplacian=None) -> dict:
    doc = {"points": list(space.point_ids), "measure": space.mu.tolist(), "metadata": dict(space.metadata)}
    if space.edges is not None:
        ids = space.point_ids
        doc["edges"] = [[ids[a], ids[b], float(w)] for a, b, w in space.edges]
    else:
        doc["distance_matrix"] = space.rho.tolist()
    if laplacian is not None:
        doc["laplacian"] = laplacian.tolist() if isinstance(laplacian, np.ndarray) else laplacian
    return doc


def canonical_space_doc(doc: dict, normalize: bool = False, laplacian: str | None = None) -> dict:
    space = load_space(doc)
    if normalize:
        space = normalize_min_distance(space)
    lap = laplacian or doc.get("laplacian")
    if lap is None and space.edges is not None:
        lap = "unnormalized"
    return space_to_doc(space, lap)


def load_space_file(path) -> tuple[dict, MetricMeasureSpace]:
    doc = read_json(path)
    return doc, load_space(doc)


def save_cubes(path, cubes: CubeSystem, space_doc: dict) -> None:
    doc = cubes.to_dict()
    doc["space"] = space_doc
    write_json(path, doc)


def load_cubes(path) -> tuple[CubeSystem, dict]:
    doc = read_json(path)
    if "space" not in doc:
        raise ValidationError(f"{path}: cube file lacks the embedded space")
    space = load_space(doc["space"])
    return CubeSystem.from_dict(space, doc), doc["space"]


def save_grid(path, grid: SubcubeGrid, space_doc: dict, levels=None) -> None:
    cs = grid.cubes
    levels = range(max(cs.k_max, 0) + 1) if levels is None else levels
    doc = grid.to_dict(levels)
    cdoc = cs.to_dict()
    cdoc["space"] = space_doc
    doc["cubes"] = cdoc
    write_json(path, doc)


def load_grid(path) -> tuple[SubcubeGrid, dict]:
    doc = read_json(path)
    if "cubes" not in doc:
        raise ValidationError(f"{path}: grid file lacks the embedded cube system")
    space_doc = doc["cubes"]["space"]
    cubes = CubeSystem.from_dict(load_space(space_doc), doc["cubes"])
    grid = subcube_grid(cubes, doc["j0"], doc["eps0"], doc["sample_rule"], doc["seed"], doc.get("finest"))
    for j, lv in doc["levels"].items():
        if grid.level(int(j)).samples.tolist() != lv["samples"]:
            raise ValidationError(f"{path}: stored samples at level {j} disagree with the cube system")
    return grid, space_doc


def save_calibration(path, calib: LPCalibration, space_doc: dict) -> None:
    op = calib.op
    J = calib.J_max
    header = {
        "kind": "calibration",
        "space": space_doc,
        "operator_source": op.source,
        "bumps": calib.bumps.tag(),
        "lower_bound": calib.bumps.lower_bound,
        "J_max": J,
        "arrays": ["eigenvalues", "eigenvectors", "level_profile_table", "dual_profile_table", "level_ops", "dual_ops"],
    }
    arrays = [
        op.eigenvalues,
        op.eigenvectors,
        np.stack([calib.level_profile_values(j) for j in range(J + 1)]),
        np.stack([calib.dual_profile_values(j) for j in range(J + 1)]),
        np.stack(calib.level_ops),
        np.stack(calib.dual_ops),
    ]
    write_binary(path, CALIB_MAGIC, header, arrays)


def load_calibration(path) -> tuple[LPCalibration, dict]:
    header, arrays = read_binary(path, CALIB_MAGIC)
    space_doc = header["space"]
    space = load_space(space_doc)
    lam, U, _, _, lops, dops = arrays
    op = SpectralOperator(space, lam, U, header["operator_source"])
    t = header["bumps"]
    bumps = BumpPair(t["delta"], t["beta0"], t["e0"], t["e1"], t["kind"], lower_bound=header["lower_bound"])
    calib = LPCalibration(op, bumps, make_dual_pair(bumps), header["J_max"], list(lops), list(dops))
    return calib, space_doc


def save_frame(path, frame: SynthesisFrame, calib: LPCalibration, calib_hash: str = "") -> None:
    levels = sorted(frame.psi)
    header = {
        "kind": "synthesis_frame",
        "calibration_sha256": calib_hash,
        "report": frame.report(),
        "levels": levels,
        "arrays": ["mu"] + [f"{name}[{j}]" for j in levels for name in ("samples", "measures", "analysis_rows", "psi")],
    }
    arrays = [calib.op.mu]
    for j in levels:
        S = frame.samples[j]
        arrays += [S.astype(float), frame.measures[j], calib.level_op(j)[S, :], frame.psi[j]]
    write_binary(path, FRAME_MAGIC, header, arrays)


@dataclass
class StoredFrame:
    """A frame file: enough to run analysis and synthesis without the calibration."""

    mu: np.ndarray
    levels: list
    samples: dict
    measures: dict
    analysis_rows: dict
    frame: SynthesisFrame
    header: dict = field(default_factory=dict)

    def analyze(self, f) -> dict:
        f = np.asarray(f, dtype=float)
        return {j: self.analysis_rows[j] @ (self.mu * f) for j in self.levels}

    def synthesize(self, coeffs: dict) -> np.ndarray:
        return sum((self.measures[j] * coeffs[j]) @ self.frame.psi[j][self.samples[j], :] for j in self.levels)

    def roundtrip(self, f) -> dict:
        f = np.asarray(f, dtype=float)
        rec = self.synthesize(self.analyze(f))
        nf = float(np.linalg.norm(f))
        err = float(np.linalg.norm(rec - f))
        return {
            "absolute_l2_error": err,
            "relative_l2_error": err / nf if nf > 0 else err,
            "max_pointwise_error": float(np.max(np.abs(rec - f))) if f.size else 0.0,
            "reconstruction": rec.tolist(),
        }


def load_frame(path) -> StoredFrame:
    header, arrays = read_binary(path, FRAME_MAGIC)
    mu = arrays[0]
    levels = [int(j) for j in header["levels"]]
    samples, measures, rows, psi = {}, {}, {}, {}
    for i, j in enumerate(levels):
        S, m, r, p = arrays[1 + 4 * i : 5 + 4 * i]
        samples[j] = S.astype(int)
        measures[j] = m
        rows[j] = r
        psi[j] = p
    rep = header["report"]
    diag = {int(j): LevelDiagnostics(**d) for j, d in rep["levels"].items()}
    frame = SynthesisFrame(psi, samples, measures, rep["eps0"], rep["tol"], diag, rep.get("theta", {}))
    return StoredFrame(mu, levels, samples, measures, rows, frame, header)


def load_function(path, space: MetricMeasureSpace) -> np.ndarray:
    """A function file: a list of values, {"values": [...]}, or {point_id: value}."""
    doc = read_json(path)
    if isinstance(doc, dict) and "values" in doc:
        doc = doc["values"]
    if isinstance(doc, dict):
        f = np.zeros(space.n)
        for k, v in doc.items():
            try:
                f[space.index(k)] = v
            except HKFrameError:
                f[space.index(int(k))] = v
        return f
    f = np.asarray(doc, dtype=float)
    if f.shape != (space.n,):
        raise ValidationError(f"function has {f.size} values, the space has {space.n} points")
    return f


# ---------------------------------------------------------------- workspace and pipeline

FILES = {
    "space": ["space.json"],
    "cubes": ["cubes.json", "reports/cube_axioms.json"],
    "grid": ["grid.json"],
    "calib": ["calib.bin"],
    "frame": ["frame.bin", "reports/frame.json"],
    "verify": [],
}
STAGES = tuple(FILES)
STAGE_PARAMS = {
    "space": ("normalize", "laplacian"),
    "cubes": ("delta", "seed"),
    "grid": ("j0", "sample_rule", "seed"),
    "calib": ("beta0", "bump_kind"),
    "frame": ("tol",),
    "verify": ("battery_size", "refine", "seed"),
}
STAGE_INPUTS = {
    "space": [],
    "cubes": ["space.json"],
    "grid": ["cubes.json"],
    "calib": ["space.json", "cubes.json"],
    "frame": ["calib.bin", "grid.json"],
    "verify": ["space.json", "cubes.json", "grid.json", "calib.bin", "frame.bin"],
}


def load_config(path_or_dict=None) -> dict:
    cfg = dict(DEFAULT_CONFIG)
    if path_or_dict is None:
        return cfg
    user = read_json(path_or_dict) if isinstance(path_or_dict, (str, Path)) else dict(path_or_dict)
    unknown = set(user) - set(cfg)
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    cfg.update(user)
    return cfg


@dataclass
class Workspace:
    root: Path
    manifest: dict
    executed: list = field(default_factory=list)

    @property
    def manifest_path(self) -> Path:
        return self.root / "manifest.json"

    def path(self, name: str) -> Path:
        return self.root / name


def _check_hashes(root: Path, manifest: dict) -> None:
    for name, digest in sorted(manifest.get("files", {}).items()):
        p = root / name
        if p.exists() and sha256_file(p) != digest:
            raise HashMismatch(f"{name}: content hash does not match the manifest")


def _stage_key(stage: str, cfg: dict, root: Path, source_hash: str) -> str:
    parts = {"stage": stage, "params": {k: cfg[k] for k in STAGE_PARAMS[stage]}}
    parts["inputs"] = {n: sha256_file(root / n) for n in STAGE_INPUTS[stage]}
    if stage == "space":
        parts["source"] = source_hash
    return sha256_text(json.dumps(_plain(parts), sort_keys=True))


def verify_workspace(root, out_dir=None, battery_size: int = 20, refine: bool = True, seed: int = 0) -> list:
    """Run every claim on a workspace; write one JSON per run plus summary.csv."""
    from .verify import Context, build_context, refine_doc, run_id, verify_all

    root = Path(root)
    out = Path(out_dir) if out_dir is not None else root / "reports" / "verify"
    out.mkdir(parents=True, exist_ok=True)
    calib, space_doc = load_calibration(root / "calib.bin")
    cubes, _ = load_cubes(root / "cubes.json")
    grid, _ = load_grid(root / "grid.json")
    stored = load_frame(root / "frame.bin")
    if abs(cubes.delta - calib.delta) > 1e-15:
        raise ValidationError("cube system and calibration use different delta")
    ctx = Context(calib.op, cubes, calib, grid, stored.frame, doc=space_doc)
    ctx.ensure_battery(seed, battery_size)
    fine = None
    if refine:
        fdoc = refine_doc(space_doc)
        if fdoc is not None:
            fine = build_context(fdoc, calib.delta, calib.beta0, grid.j0, cubes.seed, grid.sample_rule)
            fine.ensure_battery(seed, battery_size)
    inputs = {n: sha256_file(root / n) for n in ("space.json", "cubes.json", "grid.json", "calib.bin", "frame.bin") if (root / n).exists()}
    results = verify_all(ctx, fine)
    rows = []
    for rid, rep in results.items():
        if isinstance(rep, Exception):
            doc = {"run": rid, "status": "refused", "reason": str(rep), "input_sha256": inputs}
            rows.append([rid, "refused", "", "", "", ""])
        else:
            doc = rep.to_dict()
            doc.update(run=rid, status="ok", input_sha256=inputs)
            rs = rep.refinement_stability or {}
            rows.append([rid, "ok", rep.paper_tag, _fmt(rep.spread), _fmt(rs.get("spread_refined")), _fmt(rs.get("relative_change"))])
        write_json(out / f"{rid}.json", doc)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["run", "status", "paper_tag", "spread", "spread_refined", "relative_change"])
    w.writerows(rows)
    (out / "summary.csv").write_text(buf.getvalue())
    return sorted(p.relative_to(root).as_posix() for p in out.iterdir()) if out.is_relative_to(root) else []


def _fmt(x) -> str:
    if x is None:
        return ""
    return repr(float(x)) if math.isfinite(x) else "inf"


def pipeline(space_file, config=None, workspace_dir="workspace") -> Workspace:
    """space -> cubes -> grid -> calib -> frame -> verify, with per-stage caching.

    A stage is skipped when its key (parameters plus input hashes) matches the manifest
    and its outputs are intact. Recorded files whose bytes changed raise HashMismatch.
    """
    cfg = load_config(config)
    root = Path(workspace_dir)
    (root / "reports").mkdir(parents=True, exist_ok=True)
    mpath = root / "manifest.json"
    manifest = read_json(mpath) if mpath.exists() else {}
    _check_hashes(root, manifest)
    manifest.setdefault("files", {})
    manifest.setdefault("stages", {})
    manifest["params"] = _plain(cfg)
    ws = Workspace(root, manifest)
    source_text = Path(space_file).read_text() if not isinstance(space_file, dict) else json.dumps(space_file, sort_keys=True)
    source_hash = sha256_text(source_text)
    manifest["source_sha256"] = source_hash

    def run(stage):
        if stage == "space":
            src = json.loads(source_text)
            doc = canonical_space_doc(src, cfg["normalize"], cfg["laplacian"])
            write_json(root / "space.json", doc)
            return ["space.json"]
        if stage == "cubes":
            space = load_space(read_json(root / "space.json"))
            cubes = build_cubes(space, cfg["delta"], cfg["seed"])
            save_cubes(root / "cubes.json", cubes, read_json(root / "space.json"))
            write_json(root / "reports/cube_axioms.json", verify_cube_axioms(cubes).to_dict())
            return FILES["cubes"]
        if stage == "grid":
            cubes, sdoc = load_cubes(root / "cubes.json")
            grid = subcube_grid(cubes, cfg["j0"], sample_rule=cfg["sample_rule"], seed=cfg["seed"])
            save_grid(root / "grid.json", grid, sdoc)
            return FILES["grid"]
        if stage == "calib":
            sdoc = read_json(root / "space.json")
            cubes, _ = load_cubes(root / "cubes.json")
            space = load_space(sdoc)
            op = operator_from_doc(space, sdoc)
            calib = build_calibration(op, make_bump_pair(cubes.delta, cfg["beta0"], kind=cfg["bump_kind"]))
            save_calibration(root / "calib.bin", calib, sdoc)
            return FILES["calib"]
        if stage == "frame":
            calib, _ = load_calibration(root / "calib.bin")
            grid, _ = load_grid(root / "grid.json")
            frame = build_synthesis_frame(calib, grid, cfg["tol"])
            save_frame(root / "frame.bin", frame, calib, sha256_file(root / "calib.bin"))
            write_json(root / "reports/frame.json", frame.report())
            return FILES["frame"]
        return verify_workspace(root, root / "reports" / "verify", cfg["battery_size"], cfg["refine"], cfg["seed"])

    for stage in STAGES:
        key = _stage_key(stage, cfg, root, source_hash)
        prev = manifest["stages"].get(stage)
        if prev and prev.get("key") == key and all((root / f).exists() for f in prev.get("outputs", [])):
            continue
        try:
            outputs = run(stage)
        except Exception as exc:
            write_json(mpath, manifest)
            raise StageError(stage, exc) from exc
        for f in outputs:
            manifest["files"][f] = sha256_file(root / f)
        manifest["stages"][stage] = {"key": key, "outputs": list(outputs)}
        ws.executed.append(stage)
        write_json(mpath, manifest)
    write_json(mpath, manifest)
    return ws
