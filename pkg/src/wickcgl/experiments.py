"""Experiment orchestration: manifests, result records, persistence and resume."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import studies
from .bel import CutoffSpec, bel_estimator, linear_mode0, tanh_mode0
from .errors import ConfigurationError, InputError
from .ou import renorm_constant
from .solver import SCHEMES, SolverConfig, Simulation
from .spectral import Grid, PhysParams, SpectralField, fast_size, quantize, read_snapshot, write_snapshot

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

SCHEMA_VERSION = 1
KINDS = ("simulate", "renorm-scan", "besov-scan", "kernel-check", "convergence", "coming-down", "bel-check",
         "selftest")

log = logging.getLogger("wickcgl")


class ResumeError(ConfigurationError):
    """Stored outputs do not belong to the manifest being resumed."""


# -- configuration -------------------------------------------------------------


def load_config(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc
    except FileNotFoundError as exc:
        raise ConfigurationError(f"config file not found: {path}") from exc


def as_complex(v) -> complex:
    """Numbers, ``[re, im]`` pairs and strings like ``"1+0.5j"``."""
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise ConfigurationError(f"complex value must be [re, im], got {v!r}")
        return complex(float(v[0]), float(v[1]))
    try:
        return complex(v)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"not a complex number: {v!r}") from exc


def params_from(cfg: dict) -> PhysParams:
    p = cfg.get("params", {})
    return PhysParams(float(p.get("mu", 1.0)), as_complex(p.get("nu", 1.0)), as_complex(p.get("lam", 0.0)))


_SOLVER_KEYS = {"n", "N", "h", "T", "scheme", "ou_init", "replicas", "snapshot_every", "sample_every",
                "lp_exponents", "besov_alpha", "noise", "c_value"}


def solver_config_from(cfg: dict, seed: int) -> SolverConfig:
    s = dict(cfg.get("solver", {}))
    unknown = set(s) - _SOLVER_KEYS
    if unknown:
        raise ConfigurationError(f"unknown solver keys: {sorted(unknown)}")
    if "lp_exponents" in s:
        s["lp_exponents"] = tuple(s["lp_exponents"])
    if s.get("N") == "fast":
        s["N"] = fast_size(int(s.get("n", 32)))
    try:
        return SolverConfig(params=params_from(cfg), seed=int(seed), **s)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from exc


def initial_field(cfg: dict, grid: Grid) -> SpectralField | None:
    init = cfg.get("initial")
    if not init:
        return None
    f = grid.zeros()
    for mode in init.get("modes", []):
        f = f + grid.mode(tuple(mode["m"]), as_complex(mode["value"]))
    return f


# -- manifests and records -----------------------------------------------------


def code_digest() -> str:
    h = hashlib.sha256()
    for p in sorted(Path(__file__).parent.glob("*.py")):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


@dataclass(frozen=True)
class ExperimentManifest:
    kind: str
    config: dict
    seed: int
    out_dir: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown experiment {self.kind!r}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigurationError("seed must fit in an unsigned 64-bit integer")

    @property
    def content_hash(self) -> str:
        """sha256 over kind, config, seed and the package source; the output directory is excluded."""
        body = json.dumps({"kind": self.kind, "config": _jsonable(self.config), "seed": int(self.seed),
                           "code": code_digest()}, sort_keys=True)
        return hashlib.sha256(body.encode()).hexdigest()

    @property
    def out(self) -> Path:
        return Path(self.out_dir)


@dataclass
class ResultRecord:
    experiment_id: str
    replica: int
    t: float
    step: int
    metrics: dict = field(default_factory=dict)
    snapshot: str | None = None
    blowup: bool = False
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if not self.blowup:
            bad = [k for k, v in self.metrics.items() if not math.isfinite(v)]
            if bad:
                raise InputError(f"non-finite metrics {bad} on a record not tagged as blow-up")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "ResultRecord":
        d = json.loads(line)
        if d.get("schema_version") != SCHEMA_VERSION:
            raise InputError(f"unsupported record schema {d.get('schema_version')}")
        return cls(**d)


class ResultWriter:
    """Single writer for an output directory; files are written whole and renamed into place."""

    def __init__(self, manifest: ExperimentManifest):
        self.manifest = manifest
        self.root = manifest.out
        self.hash = manifest.content_hash
        try:
            self.root.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise OSError(f"cannot create output directory {self.root}: {exc}") from exc

    def _put(self, name: str, text: str):
        path = self.root / name
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text(text)
        os.replace(tmp, path)
        return path

    def header(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "manifest_hash": self.hash, "kind": self.manifest.kind,
                "seed": int(self.manifest.seed)}

    def jsonl(self, name: str, records) -> Path:
        lines = [json.dumps({"header": self.header()}, sort_keys=True)]
        lines += [r.to_json() for r in records]
        return self._put(name, "\n".join(lines) + "\n")

    def csv(self, name: str, rows: list[dict]) -> Path:
        buf = io.StringIO()
        buf.write(f"# manifest_hash={self.hash} schema_version={SCHEMA_VERSION}\n")
        if rows:
            cols = list(rows[0])
            w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
            w.writeheader()
            for r in rows:
                w.writerow({k: _fmt(r[k]) for k in cols})
        return self._put(name, buf.getvalue())

    def json(self, name: str, payload: dict) -> Path:
        return self._put(name, json.dumps({"header": self.header(), **_jsonable(payload)}, sort_keys=True,
                                          indent=2) + "\n")


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _attach_log(out: Path):
    handler = logging.FileHandler(out / "run.log")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.INFO)
    return handler


def read_jsonl(path) -> tuple[dict, list[ResultRecord]]:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise InputError(f"{path} is empty")
    head = json.loads(lines[0])["header"]
    return head, [ResultRecord.from_json(l) for l in lines[1:] if l]


# -- simulate ------------------------------------------------------------------


def _snap_dir(out: Path, step: int) -> Path:
    return out / "snapshots" / f"step_{step:08d}"


def _state_arrays(sim: Simulation) -> dict:
    if sim.config.scheme == "split_exp_euler":
        return {"Y": sim.state.Y.coeffs, "Z": sim.state.ou.Z.coeffs}
    return {"u": sim.state.coeffs}


def _quantize_state(sim: Simulation):
    for arr in _state_arrays(sim).values():
        arr[...] = quantize(arr)


def _write_checkpoint(sim: Simulation, out: Path, reps, mhash: str, seed: int) -> str:
    d = _snap_dir(out, sim.step_index)
    d.mkdir(parents=True, exist_ok=True)
    for name, arr in _state_arrays(sim).items():
        for i, r in enumerate(reps):
            write_snapshot(d / f"r{int(r):06d}_{name}.wcgl", SpectralField(sim.grid, arr[i]), sim.t, seed)
    marker = {"manifest_hash": mhash, "step": sim.step_index, "t": sim.t,
              "replicas": [int(r) for r in reps], "alive": sim.alive.tolist(),
              "blowups": [asdict(b) for b in sim.blowups]}
    (d / f"chunk_{int(reps[0]):06d}.json").write_text(json.dumps(marker, sort_keys=True))
    return str(d.relative_to(out))


def _latest_checkpoint(out: Path, reps, mhash: str):
    root = out / "snapshots"
    if not root.is_dir():
        return None
    for d in sorted(root.iterdir(), reverse=True):
        marker = d / f"chunk_{int(reps[0]):06d}.json"
        if not marker.exists():
            continue
        m = json.loads(marker.read_text())
        if m["manifest_hash"] != mhash:
            raise ResumeError(f"{marker}: manifest hash mismatch; refusing to resume")
        if m["replicas"] != [int(r) for r in reps]:
            raise ResumeError(f"{marker}: replica partition differs; resume with the same --workers")
        return d, m
    return None


def _run_chunk(manifest: ExperimentManifest, reps, resume: bool, prior: list):
    cfg = solver_config_from(manifest.config, manifest.seed)
    out = manifest.out
    mhash = manifest.content_hash
    eid = mhash[:16]
    sim = Simulation(cfg, replicas=reps)
    records: list[ResultRecord] = []
    ck = _latest_checkpoint(out, reps, mhash) if resume else None
    if ck is not None:
        d, m = ck
        arrays = {}
        for name in (("Y", "Z") if cfg.scheme == "split_exp_euler" else ("u",)):
            arrays[name] = np.stack([read_snapshot(d / f"r{int(r):06d}_{name}.wcgl")[0].coeffs for r in reps])
        sim.restore(m["t"], m["step"], **arrays)
        sim.alive = np.asarray(m["alive"], dtype=bool)
        from .solver import BlowUpRecord

        sim.blowups = [BlowUpRecord(**b) for b in m["blowups"]]
        keep = set(int(r) for r in reps)
        records = [r for r in prior if r.replica in keep and r.step <= m["step"]]
    else:
        sim.initialise(u0=initial_field(manifest.config, cfg.grid))
    seen_blowups = len(sim.blowups)
    first = "Y" if cfg.scheme == "split_exp_euler" else "u"

    def sample(snapshot=None):
        nonlocal seen_blowups
        d = sim.diagnostics()
        for b in sim.blowups[seen_blowups:]:
            records.append(ResultRecord(eid, b.replica, b.t, b.step, {k: float(v) for k, v in b.last_norms.items()},
                                        blowup=True))
        seen_blowups = len(sim.blowups)
        for i, r in enumerate(reps):
            if sim.alive[i]:
                path = None if snapshot is None else f"{snapshot}/r{int(r):06d}_{first}.wcgl"
                records.append(ResultRecord(eid, int(r), sim.t, sim.step_index,
                                            {k: float(np.asarray(v)[i]) for k, v in d.items()}, path))

    if ck is None:
        sample()
    while sim.step_index < cfg.steps:
        sim.advance()
        snap = None
        if cfg.snapshot_every and sim.step_index % cfg.snapshot_every == 0:
            _quantize_state(sim)
            snap = _write_checkpoint(sim, out, reps, mhash, manifest.seed)
        if sim.step_index % cfg.sample_every == 0 or sim.step_index == cfg.steps:
            sample(snap)
    return records


def simulate(manifest: ExperimentManifest, writer: ResultWriter, resume: bool = False, workers: int = 1):
    cfg = solver_config_from(manifest.config, manifest.seed)
    prior: list[ResultRecord] = []
    results = manifest.out / "results.jsonl"
    if resume and results.exists():
        head, prior = read_jsonl(results)
        if head.get("manifest_hash") != writer.hash:
            raise ResumeError(f"{results}: manifest hash mismatch; refusing to resume")
    chunks = [c for c in np.array_split(np.arange(cfg.replicas), max(1, min(workers, cfg.replicas))) if c.size]
    if len(chunks) > 1:
        with ProcessPoolExecutor(len(chunks)) as pool:
            parts = list(pool.map(_run_chunk, [manifest] * len(chunks), chunks, [resume] * len(chunks),
                                  [prior] * len(chunks)))
    else:
        parts = [_run_chunk(manifest, chunks[0], resume, prior)]
    records = sorted((r for p in parts for r in p), key=lambda r: (r.step, r.replica, r.blowup))
    writer.jsonl("results.jsonl", records)
    rows = []
    steps = sorted({r.step for r in records if not r.blowup})
    for s in steps:
        live = [r for r in records if r.step == s and not r.blowup]
        for key in sorted(live[0].metrics):
            vals = np.array([r.metrics[key] for r in live])
            rows.append({"step": s, "t": live[0].t, "metric": key, "mean": math.fsum(vals) / vals.size,
                         "median": float(np.median(vals)), "replicas": vals.size})
    writer.csv("summary.csv", rows)
    blow = [r for r in records if r.blowup]
    summary = {"records": len(records), "blowups": len(blow), "steps": cfg.steps, "scheme": cfg.scheme}
    return summary, len(blow) == 0


# -- other experiment kinds --------------------------------------------------------


def _section(manifest, name) -> dict:
    return dict(manifest.config.get(name, {}))


def renorm_scan(manifest, writer):
    s = _section(manifest, "renorm")
    mus = [float(m) for m in s.get("mu", [0.5, 1.0, 2.0])]
    ns = [int(n) for n in s.get("n", [16, 32, 64, 128, 256, 512])]
    rows, fits, ok = [], [], True
    for mu in mus:
        for n in ns:
            rows.append({"mu": mu, "n": n, "c_n": renorm_constant(n, mu).value})
        r = studies.renorm_slope(mu, tuple(ns))
        fits.append({k: r[k] for k in ("mu", "slope", "target", "rel_error", "passed")})
        ok &= r["passed"]
    writer.csv("renorm.csv", rows)
    writer.csv("renorm_fit.csv", fits)
    return {"fits": fits}, ok


def kernel_check(manifest, writer):
    s = _section(manifest, "kernel")
    r = studies.kernel_log_sweep(float(s.get("mu", 1.0)))
    rows = [{"x": x, "K0": k, "log_term": k - d, "deviation": d}
            for x, k, d in zip(r["x"], r["K0"], r["deviation"])]
    writer.csv("kernel.csv", rows)
    return {k: r[k] for k in ("max_abs_deviation", "slope")}, r["passed"]


def besov_scan(manifest, writer):
    s = _section(manifest, "besov")
    lp = studies.lp_suite(fields=int(s.get("fields", 100)))
    sm = studies.semigroup_slope(-0.5, 0.5, 0.1, (1e-4, 1e-1))
    tr = studies.semigroup_slope(0.5, -0.5, 1.0, (1e-5, 1e-2), kind="time")
    pi = studies.pi_decay()
    rows = [{"study": "smoothing", "value": sm["slope"], "target": sm["target"], "passed": sm["passed"]},
            {"study": "time_regularity", "value": tr["slope"], "target": tr["target"], "passed": tr["passed"]},
            {"study": "pi_decay", "value": pi["slope"], "target": pi["bound"], "passed": pi["passed"]},
            {"study": "lp_reconstruction", "value": lp["reconstruction_error"], "target": 1e-12,
             "passed": lp["passed"]}]
    writer.csv("besov.csv", rows)
    return {"lp": lp, "smoothing": sm, "time_regularity": tr, "pi_decay": pi}, all(r["passed"] for r in rows)


def convergence_suite(manifest, writer):
    s = _section(manifest, "convergence")
    seed = int(manifest.seed)
    ladder = studies.wick_ladder(replicas=int(s.get("replicas", 64)), seed=seed)
    tables = {sch: studies.timestep_table(sch, seed=seed) for sch in SCHEMES}
    ul = studies.u_ladder(seed=seed) if s.get("u_ladder", True) else None
    rows = []
    for kl in ("11", "21"):
        for n, v in zip(ladder[kl]["n"], ladder[kl]["median_sup"]):
            rows.append({"table": f"wick_{kl}", "n": n, "h": "", "value": v})
    for sch, t in tables.items():
        for h, e in zip(t["h"], t["error"]):
            rows.append({"table": f"timestep_{sch}", "n": 8, "h": h, "value": e})
    if ul:
        for n, v in zip(ul["n"], ul["median"]):
            rows.append({"table": "u_ladder", "n": n, "h": "", "value": v})
    writer.csv("convergence.csv", rows)
    ok = ladder["passed"] and tables["split_exp_euler"]["passed"] and (ul is None or ul["decreasing"])
    return {"wick_ladder": ladder, "timestep": tables, "u_ladder": ul}, ok


def coming_down(manifest, writer):
    s = _section(manifest, "coming_down")
    r = studies.coming_down(R_values=tuple(s.get("R", (0, 10, 100, 1e3, 1e4))), t0=float(s.get("t0", 0.5)),
                            replicas=int(s.get("replicas", 64)), n=int(s.get("n", 32)),
                            h=float(s.get("h", 1e-3)), seed=int(manifest.seed))
    writer.csv("coming_down.csv", r["rows"])
    return {"spread": r["spread"], "blowups": r["blowups"]}, r["passed"]


def bel_check(manifest, writer):
    s = _section(manifest, "bel")
    n = int(s.get("n", 4))
    grid = Grid(n, fast_size(n))
    h = float(s.get("h", 5e-3))
    t = float(s.get("t", 0.1))
    cfg = SolverConfig(params=params_from(manifest.config), n=n, N=grid.N, h=h, T=t, seed=int(manifest.seed))
    v0 = grid.mode((0, 0), 0.3) + grid.mode((1, 0), 0.2)
    hd = grid.mode((0, 0), 1.0) + grid.mode((0, 1), 0.5j)
    phi = linear_mode0() if s.get("observable") == "linear" else tanh_mode0()
    cut = CutoffSpec(threshold=float(s.get("threshold", 2.0)), alpha=float(s.get("alpha", 0.25)),
                     sample_every=int(s.get("sample_every", 4)))
    rep = bel_estimator(phi, v0, hd, t, int(s.get("replicas", 10 ** 5)), cfg, cut,
                        linear=bool(s.get("linear", False)))
    d = rep.to_dict()
    writer.json("bel.json", d)
    return d, bool(rep.z_score <= 3 and not rep.unreliable)


def selftest(manifest, writer):
    checks = {
        "renorm_slope": all(studies.renorm_slope(m)["passed"] for m in (0.5, 1.0, 2.0)),
        "hermite_identities": studies.hermite_identities()["passed"],
        "chaos_moments": studies.chaos_moments(samples=2 * 10 ** 5)["passed"],
        "product_formula": studies.product_formula_check(samples=2 * 10 ** 5)["passed"],
        "ou_exactness": studies.ou_stationary_variance(samples=2 * 10 ** 4)["passed"],
        "lp_suite": studies.lp_suite(fields=20)["passed"],
        "dealiasing": studies.dealias_check()["passed"],
        "dissipativity": studies.dissipativity_check()["passed"],
        "variational_fd": studies.variational_fd()["passed"],
    }
    writer.csv("selftest.csv", [{"check": k, "passed": v} for k, v in checks.items()])
    return checks, all(checks.values())


RUNNERS = {"renorm-scan": renorm_scan, "kernel-check": kernel_check, "besov-scan": besov_scan,
           "convergence": convergence_suite, "coming-down": coming_down, "bel-check": bel_check,
           "selftest": selftest}


def run_manifest(manifest: ExperimentManifest, check: bool = False, resume: bool = False, workers: int = 1) -> int:
    """Dispatch, persist and return the exit status (1 only for a failed ``check``)."""
    writer = ResultWriter(manifest)
    handler = _attach_log(manifest.out)
    try:
        log.info("start %s seed=%d hash=%s", manifest.kind, manifest.seed, writer.hash)
        if manifest.kind == "simulate":
            summary, ok = simulate(manifest, writer, resume=resume, workers=workers)
        else:
            summary, ok = RUNNERS[manifest.kind](manifest, writer)
        writer.json("summary.json", {"kind": manifest.kind, "passed": bool(ok), "summary": summary})
        log.info("done %s passed=%s", manifest.kind, ok)
    finally:
        log.removeHandler(handler)
        handler.close()
    return 1 if (check and not ok) else 0
