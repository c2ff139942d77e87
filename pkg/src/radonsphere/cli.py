"""Command-line front end.

Usage::

    radonsphere {radon,flow,spectrum,verify} --config run.yaml --out results/
        [--cache cache/] [--threads N] [--seed S]

The config is YAML. Every key is optional except ``potential``::

    potential:
      preset: quadratic          # or polynomial: "x1^2 + 2*x2^2 + 3*x3^2"
                                 # or harmonics: [[2, 0, 1.0], [1, 1, 0.5]]
    points: [diagonal, e1, [0.0, 0.6, 0.8]]
    L_max: 30
    r0: 0.1
    tau0: 0.5
    radii: [0.01, 0.02, 0.04, 0.08]
    p: [4, 6, 8, inf]
    lambda_range: [10, 40]
    scan: {geodesics: 4000, centers: 200, seeds: 500}
    tolerances: {crit_tol: 1.0e-3, morse_tol: 1.0e-6, grad_tol: 1.0e-8}

Every output file carries the config hash and library version. Outputs
contain no timestamps or absolute paths, so reruns are byte-identical.
"""
from __future__ import annotations

import argparse
import ast
import csv
import hashlib
import json
import logging
import math
import sys
import traceback
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .flow import FlowEnergyError, fit_scaling_exponent, integrate_flow, sup_flow_averages
from .norms import verify_report
from .potential import PRESETS, PotentialSpec, PotentialSyntaxError, preset
from .radon import check_hypotheses, find_critical_points, radon_multiplier
from .sphere import E1, E2, E3, random_points, sphere_grid

log = logging.getLogger("radonsphere")

NAMED_POINTS = {
    "e1": E1, "e2": E2, "e3": E3, "-e1": -E1, "-e2": -E2, "-e3": -E3,
    "diagonal": np.ones(3) / np.sqrt(3.0),
}


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# config


@dataclass
class ScanConfig:
    geodesics: int = 4000
    centers: int = 200
    seeds: int = 500
    grid_theta: int = 91
    grid_phi: int = 180
    trajectories: int = 6
    trajectory_tau: float = 6.0
    dt: float = 1e-3


@dataclass
class Tolerances:
    crit_tol: float = 1e-3
    morse_tol: float = 1e-6
    grad_tol: float = 1e-8
    energy_tol: float | None = None


@dataclass
class RunConfig:
    potential: dict
    points: list = field(default_factory=lambda: ["diagonal"])
    L_max: int | None = None
    r0: float = 0.1
    tau0: float = 0.5
    radii: list = field(default_factory=lambda: [0.01, 0.02, 0.04, 0.08])
    p: list = field(default_factory=lambda: [4, 6, 8, "inf"])
    lambda_range: list = field(default_factory=lambda: [10.0, 40.0])
    alpha: float = 0.5
    r_floor: float = 0.02
    global_norms: bool = True
    control: bool = True
    scan: ScanConfig = field(default_factory=ScanConfig)
    tolerances: Tolerances = field(default_factory=Tolerances)
    seed: int = 0

    # resolved lazily
    def build_potential(self) -> PotentialSpec:
        return potential_from_config(self.potential)

    def point_vectors(self) -> np.ndarray:
        return np.array([resolve_point(p) for p in self.points])

    def resolved(self) -> dict:
        d = asdict(self)
        d["points"] = [list(map(float, v)) for v in self.point_vectors()]
        return d

    def digest(self) -> str:
        blob = json.dumps(self.resolved(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def resolve_point(p) -> np.ndarray:
    if isinstance(p, str):
        if p not in NAMED_POINTS:
            raise ConfigError(f"unknown named point {p!r}; choose from {sorted(NAMED_POINTS)}")
        return NAMED_POINTS[p].copy()
    try:
        v = np.asarray(p, dtype=float).reshape(3)
    except (TypeError, ValueError):
        raise ConfigError(f"point {p!r} must be a name or a 3-vector") from None
    n = np.linalg.norm(v)
    if not np.isfinite(n) or n == 0:
        raise ConfigError(f"point {p!r} must be a nonzero finite 3-vector")
    return v / n


def potential_from_config(spec) -> PotentialSpec:
    if isinstance(spec, str):
        spec = {"preset": spec} if spec in PRESETS else {"polynomial": spec}
    if not isinstance(spec, dict) or len(spec) != 1:
        raise ConfigError("potential must have exactly one of: preset, polynomial, harmonics")
    (kind, value), = spec.items()
    if kind == "preset":
        try:
            return preset(str(value))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    if kind == "polynomial":
        try:
            return PotentialSpec.from_polynomial(str(value))
        except PotentialSyntaxError as exc:
            raise ConfigError(f"potential.polynomial: {exc}") from None
    if kind == "harmonics":
        if isinstance(value, str):
            try:
                value = ast.literal_eval(value)
            except (ValueError, SyntaxError) as exc:
                raise ConfigError(f"potential.harmonics: cannot parse {value!r} ({exc})") from None
        try:
            triples = [tuple(t) for t in value]
            if any(len(t) != 3 for t in triples):
                raise ValueError("each harmonic needs (l, m, coefficient)")
            return PotentialSpec.from_harmonics(triples, label="harmonics")
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"potential.harmonics: {exc}") from None
    raise ConfigError(f"unknown potential kind {kind!r}; use preset, polynomial or harmonics")


def _sub(cls, data, name):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{name} must be a mapping")
    known = set(cls.__dataclass_fields__)
    extra = set(data) - known
    if extra:
        raise ConfigError(f"unknown {name} keys: {sorted(extra)}")
    return cls(**data)


def _p_value(p):
    if isinstance(p, str) and p.strip().lower() in ("inf", "infinity"):
        return "inf"
    if isinstance(p, (int, float)) and math.isinf(p):
        return "inf"
    if not isinstance(p, (int, float)) or p < 2:
        raise ConfigError(f"p entries must be numbers >= 2 or 'inf', got {p!r}")
    return p


def parse_config(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    if "potential" not in data:
        raise ConfigError("config needs a 'potential' entry")
    known = set(RunConfig.__dataclass_fields__)
    extra = set(data) - known
    if extra:
        raise ConfigError(f"unknown config keys: {sorted(extra)}")
    d = dict(data)
    d["scan"] = _sub(ScanConfig, d.get("scan"), "scan")
    d["tolerances"] = _sub(Tolerances, d.get("tolerances"), "tolerances")
    pot = d["potential"]
    if isinstance(pot, str):
        d["potential"] = {"preset": pot} if pot in PRESETS else {"polynomial": pot}
    cfg = RunConfig(**d)
    potential_from_config(cfg.potential)
    if not isinstance(cfg.points, list) or not cfg.points:
        raise ConfigError("points must be a non-empty list")
    cfg.point_vectors()
    if cfg.L_max is not None and (not isinstance(cfg.L_max, int) or not 1 <= cfg.L_max <= 69):
        raise ConfigError("L_max must be an integer in [1, 69]")
    if not 0 < cfg.r0 <= math.pi / 2:
        raise ConfigError("r0 must lie in (0, pi/2]")
    if not 0 < cfg.tau0 <= 10:
        raise ConfigError("tau0 must lie in (0, 10]")
    if not cfg.radii or any(not 0 < r < math.pi / 16 for r in cfg.radii):
        raise ConfigError("radii must be a non-empty list in (0, pi/16)")
    cfg.p = [_p_value(p) for p in cfg.p]
    if len(cfg.lambda_range) != 2 or not 0 < cfg.lambda_range[0] < cfg.lambda_range[1]:
        raise ConfigError("lambda_range must be [lo, hi] with 0 < lo < hi")
    if not 0 < cfg.alpha <= 1:
        raise ConfigError("alpha must lie in (0, 1]")
    if cfg.scan.geodesics < 2000:
        raise ConfigError("scan.geodesics must be >= 2000")
    if cfg.scan.centers < 200:
        raise ConfigError("scan.centers must be >= 200")
    if cfg.scan.seeds < 200:
        raise ConfigError("scan.seeds must be >= 200")
    if not 0 < cfg.scan.dt <= 1e-2:
        raise ConfigError("scan.dt must lie in (0, 1e-2]")
    if not isinstance(cfg.seed, int) or cfg.seed < 0:
        raise ConfigError("seed must be a non-negative integer")
    return cfg


def load_config(path) -> RunConfig:
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        raise ConfigError(f"{path}: YAML error at line {mark.line + 1}, column {mark.column + 1}: {exc.problem}") from None
    return parse_config(data)


# --------------------------------------------------------------------------
# output helpers


class Run:
    """Output directory bookkeeping: header stamping, manifest, errors."""

    def __init__(self, command: str, cfg: RunConfig, out: Path):
        self.command = command
        self.cfg = cfg
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.hash = cfg.digest()
        self.files: list[str] = []
        self.errors: list[dict] = []

    @property
    def meta(self) -> dict:
        return {"command": self.command, "config_hash": self.hash, "version": __version__}

    def write_csv(self, name: str, header, rows) -> None:
        path = self.out / name
        with path.open("w", newline="") as fh:
            fh.write(f"# config_hash={self.hash} version={__version__} command={self.command}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
        self.files.append(name)

    def write_json(self, name: str, payload: dict) -> None:
        body = {"meta": self.meta, **payload}
        (self.out / name).write_text(json.dumps(_jsonable(body), indent=2, sort_keys=True) + "\n")
        self.files.append(name)

    def stage(self, label: str, fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except Exception as exc:  # recorded, the run continues
            log.error("%s failed: %s", label, exc)
            self.errors.append({"stage": label, "error": f"{type(exc).__name__}: {exc}",
                                "trace": traceback.format_exception_only(type(exc), exc)[-1].strip()})
            return None

    def finish(self) -> int:
        self.write_json("manifest.json", {
            "status": "ok" if not self.errors else "partial",
            "files": sorted(set(self.files)),
            "errors": self.errors,
            "config": self.cfg.resolved(),
        })
        return 0 if not self.errors else 1


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


# --------------------------------------------------------------------------
# commands


def cmd_radon(cfg: RunConfig, run: Run, cache=None) -> None:
    V = cfg.build_potential()
    F = radon_multiplier(V)
    theta = np.linspace(0.0, np.pi, cfg.scan.grid_theta)
    phi = np.linspace(0.0, 2 * np.pi, cfg.scan.grid_phi, endpoint=False)
    T, P = np.meshgrid(theta, phi, indexing="ij")
    pts = np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], -1)
    vals = F(pts).reshape(T.shape)
    run.write_csv("radon_grid.csv", ["theta", "phi", "value"],
                  zip(T.ravel(), P.ravel(), vals.ravel()))

    tol = cfg.tolerances
    search = run.stage("critical_points", find_critical_points, F, sphere_grid(cfg.scan.seeds),
                       grad_tol=tol.grad_tol)
    if search is not None:
        run.write_csv("critical_points.csv", ["x1", "x2", "x3", "value", "kind", "hess_eig1", "hess_eig2"],
                      ([*c.location, c.value, c.kind, *c.hessian_eigs] for c in search))
    reports = []
    for i, x0 in enumerate(cfg.point_vectors()):
        rep = run.stage(f"hypotheses[{i}]", check_hypotheses, F, x0, crit_tol=tol.crit_tol,
                        morse_tol=tol.morse_tol, grad_tol=tol.grad_tol, seeds=cfg.scan.seeds)
        if rep is not None:
            reports.append(rep.to_dict())
    run.write_json("radon.json", {
        "potential": V.label,
        "oscillation_bound": F.oscillation,
        "max_abs": float(np.max(np.abs(vals))),
        "degenerate_field": None if search is None else bool(search.degenerate_field),
        "diagnostic": None if search is None else search.message,
        "n_critical_points": None if search is None else len(search),
        "hypotheses": reports,
    })


def cmd_flow(cfg: RunConfig, run: Run, cache=None) -> None:
    V = cfg.build_potential()
    F = radon_multiplier(V)
    s = cfg.scan
    rng = np.random.default_rng(cfg.seed)
    starts = random_points(rng, s.trajectories)
    traj = run.stage("trajectories", integrate_flow, F, starts, (0.0, s.trajectory_tau), s.dt,
                     cfg.tolerances.energy_tol)
    if traj is not None:
        rows = []
        stride = max(1, int(round(0.01 / s.dt)))
        for k in range(0, len(traj.times), stride):
            for j in range(s.trajectories):
                rows.append((j, traj.times[k], *traj.points[k, j], traj.field_values[k, j]))
        run.write_csv("trajectories.csv", ["trajectory", "tau", "n1", "n2", "n3", "field"], rows)

    fits = []
    avg_rows = []
    scan = sphere_grid(s.geodesics)
    for i, x0 in enumerate(cfg.point_vectors()):
        radii = sorted(cfg.radii)
        res = run.stage(f"flow_averages[{i}]", sup_flow_averages, F, x0, radii, cfg.tau0, scan, s.dt)
        if res is None:
            continue
        for r, sup, n in zip(res["radii"], res["sup"], res["normals"]):
            avg_rows.append((i, r, sup, 4 * r, *n))
        if len(cfg.radii) >= 4:
            fit = run.stage(f"scaling_fit[{i}]", fit_scaling_exponent, F, x0, radii, cfg.tau0, scan, s.dt,
                            sweep=res)
            if fit is not None:
                fits.append({"point_index": i, "point": x0, **fit.to_dict()})
    run.write_csv("flow_averages.csv", ["point_index", "r", "sup_average", "trivial_bound", "n1", "n2", "n3"],
                  avg_rows)
    run.write_json("scaling.json", {"potential": V.label, "tau0": cfg.tau0, "fits": fits})


def _spectrum(cfg: RunConfig, V: PotentialSpec, cache, L_max: int):
    from .spectral import cached_spectrum

    H, spec, hit = cached_spectrum(V, L_max, cache)
    if hit:
        log.info("spectrum cache hit (L_max=%d)", L_max)
    return H, spec, hit


def cmd_spectrum(cfg: RunConfig, run: Run, cache=None) -> None:
    from .spectral import residuals

    V = cfg.build_potential()
    L_max = cfg.L_max or 30
    H, spec, hit = _spectrum(cfg, V, cache, L_max)
    lam2 = spec.eigenvalues
    cl = spec.clusters
    shift = lam2 - cl * (cl + 1.0)
    trusted = cl <= spec.l_trust
    run.write_csv("eigenvalues.csv", ["index", "lambda_sq", "lambda", "cluster", "shift", "trusted"],
                  ((k, lam2[k], math.sqrt(max(lam2[k], 0.0)), int(cl[k]), shift[k], int(trusted[k]))
                   for k in range(len(lam2))))
    rows = []
    for l in range(spec.l_trust + 1):
        members = cl == l
        rows.append((l, int(members.sum()), 2 * l + 1, float(np.mean(shift[members])) if members.any() else float("nan")))
    run.write_csv("clusters.csv", ["l", "size", "expected_size", "mean_shift"], rows)
    res = residuals(H, spec)
    run.write_json("spectrum.json", {
        "potential": V.label,
        "potential_digest": V.digest(),
        "L_max": L_max,
        "l_trust": spec.l_trust,
        "dimension": len(lam2),
        "cache_hit": hit,
        "max_residual": float(np.max(res)),
        "cluster_sizes_ok": all(r[1] == r[2] for r in rows),
    })


def cmd_verify(cfg: RunConfig, run: Run, cache=None) -> None:
    V = cfg.build_potential()
    F = radon_multiplier(V)
    lo, hi = cfg.lambda_range
    L_max = cfg.L_max or int(math.ceil(hi)) + V.degree + 2
    got = run.stage("spectrum", _spectrum, cfg, V, cache, L_max)
    tol = cfg.tolerances
    verdicts = []
    for i, x0 in enumerate(cfg.point_vectors()):
        hyp = run.stage(f"hypotheses[{i}]", check_hypotheses, F, x0, crit_tol=tol.crit_tol,
                        morse_tol=tol.morse_tol, grad_tol=tol.grad_tol, seeds=cfg.scan.seeds)
        entry = {"point_index": i, "point": x0}
        if hyp is not None:
            entry.update(h1=hyp.h1_pass, h2=hyp.h2_pass, hypotheses=hyp.to_dict())
        if got is None or hyp is None:
            verdicts.append(entry)
            continue
        rep = run.stage(f"verify_report[{i}]", verify_report, V, x0, cfg.r0, (lo, hi), cfg.p,
                        spectrum=got[1], alpha=cfg.alpha, r_floor=cfg.r_floor, scan_count=cfg.scan.centers,
                        global_norms=cfg.global_norms, control=cfg.control, hypotheses=hyp)
        if rep is not None:
            with (run.out / f"verify_x{i}.csv").open("w", newline="") as fh:
                fh.write(f"# config_hash={run.hash} version={__version__} command=verify\n")
                rep.write_csv(fh)
            run.files.append(f"verify_x{i}.csv")
            if rep.control_rows:
                with (run.out / f"control_x{i}.csv").open("w", newline="") as fh:
                    fh.write(f"# config_hash={run.hash} version={__version__} command=verify control=V0\n")
                    rep.write_csv(fh, rep.control_rows)
                run.files.append(f"control_x{i}.csv")
            s = rep.summary
            entry.update(
                C0_empirical=s["C0_empirical"],
                fitted_exponents_per_p={k: v["fitted"] for k, v in s["fitted_exponents_per_p"].items()},
                improvement_claim=s["improvement_claim"],
                summary=s,
            )
        verdicts.append(entry)
    run.write_json("verdict.json", {
        "potential": V.label,
        "L_max": L_max,
        "cache_hit": None if got is None else got[2],
        "verdicts": verdicts,
    })


COMMANDS = {"radon": cmd_radon, "flow": cmd_flow, "spectrum": cmd_spectrum, "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="radonsphere", description=__doc__.split("\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--cache", default=None, help="spectrum cache directory")
        p.add_argument("--threads", type=int, default=None, help="BLAS thread count")
        p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be non-negative")
            cfg.seed = args.seed
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    run = Run(args.command, cfg, Path(args.out))
    cache = Path(args.cache) if args.cache else None

    def go():
        run.stage(args.command, COMMANDS[args.command], cfg, run, cache)

    if args.threads:
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=args.threads):
            go()
    else:
        go()
    code = run.finish()
    if code:
        print(f"run finished with {len(run.errors)} error(s); see {run.out / 'manifest.json'}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
