"""``fraclap <command> --config <file> [--workers k] [--seed s] [--out dir]``.

Every command is a pure function of (config, seed) to artifact bytes.  Exit
status: 0 pass, 1 failed check or pipeline failure, 2 invalid configuration
or failed hypothesis.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from . import blowup as bl
from . import kernels as kn
from . import maxprinciple as mp
from . import moving_planes as mv
from . import solver as sv
from .config import COMMANDS, ConfigSyntaxError, load_config, validate
from .errors import FracLapError
from .geometry import Grid, GridFunction, Params, RegionSpec, write_csv
from .operator import apply_operator, frac_lap_pv_many, frac_lap_spectral
from .reports import CheckReport
from .rng import SplitMix64

EVIDENCE_LABEL = (
    "EVIDENCE, NOT VERIFICATION: finite maxima at one fixed resolution are consistent with "
    "the a priori bound but prove nothing about it"
)


def _num(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None if math.isnan(v) else ("inf" if v > 0 else "-inf")
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, dict):
        return {k: _num(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_num(x) for x in v]
    return v


def _json(obj):
    return json.dumps(_num(obj), sort_keys=True, indent=2) + "\n"


def _csv(header, rows):
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(c)) if isinstance(c, (float, np.floating)) else c for c in r])
    return out.getvalue()


def _ball_points(n, count, radius, rng):
    """Deterministic rejection sample of the open ball."""
    pts = []
    while len(pts) < count:
        cand = rng.uniform(-radius, radius, (4 * count, n))
        pts.extend(c for c in cand if np.linalg.norm(c) < radius)
    return np.array(pts[:count])


def _barrier_params(params):
    """Kernel-style parameter record valid for n = 1 too (the barriers only need n, alpha)."""
    return SimpleNamespace(n=params.n, alpha=params.alpha, C_norm=params.C_norm,
                           params=Params(params.n, params.alpha, None, params.C_norm))


# --------------------------------------------------------------------------- pipelines


def _function(cfg, kp_params):
    name = cfg.get("problem", "function", "psi1")
    p = kp_params
    kp = _barrier_params(p)
    C = cfg.get("problem", "C", "1.0")
    if C == "calibrated":
        C = 1.0 / frac_lap_pv_many(kn.psi1_function(kp, 1.0), np.zeros((1, p.n)), cfg.quadrature, p)[0]
    C = float(C)
    if name == "psi1":
        return kn.psi1_function(kp, C)
    if name == "psi2":
        return kn.psi2_function(kp, C)
    if name == "xi":
        return kn.xi_function(p.n)
    if name == "composite":
        return kn.composite_function(cfg.get_float("problem", "t", 1.0), kp, C)
    raise FracLapError(f"unknown function {name!r} (psi1, psi2, xi, composite)")


def run_eval(cfg, out):
    params = cfg.params
    f = _function(cfg, params)
    rng = SplitMix64(cfg.seed)
    count = cfg.get_int("problem", "count", 50)
    where = cfg.get("problem", "sample", "ball")
    if where == "ball":
        pts = _ball_points(params.n, count, cfg.get_float("problem", "radius", 0.9), rng)
    elif where == "radii":
        r = np.linspace(cfg.get_float("problem", "r_min", 1.2), cfg.get_float("problem", "r_max", 2.5), count)
        pts = np.zeros((count, params.n))
        pts[:, 0] = r
    else:
        raise FracLapError(f"sample must be 'ball' or 'radii', got {where!r}")
    vals = frac_lap_pv_many(f, pts, cfg.quadrature, params, cfg.workers)
    out["values.csv"] = _csv([f"x{i + 1}" for i in range(params.n)] + ["value"],
                             [list(p) + [v] for p, v in zip(pts, vals)])
    summary = {"count": len(vals), "min": vals.min(), "max": vals.max(),
               "relative_spread": (vals.max() - vals.min()) / abs(vals.mean())}
    expect = cfg.get("problem", "expect")
    tol = cfg.get_float("problem", "tolerance", 1e-2)
    code = 0
    if expect == "constant":
        target = cfg.get_float("problem", "target")
        ref = target if target is not None else vals.mean()
        err = float(np.max(np.abs(vals / ref - 1.0)))
        summary.update(expect="constant", reference=ref, max_relative_error=err, passed=err <= tol)
        code = 0 if err <= tol else 1
    elif expect == "kelvin":
        ref = np.linalg.norm(pts, axis=1) ** -(params.n + params.alpha)
        err = float(np.max(np.abs(vals / ref - 1.0)))
        summary.update(expect="kelvin", max_relative_error=err, passed=err <= tol)
        code = 0 if err <= tol else 1
    out["summary.json"] = _json(summary)
    return code


def run_oracle_compare(cfg, out):
    params = cfg.params
    n = params.n
    m = cfg.get_int("grid", "points", 4096 if n == 1 else 256)
    grid = Grid.periodic_box((0.0,) * n, 2 * np.pi, m)
    k = np.asarray(cfg.get_floats("problem", "wave", [1.0] + [2.0] * (n - 1)))[:n]
    vals = np.cos(sum(kk * X for kk, X in zip(k, grid.mesh())))
    u = GridFunction(grid, vals, "periodic")
    pv = apply_operator(u, cfg.quadrature, params).values
    sp = frac_lap_spectral(u, params).values
    err = float(np.max(np.abs(pv - sp)) / np.max(np.abs(sp)))
    tol = cfg.get_float("problem", "tolerance", 1e-2)
    pts = grid.points()
    out["compare.csv"] = _csv([f"x{i + 1}" for i in range(n)] + ["pv", "spectral"],
                              [list(p) + [a, b] for p, a, b in zip(pts, pv.ravel(), sp.ravel())])
    out["summary.json"] = _json({"n": n, "alpha": params.alpha, "points": m, "wave": k,
                                 "relative_error": err, "tolerance": tol, "passed": err <= tol})
    return 0 if err <= tol else 1


def sample_kernel_pairs(n, count, rng, x1_max=4.0, height=1.0, y2_max=4.0, side=2.0):
    """Random ``x ∈ A`` and ``y ∈ A ∪ B`` (truncated to a box)."""
    x = np.empty((count, n))
    y = np.empty((count, n))
    x[:, 0] = rng.uniform(0, x1_max, count)
    x[:, 1] = rng.uniform(0, height, count)
    y[:, 0] = rng.uniform(0, x1_max, count)
    y[:, 1] = rng.uniform(0, y2_max, count)
    if n > 2:
        x[:, 2:] = rng.uniform(-side, side, (count, n - 2))
        y[:, 2:] = rng.uniform(-side, side, (count, n - 2))
    return x, y


def run_kernels(cfg, out):
    params = cfg.params
    kp = kn.KernelParams.from_params(params)
    per_axis = cfg.get_int("problem", "sweep_points", 32)
    res = kn.decay_constant_C0(kp, kn.default_sweep(kp.n, per_axis))
    out["sweep.csv"] = res.to_csv()
    count = cfg.get_int("problem", "samples", 100000)
    x, y = sample_kernel_pairs(kp.n, count, SplitMix64(cfg.seed))
    K = kn.kernel_K(x, y, kp)
    ok = bool(K.min() >= -1e-12 and math.isfinite(res.value))
    out["kernels.json"] = _json({
        "n": kp.n, "alpha": kp.alpha, "C0": res.value, "C0_argmax": res.argmax,
        "C0_lower": res.lower, "C0_lower_argmin": res.argmin, "sweep_size": len(res.L),
        "samples": count, "min_K": K.min(), "passed": ok,
    })
    return 0 if ok else 1


def run_barriers(cfg, out):
    params = cfg.params
    kp = _barrier_params(params)
    q = cfg.quadrature
    C = kn.calibrate_psi1(kp, q)
    C_xi, _ = kn.cutoff_lower_constant(kp, q)
    choice = kn.choose_t(kn.annulus_samples(params.n), kp, C_xi)
    rng = SplitMix64(cfg.seed)
    pts = _ball_points(params.n, cfg.get_int("problem", "count", 50), 0.9, rng)
    v1 = frac_lap_pv_many(kn.psi1_function(kp, C), pts, q, params, cfg.workers)
    radii = np.linspace(1.2, 2.5, 22)[1:-1]
    rp = np.zeros((len(radii), params.n))
    rp[:, 0] = radii
    v2 = frac_lap_pv_many(kn.psi2_function(kp, C), rp, q, params, cfg.workers)
    e1 = float(np.max(np.abs(v1 - 1.0)))
    e2 = float(np.max(np.abs(v2 * radii ** (params.n + params.alpha) - 1.0)))
    C0 = kn.decay_constant_C0(kn.KernelParams(2, params.alpha)).value if params.n >= 2 else None
    ok = choice.ok and e1 <= 1e-2 and e2 <= 3e-2
    out["barriers.json"] = _json({
        "n": params.n, "alpha": params.alpha, "C_psi1": C, "C0": C0, "t": choice.t,
        "C_xi": C_xi, "psi1_max_relative_error": e1, "psi2_max_relative_error": e2, "passed": ok,
    })
    out["psi1.csv"] = _csv([f"x{i + 1}" for i in range(params.n)] + ["value"],
                           [list(p) + [v] for p, v in zip(pts, v1)])
    return 0 if ok else 1


def run_mp_check(cfg, out):
    params = cfg.params
    kp = kn.KernelParams.from_params(params)
    q = cfg.quadrature
    family = cfg.get("problem", "family", "conforming")
    index = cfg.get_int("problem", "index", 0)
    count = cfg.get_int("problem", "count", 20)
    reports = []
    if family in ("conforming", "all"):
        for i, p in enumerate(mp.conforming_problems(kp, count, cfg.seed, q)):
            reports.append(("conforming", i, "pass", mp.narrow_mp_check(p, q)))
    if family in ("violating", "all"):
        for i, (p, clause) in enumerate(mp.violating_problems(kp, count, cfg.seed + 1, q)):
            reports.append((f"violating:{clause}", i, "hypothesis-failure", mp.narrow_mp_check(p, q)))
    if family in ("strong", "all"):
        for i, (name, w, c, expected) in enumerate(mp.strong_mp_families(kp, cfg=q)):
            reports.append((f"strong:{name}", i, expected,
                            mp.strong_mp_check(w, c, RegionSpec("strip-A"), q, kp)))
    if not reports:
        raise FracLapError(f"unknown family {family!r} (conforming, violating, strong, all)")
    out["reports.json"] = _json([dict(r.to_dict(), family=f, index=i, expected=e)
                                 for f, i, e, r in reports])
    if family == "all":
        return 0 if all(r.verdict == e for _, _, e, r in reports) else 1
    chosen = reports[min(index, len(reports) - 1)][3]
    out["report.json"] = chosen.to_json() + "\n"
    return chosen.exit_code


def problem_spec(cfg):
    params = cfg.params
    domain = cfg.get("problem", "domain", "interval" if params.n == 1 else "quarter-window")
    if domain in ("interval", "ball"):
        radius = cfg.get_float("problem", "radius", 1.0)
        m = cfg.get_int("problem", "points", 1025 if params.n == 1 else 33)
        grid = Grid.box((-radius,) * params.n, (radius,) * params.n, m)
        return sv.ProblemSpec(params, RegionSpec("bounded-domain", radius=radius), grid)
    if domain == "quarter-window":
        return sv.ProblemSpec.quarter_window(params.alpha, params.p, cfg.get_float("problem", "width", 4.0),
                                             cfg.get_int("problem", "points", 65))
    raise FracLapError(f"unknown domain {domain!r} (interval, ball, quarter-window)")


def run_solve(cfg, out):
    spec = problem_spec(cfg)
    res = sv.solve(spec, tol=cfg.get_float("problem", "tol", 1e-10), cfg=cfg.quadrature)
    out["solution.csv"] = write_csv(res.u, alpha=spec.params.alpha)
    summary = res.summary()
    summary.update(alpha=spec.params.alpha, positivity_min=res.positivity_min)
    out["summary.json"] = _json(summary)
    return 0 if res.ok and res.positivity_min > 0 else 1


def run_sweep_p(cfg, out):
    spec = problem_spec(cfg) if cfg.get("params", "p") else None
    plist = cfg.get_floats("problem", "p_list")
    if spec is None:
        p0 = cfg.params
        cfg.sections.setdefault("params", {})["p"] = repr(plist[0])
        spec = problem_spec(cfg)
        del cfg.sections["params"]["p"]
        spec = sv.ProblemSpec(Params(p0.n, p0.alpha, plist[0], p0.C_norm), spec.domain, spec.grid, spec.symmetry)
    results = sv.continuation_p(spec, plist, cfg.get_float("problem", "tol", 1e-10), cfg.quadrature)
    rows = [[r.p, r.max_u] + list(r.argmax) + [r.residual_norm, r.iterations, r.status] for r in results]
    n = spec.grid.n
    out["sweep.csv"] = _csv(["p", "max_u"] + [f"argmax_x{i + 1}" for i in range(n)]
                            + ["residual", "iterations", "status"], rows)
    finite = all(math.isfinite(r.max_u) for r in results)
    out["sweep.json"] = _json({
        "label": EVIDENCE_LABEL, "n": n, "alpha": spec.params.alpha,
        "critical_exponent": spec.params.n and (
            math.inf if n <= spec.params.alpha else (n + spec.params.alpha) / (n - spec.params.alpha)),
        "steps": [dict(r.summary(), alpha=spec.params.alpha) for r in results],
        "all_converged": all(r.ok for r in results), "all_max_finite": finite,
    })
    return 0 if finite and all(r.ok for r in results) else 1


def run_moving_planes(cfg, out):
    spec = problem_spec(cfg)
    if spec.symmetry != "quarter":
        raise FracLapError("moving-planes needs domain = quarter-window")
    res = sv.solve(spec, tol=cfg.get_float("problem", "tol", 1e-10), cfg=cfg.quadrature)
    v = res.u
    W = spec.grid.upper[1]
    lams = mv.aligned_lambdas(spec.grid, cfg.get_int("problem", "count", 20), W / 2)
    scan = mv.min_scan(v, lams, cfg.workers)
    cert = mv.monotonicity_certificate(v, 2, upto=W / 2)
    out["solution.csv"] = write_csv(v, alpha=spec.params.alpha)
    out["scan.csv"] = scan.to_csv()
    out["certificate.json"] = _json(dict(cert.to_dict(), scan_all_positive=scan.all_positive,
                                         lambda0=scan.lambda0, solve_status=res.status,
                                         residual=res.residual_norm))
    ok = res.ok and scan.all_positive and cert.passed
    return 0 if ok else 1


def run_blowup(cfg, out):
    params = cfg.params
    radii = cfg.get_floats("problem", "radii", [1.0, 0.5, 0.25, 0.125])
    m = cfg.get_int("problem", "points", 513 if params.n == 1 else 33)
    records = []
    for R in radii:
        grid = Grid.box((-R,) * params.n, (R,) * params.n, m)
        spec = sv.ProblemSpec(params, RegionSpec("bounded-domain", radius=R), grid)
        res = sv.solve(spec, tol=cfg.get_float("problem", "tol", 1e-10), cfg=cfg.quadrature)
        rec = bl.blowup_record(res.u, spec.domain, params, cfg.thresholds)
        # boundary touch point: the nearest point of the curved boundary, rescaled
        x = np.asarray(rec.x_k)
        pk = (R * x / np.linalg.norm(x) - x) / rec.lambda_k
        rep = bl.holder_check(rec.v_k, pk, params.alpha)
        rec.holder_verdict = rep.verdict
        records.append(dict(rec.to_dict(), radius=R, limiting_domain=bl.limiting_domain(rec.case_label),
                            solve_status=res.status, holder_notes=rep.notes))
    out["blowup.json"] = _json(records)
    return 0 if all(r["solve_status"] == "converged" for r in records) else 1


def run_classify(cfg, out):
    text = cfg.get("problem", "pairs", "inf,inf; 2.0,3.0; inf,0.01")
    rows = []
    for item in text.split(";"):
        if item.strip():
            a, b = (float(t) if t.strip().lower() != "inf" else math.inf for t in item.split(","))
            case = bl.classify_case(a, b, cfg.thresholds)
            rows.append([a, b, case, bl.limiting_domain(case)])
    out["classify.csv"] = _csv(["ratio_prime", "ratio_plus", "case", "limiting_domain"], rows)
    return 0


PIPELINES = {
    "eval": run_eval,
    "oracle-compare": run_oracle_compare,
    "kernels": run_kernels,
    "barriers": run_barriers,
    "mp-check": run_mp_check,
    "solve": run_solve,
    "sweep-p": run_sweep_p,
    "moving-planes": run_moving_planes,
    "blowup": run_blowup,
    "classify": run_classify,
}


def run(cfg, out_dir):
    """Execute ``cfg.command``, write artifacts and ``manifest.json``; returns the exit status."""
    findings = validate(cfg)
    if findings:
        for f in findings:
            print(f"fraclap: config error: {f}", file=sys.stderr)
        return 2
    artifacts = {}
    try:
        code = PIPELINES[cfg.command](cfg, artifacts)
    except FracLapError as exc:
        report = CheckReport("hypothesis-failure", None, 0.0, f"{type(exc).__name__}: {exc}")
        artifacts["error.json"] = report.to_json() + "\n"
        print(f"fraclap: {type(exc).__name__}: {exc}", file=sys.stderr)
        code = 1
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    artifacts["manifest.json"] = _json(cfg.manifest())
    for name in sorted(artifacts):
        (out_dir / name).write_bytes(artifacts[name].encode("utf-8"))
    return code


def main(argv=None):
    ap = argparse.ArgumentParser(prog="fraclap", description="Fractional Laplacian numerical lab")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="sectioned key = value file or a manifest.json")
    ap.add_argument("--workers", type=int, default=None, help="worker threads for point sweeps")
    ap.add_argument("--seed", type=int, default=None, help="seed for every sampled set")
    ap.add_argument("--out", default=None, help="output directory")
    args = ap.parse_args(argv)
    try:
        cfg = load_config(args.config, args.command)
    except (ConfigSyntaxError, json.JSONDecodeError, OSError) as exc:
        print(f"fraclap: config error: {exc}", file=sys.stderr)
        return 2
    cfg.command = args.command
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.sections.setdefault("run", {})["seed"] = str(args.seed)
    if args.workers is not None:
        cfg.workers = args.workers
        cfg.sections.setdefault("run", {})["workers"] = str(args.workers)
    out = args.out or cfg.output_dir
    return run(cfg, out)


if __name__ == "__main__":
    sys.exit(main())
