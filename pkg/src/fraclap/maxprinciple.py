"""Executable certificates for the narrow-region and strong maximum principles.

Both checks work in the strip frame ``A = {x1 > 0, 0 < x2 < H}`` with
``w`` odd about ``x1 = 0`` and ``x2 = 0``.  A ``sigma-plus`` region of width
``λ`` is mapped there by ``x2 -> λ - x2``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ParameterError
from .geometry import Grid, GridFunction, RegionSpec, antisymmetrize, region_membership
from .kernels import KernelParams, decay_constant_C0
from .operator import QuadratureConfig, assemble_discrete_operator, build_stencil
from .reports import CheckReport
from .rng import SplitMix64

POS_TOL = 1e-10  # strict-positivity / sign tolerance, relative to max|w|
DECAY_TOL = 1e-6  # outer-shell proxy for w -> 0 at infinity
ZERO_TOL = 1e-12  # absolute size below which w counts as identically zero


@lru_cache(maxsize=32)
def _lower_constant(n, alpha, C_norm, height):
    return decay_constant_C0(KernelParams(n, alpha, C_norm), height=height).lower


def threshold_M(kp, C0=None, height=1.0):
    """Admissible lower bound ``-M`` for ``c``: ``0.5 (2/H)^α C0`` (``0.5·4^{α/2}·C0`` for H = 1).

    ``C0`` defaults to the measured lower constant of ``L dist^α``, which is
    what the contradiction argument consumes.
    """
    if C0 is None:
        C0 = _lower_constant(kp.n, kp.alpha, kp.C_norm, 1.0)
    return 0.5 * (2.0 / height) ** kp.alpha * C0


@dataclass
class MPProblem:
    w: GridFunction
    c: object  # GridFunction, array on w.grid, or scalar
    region: RegionSpec
    M_threshold: float
    kp: KernelParams

    def c_values(self):
        c = self.c.values if isinstance(self.c, GridFunction) else self.c
        return np.broadcast_to(np.asarray(c, dtype=float), self.w.grid.extent)

    def scaled(self, s):
        return MPProblem(self.w.with_values(s * self.w.values, check=False), self.c, self.region,
                         self.M_threshold, self.kp)


@dataclass
class _Frame:
    w: GridFunction
    c: np.ndarray
    height: float
    flip: float | None  # λ for sigma-plus, else None

    def to_world(self, x):
        x = np.array(x, dtype=float)
        if self.flip is not None:
            x[1] = self.flip - x[1]
        return x


def _strip_frame(w, c, region):
    """Re-express (w, c) in the strip frame (``sigma-plus`` data is flipped by ``x2 -> λ - x2``).

    A grid that is not symmetric about the reflection planes is caught later
    by the anti-symmetry gate.
    """
    g = w.grid
    if region.kind == "strip-A":
        return _Frame(w, c, region.height, None)
    if region.kind != "sigma-plus":
        raise ParameterError(f"maximum-principle checks need strip-A or sigma-plus, got {region.kind}")
    lam = region.lam
    origin = list(g.origin)
    origin[1] = lam - g.upper[1]
    grid = Grid(tuple(origin), g.spacing, g.extent)
    vals = np.flip(w.values, axis=1)
    return _Frame(GridFunction(grid, vals, w.extension, check=False), np.flip(c, axis=1), lam, lam)


def _gate_symmetry(w):
    g = w.grid
    if g.n < 2:
        return "anti-symmetry", "needs n >= 2", None
    scale = max(w.max_abs, 1e-300)
    for k in (0, 1):
        if not g.is_symmetric(k):
            return "anti-symmetry", f"grid not symmetric about x{k + 1}", None
        d = np.abs(w.values + np.flip(w.values, axis=k))
        if d.max() > 1e-12 * scale:
            i = np.unravel_index(np.argmax(d), g.extent)
            return "anti-symmetry", f"odd-in-x{k + 1} defect {d.max():.3e}", g.point(i)
    return None


def _common_gates(frame, M=None):
    """Gates shared by both checks, in order; returns a report or the odd-extended w."""
    w = frame.w
    bad = _gate_symmetry(w)
    if bad is not None:
        clause, detail, x = bad
        return CheckReport.hypothesis_failure(clause, detail, frame.to_world(x) if x else None)
    if w.extension != "antisym-x1-and-x2":
        w = GridFunction(w.grid, w.values, "antisym-x1-and-x2", check=False)
    g = w.grid
    pts = g.points()
    vals = w.values.ravel()
    scale = max(w.max_abs, 1e-300)
    in_B = region_membership(RegionSpec("strip-B", height=frame.height), pts)
    if np.any(vals[in_B] < -POS_TOL * scale):
        i = np.flatnonzero(in_B)[np.argmin(vals[in_B])]
        return CheckReport.hypothesis_failure("B-positivity", f"w = {vals[i]:.3e} in B",
                                              frame.to_world(pts[i]))
    in_A = region_membership(RegionSpec("strip-A", height=frame.height), pts)
    cv = frame.c.ravel()
    if not np.all(np.isfinite(cv[in_A])):
        return CheckReport.hypothesis_failure("c-bound", "c is not bounded on A")
    if M is not None and np.any(in_A) and cv[in_A].min() < -M:
        i = np.flatnonzero(in_A)[np.argmin(cv[in_A])]
        return CheckReport.hypothesis_failure("c-bound", f"min c = {cv[i]:.4g} < -M = {-M:.4g}",
                                              frame.to_world(pts[i]))
    shell = ~g.interior_mask(1).ravel()
    if np.abs(vals[shell]).max() > DECAY_TOL * scale:
        i = np.flatnonzero(shell)[np.argmax(np.abs(vals[shell]))]
        return CheckReport.hypothesis_failure("decay proxy", f"|w| = {abs(vals[i]):.3e} on the outer shell",
                                              frame.to_world(pts[i]))
    return w, pts, vals, in_A


def _fmt(x):
    return "(" + ", ".join(f"{float(v):.6g}" for v in x) + ")"


def _operator_values(w, cfg, kp):
    st = build_stencil(w.grid, False, cfg, kp.params)
    return st.apply(w.values).ravel()


def narrow_mp_check(prob, cfg=None):
    """Certificate for ``w >= 0`` in the strip under the narrow-region hypotheses."""
    cfg = cfg or QuadratureConfig()
    kp = prob.kp
    frame = _strip_frame(prob.w, prob.c_values(), prob.region)
    M = prob.M_threshold
    C0 = _lower_constant(kp.n, kp.alpha, kp.C_norm, 1.0)
    limit = (2.0 / frame.height) ** kp.alpha * C0
    if not M < limit:
        raise ParameterError(f"M_threshold {M:.4g} must be below (2/H)^alpha C0 = {limit:.4g}")
    gated = _common_gates(frame, M)
    if isinstance(gated, CheckReport):
        return gated
    w, pts, vals, in_A = gated
    scale = max(w.max_abs, 1e-300)
    # the differential inequality itself, at interior points away from a 2h collar
    Lw = _operator_values(w, cfg, kp)
    lhs = Lw + frame.c.ravel() * vals
    check = in_A & w.grid.interior_mask(2).ravel()
    tol = 1e-9 * max(1.0, np.abs(Lw).max())
    if np.any(check) and lhs[check].min() < -tol:
        i = np.flatnonzero(check)[np.argmin(lhs[check])]
        return CheckReport.hypothesis_failure(
            "equation", f"(-Δ)^(α/2)w + cw = {lhs[i]:.3e} < 0", frame.to_world(pts[i]))
    if not np.any(in_A):
        return CheckReport("pass", None, 0.0, "no grid points in the region")
    i = np.flatnonzero(in_A)[np.argmin(vals[in_A])]
    wmin = float(vals[i])
    x = frame.to_world(pts[i])
    gap = limit - M
    contradiction = gap * wmin
    notes = (f"min_A w = {wmin:.6g} at {_fmt(x)}; M = {M:.6g}; "
             f"[(2/H)^α C0 - M] w(x*) = {contradiction:.3e}")
    if wmin >= -POS_TOL * scale:
        return CheckReport("pass", None, wmin + POS_TOL * scale, notes,
                           dict(min_w=wmin, contradiction=contradiction))
    return CheckReport("fail", x, wmin, notes + " (negative: the contradiction is violated)",
                       dict(min_w=wmin, contradiction=contradiction))


def strong_mp_check(w, c, region, cfg=None, kp=None):
    """Trichotomy: ``pass-strict`` (w > 0 in A), ``pass-zero`` (w ≡ 0 in A), else ``fail``."""
    cfg = cfg or QuadratureConfig()
    if kp is None:
        raise ParameterError("strong_mp_check needs kernel parameters")
    cv = np.broadcast_to(np.asarray(c.values if isinstance(c, GridFunction) else c, dtype=float),
                         w.grid.extent)
    frame = _strip_frame(w, cv, region)
    gated = _common_gates(frame, None)
    if isinstance(gated, CheckReport):
        return gated
    w, pts, vals, in_A = gated
    if not np.any(in_A) or np.abs(vals[in_A]).max() <= ZERO_TOL:
        return CheckReport("pass-zero", None, 0.0, "w vanishes identically on A")
    scale = w.max_abs
    inner = in_A & w.grid.interior_mask(1).ravel()
    i = np.flatnonzero(inner)[np.argmin(vals[inner])]
    wmin = float(vals[i])
    x = frame.to_world(pts[i])
    if wmin > POS_TOL * scale:
        return CheckReport("pass-strict", None, wmin, f"min over interior samples {wmin:.6g}")
    Lw = _operator_values(w, cfg, kp)[i]
    notes = (f"interior zero/minimum {wmin:.3e} at {_fmt(x)} while max|w| = {scale:.3e}; "
             f"(-Δ)^(α/2)w + cw there = {Lw + frame.c.ravel()[i] * wmin:.6g}")
    return CheckReport("fail", x, wmin - POS_TOL * scale, notes, dict(operator_at_min=Lw))


# --------------------------------------------------------------------------- constructed families


def family_grid(extent=65, half_width=2.0):
    return Grid.box((-half_width, -half_width), (half_width, half_width), extent)


def _odd_gauss(grid, a1, a2, s=1.0):
    X1, X2 = grid.mesh()
    return s * X1 * np.exp(-a1 * X1**2) * X2 * np.exp(-a2 * X2**2)


def _odd_bump(grid, center, width):
    """Bump at ``center`` made odd in x1 and x2 (so its quadrant copy is a positive bump)."""
    X1, X2 = grid.mesh()
    b = np.exp(-((X1 - center[0]) ** 2 + (X2 - center[1]) ** 2) / width**2)
    return antisymmetrize(b, (0, 1))


def _product_problem(grid, kp, M, a1, a2, s, cfg):
    vals = _odd_gauss(grid, a1, a2, s)
    w = GridFunction(grid, vals, "antisym-x1-and-x2")
    Lw = build_stencil(grid, False, cfg, kp.params).apply(vals)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.where(vals > 0, np.maximum(-M / 2, -Lw / vals), 0.0)
    return MPProblem(w, c, RegionSpec("strip-A"), M, kp)


def _solved_problem(op, grid, kp, M, rng, cfg):
    pts = grid.points()
    in_A = region_membership(RegionSpec("strip-A"), pts).reshape(grid.extent)
    c = np.where(in_A, -M * rng.uniform(0.25, 1.0), 0.0)
    ctr = (rng.uniform(0.3, 1.2), rng.uniform(0.2, 0.8))
    f = np.clip(_odd_bump(grid, ctr, rng.uniform(0.15, 0.4)), 0, None)
    cu = op.gather(c)
    z = np.linalg.solve(op.matrix + np.diag(cu), op.gather(f))
    w = op.to_function(z)
    return MPProblem(w, c, RegionSpec("strip-A"), M, kp)


def conforming_problems(kp, count=20, seed=0, cfg=None, grid=None):
    """Problems satisfying every hypothesis: half product-type, half from a linear solve."""
    cfg = cfg or QuadratureConfig()
    grid = grid or family_grid()
    M = threshold_M(kp)
    rng = SplitMix64(seed)
    out = []
    n_prod = count // 2
    for _ in range(n_prod):
        a1, a2 = rng.uniform(4.2, 5.0, 2)
        out.append(_product_problem(grid, kp, M, a1, a2, rng.uniform(0.5, 5.0), cfg))
    if count > n_prod:
        op = assemble_discrete_operator(grid, "antisym-x1-and-x2", cfg, kp.params)
        for _ in range(count - n_prod):
            out.append(_solved_problem(op, grid, kp, M, rng, cfg))
    return out


VIOLATED_CLAUSES = ("anti-symmetry", "B-positivity", "c-bound", "decay proxy", "equation")


def violating_problems(kp, count=20, seed=1, cfg=None, grid=None):
    """Problems each breaking one hypothesis clause; returns ``(problem, clause)`` pairs."""
    cfg = cfg or QuadratureConfig()
    grid = grid or family_grid()
    M = threshold_M(kp)
    rng = SplitMix64(seed)
    X1, X2 = grid.mesh()
    out = []
    for k in range(count):
        clause = VIOLATED_CLAUSES[k % len(VIOLATED_CLAUSES)]
        a1, a2 = rng.uniform(4.2, 5.0, 2)
        base = _product_problem(grid, kp, M, a1, a2, 1.0, cfg)
        vals = np.array(base.w.values)
        c = np.array(base.c)
        amp = vals.max()
        ctr = (rng.uniform(0.4, 1.0), rng.uniform(0.3, 0.7))
        if clause == "anti-symmetry":
            vals = vals + 0.2 * amp * np.exp(-((X1 - ctr[0]) ** 2 + (X2 - ctr[1]) ** 2) / 0.05)
        elif clause == "B-positivity":
            vals = vals - 0.5 * amp * _odd_bump(grid, (ctr[0], rng.uniform(1.3, 1.6)), 0.15)
        elif clause == "c-bound":
            vals = vals - 0.5 * amp * _odd_bump(grid, ctr, 0.15)
            c = c - M * rng.uniform(2.0, 4.0)
        elif clause == "decay proxy":
            vals = vals + 0.05 * amp * X1 * X2
        else:  # a negative dent with c inside the admissible range
            vals = vals - 0.5 * amp * _odd_bump(grid, ctr, 0.15)
            c = np.full_like(c, -M / 2)
        w = GridFunction(grid, vals, "zero-outside")
        out.append((MPProblem(w, c, RegionSpec("strip-A"), M, kp), clause))
    return out


def strong_mp_families(kp, grid=None, cfg=None):
    """The three reference inputs ``(name, w, c, expected verdict)``."""
    cfg = cfg or QuadratureConfig()
    grid = grid or family_grid()
    zero = GridFunction(grid, np.zeros(grid.extent), "antisym-x1-and-x2")
    pos = _product_problem(grid, kp, threshold_M(kp), 4.5, 4.5, 1.0, cfg)
    X1, X2 = grid.mesh()
    pin = grid.point(grid.index_of((0.5, 0.5)))
    factor = 1.0 - np.exp(-((np.abs(X1) - pin[0]) ** 2 + (np.abs(X2) - pin[1]) ** 2) / 0.1)
    pinned = GridFunction(grid, pos.w.values * factor, "antisym-x1-and-x2")
    return [
        ("zero", zero, 0.0, "pass-zero"),
        ("positive", pos.w, pos.c, "pass-strict"),
        ("pinned", pinned, 0.0, "fail"),
    ]
