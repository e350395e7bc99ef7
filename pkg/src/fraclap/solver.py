"""Damped Newton solver for positive anti-symmetric solutions of
``(-Δ)^{α/2} u = u^p``.

Two problem shapes are supported:

* a ball (``bounded-domain``) symmetric about ``{x_n = 0}``, with ``u`` odd in
  ``x_n`` and positive in the upper half;
* a quarter-space window ``[-W, W] x [0, W]`` (n = 2), with ``v`` odd in ``x1``,
  zero for ``x2 <= 0`` and outside the window, positive in the open quadrant.

Unknowns live on the positive region only; the symmetry is re-imposed exactly
by the assembled operator's scatter step, so every iterate is exactly odd.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import ContractError, ParameterError
from .geometry import Grid, GridFunction, Params, RegionSpec, region_membership
from .operator import QuadratureConfig, assemble_discrete_operator

SYMMETRIES = ("antisym-xn", "quarter")


@dataclass
class ProblemSpec:
    params: Params
    domain: RegionSpec
    grid: Grid
    symmetry: str = "antisym-xn"

    def __post_init__(self):
        if self.params.p is None:
            raise ParameterError("the problem needs an exponent p")
        if self.symmetry not in SYMMETRIES:
            raise ParameterError(f"symmetry must be one of {SYMMETRIES}")
        g = self.grid
        if g.n != self.params.n:
            raise ParameterError(f"grid dimension {g.n} differs from n = {self.params.n}")
        if self.symmetry == "antisym-xn":
            if self.domain.kind != "bounded-domain" or self.domain.upper:
                raise ParameterError("anti-symmetric problems are posed on a full ball (bounded-domain)")
            if not g.is_symmetric(g.n - 1):
                raise ContractError("grid must be symmetric about x_n = 0")
        else:
            if g.n != 2 or self.domain.kind != "quarter-space":
                raise ParameterError("quarter-window problems need n = 2 and a quarter-space domain")
            if not g.is_symmetric(0) or abs(g.origin[1]) > 1e-12:
                raise ContractError("quarter windows need x1 symmetric about 0 and x2 starting at 0")

    @classmethod
    def interval(cls, alpha, p, points=1025, radius=1.0):
        """``Ω = (-radius, radius)`` in one dimension."""
        return cls(Params(1, alpha, p), RegionSpec("bounded-domain", radius=radius),
                   Grid.box((-radius,), (radius,), points), "antisym-xn")

    @classmethod
    def quarter_window(cls, alpha, p, width=4.0, points_x2=65):
        """Window ``[-W, W] x [0, W]`` with spacing ``W / (points_x2 - 1)``."""
        return cls(Params(2, alpha, p), RegionSpec("quarter-space"),
                   Grid.box((-width, 0.0), (width, width), (2 * points_x2 - 1, points_x2)), "quarter")

    @property
    def extension(self):
        return "antisym-xn" if self.symmetry == "antisym-xn" else "antisym-x1"

    def mask(self):
        pts = self.grid.points()
        if self.symmetry == "antisym-xn":
            inside = region_membership(self.domain, pts)
        else:
            inside = region_membership(RegionSpec("quarter-space"), pts)
        return inside.reshape(self.grid.extent)

    def with_p(self, p):
        return ProblemSpec(self.params.with_p(p), self.domain, self.grid, self.symmetry)


_OPERATORS = {}


def problem_operator(spec, cfg=None):
    """Assembled operator on the positive-region unknowns (memoised per grid and order)."""
    cfg = cfg or QuadratureConfig()
    key = (spec.grid.origin, spec.grid.spacing, spec.grid.extent, spec.params.alpha,
           spec.params.C_norm, spec.extension, spec.domain, cfg)
    if key not in _OPERATORS:
        if len(_OPERATORS) > 4:
            _OPERATORS.clear()
        _OPERATORS[key] = assemble_discrete_operator(spec.grid, spec.extension, cfg, spec.params,
                                                     mask=spec.mask())
    return _OPERATORS[key]


@dataclass
class SolveResult:
    u: GridFunction
    residual_norm: float
    iterations: int
    positivity_min: float
    status: str = "converged"  # converged | max-iterations | nonconvergence | trivial
    history: list = field(default_factory=list)
    p: float | None = None

    @property
    def ok(self):
        return self.status == "converged"

    @property
    def max_u(self):
        return float(self.u.values.max())

    @property
    def argmax(self):
        """Grid point of the maximum; ties go to the lexicographically smallest index."""
        i = int(np.argmax(self.u.values.ravel()))
        return tuple(float(v) for v in self.u.grid.point(np.unravel_index(i, self.u.grid.extent)))

    def summary(self):
        return {
            "p": self.p,
            "alpha": None,
            "n": self.u.grid.n,
            "max_u": self.max_u,
            "argmax": list(self.argmax),
            "residual": self.residual_norm,
            "iterations": self.iterations,
            "status": self.status,
        }

    def summary_json(self, alpha):
        d = self.summary()
        d["alpha"] = alpha
        return json.dumps(d, sort_keys=True)


def _power(z, p):
    """``z^p`` on nonnegative entries; integer powers of negatives, NaN otherwise."""
    z = np.asarray(z, dtype=float)
    if float(p).is_integer():
        return z ** int(p)
    with np.errstate(invalid="ignore"):
        return np.where(z >= 0, np.abs(z) ** p, np.nan)


def initial_guess(spec, cfg=None):
    """Half-bump sine profile on the positive region, odd-extended and Nehari-scaled."""
    op = problem_operator(spec, cfg)
    X = spec.grid.mesh()
    if spec.symmetry == "antisym-xn":
        R = spec.domain.radius
        r2 = sum(x * x for x in X)
        phi = np.sin(np.pi * X[-1] / R)
        if spec.grid.n > 1:
            phi = phi * np.clip(1.0 - r2 / R**2, 0.0, None)
        phi = np.where(r2 < R**2, phi, 0.0)
    else:
        W = spec.grid.upper[1]
        phi = np.sin(np.pi * X[0] / W) * np.sin(np.pi * X[1] / W)
    z = op.gather(phi)
    z = np.clip(z, 0.0, None)
    p = spec.params.p
    t = (z @ (op.matrix @ z) / np.sum(z ** (p + 1))) ** (1.0 / (p - 1))
    return op.to_function(t * z)


def _F(op, z, p):
    return op.matrix @ z - np.clip(z, 0.0, None) ** p


def jacobian(op, z, p):
    return op.matrix - np.diag(p * np.clip(z, 0.0, None) ** (p - 1))


def jacobian_fd_error(spec, u, directions=3, seed=0, eps=1e-6, cfg=None):
    """Largest relative gap between ``J d`` and central differences of ``F`` along random ``d``."""
    from .rng import SplitMix64

    op = problem_operator(spec, cfg)
    z = op.gather(u)
    p = spec.params.p
    J = jacobian(op, z, p)
    rng = SplitMix64(seed)
    worst = 0.0
    for _ in range(directions):
        d = rng.uniform(-1.0, 1.0, z.size)
        d *= np.linalg.norm(z) / np.linalg.norm(d)
        fd = (_F(op, z + eps * d, p) - _F(op, z - eps * d, p)) / (2 * eps)
        an = J @ d
        worst = max(worst, float(np.linalg.norm(fd - an) / np.linalg.norm(an)))
    return worst


def _normalized_iteration(op, z, p, iters=60, rtol=1e-3, chol=None):
    """Petviashvili fixed-point steps ``z <- s^γ A^{-1} z_+^p`` toward the ground state.

    ``s = <Az, z> / <z_+^p, z>`` and ``γ = p/(p-1)``; the stabilising factor
    removes the unstable scaling direction, so this converges from a rough
    bump where plain Newton tends to wander.  Convergence is linear and slow
    when the linearisation has a soft mode, which is why it only seeds Newton.
    """
    chol = chol or linalg.cho_factor(op.matrix, check_finite=False)
    for _ in range(iters):
        zp = np.clip(z, 0.0, None) ** p
        denom = float(zp @ z)
        if denom <= 0:
            break
        s = float(z @ (op.matrix @ z)) / denom
        z = s ** (p / (p - 1.0)) * linalg.cho_solve(chol, zp, check_finite=False)
        F = _F(op, z, p)
        if np.linalg.norm(F) <= rtol * np.linalg.norm(op.matrix @ z):
            break
    return z


# relative-residual targets of the successive fixed-point refinements used to
# re-seed Newton when its line search stalls (soft modes shrink its basin)
_REFINE_RTOL = (1e-5, 1e-7, 1e-9, 1e-11, 1e-13)


def residual(u, spec, cfg=None):
    """``max |(-Δ)^{α/2}u - u^p|`` over the positive-region unknowns (raw power)."""
    op = problem_operator(spec, cfg)
    z = op.gather(u)
    if z.size == 0:
        return 0.0
    r = op.matrix @ z - _power(z, spec.params.p)
    return float(np.max(np.abs(r))) if np.all(np.isfinite(r)) else math.inf


def solve(spec, init=None, tol=1e-10, cfg=None, max_iter=200):
    """Damped Newton on ``F(u) = A u - u_+^p``; failures come back as a status, not an exception.

    A rough start (relative residual above 1e-2) is first driven toward the
    ground state by :func:`_normalized_iteration`; when a damped step cannot
    decrease the residual, the best iterate so far is refined by further
    fixed-point steps and Newton restarts from there.
    """
    op = problem_operator(spec, cfg)
    p = spec.params.p
    z = op.gather(init) if init is not None else op.gather(initial_guess(spec, cfg))
    history = []

    def result(z, it, status):
        z = np.clip(z, 0.0, None)  # drop transient negative dents, then re-extend oddly
        u = op.to_function(z)
        res = residual(u, spec, cfg)
        pos = float(z.min()) if z.size else 0.0
        return SolveResult(u, res, it, pos, status, history, p)

    if z.size == 0 or np.max(z) < 1e-8:
        return result(np.zeros_like(z), 0, "trivial")
    chol = None
    F = _F(op, z, p)
    if np.linalg.norm(F) > 1e-2 * np.linalg.norm(op.matrix @ z):
        chol = linalg.cho_factor(op.matrix, check_finite=False)
        z = _normalized_iteration(op, z, p, chol=chol)
        F = _F(op, z, p)
    rn = float(np.max(np.abs(F)))
    history.append(rn)
    refinements = list(_REFINE_RTOL)
    best = (rn, z)
    growth = 0
    for it in range(1, max_iter + 1):
        if rn <= tol:
            return result(z, it - 1, "converged")
        step = linalg.solve(jacobian(op, z, p), -F, check_finite=False)
        t = 1.0
        for _ in range(6):
            z_new = z + t * step
            F_new = _F(op, z_new, p)
            rn_new = float(np.max(np.abs(F_new)))
            if rn_new < rn:
                break
            t *= 0.5
        if rn_new >= rn and refinements:
            # stalled line search: refine the best iterate by fixed-point steps and restart
            chol = chol or linalg.cho_factor(op.matrix, check_finite=False)
            z_new = _normalized_iteration(op, best[1], p, iters=4000, rtol=refinements.pop(0), chol=chol)
            F_new = _F(op, z_new, p)
            rn_new = float(np.max(np.abs(F_new)))
            growth = 0
        else:
            growth = growth + 1 if rn_new >= rn else 0
        z, F, rn = z_new, F_new, rn_new
        if rn < best[0]:
            best = (rn, z)
        history.append(rn)
        if np.max(z) < 1e-8:
            return result(np.zeros_like(z), it, "trivial")
        if growth >= 10:
            return result(z, it, "nonconvergence")
    return result(z, max_iter, "converged" if rn <= tol else "max-iterations")


def continuation_p(spec, p_list, tol=1e-10, cfg=None):
    """Solve along ascending ``p``, warm-starting each step; a failed step retries from scratch."""
    p_list = [float(p) for p in p_list]
    if any(b <= a for a, b in zip(p_list, p_list[1:])):
        raise ParameterError("p_list must be strictly ascending")
    out = []
    prev = None
    for p in p_list:
        sp = spec.with_p(p)
        res = solve(sp, prev.u if prev is not None and prev.ok else None, tol, cfg)
        if not res.ok and prev is not None:
            res = solve(sp, None, tol, cfg)
        out.append(res)
        prev = res
    return out
