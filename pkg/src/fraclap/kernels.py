"""Reflection kernel ``K``, strip weight ``L``, the constant ``C0`` and the
Kelvin barrier family used near a curved boundary.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import betainc, gamma

from .errors import DomainError, ParameterError, SingularityError
from .geometry import AnalyticFunction, GridFunction, RegionSpec, dist_boundary, region_membership
from .operator import QuadratureConfig, frac_lap_pv, normalization_constant
from .reports import CheckReport


@dataclass(frozen=True)
class KernelParams:
    n: int
    alpha: float
    C_norm: float | None = None

    def __post_init__(self):
        if self.n < 2:
            raise ParameterError("kernel computations need n >= 2")
        if not 0.0 < self.alpha < 2.0:
            raise ParameterError(f"alpha must lie in (0, 2), got {self.alpha}")
        if self.C_norm is None:
            object.__setattr__(self, "C_norm", normalization_constant(self.n, self.alpha))

    @classmethod
    def from_params(cls, params):
        return cls(params.n, params.alpha, params.C_norm)

    @property
    def params(self):
        from .geometry import Params

        return Params(self.n, self.alpha, None, self.C_norm)


# --------------------------------------------------------------------------- K


def kernel_K(x, y, kp):
    """Four-term kernel ``|x-y|^-s - |x-T1y|^-s - |x-T2y|^-s + |x-T1T2y|^-s``, ``s = n+α``.

    Accepts single points or broadcastable ``(m, n)`` arrays.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    single = x.ndim == 1 and y.ndim == 1
    x, y = np.atleast_2d(x), np.atleast_2d(y)
    s = (kp.n + kp.alpha) / 2.0
    # each squared distance from its own coordinate differences (no cancellation)
    rest = np.sum((x[..., 2:] - y[..., 2:]) ** 2, axis=-1)
    m1, p1 = (x[..., 0] - y[..., 0]) ** 2, (x[..., 0] + y[..., 0]) ** 2
    m2, p2 = (x[..., 1] - y[..., 1]) ** 2, (x[..., 1] + y[..., 1]) ** 2
    sq = {"y": m1 + m2 + rest, "T1y": p1 + m2 + rest, "T2y": m1 + p2 + rest,
          "T1T2y": p1 + p2 + rest}
    for name, v in sq.items():
        if np.any(v <= 0.0):
            raise SingularityError(f"kernel_K singular: x coincides with {name}")
    k = (sq["y"] ** -s - sq["T1y"] ** -s) - (sq["T2y"] ** -s - sq["T1T2y"] ** -s)
    return float(k[0]) if single else k


# --------------------------------------------------------------------------- L


def _tail_line(alpha):
    """``G(s) = ∫_s^∞ (1+t²)^{-(2+α)/2} dt`` for s >= 0 and the full-line value."""
    a = (alpha + 1.0) / 2.0
    full = math.sqrt(math.pi) * gamma(a) / gamma((2.0 + alpha) / 2.0)

    def G(s):
        return 0.5 * full * betainc(a, 0.5, 1.0 / (1.0 + s * s))

    return G, full


def _planar_factor(n, alpha):
    """∫ over x' in R^{n-2} of (ρ²+|z|²)^{-(n+α)/2} equals this times ρ^{-(2+α)}."""
    return math.pi ** ((n - 2) / 2.0) * gamma((2.0 + alpha) / 2.0) / gamma((n + alpha) / 2.0)


def kernel_L(x, kp, cfg=None, height=1.0):
    """Strip weight ``L(x)`` for ``x`` in ``A = {x1 > 0, 0 < x2 < height}``.

    The ``x'`` directions are integrated in closed form, the ``z1`` direction
    through the incomplete beta function, leaving one adaptive quadrature in
    ``z2`` per reflected strip.  ``cfg`` is accepted for interface symmetry.
    """
    x = np.asarray(x, dtype=float)
    if not region_membership(RegionSpec("strip-A", height=height), x):
        raise DomainError(f"kernel_L needs x in the strip A, got {tuple(x)}")
    alpha = kp.alpha
    x1, x2 = float(x[0]), float(x[1])
    G, full = _tail_line(alpha)
    e = -1.0 - alpha

    def left(z2):  # strip T1 A: z1 < 0, 0 < z2 < H
        b = abs(x2 - z2)
        return b ** e * G(x1 / b)

    def lower(z2):  # strip T2 A: z1 > 0, -H < z2 < 0
        b = x2 - z2
        return b ** e * (full - G(x1 / b))

    opts = dict(limit=200, epsabs=0.0, epsrel=1e-10)
    i_left = integrate.quad(left, 0.0, x2, **opts)[0] + integrate.quad(left, x2, height, **opts)[0]
    i_lower = integrate.quad(lower, -height, 0.0, **opts)[0]
    planes = full * ((height - x2) ** -alpha + (x2 + height) ** -alpha) / alpha
    return kp.C_norm * _planar_factor(kp.n, alpha) * (2.0 * i_left + 2.0 * i_lower + planes)


def default_sweep(n, per_axis=32, x1_max=4.0, height=1.0):
    """Tensor sweep of the strip with distances to the faces in ``[1e-3, height/2]``."""
    d = np.geomspace(1e-3, 0.5, per_axis // 2) * height
    x2 = np.unique(np.concatenate([d, height - d[:-1]]))
    x1 = np.geomspace(1e-3, x1_max, per_axis)
    X1, X2 = np.meshgrid(x1, x2, indexing="ij")
    pts = np.zeros((X1.size, n))
    pts[:, 0], pts[:, 1] = X1.ravel(), X2.ravel()
    return pts


@dataclass
class DecayConstant:
    """Sweep summary of ``L(x) dist(x, ∂A)^α``: sup (the working C0) and inf."""

    value: float
    argmax: tuple
    lower: float
    argmin: tuple
    points: np.ndarray
    dist: np.ndarray
    L: np.ndarray
    alpha: float

    @property
    def scaled(self):
        return self.L * self.dist ** self.alpha

    def to_csv(self):
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        n = self.points.shape[1]
        w.writerow([f"x{i + 1}" for i in range(n)] + ["dist", "L", "Ldist_alpha"])
        for p, d, l, s in zip(self.points, self.dist, self.L, self.scaled):
            w.writerow([repr(float(c)) for c in p] + [repr(float(d)), repr(float(l)), repr(float(s))])
        return out.getvalue()


def decay_constant_C0(kp, sweep=None, height=1.0):
    """Measure ``sup`` (and ``inf``) of ``L(x) dist(x,∂A)^α`` over the sweep points."""
    pts = default_sweep(kp.n, height=height) if sweep is None else np.atleast_2d(sweep)
    if len(pts) == 0:
        raise ParameterError("decay_constant_C0 needs a nonempty sweep")
    region = RegionSpec("strip-A", height=height)
    dist = dist_boundary(region, pts)
    L = np.array([kernel_L(p, kp, height=height) for p in pts])
    s = L * dist**kp.alpha
    i, j = int(np.argmax(s)), int(np.argmin(s))
    return DecayConstant(float(s[i]), tuple(pts[i]), float(s[j]), tuple(pts[j]), pts, dist, L, kp.alpha)


def decay_estimate_check(w, kp, cfg=None, C0=None, height=1.0):
    """Certificate for ``(-Δ)^{α/2} w(x*) <= C0 dist(x*,∂A)^{-α} w(x*)`` at the negative minimum.

    ``C0`` defaults to the sweep infimum of ``L dist^α``: since ``w(x*) < 0`` the
    estimate follows from ``(-Δ)^{α/2} w(x*) <= L(x*) w(x*)`` only with a lower
    bound on ``L``.
    """
    cfg = cfg or QuadratureConfig()
    g = w.grid
    if g.n < 2:
        raise ParameterError("decay_estimate_check needs n >= 2")
    scale = max(w.max_abs, 1e-300)
    vals = w.values
    for k in (0, 1):
        if not g.is_symmetric(k):
            return CheckReport.hypothesis_failure("anti-symmetry", f"grid not symmetric about x{k + 1}=0")
        defect = float(np.max(np.abs(vals + np.flip(vals, axis=k))))
        if defect > 1e-12 * scale:
            return CheckReport.hypothesis_failure("anti-symmetry", f"odd-in-x{k + 1} defect {defect:.3e}")
    pts = g.points()
    flat = vals.ravel()
    in_B = region_membership(RegionSpec("strip-B", height=height), pts)
    if np.any(flat[in_B] < -1e-12 * scale):
        i = np.flatnonzero(in_B)[np.argmin(flat[in_B])]
        return CheckReport.hypothesis_failure("B-positivity", "w < 0 somewhere in B", witness=pts[i])
    interior = g.interior_mask(1).ravel()
    in_A = region_membership(RegionSpec("strip-A", height=height), pts) & interior
    if not np.any(in_A) or flat[in_A].min() >= 0.0:
        return CheckReport.hypothesis_failure("no interior negative minimum")
    cand = np.flatnonzero(in_A)
    i = cand[np.argmin(flat[cand])]
    xs = pts[i]
    wmin = float(flat[i])
    if C0 is None:
        C0 = decay_constant_C0(kp, height=height).lower
    d = dist_boundary(RegionSpec("strip-A", height=height), xs)
    lhs = frac_lap_pv(w, xs, cfg, kp.params)
    Lx = kernel_L(xs, kp, height=height)
    bound = C0 * d ** -kp.alpha * wmin
    margin = bound - lhs
    ok = lhs <= bound + 1e-8 * (1.0 + abs(bound))
    notes = (
        f"x*={tuple(round(float(c), 6) for c in xs)} w*={wmin:.6g} (-Δ)^(α/2)w={lhs:.6g} "
        f"C0 dist^-α w*={bound:.6g} L(x*)w*={Lx * wmin:.6g}"
    )
    return CheckReport("pass" if ok else "fail", None if ok else xs, margin, notes,
                       dict(lhs=lhs, bound=bound, L=Lx, C0=C0, dist=d, x_star=tuple(xs)))


# --------------------------------------------------------------------------- barriers


def _norm2(x):
    x = np.asarray(x, dtype=float)
    return np.sum(x * x, axis=-1)


def barrier_psi1(x, kp, C=1.0):
    """``C (1 - |x|²)_+^{α/2}``."""
    r2 = _norm2(x)
    return C * np.clip(1.0 - r2, 0.0, None) ** (kp.alpha / 2.0)


def barrier_psi2(x, kp, C=1.0):
    """Kelvin transform ``|x|^{α-n} ψ1(x/|x|²)``; zero on the closed unit ball."""
    r2 = np.asarray(_norm2(x), dtype=float)
    if np.any(r2 == 0.0):
        raise SingularityError("barrier_psi2 is singular at the origin")
    out = np.zeros_like(r2)
    outside = r2 > 1.0
    r = np.sqrt(r2[outside])
    out[outside] = C * r ** (-kp.n) * (r2[outside] - 1.0) ** (kp.alpha / 2.0)
    return float(out) if out.ndim == 0 else out


def _smooth_step(t):
    t = np.clip(t, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        f = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        s = 1.0 - t
        g = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
    return f / (f + g)


def cutoff_xi(x, r_in=1.0, r_out=3.0):
    """C^∞ radial cut-off: 0 on ``|x| <= r_in``, 1 on ``|x| >= r_out``."""
    r = np.sqrt(_norm2(x))
    out = _smooth_step((r - r_in) / (r_out - r_in))
    return float(out) if np.ndim(out) == 0 else out


def composite_barrier(t, x, kp, C=1.0):
    """``t ψ2(x) + ξ(x)``."""
    return t * barrier_psi2(x, kp, C) + cutoff_xi(x)


def psi1_function(kp, C=1.0):
    return AnalyticFunction(lambda p: barrier_psi1(p, kp, C), kp.n, support=((0.0,) * kp.n, 1.0),
                            name="psi1")


def psi2_function(kp, C=1.0):
    far = C if kp.alpha == kp.n else 0.0
    return AnalyticFunction(lambda p: barrier_psi2(p, kp, C), kp.n, far_value=far, name="psi2")


def xi_function(n):
    return AnalyticFunction(cutoff_xi, n, support=((0.0,) * n, 3.0), far_value=1.0, name="xi")


def composite_function(t, kp, C=1.0):
    far = t * C if kp.alpha == kp.n else 0.0
    return AnalyticFunction(lambda p: composite_barrier(t, p, kp, C), kp.n, far_value=far + 1.0,
                            name="phi")


def calibrate_psi1(kp, cfg=None):
    """Constant ``C`` making ``(-Δ)^{α/2} ψ1 = 1`` at the centre of the unit ball."""
    cfg = cfg or QuadratureConfig()
    return 1.0 / frac_lap_pv(psi1_function(kp, 1.0), np.zeros(kp.n), cfg, kp.params)


def cutoff_lower_constant(kp, cfg=None, radii=None):
    """``C_ξ = max(0, -min (-Δ)^{α/2} ξ)`` over a radial sweep (ξ is radial)."""
    cfg = cfg or QuadratureConfig()
    radii = np.linspace(0.05, 4.0, 80) if radii is None else np.asarray(radii)
    xi = xi_function(kp.n)
    pts = np.zeros((len(radii), kp.n))
    pts[:, 0] = radii
    vals = np.array([frac_lap_pv(xi, p, cfg, kp.params) for p in pts])
    return max(0.0, -float(vals.min())), vals


def annulus_samples(n, count=64, r_in=1.0, r_out=3.0):
    """Deterministic sample of ``D = B_{r_out} minus B_{r_in}`` (radii times directions)."""
    radii = np.linspace(r_in, r_out, count + 1)[1:]
    if n == 1:
        return np.concatenate([radii, -radii])[:, None]
    ang = np.linspace(0.0, 2 * np.pi, 8, endpoint=False)
    pts = np.zeros((count * len(ang), n))
    R, A = np.meshgrid(radii, ang, indexing="ij")
    pts[:, 0] = (R * np.cos(A)).ravel()
    pts[:, 1] = (R * np.sin(A)).ravel()
    return pts


@dataclass
class BarrierChoice:
    t: float | None
    ok: bool
    margin: float
    C_xi: float
    notes: str = ""


def choose_t(D, kp, C_xi, max_power=40):
    """Least ``t = 2^j`` with ``min_D (t |x|^{-n-α} - C_xi) >= 1``."""
    D = np.atleast_2d(D)
    r = np.sqrt(_norm2(D))
    if np.any(r <= 1.0) or np.any(r > 3.0 + 1e-12):
        raise DomainError("region D must lie in B_3 minus B_1")
    weight = float(np.min(r ** -(kp.n + kp.alpha)))
    for j in range(max_power + 1):
        t = 2.0**j
        margin = t * weight - C_xi - 1.0
        if margin >= 0:
            return BarrierChoice(t, True, margin, C_xi)
    return BarrierChoice(None, False, t * weight - C_xi - 1.0, C_xi,
                         notes=f"ladder exhausted at t = 2^{max_power}")


def barrier_summary(kp, cfg=None, D=None):
    """Calibration constants ``{n, alpha, C_psi1, C0, t}``."""
    cfg = cfg or QuadratureConfig()
    C = calibrate_psi1(kp, cfg)
    C_xi, _ = cutoff_lower_constant(kp, cfg)
    choice = choose_t(annulus_samples(kp.n) if D is None else D, kp, C_xi)
    C0 = decay_constant_C0(kp).value
    return {"n": kp.n, "alpha": kp.alpha, "C_psi1": C, "C0": C0, "t": choice.t, "C_xi": C_xi}
