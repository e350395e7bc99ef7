"""The fractional Laplacian as a principal-value integral, its Fourier oracle
and the dense discrete operator used by the solver.

The singular integral is evaluated in second-difference form

    (-Δ)^{α/2} u(x) = C/2 ∫ (2u(x) - u(x+y) - u(x-y)) / |y|^{n+α} dy

split into a core ``|y| < δ`` (second-order Taylor term from the discrete
Laplacian), a quadrature zone ``δ <= |y| <= R`` (Gauss panels in the radius,
midpoint rule on the half circle for n = 2) and a closed-form tail.
"""

from __future__ import annotations

import functools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields

import numpy as np
from scipy import integrate
from scipy.signal import fftconvolve
from scipy.special import gamma

from .errors import ContractError, DimensionError, DomainError, NumericError, ParameterError, ResourceError
from .geometry import Grid, GridFunction, _antisym_axes

TAIL_MODES = ("truncate", "analytic-zero-tail", "analytic-constant-tail")
_CHUNK = 400_000


def normalization_constant(n, alpha):
    """Constant ``C_{n,α}`` giving the operator the Fourier symbol ``|ξ|^α``."""
    if not 0.0 < alpha < 2.0:
        raise ParameterError(f"alpha must lie in (0, 2), got {alpha}")
    return (
        alpha
        * 2.0 ** (alpha - 1.0)
        * gamma((n + alpha) / 2.0)
        / (math.pi ** (n / 2.0) * gamma(1.0 - alpha / 2.0))
    )


def sphere_area(n):
    """Surface measure of the unit sphere in R^n (2 for n = 1)."""
    return 2.0 * math.pi ** (n / 2.0) / gamma(n / 2.0)


@dataclass(frozen=True)
class QuadratureConfig:
    """Quadrature layout.

    ``inner_radius`` is the core radius δ in units of the base step (grid
    spacing, or ``step`` for closed-form inputs).  ``outer_radius`` R is
    absolute; None means 10 hull diameters for grid data and ``1e5`` for
    closed-form inputs.  ``points_per_axis`` is the minimum number of angular
    nodes per radius.  Panels start one step wide, grow like ``growth * r``
    and are capped at ``max_panel`` steps while the integrand can still
    oscillate on the grid scale.
    """

    inner_radius: float = 2.0
    outer_radius: float | None = None
    tail_mode: str = "analytic-constant-tail"
    points_per_axis: int = 16
    gauss_order: int = 4
    growth: float = 0.1
    max_panel: float = 4.0
    step: float = 0.01
    resolve_radius: float = 8.0
    max_unknowns: int = 10_000
    memory_cap_bytes: float = 2.0e9

    def __post_init__(self):
        if self.inner_radius < 1.0:
            raise ParameterError("inner_radius must be at least one grid step (δ >= h)")
        if self.tail_mode not in TAIL_MODES:
            raise ParameterError(f"tail_mode must be one of {TAIL_MODES}, got {self.tail_mode!r}")
        if self.points_per_axis < 16:
            raise ParameterError("points_per_axis must be >= 16")
        if self.gauss_order < 1 or self.growth <= 0 or self.max_panel < 1 or self.step <= 0:
            raise ParameterError("gauss_order, growth, max_panel and step must be positive")

    @classmethod
    def from_text(cls, text):
        """Parse ``key = value`` lines (``#`` comments allowed)."""
        kinds = {f.name: f.type for f in fields(cls)}
        kw = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line or line.startswith("["):
                continue
            if "=" not in line:
                raise ParameterError(f"line {lineno}: expected 'key = value', got {raw!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in kinds:
                raise ParameterError(f"line {lineno}: unknown quadrature key {key!r}")
            kw[key] = _coerce(key, val, lineno)
        return cls(**kw)

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _coerce(key, val, lineno):
    if key == "tail_mode":
        return val
    if key == "outer_radius" and val.lower() in ("none", "auto", ""):
        return None
    try:
        if key in ("points_per_axis", "gauss_order", "max_unknowns"):
            return int(val)
        return float(val)
    except ValueError:
        raise ParameterError(f"line {lineno}: bad value for {key}: {val!r}") from None


# --------------------------------------------------------------------------- nodes


@functools.lru_cache(maxsize=64)
def _radial_rule(delta, r_end, step, growth, cap, r_cap, order):
    g_x, g_w = np.polynomial.legendre.leggauss(order)
    edges = [delta]
    r = delta
    while r < r_end * (1 - 1e-14):
        if r < r_cap:
            w = min(max(step, growth * r), cap)
        else:
            w = max(cap, 0.25 * r)
        nxt = r + w
        if nxt > r_end or r_end - nxt < 0.25 * w:
            nxt = r_end
        edges.append(nxt)
        r = nxt
    e = np.asarray(edges)
    a, b = e[:-1, None], e[1:, None]
    nodes = 0.5 * (b - a) * g_x[None, :] + 0.5 * (a + b)
    weights = 0.5 * (b - a) * g_w[None, :]
    return nodes.ravel(), weights.ravel()


@functools.lru_cache(maxsize=32)
def _node_set(n, alpha, c_norm, delta, r_end, step, growth, cap, r_cap, order, min_angles):
    """Offsets ``y`` (half sphere) and weights so that the zone integral is ``Σ w D(y)``."""
    r, wr = _radial_rule(delta, r_end, step, growth, cap, r_cap, order)
    radial = c_norm * wr * r ** (-1.0 - alpha)
    if n == 1:
        Y = r[:, None]
        W = radial
    elif n == 2:
        arc = np.where(r < r_cap, np.minimum(np.maximum(step, growth * r), cap), np.inf)
        M = np.maximum(min_angles, np.ceil(math.pi * r / arc)).astype(np.int64)
        rr = np.repeat(r, M)
        mm = np.repeat(M, M)
        start = np.repeat(np.cumsum(M) - M, M)
        j = np.arange(rr.size) - start
        theta = (j + 0.5) * math.pi / mm
        Y = np.stack([rr * np.cos(theta), rr * np.sin(theta)], axis=-1)
        W = np.repeat(radial, M) * (math.pi / mm)
    else:
        raise DimensionError("the principal-value quadrature supports n = 1 and n = 2")
    Y.setflags(write=False)
    W.setflags(write=False)
    return Y, W


@dataclass
class PVResult:
    """One principal-value evaluation with its error bookkeeping."""

    value: float
    zone: float
    core: float
    core_bound: float
    tail: float
    discarded: float
    nodes: int


def _layout(u, x, cfg, params):
    """Base step, core radius, zone end, resolve radius and exact-tail flag for ``u`` at ``x``."""
    if isinstance(u, GridFunction):
        g = u.grid
        step = g.h
        R = cfg.outer_radius if cfg.outer_radius is not None else 10.0 * g.diameter(u.periodic)
        if cfg.outer_radius is not None and R < 10.0 * g.diameter(u.periodic) * (1 - 1e-12):
            raise ParameterError("outer_radius must be at least 10 grid-hull diameters")
        if u.periodic:
            r_exact = math.inf
            r_cap = R
        else:
            r_exact = g.diameter() + step
            r_cap = r_exact
        fd = np.asarray(g.spacing)
    else:
        step = cfg.step
        R = cfg.outer_radius if cfg.outer_radius is not None else 1.0e5
        if u.support is not None:
            center, rad = u.support
            r_exact = float(np.linalg.norm(np.asarray(x) - np.asarray(center))) + rad
            r_cap = r_exact
        else:
            r_exact = math.inf
            r_cap = cfg.resolve_radius
        fd = np.full(params.n, step)
    delta = cfg.inner_radius * step
    return step, delta, R, r_cap, r_exact, fd


def _check_inside(u, x):
    if isinstance(u, GridFunction) and not u.periodic:
        g = u.grid
        lo, hi = np.asarray(g.origin), np.asarray(g.upper)
        tol = 1e-12 * g.h
        if np.any(x <= lo + tol) or np.any(x >= hi - tol):
            raise DomainError(f"evaluation point {tuple(x)} is not strictly inside the grid hull")


def frac_lap_pv_detail(u, x, cfg=None, params=None):
    """Principal-value evaluation at ``x`` returning a :class:`PVResult`."""
    cfg = cfg or QuadratureConfig()
    x = np.asarray(x, dtype=float).reshape(-1)
    n = params.n
    if x.size != n or u.n != n:
        raise DimensionError(f"point dimension {x.size}, function dimension {u.n}, params n={n}")
    _check_inside(u, x)
    alpha, C = params.alpha, params.C_norm
    S = sphere_area(n)
    step, delta, R, r_cap, r_exact, fd = _layout(u, x, cfg, params)
    r_end = min(R, r_exact)
    cap = cfg.max_panel * step
    Y, W = _node_set(n, alpha, C, delta, r_end, step, cfg.growth, cap, r_cap, cfg.gauss_order,
                     cfg.points_per_axis)
    u0 = float(u.evaluate(x[None, :])[0])
    m = u.far_value()

    partial = []
    for s in range(0, len(W), _CHUNK):
        y = Y[s:s + _CHUNK]
        D = 2.0 * u0 - u.evaluate(x + y) - u.evaluate(x - y)
        if not np.all(np.isfinite(D)):
            bad = np.flatnonzero(~np.isfinite(D))[0]
            raise NumericError(
                f"non-finite integrand at shell radius {np.linalg.norm(y[bad]):.6g}",
                radius=float(np.linalg.norm(y[bad])),
            )
        partial.append(float(np.dot(W[s:s + _CHUNK], D)))
    zone = math.fsum(partial)

    lap, lap2 = 0.0, 0.0
    for k in range(n):
        e = np.zeros(n)
        e[k] = fd[k]
        vals = u.evaluate(np.stack([x + e, x - e, x + 2 * e, x - 2 * e]))
        lap += (vals[0] - 2 * u0 + vals[1]) / fd[k] ** 2
        lap2 += (vals[2] - 2 * u0 + vals[3]) / (4 * fd[k] ** 2)
    core_coef = -C * delta ** (2 - alpha) / (2 - alpha) * S / (2 * n)
    core = core_coef * lap
    core_bound = abs(core_coef) * abs(lap - lap2) / 3.0

    discarded = 0.0
    if r_exact <= R:
        tail = C * S * (u0 - m) * r_exact ** (-alpha) / alpha
    elif cfg.tail_mode == "analytic-zero-tail":
        tail = C * S * u0 * R ** (-alpha) / alpha
    elif cfg.tail_mode == "analytic-constant-tail":
        tail = C * S * (u0 - m) * R ** (-alpha) / alpha
    else:
        tail = 0.0
        discarded = C * S * abs(u0 - m) * R ** (-alpha) / alpha
    value = math.fsum([zone, core, tail])
    if not math.isfinite(value):
        raise NumericError("non-finite principal value", radius=R)
    return PVResult(value, zone, core, core_bound, tail, discarded, len(W))


def frac_lap_pv(u, x, cfg=None, params=None):
    """``(-Δ)^{α/2} u(x)`` by principal-value quadrature.

    ``u`` is a :class:`GridFunction` or an :class:`AnalyticFunction`; for
    grid data ``x`` must lie strictly inside the hull (any ``x`` for periodic
    data).
    """
    return frac_lap_pv_detail(u, x, cfg, params).value


def frac_lap_pv_many(u, points, cfg=None, params=None, workers=1):
    """Evaluate at many points; results are independent of ``workers``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if workers <= 1:
        return np.array([frac_lap_pv(u, p, cfg, params) for p in pts])
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return np.array(list(pool.map(lambda p: frac_lap_pv(u, p, cfg, params), pts)))


# --------------------------------------------------------------------------- Fourier oracle


def frac_lap_spectral(u, params):
    """Apply the symbol ``|ξ|^α`` with the DFT; exact for band-limited periodic data."""
    if not isinstance(u, GridFunction) or not u.periodic:
        raise ContractError("frac_lap_spectral needs a GridFunction with periodic extension")
    g = u.grid
    ks = [2 * math.pi * np.fft.fftfreq(m, d=s) for m, s in zip(g.extent, g.spacing)]
    K = np.meshgrid(*ks, indexing="ij")
    symbol = np.sqrt(sum(k * k for k in K)) ** params.alpha
    out = np.real(np.fft.ifftn(np.fft.fftn(u.values) * symbol))
    return GridFunction(g, out, "periodic")


# --------------------------------------------------------------------------- 𝓛^α weight


def lalpha_membership(u, params):
    """Estimate ``∫ |u| / (1 + |x|^{n+α}) dx`` using the extension rule off the grid."""
    n, alpha = params.n, params.alpha
    g = u.grid
    pts = g.points()
    wgt = 1.0 / (1.0 + np.linalg.norm(pts, axis=1) ** (n + alpha))
    cell = float(np.prod(g.spacing))
    if u.periodic:
        q = np.full(g.size, cell)
        lower = np.asarray(g.origin) - 0.5 * np.asarray(g.spacing)
        upper = lower + np.asarray(g.spacing) * np.asarray(g.extent)
    else:
        q = np.full(g.extent, cell)
        for k, m in enumerate(g.extent):
            sl = [slice(None)] * n
            for end in (0, m - 1):
                sl[k] = end
                q[tuple(sl)] *= 0.5
        q = q.ravel()
        lower, upper = np.asarray(g.origin), np.asarray(g.upper)
    hull = float(np.dot(q, np.abs(u.values.ravel()) * wgt))
    if not u.periodic:
        return hull
    # periodic data: the exterior contributes mean|u| times the exterior weight mass
    f = lambda r: r ** (n - 1) / (1.0 + r ** (n + alpha))
    total = sphere_area(n) * (integrate.quad(f, 0, 1)[0] + integrate.quad(f, 1, np.inf)[0])
    if n == 1:
        box = integrate.quad(lambda t: 1.0 / (1.0 + abs(t) ** (1 + alpha)), lower[0], upper[0])[0]
    else:
        box = float(np.dot(np.full(g.size, cell), wgt))
    return hull + float(np.mean(np.abs(u.values))) * max(total - box, 0.0)


# --------------------------------------------------------------------------- stencil & assembly


@dataclass
class OperatorStencil:
    """Translation-invariant form of :func:`frac_lap_pv` at grid points.

    ``(-Δ)^{α/2} u(x_i) = diag * u_i + Σ_k weights[k] u_{i+k}``; the centre of
    ``weights`` is offset zero.  For periodic grids ``weights`` is circular.
    """

    grid: Grid
    periodic: bool
    diag: float
    weights: np.ndarray
    center: tuple

    def apply(self, values):
        """Operator applied at every grid point (zero outside the hull unless periodic)."""
        v = np.asarray(values, dtype=float).reshape(self.grid.extent)
        if self.periodic:
            spec = np.fft.rfftn(v) * np.conj(np.fft.rfftn(self.weights))
            corr = np.fft.irfftn(spec, s=v.shape, axes=tuple(range(v.ndim)))
            return self.diag * v + corr
        g = np.flip(self.weights)
        full = fftconvolve(v, g, mode="full")
        sl = tuple(slice(c, c + m) for c, m in zip(self.center, self.grid.extent))
        return self.diag * v + full[sl]

    def coefficient(self, offsets):
        """Weights at integer offset arrays (tuple per axis), zero out of range."""
        if self.periodic:
            idx = tuple(np.mod(o, m) for o, m in zip(offsets, self.grid.extent))
            return self.weights[idx]
        idx = tuple(np.asarray(o) + c for o, c in zip(offsets, self.center))
        ok = np.ones(np.broadcast(*idx).shape, dtype=bool)
        for i, m in zip(idx, self.weights.shape):
            ok &= (i >= 0) & (i < m)
        out = np.zeros(ok.shape)
        safe = tuple(np.where(ok, i, 0) for i in idx)
        out[ok] = self.weights[safe][ok]
        return out


def build_stencil(grid, periodic, cfg=None, params=None):
    """Collapse the quadrature of :func:`frac_lap_pv` at grid points into a stencil.

    For non-periodic grids the stencil interpolates across the cell beyond the
    hull toward the zero exterior, so it reproduces :func:`frac_lap_pv`
    exactly when ``u`` vanishes on the hull faces (the solver's setting).
    """
    cfg = cfg or QuadratureConfig()
    n, alpha, C = params.n, params.alpha, params.C_norm
    probe = GridFunction(grid, np.zeros(grid.extent), "periodic" if periodic else "zero-outside")
    x0 = np.asarray(grid.point(tuple(m // 2 for m in grid.extent)))
    step, delta, R, r_cap, r_exact, fd = _layout(probe, x0, cfg, params)
    r_end = min(R, r_exact)
    Y, W = _node_set(n, alpha, C, delta, r_end, step, cfg.growth, cfg.max_panel * step, r_cap,
                     cfg.gauss_order, cfg.points_per_axis)
    ext = np.asarray(grid.extent)
    if periodic:
        shape = tuple(ext)
        center = (0,) * n
    else:
        shape = tuple(2 * ext - 1)
        center = tuple(ext - 1)
    acc = np.zeros(int(np.prod(shape)))
    for s in range(0, len(W), _CHUNK):
        w = W[s:s + _CHUNK]
        for sign in (1.0, -1.0):
            for idx, cw in _offset_corners(sign * Y[s:s + _CHUNK], grid.spacing):
                if periodic:
                    off = tuple(np.mod(i, m) for i, m in zip(idx, ext))
                    ok = slice(None)
                else:
                    off = tuple(i + c for i, c in zip(idx, center))
                    ok = np.ones(len(w), dtype=bool)
                    for i, m in zip(off, shape):
                        ok &= (i >= 0) & (i < m)
                flat = np.ravel_multi_index(tuple(i[ok] for i in off), shape)
                acc += np.bincount(flat, weights=-(w * cw)[ok], minlength=acc.size)
    weights = acc.reshape(shape)
    diag = 2.0 * math.fsum(W)
    S = sphere_area(n)
    core_coef = -C * delta ** (2 - alpha) / (2 - alpha) * S / (2 * n)
    for k in range(n):
        for sgn in (1, -1):
            off = list(center)
            off[k] = (center[k] + sgn) % shape[k] if periodic else center[k] + sgn
            weights[tuple(off)] += core_coef / fd[k] ** 2
        diag += -2.0 * core_coef / fd[k] ** 2
    if r_exact <= R:
        diag += C * S * r_exact ** (-alpha) / alpha
    elif cfg.tail_mode in ("analytic-zero-tail", "analytic-constant-tail"):
        t = C * S * R ** (-alpha) / alpha
        diag += t
        if cfg.tail_mode == "analytic-constant-tail" and periodic:
            weights -= t / grid.size
    return OperatorStencil(grid, periodic, diag, weights, center)


def _offset_corners(y, spacing):
    """Multilinear corner offsets (integer lattice units) and weights for offsets ``y``."""
    t = y / np.asarray(spacing)
    near = np.rint(t)
    t = np.where(np.abs(t - near) < 1e-9, near, t)
    base = np.floor(t)
    frac = t - base
    base = base.astype(np.int64)
    n = y.shape[1]
    out = []
    for bits in np.ndindex(*(2,) * n):
        idx = []
        w = np.ones(len(y))
        for k, b in enumerate(bits):
            idx.append(base[:, k] + b)
            w = w * (frac[:, k] if b else 1.0 - frac[:, k])
        out.append((tuple(idx), w))
    return out


def apply_operator(u, cfg=None, params=None):
    """:func:`frac_lap_pv` at every grid point of ``u`` via the stencil (hull faces included)."""
    st = build_stencil(u.grid, u.periodic, cfg, params)
    return GridFunction(u.grid, st.apply(u.values), u.extension, check=False)


_IMAGES = {
    (): [((), 1.0)],
    (0,): [((), 1.0), ((0,), -1.0)],
    (1,): [((), 1.0), ((1,), -1.0)],
    (0, 1): [((), 1.0), ((0,), -1.0), ((1,), -1.0), ((0, 1), 1.0)],
}


@dataclass
class AssembledOperator:
    """Dense operator on the free unknowns with the extension folded in."""

    matrix: np.ndarray
    grid: Grid
    extension: str
    unknowns: tuple
    stencil: OperatorStencil

    @property
    def size(self):
        return self.matrix.shape[0]

    def gather(self, u):
        vals = u.values if isinstance(u, GridFunction) else np.asarray(u).reshape(self.grid.extent)
        return vals[self.unknowns].copy()

    def scatter(self, z):
        """Full grid values from unknowns: odd images, zero elsewhere."""
        vals = np.zeros(self.grid.extent)
        axes = tuple(_antisym_axes(self.extension, self.grid.n))
        for refl, sign in _IMAGES[axes]:
            idx = list(self.unknowns)
            for a in refl:
                idx[a] = self.grid.extent[a] - 1 - idx[a]
            vals[tuple(idx)] += sign * np.asarray(z)
        return vals

    def to_function(self, z):
        return GridFunction(self.grid, self.scatter(z), self.extension, check=False)


def unknown_mask(grid, extension, mask=None):
    """Grid points carrying free values: interior, inside ``mask``, on the positive side of odd planes."""
    if extension == "periodic":
        free = np.ones(grid.extent, dtype=bool)
    else:
        free = grid.interior_mask(1)
    if mask is not None:
        free &= np.asarray(mask, dtype=bool)
    coords = grid.mesh()
    for k in _antisym_axes(extension, grid.n):
        free &= coords[k] > 1e-12 * grid.h
    return free


def assemble_discrete_operator(grid, extension, cfg=None, params=None, mask=None):
    """Dense matrix of :func:`frac_lap_pv` at the free grid points with the extension baked in."""
    cfg = cfg or QuadratureConfig()
    axes = tuple(_antisym_axes(extension, grid.n))
    for k in axes:
        if not grid.is_symmetric(k):
            raise ContractError(f"grid not symmetric about x{k + 1}=0 for {extension}")
    free = unknown_mask(grid, extension, mask)
    unknowns = np.nonzero(free)
    N = unknowns[0].size
    need = 8.0 * N * N * (grid.n + 3)
    if N > cfg.max_unknowns or need > cfg.memory_cap_bytes:
        raise ResourceError(
            f"dense operator with {N} unknowns needs ~{need / 1e9:.2f} GB "
            f"(caps: {cfg.max_unknowns} unknowns, {cfg.memory_cap_bytes / 1e9:.2f} GB)"
        )
    periodic = extension == "periodic"
    st = build_stencil(grid, periodic, cfg, params)
    P = [np.asarray(i) for i in unknowns]
    A = np.zeros((N, N))
    for refl, sign in _IMAGES[axes]:
        Q = [i.copy() for i in P]
        for a in refl:
            Q[a] = grid.extent[a] - 1 - Q[a]
        offs = tuple(q[None, :] - p[:, None] for q, p in zip(Q, P))
        A += sign * st.coefficient(offs)
    A[np.diag_indices(N)] += st.diag
    return AssembledOperator(A, grid, extension, unknowns, st)
