"""Grids, sampled functions, reflections and the strip/quarter region algebra.

Points are ``(x1, x2, x')`` with ``x' in R^{n-2}``.  ``T1`` flips ``x1``,
``T2`` flips ``x2`` and the ``xn`` reflection flips the last coordinate.
"""

from __future__ import annotations

import io
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DimensionError, DomainError, ParameterError

EXTENSIONS = ("zero-outside", "antisym-x1", "antisym-xn", "antisym-x1-and-x2", "periodic")
REGION_KINDS = (
    "whole-space",
    "half-space",
    "quarter-space",
    "strip-A",
    "strip-B",
    "sigma-plus",
    "bounded-domain",
)

_SNAP = 1e-9
_SYM_TOL = 1e-12


def critical_exponent(n, alpha):
    """Upper end of the subcritical range, ``(n+alpha)/(n-alpha)`` (inf if n <= alpha)."""
    if n <= alpha:
        return math.inf
    return (n + alpha) / (n - alpha)


@dataclass(frozen=True)
class Params:
    """Dimension, order, exponent and operator normalisation."""

    n: int
    alpha: float
    p: float | None = None
    C_norm: float | None = None

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1 or self.n > 3:
            raise ParameterError(f"dimension n must be 1, 2 or 3, got {self.n}")
        if not 0.0 < self.alpha < 2.0:
            raise ParameterError(f"alpha must lie in (0, 2), got {self.alpha}")
        if self.p is not None and not 1.0 < self.p < critical_exponent(self.n, self.alpha):
            raise ParameterError(
                f"exponent p={self.p} not subcritical: need 1 < p < "
                f"{critical_exponent(self.n, self.alpha)}"
            )
        if self.C_norm is None:
            from .operator import normalization_constant

            object.__setattr__(self, "C_norm", normalization_constant(self.n, self.alpha))
        elif not self.C_norm > 0:
            raise ParameterError(f"C_norm must be positive, got {self.C_norm}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "alpha", float(self.alpha))

    def with_p(self, p):
        return Params(self.n, self.alpha, p, self.C_norm)


# --------------------------------------------------------------------------- reflections


def _axis_index(axis, n):
    if axis == "n":
        return n - 1
    if isinstance(axis, (int, np.integer)) and 1 <= axis <= n:
        return int(axis) - 1
    raise DimensionError(f"reflection axis {axis!r} invalid for dimension {n}")


def reflect(x, axis):
    """Reflect ``x`` about ``{x_axis = 0}``; ``axis`` is 1, 2, ..., n or ``'n'``."""
    x = np.asarray(x, dtype=float)
    out = x.copy()
    k = _axis_index(axis, x.shape[-1])
    out[..., k] = -out[..., k]
    if out.ndim == 1:
        return tuple(float(v) for v in out)
    return out


# --------------------------------------------------------------------------- grids


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid: ``origin + i * spacing`` for ``0 <= i < extent``."""

    origin: tuple
    spacing: tuple
    extent: tuple

    def __post_init__(self):
        origin = tuple(float(v) for v in np.atleast_1d(self.origin))
        n = len(origin)
        spacing = np.broadcast_to(np.asarray(self.spacing, dtype=float), (n,))
        extent = np.broadcast_to(np.asarray(self.extent), (n,))
        if np.any(spacing <= 0):
            raise ParameterError(f"grid spacing must be positive, got {tuple(spacing)}")
        if np.any(extent < 3):
            raise ParameterError(f"grid needs at least 3 points per axis, got {tuple(extent)}")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "spacing", tuple(float(v) for v in spacing))
        object.__setattr__(self, "extent", tuple(int(v) for v in extent))

    @classmethod
    def box(cls, lower, upper, extent):
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        extent = np.broadcast_to(np.asarray(extent), lower.shape)
        spacing = (upper - lower) / (extent - 1)
        return cls(tuple(lower), tuple(spacing), tuple(extent))

    @classmethod
    def periodic_box(cls, lower, period, extent):
        """Grid for periodic data: ``extent`` points covering one period."""
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        period = np.broadcast_to(np.asarray(period, dtype=float), lower.shape)
        extent = np.broadcast_to(np.asarray(extent), lower.shape)
        return cls(tuple(lower), tuple(period / extent), tuple(extent))

    @property
    def n(self):
        return len(self.origin)

    @property
    def shape(self):
        return self.extent

    @property
    def size(self):
        return int(np.prod(self.extent))

    @property
    def h(self):
        return min(self.spacing)

    @property
    def upper(self):
        return tuple(o + (m - 1) * s for o, s, m in zip(self.origin, self.spacing, self.extent))

    def axes(self):
        return [o + s * np.arange(m) for o, s, m in zip(self.origin, self.spacing, self.extent)]

    def mesh(self):
        return np.meshgrid(*self.axes(), indexing="ij")

    def points(self):
        """All grid points, shape ``(size, n)``, lexicographic (C) order."""
        return np.stack([c.ravel() for c in self.mesh()], axis=-1)

    def diameter(self, periodic=False):
        if periodic:
            return math.sqrt(sum((s * m) ** 2 for s, m in zip(self.spacing, self.extent)))
        return math.sqrt(sum(((m - 1) * s) ** 2 for s, m in zip(self.spacing, self.extent)))

    def is_symmetric(self, axis, center=0.0):
        """Whether reflection about ``{x_axis = center}`` maps grid points to grid points."""
        k = axis
        lo, hi, s = self.origin[k], self.upper[k], self.spacing[k]
        return abs((lo - center) + (hi - center)) <= _SYM_TOL * max(s, 1.0) * 10

    def contains(self, pts, tol=0.0):
        pts = np.atleast_2d(pts)
        lo = np.asarray(self.origin) - tol
        hi = np.asarray(self.upper) + tol
        return np.all((pts >= lo) & (pts <= hi), axis=-1)

    def interior_mask(self, collar=1):
        """Boolean array marking points at least ``collar`` indices from the hull faces."""
        mask = np.ones(self.extent, dtype=bool)
        for k, m in enumerate(self.extent):
            idx = np.arange(m)
            keep = (idx >= collar) & (idx <= m - 1 - collar)
            shape = [1] * self.n
            shape[k] = m
            mask &= keep.reshape(shape)
        return mask

    def index_of(self, point):
        """Nearest grid multi-index of ``point``."""
        t = (np.asarray(point, dtype=float) - np.asarray(self.origin)) / np.asarray(self.spacing)
        idx = np.rint(t).astype(int)
        return tuple(int(v) for v in np.clip(idx, 0, np.asarray(self.extent) - 1))

    def point(self, index):
        return tuple(o + s * i for o, s, i in zip(self.origin, self.spacing, index))


# --------------------------------------------------------------------------- interpolation


def _corner_weights(grid, pts, periodic):
    """Multilinear stencil of ``pts``: list of (multi-index arrays, weight) pairs."""
    origin = np.asarray(grid.origin)
    spacing = np.asarray(grid.spacing)
    extent = np.asarray(grid.extent)
    t = (pts - origin) / spacing
    near = np.rint(t)
    t = np.where(np.abs(t - near) < _SNAP, near, t)
    base = np.floor(t)
    frac = t - base
    base = base.astype(np.int64)
    if periodic:
        base = np.mod(base, extent)
    else:
        top = extent - 2
        over = base > top
        frac = np.where(over, frac + (base - top), frac)
        base = np.minimum(base, top)
        under = base < 0
        frac = np.where(under, frac + base, frac)
        base = np.maximum(base, 0)
    corners = []
    for bits in itertools.product((0, 1), repeat=grid.n):
        idx = []
        w = np.ones(len(pts))
        for k, b in enumerate(bits):
            i = base[:, k] + b
            if periodic:
                i = np.mod(i, extent[k])
            idx.append(i)
            w = w * (frac[:, k] if b else 1.0 - frac[:, k])
        corners.append((tuple(idx), w))
    return corners


def _interpolate(grid, values, pts, periodic):
    out = np.zeros(len(pts))
    for idx, w in _corner_weights(grid, pts, periodic):
        out += w * values[idx]
    return out


_REFLECTIONS = {
    "antisym-x1": [((0,), -1.0)],
    "antisym-xn": [(("n",), -1.0)],
    "antisym-x1-and-x2": [((0,), -1.0), ((1,), -1.0), ((0, 1), 1.0)],
}


def _antisym_axes(extension, n):
    if extension == "antisym-x1":
        return [0]
    if extension == "antisym-xn":
        return [n - 1]
    if extension == "antisym-x1-and-x2":
        return [0, 1]
    return []


@dataclass(frozen=True)
class GridFunction:
    """Values on a :class:`Grid` together with the rule used outside the grid hull."""

    grid: Grid
    values: np.ndarray
    extension: str = "zero-outside"
    check: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).reshape(self.grid.extent)
        if self.extension not in EXTENSIONS:
            raise ParameterError(f"unknown extension {self.extension!r}; expected one of {EXTENSIONS}")
        if not np.all(np.isfinite(values)):
            raise ContractError("grid function values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.check:
            for k in _antisym_axes(self.extension, self.grid.n):
                if not self.grid.is_symmetric(k):
                    raise ContractError(
                        f"grid is not symmetric about x{k + 1}=0, required by {self.extension}"
                    )
                scale = max(self.max_abs, 1e-300)
                defect = np.max(np.abs(values + np.flip(values, axis=k)))
                if defect > _SYM_TOL * scale:
                    raise ContractError(
                        f"values are not odd under the x{k + 1} reflection "
                        f"(defect {defect:.3e}, max |u| {scale:.3e})"
                    )

    @classmethod
    def from_callable(cls, grid, func, extension="zero-outside", symmetrize=True):
        """Sample ``func(points) -> values`` on the grid.

        With ``symmetrize`` the sample is projected onto the declared
        anti-symmetry so rounding in ``func`` cannot trip the invariant check.
        """
        vals = np.asarray(func(grid.points()), dtype=float).reshape(grid.extent)
        if symmetrize:
            vals = antisymmetrize(vals, _antisym_axes(extension, grid.n))
        return cls(grid, vals, extension)

    @property
    def n(self):
        return self.grid.n

    @property
    def periodic(self):
        return self.extension == "periodic"

    @property
    def max_abs(self):
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def with_values(self, values, extension=None, check=True):
        return GridFunction(self.grid, values, extension or self.extension, check)

    def evaluate(self, pts):
        """Vectorised :func:`extend_eval` for an ``(m, n)`` array of points."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if pts.shape[-1] != self.n:
            raise DimensionError(f"points have dimension {pts.shape[-1]}, grid has {self.n}")
        if self.periodic:
            return _interpolate(self.grid, self.values, pts, True)
        out = np.zeros(len(pts))
        inside = self.grid.contains(pts, tol=1e-12 * self.grid.h)
        if np.any(inside):
            out[inside] = _interpolate(self.grid, self.values, pts[inside], False)
        rest = np.flatnonzero(~inside)
        for axes, sign in _REFLECTIONS.get(self.extension, []):
            if rest.size == 0:
                break
            q = pts[rest].copy()
            for a in axes:
                q[:, self.n - 1 if a == "n" else a] *= -1.0
            hit = self.grid.contains(q, tol=1e-12 * self.grid.h)
            if np.any(hit):
                out[rest[hit]] = sign * _interpolate(self.grid, self.values, q[hit], False)
                rest = rest[~hit]
        return out

    def far_value(self):
        """Constant used by the constant-tail rule: the mean for periodic data, else 0."""
        return float(np.mean(self.values)) if self.periodic else 0.0


def antisymmetrize(values, axes):
    """Project an array onto functions odd under flips along ``axes``."""
    v = np.asarray(values, dtype=float)
    for k in axes:
        v = 0.5 * (v - np.flip(v, axis=k))
    return v


def extend_eval(u, x):
    """Value of ``u`` at a single point, applying the extension rule off the grid."""
    return float(u.evaluate(np.asarray(x, dtype=float)[None, :])[0])


class AnalyticFunction:
    """A closed-form function usable wherever a :class:`GridFunction` is evaluated.

    ``support`` is ``(center, radius)`` when the function vanishes outside a
    ball; ``far_value`` is the constant used by the constant-tail rule.
    """

    periodic = False

    def __init__(self, func, n, support=None, far_value=0.0, name="f"):
        self.func = func
        self.n = int(n)
        self.support = support
        self.far_value_ = float(far_value)
        self.name = name

    def evaluate(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return np.asarray(self.func(pts), dtype=float).reshape(len(pts))

    def far_value(self):
        return self.far_value_

    def __repr__(self):
        return f"AnalyticFunction({self.name}, n={self.n})"


# --------------------------------------------------------------------------- regions


@dataclass(frozen=True)
class RegionSpec:
    """Region descriptor.

    ``height`` is the strip height for strip-A/strip-B (1 by default),
    ``lam`` the plane position for sigma-plus, ``radius`` the ball radius for
    bounded-domain (``upper=True`` selects its upper half), ``offset`` the
    position of the half-space face.
    """

    kind: str
    height: float = 1.0
    lam: float | None = None
    radius: float = 1.0
    offset: float = 0.0
    upper: bool = False

    def __post_init__(self):
        if self.kind not in REGION_KINDS:
            raise ParameterError(f"unknown region kind {self.kind!r}")
        if self.kind == "sigma-plus" and (self.lam is None or self.lam <= 0):
            raise ParameterError("sigma-plus needs lam > 0")
        if self.height <= 0 or self.radius <= 0:
            raise ParameterError("strip height and domain radius must be positive")

    @property
    def strip_height(self):
        return self.lam if self.kind == "sigma-plus" else self.height

    def _need(self, x, m):
        if x.shape[-1] < m:
            raise DimensionError(f"region {self.kind} needs n >= {m}, got {x.shape[-1]}")


def region_membership(region, x):
    """Exact membership in the open region; works on one point or an ``(m, n)`` array."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    k = region.kind
    if k == "whole-space":
        res = np.ones(len(x), dtype=bool)
    elif k == "half-space":
        res = x[:, -1] > region.offset
    elif k == "bounded-domain":
        res = np.sum(x * x, axis=1) < region.radius**2
        if region.upper:
            res &= x[:, -1] > 0
    else:
        region._need(x, 2)
        x1, x2 = x[:, 0], x[:, 1]
        if k == "quarter-space":
            res = (x1 > 0) & (x2 > 0)
        elif k == "strip-B":
            res = (x1 > 0) & (x2 > region.height)
        else:
            H = region.strip_height
            res = (x1 > 0) & (x2 > 0) & (x2 < H)
    return bool(res[0]) if single else res


def dist_boundary(region, x):
    """Euclidean distance from ``x`` (inside ``region``) to the region boundary."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    if not np.all(region_membership(region, pts)):
        raise DomainError(f"point(s) outside region {region.kind}")
    k = region.kind
    if k == "whole-space":
        d = np.full(len(pts), np.inf)
    elif k == "half-space":
        d = pts[:, -1] - region.offset
    elif k == "bounded-domain":
        d = region.radius - np.linalg.norm(pts, axis=1)
        if region.upper:
            d = np.minimum(d, pts[:, -1])
    elif k == "quarter-space":
        d = np.minimum(pts[:, 0], pts[:, 1])
    elif k == "strip-B":
        d = np.minimum(pts[:, 0], pts[:, 1] - region.height)
    else:
        H = region.strip_height
        d = np.minimum(np.minimum(pts[:, 0], pts[:, 1]), H - pts[:, 1])
    return float(d[0]) if single else d


# --------------------------------------------------------------------------- CSV layout


def _fmt(v):
    return repr(float(v))


def write_csv(u, stream=None, alpha=None):
    """Serialise ``u``; first row ``n,alpha,h,extent,extension`` then ``x1..xn,value`` rows.

    Per-axis ``h`` and ``extent`` are space separated.  Returns the text when
    ``stream`` is None.
    """
    own = stream is None
    out = io.StringIO() if own else stream
    g = u.grid
    alpha_txt = "" if alpha is None else _fmt(alpha)
    out.write(
        f"{g.n},{alpha_txt},{' '.join(_fmt(s) for s in g.spacing)},"
        f"{' '.join(str(m) for m in g.extent)},{u.extension}\n"
    )
    pts = g.points()
    vals = u.values.ravel()
    for p, v in zip(pts, vals):
        out.write(",".join(_fmt(c) for c in p) + "," + _fmt(v) + "\n")
    if own:
        return out.getvalue()
    return None


def read_csv(text):
    """Inverse of :func:`write_csv`; returns ``(GridFunction, alpha or None)``."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    head = lines[0].split(",")
    n = int(head[0])
    alpha = float(head[1]) if head[1] else None
    spacing = tuple(float(s) for s in head[2].split())
    extent = tuple(int(m) for m in head[3].split())
    extension = head[4]
    rows = np.array([[float(c) for c in ln.split(",")] for ln in lines[1:]])
    origin = tuple(rows[0, :n])
    grid = Grid(origin, spacing, extent)
    return GridFunction(grid, rows[:, n].reshape(extent), extension), alpha
