"""Moving-plane diagnostics on quarter-space windows.

``v`` lives on a window of ``{x2 >= 0}``, is odd in ``x1`` and vanishes for
``x2 <= 0``.  For a plane ``{x2 = λ}`` the reflected function is
``v_λ(x) = v(x1, 2λ - x2, x')`` and ``w_λ = v_λ - v`` is examined on
``Σ_λ⁺ = {x1 > 0, 0 < x2 < λ}``.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .geometry import GridFunction
from .reports import CheckReport

SIGN_TOL = 1e-8  # relative to max|v|


def reflect_plane(v, lam):
    """``v_λ`` sampled on ``v``'s grid (off-hull values follow ``v``'s extension rule)."""
    if not lam > 0:
        raise ParameterError(f"plane position must be positive, got {lam}")
    pts = v.grid.points()
    pts[:, 1] = 2.0 * lam - pts[:, 1]
    return GridFunction(v.grid, v.evaluate(pts).reshape(v.grid.extent), "zero-outside", check=False)


def w_lambda(v, lam):
    """``w_λ = v_λ - v`` on ``v``'s grid."""
    return GridFunction(v.grid, reflect_plane(v, lam).values - v.values, "zero-outside", check=False)


def aligned_lambdas(grid, count=20, upper=None):
    """``count`` plane positions in ``(0, upper]`` on multiples of ``h/2`` (reflections hit nodes)."""
    h = grid.spacing[1]
    upper = 0.5 * (grid.upper[1] - grid.origin[1]) if upper is None else upper
    top = int(np.floor(upper / (0.5 * h) + 1e-9))
    if top < count:
        raise ParameterError(f"only {top} aligned plane positions below {upper}")
    j = np.unique(np.round(np.linspace(top / count, top, count)).astype(int))
    return j * 0.5 * h


@dataclass
class ScanRecord:
    lam: float
    min_w: float
    argmin: tuple | None
    verdict: str  # positive | boundary-positive | negative | range-error


@dataclass
class PlaneScan:
    v: GridFunction
    lambdas: np.ndarray
    records: list = field(default_factory=list)

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=float)
        if lam.ndim != 1 or np.any(np.diff(lam) <= 0) or np.any(lam <= 0):
            raise ParameterError("plane positions must be positive and strictly increasing")
        self.lambdas = lam

    @property
    def all_positive(self):
        return all(r.verdict in ("positive", "boundary-positive") for r in self.records)

    @property
    def lambda0(self):
        """Largest scanned λ such that it and every smaller scanned λ are positive."""
        best = None
        for r in self.records:
            if r.verdict not in ("positive", "boundary-positive"):
                break
            best = r.lam
        return best

    def to_csv(self):
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        n = self.v.grid.n
        w.writerow(["lambda", "min_w"] + [f"argmin_x{i + 1}" for i in range(n)] + ["verdict"])
        for r in self.records:
            arg = [repr(float(c)) for c in r.argmin] if r.argmin is not None else [""] * n
            w.writerow([repr(float(r.lam)), repr(float(r.min_w))] + arg + [r.verdict])
        return out.getvalue()


def _scan_one(v, lam, pts, scale):
    g = v.grid
    lam = float(lam)
    if 2.0 * lam > g.upper[1] + 1e-12 * g.h:
        return ScanRecord(lam, float("nan"), None, "range-error")
    # hull-interior grid points of the open set (the hull faces carry the zero exterior)
    sigma = (pts[:, 0] > 0) & (pts[:, 1] > 0) & (pts[:, 1] < lam) & g.interior_mask(1).ravel()
    if not np.any(sigma):
        return ScanRecord(lam, float("nan"), None, "range-error")
    w = w_lambda(v, lam).values.ravel()
    i = np.flatnonzero(sigma)[np.argmin(w[sigma])]
    m = float(w[i])
    if scale == 0.0:
        verdict = "boundary-positive"
    else:
        verdict = "positive" if m >= -SIGN_TOL * scale else "negative"
    return ScanRecord(lam, m, tuple(float(c) for c in pts[i]), verdict)


def min_scan(v, lambdas, workers=1):
    """Minimum of ``w_λ`` over the grid points of ``Σ_λ⁺`` for each plane position."""
    scan = PlaneScan(v, lambdas)
    pts = v.grid.points()
    scale = v.max_abs
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            scan.records = list(ex.map(lambda lam: _scan_one(v, lam, pts, scale), scan.lambdas))
    else:
        scan.records = [_scan_one(v, lam, pts, scale) for lam in scan.lambdas]
    return scan


def monotonicity_certificate(v, direction=2, upto=None):
    """Forward differences of ``v`` along ``direction`` (1-based axis) on ``{x1 > 0, x2 > 0}``.

    ``upto`` restricts the check to points whose coordinate along
    ``direction`` (and that of the forward neighbour) is at most ``upto``.
    """
    g = v.grid
    k = direction - 1
    if not 0 <= k < g.n:
        raise ParameterError(f"direction must be an axis in 1..{g.n}")
    vals = v.values
    fwd = np.diff(vals, axis=k)
    base = [slice(None)] * g.n
    base[k] = slice(0, -1)
    X = [x[tuple(base)] for x in g.mesh()]
    ok = (X[0] > 0) & (X[1] > 0)
    inner = g.interior_mask(1)[tuple(base)]
    ok &= inner
    if upto is not None:
        ok &= X[k] + g.spacing[k] <= upto + 1e-12 * g.h
    scale = v.max_abs
    if not np.any(ok):
        return CheckReport("pass", None, 0.0, "no interior points to check")
    d = np.where(ok, fwd, np.inf)
    i = np.unravel_index(np.argmin(d), d.shape)
    dmin = float(d[i])
    x = tuple(float(c[i]) for c in X)
    tol = SIGN_TOL * scale
    notes = f"min forward difference along x{direction}: {dmin:.6g} at {x}"
    if dmin >= -tol:
        return CheckReport("pass", None, dmin + tol, notes)
    return CheckReport("fail", x, dmin, notes)


def plant_bump(v, center, height, width):
    """``v`` plus a bump at ``center`` (mirrored oddly across ``x1 = 0``), zero for ``x2 <= 0``."""
    X = v.grid.mesh()
    r2 = lambda s: (s * X[0] - center[0]) ** 2 + (X[1] - center[1]) ** 2  # noqa: E731
    b = np.exp(-r2(1.0) / width**2) - np.exp(-r2(-1.0) / width**2)
    b = np.where(X[1] > 0, b, 0.0)
    return GridFunction(v.grid, v.values + height * b, v.extension, check=False)
