"""Blow-up harness: rescaling by the maximum, nine-case classification of the
boundary-distance ratios, and boundary Hölder / decay diagnostics.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ParameterError, ScaleError
from .geometry import Grid, GridFunction
from .reports import CheckReport

# (bucket of d'/λ, bucket of d+/λ) -> case; buckets are "inf", "finite", "zero"
CASE_TABLE = {
    ("inf", "inf"): 1,
    ("inf", "finite"): 2,
    ("finite", "inf"): 3,
    ("finite", "finite"): 4,
    ("inf", "zero"): 5,
    ("finite", "zero"): 6,
    ("zero", "inf"): 7,
    ("zero", "finite"): 8,
    ("zero", "zero"): 9,
}

LIMITING_DOMAIN = {
    1: "whole space R^n",
    2: "half space {x_n > -C}",
    3: "half space {x_1 > -C} (anti-symmetric)",
    4: "quarter space {x_1 > -C1, x_n > -C2}",
    5: "boundary touch: Hölder barrier near p^k",
    6: "boundary touch near the symmetry plane (barrier argument)",
    7: "symmetry-plane touch, far from the outer boundary (barrier argument)",
    8: "symmetry-plane touch, finite from the outer boundary (barrier argument)",
    9: "corner touch (barrier argument)",
}


def bucket(ratio, thresholds=(0.1, 10.0)):
    low, high = thresholds
    if not 0 < low < high:
        raise ParameterError(f"thresholds need 0 < low < high, got {thresholds}")
    if ratio < 0 or math.isnan(ratio):
        raise ParameterError(f"ratios must be nonnegative, got {ratio}")
    if ratio <= low:
        return "zero"
    if ratio >= high:
        return "inf"
    return "finite"


def classify_case(ratio_prime, ratio_plus, thresholds=(0.1, 10.0)):
    """Case label 1..9 for the ratios ``d'_k/λ_k`` and ``d+_k/λ_k``."""
    return CASE_TABLE[(bucket(ratio_prime, thresholds), bucket(ratio_plus, thresholds))]


def limiting_domain(case):
    return LIMITING_DOMAIN[case]


def boundary_distances(x, domain):
    """``(d, d', d+)``: distances to ∂Ω⁺, its flat part ``{x_n = 0}`` and its curved part.

    For a ball of radius R (``bounded-domain``) the flat part is the disc
    ``{x_n = 0, |x| <= R}`` and the curved part the upper hemisphere; for the
    quarter space the flat part is ``{x1 = 0}`` and the other face ``{x2 = 0}``.
    """
    x = np.asarray(x, dtype=float)
    if domain.kind == "bounded-domain":
        if not (x[-1] > 0 and np.linalg.norm(x) < domain.radius):
            raise ContractError(f"{tuple(x)} is not in the upper half of the ball")
        d_prime = float(x[-1])
        d_plus = float(domain.radius - np.linalg.norm(x))
    elif domain.kind == "quarter-space":
        d_prime, d_plus = float(x[0]), float(x[1])
    else:
        raise ParameterError(f"no boundary split for {domain.kind}")
    return min(d_prime, d_plus), d_prime, d_plus


def argmax_lex(u):
    """Maximum of ``u`` and its grid point; ties go to the smallest C-order index."""
    i = int(np.argmax(u.values.ravel()))
    idx = np.unravel_index(i, u.grid.extent)
    return float(u.values[idx]), np.array(u.grid.point(idx)), idx


def rescale(u, x_k, m_k, params, window=None):
    """``v_k(x) = u(λ_k x + x_k) / m_k`` with ``λ_k = m_k^{(1-p)/α}``.

    ``v_k`` lives on the grid of spacing ``h/λ_k`` whose nodes are the images
    of ``u``'s nodes (so no interpolation happens), restricted to
    ``|x_i| <= window`` when a window is given.
    """
    if params.p is None:
        raise ParameterError("rescale needs the exponent p")
    m_true, _, _ = argmax_lex(u)
    if abs(m_k - m_true) > 1e-10 * max(1.0, abs(m_true)):
        raise ContractError(f"m_k = {m_k} is not max u = {m_true}")
    with np.errstate(over="ignore", under="ignore", divide="ignore"):
        lam = float(np.power(float(m_k), (1.0 - params.p) / params.alpha))
    if not (math.isfinite(lam) and lam > 1e-300):
        raise ScaleError(f"λ_k = m_k^((1-p)/α) underflows for m_k = {m_k}")
    g = u.grid
    idx = np.asarray(g.index_of(x_k))
    if np.max(np.abs(np.asarray(g.point(idx)) - np.asarray(x_k))) > 1e-9 * g.h:
        raise ContractError("x_k must be a grid point of u")
    spacing = np.asarray(g.spacing) / lam
    if not np.all(np.isfinite(spacing)):
        raise ScaleError("rescaled spacing overflows")
    lo = -idx.copy()
    hi = np.asarray(g.extent) - 1 - idx
    if window is not None:
        cap = np.floor(window / spacing + 1e-9).astype(int)
        lo, hi = np.maximum(lo, -cap), np.minimum(hi, cap)
    sl = tuple(slice(i + a, i + b + 1) for i, a, b in zip(idx, lo, hi))
    grid = Grid(tuple(lo * spacing), tuple(spacing), tuple(hi - lo + 1))
    return GridFunction(grid, u.values[sl] / m_k, "zero-outside", check=False), lam


@dataclass
class BlowupRecord:
    m_k: float
    x_k: tuple
    lambda_k: float
    ratio_prime: float
    ratio_plus: float
    case_label: int
    v_k: GridFunction
    d_k: float
    holder_verdict: str | None = None

    def __post_init__(self):
        v = self.v_k
        zero = v.grid.index_of(np.zeros(v.grid.n))
        if abs(v.values[zero] - 1.0) > 1e-10 or v.values.max() > 1.0 + 1e-10:
            raise ContractError("rescaled profile must satisfy v_k(0) = 1 and max v_k <= 1")

    def to_dict(self):
        return {
            "m_k": self.m_k,
            "lambda_k": self.lambda_k,
            "x_k": list(self.x_k),
            "ratio_prime": self.ratio_prime,
            "ratio_plus": self.ratio_plus,
            "case": self.case_label,
            "holder_verdict": self.holder_verdict,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def blowup_record(u, domain, params, thresholds=(0.1, 10.0), window=None):
    """Rescale ``u`` about its maximum and classify the boundary-distance ratios."""
    m, x, _ = argmax_lex(u)
    v, lam = rescale(u, x, m, params, window)
    d, dp, dplus = boundary_distances(x, domain)
    rp, rplus = dp / lam, dplus / lam
    case = classify_case(rp, rplus, thresholds)
    return BlowupRecord(m, tuple(float(c) for c in x), lam, rp, rplus, case, v, d)


# --------------------------------------------------------------------------- diagnostics


def _shell_sup(v, p, r, count):
    """``sup |v|`` on the dyadic annulus ``r/2 < |x - p| <= r``: grid nodes for grid data
    (no interpolation), sampled spheres for closed-form data."""
    if isinstance(v, GridFunction):
        pts = v.grid.points()
        d = np.linalg.norm(pts - p, axis=1)
        sel = (d > r / 2) & (d <= r * (1 + 1e-12))
        if np.any(sel):
            return float(np.max(np.abs(v.values.ravel()[sel])))
    n = len(p)
    if n == 1:
        pts = np.array([[p[0] - r], [p[0] + r]])
    elif n == 2:
        t = np.linspace(0.0, 2 * np.pi, count, endpoint=False)
        pts = np.stack([p[0] + r * np.cos(t), p[1] + r * np.sin(t)], axis=1)
    else:
        g = np.linspace(-1.0, 1.0, 9)
        dirs = np.stack(np.meshgrid(g, g, g, indexing="ij"), -1).reshape(-1, 3)
        dirs = dirs[np.linalg.norm(dirs, axis=1) > 0]
        pts = p + r * dirs / np.linalg.norm(dirs, axis=1)[:, None]
    return float(np.max(np.abs(v.evaluate(pts))))


def holder_check(v, p_k, alpha, exponent=None, r_max=None, levels=6, angles=64):
    """Fit ``sup |v|`` over dyadic shells around ``p_k`` against ``C r^e``.

    Passes iff the least-squares log-log slope is at least ``e - 0.1`` and the
    constant at the finest level is at most twice the next one.
    """
    exponent = alpha / 2.0 if exponent is None else exponent
    if levels < 5:
        raise ParameterError("the Hölder fit needs at least 5 dyadic levels")
    p = np.asarray(p_k, dtype=float)
    scale = float(np.max(np.abs(v.values))) if isinstance(v, GridFunction) else 1.0
    v0 = abs(float(v.evaluate(p[None, :])[0]))
    if v0 > 1e-6 * max(scale, 1e-300):
        return CheckReport.hypothesis_failure("touch point", f"|v(p_k)| = {v0:.3e} is not ~0")
    if r_max is None:
        h = v.grid.h if isinstance(v, GridFunction) else 1e-3
        r_max = 3.0 * h * 2 ** (levels - 1)
    radii = r_max * 2.0 ** -np.arange(levels)
    sups = np.array([_shell_sup(v, p, r, angles) for r in radii])
    if np.any(sups <= 0):
        return CheckReport("pass", None, math.inf, "v vanishes on a shell: any modulus holds",
                           dict(radii=radii.tolist(), sups=sups.tolist()))
    slope, logc = np.polyfit(np.log(radii), np.log(sups), 1)
    consts = sups / radii**exponent
    stable = consts[-1] <= 2.0 * consts[-2]
    margin = slope - (exponent - 0.1)
    notes = (f"fitted exponent {slope:.4f} (target {exponent:.4f}); constants at the two finest "
             f"levels {consts[-2]:.4g}, {consts[-1]:.4g}")
    data = dict(exponent=float(slope), radii=radii.tolist(), sups=sups.tolist())
    if margin >= 0 and stable:
        return CheckReport("pass", None, margin, notes, data)
    i = int(np.argmax(sups / radii ** (exponent - 0.1)))
    witness = p + np.eye(len(p))[0] * radii[i]
    return CheckReport("fail", witness, min(margin, 0.0) if stable else -abs(margin) - 1.0, notes, data)


def decay_diagnostic(v):
    """Pass iff ``max |v|`` on the outer 10% of the window is at most ``1e-2 max |v|``."""
    g = v.grid
    X = g.mesh()
    shell = np.zeros(g.extent, dtype=bool)
    for k in range(g.n):
        lo, hi = g.origin[k], g.upper[k]
        band = 0.1 * (hi - lo) / 2.0
        shell |= (X[k] <= lo + band) | (X[k] >= hi - band)
    a = np.abs(v.values)
    scale = float(a.max())
    if scale == 0.0:
        return CheckReport("pass", None, 0.0, "v vanishes identically")
    s = np.where(shell, a, -1.0)
    i = np.unravel_index(np.argmax(s), g.extent)
    ratio = float(a[i]) / scale
    notes = f"outer-shell max / max = {ratio:.3e}"
    if ratio <= 1e-2:
        return CheckReport("pass", None, 1e-2 - ratio, notes)
    return CheckReport("fail", g.point(i), 1e-2 - ratio, notes)
