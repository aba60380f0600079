"""Sup-convolution, Prekopa-Leindler on grids and discrete Bregman transport."""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import linprog, minimize_scalar

from .convex_core import GridFunction, Potential, as_points, bregman_cost
from .errors import CapacityError, SupNotLocalized
from .functionals import TestFunction, mlsi_integrand
from .inequalities import DeficitReport, TOL_FLOOR, _tolerance
from .quadrature import QuadratureRule, measure_weights

__all__ = [
    "SupConvolution",
    "sup_convolution",
    "ExpansionOrder",
    "lemma_expansion_order",
    "PLReport",
    "pl_check",
    "pl_majorant",
    "Coupling",
    "cost_matrix",
    "hungarian",
    "exhaustive_assignment",
    "optimal_coupling",
    "wasserstein_L",
    "quantile_points",
    "check_transport",
]


# --------------------------------------------------------------------------
# sup-convolution


@dataclass(frozen=True)
class SupConvolution:
    value: float
    argmax: np.ndarray


def _inner(P: Potential, g: TestFunction, s: float, z: np.ndarray):
    t = 1.0 - s
    Pz = float(P.func(z[None, :])[0])

    def F(y):
        y = np.atleast_2d(y)
        x = (z[None, :] - s * y) / t
        return g.func(x) - t * P.func(x) - s * P.func(y) + Pz

    return F


def _default_axes(P: Potential, g: TestFunction, z: np.ndarray, nodes: int = 801):
    half = 5.0 + 2.0 * (float(np.max(np.abs(z))) + float(np.max(np.abs(g.grad(z[None, :])))))
    return [np.linspace(c - half, c + half, nodes) for c in z]


def sup_convolution(P: Potential, g: TestFunction, s: float, z, y_axes: Optional[Sequence] = None,
                    sweeps: int = 60) -> SupConvolution:
    """g_s(z) = max_y g(x) - t P(x) - s P(y) + P(z) with x = (z - s y)/t, t = 1 - s.

    The maximum is located on the tensor grid ``y_axes`` and refined by
    golden-section search along each coordinate inside the neighbouring
    cells.  An argmax on the grid boundary raises :class:`SupNotLocalized`.
    """
    if not 0 < s < 0.5:
        raise ValueError("s must lie in (0, 1/2)")
    z = as_points(z, P.dim).reshape(P.dim)
    F = _inner(P, g, s, z)
    axes = _default_axes(P, g, z) if y_axes is None else [np.asarray(a, float) for a in y_axes]
    if len(axes) != P.dim:
        raise ValueError("y_axes must have one axis per dimension")
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, P.dim)
    vals = F(mesh)
    k = np.unravel_index(int(np.argmax(vals)), tuple(a.size for a in axes))
    if any(i == 0 or i == a.size - 1 for i, a in zip(k, axes)):
        raise SupNotLocalized(f"inner maximizer {mesh[np.argmax(vals)].tolist()} sits on the y-grid boundary")
    y = np.array([a[i] for a, i in zip(axes, k)])
    best = float(np.max(vals))
    brackets = [(a[i - 1], a[i + 1]) for a, i in zip(axes, k)]
    for _ in range(sweeps if P.dim > 1 else 1):
        prev = best
        for d in range(P.dim):
            def line(v, d=d):
                yy = y.copy()
                yy[d] = v
                return -float(F(yy)[0])
            lo, hi = brackets[d]
            res = minimize_scalar(line, bracket=(lo, y[d], hi), method="golden", tol=1e-12)
            if -res.fun >= best and lo <= res.x <= hi:
                y[d], best = res.x, -float(res.fun)
        if P.dim > 1 and best - prev <= 1e-16 * max(1.0, abs(best)):
            break
    return SupConvolution(best, y)


@dataclass(frozen=True)
class ExpansionOrder:
    slope: Optional[float]
    errors: tuple
    s_ladder: tuple
    exact: bool


def lemma_expansion_order(P: Potential, g: TestFunction, s_ladder=(1e-2, 5e-3, 2.5e-3),
                          z_grid=None, exact_tol: float = 1e-13) -> ExpansionOrder:
    """Fit E(s) = max_z |g_s(z) - g(z) - s I(z)| ~ s^slope, I the MLSI integrand."""
    s_ladder = tuple(float(s) for s in s_ladder)
    if len(s_ladder) < 2:
        raise ValueError("need at least two s values")
    if z_grid is None:
        z_grid = np.linspace(-1.5, 1.5, 13)
    Z = as_points(z_grid, P.dim).reshape(-1, P.dim)
    first = np.asarray(mlsi_integrand(P, g, Z)).reshape(-1)
    g0 = np.asarray(g.func(Z)).reshape(-1)
    errs = []
    for s in s_ladder:
        gs = np.array([sup_convolution(P, g, s, z).value for z in Z])
        errs.append(float(np.max(np.abs(gs - g0 - s * first))))
    if max(errs) <= exact_tol:
        return ExpansionOrder(None, tuple(errs), s_ladder, True)
    slope = float(np.polyfit(np.log(s_ladder), np.log(np.maximum(errs, 1e-300)), 1)[0])
    return ExpansionOrder(slope, tuple(errs), s_ladder, False)


# --------------------------------------------------------------------------
# Prekopa-Leindler


@dataclass(frozen=True)
class PLReport:
    hypothesis_holds: bool
    lhs: float
    rhs: float
    conclusion_holds: Optional[bool]
    worst_hypothesis_gap: float
    t: float


def _grid_integral(gf: GridFunction) -> float:
    vals = np.asarray(gf.values, dtype=float)
    for ax in reversed(gf.axes):
        vals = np.trapezoid(vals, ax, axis=-1)
    return float(vals)


def _pairs(gf: GridFunction):
    return gf.points().reshape(-1, gf.dim), np.asarray(gf.values, dtype=float).reshape(-1)


def pl_check(u: GridFunction, v: GridFunction, w: GridFunction, t: float = 0.5,
             tol: float = 1e-9, chunk: int = 4096) -> PLReport:
    """Check u(x)^t v(y)^(1-t) <= w(t x + (1-t) y) on all grid pairs and compare integrals.

    w is linearly interpolated.  When the pointwise hypothesis fails no claim
    on the integrals is made (``conclusion_holds`` is None).
    """
    if not 0 < t < 1:
        raise ValueError("t must lie in (0, 1)")
    for f in (u, v, w):
        if f.dim != u.dim or any(not np.array_equal(a, b) for a, b in zip(f.axes, u.axes)):
            raise ValueError("u, v and w must share one axis set")
        if np.any(np.asarray(f.values) < 0):
            raise ValueError("Prekopa-Leindler needs nonnegative functions")
    xs, uv = _pairs(u)
    ys, vv = _pairs(v)
    worst = -math.inf
    ut, vt = uv ** t, vv ** (1.0 - t)
    for i in range(0, xs.shape[0], max(1, chunk // max(1, ys.shape[0]) or 1)):
        xi = xs[i:i + max(1, chunk // max(1, ys.shape[0]))]
        uti = ut[i:i + xi.shape[0]]
        zz = t * xi[:, None, :] + (1.0 - t) * ys[None, :, :]
        wz = w.interpolate(zz.reshape(-1, u.dim)).reshape(xi.shape[0], ys.shape[0])
        gap = uti[:, None] * vt[None, :] - wz
        worst = max(worst, float(np.max(gap - tol * np.maximum(1.0, np.abs(wz)))))
    holds = worst <= 0.0
    lhs = _grid_integral(u) ** t * _grid_integral(v) ** (1.0 - t)
    rhs = _grid_integral(w)
    conclusion = bool(lhs <= rhs + tol * max(1.0, abs(rhs))) if holds else None
    return PLReport(bool(holds), lhs, rhs, conclusion, worst, float(t))


def pl_majorant(u: GridFunction, v: GridFunction, t: float = 0.5) -> GridFunction:
    """Grid function w for which the pointwise hypothesis holds by construction.

    Each pair value u(x)^t v(y)^(1-t) is pushed onto every corner of the cell
    holding t x + (1-t) y, so the multilinear interpolant dominates it there.
    """
    xs, uv = _pairs(u)
    ys, vv = _pairs(v)
    shape = tuple(a.size for a in u.axes)
    w = np.zeros(shape)
    val = (uv[:, None] ** t) * (vv[None, :] ** (1.0 - t))
    zz = t * xs[:, None, :] + (1.0 - t) * ys[None, :, :]
    idx_lo = []
    for d, a in enumerate(u.axes):
        k = np.clip(np.searchsorted(a, zz[..., d], side="right") - 1, 0, a.size - 2)
        idx_lo.append(k)
    flat_val = val.reshape(-1)
    for corner in itertools.product((0, 1), repeat=u.dim):
        idx = tuple((k + c).reshape(-1) for k, c in zip(idx_lo, corner))
        np.maximum.at(w, idx, flat_val)
    return GridFunction(u.axes, w)


# --------------------------------------------------------------------------
# transport


@dataclass(frozen=True, eq=False)
class Coupling:
    source: np.ndarray
    source_mass: np.ndarray
    target: np.ndarray
    target_mass: np.ndarray
    plan: np.ndarray
    cost: float = math.nan
    method: str = ""
    metadata: dict = field(default_factory=dict)

    def marginal_error(self) -> float:
        return float(max(np.max(np.abs(self.plan.sum(axis=1) - self.source_mass)),
                         np.max(np.abs(self.plan.sum(axis=0) - self.target_mass))))

    def to_csv(self, path) -> None:
        """One row per positive plan entry: source coordinates, target coordinates, mass."""
        d = self.source.shape[1]
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow([f"x{i + 1}" for i in range(d)] + [f"y{i + 1}" for i in range(d)] + ["mass"])
            for i, j in zip(*np.nonzero(self.plan > 0)):
                wr.writerow([repr(float(c)) for c in self.source[i]]
                            + [repr(float(c)) for c in self.target[j]] + [repr(float(self.plan[i, j]))])


def cost_matrix(P: Potential, source, target) -> np.ndarray:
    """C[i, j] = L(x_i, y_j) with the Bregman cost of P."""
    xs = as_points(source, P.dim).reshape(-1, P.dim)
    ys = as_points(target, P.dim).reshape(-1, P.dim)
    return np.asarray(bregman_cost(P, xs[:, None, :], ys[None, :, :]), dtype=float).reshape(xs.shape[0], ys.shape[0])


def hungarian(C) -> np.ndarray:
    """Minimum-cost assignment by shortest augmenting paths with potentials, O(k^3).

    Returns ``perm`` with row i assigned to column perm[i].
    """
    C = np.asarray(C, dtype=float)
    n, m = C.shape
    if n != m:
        raise ValueError("assignment needs a square cost matrix")
    INF = math.inf
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=int)  # p[j]: row matched to column j (1-based, 0 = free)
    way = np.zeros(n + 1, dtype=int)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, INF)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used[1:]
            cur = C[i0 - 1, :] - u[i0] - v[1:]
            upd = free & (cur < minv[1:])
            minv[1:][upd] = cur[upd]
            way[1:][upd] = j0
            cand = np.where(free, minv[1:], INF)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            u[p[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    perm = np.empty(n, dtype=int)
    for j in range(1, n + 1):
        perm[p[j] - 1] = j - 1
    return perm


def exhaustive_assignment(C) -> np.ndarray:
    """Brute-force optimal assignment: permutations up to 8, bitmask DP up to 12."""
    C = np.asarray(C, dtype=float)
    n = C.shape[0]
    if C.shape != (n, n):
        raise ValueError("assignment needs a square cost matrix")
    if n > 12:
        raise CapacityError("exhaustive assignment is limited to 12 points")
    if n <= 8:
        best, best_perm = math.inf, None
        for perm in itertools.permutations(range(n)):
            c = math.fsum(C[i, perm[i]] for i in range(n))
            if c < best:
                best, best_perm = c, perm
        return np.array(best_perm, dtype=int)
    # dp over subsets of used columns; row index = popcount(mask)
    size = 1 << n
    dp = np.full(size, math.inf)
    choice = np.full(size, -1, dtype=int)
    dp[0] = 0.0
    for mask in range(size):
        if not math.isfinite(dp[mask]):
            continue
        i = bin(mask).count("1")
        if i == n:
            continue
        for j in range(n):
            if not mask >> j & 1:
                nm = mask | 1 << j
                val = dp[mask] + C[i, j]
                if val < dp[nm]:
                    dp[nm], choice[nm] = val, j
    perm = np.empty(n, dtype=int)
    mask = size - 1
    for i in range(n - 1, -1, -1):
        j = choice[mask]
        perm[i] = j
        mask ^= 1 << j
    return perm


def _assignment_cost(C, perm) -> float:
    return math.fsum(C[i, perm[i]] for i in range(len(perm)))


def optimal_coupling(P: Potential, source, target, source_mass=None, target_mass=None,
                     method: str = "auto", mass_tol: float = 1e-9) -> Coupling:
    """Exact discrete optimal transport for the Bregman cost of ``P``.

    ``method``: "assignment" (equal masses, at most 256 points), "exhaustive"
    (equal masses, at most 12 points), "lp" (any masses) or "auto".
    """
    xs = as_points(source, P.dim).reshape(-1, P.dim)
    ys = as_points(target, P.dim).reshape(-1, P.dim)
    a = np.full(xs.shape[0], 1.0 / xs.shape[0]) if source_mass is None else np.asarray(source_mass, float)
    b = np.full(ys.shape[0], 1.0 / ys.shape[0]) if target_mass is None else np.asarray(target_mass, float)
    if np.any(a < 0) or np.any(b < 0):
        raise ValueError("masses must be nonnegative")
    if abs(a.sum() - b.sum()) > mass_tol * max(1.0, a.sum()):
        raise ValueError(f"total masses differ: {a.sum()!r} vs {b.sum()!r}")
    C = cost_matrix(P, xs, ys)
    equal = (xs.shape[0] == ys.shape[0] and np.allclose(a, a[0], rtol=0, atol=1e-15)
             and np.allclose(b, a[0], rtol=0, atol=1e-15))
    if method == "auto":
        method = "assignment" if equal and xs.shape[0] <= 256 else "lp"
    if method in ("assignment", "exhaustive"):
        if not equal:
            raise ValueError(f"{method} path needs equal point counts and equal masses")
        if method == "assignment" and xs.shape[0] > 256:
            raise CapacityError("assignment path is limited to 256 points")
        perm = hungarian(C) if method == "assignment" else exhaustive_assignment(C)
        plan = np.zeros_like(C)
        plan[np.arange(len(perm)), perm] = a[0]
        cost = a[0] * _assignment_cost(C, perm)
    elif method == "lp":
        n, m = C.shape
        A_eq = np.zeros((n + m, n * m))
        for i in range(n):
            A_eq[i, i * m:(i + 1) * m] = 1.0
        for j in range(m):
            A_eq[n + j, j::m] = 1.0
        res = linprog(C.ravel(), A_eq=A_eq, b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs")
        if not res.success:
            raise RuntimeError(f"transport LP failed: {res.message}")
        plan = np.maximum(res.x.reshape(n, m), 0.0)
        cost = math.fsum((plan * C).ravel())
    else:
        raise ValueError(f"unknown method {method!r}")
    return Coupling(xs, a, ys, b, plan, float(cost), method)


def wasserstein_L(P: Potential, source, target, source_mass=None, target_mass=None,
                  method: str = "auto") -> float:
    """Optimal total Bregman cost between two weighted point sets."""
    return optimal_coupling(P, source, target, source_mass, target_mass, method).cost


def quantile_points(density_values: np.ndarray, axis: np.ndarray, k: int) -> np.ndarray:
    """Points at the (i + 1/2)/k quantiles of a nonnegative density sampled on ``axis``.

    The density is taken piecewise linear between nodes, so the CDF is
    piecewise quadratic and each quantile is a root of a quadratic inside its cell.
    """
    f = np.asarray(density_values, dtype=float)
    x = np.asarray(axis, dtype=float)
    if f.shape != x.shape or np.any(f < 0):
        raise ValueError("density must be nonnegative and sampled on the axis")
    h = np.diff(x)
    cell = 0.5 * (f[1:] + f[:-1]) * h
    cdf = np.concatenate([[0.0], np.cumsum(cell)])
    total = cdf[-1]
    targets = (np.arange(k) + 0.5) / k * total
    j = np.clip(np.searchsorted(cdf, targets, side="right") - 1, 0, len(h) - 1)
    r = targets - cdf[j]
    f0, f1, hj = f[j], f[j + 1], h[j]
    slope = (f1 - f0) / hj
    # solve f0 d + slope d^2 / 2 = r for d in [0, h]
    with np.errstate(divide="ignore", invalid="ignore"):
        disc = np.sqrt(np.maximum(f0 * f0 + 2.0 * slope * r, 0.0))
        d_quad = 2.0 * r / (f0 + disc)
    d = np.where(np.abs(slope) * hj > 1e-14 * np.maximum(f0, 1e-300), d_quad, r / np.where(f0 > 0, f0, 1.0))
    return x[j] + np.clip(d, 0.0, hj)


def _transport_sides(P: Potential, F: Callable, rule: QuadratureRule, k: int):
    w = measure_weights(P, rule)
    fv = np.asarray(F(rule.nodes), dtype=float).reshape(-1)
    if np.any(fv < 0) or not np.all(np.isfinite(fv)):
        raise ValueError("F must be a finite nonnegative density")
    mass = math.fsum(w * fv)
    if abs(mass - 1.0) > 1e-6:
        raise ValueError(f"F is not normalized against mu (integral {mass:.8g})")
    with np.errstate(divide="ignore", invalid="ignore"):
        flogf = np.where(fv > 0, fv * np.log(np.where(fv > 0, fv, 1.0)), 0.0)
    rhs = math.fsum(w * flogf)
    axis = rule.axes[0]
    mu_dens = np.exp(-(P.func(rule.nodes) - np.min(P.func(rule.nodes)))).reshape(-1)
    src = quantile_points(mu_dens * fv, axis, k)
    tgt = quantile_points(mu_dens, axis, k)
    lhs = wasserstein_L(P, src, tgt)
    return lhs, rhs


def check_transport(P: Potential, F: Callable, rule: QuadratureRule, k: int = 64) -> DeficitReport:
    """W_L(F dmu, dmu) <= Ent_mu(F) with k-point quantile discretizations (1-D).

    The discretization allowance |lhs(k) - lhs(k/2)| widens the tolerance and
    is recorded in the metadata.
    """
    if P.dim != 1:
        raise CapacityError("transport check is one-dimensional")
    if k < 2:
        raise ValueError("need at least two sample points")
    lhs, rhs = _transport_sides(P, F, rule, k)
    lhs_half, _ = _transport_sides(P, F, rule, k // 2)
    cl, cr = _transport_sides(P, F, rule.coarsen(), k)
    allowance = abs(lhs - lhs_half)
    tol = max(_tolerance(rhs - lhs, cr - cl), allowance)
    meta = {"k": int(k), "allowance": allowance, "lhs_half_k": lhs_half,
            "resolution": int(rule.resolution[0]), "tol_floor": TOL_FLOOR}
    return DeficitReport("transport", lhs, rhs, tol, meta)
