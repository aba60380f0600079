"""Convex potentials, their Legendre-Fenchel conjugates and the Bregman cost.

A :class:`Potential` bundles a strictly convex function on R^n with its
gradient and, when known, Hessian and conjugate.  All callables are
vectorised over leading axes: they take arrays of shape ``(..., n)`` and
return ``(...)`` (values), ``(..., n)`` (gradients) or ``(..., n, n)``
(Hessians).

Conjugates come from two places.  The Gaussian and power families carry
closed forms.  Everything else gets a grid conjugate via
:func:`attach_numeric_conjugate`: the discrete transform certifies a dual
range and seeds a per-point polish (bisection in 1-D, damped Newton in 2-D),
so values are exact up to rounding inside the certified range and refused
outside it.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline, RegularGridInterpolator

from .errors import CapacityError, NoAnalyticConjugate, UntrustedDualRange

__all__ = [
    "Potential",
    "GridFunction",
    "as_points",
    "make_builtin_potential",
    "gaussian_potential",
    "power_potential",
    "powerlog_potential",
    "interaction_potential",
    "grid_potential",
    "conjugate_analytic",
    "discrete_legendre_1d",
    "conjugate_nd",
    "attach_numeric_conjugate",
    "ensure_conjugate",
    "bregman_cost",
    "verify_potential",
]

KINDS = ("gaussian", "power", "powerlog", "interaction", "custom-grid")

LOG_2PI = math.log(2.0 * math.pi)


def as_points(x, dim: int) -> np.ndarray:
    """Coerce ``x`` to a float array whose last axis has length ``dim``.

    For ``dim == 1`` a bare scalar or a 1-D array of samples is accepted and
    gets a trailing unit axis.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    if x.shape[-1] != dim:
        if dim == 1:
            x = x[..., None]
        else:
            raise ValueError(f"expected points with last axis {dim}, got shape {x.shape}")
    return x


def _unwrap(value):
    # scalar in, scalar out
    return float(value) if np.ndim(value) == 0 else value


@dataclass(frozen=True, eq=False)
class Potential:
    """A strictly convex potential on R^n.

    ``log_partition`` is the constant already folded into ``func``: after
    :func:`mlsi_lab.quadrature.normalize` it equals log Z, and
    ``raw_value`` recovers the un-normalized function.
    """

    dim: int
    func: Callable
    grad: Callable
    hess: Optional[Callable] = None
    conjugate: Optional[Callable] = None
    conjugate_grad: Optional[Callable] = None
    log_partition: float = 0.0
    homogeneity_degree: Optional[float] = None
    kind: str = "custom-grid"
    params: dict = field(default_factory=dict)
    conjugate_kind: Optional[str] = None
    dual_range: Optional[tuple] = None
    even: bool = False

    def __post_init__(self):
        if int(self.dim) < 1:
            raise ValueError("dim must be a positive integer")
        if self.kind not in KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if self.conjugate is not None and self.conjugate_kind is None:
            object.__setattr__(self, "conjugate_kind", "analytic")

    def value(self, x):
        return _unwrap(self.func(as_points(x, self.dim)))

    def gradient(self, x):
        x = as_points(x, self.dim)
        return self.grad(x)

    def hessian(self, x):
        if self.hess is None:
            raise ValueError(f"{self.kind} potential has no Hessian")
        return self.hess(as_points(x, self.dim))

    def raw_value(self, x):
        return self.value(x) - self.log_partition

    @property
    def has_conjugate(self) -> bool:
        return self.conjugate is not None

    def conj(self, y):
        if self.conjugate is None:
            raise NoAnalyticConjugate(
                f"{self.kind} potential carries no conjugate; attach a numeric one first")
        return _unwrap(self.conjugate(as_points(y, self.dim)))

    def conj_grad(self, y):
        if self.conjugate_grad is None:
            raise NoAnalyticConjugate(f"{self.kind} potential carries no conjugate gradient")
        return self.conjugate_grad(as_points(y, self.dim))

    def raw_conj(self, y):
        """Conjugate of the un-normalized function ``raw_value``."""
        return self.conj(y) + self.log_partition

    def shifted(self, c: float) -> "Potential":
        """Return ``self + c``; the conjugate moves by ``-c``."""
        c = float(c)
        func, conj = self.func, self.conjugate
        return dataclasses.replace(
            self,
            func=lambda x: func(x) + c,
            conjugate=None if conj is None else (lambda y: conj(y) - c),
            log_partition=self.log_partition + c,
        )

    def raw(self) -> "Potential":
        return self.shifted(-self.log_partition) if self.log_partition else self


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Function values on a rectangular tensor grid."""

    axes: tuple
    values: np.ndarray

    def __post_init__(self):
        axes = tuple(np.asarray(a, dtype=float).ravel() for a in self.axes)
        values = np.asarray(self.values, dtype=float)
        if not axes:
            raise ValueError("GridFunction needs at least one axis")
        for a in axes:
            if a.size == 0:
                raise ValueError("empty grid axis")
            if a.size > 1 and np.any(np.diff(a) <= 0):
                raise ValueError("grid axes must be strictly increasing")
        if values.shape != tuple(a.size for a in axes):
            raise ValueError(
                f"values shape {values.shape} does not match axes {[a.size for a in axes]}")
        if not np.all(np.isfinite(values)):
            raise ValueError("GridFunction values must be finite")
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return len(self.axes)

    @classmethod
    def sample(cls, f: Callable, axes: Sequence) -> "GridFunction":
        """Evaluate a vectorised ``f`` on the tensor product of ``axes``."""
        axes = [np.asarray(a, dtype=float) for a in axes]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        return cls(tuple(axes), np.asarray(f(mesh), dtype=float).reshape(mesh.shape[:-1]))

    def points(self) -> np.ndarray:
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    def interpolate(self, x) -> np.ndarray:
        """Multilinear interpolation; raises outside the grid box."""
        x = as_points(x, self.dim)
        for i, a in enumerate(self.axes):
            if np.any(x[..., i] < a[0] - 1e-12 * (1 + abs(a[0]))) or np.any(
                    x[..., i] > a[-1] + 1e-12 * (1 + abs(a[-1]))):
                raise ValueError("interpolation point outside the grid box")
        if self.dim == 1:
            return np.interp(x[..., 0], self.axes[0], self.values)
        interp = RegularGridInterpolator(self.axes, self.values, bounds_error=False, fill_value=None)
        return interp(x.reshape(-1, self.dim)).reshape(x.shape[:-1])

    def to_csv(self, path) -> None:
        pts = self.points().reshape(-1, self.dim)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i + 1}" for i in range(self.dim)] + ["value"])
            for p, v in zip(pts, self.values.ravel()):
                w.writerow([repr(float(c)) for c in p] + [repr(float(v))])

    @classmethod
    def from_csv(cls, path) -> "GridFunction":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], np.array(rows[1:], dtype=float)
        dim = len(header) - 1
        axes = tuple(np.unique(body[:, i]) for i in range(dim))
        shape = tuple(a.size for a in axes)
        if body.shape[0] != math.prod(shape):
            raise ValueError("CSV rows do not form a complete tensor grid")
        values = np.empty(shape)
        idx = tuple(np.searchsorted(a, body[:, i]) for i, a in enumerate(axes))
        values[idx] = body[:, -1]
        return cls(axes, values)


# --------------------------------------------------------------------------
# built-in families


def gaussian_potential(dim: int = 1) -> Potential:
    """Standard Gaussian potential |x|^2/2 + (n/2) log 2 pi (already normalized)."""
    c = 0.5 * dim * LOG_2PI
    eye = np.eye(dim)
    return Potential(
        dim=dim,
        func=lambda x: 0.5 * np.sum(x * x, axis=-1) + c,
        grad=lambda x: np.array(x, dtype=float, copy=True),
        hess=lambda x: np.broadcast_to(eye, x.shape[:-1] + (dim, dim)).copy(),
        conjugate=lambda y: 0.5 * np.sum(y * y, axis=-1) - c,
        conjugate_grad=lambda y: np.array(y, dtype=float, copy=True),
        log_partition=c,
        homogeneity_degree=2.0,
        kind="gaussian",
        params={"dim": dim},
        even=True,
    )


def _safe_pow_norm(r, e):
    # r**e with 0**e := 0 for e > 0 and the limit 0 * inf := 0 handled by callers
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.power(r, e)
    return np.where(r > 0, out, 0.0 if e > 0 else (1.0 if e == 0 else np.inf))


def power_potential(p: float, dim: int = 1, coef: float = 1.0) -> Potential:
    """``coef * |x|^p / p`` with conjugate ``coef^(1-q) |y|^q / q``, 1/p + 1/q = 1."""
    p, coef = float(p), float(coef)
    if not p > 1:
        raise ValueError("p must exceed 1")
    if not coef > 0:
        raise ValueError("coef must be positive")
    q = p / (p - 1.0)
    kc = coef ** (1.0 - q)

    def func(x):
        r = np.linalg.norm(x, axis=-1)
        return coef * _safe_pow_norm(r, p) / p

    def grad(x):
        r = np.linalg.norm(x, axis=-1)
        scale = coef * _safe_pow_norm(r, p - 2.0)
        scale = np.where(r > 0, scale, 0.0)
        return scale[..., None] * x

    def hess(x):
        r = np.linalg.norm(x, axis=-1)
        eye = np.eye(dim)
        with np.errstate(divide="ignore", invalid="ignore"):
            u = np.where(r[..., None] > 0, x / np.where(r > 0, r, 1.0)[..., None], 0.0)
        outer = u[..., :, None] * u[..., None, :]
        rp = _safe_pow_norm(r, p - 2.0)
        return coef * rp[..., None, None] * (eye + (p - 2.0) * outer)

    def conj(y):
        r = np.linalg.norm(y, axis=-1)
        return kc * _safe_pow_norm(r, q) / q

    def conj_grad(y):
        r = np.linalg.norm(y, axis=-1)
        scale = np.where(r > 0, kc * _safe_pow_norm(r, q - 2.0), 0.0)
        return scale[..., None] * y

    return Potential(
        dim=dim, func=func, grad=grad, hess=hess, conjugate=conj, conjugate_grad=conj_grad,
        homogeneity_degree=p, kind="power", params={"p": p, "dim": dim, "coef": coef},
        even=True,
    )


def powerlog_potential(a: float, b: float = 0.0) -> Potential:
    """1-D potential equal to |x|^a log^b |x| for |x| >= 2.

    On [-2, 2] it is the power patch ``c |x|^r`` whose value and slope match
    the outer branch at 2, i.e. ``r = a + b / log 2``.  The patch is convex,
    vanishes at 0 and makes the whole function C^1; it needs ``r > 1``.
    """
    a, b = float(a), float(b)
    if not a > 1:
        raise ValueError("powerlog requires a > 1")
    L2 = math.log(2.0)
    r = a + b / L2
    if not r > 1:
        raise ValueError("powerlog patch exponent a + b/log 2 must exceed 1 for a convex C^1 completion")
    c = 2.0 ** a * L2 ** b / 2.0 ** r

    def split(x):
        t = np.abs(x[..., 0])
        outer = t >= 2.0
        to = np.where(outer, t, 2.0)
        lo = np.log(to)
        return t, outer, to, lo

    def func(x):
        t, outer, to, lo = split(x)
        return np.where(outer, to ** a * lo ** b, c * t ** r)

    def grad(x):
        t, outer, to, lo = split(x)
        g_out = to ** (a - 1.0) * lo ** (b - 1.0) * (a * lo + b)
        g_in = c * r * _safe_pow_norm(t, r - 1.0)
        return (np.sign(x[..., 0]) * np.where(outer, g_out, g_in))[..., None]

    def hess(x):
        t, outer, to, lo = split(x)
        h_out = to ** (a - 2.0) * lo ** (b - 2.0) * (
            a * (a - 1.0) * lo * lo + (2.0 * a - 1.0) * b * lo + b * (b - 1.0))
        h_in = c * r * (r - 1.0) * _safe_pow_norm(t, r - 2.0)
        return np.where(outer, h_out, h_in)[..., None, None]

    return Potential(dim=1, func=func, grad=grad, hess=hess, kind="powerlog",
                     params={"a": a, "b": b, "patch_exponent": r, "patch_coef": c}, even=True)


def _quartic_h(c2: float, c4: float) -> Potential:
    return Potential(
        dim=1,
        func=lambda x: c2 * x[..., 0] ** 2 + c4 * x[..., 0] ** 4,
        grad=lambda x: 2.0 * c2 * x + 4.0 * c4 * x ** 3,
        hess=lambda x: (2.0 * c2 + 12.0 * c4 * x[..., 0] ** 2)[..., None, None],
        kind="power", params={"c2": c2, "c4": c4}, even=True,
    )


def interaction_potential(dim: int = 2, h: Optional[Potential] = None,
                          h_quadratic: float = 1.5, h_quartic: float = 0.25,
                          seed: int = 0) -> Potential:
    """Cyclic chain sum_i (x_i x_{i+1} + h(x_i)) with x_{n+1} = x_1.

    ``h`` defaults to ``h_quadratic x^2 + h_quartic x^4``.  The assembled
    function is probed for convexity and rejected when the probe fails.
    """
    if h is None:
        if not h_quartic > 0:
            raise ValueError("interaction h needs superquadratic growth (h_quartic > 0)")
        h = _quartic_h(float(h_quadratic), float(h_quartic))
        hparams = {"h_quadratic": float(h_quadratic), "h_quartic": float(h_quartic)}
    else:
        if h.dim != 1:
            raise ValueError("interaction h must be one-dimensional")
        radii = np.array([10.0, 100.0, 1000.0])
        ratio = h.raw_value(radii) / radii ** 2
        if not (np.all(np.diff(ratio) > 0) and ratio[-1] > 10 * max(ratio[0], 1e-300)):
            raise ValueError("interaction h must grow faster than x^2")
        hparams = {"h": h.kind, **h.params}
    adj = np.zeros((dim, dim))
    for i in range(dim):
        adj[i, (i + 1) % dim] += 1.0
        adj[i, (i - 1) % dim] += 1.0

    def func(x):
        return np.sum(x * np.roll(x, -1, axis=-1), axis=-1) + np.sum(h.raw_value(x[..., None]), axis=-1)

    def grad(x):
        return np.roll(x, -1, axis=-1) + np.roll(x, 1, axis=-1) + h.grad(x[..., None])[..., 0]

    def _hess(x):
        d = h.hess(x[..., None])[..., 0, 0]
        return adj + d[..., None] * np.eye(dim)

    hess = _hess if h.hess is not None else None

    pot = Potential(dim=dim, func=func, grad=grad, hess=hess, kind="interaction",
                    params={"dim": dim, **hparams}, even=True)
    report = verify_potential(pot, radius=3.0, seed=seed)
    if not report["convex"]:
        raise ValueError("interaction potential fails the convexity probe "
                         f"(worst midpoint excess {report['midpoint_excess']:.3g})")
    return pot


def grid_potential(gf: GridFunction) -> Potential:
    """1-D potential from sampled values through a C^2 cubic spline."""
    if gf.dim != 1:
        raise CapacityError("custom-grid potentials are one-dimensional")
    spline = CubicSpline(gf.axes[0], gf.values, bc_type="not-a-knot", extrapolate=True)
    d1, d2 = spline.derivative(1), spline.derivative(2)
    return Potential(
        dim=1,
        func=lambda x: spline(x[..., 0]),
        grad=lambda x: d1(x[..., 0])[..., None],
        hess=lambda x: d2(x[..., 0])[..., None, None],
        kind="custom-grid",
        params={"nodes": int(gf.axes[0].size)},
    )


def make_builtin_potential(kind: str, dim: int = 1, seed: int = 0, **params) -> Potential:
    """Build one of the catalogued potentials and check its invariants.

    ``kind`` is one of gaussian, power (p, coef), powerlog (a, b; 1-D),
    interaction (h or h_quadratic/h_quartic) or custom-grid (grid).
    """
    dim = int(dim)
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if kind == "gaussian":
        pot = gaussian_potential(dim)
    elif kind == "power":
        pot = power_potential(params.pop("p"), dim, params.pop("coef", 1.0))
    elif kind == "powerlog":
        if dim != 1:
            raise ValueError("powerlog is defined on the real line only")
        pot = powerlog_potential(params.pop("a"), params.pop("b", 0.0))
    elif kind == "interaction":
        return interaction_potential(dim, seed=seed, **params)
    elif kind == "custom-grid":
        pot = grid_potential(params.pop("grid"))
    else:
        raise ValueError(f"unknown potential kind {kind!r}")
    if params:
        raise TypeError(f"unexpected parameters for {kind}: {sorted(params)}")
    report = verify_potential(pot, seed=seed)
    failed = [k for k in ("convex", "gradient_ok", "superlinear", "fenchel_young_ok")
              if report.get(k) is False]
    if failed:
        raise ValueError(f"{kind} potential failed invariant probes: {failed}")
    return pot


def verify_potential(P: Potential, radius: float = 4.0, samples: int = 2000,
                     seed: int = 0, tol: float = 1e-9, tol_fd: float = 1e-5) -> dict:
    """Probabilistic checks of the Potential invariants.

    Midpoint convexity on random pairs, central-difference gradients,
    growth of (P(R u) - P(0))/R along a radius ladder and, when a conjugate
    is attached, the Fenchel-Young equality.
    """
    rng = np.random.default_rng(seed)
    n = P.dim
    x = rng.uniform(-radius, radius, size=(samples, n))
    y = rng.uniform(-radius, radius, size=(samples, n))
    # pairs near the origin catch curvature defects that wide pairs average out
    x[: samples // 4] *= 0.1
    y[: samples // 4] *= 0.1
    fx, fy, fm = P.func(x), P.func(y), P.func(0.5 * (x + y))
    scale = 1.0 + np.abs(fx) + np.abs(fy)
    excess = fm - 0.5 * (fx + fy)
    out = {"midpoint_excess": float(np.max(excess / scale))}
    out["convex"] = bool(np.all(excess <= tol * scale))

    pts = x[:200]
    h = 1e-5 * (1.0 + np.max(np.abs(pts)))
    fd = np.empty_like(pts)
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        fd[:, i] = (P.func(pts + e) - P.func(pts - e)) / (2 * h)
    g = P.grad(pts)
    err = np.max(np.abs(fd - g) / (1.0 + np.abs(g)))
    out["gradient_error"] = float(err)
    out["gradient_ok"] = bool(err <= tol_fd)

    dirs = rng.normal(size=(16, n))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = 2.0 ** np.arange(0, 11)
    f0 = P.func(np.zeros((1, n)))[0]
    ratios = (P.func(radii[:, None, None] * dirs[None]) - f0) / radii[:, None]
    out["superlinear"] = bool(np.all(np.diff(ratios, axis=0) > 0)
                              and np.all(ratios[-1] > 2.0 * ratios[0]))

    if P.conjugate is not None and P.conjugate_kind == "analytic":
        gx = P.grad(pts)
        gap = P.func(pts) + P.conjugate(gx) - np.sum(pts * gx, axis=-1)
        fy_scale = 1.0 + np.abs(np.sum(pts * gx, axis=-1))
        out["fenchel_young_gap"] = float(np.max(np.abs(gap) / fy_scale))
        out["fenchel_young_ok"] = bool(out["fenchel_young_gap"] <= 1e-10)
        if P.conjugate_grad is not None:
            back = P.conjugate_grad(gx)
            out["gradient_inverse_error"] = float(np.max(np.abs(back - pts)))
    return out


# --------------------------------------------------------------------------
# conjugates


def conjugate_analytic(P: Potential, y):
    """Closed-form conjugate; only the gaussian and power families have one."""
    if P.conjugate is None or P.conjugate_kind != "analytic":
        raise NoAnalyticConjugate(f"{P.kind} potential has no analytic conjugate")
    return P.conj(y)


def _lower_hull(x: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Indices of the lower convex hull of the points (x_i, f_i), x increasing."""
    hull = []
    for i in range(x.size):
        while len(hull) >= 2:
            j, k = hull[-2], hull[-1]
            # drop k when it lies on or above the chord j -> i
            if (f[k] - f[j]) * (x[i] - x[j]) >= (f[i] - f[j]) * (x[k] - x[j]):
                hull.pop()
            else:
                break
        hull.append(i)
    return np.asarray(hull, dtype=int)


def _legendre_1d_argmax(x: np.ndarray, f: np.ndarray, s: np.ndarray, method: str) -> np.ndarray:
    if method == "brute":
        return np.argmax(s[:, None] * x[None, :] - f[None, :], axis=1)
    if method != "fast":
        raise ValueError(f"unknown method {method!r}")
    hull = _lower_hull(x, f)
    slopes = np.diff(f[hull]) / np.diff(x[hull])
    order = np.argsort(s, kind="stable")
    out = np.empty(s.size, dtype=int)
    k = 0
    # sorted dual slopes walk the hull once
    for idx in order:
        while k < slopes.size and slopes[k] < s[idx]:
            k += 1
        out[idx] = hull[k]
    return out


def discrete_legendre_1d(f: GridFunction, dual_axis, method: str = "fast",
                         return_argmax: bool = False):
    """Discrete conjugate ``s -> max_i (s x_i - f_i)`` of a 1-D grid function.

    ``method="fast"`` runs the lower-hull / sorted-slope merge in linear time
    after sorting; ``method="brute"`` maximises over every node.
    """
    if f.dim != 1:
        raise ValueError("discrete_legendre_1d needs a 1-D GridFunction")
    s = np.asarray(dual_axis, dtype=float).ravel()
    if s.size == 0:
        raise ValueError("empty dual axis")
    x, vals = f.axes[0], f.values
    arg = _legendre_1d_argmax(x, vals, s, method)
    out = GridFunction((s,), s * x[arg] - vals[arg])
    return (out, x[arg]) if return_argmax else out


def conjugate_nd(f: GridFunction, dual_axes: Sequence, separable: Optional[Sequence[GridFunction]] = None,
                 method: str = "brute", chunk: int = 2048):
    """Discrete conjugate of an n-D grid function on a tensor dual grid.

    ``separable`` declares f(x) = sum_i f_i(x_i); the conjugate is then the
    outer sum of 1-D transforms and any n works.  Otherwise ``method`` is
    ``"brute"`` (max over all node pairs) or ``"factorized"`` (1-D transforms
    axis by axis, which visits the same maximum); both are limited to n <= 2.
    """
    dual_axes = [np.asarray(a, dtype=float).ravel() for a in dual_axes]
    if separable is not None:
        if len(separable) != len(dual_axes):
            raise ValueError("one separable factor per dual axis")
        total = np.zeros(tuple(a.size for a in dual_axes))
        for i, (fi, ai) in enumerate(zip(separable, dual_axes)):
            ci = discrete_legendre_1d(fi, ai).values
            shape = [1] * len(dual_axes)
            shape[i] = ai.size
            total = total + ci.reshape(shape)
        return GridFunction(tuple(dual_axes), total)
    if f.dim != len(dual_axes):
        raise ValueError("dual axes must match the grid dimension")
    if f.dim > 2:
        raise CapacityError("non-separable discrete conjugation is limited to n <= 2")
    if f.dim == 1:
        return discrete_legendre_1d(f, dual_axes[0], method="fast" if method == "factorized" else "brute")
    if method == "factorized":
        x1, x2 = f.axes
        y1, y2 = dual_axes
        # inner[i, j] = max_k (y1_i x1_k - f(x1_k, x2_j)); then maximize over x2_j
        inner = np.stack([discrete_legendre_1d(GridFunction((x1,), f.values[:, j]), y1,
                                               method="fast").values
                          for j in range(x2.size)], axis=1)
        res = np.max(y2[None, :, None] * x2[None, None, :] + inner[:, None, :], axis=2)
        return GridFunction(tuple(dual_axes), res)
    if method != "brute":
        raise ValueError(f"unknown method {method!r}")
    values, _ = _brute_2d(f, dual_axes, chunk)
    return GridFunction(tuple(dual_axes), values)


def _brute_2d(f: GridFunction, dual_axes, chunk=2048):
    pts = f.points().reshape(-1, 2)
    fv = f.values.ravel()
    dual = np.stack(np.meshgrid(*dual_axes, indexing="ij"), axis=-1).reshape(-1, 2)
    best = np.empty(dual.shape[0])
    arg = np.empty(dual.shape[0], dtype=int)
    for start in range(0, dual.shape[0], chunk):
        d = dual[start:start + chunk]
        scores = d @ pts.T - fv[None, :]
        arg[start:start + chunk] = np.argmax(scores, axis=1)
        best[start:start + chunk] = scores[np.arange(d.shape[0]), arg[start:start + chunk]]
    shape = tuple(a.size for a in dual_axes)
    return best.reshape(shape), pts[arg].reshape(shape + (2,))


@dataclass(frozen=True, eq=False)
class _NumericConjugate:
    """Grid-certified conjugate of a 1-D or 2-D potential."""

    potential: Potential
    primal_lo: np.ndarray
    primal_hi: np.ndarray
    dual_lo: np.ndarray
    dual_hi: np.ndarray
    table: GridFunction
    argmax: np.ndarray
    refine: bool
    table_primal: Optional[np.ndarray] = None
    table_grad: Optional[np.ndarray] = None

    def _check(self, y):
        bad = np.any((y < self.dual_lo) | (y > self.dual_hi), axis=-1)
        if np.any(bad):
            where = y[bad][0]
            raise UntrustedDualRange(
                f"conjugate requested at {where.tolist()} outside the certified dual range "
                f"[{self.dual_lo.tolist()}, {self.dual_hi.tolist()}]")

    def maximizer(self, y):
        y = as_points(y, self.potential.dim)
        self._check(y)
        if self.potential.dim == 1:
            return self._bisect(y)
        return self._newton(y)

    def _bisect(self, y):
        P = self.potential
        xs = self.table_primal
        gs = self.table_grad
        yv = y[..., 0]
        k = np.clip(np.searchsorted(gs, yv, side="left"), 1, gs.size - 1)
        lo, hi = xs[k - 1].copy(), xs[k].copy()
        for _ in range(64):
            mid = 0.5 * (lo + hi)
            gm = P.grad(mid[..., None])[..., 0]
            below = gm < yv
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return (0.5 * (lo + hi))[..., None]

    def _newton(self, y):
        P = self.potential
        flat = y.reshape(-1, P.dim)
        x = self._seed(flat)
        obj = lambda z, yy: P.func(z) - np.sum(z * yy, axis=-1)
        for _ in range(100):
            r = P.grad(x) - flat
            if np.max(np.abs(r) / (1.0 + np.abs(flat))) < 1e-13:
                break
            H = P.hess(x) if P.hess is not None else _fd_hessian(P, x)
            step = np.linalg.solve(H, r[..., None])[..., 0]
            t = np.ones(x.shape[0])
            f0 = obj(x, flat)
            for _ in range(40):
                cand = x - t[:, None] * step
                worse = obj(cand, flat) > f0 + 1e-15 * (1 + np.abs(f0))
                if not np.any(worse):
                    break
                t = np.where(worse, 0.5 * t, t)
            x = x - t[:, None] * step
        if np.any(x < self.primal_lo - 1e-9) or np.any(x > self.primal_hi + 1e-9):
            raise UntrustedDualRange("conjugate maximizer left the primal grid box")
        return x.reshape(y.shape)

    def _seed(self, flat):
        # nearest dual node's discrete argmax
        idx = []
        for i, a in enumerate(self.table.axes):
            idx.append(np.clip(np.rint((flat[:, i] - a[0]) / (a[1] - a[0])).astype(int), 0, a.size - 1))
        return self.argmax[tuple(idx)].copy()

    def __call__(self, y):
        y = as_points(y, self.potential.dim)
        if not self.refine:
            self._check(y)
            return self.table.interpolate(y)
        x = self.maximizer(y)
        return np.sum(x * y, axis=-1) - self.potential.func(x)

    def gradient(self, y):
        return self.maximizer(y)


def _fd_hessian(P: Potential, x, h=1e-6):
    n = P.dim
    H = np.empty(x.shape[:-1] + (n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        H[..., i] = (P.grad(x + e) - P.grad(x - e)) / (2 * h)
    return 0.5 * (H + np.swapaxes(H, -1, -2))


def attach_numeric_conjugate(P: Potential, radius, nodes: Optional[int] = None,
                             refine: bool = True) -> Potential:
    """Return ``P`` with a grid-certified numeric conjugate attached.

    The primal grid is the box ``[-radius, radius]^n``.  Its discrete
    transform is tabulated on the dual box spanned by the gradient over the
    primal grid; requests outside that dual box raise
    :class:`UntrustedDualRange`.  With ``refine`` the tabulated argmax seeds
    an exact per-point solve of grad P(x) = y; without it the table is
    interpolated piecewise-linearly.
    """
    n = P.dim
    if n > 2:
        raise CapacityError("numeric conjugates are limited to n <= 2")
    radius = np.broadcast_to(np.asarray(radius, dtype=float), (n,)).copy()
    if nodes is None:
        nodes = 4001 if n == 1 else 161
    axes = [np.linspace(-r, r, nodes) for r in radius]
    gf = GridFunction.sample(P.func, axes)
    mesh = gf.points()
    grads = P.grad(mesh)
    dual_lo = np.array([grads[..., i].min() for i in range(n)])
    dual_hi = np.array([grads[..., i].max() for i in range(n)])
    if n == 1:
        gs = grads[..., 0]
        if np.any(np.diff(gs) <= 0):
            raise ValueError("gradient is not strictly increasing on the primal grid")
        # dual nodes at the primal gradients make the table exact at nodes
        table, argmax = discrete_legendre_1d(gf, gs, method="fast", return_argmax=True)
        table_dual = GridFunction((gs,), table.values)
        nc = _NumericConjugate(P, -radius, radius, dual_lo, dual_hi, table_dual,
                               argmax[:, None], refine, table_primal=axes[0], table_grad=gs)
    else:
        # certified range: the largest dual box whose discrete argmax stays interior
        dual_axes = [np.linspace(lo, hi, nodes) for lo, hi in zip(dual_lo, dual_hi)]
        vals, argmax = _brute_2d(gf, dual_axes)
        interior = np.all((argmax > -radius + 1e-12) & (argmax < radius - 1e-12), axis=-1)
        lo, hi = _interior_box(interior, dual_axes)
        dual_lo, dual_hi = lo, hi
        nc = _NumericConjugate(P, -radius, radius, dual_lo, dual_hi,
                               GridFunction(tuple(dual_axes), vals), argmax, refine)
    return dataclasses.replace(
        P, conjugate=nc, conjugate_grad=nc.gradient, conjugate_kind="numeric",
        dual_range=(dual_lo.copy(), dual_hi.copy()),
    )


def ensure_conjugate(P: Potential, y, radius: Optional[float] = None,
                     max_radius: float = 1e3) -> Potential:
    """Return ``P`` with a conjugate trusted at every point of ``y``.

    Analytic conjugates are returned unchanged.  Otherwise the primal box of a
    numeric conjugate is doubled until its certified dual range holds ``y``.
    """
    if P.conjugate_kind == "analytic":
        return P
    y = as_points(y, P.dim).reshape(-1, P.dim)
    need_lo, need_hi = y.min(axis=0), y.max(axis=0)

    def covers(rng):
        return rng is not None and np.all(rng[0] <= need_lo) and np.all(rng[1] >= need_hi)

    if P.conjugate_kind == "numeric" and covers(P.dual_range):
        return P
    R = float(radius) if radius is not None else 2.0
    while R <= max_radius:
        g = P.grad(np.diag(np.full(P.dim, R)))
        g_neg = P.grad(np.diag(np.full(P.dim, -R)))
        reach = min(np.min(np.diag(g)), np.min(-np.diag(g_neg)))
        if reach >= 1.05 * max(np.max(np.abs(need_lo)), np.max(np.abs(need_hi))):
            try:
                Q = attach_numeric_conjugate(P, R)
            except UntrustedDualRange:
                Q = None
            if Q is not None and covers(Q.dual_range):
                return Q
        R *= 2.0
    raise UntrustedDualRange(
        f"no numeric conjugate with primal radius <= {max_radius} covers the requested dual points")


def _interior_box(mask: np.ndarray, axes) -> tuple:
    """Largest centred box of dual nodes on which ``mask`` holds everywhere."""
    n0, n1 = mask.shape
    c0, c1 = n0 // 2, n1 // 2
    k = 0
    while k < min(c0, c1):
        sub = mask[c0 - k - 1:c0 + k + 2, c1 - k - 1:c1 + k + 2]
        if sub.shape != (2 * k + 3, 2 * k + 3) or not np.all(sub):
            break
        k += 1
    if k == 0:
        raise UntrustedDualRange("no certified dual box; enlarge the primal radius")
    return (np.array([axes[0][c0 - k], axes[1][c1 - k]]),
            np.array([axes[0][c0 + k], axes[1][c1 + k]]))


# --------------------------------------------------------------------------


def bregman_cost(P: Potential, x, y):
    """Convexity gap ``P(y) - P(x) - (y - x) . grad P(x)``; nonnegative."""
    x = as_points(x, P.dim)
    y = as_points(y, P.dim)
    if x.shape[-1] != y.shape[-1]:
        raise ValueError("dimension mismatch")
    val = P.func(y) - P.func(x) - np.sum((y - x) * P.grad(x), axis=-1)
    return _unwrap(val)
