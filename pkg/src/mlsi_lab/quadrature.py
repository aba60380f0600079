"""Truncated tensor-product quadrature against dx and e^{-P} dx.

Rules are composite trapezoid (or midpoint) products on uniform per-axis
grids.  Sums go through :func:`math.fsum`, which is correctly rounded and
therefore independent of summation order.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .convex_core import Potential
from .errors import NonFiniteIntegrand, TruncationError

__all__ = [
    "Box",
    "QuadratureRule",
    "tensor_rule",
    "truncation_box",
    "scan_box",
    "scenario_rule",
    "integrate",
    "integrate_values",
    "log_normalizer",
    "normalize",
    "default_resolution",
    "measure_weights",
]

R_CAP = 100.0


def default_resolution(dim: int) -> int:
    return 2001 if dim == 1 else 301


@dataclass(frozen=True)
class Box:
    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        hi = tuple(float(v) for v in np.atleast_1d(self.upper))
        if len(lo) != len(hi):
            raise ValueError("box bounds differ in dimension")
        if any(not a < b for a, b in zip(lo, hi)):
            raise ValueError("box needs lower < upper on every axis")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def symmetric(cls, radius, dim: int = 1) -> "Box":
        r = np.broadcast_to(np.asarray(radius, dtype=float), (dim,))
        return cls(tuple(-r), tuple(r))

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def volume(self) -> float:
        return math.prod(b - a for a, b in zip(self.lower, self.upper))

    @property
    def radius(self) -> np.ndarray:
        return np.maximum(np.abs(self.lower), np.abs(self.upper))

    def union(self, other: "Box") -> "Box":
        return Box(tuple(min(a, b) for a, b in zip(self.lower, other.lower)),
                   tuple(max(a, b) for a, b in zip(self.upper, other.upper)))

    def padded(self, pad: float) -> "Box":
        return Box(tuple(a - pad for a in self.lower), tuple(b + pad for b in self.upper))


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray
    box: Box
    scheme: str
    resolution: tuple
    axes: tuple

    @property
    def dim(self) -> int:
        return self.box.dim

    def coarsen(self) -> "QuadratureRule":
        """Same box, roughly half the nodes per axis (every other node for odd counts)."""
        return tensor_rule(self.box, tuple((r + 1) // 2 for r in self.resolution), self.scheme)

    def refine(self) -> "QuadratureRule":
        return tensor_rule(self.box, tuple(2 * r - 1 for r in self.resolution), self.scheme)

    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.nodes.shape[0], dtype=bool)
        for i, a in enumerate(self.axes):
            mask |= (self.nodes[:, i] == a[0]) | (self.nodes[:, i] == a[-1])
        return mask

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i + 1}" for i in range(self.dim)] + ["weight"])
            for p, wt in zip(self.nodes, self.weights):
                w.writerow([repr(float(c)) for c in p] + [repr(float(wt))])


def _axis_rule(lo: float, hi: float, n: int, scheme: str):
    if scheme == "trapezoid":
        if n < 2:
            raise ValueError("trapezoid needs at least two nodes per axis")
        x = np.linspace(lo, hi, n)
        w = np.full(n, (hi - lo) / (n - 1))
        w[0] *= 0.5
        w[-1] *= 0.5
    elif scheme == "midpoint":
        h = (hi - lo) / n
        x = lo + h * (np.arange(n) + 0.5)
        w = np.full(n, h)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    return x, w


def tensor_rule(box: Box, resolution, scheme: str = "trapezoid") -> QuadratureRule:
    res = tuple(int(r) for r in np.broadcast_to(np.asarray(resolution), (box.dim,)))
    parts = [_axis_rule(lo, hi, n, scheme) for lo, hi, n in zip(box.lower, box.upper, res)]
    axes = tuple(p[0] for p in parts)
    nodes = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, box.dim)
    weights = parts[0][1]
    for _, w in parts[1:]:
        weights = np.multiply.outer(weights, w)
    return QuadratureRule(nodes, np.asarray(weights).ravel(), box, scheme, res, axes)


def _directions(dim: int) -> np.ndarray:
    dirs = [s * np.eye(dim)[i] for i in range(dim) for s in (1.0, -1.0)]
    if dim > 1:
        signs = np.array(np.meshgrid(*[[1.0, -1.0]] * dim, indexing="ij")).reshape(dim, -1).T
        dirs.extend(signs / math.sqrt(dim))
    return np.asarray(dirs)


def scan_box(neg_log_density: Callable, dim: int, tail_tol: float = 1e-10,
             step: float = 0.25, pad: float = 0.5, cap: float = R_CAP) -> Box:
    """Box outside of which the line mass of exp(-V) is a ``tail_tol`` fraction.

    Along each scanned direction the line density exp(-V(r u)) on [0, cap]
    is integrated; the radius is the first multiple of ``step`` with tail
    mass below ``tail_tol`` times the mass inside, plus ``pad``.
    """
    if not 0 < tail_tol <= 1e-4:
        raise ValueError("tail_tol must lie in (0, 1e-4]")
    r = np.linspace(0.0, cap, int(round(cap / 1e-3)) + 1)
    lower = np.zeros(dim)
    upper = np.zeros(dim)
    for u in _directions(dim):
        v = np.asarray(neg_log_density(r[:, None] * u[None, :]), dtype=float)
        if not np.all(np.isfinite(v) | (v == np.inf)):
            raise TruncationError("non-finite potential along a scan direction")
        dens = np.exp(-(v - np.min(v)))
        if dens[-1] > tail_tol * 1e-3 * dens.max():
            raise TruncationError(
                f"e^(-P) has not decayed by radius {cap}; potential is not integrable or mis-specified")
        cell = 0.5 * (dens[1:] + dens[:-1]) * np.diff(r)
        cum = np.concatenate([[0.0], np.cumsum(cell)])
        tail = cum[-1] - cum
        ok = np.nonzero(tail <= tail_tol * cum)[0]
        ok = ok[ok > 0]
        if ok.size == 0:
            raise TruncationError("no truncation radius below the cap")
        R = math.ceil(r[ok[0]] / step - 1e-9) * step + pad
        if R > cap:
            raise TruncationError(f"truncation radius exceeds the cap {cap}")
        for i in range(dim):
            if u[i] > 0:
                upper[i] = max(upper[i], R * u[i])
            elif u[i] < 0:
                lower[i] = min(lower[i], R * u[i])
    return Box(tuple(lower), tuple(upper))


def truncation_box(P: Potential, tail_tol: float = 1e-10, tilt: Optional[Callable] = None,
                   **kwargs) -> Box:
    """Truncation box for e^{-P}, or for e^{tilt - P} when ``tilt`` is given."""
    if tilt is None:
        return scan_box(P.func, P.dim, tail_tol, **kwargs)
    return scan_box(lambda x: P.func(x) - tilt(x), P.dim, tail_tol, **kwargs)


def scenario_rule(P: Potential, tilt: Optional[Callable] = None, reference: str = "mu",
                  tail_tol: float = 1e-10, resolution=None, scheme: str = "trapezoid",
                  symmetric: bool = True) -> QuadratureRule:
    """Rule covering e^{-P} and the tilted mass e^{g} dmu (or e^{g} dx).

    With ``symmetric`` the box is the smallest origin-centred cube holding
    every scanned box, which keeps the node set reflection invariant.
    """
    box = truncation_box(P, tail_tol)
    if tilt is not None:
        if reference == "mu":
            box = box.union(truncation_box(P, tail_tol, tilt=tilt))
        elif reference == "dx":
            box = box.union(scan_box(lambda x: -tilt(x), P.dim, tail_tol))
        else:
            raise ValueError(f"unknown reference {reference!r}")
    if symmetric:
        box = Box.symmetric(float(np.max(box.radius)), P.dim)
    if resolution is None:
        resolution = default_resolution(P.dim)
    return tensor_rule(box, resolution, scheme)


def integrate_values(values, rule: QuadratureRule) -> float:
    values = np.asarray(values, dtype=float).reshape(-1)
    bad = ~np.isfinite(values)
    if np.any(bad):
        node = rule.nodes[np.argmax(bad)]
        raise NonFiniteIntegrand("non-finite integrand value", node=node.tolist())
    return math.fsum(rule.weights * values)


def integrate(f: Callable, rule: QuadratureRule) -> float:
    """Sum of ``weight_i * f(node_i)`` with order-independent rounding."""
    return integrate_values(f(rule.nodes), rule)


def log_normalizer(P: Potential, rule: QuadratureRule) -> float:
    """log of the integral of e^{-P} under ``rule``."""
    v = np.asarray(P.func(rule.nodes), dtype=float)
    if not np.all(np.isfinite(v)):
        raise NonFiniteIntegrand("non-finite potential", node=rule.nodes[np.argmax(~np.isfinite(v))].tolist())
    m = float(np.min(v))
    z = integrate_values(np.exp(-(v - m)), rule)
    if not (z > 0 and math.isfinite(z)):
        raise NonFiniteIntegrand("partition function is zero or non-finite")
    return math.log(z) - m


def normalize(P: Potential, rule: QuadratureRule) -> Potential:
    """Return ``P + log Z`` so that e^{-P} integrates to one under ``rule``."""
    return P.shifted(log_normalizer(P, rule))


def measure_weights(P: Potential, rule: QuadratureRule) -> np.ndarray:
    """Probability weights of mu_P on the nodes, summing to one."""
    v = np.asarray(P.func(rule.nodes), dtype=float)
    if not np.all(np.isfinite(v)):
        raise NonFiniteIntegrand("non-finite potential", node=rule.nodes[np.argmax(~np.isfinite(v))].tolist())
    w = rule.weights * np.exp(-(v - np.min(v)))
    return w / math.fsum(w)

