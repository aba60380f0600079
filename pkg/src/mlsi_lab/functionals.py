"""Entropy, variance and the pointwise MLSI integrand.

Integrals against mu_P use the probability weights of
:func:`mlsi_lab.quadrature.measure_weights`; ``reference="dx"`` switches to
plain Lebesgue weights on the same box.  Entropy is 1-homogeneous in e^g,
so every e^g is evaluated as e^c e^{g - c} with c = max g on the nodes.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .convex_core import Potential, as_points
from .errors import NonDecayingIntegrand, NonFiniteIntegrand
from .expr import parse_expression
from .quadrature import QuadratureRule, measure_weights

__all__ = [
    "TestFunction",
    "constant",
    "linear",
    "quadratic",
    "neg_potential",
    "bump",
    "from_expression",
    "entropy",
    "variance",
    "mlsi_integrand",
    "entropy_dual_gap",
    "reference_weights",
]

FAMILIES = ("constant", "linear", "quadratic", "neg-potential", "bump", "custom", "sum")


@dataclass(frozen=True, eq=False)
class TestFunction:
    """A test function g with its gradient; both vectorised over (..., n)."""

    __test__ = False  # not a pytest class

    dim: int
    func: Callable
    grad: Callable
    family: str = "custom"
    params: dict = field(default_factory=dict)
    support: Optional[tuple] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown test-function family {self.family!r}")

    def value(self, x):
        v = self.func(as_points(x, self.dim))
        return float(v) if np.ndim(v) == 0 else v

    def gradient(self, x):
        return self.grad(as_points(x, self.dim))

    def __call__(self, x):
        return self.func(as_points(x, self.dim))

    def shifted(self, c: float) -> "TestFunction":
        c = float(c)
        f = self.func
        return dataclasses.replace(self, func=lambda x: f(x) + c,
                                   params={**self.params, "shift": self.params.get("shift", 0.0) + c})

    def scaled(self, eps: float) -> "TestFunction":
        eps = float(eps)
        f, g = self.func, self.grad
        return dataclasses.replace(self, func=lambda x: eps * f(x), grad=lambda x: eps * g(x),
                                   params={**self.params, "scale": eps})

    def __add__(self, other: "TestFunction") -> "TestFunction":
        if other.dim != self.dim:
            raise ValueError("dimension mismatch")
        f1, f2, g1, g2 = self.func, other.func, self.grad, other.grad
        return TestFunction(self.dim, lambda x: f1(x) + f2(x), lambda x: g1(x) + g2(x),
                            family="sum", params={"terms": [self.family, other.family]})


def constant(c: float, dim: int = 1) -> TestFunction:
    c = float(c)
    return TestFunction(dim, lambda x: np.full(x.shape[:-1], c), lambda x: np.zeros_like(x),
                        family="constant", params={"c": c})


def linear(a, dim: Optional[int] = None, c0: float = 0.0) -> TestFunction:
    """g(x) = a . x + c0."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    dim = a.size if dim is None else dim
    a = np.broadcast_to(a, (dim,)).copy()
    return TestFunction(dim, lambda x: x @ a + c0, lambda x: np.broadcast_to(a, x.shape).copy(),
                        family="linear", params={"a": a.tolist(), "c0": c0})


def quadratic(k: float, dim: int = 1, center=0.0, c0: float = 0.0) -> TestFunction:
    """g(x) = k |x - center|^2 + c0."""
    center = np.broadcast_to(np.asarray(center, dtype=float), (dim,)).copy()
    k = float(k)
    return TestFunction(dim,
                        lambda x: k * np.sum((x - center) ** 2, axis=-1) + c0,
                        lambda x: 2.0 * k * (x - center),
                        family="quadratic", params={"k": k, "center": center.tolist(), "c0": c0})


def neg_potential(C: Potential, b: float = 1.0, center=0.0) -> TestFunction:
    """g(x) = -b C(x - center), with C taken without its normalizing constant."""
    b = float(b)
    center = np.broadcast_to(np.asarray(center, dtype=float), (C.dim,)).copy()
    L = C.log_partition
    return TestFunction(C.dim,
                        lambda x: -b * (C.func(x - center) - L),
                        lambda x: -b * C.grad(x - center),
                        family="neg-potential",
                        params={"b": b, "center": center.tolist(), "potential": C.kind, **C.params})


def bump(dim: int = 1, center=0.0, radius: float = 1.0, height: float = 1.0) -> TestFunction:
    """Smooth compactly supported bump equal to ``height`` at ``center``.

    g(x) = height * exp(1 - 1/(1 - |x - c|^2 / radius^2)) inside the ball.
    """
    center = np.broadcast_to(np.asarray(center, dtype=float), (dim,)).copy()
    radius, height = float(radius), float(height)

    def _u(x):
        return np.sum((x - center) ** 2, axis=-1) / radius ** 2

    def func(x):
        u = _u(x)
        inside = u < 1.0
        safe = np.where(inside, u, 0.0)
        return np.where(inside, height * np.exp(1.0 - 1.0 / (1.0 - safe)), 0.0)

    def grad(x):
        u = _u(x)
        inside = u < 1.0
        safe = np.where(inside, u, 0.0)
        val = np.where(inside, height * np.exp(1.0 - 1.0 / (1.0 - safe)), 0.0)
        coef = np.where(inside, -val / (1.0 - safe) ** 2 * 2.0 / radius ** 2, 0.0)
        return coef[..., None] * (x - center)

    support = (tuple(center - radius), tuple(center + radius))
    return TestFunction(dim, func, grad, family="bump",
                        params={"center": center.tolist(), "radius": radius, "height": height},
                        support=support)


def from_expression(text: str, dim: int = 1) -> TestFunction:
    e = parse_expression(text, dim)
    return TestFunction(dim, lambda x: e(x), lambda x: e.gradient(x), family="custom",
                        params={"expr": text})


# --------------------------------------------------------------------------


def reference_weights(P: Optional[Potential], rule: QuadratureRule, reference: str = "mu") -> np.ndarray:
    if reference == "mu":
        if P is None:
            raise ValueError("reference 'mu' needs a potential")
        return measure_weights(P, rule)
    if reference == "dx":
        return rule.weights
    raise ValueError(f"unknown reference {reference!r}")


def _g_values(g: TestFunction, rule: QuadratureRule, what: str = "g") -> np.ndarray:
    gv = np.asarray(g.func(rule.nodes), dtype=float).reshape(-1)
    bad = ~np.isfinite(gv)
    if np.any(bad):
        raise NonFiniteIntegrand(f"non-finite {what}", node=rule.nodes[np.argmax(bad)].tolist())
    return gv


def _check_decay(gv: np.ndarray, rule: QuadratureRule, rel: float = 1e-8) -> None:
    edge = rule.boundary_mask()
    top = np.max(gv)
    worst = np.max(gv[edge]) - top
    if worst > math.log(rel):
        raise NonDecayingIntegrand(
            f"e^g on the box boundary is {math.exp(worst):.3g} of its maximum; "
            "Lebesgue integrals over R^n are not captured by the box")


def _tilted(g: TestFunction, P: Optional[Potential], rule: QuadratureRule, reference: str):
    """Return (g values, scale c, weights w * e^{g - c}) with c = max g."""
    gv = _g_values(g, rule)
    w = reference_weights(P, rule, reference)
    if reference == "dx":
        _check_decay(gv, rule)
    c = float(np.max(gv))
    return gv, c, w * np.exp(gv - c)


def entropy(g: TestFunction, P: Optional[Potential], rule: QuadratureRule,
            reference: str = "mu") -> float:
    """Ent(e^g) = int e^g log e^g - (int e^g) log(int e^g) against mu_P or dx."""
    gv, c, we = _tilted(g, P, rule, reference)
    m = math.fsum(we)
    if not (m > 0 and math.isfinite(m)):
        raise NonFiniteIntegrand("int e^g is zero or non-finite")
    ent = math.fsum(we * (gv - c - math.log(m)))
    return math.exp(c) * ent


def variance(g: TestFunction, P: Potential, rule: QuadratureRule) -> float:
    gv = _g_values(g, rule)
    w = measure_weights(P, rule)
    mean = math.fsum(w * gv)
    return math.fsum(w * (gv - mean) ** 2)


def mlsi_integrand(P: Potential, g: TestFunction, x) -> np.ndarray:
    """x . grad g - P*(grad P) + P*(grad P - grad g), pointwise.

    Both conjugate terms go through the same conjugate, so the integrand is
    exactly zero wherever grad g vanishes.
    """
    x = as_points(x, P.dim)
    gp = P.grad(x)
    gg = g.grad(x)
    val = (np.sum(x * gg, axis=-1) - np.asarray(P.conj(gp)) + np.asarray(P.conj(gp - gg)))
    return float(val) if np.ndim(val) == 0 else val


def entropy_dual_gap(g: TestFunction, P: Potential, rule: QuadratureRule, a: float) -> float:
    """int (e^g log(e^g / a) - e^g + a) dmu_P; its infimum over a > 0 is Ent(e^g)."""
    if not a > 0:
        raise ValueError("a must be positive")
    gv = _g_values(g, rule)
    w = measure_weights(P, rule)
    eg = np.exp(gv)
    return math.fsum(w * (eg * (gv - math.log(a)) - eg + a))
