"""Checkers for the entropy inequalities and the constant-selection procedures.

Every checker returns a :class:`DeficitReport` with ``deficit = rhs - lhs``.
The tolerance attached to a report is ``max(1e-6, 10 * |d_fine - d_coarse|)``
where the two deficits come from the supplied rule and its coarsening.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import brentq, minimize

from .convex_core import Potential, as_points, ensure_conjugate, gaussian_potential
from .errors import (InfeasibleSelection, NonFiniteIntegrand, ScenarioSkipped,
                     SingularHessian, TruncationError)
from .functionals import TestFunction, _check_decay, _g_values, entropy, mlsi_integrand, variance
from .quadrature import QuadratureRule, log_normalizer, measure_weights, scan_box, tensor_rule

__all__ = [
    "DeficitReport",
    "LargeEntropyConstants",
    "check_mlsi",
    "gross_reduction_residual",
    "check_brascamp_lieb",
    "check_perturbation",
    "power_mlsi_constant",
    "power_mlsi_integrand",
    "euclidean_lsi_rhs",
    "euclidean_lsi_check",
    "optimal_lambda",
    "homogeneous_lsi_check",
    "psi_alpha",
    "min_A",
    "log_exp_moment",
    "derive_large_entropy_constants",
    "check_large_entropy",
]

TOL_FLOOR = 1e-6
PHI_FLOOR = 1e-8


@dataclass(frozen=True)
class DeficitReport:
    name: str
    lhs: float
    rhs: float
    tol: float
    metadata: dict = field(default_factory=dict)

    @property
    def deficit(self) -> float:
        return self.rhs - self.lhs

    @property
    def passed(self) -> bool:
        return bool(self.deficit >= -self.tol)

    def to_dict(self) -> dict:
        return {"name": self.name, "lhs": float(self.lhs), "rhs": float(self.rhs),
                "deficit": float(self.deficit), "pass": self.passed, "tol": float(self.tol),
                "metadata": _plain(self.metadata)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=False)

    @classmethod
    def from_dict(cls, d: dict) -> "DeficitReport":
        return cls(d["name"], float(d["lhs"]), float(d["rhs"]), float(d["tol"]), dict(d.get("metadata", {})))


def _plain(v):
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        return float(v)
    return v


def _tolerance(fine: float, coarse: float) -> float:
    return max(TOL_FLOOR, 10.0 * abs(fine - coarse))


def _rule_meta(rule: QuadratureRule) -> dict:
    return {"resolution": int(rule.resolution[0]), "box_radius": float(np.max(rule.box.radius))}


def _tilted_integral(values, gv, w) -> float:
    """sum(w e^g values), evaluated as e^c sum(w e^{g-c} values) with c = max g."""
    values = np.asarray(values, dtype=float).reshape(-1)
    c = float(np.max(gv))
    we = w * np.exp(gv - c)
    terms = we * values
    if not np.all(np.isfinite(terms)):
        raise NonFiniteIntegrand("non-finite weighted integrand")
    return math.exp(c) * math.fsum(terms)


# --------------------------------------------------------------------------
# MLSI and its reductions


def _integrand_nodes(P: Potential, g: TestFunction, nodes: np.ndarray) -> tuple:
    P = ensure_conjugate(P, np.concatenate([P.grad(nodes), P.grad(nodes) - g.grad(nodes)]))
    vals = np.asarray(mlsi_integrand(P, g, nodes), dtype=float).reshape(-1)
    bad = ~np.isfinite(vals)
    if np.any(bad):
        raise NonFiniteIntegrand("non-finite MLSI integrand", node=nodes[np.argmax(bad)].tolist())
    return vals, P


def _mlsi_sides(P: Potential, g: TestFunction, rule: QuadratureRule):
    lhs = entropy(g, P, rule)
    gv = _g_values(g, rule)
    w = measure_weights(P, rule)
    vals, _ = _integrand_nodes(P, g, rule.nodes)
    rhs = _tilted_integral(vals, gv, w)
    return lhs, rhs, float(np.min(vals))


def check_mlsi(P: Potential, g: TestFunction, rule: QuadratureRule) -> DeficitReport:
    """Ent(e^g) against the integral of the MLSI integrand times e^g dmu_P."""
    P = ensure_conjugate(P, np.concatenate([P.grad(rule.nodes), P.grad(rule.nodes) - g.grad(rule.nodes)]))
    lhs, rhs, vmin = _mlsi_sides(P, g, rule)
    cl, cr, _ = _mlsi_sides(P, g, rule.coarsen())
    meta = {"min_integrand": vmin, **_rule_meta(rule)}
    return DeficitReport("mlsi", lhs, rhs, _tolerance(rhs - lhs, cr - cl), meta)


def gross_reduction_residual(g: TestFunction, rule: QuadratureRule) -> float:
    """Largest node-wise gap between the Gaussian MLSI integrand and |grad g|^2 / 2."""
    P = gaussian_potential(g.dim)
    vals = np.asarray(mlsi_integrand(P, g, rule.nodes)).reshape(-1)
    half = 0.5 * np.sum(g.grad(rule.nodes) ** 2, axis=-1).reshape(-1)
    return float(np.max(np.abs(vals - half)))


def _bl_sides(P, g, rule):
    H = P.hess(rule.nodes)
    eig = np.linalg.eigvalsh(H)
    scale = max(1.0, float(np.max(np.abs(eig))))
    bad = eig[:, 0] <= 1e-12 * scale
    if np.any(bad):
        raise SingularHessian("Hessian is not positive definite", node=rule.nodes[np.argmax(bad)].tolist())
    dg = g.grad(rule.nodes).reshape(-1, P.dim)
    quad = np.sum(dg * np.linalg.solve(H, dg[..., None])[..., 0], axis=-1)
    w = measure_weights(P, rule)
    return variance(g, P, rule), math.fsum(w * quad)


def check_brascamp_lieb(P: Potential, g: TestFunction, rule: QuadratureRule,
                        eps_ladder: Sequence[float] = (0.1, 0.05, 0.025)) -> DeficitReport:
    """Var(g) <= int grad g . Hess(P)^{-1} grad g dmu_P.

    The metadata records Ent(e^{eps g}) / (eps^2 Var g) along ``eps_ladder``;
    the ratio tends to 1/2.
    """
    if P.hess is None:
        raise SingularHessian("potential has no Hessian")
    lhs, rhs = _bl_sides(P, g, rule)
    cl, cr = _bl_sides(P, g, rule.coarsen())
    meta = dict(_rule_meta(rule))
    if lhs > 0:
        for k, eps in enumerate(eps_ladder):
            meta[f"ent_eps_coeff_{k}"] = entropy(g.scaled(eps), P, rule) / (eps * eps * lhs)
            meta[f"eps_{k}"] = float(eps)
    return DeficitReport("brascamp_lieb", lhs, rhs, _tolerance(rhs - lhs, cr - cl), meta)


def _perturbed(P: Potential, U: Callable) -> Potential:
    f = P.func
    return dataclasses.replace(P, func=lambda x: f(x) + U(x), conjugate=None, conjugate_grad=None,
                               conjugate_kind=None, dual_range=None, hess=None, kind="custom-grid",
                               homogeneity_degree=None)


def _perturbation_sides(P, U, g, rule):
    u = np.asarray(U(rule.nodes), dtype=float).reshape(-1)
    if not np.all(np.isfinite(u)):
        raise NonFiniteIntegrand("non-finite perturbation", node=rule.nodes[np.argmax(~np.isfinite(u))].tolist())
    osc = float(np.max(u) - np.min(u))
    Q = _perturbed(P, U)
    lhs = entropy(g, Q, rule)
    gv = _g_values(g, rule)
    wq = measure_weights(Q, rule)
    vals, _ = _integrand_nodes(P, g, rule.nodes)
    rhs = math.exp(2.0 * osc) * _tilted_integral(vals, gv, wq)
    # density of mu_{P+U} against mu_P on the nodes
    wp = measure_weights(P, rule)
    ratio = wq / wp
    lo, hi = math.exp(-osc), math.exp(osc)
    ratio_ok = bool(np.all(ratio >= lo * (1 - 1e-9)) and np.all(ratio <= hi * (1 + 1e-9)))
    return lhs, rhs, osc, ratio_ok, float(ratio.min()), float(ratio.max())


def check_perturbation(P: Potential, U: Callable, g: TestFunction, rule: QuadratureRule) -> DeficitReport:
    """MLSI for mu_{P+U} with the factor e^{2 osc U}; osc is taken over the nodes.

    ``U`` maps points of shape (m, n) to (m,).  The metadata also reports
    whether e^{-osc} <= dmu_{P+U}/dmu_P <= e^{osc} held at every node.
    """
    P = ensure_conjugate(P, np.concatenate([P.grad(rule.nodes), P.grad(rule.nodes) - g.grad(rule.nodes)]))
    lhs, rhs, osc, ok, rmin, rmax = _perturbation_sides(P, U, g, rule)
    cl, cr, *_ = _perturbation_sides(P, U, g, rule.coarsen())
    meta = {"osc": osc, "factor": math.exp(2 * osc), "density_ratio_ok": ok,
            "density_ratio_min": rmin, "density_ratio_max": rmax, **_rule_meta(rule)}
    return DeficitReport("perturbation", lhs, rhs, _tolerance(rhs - lhs, cr - cl), meta)


# --------------------------------------------------------------------------
# power potentials


def power_mlsi_integrand(w, e, q: float):
    """w . e |w|^{q-2} - |w|^q / q + |w - e|^q / q for unit ``e``.

    This is the MLSI integrand of |x|^p/p divided by |grad g|^q after the
    substitution grad P(x) = |grad g| w, grad g = |grad g| e.
    """
    w = np.asarray(w, dtype=float)
    e = np.asarray(e, dtype=float)
    r = np.linalg.norm(w, axis=-1)
    # w . e |w|^{q-2} -> 0 as w -> 0 since q > 1
    with np.errstate(divide="ignore", invalid="ignore"):
        lead = np.where(r > 0, np.sum(w * e, axis=-1) * r ** (q - 2.0), 0.0)
    return (lead - r ** q / q
            + np.linalg.norm(w - e, axis=-1) ** q / q)


def power_mlsi_constant(p: float, radii=None, angles=None, polish: bool = True) -> float:
    """Estimate c with Ent(e^g) <= c int |grad g|^q e^g dmu for P = |x|^p / p.

    By rotation invariance the sup over (w, e) reduces to e = (1, 0) and w in
    the plane, w = r (cos t, sin t).  ``radii`` (positive) and ``angles`` in
    [0, pi] define the grid; the grid maximum is then polished locally.
    """
    p = float(p)
    if p < 2:
        raise ValueError("power MLSI constant needs p >= 2; the bound fails for 1 < p < 2")
    q = p / (p - 1.0)
    if radii is None:
        radii = np.geomspace(1e-4, 1e3, 1401)
    if angles is None:
        angles = np.linspace(0.0, math.pi, 361)
    radii = np.asarray(radii, dtype=float)
    angles = np.asarray(angles, dtype=float)
    if np.any(radii <= 0):
        raise ValueError("radii must exclude w = 0")
    R, T = np.meshgrid(radii, angles, indexing="ij")
    W = np.stack([R * np.cos(T), R * np.sin(T)], axis=-1)
    e = np.array([1.0, 0.0])
    vals = power_mlsi_integrand(W, e, q)
    k = np.unravel_index(np.argmax(vals), vals.shape)
    best = float(vals[k])
    if polish:
        f = lambda v: -float(power_mlsi_integrand(np.array([math.exp(v[0]) * math.cos(v[1]),
                                                            math.exp(v[0]) * math.sin(v[1])]), e, q))
        res = minimize(f, [math.log(radii[k[0]]), angles[k[1]]], method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 4000})
        best = max(best, -float(res.fun))
    return best


# --------------------------------------------------------------------------
# Lebesgue-reference LSI


def _dx_parts(g: TestFunction, rule: QuadratureRule):
    gv = _g_values(g, rule)
    _check_decay(gv, rule)
    return gv, rule.weights


def euclidean_lsi_rhs(P: Potential, g: TestFunction, lam: float, rule: QuadratureRule) -> float:
    """-n log(lam e) int e^g dx + int P*(-lam grad g) e^g dx for normalized P."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    gv, w = _dx_parts(g, rule)
    dual = -lam * g.grad(rule.nodes).reshape(-1, P.dim)
    P = ensure_conjugate(P, dual)
    m = _tilted_integral(np.ones_like(gv), gv, w)
    J = _tilted_integral(np.asarray(P.conj(dual)).reshape(-1), gv, w)
    return -P.dim * math.log(lam * math.e) * m + J


def _normalized(P: Potential, rule: QuadratureRule) -> Potential:
    return P.shifted(log_normalizer(P, rule))


def euclidean_lsi_check(P: Potential, g: TestFunction, lam: float, rule: QuadratureRule) -> DeficitReport:
    """Ent_dx(e^g) against -n log(lam e) int e^g dx + int P*(-lam grad g) e^g dx.

    ``P`` is normalized on ``rule`` first, so any additive constant is ignored.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")

    def sides(r):
        Pn = _normalized(P, r)
        return entropy(g, None, r, reference="dx"), euclidean_lsi_rhs(Pn, g, lam, r)

    lhs, rhs = sides(rule)
    cl, cr = sides(rule.coarsen())
    meta = {"lambda": float(lam), **_rule_meta(rule)}
    return DeficitReport("euclidean_lsi", lhs, rhs, _tolerance(rhs - lhs, cr - cl), meta)


def _stationarity(Pn: Potential, g: TestFunction, rule: QuadratureRule):
    gv, w = _dx_parts(g, rule)
    dg = g.grad(rule.nodes).reshape(-1, Pn.dim)
    m = _tilted_integral(np.ones_like(gv), gv, w)
    n = Pn.dim

    def S(lam):
        dual = -lam * dg
        P2 = ensure_conjugate(Pn, dual)
        inner = np.sum(dg * P2.conj_grad(dual).reshape(-1, n), axis=-1)
        return -n * m - lam * _tilted_integral(inner, gv, w)

    return S, m


def optimal_lambda(P: Potential, g: TestFunction, rule: QuadratureRule,
                   lam_min: float = 1e-6, lam_max: float = 1e3) -> tuple:
    """Root of -n int e^g dx - lam int grad g . grad P*(-lam grad g) e^g dx.

    The left side is the lam-derivative of the right side of the Lebesgue LSI
    times lam.  Returns ``(lam0, residual)``.
    """
    Pn = _normalized(P, rule)
    S, m = _stationarity(Pn, g, rule)
    ladder = np.geomspace(lam_min, lam_max, 61)
    vals = [S(l) for l in ladder]
    for a, b, fa, fb in zip(ladder[:-1], ladder[1:], vals[:-1], vals[1:]):
        if fa == 0.0:
            return float(a), 0.0
        if fa * fb < 0:
            lam0 = brentq(S, a, b, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)
            return float(lam0), float(abs(S(lam0)))
    raise InfeasibleSelection(f"stationarity equation has no sign change on [{lam_min}, {lam_max}]")


def _check_homogeneity(C: Potential, seed: int = 0, tol: float = 1e-9):
    q = C.homogeneity_degree
    if q is None:
        raise ValueError("potential declares no homogeneity degree")
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(200, C.dim)) * 2.0
    lam = rng.uniform(0.1, 5.0, size=200)
    Cr = C.raw()
    lhs = Cr.func(lam[:, None] * x)
    rhs = lam ** q * Cr.func(x)
    err = float(np.max(np.abs(lhs - rhs) / (1.0 + np.abs(rhs))))
    if err > tol:
        raise ValueError(f"potential is not {q}-homogeneous (relative error {err:.3g})")
    return q


def _homogeneous_rhs(C: Potential, g: TestFunction, rule: QuadratureRule, q: float):
    n = C.dim
    p = q / (q - 1.0)
    Cr = C.raw()
    logL = log_normalizer(Cr, rule)
    gv, w = _dx_parts(g, rule)
    dual = -g.grad(rule.nodes).reshape(-1, n)
    Cr = ensure_conjugate(Cr, dual)
    m = _tilted_integral(np.ones_like(gv), gv, w)
    J = _tilted_integral(np.asarray(Cr.conj(dual)).reshape(-1), gv, w)
    # log of p J / (n m e^{p-1} L^{p/n}), assembled in logs
    inner = math.log(p) + math.log(J) - math.log(n * m) - (p - 1.0) - (p / n) * logL
    return (n / p) * m * inner


def homogeneous_lsi_check(C: Potential, g: TestFunction, rule: QuadratureRule,
                          seed: int = 0) -> DeficitReport:
    """Lebesgue LSI with the optimal lam in closed form for a q-homogeneous C.

    rhs = (n/p) m log(p J / (n m e^{p-1} L^{p/n})), with m = int e^g dx,
    J = int C*(-grad g) e^g dx and L = int e^{-C} dx.  The metadata carries
    the gap to the numerically optimized Lebesgue-LSI right side.
    """
    q = _check_homogeneity(C, seed)
    lhs = entropy(g, None, rule, reference="dx")
    rhs = _homogeneous_rhs(C, g, rule, q)
    cl = entropy(g, None, rule.coarsen(), reference="dx")
    cr = _homogeneous_rhs(C, g, rule.coarsen(), q)
    Cr = C.raw()
    lam0, resid = optimal_lambda(Cr, g, rule)
    rhs_opt = euclidean_lsi_rhs(_normalized(Cr, rule), g, lam0, rule)
    meta = {"q": q, "p": q / (q - 1.0), "lambda_opt": lam0, "stationarity_residual": resid,
            "rhs_optimized": rhs_opt, "closed_form_gap": abs(rhs - rhs_opt), **_rule_meta(rule)}
    return DeficitReport("homogeneous_lsi", lhs, rhs, _tolerance(rhs - lhs, cr - cl), meta)


# --------------------------------------------------------------------------
# large-entropy constants


@dataclass(frozen=True)
class LargeEntropyConstants:
    lam: float
    alpha: float
    A: float
    C1: float
    C2: float
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.lam > 0 and 0 < self.alpha < 1 and self.A >= 0):
            raise ValueError("inconsistent large-entropy constants")


def _default_psi_grid(Phi: Potential, alpha: float, rule: Optional[QuadratureRule] = None) -> np.ndarray:
    if rule is not None:
        pts = rule.nodes
    else:
        pts = as_points(np.linspace(-20.0, 20.0, 4001), 1) if Phi.dim == 1 else None
        if pts is None:
            ax = np.linspace(-10.0, 10.0, 201)
            pts = np.stack(np.meshgrid(ax, ax, indexing="ij"), -1).reshape(-1, 2)
    if Phi.conjugate_kind == "numeric" and Phi.dual_range is not None:
        lo, hi = Phi.dual_range
        inside = np.all((pts / (1 - alpha) >= lo) & (pts / (1 - alpha) <= hi), axis=-1)
        pts = pts[inside]
    return pts


def psi_alpha(Phi: Potential, alpha: float, x_grid=None) -> float:
    """sup of (1 - a) Phi*(x / (1 - a)) / Phi*(x) over grid points with Phi*(x) > 1e-8.

    Phi* is the conjugate of the un-normalized potential (Phi(0) = 0).
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    x = _default_psi_grid(Phi, alpha) if x_grid is None else as_points(x_grid, Phi.dim).reshape(-1, Phi.dim)
    if Phi.conjugate is None:
        Phi = ensure_conjugate(Phi, np.concatenate([x, x / (1 - alpha)]))
    den = np.asarray(Phi.raw_conj(x)).reshape(-1)
    keep = den > PHI_FLOOR
    if not np.any(keep):
        raise InfeasibleSelection("psi grid has no point with Phi* above the floor")
    x = x[keep]
    num = (1 - alpha) * np.asarray(Phi.raw_conj(x / (1 - alpha))).reshape(-1)
    return float(np.max(num / den[keep]))


def min_A(Phi: Potential, x_grid, return_probe: bool = False):
    """Smallest A with x . grad Phi <= (A + 1) Phi on the grid (Phi un-normalized).

    With ``return_probe`` a dict is also returned comparing the grid sup with
    the sup on the grid stretched by 2; a clear increase flags unbounded growth.
    """
    x = as_points(x_grid, Phi.dim).reshape(-1, Phi.dim)
    Pr = Phi.raw()

    def sup_ratio(pts):
        v = np.asarray(Pr.func(pts)).reshape(-1)
        keep = v > PHI_FLOOR
        if not np.any(keep):
            raise InfeasibleSelection("min_A grid has no point with Phi above the floor")
        r = np.sum(pts[keep] * Pr.grad(pts[keep]), axis=-1) / v[keep]
        return float(np.max(r))

    A = sup_ratio(x) - 1.0
    if not return_probe:
        return A
    A2 = sup_ratio(2.0 * x) - 1.0
    grows = bool(A2 > A + 1e-6 * max(1.0, abs(A)))
    return A, {"A_grid": A, "A_stretched": A2, "growth_flag": grows}


def log_exp_moment(Phi: Potential, lam: float, resolution: Optional[int] = None) -> float:
    """log int e^{Phi/lam} dmu_Phi with Phi un-normalized, each integral on its own box.

    Equals log Z(1 - 1/lam) - log Z(1) where Z(t) = int e^{-t Phi}; +inf when
    lam <= 1 or the tilted density does not decay inside the scan cap.
    """
    if lam <= 1.0:
        return math.inf
    Pr = Phi.raw()
    res = resolution or (2001 if Phi.dim == 1 else 301)
    t = 1.0 - 1.0 / lam

    def logZ(scale):
        f = lambda x: scale * Pr.func(x)
        try:
            box = scan_box(f, Phi.dim, 1e-12)
        except TruncationError:
            return math.inf
        box = type(box).symmetric(float(np.max(box.radius)), Phi.dim)
        r = tensor_rule(box, res)
        v = np.asarray(f(r.nodes)).reshape(-1)
        mn = float(np.min(v))
        return math.log(math.fsum(r.weights * np.exp(-(v - mn)))) - mn

    lz = logZ(t)
    if not math.isfinite(lz):
        return math.inf
    return lz - logZ(1.0)


def derive_large_entropy_constants(Phi: Potential, rule: QuadratureRule,
                                   alpha_grid=None, lam_grid=None,
                                   eqm_ladder=(0.1, 0.01, 0.001), eqm_tol: float = 5e-2) -> LargeEntropyConstants:
    """Pick (lam, alpha) by grid scans and return C1 = 4 alpha, C2 = 1/alpha.

    lam is the smallest grid value with log int e^{Phi/lam} dmu <= 1 and
    alpha the largest with (alpha + A |psi(alpha) - 1|) lam <= 1/4.
    """
    alpha_grid = np.sort(np.geomspace(1e-4, 0.5, 400) if alpha_grid is None else np.asarray(alpha_grid, float))
    lam_grid = np.sort(np.geomspace(1.01, 1e3, 400) if lam_grid is None else np.asarray(lam_grid, float))
    if alpha_grid.size == 0 or lam_grid.size == 0:
        raise ValueError("empty selection grid")
    A, probe = min_A(Phi, rule.nodes, return_probe=True)
    if not math.isfinite(A) or probe["growth_flag"]:
        raise InfeasibleSelection(f"growth condition x.grad Phi <= (A+1) Phi fails (A grid {A:.4g}, "
                                  f"stretched {probe['A_stretched']:.4g})")
    A = max(A, 0.0)
    psis = [psi_alpha(Phi, a, _default_psi_grid(Phi, a, rule)) for a in eqm_ladder]
    if any(b > a + 1e-12 for a, b in zip(psis, psis[1:])) or abs(psis[-1] - 1.0) > eqm_tol:
        raise InfeasibleSelection(f"psi(alpha) does not approach 1 along {list(eqm_ladder)}: {psis}")

    lam = None
    for l in lam_grid:
        mom = log_exp_moment(Phi, float(l), rule.resolution[0])
        if mom <= 1.0:
            lam, lam_moment = float(l), mom
            break
    if lam is None:
        raise InfeasibleSelection("no lambda on the grid satisfies log int e^{Phi/lambda} dmu <= 1")

    alpha = None
    for a in alpha_grid[::-1]:
        if not 0 < a < 1:
            continue
        psi = psi_alpha(Phi, float(a), _default_psi_grid(Phi, float(a), rule))
        cond = (a + A * abs(psi - 1.0)) * lam
        if cond <= 0.25:
            alpha, alpha_cond, alpha_psi = float(a), float(cond), psi
            break
    if alpha is None:
        raise InfeasibleSelection("no alpha on the grid satisfies (alpha + A|psi - 1|) lambda <= 1/4")

    meta = {"lambda_moment": lam_moment, "lambda_condition_ok": lam_moment <= 1.0,
            "alpha_product": alpha_cond, "alpha_condition_ok": alpha_cond <= 0.25,
            "psi_alpha": alpha_psi, "A_condition_ok": bool(math.isfinite(A) and not probe["growth_flag"]),
            "eqm_psi_terminal": psis[-1],
            "lambda_grid": [float(lam_grid[0]), float(lam_grid[-1]), int(lam_grid.size)],
            "alpha_grid": [float(alpha_grid[0]), float(alpha_grid[-1]), int(alpha_grid.size)]}
    return LargeEntropyConstants(lam, alpha, float(A), 4.0 * alpha, 1.0 / alpha, _plain(meta))


def _large_entropy_sides(Phi, g, constants, rule):
    w = measure_weights(Phi, rule)
    gv = _g_values(g, rule)
    # shift so that int e^g dmu = 1
    c = float(np.max(gv))
    shift = -(c + math.log(math.fsum(w * np.exp(gv - c))))
    gs = g.shifted(shift)
    lhs = entropy(gs, Phi, rule)
    dual = constants.C2 * g.grad(rule.nodes).reshape(-1, Phi.dim)
    P2 = ensure_conjugate(Phi, dual)
    vals = np.asarray(P2.raw_conj(dual)).reshape(-1)
    rhs = constants.C1 * _tilted_integral(vals, gv + shift, w)
    return lhs, rhs, shift


def check_large_entropy(Phi: Potential, g: TestFunction, constants: LargeEntropyConstants,
                        rule: QuadratureRule) -> DeficitReport:
    """Ent(e^g) <= C1 int Phi*(C2 grad g) e^g dmu_Phi after shifting g to unit mass.

    Raises :class:`ScenarioSkipped` when the entropy is below 1.
    """
    lhs, rhs, shift = _large_entropy_sides(Phi, g, constants, rule)
    if lhs < 1.0:
        raise ScenarioSkipped(f"small-entropy, out of theorem scope (Ent = {lhs:.4g} < 1)")
    cl, cr, _ = _large_entropy_sides(Phi, g, constants, rule.coarsen())
    meta = {"C1": constants.C1, "C2": constants.C2, "alpha": constants.alpha, "lambda": constants.lam,
            "A": constants.A, "g_shift": shift, **_rule_meta(rule)}
    return DeficitReport("large_entropy", lhs, rhs, _tolerance(rhs - lhs, cr - cl), meta)
