"""Anisotropic integrands phi(x, xi): evaluation, mirroring, polars, sanity checks.

All evaluation functions are vectorized: ``x`` and ``xi`` are arrays of shape
``(..., 2)`` (a single point ``(2,)`` works too) and the result has shape ``(...)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import SamplingBudgetExceeded

Rule = Callable[[np.ndarray, np.ndarray], np.ndarray]

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))
POLAR_DIRECTIONS = 4096
POLAR_TOL = 1e-6


def _as_vec(a) -> np.ndarray:
    return np.asarray(a, dtype=float)


@dataclass(frozen=True)
class Integrand:
    """A positively 1-homogeneous integrand with comparability bounds alpha, beta."""

    name: str
    rule: Rule
    alpha: float
    beta: float
    is_even: bool = False
    polar_rule: Optional[Rule] = None
    coefficients: dict = field(default_factory=dict, compare=False)

    def __call__(self, x, xi) -> np.ndarray:
        return evaluate(self, x, xi)

    def mirrored(self) -> "Integrand":
        return mirrored(self)


def evaluate(integrand: Integrand, x, xi) -> np.ndarray:
    xi = _as_vec(xi)
    x = np.zeros_like(xi) if x is None else np.broadcast_to(_as_vec(x), xi.shape)
    out = integrand.rule(x, xi)
    return out if np.ndim(out) else float(out)


def mirrored(integrand: Integrand) -> Integrand:
    """phi~(x, xi) = phi(x, -xi). Mirroring twice returns the original integrand."""
    if integrand.is_even:
        return integrand
    if integrand.name.startswith("mirrored("):
        base = integrand.coefficients.get("_base")
        if base is not None:
            return base
    rule = integrand.rule
    polar = integrand.polar_rule
    return Integrand(
        name=f"mirrored({integrand.name})",
        rule=lambda x, xi: rule(x, -xi),
        alpha=integrand.alpha,
        beta=integrand.beta,
        is_even=False,
        polar_rule=(lambda x, s: polar(x, -s)) if polar is not None else None,
        coefficients={"_base": integrand},
    )


# ---------------------------------------------------------------------------
# built-in integrands


def _iso_rule(x, xi):
    return np.hypot(xi[..., 0], xi[..., 1])


def isotropic() -> Integrand:
    return Integrand("isotropic", _iso_rule, 1.0, 1.0, True, _iso_rule)


def _quadrant_rule(x, xi):
    a, b = xi[..., 0], xi[..., 1]
    return np.where(b >= 0, np.hypot(a, b), np.abs(a) + np.abs(b))


def _quadrant_polar(x, s):
    a, b = s[..., 0], s[..., 1]
    return np.where(b >= 0, np.hypot(a, b), np.maximum(np.abs(a), np.abs(b)))


def quadrant() -> Integrand:
    """Euclidean norm on the upper half-plane, l1 norm on the lower one."""
    return Integrand("quadrant", _quadrant_rule, 1.0, math.sqrt(2.0), False, _quadrant_polar)


def weighted_l1(e1_plus: float, e1_minus: float | None = None,
                e2_plus: float = 1.0, e2_minus: float | None = None) -> Integrand:
    """phi(xi) = a+ xi1^+ + a- xi1^- + b+ xi2^+ + b- xi2^-.

    Missing minus-coefficients default to the plus ones (even integrand).
    """
    ap = float(e1_plus)
    am = ap if e1_minus is None else float(e1_minus)
    bp = float(e2_plus)
    bm = bp if e2_minus is None else float(e2_minus)
    c = np.array([ap, am, bp, bm])
    if np.any(c <= 0):
        raise ValueError("weighted-l1 coefficients must be positive")

    def rule(x, xi):
        a, b = xi[..., 0], xi[..., 1]
        return (ap * np.maximum(a, 0) + am * np.maximum(-a, 0)
                + bp * np.maximum(b, 0) + bm * np.maximum(-b, 0))

    def polar(x, s):
        a, b = s[..., 0], s[..., 1]
        return np.maximum.reduce([a / ap, -a / am, b / bp, -b / bm])

    # extreme ratios phi/|xi| on each quadrant arc are at the axes (min) or at
    # the direction (a, b)/|(a, b)| (max)
    alpha = float(c.min())
    beta = float(max(math.hypot(p, q) for p in (ap, am) for q in (bp, bm)))
    return Integrand(
        "weighted-l1", rule, alpha, beta,
        is_even=(ap == am and bp == bm), polar_rule=polar,
        coefficients={"e1_plus": ap, "e1_minus": am, "e2_plus": bp, "e2_minus": bm},
    )


BUILTINS = {"isotropic": isotropic, "quadrant": quadrant, "weighted-l1": weighted_l1}


def by_name(name: str, coefficients: dict | None = None) -> Integrand:
    if name.startswith("mirrored(") and name.endswith(")"):
        return mirrored(by_name(name[len("mirrored("):-1], coefficients))
    if name not in BUILTINS:
        raise KeyError(f"unknown integrand {name!r}")
    if name == "weighted-l1":
        return weighted_l1(**(coefficients or {}))
    return BUILTINS[name]()


# ---------------------------------------------------------------------------
# polar


def _polar_sampled(integrand: Integrand, x: np.ndarray, s: np.ndarray) -> float:
    k = np.arange(POLAR_DIRECTIONS)
    theta = np.mod(k * GOLDEN_ANGLE, 2 * math.pi)
    dirs = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    ratio = (dirs @ s) / integrand.rule(np.broadcast_to(x, dirs.shape), dirs)
    i = int(np.argmax(ratio))
    best = float(ratio[i])

    def neg(t):
        u = np.array([math.cos(t), math.sin(t)])
        return -float(u @ s) / float(integrand.rule(x, u))

    spacing = 2 * math.pi / POLAR_DIRECTIONS
    refined = []
    for width in (2 * spacing, 4 * spacing):
        res = minimize_scalar(neg, bounds=(theta[i] - width, theta[i] + width),
                              method="bounded", options={"xatol": 1e-12})
        refined.append(max(best, -float(res.fun)))
    if abs(refined[0] - refined[1]) > POLAR_TOL * (1.0 + abs(refined[0])):
        raise SamplingBudgetExceeded(
            f"polar of {integrand.name} did not settle: {refined[0]} vs {refined[1]}")
    return max(refined)


def polar_eval(integrand: Integrand, x, xistar):
    """sup over xi != 0 of <xistar, xi> / phi(x, xi)."""
    s = _as_vec(xistar)
    if integrand.alpha <= 0:
        raise ValueError("polar needs a positive lower bound alpha")
    if integrand.polar_rule is not None:
        xx = np.zeros_like(s) if x is None else np.broadcast_to(_as_vec(x), s.shape)
        out = integrand.polar_rule(xx, s)
        return out if np.ndim(out) else float(out)
    xx = np.zeros_like(s) if x is None else np.broadcast_to(_as_vec(x), s.shape)
    if s.ndim == 1:
        return 0.0 if not np.any(s) else _polar_sampled(integrand, xx, s)
    flat_s = s.reshape(-1, 2)
    flat_x = xx.reshape(-1, 2)
    vals = [0.0 if not np.any(si) else _polar_sampled(integrand, xi_, si)
            for xi_, si in zip(flat_x, flat_s)]
    return np.array(vals).reshape(s.shape[:-1])


# ---------------------------------------------------------------------------
# structural checks


@dataclass
class StructureReport:
    homogeneity_residual: float
    alpha_hat: float
    beta_hat: float
    triangle_violation: float
    bounds_ok: bool
    convex_ok: bool

    @property
    def ok(self) -> bool:
        return self.bounds_ok and self.convex_ok and self.homogeneity_residual <= 1e-9


def check_structure(integrand: Integrand, sample_count: int = 1000, seed: int = 0,
                    tol: float = 1e-12) -> StructureReport:
    """Empirical homogeneity, comparability and subadditivity on random samples."""
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    rng = np.random.default_rng(seed)
    x = rng.uniform(-5, 5, (sample_count, 2))
    xi = rng.normal(size=(sample_count, 2)) * rng.uniform(0.1, 5, (sample_count, 1))
    tau = rng.normal(size=(sample_count, 2)) * rng.uniform(0.1, 5, (sample_count, 1))
    t = rng.uniform(0, 10, sample_count)
    f = integrand.rule
    fx = f(x, xi)
    hom = np.abs(f(x, t[:, None] * xi) - t * fx) / (1.0 + t * np.hypot(*xi.T))
    norm = np.hypot(xi[:, 0], xi[:, 1])
    ratio = fx / norm
    tri = f(x, xi + tau) - fx - f(x, tau)
    alpha_hat, beta_hat = float(ratio.min()), float(ratio.max())
    bounds_ok = (alpha_hat > 0 and alpha_hat >= integrand.alpha - 1e-9
                 and beta_hat <= integrand.beta + 1e-9)
    tri_max = float(tri.max())
    return StructureReport(
        homogeneity_residual=float(hom.max()),
        alpha_hat=alpha_hat,
        beta_hat=beta_hat,
        triangle_violation=tri_max,
        bounds_ok=bool(bounds_ok),
        convex_ok=bool(tri_max <= tol * (1 + float(np.abs(fx).max()))),
    )
