"""Weighted-area versus perimeter for radially decreasing densities centered at the origin."""
from __future__ import annotations

import math

import numpy as np
from scipy.integrate import quad

from ..integrand import isotropic
from .measures import Circle, _circle_angles_vs_piece, _line_params_vs_piece
from .shapes import Arc, Seg, Shape, aniso_perimeter

MODES = ("one_over_r", "capped")


def _radial_primitive(mode: str):
    """F with F' (rho) = H(rho) * rho, so that the area integral along a ray is F(b) - F(a)."""
    if mode == "one_over_r":
        return lambda r: r
    if mode == "capped":
        # H = 2 inside the unit disc, 1/|x| outside
        return lambda r: r * r if r <= 1.0 else r
    raise ValueError(f"mode must be one of {MODES}")


def _angular_breaks(shape: Shape) -> list[float]:
    angs = []
    for pc in shape.pieces:
        if isinstance(pc, Seg):
            angs += [math.atan2(pc.p[1], pc.p[0]), math.atan2(pc.q[1], pc.q[0])]
        else:
            cx, cy = pc.center
            d = math.hypot(cx, cy)
            for t in (0.0, 1.0):
                q = pc.point(t)
                angs.append(math.atan2(q[1], q[0]))
            if d > pc.r:
                base = math.atan2(cy, cx)
                off = math.asin(pc.r / d)
                angs += [base - off, base + off]
        angs += _circle_angles_vs_piece(Circle((0.0, 0.0), 1.0), pc)
    return sorted(np.mod(angs, 2 * math.pi).tolist())


def _ray_integral(shape: Shape, theta: float, F) -> float:
    u = np.array([math.cos(theta), math.sin(theta)])
    rhos = {0.0}
    for pc in shape.pieces:
        rhos.update(t for t in _line_params_vs_piece((0.0, 0.0), u, pc) if t > 0)
    x0, y0, x1, y1 = shape.bbox
    rhos.add(2.0 * max(math.hypot(x, y) for x in (x0, x1) for y in (y0, y1)) + 1.0)
    rhos = np.array(sorted(rhos))
    mids = 0.5 * (rhos[:-1] + rhos[1:])
    inside = shape.classify(mids[:, None] * u) >= 0
    return float(sum(F(b) - F(a) for a, b, keep in zip(rhos[:-1], rhos[1:], inside) if keep))


def radial_density_ic_check(shape: Shape, mode: str = "one_over_r") -> tuple[float, float]:
    """(integral of H over the shape, perimeter of the shape)."""
    F = _radial_primitive(mode)
    if not shape.pieces:
        return 0.0, 0.0
    rhs = aniso_perimeter(shape, isotropic())
    cuts = sorted(set([0.0, 2 * math.pi] + _angular_breaks(shape)))
    lhs = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b - a > 1e-14:
            val, _ = quad(lambda t: _ray_integral(shape, t, F), a, b, epsabs=1e-12, epsrel=1e-12,
                          limit=200)
            lhs += val
    return lhs, rhs
