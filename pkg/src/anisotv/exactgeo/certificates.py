"""Divergence-field certificates: flux checks against signed curve measures.

A field sigma certifies the condition with constant C when div sigma equals the
signed measure and the polar of sigma stays below C. The flux check integrates
sigma . nu_out over the boundary of test shapes, evaluated on a copy of the
boundary pushed outward by FLUX_OFFSET so that mass sitting on the boundary
counts as inside (closure convention).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.special import roots_legendre, zeta

from ..errors import LevelOutOfRange, QuadratureNonConvergence
from ..integrand import Integrand, isotropic, polar_eval, quadrant
from .measures import Circle, CurveMeasure, Segment, measure_of, point_mass
from .shapes import (SIMILARITY_SHIFTS, Arc, Seg, Shape, disc, fractal_triangles,
                     polygon, rectangle)

FLUX_OFFSET = 1e-9
FLUX_TOL = 1e-6
POLAR_SLACK = 1e-9
QUAD_ABS = 1e-8

_GL_LO = roots_legendre(24)
_GL_HI = roots_legendre(48)


@dataclass(frozen=True)
class CertificateField:
    """Vector field given by a vectorized closed form plus its discontinuity curves.

    ``discontinuities`` holds finite segments (p, q) and circles (center, r);
    extra entries only cost a few more quadrature splits.
    """

    name: str
    field: Callable[[np.ndarray], np.ndarray]
    bound_C: float = 1.0
    seg_breaks: np.ndarray = field(default_factory=lambda: np.zeros((0, 2, 2)), repr=False)
    circle_breaks: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)), repr=False)
    sample_boxes: tuple = ((-3.0, -3.0, 3.0, 3.0),)
    pieces: tuple = ()

    def __call__(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        flat = pts.reshape(-1, 2)
        return self.field(flat).reshape(pts.shape)


@dataclass
class CertificateReport:
    fluxes: list
    targets: list
    residuals: list
    max_residual: float
    sup_polar: float
    bound_C: float
    passed: bool
    shapes: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {"residuals": [float(r) for r in self.residuals],
                "fluxes": [float(f) for f in self.fluxes],
                "targets": [float(t) for t in self.targets],
                "max_residual": float(self.max_residual),
                "sup_polar": float(self.sup_polar),
                "bound_C": float(self.bound_C), "passed": bool(self.passed)}


# ---------------------------------------------------------------------------
# breakpoints of a boundary piece against the discontinuity set


def _seg_breaks(pc: Seg, segs: np.ndarray, circles: np.ndarray) -> list[float]:
    p = np.asarray(pc.p, float)
    d = pc.vec
    out = []
    if len(segs):
        a = segs[:, 0, :]
        e = segs[:, 1, :] - a
        cross = d[0] * e[:, 1] - d[1] * e[:, 0]
        w = a - p
        ok = np.abs(cross) > 1e-15
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (w[:, 0] * e[:, 1] - w[:, 1] * e[:, 0]) / cross
            s = (w[:, 0] * d[1] - w[:, 1] * d[0]) / cross
        hit = ok & (t > 0) & (t < 1) & (s >= -1e-12) & (s <= 1 + 1e-12)
        out.extend(t[hit].tolist())
    if len(circles):
        c = circles[:, :2]
        r = circles[:, 2]
        f = p - c
        A = d @ d
        B = 2 * f @ d
        Cq = (f * f).sum(1) - r * r
        disc_ = B * B - 4 * A * Cq
        ok = disc_ >= 0
        sq = np.sqrt(np.where(ok, disc_, 0.0))
        for t in ((-B - sq) / (2 * A), (-B + sq) / (2 * A)):
            hit = ok & (t > 0) & (t < 1)
            out.extend(t[hit].tolist())
    return out


def _arc_breaks(pc: Arc, segs: np.ndarray, circles: np.ndarray) -> list[float]:
    c = np.asarray(pc.center, float)
    r = pc.r
    pts = []
    if len(segs):
        a = segs[:, 0, :]
        e = segs[:, 1, :] - a
        f = a - c
        A = (e * e).sum(1)
        B = 2 * (f * e).sum(1)
        Cq = (f * f).sum(1) - r * r
        disc_ = B * B - 4 * A * Cq
        ok = (disc_ >= 0) & (A > 0)
        sq = np.sqrt(np.where(ok, disc_, 0.0))
        for s in ((-B - sq) / (2 * A), (-B + sq) / (2 * A)):
            hit = ok & (s >= 0) & (s <= 1)
            pts.append(a[hit] + s[hit, None] * e[hit])
    if len(circles):
        c2 = circles[:, :2]
        r2 = circles[:, 2]
        dv = c2 - c
        dist = np.hypot(dv[:, 0], dv[:, 1])
        ok = (dist > 1e-14) & (dist <= r + r2) & (dist >= np.abs(r - r2))
        dist_s = np.where(ok, dist, 1.0)
        aa = (r * r - r2 * r2 + dist_s ** 2) / (2 * dist_s)
        hh = np.sqrt(np.maximum(r * r - aa * aa, 0.0))
        base = c + aa[:, None] * dv / dist_s[:, None]
        perp = np.stack([-dv[:, 1], dv[:, 0]], 1) / dist_s[:, None]
        pts.append((base + hh[:, None] * perp)[ok])
        pts.append((base - hh[:, None] * perp)[ok])
    if not pts:
        return []
    q = np.concatenate(pts)
    ang = np.arctan2(q[:, 1] - c[1], q[:, 0] - c[0])
    lo = min(pc.t0, pc.t1)
    ang = lo + np.mod(ang - lo, 2 * math.pi)
    t = (ang - pc.t0) / (pc.t1 - pc.t0)
    return t[(t > 0) & (t < 1)].tolist()


# ---------------------------------------------------------------------------
# flux quadrature


def _piece_flux_integrand(pc, sigma: CertificateField):
    """Return a vectorized f(t) for sigma . nu_out |x'(t)| along the piece."""
    if isinstance(pc, Seg):
        n_out = -pc.inward
        L = pc.length

        def f(t):
            return (sigma(pc.point(t)) @ n_out) * L
    else:
        speed = abs(pc.t1 - pc.t0) * pc.r

        def f(t):
            n_out = -pc.inward_at(t)
            return (sigma(pc.point(t)) * n_out).sum(-1) * speed
    return f


def _integrate(f, a: float, b: float) -> float:
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    lo = half * float(f(mid + half * _GL_LO[0]) @ _GL_LO[1])
    hi = half * float(f(mid + half * _GL_HI[0]) @ _GL_HI[1])
    if abs(lo - hi) <= 1e-13 * (1.0 + abs(hi)):
        return hi
    val, err = quad(lambda t: float(f(np.array([t]))[0]), a, b, epsabs=1e-10, epsrel=0, limit=500)
    if err > QUAD_ABS:
        raise QuadratureNonConvergence(f"flux quadrature error estimate {err:.2e} on [{a}, {b}]")
    return float(val)


def boundary_flux(sigma: CertificateField, shape: Shape, offset: float = FLUX_OFFSET) -> float:
    """Outward flux of sigma through the boundary of the shape (exterior trace)."""
    total = 0.0
    for pc in shape.pieces:
        sh = pc.offset(offset)
        if isinstance(sh, Seg):
            ts = _seg_breaks(sh, sigma.seg_breaks, sigma.circle_breaks)
        else:
            ts = _arc_breaks(sh, sigma.seg_breaks, sigma.circle_breaks)
        cuts = np.unique(np.clip(np.concatenate([[0.0, 1.0], ts]), 0.0, 1.0))
        f = _piece_flux_integrand(sh, sigma)
        for a, b in zip(cuts[:-1], cuts[1:]):
            if b - a > 1e-15:
                total += _integrate(f, float(a), float(b))
    return total


def sup_polar(sigma: CertificateField, integrand: Integrand, per_box: int = 250,
              seed: int = 0) -> float:
    """Largest polar value of sigma over a dense grid plus random points in each sample box."""
    rng = np.random.default_rng(seed)
    best = 0.0
    for (x0, y0, x1, y1) in sigma.sample_boxes:
        gx, gy = np.meshgrid(np.linspace(x0, x1, per_box), np.linspace(y0, y1, per_box))
        pts = np.concatenate([np.stack([gx.ravel(), gy.ravel()], 1),
                              rng.uniform((x0, y0), (x1, y1), (per_box * per_box, 2))])
        vals = polar_eval(integrand, pts, sigma(pts))
        best = max(best, float(np.max(vals)))
    return best


def check_certificate(sigma: CertificateField, target, test_shapes: Sequence[Shape],
                      integrand: Integrand, per_box: int = 250) -> CertificateReport:
    """Compare boundary fluxes with the target's mass on each closed test shape."""
    fluxes, targets, residuals = [], [], []
    for P in test_shapes:
        fl = boundary_flux(sigma, P)
        tg = measure_of(target, P, "closure")
        fluxes.append(fl)
        targets.append(tg)
        residuals.append(abs(fl - tg))
    max_res = max(residuals) if residuals else 0.0
    sp = sup_polar(sigma, integrand, per_box)
    passed = max_res <= FLUX_TOL and sp <= sigma.bound_C + POLAR_SLACK
    return CertificateReport(fluxes, targets, residuals, max_res, sp, sigma.bound_C,
                             bool(passed), list(test_shapes))


# ---------------------------------------------------------------------------
# concrete fields


def zero_field(bound_C: float = 1.0) -> CertificateField:
    return CertificateField("zero", lambda p: np.zeros_like(p), bound_C)


def _radial(coef_of_rho: Callable[[np.ndarray], np.ndarray]):
    def f(p):
        rho2 = (p * p).sum(-1)
        rho = np.sqrt(rho2)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = (coef_of_rho(rho) / rho2)[:, None] * p
        return np.where(rho2[:, None] > 0, out, 0.0)
    return f


def signed_ic_field(theta: float = 1.0) -> CertificateField:
    """0 inside the unit disc, -theta x/|x|^2 on the annulus 1<|x|<2, 2x/|x|^2 outside."""
    if not 0 < theta <= 1:
        raise ValueError("theta must lie in (0, 1]")
    coef = _radial(lambda r: np.where(r < 1, 0.0, np.where(r < 2, -theta, 2.0)))
    circles = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 2.0]])
    return CertificateField(f"signed-ic(theta={theta:g})", coef, 1.0, circle_breaks=circles,
                            sample_boxes=((-4.0, -4.0, 4.0, 4.0),),
                            pieces=("|x|<1: 0", "1<|x|<2: -theta x/|x|^2", "|x|>2: 2x/|x|^2"))


def signed_ic_target(theta: float = 1.0) -> list[CurveMeasure]:
    """Positive part on the circle of radius 2, negative part on the unit circle."""
    return [CurveMeasure(Circle((0.0, 0.0), 2.0), 1.0 + theta / 2.0),
            CurveMeasure(Circle((0.0, 0.0), 1.0), -theta)]


def eta_remainder(i):
    """sum_{j >= i} (-1)^(j-1) / j^2 via Hurwitz zeta values."""
    i = np.asarray(i, dtype=float)
    sign = np.where(np.mod(i, 2) == 1, 1.0, -1.0)
    return sign * 0.25 * (zeta(2.0, i / 2.0) - zeta(2.0, (i + 1.0) / 2.0))


def non_finite_field(n_breaks: int = 400) -> CertificateField:
    """alpha_i x/|x|^2 on the annulus 1/i^2 < |x| < 1/(i-1)^2, alpha_1 x/|x|^2 outside B_1."""
    def coef(rho):
        with np.errstate(divide="ignore"):
            i = np.where(rho > 1, 1.0, np.floor(1.0 / np.sqrt(rho)) + 1.0)
        return eta_remainder(i)
    circles = np.array([[0.0, 0.0, 1.0 / j ** 2] for j in range(1, n_breaks + 1)])
    boxes = tuple((-s, -s, s, s) for s in (3.0, 0.6, 0.12, 0.03, 0.006))
    return CertificateField("non-finite", _radial(coef), 1.0, circle_breaks=circles,
                            sample_boxes=boxes,
                            pieces=("|x|>1: alpha_1 x/|x|^2",
                                    "1/i^2<|x|<1/(i-1)^2: alpha_i x/|x|^2"))


def non_finite_target(n_circles: int = 60) -> list[CurveMeasure]:
    """Alternating unit-density circles of radius 1/j^2; circles past n_circles are lumped
    into a point mass at the origin (their total signed mass is summed independently)."""
    import mpmath

    out = [CurveMeasure(Circle((0.0, 0.0), 1.0 / j ** 2), (-1.0) ** (j - 1))
           for j in range(1, n_circles + 1)]
    tail = float(2 * mpmath.pi * mpmath.nsum(lambda j: (-1) ** (j - 1) / j ** 2,
                                              [n_circles + 1, mpmath.inf]))
    out.append(point_mass((0.0, 0.0), tail))
    return out


# --- fractal field ----------------------------------------------------------

_SHIFTS = np.array(SIMILARITY_SHIFTS)


def _outer_field(p: np.ndarray) -> np.ndarray:
    x, y = p[:, 0], p[:, 1]
    out = np.zeros_like(p)
    left = (x < 0) & (y > 0) & (y < 1)
    below = (y < 0) & (x > 0) & (x < 1)
    diag = (np.abs(y - x) < 1) & (x + y > 1)
    out[left] = (1.0, 0.0)
    out[below] = (0.0, 1.0)
    out[diag] = (-1.0, -1.0)
    return out


def _first_level_field(p: np.ndarray) -> np.ndarray:
    """Superposition of two rotations about (0, 2/3), (2/3, 0) and the diagonal strip."""
    x, y = p[:, 0], p[:, 1]
    out = np.zeros_like(p)
    d1 = np.hypot(x, y - 2 / 3)
    m1 = (d1 < 1 / 3) & (d1 > 0)
    out[m1] += np.stack([2 / 3 - y[m1], x[m1]], 1) / d1[m1, None]
    out[np.abs(y - x) < 1 / 3] += (-1.0, -1.0)
    d3 = np.hypot(x - 2 / 3, y)
    m3 = (d3 < 1 / 3) & (d3 > 0)
    out[m3] += np.stack([y[m3], 2 / 3 - x[m3]], 1) / d3[m3, None]
    return out


def _in_unit_triangle(p: np.ndarray) -> np.ndarray:
    return (p[:, 0] >= 0) & (p[:, 1] >= 0) & (p[:, 0] + p[:, 1] <= 1)


def _fractal_field(level: int):
    def f(p):
        out = _outer_field(p)
        idx = np.flatnonzero(_in_unit_triangle(p))
        cur = p[idx]
        out[idx] = 0.0
        for _ in range(level):
            if not len(idx):
                break
            nxt_idx, nxt = [], []
            claimed = np.zeros(len(idx), bool)
            for s in _SHIFTS:
                y = 3 * cur - s
                m = _in_unit_triangle(y) & ~claimed
                claimed |= m
                nxt_idx.append(idx[m])
                nxt.append(y[m])
            rest = ~claimed
            out[idx[rest]] = _first_level_field(cur[rest])
            idx = np.concatenate(nxt_idx)
            cur = np.concatenate(nxt) if nxt else cur[:0]
        # whatever is left lies in the level-th iterate, where the field vanishes
        return out
    return f


def _triangle_edges(tri: np.ndarray) -> list:
    return [(tri[i], tri[(i + 1) % 3]) for i in range(3)]


def build_fractal_certificate(level: int) -> CertificateField:
    """Field whose divergence is minus theta times H^1 on the boundary of the level-th iterate."""
    if not 1 <= level <= 6:
        raise LevelOutOfRange(f"fractal certificate level must be in 1..6, got {level}")
    return _fractal_certificate(level)


def triangle_certificate() -> CertificateField:
    """Level-zero variant: the same outer pieces and zero on the unit triangle."""
    return _fractal_certificate(0)


def _fractal_certificate(level: int) -> CertificateField:
    big = 50.0
    segs = [((0, -big), (0, big)), ((-big, 0), (big, 0)), ((1, -big), (1, big)),
            ((-big, 1), (big, 1)), ((-big, -big + 1), (big, big + 1)),
            ((-big, -big - 1), (big, big - 1)), ((-big, big + 1), (big, -big + 1))]
    circles = []
    inner_segs = ([((0, 1 / 3), (1 / 3, 2 / 3)), ((1 / 3, 0), (2 / 3, 1 / 3))]
                  + [e for t in fractal_triangles(1) for e in _triangle_edges(t)])
    inner_circles = [(0.0, 2 / 3, 1 / 3), (2 / 3, 0.0, 1 / 3)]
    for depth in range(level):
        # affine images T_w for all words of this length: x -> (x + offset) / 3**depth
        scale = 3.0 ** -depth
        offs = fractal_triangles(depth)[:, 0, :]  # image of the origin under T_w
        for o in offs:
            for a, b in inner_segs:
                segs.append((o + scale * np.asarray(a), o + scale * np.asarray(b)))
            for cx, cy, r in inner_circles:
                circles.append((o[0] + scale * cx, o[1] + scale * cy, scale * r))
    for t in fractal_triangles(level):
        segs.extend(_triangle_edges(t))
    seg_arr = np.array([[np.asarray(a, float), np.asarray(b, float)] for a, b in segs])
    circ_arr = np.array(circles, dtype=float).reshape(-1, 3)
    return CertificateField(f"fractal(level={level})", _fractal_field(level), 1.0,
                            seg_breaks=seg_arr, circle_breaks=circ_arr,
                            sample_boxes=((-1.5, -1.5, 2.5, 2.5), (0.0, 0.0, 1.0, 1.0),
                                          (0.0, 0.0, 1 / 3, 1 / 3)),
                            pieces=("outside the unit triangle: fixed constant pieces",
                                    "first-level ring: two rotations and a diagonal strip",
                                    "deeper levels: copies under the three similarities"))


def fractal_target(level: int) -> list[CurveMeasure]:
    """-H^1 on axis-parallel and -sqrt(2) H^1 on diagonal edges of the level-th iterate."""
    out = []
    for t in fractal_triangles(level):
        a, b, c = (tuple(map(float, v)) for v in t)
        out.append(CurveMeasure(Segment(a, b), -1.0))
        out.append(CurveMeasure(Segment(b, c), -math.sqrt(2.0)))
        out.append(CurveMeasure(Segment(c, a), -1.0))
    return out


# ---------------------------------------------------------------------------
# test shape batteries


def _random_convex_polygon(rng, center, radius, n) -> Shape:
    ang = np.sort(rng.uniform(0, 2 * math.pi, n))
    rad = radius * rng.uniform(0.6, 1.0, n)
    pts = np.asarray(center) + np.stack([rad * np.cos(ang), rad * np.sin(ang)], 1)
    # convex hull keeps the polygon simple
    from scipy.spatial import ConvexHull
    hull = ConvexHull(pts)
    return polygon(pts[hull.vertices])


def shape_battery(kind: str, count: int = 24, seed: int = 0) -> list[Shape]:
    """Generic test shapes for the named field; boundaries cross discontinuities transversally."""
    rng = np.random.default_rng(seed)
    shapes: list[Shape] = []
    if kind == "signed-ic":
        for r in (0.5, 1.3, 1.7, 2.6, 3.4):
            shapes.append(disc((0.0, 0.0), r))
        while len(shapes) < count:
            c = rng.uniform(-2.5, 2.5, 2)
            if len(shapes) % 2:
                shapes.append(disc(tuple(c), float(rng.uniform(0.3, 2.5))))
            else:
                shapes.append(_random_convex_polygon(rng, c, rng.uniform(0.5, 2.5), 7))
    elif kind == "non-finite":
        for i in range(2, 9):
            lo, hi = 1 / i ** 2, 1 / (i - 1) ** 2
            shapes.append(disc((0.0, 0.0), float(rng.uniform(lo, hi))))
        shapes.append(disc((0.0, 0.0), 1.7))
        while len(shapes) < count:
            s = 10 ** rng.uniform(-2.5, 0.3)
            c = rng.uniform(-s, s, 2) * 0.8
            if len(shapes) % 2:
                shapes.append(disc(tuple(c), float(s)))
            else:
                shapes.append(_random_convex_polygon(rng, c, s, 6))
    elif kind.startswith("fractal"):
        level = int(kind.split(":")[1]) if ":" in kind else 1
        shapes.append(polygon(fractal_triangles(0)[0]))
        for j in range(1, level + 1):
            tris = fractal_triangles(j)
            for t in tris[rng.choice(len(tris), min(2, len(tris)), replace=False)]:
                shapes.append(polygon(t))
        while len(shapes) < count:
            c = rng.uniform(-0.3, 1.1, 2)
            s = float(10 ** rng.uniform(-1.5, -0.2))
            pick = len(shapes) % 3
            if pick == 0:
                shapes.append(disc(tuple(c), s))
            elif pick == 1:
                shapes.append(rectangle(c[0], c[1], c[0] + s * rng.uniform(0.5, 2),
                                        c[1] + s * rng.uniform(0.5, 2)))
            else:
                shapes.append(_random_convex_polygon(rng, c, s, 5))
    else:
        raise ValueError(f"no test battery for {kind!r}")
    return shapes[:max(count, len(shapes))]


def certificate_by_name(name: str, level: int = 1, theta: float = 1.0):
    """(field, target, integrand, test-shape kind) for a named certificate."""
    if name == "signed-ic":
        return signed_ic_field(theta), signed_ic_target(theta), isotropic(), "signed-ic"
    if name == "non-finite":
        return non_finite_field(), non_finite_target(), isotropic(), "non-finite"
    if name == "fractal":
        fld = triangle_certificate() if level == 0 else build_fractal_certificate(level)
        return (fld, fractal_target(level), quadrant(),
                f"fractal:{level}")
    raise ValueError(f"unknown certificate {name!r}")
