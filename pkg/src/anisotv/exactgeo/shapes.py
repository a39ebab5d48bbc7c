"""Exact planar shapes described by oriented boundary pieces (segments and circular arcs).

Orientation convention: the region lies to the left of every boundary piece, so
for a segment p -> q the inward unit normal is the left normal of q - p, and for
an arc traversed counter-clockwise the inward normal points to the center.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.integrate import quad

from ..integrand import Integrand

TOL = 1e-12
QUAD_TOL = 1e-10

INSIDE, BOUNDARY, OUTSIDE = 1, 0, -1


@dataclass(frozen=True)
class Seg:
    p: tuple
    q: tuple

    @property
    def vec(self) -> np.ndarray:
        return np.subtract(self.q, self.p, dtype=float)

    @property
    def length(self) -> float:
        return float(np.hypot(*self.vec))

    @property
    def inward(self) -> np.ndarray:
        t = self.vec / self.length
        return np.array([-t[1], t[0]])

    def point(self, t):
        t = np.asarray(t, dtype=float)
        return np.asarray(self.p, float) + t[..., None] * self.vec

    def distance(self, pts: np.ndarray) -> np.ndarray:
        p = np.asarray(self.p, float)
        v = self.vec
        s = np.clip(((pts - p) @ v) / (v @ v), 0.0, 1.0)
        d = pts - (p + s[..., None] * v)
        return np.hypot(d[..., 0], d[..., 1])

    def offset(self, eps: float) -> "Seg":
        """Parallel copy moved by eps along the outward normal."""
        n = -self.inward * eps
        return Seg(tuple(np.add(self.p, n)), tuple(np.add(self.q, n)))


@dataclass(frozen=True)
class Arc:
    """Arc of the circle (center, r) from angle t0 to t1; ccw iff t1 > t0."""

    center: tuple
    r: float
    t0: float
    t1: float

    @property
    def length(self) -> float:
        return abs(self.t1 - self.t0) * self.r

    @property
    def ccw(self) -> bool:
        return self.t1 > self.t0

    def point(self, t):
        """Point at parameter t in [0, 1]."""
        ang = self.t0 + np.asarray(t, dtype=float) * (self.t1 - self.t0)
        c = np.asarray(self.center, float)
        return c + self.r * np.stack([np.cos(ang), np.sin(ang)], axis=-1)

    def inward_at(self, t) -> np.ndarray:
        ang = self.t0 + np.asarray(t, dtype=float) * (self.t1 - self.t0)
        radial = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
        return -radial if self.ccw else radial

    def distance(self, pts: np.ndarray) -> np.ndarray:
        c = np.asarray(self.center, float)
        d = pts - c
        ang = np.arctan2(d[..., 1], d[..., 0])
        lo, hi = sorted((self.t0, self.t1))
        rho = np.hypot(d[..., 0], d[..., 1])
        full = hi - lo >= 2 * math.pi - 1e-15
        if full:
            return np.abs(rho - self.r)
        # angular membership modulo 2 pi
        rel = np.mod(ang - lo, 2 * math.pi)
        on = rel <= hi - lo
        ends = np.stack([self.point(0.0), self.point(1.0)])
        dend = np.min(np.hypot(pts[..., None, 0] - ends[:, 0], pts[..., None, 1] - ends[:, 1]), axis=-1)
        return np.where(on, np.abs(rho - self.r), dend)

    def offset(self, eps: float) -> "Arc":
        return Arc(self.center, self.r + (eps if self.ccw else -eps), self.t0, self.t1)


Piece = Seg | Arc


# ---------------------------------------------------------------------------
# shapes


@dataclass(frozen=True)
class Shape:
    """A closed planar region given by kind, parameters and boundary pieces."""

    kind: str
    params: dict
    pieces: tuple = field(repr=False)
    convex: bool = False
    # pieces of each convex component, for unions (fractal iterates)
    components: tuple = field(default=(), repr=False)

    # --- derived quantities -------------------------------------------------
    @cached_property
    def area(self) -> float:
        # Green's theorem: area = 1/2 * closed integral of (x dy - y dx)
        total = 0.0
        for pc in self.pieces:
            if isinstance(pc, Seg):
                (x0, y0), (x1, y1) = pc.p, pc.q
                total += 0.5 * (x0 * y1 - x1 * y0)
            else:
                cx, cy = pc.center
                r, a, b = pc.r, pc.t0, pc.t1
                total += 0.5 * (r * r * (b - a)
                                + cx * r * (math.sin(b) - math.sin(a))
                                - cy * r * (math.cos(b) - math.cos(a)))
        return total

    @property
    def perimeter(self) -> float:
        return sum(pc.length for pc in self.pieces)

    @cached_property
    def bbox(self) -> tuple:
        pts = []
        for pc in self.pieces:
            if isinstance(pc, Seg):
                pts += [pc.p, pc.q]
            else:
                c = np.asarray(pc.center)
                pts += [tuple(c - pc.r), tuple(c + pc.r)]
        if not pts:
            return (0.0, 0.0, 0.0, 0.0)
        a = np.array(pts, dtype=float)
        return (*a.min(axis=0), *a.max(axis=0))

    @property
    def scale(self) -> float:
        x0, y0, x1, y1 = self.bbox
        return max(1.0, x1 - x0, y1 - y0)

    # --- membership ---------------------------------------------------------
    def boundary_distance(self, pts) -> np.ndarray:
        pts = np.asarray(pts, float)
        if not self.pieces:
            return np.full(pts.shape[:-1], np.inf)
        return np.min([pc.distance(pts) for pc in self.pieces], axis=0)

    def classify(self, pts, tol: float = TOL) -> np.ndarray:
        """+1 strictly inside, 0 on the boundary (within tol * scale), -1 outside."""
        pts = np.asarray(pts, float)
        if not self.pieces:
            return np.full(pts.shape[:-1], OUTSIDE)
        on = self.boundary_distance(pts) <= tol * self.scale
        inside = self._winding(pts) != 0
        return np.where(on, BOUNDARY, np.where(inside, INSIDE, OUTSIDE))

    def _winding(self, pts: np.ndarray) -> np.ndarray:
        """Nonzero for points in the open region; boundary points are handled by classify."""
        p = self.params
        if self.kind in ("disc", "annulus", "half_disc"):
            c = np.asarray(p.get("center", (0.0, 0.0)))
            rho = np.hypot(pts[..., 0] - c[0], pts[..., 1] - c[1])
            if self.kind == "disc":
                return (rho < p["radius"]).astype(int)
            if self.kind == "annulus":
                return ((rho > p["r_in"]) & (rho < p["r_out"])).astype(int)
            return ((rho < p["radius"]) & (pts[..., 1] > p["cut"])).astype(int)
        out = np.zeros(pts.shape[:-1], dtype=int)
        for comp in self.components:
            total = np.zeros(pts.shape[:-1])
            for pc in comp:
                a = np.asarray(pc.p) - pts
                b = np.asarray(pc.q) - pts
                total += np.arctan2(a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0],
                                    (a * b).sum(-1))
            out += np.rint(total / (2 * math.pi)).astype(int)
        return out

    def contains(self, pts, closed: bool = True) -> np.ndarray:
        cls = self.classify(pts)
        return cls >= BOUNDARY if closed else cls == INSIDE


def _orient(vertices) -> float:
    v = np.asarray(vertices, float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _segments_cross(p1, p2, p3, p4) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    d1, d2 = orient(p3, p4, p1), orient(p3, p4, p2)
    d3, d4 = orient(p1, p2, p3), orient(p1, p2, p4)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


def polygon(vertices: Sequence[Sequence[float]]) -> Shape:
    """Simple polygon with counter-clockwise vertices (no repeated closing vertex)."""
    v = [tuple(map(float, p)) for p in vertices]
    if len(v) < 3:
        raise ValueError("polygon needs at least 3 vertices")
    if _orient(v) <= 0:
        raise ValueError("polygon vertices must be counter-clockwise")
    n = len(v)
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if _segments_cross(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]):
                raise ValueError("polygon is self-intersecting")
    pieces = tuple(Seg(v[i], v[(i + 1) % n]) for i in range(n))
    convex = _is_convex(v)
    return Shape("polygon", {"vertices": v}, pieces, convex, (pieces,))


def _is_convex(v) -> bool:
    a = np.asarray(v, float)
    e = np.roll(a, -1, axis=0) - a
    cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
    return bool(np.all(cross >= -1e-14))


def rectangle(x0, y0, x1, y1) -> Shape:
    return polygon([(x0, y0), (x1, y0), (x1, y1), (x0, y1)])


def disc(center=(0.0, 0.0), radius: float = 1.0) -> Shape:
    if radius <= 0:
        raise ValueError("radius must be positive")
    c = tuple(map(float, center))
    pieces = (Arc(c, float(radius), -math.pi, math.pi),)
    return Shape("disc", {"center": c, "radius": float(radius)}, pieces, True, (pieces,))


def annulus(center=(0.0, 0.0), r_in: float = 1.0, r_out: float = 2.0) -> Shape:
    if not 0 < r_in < r_out:
        raise ValueError("need 0 < r_in < r_out")
    c = tuple(map(float, center))
    pieces = (Arc(c, float(r_out), -math.pi, math.pi), Arc(c, float(r_in), math.pi, -math.pi))
    return Shape("annulus", {"center": c, "r_in": float(r_in), "r_out": float(r_out)}, pieces)


def half_disc(radius: float = 2.0, cut: float = -1.0) -> Shape:
    """{x in B_radius : x_2 > cut}, the domain of the non-existence example by default."""
    if not -radius < cut < radius:
        raise ValueError("cut must lie strictly inside the disc")
    w = math.sqrt(radius * radius - cut * cut)
    a0 = math.atan2(cut, w)            # right end of the chord
    a1 = math.atan2(cut, -w) + 2 * math.pi  # left end, ccw from a0
    pieces = (Arc((0.0, 0.0), float(radius), a0, a1), Seg((-w, cut), (w, cut)))
    return Shape("half_disc", {"radius": float(radius), "cut": float(cut)}, pieces, True, (pieces,))


def empty() -> Shape:
    return Shape("empty", {}, (), True, ())


# --- fractal iterates ------------------------------------------------------

UNIT_TRIANGLE = ((0.0, 0.0), (1.0, 0.0), (0.0, 1.0))
SIMILARITY_SHIFTS = ((0.0, 2.0), (0.0, 0.0), (2.0, 0.0))  # T_i(x) = (x + shift_i) / 3


def fractal_triangles(level: int) -> np.ndarray:
    """Vertices of the 3**level triangles of the level-th iterate, shape (3**level, 3, 2).

    Triangles are listed in address order: the address digits i_1 ... i_k select
    T_{i_1} o ... o T_{i_k}(unit triangle).
    """
    if level < 0:
        raise ValueError("level must be >= 0")
    tri = np.array([UNIT_TRIANGLE], dtype=float)
    shifts = np.array(SIMILARITY_SHIFTS)
    for _ in range(level):
        # apply T_i to every triangle of the previous level, i outermost
        tri = ((tri[None, :, :, :] + shifts[:, None, None, :]) / 3.0).reshape(-1, 3, 2)
    return tri


def fractal_iterate(level: int) -> Shape:
    tris = fractal_triangles(level)
    comps = []
    for t in tris:
        a, b, c = (tuple(p) for p in t)
        comps.append((Seg(a, b), Seg(b, c), Seg(c, a)))
    pieces = tuple(pc for comp in comps for pc in comp)
    return Shape("fractal", {"level": int(level)}, pieces, level == 0, tuple(comps))


def from_literal(lit: dict) -> Shape:
    """Build a shape from a JSON literal ``{"kind": ..., ...}``."""
    kind = lit.get("kind")
    if kind == "polygon":
        return polygon(lit["vertices"])
    if kind == "disc":
        return disc(lit.get("center", (0.0, 0.0)), lit["radius"])
    if kind == "annulus":
        return annulus(lit.get("center", (0.0, 0.0)), lit["r_in"], lit["r_out"])
    if kind == "half_disc":
        return half_disc(lit.get("radius", 2.0), lit.get("cut", -1.0))
    if kind == "fractal":
        return fractal_iterate(int(lit["level"]))
    if kind == "empty":
        return empty()
    raise ValueError(f"unknown shape kind {kind!r}")


def to_literal(shape: Shape) -> dict:
    out = {"kind": shape.kind}
    for k, v in shape.params.items():
        out[k] = [list(p) for p in v] if k == "vertices" else (list(v) if isinstance(v, tuple) else v)
    return out


# ---------------------------------------------------------------------------
# anisotropic perimeter


def piece_perimeter(pc: Piece, integrand: Integrand) -> float:
    """Integral of phi(x, inward normal) over one boundary piece."""
    if isinstance(pc, Seg):
        if pc.length == 0:
            return 0.0
        n = pc.inward
        if not integrand.coefficients.get("x_dependent", False):
            mid = 0.5 * (np.asarray(pc.p) + np.asarray(pc.q))
            return pc.length * float(integrand.rule(mid, n))
        val, _ = quad(lambda t: float(integrand.rule(pc.point(t), n)), 0, 1,
                      epsabs=QUAD_TOL, epsrel=0, limit=200)
        return pc.length * val
    span = abs(pc.t1 - pc.t0)

    def f(t):
        return float(integrand.rule(pc.point(t), pc.inward_at(t)))
    if integrand.is_even and integrand.name == "isotropic":
        return pc.length
    # quadrature in the angle; split at axis directions where built-ins have kinks
    kinks = []
    lo, hi = sorted((pc.t0, pc.t1))
    k0 = math.ceil(lo / (math.pi / 4))
    while k0 * math.pi / 4 < hi:
        kinks.append((k0 * math.pi / 4 - pc.t0) / (pc.t1 - pc.t0))
        k0 += 1
    val, _ = quad(f, 0, 1, points=sorted(kinks) or None, epsabs=QUAD_TOL / max(span * pc.r, 1e-300),
                  epsrel=0, limit=400)
    return span * pc.r * val


def aniso_perimeter(shape: Shape, integrand: Integrand) -> float:
    """P_phi(A): sum over boundary pieces of the integral of phi(x, inward normal)."""
    return float(sum(piece_perimeter(pc, integrand) for pc in shape.pieces))
