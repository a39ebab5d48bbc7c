"""Finite-volume grids: masked cell domains, grid functions with boundary datum,
edge/cell measures and the discrete functionals built from them.

Cells are axis-aligned squares of width h. Cell (row r, col c) occupies
[x0 + c h, x0 + (c+1) h] x [y0 + r h, y0 + (r+1) h]. Active cells are numbered
in row-major order of the mask.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy import ndimage

from .integrand import Integrand, isotropic


@dataclass(frozen=True, eq=False)
class GridDomain:
    h: float
    mask: np.ndarray
    origin: tuple = (0.0, 0.0)
    ndim: int = 2

    def __post_init__(self):
        m = np.asarray(self.mask, dtype=bool)
        if m.ndim != 2:
            raise ValueError("mask must be a 2D array (use shape (1, n) for lines)")
        if not m.any():
            raise ValueError("mask must contain at least one active cell")
        if self.h <= 0:
            raise ValueError("h must be positive")
        if self.ndim == 1 and m.shape[0] != 1:
            raise ValueError("1D domains use a single-row mask")
        _, ncomp = ndimage.label(m)
        if ncomp != 1:
            raise ValueError("mask must be 4-connected")
        object.__setattr__(self, "mask", m)

    # --- constructors -------------------------------------------------------
    @classmethod
    def box(cls, nx: int, ny: int, h: float = 1.0, origin=(0.0, 0.0)) -> "GridDomain":
        return cls(h, np.ones((ny, nx), bool), tuple(origin))

    @classmethod
    def line(cls, n: int, h: float = 1.0, origin: float = 0.0) -> "GridDomain":
        return cls(h, np.ones((1, n), bool), (float(origin), 0.0), ndim=1)

    @classmethod
    def from_bitmap(cls, rows, h: float = 1.0, origin=(0.0, 0.0)) -> "GridDomain":
        """Rows are listed top to bottom, as they read in a file; '#'/'1' mark active cells."""
        if isinstance(rows[0], str):
            arr = np.array([[ch in "#1xX" for ch in r] for r in rows], bool)
        else:
            arr = np.asarray(rows, bool)
        return cls(h, arr[::-1].copy(), tuple(origin))

    @classmethod
    def from_shape(cls, shape, h: float) -> "GridDomain":
        """Cells whose centers lie in the closed shape; the lattice is aligned to multiples of h."""
        x0, y0, x1, y1 = shape.bbox
        c0, r0 = math.floor(x0 / h) - 1, math.floor(y0 / h) - 1
        c1, r1 = math.ceil(x1 / h) + 1, math.ceil(y1 / h) + 1
        xs = (np.arange(c0, c1) + 0.5) * h
        ys = (np.arange(r0, r1) + 0.5) * h
        gx, gy = np.meshgrid(xs, ys)
        inside = shape.contains(np.stack([gx, gy], -1))
        rows = np.flatnonzero(inside.any(1))
        cols = np.flatnonzero(inside.any(0))
        m = inside[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1]
        return cls(h, m, ((c0 + cols[0]) * h, (r0 + rows[0]) * h))

    # --- indexing -----------------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.mask.shape

    @cached_property
    def cell_index(self) -> np.ndarray:
        idx = -np.ones(self.mask.shape, dtype=np.int64)
        idx[self.mask] = np.arange(int(self.mask.sum()))
        return idx

    @property
    def n_cells(self) -> int:
        return int(self.mask.sum())

    @cached_property
    def cell_rc(self) -> np.ndarray:
        return np.argwhere(self.mask)

    @cached_property
    def centers(self) -> np.ndarray:
        rc = self.cell_rc
        return np.asarray(self.origin) + self.h * (rc[:, ::-1] + 0.5)

    @property
    def cell_mass(self) -> float:
        """Lebesgue measure of one cell (h^N)."""
        return self.h ** self.ndim

    @property
    def edge_weight(self) -> float:
        """H^{N-1} of one edge (h^{N-1})."""
        return self.h ** (self.ndim - 1)

    @cached_property
    def interior_edges(self) -> "EdgeSet":
        idx = self.cell_index
        a_list, b_list, d_list = [], [], []
        # horizontal neighbours: b to the right of a
        a, b = idx[:, :-1], idx[:, 1:]
        ok = (a >= 0) & (b >= 0)
        a_list.append(a[ok]); b_list.append(b[ok]); d_list.append(np.tile([1.0, 0.0], (ok.sum(), 1)))
        if self.ndim == 2:
            a, b = idx[:-1, :], idx[1:, :]
            ok = (a >= 0) & (b >= 0)
            a_list.append(a[ok]); b_list.append(b[ok])
            d_list.append(np.tile([0.0, 1.0], (ok.sum(), 1)))
        ia = np.concatenate(a_list)
        ib = np.concatenate(b_list)
        d = np.concatenate(d_list).reshape(-1, 2)
        mid = 0.5 * (self.centers[ia] + self.centers[ib]) if len(ia) else np.zeros((0, 2))
        return EdgeSet(ia, ib, d, mid)

    @cached_property
    def boundary_edges(self) -> "BoundarySet":
        """Edges between an active and an inactive (or outside) cell, with inward normal."""
        pad = np.pad(self.mask, 1)
        idx = np.pad(self.cell_index, 1, constant_values=-1)
        cells, normals, mids = [], [], []
        steps = [((0, 1), (-1.0, 0.0)), ((0, -1), (1.0, 0.0))]
        if self.ndim == 2:
            steps += [((1, 0), (0.0, -1.0)), ((-1, 0), (0.0, 1.0))]
        for (dr, dc), nu in steps:
            nb = np.roll(pad, (-dr, -dc), axis=(0, 1))
            hit = pad & ~nb
            c = idx[hit]
            cells.append(c)
            normals.append(np.tile(nu, (len(c), 1)))
            # midpoint sits half a cell from the center, against the inward normal
            mids.append(self.centers[c] - 0.5 * self.h * np.asarray(nu))
        c = np.concatenate(cells)
        order = np.lexsort((np.concatenate(normals)[:, 1], np.concatenate(normals)[:, 0], c))
        return BoundarySet(c[order], np.concatenate(normals)[order].reshape(-1, 2),
                           np.concatenate(mids)[order].reshape(-1, 2))

    def edge_lookup(self, a: int, b: int) -> int:
        """Index of the interior edge between active cells a and b."""
        e = self.interior_edges
        hit = np.flatnonzero(((e.a == a) & (e.b == b)) | ((e.a == b) & (e.b == a)))
        if not len(hit):
            raise ValueError(f"cells {a} and {b} are not neighbours")
        return int(hit[0])

    @cached_property
    def _weights_cache(self) -> dict:
        return {}

    def weights(self, integrand: Integrand) -> "EdgeWeights":
        key = (integrand.name, tuple(sorted((k, v) for k, v in integrand.coefficients.items()
                                            if not k.startswith("_"))))
        cache = self._weights_cache
        if key not in cache:
            ie, be = self.interior_edges, self.boundary_edges
            w = self.edge_weight
            cache[key] = EdgeWeights(
                w * np.asarray(integrand(ie.mid, ie.d), float).reshape(-1),
                w * np.asarray(integrand(ie.mid, -ie.d), float).reshape(-1),
                w * np.asarray(integrand(be.mid, be.normal), float).reshape(-1),
                w * np.asarray(integrand(be.mid, -be.normal), float).reshape(-1))
        return cache[key]

    def circumradius(self) -> float:
        """Radius of the smallest disc containing every active cell."""
        import shapely
        rc = self.cell_rc
        corners = np.concatenate([rc + off for off in ((0, 0), (0, 1), (1, 0), (1, 1))])
        pts = np.asarray(self.origin) + self.h * corners[:, ::-1]
        return float(shapely.minimum_bounding_radius(shapely.MultiPoint(np.unique(pts, axis=0))))


@dataclass(frozen=True)
class EdgeSet:
    a: np.ndarray       # cell on the "from" side
    b: np.ndarray       # cell on the "to" side
    d: np.ndarray       # unit vector from a to b
    mid: np.ndarray

    def __len__(self) -> int:
        return len(self.a)


@dataclass(frozen=True)
class BoundarySet:
    cell: np.ndarray
    normal: np.ndarray  # inward unit normal of the domain
    mid: np.ndarray

    def __len__(self) -> int:
        return len(self.cell)


@dataclass(frozen=True)
class EdgeWeights:
    """Edge costs (already multiplied by the edge measure).

    up[e] = phi(d_e), down[e] = phi(-d_e) for interior edges;
    b_in[k] = phi(nu_k), b_out[k] = phi(-nu_k) for boundary edges.
    """

    up: np.ndarray
    down: np.ndarray
    b_in: np.ndarray
    b_out: np.ndarray


# ---------------------------------------------------------------------------
# grid functions and measures


@dataclass
class GridFunction:
    values: np.ndarray
    datum: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.datum = np.asarray(self.datum, dtype=float)
        if not (np.all(np.isfinite(self.values)) and np.all(np.isfinite(self.datum))):
            raise ValueError("grid function values must be finite")

    @classmethod
    def constant(cls, dom: GridDomain, c: float, datum: float | None = None) -> "GridFunction":
        return cls(np.full(dom.n_cells, float(c)),
                   np.full(len(dom.boundary_edges), float(c if datum is None else datum)))

    @classmethod
    def with_datum(cls, dom: GridDomain, values, u0) -> "GridFunction":
        """u0 may be a scalar, an array over boundary edges or a callable of edge midpoints."""
        nb = len(dom.boundary_edges)
        if callable(u0):
            datum = np.asarray(u0(dom.boundary_edges.mid), float).reshape(nb)
        else:
            datum = np.broadcast_to(np.asarray(u0, float), (nb,)).copy()
        vals = np.broadcast_to(np.asarray(values, float), (dom.n_cells,)).copy()
        return cls(vals, datum)

    def __neg__(self) -> "GridFunction":
        return GridFunction(-self.values, -self.datum)

    def __add__(self, other: "GridFunction") -> "GridFunction":
        return GridFunction(self.values + other.values, self.datum + other.datum)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        return GridFunction(self.values - other.values, self.datum - other.datum)

    def shifted(self, c: float) -> "GridFunction":
        return GridFunction(self.values + c, self.datum + c)

    def scaled(self, t: float) -> "GridFunction":
        return GridFunction(t * self.values, t * self.datum)

    def positive_part(self) -> "GridFunction":
        return GridFunction(np.maximum(self.values, 0), np.maximum(self.datum, 0))

    def negative_part(self) -> "GridFunction":
        return GridFunction(np.maximum(-self.values, 0), np.maximum(-self.datum, 0))

    def as_image(self, dom: GridDomain, fill=np.nan) -> np.ndarray:
        img = np.full(dom.shape, fill, dtype=float)
        img[dom.mask] = self.values
        return img


@dataclass
class DiscreteMeasure:
    """Signed measure: cell densities (times h^N per cell) plus atoms on interior edges.

    ``atom_edges`` index ``dom.interior_edges``; each atom carries nonnegative masses
    for the positive and the negative part.
    """

    cell_density: np.ndarray
    atom_edges: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    m_plus: np.ndarray = field(default_factory=lambda: np.zeros(0))
    m_minus: np.ndarray = field(default_factory=lambda: np.zeros(0))
    mutually_singular: bool = False

    def __post_init__(self):
        self.cell_density = np.asarray(self.cell_density, float)
        self.atom_edges = np.asarray(self.atom_edges, np.int64).reshape(-1)
        self.m_plus = np.asarray(self.m_plus, float).reshape(-1)
        self.m_minus = np.asarray(self.m_minus, float).reshape(-1)
        if not (len(self.atom_edges) == len(self.m_plus) == len(self.m_minus)):
            raise ValueError("atom arrays must have equal length")
        arrays = (self.cell_density, self.m_plus, self.m_minus)
        if not all(np.all(np.isfinite(a)) for a in arrays):
            raise ValueError("measure masses must be finite")
        if np.any(self.m_plus < 0) or np.any(self.m_minus < 0):
            raise ValueError("atom masses must be nonnegative")
        if self.mutually_singular and np.any(np.minimum(self.m_plus, self.m_minus) > 0):
            raise ValueError("atoms carry both parts but the measure is flagged mutually singular")

    @classmethod
    def zero(cls, dom: GridDomain) -> "DiscreteMeasure":
        return cls(np.zeros(dom.n_cells))

    @classmethod
    def from_atoms(cls, dom: GridDomain, atoms, cell_density=None, **kw) -> "DiscreteMeasure":
        """atoms: iterable of ((cell_a, cell_b), m_plus, m_minus)."""
        atoms = list(atoms)
        edges = [dom.edge_lookup(a, b) for (a, b), _, _ in atoms]
        cd = np.zeros(dom.n_cells) if cell_density is None else cell_density
        return cls(cd, edges, [a[1] for a in atoms], [a[2] for a in atoms], **kw)

    def jordan(self) -> tuple["DiscreteMeasure", "DiscreteMeasure"]:
        """Nonnegative parts (mu_+, mu_-), each stored in the m_plus / positive-density slots."""
        z = np.zeros_like(self.m_plus)
        return (DiscreteMeasure(np.maximum(self.cell_density, 0), self.atom_edges, self.m_plus, z),
                DiscreteMeasure(np.maximum(-self.cell_density, 0), self.atom_edges, self.m_minus, z))

    def negated(self) -> "DiscreteMeasure":
        return DiscreteMeasure(-self.cell_density, self.atom_edges, self.m_minus, self.m_plus,
                               self.mutually_singular)

    def scaled(self, t: float) -> "DiscreteMeasure":
        if t < 0:
            return self.negated().scaled(-t)
        return DiscreteMeasure(t * self.cell_density, self.atom_edges, t * self.m_plus,
                               t * self.m_minus, self.mutually_singular)

    def total_variation(self, dom: GridDomain) -> float:
        return float(dom.cell_mass * np.abs(self.cell_density).sum()
                     + self.m_plus.sum() + self.m_minus.sum())

    def net_atoms(self, dom: GridDomain) -> np.ndarray:
        """Net atom mass (m_plus - m_minus) per interior edge."""
        out = np.zeros(len(dom.interior_edges))
        np.add.at(out, self.atom_edges, self.m_plus - self.m_minus)
        return out

    def average_cell_load(self, dom: GridDomain) -> np.ndarray:
        """Per-cell linear load of the average pairing: cell mass plus half of each adjacent atom."""
        ie = dom.interior_edges
        load = dom.cell_mass * self.cell_density.copy()
        net = self.m_plus - self.m_minus
        np.add.at(load, ie.a[self.atom_edges], 0.5 * net)
        np.add.at(load, ie.b[self.atom_edges], 0.5 * net)
        return load


# ---------------------------------------------------------------------------
# functionals


def _edge_tv(dom: GridDomain, wts: EdgeWeights, values: np.ndarray, datum: np.ndarray):
    ie, be = dom.interior_edges, dom.boundary_edges
    d = values[ie.b] - values[ie.a]
    inner = wts.up * np.maximum(d, 0) + wts.down * np.maximum(-d, 0)
    g = values[be.cell] - datum
    bnd = wts.b_in * np.maximum(g, 0) + wts.b_out * np.maximum(-g, 0)
    return inner, bnd


def tv_phi(w: GridFunction, dom: GridDomain, integrand: Integrand | None = None) -> float:
    """Anisotropic TV with boundary penalization against the datum.

    A cell value above the datum is charged phi(nu) on that boundary edge and a
    value below it phi(-nu), nu the inward normal of the domain.
    """
    integrand = integrand or isotropic()
    _check_shapes(w, dom)
    inner, bnd = _edge_tv(dom, dom.weights(integrand), w.values, w.datum)
    return float(math.fsum(inner) + math.fsum(bnd))


def _check_shapes(w: GridFunction, dom: GridDomain):
    if w.values.shape != (dom.n_cells,) or w.datum.shape != (len(dom.boundary_edges),):
        raise ValueError("grid function does not match the domain")


REPRESENTATIVES = ("lower_vs_upper", "average", "upper_vs_lower")


def measure_pairing(w: GridFunction, mu: DiscreteMeasure, dom: GridDomain,
                    representative: str = "lower_vs_upper") -> float:
    ie = dom.interior_edges
    cells = dom.cell_mass * float(np.dot(mu.cell_density, w.values))
    wa = w.values[ie.a[mu.atom_edges]]
    wb = w.values[ie.b[mu.atom_edges]]
    lo, hi = np.minimum(wa, wb), np.maximum(wa, wb)
    if representative == "lower_vs_upper":
        atoms = mu.m_plus * lo - mu.m_minus * hi
    elif representative == "average":
        atoms = (mu.m_plus - mu.m_minus) * 0.5 * (wa + wb)
    elif representative == "upper_vs_lower":
        atoms = mu.m_plus * hi - mu.m_minus * lo
    else:
        raise ValueError(f"representative must be one of {REPRESENTATIVES}")
    return float(cells + math.fsum(atoms))


def phi_hat(w, dom, integrand, mu, u0=None) -> float:
    """TV with boundary term plus the lower/upper representative pairing."""
    w = _with_datum(w, dom, u0)
    return tv_phi(w, dom, integrand) + measure_pairing(w, mu, dom, "lower_vs_upper")


def phi(w, dom, integrand, mu, u0=None) -> float:
    """TV with boundary term plus the average representative pairing."""
    w = _with_datum(w, dom, u0)
    return tv_phi(w, dom, integrand) + measure_pairing(w, mu, dom, "average")


def _with_datum(w, dom, u0):
    if u0 is None:
        return w
    return GridFunction.with_datum(dom, w.values if isinstance(w, GridFunction) else w, u0)


def truncate(w: GridFunction, M: float) -> GridFunction:
    if M <= 0:
        raise ValueError("M must be positive")
    return GridFunction(np.clip(w.values, -M, M), np.clip(w.datum, -M, M))


def set_perimeter(inside: np.ndarray, datum_inside: np.ndarray, dom: GridDomain,
                  integrand: Integrand) -> float:
    """P_phi of the cell set, with boundary edges charged where cell and datum disagree."""
    wts = dom.weights(integrand)
    ie, be = dom.interior_edges, dom.boundary_edges
    ina, inb = inside[ie.a], inside[ie.b]
    inner = wts.up[inb & ~ina].sum() + wts.down[ina & ~inb].sum()
    ic = inside[be.cell]
    bnd = wts.b_in[ic & ~datum_inside].sum() + wts.b_out[datum_inside & ~ic].sum()
    return float(inner + bnd)


def coarea_tv(w: GridFunction, dom: GridDomain, integrand: Integrand | None = None) -> float:
    """Integral over t of the perimeter of the superlevel set {w > t}."""
    integrand = integrand or isotropic()
    _check_shapes(w, dom)
    levels = np.unique(np.concatenate([w.values, w.datum]))
    parts = []
    for lo, hi in zip(levels[:-1], levels[1:]):
        parts.append((hi - lo) * set_perimeter(w.values > lo, w.datum > lo, dom, integrand))
    return float(math.fsum(parts))


# ---------------------------------------------------------------------------
# measures from curves


def circle_atoms(dom: GridDomain, center, radius: float, density: float):
    """Edge atoms on the staircase boundary of the pixel disc of the given circle.

    Each crossing edge gets density * h * |n_e . nu| with nu the radial direction at the
    edge midpoint, so the total mass approximates density * 2 pi radius.
    """
    ie = dom.interior_edges
    c = np.asarray(center, float)
    ra = np.hypot(*(dom.centers[ie.a] - c).T)
    rb = np.hypot(*(dom.centers[ie.b] - c).T)
    hit = (ra < radius) != (rb < radius)
    nu = ie.mid[hit] - c
    nu /= np.hypot(nu[:, 0], nu[:, 1])[:, None]
    mass = abs(density) * dom.edge_weight * np.abs((ie.d[hit] * nu).sum(1))
    return np.flatnonzero(hit), mass


def vertical_segment_atoms(dom: GridDomain, x: float, y0: float, y1: float, density: float):
    """Atoms on the vertical interfaces at abscissa x with midpoints in (y0, y1)."""
    ie = dom.interior_edges
    hit = ((ie.d[:, 0] == 1.0) & (np.abs(ie.mid[:, 0] - x) < 1e-9 * max(1.0, dom.h))
           & (ie.mid[:, 1] > y0) & (ie.mid[:, 1] < y1))
    return np.flatnonzero(hit), np.full(int(hit.sum()), abs(density) * dom.edge_weight)


def pixel_set_boundary_atoms(dom: GridDomain, inside: np.ndarray, mass_per_edge: float):
    """Atoms on every interior edge separating the cell set from its complement."""
    ie = dom.interior_edges
    hit = inside[ie.a] != inside[ie.b]
    return np.flatnonzero(hit), np.full(int(hit.sum()), float(mass_per_edge))


# ---------------------------------------------------------------------------
# export


def to_csv(w: GridFunction, dom: GridDomain, path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["x", "y", "value"])
        for (x, y), v in zip(dom.centers, w.values):
            out.writerow([f"{x:.12g}", f"{y:.12g}", f"{v:.17g}"])


def read_csv(path) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 2]
