"""Minimizers for the discrete functionals.

phi (TV plus average pairing) is a linear program, solved with a diagonally
preconditioned primal-dual iteration and certified by an exactly feasible dual
point. phi_hat adds concave atom terms; it is handled by difference-of-convex
rounds, each a phi-type problem with modified cell loads. A combinatorial
oracle minimizes either functional exactly on tiny grids.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog
from scipy.sparse.linalg import splu

from .errors import NotConverged, TooLarge, UnboundedDetected
from .grid import (DiscreteMeasure, GridDomain, GridFunction, measure_pairing, phi, phi_hat,
                   tv_phi)
from .icheck import _box, _operator, dual_norm
from .integrand import Integrand

ORACLE_MAX_CELLS = 9


@dataclass
class SolveConfig:
    max_iters: int = 100_000
    tol_primal_dual: float = 1e-7
    dc_max_rounds: int = 50
    dc_tol: float = 1e-9
    dc_restarts: int = 32
    quantization_step: float = 1.0 / 64
    seed: int = 0
    check_every: int = 50
    snapshot_stride: int = 0
    unbounded_factor: float = 1e6
    backend: str = "pdhg"

    def __post_init__(self):
        if self.tol_primal_dual <= 0 or self.dc_tol <= 0 or self.quantization_step <= 0:
            raise ValueError("tolerances must be positive")
        if self.dc_max_rounds < 1 or self.max_iters < 1:
            raise ValueError("need at least one round and one iteration")
        if self.backend not in ("pdhg", "highs"):
            raise ValueError("backend must be 'pdhg' or 'highs'")


@dataclass
class SolveReport:
    minimizer: GridFunction
    value: float
    functional: str
    iterations: int = 0
    gap: float = float("nan")
    converged: bool = True
    round_values: list = field(default_factory=list)
    monotone: bool = True
    oracle_value: Optional[float] = None
    oracle_band: Optional[float] = None
    snapshots: list = field(default_factory=list, repr=False)
    dual: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def oracle_gap(self) -> Optional[float]:
        return None if self.oracle_value is None else self.value - self.oracle_value

    def to_dict(self) -> dict:
        out = {"functional": self.functional, "value": self.value, "iterations": self.iterations,
               "gap": self.gap, "converged": self.converged,
               "round_values": list(map(float, self.round_values)), "monotone": self.monotone,
               "max_abs_minimizer": float(np.abs(self.minimizer.values).max())}
        if self.oracle_value is not None:
            out.update(oracle_value=self.oracle_value, oracle_band=self.oracle_band,
                       oracle_gap=self.oracle_gap)
        if self.snapshots:
            out["snapshots"] = [s.tolist() for s in self.snapshots]
        return out


# ---------------------------------------------------------------------------
# linear-load TV problems


class _LPSolver:
    """min_w TV_phi^{u0}(w) + <load, w> for a fixed domain, integrand and datum."""

    def __init__(self, dom: GridDomain, integrand: Integrand, datum: np.ndarray):
        self.dom = dom
        self.K = _operator(dom)
        self.KT = self.K.T.tocsr()
        self.up, self.down = _box(dom, integrand)
        self.b = np.concatenate([np.zeros(len(dom.interior_edges)), datum])
        self.datum = datum
        self.lap = splu((self.KT @ self.K).tocsc())
        self.tau = 1.0 / np.asarray(abs(self.K).sum(0)).ravel()
        self.sig = 1.0 / np.asarray(abs(self.K).sum(1)).ravel()

    def primal(self, w, load) -> float:
        d = self.K @ w - self.b
        return float(self.up @ np.maximum(d, 0) + self.down @ np.maximum(-d, 0) + load @ w)

    def dual_bound(self, y, load) -> float:
        """Lower bound from any dual point y.

        y is projected onto K^T y = -load and clipped to the box; the leftover
        residual is paired against [min u0, max u0], which holds the values of a
        vertex minimizer whenever the problem is bounded.
        """
        yp = y - self.K @ self.lap.solve(self.KT @ y + load)
        yc = np.clip(yp, -self.down, self.up)
        res = load + self.KT @ yc
        lo, hi = self.datum_range
        return float(-yc @ self.b + np.minimum(res * lo, res * hi).sum())

    @property
    def datum_range(self):
        if len(self.datum) == 0:
            return 0.0, 0.0
        return float(self.datum.min()), float(self.datum.max())

    def solve(self, load, w0, cfg: SolveConfig, scale: float, y0=None,
              stop_above: float = math.inf):
        """PDHG until the certified gap is small, or the lower bound reaches stop_above."""
        if cfg.backend == "highs":
            return self._solve_highs(load, scale, cfg)
        w = w0.copy()
        y = np.zeros(self.K.shape[0]) if y0 is None else y0.copy()
        w_bar = w.copy()
        best_lb = -math.inf
        it = 0
        gap = math.inf
        snaps = []
        threshold = -cfg.unbounded_factor * (1.0 + scale)
        while it < cfg.max_iters:
            for _ in range(cfg.check_every):
                y = np.clip(y + self.sig * (self.K @ w_bar - self.b), -self.down, self.up)
                w_new = w - self.tau * (self.KT @ y + load)
                w_bar = 2 * w_new - w
                w = w_new
                it += 1
                if cfg.snapshot_stride and it % cfg.snapshot_stride == 0:
                    snaps.append(w.copy())
            p = self.primal(w, load)
            if p < threshold:
                raise UnboundedDetected(f"objective {p:.3e} fell below {threshold:.3e}")
            best_lb = max(best_lb, self.dual_bound(y, load))
            gap = p - best_lb
            if gap < -1e-9 * (1.0 + abs(p) + scale):
                # the bound is valid for every bounded instance, so exceeding p refutes boundedness
                raise UnboundedDetected(f"dual bound {best_lb:.6g} exceeds objective {p:.6g}")
            if gap <= cfg.tol_primal_dual * (1.0 + abs(p)) or best_lb >= stop_above:
                break
        return w, y, it, gap, snaps


    def _solve_highs(self, load, scale, cfg):
        # variables (w, p, q) with K w - b = p - q, p, q >= 0
        n, m = self.K.shape[1], self.K.shape[0]
        eye = sp.identity(m, format="csr")
        A = sp.hstack([self.K, -eye, eye]).tocsc()
        cost = np.concatenate([load, self.up, self.down])
        bounds = [(None, None)] * n + [(0, None)] * (2 * m)
        res = linprog(cost, A_eq=A, b_eq=self.b, bounds=bounds, method="highs")
        if res.status == 3:
            raise UnboundedDetected("linear program is unbounded")
        if res.status != 0:
            raise NotConverged(f"HiGHS stopped: {res.message}", math.inf)
        w = res.x[:n]
        p = self.primal(w, load)
        if p < -cfg.unbounded_factor * (1.0 + scale):
            raise UnboundedDetected(f"objective {p:.3e} below the unboundedness threshold")
        y = np.asarray(res.eqlin.marginals)
        lb = max(self.dual_bound(y, load), self.dual_bound(-y, load))
        return w, -y if self.dual_bound(-y, load) >= self.dual_bound(y, load) else y, 0, p - lb, []


def _datum(dom: GridDomain, u0) -> np.ndarray:
    nb = len(dom.boundary_edges)
    if u0 is None:
        return np.zeros(nb)
    if isinstance(u0, GridFunction):
        return u0.datum.copy()
    if callable(u0):
        return np.asarray(u0(dom.boundary_edges.mid), float).reshape(nb)
    return np.broadcast_to(np.asarray(u0, float), (nb,)).copy()


def _data_scale(dom, mu: DiscreteMeasure, datum) -> float:
    return mu.total_variation(dom) + float(np.abs(datum).max(initial=0.0))


def _snap_to_datum(w: np.ndarray, datum: np.ndarray) -> np.ndarray:
    """Round w onto the datum values when that lowers the objective.

    Bounded problems have a minimizer taking only datum values, so rounding a
    near-optimal iterate usually lands on it exactly.
    """
    vals = np.unique(datum) if len(datum) else np.zeros(1)
    nearest = np.abs(w[:, None] - vals[None, :]).argmin(axis=1)
    return vals[nearest]


def _handle_not_converged(dom, integrand, mu, gap, it, scale):
    # a stalled solve on data with constant above one is unbounded, not slow
    try:
        dn = dual_norm(mu, dom, integrand, max_iters=4000, tol=1e-3, raise_on_fail=False,
                       decide_at=1.0)
    except Exception:  # pragma: no cover - diagnostics only
        dn = None
    if dn is not None and dn.lower > 1.0 + 1e-3:
        raise UnboundedDetected(f"dual norm lower bound {dn.lower:.4f} exceeds 1")
    raise NotConverged(f"primal-dual gap {gap:.3e} after {it} iterations", gap)


def minimize_phi(dom: GridDomain, integrand: Integrand, mu: DiscreteMeasure, u0=None,
                 cfg: SolveConfig | None = None, w0=None, raise_on_fail: bool = True) -> SolveReport:
    """Minimize TV_phi^{u0}(w) + <mu, w> with the average representative on atoms."""
    cfg = cfg or SolveConfig()
    datum = _datum(dom, u0)
    load = mu.average_cell_load(dom)
    solver = _LPSolver(dom, integrand, datum)
    w_init = np.full(dom.n_cells, float(np.mean(datum))) if w0 is None else np.asarray(w0, float)
    scale = _data_scale(dom, mu, datum)
    w, y, it, gap, snaps = solver.solve(load, w_init, cfg, scale)
    converged = gap <= cfg.tol_primal_dual * (1.0 + abs(solver.primal(w, load)))
    if not converged and raise_on_fail:
        _handle_not_converged(dom, integrand, mu, gap, it, scale)
    gf = GridFunction(w, datum)
    val = phi(gf, dom, integrand, mu)
    snapped = GridFunction(_snap_to_datum(w, datum), datum)
    sval = phi(snapped, dom, integrand, mu)
    if sval < val:
        gf, val = snapped, sval
    return SolveReport(gf, val, "phi", it, gap, converged, [val], True, snapshots=snaps, dual=y)


def _linearized_load(dom: GridDomain, mu: DiscreteMeasure, w: np.ndarray,
                     override: dict | None = None) -> np.ndarray:
    """Cell loads of the tangent of the concave atom terms at w.

    m_plus * min(wa, wb) and -m_minus * max(wa, wb) are linearized by the active
    cell; ties take the average. ``override`` maps atom index to the fraction given
    to cell a (used to probe extreme subgradients at ties).
    """
    ie = dom.interior_edges
    load = dom.cell_mass * mu.cell_density.copy()
    a = ie.a[mu.atom_edges]
    b = ie.b[mu.atom_edges]
    wa, wb = w[a], w[b]
    # fraction of the min-term sitting on a; the max-term takes the complement
    frac_min_a = np.where(wa < wb, 1.0, np.where(wa > wb, 0.0, 0.5))
    if override:
        for k, f in override.items():
            frac_min_a[k] = f
    frac_max_a = 1.0 - frac_min_a
    np.add.at(load, a, mu.m_plus * frac_min_a - mu.m_minus * frac_max_a)
    np.add.at(load, b, mu.m_plus * (1 - frac_min_a) - mu.m_minus * (1 - frac_max_a))
    return load


def _restart_patterns(n_atoms: int, count: int, seed: int):
    """Distinct 0/1 assignments of the concave atom terms, all of them when few."""
    if n_atoms == 0 or count <= 0:
        return []
    if n_atoms <= 20 and count >= 2 ** n_atoms:
        codes = np.arange(2 ** n_atoms)
    else:
        rng = np.random.default_rng(seed)
        seen: set = set()
        codes = []
        while len(codes) < count:
            bits = tuple(rng.integers(0, 2, n_atoms))
            if bits not in seen:
                seen.add(bits)
                codes.append(bits)
        return [np.array(c, float) for c in codes]
    return [((int(c) >> np.arange(n_atoms)) & 1).astype(float) for c in codes]


def minimize_phi_hat(dom: GridDomain, integrand: Integrand, mu: DiscreteMeasure, u0=None,
                     cfg: SolveConfig | None = None, raise_on_fail: bool = True,
                     start: SolveReport | None = None) -> SolveReport:
    """Difference-of-convex rounds for TV + lower/upper pairing, started at the phi minimizer.

    After the first descent, ``cfg.dc_restarts`` further descents start from random
    extreme linearizations; the best end point wins. ``start`` reuses a phi solve.
    """
    cfg = cfg or SolveConfig()
    datum = _datum(dom, u0)
    if start is None:
        start = minimize_phi(dom, integrand, mu, datum, cfg, raise_on_fail=raise_on_fail)
    solver = _LPSolver(dom, integrand, datum)
    scale = _data_scale(dom, mu, datum)

    def value(w):
        return phi_hat(GridFunction(w, datum), dom, integrand, mu)

    has_atoms = len(mu.atom_edges) > 0 and bool(np.any(mu.m_plus + mu.m_minus > 0))
    ie = dom.interior_edges
    total_it = start.iterations
    gap = start.gap

    def descend(w, y, cur, rounds):
        nonlocal total_it, gap
        tie_tol = 1e-7 * (1.0 + float(np.abs(w).max(initial=0.0)))
        for _ in range(cfg.dc_max_rounds):
            ties = np.flatnonzero(np.abs(w[ie.a[mu.atom_edges]] - w[ie.b[mu.atom_edges]]) <= tie_tol)
            # extreme subgradients at ties, probed one atom at a time after the averaged one
            candidates = [None] + [{int(k): f} for k in ties[:16] for f in (0.0, 1.0)]
            for ov in candidates:
                # the averaged tangent is tight only away from ties; extreme ones always are
                stop = cur - cfg.dc_tol if (ov is not None or len(ties) == 0) else math.inf
                w_new, y_new, it, g, _ = solver.solve(_linearized_load(dom, mu, w, ov), w, cfg,
                                                      scale, y0=y, stop_above=stop)
                total_it += it
                new = value(w_new)
                if new < cur - cfg.dc_tol:
                    w, y, cur, gap = w_new, y_new, new, g
                    rounds.append(cur)
                    break
            else:
                break
        return w, y, cur

    w = start.minimizer.values.copy()
    y = start.dual
    rounds = [value(w)]
    if has_atoms:
        w, y, cur = descend(w, y, rounds[0], rounds)
        for pattern in _restart_patterns(len(mu.atom_edges), cfg.dc_restarts, cfg.seed):
            w0, y0, it, _, _ = solver.solve(_linearized_load(dom, mu, w, dict(enumerate(pattern))),
                                            w, cfg, scale, y0=y)
            total_it += it
            w1, y1, c1 = descend(w0, y0, value(w0), [])
            if c1 < cur - cfg.dc_tol:
                w, y, cur = w1, y1, c1
                rounds.append(cur)
    else:
        cur = rounds[0]
    snapped = _snap_to_datum(w, datum)
    sval = value(snapped)
    if sval < cur:
        w, cur = snapped, sval
        rounds.append(cur)
    gf = GridFunction(w, datum)
    mono = all(b <= a + 1e-15 for a, b in zip(rounds[:-1], rounds[1:]))
    return SolveReport(gf, cur, "phi_hat", total_it, gap, start.converged, rounds, mono)


# ---------------------------------------------------------------------------
# exact oracle on tiny grids


@dataclass
class OracleResult:
    value: float
    argmin: np.ndarray
    exact: bool
    error_band: float
    unbounded: bool = False


def _level_terms(dom: GridDomain, integrand: Integrand, mu: DiscreteMeasure, functional: str):
    """Per-subset energies: raising the set S by one unit, and lowering it by one unit."""
    n = dom.n_cells
    wts = dom.weights(integrand)
    ie, be = dom.interior_edges, dom.boundary_edges
    codes = np.arange(1 << n, dtype=np.int64)
    bits = ((codes[:, None] >> np.arange(n)) & 1).astype(bool)
    ina, inb = bits[:, ie.a], bits[:, ie.b]
    enter, leave = inb & ~ina, ina & ~inb
    jump_up = enter @ wts.up + leave @ wts.down
    jump_down = enter @ wts.down + leave @ wts.up
    lin = bits @ (dom.cell_mass * mu.cell_density)
    ea, eb = ie.a[mu.atom_edges], ie.b[mu.atom_edges]
    both = bits[:, ea] & bits[:, eb]
    either = bits[:, ea] | bits[:, eb]
    if functional == "phi_hat":
        atom_up = both @ mu.m_plus - either @ mu.m_minus
        atom_down = -(either @ mu.m_plus) + both @ mu.m_minus
    elif functional == "phi":
        atom_up = (bits[:, ea].astype(float) + bits[:, eb]) @ (0.5 * (mu.m_plus - mu.m_minus))
        atom_down = -atom_up
    else:
        raise ValueError("functional must be 'phi' or 'phi_hat'")
    bcell = bits[:, be.cell]
    return bits, jump_up + lin + atom_up, jump_down - lin + atom_down, bcell, wts


def oracle_minimize(dom: GridDomain, integrand: Integrand, mu: DiscreteMeasure, u0=None,
                    value_set=None, functional: str = "phi_hat",
                    step: Optional[float] = None) -> OracleResult:
    """Exact minimum over value_set^cells by dynamic programming over nested level sets.

    With the datum values inside value_set the result is the minimum over all real
    grid functions (piecewise-linear functional, vertices at datum values); otherwise
    the reported band is a Lipschitz bound times the largest gap to a datum value.
    """
    n = dom.n_cells
    if n > ORACLE_MAX_CELLS:
        raise TooLarge(f"oracle handles at most {ORACLE_MAX_CELLS} cells, got {n}")
    datum = _datum(dom, u0)
    V = np.unique(datum) if value_set is None else np.unique(np.asarray(value_set, float))
    if step is not None:
        V = np.unique(np.concatenate([V, np.arange(V.min(), V.max() + step / 2, step)]))
    bits, e_up, e_down, bcell, wts = _level_terms(dom, integrand, mu, functional)
    b_in, b_out = wts.b_in, wts.b_out

    # unbounded iff some recession direction +-1_S has negative slope
    if (e_up + bcell @ b_in).min() < -1e-12 or (e_down + bcell @ b_out).min() < -1e-12:
        return OracleResult(-math.inf, np.zeros(n), True, 0.0, unbounded=True)

    # w = v0 + sum_k (v_k - v_{k-1}) 1_{S_k} with S_1 ⊇ S_2 ⊇ ...
    v0 = V[0]
    const = _pairing_const(dom, mu, v0)
    const += float(b_in @ np.maximum(v0 - datum, 0) + b_out @ np.maximum(datum - v0, 0))
    K = len(V) - 1
    best = None
    choice = []
    for k in range(K, 0, -1):
        lo, hi = V[k - 1], V[k]
        above = np.clip(hi - np.maximum(lo, datum), 0, None)    # |[lo,hi] cap [u0,inf)|
        below = np.clip(np.minimum(hi, datum) - lo, 0, None)    # |[lo,hi] cap (-inf,u0]|
        G = (hi - lo) * e_up + bcell @ (b_in * above) - bcell @ (b_out * below)
        if best is None:
            best = G
            choice.append(None)
        else:
            sub, arg = _subset_min(best, n)
            best = G + sub
            choice.append(arg)
    exact = bool(np.all(np.isin(np.unique(datum), V)))
    band = 0.0 if exact else _lipschitz(dom, wts, mu) * _max_gap(V, datum)
    if best is None:
        return OracleResult(const, np.full(n, v0), exact, band)
    top = int(np.argmin(best))
    value = const + float(best[top])
    chain = [top]
    for arg in reversed(choice[1:]):
        chain.append(int(arg[chain[-1]]))
    w = np.full(n, v0)
    for k, code in enumerate(chain, start=1):
        w = w + (V[k] - V[k - 1]) * bits[code]
    return OracleResult(value, w, exact, band)


def _pairing_const(dom, mu, v0) -> float:
    c = dom.cell_mass * float(mu.cell_density.sum()) * v0
    return c + float((mu.m_plus - mu.m_minus).sum()) * v0


def _subset_min(f: np.ndarray, n: int):
    """g(S) = min over T subset of S of f(T), with the minimizing T."""
    g = f.copy()
    arg = np.arange(len(f))
    for i in range(n):
        bit = 1 << i
        idx = np.flatnonzero(np.arange(len(f)) & bit)
        alt = idx ^ bit
        better = g[alt] < g[idx]
        g[idx] = np.where(better, g[alt], g[idx])
        arg[idx] = np.where(better, arg[alt], arg[idx])
    return g, arg


def _lipschitz(dom, wts, mu) -> float:
    return float(wts.up.sum() + wts.down.sum() + wts.b_in.sum() + wts.b_out.sum()
                 + mu.total_variation(dom))


def _max_gap(V, datum) -> float:
    return float(np.max(np.min(np.abs(np.unique(datum)[:, None] - V[None, :]), axis=1)))


# ---------------------------------------------------------------------------
# consistency gap of the equal-mass segment example


def consistency_gap(h: float, integrand: Integrand | None = None, with_measure: bool = True,
                    cfg: SolveConfig | None = None, density: float = 1.0):
    """(inf phi, min phi_hat) on the unit disc with datum sgn(x_1) and equal-mass atoms
    on the vertical diameter."""
    from .exactgeo.shapes import disc
    from .grid import vertical_segment_atoms
    from .integrand import isotropic

    integrand = integrand or isotropic()
    dom = GridDomain.from_shape(disc((0.0, 0.0), 1.0), h)
    datum = np.sign(dom.boundary_edges.mid[:, 0])
    if with_measure:
        edges, mass = vertical_segment_atoms(dom, 0.0, -1.0, 1.0, density)
        mu = DiscreteMeasure(np.zeros(dom.n_cells), edges, mass, mass)
    else:
        mu = DiscreteMeasure.zero(dom)
    # the phi minimizer is already the symmetric candidate; restarts only add cost here
    cfg = cfg or SolveConfig(dc_restarts=0)
    rp = minimize_phi(dom, integrand, mu, datum, cfg)
    rh = minimize_phi_hat(dom, integrand, mu, datum, cfg, start=rp)
    return rp.value, rh.value, rp, rh


@dataclass
class RefinementRow:
    h: float
    n_cells: int
    value: float
    sup_norm: float
    datum_max: float

    def to_dict(self) -> dict:
        return dict(h=self.h, n_cells=self.n_cells, value=self.value, sup_norm=self.sup_norm,
                    datum_max=self.datum_max)


def half_disc_problem(h: float, variant: str = "one_over_r", alpha: float = 0.4):
    """Half disc {|x| < 2, x_2 > -1} with mu = -H dx and datum (|x| - 1)^(-alpha).

    ``variant`` is "one_over_r" (H = 1/|x|) or "capped" (H = 2 on the unit disc).
    """
    from .exactgeo.shapes import half_disc

    if not 0.0 < alpha < 0.5:
        raise ValueError("alpha must lie in (0, 1/2)")
    dom = GridDomain.from_shape(half_disc(), h)
    r = np.hypot(*dom.centers.T)
    if variant == "one_over_r":
        H = 1.0 / r
    elif variant == "capped":
        H = np.where(r <= 1.0, 2.0, 1.0 / r)
    else:
        raise ValueError("variant must be 'one_over_r' or 'capped'")
    mid = dom.boundary_edges.mid
    # boundary midpoints on the flat cut sit at |x| > 1, so the datum is finite
    datum = (np.hypot(*mid.T) - 1.0) ** (-alpha)
    return dom, DiscreteMeasure(-H), datum


def refinement_study(variant: str = "one_over_r", hs=(1 / 8, 1 / 16, 1 / 32, 1 / 64),
                     alpha: float = 0.4, cfg: SolveConfig | None = None) -> list[RefinementRow]:
    """inf phi_hat and the minimizer sup-norm along a mesh refinement (no atoms, so phi_hat = phi)."""
    from .integrand import isotropic

    cfg = cfg or SolveConfig(backend="highs")
    rows = []
    for h in hs:
        dom, mu, datum = half_disc_problem(h, variant, alpha)
        rep = minimize_phi(dom, isotropic(), mu, datum, cfg)
        rows.append(RefinementRow(h, dom.n_cells, rep.value,
                                  float(np.abs(rep.minimizer.values).max()), float(datum.max())))
    return rows


def blowup_summary(rows: list[RefinementRow]) -> dict:
    """Sup-norm growth and relative value drift between the coarsest and finest rows."""
    first, last = rows[0], rows[-1]
    growth = last.sup_norm / first.sup_norm if first.sup_norm > 0 else math.inf
    drift = abs(last.value - rows[-2].value) / max(abs(last.value), 1e-300) if len(rows) > 1 else 0.0
    return dict(sup_norm_growth=growth, value_drift=drift,
                blowup=growth >= 2.0, values_stable=drift <= 0.05)
