import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from anisotv.errors import TooLarge, UnboundedDetected
from anisotv.grid import DiscreteMeasure, GridDomain, GridFunction, phi, phi_hat, tv_phi
from anisotv.icheck import dual_norm
from anisotv.integrand import isotropic, quadrant
from anisotv.solve import (RefinementRow, SolveConfig, blowup_summary, consistency_gap,
                           half_disc_problem, minimize_phi, minimize_phi_hat, oracle_minimize)

from _strategies import domain_and_function


def _ends(dom, right=1.0):
    """Datum 0 at the left end of a line, ``right`` at the right end."""
    return np.where(dom.boundary_edges.mid[:, 0] > dom.origin[0], right, 0.0)


def test_config_validation():
    with pytest.raises(ValueError):
        SolveConfig(tol_primal_dual=0.0)
    with pytest.raises(ValueError):
        SolveConfig(dc_max_rounds=0)
    with pytest.raises(ValueError):
        SolveConfig(backend="simplex")


@pytest.mark.parametrize("c", [0.0, 1.5, -2.0])
def test_zero_measure_constant_datum(c):
    dom = GridDomain.box(3, 3, h=0.5)
    rep = minimize_phi(dom, quadrant(), DiscreteMeasure.zero(dom), c)
    np.testing.assert_allclose(rep.minimizer.values, c, atol=1e-9)
    assert rep.value == pytest.approx(0.0, abs=1e-9)


def test_three_cell_line():
    # TV of a path from 0 to 1 is at least 1; lifting the middle cell to 1 earns 0.5
    dom = GridDomain.line(3)
    mu = DiscreteMeasure(np.array([0.0, -0.5, 0.0]))
    datum = _ends(dom)
    assert oracle_minimize(dom, isotropic(), mu, datum, functional="phi").value == pytest.approx(0.5)
    for backend in ("pdhg", "highs"):
        rep = minimize_phi(dom, isotropic(), mu, datum, SolveConfig(backend=backend))
        assert rep.value == pytest.approx(0.5, abs=1e-7)


def test_three_cell_line_unbounded():
    dom = GridDomain.line(3)
    mu = DiscreteMeasure(np.array([0.0, -2.5, 0.0]))
    assert oracle_minimize(dom, isotropic(), mu, 0.0, functional="phi").unbounded
    for backend in ("pdhg", "highs"):
        with pytest.raises(UnboundedDetected):
            minimize_phi(dom, isotropic(), mu, 0.0, SolveConfig(backend=backend))


@pytest.mark.parametrize("m, expected", [(0.5, 0.5), (1.0, 0.0), (1.5, -0.5)])
def test_two_cell_equal_mass_atom(m, expected):
    # phi_hat = |w1| + (1 - m)|w2 - w1| + |1 - w2|: for m < 2 the whole unit jump sits on
    # the atom edge, value 1 - m; phi ignores the atom and pays 1
    dom = GridDomain.line(2)
    mu = DiscreteMeasure.from_atoms(dom, [((0, 1), m, m)])
    datum = _ends(dom)
    orc = oracle_minimize(dom, isotropic(), mu, datum, functional="phi_hat")
    assert orc.exact and orc.value == pytest.approx(expected, abs=1e-12)
    rep = minimize_phi_hat(dom, isotropic(), mu, datum)
    assert rep.value == pytest.approx(expected, abs=1e-7)
    assert minimize_phi(dom, isotropic(), mu, datum).value == pytest.approx(1.0, abs=1e-7)


def test_two_cell_equal_mass_atom_unbounded():
    dom = GridDomain.line(2)
    mu = DiscreteMeasure.from_atoms(dom, [((0, 1), 2.5, 2.5)])
    assert oracle_minimize(dom, isotropic(), mu, _ends(dom)).unbounded


def test_oracle_trivial_and_size_limit():
    dom = GridDomain.box(2, 2)
    assert oracle_minimize(dom, isotropic(), DiscreteMeasure.zero(dom), 0.0, [0.0]).value == 0.0
    big = GridDomain.box(5, 2)
    with pytest.raises(TooLarge):
        oracle_minimize(big, isotropic(), DiscreteMeasure.zero(big), 0.0)


def test_oracle_band_off_datum_grid():
    dom = GridDomain.line(2)
    mu = DiscreteMeasure(np.array([-0.3, 0.1]))
    datum = _ends(dom, right=0.8)
    exact = oracle_minimize(dom, isotropic(), mu, datum, functional="phi")
    coarse = oracle_minimize(dom, isotropic(), mu, datum, value_set=[0.0, 0.5], functional="phi")
    assert exact.exact and not coarse.exact
    assert exact.value <= coarse.value <= exact.value + coarse.error_band


def test_no_atoms_phi_hat_equals_phi(rng):
    dom = GridDomain.box(3, 3, h=0.5)
    mu = DiscreteMeasure(rng.uniform(-0.5, 0.5, 9))
    datum = rng.integers(-1, 2, len(dom.boundary_edges)).astype(float)
    a = minimize_phi(dom, quadrant(), mu, datum)
    b = minimize_phi_hat(dom, quadrant(), mu, datum)
    assert b.value == a.value
    np.testing.assert_array_equal(a.minimizer.values, b.minimizer.values)


def _random_instance(rng, nx=3, ny=3):
    dom = GridDomain.box(nx, ny, h=1.0)
    ne = len(dom.interior_edges)
    k = int(rng.integers(1, ne + 1))
    e = rng.choice(ne, k, replace=False)
    mu = DiscreteMeasure(rng.uniform(-0.5, 0.5, dom.n_cells), e, rng.uniform(0, 1, k),
                         rng.uniform(0, 1, k))
    datum = rng.integers(-2, 3, len(dom.boundary_edges)) / 2.0
    return dom, mu, datum


def test_dc_rounds_monotone(rng):
    for _ in range(5):
        dom, mu, datum = _random_instance(rng)
        rep = minimize_phi_hat(dom, isotropic(), mu, datum)
        assert rep.monotone
        assert all(b <= a for a, b in zip(rep.round_values, rep.round_values[1:]))
        assert rep.value == rep.round_values[-1]


def test_primal_dual_gap_certificate(rng):
    dom, mu, datum = _random_instance(rng, 4, 4)
    cfg = SolveConfig()
    rep = minimize_phi(dom, quadrant(), mu, datum, cfg)
    assert rep.converged
    assert rep.gap <= cfg.tol_primal_dual * (1 + abs(rep.value))


def test_backends_agree(rng):
    for _ in range(4):
        dom, mu, datum = _random_instance(rng, 4, 3)
        a = minimize_phi(dom, quadrant(), mu, datum, SolveConfig(backend="pdhg"))
        b = minimize_phi(dom, quadrant(), mu, datum, SolveConfig(backend="highs"))
        assert a.value == pytest.approx(b.value, abs=1e-6)


def test_value_scales_with_data(rng):
    dom, mu, datum = _random_instance(rng)
    base = oracle_minimize(dom, quadrant(), mu, datum, functional="phi").value
    for t in (0.5, 3.0):
        scaled = oracle_minimize(dom, quadrant(), mu.scaled(t), t * datum, functional="phi")
        assert scaled.value == pytest.approx(t * base, abs=1e-12)
        rep = minimize_phi(dom, quadrant(), mu.scaled(t), t * datum)
        assert rep.value == pytest.approx(t * base, abs=1e-6)


def test_coercivity_bound(rng):
    checked = 0
    for _ in range(20):
        dom, mu, datum = _random_instance(rng, 4, 4)
        cstar = dual_norm(mu, dom, isotropic()).value
        if cstar >= 1:
            continue
        rep = minimize_phi(dom, isotropic(), mu, datum)
        bound = np.abs(datum).max() + (mu.total_variation(dom) + 1) / (1 - cstar)
        assert np.abs(rep.minimizer.values).max() <= bound
        checked += 1
    assert checked >= 5


@settings(max_examples=100)
@given(st.data())
def test_equal_masses_reduce_to_tv_minus_jumps(data):
    dom, w = data.draw(domain_and_function(max_side=4))
    ne = len(dom.interior_edges)
    if ne == 0:
        return
    edges = np.array(sorted(data.draw(st.sets(st.integers(0, ne - 1), min_size=1))))
    mass = np.array(data.draw(st.lists(st.floats(0, 2), min_size=len(edges),
                                       max_size=len(edges))))
    mu = DiscreteMeasure(np.zeros(dom.n_cells), edges, mass, mass)
    ie = dom.interior_edges
    jump = np.abs(w.values[ie.a[edges]] - w.values[ie.b[edges]])
    expect = tv_phi(w, dom, quadrant()) - float(mass @ jump)
    assert phi_hat(w, dom, quadrant(), mu) == pytest.approx(expect, abs=1e-9)
    assert phi(w, dom, quadrant(), mu) == pytest.approx(tv_phi(w, dom, quadrant()), abs=1e-9)


def test_consistency_gap_without_measure():
    p, ph, _, _ = consistency_gap(1 / 8, with_measure=False)
    assert p == pytest.approx(ph, abs=1e-9)


def test_half_disc_problem_setup():
    dom, mu, datum = half_disc_problem(1 / 8, "capped")
    assert np.all(np.isfinite(datum)) and datum.min() > 0
    assert mu.cell_density.max() < 0
    with pytest.raises(ValueError):
        half_disc_problem(1 / 8, alpha=0.6)
    with pytest.raises(ValueError):
        half_disc_problem(1 / 8, variant="square")


def test_blowup_summary_arithmetic():
    rows = [RefinementRow(0.5, 10, -10.0, 2.0, 5.0), RefinementRow(0.25, 40, -9.0, 3.0, 7.0),
            RefinementRow(0.125, 160, -9.0 * 1.02, 5.0, 9.0)]
    s = blowup_summary(rows)
    assert s["sup_norm_growth"] == pytest.approx(2.5)
    assert s["value_drift"] == pytest.approx(0.02 / 1.02)
    assert s["blowup"] and s["values_stable"]


def test_snapshots_recorded():
    dom = GridDomain.box(3, 3, h=0.5)
    mu = DiscreteMeasure(np.full(9, -0.5))
    rep = minimize_phi(dom, isotropic(), mu, 1.0, SolveConfig(snapshot_stride=10))
    assert rep.snapshots and len(rep.snapshots[0]) == 9
    assert "snapshots" in rep.to_dict()
