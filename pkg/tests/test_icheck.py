import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from anisotv.errors import NotConverged, TooLargeForExhaustive
from anisotv.exactgeo import fractal_measure, fractal_iterate, ic_score
from anisotv.grid import DiscreteMeasure, GridDomain, GridFunction
from anisotv.icheck import (ICQuery, _SetScorer, brute_force_ic, dual_ic, dual_norm,
                            global_inequality_check)
from anisotv.integrand import isotropic, mirrored, quadrant


def _pair(mass):
    dom = GridDomain.box(2, 1, h=1.0)
    return dom, DiscreteMeasure.from_atoms(dom, [((0, 1), 0.0, mass)])


def test_zero_measure_holds_with_empty_set():
    dom = GridDomain.box(3, 3)
    rep = brute_force_ic(ICQuery(DiscreteMeasure.zero(dom), isotropic()), dom)
    assert rep.verdict == "holds" and rep.worst_score == 0.0
    assert not rep.worst_set.any()


def test_two_cells_mass_three_holds():
    dom, mu = _pair(3.0)
    q = ICQuery(mu, isotropic())
    sc = _SetScorer.build(q, dom, "closure_interior")
    assert sc.score(np.array([True, False])) == pytest.approx(-1.0)
    assert sc.score(np.array([True, True])) == pytest.approx(-3.0)
    rep = brute_force_ic(q, dom)
    assert rep.verdict == "holds" and rep.worst_score == 0.0
    assert rep.subsets_examined == 4


def test_two_cells_mass_five_violated():
    dom, mu = _pair(5.0)
    rep = brute_force_ic(ICQuery(mu, isotropic()), dom)
    assert rep.verdict == "violated"
    assert rep.worst_score == pytest.approx(1.0)
    assert rep.worst_set.sum() == 1


def test_mirrored_direction_swaps_parts():
    dom, mu = _pair(5.0)
    rep = brute_force_ic(ICQuery(mu.negated(), isotropic(), direction="mirrored"), dom)
    assert rep.verdict == "violated" and rep.worst_score == pytest.approx(1.0)
    rep = brute_force_ic(ICQuery(mu, isotropic(), direction="mirrored"), dom)
    assert rep.verdict == "holds"


def test_small_volume_mode():
    dom, mu = _pair(5.0)
    assert brute_force_ic(ICQuery(mu, isotropic(), epsilon=2.0, delta=1.5), dom).verdict == "holds"
    assert brute_force_ic(ICQuery(mu, isotropic(), epsilon=0.5, delta=1.5),
                          dom).verdict == "violated"
    assert brute_force_ic(ICQuery(mu, isotropic(), epsilon=0.0, delta=0.5), dom).verdict == "holds"


def test_query_validation():
    mu = DiscreteMeasure(np.zeros(1))
    with pytest.raises(ValueError):
        ICQuery(mu, isotropic(), C=-1.0)
    with pytest.raises(ValueError):
        ICQuery(mu, isotropic(), direction="sideways")
    with pytest.raises(ValueError):
        ICQuery(mu, isotropic(), epsilon=0.1, delta=0.0)


def test_exhaustive_limit():
    dom = GridDomain.box(5, 5)
    with pytest.raises(TooLargeForExhaustive):
        brute_force_ic(ICQuery(DiscreteMeasure.zero(dom), isotropic()), dom, mode="exhaustive")


def test_anneal_reports_lower_bound_only():
    dom = GridDomain.box(6, 6)
    held = brute_force_ic(ICQuery(DiscreteMeasure.zero(dom), isotropic()), dom, anneal_steps=500,
                          restarts=2)
    assert held.mode == "anneal" and held.lower_bound_only
    assert held.verdict == "inconclusive"
    rc = dom.cell_rc
    inside = np.all((rc >= 2) & (rc < 4), axis=1)
    ie = dom.interior_edges
    hit = np.flatnonzero(inside[ie.a] != inside[ie.b])
    mu = DiscreteMeasure(np.zeros(dom.n_cells), hit, np.zeros(len(hit)), np.full(len(hit), 2.0))
    bad = brute_force_ic(ICQuery(mu, isotropic()), dom, anneal_steps=2000, restarts=3)
    assert bad.verdict == "violated" and bad.worst_score >= 8.0 - 1e-9


def test_singular_pair_flag():
    dom = GridDomain.box(2, 1)
    both = DiscreteMeasure.from_atoms(dom, [((0, 1), 1.0, 1.0)])
    one = DiscreteMeasure.from_atoms(dom, [((0, 1), 0.0, 1.0)])
    assert brute_force_ic(ICQuery(both, isotropic()), dom).singular_pair_required_for_1a
    assert not brute_force_ic(ICQuery(one, isotropic()), dom).singular_pair_required_for_1a


def test_dual_norm_of_zero():
    dom = GridDomain.box(3, 3)
    assert dual_norm(DiscreteMeasure.zero(dom), dom, isotropic()).value == 0.0


def test_dual_norm_brackets_brute_force_threshold():
    # average representative: the smallest constant with no violating set equals the dual norm
    dom = GridDomain.box(4, 4, h=1.0)
    rng = np.random.default_rng(7)
    edges = rng.choice(len(dom.interior_edges), 5, replace=False)
    mu = DiscreteMeasure(np.zeros(16), edges, np.zeros(5), rng.uniform(0.5, 3, 5))
    cstar = dual_norm(mu, dom, isotropic()).value
    for C, expect in ((cstar * 1.01, "holds"), (cstar * 0.99, "violated")):
        rep = brute_force_ic(ICQuery(mu, isotropic(), C=C), dom, representative="average")
        assert rep.verdict == expect


def test_dual_norm_not_converged():
    dom = GridDomain.box(6, 6)
    mu = DiscreteMeasure(np.linspace(-1, 1, 36))
    with pytest.raises(NotConverged):
        dual_norm(mu, dom, quadrant(), max_iters=1, check_every=1, tol=1e-14)


def test_dual_ic_verdicts():
    dom, mu = _pair(3.0)
    assert dual_ic(ICQuery(mu, isotropic(), C=1.0), dom).verdict == "holds"
    assert dual_ic(ICQuery(mu, isotropic(), C=0.3), dom).verdict == "violated"
    assert dual_ic(ICQuery(mu, isotropic(), C=0.5), dom).verdict == "inconclusive"


@pytest.mark.parametrize("t", [0.5, 2.0, 7.0])
def test_dual_norm_scaling(t):
    dom = GridDomain.box(4, 3, h=0.5)
    rng = np.random.default_rng(3)
    mu = DiscreteMeasure(rng.normal(size=12), [0, 3, 5], [0.2, 0.0, 0.7], [0.0, 0.4, 0.0])
    base = dual_norm(mu, dom, quadrant()).value
    assert dual_norm(mu.scaled(t), dom, quadrant()).value == pytest.approx(t * base, rel=1e-5)


def test_global_check_on_worst_set_and_zero():
    dom, mu = _pair(3.0)
    q = ICQuery(mu, isotropic())
    one = np.array([1.0, 0.0])
    rep = global_inequality_check([one, np.zeros(2)], q, dom)
    assert not rep.violated
    assert rep.rhs[1] == 0.0 and rep.lhs[1] == 0.0


def test_global_check_flags_inconsistent_verdict():
    dom, mu = _pair(5.0)
    rep = global_inequality_check([np.array([1.0, 0.0])], ICQuery(mu, isotropic()), dom,
                                  verdict="holds")
    assert rep.violated and rep.inconsistent_with_verdict
    assert rep.max_violation == pytest.approx(1.0)


@settings(max_examples=60)
@given(masses=st.lists(st.floats(0, 3), min_size=3, max_size=3),
       C=st.floats(0, 3), extra=st.floats(0, 2))
def test_monotone_in_constant(masses, C, extra):
    dom = GridDomain.box(3, 2)
    mu = DiscreteMeasure(np.zeros(6), [0, 2, 4], np.zeros(3), masses)
    if brute_force_ic(ICQuery(mu, quadrant(), C=C), dom).verdict == "holds":
        assert brute_force_ic(ICQuery(mu, quadrant(), C=C + extra), dom).verdict == "holds"


def test_direction_asymmetry_on_fractal():
    q = quadrant()
    mu = fractal_measure(4)
    assert ic_score(mu, [], fractal_iterate(2), mirrored(q), 1.0) > 0
    assert ic_score(mu, [], fractal_iterate(2), q, 1.0) <= 0
