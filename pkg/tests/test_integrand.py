import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from anisotv.integrand import (Integrand, by_name, check_structure, evaluate, isotropic,
                               mirrored, polar_eval, quadrant, weighted_l1)

finite = st.floats(-10, 10, allow_nan=False)
vec = st.tuples(finite, finite)
BUILTINS = [isotropic(), quadrant(), mirrored(quadrant()), weighted_l1(1.0, 2.0, 0.5, 3.0)]


def test_quadrant_upper_half_is_euclidean():
    assert quadrant()(None, (1.0, 1.0)) == pytest.approx(math.sqrt(2), abs=1e-15)


def test_quadrant_lower_half_is_l1():
    assert quadrant()(None, (1.0, -1.0)) == 2.0


@pytest.mark.parametrize("ig", BUILTINS, ids=lambda i: i.name)
def test_zero_vector(ig):
    assert ig((0.3, -2.0), (0.0, 0.0)) == 0.0


def test_mirrored_examples():
    assert mirrored(isotropic())(None, (1.0, 0.0)) == 1.0
    assert mirrored(quadrant())(None, (1.0, 1.0)) == 2.0


def test_mirror_is_an_involution(rng):
    q = quadrant()
    xi = rng.normal(size=(200, 2))
    np.testing.assert_array_equal(mirrored(mirrored(q))(None, xi), q(None, xi))


def test_polar_examples():
    assert polar_eval(quadrant(), None, (0.0, -1.0)) == 1.0
    assert polar_eval(quadrant(), None, (1.0, 1.0)) == pytest.approx(math.sqrt(2), abs=1e-15)
    assert polar_eval(isotropic(), None, (3.0, 4.0)) == pytest.approx(5.0, abs=1e-15)


def test_sampled_polar_matches_closed_form(rng):
    q = quadrant()
    bare = Integrand("quadrant-no-polar", q.rule, q.alpha, q.beta)
    for s in rng.normal(size=(10, 2)):
        assert polar_eval(bare, None, s) == pytest.approx(polar_eval(q, None, s), abs=1e-6)


def test_polar_requires_positive_alpha():
    bad = Integrand("degenerate", lambda x, xi: np.abs(xi[..., 0]), 0.0, 1.0)
    with pytest.raises(ValueError):
        polar_eval(bad, None, (1.0, 0.0))


def test_structure_isotropic_exact():
    rep = check_structure(isotropic(), 1000)
    assert rep.homogeneity_residual <= 1e-12
    assert rep.triangle_violation <= 1e-12
    assert rep.ok


def test_structure_quadrant_convex():
    rep = check_structure(quadrant(), 1000)
    assert rep.triangle_violation <= 1e-12
    assert rep.convex_ok and rep.bounds_ok


def test_structure_flags_missing_lower_bound():
    rule = lambda x, xi: np.abs(xi[..., 0]) * (xi[..., 1] > 0)
    rep = check_structure(Integrand("flagged", rule, 1.0, 1.0), 1000)
    assert rep.alpha_hat == 0.0
    assert not rep.bounds_ok


def test_structure_needs_samples():
    with pytest.raises(ValueError):
        check_structure(isotropic(), 0)


def test_by_name_roundtrip():
    assert by_name("quadrant").name == "quadrant"
    assert by_name("mirrored(quadrant)")(None, (1.0, 1.0)) == 2.0
    wl = by_name("weighted-l1", {"e1_plus": 2.0})
    assert wl(None, (-1.0, 0.0)) == 2.0
    with pytest.raises(KeyError):
        by_name("nope")


def test_weighted_l1_rejects_nonpositive():
    with pytest.raises(ValueError):
        weighted_l1(0.0)


@pytest.mark.parametrize("ig", BUILTINS, ids=lambda i: i.name)
@given(x=vec, xi=vec, t=st.floats(0, 10))
def test_homogeneity(ig, x, xi, t):
    lhs = evaluate(ig, x, (t * xi[0], t * xi[1]))
    assert abs(lhs - t * evaluate(ig, x, xi)) <= 1e-12 * (1 + t * math.hypot(*xi))


@pytest.mark.parametrize("ig", BUILTINS, ids=lambda i: i.name)
@given(x=vec, xi=vec)
def test_comparability(ig, x, xi):
    n = math.hypot(*xi)
    v = evaluate(ig, x, xi)
    assert ig.alpha * n - 1e-12 * (1 + n) <= v <= ig.beta * n + 1e-12 * (1 + n)


@pytest.mark.parametrize("ig", BUILTINS, ids=lambda i: i.name)
@given(x=vec, xi=vec, s=vec)
def test_polar_duality(ig, x, xi, s):
    lhs = s[0] * xi[0] + s[1] * xi[1]
    assert lhs <= polar_eval(ig, x, s) * evaluate(ig, x, xi) + 1e-9


@given(s=vec)
def test_polar_of_mirror_is_polar_at_negated_argument(s):
    q = quadrant()
    assert polar_eval(mirrored(q), None, s) == pytest.approx(
        polar_eval(q, None, (-s[0], -s[1])), abs=1e-12)


@pytest.mark.parametrize("ig", BUILTINS, ids=lambda i: i.name)
@given(xi=vec, s=st.floats(0, 1))
def test_reverse_triangle_on_collinear_arguments(ig, xi, s):
    a = np.array(xi)
    lhs = evaluate(ig, None, a - s * a)
    assert lhs >= evaluate(ig, None, a) - evaluate(ig, None, s * a) - 1e-12 * (1 + abs(lhs))
