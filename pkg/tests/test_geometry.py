import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from atomglasso.atomic_norm import (AtomicNormSpec, Pattern,
                                    dual_ball_vertices, dual_eval,
                                    pattern_of, restricted_dual_eval)
from atomglasso.bounds import ProblemInstance
from atomglasso.experiments import GraphFamily, make_instance
from atomglasso.geometry import (TauUndefinedError, build_geometry,
                                 c_diamond, dual_ball_facets, eta,
                                 face_in_relative_interior, pattern_margin,
                                 slope_weights_for_edges, tau_closed_form,
                                 tau_oracle, tau_value, tune_slope_weights,
                                 zeta_lower_bound)
from atomglasso.symmat import opnorm_inf

from oracles import example_vertices


def all_codes(m):
    return [c for c in itertools.product((-1, 0, 1), repeat=m) if any(c)]


def slope_codes(m):
    """Every rank-sign pattern of length ``m``."""
    out = set()
    for levels in itertools.product(range(m + 1), repeat=m):
        used = sorted(set(levels) - {0})
        if used != list(range(1, len(used) + 1)):
            continue
        for signs in itertools.product((-1, 1), repeat=m):
            out.add(tuple(s * l for s, l in zip(signs, levels)))
    out.discard((0,) * m)
    return sorted(out)


# -- construction -------------------------------------------------------

def test_l1_geometry_example():
    spec = AtomicNormSpec.l1(3)
    g = build_geometry(spec, Pattern.from_code(spec, (1, 0, -1)))
    assert np.allclose(g.projector, np.diag([1.0, 0.0, 1.0]))
    assert np.allclose(g.face_projection, [1.0, 0.0, -1.0])


def test_zero_pattern_rejected():
    spec = AtomicNormSpec.l1(3)
    with pytest.raises(ValueError):
        build_geometry(spec, (0, 0, 0))
    with pytest.raises(ValueError):
        build_geometry(spec, (1, 0, 0), p=4)


@pytest.mark.parametrize("spec", [
    AtomicNormSpec.l1(4), AtomicNormSpec.linf(4),
    AtomicNormSpec.slope([1.0, 0.7, 0.7, 0.2]),
    AtomicNormSpec.slope([1.0, 0.5, 0.0, 0.0]),
])
def test_geometry_invariants(spec):
    V = dual_ball_vertices(spec)
    codes = slope_codes(4) if spec.variant == "slope" else all_codes(4)
    for code in codes:
        g = build_geometry(spec, Pattern.from_code(spec, code))
        P, f = g.projector, g.face_projection
        assert np.allclose(P @ P, P, atol=1e-10)
        assert np.allclose(P, P.T, atol=1e-10)
        assert np.allclose(P @ f, f, atol=1e-10)
        x = np.array(code, dtype=float)
        vals = V @ x
        active = V[vals >= vals.max() - 1e-9]
        # active vertices share their projection, which is f_I
        assert np.allclose(active @ P, f, atol=1e-10)
        assert restricted_dual_eval(spec, f, g) == pytest.approx(1.0,
                                                                 abs=1e-8)


def test_generic_linf_atoms_reproduce_closed_form():
    m = 3
    spec = AtomicNormSpec.linf(m)
    poly = AtomicNormSpec.polytope(dual_ball_vertices(spec))
    rng = np.random.default_rng(0)
    for _ in range(15):
        x = rng.integers(-2, 3, m).astype(float)
        if not x.any():
            continue
        g = build_geometry(spec, pattern_of(spec, x))
        gp = build_geometry(poly, pattern_of(poly, x, tol=1e-12))
        assert np.allclose(g.projector, gp.projector, atol=1e-9)
        assert np.allclose(g.face_projection, gp.face_projection, atol=1e-9)


def test_slope_multicluster_face_projection_matches_generic():
    spec = AtomicNormSpec.slope([1.0, 0.8, 0.5, 0.1])
    poly = AtomicNormSpec.polytope(dual_ball_vertices(spec), check=False)
    for code in [(2, -2, 1, 0), (3, 2, 1, -1), (1, 1, 0, 0), (2, 1, 1, 2)]:
        x = np.array(code, dtype=float)
        g = build_geometry(spec, Pattern.from_code(spec, code))
        gp = build_geometry(poly, pattern_of(poly, x, tol=1e-12))
        assert np.allclose(g.projector, gp.projector, atol=1e-9)
        assert np.allclose(g.face_projection, gp.face_projection, atol=1e-9)


def test_tau_defined_iff_face_projection_on_unit_sphere():
    for a, b in [(0.5, 0.8), (2.0, 1.0), (0.5, 0.3), (-1.5, 1.0)]:
        spec = AtomicNormSpec.polytope(example_vertices(a, b))
        for I in [(0, 1), (1, 2), (2, 3), (0, 3)]:
            g = build_geometry(spec, Pattern.from_code(spec, I))
            defined = abs(dual_eval(spec, g.face_projection) - 1) <= 1e-8
            try:
                tau_value(spec, g)
                got = True
            except TauUndefinedError:
                got = False
            assert got == defined


# -- two-dimensional skewed gauge --------------------------------------

def expected_f(a, b, I):
    n = a * a + b * b
    return {(0, 1): (b, 0.0), (1, 2): (-b * a / n, -b * b / n),
            (2, 3): (-b, 0.0), (0, 3): (b * a / n, b * b / n)}[I]


def expected_dual(a, b, I):
    if I in [(0, 1), (2, 3)]:
        return max(abs(a), 1.0)
    return max(abs(a) / (a * a + b * b), 1.0)


def expected_ri(a, b, I):
    if I in [(0, 1), (2, 3)]:
        return -1 < a < 1
    return a * a + b * b > abs(a)


@pytest.mark.parametrize("a", [-1.5, -1.0, 0.0, 0.5, 1.0, 1.5])
@pytest.mark.parametrize("b", [0.3, 0.8, 1.0])
def test_skewed_gauge_sweep(a, b):
    spec = AtomicNormSpec.polytope(example_vertices(a, b))
    for I in [(0, 1), (1, 2), (2, 3), (0, 3)]:
        g = build_geometry(spec, Pattern.from_code(spec, I))
        assert np.allclose(g.face_projection, expected_f(a, b, I), atol=1e-9)
        assert dual_eval(spec, g.face_projection) == \
            pytest.approx(expected_dual(a, b, I), abs=1e-9)
        ri = face_in_relative_interior(spec, g)
        assert ri == expected_ri(a, b, I)
        # threshold is positive exactly when f_I is relatively interior
        try:
            positive = tau_value(spec, g) > 1e-9
        except TauUndefinedError:
            positive = False
        assert positive == ri


def test_skewed_gauge_examples():
    spec = AtomicNormSpec.polytope(example_vertices(2.0, 1.0))
    g = build_geometry(spec, Pattern.from_code(spec, (0, 1)))
    with pytest.raises(TauUndefinedError) as err:
        tau_oracle(spec, g)
    assert err.value.dual_value == pytest.approx(2.0)
    # on the relative boundary the threshold is zero
    spec = AtomicNormSpec.polytope(example_vertices(0.5, 0.5))
    g = build_geometry(spec, Pattern.from_code(spec, (0, 3)))
    assert tau_oracle(spec, g) == pytest.approx(0.0, abs=1e-9)


# -- thresholds ---------------------------------------------------------

def test_tau_closed_form_examples():
    assert tau_closed_form(AtomicNormSpec.l1(3), (1, 0, -1)) == 1.0
    assert tau_closed_form(AtomicNormSpec.linf(4), (1, -1, 1, 0)) == \
        pytest.approx(1 / 3)
    spec = AtomicNormSpec.slope([1.0, 1.0, 1.0, 1.0])
    assert tau_closed_form(spec, (1, 1, 1, 1)) == pytest.approx(0.0)
    w = tune_slope_weights(6, 4)
    assert np.allclose(w, [1, 1, 1 / 3, 1 / 3, 1 / 3, 1 / 3])
    spec = AtomicNormSpec.slope(w)
    assert tau_closed_form(spec, (1, 1, -1, 1, 0, 0)) == pytest.approx(1 / 3)
    # several nonzero clusters: no closed form
    assert tau_closed_form(AtomicNormSpec.slope([1.0, 0.5, 0.2]),
                           (2, 1, 0)) is None


def test_tau_oracle_matches_closed_form_small():
    for kind in ("l1", "linf"):
        for m in (2, 3, 4):
            spec = getattr(AtomicNormSpec, kind)(m)
            F = dual_ball_facets(spec)
            for code in all_codes(m):
                pat = Pattern.from_code(spec, code)
                g = build_geometry(spec, pat)
                got = tau_oracle(spec, g, facets=F)
                if g.dim == m:
                    assert got == np.inf
                else:
                    assert got == pytest.approx(tau_closed_form(spec, pat),
                                                abs=1e-7)


def test_slope_single_cluster_closed_form_matches_oracle():
    rng = np.random.default_rng(5)
    for _ in range(10):
        w = np.sort(rng.uniform(0.05, 1, 4))[::-1]
        spec = AtomicNormSpec.slope(w)
        F = dual_ball_facets(spec)
        for k in range(1, 4):
            code = tuple([1] * k + [0] * (4 - k))
            g = build_geometry(spec, Pattern.from_code(spec, code))
            assert tau_oracle(spec, g, facets=F) == pytest.approx(
                tau_closed_form(spec, code), abs=1e-7)


# -- SLOPE tuning -------------------------------------------------------

def test_tune_weights_oscar_exact():
    w = tune_slope_weights(4, exact=True)
    assert w == [Fraction(1), Fraction(5, 7), Fraction(3, 7), Fraction(1, 7)]
    assert np.allclose(tune_slope_weights(4), [1, 5 / 7, 3 / 7, 1 / 7],
                       atol=1e-12)


@pytest.mark.parametrize("m", [2, 3])
def test_tune_weights_worst_case_threshold(m):
    spec = AtomicNormSpec.slope(tune_slope_weights(m))
    F = dual_ball_facets(spec)
    taus = [tau_oracle(spec, build_geometry(spec, Pattern.from_code(spec, c)),
                       facets=F) for c in slope_codes(m)]
    assert min(taus) == pytest.approx(1 / (2 * m - 1), abs=1e-7)


def test_tune_weights_known_cluster():
    assert np.array_equal(tune_slope_weights(5, 1), np.ones(5))
    assert np.allclose(tune_slope_weights(5, 5), [1, 1, 0.5, 0, 0])
    assert np.allclose(tune_slope_weights(5, 3), [1, 2 / 3, 1 / 3, 1 / 3,
                                                  1 / 3])
    with pytest.raises(ValueError):
        tune_slope_weights(3, 4)


def test_weights_for_edges_profile():
    assert np.allclose(slope_weights_for_edges(6, 4),
                       [1, 1, 1 / 3, 1 / 3, 1 / 3, 1 / 3])
    assert np.allclose(slope_weights_for_edges(5, 3),
                       [1, 2 / 3, 1 / 3, 1 / 3, 1 / 3])


# -- second threshold and constants ------------------------------------

def test_zeta_examples():
    grid = make_instance(GraphFamily("grid", 16))
    assert zeta_lower_bound(grid) == pytest.approx(0.1 / 1.4 ** 2)
    dense = make_instance(GraphFamily("dense", 4))
    assert zeta_lower_bound(dense) == pytest.approx(0.1 / 1.44)
    ident = ProblemInstance.from_precision(np.eye(3))
    with pytest.raises(ValueError):
        zeta_lower_bound(ident)


def test_zeta_scales_inversely():
    inst = make_instance(GraphFamily("chain", 6))
    z = zeta_lower_bound(inst)
    for c in (2.0, 5.0):
        scaled = ProblemInstance.from_precision(c * inst.K_star)
        assert zeta_lower_bound(scaled) == pytest.approx(z / c)


def test_pattern_margin_ignores_roundoff():
    x = np.array([0.3, 0.3 + 1e-17, 0.1, 1e-18, 0.0])
    spec = AtomicNormSpec.slope(np.linspace(1, 0.2, 5))
    assert pattern_margin(spec, x) == pytest.approx(0.1)
    assert pattern_margin(AtomicNormSpec.linf(5), x) == pytest.approx(0.1)
    assert pattern_margin(AtomicNormSpec.l1(5), x) == pytest.approx(0.1)
    with pytest.raises(ValueError):
        pattern_margin(None, np.zeros(3))


def test_c_diamond_examples():
    spec = AtomicNormSpec.l1(3)
    assert c_diamond(spec, build_geometry(spec, (1, 0, 1))) == 1.0
    w = slope_weights_for_edges(6, 4)
    spec = AtomicNormSpec.slope(w)
    g = build_geometry(spec, (1, 1, 1, 1, 0, 0))
    assert c_diamond(spec, g) == pytest.approx(1.5)
    assert c_diamond(spec, g, tight=True) == pytest.approx(2 / 3)
    poly = AtomicNormSpec.polytope(dual_ball_vertices(AtomicNormSpec.l1(2)))
    gp = build_geometry(poly, pattern_of(poly, [1.0, 0.0]))
    assert c_diamond(poly, gp) == pytest.approx(1.0, abs=1e-8)


def test_eta_values():
    inst = make_instance(GraphFamily("chain", 3))
    K = inst.K_star
    assert np.allclose(np.diag(K), [25 / 24, 26 / 24, 25 / 24])
    assert K[0, 1] == pytest.approx(-5 / 24)
    val, method = eta(inst, AtomicNormSpec.linf(3))
    assert method == "l1_bound"
    assert val == pytest.approx((25 + 26 + 25 + 4 * 5) / 24)
    assert eta(inst, AtomicNormSpec.l1(3), "mahalanobis") == \
        (1.0, "mahalanobis_unit")


def test_eta_defining_inequality():
    rng = np.random.default_rng(6)
    for fam in ("chain", "hub", "grid"):
        inst = make_instance(GraphFamily(fam, 9))
        val, _ = eta(inst, AtomicNormSpec.l1(inst.m))
        S = inst.Sigma_star
        mask = (inst.K_star != 0)
        for _ in range(100):
            D = np.where(mask, rng.standard_normal(mask.shape), 0.0)
            D = D + D.T
            lhs = val * np.abs(S @ D @ S).max()
            assert lhs >= opnorm_inf(S @ D) * (1 - 1e-12)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(-2, 2), min_size=2, max_size=5).filter(any))
def test_l1_threshold_is_one_off_full_support(code):
    spec = AtomicNormSpec.l1(len(code))
    g = build_geometry(spec, tuple(code))
    t = tau_oracle(spec, g)
    if all(code):
        assert t == np.inf
    else:
        assert t == pytest.approx(1.0, abs=1e-9)
