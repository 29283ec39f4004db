import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from svi.convex import (
    Ball,
    Box,
    HalfLine,
    OrderedCone,
    ResolventError,
    coulomb_log,
    evaluate,
    indicator,
    inverse_power,
    isotonic_projection,
    moreau_envelope,
    project,
    quadratic,
    resolvent,
    yosida_gradient,
    zero,
)
from svi.properties import property_suite, catalog, closed_form_agreement

half = indicator(HalfLine(0.0))
sq = quadratic([1.0])


def log_gas_gap(eps, lam, w):
    # independent oracle: positive root of g^2 - w g - 2 eps lam = 0
    return (w + np.sqrt(w * w + 8 * eps * lam)) / 2


class TestEvaluate:
    def test_quadratic(self):
        assert evaluate(sq, [3.0]) == pytest.approx(4.5)

    def test_indicator_outside(self):
        assert evaluate(half, [-1.0]) == np.inf

    def test_indicator_inside(self):
        assert evaluate(half, [2.0]) == 0.0

    def test_log_gas_unit_gap(self):
        assert evaluate(coulomb_log(1.0, 2), [0.0, 1.0]) == pytest.approx(0.0)

    def test_log_gas_out_of_order(self):
        assert evaluate(coulomb_log(1.0, 3), [0.0, 2.0, 1.0]) == np.inf

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            evaluate(sq, [1.0, 2.0])

    def test_log_gas_flagged(self):
        assert not coulomb_log(1.0, 3).normalized
        assert sq.normalized and half.normalized


class TestResolvent:
    def test_quadratic(self):
        assert resolvent(sq, 0.5, [3.0]) == pytest.approx([2.0])

    @pytest.mark.parametrize("eps", [1e-6, 1.0, 7.0, 1e6])
    def test_indicator_is_projection(self, eps):
        assert resolvent(half, eps, [-1.0]) == pytest.approx([0.0])

    def test_log_gas_closed_form(self):
        # gap sqrt(2), centre 0: the quoted (-sqrt 2, sqrt 2) has gap 2 sqrt 2
        v = resolvent(coulomb_log(1.0, 2), 1.0, [0.0, 0.0])
        g = log_gas_gap(1.0, 1.0, 0.0)
        assert v == pytest.approx([-g / 2, g / 2], abs=1e-14)
        assert v == pytest.approx([-np.sqrt(2) / 2, np.sqrt(2) / 2], abs=1e-14)

    @pytest.mark.parametrize("method", ["closed", "newton"])
    def test_log_gas_residual(self, method):
        pot = coulomb_log(1.0, 2)
        u = np.array([0.0, 0.0])
        v = pot.resolvent(1.0, u, method=method)
        assert np.linalg.norm(v + pot.gradient(v) - u) < 1e-12

    def test_log_gas_newton_many_particles(self):
        pot = coulomb_log(0.5, 5)
        rng = np.random.default_rng(3)
        u = rng.standard_normal((200, 5))
        eps = np.exp(rng.uniform(np.log(1e-3), 0, 200))
        v = resolvent(pot, eps, u)
        assert np.all(np.diff(v, axis=-1) > 0)
        r = v - u + eps[:, None] * pot.gradient(v)
        assert np.max(np.abs(r)) < 1e-10

    def test_warm_start(self):
        pot = coulomb_log(0.5, 4)
        u = np.array([0.3, -0.2, 0.1, 0.0])
        cold = resolvent(pot, 0.1, u)
        warm = pot.resolvent(0.1, u, x0=cold + 1e-3 * np.arange(4))
        assert warm == pytest.approx(cold, abs=1e-10)

    def test_nonpositive_eps(self):
        with pytest.raises(ValueError):
            resolvent(sq, 0.0, [1.0])
        with pytest.raises(ValueError):
            resolvent(sq, -1.0, [1.0])

    def test_newton_reports_residual(self, monkeypatch):
        import svi.convex as cx

        monkeypatch.setattr(cx, "NEWTON_MAXITER", 1)
        with pytest.raises(ResolventError) as info:
            coulomb_log(0.5, 4).resolvent(1e-3, np.array([2.0, 1.0, -1.0, 0.5]), method="newton")
        assert info.value.residual > 0
        assert "residual" in str(info.value)

    def test_inverse_power_ordering(self):
        pot = inverse_power(0.3, 1.0, 3)
        v = resolvent(pot, 0.2, [1.0, 0.0, -1.0])
        assert np.all(np.diff(v) > 0)
        assert np.mean(v) == pytest.approx(0.0, abs=1e-12)


class TestEnvelope:
    @pytest.mark.parametrize("pot", list(catalog().values()), ids=list(catalog()))
    def test_zero_point(self, pot):
        if not pot.normalized:
            pytest.skip("log gas has no finite value at 0")
        u = np.zeros(pot.dimension)
        assert moreau_envelope(pot, 0.3, u) == pytest.approx(0.0, abs=1e-15)
        assert yosida_gradient(pot, 0.3, u) == pytest.approx(np.zeros(pot.dimension), abs=1e-15)

    def test_indicator_half_distance(self):
        assert moreau_envelope(half, 1.0, [-2.0]) == pytest.approx(2.0)

    def test_quadratic(self):
        assert moreau_envelope(sq, 1.0, [2.0]) == pytest.approx(1.0)

    def test_gradient_indicator(self):
        assert yosida_gradient(half, 1.0, [-3.0]) == pytest.approx([-3.0])

    def test_gradient_quadratic(self):
        assert yosida_gradient(sq, 0.5, [3.0]) == pytest.approx([1.0])


class TestProject:
    def test_ball(self):
        assert project(Ball([0.0, 0.0], 1.0), [3.0, 4.0]) == pytest.approx([0.6, 0.8])

    def test_box(self):
        assert project(Box([0.0, 0.0], [1.0, 1.0]), [-1.0, 0.5]) == pytest.approx([0.0, 0.5])

    def test_ordered_cone_pools(self):
        assert project(OrderedCone(2), [2.0, 1.0]) == pytest.approx([1.5, 1.5])

    def test_ordered_cone_min_gap(self):
        x = project(OrderedCone(3, 0.5), [0.0, 0.0, 0.0])
        assert np.diff(x) == pytest.approx([0.5, 0.5])
        assert np.mean(x) == pytest.approx(0.0)

    def test_isotonic_against_brute_force(self):
        # pool-adjacent-violators vs minimizing over all monotone candidates on a fine lattice
        z = np.array([3.0, 1.0, 2.0])
        lattice = np.linspace(0, 4, 81)
        best, arg = np.inf, None
        for a in lattice:
            for b in lattice[lattice >= a]:
                for c in lattice[lattice >= b]:
                    d = (a - z[0]) ** 2 + (b - z[1]) ** 2 + (c - z[2]) ** 2
                    if d < best:
                        best, arg = d, (a, b, c)
        assert isotonic_projection(z) == pytest.approx(arg, abs=0.05)

    def test_empty_sets_rejected(self):
        with pytest.raises(ValueError):
            Box([1.0], [0.0])
        with pytest.raises(ValueError):
            Ball([0.0], 0.0)

    @settings(max_examples=60, deadline=None)
    @given(arrays(float, 3, elements=st.floats(-50, 50)))
    def test_idempotent(self, x):
        for s in (Ball([0.0, 1.0, 0.0], 2.0), Box([-1, 0, 0], [1, 1, 3]), OrderedCone(3), HalfLine([0.0, -1.0, 2.0])):
            p = project(s, x)
            assert project(s, p) == pytest.approx(p, abs=1e-12)


class TestProperties:
    @pytest.mark.parametrize("name", list(catalog()))
    def test_suite(self, name):
        worst = property_suite(catalog()[name], n=2000, rng=np.random.default_rng(5))
        slack = {"nonexpansive": 1e-9, "monotone": 1e-9}
        for prop, v in worst.items():
            if prop == "projection_exact":
                assert v == 0.0
            else:
                assert v <= slack.get(prop, 1e-8), (prop, v)

    def test_closed_form_agreement(self):
        assert closed_form_agreement(300, np.random.default_rng(2)) <= 1e-10

    def test_projection_limit_quadratic(self):
        # for a smooth potential the resolvent tends to the point itself
        u = np.array([1.0, -2.0, 0.5])
        dist = [np.linalg.norm(resolvent(quadratic([0.5, 1.0, 2.0]), e, u) - u) for e in np.logspace(0, -6, 7)]
        assert np.all(np.diff(dist) < 0)

    @settings(max_examples=40, deadline=None)
    @given(
        arrays(float, 2, elements=st.floats(-10, 10)),
        arrays(float, 2, elements=st.floats(-10, 10)),
        st.floats(1e-3, 1.0),
    )
    def test_nonexpansive_hypothesis(self, u, v, eps):
        for pot in (coulomb_log(0.7, 2), indicator(Ball([0.0, 0.0], 1.0)), quadratic([1.0, 3.0]), zero(2)):
            d = np.linalg.norm(resolvent(pot, eps, u) - resolvent(pot, eps, v))
            assert d <= np.linalg.norm(u - v) + 1e-9

    @settings(max_examples=40, deadline=None)
    @given(arrays(float, 3, elements=st.floats(-5, 5)), st.floats(1e-3, 1.0), st.floats(0, 1))
    def test_convexity(self, x, eps, theta):
        pot = quadratic([0.5, 1.0, 2.0])
        y = x[::-1] + 1.0
        mid = theta * x + (1 - theta) * y
        assert pot.value(mid) <= theta * pot.value(x) + (1 - theta) * pot.value(y) + 1e-12
