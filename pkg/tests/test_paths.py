import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from svi.paths import CadlagPath, DelayFunction, append, eval_distributed_delay, segment, sup_norm


def ramp(h=1.0, T=2.0, dt=0.01):
    g = np.linspace(-h, T, int(round((T + h) / dt)) + 1)
    return CadlagPath(g, g[:, None], h=h, T=T)


class TestSegment:
    def test_first_branch(self):
        assert segment(ramp(), 1.5, DelayFunction.constant(1.0))(-0.7) == pytest.approx([0.5])

    def test_middle_branch(self):
        assert segment(ramp(), 1.5, DelayFunction.constant(1.0))(1.0) == pytest.approx([1.0])

    def test_last_branch(self):
        assert segment(ramp(), 1.5, DelayFunction.constant(1.0))(1.9) == pytest.approx([1.5])

    def test_zero_delay_freezes_segment(self):
        seg = segment(ramp(), 1.2, DelayFunction.constant(0.0))
        for r in (-1.0, 0.0, 0.6, 1.2, 2.0):
            assert seg(r) == pytest.approx([1.2])

    def test_full_path_delay(self):
        # a(t) = t: X(0) on [-h, 0], X(r) on [0, t], X(t) after
        seg = segment(ramp(), 0.8, DelayFunction.full_path())
        assert seg(-0.5) == pytest.approx([0.0])
        assert seg(0.4) == pytest.approx([0.4])
        assert seg(1.5) == pytest.approx([0.8])

    def test_proportional_delay(self):
        seg = segment(ramp(), 1.0, DelayFunction.proportional(0.5))
        assert seg.delayed() == pytest.approx([0.5])

    def test_continuity_at_knots(self):
        seg = segment(ramp(), 1.5, DelayFunction.constant(0.7))
        for knot in (0.8, 1.5):
            assert seg(knot - 1e-9) == pytest.approx(seg(knot + 1e-9), abs=1e-8)

    def test_outside_horizon(self):
        with pytest.raises(ValueError):
            segment(ramp(), 2.5, DelayFunction.constant(0.0))
        with pytest.raises(ValueError):
            segment(ramp(), -0.1, DelayFunction.constant(0.0))

    def test_never_sees_future(self):
        g = np.linspace(-1, 2, 31)
        vals = np.where(g[:, None] > 1.0, 100.0, 1.0)
        p = CadlagPath(g, vals, interp="previous")
        seg = segment(p, 1.0, DelayFunction.constant(0.5))
        rs = np.linspace(-1, 2, 61)
        assert max(np.linalg.norm(seg(r)) for r in rs) <= sup_norm(p, (-1.0, 1.0)) + 1e-12
        assert seg.sup_norm() <= sup_norm(p, (-1.0, 1.0)) + 1e-12

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0.0, 2.0), st.floats(0.0, 1.0), st.floats(-1.0, 2.0))
    def test_constant_off_window(self, t, a, r):
        a = min(a, t + 1.0)
        seg = segment(ramp(), t, DelayFunction.constant(a))
        if r <= t - a:
            assert seg(r) == pytest.approx(seg(-1.0))
        elif r >= t:
            assert seg(r) == pytest.approx(seg(2.0))


class TestDelayFunction:
    def test_table_interpolates(self):
        d = DelayFunction.table([0.0, 1.0], [0.2, 0.6])
        assert d(0.5) == pytest.approx(0.4)
        assert d(3.0) == pytest.approx(0.6)

    def test_range_check(self):
        with pytest.raises(ValueError):
            DelayFunction.constant(-1.0)
        with pytest.raises(ValueError):
            DelayFunction.constant(2.0).validate(1.0, 1.0)

    def test_start_value_not_enforced(self):
        # a(0) = 0 is accepted even when h > 0
        DelayFunction.proportional(0.5).validate(1.0, 1.0)


class TestDistributedDelay:
    def test_linear_path_exact(self):
        p = ramp(h=1.0, T=2.0, dt=0.1)
        assert eval_distributed_delay(p, 1.0, 1.0, lambda x: x) == pytest.approx([0.5], abs=1e-13)

    def test_constant_kernel(self):
        p = ramp()
        assert eval_distributed_delay(p, 1.3, DelayFunction.constant(0.6), lambda x: np.full_like(x, 2.5)) == \
            pytest.approx([2.5 * 0.6])

    def test_square_path(self):
        g = np.linspace(-1, 2, 3001)
        p = CadlagPath(g, (g**2)[:, None])
        assert eval_distributed_delay(p, 1.0, 1.0, lambda x: x) == pytest.approx([1 / 3], abs=1e-5)

    def test_window_outside(self):
        with pytest.raises(ValueError):
            eval_distributed_delay(ramp(), 0.5, 2.0, lambda x: x)


class TestSupNorm:
    def test_constant(self):
        p = CadlagPath([0.0, 1.0], [[3.0, 4.0], [3.0, 4.0]])
        assert sup_norm(p) == pytest.approx(5.0)

    def test_max_of_norms(self):
        p = CadlagPath([0.0, 1.0, 2.0], [[0.0], [-3.0], [2.0]])
        assert sup_norm(p) == 3.0

    def test_left_limit_counted(self):
        # jump 5 -> 1 at t = 1
        p = CadlagPath([0.0, 0.5, 1.0, 2.0], [[0.0], [5.0], [1.0], [1.0]], interp="previous")
        assert sup_norm(p, (0.75, 1.1)) == 5.0
        # the left limit at the window start is not part of the window
        assert sup_norm(p, (1.0, 1.5)) == 1.0

    def test_empty_window(self):
        with pytest.raises(ValueError):
            sup_norm(ramp(), (1.0, 0.5))


class TestAppend:
    def test_grows(self):
        p = CadlagPath.constant([1.0], h=0.5, dt=0.1)
        q = append(p, 0.1, [2.0])
        assert len(q) == len(p) + 1
        assert np.array_equal(q.values[:-1], p.values)

    def test_sup_monotone(self):
        p = CadlagPath.constant([1.0], h=0.5, dt=0.1)
        q = append(p, 0.1, [0.5])
        assert sup_norm(p) <= sup_norm(q)

    def test_segment_sees_new_value(self):
        p = append(CadlagPath.constant([1.0], h=0.5, dt=0.1), 0.1, [7.0])
        seg = segment(p, 0.1, DelayFunction.constant(0.2))
        assert seg(0.1) == pytest.approx([7.0])
        assert seg.current() == pytest.approx([7.0])

    def test_non_monotone_time(self):
        with pytest.raises(ValueError):
            append(CadlagPath.constant([1.0]), 0.0, [1.0])


def test_path_validation():
    with pytest.raises(ValueError):
        CadlagPath([0.0, 0.0], [[1.0], [1.0]])
    with pytest.raises(ValueError):
        CadlagPath([0.0, 1.0], [[1.0]])
