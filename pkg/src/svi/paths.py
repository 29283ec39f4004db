"""Cadlag paths on ``[-h, T]`` and the delay segment ``X_t``.

For a delay function ``a`` the segment at time ``t`` is the map

    r -> X(t - a(t))   for r in [-h, t - a(t)]
         X(r)          for r in [t - a(t), t]
         X(t)          for r in [t, T]

Paths may carry a leading batch axis (one row per Monte Carlo path), so a
single :class:`Segment` serves a whole ensemble at once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "DelayFunction",
    "CadlagPath",
    "Segment",
    "segment",
    "eval_distributed_delay",
    "sup_norm",
    "append",
]

_TIME_TOL = 1e-12


@dataclass(frozen=True)
class DelayFunction:
    """Continuous ``a : [0, T] -> [0, h]``.

    kinds: ``constant`` (``value``), ``proportional`` (``a(t) = value * t``),
    ``full_path`` (``a(t) = t``) and ``table`` (``times``, ``values``,
    linearly interpolated, held constant outside the table).
    """

    kind: str = "constant"
    value: float = 0.0
    times: tuple = ()
    values: tuple = ()

    def __post_init__(self):
        if self.kind not in ("constant", "proportional", "full_path", "table"):
            raise ValueError(f"unknown delay kind {self.kind!r}")
        if self.kind == "table":
            t = np.asarray(self.times, dtype=float)
            v = np.asarray(self.values, dtype=float)
            if t.ndim != 1 or t.shape != v.shape or t.size == 0 or np.any(np.diff(t) <= 0):
                raise ValueError("delay table needs matching increasing times and values")
            if np.any(v < 0):
                raise ValueError("delays must be nonnegative")
            object.__setattr__(self, "times", tuple(t))
            object.__setattr__(self, "values", tuple(v))
        elif self.value < 0:
            raise ValueError("delays must be nonnegative")

    @classmethod
    def constant(cls, gamma):
        return cls("constant", float(gamma))

    @classmethod
    def proportional(cls, iota):
        return cls("proportional", float(iota))

    @classmethod
    def full_path(cls):
        return cls("full_path")

    @classmethod
    def table(cls, times, values):
        return cls("table", times=tuple(times), values=tuple(values))

    def __call__(self, t):
        if self.kind == "constant":
            return np.full_like(np.asarray(t, dtype=float), self.value)[()]
        if self.kind == "proportional":
            return self.value * np.asarray(t, dtype=float)
        if self.kind == "full_path":
            return np.asarray(t, dtype=float) * 1.0
        return np.interp(t, self.times, self.values)

    def max_delay(self, T):
        """Largest value of ``a`` on ``[0, T]``."""
        if self.kind == "constant":
            return self.value
        if self.kind in ("proportional", "full_path"):
            return float(self(T))
        knots = [t for t in self.times if 0 < t < T]
        return float(np.max(self([0.0, T, *knots])))

    def validate(self, h, T):
        if self.max_delay(T) > h + _TIME_TOL:
            raise ValueError(f"delay function exceeds the delay horizon h={h} on [0, {T}]")

    def scaled(self, eps):
        """Delay of the time-changed path ``Y(t) = X(eps t)``: ``a(eps t) / eps``."""
        if self.kind == "constant":
            return DelayFunction.constant(self.value / eps)
        if self.kind in ("proportional", "full_path"):
            return self
        return DelayFunction.table(np.asarray(self.times) / eps, np.asarray(self.values) / eps)


class CadlagPath:
    """Right-continuous path stored on a grid.

    Parameters
    ----------
    grid : (M,) increasing times, ``grid[0] = -h``
    values : (M, n) or (B, M, n) node values (right limits)
    interp : ``"linear"`` between nodes (diffusion paths) or ``"previous"``
        (piecewise constant, jump paths)
    T : terminal time; defaults to the last node
    """

    def __init__(self, grid, values, h=None, T=None, interp="linear"):
        grid = np.asarray(grid, dtype=float)
        values = np.asarray(values, dtype=float)
        if grid.ndim != 1 or grid.size == 0:
            raise ValueError("path grid must be a nonempty 1-D array")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("path grid must be strictly increasing")
        if values.ndim == 1:
            values = values[:, None]
        if values.shape[-2] != grid.size:
            raise ValueError("values must have one point per grid node")
        if interp not in ("linear", "previous"):
            raise ValueError("interp must be 'linear' or 'previous'")
        self.grid = grid
        self.values = values
        self.h = float(-grid[0]) if h is None else float(h)
        if abs(grid[0] + self.h) > _TIME_TOL:
            raise ValueError("grid must start at -h")
        self.T = float(grid[-1]) if T is None else float(T)
        self.interp = interp

    @classmethod
    def constant(cls, x, h=0.0, dt=None):
        """Constant initial segment on ``[-h, 0]``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if h == 0:
            grid = np.zeros(1)
        else:
            m = 1 if dt is None else max(1, int(np.ceil(h / dt - 1e-9)))
            grid = np.linspace(-h, 0.0, m + 1)
        return cls(grid, np.broadcast_to(x, (grid.size, x.size)).copy(), h=h, T=0.0)

    @classmethod
    def from_function(cls, fn, h, dt):
        """Initial segment sampled from ``fn(t) -> point`` on ``[-h, 0]``."""
        m = max(1, int(np.ceil(h / dt - 1e-9))) if h > 0 else 0
        grid = np.linspace(-h, 0.0, m + 1)
        vals = np.array([np.atleast_1d(fn(t)) for t in grid], dtype=float)
        return cls(grid, vals, h=h, T=0.0)

    @property
    def dimension(self):
        return self.values.shape[-1]

    @property
    def batched(self):
        return self.values.ndim == 3

    def __len__(self):
        return self.grid.size

    def __repr__(self):
        return (
            f"CadlagPath(nodes={self.grid.size}, span=[{self.grid[0]:g}, {self.grid[-1]:g}], "
            f"dim={self.dimension}, batch={self.values.shape[0] if self.batched else None})"
        )

    def value_at(self, t):
        """``X(t)`` for a scalar time within the stored span."""
        return _interp(self.grid, self.values, float(t), len(self.grid) - 1, self.interp)

    def left_limit(self, t):
        """``X(t-)``: the preceding node for jump paths, the value for linear ones."""
        t = float(t)
        if self.interp == "linear":
            return self.value_at(t)
        j = int(np.searchsorted(self.grid, t, side="left")) - 1
        return self.values[..., max(j, 0), :]

    def restrict(self, t0, t1):
        sel = (self.grid >= t0 - _TIME_TOL) & (self.grid <= t1 + _TIME_TOL)
        return self.grid[sel], self.values[..., sel, :]

    def row(self, b):
        """Single path ``b`` of a batched path."""
        return CadlagPath(self.grid, self.values[b], h=self.h, T=self.T, interp=self.interp)


def _interp(grid, values, t, last, mode):
    """Interpolate node values at scalar ``t`` using nodes ``0..last``."""
    j = int(np.searchsorted(grid[: last + 1], t, side="right")) - 1
    if j < 0:
        if t < grid[0] - _TIME_TOL:
            raise ValueError(f"time {t} precedes the path start {grid[0]}")
        j = 0
    if j >= last or mode == "previous":
        if t > grid[last] + _TIME_TOL and mode == "linear":
            raise ValueError(f"time {t} lies beyond the stored path end {grid[last]}")
        return values[..., min(j, last), :]
    w = (t - grid[j]) / (grid[j + 1] - grid[j])
    if w == 0.0:
        return values[..., j, :]
    return (1.0 - w) * values[..., j, :] + w * values[..., j + 1, :]


class Segment:
    """Lazy view of ``X_t`` over stored nodes ``0..last``.

    ``head = (tau, x)`` appends a virtual node after ``grid[last]``; it is
    how the integrator exposes the state at a jump time inside a step.
    ``rows`` restricts a batched path to a subset of its paths.
    """

    __slots__ = ("path", "t", "a_t", "last", "head", "rows")

    def __init__(self, path, t, delay, last=None, head=None, rows=None):
        self.path = path
        self.t = float(t)
        self.a_t = float(delay(self.t)) if callable(delay) else float(delay)
        if last is None:
            # first node at or after t, so off-grid times interpolate
            last = min(int(np.searchsorted(path.grid, self.t - _TIME_TOL, side="left")), path.grid.size - 1)
        self.last = last
        self.head = head
        self.rows = rows

    @property
    def left_knot(self):
        return self.t - self.a_t

    def _block(self, lo, hi):
        v = self.path.values[..., lo:hi, :]
        return v if self.rows is None else v[self.rows]

    def _node(self, j):
        return self._block(j, j + 1)[..., 0, :]

    def _at(self, s):
        g = self.path.grid
        last = self.last
        if self.head is not None:
            tau, x = self.head
            if s >= tau - _TIME_TOL:
                return x
            tl = g[last]
            if s > tl:
                if self.path.interp == "previous":
                    return self._node(last)
                w = (s - tl) / (tau - tl)
                return (1.0 - w) * self._node(last) + w * x
        j = int(np.searchsorted(g[: last + 1], s, side="right")) - 1
        if j < 0:
            if s < g[0] - _TIME_TOL:
                raise ValueError(f"time {s} precedes the path start {g[0]}")
            j = 0
        if j >= last or self.path.interp == "previous":
            if s > g[last] + _TIME_TOL and self.path.interp == "linear":
                raise ValueError(f"time {s} lies beyond the stored path end {g[last]}")
            return self._node(min(j, last))
        w = (s - g[j]) / (g[j + 1] - g[j])
        if w == 0.0:
            return self._node(j)
        pair = self._block(j, j + 2)
        return (1.0 - w) * pair[..., 0, :] + w * pair[..., 1, :]

    def current(self):
        """``X(t)``."""
        if self.head is not None:
            return self.head[1]
        if abs(self.path.grid[self.last] - self.t) <= _TIME_TOL:
            return self._node(self.last)
        return self._at(self.t)

    def delayed(self):
        """``X(t - a(t))``."""
        if self.a_t == 0.0:
            return self.current()
        return self._at(self.left_knot)

    def __call__(self, r):
        r = float(r)
        if r < -self.path.h - _TIME_TOL or r > max(self.path.T, self.t) + _TIME_TOL:
            raise ValueError(f"segment argument {r} outside [-h, T]")
        if r <= self.left_knot:
            return self.delayed()
        if r >= self.t:
            return self.current()
        return self._at(r)

    def nodes(self, s0, s1):
        """Times and values of the path on ``[s0, s1]``, endpoints interpolated."""
        g = self.path.grid[: self.last + 1]
        i0 = int(np.searchsorted(g, s0 + _TIME_TOL, side="right"))
        i1 = int(np.searchsorted(g, s1 - _TIME_TOL, side="left"))
        i1 = max(i0, i1)
        times = np.concatenate([[s0], g[i0:i1], [s1]])
        vals = np.concatenate(
            [self._at(s0)[..., None, :], self._block(i0, i1), self._at(s1)[..., None, :]], axis=-2
        )
        return times, vals

    def integral(self, kernel, window):
        """Trapezoid rule for ``int_{-window}^0 kernel(X(t+s)) ds``."""
        s0 = self.t - window
        if s0 < -self.path.h - _TIME_TOL:
            raise ValueError("distributed delay window leaves [-h, T]")
        if window == 0:
            return np.zeros_like(np.asarray(kernel(self.current()), dtype=float))
        times, vals = self.nodes(s0, self.t)
        k = np.asarray(kernel(vals), dtype=float)
        dt = np.diff(times)
        return np.einsum("m,...mn->...n", dt, 0.5 * (k[..., 1:, :] + k[..., :-1, :]))

    def sup_norm(self):
        """``sup_r |X_t(r)|``, which only involves ``X`` on ``[-h, t]``."""
        last = self.last
        if self.head is None and self.path.grid[last] > self.t + _TIME_TOL:
            # the node after t is not part of the segment
            last -= 1
            norms = np.maximum(np.max(np.linalg.norm(self._block(0, last + 1), axis=-1), axis=-1),
                               np.linalg.norm(self.current(), axis=-1))
            return norms
        norms = np.max(np.linalg.norm(self._block(0, last + 1), axis=-1), axis=-1)
        if self.head is not None:
            norms = np.maximum(norms, np.linalg.norm(self.head[1], axis=-1))
        return norms


def segment(path, t, a, **kwargs):
    """Segment view ``X_t``; ``t`` must lie in ``[0, T]``."""
    if t < -_TIME_TOL or t > path.T + _TIME_TOL:
        raise ValueError(f"segment time {t} outside [0, {path.T}]")
    if t > path.grid[-1] + _TIME_TOL and "head" not in kwargs:
        raise ValueError(f"path only known up to {path.grid[-1]}, requested segment at {t}")
    return Segment(path, t, a, **kwargs)


def eval_distributed_delay(path, t, delta, kernel):
    """``int_{-delta(t)}^0 kernel(X(t+s)) ds`` by the trapezoid rule."""
    window = float(delta(t)) if callable(delta) else float(delta)
    if t - window < -path.h - _TIME_TOL or t > path.grid[-1] + _TIME_TOL:
        raise ValueError("distributed delay window leaves the stored path")
    return segment(path, t, DelayFunction.constant(0.0)).integral(kernel, window)


def sup_norm(path, window=None):
    """Max node norm over ``[s, t]``, counting the left limit at a jump just before ``t``."""
    s, t = (path.grid[0], path.grid[-1]) if window is None else map(float, window)
    if t < s:
        raise ValueError("empty window")
    g = path.grid
    sel = (g >= s - _TIME_TOL) & (g <= t + _TIME_TOL)
    norms = np.linalg.norm(path.values, axis=-1)
    parts = [norms[..., sel]]
    # endpoint values that fall between nodes
    for r in (s, t):
        if not np.any(np.abs(g - r) <= _TIME_TOL) and g[0] <= r <= g[-1]:
            parts.append(np.linalg.norm(path.value_at(r), axis=-1)[..., None])
    if path.interp == "previous":
        # X(s), and every left limit inside the window, sits on the node at or before s
        i = int(np.searchsorted(g, s + _TIME_TOL, side="right")) - 1
        if i >= 0:
            parts.append(norms[..., i : i + 1])
    out = np.concatenate(parts, axis=-1)
    if out.shape[-1] == 0:
        raise ValueError("window contains no path information")
    return np.max(out, axis=-1)


def append(path, t, x):
    """New path with node ``(t, x)`` added after the last node."""
    t = float(t)
    if not t > path.grid[-1]:
        raise ValueError(f"append time {t} must exceed the last node {path.grid[-1]}")
    x = np.asarray(x, dtype=float)
    vals = np.concatenate([path.values, x[..., None, :] if x.ndim == path.values.ndim - 1 else x], axis=-2)
    return CadlagPath(np.append(path.grid, t), vals, h=path.h, T=max(path.T, t), interp=path.interp)
