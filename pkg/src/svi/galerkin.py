"""Spectral Galerkin reduction of a reaction-diffusion SVI on (0, 1).

The field equation

    du = [m0 u_xx - g(u) + b(t, x, u_t)] dt + sigma(t, x, u_t) dW
         + int f(t, x, u_t, y) N~(dt, dy) - dphi(u) dt,   u = 0 on {0, 1},

is projected on the Dirichlet eigenfunctions ``e_k = sqrt(2) sin(k pi x)``,
``k = 1..N``. Nonlinear pointwise maps are evaluated on the collocation
points ``x_i = i / (2N + 2)``, ``i = 1..2N+1``, where the discrete inner
product with weight ``1 / (2N + 2)`` is exact for products of two modes.

Every coefficient is a sum of three parts acting on ``u(t, x)``,
``u(t - delta1(t), x)`` and ``int_{-delta2(t)}^0 u(t + s, x) ds`` kernels, as in

    b = b1(t, x, u(t)) + b2(t, x, u(t - delta1)) + int b3(t, x, u(t + s)) ds.

The noise is ``W = sum_k sqrt(q_k) e_k beta_k``; a scalar field ``s(x)``
multiplying it becomes the matrix ``S_kj = <s e_j, e_k>`` in mode space.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .convex import ConvexPotential, zero
from .drivers import RngStream, WienerSpec
from .integrator import ProblemSpec, generate_noise, simulate
from .paths import CadlagPath, DelayFunction

__all__ = [
    "SpdeConfig",
    "LumpedPotential",
    "eigenvalues",
    "collocation",
    "build_spectral_problem",
    "simulate_spde",
    "field_eval",
    "project_function",
    "snapshot_table",
]


def eigenvalues(N):
    """``lambda_k = (k pi)^2``, ``k = 1..N``."""
    k = np.arange(1, N + 1)
    return (k * np.pi) ** 2


def collocation(N):
    """Points ``x_i``, the mode matrix ``E[i, k] = e_k(x_i)`` and weight ``w``."""
    M = 2 * N + 1
    w = 1.0 / (M + 1)
    x = np.arange(1, M + 1) * w
    E = np.sqrt(2.0) * np.sin(np.pi * np.outer(x, np.arange(1, N + 1)))
    return x, E, w


def field_eval(coeffs, x):
    """``u(x) = sum_k c_k sqrt(2) sin(k pi x)``."""
    c = np.asarray(coeffs, dtype=float)
    x = np.asarray(x, dtype=float)
    k = np.arange(1, c.shape[-1] + 1)
    basis = np.sqrt(2.0) * np.sin(np.pi * x[..., None] * k)
    return c @ np.moveaxis(basis, -1, 0) if c.ndim > 1 else basis @ c


def project_function(fn, N, order=128):
    """Coefficients ``int_0^1 fn(x) e_k(x) dx`` by Gauss-Legendre quadrature."""
    z, w = np.polynomial.legendre.leggauss(order)
    x = 0.5 * (z + 1.0)
    vals = np.asarray(fn(x), dtype=float) * np.ones_like(x)
    k = np.arange(1, N + 1)
    basis = np.sqrt(2.0) * np.sin(np.pi * np.outer(x, k))
    return 0.5 * (w * vals) @ basis


@dataclass(frozen=True)
class LumpedPotential(ConvexPotential):
    """Scalar potential applied pointwise on the collocation grid.

    ``J(c) = P J_scalar(E c)`` with ``P = w E^T``; ``E`` has orthonormal
    columns for the weighted product, so the map is nonexpansive.
    """

    base: ConvexPotential
    N: int

    def __post_init__(self):
        if self.base.dimension != 1:
            raise ValueError("the pointwise potential must be scalar")

    @property
    def dimension(self):
        return self.N

    @property
    def normalized(self):
        return self.base.normalized

    @property
    def smooth(self):
        return self.base.smooth

    @property
    def zero_interior(self):
        return self.base.zero_interior

    def _ops(self):
        _, E, w = collocation(self.N)
        return E, w

    def _field(self, c):
        E, _ = self._ops()
        return np.asarray(c, dtype=float) @ E.T

    def _modes(self, u):
        E, w = self._ops()
        return w * (u @ E)

    def value(self, c):
        _, w = self._ops()
        u = self._field(c)
        return w * np.sum(self.base.value(u[..., None]), axis=-1)

    def resolvent(self, eps, u, x0=None):
        v = self._field(u)
        eps = np.asarray(eps, dtype=float)
        if eps.ndim:
            eps = eps[..., None]
        return self._modes(self.base.resolvent(eps, v[..., None])[..., 0])

    def gradient(self, c):
        return self._modes(self.base.gradient(self._field(c)[..., None])[..., 0])

    def closure_projection(self, c):
        return self._modes(self.base.closure_projection(self._field(c)[..., None])[..., 0])


@dataclass
class SpdeConfig:
    """Reaction-diffusion SVI on (0, 1).

    ``reaction`` holds polynomial coefficients ``g(u) = sum_j a_j u^j``. The
    coefficient parts are callables ``(t, x, u)`` on field values (jumps:
    ``(t, x, u, y)``); ``None`` means absent. ``initial`` is a mode vector
    or a function of ``x``; ``history`` optionally gives ``phi(t, x)`` on
    ``[-h, 0]``.
    """

    modes: int
    m0: float = 1.0
    reaction: tuple = ()
    flux: str = "linear"
    b: tuple = (None, None, None)
    sigma: tuple = (None, None, None)
    f: tuple = (None, None, None)
    delta1: DelayFunction = field(default_factory=DelayFunction)
    delta2: DelayFunction = field(default_factory=DelayFunction)
    potential: ConvexPotential | None = None
    noise_q: tuple = ()
    levy: object = None
    initial: object = None
    history: Callable | None = None
    h: float = 0.0
    T: float = 1.0

    def __post_init__(self):
        if self.modes < 1:
            raise ValueError("need at least one mode")
        if not self.m0 > 0:
            raise ValueError("diffusion coefficient m0 must be positive")
        if self.flux != "linear":
            raise ValueError("only the linear flux h(x, v) = m0 v has an exact spectral operator")
        if len(self.reaction) > 4:
            raise ValueError("reaction polynomial above cubic is not supported")
        for name in ("b", "sigma", "f"):
            parts = tuple(getattr(self, name)) + (None,) * 3
            setattr(self, name, parts[:3])
        q = np.asarray(self.noise_q, dtype=float)
        if q.size and (q.size != self.modes or np.any(q < 0)):
            raise ValueError("noise_q needs one nonnegative entry per mode")
        if any(self.f) and self.levy is None:
            raise ValueError("jump coefficients need a LevyConfig")
        self.beta = self._one_sided_bound()

    def reaction_fn(self, u):
        return np.polynomial.polynomial.polyval(u, np.asarray(self.reaction, dtype=float)) if self.reaction else 0.0 * u

    def _one_sided_bound(self):
        """Smallest ``beta`` with ``(u1 - u2)(g(u1) - g(u2)) >= -beta |u1 - u2|^2``, i.e. ``-min g'``."""
        coef = np.zeros(4)
        coef[: len(self.reaction)] = self.reaction
        a1, a2, a3 = coef[1:]
        if a3 < 0 or (a3 == 0 and a2 != 0):
            raise ValueError("reaction must be one-sided Lipschitz (g' bounded below)")
        min_slope = a1 - a2 * a2 / (3 * a3) if a3 > 0 else a1
        return float(max(0.0, -min_slope))


def _field_part(fn, t, E, w):
    """Pointwise map on field values lifted to a map on mode vectors."""
    x = collocation(E.shape[1])[0]

    def lifted(c):
        u = c @ E.T
        return w * (np.asarray(fn(t, x, u), dtype=float) * np.ones_like(u)) @ E

    return lifted


def build_spectral_problem(cfg):
    """Mode-space :class:`~svi.integrator.ProblemSpec` of the field equation."""
    N = cfg.modes
    x, E, w = collocation(N)
    lam = eigenvalues(N)
    P = w * E.T

    def operator(c):
        lin = -cfg.m0 * lam * c
        if not cfg.reaction:
            return lin
        return lin - cfg.reaction_fn(c @ E.T) @ P.T

    A = np.diag(-cfg.m0 * lam) if not cfg.reaction else operator

    def three_part(parts, t, seg, extra=()):
        b1, b2, b3 = parts
        out = 0.0
        if b1 is not None:
            out = out + _field_part(lambda s, xx, u: b1(s, xx, u, *extra), t, E, w)(seg.current())
        if b2 is not None:
            out = out + _field_part(lambda s, xx, u: b2(s, xx, u, *extra), t, E, w)(seg.delayed())
        if b3 is not None:
            win = float(cfg.delta2(t))
            out = out + seg.integral(_field_part(lambda s, xx, u: b3(s, xx, u, *extra), t, E, w), win)
        return out

    drift = None
    if any(p is not None for p in cfg.b):
        def drift(t, seg):
            return three_part(cfg.b, t, seg)

    if len(cfg.noise_q):
        q = np.asarray(cfg.noise_q, dtype=float)
    else:
        q = np.ones(N) if any(cfg.sigma) else np.zeros(N)
    wiener = WienerSpec(tuple(q)) if np.any(q > 0) or any(cfg.sigma) else None
    diffusion = None
    if wiener is not None:
        s_parts = cfg.sigma if any(cfg.sigma) else (lambda t, xx, u: 1.0 + 0.0 * u, None, None)

        def diffusion(t, seg):
            # field s(x) from the three parts, then S_kj = w sum_i s_i e_j(x_i) e_k(x_i)
            s = _scalar_field(s_parts, t, seg, cfg, E, x)
            return w * np.einsum("ik,...i,ij->...kj", E, s, E)

    jump = None
    if any(p is not None for p in cfg.f):
        def jump(t, seg, mark):
            mark = np.asarray(mark, dtype=float)
            y = mark[..., :1] if mark.ndim > 1 else mark[:1]
            return three_part(cfg.f, t, seg, extra=(y,))

    potential = zero(N) if cfg.potential is None else LumpedPotential(cfg.potential, N)
    h = max(cfg.h, cfg.delta1.max_delay(cfg.T), cfg.delta2.max_delay(cfg.T))
    initial = _initial_modes(cfg, N, h)
    return ProblemSpec(
        dimension=N,
        potential=potential,
        T=cfg.T,
        initial=initial,
        h=h,
        drift=drift,
        diffusion=diffusion,
        jump=jump,
        operator_A=A,
        delay=cfg.delta1,
        wiener=wiener,
        levy=cfg.levy,
        name="spectral",
        metadata={
            "eigenvalues": lam,
            "v_weights": 1.0 + lam,
            "m0": cfg.m0,
            "beta": cfg.beta,
            "collocation_points": x.size,
        },
    )


def _scalar_field(parts, t, seg, cfg, E, x):
    s1, s2, s3 = parts
    s = 0.0
    if s1 is not None:
        s = s + np.asarray(s1(t, x, seg.current() @ E.T), dtype=float)
    if s2 is not None:
        s = s + np.asarray(s2(t, x, seg.delayed() @ E.T), dtype=float)
    if s3 is not None:
        win = float(cfg.delta2(t))
        s = s + seg.integral(lambda c: np.asarray(s3(t, x, c @ E.T), dtype=float) * np.ones(c.shape[:-1] + (x.size,)), win)
    return np.broadcast_to(s, np.shape(seg.current())[:-1] + (x.size,))


def _initial_modes(cfg, N, h):
    init = cfg.initial
    if init is None:
        c0 = np.zeros(N)
    elif callable(init):
        c0 = project_function(init, N)
    else:
        c0 = np.zeros(N)
        v = np.asarray(init, dtype=float)
        c0[: min(N, v.size)] = v[:N]
    if cfg.history is None or h == 0:
        return c0 if h == 0 else CadlagPath.constant(c0, h=h)
    grid = np.linspace(-h, 0.0, max(2, int(np.ceil(h / 1e-3)) + 1))
    vals = np.array([project_function(lambda xx: cfg.history(s, xx), N) for s in grid])
    vals[-1] = c0
    return CadlagPath(grid, vals, h=h, T=0.0)


def _stability(cfg, dt):
    stiff = dt * cfg.m0 * (cfg.modes * np.pi) ** 2
    if stiff >= 2.0:
        raise ValueError(
            f"explicit step unstable: dt * m0 * (N pi)^2 = {stiff:.3g} >= 2; reduce dt or modes"
        )


def simulate_spde(cfg, dt, rng=None, snapshot_every=None, x_grid=None, noise=None):
    """Mode trajectory plus field snapshots ``(times, x, u[t, x])``."""
    _stability(cfg, dt)
    spec = build_spectral_problem(cfg)
    rng = RngStream(0, 0) if rng is None else rng
    if noise is None:
        noise = generate_noise(spec, dt, streams=[rng])
    sol = simulate(spec, dt, "prox", rng=rng, noise=noise)
    every = max(1, int(snapshot_every or 1))
    x = np.linspace(0.0, 1.0, 21) if x_grid is None else np.asarray(x_grid, dtype=float)
    idx = np.arange(0, sol.times.size, every)
    if idx[-1] != sol.times.size - 1:
        idx = np.append(idx, sol.times.size - 1)
    coeffs = sol.nodes[idx]
    u = field_eval(coeffs, x)
    return sol, (sol.times[idx], x, u)


def snapshot_table(snapshots):
    """Long-format rows ``(t, x, u)``."""
    times, x, u = snapshots
    tt = np.repeat(times, x.size)
    xx = np.tile(x, times.size)
    return np.column_stack([tt, xx, u.reshape(-1)])
