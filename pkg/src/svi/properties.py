"""Randomized checks of resolvent and envelope identities.

Each check returns the worst violation over the sample (``<= 0`` means the
inequality held with room to spare), so callers compare against a slack.
"""

from __future__ import annotations

import numpy as np

from .convex import (
    NEWTON_TOL,
    Ball,
    Box,
    HalfLine,
    Indicator,
    OrderedCone,
    coulomb_log,
    indicator,
    inverse_power,
    moreau_envelope,
    quadratic,
    resolvent,
    yosida_gradient,
    zero,
)

__all__ = ["catalog", "sample_inputs", "property_suite", "closed_form_agreement"]


def catalog():
    """Named potentials used by the property suite."""
    return {
        "zero": zero(3),
        "quadratic": quadratic([0.5, 1.0, 2.0]),
        "halfline": indicator(HalfLine([0.0, -1.0])),
        "box": indicator(Box([-1.0, 0.0], [1.0, 2.0])),
        "ball": indicator(Ball([0.0, 0.0, 0.0], 1.5)),
        "ordered_cone": indicator(OrderedCone(4)),
        "coulomb_log": coulomb_log(0.5, 5),
        "inverse_power": inverse_power(0.3, 1.0, 3),
    }


def sample_inputs(n, dim, rng, scale=2.0, eps_range=(1e-3, 1.0)):
    """Points ``u, v`` and log-uniform parameters ``eps, delta``."""
    u = scale * rng.standard_normal((n, dim))
    v = scale * rng.standard_normal((n, dim))
    lo, hi = np.log(eps_range[0]), np.log(eps_range[1])
    eps = np.exp(rng.uniform(lo, hi, n))
    delta = np.exp(rng.uniform(lo, hi, n))
    return u, v, eps, delta


def _dot(a, b):
    return np.sum(a * b, axis=-1)


def property_suite(potential, n=10_000, rng=None):
    """Worst violations of the resolvent/envelope properties on ``n`` samples.

    keys: ``nonexpansive``, ``envelope_identity``, ``envelope_minimal``,
    ``monotone``, ``cross_parameter``, ``subgradient`` (smooth kinds),
    ``bound_chain`` (potentials with ``phi(0) = 0 = min phi``),
    ``projection_exact`` (indicators) / ``projection_limit`` (others).
    """
    rng = np.random.default_rng(0) if rng is None else rng
    d = potential.dimension
    u, v, eps, delta = sample_inputs(n, d, rng)
    out = {}

    Ju = resolvent(potential, eps, u)
    Jv = resolvent(potential, eps, v)
    out["nonexpansive"] = float(np.max(np.linalg.norm(Ju - Jv, axis=-1) - np.linalg.norm(u - v, axis=-1)))

    Du = u - Ju
    env = moreau_envelope(potential, eps, u)
    phiJ = potential.value(Ju)
    out["envelope_identity"] = float(np.max(np.abs(env - (0.5 * _dot(Du, Du) + eps * phiJ))))

    # J minimizes 1/2 |w - u|^2 + eps phi(w): compare against nearby feasible w
    w = Ju + 1e-2 * rng.standard_normal(Ju.shape)
    w = potential.closure_projection(w)
    with np.errstate(invalid="ignore"):
        other = 0.5 * _dot(w - u, w - u) + eps * potential.value(w)
    finite = np.isfinite(other)
    out["envelope_minimal"] = float(np.max((env - other)[finite], initial=-np.inf))

    Dv = v - Jv
    out["monotone"] = float(np.max(-_dot(Du / eps[:, None] - Dv / eps[:, None], Ju - Jv)))

    Dv_delta = yosida_gradient(potential, delta, v)
    lhs = _dot(Dv_delta / delta[:, None] - Du / eps[:, None], v - u)
    rhs = -(1.0 / delta + 1.0 / eps) * _dot(Du, Dv_delta)
    out["cross_parameter"] = float(np.max(rhs - lhs))

    if potential.smooth:
        if hasattr(potential, "residual_floor"):
            floor = potential.residual_floor(eps, Ju, u)
        else:
            floor = NEWTON_TOL * np.maximum(1.0, np.max(np.abs(u), axis=-1))
        gap = np.linalg.norm(Du / eps[:, None] - potential.gradient(Ju), axis=-1)
        # the solver certifies |r| <= floor, so the subgradient error is that over eps
        out["subgradient"] = float(np.max(gap - np.sqrt(d) * floor / eps))

    if potential.normalized:
        half = 0.5 * _dot(Du, Du)
        inner = _dot(Du, u)
        chain = np.maximum.reduce([half - env, env - inner, inner - _dot(u, u)])
        out["bound_chain"] = float(np.max(chain))

    if isinstance(potential, Indicator):
        proj = potential.domain.project(u)
        out["projection_exact"] = float(np.max(np.abs(Ju - proj)))
    else:
        grid = np.logspace(0, -6, 7)
        pts = u[:200]
        target = potential.closure_projection(pts)
        dist = np.array([np.linalg.norm(resolvent(potential, e, pts) - target, axis=-1) for e in grid])
        # distances must not grow as eps shrinks (up to rounding)
        out["projection_limit"] = float(np.max(np.diff(dist, axis=0)) - 1e-9)
    return out


def closed_form_agreement(n=1000, rng=None, lam=1.0):
    """Largest gap between Newton and the closed-form log-gas resolvent (d = 2)."""
    rng = np.random.default_rng(1) if rng is None else rng
    pot = coulomb_log(lam, 2)
    u = 2.0 * rng.standard_normal((n, 2))
    eps = np.exp(rng.uniform(np.log(1e-3), 0.0, n))
    closed = pot.resolvent(eps, u, method="closed")
    newton = pot.resolvent(eps, u, method="newton")
    return float(np.max(np.abs(closed - newton)))
