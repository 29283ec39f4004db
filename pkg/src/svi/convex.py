"""Convex potentials, resolvents and Moreau-Yosida envelopes.

All maps act on points of shape ``(..., n)``; leading axes are treated as a
batch so that an ensemble of paths can be pushed through one call.

Conventions (the Yosida scaling used throughout the package)::

    J_eps(u)      = (I + eps * dphi)^{-1}(u)
    phi_eps(u)    = min_v  1/2 |v - u|^2 + eps * phi(v)
    Dphi_eps(u)   = u - J_eps(u)

so ``Dphi_eps(u) / eps`` is the Yosida approximation of ``dphi``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "ConvexSet",
    "HalfLine",
    "Box",
    "Ball",
    "OrderedCone",
    "ConvexPotential",
    "Zero",
    "Quadratic",
    "Indicator",
    "PairwiseG",
    "ResolventError",
    "quadratic",
    "indicator",
    "coulomb_log",
    "pairwise_g",
    "inverse_power",
    "zero",
    "evaluate",
    "resolvent",
    "moreau_envelope",
    "yosida_gradient",
    "project",
    "isotonic_projection",
]

NEWTON_TOL = 1e-12
NEWTON_MAXITER = 100


class ResolventError(RuntimeError):
    """Newton iteration for a resolvent did not reach its tolerance."""

    def __init__(self, message, residual):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


def _eps_column(eps, u):
    """Resolvent parameter as an array broadcastable against ``u`` (scalar or one per point)."""
    eps = np.asarray(eps, dtype=float)
    if eps.ndim:
        eps = np.broadcast_to(eps, u.shape[:-1])
    return eps[..., None]


def _as_points(x, dim):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] != dim:
        raise ValueError(f"expected points with last axis {dim}, got shape {x.shape}")
    return x


# ---------------------------------------------------------------------------
# convex sets


class ConvexSet:
    """Closed convex subset of R^n with an exact Euclidean projection."""

    dim: int

    def project(self, x):
        raise NotImplementedError

    def contains(self, x, tol=0.0):
        x = _as_points(x, self.dim)
        return np.linalg.norm(self.project(x) - x, axis=-1) <= tol

    def interior_contains_zero(self) -> bool:
        raise NotImplementedError


@dataclass(frozen=True)
class HalfLine(ConvexSet):
    """Coordinatewise lower bounds ``x_i >= lower_i`` (a shifted orthant)."""

    lower: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lower", np.atleast_1d(np.asarray(self.lower, dtype=float)))

    @property
    def dim(self):
        return self.lower.shape[0]

    def project(self, x):
        return np.maximum(_as_points(x, self.dim), self.lower)

    def interior_contains_zero(self):
        return bool(np.all(self.lower < 0))


@dataclass(frozen=True)
class Box(ConvexSet):
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or np.any(lo >= hi):
            raise ValueError("box needs lower < upper componentwise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self):
        return self.lower.shape[0]

    def project(self, x):
        return np.clip(_as_points(x, self.dim), self.lower, self.upper)

    def interior_contains_zero(self):
        return bool(np.all(self.lower < 0) and np.all(self.upper > 0))


@dataclass(frozen=True)
class Ball(ConvexSet):
    center: np.ndarray
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")
        object.__setattr__(self, "center", np.atleast_1d(np.asarray(self.center, dtype=float)))

    @property
    def dim(self):
        return self.center.shape[0]

    def project(self, x):
        x = _as_points(x, self.dim)
        d = x - self.center
        r = np.linalg.norm(d, axis=-1, keepdims=True)
        scale = np.where(r > self.radius, self.radius / np.where(r > 0, r, 1.0), 1.0)
        return self.center + d * scale

    def interior_contains_zero(self):
        return bool(np.linalg.norm(self.center) < self.radius)


def isotonic_projection(z):
    """Euclidean projection of each row of ``z`` onto ``z_1 <= ... <= z_d``.

    Pool-adjacent-violators; ties are resolved by block averaging, which is
    the exact projection.
    """
    z = np.asarray(z, dtype=float)
    flat = z.reshape(-1, z.shape[-1])
    out = np.empty_like(flat)
    for row in range(flat.shape[0]):
        means, sizes = [], []
        for value in flat[row]:
            means.append(value)
            sizes.append(1)
            while len(means) > 1 and means[-2] > means[-1]:
                m2, s2 = means.pop(), sizes.pop()
                m1, s1 = means.pop(), sizes.pop()
                means.append((m1 * s1 + m2 * s2) / (s1 + s2))
                sizes.append(s1 + s2)
        out[row] = np.repeat(means, sizes)
    return out.reshape(z.shape)


@dataclass(frozen=True)
class OrderedCone(ConvexSet):
    """``{x : x_{i+1} - x_i >= min_gap}``; ``min_gap = 0`` is the Weyl chamber."""

    d: int
    min_gap: float = 0.0

    def __post_init__(self):
        if self.d < 2 or self.min_gap < 0:
            raise ValueError("ordered cone needs d >= 2 and min_gap >= 0")

    @property
    def dim(self):
        return self.d

    def project(self, x):
        x = _as_points(x, self.d)
        shift = self.min_gap * np.arange(self.d)
        return isotonic_projection(x - shift) + shift

    def interior_contains_zero(self):
        return False


# ---------------------------------------------------------------------------
# potentials


class ConvexPotential:
    """Lower-semicontinuous convex ``phi : R^n -> (-inf, +inf]``.

    Attributes
    ----------
    dimension : int
    normalized : bool
        ``phi(0) = 0 <= phi`` everywhere. Potentials without it (the
        log-gas family) are admitted but skipped by checks that need it.
    zero_interior : bool
        ``0`` lies in the interior of the effective domain.
    smooth : bool
        ``phi`` is differentiable on the interior of its domain, so
        :meth:`gradient` is available.
    """

    dimension: int
    normalized = True
    zero_interior = True
    smooth = True

    def value(self, x):
        raise NotImplementedError

    def resolvent(self, eps, u, x0=None):
        raise NotImplementedError

    def gradient(self, x):
        raise NotImplementedError(f"{type(self).__name__} has no gradient")

    def closure_projection(self, x):
        """Projection onto the closure of the effective domain."""
        return np.asarray(x, dtype=float)


@dataclass(frozen=True)
class Zero(ConvexPotential):
    dimension: int

    def value(self, x):
        return np.zeros(_as_points(x, self.dimension).shape[:-1])

    def resolvent(self, eps, u, x0=None):
        return _as_points(u, self.dimension).copy()

    def gradient(self, x):
        return np.zeros_like(_as_points(x, self.dimension))


@dataclass(frozen=True)
class Quadratic(ConvexPotential):
    """``phi(x) = 1/2 sum_i w_i x_i^2`` with ``w_i >= 0``."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if np.any(w < 0):
            raise ValueError("quadratic weights must be nonnegative")
        object.__setattr__(self, "weights", w)

    @property
    def dimension(self):
        return self.weights.shape[0]

    def value(self, x):
        x = _as_points(x, self.dimension)
        return 0.5 * np.sum(self.weights * x * x, axis=-1)

    def resolvent(self, eps, u, x0=None):
        u = _as_points(u, self.dimension)
        return u / (1.0 + _eps_column(eps, u) * self.weights)

    def gradient(self, x):
        return self.weights * _as_points(x, self.dimension)


@dataclass(frozen=True)
class Indicator(ConvexPotential):
    """``0`` on a closed convex set, ``+inf`` outside; resolvent = projection."""

    domain: ConvexSet
    smooth = False

    def __post_init__(self):
        zero = np.zeros(self.domain.dim)
        if not self.domain.contains(zero, tol=1e-12):
            raise ValueError("indicator set must contain 0 so that phi(0) = 0")

    @property
    def dimension(self):
        return self.domain.dim

    @property
    def zero_interior(self):
        return self.domain.interior_contains_zero()

    def value(self, x, tol=1e-12):
        x = _as_points(x, self.dimension)
        inside = self.domain.contains(x, tol=tol)
        return np.where(inside, 0.0, np.inf)

    def resolvent(self, eps, u, x0=None):
        return self.domain.project(u)

    def closure_projection(self, x):
        return self.domain.project(x)


def _rounding_floor(hess, scale):
    # coordinates carry ~ulp(scale) error, which the Newton matrix amplifies
    return 8.0 * np.finfo(float).eps * scale * np.max(np.sum(np.abs(hess), axis=-1), axis=-1)


@dataclass(frozen=True)
class PairwiseG(ConvexPotential):
    """``phi(x) = sum_{i<j} g(x^j - x^i)`` on ``x^1 < ... < x^d``, else ``+inf``.

    ``g`` is convex and C^2 on ``(0, inf)`` with ``g(0+) = +inf``; it is
    supplied through its value and first two derivatives. The resolvent is
    solved by damped Newton that keeps iterates strictly ordered.
    """

    d: int
    g: Callable
    dg: Callable
    d2g: Callable
    name: str = "pairwise_g"
    # scale used for the feasible starting gap
    strength: float = 1.0
    closed_form_gap: Callable | None = field(default=None, compare=False)

    normalized = False
    zero_interior = False

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("pairwise potentials need d >= 2")

    @property
    def dimension(self):
        return self.d

    def _gaps(self, x):
        iu, ju = np.triu_indices(self.d, 1)
        return x[..., ju] - x[..., iu], iu, ju

    def value(self, x):
        x = _as_points(x, self.d)
        ordered = np.all(np.diff(x, axis=-1) > 0, axis=-1)
        r, _, _ = self._gaps(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = np.sum(self.g(np.where(r > 0, r, 1.0)), axis=-1)
        return np.where(ordered, vals, np.inf)

    def gradient(self, x):
        x = _as_points(x, self.d)
        r, iu, ju = self._gaps(x)
        gp = self.dg(r)
        grad = np.zeros_like(x)
        for k, (i, j) in enumerate(zip(iu, ju)):
            grad[..., j] += gp[..., k]
            grad[..., i] -= gp[..., k]
        return grad

    def hessian(self, x):
        x = _as_points(x, self.d)
        r, iu, ju = self._gaps(x)
        gpp = self.d2g(r)
        hess = np.zeros(x.shape + (self.d,))
        for k, (i, j) in enumerate(zip(iu, ju)):
            c = gpp[..., k]
            hess[..., i, i] += c
            hess[..., j, j] += c
            hess[..., i, j] -= c
            hess[..., j, i] -= c
        return hess

    def closure_projection(self, x):
        return OrderedCone(self.d).project(x)

    def resolvent(self, eps, u, x0=None, method="auto"):
        u = _as_points(u, self.d)
        eps = _eps_column(eps, u)[..., 0]
        if np.any(eps <= 0):
            raise ValueError("resolvent parameter must be positive")
        if method == "closed" or (method == "auto" and self.d == 2 and self.closed_form_gap is not None):
            if self.closed_form_gap is None or self.d != 2:
                raise ValueError("closed form only available for the d = 2 log potential")
            gap = self.closed_form_gap(eps, u[..., 1] - u[..., 0])
            center = 0.5 * (u[..., 0] + u[..., 1])
            return np.stack([center - 0.5 * gap, center + 0.5 * gap], axis=-1)
        return self._newton(eps, u, x0)

    def _start(self, eps, u, x0):
        flat = u.reshape(-1, self.d)
        start = np.empty_like(flat)
        need = np.ones(flat.shape[0], dtype=bool)
        if x0 is not None:
            x0 = np.broadcast_to(np.asarray(x0, dtype=float), u.shape).reshape(-1, self.d)
            ok = np.all(np.diff(x0, axis=-1) > 0, axis=-1)
            start[ok] = x0[ok]
            need = ~ok
        if np.any(need):
            gap = np.sqrt(np.min(eps) * self.strength)
            start[need] = OrderedCone(self.d, gap).project(flat[need])
        return start

    def _objective(self, v, u, eps):
        return 0.5 * np.sum((v - u) ** 2, axis=-1) + eps * self.value(v)

    def residual_floor(self, eps, v, u):
        """Smallest residual floating point can certify at ``v``."""
        vf = v.reshape(-1, self.d)
        ef = np.broadcast_to(eps, v.shape[:-1]).reshape(-1)
        hess = np.eye(self.d) + ef[:, None, None] * self.hessian(vf)
        scale = np.maximum(1.0, np.max(np.abs(u.reshape(-1, self.d)), axis=-1))
        return np.maximum(NEWTON_TOL * scale, _rounding_floor(hess, scale)).reshape(v.shape[:-1])

    def _newton(self, eps, u, x0):
        shape = u.shape
        uf = u.reshape(-1, self.d)
        epsf = np.broadcast_to(eps, shape[:-1]).reshape(-1)
        v = self._start(epsf, u, x0)
        scale = np.maximum(1.0, np.max(np.abs(uf), axis=-1))
        eye = np.eye(self.d)
        active = np.arange(uf.shape[0])
        res = np.full(uf.shape[0], np.inf)
        for _ in range(NEWTON_MAXITER):
            va, ua, ea = v[active], uf[active], epsf[active]
            r = va - ua + ea[:, None] * self.gradient(va)
            rn = np.max(np.abs(r), axis=-1)
            res[active] = rn
            hess = eye + ea[:, None, None] * self.hessian(va)
            floor = _rounding_floor(hess, scale[active])
            done = rn <= np.maximum(NEWTON_TOL * scale[active], floor)
            if np.all(done):
                active = active[:0]
                break
            active, va, ua, ea = active[~done], va[~done], ua[~done], ea[~done]
            r, rn, hess = r[~done], rn[~done], hess[~done]
            step = np.linalg.solve(hess, r[..., None])[..., 0]
            f0 = self._objective(va, ua, ea)
            slope = -np.sum(r * step, axis=-1)
            t = np.ones(va.shape[0])
            accepted = np.zeros(va.shape[0], dtype=bool)
            new = va.copy()
            for _ in range(60):
                trial = va - t[:, None] * step
                feasible = np.all(np.diff(trial, axis=-1) > 0, axis=-1)
                with np.errstate(invalid="ignore"):
                    f1 = self._objective(trial, ua, ea)
                    r1 = np.max(np.abs(trial - ua + ea[:, None] * self.gradient(np.where(feasible[:, None], trial, va))), axis=-1)
                good = feasible & ((f1 <= f0 + 1e-4 * t * slope) | (r1 < rn)) & ~accepted
                new[good] = trial[good]
                accepted |= good
                if np.all(accepted):
                    break
                t = np.where(accepted, t, 0.5 * t)
            stalled = ~accepted
            v[active] = new
            if np.any(stalled):
                # no ordered descent step left: settle for what floating point allows
                close = rn[stalled] <= 1e-9 * scale[active][stalled]
                if not np.all(close):
                    raise ResolventError(f"{self.name} Newton line search failed", float(np.max(rn[stalled])))
                active = active[~stalled]
                if active.size == 0:
                    break
        if active.size:
            raise ResolventError(f"{self.name} Newton did not converge", float(np.max(res[active])))
        return v.reshape(shape)


# ---------------------------------------------------------------------------
# catalog constructors


def zero(dim):
    return Zero(int(dim))


def quadratic(weights):
    """``phi(x) = 1/2 sum w_i x_i^2``."""
    return Quadratic(weights)


def indicator(convex_set):
    """Indicator of a closed convex set containing 0 (reflection potential)."""
    return Indicator(convex_set)


def _log_gap(lam):
    def gap(eps, w):
        # positive root of g^2 - w g - 2 eps lam = 0, cancellation-free for w < 0
        disc = np.sqrt(w * w + 8.0 * eps * lam)
        return np.where(w >= 0, 0.5 * (w + disc), 4.0 * eps * lam / (disc - w))

    return gap


def coulomb_log(lam, d):
    """Log-gas repulsion ``-lam sum_{i<j} ln(x^j - x^i)`` on the ordered chamber.

    Not normalized: it is unbounded below and infinite at 0.
    """
    if not lam > 0:
        raise ValueError("repulsion strength must be positive")
    return PairwiseG(
        d=int(d),
        g=lambda r: -lam * np.log(r),
        dg=lambda r: -lam / r,
        d2g=lambda r: lam / (r * r),
        name="coulomb_log",
        strength=lam,
        closed_form_gap=_log_gap(lam),
    )


def inverse_power(lam, p, d):
    """Pairwise ``g(r) = lam * r^{-p}``, ``p > 0``."""
    if not (lam > 0 and p > 0):
        raise ValueError("inverse power needs lam > 0 and p > 0")
    return PairwiseG(
        d=int(d),
        g=lambda r: lam * r ** (-p),
        dg=lambda r: -p * lam * r ** (-p - 1),
        d2g=lambda r: p * (p + 1) * lam * r ** (-p - 2),
        name="inverse_power",
        strength=lam,
    )


def pairwise_g(g, dg, d2g, d, strength=1.0):
    """General pairwise repulsion from a convex ``g`` with ``g(0+) = +inf``."""
    return PairwiseG(d=int(d), g=g, dg=dg, d2g=d2g, strength=strength)


# ---------------------------------------------------------------------------
# operations


def evaluate(potential, x):
    """``phi(x)``; ``+inf`` outside the effective domain."""
    return potential.value(_as_points(x, potential.dimension))


def resolvent(potential, eps, u, **kwargs):
    """``J_eps(u) = (I + eps dphi)^{-1}(u)``."""
    if not np.all(np.asarray(eps) > 0):
        raise ValueError("resolvent parameter eps must be positive")
    return potential.resolvent(eps, _as_points(u, potential.dimension), **kwargs)


def yosida_gradient(potential, eps, u):
    """``Dphi_eps(u) = u - J_eps(u)``; divide by ``eps`` for the Yosida map."""
    u = _as_points(u, potential.dimension)
    return u - resolvent(potential, eps, u)


def moreau_envelope(potential, eps, u):
    """``phi_eps(u) = 1/2 |u - J_eps u|^2 + eps phi(J_eps u)``."""
    u = _as_points(u, potential.dimension)
    j = resolvent(potential, eps, u)
    return 0.5 * np.sum((u - j) ** 2, axis=-1) + eps * potential.value(j)


def project(convex_set, x):
    """Nearest point of a closed convex set."""
    return convex_set.project(x)
