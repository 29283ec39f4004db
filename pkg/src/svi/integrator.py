"""Time stepping for stochastic variational inequalities with delay and jumps.

The model is

    dX = [A(X) + b(t, X_t)] dt + sigma(t, X_t) dW + int f(t, X_t, u) N~(dt, du) - dphi(X) dt

with ``X_t`` the delay segment. Two schemes are provided:

``prox``
    explicit Euler predictor followed by the resolvent ``J_{dt}`` of ``dphi``.
``yosida``
    explicit Euler for the penalized equation with ``dphi`` replaced by the
    Yosida map ``(u - J_eps u) / eps``; needs ``dt <= eps``.

``eta`` is stored with ``d eta`` in ``dphi(X) dt``, so ``X = driver - eta``.
For reflection at 0 on the half-line this makes ``eta`` nonincreasing; the
usual pushing process of the Skorokhod problem is ``-eta``.

A step containing jump times is split at each of them. The Wiener increment
of the step is divided by Brownian-bridge interpolation, the jump is added at
the start of the sub-step it opens, and the prox closes every sub-step.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .convex import ConvexPotential, zero
from .drivers import JumpEvents, LevyConfig, RngStream, WienerSpec, sample_jump_events, sample_wiener_increments
from .paths import CadlagPath, DelayFunction, Segment

__all__ = [
    "ProblemSpec",
    "SolutionPair",
    "NoiseRecord",
    "EnsembleResult",
    "SimulationError",
    "time_grid",
    "generate_noise",
    "prox_euler_step",
    "yosida_penalized_step",
    "simulate",
    "simulate_ensemble",
    "euler_driver",
    "skorokhod_1d",
    "picard_solve",
    "picard_ensemble",
    "total_variation",
    "check_variational_inequality",
    "energy_residual",
]

SCHEMES = ("prox", "yosida")
DOMAIN_TOL = 1e-9


class SimulationError(RuntimeError):
    """Step failure; ``partial`` holds the path computed so far."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


@dataclass
class ProblemSpec:
    """Data of one SVI problem.

    Coefficients take ``(t, seg)`` where ``seg`` is a :class:`~svi.paths.Segment`
    over a batch of ``B`` paths and return ``(B, n)`` (drift, jump, compensator)
    or ``(B, n, K)`` (diffusion); unbatched ``(n,)`` / ``(n, K)`` results are
    broadcast. ``jump`` also receives marks of shape ``(B, m)`` or ``(m,)``.
    ``operator_A`` is ``None``, an ``(n, n)`` matrix or a callable on ``(B, n)``.
    ``initial`` is a point (constant history) or a path on ``[-h, 0]``.
    """

    dimension: int
    potential: ConvexPotential
    T: float = 1.0
    initial: object = 0.0
    h: float = 0.0
    drift: Callable | None = None
    diffusion: Callable | None = None
    jump: Callable | None = None
    compensator: Callable | None = None
    operator_A: object = None
    delay: DelayFunction = field(default_factory=DelayFunction)
    wiener: WienerSpec | None = None
    levy: LevyConfig | None = None
    subdiff_scale: float = 1.0
    interp: str = "linear"
    name: str = "svi"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        n = int(self.dimension)
        if n < 1:
            raise ValueError("dimension must be positive")
        if self.potential.dimension != n:
            raise ValueError(f"potential acts on R^{self.potential.dimension}, problem is R^{n}")
        if not self.T > 0:
            raise ValueError("horizon T must be positive")
        if self.subdiff_scale <= 0:
            raise ValueError("subdiff_scale must be positive")
        if self.diffusion is not None and self.wiener is None:
            raise ValueError("a diffusion coefficient needs a WienerSpec")
        if self.jump is not None and self.levy is None:
            raise ValueError("a jump coefficient needs a LevyConfig")
        if isinstance(self.initial, CadlagPath):
            if self.initial.dimension != n:
                raise ValueError("initial segment has the wrong dimension")
            if abs(self.initial.grid[-1]) > 1e-12:
                raise ValueError("initial segment must end at time 0")
            self.h = self.initial.h
        else:
            x0 = np.broadcast_to(np.asarray(self.initial, dtype=float), (n,)).copy()
            self.initial = x0
        self.delay.validate(self.h, self.T)
        vals = self.initial.values if isinstance(self.initial, CadlagPath) else self.initial[None]
        proj = self.potential.closure_projection(vals)
        if np.max(np.abs(proj - vals)) > DOMAIN_TOL:
            raise ValueError("initial segment leaves the closure of the potential's domain")
        A = self.operator_A
        if A is not None and not callable(A):
            A = np.asarray(A, dtype=float)
            if A.shape != (n, n):
                raise ValueError(f"operator_A must be {n}x{n}")
            # one-sided bound <x, A x> <= beta/2 |x|^2
            self.metadata.setdefault("A_upper", float(np.max(np.linalg.eigvalsh(0.5 * (A + A.T)))))
            self.operator_A = A

    @property
    def modes(self):
        return 0 if self.wiener is None else self.wiener.modes

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def initial_path(self, dt):
        if isinstance(self.initial, CadlagPath):
            return self.initial
        return CadlagPath.constant(self.initial, h=self.h, dt=dt)

    def apply_A(self, x):
        A = self.operator_A
        if A is None:
            return 0.0
        if callable(A):
            return np.asarray(A(x), dtype=float)
        return np.einsum("ij,bj->bi", A, x)


@dataclass
class NoiseRecord:
    """Wiener increments ``dW`` of shape ``(P, N, K)`` and per-path jump events."""

    dW: np.ndarray
    events: list
    dt: float

    @property
    def n_paths(self):
        return self.dW.shape[0]

    def rescaled(self, eps):
        """Noise of the time-changed problem ``Y(t) = X(eps t)``."""
        return NoiseRecord(
            self.dW / np.sqrt(eps),
            [ev.scaled(1.0 / eps) for ev in self.events],
            self.dt / eps,
        )

    def subset(self, rows):
        rows = np.atleast_1d(rows)
        return NoiseRecord(self.dW[rows], [self.events[r] for r in rows], self.dt)


@dataclass
class SolutionPair:
    """Coupled ``(X, eta)`` on a uniform grid.

    ``X`` covers ``[-h, T]``; ``eta`` covers ``[0, T]`` with ``eta(0) = 0``.
    Batched runs carry a leading path axis in both. ``event_states`` holds the
    state just before each jump, in path-major event order.
    """

    X: CadlagPath
    eta: CadlagPath
    njumps: np.ndarray
    dt: float
    scheme: str
    seed: object = None
    eps: float | None = None
    noise: NoiseRecord | None = None
    event_states: np.ndarray | None = None
    m0: int = 0
    complete: bool = True

    @property
    def times(self):
        return self.eta.grid

    @property
    def nodes(self):
        """``X`` on ``[0, T]`` (one value per step node)."""
        return self.X.values[..., self.m0 :, :]

    @property
    def batched(self):
        return self.X.batched

    def path(self, b):
        """Single-path view of a batched solution."""
        if not self.batched:
            return self
        noise = None if self.noise is None else self.noise.subset([b])
        ev = self.event_states
        if ev is not None and self.noise is not None:
            counts = np.array([len(e) for e in self.noise.events])
            start = int(counts[:b].sum())
            ev = ev[start : start + counts[b]]
        return SolutionPair(
            self.X.row(b), self.eta.row(b), self.njumps[b], self.dt, self.scheme,
            self.seed, self.eps, noise, ev, self.m0, self.complete,
        )


@dataclass
class EnsembleResult:
    """Per-path statistics stacked in path-index order."""

    values: np.ndarray
    n_paths: int
    seed: int
    chunk_size: int

    def mean(self, axis=0):
        return np.mean(self.values, axis=axis)

    def stderr(self, axis=0):
        n = self.values.shape[axis]
        return np.std(self.values, axis=axis, ddof=1) / np.sqrt(n) if n > 1 else np.zeros_like(self.mean(axis))


# ---------------------------------------------------------------------------
# grid and noise


def time_grid(T, dt):
    """Nodes ``k dt``, ``k = 0..N``; ``T / dt`` must be an integer."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    N = int(round(T / dt))
    if N < 1 or abs(N * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"T={T} is not an integer multiple of dt={dt}")
    return np.arange(N + 1) * dt


def generate_noise(spec, dt, seed=None, path_ids=None, streams=None):
    """Noise for the given paths; path ``p`` uses ``RngStream(seed, p)``.

    Alternatively pass explicit ``streams`` (one per path).
    """
    t = time_grid(spec.T, dt)
    if streams is None:
        if seed is None:
            raise ValueError("need a seed or explicit streams")
        ids = np.arange(1) if path_ids is None else np.asarray(path_ids)
        streams = [RngStream(int(seed), int(p)) for p in ids]
    K = spec.modes
    N = t.size - 1
    dW = np.zeros((len(streams), N, K))
    events = []
    for i, s in enumerate(streams):
        if K:
            dW[i] = sample_wiener_increments(spec.wiener, t, s)
        if spec.levy is not None:
            events.append(sample_jump_events(spec.levy, spec.T, s, modes=K))
        else:
            events.append(JumpEvents.empty(1, K))
    return NoiseRecord(dW, events, dt)


# ---------------------------------------------------------------------------
# coefficient evaluation and the sub-step update


def _broadcast(val, shape):
    return np.broadcast_to(np.asarray(val, dtype=float), shape)


def _coefficients(spec, t, seg, B):
    """Compensated drift ``b - int f dnu`` ``(B, n)`` and diffusion ``(B, n, K)``."""
    n = spec.dimension
    mu = np.zeros((B, n)) if spec.drift is None else np.array(_broadcast(spec.drift(t, seg), (B, n)))
    if spec.jump is not None:
        if spec.compensator is not None:
            mu -= _broadcast(spec.compensator(t, seg), (B, n))
        else:
            nodes, weights = spec.levy.sampler.quadrature()
            comp = np.zeros((B, n))
            for node, w in zip(nodes, weights):
                comp += w * _broadcast(spec.jump(t, seg, node), (B, n))
            mu -= spec.levy.total_intensity * comp
    sig = None
    if spec.diffusion is not None:
        sig = _broadcast(spec.diffusion(t, seg), (B, n, spec.modes))
    return mu, sig


def _jump_size(spec, t, seg, mark, B):
    return _broadcast(spec.jump(t, seg, np.atleast_2d(mark)), (B, spec.dimension))


def _advance(spec, scheme, eps, x, mu, sig, inc, ell, jump=None):
    """One (sub-)step of length ``ell``; returns ``(x_next, d_eta)``."""
    drift = spec.apply_A(x) + mu
    noise = 0.0 if sig is None else np.einsum("bnk,bk->bn", sig, inc)
    kick = 0.0 if jump is None else jump
    lam = ell * spec.subdiff_scale
    if scheme == "prox":
        y = x + kick + drift * ell + noise
        if lam > 0:
            x_new = spec.potential.resolvent(lam, y, x0=x)
        else:
            x_new = spec.potential.closure_projection(y)
        return x_new, y - x_new
    pen = (x - spec.potential.resolvent(eps, x)) / eps
    d_eta = pen * lam
    return x + kick + drift * ell + noise - d_eta, d_eta


def _bridge(R, L, ell, z, q):
    """Part of an increment ``R`` over ``L`` falling in the first ``ell``."""
    if L <= 0:
        return R
    frac = ell / L
    var = np.maximum(q * ell * (L - ell) / L, 0.0)
    return frac * R + np.sqrt(var) * z


def _check_scheme(scheme, eps, dt):
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
    if scheme == "yosida":
        if eps is None or not eps > 0:
            raise ValueError("the yosida scheme needs eps > 0")
        if dt > eps * (1 + 1e-12):
            raise ValueError(f"explicit penalization needs dt <= eps (dt={dt}, eps={eps})")


# ---------------------------------------------------------------------------
# single steps


def prox_euler_step(x, seg, t, dt, dW, jumps, spec):
    """Proximal Euler step; all jumps in the step use the segment at ``t``.

    Returns ``(x_next, d_eta)`` with ``x_next = J_dt(y)`` and ``d_eta = y - x_next``.
    """
    return _single_step(x, seg, t, dt, dW, jumps, spec, "prox", None)


def yosida_penalized_step(x, seg, t, dt, dW, jumps, spec, eps):
    """Explicit step of the penalized equation (drift ``-(1/eps) Dphi_eps``)."""
    _check_scheme("yosida", eps, dt)
    return _single_step(x, seg, t, dt, dW, jumps, spec, "yosida", eps)[0]


def _single_step(x, seg, t, dt, dW, jumps, spec, scheme, eps):
    if not dt > 0:
        raise ValueError("dt must be positive")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    B = x.shape[0]
    mu, sig = _coefficients(spec, t, seg, B)
    kick = np.zeros_like(x)
    for tj, mark in jumps or ():
        kick += _jump_size(spec, tj, seg, mark, B)
    inc = None if sig is None else np.atleast_2d(np.asarray(dW, dtype=float))
    x_new, d_eta = _advance(spec, scheme, eps, x, mu, sig, inc, dt, kick)
    if not np.all(np.isfinite(x_new)):
        raise SimulationError(f"non-finite state at t={t}")
    return x_new, d_eta


# ---------------------------------------------------------------------------
# the ensemble core


def _event_table(events, dt, N):
    """Flatten per-path events (path-major) and group them by step."""
    counts = np.array([len(e) for e in events], dtype=int)
    if counts.sum() == 0:
        return None
    times = np.concatenate([e.times for e in events])
    paths = np.repeat(np.arange(len(events)), counts)
    steps = np.minimum((times // dt).astype(int), N - 1)
    order = np.lexsort((times, paths, steps))
    marks = np.concatenate([e.marks for e in events if len(e)])
    bridges = [e.bridge if e.bridge is not None else np.zeros((len(e), 0)) for e in events if len(e)]
    return {
        "times": times,
        "marks": marks,
        "bridge": np.concatenate(bridges),
        "paths": paths,
        "order": order,
        "sorted_steps": steps[order],
        "counts": counts,
    }


def _integrate(spec, dt, noise, scheme="prox", eps=None, source=None, source_events=None, seed=None):
    """Run all paths of ``noise``; coefficients read ``source`` when given (Picard)."""
    _check_scheme(scheme, eps, dt)
    t = time_grid(spec.T, dt)
    N = t.size - 1
    if noise.dW.shape[1] != N or abs(noise.dt - dt) > 1e-12 * dt:
        raise ValueError("noise record does not match the time grid")
    P, n = noise.n_paths, spec.dimension
    init = spec.initial_path(dt)
    m0 = init.grid.size - 1
    grid = np.concatenate([init.grid[:-1], t])
    X = np.empty((P, grid.size, n))
    X[:, : m0 + 1] = init.values if not init.batched else init.values[:, : m0 + 1]
    eta = np.zeros((P, N + 1, n))
    njumps = np.zeros((P, N + 1), dtype=int)
    path = CadlagPath(grid, X, h=spec.h, T=spec.T, interp=spec.interp)
    src = path if source is None else source
    q = spec.wiener.q if spec.wiener is not None else np.zeros(0)
    table = _event_table(noise.events, dt, N)
    ev_state = np.zeros((0 if table is None else table["times"].size, n))
    if table is not None:
        bounds = np.searchsorted(table["sorted_steps"], np.arange(N + 1))

    def partial():
        return SolutionPair(path, CadlagPath(t, eta, h=0.0, T=spec.T), njumps, dt, scheme, seed, eps,
                            noise, ev_state, m0, complete=False)

    for k in range(N):
        col = m0 + k
        x = X[:, col]
        seg = Segment(src, t[k], spec.delay, last=col)
        mu, sig = _coefficients(spec, t[k], seg, P)
        dW = noise.dW[:, k]
        jumped = None
        if table is not None and bounds[k + 1] > bounds[k]:
            ids = table["order"][bounds[k] : bounds[k + 1]]
            jumped = np.unique(table["paths"][ids])
        if jumped is None:
            x_new, d_eta = _advance(spec, scheme, eps, x, mu, sig, dW, dt)
            njumps[:, k + 1] = njumps[:, k]
        else:
            calm = np.ones(P, dtype=bool)
            calm[jumped] = False
            x_new = np.empty_like(x)
            d_eta = np.zeros_like(x)
            if calm.any():
                x_new[calm], d_eta[calm] = _advance(
                    spec, scheme, eps, x[calm], mu[calm], None if sig is None else sig[calm], dW[calm], dt
                )
            njumps[:, k + 1] = njumps[:, k]
            for p in jumped:
                mine = ids[table["paths"][ids] == p]
                xp, de = _jump_step(spec, scheme, eps, src, source_events, table, ev_state, mine,
                                    x[p : p + 1], mu[p : p + 1], None if sig is None else sig[p : p + 1],
                                    dW[p : p + 1], t[k], dt, col, p, q, source is None)
                x_new[p], d_eta[p] = xp[0], de[0]
                njumps[p, k + 1] += mine.size
        if not np.all(np.isfinite(x_new)):
            X[:, col + 1 :] = np.nan
            raise SimulationError(f"non-finite state at t={t[k + 1]}", partial())
        X[:, col + 1] = x_new
        eta[:, k + 1] = eta[:, k] + d_eta
    return SolutionPair(path, CadlagPath(t, eta, h=0.0, T=spec.T), njumps, dt, scheme, seed, eps,
                        noise, ev_state, m0)


def _jump_step(spec, scheme, eps, src, source_events, table, ev_state, ids, x, mu, sig, dW, tk, dt, col, p, q, direct):
    """Step of one path split at its jump times ``ids`` (sorted)."""
    R = dW.copy()
    L = dt
    s = tk
    kick = None
    d_eta = np.zeros_like(x)
    for e in ids:
        tau = table["times"][e]
        ell = max(tau - s, 0.0)
        inc = _bridge(R, L, ell, table["bridge"][e], q)
        x, de = _advance(spec, scheme, eps, x, mu, sig, inc, ell, kick)
        d_eta += de
        R = R - inc
        L = L - ell
        s = tau
        ev_state[e] = x[0]
        head = x if direct else source_events[e][None]
        seg = Segment(src, tau, spec.delay, last=col, head=(tau, head), rows=[p])
        mu, sig = _coefficients(spec, tau, seg, 1)
        kick = _jump_size(spec, tau, seg, table["marks"][e], 1)
    x, de = _advance(spec, scheme, eps, x, mu, sig, R, max(L, 0.0), kick)
    return x, d_eta + de


# ---------------------------------------------------------------------------
# public simulation entry points


def _squeeze(sol):
    return sol.path(0) if sol.batched and sol.X.values.shape[0] == 1 else sol


def simulate(spec, dt, scheme="prox", rng=None, eps=None, noise=None):
    """Single path on ``[-h, T]``.

    ``rng`` is an :class:`~svi.drivers.RngStream` (default ``(0, 0)``);
    pass ``noise`` to replay a stored realization instead.
    """
    if noise is None:
        rng = RngStream(0, 0) if rng is None else rng
        noise = generate_noise(spec, dt, streams=[rng])
    seed = None if rng is None else (rng.master_seed, rng.stream_id)
    return _squeeze(_integrate(spec, dt, noise, scheme, eps, seed=seed))


def _chunks(n_paths, chunk_size):
    return [(a, min(a + chunk_size, n_paths)) for a in range(0, n_paths, chunk_size)]


def simulate_ensemble(spec, dt, n_paths, seed, scheme="prox", eps=None, statistic=None,
                      chunk_size=2048, workers=1, first_path=0):
    """Monte Carlo ensemble; path ``p`` is driven by ``RngStream(seed, p)``.

    Paths are processed in fixed chunks, so results do not depend on
    ``workers``. ``statistic(sol)`` maps a batched :class:`SolutionPair` to
    per-path values ``(B, ...)``; without it the full batched solution of
    every chunk is returned in a list.
    """
    if n_paths < 1:
        raise ValueError("need at least one path")

    def run(bounds):
        ids = np.arange(first_path + bounds[0], first_path + bounds[1])
        noise = generate_noise(spec, dt, seed, ids)
        sol = _integrate(spec, dt, noise, scheme, eps, seed=seed)
        return sol if statistic is None else np.asarray(statistic(sol))

    chunks = _chunks(n_paths, chunk_size)
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]
    if statistic is None:
        return parts
    return EnsembleResult(np.concatenate(parts, axis=0), n_paths, seed, chunk_size)


def euler_driver(spec, dt, noise):
    """The unconstrained Euler path (same noise, potential switched off)."""
    free = spec.replace(potential=zero(spec.dimension))
    return _integrate(free, dt, noise, "prox")


def skorokhod_1d(driver):
    """Reflection at 0 of a scalar driver starting at ``>= 0``.

    The pushing process is ``L(t) = max(0, max_{s<=t} -Y(s))`` and
    ``X = Y + L``; the returned ``eta`` is ``-L`` (subdifferential sign).
    """
    grid = driver.grid
    Y = driver.values
    if Y.shape[-1] != 1:
        raise ValueError("skorokhod_1d needs a scalar path")
    if np.any(Y[..., 0, 0] < 0):
        raise ValueError("driver must start in [0, inf)")
    push = np.maximum(np.maximum.accumulate(-Y, axis=-2), 0.0)
    X = CadlagPath(grid, Y + push, h=driver.h, T=driver.T, interp=driver.interp)
    start = int(np.searchsorted(grid, 0.0 - 1e-12))
    eta = CadlagPath(grid[start:], -(push[..., start:, :] - push[..., start : start + 1, :]), h=0.0, T=driver.T)
    dt = float(grid[-1] - grid[-2]) if grid.size > 1 else 0.0
    njumps = np.zeros(Y.shape[:-2] + (grid.size - start,), dtype=int)
    return SolutionPair(X, eta, njumps, dt, "skorokhod", m0=start)


# ---------------------------------------------------------------------------
# successive approximation


def _frozen_start(spec, dt, noise):
    """``X^0``: the initial segment followed by ``phi(0)`` on ``[0, T]``."""
    t = time_grid(spec.T, dt)
    init = spec.initial_path(dt)
    m0 = init.grid.size - 1
    grid = np.concatenate([init.grid[:-1], t])
    P = noise.n_paths
    X = np.empty((P, grid.size, spec.dimension))
    X[:, : m0 + 1] = init.values
    X[:, m0 + 1 :] = init.values[-1]
    counts = sum(len(e) for e in noise.events)
    ev = np.broadcast_to(init.values[-1], (counts, spec.dimension)).copy()
    return CadlagPath(grid, X, h=spec.h, T=spec.T, interp=spec.interp), ev, m0


def picard_ensemble(spec, dt, noise, tol=1e-10, max_iter=30, scheme="prox", eps=None):
    """Successive approximation on every path of ``noise`` at once.

    Iterate ``n`` runs the scheme with ``A`` and the prox acting on itself and
    ``b``, ``sigma``, ``f`` read from the segments of iterate ``n - 1``.
    Returns ``(solution, history, converged)`` where ``history`` has shape
    ``(iterations, P)`` holding ``sup_nodes |X^n - X^{n-1}|`` per path.
    """
    prev, prev_ev, m0 = _frozen_start(spec, dt, noise)
    history = []
    sol = None
    for _ in range(max_iter):
        sol = _integrate(spec, dt, noise, scheme, eps, source=prev, source_events=prev_ev)
        diff = np.abs(sol.X.values[:, m0:] - prev.values[:, m0:])
        history.append(np.max(diff, axis=(1, 2)))
        prev = CadlagPath(sol.X.grid, sol.X.values.copy(), h=spec.h, T=spec.T, interp=spec.interp)
        prev_ev = sol.event_states.copy()
        if np.max(history[-1]) < tol:
            return sol, np.array(history), True
    return sol, np.array(history), False


def picard_solve(spec, dt, rng=None, tol=1e-10, max_iter=30, noise=None, scheme="prox", eps=None):
    """Single-path successive approximation.

    Returns ``(solution, residuals, converged)``; on hitting ``max_iter`` the
    last iterate comes back with ``converged = False``.
    """
    if noise is None:
        noise = generate_noise(spec, dt, streams=[RngStream(0, 0) if rng is None else rng])
    sol, hist, ok = picard_ensemble(spec, dt, noise, tol, max_iter, scheme, eps)
    return _squeeze(sol), hist[:, 0], ok


# ---------------------------------------------------------------------------
# diagnostics


def _window_steps(grid, window):
    if window is None:
        return 0, grid.size - 1
    s, t = window
    if not t > s:
        raise ValueError("empty window")
    i0 = int(np.searchsorted(grid, s - 1e-12))
    i1 = int(np.searchsorted(grid, t + 1e-12, side="right")) - 1
    if i1 <= i0:
        raise ValueError("window contains no grid step")
    return i0, i1


def total_variation(eta, window=None):
    """``sum |eta(t_{k+1}) - eta(t_k)|`` over grid steps inside ``window``."""
    i0, i1 = _window_steps(eta.grid, window)
    d = np.diff(eta.values[..., i0 : i1 + 1, :], axis=-2)
    return np.sum(np.linalg.norm(d, axis=-1), axis=-1)


def check_variational_inequality(sol, alpha, potential, window=None):
    """Slack ``sum <X - alpha, d eta> - sum (phi(X) - phi(alpha)) dt``.

    Both sides are paired at the right end of each step, where the prox
    places ``d eta`` in the subdifferential. ``alpha`` is a constant point,
    an array of node values on ``[0, T]`` or a path.
    """
    t = sol.times
    Xn = sol.nodes
    if isinstance(alpha, CadlagPath):
        a = np.stack([alpha.value_at(s) for s in t], axis=-2)
    else:
        a = np.asarray(alpha, dtype=float)
        if a.ndim == 1:
            a = np.broadcast_to(a, Xn.shape)
    a = np.broadcast_to(a, Xn.shape)
    phi_a = potential.value(a)
    if np.any(~np.isfinite(phi_a)):
        raise ValueError("comparison path leaves the effective domain")
    i0, i1 = _window_steps(t, window)
    d_eta = np.diff(sol.eta.values, axis=-2)[..., i0:i1, :]
    right = slice(i0 + 1, i1 + 1)
    dt = np.diff(t)[i0:i1]
    lhs = np.sum(np.sum((Xn[..., right, :] - a[..., right, :]) * d_eta, axis=-1), axis=-1)
    phi_x = potential.value(Xn[..., right, :])
    rhs = np.sum((phi_x - phi_a[..., right]) * dt, axis=-1)
    return lhs - rhs


def energy_residual(sol, spec, noise=None):
    """``max_k | |X_k|^2 - RHS_k |`` for the discrete energy identity.

    ``RHS_k`` assembles, with left-point sums and re-evaluated coefficients,
    ``|X_0|^2 + 2 sum <X, A X + b - comp> dt + 2 sum <X, sigma dW>
    - 2 sum <X, d eta> + sum |sigma|_Q^2 dt + sum_jumps (2 <X-, f> + |f|^2)``.
    """
    noise = sol.noise if noise is None else noise
    if noise is None:
        raise ValueError("energy residual needs the noise record of the run")
    batched = sol.batched
    Xv = sol.X.values if batched else sol.X.values[None]
    etav = sol.eta.values if batched else sol.eta.values[None]
    path = CadlagPath(sol.X.grid, Xv, h=sol.X.h, T=sol.X.T, interp=sol.X.interp)
    t = sol.times
    dt = sol.dt
    N = t.size - 1
    P = Xv.shape[0]
    m0 = sol.m0
    q = spec.wiener.q if spec.wiener is not None else np.zeros(0)
    table = _event_table(noise.events, dt, N)
    rhs = np.empty((P, N + 1))
    rhs[:, 0] = np.sum(Xv[:, m0] ** 2, axis=-1)
    for k in range(N):
        x = Xv[:, m0 + k]
        seg = Segment(path, t[k], spec.delay, last=m0 + k)
        mu, sig = _coefficients(spec, t[k], seg, P)
        inc = 2 * np.sum(x * (spec.apply_A(x) + mu), axis=-1) * dt
        inc -= 2 * np.sum(x * (etav[:, k + 1] - etav[:, k]), axis=-1)
        if sig is not None:
            inc += 2 * np.sum(x * np.einsum("bnk,bk->bn", sig, noise.dW[:, k]), axis=-1)
            inc += np.sum(sig**2 * q, axis=(1, 2)) * dt
        rhs[:, k + 1] = rhs[:, k] + inc
    if table is not None:
        for e in range(table["times"].size):
            p = table["paths"][e]
            tau = table["times"][e]
            k = min(int(tau // dt), N - 1)
            xm = sol.event_states[e][None]
            seg = Segment(path, tau, spec.delay, last=m0 + k, head=(tau, xm), rows=[p])
            f = _jump_size(spec, tau, seg, table["marks"][e], 1)[0]
            rhs[p, k + 1 :] += 2 * np.dot(xm[0], f) + np.dot(f, f)
    lhs = np.sum(Xv[:, m0:] ** 2, axis=-1)
    res = np.max(np.abs(lhs - rhs), axis=-1)
    return res if batched else float(res[0])
