"""Averaging of SVIs with coefficients oscillating on the fast time ``t / eps``.

The fast system uses ``b(t / eps, X_t)``, ``sigma(t / eps, X_t)`` and
``f(t / eps, X_t, u)``; the averaged one replaces each by its long-run time
mean. ``sigma`` itself is averaged (not ``sigma sigma^T``), which is the
convention under which the deviation ``|sigma(s, .) - sigma_bar|`` must
vanish on average. Both systems are driven by the same noise.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .convex import ConvexPotential, HalfLine, indicator, zero
from .drivers import LevyConfig, MarkSampler, RngStream, WienerSpec
from .harness.report import ConvergenceReport
from .integrator import ProblemSpec, _integrate, generate_noise, time_grid
from .paths import CadlagPath, DelayFunction, Segment

__all__ = [
    "TimeProfile",
    "OscillatingCoefficient",
    "AveragingTemplate",
    "AveragingRun",
    "probe_segment",
    "time_average_coefficient",
    "fast_problem",
    "averaged_problem",
    "rescaled_problem",
    "simulate_fast",
    "coupled_error",
    "epsilon_sweep",
    "rescaling_identity_check",
    "sinusoidal_family",
    "SWEEP_COLUMNS",
]

SWEEP_COLUMNS = ["epsilon", "n_paths", "dt", "err_mean", "err_se", "sup4_moment", "runtime_s"]


@dataclass(frozen=True)
class TimeProfile:
    """Scalar modulation ``k(s)`` with a known long-run mean.

    ``sinusoid``  ``offset + amplitude sin(omega s + phase)``
    ``decaying``  ``offset + amplitude exp(-rate s)``
    ``table``     periodic piecewise-linear through ``values`` on ``[0, period]``
    ``constant``  ``offset``
    """

    kind: str
    amplitude: float = 1.0
    omega: float = 1.0
    phase: float = 0.0
    rate: float = 1.0
    offset: float = 0.0
    period: float = 1.0
    values: tuple = ()

    def __post_init__(self):
        if self.kind not in ("sinusoid", "decaying", "table", "constant"):
            raise ValueError(f"unknown time profile {self.kind!r}")
        if self.kind == "sinusoid" and not self.omega > 0:
            raise ValueError("sinusoid needs omega > 0")
        if self.kind == "decaying" and not self.rate > 0:
            raise ValueError("decaying profile needs rate > 0")
        if self.kind == "table" and (len(self.values) < 2 or not self.period > 0):
            raise ValueError("table profile needs >= 2 values and a positive period")

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "sinusoid":
            return self.offset + self.amplitude * np.sin(self.omega * s + self.phase)
        if self.kind == "decaying":
            return self.offset + self.amplitude * np.exp(-self.rate * s)
        if self.kind == "table":
            v = np.asarray(self.values, dtype=float)
            knots = np.linspace(0.0, self.period, v.size)
            return np.interp(np.mod(s, self.period), knots, v)
        return self.offset + 0.0 * s

    @property
    def mean(self):
        """Long-run average ``lim (1/T) int_0^T k``."""
        if self.kind == "table":
            v = np.asarray(self.values, dtype=float)
            return float(np.mean(0.5 * (v[1:] + v[:-1])))
        return float(self.offset)

    def integral(self, T1):
        """Closed form of ``int_0^T1 k(s) ds``."""
        if self.kind == "sinusoid":
            return self.offset * T1 + self.amplitude * (np.cos(self.phase) - np.cos(self.omega * T1 + self.phase)) / self.omega
        if self.kind == "decaying":
            return self.offset * T1 + self.amplitude * (1.0 - np.exp(-self.rate * T1)) / self.rate
        if self.kind == "table":
            # piecewise linear, so the trapezoid rule on the knots is exact
            cycles, rest = divmod(T1, self.period)
            knots = np.linspace(0.0, self.period, len(self.values))
            s = np.append(knots[knots < rest], rest)
            return cycles * self.period * self.mean + np.trapezoid(self(s), s)
        return self.offset * T1

    @property
    def frequency(self):
        """Fastest time scale, used to check that ``dt`` resolves the oscillation."""
        if self.kind == "sinusoid":
            return self.omega
        if self.kind == "decaying":
            return self.rate
        if self.kind == "table":
            return 2 * np.pi * (len(self.values) - 1) / self.period
        return 0.0


@dataclass(frozen=True)
class OscillatingCoefficient:
    """``base + k(s) perturb`` (additive) or ``k(s) base`` (multiplicative).

    ``base`` and ``perturb`` take ``(seg, *extra)`` (``extra`` is the mark
    for jump coefficients). ``profile=None`` gives a time-independent
    coefficient.
    """

    base: Callable
    profile: TimeProfile | None = None
    perturb: Callable | None = None
    mode: str = "additive"

    def __post_init__(self):
        if self.mode not in ("additive", "multiplicative"):
            raise ValueError("mode must be 'additive' or 'multiplicative'")
        if self.mode == "additive" and self.profile is not None and self.perturb is None:
            raise ValueError("an additive modulation needs a perturbation")

    def __call__(self, s, seg, *extra):
        b = np.asarray(self.base(seg, *extra), dtype=float)
        if self.profile is None:
            return b
        k = self.profile(s)
        if self.mode == "multiplicative":
            return k * b
        return b + k * np.asarray(self.perturb(seg, *extra), dtype=float)

    def average(self, seg, *extra):
        """Closed-form time average at a fixed segment."""
        b = np.asarray(self.base(seg, *extra), dtype=float)
        if self.profile is None:
            return b
        m = self.profile.mean
        if self.mode == "multiplicative":
            return m * b
        return b + m * np.asarray(self.perturb(seg, *extra), dtype=float)

    @property
    def frequency(self):
        return 0.0 if self.profile is None else self.profile.frequency


def probe_segment(x, t=0.0):
    """Segment of a constant path at ``x`` (batched if ``x`` is 2-D)."""
    x = np.asarray(x, dtype=float)
    vals = x[None] if x.ndim == 1 else x[:, None]
    return Segment(CadlagPath([0.0], vals, h=0.0, T=max(t, 0.0)), t, 0.0, last=0)


def time_average_coefficient(coeff, T1, probe, *extra, panels=None, order=8):
    """Numerical ``(1/T1) int_0^T1 coeff(s, probe) ds`` and the deviation
    ``(1/T1) int_0^T1 |coeff(s, probe) - closed_form|^2 ds``.

    Composite Gauss-Legendre with panels short enough to resolve the profile.
    Returns a dict with ``average``, ``deviation`` and ``closed_form``.
    """
    if not T1 > 0:
        raise ValueError("T1 must be positive")
    seg = probe if isinstance(probe, Segment) else probe_segment(probe)
    freq = coeff.frequency
    if panels is None:
        panels = int(min(2_000_000, max(16, np.ceil(T1 * max(freq, 1.0) * 2))))
    z, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, T1, panels + 1)
    half = 0.5 * np.diff(edges)
    s = (0.5 * (edges[1:] + edges[:-1]))[:, None] + half[:, None] * z
    weights = (half[:, None] * w).reshape(-1)
    closed = coeff.average(seg, *extra)
    if coeff.profile is None:
        return {"average": closed, "deviation": 0.0 * np.sum(closed**2), "closed_form": closed}
    base = np.asarray(coeff.base(seg, *extra), dtype=float)
    k = coeff.profile(s.reshape(-1))
    if coeff.mode == "multiplicative":
        pert, anchor = base, 0.0 * base
    else:
        pert, anchor = np.asarray(coeff.perturb(seg, *extra), dtype=float), base
    # coeff(s) = anchor + k(s) pert, so both integrals reduce to moments of k
    k1 = np.dot(weights, k) / T1
    k2 = np.dot(weights, (k - coeff.profile.mean) ** 2) / T1
    avg = anchor + k1 * pert
    dev = k2 * np.sum(pert**2)
    return {"average": avg, "deviation": float(dev), "closed_form": closed}


@dataclass
class AveragingTemplate:
    """Problem with fast-time coefficients ``drift(s, seg)``, ``diffusion(s, seg)``
    and ``jump(s, seg, mark)`` given as :class:`OscillatingCoefficient`."""

    dimension: int
    potential: ConvexPotential
    T: float = 1.0
    initial: object = 0.0
    h: float = 0.0
    delay: DelayFunction = field(default_factory=DelayFunction)
    drift: OscillatingCoefficient | None = None
    diffusion: OscillatingCoefficient | None = None
    jump: OscillatingCoefficient | None = None
    operator_A: object = None
    wiener: WienerSpec | None = None
    levy: LevyConfig | None = None
    name: str = "averaging"

    @property
    def frequency(self):
        return max([c.frequency for c in (self.drift, self.diffusion, self.jump) if c is not None] or [0.0])

    def _spec(self, drift, diffusion, jump, **kw):
        args = dict(
            dimension=self.dimension, potential=self.potential, T=self.T, initial=self.initial, h=self.h,
            delay=self.delay, drift=drift, diffusion=diffusion, jump=jump, operator_A=self.operator_A,
            wiener=self.wiener, levy=self.levy if self.jump is not None else None, name=self.name,
        )
        args.update(kw)
        return ProblemSpec(**args)


def fast_problem(template, eps):
    """Coefficients evaluated at ``t / eps``."""
    d, s, j = template.drift, template.diffusion, template.jump
    return template._spec(
        None if d is None else (lambda t, seg: d(t / eps, seg)),
        None if s is None else (lambda t, seg: s(t / eps, seg)),
        None if j is None else (lambda t, seg, m: j(t / eps, seg, m)),
    )


def averaged_problem(template):
    """Closed-form averaged coefficients."""
    d, s, j = template.drift, template.diffusion, template.jump
    return template._spec(
        None if d is None else (lambda t, seg: d.average(seg)),
        None if s is None else (lambda t, seg: s.average(seg)),
        None if j is None else (lambda t, seg, m: j.average(seg, m)),
    )


def rescaled_problem(template, eps):
    """Equation of ``Y(t) = X^eps(eps t)`` on ``[0, T / eps]``.

    Drift ``eps b(t, .)``, diffusion ``sqrt(eps) sigma(t, .)`` against the
    rescaled Wiener process, jump intensity ``eps nu``, operator ``eps A`` and
    subdifferential ``eps dphi``. Delays and the initial segment are
    stretched by ``1 / eps``. Distributed-delay integrals are not rescaled,
    so coefficients should read only ``current`` and ``delayed`` values.
    """
    d, s, j = template.drift, template.diffusion, template.jump
    A = template.operator_A
    if A is not None:
        A = (lambda x, A=A: eps * A(x)) if callable(A) else eps * np.asarray(A, dtype=float)
    levy = None
    if template.levy is not None and j is not None:
        levy = LevyConfig(eps * template.levy.total_intensity, template.levy.sampler)
    init = template.initial
    if isinstance(init, CadlagPath):
        init = CadlagPath(init.grid / eps, init.values, h=init.h / eps, T=0.0, interp=init.interp)
    root = np.sqrt(eps)
    return template._spec(
        None if d is None else (lambda t, seg: eps * d(t, seg)),
        None if s is None else (lambda t, seg: root * s(t, seg)),
        None if j is None else (lambda t, seg, m: j(t, seg, m)),
        T=template.T / eps,
        h=template.h / eps,
        initial=init,
        delay=template.delay.scaled(eps),
        operator_A=A,
        levy=levy,
        subdiff_scale=eps,
        name=template.name + "-rescaled",
    )


def _resolution_check(template, eps, dt):
    ratio = dt * template.frequency / eps
    if ratio > 0.5:
        raise ValueError(f"dt={dt} does not resolve the fast time scale at eps={eps} (dt*omega/eps={ratio:.3g} > 0.5)")


def simulate_fast(template, eps, dt, rng=None, noise=None, scheme="prox"):
    """Single path of the fast system."""
    _resolution_check(template, eps, dt)
    spec = fast_problem(template, eps)
    if noise is None:
        noise = generate_noise(spec, dt, streams=[RngStream(0, 0) if rng is None else rng])
    return _integrate(spec, dt, noise, scheme).path(0)


def _coupled_chunk(template, eps, dt, seed, ids):
    fast = fast_problem(template, eps)
    avg = averaged_problem(template)
    noise = generate_noise(fast, dt, seed, ids)
    xe = _integrate(fast, dt, noise).nodes
    xb = _integrate(avg, dt, noise).nodes
    err = np.max(np.sum((xe - xb) ** 2, axis=-1), axis=-1)
    sup4 = np.max(np.sum(xe**2, axis=-1), axis=-1) ** 2
    return err, sup4


def coupled_error(template, eps, n_paths, dt, seed, chunk_size=1000, workers=1, details=False):
    """Monte Carlo estimate of ``E sup_t |X^eps - X_bar|^2`` and its standard error.

    Path ``p`` of both systems uses ``RngStream(seed, p)``. With
    ``details=True`` also returns the per-path errors and ``sup |X^eps|^4``.
    """
    _resolution_check(template, eps, dt)
    chunks = [np.arange(a, min(a + chunk_size, n_paths)) for a in range(0, n_paths, chunk_size)]
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda ids: _coupled_chunk(template, eps, dt, seed, ids), chunks))
    else:
        parts = [_coupled_chunk(template, eps, dt, seed, ids) for ids in chunks]
    err = np.concatenate([p[0] for p in parts])
    sup4 = np.concatenate([p[1] for p in parts])
    mean = float(np.mean(err))
    se = float(np.std(err, ddof=1) / np.sqrt(n_paths)) if n_paths > 1 else 0.0
    if details:
        return mean, se, {"errors": err, "sup4": sup4}
    return mean, se


@dataclass
class AveragingRun:
    template: AveragingTemplate
    eps_grid: tuple
    n_paths: int
    seed: int
    dt: float
    workers: int = 1
    chunk_size: int = 1000
    record_runtime: bool = False

    def __post_init__(self):
        eps = np.asarray(self.eps_grid, dtype=float)
        if eps.size == 0 or np.any(eps <= 0) or np.any(eps >= 1):
            raise ValueError("eps values must lie in (0, 1)")
        if np.any(np.diff(eps) >= 0):
            raise ValueError("eps grid must be strictly descending")
        if self.dt > eps.min() / 10 * (1 + 1e-12):
            raise ValueError(f"dt={self.dt} must be at most min(eps)/10={eps.min() / 10}")
        time_grid(self.template.T, self.dt)


def epsilon_sweep(run):
    """Error table over the eps grid with a monotone-decay verdict.

    Decay is judged with the combined standard error of neighbouring cells:
    ``err_{i+1} <= err_i + 2 sqrt(se_i^2 + se_{i+1}^2)``. Failed cells are
    recorded with blank statistics and fail the verdict. ``runtime_s`` is
    blank unless ``record_runtime`` is set, keeping the table reproducible.
    """
    rep = ConvergenceReport(
        name="averaging-sweep",
        control="epsilon",
        columns=list(SWEEP_COLUMNS),
        descending=True,
        fingerprint={"seed": run.seed, "dt": run.dt, "n_paths": run.n_paths},
    )
    ok_cells = True
    runtimes = []
    for eps in run.eps_grid:
        t0 = time.perf_counter()
        try:
            mean, se, det = coupled_error(run.template, eps, run.n_paths, run.dt, run.seed,
                                          run.chunk_size, run.workers, details=True)
            sup4 = float(np.mean(det["sup4"]))
        except Exception:  # noqa: BLE001 - a failed cell is reported, the sweep goes on
            mean = se = sup4 = None
            ok_cells = False
        elapsed = time.perf_counter() - t0
        runtimes.append(elapsed)
        rep.add(epsilon=float(eps), n_paths=run.n_paths, dt=run.dt, err_mean=mean, err_se=se,
                sup4_moment=sup4, runtime_s=elapsed if run.record_runtime else None)
    err = rep.column("err_mean")
    se = rep.column("err_se")
    monotone = ok_cells and bool(np.all(err[1:] <= err[:-1] + 2 * np.sqrt(se[1:] ** 2 + se[:-1] ** 2)))
    rep.verdict("averaging_decay.monotone", monotone)
    # a zero final error meets the decay requirement trivially
    decayed = err.size < 2 or bool(err[-1] < 0.2 * err[0] or err[-1] == 0.0) if ok_cells else False
    rep.verdict("averaging_decay.ratio", ok_cells and decayed)
    sup4 = rep.column("sup4_moment")
    rep.verdict("averaging_decay.moment_bound", ok_cells and bool(np.all(sup4 <= 2 * sup4[0])))
    if run.record_runtime:
        rep.fingerprint["runtimes"] = runtimes
    return rep


def rescaling_identity_check(template, eps, dt, rng=None, seed=0, n_paths=1):
    """``max |X^eps(eps t_k) - Y(t_k)|`` with ``Y`` integrated on its own clock.

    ``X^eps`` runs with step ``dt`` on ``[0, T]``; ``Y`` runs with step
    ``dt / eps`` on ``[0, T / eps]`` driven by the same samples, rescaled.
    """
    fast = fast_problem(template, eps)
    if rng is not None:
        noise = generate_noise(fast, dt, streams=[rng])
    else:
        noise = generate_noise(fast, dt, seed, np.arange(n_paths))
    x = _integrate(fast, dt, noise)
    y = _integrate(rescaled_problem(template, eps), dt / eps, noise.rescaled(eps))
    if x.X.values.shape != y.X.values.shape:
        raise ValueError("rescaled grid does not match the original one")
    return float(np.max(np.abs(x.X.values - y.X.values)))


def sinusoidal_family(jumps=False, amplitude=1.0, sigma0=0.5, decay=1.0, jump_size=0.3, intensity=2.0,
                      reflect=True, delay=0.1, x0=1.0, T=1.0):
    """Catalog family with a known average.

    drift      ``-x + amplitude sin(s) (1 + 0.5 x(t - delay))`` , average ``-x``
    diffusion  ``sigma0 (1 + exp(-decay s))``, average ``sigma0``
    jump       ``jump_size u x (1 + exp(-decay s))`` with marks ``u = +-1``, average ``jump_size u x``

    The diffusion and jump deviations decay in ``s``, so their time-averaged
    squared deviations vanish; the drift oscillates forever with mean 0.
    The state is reflected at 0 when ``reflect`` is set.
    """
    def cur(seg, *m):
        return -seg.current()

    def pert(seg, *m):
        return 1.0 + 0.5 * seg.delayed()

    drift = OscillatingCoefficient(cur, TimeProfile("sinusoid", amplitude=amplitude), pert)
    diffusion = OscillatingCoefficient(
        lambda seg: sigma0 * np.ones(np.shape(seg.current()) + (1,)),
        TimeProfile("decaying", amplitude=1.0, rate=decay, offset=1.0),
        mode="multiplicative",
    )
    jump = None
    levy = None
    if jumps:
        jump = OscillatingCoefficient(
            lambda seg, m: jump_size * np.asarray(m)[..., :1] * seg.current(),
            TimeProfile("decaying", amplitude=1.0, rate=decay, offset=1.0),
            mode="multiplicative",
        )
        levy = LevyConfig(intensity, MarkSampler("atoms", {"atoms": [[1.0], [-1.0]], "weights": [0.5, 0.5]}))
    potential = indicator(HalfLine(0.0)) if reflect else zero(1)
    return AveragingTemplate(
        dimension=1, potential=potential, T=T, initial=x0, h=delay, delay=DelayFunction.constant(delay),
        drift=drift, diffusion=diffusion, jump=jump, wiener=WienerSpec((1.0,)), levy=levy,
        name="sinusoidal" + ("-jumps" if jumps else ""),
    )
