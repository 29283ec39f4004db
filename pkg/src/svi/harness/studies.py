"""One function per CLI command.

Each study writes its artifacts into ``out`` and returns a
:class:`StudyResult` whose verdicts decide the exit status.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .. import catalog
from ..averaging import AveragingRun, epsilon_sweep, sinusoidal_family
from ..convex import (
    Ball,
    Box,
    HalfLine,
    Indicator,
    OrderedCone,
    coulomb_log,
    indicator,
    inverse_power,
    quadratic,
    zero,
)
from ..drivers import LevyConfig, MarkSampler, RngStream, WienerSpec
from ..galerkin import SpdeConfig, eigenvalues, simulate_spde, snapshot_table
from ..integrator import (
    NoiseRecord,
    ProblemSpec,
    _integrate,
    euler_driver,
    generate_noise,
    picard_ensemble,
    simulate,
    simulate_ensemble,
    skorokhod_1d,
    total_variation,
)
from ..paths import DelayFunction
from ..properties import property_suite, catalog as potential_catalog, closed_form_agreement
from .config import ConfigError
from .report import ConvergenceReport, write_csv, write_report


@dataclass
class StudyResult:
    verdicts: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(self.verdicts.values())


# ---------------------------------------------------------------------------
# config -> problem


def _vector(value, n, path):
    v = np.atleast_1d(np.asarray(value, dtype=float))
    if v.ndim != 1 or v.size not in (1, n):
        raise ConfigError([f"{path}: expected a number or {n} entries"])
    return np.broadcast_to(v, (n,)).copy()


def _matrix(value, n, path):
    m = np.asarray(value, dtype=float)
    if m.ndim == 0:
        return float(m) * np.eye(n)
    if m.ndim == 1 and m.size == n:
        return np.diag(m)
    if m.ndim == 2 and m.shape[0] == n:
        return m
    raise ConfigError([f"{path}: expected a number, {n} diagonal entries or {n} rows"])


def build_potential(pcfg, n):
    kind = pcfg["kind"]
    where = "problem.potential"
    if kind == "zero":
        return zero(n)
    if kind == "quadratic":
        return quadratic(_vector(pcfg["weights"], n, f"{where}.weights"))
    if kind == "halfline":
        return indicator(HalfLine(_vector(pcfg["lower"], n, f"{where}.lower")))
    if kind == "box":
        lo = _vector(pcfg["lower"], n, f"{where}.lower")
        hi = _vector(pcfg["upper"], n, f"{where}.upper")
        if np.any(hi < lo):
            raise ConfigError([f"{where}.upper: must be >= lower"])
        return indicator(Box(lo, hi))
    if kind == "ball":
        return indicator(Ball(_vector(pcfg["center"], n, f"{where}.center"), pcfg["radius"]))
    if kind == "ordered_cone":
        return indicator(OrderedCone(n))
    if kind == "coulomb_log":
        return coulomb_log(pcfg["strength"], n)
    return inverse_power(pcfg["strength"], pcfg["power"], n)


def _marks(mcfg):
    kind = mcfg["kind"]
    if kind == "uniform":
        params = {"low": mcfg["low"], "high": mcfg["high"]}
    elif kind == "gaussian":
        params = {"mean": mcfg["mean"], "std": mcfg["std"]}
    else:
        params = {"atoms": mcfg["atoms"], "weights": mcfg["weights"]}
    try:
        return MarkSampler(kind, params)
    except ValueError as exc:
        raise ConfigError([f"problem.levy.marks: {exc}"]) from None


def build_problem(cfg):
    """:class:`ProblemSpec` described by the ``problem`` and ``numerics`` blocks."""
    p, num = cfg.problem, cfg.numerics
    n = p["dimension"]
    pot = build_potential(p["potential"], n)

    dr = p["drift"]
    L = _matrix(dr["linear"], n, "problem.drift.linear")
    c = _vector(dr["constant"], n, "problem.drift.constant")
    D = _matrix(dr["delayed"], n, "problem.drift.delayed")
    gain = dr["sup_feedback"]
    drift = None
    if np.any(L) or np.any(c) or np.any(D) or gain:
        def drift(t, seg):
            out = seg.current() @ L.T + c
            if np.any(D):
                out = out + seg.delayed() @ D.T
            if gain:
                out = out + gain * seg.sup_norm()[:, None]
            return out

    S = _matrix(p["diffusion"]["additive"], n, "problem.diffusion.additive")
    mult = p["diffusion"]["multiplicative"]
    K = S.shape[1]
    if mult and K != n:
        raise ConfigError(["problem.diffusion.multiplicative: needs a square additive part"])
    diffusion = wiener = None
    if np.any(S) or mult:
        eye = np.eye(n)

        def diffusion(t, seg):
            x = seg.current()
            out = np.broadcast_to(S, (x.shape[0], n, K))
            if mult:
                out = out + mult * x[:, :, None] * eye
            return out

        wiener = WienerSpec(tuple(_vector(p["noise"]["covariance"], K, "problem.noise.covariance")))

    jc = p["jump"]
    levy = jump = None
    if p["levy"]["intensity"] > 0 and (jc["additive"] or jc["multiplicative"]):
        sampler = _marks(p["levy"]["marks"])
        levy = LevyConfig(p["levy"]["intensity"], sampler)
        if sampler.dimension not in (1, n) and jc["additive"]:
            raise ConfigError([f"problem.levy.marks: additive jumps need marks of dimension 1 or {n}"])
        a, m = jc["additive"], jc["multiplicative"]

        def jump(t, seg, marks):
            x = seg.current()
            y = np.atleast_2d(marks)
            return a * y + m * y[:, :1] * x

    A = None if p["operator_A"] is None else _matrix(p["operator_A"], n, "problem.operator_A")
    delay = DelayFunction(p["delay"]["kind"], p["delay"]["value"])
    try:
        return ProblemSpec(
            n, pot, T=num["T"], initial=_vector(p["initial"], n, "problem.initial"), h=num["h"],
            drift=drift, diffusion=diffusion, jump=jump, operator_A=A, delay=delay,
            wiener=wiener, levy=levy, subdiff_scale=p["subdiff_scale"], name="config",
        )
    except ValueError as exc:
        raise ConfigError([f"problem: {exc}"]) from None


def _eps(cfg):
    return cfg.numerics["eps"] if cfg.numerics["scheme"] == "yosida" else None


def _emit(report, out, stem, formats, result):
    for fmt in formats:
        path = os.path.join(out, f"{stem}.{fmt}")
        write_report(report, path, fmt)
        result.artifacts.append(path)
    result.verdicts.update(report.verdicts)


def _slope(x, y):
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def _is_halfline_1d(spec):
    return spec.dimension == 1 and isinstance(spec.potential, Indicator) and isinstance(spec.potential.domain, HalfLine)


# ---------------------------------------------------------------------------
# studies


def study_simulate(cfg, out):
    """Trajectory of path 0; with more paths also the terminal mean."""
    spec = build_problem(cfg)
    seed, dt = cfg.mc["seed"], cfg.numerics["dt"]
    res = StudyResult()
    sol = simulate(spec, dt, cfg.numerics["scheme"], rng=RngStream(seed, 0), eps=_eps(cfg))
    n = spec.dimension
    cols = ["t"] + [f"x_{i + 1}" for i in range(n)] + [f"eta_{i + 1}" for i in range(n)] + ["njumps"]
    rows = [[t, *x, *e, int(j)] for t, x, e, j in zip(sol.times, sol.nodes, sol.eta.values, sol.njumps)]
    path = os.path.join(out, "trajectory.csv")
    write_csv(path, cols, rows)
    res.artifacts.append(path)

    if cfg.mc["paths"] > 1:
        ens = simulate_ensemble(spec, dt, cfg.mc["paths"], seed, cfg.numerics["scheme"], _eps(cfg),
                                statistic=lambda s: s.nodes[:, -1, :], chunk_size=cfg.mc["chunk_size"],
                                workers=cfg.mc["workers"])
        path = os.path.join(out, "terminal.csv")
        write_csv(path, ["coordinate", "mean", "stderr"],
                  [[i + 1, m, s] for i, (m, s) in enumerate(zip(ens.mean(), ens.stderr()))])
        res.artifacts.append(path)

    # the path must stay in the closed domain at every node
    proj = spec.potential.closure_projection(sol.nodes)
    inside = float(np.max(np.abs(proj - sol.nodes))) <= 1e-9 * max(1.0, float(np.max(np.abs(sol.nodes))))
    res.verdicts["vi_diagnostics.domain"] = bool(inside)
    return res


def _aggregate(noise, r, dt):
    P, N, K = noise.dW.shape
    return NoiseRecord(noise.dW.reshape(P, N // r, r, K).sum(axis=2), noise.events, dt)


def study_converge_dt(cfg, out):
    """Strong error against a fine-grid reference driven by the same Brownian path."""
    spec = build_problem(cfg)
    grid = sorted(float(v) for v in np.atleast_1d(cfg.numerics["dt_grid"]))[::-1]
    fine = grid[-1] / 8
    ratios = [dt / fine for dt in grid]
    if any(abs(r - round(r)) > 1e-9 for r in ratios):
        raise ConfigError(["numerics.dt_grid: every dt must be a multiple of min(dt_grid)/8"])
    P = cfg.mc["paths"]
    noise = generate_noise(spec, fine, cfg.mc["seed"], np.arange(P))
    oracle = _is_halfline_1d(spec) and spec.levy is None
    if oracle:
        ref = skorokhod_1d(euler_driver(spec, fine, noise).X)
    else:
        ref = _integrate(spec, fine, noise, "prox")
    ref_nodes = ref.X.values[:, ref.m0 :]

    rep = ConvergenceReport(
        "converge-dt", "dt", ["dt", "n_paths", "err_mean", "err_se", "oracle_gap", "tv_mean"],
        descending=True, fingerprint={"seed": cfg.mc["seed"], "reference_dt": fine},
    )
    for dt, r in zip(grid, ratios):
        r = int(round(r))
        nz = _aggregate(noise, r, dt)
        sol = _integrate(spec, dt, nz, "prox")
        err = np.max(np.abs(sol.nodes - ref_nodes[:, ::r]), axis=(1, 2))
        gap = None
        if oracle:
            sk = skorokhod_1d(euler_driver(spec, dt, nz).X)
            gap = float(np.max(np.abs(sk.X.values - sol.X.values)))
        tv = total_variation(sol.eta)
        rep.add(dt=dt, n_paths=P, err_mean=float(err.mean()),
                err_se=float(err.std(ddof=1) / np.sqrt(P)) if P > 1 else 0.0,
                oracle_gap=gap, tv_mean=float(tv.mean()))

    err = rep.column("err_mean")
    slope = _slope(rep.column("dt"), err) if len(grid) > 1 else float("nan")
    rep.fingerprint["slope"] = slope
    rep.verdict("scheme_oracle_refinement.decreasing", np.all(np.diff(err) < 0))
    rep.verdict("scheme_oracle_refinement.slope", 0.3 <= slope <= 0.7)
    if oracle:
        rep.verdict("scheme_oracle_refinement.coincide", np.nanmax(rep.column("oracle_gap")) <= 1e-12)
    tv = rep.column("tv_mean")
    if len(grid) > 1 and np.all(tv > 0):
        ratio = tv[1:] / tv[:-1]
        rep.verdict("vi_diagnostics.tv_refinement", np.all((ratio >= 0.8) & (ratio <= 1.2)))
    res = StudyResult(summary={"slope": slope})
    _emit(rep, out, "converge_dt", cfg.output["formats"], res)
    return res


def study_converge_yosida(cfg, out):
    """Penalized scheme against the prox scheme on shared noise over the eps grid."""
    spec = build_problem(cfg)
    dt, P = cfg.numerics["dt"], cfg.mc["paths"]
    eps_grid = sorted((float(e) for e in np.atleast_1d(cfg.numerics["eps_grid"])), reverse=True)
    if dt > eps_grid[-1]:
        raise ConfigError([f"numerics.dt: the penalized scheme needs dt <= min(eps_grid) = {eps_grid[-1]}"])
    noise = generate_noise(spec, dt, cfg.mc["seed"], np.arange(P))
    ref = _integrate(spec, dt, noise, "prox")
    rep = ConvergenceReport("converge-yosida", "epsilon", ["epsilon", "n_paths", "dt", "err_mean", "err_se"],
                            descending=True, fingerprint={"seed": cfg.mc["seed"], "dt": dt})
    for eps in eps_grid:
        sol = _integrate(spec, dt, noise, "yosida", eps)
        err = np.max(np.abs(sol.X.values - ref.X.values), axis=(1, 2))
        rep.add(epsilon=eps, n_paths=P, dt=dt, err_mean=float(err.mean()),
                err_se=float(err.std(ddof=1) / np.sqrt(P)) if P > 1 else 0.0)
    err = rep.column("err_mean")
    slope = _slope(rep.column("epsilon"), err) if err.size > 1 else float("nan")
    rep.fingerprint["slope"] = slope
    rep.verdict("scheme_oracle_refinement.yosida_monotone", np.all(np.diff(err) < 0))
    rep.verdict("scheme_oracle_refinement.yosida_slope", 0.3 <= slope <= 0.7)
    res = StudyResult(summary={"slope": slope})
    _emit(rep, out, "converge_yosida", cfg.output["formats"], res)
    return res


def study_picard(cfg, out):
    """Successive approximation on every path; one row per iteration."""
    spec = build_problem(cfg)
    dt, P = cfg.numerics["dt"], cfg.mc["paths"]
    noise = generate_noise(spec, dt, cfg.mc["seed"], np.arange(P))
    sol, hist, ok = picard_ensemble(spec, dt, noise, cfg.numerics["tol"], cfg.numerics["max_iter"],
                                    cfg.numerics["scheme"], _eps(cfg))
    rep = ConvergenceReport("picard", "iteration", ["iteration", "residual_max", "residual_mean", "converged_paths"],
                            fingerprint={"seed": cfg.mc["seed"], "dt": dt, "tol": cfg.numerics["tol"]})
    tol = cfg.numerics["tol"]
    for i, h in enumerate(hist, start=1):
        rep.add(iteration=i, residual_max=float(h.max()), residual_mean=float(h.mean()),
                converged_paths=int(np.sum(h < tol)))
    direct = _integrate(spec, dt, noise, cfg.numerics["scheme"], _eps(cfg))
    gap = float(np.max(np.abs(direct.X.values - sol.X.values)))
    rep.fingerprint["direct_gap"] = gap
    rep.verdict("picard_convergence.monotone", np.all(np.diff(hist[1:], axis=0) <= 0))
    rep.verdict("picard_convergence.converged", ok)
    res = StudyResult(summary={"iterations": int(len(hist)), "direct_gap": gap})
    _emit(rep, out, "picard", cfg.output["formats"], res)
    return res


def study_averaging(cfg, out):
    a = cfg.problem["averaging"]
    template = sinusoidal_family(jumps=a["jumps"], amplitude=a["amplitude"], sigma0=a["sigma0"], decay=a["decay"],
                                 jump_size=a["jump_size"], intensity=a["intensity"], reflect=a["reflect"],
                                 delay=a["delay"], x0=a["x0"], T=cfg.numerics["T"])
    eps = sorted((float(e) for e in np.atleast_1d(cfg.numerics["eps_grid"])), reverse=True)
    try:
        run = AveragingRun(template, tuple(eps), cfg.mc["paths"], cfg.mc["seed"], cfg.numerics["dt"],
                           cfg.mc["workers"], cfg.mc["chunk_size"], cfg.output["record_runtime"])
    except ValueError as exc:
        raise ConfigError([f"numerics: {exc}"]) from None
    rep = epsilon_sweep(run)
    res = StudyResult()
    _emit(rep, out, "sweep", cfg.output["formats"], res)
    return res


def study_spde(cfg, out):
    s = cfg.problem["spde"]
    N, dt, T = s["modes"], cfg.numerics["dt"], cfg.numerics["T"]
    k = s["initial_mode"]
    if k > N:
        raise ConfigError(["problem.spde.initial_mode: must not exceed modes"])
    init = np.zeros(N)
    init[k - 1] = s["initial_amplitude"]
    q = () if s["noise_q"] is None else tuple(_vector(s["noise_q"], N, "problem.spde.noise_q"))
    pot = None if s["obstacle"] is None else indicator(HalfLine(s["obstacle"]))
    try:
        sc = SpdeConfig(modes=N, m0=s["m0"], reaction=tuple(np.atleast_1d(s["reaction"])),
                        potential=pot, noise_q=q, initial=init, T=T)
    except ValueError as exc:
        raise ConfigError([f"problem.spde: {exc}"]) from None
    try:
        sol, snaps = simulate_spde(sc, dt, rng=RngStream(cfg.mc["seed"], 0),
                                   snapshot_every=cfg.output["snapshot_every"],
                                   x_grid=np.linspace(0.0, 1.0, s["points"]))
    except ValueError as exc:
        raise ConfigError([f"numerics.dt: {exc}"]) from None
    res = StudyResult()
    path = os.path.join(out, "field.csv")
    write_csv(path, ["t", "x", "u"], snapshot_table(snaps))
    res.artifacts.append(path)
    path = os.path.join(out, "modes.csv")
    write_csv(path, ["t"] + [f"c_{i + 1}" for i in range(N)], [[t, *c] for t, c in zip(sol.times, sol.nodes)])
    res.artifacts.append(path)

    res.verdicts["galerkin_spde.finite"] = bool(np.all(np.isfinite(sol.nodes)))
    linear = not np.any(np.atleast_1d(s["reaction"])) and not any(q) and pot is None
    if linear:
        lam = eigenvalues(N)[k - 1]
        exact = s["initial_amplitude"] * np.exp(-s["m0"] * lam * T)
        if exact != 0:
            rel = abs(sol.nodes[-1, k - 1] / exact - 1)
            res.summary["heat_decay_rel_error"] = float(rel)
            res.verdicts["galerkin_spde.heat_decay"] = bool(rel <= 2 * dt * s["m0"] * lam)
    return res


def study_particles(cfg, out):
    p = cfg.problem["particles"]
    spec = catalog.particle_system(p["count"], cfg.problem["potential"]["strength"], p["sigma"], p["spacing"],
                                   cfg.numerics["T"])

    def stat(sol):
        X = sol.nodes
        gaps = np.diff(X, axis=-1)
        return np.stack([np.sum(np.any(gaps <= 0, axis=-1), axis=-1), np.min(gaps, axis=(-2, -1))], axis=-1)

    ens = simulate_ensemble(spec, cfg.numerics["dt"], cfg.mc["paths"], cfg.mc["seed"], statistic=stat,
                            chunk_size=cfg.mc["chunk_size"], workers=cfg.mc["workers"])
    path = os.path.join(out, "particles.csv")
    write_csv(path, ["path", "violations", "min_gap"],
              [[i, int(v), g] for i, (v, g) in enumerate(ens.values)])
    res = StudyResult(artifacts=[path], summary={"violations": int(ens.values[:, 0].sum())})
    res.verdicts["particle_ordering"] = res.summary["violations"] == 0
    return res


def study_proptest(cfg, out):
    n = cfg.mc["paths"]
    rng = np.random.default_rng(cfg.mc["seed"])
    rep = ConvergenceReport("proptest", "potential", ["potential", "property", "worst_violation"],
                            fingerprint={"seed": cfg.mc["seed"], "samples": n})
    rows = []
    for name, pot in potential_catalog().items():
        for prop, v in property_suite(pot, n, rng).items():
            rows.append((name, prop, v))
    closed = closed_form_agreement(min(n, 1000), rng)
    rows.append(("coulomb_log_d2", "closed_form_gap", closed))
    for name, prop, v in sorted(rows):
        rep.add(potential=name, property=prop, worst_violation=v)
    suite = [v for name, prop, v in rows if prop not in ("closed_form_gap", "projection_exact")]
    rep.verdict("property_suite", max(suite) <= 1e-8)
    exact = [v for _, prop, v in rows if prop == "projection_exact"]
    rep.verdict("resolvent_oracle.closed_form", closed <= 1e-10)
    rep.verdict("resolvent_oracle.projection", max(exact) == 0.0)
    res = StudyResult()
    _emit(rep, out, "proptest", cfg.output["formats"], res)
    return res


STUDIES = {
    "simulate": study_simulate,
    "converge-dt": study_converge_dt,
    "converge-yosida": study_converge_yosida,
    "picard": study_picard,
    "averaging-sweep": study_averaging,
    "spde": study_spde,
    "particles": study_particles,
    "proptest": study_proptest,
}
