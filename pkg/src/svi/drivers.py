"""Reproducible Wiener increments and finite-activity Poisson random measures.

Every random draw in the package comes from an :class:`RngStream`, a
``(master_seed, stream_id)`` pair mapped onto a counter-based Philox
generator. The key is the pair itself, so streams are independent and any
path can be regenerated in isolation, which is what makes Monte Carlo
estimates independent of how paths are split across workers.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from itertools import product

import numpy as np

__all__ = [
    "RngStream",
    "WienerSpec",
    "MarkSampler",
    "LevyConfig",
    "JumpEvents",
    "seed_from_env",
    "sample_wiener_increments",
    "sample_jump_events",
    "compensator_integral",
]

SEED_ENV = "SVI_SEED"
_MASK64 = (1 << 64) - 1

# counter word reserved per purpose so different draws never overlap
WIENER, JUMPS, BRIDGE = 0, 1, 2


def seed_from_env(default):
    """Master seed from ``SVI_SEED`` (decimal) if set, else ``default``."""
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw.strip() == "":
        return int(default)
    seed = int(raw.strip(), 10)
    if not 0 <= seed <= _MASK64:
        raise ValueError(f"{SEED_ENV} must be a 64-bit unsigned integer")
    return seed


@dataclass(frozen=True)
class RngStream:
    master_seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not 0 <= self.master_seed <= _MASK64:
            raise ValueError("master_seed must fit in 64 bits")
        if self.stream_id < 0:
            raise ValueError("stream_id must be nonnegative")

    def generator(self, purpose=WIENER):
        bitgen = np.random.Philox(
            key=[self.master_seed & _MASK64, self.stream_id & _MASK64],
            counter=[0, 0, 0, purpose],
        )
        return np.random.Generator(bitgen)

    def child(self, offset):
        return RngStream(self.master_seed, self.stream_id + offset)


@dataclass(frozen=True)
class WienerSpec:
    """Finite-mode Wiener driver with diagonal covariance ``Q``."""

    covariance_diag: tuple = (1.0,)

    def __post_init__(self):
        q = tuple(float(v) for v in np.atleast_1d(self.covariance_diag))
        if not q or any(v < 0 for v in q):
            raise ValueError("covariance entries must be nonnegative")
        object.__setattr__(self, "covariance_diag", q)

    @property
    def modes(self):
        return len(self.covariance_diag)

    @property
    def q(self):
        return np.asarray(self.covariance_diag)


@dataclass(frozen=True)
class MarkSampler:
    """Distribution of jump marks.

    kinds
        ``uniform``  params ``low``, ``high`` (box)
        ``gaussian`` params ``mean``, ``std`` (independent coordinates)
        ``atoms``    params ``atoms`` (k x m), ``weights`` (k)
    """

    kind: str
    params: dict = field(default_factory=dict)
    quadrature_order: int = 16

    def __post_init__(self):
        p = {k: np.atleast_1d(np.asarray(v, dtype=float)) for k, v in self.params.items()}
        if self.kind == "uniform":
            if np.any(p["high"] <= p["low"]):
                raise ValueError("uniform marks need low < high")
        elif self.kind == "gaussian":
            p.setdefault("std", np.ones_like(p["mean"]))
            if np.any(p["std"] < 0):
                raise ValueError("gaussian mark std must be nonnegative")
        elif self.kind == "atoms":
            atoms = p["atoms"]
            p["atoms"] = atoms.reshape(len(atoms), -1) if atoms.ndim < 2 else atoms
            w = p.get("weights", np.ones(len(p["atoms"])))
            if np.any(w < 0) or w.sum() <= 0 or len(w) != len(p["atoms"]):
                raise ValueError("atom weights must be nonnegative and match the atoms")
            p["weights"] = w / w.sum()
        else:
            raise ValueError(f"unknown mark sampler {self.kind!r}")
        object.__setattr__(self, "params", p)

    @property
    def dimension(self):
        p = self.params
        if self.kind == "uniform":
            return len(p["low"])
        if self.kind == "gaussian":
            return len(p["mean"])
        return p["atoms"].shape[1]

    def sample(self, gen, n):
        p = self.params
        m = self.dimension
        if self.kind == "uniform":
            return p["low"] + (p["high"] - p["low"]) * gen.random((n, m))
        if self.kind == "gaussian":
            return p["mean"] + p["std"] * gen.standard_normal((n, m))
        idx = gen.choice(len(p["weights"]), size=n, p=p["weights"])
        return p["atoms"][idx]

    def quadrature(self):
        """Nodes ``(k, m)`` and weights ``(k,)`` integrating against the law."""
        p = self.params
        if self.kind == "atoms":
            return p["atoms"], p["weights"]
        order = self.quadrature_order
        if self.kind == "uniform":
            x, w = np.polynomial.legendre.leggauss(order)
            x1 = [lo + (hi - lo) * (x + 1) / 2 for lo, hi in zip(p["low"], p["high"])]
            w1 = w / 2
        else:
            x, w = np.polynomial.hermite_e.hermegauss(order)
            x1 = [mu + sd * x for mu, sd in zip(p["mean"], p["std"])]
            w1 = w / np.sqrt(2 * np.pi)
        nodes = np.array(list(product(*x1)))
        weights = np.prod(np.array(list(product(*([w1] * len(x1))))), axis=1)
        return nodes, weights


@dataclass(frozen=True)
class LevyConfig:
    """Finite-activity Poisson point process: ``nu = total_intensity * law``."""

    total_intensity: float
    sampler: MarkSampler

    def __post_init__(self):
        if not (np.isfinite(self.total_intensity) and self.total_intensity > 0):
            raise ValueError("total intensity must be positive and finite")

    @property
    def mark_dimension(self):
        return self.sampler.dimension


@dataclass(frozen=True)
class JumpEvents:
    """Sorted jump times with marks; ``bridge`` holds the standard normals
    used to split a Wiener increment at each jump time."""

    times: np.ndarray
    marks: np.ndarray
    bridge: np.ndarray | None = None

    def __len__(self):
        return len(self.times)

    def __eq__(self, other):
        if not isinstance(other, JumpEvents):
            return NotImplemented
        same_bridge = (self.bridge is None and other.bridge is None) or (
            self.bridge is not None and other.bridge is not None and np.array_equal(self.bridge, other.bridge)
        )
        return np.array_equal(self.times, other.times) and np.array_equal(self.marks, other.marks) and same_bridge

    def scaled(self, factor):
        """Same events with times multiplied by ``factor``."""
        return JumpEvents(self.times * factor, self.marks, self.bridge)

    @classmethod
    def empty(cls, mark_dim=1, modes=1):
        return cls(np.zeros(0), np.zeros((0, mark_dim)), np.zeros((0, modes)))


def sample_wiener_increments(spec, grid, rng):
    """Increments ``(steps, modes)`` with entry ``(k, j) ~ N(0, q_j dt_k)``.

    Draws are laid out mode-major so a mode's path does not depend on how
    many other modes are simulated.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise ValueError("time grid needs at least two nodes")
    dt = np.diff(grid)
    if np.any(dt <= 0):
        raise ValueError("time grid must be strictly increasing")
    z = rng.generator(WIENER).standard_normal((spec.modes, dt.size)).T
    return z * np.sqrt(dt[:, None] * spec.q[None, :])


def sample_jump_events(cfg, horizon, rng, modes=0):
    """Poisson events on ``[t0, t1)``; ``horizon`` is ``T`` or ``(t0, t1)``.

    With ``modes > 0`` each event also carries ``modes`` standard normals for
    Brownian-bridge splitting of the step that contains it.
    """
    t0, t1 = (0.0, float(horizon)) if np.isscalar(horizon) else map(float, horizon)
    if not t1 > t0:
        raise ValueError("jump horizon must have positive length")
    gen = rng.generator(JUMPS)
    count = gen.poisson(cfg.total_intensity * (t1 - t0))
    times = np.sort(t0 + (t1 - t0) * gen.random(count))
    marks = cfg.sampler.sample(gen, count)
    bridge = rng.generator(BRIDGE).standard_normal((count, modes)) if modes else None
    return JumpEvents(times, marks, bridge)


def compensator_integral(cfg, integrand, window):
    """``(t - s) * nu(U) * E[integrand(mark)]`` by quadrature over the mark law.

    ``integrand`` maps an array of marks ``(k, m)`` to ``(k, ...)``.
    """
    s, t = window
    nodes, weights = cfg.sampler.quadrature()
    vals = np.asarray(integrand(nodes), dtype=float)
    mean = np.tensordot(weights, vals, axes=(0, 0))
    return (t - s) * cfg.total_intensity * mean
