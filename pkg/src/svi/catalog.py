"""Ready-made test problems."""

from __future__ import annotations

import numpy as np

from .convex import HalfLine, coulomb_log, indicator
from .drivers import WienerSpec
from .integrator import ProblemSpec
from .paths import DelayFunction


def reflected_bm(x0=0.0, sigma=1.0, T=1.0):
    """Brownian motion reflected at 0: ``dX = sigma dW - d eta``, ``X >= 0``."""
    s = np.array([[float(sigma)]])
    return ProblemSpec(
        1, indicator(HalfLine(0.0)), T=T, initial=float(x0),
        diffusion=lambda t, seg: s, wiener=WienerSpec((1.0,)), name="reflected_bm",
    )


def sup_feedback(gain=0.5, delay=0.5, sigma=0.3, x0=0.5, T=1.0, state_only=False):
    """Reflected problem with drift ``-x + gain * sup_r |X_t(r)|`` over a window of length ``delay``.

    With ``state_only`` the feedback is dropped and the drift is ``-x``.
    """
    s = np.array([[float(sigma)]])
    if state_only:
        def drift(t, seg):
            return -seg.current()
    else:
        def drift(t, seg):
            return -seg.current() + gain * seg.sup_norm()[:, None]
    return ProblemSpec(
        1, indicator(HalfLine(0.0)), T=T, initial=float(x0), h=float(delay),
        delay=DelayFunction.constant(delay), drift=drift,
        diffusion=lambda t, seg: s, wiener=WienerSpec((1.0,)), name="sup_feedback",
    )


def particle_system(count=5, lam=0.5, sigma=1.0, spacing=1.0, T=1.0):
    """Log-gas particles on the line with additive noise, started equally spaced."""
    x0 = spacing * (np.arange(count) - (count - 1) / 2)
    s = float(sigma) * np.eye(count)
    return ProblemSpec(
        count, coulomb_log(lam, count), T=T, initial=x0,
        diffusion=lambda t, seg: s, wiener=WienerSpec((1.0,) * count), name="particles",
    )


def ordering_violations(X):
    """Number of nodes (over all paths) where the coordinates fail to increase strictly."""
    v = np.asarray(X)
    return int(np.sum(np.any(np.diff(v, axis=-1) <= 0, axis=-1)))
