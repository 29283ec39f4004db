"""Simulation of stochastic variational inequalities with delays and jumps."""

__version__ = "0.1.0"

from .convex import (  # noqa: E402
    Ball,
    Box,
    HalfLine,
    OrderedCone,
    coulomb_log,
    evaluate,
    indicator,
    inverse_power,
    moreau_envelope,
    project,
    quadratic,
    resolvent,
    yosida_gradient,
    zero,
)
from .drivers import LevyConfig, MarkSampler, RngStream, WienerSpec  # noqa: E402
from .integrator import (  # noqa: E402
    ProblemSpec,
    SolutionPair,
    check_variational_inequality,
    picard_solve,
    simulate,
    simulate_ensemble,
    skorokhod_1d,
    total_variation,
)
from .paths import CadlagPath, DelayFunction, segment  # noqa: E402

__all__ = [
    "Ball", "Box", "HalfLine", "OrderedCone",
    "coulomb_log", "evaluate", "indicator", "inverse_power", "moreau_envelope", "project",
    "quadratic", "resolvent", "yosida_gradient", "zero",
    "LevyConfig", "MarkSampler", "RngStream", "WienerSpec",
    "ProblemSpec", "SolutionPair", "check_variational_inequality", "picard_solve", "simulate",
    "simulate_ensemble", "skorokhod_1d", "total_variation",
    "CadlagPath", "DelayFunction", "segment",
]
