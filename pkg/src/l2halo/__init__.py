"""Station-keeping of a spacecraft on a quasi-Halo orbit about the Earth-Moon L2 point.

Layers, bottom up: :mod:`~l2halo.dynamics` (elliptic three-body field),
:mod:`~l2halo.exosystem` (reference and eccentricity generator),
:mod:`~l2halo.sampled` (zero-order-hold maps), :mod:`~l2halo.regulation`,
:mod:`~l2halo.planner`, :mod:`~l2halo.nmpc` and :mod:`~l2halo.scenarios`.
"""

from l2halo.dynamics import PhysicalConstants, SingularityError, libration_points, linearize_at_l2
from l2halo.exosystem import OrbitParams, build_matrices
from l2halo.scenarios import ScenarioConfig, compute_kpis, emit_csv, preset, run_scenario

__version__ = "0.1.0"

__all__ = [
    "OrbitParams",
    "PhysicalConstants",
    "ScenarioConfig",
    "SingularityError",
    "build_matrices",
    "compute_kpis",
    "emit_csv",
    "libration_points",
    "linearize_at_l2",
    "preset",
    "run_scenario",
]
