"""Learning to stabilize an unknown linear system from a single trajectory.

The learner (:func:`run_lts0`) estimates the unstable subspace, the
dynamics restricted to it and the effective input gain, then builds a
tau-hop controller that cancels the unstable modes. Plants, spectral
tools, certification and a full-identification baseline live in their
own submodules.
"""

from . import errors
from .errors import Lts0Error, StageError
from .learner import (
    AdaptTargets,
    LearnedModel,
    Lts0Params,
    adapt_params,
    run_controlled,
    run_lts0,
    tau_hop_policy,
)
from .plant import (
    GenSpec,
    LinearSystem,
    Plant,
    Trajectory,
    generate_system,
    pack_system,
    rollout,
)
from .spectral import SpectralData, decompose

__version__ = "0.1.0"

__all__ = [
    "AdaptTargets",
    "LearnedModel",
    "Lts0Params",
    "adapt_params",
    "run_controlled",
    "run_lts0",
    "tau_hop_policy",
    "GenSpec",
    "LinearSystem",
    "Plant",
    "Trajectory",
    "generate_system",
    "pack_system",
    "rollout",
    "SpectralData",
    "decompose",
    "errors",
    "Lts0Error",
    "StageError",
]
