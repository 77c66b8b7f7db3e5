"""Recovery of a small target image from multi-target-detection measurements.

The measurement is one large noisy frame containing many randomly placed,
well-separated copies of an unknown target.  Recovery never locates the
copies: it matches the target's first three autocorrelations against the
frame's, by gradient descent on a least-squares moment loss, optionally
steered by a score-based prior.
"""

from .autocorr import AutocorrSet, autocorr_image, autocorr_measurement
from .forward import PlacementPlan, plan_placements, synthesize
from .moments import BiasTerms, MomentSystem, derive_bias
from .optim import RecoveryConfig, RecoveryResult, evaluate_error, recover

__all__ = [
    "AutocorrSet",
    "autocorr_image",
    "autocorr_measurement",
    "PlacementPlan",
    "plan_placements",
    "synthesize",
    "BiasTerms",
    "MomentSystem",
    "derive_bias",
    "RecoveryConfig",
    "RecoveryResult",
    "evaluate_error",
    "recover",
]

__version__ = "0.1.0"
