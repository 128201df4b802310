"""Shields for partially observable MDPs built on belief supports.

The pipeline: describe a :class:`Pomdp` (text format or a benchmark
generator), synthesize a :class:`Shield` for a reach-avoid or avoid
specification, then run agents whose actions are masked by it.
"""

from .estimator import (EmptySupport, Estimator, SupportTable, bayes_update, initial_support, initial_supports,
                        offered_actions, update_support)
from .model import (ModelError, ModelSyntaxError, ModelValidationError, Pomdp, Specification, build_pomdp,
                    is_graph_preserving, load_model, overapproximates, parse_model, perturb_probabilities,
                    random_pomdp, serialize_model)
from .runtime import (EmptyMask, ShieldSchedule, SupportNotWinning, ViolationLedger, mask_actions, rollout,
                      shield_probability)
from .synthesis import (InitialNotWinning, Shield, SizeLimitExceeded, build_support_mdp, compute_winning_avoid,
                        compute_winning_reach_avoid, extract_shield, synthesize, verify_winning_policy)

__version__ = "0.1.0"

__all__ = [
    "EmptyMask", "EmptySupport", "Estimator", "InitialNotWinning", "ModelError", "ModelSyntaxError",
    "ModelValidationError", "Pomdp", "Shield", "ShieldSchedule", "SizeLimitExceeded", "Specification",
    "SupportNotWinning", "SupportTable", "ViolationLedger", "bayes_update", "build_pomdp", "build_support_mdp",
    "compute_winning_avoid", "compute_winning_reach_avoid", "extract_shield", "initial_support",
    "initial_supports", "is_graph_preserving", "load_model", "mask_actions", "offered_actions",
    "overapproximates", "parse_model", "perturb_probabilities", "random_pomdp", "rollout", "serialize_model",
    "shield_probability", "synthesize", "update_support", "verify_winning_policy",
]
