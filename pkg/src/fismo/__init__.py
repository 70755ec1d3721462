"""FISMO: Fisher-structured momentum-orthogonalized optimization toolkit.

A desk-scale numerical-optimization library: the FISMO step rule with its
Kronecker-factored Fisher preconditioners, Muon/AdamW/SGD baselines,
closed-form preconditioned trust-region steps with Monte-Carlo optimality
certificates, synthetic training problems with exact gradient oracles, and
a deterministic experiment harness whose diagnostics numerically audit the
method's descent/tracking/boundedness lemmas.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DegenerateInput,
    FismoError,
    InsufficientData,
    InvalidInput,
    IterationDiverged,
    NearSingular,
    ShapeError,
)

__all__ = [
    "__version__",
    "ConfigError",
    "DegenerateInput",
    "FismoError",
    "InsufficientData",
    "InvalidInput",
    "IterationDiverged",
    "NearSingular",
    "ShapeError",
]
