"""Continuous domain generalization with a learned transport operator.

Importing this package applies the ``LIODG_*`` logging policy from the
environment and exposes the experiment helpers. Every failure travels
through :class:`LiodgError` or one of its subclasses; each carries a stable
``code`` string (``ERR_*``), a ``kind`` label, and a ``context`` dict.
"""

from . import api as _api
from .api import *  # re-export public API symbols
from .errors import (
    ArtifactError,
    ChartError,
    DimensionError,
    LiodgError,
    NumericError,
    StateError,
    ThresholdError,
    UsageError,
)
from .policy import configure_policy, configure_policy_from_env, policy_snapshot

configure_policy_from_env()

__all__ = (
    *_api.__all__,
    "ArtifactError",
    "ChartError",
    "DimensionError",
    "LiodgError",
    "NumericError",
    "StateError",
    "ThresholdError",
    "UsageError",
    "configure_policy",
    "configure_policy_from_env",
    "policy_snapshot",
)
