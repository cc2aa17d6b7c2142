"""Kernel selection.

The compiled ``_core`` extension is used when importable; otherwise, or when
``SHORTFALL_PURE_PYTHON`` is set to a non-empty value, the pure-Python
``_pycore`` kernels are used.  ``BACKEND`` names the active choice.
"""
import os

import numpy as np

from . import _pycore
from .domain import (
    CostFunction,
    Linear,
    Log1p,
    PiecewiseConstantPrior,
    PiecewiseLinearConcave,
    Prior,
    Sqrt,
    TruncatedExponentialPrior,
    UniformPrior,
)

try:
    from . import _core as _compiled
except ImportError:  # extension not built
    _compiled = None

if _compiled is not None and not os.environ.get("SHORTFALL_PURE_PYTHON"):
    kernels = _compiled
    BACKEND = "compiled"
else:
    kernels = _pycore
    BACKEND = "python"

HAVE_COMPILED = _compiled is not None


def get_kernels(name: str | None = None):
    """Kernel module by name (``"compiled"`` or ``"python"``); default is active."""
    if name is None:
        return kernels
    if name == "python":
        return _pycore
    if name == "compiled":
        if _compiled is None:
            raise ImportError("compiled core is not built")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def encode_cost(cost: CostFunction) -> tuple[int, np.ndarray]:
    if isinstance(cost, Linear):
        return 0, np.array([cost.slope], dtype=float)
    if isinstance(cost, Sqrt):
        return 1, np.array([cost.scale], dtype=float)
    if isinstance(cost, Log1p):
        return 2, np.array([cost.scale], dtype=float)
    if isinstance(cost, PiecewiseLinearConcave):
        return 3, np.concatenate([[len(cost.breakpoints)], cost.xs, cost.ys]).astype(float)
    raise TypeError(f"cannot encode cost {cost!r}")


def encode_prior(prior: Prior) -> tuple[int, np.ndarray]:
    if isinstance(prior, UniformPrior):
        return 0, np.array([prior.lo, prior.hi], dtype=float)
    if isinstance(prior, TruncatedExponentialPrior):
        return 1, np.array([prior.lo, prior.hi, prior.rate, prior._mass], dtype=float)
    if isinstance(prior, PiecewiseConstantPrior):
        k = len(prior.heights)
        return 2, np.concatenate([[k], prior.edges, prior.heights]).astype(float)
    raise TypeError(f"cannot encode prior {prior!r}")
