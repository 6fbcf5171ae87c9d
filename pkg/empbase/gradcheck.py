# empbase/gradcheck.py
"""
This module implements a finite-difference check of analytic gradients.
"""
from dataclasses import dataclass, field
import logging

import numpy as np

from . import tensor as T
from .errors import ConfigError, NumericError

logger = logging.getLogger(__name__)


@dataclass
class GradCheckReport:
    """Outcome of `grad_check`."""

    max_rel_error: float
    tolerance: float
    checked: int
    worst: str = ""
    errors: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.max_rel_error <= self.tolerance


def _evaluate(f):
    with T.no_grad():
        value = f()
    value = float(np.asarray(T.as_tensor(value).data).reshape(-1)[0])
    if not np.isfinite(value):
        raise NumericError(f"grad_check: non-finite loss {value}")
    return value


def grad_check(
    f, params, eps=1e-5, tol=1e-4, max_coords=None, rng=None, floor=1e-5
):
    """grad_check

    Compare analytic gradients against central finite differences.

    The relative error of a coordinate is |a - n| / max(|a|, |n|, floor),
    so coordinates whose true gradient is below `floor` are held to an
    absolute bound instead.

    Default:
        grad_check(
            f, params, eps=1e-5, tol=1e-4, max_coords=None, rng=None,
            floor=1e-5
        )

    Args:
        f: (callable) : builds and returns a scalar TensorValue
        params: (dict : list) : the TensorValue leaves to check, by name
            or in a list
        eps: (float) : step in [1e-6, 1e-3]
        tol: (float) : pass threshold on the max relative error
        max_coords: (int : None) : sample at most this many coordinates
            per parameter
        rng: (numpy.random.Generator : None) : sampling generator
        floor: (float) : denominator floor of the relative error

    Returns:
        report (GradCheckReport)
    """
    if not 1e-6 <= eps <= 1e-3:
        raise ConfigError(f"grad_check eps {eps} outside [1e-6, 1e-3]")
    if isinstance(params, dict):
        named = list(params.items())
    else:
        named = [
            (param.name or f"param{index}", param)
            for index, param in enumerate(params)
        ]
    rng = rng if rng is not None else np.random.default_rng(0)

    for _, param in named:
        param.zero_grad()
    loss = f()
    if not np.all(np.isfinite(loss.data)):
        raise NumericError(f"grad_check: non-finite loss {loss.data}")
    loss.backward()
    analytic = {name: param.grad.copy() for name, param in named}

    worst_error = 0.0
    worst_name = ""
    errors = {}
    checked = 0
    for name, param in named:
        flat = param.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = rng.choice(flat.size, size=max_coords, replace=False)
        param_error = 0.0
        for coord in coords:
            original = flat[coord]
            flat[coord] = original + eps
            plus = _evaluate(f)
            flat[coord] = original - eps
            minus = _evaluate(f)
            flat[coord] = original
            numeric = (plus - minus) / (2.0 * eps)
            exact = analytic[name].reshape(-1)[coord]
            denom = max(abs(exact), abs(numeric), floor)
            param_error = max(param_error, abs(exact - numeric) / denom)
            checked += 1
        errors[name] = param_error
        if param_error > worst_error:
            worst_error = param_error
            worst_name = name

    logger.info(
        "grad_check: %d coordinates, max relative error %.2e (%s)",
        checked,
        worst_error,
        worst_name or "-",
    )
    return GradCheckReport(
        max_rel_error=worst_error,
        tolerance=tol,
        checked=checked,
        worst=worst_name,
        errors=errors,
    )
