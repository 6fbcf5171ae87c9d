# empbase/optim.py
"""
This module implements Adam with the noam learning rate schedule.
"""
import logging
import math

import numpy as np

from .errors import NumericError

logger = logging.getLogger(__name__)


def noam_rate(step, model_dim, warmup, factor=1.0):
    """
    Learning rate of the noam schedule.

    lr = factor * d^-0.5 * min(step^-0.5, step * warmup^-1.5)

    Args:
        step: (int) : optimizer step, counted from 1
        model_dim: (int) : model dimension d
        warmup: (int) : warmup steps
        factor: (float) : multiplier

    Returns:
        rate (float)
    """
    step = max(int(step), 1)
    return (
        factor
        * model_dim ** -0.5
        * min(step ** -0.5, step * warmup ** -1.5)
    )


class OptimizerState(object):
    """
    This class holds the Adam moments and the schedule position.

    Default:
        OptimizerState(
            model_dim, warmup, factor=1.0, betas=(0.9, 0.98), eps=1e-9
        )
    """

    def __init__(
        self, model_dim, warmup, factor=1.0, betas=(0.9, 0.98), eps=1e-9
    ):
        self.model_dim = model_dim
        self.warmup = warmup
        self.factor = factor
        self.betas = tuple(betas)
        self.eps = eps
        self.step = 0
        self.first = {}
        self.second = {}

    def rate(self, step=None):
        return noam_rate(
            self.step if step is None else step,
            self.model_dim,
            self.warmup,
            self.factor,
        )

    def state_dict(self):
        return {
            "step": self.step,
            "first": {
                name: value.copy() for name, value in self.first.items()
            },
            "second": {
                name: value.copy() for name, value in self.second.items()
            },
        }

    def load_state_dict(self, state):
        self.step = int(state["step"])
        self.first = {name: np.array(v) for name, v in state["first"].items()}
        self.second = {
            name: np.array(v) for name, v in state["second"].items()
        }


def adam_noam_step(store, opt):
    """adam_noam_step

    Apply one Adam update to every parameter at the current noam rate,
    then clear the gradients.

    The step is aborted before any parameter changes when a gradient is
    not finite.

    Default:
        adam_noam_step(store, opt)

    Args:
        store: (ParameterStore) : parameters with populated gradients
        opt: (OptimizerState) : moments and schedule, updated in place

    Returns:
        rate (float) : the learning rate used
    """
    for name, param in store.items():
        if param.grad is not None and not np.all(np.isfinite(param.grad)):
            raise NumericError(
                f"non-finite gradient in parameter {name} at step "
                f"{opt.step + 1}"
            )

    opt.step += 1
    rate = opt.rate()
    beta1, beta2 = opt.betas
    correction1 = 1.0 - beta1 ** opt.step
    correction2 = 1.0 - beta2 ** opt.step

    for name, param in store.items():
        grad = param.grad
        if grad is None:
            continue
        first = opt.first.get(name)
        if first is None:
            first = np.zeros_like(param.data)
            opt.first[name] = first
        second = opt.second.get(name)
        if second is None:
            second = np.zeros_like(param.data)
            opt.second[name] = second
        first *= beta1
        first += (1.0 - beta1) * grad
        second *= beta2
        second += (1.0 - beta2) * grad * grad
        update = (first / correction1) / (
            np.sqrt(second / correction2) + opt.eps
        )
        param.data = param.data - rate * update

    store.zero_grad()
    logger.debug("adam step %d at rate %.3e", opt.step, rate)
    return rate


def rate_at_warmup(model_dim, warmup, factor=1.0):
    """Peak of the schedule, reached at step == warmup."""
    return factor * model_dim ** -0.5 * math.sqrt(1.0 / warmup)
