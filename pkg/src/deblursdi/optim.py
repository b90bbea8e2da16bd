"""Joint Adam optimizer with per-group learning rates.

One optimizer instance updates both networks; each parameter group carries
its own learning rate. Moments persist for the whole run and the shared
step counter drives bias correction. A step with any non-finite gradient
is skipped entirely (all groups), with a warning.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .backend import kernels
from .errors import ValidationError

log = logging.getLogger("deblursdi")

KERNEL_LR_DECAY = 0.95
KERNEL_LR_FLOOR = 1e-5


@dataclass
class ParamGroup:
    name: str
    learning_rate: float
    params: dict = field(default_factory=dict)  # name -> (param, grad)

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValidationError(f"learning rate must be >= 0, got {self.learning_rate}")


class Adam:
    def __init__(self, groups, beta1=0.9, beta2=0.999, eps=1e-8):
        self.groups = list(groups)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = {}
        self._v = {}
        for group in self.groups:
            for name, (param, grad) in group.params.items():
                # updates run on flat views, so both buffers must be contiguous
                if not (param.flags.c_contiguous and grad.flags.c_contiguous):
                    raise ValidationError(
                        f"parameter {group.name}/{name} must be C-contiguous"
                    )
                key = (group.name, name)
                self._m[key] = np.zeros(param.size)
                self._v[key] = np.zeros(param.size)

    def set_learning_rate(self, group_name, lr):
        for group in self.groups:
            if group.name == group_name:
                group.learning_rate = lr
                return
        raise KeyError(group_name)

    def zero_grads(self):
        for group in self.groups:
            for _, grad in group.params.values():
                grad[...] = 0.0

    def step(self):
        """Apply one bias-corrected update in place; returns False if skipped."""
        ops = kernels()
        for group in self.groups:
            for name, (_, grad) in group.params.items():
                if not ops.grads_finite(grad.reshape(-1)):
                    log.warning(
                        "skipping optimizer step: non-finite gradient in %s/%s",
                        group.name,
                        name,
                    )
                    return False
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for group in self.groups:
            lr = group.learning_rate
            for name, (param, grad) in group.params.items():
                key = (group.name, name)
                ops.adam_update(
                    param.reshape(-1), grad.reshape(-1),
                    self._m[key], self._v[key],
                    lr, self.beta1, self.beta2, c1, c2, self.eps,
                )
        return True


def decay_kernel_lr(current):
    """One decay tick for the kernel group's rate: 5% down, floored at 1e-5."""
    if current <= 0:
        raise ValidationError(f"learning rate must be > 0, got {current}")
    return max(KERNEL_LR_DECAY * current, KERNEL_LR_FLOOR)
