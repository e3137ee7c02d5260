""" Adam Optimizer
Bias-corrected adaptive-moment update, exposed both as a pure function
over named tensors (`adam_step`) and as a torch `Optimizer`.
"""
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, Tuple

import torch
from torch.optim.optimizer import Optimizer

from utils.errors import ConfigError, ShapeError


@dataclass
class OptimizerState:
    lr: float = 0.002
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    step: int = 0
    exp_avg: Dict[str, torch.Tensor] = field(default_factory=OrderedDict)
    exp_avg_sq: Dict[str, torch.Tensor] = field(default_factory=OrderedDict)

    def __post_init__(self):
        _check_hparams(self.lr, self.betas, self.eps)


def _check_hparams(lr, betas, eps):
    if not 0.0 <= lr:
        raise ConfigError("Invalid learning rate: {}".format(lr))
    if not 0.0 <= eps:
        raise ConfigError("Invalid epsilon value: {}".format(eps))
    if not 0.0 <= betas[0] < 1.0:
        raise ConfigError("Invalid beta parameter at index 0: {}".format(betas[0]))
    if not 0.0 <= betas[1] < 1.0:
        raise ConfigError("Invalid beta parameter at index 1: {}".format(betas[1]))


def _moment_update(param, grad, exp_avg, exp_avg_sq, step, lr, betas, eps):
    beta1, beta2 = betas
    bias_correction1 = 1 - beta1 ** step
    bias_correction2 = 1 - beta2 ** step

    exp_avg.mul_(beta1).add_(grad, alpha=1 - beta1)
    exp_avg_sq.mul_(beta2).addcmul_(grad, grad, value=1 - beta2)
    denom = (exp_avg_sq.sqrt() / math.sqrt(bias_correction2)).add_(eps)
    step_size = lr / bias_correction1
    param.addcdiv_(exp_avg, denom, value=-step_size)


def adam_step(state: OptimizerState, params: Dict[str, torch.Tensor], grads: Dict[str, torch.Tensor]):
    r"""One Adam step over named tensors.

    Returns new parameter tensors; the inputs are not modified. The state
    (moments and step counter) is updated in place.
    """
    if set(params.keys()) != set(grads.keys()):
        raise ShapeError("params and grads name different blocks", sorted(params.keys()), sorted(grads.keys()))
    for name in params:
        if tuple(params[name].shape) != tuple(grads[name].shape):
            raise ShapeError(f"gradient shape differs for `{name}`", params[name].shape, grads[name].shape)

    state.step += 1
    new_params = OrderedDict()
    for name, p in params.items():
        p_new = p.detach().clone()
        if name not in state.exp_avg:
            state.exp_avg[name] = torch.zeros_like(p_new)
            state.exp_avg_sq[name] = torch.zeros_like(p_new)
        _moment_update(p_new, grads[name].detach().to(p_new.dtype), state.exp_avg[name], state.exp_avg_sq[name],
            state.step, state.lr, state.betas, state.eps)
        new_params[name] = p_new
    return new_params


class Adam(Optimizer):
    r"""Implements the Adam algorithm with optional L2 weight decay.

    Arguments:
        params (iterable): iterable of parameters to optimize or dicts defining
            parameter groups
        lr (float, optional): learning rate (default: 2e-3)
        betas (Tuple[float, float], optional): coefficients used for computing
            running averages of gradient and its square (default: (0.9, 0.999))
        eps (float, optional): term added to the denominator to improve
            numerical stability (default: 1e-8)
        weight_decay (float, optional): L2 penalty added to the gradient (default: 0)
    """

    def __init__(self, params, lr=2e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
        _check_hparams(lr, betas, eps)
        defaults = dict(lr=lr, betas=tuple(betas), eps=eps, weight_decay=weight_decay)
        super(Adam, self).__init__(params, defaults)

    @torch.no_grad()
    def step(self, closure=None):
        """Performs a single optimization step.

        Arguments:
            closure (callable, optional): A closure that reevaluates the model
                and returns the loss.
        """
        loss = None
        if closure is not None:
            with torch.enable_grad():
                loss = closure()

        for group in self.param_groups:
            for p in group['params']:
                if p.grad is None:
                    continue
                grad = p.grad
                if grad.is_sparse:
                    raise RuntimeError('Adam does not support sparse gradients')
                if group['weight_decay'] != 0:
                    grad = grad.add(p, alpha=group['weight_decay'])

                state = self.state[p]
                # State initialization
                if len(state) == 0:
                    state['step'] = 0
                    state['exp_avg'] = torch.zeros_like(p)
                    state['exp_avg_sq'] = torch.zeros_like(p)

                state['step'] += 1
                _moment_update(p, grad, state['exp_avg'], state['exp_avg_sq'], state['step'],
                    group['lr'], group['betas'], group['eps'])

        return loss
