"""
Central finite-difference verification of analytic gradients.
"""
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np
import torch
import torch.nn as nn
from torch.func import functional_call

from .tape import DTYPE


@dataclass
class GradCheckEntry:
    name: str
    max_rel_error: float
    num_checked: int
    passed: bool


@dataclass
class GradCheckReport:
    tol: float
    entries: List[GradCheckEntry] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def failures(self) -> List[GradCheckEntry]:
        return [e for e in self.entries if not e.passed]

    def summary(self) -> str:
        lines = []
        for e in self.entries:
            flag = 'ok' if e.passed else 'FAIL'
            lines.append(f"{e.name:<36s} max_rel_err={e.max_rel_error:.3e} n={e.num_checked} [{flag}]")
        return '\n'.join(lines)


def _analytic_grads(fn, params):
    leaves = OrderedDict((k, v.detach().clone().to(DTYPE).requires_grad_(True)) for k, v in params.items())
    out = fn(leaves)
    assert out.numel() == 1, "gradient_check needs a scalar-valued function."
    grads = torch.autograd.grad(out.reshape(()), list(leaves.values()), allow_unused=True)
    return OrderedDict(
        (k, torch.zeros_like(leaves[k]) if g is None else g.detach()) for k, g in zip(leaves.keys(), grads)
    )

def gradient_check(fn: Callable, params: Dict[str, torch.Tensor], step: float = 1e-5, tol: float = 1e-4,
    analytic_grads: Optional[Dict[str, torch.Tensor]] = None, max_coords: Optional[int] = None, seed: int = 0):
    r"""Compare analytic gradients against central finite differences.

    Args:
        fn (callable): maps a dict of named float64 tensors to a scalar tensor.
        params (dict): the point to check at.
        step (float): finite-difference step.
        tol (float): pass threshold on |g_analytic - g_fd| / max(1, |g_fd|).
        analytic_grads (dict): gradients to verify; computed with autograd if None.
        max_coords (int): if set, check only this many seeded coordinates per block.

    Returns:
        GradCheckReport, one entry per parameter block. Failures are entries, not exceptions.
    """
    params = OrderedDict((k, v.detach().clone().to(DTYPE)) for k, v in params.items())
    if analytic_grads is None:
        analytic_grads = _analytic_grads(fn, params)

    rng = np.random.RandomState(seed)
    report = GradCheckReport(tol=tol)
    with torch.no_grad():
        for name, value in params.items():
            flat = value.view(-1)
            coords = np.arange(flat.numel())
            if max_coords is not None and flat.numel() > max_coords:
                coords = np.sort(rng.choice(flat.numel(), size=max_coords, replace=False))
            g_analytic = analytic_grads[name].detach().to(DTYPE).reshape(-1)
            max_err = 0.0
            for i in coords:
                orig = flat[i].item()
                flat[i] = orig + step
                f_plus = fn(params).item()
                flat[i] = orig - step
                f_minus = fn(params).item()
                flat[i] = orig
                g_fd = (f_plus - f_minus) / (2 * step)
                err = abs(g_analytic[i].item() - g_fd) / max(1.0, abs(g_fd))
                max_err = max(max_err, err)
            report.entries.append(GradCheckEntry(name, max_err, len(coords), bool(max_err <= tol)))
    return report


class _Closure(nn.Module):
    def __init__(self, net: nn.Module, compute: Callable):
        super().__init__()
        self.net = net
        self.compute = compute

    def forward(self):
        return self.compute(self.net)

def module_gradient_check(net: nn.Module, compute: Callable, step: float = 1e-5, tol: float = 1e-4, **kws):
    r"""Gradient check over all parameters of a module.

    Args:
        net (nn.Module): module whose parameters are checked (named `net.<param>`).
        compute (callable): `compute(net)` returns the scalar objective; it must be
            deterministic across calls (reseed any masking generator inside).
    """
    wrapper = _Closure(net, compute)
    params = OrderedDict((k, v.detach().clone()) for k, v in wrapper.named_parameters())

    def fn(p):
        return functional_call(wrapper, p, ())

    return gradient_check(fn, params, step=step, tol=tol, **kws)
