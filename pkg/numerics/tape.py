"""
A recording layer over torch autograd.

Every primitive registers (op, input ids, output id) on the tape, checks shapes
before computing and finiteness after, and keeps values as float64 tensors.
Backward passes are delegated to `torch.autograd.grad`.
"""
from collections import OrderedDict
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import torch

from utils.errors import ContractError, NumericError, ShapeError


DTYPE = torch.float64


def as_tensor(value) -> torch.Tensor:
    if isinstance(value, torch.Tensor):
        return value.to(DTYPE)
    return torch.as_tensor(np.asarray(value, dtype=np.float64), dtype=DTYPE)


class Node(object):
    """A value recorded on a `Tape`."""
    __slots__ = ('tape', 'id', 'value', 'name')

    def __init__(self, tape, node_id: int, value: torch.Tensor, name: Optional[str] = None):
        self.tape = tape
        self.id = node_id
        self.value = value
        self.name = name

    @property
    def shape(self):
        return tuple(self.value.shape)

    def numpy(self):
        return self.value.detach().cpu().numpy()

    def item(self):
        return self.value.item()

    def __add__(self, other):
        return self.tape.add(self, other)

    def __sub__(self, other):
        return self.tape.sub(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return self.tape.scale(self, other)
        return self.tape.mul(self, other)

    def __matmul__(self, other):
        return self.tape.matmul(self, other)

    def __repr__(self):
        return f"Node(id={self.id}, shape={self.shape})"


class Tape(object):
    r"""Ordered record of primitive operations.

    Usage:
        tape = Tape()
        x = tape.leaf([3.0, 4.0], name='x')
        y = tape.sum(tape.l2_normalize(x))
        grads = tape.grad(y)   # {'x': tensor([...])}
    """
    def __init__(self):
        self.nodes: List[Node] = []
        self.records: List[tuple] = []
        self.leaves: "OrderedDict[str, Node]" = OrderedDict()

    def __len__(self):
        return len(self.records)

    # ---------------------------------------------------------------
    # node creation
    # ---------------------------------------------------------------
    def _new_node(self, value: torch.Tensor, name=None) -> Node:
        if value.dim() > 2:
            raise ShapeError("Only scalars, vectors and matrices are supported", value.shape, None)
        node = Node(self, len(self.nodes), value, name=name)
        self.nodes.append(node)
        return node

    def leaf(self, value, name: Optional[str] = None, requires_grad: bool = True) -> Node:
        if name is None:
            name = f"x{len(self.leaves)}"
        assert name not in self.leaves, f"Leaf {name} already exists on this tape."
        t = as_tensor(value).detach().clone().requires_grad_(requires_grad)
        self._check_finite('leaf', t)
        node = self._new_node(t, name=name)
        self.leaves[name] = node
        return node

    def const(self, value) -> Node:
        return self._new_node(as_tensor(value).detach())

    def watch(self, value: torch.Tensor, name: Optional[str] = None) -> Node:
        """Record a tensor computed outside the tape, keeping its autograd history."""
        if not isinstance(value, torch.Tensor):
            raise ContractError(f"Only tensors can be watched, got {type(value).__name__}.")
        self._check_finite(f'watch:{name}', value)
        node = self._new_node(value.to(DTYPE), name=name)
        self.records.append(('watch', (), node.id))
        return node

    def _lift(self, x) -> Node:
        if isinstance(x, Node):
            assert x.tape is self, "Cannot mix nodes of different tapes."
            return x
        return self.const(x)

    def _record(self, op: str, inputs: Sequence[Node], value: torch.Tensor) -> Node:
        self._check_finite(op, value)
        out = self._new_node(value)
        ids = tuple(n.id for n in inputs)
        assert all(i < out.id for i in ids), "Tape is not in topological order."
        self.records.append((op, ids, out.id))
        return out

    @staticmethod
    def _check_finite(op, value):
        if not bool(torch.isfinite(value).all()):
            raise NumericError(f"Non-finite value produced by `{op}`.")

    @staticmethod
    def _check_elementwise(op, a: Node, b: Node):
        sa, sb = a.shape, b.shape
        if sa == sb or len(sb) == 0 or len(sa) == 0:
            return
        # row broadcast, e.g. adding a bias vector to every row
        if len(sa) == 2 and len(sb) == 1 and sa[1] == sb[0]:
            return
        if len(sb) == 2 and len(sa) == 1 and sb[1] == sa[0]:
            return
        raise ShapeError(f"Incompatible operands for `{op}`", sa, sb)

    # ---------------------------------------------------------------
    # primitives
    # ---------------------------------------------------------------
    def matmul(self, a, b) -> Node:
        a, b = self._lift(a), self._lift(b)
        if a.value.dim() == 0 or b.value.dim() == 0:
            raise ShapeError("matmul needs vector or matrix operands", a.shape, b.shape)
        inner_a = a.shape[-1]
        inner_b = b.shape[0]
        if inner_a != inner_b:
            raise ShapeError("matmul inner dimensions differ", a.shape, b.shape)
        return self._record('matmul', [a, b], torch.matmul(a.value, b.value))

    def add(self, a, b) -> Node:
        a, b = self._lift(a), self._lift(b)
        self._check_elementwise('add', a, b)
        return self._record('add', [a, b], a.value + b.value)

    def sub(self, a, b) -> Node:
        a, b = self._lift(a), self._lift(b)
        self._check_elementwise('sub', a, b)
        return self._record('sub', [a, b], a.value - b.value)

    def mul(self, a, b) -> Node:
        a, b = self._lift(a), self._lift(b)
        self._check_elementwise('mul', a, b)
        return self._record('mul', [a, b], a.value * b.value)

    def scale(self, a, s: float) -> Node:
        a = self._lift(a)
        return self._record('scale', [a], a.value * float(s))

    def sigmoid(self, a) -> Node:
        a = self._lift(a)
        return self._record('sigmoid', [a], torch.sigmoid(a.value))

    def log(self, a) -> Node:
        a = self._lift(a)
        if bool((a.value <= 0).any()):
            raise NumericError("log of a non-positive value.")
        return self._record('log', [a], torch.log(a.value))

    def exp(self, a) -> Node:
        a = self._lift(a)
        return self._record('exp', [a], torch.exp(a.value))

    def sum(self, a, dim: Optional[int] = None) -> Node:
        a = self._lift(a)
        value = a.value.sum() if dim is None else a.value.sum(dim=dim)
        return self._record('sum', [a], value)

    def mean(self, a, dim: Optional[int] = None) -> Node:
        a = self._lift(a)
        if a.value.numel() == 0:
            raise ShapeError("mean of an empty tensor", a.shape, None)
        value = a.value.mean() if dim is None else a.value.mean(dim=dim)
        return self._record('mean', [a], value)

    def l2_normalize(self, a) -> Node:
        """Normalize a vector, or every row of a matrix, to unit L2 norm."""
        a = self._lift(a)
        norm = a.value.norm(dim=-1, keepdim=True)
        if bool((norm <= 0).any()):
            raise NumericError("Cannot L2-normalize a zero vector.")
        return self._record('l2_normalize', [a], a.value / norm)

    def relu(self, a) -> Node:
        a = self._lift(a)
        return self._record('relu', [a], torch.clamp(a.value, min=0.0))

    def mask_mul(self, a, mask) -> Node:
        a = self._lift(a)
        m = self._lift(mask)
        if a.shape != m.shape:
            raise ShapeError("mask shape differs from its operand", a.shape, m.shape)
        return self._record('mask_mul', [a, m], a.value * m.value.detach())

    def concat(self, nodes: Sequence, dim: int = -1) -> Node:
        nodes = [self._lift(n) for n in nodes]
        assert len(nodes) > 0, "concat needs at least one operand."
        ref = nodes[0].shape
        for n in nodes[1:]:
            if len(n.shape) != len(ref):
                raise ShapeError("concat operands differ in rank", ref, n.shape)
            other_axes = [i for i in range(len(ref)) if i != (dim % len(ref))]
            if any(n.shape[i] != ref[i] for i in other_axes):
                raise ShapeError("concat operands differ off the joined axis", ref, n.shape)
        return self._record('concat', nodes, torch.cat([n.value for n in nodes], dim=dim))

    # ---------------------------------------------------------------
    # backward
    # ---------------------------------------------------------------
    def grad(self, output: Node, wrt: Optional[Sequence[str]] = None) -> "OrderedDict[str, torch.Tensor]":
        """Gradients of a scalar node with respect to the leaves (in registration order)."""
        if output.value.numel() != 1:
            raise ContractError(f"Gradients need a scalar output, got shape {output.shape}.")
        names = list(self.leaves.keys()) if wrt is None else list(wrt)
        leaves = [self.leaves[k] for k in names]
        grads = torch.autograd.grad(
            output.value.reshape(()), [n.value for n in leaves],
            retain_graph=True, allow_unused=True
        )
        ret = OrderedDict()
        for name, node, g in zip(names, leaves, grads):
            ret[name] = torch.zeros_like(node.value) if g is None else g.detach()
        return ret

    def backward(self, output: Optional[Node] = None):
        """Accumulate gradients of a scalar node (the last recorded one by default) into `.grad`."""
        if output is None:
            if not self.nodes:
                raise ContractError("Nothing was recorded on this tape.")
            output = self.nodes[-1]
        if output.value.numel() != 1:
            raise ContractError(f"Gradients need a scalar output, got shape {output.shape}.")
        output.value.reshape(()).backward()

    def weighted_sum(self, terms: "OrderedDict[str, torch.Tensor]", weights: Dict[str, float]) -> Node:
        r"""sum_k weights[k] * terms[k], added left to right in the order of `terms`."""
        if len(terms) == 0:
            raise ContractError("weighted_sum needs at least one term.")
        total = None
        for name, value in terms.items():
            if name not in weights:
                raise ContractError(f"No weight was given for the term `{name}`.")
            node = self.scale(self.watch(value, name=name), weights[name])
            total = node if total is None else self.add(total, node)
        return total


def tape_eval(expression: Callable, inputs: Dict[str, object], tape: Optional[Tape] = None):
    r"""Evaluate `expression(tape, **leaves)` on a fresh tape.

    Returns:
        (tape, output node)
    """
    tape = Tape() if tape is None else tape
    leaves = {name: tape.leaf(value, name=name) for name, value in inputs.items()}
    out = expression(tape, **leaves)
    return tape, out

def tape_grad(tape: Tape, output: Node):
    return tape.grad(output)
