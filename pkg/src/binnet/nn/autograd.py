"""A tape-based reverse-mode autodiff core.

Each forward op appends one entry to the :class:`Tape`, holding its output,
its inputs and a closure over the saved forward context. ``Tape.backward``
walks the entries in exact reverse order, so the forward order is the
topological order. Entries are dropped once consumed.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..errors import MissingContext

ROLES = ("binary-conv weight", "fp-conv weight", "bn-gamma", "bn-beta", "dense weight", "bias")


class Var:
    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data: np.ndarray, requires_grad: bool = False):
        self.data = data
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Var(shape={self.data.shape}, dtype={self.data.dtype})"


class Parameter(Var):
    __slots__ = ("role", "name")

    def __init__(self, data: np.ndarray, role: str, name: str = ""):
        if role not in ROLES:
            raise ValueError(f"unknown parameter role {role!r}")
        super().__init__(data, requires_grad=True)
        self.role = role
        self.name = name

    def zero_grad(self):
        self.grad = None


@dataclass
class _Entry:
    op: str
    output: Var
    inputs: tuple[Var, ...]
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None


class Tape:
    def __init__(self):
        self.entries: list[_Entry] = []

    def __len__(self):
        return len(self.entries)

    def record(self, op: str, output: Var, inputs: Sequence[Var],
               backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]) -> Var:
        if any(v.requires_grad for v in inputs):
            output.requires_grad = True
        self.entries.append(_Entry(op, output, tuple(inputs), backward))
        return output

    def backward(self, loss: Var, grad: np.ndarray | None = None) -> None:
        if not self.entries:
            raise MissingContext("tape is empty; run a recorded forward pass first")
        loss.grad = np.ones_like(loss.data) if grad is None else grad
        for entry in reversed(self.entries):
            g = entry.output.grad
            fn, entry.backward = entry.backward, None
            if fn is None:
                raise MissingContext(f"context of {entry.op!r} already consumed")
            if g is None or not entry.output.requires_grad:
                continue
            for v, gv in zip(entry.inputs, fn(g)):
                if gv is None or not v.requires_grad:
                    continue
                v.grad = gv if v.grad is None else v.grad + gv
            if not isinstance(entry.output, Parameter) and entry.output is not loss:
                entry.output.grad = None
        self.entries.clear()
