"""Tensor, recording tape and the reverse sweep.

Ops only record when a :class:`Tape` is active *and* at least one input needs a
gradient; outside a tape everything runs as plain numpy (the inference path).
Nodes are appended in creation order, which is already a topological order, so
the backward pass is a single reversed walk over the tape.
"""

from __future__ import annotations

from typing import Callable, Iterator, Sequence

import numpy as np

DEBUG = False

_tapes: list["Tape"] = []


class Tensor:
    __slots__ = ("data", "requires_grad", "name", "grad", "_parents", "_backward", "node_id")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = requires_grad
        self.name = name
        self.grad = None
        self._parents: tuple = ()
        self._backward: Callable | None = None
        self.node_id: int | None = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Ordered record of differentiable operations."""

    def __init__(self):
        self.nodes: list[Tensor] = []

    def __enter__(self) -> "Tape":
        _tapes.append(self)
        return self

    def __exit__(self, *exc):
        _tapes.pop()
        return False

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, node: Tensor) -> None:
        node.node_id = len(self.nodes)
        self.nodes.append(node)


def active_tape() -> Tape | None:
    return _tapes[-1] if _tapes else None


def make_node(data: np.ndarray, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    """Wrap an op result; ``backward(g)`` returns one gradient (or None) per parent."""
    if DEBUG and not np.all(np.isfinite(data)):
        raise FloatingPointError("non-finite value produced by an op")
    out = Tensor(data)
    tape = active_tape()
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
        tape.record(out)
    return out


def backward(tape: Tape, loss: Tensor, params: "ParamStore | None" = None) -> dict:
    """Reverse sweep from a scalar ``loss``.

    Leaf gradients are written to ``tensor.grad``. If ``params`` is given the
    result maps each trainable parameter name to its gradient (zeros when no
    path reaches it); otherwise it maps leaf tensors' ``id`` to gradients.
    """
    if loss.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: dict[int, Tensor] = {}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        for p, pg in zip(node._parents, node._backward(g)):
            if pg is None or not p.requires_grad:
                continue
            key = id(p)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
            if p._backward is None:
                leaves[key] = p
    if loss._backward is None and loss.requires_grad:
        leaves[id(loss)] = loss
    for key, leaf in leaves.items():
        leaf.grad = grads[key]
    if params is None:
        return {key: grads[key] for key in leaves}
    out = {}
    for name, t in params.items():
        if not t.requires_grad:
            continue
        g = grads.get(id(t))
        out[name] = np.zeros_like(t.data) if g is None else g
    return out


class ParamStore:
    """Named parameters; ``requires_grad`` doubles as the trainable flag."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, data, trainable: bool = True) -> Tensor:
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(data), requires_grad=trainable, name=name)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self, prefix: str = "") -> list[str]:
        return [n for n in self._params if n.startswith(prefix)]

    def freeze(self, prefix: str) -> None:
        for n in self.names(prefix):
            self._params[n].requires_grad = False

    def trainable(self) -> dict[str, Tensor]:
        return {n: t for n, t in self._params.items() if t.requires_grad}

    def astype(self, dtype) -> None:
        for t in self._params.values():
            t.data = t.data.astype(dtype)

    def state(self) -> dict[str, np.ndarray]:
        return {n: t.data.copy() for n, t in self._params.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for n, arr in state.items():
            t = self._params[n]
            if t.data.shape != arr.shape:
                raise ValueError(f"{n}: shape {arr.shape} != {t.data.shape}")
            t.data = arr.astype(t.data.dtype, copy=True)
