"""
Dense float64 tensors with a recorded computation graph and reverse-mode gradients.
"""
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from dgdata.exceptions import NonFiniteError, UsageError

ArrayLike = Union[np.ndarray, float, int, Sequence[float]]
BackwardFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


class Tensor:
    """
    A dense tensor of 64-bit floats in row-major order.

    Non-leaf tensors remember the tensors they were computed from and a
    closure mapping the upstream gradient to one gradient per parent.

    Attributes:
        data: Underlying float64 array
        requires_grad: Whether gradients are tracked through this tensor
        grad: Accumulated gradient (leaf tensors only) or None
        op: Name of the op that produced the tensor ("leaf" for inputs)
    """

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        parents: Tuple["Tensor", ...] = (),
        backward_fn: Optional[BackwardFn] = None,
        op: str = "leaf",
    ):
        array = np.array(data, dtype=np.float64)
        if not np.all(np.isfinite(array)):
            raise NonFiniteError(
                "Non-finite values produced", details={"op": op, "shape": array.shape}
            )
        self.data = array
        self.requires_grad = bool(requires_grad or any(p.requires_grad for p in parents))
        self.grad: Optional[np.ndarray] = None
        self.op = op
        # Parents of a constant subgraph are not worth keeping alive
        self._parents = parents if self.requires_grad else ()
        self._backward_fn = backward_fn if self.requires_grad else None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def is_leaf(self) -> bool:
        return self._backward_fn is None

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError("item() requires a single-element tensor", details={"shape": self.shape})
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        """Return a copy of the underlying array."""
        return self.data.copy()

    def detach(self) -> "Tensor":
        """Return a constant tensor sharing no graph with this one."""
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Populate gradients of every reachable leaf; see :func:`backward`."""
        backward(self)

    def __add__(self, other: Union["Tensor", float]) -> "Tensor":
        from dgdata.nn.functional import add
        return add(self, other)

    def __radd__(self, other: float) -> "Tensor":
        from dgdata.nn.functional import add
        return add(self, other)

    def __sub__(self, other: Union["Tensor", float]) -> "Tensor":
        from dgdata.nn.functional import add, scale
        if isinstance(other, Tensor):
            return add(self, scale(other, -1.0))
        return add(self, -float(other))

    def __mul__(self, other: Union["Tensor", float]) -> "Tensor":
        from dgdata.nn.functional import mul, scale
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    def __rmul__(self, other: float) -> "Tensor":
        from dgdata.nn.functional import scale
        return scale(self, float(other))

    def __neg__(self) -> "Tensor":
        from dgdata.nn.functional import scale
        return scale(self, -1.0)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"


def parameter(data: ArrayLike) -> Tensor:
    """Create a trainable leaf tensor."""
    return Tensor(data, requires_grad=True)


@dataclass
class ComputationRecord:
    """
    The executed ops reachable from an output, in topological order.

    Replaying ``nodes`` in reverse visits every op exactly once after all of
    its consumers.
    """

    nodes: List[Tensor] = field(default_factory=list)

    @classmethod
    def from_output(cls, output: Tensor) -> "ComputationRecord":
        order: List[Tensor] = []
        visited = set()
        # Iterative post-order DFS; deep graphs would overflow the recursion limit
        stack: List[Tuple[Tensor, bool]] = [(output, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
        return cls(nodes=order)

    def release(self) -> None:
        """Drop interior graph references so the record can be garbage collected."""
        for node in self.nodes:
            if not node.is_leaf:
                node._parents = ()
                node._backward_fn = None
                node.op = f"{node.op}(released)"


def backward(loss: Tensor) -> None:
    """
    Run reverse-mode differentiation from a scalar loss.

    Gradients accumulate into ``grad`` of every reachable leaf tensor that
    requires grad. The interior graph is released afterwards.

    Args:
        loss: Scalar tensor produced by recorded ops

    Raises:
        UsageError: If the loss is detached, already released or not scalar
    """
    if not loss.requires_grad or loss.op.endswith("(released)"):
        raise UsageError("backward called on a tensor that is not part of a recorded graph",
                         details={"op": loss.op})
    if loss.size != 1:
        raise UsageError("backward requires a scalar loss", details={"shape": loss.shape})

    record = ComputationRecord.from_output(loss)
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(record.nodes):
        upstream = grads.pop(id(node), None)
        if upstream is None:
            continue
        if node.is_leaf:
            node.grad = upstream.copy() if node.grad is None else node.grad + upstream
            continue
        parent_grads = node._backward_fn(upstream)  # type: ignore[misc]
        for parent, parent_grad in zip(node._parents, parent_grads):
            if parent_grad is None or not parent.requires_grad:
                continue
            if id(parent) in grads:
                grads[id(parent)] = grads[id(parent)] + parent_grad
            else:
                grads[id(parent)] = parent_grad
    record.release()
