"""
Tensor Engine - float64 arrays with tape-based reverse-mode autodiff

Ops executed inside a ``with Graph() as g:`` block are recorded onto the
tape in execution order, which is a topological order by construction.
Outside a graph block ops only compute their forward value.
"""
import logging
import threading
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from plumenet.errors import ShapeError

logger = logging.getLogger(__name__)

_local = threading.local()

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    """N-D float64 array that can take part in a differentiable computation"""

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self.node: Optional["Node"] = None
        self._retain = False

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def retain_grad(self) -> "Tensor":
        """Keep the gradient of a non-leaf tensor after backward"""
        self._retain = True
        return self

    def zero_grad(self):
        self.grad = None

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        label = f" '{self.name}'" if self.name else ""
        return f"<Tensor{label} shape={self.shape} requires_grad={self.requires_grad}>"


class Node:
    """One recorded op: kind, inputs (and the ids of the nodes producing them), saved context"""

    def __init__(self, index: int, op: str, inputs: List[Tensor], output: Tensor,
                 backward_fn: BackwardFn, context: Optional[dict], graph: "Graph"):
        self.index = index
        self.op = op
        self.inputs = inputs
        self.input_ids = [
            t.node.index if (t.node is not None and t.node.graph is graph) else None
            for t in inputs
        ]
        self.output = output
        self.backward_fn = backward_fn
        self.context = context or {}
        self.graph = graph

    def __repr__(self):
        return f"<Node #{self.index} {self.op} inputs={self.input_ids}>"


class Graph:
    """Tape of recorded ops; use as a context manager"""

    def __init__(self):
        self.nodes: List[Node] = []
        self.outputs: List[int] = []

    def __enter__(self) -> "Graph":
        stack = getattr(_local, "stack", None)
        if stack is None:
            stack = _local.stack = []
        stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _local.stack.pop()
        return False

    def record(self, op: str, inputs: List[Tensor], output: Tensor,
               backward_fn: BackwardFn, context: Optional[dict] = None) -> Node:
        node = Node(len(self.nodes), op, inputs, output, backward_fn, context, self)
        self.nodes.append(node)
        output.requires_grad = True
        output.node = node
        return node

    def __len__(self):
        return len(self.nodes)


def current_graph() -> Optional[Graph]:
    stack = getattr(_local, "stack", None)
    return stack[-1] if stack else None


def tensor_op(op: str, inputs: Sequence[Tensor], data: np.ndarray,
              backward_fn: BackwardFn, context: Optional[dict] = None) -> Tensor:
    """Wrap a forward result; record it when a graph is active and any input needs a gradient"""
    out = Tensor(data)
    graph = current_graph()
    if graph is not None and any(t.requires_grad for t in inputs):
        graph.record(op, list(inputs), out, backward_fn, context)
    return out


def backward(graph: Graph, output: Tensor) -> Dict[Tensor, np.ndarray]:
    """
    Reverse pass over the tape.

    Gradients of leaves (``requires_grad`` tensors not produced by the tape)
    accumulate into ``leaf.grad`` by summation over all use sites; retained
    intermediates get ``.grad`` too.

    Returns:
        dict: leaf tensor -> gradient produced by this pass
    """
    if output.size != 1:
        raise ShapeError("backward", "output size", 1, output.size)
    if not output.requires_grad:
        logger.debug("[TENSOR] backward on an output that does not require grad")
        return {}

    graph.outputs = [output.node.index] if output.node is not None else []
    pending: Dict[int, np.ndarray] = {id(output): np.ones_like(output.data)}
    produced: Dict[Tensor, np.ndarray] = {}

    if output.node is None:
        # output is itself a leaf
        _accumulate_leaf(output, pending[id(output)], produced)
        return produced

    for node in reversed(graph.nodes):
        g = pending.pop(id(node.output), None)
        if g is None:
            continue
        if node.output._retain:
            node.output.grad = g.copy() if node.output.grad is None else node.output.grad + g
        input_grads = node.backward_fn(g)
        for t, gi in zip(node.inputs, input_grads):
            if gi is None or not t.requires_grad:
                continue
            if gi.shape != t.shape:
                raise ShapeError(f"backward[{node.op}]", "gradient shape", t.shape, gi.shape)
            if t.node is None or t.node.graph is not graph:
                _accumulate_leaf(t, gi, produced)
            else:
                key = id(t)
                pending[key] = gi if key not in pending else pending[key] + gi
    return produced


def _accumulate_leaf(t: Tensor, g: np.ndarray, produced: Dict[Tensor, np.ndarray]):
    t.grad = g.copy() if t.grad is None else t.grad + g
    produced[t] = g if t not in produced else produced[t] + g


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, h: float = 1e-5) -> float:
    """
    Compare the tape gradient of scalar ``f`` at ``x`` with central differences.

    Returns:
        float: max over coordinates of |analytic - numeric| / max(1, |analytic|, |numeric|)
    """
    x0 = np.array(x.data, dtype=np.float64)
    point = Tensor(x0.copy(), requires_grad=True)
    with Graph() as graph:
        out = f(point)
    backward(graph, out)
    analytic = point.grad if point.grad is not None else np.zeros_like(x0)

    numeric = np.empty_like(x0)
    flat = numeric.reshape(-1)
    for i in range(x0.size):
        xp = x0.copy()
        xp.reshape(-1)[i] += h
        xm = x0.copy()
        xm.reshape(-1)[i] -= h
        fp = f(Tensor(xp)).item()
        fm = f(Tensor(xm)).item()
        flat[i] = (fp - fm) / (2.0 * h)

    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / denom)) if x0.size else 0.0
