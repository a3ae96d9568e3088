"""Reverse-mode automatic differentiation over dense float64 arrays.

Every operation records its inputs and an exact analytic backward rule on an
implicit tape (parent links per result tensor). ``backward`` replays the tape
in reverse topological order and accumulates gradients additively into every
``requires_grad`` leaf. All values are float64; every op output is checked
for NaN/Inf so numerical blow-ups surface at the op that produced them.

Broadcasting is deliberately restricted: elementwise ops accept operands of
identical shape, a scalar operand, or a trailing-shape operand broadcast over
one leading batch dimension. Anything else is a shape error.
"""

import numpy as np

from .exceptions import DecompositionError, DimensionError, NumericError

# Additive offset used for 0*log(0) := 0 in entropy expressions; per-term
# bias is below 1e-10.
ENTROPY_TINY = 1e-12


def _check_finite(arr, op):
    if not np.isfinite(arr).all():
        raise NumericError(f"non-finite values produced by op '{op}'")
    return arr


class Tensor:
    """Dense float64 array participating in reverse-mode differentiation."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        arr = np.array(data, dtype=np.float64)
        _check_finite(arr, "tensor")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None

    @classmethod
    def _from_op(cls, data, parents, backward, op):
        out = cls.__new__(cls)
        out.data = _check_finite(np.asarray(data, dtype=np.float64), op)
        out.requires_grad = True
        out.grad = None
        out._parents = tuple(parents)
        out._backward = backward
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        return tmean(self, axis)

    def reshape(self, shape):
        return reshape(self, shape)

    @property
    def T(self):
        return transpose(self)


def _wrap(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _needs_grad(*tensors):
    return any(t.requires_grad for t in tensors)


def _result(data, parents, backward_builder, op):
    """Create an op result; the backward closure is only built when needed."""
    if _needs_grad(*parents):
        return Tensor._from_op(data, parents, backward_builder(), op)
    out = Tensor.__new__(Tensor)
    out.data = _check_finite(np.asarray(data, dtype=np.float64), op)
    out.requires_grad = False
    out.grad = None
    out._parents = ()
    out._backward = None
    return out


# ---------------------------------------------------------------------------
# broadcasting helpers (one leading batch dimension only)
# ---------------------------------------------------------------------------

def _broadcast_ok(a_shape, b_shape):
    if a_shape == b_shape:
        return True
    if b_shape == ():  # scalar operand
        return True
    if a_shape == ():
        return True
    # trailing-shape operand broadcast over the leading batch dimension
    if len(a_shape) == len(b_shape) + 1 and a_shape[1:] == b_shape:
        return True
    if len(b_shape) == len(a_shape) + 1 and b_shape[1:] == a_shape:
        return True
    return False


def _unbroadcast(grad, shape):
    """Reduce an output gradient back to an operand's shape."""
    if grad.shape == shape:
        return grad
    if shape == ():
        return np.asarray(grad.sum())
    # operand was broadcast over the leading batch dimension
    return grad.sum(axis=0)


def _elementwise(a, b, op, fwd, grad_a, grad_b):
    a, b = _wrap(a), _wrap(b)
    if not _broadcast_ok(a.shape, b.shape):
        raise DimensionError(
            f"op '{op}': shapes {a.shape} and {b.shape} do not conform"
        )
    data = fwd(a.data, b.data)

    def build():
        def back(g):
            out = []
            if a.requires_grad:
                out.append((a, _unbroadcast(grad_a(g, a.data, b.data), a.shape)))
            if b.requires_grad:
                out.append((b, _unbroadcast(grad_b(g, a.data, b.data), b.shape)))
            return out

        return back

    return _result(data, (a, b), build, op)


# ---------------------------------------------------------------------------
# arithmetic
# ---------------------------------------------------------------------------

def add(a, b):
    return _elementwise(
        a, b, "add", lambda x, y: x + y,
        lambda g, x, y: g, lambda g, x, y: g,
    )


def sub(a, b):
    return _elementwise(
        a, b, "sub", lambda x, y: x - y,
        lambda g, x, y: g, lambda g, x, y: -g,
    )


def mul(a, b):
    return _elementwise(
        a, b, "mul", lambda x, y: x * y,
        lambda g, x, y: g * y, lambda g, x, y: g * x,
    )


def div(a, b):
    return _elementwise(
        a, b, "div", lambda x, y: x / y,
        lambda g, x, y: g / y, lambda g, x, y: -g * x / (y * y),
    )


def neg(a):
    a = _wrap(a)
    return _result(-a.data, (a,), lambda: lambda g: [(a, -g)], "neg")


def matmul(a, b):
    a, b = _wrap(a), _wrap(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError("matmul expects 2-d operands")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"matmul: inner dimensions disagree ({a.shape} @ {b.shape})"
        )
    data = a.data @ b.data

    def build():
        def back(g):
            out = []
            if a.requires_grad:
                out.append((a, g @ b.data.T))
            if b.requires_grad:
                out.append((b, a.data.T @ g))
            return out

        return back

    return _result(data, (a, b), build, "matmul")


def transpose(a):
    a = _wrap(a)
    if a.ndim != 2:
        raise DimensionError("transpose expects a 2-d tensor")
    return _result(a.data.T.copy(), (a,), lambda: lambda g: [(a, g.T)], "transpose")


def reshape(a, shape):
    a = _wrap(a)
    data = a.data.reshape(shape)
    orig = a.shape
    return _result(
        data.copy(), (a,), lambda: lambda g: [(a, g.reshape(orig))], "reshape"
    )


def concat_cols(a, b):
    """Concatenate two 2-d tensors along columns."""
    a, b = _wrap(a), _wrap(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[0] != b.shape[0]:
        raise DimensionError(
            f"concat_cols: shapes {a.shape} and {b.shape} do not conform"
        )
    data = np.concatenate([a.data, b.data], axis=1)
    na = a.shape[1]

    def build():
        def back(g):
            out = []
            if a.requires_grad:
                out.append((a, g[:, :na]))
            if b.requires_grad:
                out.append((b, g[:, na:]))
            return out

        return back

    return _result(data, (a, b), build, "concat_cols")


def slice_cols(a, start, stop):
    """Select a contiguous column range of a 2-d tensor."""
    a = _wrap(a)
    if a.ndim != 2:
        raise DimensionError("slice_cols expects a 2-d tensor")
    data = a.data[:, start:stop].copy()

    def build():
        def back(g):
            full = np.zeros_like(a.data)
            full[:, start:stop] = g
            return [(a, full)]

        return back

    return _result(data, (a,), build, "slice_cols")


# ---------------------------------------------------------------------------
# pointwise nonlinearities
# ---------------------------------------------------------------------------

def exp(a):
    a = _wrap(a)
    data = np.exp(a.data)
    return _result(data, (a,), lambda: lambda g: [(a, g * data)], "exp")


def log(a):
    a = _wrap(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        data = np.log(a.data)
    return _result(data, (a,), lambda: lambda g: [(a, g / a.data)], "log")


def sqrt(a):
    a = _wrap(a)
    data = np.sqrt(a.data)
    return _result(data, (a,), lambda: lambda g: [(a, g * 0.5 / data)], "sqrt")


def tanh(a):
    a = _wrap(a)
    data = np.tanh(a.data)
    return _result(data, (a,), lambda: lambda g: [(a, g * (1.0 - data * data))], "tanh")


def sigmoid(a):
    a = _wrap(a)
    data = np.where(
        a.data >= 0,
        1.0 / (1.0 + np.exp(-np.abs(a.data))),
        np.exp(-np.abs(a.data)) / (1.0 + np.exp(-np.abs(a.data))),
    )
    return _result(
        data, (a,), lambda: lambda g: [(a, g * data * (1.0 - data))], "sigmoid"
    )


def softplus(a):
    a = _wrap(a)
    data = np.logaddexp(0.0, a.data)

    def build():
        sig = np.where(
            a.data >= 0,
            1.0 / (1.0 + np.exp(-np.abs(a.data))),
            np.exp(-np.abs(a.data)) / (1.0 + np.exp(-np.abs(a.data))),
        )
        return lambda g: [(a, g * sig)]

    return _result(data, (a,), build, "softplus")


def relu(a):
    a = _wrap(a)
    data = np.maximum(a.data, 0.0)
    return _result(
        data, (a,), lambda: lambda g: [(a, g * (a.data > 0.0))], "relu"
    )


# hinge(x) = max(x, 0); same primitive as relu
hinge = relu


def clip_box(a, lower, upper):
    """Clamp into [lower, upper]; gradient passes only through unclipped entries.

    Bounds are constants broadcastable against ``a`` (rows share per-feature
    bounds); +/-inf entries disable the corresponding side.
    """
    a = _wrap(a)
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    data = np.clip(a.data, lower, upper)

    def build():
        mask = (a.data >= lower) & (a.data <= upper)
        return lambda g: [(a, g * mask)]

    return _result(data, (a,), build, "clip_box")


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------

def tsum(a, axis=None):
    a = _wrap(a)
    data = a.data.sum(axis=axis)

    def build():
        def back(g):
            if axis is None:
                return [(a, np.full(a.shape, g, dtype=np.float64))]
            return [(a, np.broadcast_to(np.expand_dims(g, axis), a.shape).copy())]

        return back

    return _result(data, (a,), build, "sum")


def tmean(a, axis=None):
    a = _wrap(a)
    data = a.data.mean(axis=axis)
    count = a.data.size if axis is None else a.shape[axis]

    def build():
        def back(g):
            if axis is None:
                return [(a, np.full(a.shape, g / count, dtype=np.float64))]
            return [
                (a, np.broadcast_to(np.expand_dims(g / count, axis), a.shape).copy())
            ]

        return back

    return _result(data, (a,), build, "mean")


def tmax(a, axis=None):
    """Maximum along an axis; ties share the gradient equally."""
    a = _wrap(a)
    data = a.data.max(axis=axis)

    def build():
        if axis is None:
            mask = (a.data == data).astype(np.float64)
        else:
            mask = (a.data == np.expand_dims(data, axis)).astype(np.float64)
        counts = mask.sum(axis=axis, keepdims=axis is not None)
        if axis is None:
            counts = mask.sum()
        mask = mask / counts

        def back(g):
            if axis is None:
                return [(a, mask * g)]
            return [(a, mask * np.expand_dims(g, axis))]

        return back

    return _result(data, (a,), build, "max")


def l2_norm_rows(a):
    """Row-wise Euclidean norms of a 2-d tensor; zero rows get zero gradient."""
    a = _wrap(a)
    if a.ndim != 2:
        raise DimensionError("l2_norm_rows expects a 2-d tensor")
    data = np.sqrt((a.data * a.data).sum(axis=1))

    def build():
        def back(g):
            safe = np.where(data > 0.0, data, 1.0)
            grad = (g / safe)[:, None] * a.data
            grad[data == 0.0] = 0.0
            return [(a, grad)]

        return back

    return _result(data, (a,), build, "l2_norm_rows")


def l1_norm_rows(a):
    """Row-wise Manhattan norms of a 2-d tensor; sign(0) contributes zero."""
    a = _wrap(a)
    if a.ndim != 2:
        raise DimensionError("l1_norm_rows expects a 2-d tensor")
    data = np.abs(a.data).sum(axis=1)

    def build():
        return lambda g: [(a, g[:, None] * np.sign(a.data))]

    return _result(data, (a,), build, "l1_norm_rows")


# ---------------------------------------------------------------------------
# softmax / sparsemax
# ---------------------------------------------------------------------------

def softmax(a, axis=-1):
    a = _wrap(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def build():
        def back(g):
            inner = (g * data).sum(axis=axis, keepdims=True)
            return [(a, data * (g - inner))]

        return back

    return _result(data, (a,), build, "softmax")


def log_softmax(a, axis=-1):
    """Row-wise log-softmax; composed from primitives, stable via a detached
    row maximum (which cancels exactly in the gradient)."""
    a = _wrap(a)
    if a.ndim != 2 or axis not in (1, -1):
        raise DimensionError("log_softmax expects a 2-d tensor over rows")
    rowmax = a.data.max(axis=1, keepdims=True)
    shifted = sub(a, Tensor(np.broadcast_to(rowmax, a.shape).copy()))
    lse = log(tsum(exp(shifted), axis=1))
    ones_row = Tensor(np.ones((1, a.shape[1])))
    return sub(shifted, matmul(reshape(lse, (-1, 1)), ones_row))


def _sparsemax_forward(z):
    """Row-wise Euclidean projection onto the probability simplex."""
    z = np.atleast_2d(z)
    k = z.shape[1]
    z_sorted = -np.sort(-z, axis=1)
    cumsum = np.cumsum(z_sorted, axis=1)
    idx = np.arange(1, k + 1, dtype=np.float64)
    support = (1.0 + idx * z_sorted > cumsum).sum(axis=1)
    tau = (cumsum[np.arange(z.shape[0]), support - 1] - 1.0) / support
    return np.maximum(z - tau[:, None], 0.0)


def sparsemax(a):
    """Sparsemax over rows: argmin_{p in simplex} ||p - z||^2.

    Support is the largest j with 1 + j*z_(j) > sum_{i<=j} z_(i) on the
    descending sort; the backward rule routes gradients through the support
    with its mean removed.
    """
    a = _wrap(a)
    squeeze = a.ndim == 1
    z = np.atleast_2d(a.data)
    p = _sparsemax_forward(z)
    data = p[0] if squeeze else p

    def build():
        supp = p > 0.0
        sizes = supp.sum(axis=1, keepdims=True).astype(np.float64)

        def back(g):
            g2 = np.atleast_2d(g)
            inner = (g2 * supp).sum(axis=1, keepdims=True) / sizes
            grad = np.where(supp, g2 - inner, 0.0)
            return [(a, grad[0] if squeeze else grad)]

        return back

    return _result(data, (a,), build, "sparsemax")


# ---------------------------------------------------------------------------
# Cholesky log-determinant
# ---------------------------------------------------------------------------

def cholesky_logdet(a):
    """log det of a symmetric positive-definite matrix via Cholesky.

    Gradient with respect to the SPD input is its inverse, so for
    M = A A^T + eps*I the chained gradient in A is 2 M^{-1} A.
    """
    a = _wrap(a)
    m = a.data
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError("cholesky_logdet expects a square matrix")
    scale = max(1.0, np.abs(m).max())
    if np.abs(m - m.T).max() > 1e-8 * scale:
        raise DecompositionError("cholesky_logdet: input matrix is not symmetric")
    try:
        chol = np.linalg.cholesky(m)
    except np.linalg.LinAlgError as err:
        raise DecompositionError(
            "cholesky_logdet: matrix not positive definite "
            "(jitter too small or degenerate input)"
        ) from err
    data = 2.0 * np.log(np.diag(chol)).sum()

    def build():
        def back(g):
            inv = np.linalg.inv(m)
            return [(a, g * 0.5 * (inv + inv.T))]

        return back

    return _result(data, (a,), build, "cholesky_logdet")


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------

def backward(loss):
    """Accumulate d(loss)/d(leaf) into every requires_grad leaf.

    ``loss`` must be scalar. Repeated calls without clearing gradients
    accumulate additively.
    """
    if not isinstance(loss, Tensor):
        raise TypeError("backward expects a Tensor")
    if loss.data.size != 1:
        raise DimensionError(
            f"backward expects a scalar loss, got shape {loss.shape}"
        )
    if not loss.requires_grad:
        return

    topo = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))

    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(topo):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            # leaf: accumulate
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in node._backward(g):
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
