"""Reverse-mode autodiff over fp32 numpy arrays.

A deliberately small op set: exactly what the segmentation pipeline needs
(dense linear algebra, convolutions, the usual pointwise nonlinearities,
softmax and layernorm). Everything is float32 end to end so the
finite-difference gradient checker stays meaningful.

Graph model: each `Tensor` produced by an op keeps a closure that scatters
its output gradient back into its parents. `backward()` runs the closures
in reverse topological order. Gradients accumulate by plain `+=` in fp32.
"""

from __future__ import annotations

import math
from typing import Callable, Optional, Sequence

import numpy as np

from ..errors import DimensionError, NumericError

__all__ = ["Tensor", "as_f32", "concat", "stack_rows"]

_F32 = np.float32

# tanh-approximation constants for GELU
_GELU_C0 = math.sqrt(2.0 / math.pi)
_GELU_C1 = 0.044715


def as_f32(values) -> np.ndarray:
    """Coerce arbitrary array-likes to a contiguous float32 ndarray."""
    arr = np.asarray(values, dtype=_F32)
    return np.ascontiguousarray(arr)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.astype(_F32, copy=False)


class Tensor:
    """Dense fp32 array, row-major, with an optional gradient of the same shape."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = as_f32(data)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward: Optional[Callable[[np.ndarray], None]] = None

    # -- structure -------------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, grad={'set' if self.grad is not None else 'none'})"

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, grad: np.ndarray) -> None:
        if not self.requires_grad:
            return
        grad = grad.astype(_F32, copy=False)
        if self.grad is None:
            self.grad = grad.copy()
        else:
            self.grad += grad

    # -- graph plumbing ---------------------------------------------------

    @staticmethod
    def _make(data: np.ndarray, parents: Sequence["Tensor"],
              backward: Callable[[np.ndarray], None]) -> "Tensor":
        out = Tensor.__new__(Tensor)
        out.data = data.astype(_F32, copy=False)
        out.grad = None
        out.requires_grad = any(p.requires_grad for p in parents)
        if out.requires_grad:
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    def backward(self) -> None:
        """Backpropagate from a scalar tensor through the recorded graph."""
        if self.data.size != 1:
            raise DimensionError(
                f"backward() requires a scalar, got shape {self.data.shape}")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen and parent.requires_grad:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- arithmetic -------------------------------------------------------

    def __add__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        a, b = self, other
        out_data = a.data + b.data

        def bwd(g):
            a._accumulate(_unbroadcast(g, a.data.shape))
            b._accumulate(_unbroadcast(g, b.data.shape))

        return Tensor._make(out_data, (a, b), bwd)

    __radd__ = __add__

    def __neg__(self):
        a = self

        def bwd(g):
            a._accumulate(-g)

        return Tensor._make(-a.data, (a,), bwd)

    def __sub__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        a, b = self, other
        out_data = a.data - b.data

        def bwd(g):
            a._accumulate(_unbroadcast(g, a.data.shape))
            b._accumulate(_unbroadcast(-g, b.data.shape))

        return Tensor._make(out_data, (a, b), bwd)

    def __rsub__(self, other):
        return Tensor(other).__sub__(self)

    def __mul__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        a, b = self, other
        out_data = a.data * b.data

        def bwd(g):
            a._accumulate(_unbroadcast(g * b.data, a.data.shape))
            b._accumulate(_unbroadcast(g * a.data, b.data.shape))

        return Tensor._make(out_data, (a, b), bwd)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        a, b = self, other
        out_data = a.data / b.data

        def bwd(g):
            a._accumulate(_unbroadcast(g / b.data, a.data.shape))
            b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

        return Tensor._make(out_data, (a, b), bwd)

    def pow(self, exponent: float):
        a = self
        e = float(exponent)
        out_data = a.data ** _F32(e)

        def bwd(g):
            a._accumulate(g * _F32(e) * a.data ** _F32(e - 1.0))

        return Tensor._make(out_data, (a,), bwd)

    def __matmul__(self, other):
        a, b = self, other
        out_data = a.data @ b.data

        def bwd(g):
            if a.requires_grad:
                a._accumulate(g @ np.swapaxes(b.data, -1, -2))
            if b.requires_grad:
                b._accumulate(np.swapaxes(a.data, -1, -2) @ g)

        return Tensor._make(out_data, (a, b), bwd)

    # -- reductions -------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        a = self
        out_data = a.data.sum(axis=axis, keepdims=keepdims, dtype=_F32)

        def bwd(g):
            gg = np.asarray(g)
            if axis is not None and not keepdims:
                gg = np.expand_dims(gg, axis)
            a._accumulate(np.broadcast_to(gg, a.data.shape).astype(_F32))

        return Tensor._make(np.asarray(out_data), (a,), bwd)

    def mean(self, axis=None, keepdims: bool = False):
        if axis is None:
            count = self.data.size
        else:
            axes = axis if isinstance(axis, tuple) else (axis,)
            count = int(np.prod([self.data.shape[ax] for ax in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    # -- shape ops --------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a = self
        out_data = a.data.reshape(shape)

        def bwd(g):
            a._accumulate(g.reshape(a.data.shape))

        return Tensor._make(out_data, (a,), bwd)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if not axes:
            axes = tuple(range(self.data.ndim))[::-1]
        a = self
        out_data = np.ascontiguousarray(a.data.transpose(axes))
        inverse = np.argsort(axes)

        def bwd(g):
            a._accumulate(g.transpose(inverse))

        return Tensor._make(out_data, (a,), bwd)

    def __getitem__(self, key):
        a = self
        out_data = np.array(a.data[key], dtype=_F32)

        def bwd(g):
            full = np.zeros_like(a.data)
            full[key] = g
            a._accumulate(full)

        return Tensor._make(out_data, (a,), bwd)

    # -- pointwise nonlinearities ------------------------------------------

    def relu(self):
        a = self
        out_data = np.maximum(a.data, _F32(0.0))

        def bwd(g):
            a._accumulate(g * (a.data > 0))

        return Tensor._make(out_data, (a,), bwd)

    def gelu(self):
        """GELU, tanh approximation: 0.5*x*(1+tanh(c0*(x+c1*x^3)))."""
        a = self
        x = a.data
        inner = _F32(_GELU_C0) * (x + _F32(_GELU_C1) * x * x * x)
        t = np.tanh(inner)
        out_data = _F32(0.5) * x * (_F32(1.0) + t)

        def bwd(g):
            sech2 = _F32(1.0) - t * t
            dinner = _F32(_GELU_C0) * (_F32(1.0) + _F32(3.0 * _GELU_C1) * x * x)
            da = _F32(0.5) * (_F32(1.0) + t) + _F32(0.5) * x * sech2 * dinner
            a._accumulate(g * da)

        return Tensor._make(out_data, (a,), bwd)

    def tanh(self):
        a = self
        t = np.tanh(a.data)

        def bwd(g):
            a._accumulate(g * (_F32(1.0) - t * t))

        return Tensor._make(t, (a,), bwd)

    def sigmoid(self):
        a = self
        x = a.data
        out_data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-x)),
                            np.exp(x) / (1.0 + np.exp(x))).astype(_F32)

        def bwd(g):
            a._accumulate(g * out_data * (_F32(1.0) - out_data))

        return Tensor._make(out_data, (a,), bwd)

    def log_sigmoid(self):
        """log(sigmoid(x)) via the stable -softplus(-x) form."""
        a = self
        x = a.data
        out_data = np.where(x >= 0, -np.log1p(np.exp(-x)),
                            x - np.log1p(np.exp(x))).astype(_F32)
        sig = np.where(x >= 0, 1.0 / (1.0 + np.exp(-x)),
                       np.exp(x) / (1.0 + np.exp(x))).astype(_F32)

        def bwd(g):
            a._accumulate(g * (_F32(1.0) - sig))

        return Tensor._make(out_data, (a,), bwd)

    def exp(self):
        a = self
        out_data = np.exp(a.data)

        def bwd(g):
            a._accumulate(g * out_data)

        return Tensor._make(out_data, (a,), bwd)

    def log(self):
        a = self
        out_data = np.log(a.data)

        def bwd(g):
            a._accumulate(g / a.data)

        return Tensor._make(out_data, (a,), bwd)

    def clip(self, lo: float, hi: float):
        """Clamp values; gradient passes through strictly inside (lo, hi) only."""
        a = self
        out_data = np.clip(a.data, _F32(lo), _F32(hi))
        inside = (a.data > lo) & (a.data < hi)

        def bwd(g):
            a._accumulate(g * inside)

        return Tensor._make(out_data, (a,), bwd)

    # -- normalization / attention helpers ---------------------------------

    def softmax(self, axis: int = -1):
        a = self
        shifted = a.data - a.data.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        out_data = e / e.sum(axis=axis, keepdims=True)

        def bwd(g):
            dot = (g * out_data).sum(axis=axis, keepdims=True)
            a._accumulate(out_data * (g - dot))

        return Tensor._make(out_data, (a,), bwd)

    def layernorm(self, gamma: "Tensor", beta: "Tensor", eps: float = 1e-5):
        """Normalize over the last axis, then scale and shift."""
        a = self
        x = a.data
        mu = x.mean(axis=-1, keepdims=True, dtype=_F32)
        xc = x - mu
        var = (xc * xc).mean(axis=-1, keepdims=True, dtype=_F32)
        inv = _F32(1.0) / np.sqrt(var + _F32(eps))
        xhat = xc * inv
        out_data = xhat * gamma.data + beta.data

        def bwd(g):
            if gamma.requires_grad:
                axes = tuple(range(g.ndim - 1))
                gamma._accumulate((g * xhat).sum(axis=axes))
            if beta.requires_grad:
                axes = tuple(range(g.ndim - 1))
                beta._accumulate(g.sum(axis=axes))
            if a.requires_grad:
                gx = g * gamma.data
                m1 = gx.mean(axis=-1, keepdims=True, dtype=_F32)
                m2 = (gx * xhat).mean(axis=-1, keepdims=True, dtype=_F32)
                a._accumulate(inv * (gx - m1 - xhat * m2))

        return Tensor._make(out_data, (a, gamma, beta), bwd)

    # -- convolutions -------------------------------------------------------

    def conv2d(self, weight: "Tensor", bias: Optional["Tensor"] = None,
               stride: int = 1, padding: int = 0):
        """2-D convolution of a [Cin,H,W] input with an [Cout,Cin,k,k] kernel."""
        a, w = self, weight
        if a.data.ndim != 3:
            raise DimensionError(f"conv2d input must be [C,H,W], got shape {a.data.shape}")
        if w.data.ndim != 4 or w.data.shape[2] != w.data.shape[3]:
            raise DimensionError(f"conv2d weight must be [Cout,Cin,k,k], got shape {w.data.shape}")
        cin, h, wi = a.data.shape
        cout, wcin, k, _ = w.data.shape
        if wcin != cin:
            raise DimensionError(
                f"conv2d channel axis mismatch: input has {cin} channels, weight expects {wcin}")
        if stride < 1:
            raise DimensionError(f"conv2d stride must be >= 1, got {stride}")
        if k > h + 2 * padding or k > wi + 2 * padding:
            raise DimensionError(
                f"conv2d kernel {k} exceeds padded spatial axes ({h + 2 * padding}, {wi + 2 * padding})")
        ho = (h + 2 * padding - k) // stride + 1
        wo = (wi + 2 * padding - k) // stride + 1

        xp = np.pad(a.data, ((0, 0), (padding, padding), (padding, padding))) if padding else a.data
        windows = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(1, 2))
        windows = windows[:, ::stride, ::stride]          # [Cin, Ho, Wo, k, k]
        col = np.ascontiguousarray(windows.transpose(0, 3, 4, 1, 2))
        col = col.reshape(cin * k * k, ho * wo)           # [Cin*k*k, Ho*Wo]
        wmat = w.data.reshape(cout, cin * k * k)
        out_data = wmat @ col
        if bias is not None:
            out_data = out_data + bias.data[:, None]
        out_data = out_data.reshape(cout, ho, wo)
        parents = (a, w) if bias is None else (a, w, bias)

        def bwd(g):
            gmat = g.reshape(cout, ho * wo)
            if bias is not None and bias.requires_grad:
                bias._accumulate(gmat.sum(axis=1))
            if w.requires_grad:
                w._accumulate((gmat @ col.T).reshape(w.data.shape))
            if a.requires_grad:
                gcol = (wmat.T @ gmat).reshape(cin, k, k, ho, wo)
                gxp = np.zeros((cin, h + 2 * padding, wi + 2 * padding), dtype=_F32)
                for ki in range(k):
                    for kj in range(k):
                        gxp[:, ki:ki + stride * ho:stride,
                            kj:kj + stride * wo:stride] += gcol[:, ki, kj]
                if padding:
                    gxp = gxp[:, padding:padding + h, padding:padding + wi]
                a._accumulate(np.ascontiguousarray(gxp))

        return Tensor._make(out_data, parents, bwd)

    def conv_transpose2d(self, weight: "Tensor", bias: Optional["Tensor"] = None,
                         factor: int = 2):
        """Transposed convolution with kernel == stride == `factor` (block upsampling).

        Input [Cin,H,W], weight [Cin,Cout,f,f] -> output [Cout,H*f,W*f].
        """
        a, w = self, weight
        if a.data.ndim != 3:
            raise DimensionError(f"conv_transpose2d input must be [C,H,W], got {a.data.shape}")
        cin, h, wi = a.data.shape
        if w.data.shape[0] != cin or w.data.shape[2] != factor or w.data.shape[3] != factor:
            raise DimensionError(
                f"conv_transpose2d weight {w.data.shape} incompatible with input channels "
                f"{cin} and factor {factor}")
        cout = w.data.shape[1]
        # out[o, i*f+p, j*f+q] = sum_c x[c,i,j] * w[c,o,p,q]
        t = np.tensordot(w.data, a.data, axes=([0], [0]))   # [Cout, f, f, H, W]
        out_data = np.ascontiguousarray(t.transpose(0, 3, 1, 4, 2)).reshape(
            cout, h * factor, wi * factor)
        if bias is not None:
            out_data = out_data + bias.data[:, None, None]
        parents = (a, w) if bias is None else (a, w, bias)

        def bwd(g):
            g5 = g.reshape(cout, h, factor, wi, factor)
            if bias is not None and bias.requires_grad:
                bias._accumulate(g.sum(axis=(1, 2)))
            if w.requires_grad:
                # gw[c,o,p,q] = sum_{i,j} x[c,i,j] * g[o,i*f+p,j*f+q]
                gw = np.tensordot(a.data, g5, axes=([1, 2], [1, 3]))  # [Cin,Cout,f,f]
                w._accumulate(gw)
            if a.requires_grad:
                # gx[c,i,j] = sum_{o,p,q} g[o,i*f+p,j*f+q] * w[c,o,p,q]
                gx = np.tensordot(w.data, g5, axes=([1, 2, 3], [0, 2, 4]))  # [Cin,H,W]
                a._accumulate(gx)

        return Tensor._make(out_data, parents, bwd)

    # -- checks -------------------------------------------------------------

    def require_finite(self, what: str = "tensor") -> "Tensor":
        if not np.all(np.isfinite(self.data)):
            raise NumericError(f"non-finite values in {what}")
        return self


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Concatenate tensors along `axis`."""
    parts = list(tensors)
    out_data = np.concatenate([t.data for t in parts], axis=axis)
    sizes = [t.data.shape[axis] for t in parts]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for t, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(int(lo), int(hi))
                t._accumulate(np.ascontiguousarray(g[tuple(idx)]))

    return Tensor._make(out_data, tuple(parts), bwd)


def stack_rows(tensors: Sequence[Tensor]) -> Tensor:
    """Stack 1-D tensors into a 2-D tensor, one per row."""
    return concat([t.reshape(1, -1) for t in tensors], axis=0)
