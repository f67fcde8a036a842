"""Scalar reverse-mode tape and second-order input jets.

Two cooperating pieces:

* ``Jet2`` carries a scalar field value together with its first and second
  partial derivatives w.r.t. the two spatial inputs.  Jets propagate through
  affine layers and activations by the chain rule, so a forward pass yields
  u, u_x, u_y, u_xx, u_xy, u_yy without nested differentiation.

* ``Tape``/``Var`` record every primitive operation applied to parameters.
  Because each jet component is itself a recorded function of the parameters,
  one reverse sweep gives exact parameter gradients of any scalar built from
  jet components -- including PDE residuals with second spatial derivatives.

Values on a tape are either python floats or 1-D numpy arrays over a batch of
evaluation points; all primitive operations are elementwise in the batch, so
a single reverse sweep can also produce per-point gradients (one gradient row
per batch element) as long as no batch reduction sits on the output path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy.special import erf

from .errors import ContractViolation

Scalar = Union[float, np.ndarray]

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


# --------------------------------------------------------------------------
# activations: value plus derivatives up to third order
# --------------------------------------------------------------------------

def _std_normal_cdf(z):
    return 0.5 * (1.0 + erf(z * _INV_SQRT2))


def _std_normal_pdf(z):
    return np.exp(-0.5 * z * z) * _INV_SQRT_2PI


def gelu_d0(z):
    """Exact GELU, g(z) = z * Phi(z) with the erf-based normal CDF."""
    return z * _std_normal_cdf(z)


def gelu_d1(z):
    return _std_normal_cdf(z) + z * _std_normal_pdf(z)


def gelu_d2(z):
    return _std_normal_pdf(z) * (2.0 - z * z)


def gelu_d3(z):
    return _std_normal_pdf(z) * (z * z * z - 4.0 * z)


def _tanh_d0(z):
    return np.tanh(z)


def _tanh_d1(z):
    t = np.tanh(z)
    return 1.0 - t * t


def _tanh_d2(z):
    t = np.tanh(z)
    return -2.0 * t * (1.0 - t * t)


def _tanh_d3(z):
    t = np.tanh(z)
    return -2.0 * (1.0 - t * t) * (1.0 - 3.0 * t * t)


#: kind -> (g, g', g'', g''')
ACTIVATIONS = {
    "gelu": (gelu_d0, gelu_d1, gelu_d2, gelu_d3),
    "tanh": (_tanh_d0, _tanh_d1, _tanh_d2, _tanh_d3),
    "identity": (lambda z: z, lambda z: 1.0, lambda z: 0.0, lambda z: 0.0),
}


# --------------------------------------------------------------------------
# tape
# --------------------------------------------------------------------------

class Var:
    """Handle to one node on a tape."""

    __slots__ = ("tape", "index", "val")

    def __init__(self, tape: "Tape", index: int, val: Scalar):
        self.tape = tape
        self.index = index
        self.val = val

    # arithmetic; non-Var operands are constants and leave no adjoint trail
    def __add__(self, other):
        if isinstance(other, Var):
            return self.tape._record(self.val + other.val,
                                     (self.index, other.index), (1.0, 1.0))
        if _is_zero(other):
            return self
        return self.tape._record(self.val + other, (self.index,), (1.0,))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Var):
            return self.tape._record(self.val - other.val,
                                     (self.index, other.index), (1.0, -1.0))
        if _is_zero(other):
            return self
        return self.tape._record(self.val - other, (self.index,), (1.0,))

    def __rsub__(self, other):
        return self.tape._record(other - self.val, (self.index,), (-1.0,))

    def __neg__(self):
        return self.tape._record(-self.val, (self.index,), (-1.0,))

    def __mul__(self, other):
        if isinstance(other, Var):
            return self.tape._record(self.val * other.val,
                                     (self.index, other.index),
                                     (other.val, self.val))
        if _is_zero(other):
            return 0.0
        return self.tape._record(self.val * other, (self.index,), (other,))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Var):
            inv = 1.0 / other.val
            return self.tape._record(self.val * inv,
                                     (self.index, other.index),
                                     (inv, -self.val * inv * inv))
        return self.__mul__(1.0 / other)

    def __pow__(self, exponent):
        if exponent != 2:
            raise NotImplementedError("only squaring is supported")
        return self * self


def _is_zero(c) -> bool:
    return np.ndim(c) == 0 and float(c) == 0.0


class Tape:
    """Ordered record of primitive operations over parameter leaves.

    Single-evaluation: record once, sweep as often as needed.  Not shareable
    between threads during recording.
    """

    def __init__(self):
        self._vals: list = []
        self._parents: list = []   # tuple[int, ...] per node; () for leaves
        self._partials: list = []  # matching local partials
        self._is_sum: list = []    # batch-reduction markers
        self._param_indices: list[int] = []

    def __len__(self) -> int:
        return len(self._vals)

    # -- construction -------------------------------------------------------

    def _record(self, val, parents, partials, is_sum=False) -> Var:
        i = len(self._vals)
        self._vals.append(val)
        self._parents.append(parents)
        self._partials.append(partials)
        self._is_sum.append(is_sum)
        return Var(self, i, val)

    def register_params(self, values: np.ndarray) -> list[Var]:
        """Create one leaf per parameter; gradient vectors follow this order."""
        out = []
        for v in np.asarray(values, dtype=np.float64):
            var = self._record(float(v), (), ())
            self._param_indices.append(var.index)
            out.append(var)
        return out

    def constant(self, value: Scalar) -> Scalar:
        """Constants are not recorded; provided for call-site symmetry."""
        return value

    def affine(self, xs: Sequence, ws: Sequence, bias=None) -> Scalar:
        """Fused sum(w_k * x_k) + bias over mixed Var/constant operands.

        Returns a plain value when nothing differentiable participates.
        """
        if len(xs) != len(ws):
            raise ContractViolation(
                f"affine: {len(xs)} inputs vs {len(ws)} weights")
        value = 0.0
        parents: list[int] = []
        partials: list = []
        for x, w in zip(xs, ws):
            xv = x.val if isinstance(x, Var) else x
            wv = w.val if isinstance(w, Var) else w
            value = value + wv * xv
            if isinstance(x, Var):
                parents.append(x.index)
                partials.append(wv)
            if isinstance(w, Var):
                parents.append(w.index)
                partials.append(xv)
        if bias is not None:
            bv = bias.val if isinstance(bias, Var) else bias
            value = value + bv
            if isinstance(bias, Var):
                parents.append(bias.index)
                partials.append(1.0)
        if not parents:
            return value
        return self._record(value, tuple(parents), tuple(partials))

    def unary(self, x: Var, fn, dfn) -> Var:
        """Record y = fn(x) with local partial dfn evaluated at x."""
        return self._record(fn(x.val), (x.index,), (dfn(x.val),))

    def sqrt(self, x: Var) -> Var:
        root = np.sqrt(x.val)
        safe = np.where(root > 0.0, root, 1.0)
        return self._record(root, (x.index,), (0.5 / safe,))

    def batch_sum(self, x: Var) -> Var:
        """Reduce a batch-valued node to a scalar total."""
        return self._record(float(np.sum(x.val)), (x.index,), (1.0,),
                            is_sum=True)

    # -- reverse sweeps ------------------------------------------------------

    def _sweep(self, output: Var, seed, allow_reduction: bool):
        if output.tape is not self:
            raise ContractViolation("output was recorded on a different tape")
        adj: list = [None] * len(self._vals)
        adj[output.index] = seed
        parents = self._parents
        partials = self._partials
        is_sum = self._is_sum
        for i in range(output.index, -1, -1):
            a = adj[i]
            if a is None:
                continue
            if is_sum[i] and not allow_reduction:
                raise ContractViolation(
                    "per-point sweep crossed a batch reduction")
            ps = parents[i]
            if not ps:
                continue
            qs = partials[i]
            for p, q in zip(ps, qs):
                c = q * a
                prev = adj[p]
                adj[p] = c if prev is None else prev + c
        return adj

    def grad(self, output: Var) -> np.ndarray:
        """Exact reverse-mode gradient of a scalar output w.r.t. all params.

        Parameters not reachable from the output get gradient 0.
        """
        adj = self._sweep(output, 1.0, allow_reduction=True)
        g = np.empty(len(self._param_indices), dtype=np.float64)
        for j, pi in enumerate(self._param_indices):
            a = adj[pi]
            g[j] = 0.0 if a is None else float(np.sum(a))
        return g

    def grad_per_point(self, output: Var) -> np.ndarray:
        """Jacobian of a batch-valued output w.r.t. params, shape (n, P).

        Row i is the gradient of output element i.  Valid because every op on
        the path is elementwise in the batch; reductions raise.
        """
        n = np.shape(output.val)[0]
        adj = self._sweep(output, np.ones(n), allow_reduction=False)
        jac = np.zeros((n, len(self._param_indices)), dtype=np.float64)
        for j, pi in enumerate(self._param_indices):
            a = adj[pi]
            if a is not None:
                jac[:, j] = a
        return jac


def grad(output: Var, tape: Tape) -> np.ndarray:
    if not isinstance(output, Var) or output.tape is not tape:
        raise ContractViolation("scalar output is not a node of this tape")
    return tape.grad(output)


# --------------------------------------------------------------------------
# jets
# --------------------------------------------------------------------------

@dataclass
class Jet2:
    """Value and spatial derivatives to second order: v, x, y, xx, xy, yy."""

    v: Scalar
    dx: Scalar = 0.0
    dy: Scalar = 0.0
    dxx: Scalar = 0.0
    dxy: Scalar = 0.0
    dyy: Scalar = 0.0

    def components(self):
        return (self.v, self.dx, self.dy, self.dxx, self.dxy, self.dyy)

    def values(self) -> "Jet2":
        """Strip tape handles, keeping raw numbers."""
        return Jet2(*(c.val if isinstance(c, Var) else c
                      for c in self.components()))


def seed_x(x: Scalar) -> Jet2:
    """Jet of the x coordinate itself: v = x, dx = 1."""
    return Jet2(v=np.float64(x) if np.ndim(x) == 0 else
                np.asarray(x, dtype=np.float64), dx=1.0)


def seed_y(y: Scalar) -> Jet2:
    return Jet2(v=np.float64(y) if np.ndim(y) == 0 else
                np.asarray(y, dtype=np.float64), dy=1.0)


def jet_linear(inputs: Sequence[Jet2], weights: Sequence, bias) -> Jet2:
    """Affine combination of jets; the bias feeds only the value component."""
    if len(inputs) != len(weights):
        raise ContractViolation(
            f"jet_linear: {len(inputs)} inputs vs {len(weights)} weights")
    tape = _find_tape(weights) or _find_tape(
        c for j in inputs for c in j.components())

    def combine(comps, b):
        if tape is not None:
            return tape.affine(comps, weights, b)
        value = sum(w * c for w, c in zip(weights, comps))
        return value + b if b is not None else value

    vs, dxs, dys, dxxs, dxys, dyys = zip(*(j.components() for j in inputs))
    return Jet2(
        v=combine(vs, bias),
        dx=_combine_or_zero(combine, dxs),
        dy=_combine_or_zero(combine, dys),
        dxx=_combine_or_zero(combine, dxxs),
        dxy=_combine_or_zero(combine, dxys),
        dyy=_combine_or_zero(combine, dyys),
    )


def _combine_or_zero(combine, comps):
    # all-zero constant columns stay constant zero instead of dead tape nodes
    if all(not isinstance(c, Var) and _is_zero(c) for c in comps):
        return 0.0
    return combine(comps, None)


def _find_tape(items):
    for it in items:
        if isinstance(it, Var):
            return it.tape
    return None


def jet_activation(jet: Jet2, act: str) -> Jet2:
    """Apply an activation to a jet by Faa di Bruno up to second order."""
    try:
        f0, f1, f2, f3 = ACTIVATIONS[act]
    except KeyError:
        raise ContractViolation(f"unknown activation kind {act!r}") from None
    if act == "identity":
        return jet
    v = jet.v
    if isinstance(v, Var):
        tape = v.tape
        g0 = tape.unary(v, f0, f1)
        g1 = tape.unary(v, f1, f2)
        g2 = tape.unary(v, f2, f3)
    else:
        g0, g1, g2 = f0(v), f1(v), f2(v)
    dx, dy = jet.dx, jet.dy
    return Jet2(
        v=g0,
        dx=g1 * dx,
        dy=g1 * dy,
        dxx=g2 * (dx * dx) + g1 * jet.dxx,
        dxy=g2 * (dx * dy) + g1 * jet.dxy,
        dyy=g2 * (dy * dy) + g1 * jet.dyy,
    )
