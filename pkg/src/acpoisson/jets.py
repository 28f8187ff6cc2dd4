"""Second-order forward-mode jets.

A :class:`Jet` carries the value of an array-valued quantity together with
its first and second partial derivatives with respect to ``n`` input
variables.  Derivative axes are *leading*:

* ``v`` has shape ``S`` (the value shape, batch axis first by convention),
* ``g`` has shape ``(n,) + S``,
* ``h`` has shape ``(n, n) + S``.

Truncating the tower after ``g`` gives an order-1 jet, dropping ``g`` too
gives an order-0 jet.  Arithmetic follows the product and chain rules
exactly, so the propagated derivatives agree with nested dual numbers of
depth two.  Plain numpy arrays and floats act as constants.

Functions in this module accept either jets or plain numbers, which keeps
user-supplied field formulas agnostic of the evaluation mode.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Jet",
    "seed",
    "constant_like",
    "stack",
    "assemble",
    "bilinear",
    "matmul",
    "einsum",
    "inv",
    "compose",
    "partials",
    "sin",
    "cos",
    "exp",
    "log",
    "sqrt",
    "tanh",
    "primitive",
    "value",
    "order_of",
    "fd_jet",
]


def _as_array(x):
    return np.asarray(x, dtype=float)


class Jet:
    """Value with first and second derivatives along leading axes.

    Parameters
    ----------
    v : array_like
        Value array of shape ``S``.
    g : array_like, optional
        First derivatives, shape ``(n,) + S``.
    h : array_like, optional
        Second derivatives, shape ``(n, n) + S``.  Requires ``g``.
    is_seed : bool
        True when the jet is the identity jet of the input coordinates, so
        that derivatives are taken with respect to the value itself.
    """

    __slots__ = ("v", "g", "h", "is_seed")
    __array_ufunc__ = None

    def __init__(self, v, g=None, h=None, is_seed=False):
        self.v = _as_array(v)
        self.g = None if g is None else _as_array(g)
        self.h = None if (h is None or g is None) else _as_array(h)
        self.is_seed = is_seed

    # ------------------------------------------------------------------
    # basic attributes
    @property
    def order(self) -> int:
        if self.g is None:
            return 0
        return 1 if self.h is None else 2

    @property
    def nvar(self) -> int:
        return 0 if self.g is None else self.g.shape[0]

    @property
    def shape(self):
        return self.v.shape

    @property
    def ndim(self):
        return self.v.ndim

    def __repr__(self):
        return f"Jet(shape={self.v.shape}, order={self.order}, nvar={self.nvar})"

    def truncate(self, order: int) -> "Jet":
        """Drop derivative levels above ``order``."""
        if order >= self.order:
            return self
        if order == 0:
            return Jet(self.v)
        return Jet(self.v, self.g, is_seed=self.is_seed)

    def _parts(self):
        return [a for a in (self.v, self.g, self.h) if a is not None]

    def _map(self, fn):
        """Apply a linear map acting on value axes to every level."""
        return Jet(
            fn(self.v, 0),
            None if self.g is None else fn(self.g, 1),
            None if self.h is None else fn(self.h, 2),
        )

    # ------------------------------------------------------------------
    # shape manipulations on the value axes
    def _neg_axis(self, axis: int, ndim: int | None = None) -> int:
        nd = self.v.ndim if ndim is None else ndim
        return axis - nd if axis >= 0 else axis

    def __getitem__(self, key):
        if not isinstance(key, tuple):
            key = (key,)

        def fn(a, lead):
            return a[(slice(None),) * lead + key]

        return self._map(fn)

    def batch_slice(self, start: int, stop: int) -> "Jet":
        """Slice along the first value axis, keeping the seed flag."""
        out = self[start:stop]
        out.is_seed = self.is_seed
        return out

    def sum(self, axis=None):
        if axis is None:
            axes = tuple(range(-self.v.ndim, 0))
        elif isinstance(axis, tuple):
            axes = tuple(self._neg_axis(a) for a in axis)
        else:
            axes = (self._neg_axis(axis),)
        return self._map(lambda a, lead: a.sum(axis=axes))

    def moveaxis(self, src, dst):
        src = self._neg_axis(src)
        dst = self._neg_axis(dst)
        return self._map(lambda a, lead: np.moveaxis(a, src, dst))

    def swapaxes(self, a1, a2):
        a1 = self._neg_axis(a1)
        a2 = self._neg_axis(a2)
        return self._map(lambda a, lead: np.swapaxes(a, a1, a2))

    def transpose_last(self):
        """Swap the two trailing value axes (matrix transpose)."""
        return self.swapaxes(-1, -2)

    @property
    def T(self):
        return self.transpose_last()

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return self._map(lambda a, lead: a.reshape(a.shape[:lead] + tuple(shape)))

    def expand_dims(self, axis):
        ax = self._neg_axis(axis, self.v.ndim + 1)
        return self._map(lambda a, lead: np.expand_dims(a, ax))

    def broadcast_to(self, shape):
        shape = tuple(shape)
        return _broadcast(self, shape)

    def tile_batch(self, count: int) -> "Jet":
        """Repeat along a new leading value axis and merge it with the batch.

        A jet of value shape ``(B, ...)`` becomes ``(count * B, ...)`` with
        block ``m`` holding a copy of the original batch.
        """
        def fn(a, lead):
            pre, rest = a.shape[:lead], a.shape[lead:]
            b = np.broadcast_to(np.expand_dims(a, lead), pre + (count,) + rest)
            return b.reshape(pre + (count * rest[0],) + rest[1:])

        return self._map(fn)

    # ------------------------------------------------------------------
    # arithmetic
    def __neg__(self):
        return self._map(lambda a, lead: -a)

    def __pos__(self):
        return self

    def __add__(self, other):
        return _add(self, other, 1.0)

    def __radd__(self, other):
        return _add(self, other, 1.0)

    def __sub__(self, other):
        return _add(self, other, -1.0)

    def __rsub__(self, other):
        return _add(-self, other, 1.0)

    def __mul__(self, other):
        return bilinear(np.multiply, self, other)

    def __rmul__(self, other):
        return bilinear(np.multiply, other, self)

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * reciprocal(other)
        return self * (1.0 / _as_array(other))

    def __rtruediv__(self, other):
        return reciprocal(self) * other

    def __pow__(self, p):
        if isinstance(p, Jet):
            return exp(p * log(self))
        p = float(p)
        if p == 2.0:
            return self * self
        return _univariate(
            self,
            lambda x: x ** p,
            lambda x: p * x ** (p - 1.0),
            lambda x: p * (p - 1.0) * x ** (p - 2.0),
        )

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)


# ----------------------------------------------------------------------
# alignment helpers
def order_of(x) -> int:
    """Order of a jet; constants have unbounded order (returned as 99)."""
    return x.order if isinstance(x, Jet) else 99


def value(x):
    """Value array of a jet or constant."""
    return x.v if isinstance(x, Jet) else _as_array(x)


def _pad_to(j: Jet, ndim: int) -> Jet:
    extra = ndim - j.v.ndim
    if extra <= 0:
        return j

    def fn(a, lead):
        return a.reshape(a.shape[:lead] + (1,) * extra + a.shape[lead:])

    out = j._map(fn)
    out.is_seed = False
    return out


def _broadcast(j: Jet, shape) -> Jet:
    j = _pad_to(j, len(shape))
    n = j.nvar
    return Jet(
        np.broadcast_to(j.v, shape),
        None if j.g is None else np.broadcast_to(j.g, (n,) + shape),
        None if j.h is None else np.broadcast_to(j.h, (n, n) + shape),
    )


def _add(a: Jet, b, sign: float) -> Jet:
    if not isinstance(b, Jet):
        b = _as_array(b)
        v = a.v + sign * b
        if v.shape == a.v.shape:
            return Jet(v, a.g, a.h)
        out = _broadcast(a, v.shape)
        return Jet(v, out.g, out.h)
    order = min(a.order, b.order)
    a = a.truncate(order)
    b = b.truncate(order)
    nd = max(a.v.ndim, b.v.ndim)
    a = _pad_to(a, nd)
    b = _pad_to(b, nd)
    v = a.v + sign * b.v
    g = None if order < 1 else a.g + sign * b.g
    h = None if order < 2 else a.h + sign * b.h
    return Jet(v, g, h)


def bilinear(op, a, b, cores=(0, 0)):
    """Apply a bilinear, broadcasting ``op`` with the product rule.

    ``op`` must broadcast over extra leading axes (``np.multiply``,
    ``np.matmul`` and ``np.einsum`` with a leading ellipsis all do).
    ``cores`` gives the number of trailing axes of each operand that take
    part in the operation; the remaining (batch) axes are aligned by
    inserting singleton axes right after the derivative axes.
    """
    aj, bj = isinstance(a, Jet), isinstance(b, Jet)
    if not aj and not bj:
        return op(_as_array(a), _as_array(b))
    ca, cb = cores
    nda = a.v.ndim if aj else np.ndim(a)
    ndb = b.v.ndim if bj else np.ndim(b)
    ell = max(nda - ca, ndb - cb)
    if not bj:
        b = _as_array(b)
        a = _pad_to(a, ell + ca)
        b = b.reshape((1,) * (ell + cb - b.ndim) + b.shape)
        return Jet(
            op(a.v, b),
            None if a.g is None else op(a.g, b),
            None if a.h is None else op(a.h, b),
        )
    if not aj:
        a = _as_array(a)
        b = _pad_to(b, ell + cb)
        a = a.reshape((1,) * (ell + ca - a.ndim) + a.shape)
        return Jet(
            op(a, b.v),
            None if b.g is None else op(a, b.g),
            None if b.h is None else op(a, b.h),
        )
    order = min(a.order, b.order)
    a = _pad_to(a.truncate(order), ell + ca)
    b = _pad_to(b.truncate(order), ell + cb)
    v = op(a.v, b.v)
    if order == 0:
        return Jet(v)
    g = op(a.g, b.v) + op(a.v, b.g)
    if order == 1:
        return Jet(v, g)
    cross = op(a.g[:, None], b.g[None, :])
    h = op(a.h, b.v) + op(a.v, b.h) + cross + np.swapaxes(cross, 0, 1)
    return Jet(v, g, h)


def matmul(a, b):
    """Matrix product over the two trailing value axes."""
    return bilinear(np.matmul, a, b, cores=(2, 2))


def einsum(subscripts: str, a, b):
    """Two-operand einsum over value axes with implicit leading batch axes.

    ``subscripts`` is written without ellipsis, e.g. ``"li,jkl->ijk"``;
    all leading axes (batch and derivative) broadcast.
    """
    lhs, out = subscripts.split("->")
    s1, s2 = lhs.split(",")
    spec = f"...{s1},...{s2}->...{out}"
    return bilinear(lambda x, y: np.einsum(spec, x, y), a, b, cores=(len(s1), len(s2)))


def inv(a):
    """Matrix inverse over the two trailing value axes."""
    if not isinstance(a, Jet):
        return np.linalg.inv(_as_array(a))
    n_inv = np.linalg.inv(a.v)
    if a.order == 0:
        return Jet(n_inv)
    dn = -(n_inv @ a.g @ n_inv)
    if a.order == 1:
        return Jet(n_inv, dn)
    t1 = dn[None, :] @ a.g[:, None] @ n_inv
    h = -(n_inv @ a.h @ n_inv) - t1 - np.swapaxes(t1, 0, 1)
    return Jet(n_inv, dn, h)


def _univariate(a, f0, f1, f2):
    if not isinstance(a, Jet):
        return f0(_as_array(a))
    x = a.v
    v = f0(x)
    if a.order == 0:
        return Jet(v)
    d1 = f1(x)
    g = d1 * a.g
    if a.order == 1:
        return Jet(v, g)
    h = d1 * a.h + f2(x) * (a.g[:, None] * a.g[None, :])
    return Jet(v, g, h)


def reciprocal(a):
    return _univariate(a, lambda x: 1.0 / x, lambda x: -1.0 / x ** 2, lambda x: 2.0 / x ** 3)


def sin(a):
    return _univariate(a, np.sin, np.cos, lambda x: -np.sin(x))


def cos(a):
    return _univariate(a, np.cos, lambda x: -np.sin(x), lambda x: -np.cos(x))


def exp(a):
    return _univariate(a, np.exp, np.exp, np.exp)


def log(a):
    return _univariate(a, np.log, lambda x: 1.0 / x, lambda x: -1.0 / x ** 2)


def sqrt(a):
    return _univariate(
        a, np.sqrt, lambda x: 0.5 / np.sqrt(x), lambda x: -0.25 / (x * np.sqrt(x))
    )


def tanh(a):
    def d1(x):
        return 1.0 - np.tanh(x) ** 2

    def d2(x):
        t = np.tanh(x)
        return -2.0 * t * (1.0 - t * t)

    return _univariate(a, np.tanh, d1, d2)


def primitive(f, df, d2f):
    """Register an analytic scalar primitive with hand-coded derivatives.

    Returns a function acting elementwise on jets or arrays.

    Examples
    --------
    >>> soft = primitive(np.arctan, lambda x: 1/(1+x*x), lambda x: -2*x/(1+x*x)**2)
    """

    def fn(a):
        return _univariate(a, f, df, d2f)

    fn.__name__ = getattr(f, "__name__", "primitive")
    return fn


# ----------------------------------------------------------------------
# construction
def seed(points, order: int) -> Jet:
    """Identity jet of a batch of points.

    Parameters
    ----------
    points : array_like, shape (B, n)
    order : int
        0, 1 or 2.
    """
    p = _as_array(points)
    if p.ndim != 2:
        raise ValueError("points must have shape (B, n)")
    if order == 0:
        return Jet(p, is_seed=True)
    b, n = p.shape
    g = np.broadcast_to(np.eye(n)[:, None, :], (n, b, n))
    if order == 1:
        return Jet(p, g, is_seed=True)
    h = np.broadcast_to(np.zeros(()), (n, n, b, n))
    return Jet(p, g, h, is_seed=True)


def constant_like(c, like: Jet) -> Jet:
    """Constant ``c`` with zero derivatives, matching the order of ``like``."""
    c = _as_array(c)
    shape = c.shape
    v = np.broadcast_to(c, shape)
    n = like.nvar
    z = np.broadcast_to(np.zeros(()), (n,) + shape)
    if like.order == 0:
        return Jet(v)
    if like.order == 1:
        return Jet(v, z)
    return Jet(v, z, np.broadcast_to(np.zeros(()), (n, n) + shape))


def stack(items, axis: int = -1):
    """Stack jets (or constants) along a new value axis."""
    jets = [x for x in items if isinstance(x, Jet)]
    if not jets:
        return np.stack([_as_array(x) for x in items], axis=axis)
    order = min(j.order for j in jets)
    nvar = jets[0].nvar
    shape = np.broadcast_shapes(*[value(x).shape for x in items])
    full = []
    for x in items:
        if isinstance(x, Jet):
            full.append(_broadcast(x.truncate(order), shape))
        else:
            c = np.broadcast_to(_as_array(x), shape)
            z = np.broadcast_to(np.zeros(()), (nvar,) + shape)
            z2 = np.broadcast_to(np.zeros(()), (nvar, nvar) + shape)
            full.append(Jet(c, z if order >= 1 else None, z2 if order >= 2 else None))
    nd = len(shape) + 1
    ax = axis - nd if axis >= 0 else axis
    v = np.stack([j.v for j in full], axis=ax)
    g = None if order < 1 else np.stack([j.g for j in full], axis=ax)
    h = None if order < 2 else np.stack([j.h for j in full], axis=ax)
    return Jet(v, g, h)


def _nested_shape(obj):
    if isinstance(obj, (list, tuple)):
        inner = _nested_shape(obj[0])
        return (len(obj),) + inner
    return ()


def _flatten(obj):
    if isinstance(obj, (list, tuple)):
        out = []
        for o in obj:
            out.extend(_flatten(o))
        return out
    return [obj]


def assemble(nested, batch_shape=()):
    """Turn a nested list of jets/constants into one jet.

    The nesting structure becomes the trailing component axes; every leaf
    is broadcast to ``batch_shape`` first.  A leaf that is itself an array
    or jet with trailing axes is not supported; leaves are scalars per
    batch element.
    """
    comp = _nested_shape(nested)
    leaves = _flatten(nested)
    leaves = [
        x if isinstance(x, Jet) else np.broadcast_to(_as_array(x), batch_shape)
        for x in leaves
    ]
    if not any(isinstance(x, Jet) for x in leaves):
        return np.stack(leaves, axis=-1).reshape(tuple(batch_shape) + comp)
    flat = stack(leaves, axis=-1)
    bs = flat.v.shape[:-1]
    return flat.reshape(bs + comp)


def partials(j: Jet) -> Jet:
    """Derivative as a new trailing value axis, lowering the order by one.

    For a jet of value shape ``S`` and order ``K >= 1`` returns a jet of
    value shape ``S + (n,)`` and order ``K - 1`` whose value is the
    gradient.
    """
    if j.order < 1:
        raise ValueError("partials needs a jet of order >= 1")
    v = np.moveaxis(j.g, 0, -1)
    if j.order == 1:
        return Jet(v)
    g = np.moveaxis(j.h, 1, -1)
    return Jet(v, g)


def compose(outer: Jet, inner: Jet) -> Jet:
    """Chain rule: combine a jet taken at ``inner.v`` with the inner jet.

    Parameters
    ----------
    outer : Jet
        Jet of some quantity with respect to variables ``p`` evaluated at
        ``p = inner.v``; value shape ``(B,) + S``.
    inner : Jet
        Jet of ``p`` (value shape ``(B, m)``) with respect to the base
        variables.

    Returns
    -------
    Jet
        Jet of the quantity with respect to the base variables, of order
        ``min(outer.order, inner.order)``.
    """
    order = min(outer.order, inner.order)
    b = outer.v.shape[0]
    s = outer.v.shape[1:]
    fv = outer.v.reshape(b, -1)
    if order == 0:
        return Jet(outer.v)
    m = outer.g.shape[0]
    fg = outer.g.reshape(m, b, -1)
    qg = inner.g  # (n, B, m)
    n = qg.shape[0]
    g = np.einsum("mbs,abm->abs", fg, qg)
    if order == 1:
        return Jet(outer.v, g.reshape((n, b) + s))
    fh = outer.h.reshape(m, m, b, -1)
    h = np.einsum("mlbs,abm,cbl->acbs", fh, qg, qg, optimize=True)
    h = h + np.einsum("mbs,acbm->acbs", fg, inner.h)
    return Jet(outer.v, g.reshape((n, b) + s), h.reshape((n, n, b) + s))


# ----------------------------------------------------------------------
# finite-difference fallback
def fd_jet(fn, points, order: int) -> Jet:
    """Jet of ``fn`` at ``points`` from central finite differences.

    ``fn`` maps an array of shape ``(B, n)`` to an array of shape
    ``(B,) + S``.  First derivatives use the step
    ``eps**(1/3) * max(1, |x_k|)``; second derivatives use
    ``eps**(1/4) * max(1, |x_k|)``, the balanced step for a four-point
    stencil.
    """
    p = _as_array(points)
    f0 = _as_array(fn(p))
    if order == 0:
        return Jet(f0)
    n = p.shape[1]
    eps = np.finfo(float).eps
    h1 = eps ** (1.0 / 3.0) * np.maximum(1.0, np.abs(p))
    gs = []
    for k in range(n):
        e = np.zeros_like(p)
        e[:, k] = h1[:, k]
        d = (_as_array(fn(p + e)) - _as_array(fn(p - e)))
        gs.append(d / (2.0 * h1[:, k].reshape((-1,) + (1,) * (f0.ndim - 1))))
    g = np.stack(gs)
    if order == 1:
        return Jet(f0, g)
    h2 = eps ** 0.25 * np.maximum(1.0, np.abs(p))
    hs = np.zeros((n, n) + f0.shape)
    shp = (-1,) + (1,) * (f0.ndim - 1)
    for k in range(n):
        for l in range(k, n):
            ek = np.zeros_like(p)
            el = np.zeros_like(p)
            ek[:, k] = h2[:, k]
            el[:, l] = h2[:, l]
            val = (
                _as_array(fn(p + ek + el)) - _as_array(fn(p + ek - el))
                - _as_array(fn(p - ek + el)) + _as_array(fn(p - ek - el))
            ) / (4.0 * (h2[:, k] * h2[:, l]).reshape(shp))
            hs[k, l] = val
            hs[l, k] = val
    return Jet(f0, g, hs)
