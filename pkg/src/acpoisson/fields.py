"""Smooth tensor fields on a coordinate chart.

A field maps a batch of chart points to component arrays and gives access
to derivatives of its components up to order two through :mod:`jets`.
Evaluation always goes through :meth:`Field.at`, which accepts an arbitrary
input jet (so fields compose under the chain rule), while
:meth:`Field.jet` differentiates with respect to the points themselves.

Component conventions
---------------------
==========  =================  =============================
kind        component shape    index position
==========  =================  =============================
scalar      ``()``
vector      ``(n,)``           contravariant
oneform     ``(n,)``           covariant
bivector    ``(n, n)``         contravariant, antisymmetric
twoform     ``(n, n)``         covariant, antisymmetric
trivector   ``(n, n, n)``      contravariant, antisymmetric
threeform   ``(n, n, n)``      covariant, antisymmetric
endo        ``(n, n)``         (1,1) tensor, row index up
tensor      user supplied      no transformation law
==========  =================  =============================
"""

from __future__ import annotations

import itertools
import threading

import numpy as np

from . import jets as J
from .jets import Jet

__all__ = [
    "Field",
    "FunctionField",
    "ConstantField",
    "DerivedField",
    "NumericField",
    "MemoField",
    "component_shape",
    "antisymmetrize",
    "coordinate_function",
    "as_points",
]

_RANK = {
    "scalar": 0,
    "vector": 1,
    "oneform": 1,
    "bivector": 2,
    "twoform": 2,
    "trivector": 3,
    "threeform": 3,
    "endo": 2,
}
ANTISYMMETRIC = {"bivector", "twoform", "trivector", "threeform"}


def component_shape(kind: str, dim: int, shape=None) -> tuple:
    if kind == "tensor":
        if shape is None:
            raise ValueError("tensor fields need an explicit component shape")
        return tuple(shape)
    if kind not in _RANK:
        raise ValueError(f"unknown field kind {kind!r}")
    return (dim,) * _RANK[kind]


def _perm_sign(p) -> int:
    sign, p = 1, list(p)
    for i in range(len(p)):
        while p[i] != i:
            j = p[i]
            p[i], p[j] = p[j], p[i]
            sign = -sign
    return sign


def antisymmetrize(x, rank: int):
    """Project the trailing ``rank`` axes onto their antisymmetric part."""
    if rank < 2:
        return x
    if rank == 2:
        return 0.5 * (x - x.swapaxes(-1, -2)) if isinstance(x, Jet) else 0.5 * (x - np.swapaxes(x, -1, -2))
    total = None
    nd = x.ndim
    base = list(range(nd - rank))
    for p in itertools.permutations(range(rank)):
        axes = base + [nd - rank + i for i in p]
        if isinstance(x, Jet):
            term = x._map(lambda a, lead, axes=axes: np.transpose(a, list(range(lead)) + [lead + ax for ax in axes]))
        else:
            term = np.transpose(x, axes)
        term = term * float(_perm_sign(p))
        total = term if total is None else total + term
    return total * (1.0 / len(list(itertools.permutations(range(rank)))))


def as_points(points, dim=None):
    """Return points as a float array of shape ``(B, n)``."""
    p = np.asarray(points, dtype=float)
    if p.ndim == 1:
        p = p[None, :]
    if dim is not None and p.shape[-1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got {p.shape[-1]}")
    return p


class Field:
    """Base class of all fields.

    Parameters
    ----------
    kind : str
        One of the kinds in the module table.
    dim : int
        Chart dimension.
    shape : tuple, optional
        Component shape for ``kind="tensor"``.
    max_order : int
        Highest derivative order available from :meth:`jet`.
    name : str, optional
        Label used in reprs and reports.
    """

    def __init__(self, kind, dim, shape=None, max_order=2, name=None):
        self.kind = kind
        self.dim = int(dim)
        self.comp_shape = component_shape(kind, self.dim, shape)
        self.max_order = int(max_order)
        self.name = name or kind

    def __repr__(self):
        return f"<{type(self).__name__} {self.name} kind={self.kind} dim={self.dim}>"

    # evaluation -------------------------------------------------------
    def at(self, q: Jet) -> Jet:
        """Evaluate on an input jet of shape ``(B, n)``."""
        raise NotImplementedError

    def jet(self, points, order: int = 0) -> Jet:
        """Components and their partial derivatives at ``points``."""
        if order > self.max_order:
            raise ValueError(
                f"{self.name}: derivatives of order {order} requested, "
                f"only {self.max_order} available"
            )
        p = as_points(points, self.dim)
        return self.at(J.seed(p, order))

    def __call__(self, points):
        """Component values at ``points`` (a single point or a batch)."""
        single = np.ndim(points) == 1
        val = self.jet(points, 0).v
        return val[0] if single else val

    def _check_order(self, q: Jet):
        if q.order > self.max_order:
            raise ValueError(
                f"{self.name}: derivatives of order {q.order} requested, "
                f"only {self.max_order} available"
            )

    # arithmetic -------------------------------------------------------
    def _same(self, other):
        if not isinstance(other, Field):
            return False
        if other.dim != self.dim:
            from .errors import DimensionError

            raise DimensionError(f"dimension mismatch {self.dim} vs {other.dim}")
        return True

    def __add__(self, other):
        if self._same(other):
            return DerivedField(
                self.kind, self.dim, lambda q: self.at(q) + other.at(q),
                shape=self.comp_shape, max_order=min(self.max_order, other.max_order),
                name=f"({self.name}+{other.name})",
            )
        return DerivedField(self.kind, self.dim, lambda q: self.at(q) + other,
                            shape=self.comp_shape, max_order=self.max_order)

    def __radd__(self, other):
        return self.__add__(other)

    def __neg__(self):
        return DerivedField(self.kind, self.dim, lambda q: -self.at(q),
                            shape=self.comp_shape, max_order=self.max_order,
                            name=f"-{self.name}")

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Field):
            if other.kind != "scalar":
                raise TypeError("fields multiply only by scalar fields")
            self._same(other)
            extra = len(self.comp_shape)

            def fn(q):
                s = other.at(q)
                s = s.reshape(s.shape + (1,) * extra)
                return self.at(q) * s

            return DerivedField(self.kind, self.dim, fn, shape=self.comp_shape,
                                max_order=min(self.max_order, other.max_order),
                                name=f"{other.name}*{self.name}")
        c = float(other)
        return DerivedField(self.kind, self.dim, lambda q: self.at(q) * c,
                            shape=self.comp_shape, max_order=self.max_order,
                            name=f"{c:g}*{self.name}")

    def __rmul__(self, other):
        return self.__mul__(other)

    def with_kind(self, kind, name=None):
        """Same components reinterpreted as another kind."""
        return DerivedField(kind, self.dim, self.at, shape=self.comp_shape,
                            max_order=self.max_order, name=name or self.name)


def _coords(q: Jet, dim: int):
    return [q[..., i] for i in range(dim)]


def coordinate_function(i: int, dim: int) -> "FunctionField":
    """Scalar field returning coordinate ``i``."""
    return FunctionField("scalar", dim, lambda x: x[i], name=f"coord{i}")


class FunctionField(Field):
    """Field given by a formula on coordinate jets.

    ``fn`` receives a list of coordinate jets ``x[0], ..., x[n-1]`` (each of
    shape ``(B,)``) and returns the components as a (nested) list of jets or
    numbers, or as a jet with value shape ``(B,) + comp_shape``.
    Antisymmetric kinds are projected onto their antisymmetric part, which
    leaves already antisymmetric input unchanged.
    """

    def __init__(self, kind, dim, fn, shape=None, max_order=2, name=None):
        super().__init__(kind, dim, shape=shape, max_order=max_order, name=name)
        self.fn = fn

    def at(self, q: Jet) -> Jet:
        self._check_order(q)
        b = q.v.shape[0]
        out = self.fn(_coords(q, self.dim))
        if not isinstance(out, Jet):
            out = J.assemble(out, (b,)) if isinstance(out, (list, tuple)) else out
            if not isinstance(out, Jet):
                out = J.constant_like(np.broadcast_to(np.asarray(out, float), (b,) + self.comp_shape), q)
        if out.v.shape != (b,) + self.comp_shape:
            out = out.broadcast_to((b,) + self.comp_shape)
        if self.kind in ANTISYMMETRIC:
            out = antisymmetrize(out, _RANK[self.kind])
        return out


class ConstantField(Field):
    """Field with constant components."""

    def __init__(self, kind, dim, value, shape=None, name=None):
        value = np.asarray(value, dtype=float)
        if kind == "tensor" and shape is None:
            shape = value.shape
        super().__init__(kind, dim, shape=shape, max_order=2, name=name or "const")
        value = np.broadcast_to(value, self.comp_shape)
        if kind in ANTISYMMETRIC:
            value = antisymmetrize(value, _RANK[kind])
        self.value = np.array(value)

    def at(self, q: Jet) -> Jet:
        b = q.v.shape[0]
        return J.constant_like(np.broadcast_to(self.value, (b,) + self.comp_shape), q)


class DerivedField(Field):
    """Field defined by a function of the input jet.

    Used for algebraic combinations of other fields (sums, frame changes,
    pullbacks by jet-aware maps), which propagate derivatives by themselves.
    """

    def __init__(self, kind, dim, fn, shape=None, max_order=2, name=None):
        super().__init__(kind, dim, shape=shape, max_order=max_order, name=name)
        self.fn = fn

    def at(self, q: Jet) -> Jet:
        self._check_order(q)
        return self.fn(q)


class NumericField(Field):
    """Field whose jets are produced directly at points.

    Subclasses implement :meth:`_seed_jet`.  For inputs that are not the
    identity jet, the point jets are combined with the input by the chain
    rule.  Large batches are processed in chunks of ``chunk`` points.
    """

    chunk = 64

    def _seed_jet(self, points: np.ndarray, order: int) -> Jet:
        raise NotImplementedError

    def _chunked(self, points, order):
        b = points.shape[0]
        if b <= self.chunk:
            return self._seed_jet(points, order)
        parts = [self._seed_jet(points[i:i + self.chunk], order) for i in range(0, b, self.chunk)]
        return _concat(parts)

    def jet(self, points, order: int = 0) -> Jet:
        if order > self.max_order:
            raise ValueError(
                f"{self.name}: derivatives of order {order} requested, "
                f"only {self.max_order} available"
            )
        return self._chunked(as_points(points, self.dim), order)

    def at(self, q: Jet) -> Jet:
        self._check_order(q)
        pj = self.jet(q.v, q.order)
        if q.is_seed or q.order == 0:
            return pj
        return J.compose(pj, q)


def _concat(parts):
    v = np.concatenate([p.v for p in parts], axis=0)
    if parts[0].order == 0:
        return Jet(v)
    g = np.concatenate([p.g for p in parts], axis=1)
    if parts[0].order == 1:
        return Jet(v, g)
    h = np.concatenate([p.h for p in parts], axis=2)
    return Jet(v, g, h)


class MemoField(NumericField):
    """Memoizing wrapper around an expensive field.

    Jets are cached per point, keyed by the coordinates rounded at 1e-13
    and the derivative order.  Concurrent insertion is harmless because
    cached values are deterministic.
    """

    max_entries = 200_000

    def __init__(self, base: Field, chunk: int = 32, name=None):
        super().__init__(base.kind, base.dim, shape=base.comp_shape,
                         max_order=base.max_order, name=name or base.name)
        self.base = base
        self.chunk = chunk
        self._cache: dict = {}
        self._lock = threading.Lock()

    def clear(self):
        self._cache.clear()

    def _seed_jet(self, points, order):
        return self.base.at(J.seed(points, order))

    def jet(self, points, order: int = 0) -> Jet:
        if order > self.max_order:
            raise ValueError(
                f"{self.name}: derivatives of order {order} requested, "
                f"only {self.max_order} available"
            )
        p = as_points(points, self.dim)
        keys = [r.tobytes() for r in np.round(p, 13) + 0.0]
        rows = [None] * len(keys)
        missing = []
        for i, k in enumerate(keys):
            hit = None
            for o in range(order, self.max_order + 1):
                hit = self._cache.get((o, k))
                if hit is not None:
                    break
            if hit is None:
                missing.append(i)
            else:
                rows[i] = hit
        if missing:
            fresh = self._chunked(p[missing], order)
            if len(self._cache) > self.max_entries:
                with self._lock:
                    self._cache.clear()
            for j, i in enumerate(missing):
                entry = (
                    fresh.v[j],
                    None if order < 1 else fresh.g[:, j],
                    None if order < 2 else fresh.h[:, :, j],
                )
                self._cache[(order, keys[i])] = entry
                rows[i] = entry
        v = np.stack([r[0] for r in rows])
        if order == 0:
            return Jet(v)
        g = np.stack([r[1] for r in rows], axis=1)
        if order == 1:
            return Jet(v, g)
        h = np.stack([r[2] for r in rows], axis=2)
        return Jet(v, g, h)
