"""Chart-level tensor calculus.

Exterior derivative, Schouten brackets, contractions, pullbacks by smooth
maps and the Jacobi residual of a bivector.

Index conventions
-----------------
Contractions always use the *first* slot: for a bivector ``Pi`` and a
one-form ``alpha``, ``sharp(Pi, alpha)`` has components
``alpha_i Pi^{ij}``; for a two-form ``B`` and a vector ``X``, ``flat(B, X)``
has components ``X^i B_{ij}``.  In matrix notation
``sharp(Pi, alpha) = Pi^T alpha = -Pi alpha`` and
``flat(B, X) = B^T X = -B X``.
"""

from __future__ import annotations

import numpy as np

from . import jets as J
from .errors import DimensionError, SingularJacobianError
from .fields import DerivedField, Field, NumericField, antisymmetrize, as_points
from .jets import Jet

__all__ = [
    "PointJetField",
    "SmoothMap",
    "exterior_derivative",
    "schouten_bivector_bivector",
    "schouten_vector_bivector",
    "lie_derivative",
    "lie_bracket",
    "sharp",
    "flat",
    "pullback",
    "pullback_bivector",
    "pullback_values",
    "jacobi_residual",
    "wedge",
]


class PointJetField(NumericField):
    """Numeric field defined by a function ``fn(points, order) -> Jet``."""

    def __init__(self, kind, dim, fn, shape=None, max_order=1, name=None, chunk=256):
        super().__init__(kind, dim, shape=shape, max_order=max_order, name=name)
        self.fn = fn
        self.chunk = chunk

    def _seed_jet(self, points, order):
        return self.fn(points, order)


def _check_dims(*fields):
    dims = {f.dim for f in fields}
    if len(dims) != 1:
        raise DimensionError(f"dimension mismatch: {sorted(dims)}")
    return dims.pop()


# ----------------------------------------------------------------------
# derivatives
_NEXT_FORM = {"scalar": "oneform", "oneform": "twoform", "twoform": "threeform"}


def exterior_derivative(alpha: Field) -> Field:
    """Exterior derivative of a 0-, 1- or 2-form field.

    Uses ``(d alpha)_{i0..ik} = sum_m (-1)^m d_{i_m} alpha_{i0..^i_m..ik}``.
    """
    if alpha.kind not in _NEXT_FORM:
        raise ValueError(f"exterior derivative not defined for kind {alpha.kind!r}")
    kind = alpha.kind

    def fn(points, order):
        d = J.partials(alpha.jet(points, order + 1))
        if kind == "scalar":
            return d
        if kind == "oneform":
            # d[..., j, i] = d_i alpha_j
            return d.swapaxes(-1, -2) - d
        # d[..., j, k, i] = d_i beta_jk ; t[..., i, j, k] = d_i beta_jk
        t = d.moveaxis(-1, -3)
        return 3.0 * antisymmetrize(t, 3)

    return PointJetField(_NEXT_FORM[kind], alpha.dim, fn,
                         max_order=alpha.max_order - 1, name=f"d({alpha.name})")


def schouten_bivector_bivector(A: Field, B: Field) -> Field:
    """Schouten bracket of two bivector fields.

    ``[[A,B]]^{ijk} = sum_l (A^{li} d_l B^{jk} + B^{li} d_l A^{jk})`` plus the
    cyclic permutations of ``(i, j, k)``.  The Jacobi identity for ``Pi``
    is ``[[Pi, Pi]] = 0``.
    """
    _check_dims(A, B)
    same = A is B

    def fn(points, order):
        aj = A.jet(points, order + 1)
        bj = aj if same else B.jet(points, order + 1)
        da, db = J.partials(aj), J.partials(bj)
        a0, b0 = aj.truncate(order), bj.truncate(order)
        s = J.einsum("li,jkl->ijk", a0, db) + J.einsum("li,jkl->ijk", b0, da)
        # s is antisymmetric in (j, k): the cyclic sum is 3 Alt(s)
        return 3.0 * antisymmetrize(s, 3)

    return PointJetField("trivector", A.dim, fn,
                         max_order=min(A.max_order, B.max_order) - 1,
                         name=f"[[{A.name},{B.name}]]")


def schouten_vector_bivector(W: Field, A: Field) -> Field:
    """Bracket of a vector field with a bivector, the Lie derivative ``L_W A``.

    Components ``W^l d_l A^{ij} - A^{lj} d_l W^i - A^{il} d_l W^j``.
    """
    _check_dims(W, A)
    if W.kind != "vector" or A.kind != "bivector":
        raise ValueError("expects a vector field and a bivector field")

    def fn(points, order):
        wj = W.jet(points, order + 1)
        aj = A.jet(points, order + 1)
        dw, da = J.partials(wj), J.partials(aj)  # dw[..., i, l] = d_l W^i
        w0, a0 = wj.truncate(order), aj.truncate(order)
        out = J.einsum("l,ijl->ij", w0, da)
        out = out - J.einsum("lj,il->ij", a0, dw) - J.einsum("il,jl->ij", a0, dw)
        return antisymmetrize(out, 2)

    return PointJetField("bivector", A.dim, fn,
                         max_order=min(W.max_order, A.max_order) - 1,
                         name=f"L_{W.name}{A.name}")


lie_derivative = schouten_vector_bivector


def lie_bracket(X: Field, Y: Field) -> Field:
    """Commutator of vector fields, ``X^l d_l Y^i - Y^l d_l X^i``."""
    _check_dims(X, Y)

    def fn(points, order):
        xj, yj = X.jet(points, order + 1), Y.jet(points, order + 1)
        dx, dy = J.partials(xj), J.partials(yj)
        return J.einsum("l,il->i", xj.truncate(order), dy) - J.einsum("l,il->i", yj.truncate(order), dx)

    return PointJetField("vector", X.dim, fn, max_order=min(X.max_order, Y.max_order) - 1,
                         name=f"[{X.name},{Y.name}]")


# ----------------------------------------------------------------------
# algebra
def sharp(Pi: Field, alpha: Field) -> Field:
    """Vector field ``alpha_i Pi^{ij}`` (contraction in the first slot)."""
    _check_dims(Pi, alpha)
    return DerivedField("vector", Pi.dim,
                        lambda q: J.einsum("i,ij->j", alpha.at(q), Pi.at(q)),
                        max_order=min(Pi.max_order, alpha.max_order),
                        name=f"{Pi.name}#{alpha.name}")


def flat(B: Field, X: Field) -> Field:
    """One-form ``X^i B_{ij}`` (contraction in the first slot)."""
    _check_dims(B, X)
    return DerivedField("oneform", B.dim,
                        lambda q: J.einsum("i,ij->j", X.at(q), B.at(q)),
                        max_order=min(B.max_order, X.max_order),
                        name=f"i_{X.name}{B.name}")


def wedge(u, v):
    """Bivector components ``u^i v^j - u^j v^i`` from two component lists."""
    n = len(u)
    return [[u[i] * v[j] - u[j] * v[i] for j in range(n)] for i in range(n)]


# ----------------------------------------------------------------------
# maps
class SmoothMap:
    """Smooth map of the chart to itself.

    Parameters
    ----------
    dim : int
        Chart dimension.
    forward : callable
        Maps a jet (or array) of points of shape ``(B, n)`` to image points.
    jacobian : callable, optional
        Maps points to the jacobian ``d forward^i / d q^l`` with shape
        ``(B, n, n)``.  When omitted it is obtained by differentiating
        ``forward``.
    inverse : callable, optional
        Inverse map acting on arrays.
    jet_capable : bool
        Whether ``forward`` and ``jacobian`` accept jets.  Maps obtained by
        numerical integration accept plain arrays only.
    """

    def __init__(self, dim, forward, jacobian=None, inverse=None, jet_capable=True, name="map"):
        self.dim = int(dim)
        self._forward = forward
        self._jacobian = jacobian
        self.inverse = inverse
        self.jet_capable = jet_capable
        self.name = name

    @classmethod
    def from_formula(cls, dim, fn, inverse=None, name="map"):
        """Map given by component formulas ``fn(x) -> list`` on coordinate jets."""

        def forward(q):
            if isinstance(q, Jet):
                return J.assemble(list(fn([q[..., i] for i in range(dim)])), (q.v.shape[0],))
            p = np.asarray(q, float)
            out = forward(J.seed(p, 0))
            return out.v if isinstance(out, Jet) else out

        return cls(dim, forward, inverse=inverse, name=name)

    def forward(self, q):
        return self._forward(q)

    def __call__(self, points):
        single = np.ndim(points) == 1
        p = as_points(points, self.dim)
        out = self._forward(J.seed(p, 0) if self.jet_capable else p)
        out = out.v if isinstance(out, Jet) else np.asarray(out)
        return out[0] if single else out

    def jacobian(self, q):
        """Jacobian at a jet or array of points."""
        if self._jacobian is not None:
            return self._jacobian(q)
        if not isinstance(q, Jet):
            return J.partials(self._forward(J.seed(np.asarray(q, float), 1))).v
        full = J.partials(self._forward(J.seed(q.v, q.order + 1)))
        if q.is_seed or q.order == 0:
            return full
        return J.compose(full, q)

    def jacobian_values(self, points):
        p = as_points(points, self.dim)
        jm = self.jacobian(J.seed(p, 0) if self.jet_capable else p)
        return jm.v if isinstance(jm, Jet) else np.asarray(jm)

    def then(self, other: "SmoothMap") -> "SmoothMap":
        """Composite ``other o self``."""
        def forward(q):
            return other.forward(self.forward(q))

        def jac(q):
            return J.matmul(other.jacobian(self.forward(q)), self.jacobian(q))

        return SmoothMap(self.dim, forward, jac, jet_capable=self.jet_capable and other.jet_capable,
                         name=f"{other.name}o{self.name}")

    def jacobian_fd_residual(self, points) -> float:
        """Max deviation of the jacobian from central finite differences."""
        p = as_points(points, self.dim)
        fd = J.fd_jet(lambda x: self(x), p, 1)
        return float(np.max(np.abs(np.moveaxis(fd.g, 0, -1) - self.jacobian_values(p))))


def _inv_checked(jm, q):
    vals = jm.v if isinstance(jm, Jet) else np.asarray(jm)
    s = np.linalg.svd(vals, compute_uv=False)
    bad = s[..., -1] <= 1e-12 * s[..., 0]
    if np.any(bad):
        idx = int(np.argmax(bad))
        raise SingularJacobianError(J.value(q)[idx])
    return J.inv(jm)


def _pull_components(kind, jm, jinv, a):
    if kind == "scalar":
        return a
    if kind == "vector":
        return J.einsum("il,l->i", jinv, a)
    if kind == "oneform":
        return J.einsum("li,l->i", jm, a)
    if kind == "bivector":
        return J.matmul(J.matmul(jinv, a), _t(jinv))
    if kind == "twoform":
        return J.matmul(J.matmul(_t(jm), a), jm)
    if kind == "endo":
        return J.matmul(J.matmul(jinv, a), jm)
    if kind == "trivector":
        t = J.einsum("ia,abc->ibc", jinv, a)
        t = J.einsum("jb,ibc->ijc", jinv, t)
        return J.einsum("kc,ijc->ijk", jinv, t)
    if kind == "threeform":
        t = J.einsum("ai,abc->ibc", jm, a)
        t = J.einsum("bj,ibc->ijc", jm, t)
        return J.einsum("ck,ijc->ijk", jm, t)
    raise ValueError(f"pullback not defined for kind {kind!r}")


def _t(m):
    return m.swapaxes(-1, -2) if isinstance(m, Jet) else np.swapaxes(m, -1, -2)


def pullback(phi: SmoothMap, T: Field) -> Field:
    """Pullback ``phi^* T`` of a tensor field by a smooth map.

    Bivectors transform as ``J^{-1} A(phi(q)) J^{-T}``, one-forms as
    ``J^T alpha(phi(q))``, two-forms as ``J^T B J``, vectors as
    ``J^{-1} X(phi(q))``, endomorphisms as ``J^{-1} T J``.
    """
    if phi.dim != T.dim:
        raise DimensionError(f"dimension mismatch {phi.dim} vs {T.dim}")

    def fn(q):
        if not phi.jet_capable:
            if q.order > 0:
                raise ValueError(f"{phi.name} does not propagate derivatives")
            vals = pullback_values(phi, T, q.v)
            return Jet(vals)
        p = phi.forward(q)
        jm = phi.jacobian(q)
        jinv = _inv_checked(jm, q)
        return _pull_components(T.kind, jm, jinv, T.at(p))

    return DerivedField(T.kind, T.dim, fn, shape=T.comp_shape,
                        max_order=T.max_order if phi.jet_capable else 0,
                        name=f"{phi.name}*{T.name}")


def pullback_bivector(phi: SmoothMap, A: Field) -> Field:
    """Pullback of a bivector field, ``J^{-1} A(phi(q)) J^{-T}``."""
    if A.kind != "bivector":
        raise ValueError("expects a bivector field")
    return pullback(phi, A)


def pullback_values(phi: SmoothMap, T: Field, points) -> np.ndarray:
    """Component values of ``phi^* T`` at points, for any map."""
    p = as_points(points, phi.dim)
    image = phi(p)
    jm = phi.jacobian_values(p)
    jinv = _inv_checked(jm, p)
    return _pull_components(T.kind, jm, jinv, T(image))


def jacobi_residual(Pi: Field, sample) -> float:
    """Sup over the sample of the max-norm of ``[[Pi, Pi]]``."""
    p = as_points(sample, Pi.dim)
    if p.shape[0] == 0:
        raise ValueError("empty sample")
    t = schouten_bivector_bivector(Pi, Pi)(p)
    return float(np.max(np.abs(t)))
