"""Pointwise tensor calculus for F-manifold structures.

Conventions.  A product is stored as ``c[i, j, k] = c^i_{jk}`` (upper
index first), a connection as ``gamma[i, j, k] = Gamma^i_{jk}``, and
partial tables carry the differentiation index first:
``dc[l, i, j, k] = d_l c^i_{jk}``.  The curvature sign is

    R^i_{jkl} = d_k Gamma^i_{lj} - d_l Gamma^i_{kj}
                + Gamma^i_{km} Gamma^m_{lj} - Gamma^i_{lm} Gamma^m_{kj}.

All residual operators return a max-norm scalar.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DimensionError, InvertibilityError
from .numerics import fd_field_partials

MAX_CONDITION = 1e12


@dataclass(frozen=True)
class Point:
    """An evaluation point with float64 coordinates."""

    coords: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coords",
                           np.asarray(self.coords, dtype=float).reshape(-1))

    @property
    def dim(self):
        return self.coords.size


def as_coords(u):
    """Coerce a Point / sequence / array into a 1-d float array."""
    if isinstance(u, Point):
        return u.coords
    return np.asarray(u, dtype=float).reshape(-1)


@dataclass(frozen=True)
class VectorField:
    """A vector field with optional analytic first/second derivatives.

    ``value(u) -> (n,)``; ``jacobian(u)[i, j] = d_j V^i``;
    ``second_derivs(u)[i, j, k] = d_j d_k V^i``.  Missing derivatives
    fall back to fourth-order finite differences.
    """

    value: Callable
    jacobian: Optional[Callable] = None
    second_derivs: Optional[Callable] = None

    def val(self, u):
        return np.asarray(self.value(as_coords(u)), dtype=float)

    def jac(self, u):
        u = as_coords(u)
        if self.jacobian is not None:
            return np.asarray(self.jacobian(u), dtype=float)
        return fd_field_partials(self.value, u).T

    @staticmethod
    def constant(vec):
        vec = np.asarray(vec, dtype=float)
        n = vec.size
        return VectorField(lambda u: vec,
                           jacobian=lambda u: np.zeros((n, n)),
                           second_derivs=lambda u: np.zeros((n, n, n)))

    @staticmethod
    def euler(n):
        return VectorField(lambda u: np.asarray(u, dtype=float),
                           jacobian=lambda u: np.eye(n),
                           second_derivs=lambda u: np.zeros((n, n, n)))


@dataclass(frozen=True)
class ProductField:
    """Structure constants ``c^i_{jk}`` of a commutative product."""

    c: Callable
    dim: int
    partials: Optional[Callable] = None

    def table(self, u):
        t = np.asarray(self.c(as_coords(u)), dtype=float)
        if t.shape != (self.dim,) * 3:
            raise DimensionError("product table has wrong shape")
        return t

    def partial_table(self, u):
        u = as_coords(u)
        if self.partials is not None:
            return np.asarray(self.partials(u), dtype=float)
        return fd_field_partials(self.c, u)


@dataclass(frozen=True)
class ChristoffelField:
    """Connection symbols ``Gamma^i_{jk}`` with optional analytic partials."""

    gamma: Callable
    dim: int
    partials: Optional[Callable] = None

    def table(self, u):
        t = np.asarray(self.gamma(as_coords(u)), dtype=float)
        if t.shape != (self.dim,) * 3:
            raise DimensionError("Christoffel table has wrong shape")
        return t

    def partial_table(self, u):
        u = as_coords(u)
        if self.partials is not None:
            return np.asarray(self.partials(u), dtype=float)
        return fd_field_partials(self.gamma, u)


@dataclass(frozen=True)
class CurvatureTensor:
    """``R[i, j, k, l] = R^i_{jkl}`` at a point."""

    R: np.ndarray

    def max_abs(self):
        return float(np.max(np.abs(self.R)))


def product_algebra_residual(prod, u):
    """Max violation of commutativity and associativity at ``u``."""
    c = prod.table(u)
    comm = np.max(np.abs(c - c.transpose(0, 2, 1)))
    assoc = np.einsum('ijl,lkm->ijkm', c, c) - np.einsum('ilm,ljk->ijkm', c, c)
    return float(max(comm, np.max(np.abs(assoc))))


def hertling_manin_residual(prod, X, Y, u):
    """Six-term integrability residual of the product along fields X, Y.

    Lie_{X*Y}(*) - X * Lie_Y(*) - Y * Lie_X(*) as a (1,2)-tensor, max
    norm over its components.
    """
    u = as_coords(u)
    c = prod.table(u)

    def mult_by(Zv):
        # matrix of multiplication by the vector Zv
        return np.einsum('imj,m->ij', c, Zv)

    Xv, Yv = X.val(u), Y.val(u)
    JX, JY = X.jac(u), Y.jac(u)

    # X*Y as a vector field, with an analytic jacobian assembled from the
    # product's own partials and the field jacobians.
    dc = prod.partial_table(u)
    XYv = np.einsum('ijk,j,k->i', c, Xv, Yv)
    JXY = (np.einsum('lijk,j,k->il', dc, Xv, Yv)
           + np.einsum('ijk,jl,k->il', c, JX, Yv)
           + np.einsum('ijk,j,kl->il', c, Xv, JY))

    lie_XY = _lie_of_product(prod, u, XYv, JXY)
    lie_X = _lie_of_product(prod, u, Xv, JX)
    lie_Y = _lie_of_product(prod, u, Yv, JY)

    res = (lie_XY
           - np.einsum('im,mjk->ijk', mult_by(Xv), lie_Y)
           - np.einsum('im,mjk->ijk', mult_by(Yv), lie_X))
    return float(np.max(np.abs(res)))


def _lie_of_product(prod, u, Wv, JW):
    c = prod.table(u)
    dc = prod.partial_table(u)
    return (np.einsum('m,mijk->ijk', Wv, dc)
            - np.einsum('im,mjk->ijk', JW, c)
            + np.einsum('mj,imk->ijk', JW, c)
            + np.einsum('mk,ijm->ijk', JW, c))


def riemann_at(conn, u):
    """Curvature tensor of a connection at a point."""
    G = conn.table(u)
    dG = conn.partial_table(u)
    R = (np.einsum('kilj->ijkl', dG) - np.einsum('likj->ijkl', dG)
         + np.einsum('ikm,mlj->ijkl', G, G)
         - np.einsum('ilm,mkj->ijkl', G, G))
    return CurvatureTensor(R=R)


def oriented_curvature_residual(conn, prod, u):
    """Max norm of the product-cyclic curvature combination.

    Z o R(W, Y)(X) + W o R(Y, Z)(X) + Y o R(Z, W)(X) over coordinate
    fields; vanishes whenever the connection is compatible with the
    product in the curvature sense.
    """
    R = riemann_at(conn, u).R
    c = prod.table(u)
    s = (np.einsum('izm,mjwy->ijzwy', c, R)
         + np.einsum('iwm,mjyz->ijzwy', c, R)
         + np.einsum('iym,mjzw->ijzwy', c, R))
    return float(np.max(np.abs(s)))


def _nabla_c(conn, prod, u):
    c = prod.table(u)
    dc = prod.partial_table(u)
    G = conn.table(u)
    return (dc
            + np.einsum('iam,mlj->ailj', G, c)
            - np.einsum('mal,imj->ailj', G, c)
            - np.einsum('maj,ilm->ailj', G, c))


def nabla_c_symmetry_residual(conn, prod, u):
    """Max violation of symmetry of (nabla c) in its covariant slots."""
    nab = _nabla_c(conn, prod, u)  # nab[a, i, l, j] = (nabla_a c)^i_{lj}
    return float(np.max(np.abs(nab - nab.transpose(2, 1, 0, 3))))


def nijenhuis_residual(V, u):
    """Max norm of the Nijenhuis torsion of an endomorphism field.

    ``V(u)`` returns the matrix ``V^i_j``; its torsion is computed with
    finite-difference partials.
    """
    u = as_coords(u)
    V0 = np.asarray(V(u), dtype=float)
    dV = fd_field_partials(V, u)  # dV[l, i, j] = d_l V^i_j
    N = (np.einsum('mj,mik->ijk', V0, dV)
         - np.einsum('mk,mij->ijk', V0, dV)
         + np.einsum('im,kmj->ijk', V0, dV)
         - np.einsum('im,jmk->ijk', V0, dV))
    return float(np.max(np.abs(N)))


def eventual_identity_residual(prod, e, E, u):
    """Residual of Lie_E(*)(X, Y) = [e, E] * X * Y over coordinate fields.

    Raises :class:`InvertibilityError` when multiplication by E is
    numerically singular at ``u``.
    """
    u = as_coords(u)
    c = prod.table(u)
    Ev, JE = E.val(u), E.jac(u)
    M = np.einsum('imj,m->ij', c, Ev)
    if np.linalg.cond(M) > MAX_CONDITION:
        raise InvertibilityError("multiplication by E is singular at this point")
    lie = _lie_of_product(prod, u, Ev, JE)
    ev, Je = e.val(u), e.jac(u)
    w = JE @ ev - Je @ Ev  # [e, E]
    rhs = np.einsum('ims,m,sjk->ijk', c, w, c)
    return float(np.max(np.abs(lie - rhs)))


def lie_commutator_flatness_residual(conn, W, u, T):
    """Max norm of (Lie_W nabla)(X, T) over coordinate fields X.

    Lie_W(nabla_X T) - nabla_X(Lie_W T) - nabla_{[W, X]} T with
    X = coordinate fields; vanishing for all T characterizes symmetry
    fields of the connection.
    """
    u = as_coords(u)
    G = conn.table(u)

    def S(v):
        # S[i, j] = (nabla_j T)^i
        return T.jac(v) + np.einsum('ijk,k->ij', conn.table(v), T.val(v))

    S0 = S(u)
    dS = fd_field_partials(S, u)  # [l, i, j]
    Wv, JW = W.val(u), W.jac(u)
    term1 = np.einsum('m,mij->ij', Wv, dS) - JW @ S0

    def L(v):
        # [W, T] as a field
        return T.jac(v) @ W.val(v) - W.jac(v) @ T.val(v)

    dL = fd_field_partials(L, u)  # [l, i]
    term2 = dL.T + np.einsum('ijk,k->ij', G, L(u))
    term3 = S0 @ JW  # nabla over [W, coordinate field] contributes -S0 @ JW
    return float(np.max(np.abs(term1 - term2 + term3)))
