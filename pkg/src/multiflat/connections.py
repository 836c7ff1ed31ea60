"""Natural and dual connections built from off-diagonal symbol data.

In canonical coordinates of a semisimple structure the connection is
determined by the off-diagonal symbols ``Gamma^i_{ij}`` (i != j): the
remaining symbols follow from compatibility with the product and from
flatness of a distinguished vector field.  This module builds the full
symbol tables, and hosts the integrability residuals (Tsarev-type
conditions, flatness of the unity and of diagonal eventual identities,
cross-derivative closure, semi-Hamiltonicity, metric compatibility).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InvertibilityError, SingularityError
from .geom import ChristoffelField
from .numerics import fd_derivative, fd_field_partials

MIN_COORD_SEPARATION = 1e-8
MIN_IDENTITY_COMPONENT = 1e-12


def check_distinct(u, min_sep=MIN_COORD_SEPARATION):
    """Reject points with (nearly) coincident canonical coordinates."""
    u = np.asarray(u, dtype=float)
    diffs = np.abs(u[:, None] - u[None, :])
    np.fill_diagonal(diffs, np.inf)
    if diffs.min() <= min_sep:
        raise SingularityError("coincident canonical coordinates")
    return u


@dataclass(frozen=True)
class OffDiagonalGammas:
    """Off-diagonal symbols ``g(u)[i, j] = Gamma^i_{ij}`` (diagonal unused).

    ``partials(u)[l, i, j] = d_l Gamma^i_{ij}`` when analytic partials
    are available; otherwise they are approximated by fourth-order
    finite differences.
    """

    g: Callable
    dim: int
    partials: Optional[Callable] = None

    def matrix(self, u):
        G = np.asarray(self.g(np.asarray(u, dtype=float)), dtype=float)
        return G

    def partial_matrix(self, u):
        u = np.asarray(u, dtype=float)
        if self.partials is not None:
            return np.asarray(self.partials(u), dtype=float)
        return fd_field_partials(self.g, u)


@dataclass(frozen=True)
class EventualIdentityDiag:
    """A diagonal vector field, E^i depending on u^i only."""

    funcs: Sequence[Callable]
    derivs: Sequence[Callable]
    second_derivs: Optional[Sequence[Callable]] = None

    @property
    def dim(self):
        return len(self.funcs)

    def value(self, u):
        u = np.asarray(u, dtype=float)
        return np.array([f(u[i]) for i, f in enumerate(self.funcs)])

    def deriv(self, u):
        u = np.asarray(u, dtype=float)
        return np.array([f(u[i]) for i, f in enumerate(self.derivs)])

    def second(self, u):
        u = np.asarray(u, dtype=float)
        if self.second_derivs is None:
            return np.array([fd_derivative(f, u[i]) for i, f in
                             enumerate(self.derivs)])
        return np.array([f(u[i]) for i, f in enumerate(self.second_derivs)])

    def as_vector_field(self):
        from .geom import VectorField

        return VectorField(
            self.value,
            jacobian=lambda u: np.diag(self.deriv(u)),
        )

    @staticmethod
    def unity(n):
        return EventualIdentityDiag(
            funcs=tuple(lambda t: 1.0 for _ in range(n)),
            derivs=tuple(lambda t: 0.0 for _ in range(n)),
            second_derivs=tuple(lambda t: 0.0 for _ in range(n)))

    @staticmethod
    def euler(n):
        return EventualIdentityDiag(
            funcs=tuple(lambda t: t for _ in range(n)),
            derivs=tuple(lambda t: 1.0 for _ in range(n)),
            second_derivs=tuple(lambda t: 0.0 for _ in range(n)))

    @staticmethod
    def power(n, k):
        k = float(k)
        return EventualIdentityDiag(
            funcs=tuple(lambda t, k=k: t ** k for _ in range(n)),
            derivs=tuple(lambda t, k=k: k * t ** (k - 1) for _ in range(n)),
            second_derivs=tuple(lambda t, k=k: k * (k - 1) * t ** (k - 2)
                                for _ in range(n)))


def _natural_table(G):
    n = G.shape[0]
    gam = np.zeros((n, n, n))
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            gam[i, i, j] = gam[i, j, i] = G[i, j]
            gam[i, j, j] = -G[i, j]
        gam[i, i, i] = -sum(G[i, l] for l in range(n) if l != i)
    return gam


def build_natural(g):
    """The natural connection of a semisimple structure.

    Off-diagonal symbols are taken from ``g``; the remaining ones are
    fixed by symmetry, product compatibility, and exact flatness of the
    unity field e = sum_i d_i.
    """
    n = g.dim

    def gamma(u):
        return _natural_table(g.matrix(u))

    def partials(u):
        dG = g.partial_matrix(u)
        return np.stack([_natural_table(dG[l]) for l in range(n)])

    return ChristoffelField(gamma=gamma, dim=n, partials=partials)


def build_dual(g, E):
    """The dual connection twisted by a diagonal eventual identity E.

    Shares the off-diagonal symbols with the natural connection; the
    diagonal-slot symbols acquire E-dependent weights so that E itself
    is parallel.  Points where some E^i (numerically) vanishes are
    rejected.
    """
    n = g.dim

    def _check(Ev):
        if np.min(np.abs(Ev)) < MIN_IDENTITY_COMPONENT:
            raise InvertibilityError("eventual identity vanishes at this point")

    def gamma(u):
        G = g.matrix(u)
        Ev = E.value(u)
        _check(Ev)
        dE = E.deriv(u)
        gam = np.zeros((n, n, n))
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                gam[i, i, j] = gam[i, j, i] = G[i, j]
                gam[i, j, j] = -(Ev[i] / Ev[j]) * G[i, j]
            gam[i, i, i] = (-sum((Ev[l] / Ev[i]) * G[i, l]
                                 for l in range(n) if l != i)
                            - dE[i] / Ev[i])
        return gam

    def partials(u):
        G = g.matrix(u)
        dG = g.partial_matrix(u)
        Ev = E.value(u)
        _check(Ev)
        dE = E.deriv(u)
        d2E = E.second(u)
        out = np.zeros((n, n, n, n))
        for l in range(n):
            for i in range(n):
                acc = 0.0
                for j in range(n):
                    if i == j:
                        continue
                    out[l, i, i, j] = out[l, i, j, i] = dG[l, i, j]
                    ratio = Ev[i] / Ev[j]
                    dratio = ((1.0 if l == i else 0.0) * dE[i] / Ev[j]
                              - (1.0 if l == j else 0.0) * Ev[i] * dE[j] / Ev[j] ** 2)
                    out[l, i, j, j] = -(ratio * dG[l, i, j] + dratio * G[i, j])
                    # accumulate d_l of the diagonal symbol
                    ratio_li = Ev[j] / Ev[i]
                    dratio_li = ((1.0 if l == j else 0.0) * dE[j] / Ev[i]
                                 - (1.0 if l == i else 0.0) * Ev[j] * dE[i] / Ev[i] ** 2)
                    acc += ratio_li * dG[l, i, j] + dratio_li * G[i, j]
                out[l, i, i, i] = -acc
                if l == i:
                    out[l, i, i, i] -= d2E[i] / Ev[i] - (dE[i] / Ev[i]) ** 2
        return out

    if E.second_derivs is None:
        return ChristoffelField(gamma=gamma, dim=n)
    return ChristoffelField(gamma=gamma, dim=n, partials=partials)


def tsarev_residual(g, u):
    """Max violation of the rotation-coefficient integrability system."""
    u = check_distinct(u)
    n = g.dim
    G = g.matrix(u)
    dG = g.partial_matrix(u)
    worst = 0.0
    for i in range(n):
        for j in range(n):
            for k in range(n):
                if len({i, j, k}) < 3:
                    continue
                r = (dG[j, i, k] + G[i, j] * G[i, k]
                     - G[i, k] * G[k, j] - G[i, j] * G[j, k])
                worst = max(worst, abs(r))
    return worst


def offdiag_ratio_residual(g, u):
    """Max violation of the reduced ratio identity.

    Gamma^k_{kj}/Gamma^i_{ij} + Gamma^j_{jk}/Gamma^i_{ik} = 1 for
    distinct i, j, k; holds for structures whose off-diagonal symbols
    solve the reduced integrability system with nonvanishing entries.
    """
    u = check_distinct(u)
    n = g.dim
    G = g.matrix(u)
    worst = 0.0
    for i in range(n):
        for j in range(n):
            for k in range(n):
                if len({i, j, k}) < 3:
                    continue
                worst = max(worst, abs(G[k, j] / G[i, j]
                                       + G[j, k] / G[i, k] - 1.0))
    return worst


def unit_flatness_residual(g, u):
    """Max of |e(Gamma^i_{ij})| = |sum_l d_l Gamma^i_{ij}| over i != j."""
    dG = g.partial_matrix(np.asarray(u, dtype=float))
    n = g.dim
    s = dG.sum(axis=0)
    mask = ~np.eye(n, dtype=bool)
    return float(np.max(np.abs(s[mask])))


def euler_flatness_residual(g, E, u):
    """Max of |E(Gamma^i_{ij}) + (d_j E^j) Gamma^i_{ij}| over i != j."""
    u = np.asarray(u, dtype=float)
    G = g.matrix(u)
    dG = g.partial_matrix(u)
    Ev = E.value(u)
    dE = E.deriv(u)
    n = g.dim
    s = np.einsum('l,lij->ij', Ev, dG) + G * dE[None, :]
    mask = ~np.eye(n, dtype=bool)
    return float(np.max(np.abs(s[mask])))


def multiflat_system_residual(g, E_list, u):
    """Residual vector of the full multi-flat system at a point.

    First entry: the Tsarev-type residual; then one linear-flatness
    residual per eventual identity in ``E_list`` (the unity field is
    the special case E^i = 1).
    """
    out = [tsarev_residual(g, u)]
    out.extend(euler_flatness_residual(g, E, u) for E in E_list)
    return np.array(out)


def algebraic_first_partials(g, u):
    """All first partials of the off-diagonal symbols, from the closed
    system: transversal partials from the integrability equations, the
    remaining two from the unity/Euler linear-flatness relations.

    Returns ``D[k, i, j] = d_k Gamma^i_{ij}``.
    """
    u = check_distinct(np.asarray(u, dtype=float))
    n = g.dim
    G = g.matrix(u)
    D = np.zeros((n, n, n))
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            for k in range(n):
                if k == i or k == j:
                    continue
                D[k, i, j] = (-G[i, j] * G[i, k] + G[i, j] * G[j, k]
                              + G[i, k] * G[k, j])
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            s1 = sum((u[l] - u[j]) * D[l, i, j]
                     for l in range(n) if l not in (i, j))
            s2 = sum((u[i] - u[l]) * D[l, i, j]
                     for l in range(n) if l not in (i, j))
            D[i, i, j] = (s1 + G[i, j]) / (u[j] - u[i])
            D[j, i, j] = (s2 - G[i, j]) / (u[j] - u[i])
    return D


def crosspartials_residual(g, u):
    """Max violation of d_l d_k = d_k d_l on the algebraically closed
    first-partial table; a consistency check of the closed system."""
    u = np.asarray(u, dtype=float)
    dD = fd_field_partials(lambda v: algebraic_first_partials(g, v), u)
    # dD[l, k, i, j] = d_l D[k, i, j]
    return float(np.max(np.abs(dD - dD.transpose(1, 0, 2, 3))))


def semi_hamiltonian_residual(v, u):
    """Max violation of the semi-Hamiltonian closure for characteristic
    speeds ``v(u)`` (an n-vector of pairwise distinct values)."""
    u = np.asarray(u, dtype=float)
    n = u.size

    def a(w):
        J = fd_field_partials(v, w)  # J[k, i] = d_k v^i
        vi = np.asarray(v(w), dtype=float)
        check_distinct(vi)
        A = np.zeros((n, n))
        for i in range(n):
            for k in range(n):
                if i != k:
                    A[i, k] = J[k, i] / (vi[i] - vi[k])
        return A

    da = fd_field_partials(a, u)  # da[j, i, k] = d_j A[i, k]
    worst = 0.0
    for i in range(n):
        for j in range(n):
            for k in range(n):
                if len({i, j, k}) < 3:
                    continue
                worst = max(worst, abs(da[j, i, k] - da[k, i, j]))
    return worst


def hamiltonian_metric_residual(g, metric, u):
    """Compatibility of a diagonal metric with the off-diagonal symbols.

    Checks d_j ln sqrt|g_ii| = Gamma^i_{ij} for i != j, with the metric
    given as ``metric(u) -> (n,)`` diagonal entries.
    """
    u = np.asarray(u, dtype=float)
    n = g.dim
    G = g.matrix(u)
    worst = 0.0
    for i in range(n):
        for j in range(n):
            if i == j:
                continue

            def li(x, i=i, j=j):
                w = u.copy()
                w[j] = x
                return 0.5 * np.log(abs(np.asarray(metric(w), dtype=float)[i]))

            worst = max(worst, abs(fd_derivative(li, u[j]) - G[i, j]))
    return worst


def sample_distinct_points(n, count, rng, low=-3.0, high=3.0,
                           min_sep=0.05, min_abs=0.0):
    """Seeded admissible sample points with separated coordinates."""
    pts = []
    while len(pts) < count:
        u = rng.uniform(low, high, size=n)
        d = np.abs(u[:, None] - u[None, :])
        np.fill_diagonal(d, np.inf)
        if d.min() <= min_sep:
            continue
        if min_abs > 0.0 and np.min(np.abs(u)) <= min_abs:
            continue
        pts.append(u)
    return np.array(pts)
