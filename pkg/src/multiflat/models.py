"""Closed-form model zoo.

Each model supplies off-diagonal connection symbols (with analytic
partials), a product, or a full connection in closed form, ready to be
fed to the residual operators.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import math

import numpy as np

from .errors import DomainError, InvertibilityError, ParameterError, SingularityError
from .geom import ChristoffelField, ProductField, VectorField
from .connections import EventualIdentityDiag, OffDiagonalGammas, check_distinct

VEE_PLANE_TOL = 1e-9
_HYPERPLANE_GUARD = 1e-12


# ---------------------------------------------------------------------------
# epsilon-systems and relatives


@dataclass(frozen=True)
class EpsilonParams:
    """Weights of an epsilon-system; ``eps[j]`` may differ per coordinate."""

    n: int
    eps: np.ndarray

    def __post_init__(self):
        eps = np.asarray(self.eps, dtype=float).reshape(-1)
        if eps.size == 1:
            eps = np.full(self.n, eps[0])
        if eps.size != self.n:
            raise ParameterError("eps must have length n (or be scalar)")
        object.__setattr__(self, "eps", eps)


def epsilon_gammas(params):
    """Off-diagonal symbols Gamma^i_{ij} = eps_j / (u^i - u^j)."""
    if not isinstance(params, EpsilonParams):
        params = EpsilonParams(*params)
    n, eps = params.n, params.eps

    def g(u):
        u = check_distinct(u)
        G = np.zeros((n, n))
        for i in range(n):
            for j in range(n):
                if i != j:
                    G[i, j] = eps[j] / (u[i] - u[j])
        return G

    def partials(u):
        u = check_distinct(u)
        dG = np.zeros((n, n, n))
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                d = (u[i] - u[j]) ** 2
                dG[i, i, j] = -eps[j] / d
                dG[j, i, j] = eps[j] / d
        return dG

    return OffDiagonalGammas(g=g, dim=n, partials=partials)


def biflat2d_gammas(eps1, eps2):
    """Two-dimensional bi-flat structure: the n = 2 epsilon-system."""
    return epsilon_gammas(EpsilonParams(2, np.array([eps1, eps2])))


def fp_metrics(n, alpha):
    """Off-diagonal symbols and the diagonal metric of the alpha-family.

    All members share the eps = -1/2 symbols; the metrics
    g_ii = prod_{k != i}(u^k - u^i) / (u^i)^alpha are flat for
    alpha = 0, ..., n.  Evaluation requires positive coordinates when
    alpha is not an integer.
    """
    alpha = float(alpha)
    gam = epsilon_gammas(EpsilonParams(n, np.full(n, -0.5)))

    def metric(u):
        u = check_distinct(u)
        if alpha != round(alpha) and np.any(u <= 0):
            raise DomainError("non-integer alpha requires positive coordinates")
        out = np.empty(n)
        for i in range(n):
            prod = 1.0
            for k in range(n):
                if k != i:
                    prod *= u[k] - u[i]
            out[i] = prod / u[i] ** alpha
        return out

    return gam, metric


def lauricella_connection(params):
    """The natural connection of an epsilon-system assembled from its
    hyperplane-pair decomposition.

    The flat trivial connection is corrected by one logarithmic term per
    coordinate pair (m, l); the result coincides with
    ``build_natural(epsilon_gammas(params))``.
    """
    if not isinstance(params, EpsilonParams):
        params = EpsilonParams(*params)
    n, eps = params.n, params.eps
    pairs = [(m, l) for m in range(n) for l in range(m + 1, n)]

    def gamma(u):
        u = check_distinct(u)
        gam = np.zeros((n, n, n))
        for (m, l) in pairs:
            w = 1.0 / (u[m] - u[l])
            for j in (m, l):
                sj = 1.0 if j == m else -1.0
                for k in (m, l):
                    sk = 1.0 if k == m else -1.0
                    gam[m, j, k] -= sj * sk * eps[l] * w
                    gam[l, j, k] += sj * sk * eps[m] * w
        return gam

    def partials(u):
        u = check_distinct(u)
        out = np.zeros((n, n, n, n))
        for (m, l) in pairs:
            w2 = 1.0 / (u[m] - u[l]) ** 2
            for p, sp in ((m, 1.0), (l, -1.0)):
                for j in (m, l):
                    sj = 1.0 if j == m else -1.0
                    for k in (m, l):
                        sk = 1.0 if k == m else -1.0
                        out[p, m, j, k] += sp * sj * sk * eps[l] * w2
                        out[p, l, j, k] -= sp * sj * sk * eps[m] * w2
        return out

    return ChristoffelField(gamma=gamma, dim=n, partials=partials)


# ---------------------------------------------------------------------------
# vee-systems


@dataclass(frozen=True)
class VeeSystem:
    """A finite set of covectors (rows) with invertible Gram operator."""

    covectors: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.covectors, dtype=float)
        if A.ndim != 2:
            raise ParameterError("covectors must be a 2-d array")
        object.__setattr__(self, "covectors", A)
        G = A.T @ A
        if np.linalg.cond(G) > 1e12:
            raise InvertibilityError("covector Gram operator is singular")

    @property
    def dim(self):
        return self.covectors.shape[1]

    @property
    def gram(self):
        A = self.covectors
        return A.T @ A

    @property
    def duals(self):
        """Rows are the metric duals of the covectors."""
        A = self.covectors
        return np.linalg.solve(self.gram, A.T).T


def an_covectors(n):
    """Positive-root covectors of type A_n, written in the n coordinates
    that remain after eliminating the last one on the sum-zero plane."""
    rows = []
    for i in range(n):
        for j in range(i + 1, n):
            r = np.zeros(n)
            r[i], r[j] = 1.0, -1.0
            rows.append(r)
    for i in range(n):
        r = np.ones(n)
        r[i] += 1.0
        rows.append(r)
    return np.array(rows)


def _vee_denoms(system, u):
    A = system.covectors
    den = A @ np.asarray(u, dtype=float)
    if np.min(np.abs(den)) < _HYPERPLANE_GUARD:
        raise SingularityError("evaluation point lies on a covector hyperplane")
    return den


def vee_product(system):
    """The semisimple-at-generic-points product of a covector system.

    (X * Y)_u = sum_a a(X) a(Y) a_dual / a(u); the point u itself acts
    as the unity.
    """
    A = system.covectors
    Ad = system.duals
    n = system.dim

    def c(u):
        den = _vee_denoms(system, u)
        return np.einsum('ai,aj,ak,a->ijk', Ad, A, A, 1.0 / den)

    def partials(u):
        den = _vee_denoms(system, u)
        return -np.einsum('al,ai,aj,ak,a->lijk', A, Ad, A, A, 1.0 / den ** 2)

    return ProductField(c=c, dim=n, partials=partials)


def vee_unity_residual(system, u):
    """Max norm of (u * X) - X over coordinate fields."""
    prod = vee_product(system)
    u = np.asarray(u, dtype=float)
    M = np.einsum('ijk,k->ij', prod.table(u), u)
    return float(np.max(np.abs(M - np.eye(system.dim))))


def _plane_key(a, b):
    w = np.outer(a, b) - np.outer(b, a)
    iu = np.triu_indices(a.size, k=1)
    v = w[iu]
    scale = np.max(np.abs(v))
    if scale == 0.0:
        return None
    v = v / scale
    for x in v:
        if abs(x) > 1e-12:
            if x < 0:
                v = -v
            break
    return tuple(np.round(v, 10))


def vee_condition_residual(system):
    """Max violation of the two-plane projection condition.

    For every 2-plane spanned by covectors and every member covector a,
    sum_{b in plane} b(a_dual) b_dual must be parallel to a_dual.
    """
    A = system.covectors
    Ad = system.duals
    m = A.shape[0]
    planes = {}
    for p in range(m):
        for q in range(p + 1, m):
            key = _plane_key(A[p], A[q])
            if key is None:
                continue
            if key not in planes:
                planes[key] = (A[p], A[q])
    worst = 0.0
    for (a1, a2) in planes.values():
        basis = np.stack([a1, a2])
        members = []
        for r in range(m):
            # membership: A[r] lies in span(a1, a2)
            coef, res, *_ = np.linalg.lstsq(basis.T, A[r], rcond=None)
            if np.max(np.abs(basis.T @ coef - A[r])) < VEE_PLANE_TOL:
                members.append(r)
        if len(members) < 2:
            continue
        for r in members:
            v = np.zeros(system.dim)
            for s in members:
                v += (A[s] @ Ad[r]) * Ad[s]
            w = Ad[r]
            wedge = np.outer(v, w) - np.outer(w, v)
            worst = max(worst, float(np.max(np.abs(wedge))))
    return worst


def vee_flat_connection(system, lam=1.0):
    """The lambda-family of flat torsionless connections
    Gamma^k_{ij} = -lambda * c^k_{ij}."""
    prod = vee_product(system)
    lam = float(lam)
    return ChristoffelField(
        gamma=lambda u: -lam * prod.table(u),
        dim=system.dim,
        partials=lambda u: -lam * prod.partial_table(u))


# ---------------------------------------------------------------------------
# three-dimensional tri-flat structures


def _rational_offdiag(n, terms):
    """Off-diagonal symbols from terms K (u^a - u^b) / ((u^c - u^d)(u^e - u^f)).

    ``terms[(i, j)] = (K, (a, b), (c, d), (e, f))`` with 0-based indices.
    """

    def g(u):
        u = check_distinct(u)
        G = np.zeros((n, n))
        for (i, j), (K, (a, b), (c, d), (e, f)) in terms.items():
            G[i, j] = K * (u[a] - u[b]) / ((u[c] - u[d]) * (u[e] - u[f]))
        return G

    def partials(u):
        u = check_distinct(u)
        dG = np.zeros((n, n, n))
        for (i, j), (K, (a, b), (c, d), (e, f)) in terms.items():
            num = u[a] - u[b]
            d1 = u[c] - u[d]
            d2 = u[e] - u[f]
            den = d1 * d2
            for l in range(n):
                dnum = (1.0 if l == a else 0.0) - (1.0 if l == b else 0.0)
                dden = (((1.0 if l == c else 0.0) - (1.0 if l == d else 0.0)) * d2
                        + d1 * ((1.0 if l == e else 0.0) - (1.0 if l == f else 0.0)))
                dG[l, i, j] = K * (dnum / den - num * dden / den ** 2)
        return dG

    return OffDiagonalGammas(g=g, dim=n, partials=partials)


def triflat3d_gammas(C12, C23, C31):
    """Three-dimensional tri-flat symbols, one constant per row pair.

    The three free constants must satisfy C12 + C23 + C31 = 1; the
    remaining constants are fixed as C13 = -C12, C21 = -C23,
    C32 = -C31.
    """
    if abs(C12 + C23 + C31 - 1.0) > 1e-12:
        raise ParameterError("constants must satisfy C12 + C23 + C31 = 1")
    C13, C21, C32 = -C12, -C23, -C31
    terms = {
        (0, 1): (C12, (2, 0), (1, 0), (1, 2)),
        (0, 2): (C13, (0, 1), (2, 0), (2, 1)),
        (1, 0): (C21, (1, 2), (0, 2), (0, 1)),
        (1, 2): (C23, (0, 1), (2, 0), (2, 1)),
        (2, 0): (C31, (1, 2), (0, 2), (0, 1)),
        (2, 1): (C32, (2, 0), (1, 0), (1, 2)),
    }
    return _rational_offdiag(3, terms)


def triflat3d_exponential_gammas(C12, C23, C31):
    """The same 3-d tri-flat structure in coordinates that rectify the
    second eventual identity: the pullback of :func:`triflat3d_gammas`
    under u^i -> exp(u^i)."""
    base = triflat3d_gammas(C12, C23, C31)

    def g(u):
        u = np.asarray(u, dtype=float)
        return base.matrix(np.exp(u)) * np.exp(u)[None, :]

    def partials(u):
        u = np.asarray(u, dtype=float)
        eu = np.exp(u)
        G = base.matrix(eu)
        dG = base.partials(eu)  # with respect to the exponential coords
        n = 3
        out = np.zeros((n, n, n))
        for l in range(n):
            out[l] = dG[l] * eu[l] * eu[None, :]
            out[l, :, l] += G[:, l] * eu[l]
        return out

    return OffDiagonalGammas(g=g, dim=3, partials=partials)


def exponential_identities(l_values=(0, 1, 2)):
    """Diagonal identities E^i = exp((l-1) u^i) matching the exponential
    3-d coordinates, one per weight l."""
    out = []
    for l in l_values:
        k = float(l - 1)
        out.append(EventualIdentityDiag(
            funcs=tuple(lambda t, k=k: math.exp(k * t) for _ in range(3)),
            derivs=tuple(lambda t, k=k: k * math.exp(k * t) for _ in range(3)),
            second_derivs=tuple(lambda t, k=k: k * k * math.exp(k * t)
                                for _ in range(3))))
    return out


# ---------------------------------------------------------------------------
# exponential eventual identities


def exponential_eventual_identity(beta, c, alpha, n=None):
    """Diagonal eventual identities closing a two-dimensional algebra
    with the unity: E^i = c_i exp(beta u^i) - alpha/beta for beta != 0,
    and E^i = alpha u^i in the beta -> 0 limit."""
    beta = float(beta)
    alpha = float(alpha)
    if beta == 0.0:
        if n is None:
            n = len(np.atleast_1d(c))
        return EventualIdentityDiag(
            funcs=tuple(lambda t: alpha * t for _ in range(n)),
            derivs=tuple(lambda t: alpha for _ in range(n)),
            second_derivs=tuple(lambda t: 0.0 for _ in range(n)))
    cv = np.asarray(c, dtype=float).reshape(-1)
    return EventualIdentityDiag(
        funcs=tuple(lambda t, ci=ci: ci * math.exp(beta * t) - alpha / beta
                    for ci in cv),
        derivs=tuple(lambda t, ci=ci: ci * beta * math.exp(beta * t)
                     for ci in cv),
        second_derivs=tuple(lambda t, ci=ci: ci * beta * beta * math.exp(beta * t)
                            for ci in cv))


# ---------------------------------------------------------------------------
# regular (non-semisimple) normal forms


@dataclass(frozen=True)
class JordanData:
    """Product, unity, and Euler-type field of a regular normal form."""

    product: ProductField
    e: VectorField
    E: VectorField
    blocks: tuple


def jordan_canonical_data(n, blocks=None):
    """Regular normal form with the given Jordan block sizes.

    Within a block of size m starting at offset o the structure
    constants are shift-type, c^{o+k}_{o+i, o+j} = 1 when the local
    indices satisfy i + j = k; the unity is the sum of the first
    coordinate fields of the blocks and the Euler-type field is
    E = sum_i u^i d_i.
    """
    if blocks is None:
        blocks = (n,)
    blocks = tuple(int(b) for b in blocks)
    if sum(blocks) != n or any(b < 1 for b in blocks):
        raise ParameterError("block sizes must be positive and sum to n")

    table = np.zeros((n, n, n))
    ev = np.zeros(n)
    off = 0
    for b in blocks:
        for i in range(b):
            for j in range(b):
                if i + j < b:
                    table[off + i + j, off + i, off + j] = 1.0
        ev[off] = 1.0
        off += b

    prod = ProductField(
        c=lambda u: table, dim=n,
        partials=lambda u: np.zeros((n, n, n, n)))
    return JordanData(product=prod,
                      e=VectorField.constant(ev),
                      E=VectorField.euler(n),
                      blocks=blocks)
