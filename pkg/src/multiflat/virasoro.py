"""Extended vector fields on (n+1)-space and distribution analysis.

The fields hat-E_(l) extend the diagonal power fields E_(l)^i = (u^i)^l
by one component, -l (u^j)^{l-1} u^{n+1}, attached to a distinguished
index j.  Their brackets realize a centerless Virasoro algebra,
[hat-E_l, hat-E_m] = (m - l) hat-E_{m+l-1}, and the (non-)integrability
of the distributions they span is decided by iterated bracket hulls and
a Vandermonde-derivative determinant.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DomainError, ParameterError
from .numerics import fd_field_partials

RANK_SV_THRESHOLD = 1e-9
POWER_DOMAIN_GUARD = 1e-8


def _pw(x, k):
    """x**k with a domain guard for negative integer exponents."""
    if k == 0:
        return 1.0
    if k < 0 and abs(x) < POWER_DOMAIN_GUARD:
        raise DomainError("negative power of a (near-)zero coordinate")
    return float(x) ** k


@dataclass(frozen=True)
class ExtendedField:
    """hat-E_(l) on coordinates (u^1, ..., u^n, u^{n+1}).

    Components: (u^i)^l for i <= n and -l (u^j)^{l-1} u^{n+1} for the
    last slot.  ``j`` is 1-based to match the usual index notation.
    """

    l: int
    j: int
    n: int

    def __post_init__(self):
        if not 1 <= self.j <= self.n:
            raise ParameterError("distinguished index j must lie in 1..n")

    def val(self, w):
        w = np.asarray(w, dtype=float)
        n, l, j = self.n, self.l, self.j - 1
        out = np.empty(n + 1)
        for i in range(n):
            out[i] = _pw(w[i], l)
        out[n] = 0.0 if l == 0 else -l * _pw(w[j], l - 1) * w[n]
        return out

    def jac(self, w):
        w = np.asarray(w, dtype=float)
        n, l, j = self.n, self.l, self.j - 1
        J = np.zeros((n + 1, n + 1))
        if l != 0:
            for i in range(n):
                J[i, i] = l * _pw(w[i], l - 1)
            J[n, n] = -l * _pw(w[j], l - 1)
            if l != 1:
                J[n, j] = -l * (l - 1) * _pw(w[j], l - 2) * w[n]
        return J

    def hess(self, w):
        w = np.asarray(w, dtype=float)
        n, l, j = self.n, self.l, self.j - 1
        H = np.zeros((n + 1, n + 1, n + 1))
        if l not in (0, 1):
            for i in range(n):
                H[i, i, i] = l * (l - 1) * _pw(w[i], l - 2)
            H[n, j, n] = H[n, n, j] = -l * (l - 1) * _pw(w[j], l - 2)
            if l != 2:
                H[n, j, j] = -l * (l - 1) * (l - 2) * _pw(w[j], l - 3) * w[n]
        return H


@dataclass(frozen=True)
class _BracketField:
    """[X, Y] as a field, with analytic jacobian from the factors."""

    X: object
    Y: object

    def val(self, w):
        return self.Y.jac(w) @ self.X.val(w) - self.X.jac(w) @ self.Y.val(w)

    def jac(self, w):
        HX, HY = self.X.hess(w), self.Y.hess(w)
        JX, JY = self.X.jac(w), self.Y.jac(w)
        xv, yv = self.X.val(w), self.Y.val(w)
        return (np.einsum('ikl,k->il', HY, xv) + JY @ JX
                - np.einsum('ikl,k->il', HX, yv) - JX @ JY)

    def hess(self, w):
        d = fd_field_partials(self.jac, np.asarray(w, dtype=float))
        return np.einsum('lik->ikl', d)


def bracket(X, Y, u):
    """The Lie bracket [X, Y] evaluated at a point."""
    u = np.asarray(u, dtype=float)
    return _BracketField(X, Y).val(u)


def commutation_residual(l, m, u, j=1, n=None):
    """Max component of [hat-E_l, hat-E_m] - (m - l) hat-E_{m+l-1} at u."""
    u = np.asarray(u, dtype=float)
    if n is None:
        n = u.size - 1
    X = ExtendedField(l, j, n)
    Y = ExtendedField(m, j, n)
    target = (m - l) * ExtendedField(m + l - 1, j, n).val(u)
    return float(np.max(np.abs(bracket(X, Y, u) - target)))


@dataclass
class DistributionRank:
    """Result of the iterated bracket-hull rank computation."""

    rank: int
    depth: int
    trace: list = field(default_factory=list)


def _numeric_rank(vectors):
    M = np.stack(vectors)
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > RANK_SV_THRESHOLD * s[0]))


def distribution_rank(indices, u, j=1, max_depth=8):
    """Rank of the bracket hull of {hat-E_(i)}_{i in indices} at ``u``.

    Brackets of all current pairs are appended generation by generation
    until the pointwise rank stabilizes; ``depth`` counts the
    generations that strictly increased it.
    """
    if len(indices) == 0:
        raise ParameterError("indices must be non-empty")
    u = np.asarray(u, dtype=float)
    n = u.size - 1
    fields = [ExtendedField(int(i), j, n) for i in indices]
    vectors = [f.val(u) for f in fields]
    rank = _numeric_rank(vectors)
    trace = [rank]
    depth = 0
    for generation in range(1, max_depth + 1):
        new = [_BracketField(X, Y)
               for a, X in enumerate(fields)
               for Y in fields[a + 1:]]
        vectors.extend(f.val(u) for f in new)
        new_rank = _numeric_rank(vectors)
        trace.append(new_rank)
        if new_rank == rank or new_rank >= n + 1:
            if new_rank > rank:
                depth = generation
            rank = new_rank
            break
        rank = new_rank
        depth = generation
        fields.extend(new)
    return DistributionRank(rank=rank, depth=depth, trace=trace)


def vandermonde_nonholonomy_det(u, j):
    """Determinant of the field matrix of {hat-E_(0), ..., hat-E_(n)}.

    Returns (direct determinant, closed form); the closed form is
    -u^{n+1} times the u^j-derivative of the Vandermonde determinant,

        -u^{n+1} * prod_{p<q<=n} (u^q - u^p) * prod_{m != j} (u^j - u^m)

    up to the derivative expansion, and vanishes exactly when the
    distribution spanned by all n+1 fields is holonomic at u.
    """
    u = np.asarray(u, dtype=float)
    n = u.size - 1
    if not 1 <= j <= n:
        raise ParameterError("distinguished index j must lie in 1..n")
    A = np.stack([ExtendedField(l, j, n).val(u) for l in range(n + 1)])
    direct = float(np.linalg.det(A))

    x = u[:n]
    jj = j - 1
    others = [m for m in range(n) if m != jj]
    vand = 1.0
    for p in range(n):
        for q in range(p + 1, n):
            vand *= x[q] - x[p]
    dprod = 1.0
    for m in others:
        dprod *= x[jj] - x[m]
    closed = -u[n] * vand * dprod
    return direct, closed


def invariant_pde_residual(phi, indices, u, j=1):
    """Max over the index list of |hat-E_(l)(phi)| at ``u`` (FD gradient)."""
    u = np.asarray(u, dtype=float)
    n = u.size - 1
    grad = fd_field_partials(lambda w: np.array([phi(w)]), u)[:, 0]
    worst = 0.0
    for l in indices:
        f = ExtendedField(int(l), j, n)
        worst = max(worst, abs(float(f.val(u) @ grad)))
    return worst
