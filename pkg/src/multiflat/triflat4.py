"""Rotation-coefficient data with three linear symmetries, and the
four-dimensional cross-ratio reduction.

A triple of compatible connections on a semisimple structure is
encoded by rotation coefficients ``beta_ij`` and Lame coefficients
``H_i`` subject to the closed Darboux-Egorov system augmented by the
actions of the unity, Euler, and squared-Euler fields.  This module
checks that augmented system pointwise, assembles the three
connections it generates, and implements the four-dimensional
reduction where all off-diagonal symbols collapse to twelve functions
of a single cross-ratio; the solvable branch of that reduction is a
hypergeometric one-parameter family.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Mapping, Tuple

import numpy as np

from .connections import (EventualIdentityDiag, OffDiagonalGammas,
                          build_dual, build_natural, check_distinct)
from .errors import DomainError, ParameterError
from .numerics import fd_derivative, fd_field_partials, hyp2f1

CROSS_RATIO_GUARD = 1e-8

#: 1-based (upper, lower) index pairs of the twelve reduced unknowns.
PAIR_ORDER = ((1, 2), (1, 3), (1, 4), (2, 1), (2, 3), (2, 4),
              (3, 1), (3, 2), (3, 4), (4, 1), (4, 2), (4, 3))


@dataclass(frozen=True)
class ResidualReport:
    """Named residual magnitudes of a pointwise system check."""

    entries: Dict[str, float] = field(default_factory=dict)

    @property
    def max_abs(self) -> float:
        return max(self.entries.values())

    def __getitem__(self, key):
        return self.entries[key]


@dataclass(frozen=True)
class EgorovData:
    """Rotation coefficients, Lame coefficients, and their weights.

    ``beta(u)`` returns the matrix beta_ij (the diagonal is ignored),
    ``H(u)`` the vector of Lame coefficients, and ``d``, ``c`` the
    constant weight vectors appearing in the squared-Euler symmetry.
    H_i must not vanish on the working domain.
    """

    beta: Callable
    H: Callable
    d: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "d", np.asarray(self.d, dtype=float))
        object.__setattr__(self, "c", np.asarray(self.c, dtype=float))
        if self.d.shape != self.c.shape or self.d.ndim != 1:
            raise ParameterError("weight vectors d and c must share a length")

    @property
    def dim(self):
        return self.d.size


def egorov_residual(data: EgorovData, u) -> ResidualReport:
    """Pointwise residuals of the augmented Darboux-Egorov system.

    The report carries one entry per equation group: the closure of the
    rotation coefficients under cross-derivatives, their three linear
    symmetries (translation, scaling with weight -1, and the quadratic
    scaling with weights built from ``d`` and ``c``), and the matching
    four conditions on the Lame coefficients.
    """
    u = check_distinct(u)
    n = data.dim
    if u.size != n:
        raise ParameterError("point dimension does not match the data")
    B = np.asarray(data.beta(u), dtype=float)
    Hv = np.asarray(data.H(u), dtype=float)
    dB = fd_field_partials(lambda w: np.asarray(data.beta(w), dtype=float), u)
    dH = fd_field_partials(lambda w: np.asarray(data.H(w), dtype=float), u)
    off = ~np.eye(n, dtype=bool)
    u2 = u ** 2

    closure = 0.0
    for i in range(n):
        for j in range(n):
            for k in range(n):
                if len({i, j, k}) < 3:
                    continue
                closure = max(closure, abs(dB[k, i, j] - B[i, k] * B[k, j]))

    weight = (2.0 * data.d[:, None] * u[:, None]
              - 2.0 * (data.d[None, :] + 1.0) * u[None, :]
              + data.c[:, None] - data.c[None, :])
    entries = {
        "beta-closure": closure,
        "beta-translation": float(np.max(np.abs(dB.sum(axis=0)[off]))),
        "beta-scaling": float(np.max(np.abs(
            (np.einsum('l,lij->ij', u, dB) + B)[off]))),
        "beta-quadratic": float(np.max(np.abs(
            (np.einsum('l,lij->ij', u2, dB) - weight * B)[off]))),
        "lame-closure": float(np.max(np.abs(
            (dH.T - B * Hv[None, :])[off]))),
        "lame-translation": float(np.max(np.abs(dH.sum(axis=0)))),
        "lame-scaling": float(np.max(np.abs(
            np.einsum('l,li->i', u, dH) - data.d * Hv))),
        "lame-quadratic": float(np.max(np.abs(
            np.einsum('l,li->i', u2, dH)
            - (2.0 * data.d * u + data.c) * Hv))),
    }
    return ResidualReport(entries=entries)


def egorov_offdiag(data: EgorovData) -> OffDiagonalGammas:
    """Off-diagonal symbols (H_j/H_i) beta_ij generated by the data."""

    def g(u):
        u = np.asarray(u, dtype=float)
        B = np.asarray(data.beta(u), dtype=float)
        Hv = np.asarray(data.H(u), dtype=float)
        G = B * (Hv[None, :] / Hv[:, None])
        np.fill_diagonal(G, 0.0)
        return G

    return OffDiagonalGammas(g=g, dim=data.dim)


def triflat_connection_triple(data: EgorovData, u=None):
    """The three connections generated by the data.

    All three share the off-diagonal symbols (H_j/H_i) beta_ij; the
    diagonal slots are completed so that, in order, the unity field,
    the Euler field, and its square are parallel.  If ``u`` is given
    the point is validated (distinct coordinates, nonvanishing H).
    """
    n = data.dim
    if u is not None:
        u = check_distinct(u)
        Hv = np.asarray(data.H(u), dtype=float)
        if np.min(np.abs(Hv)) < 1e-12:
            raise DomainError("a Lame coefficient vanishes at this point")
    g = egorov_offdiag(data)
    return (build_natural(g),
            build_dual(g, EventualIdentityDiag.euler(n)),
            build_dual(g, EventualIdentityDiag.power(n, 2)))


def triflat3d_egorov_data(C12, C23, C31) -> EgorovData:
    """Exact data for the three-dimensional constant family.

    The Lame coefficients are products of powers of coordinate
    differences; they require the ordering u^1 > u^2 > u^3 when the
    exponents are non-integer.  The weights are d = (-C12, -C23, -C31)
    and c = 0.
    """
    if abs(C12 + C23 + C31 - 1.0) > 1e-12:
        raise ParameterError("the three constants must sum to 1")
    C13, C21, C32 = -C12, -C23, -C31
    # exponents of (u1-u2, u1-u3, u2-u3) for each H_i
    expo = np.array([[-C12, -C12, C12],
                     [-C23, C23, -C23],
                     [C31, -C31, -C31]])

    def _diffs(u):
        d12, d13, d23 = u[0] - u[1], u[0] - u[2], u[1] - u[2]
        if min(d12, d13, d23) <= 0.0:
            raise DomainError("coordinates must satisfy u1 > u2 > u3")
        return np.array([d12, d13, d23])

    def H(u):
        u = np.asarray(u, dtype=float)
        return np.prod(_diffs(u)[None, :] ** expo, axis=1)

    def beta(u):
        u = np.asarray(u, dtype=float)
        _diffs(u)
        u1, u2, u3 = u
        G = np.array([
            [0.0,
             C12 * (u3 - u1) / ((u2 - u1) * (u2 - u3)),
             C13 * (u1 - u2) / ((u3 - u1) * (u3 - u2))],
            [C21 * (u2 - u3) / ((u1 - u3) * (u1 - u2)),
             0.0,
             C23 * (u1 - u2) / ((u3 - u1) * (u3 - u2))],
            [C31 * (u2 - u3) / ((u1 - u3) * (u1 - u2)),
             C32 * (u3 - u1) / ((u2 - u1) * (u2 - u3)),
             0.0]])
        Hv = H(u)
        return G * (Hv[:, None] / Hv[None, :])

    return EgorovData(beta=beta, H=H,
                      d=np.array([-C12, -C23, -C31]),
                      c=np.zeros(3))


# ---------------------------------------------------------------------------
# four-dimensional cross-ratio reduction


def cross_ratio(u):
    """z = (u1-u2)(u3-u4) / ((u2-u3)(u1-u4)) with a separation guard."""
    u = check_distinct(u, CROSS_RATIO_GUARD)
    if u.size != 4:
        raise ParameterError("the cross-ratio reduction needs 4 coordinates")
    return float((u[0] - u[1]) * (u[2] - u[3])
                 / ((u[1] - u[2]) * (u[0] - u[3])))


def _prefactors(u):
    u1, u2, u3, u4 = u
    return {
        1: (u3 - u2) / ((u1 - u3) * (u1 - u2)),
        2: (u3 - u1) / ((u2 - u3) * (u2 - u1)),
        3: (u2 - u1) / ((u3 - u1) * (u3 - u2)),
        4: (u1 - u3) / ((u4 - u1) * (u4 - u3)),
    }


def triflat4d_gammas(F: Mapping[Tuple[int, int], Callable],
                     u=None) -> OffDiagonalGammas:
    """Off-diagonal symbols built from twelve cross-ratio profiles.

    ``F`` maps 1-based index pairs (i, j), i != j, to scalar functions
    of the cross-ratio; the symbol in slot (i, j) is F_ij(z) times a
    rational prefactor depending only on the lower index j.  When ``u``
    is supplied it is validated immediately.
    """
    missing = [p for p in PAIR_ORDER if p not in F]
    if missing:
        raise ParameterError(f"missing cross-ratio profiles: {missing}")
    if u is not None:
        cross_ratio(u)

    def g(w):
        w = np.asarray(w, dtype=float)
        z = cross_ratio(w)
        pref = _prefactors(w)
        G = np.zeros((4, 4))
        for (i, j) in PAIR_ORDER:
            G[i - 1, j - 1] = float(F[(i, j)](z)) * pref[j]
        return G

    return OffDiagonalGammas(g=g, dim=4)


@dataclass(frozen=True)
class TriflatC:
    """Integration constants of the solvable branch of the reduction.

    ``C9 = 1 - C3`` and ``C7 = C2 + C3 - 2`` are derived; the branch
    corresponds to a vanishing first constant, which removes four of
    the eight linear relations among the twelve profiles.
    """

    C2: float
    C3: float
    C8: float

    @property
    def C9(self) -> float:
        return 1.0 - self.C3

    @property
    def C7(self) -> float:
        return self.C2 + self.C3 - 2.0

    def __post_init__(self):
        c9 = 1.0 - self.C3
        if c9 <= 0.0 and abs(c9 - round(c9)) < 1e-12:
            raise ParameterError(
                "1 - C3 must not be a nonpositive integer")


def triflat4d_family(t: TriflatC, z) -> Dict[Tuple[int, int], float]:
    """The twelve profile values of the hypergeometric family at ``z``.

    Valid for z > 1, where the series argument 1/z lies inside the unit
    interval.  F_12 is the hypergeometric closed form; the rest follow
    from the linear relations of the solvable branch.
    """
    z = float(z)
    if z <= 1.0:
        raise DomainError("the closed-form family is constructed for z > 1")
    C2, C3, C8, C9, C7 = t.C2, t.C3, t.C8, t.C9, t.C7
    h = hyp2f1(C2, C9, 1.0 + C9, 1.0 / z)
    den = C8 * C9 * z ** C9 + h
    if abs(den) < 1e-300:
        raise DomainError("family denominator vanishes at this z")
    F12 = C9 * z ** C2 * (z - 1.0) ** (-C2) / den
    F34 = C3 + F12 - 1.0
    F21 = F34 * (z - 1.0) + 1.0 - C2
    F42 = ((1.0 - C3) * z + F34 * (z - 1.0) - C2) / (z - 1.0)
    return {
        (1, 2): F12,
        (1, 4): F12,
        (1, 3): -(z - 1.0) * F12 / z,
        (3, 4): F34,
        (3, 2): F34 + C2,
        (3, 1): (z - 1.0) * F34 - C2,
        (2, 1): F21,
        (2, 3): (C7 * (z - 1.0) - F21) / z,
        (2, 4): (C7 + F21) / (z - 1.0),
        (4, 2): F42,
        (4, 1): C3 * z + (z - 1.0) * F42,
        (4, 3): -(C3 + (z - 1.0) * F42) / z,
    }


def family_profiles(t: TriflatC) -> Dict[Tuple[int, int], Callable]:
    """The family as twelve callables of z, ready for triflat4d_gammas."""
    return {pair: (lambda z, p=pair: triflat4d_family(t, z)[p])
            for pair in PAIR_ORDER}


def constraint_residuals(t: TriflatC, F: Mapping[Tuple[int, int], float],
                         z) -> np.ndarray:
    """The eight linear relations among the profiles, as residuals.

    The first two have right-hand side zero (the vanishing first
    constant of the solvable branch); the rest involve C2, C3, C7.
    """
    z = float(z)
    return np.array([
        F[(1, 4)] - F[(1, 2)],
        z * F[(1, 3)] + (z - 1.0) * F[(1, 2)],
        F[(3, 2)] - F[(3, 4)] - t.C2,
        (z - 1.0) * F[(3, 4)] - F[(3, 1)] - t.C2,
        -z * F[(4, 3)] - (z - 1.0) * F[(4, 2)] - t.C3,
        F[(4, 1)] / z - (z - 1.0) / z * F[(4, 2)] - t.C3,
        z * F[(2, 3)] / (z - 1.0) + F[(2, 1)] / (z - 1.0) - t.C7,
        (z - 1.0) * F[(2, 4)] - F[(2, 1)] - t.C7,
    ])


def _rhs_pairs(F, z):
    """Both displayed right-hand sides of the 24-equation system."""
    f = lambda i, j: F[(i, j)]
    zm = z - 1.0
    return {
        (1, 2): (-(-f(1, 2) * f(1, 3) + f(1, 2) * f(2, 3)
                   + f(3, 2) * f(1, 3) + f(1, 2)) / zm,
                 -(-f(4, 2) * f(1, 4) + f(1, 2) * f(1, 4)
                   - f(1, 2) * f(2, 4)) / z),
        (1, 3): ((f(1, 2) * f(2, 3) - f(1, 2) * f(1, 3)
                  + f(3, 2) * f(1, 3) - f(1, 3)) / z,
                 (-f(1, 4) * f(1, 3) + f(1, 4) * f(4, 3)
                  + f(3, 4) * f(1, 3)) / z),
        (1, 4): (-(-f(4, 2) * f(1, 4) + f(1, 2) * f(1, 4)
                   - f(1, 2) * f(2, 4)) / z,
                 -((f(3, 4) * f(1, 3) + f(1, 4) * f(4, 3)
                    - f(1, 4) * f(1, 3)) * z + f(1, 4)) / (z * zm)),
        # sign of both published forms corrected; the flipped sign is
        # inconsistent with the linear relations and the other 22
        # equations, which all confirm this orientation
        (2, 1): ((f(2, 3) * f(2, 1) - f(1, 3) * f(2, 1)
                  - f(2, 3) * f(3, 1) + f(2, 1)) / zm,
                 (-f(2, 4) * f(2, 1) + f(2, 4) * f(4, 1)
                  + f(1, 4) * f(2, 1)) / z),
        (2, 3): (-(-f(1, 3) * f(2, 1) + f(2, 3) * f(2, 1)
                   - f(2, 3) * f(3, 1) - f(2, 3)) / (zm * z),
                 (f(2, 3) * f(3, 4) - f(2, 3) * f(2, 4)
                  + f(4, 3) * f(2, 4)) / z),
        (2, 4): ((f(1, 4) * f(2, 1) - f(2, 4) * f(2, 1)
                  + f(2, 4) * f(4, 1) - f(2, 4) * z) / (zm * z),
                 -(z * (f(3, 4) * f(2, 3) - f(2, 4) * f(2, 3)
                        + f(2, 4) * f(4, 3)) + f(2, 4)) / (zm * z)),
        (3, 1): (-(-f(3, 1) * f(1, 4) + f(3, 1) * f(3, 4)
                   - f(4, 1) * f(3, 4)) / z,
                 (f(3, 1) * f(1, 2) + f(2, 1) * f(3, 2)
                  - f(3, 1) * f(3, 2) + f(3, 1)) / z),
        (3, 2): ((f(3, 1) * f(1, 2) + f(2, 1) * f(3, 2)
                  - f(3, 1) * f(3, 2) - f(3, 2)) / (zm * z),
                 (f(3, 4) * f(4, 2) - f(3, 4) * f(3, 2)
                  + f(2, 4) * f(3, 2)) / z),
        (3, 4): (-(f(3, 1) * f(3, 4) - f(4, 1) * f(3, 4)
                   - f(3, 1) * f(1, 4) + f(3, 4) * z) / (zm * z),
                 (f(3, 4) * f(4, 2) - f(3, 4) * f(3, 2)
                  + f(2, 4) * f(3, 2)) / z),
        (4, 1): ((f(4, 1) * f(1, 2) + f(2, 1) * f(4, 2)
                  - f(4, 1) * f(4, 2) + f(4, 1)) / z,
                 -(f(3, 1) * f(4, 3) + f(4, 1) * f(1, 3)
                   - f(4, 1) * f(4, 3) - f(4, 1)) / zm),
        (4, 2): ((f(4, 1) * f(1, 2) + f(2, 1) * f(4, 2)
                  - f(4, 1) * f(4, 2) - f(4, 2)) / (zm * z),
                 -(f(4, 2) * f(2, 3) - f(4, 2) * f(4, 3)
                   + f(3, 2) * f(4, 3) + f(4, 2)) / zm),
        (4, 3): ((f(3, 1) * f(4, 3) - f(4, 1) * f(4, 3)
                  + f(4, 1) * f(1, 3) + f(4, 3)) / (zm * z),
                 (f(4, 2) * f(2, 3) - f(4, 2) * f(4, 3)
                  + f(3, 2) * f(4, 3) - f(4, 3)) / z),
    }


def rhs_pair_spread(F: Mapping[Tuple[int, int], float], z) -> float:
    """Max disagreement between the two right-hand sides per unknown."""
    pairs = _rhs_pairs(F, float(z))
    return max(abs(a - b) for a, b in pairs.values())


def system_residuals(F: Mapping[Tuple[int, int], Callable], z) -> np.ndarray:
    """Residuals of all 24 reduced equations at ``z``.

    ``F`` maps index pairs to callables of z; derivatives are taken by
    finite differences.  Returns the 24 residuals in PAIR_ORDER, the
    two displayed forms consecutively for each unknown.
    """
    z = float(z)
    vals = {p: float(F[p](z)) for p in PAIR_ORDER}
    pairs = _rhs_pairs(vals, z)
    out = []
    for p in PAIR_ORDER:
        dp = fd_derivative(lambda s, p=p: float(F[p](s)), z)
        a, b = pairs[p]
        out.extend((dp - a, dp - b))
    return np.array(out)


def final_equation_residual(t: TriflatC, z) -> float:
    """Residual of the single first-order equation the branch solves.

    |F12'(z) + F12 [(F12 + C3 - 1)(1 - z) + C2] / (z(z-1))| with the
    derivative taken by finite differences of the closed form.
    """
    z = float(z)
    F12 = triflat4d_family(t, z)[(1, 2)]
    dF12 = fd_derivative(lambda s: triflat4d_family(t, s)[(1, 2)], z)
    return abs(dF12 + F12 * ((F12 + t.C3 - 1.0) * (1.0 - z) + t.C2)
               / (z * (z - 1.0)))
