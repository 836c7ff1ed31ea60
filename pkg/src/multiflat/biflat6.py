"""The six-field bi-flat ODE system and its sigma-form reduction.

Three-dimensional bi-flat structures whose off-diagonal symbols scale
homogeneously reduce to six functions F_ij of the cross-ratio variable
z = (u^2 - u^3)/(u^1 - u^2).  The functions obey a first-order system
with three linear, one quadratic, and one cubic first integral; the
combination f = F23 F32 + z F12 F21 - q1/2 solves a sigma-form
Painleve VI equation, and conversely the six fields can be recovered
from (f, f', f'') by purely algebraic operations.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._backend import maybe_njit
from .errors import (AmbiguousSignError, DegenerateMuError, DomainError,
                     ParameterError, ReconstructionError, SingularityError)
from .numerics import fd_derivative, hyp2f1, rk_adaptive

INTEGRAL_IDENTITY_TOL = 1e-10
MU_DEGENERATE_TOL = 1e-10
SIGN_AMBIGUITY_RATIO = 2.0

FIELD_NAMES = ("F12", "F21", "F13", "F31", "F23", "F32")


@dataclass(frozen=True)
class BiflatState:
    """The six fields and the cross-ratio abscissa of one system state."""

    F12: float
    F21: float
    F13: float
    F31: float
    F23: float
    F32: float
    z: float

    @property
    def vector(self):
        return np.array([self.F12, self.F21, self.F13,
                         self.F31, self.F23, self.F32])

    @staticmethod
    def from_vector(y, z):
        y = np.asarray(y, dtype=float)
        if y.size != 6:
            raise ParameterError("state vector must have six components")
        return BiflatState(*[float(v) for v in y], z=float(z))


@dataclass(frozen=True)
class IntegralValues:
    """Values of the five first integrals; the cubic one is dependent,
    I5 = -I3 I4 + I1 I2 I3, and the constructor enforces the identity."""

    I1: float
    I2: float
    I3: float
    I4: float
    I5: float

    def __post_init__(self):
        target = -self.I3 * self.I4 + self.I1 * self.I2 * self.I3
        scale = max(1.0, abs(target))
        if abs(self.I5 - target) > INTEGRAL_IDENTITY_TOL * scale:
            raise ParameterError("I5 violates the cubic-integral identity")

    @property
    def as_array(self):
        return np.array([self.I1, self.I2, self.I3, self.I4, self.I5])


@maybe_njit
def _mainsys_kernel(z, y):
    F12, F21, F13, F31, F23, F32 = y[0], y[1], y[2], y[3], y[4], y[5]
    den = z * (z - 1.0)
    a = (F12 * F23 - F12 * F13) * z - F12 * F23 + F32 * F13
    b = (F21 * F23 - F21 * F13) * z + F23 * F31 - F23 * F21
    c = (-F31 * F12 + F21 * F32) * z + F31 * F32 - F21 * F32
    out = np.empty(6)
    out[0] = -a / den
    out[1] = b / den
    out[2] = a / den
    out[3] = -c / den
    out[4] = -b / den
    out[5] = c / den
    return out


def mainsys_rhs(z, y):
    """Right-hand side of the six-field system at (z, y)."""
    y = np.asarray(y, dtype=float)
    if y.size != 6:
        raise ParameterError("state vector must have six components")
    z = float(z)
    if z * (z - 1.0) == 0.0:
        raise SingularityError("right-hand side has poles at z = 0 and z = 1",
                               last_t=z)
    return _mainsys_kernel(z, y)


def first_integrals(state):
    """The five first integrals of a state (BiflatState or 6-vector)."""
    if isinstance(state, BiflatState):
        y = state.vector
    else:
        y = np.asarray(state, dtype=float)
    F12, F21, F13, F31, F23, F32 = y
    I1 = F12 + F13
    I2 = F23 + F21
    I3 = F31 + F32
    I4 = F31 * F13 + F12 * F21 + F23 * F32
    # cubic integral, via its explicit polynomial expression
    I5 = (F21 * F13 * F32 + F12 * F23 * F31
          + (I2 - I3) * F13 * F31 + (I1 - I3) * F23 * F32)
    return IntegralValues(I1, I2, I3, I4, I5)


def integrate(state0, z1, rtol=1e-10, atol=1e-12):
    """Integrate the six-field system from state0.z to z1."""
    if not isinstance(state0, BiflatState):
        raise ParameterError("state0 must be a BiflatState")
    return rk_adaptive(mainsys_rhs, state0.vector, state0.z, z1,
                       rtol=rtol, atol=atol)


def integral_drift(traj):
    """Max relative drift of each first integral along a trajectory."""
    ref = first_integrals(traj.y[0]).as_array
    worst = np.zeros(5)
    for y in traj.y[1:]:
        cur = first_integrals(y).as_array
        worst = np.maximum(worst, np.abs(cur - ref) / np.maximum(1.0, np.abs(ref)))
    return worst


# ---------------------------------------------------------------------------
# sigma-form reduction


@dataclass(frozen=True)
class SigmaSample:
    """Reduced data (f, f', f'', g1, g2) at one abscissa."""

    z: float
    f: float
    fp: float
    fpp: float
    g1: float
    g2: float


def _sigma_values(y, z, q1):
    F12, F21, F13, F31, F23, F32 = y
    f = F23 * F32 + z * F12 * F21 - q1 / 2.0
    fp = F12 * F21
    fpp = (F23 * F31 * F12 - F13 * F32 * F21) / (z * (z - 1.0))
    g1 = f - z * fp + q1 / 2.0
    g2 = (z - 1.0) * fp - f + q1 / 2.0
    return SigmaSample(z=float(z), f=f, fp=fp, fpp=fpp, g1=g1, g2=g2)


def sigma_reduction(traj, zs=None):
    """Reduce a trajectory to sigma-form samples.

    Returns (samples, fprime_check): the reduced data at the requested
    abscissae and the worst disagreement between the algebraic f' and a
    finite-difference derivative of f along the trajectory.
    """
    q1 = first_integrals(traj.y[0]).I4
    if zs is None:
        pad = 0.02 * max(1.0, abs(traj.t1)) + 1e-6
        zs = np.linspace(traj.t0 + pad, traj.t1 - pad, 41)
    zs = np.atleast_1d(np.asarray(zs, dtype=float))
    samples = [_sigma_values(traj.eval(z), z, q1) for z in zs]

    def f_of(zz):
        y = traj.eval(zz)
        return y[4] * y[5] + zz * y[0] * y[1] - q1 / 2.0

    worst = 0.0
    for s in samples:
        h2 = 2.0 * 6e-3 * max(1.0, abs(s.z))
        if s.z - h2 < traj.t0 or s.z + h2 > traj.t1:
            continue
        worst = max(worst, abs(fd_derivative(f_of, s.z) - s.fp))
    return samples, worst


def pvi_residual(sample, ints):
    """Residual of the sigma-form equation at one reduced sample."""
    z = sample.z
    d1, d2, d3, q1, q2 = ints.I1, ints.I2, ints.I3, ints.I4, ints.I5
    lhs = (z * (z - 1.0) * sample.fpp) ** 2
    rhs = ((q2 - (d2 - d3) * sample.g2 - (d1 - d3) * sample.g1) ** 2
           - 4.0 * sample.fp * sample.g1 * sample.g2)
    return abs(lhs - rhs)


# ---------------------------------------------------------------------------
# algebraic reconstruction


@dataclass(frozen=True)
class ReconstructionParams:
    """Choices fixing the algebraic reconstruction.

    Either (d13, d23, q1, q2) with a cubic ``branch``, or explicit
    (d1, d2, d3, q1, q2).  ``mu_branch``/``sign`` select between the
    two quadratic roots and the global sign; ``None`` means resolve
    automatically from the f''-identity.
    """

    q1: float
    q2: float
    d13: Optional[float] = None
    d23: Optional[float] = None
    d1: Optional[float] = None
    d2: Optional[float] = None
    d3: Optional[float] = None
    branch: int = 0
    mu_branch: Optional[int] = None
    sign: Optional[int] = None


def cubic_roots_sorted(d13, d23, q1, q2):
    """Real-sorted roots (by real part) of the branch cubic for d1,
    computed from the companion matrix."""
    coeffs = [1.0, -(2.0 * d13 - d23), d13 ** 2 - d13 * d23 - q1,
              q1 * d13 - q2]
    roots = np.roots(coeffs)
    return roots[np.argsort(roots.real)]


def _resolve_ds(params):
    if params.d1 is not None:
        if params.d2 is None or params.d3 is None:
            raise ParameterError("give all of d1, d2, d3 or none")
        return params.d1, params.d2, params.d3
    if params.d13 is None or params.d23 is None:
        raise ParameterError("need (d13, d23) or explicit (d1, d2, d3)")
    roots = cubic_roots_sorted(params.d13, params.d23, params.q1, params.q2)
    if not 0 <= params.branch < 3:
        raise ParameterError("cubic branch must be 0, 1 or 2")
    r = roots[params.branch]
    if abs(r.imag) > 1e-8 * max(1.0, abs(r)):
        raise ReconstructionError("selected cubic branch is complex")
    d1 = float(r.real)
    d2 = d1 - params.d13 + params.d23
    d3 = d1 - params.d13
    return d1, d2, d3


def _assemble(mu, s, d1, d2, d3, fp, g1):
    if abs(mu) < 1e-14:
        raise ReconstructionError("reconstruction variable vanished")
    den = mu * d2 - g1
    if abs(den) < 1e-14:
        raise ReconstructionError("division by mu*d2 - g1 = 0")
    F12 = mu * fp / den
    return np.array([F12, d2 - g1 / mu, d1 - F12,
                     d3 - mu, g1 / mu, mu]) * s


def reconstruct(z, f, fp, fpp, params):
    """Recover a six-field state from sigma data at one abscissa.

    Solves the quadratic for the reconstruction variable mu, assembles
    the fields, and resolves the branch/sign choices against the
    identity f'' = (F23 F31 F12 - F13 F32 F21)/(z (z-1)).  Raises
    :class:`DegenerateMuError` when the quadratic vanishes identically
    (exceptional linear family) and :class:`AmbiguousSignError` when
    the two global signs fit about equally well.
    """
    z, f, fp, fpp = float(z), float(f), float(fp), float(fpp)
    d1, d2, d3 = _resolve_ds(params)
    q1 = params.q1
    g1 = f - z * fp + q1 / 2.0
    g2 = (z - 1.0) * fp - f + q1 / 2.0

    a = fp - d1 * d2
    b = d1 * d2 * d3 + d1 * g1 - d2 * g2 - d3 * fp
    c = -d1 * d3 * g1 + g1 * g2
    if max(abs(a), abs(b), abs(c)) < MU_DEGENERATE_TOL:
        raise DegenerateMuError("mu quadratic vanishes identically")

    if abs(a) < 1e-14:
        if abs(b) < 1e-14:
            raise ReconstructionError("mu equation has no finite root")
        mus = [-c / b]
    else:
        disc = b * b - 4.0 * a * c
        if disc < 0.0:
            if disc < -1e-10 * max(1.0, b * b):
                raise ReconstructionError("mu roots are complex")
            disc = 0.0
        sq = np.sqrt(disc)
        mus = sorted([(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)])
    if params.mu_branch is not None:
        if not 0 <= params.mu_branch < len(mus):
            raise ParameterError("mu_branch out of range")
        mus = [mus[params.mu_branch]]

    def fpp_residual(y):
        F12, F21, F13, F31, F23, F32 = y
        return abs(fpp - (F23 * F31 * F12 - F13 * F32 * F21)
                   / (z * (z - 1.0)))

    # The two mu roots yield globally mirrored states, so the sign is
    # resolved per root: only comparable fits of both signs for the
    # same root count as genuine ambiguity.
    signs = (params.sign,) if params.sign in (1, -1) else (1, -1)
    candidates = []
    for mu in mus:
        scored = []
        for s in signs:
            try:
                y = _assemble(mu, s, d1, d2, d3, fp, g1)
            except ReconstructionError:
                continue
            scored.append((fpp_residual(y), y))
        if not scored:
            continue
        scored.sort(key=lambda t: t[0])
        ambiguous = (params.sign is None and len(scored) > 1
                     and scored[1][0] < SIGN_AMBIGUITY_RATIO * scored[0][0])
        candidates.append((scored[0][0], ambiguous, scored[0][1]))
    if not candidates:
        raise ReconstructionError("no admissible reconstruction candidate")
    candidates.sort(key=lambda t: t[0])
    res, ambiguous, y = candidates[0]
    if ambiguous:
        raise AmbiguousSignError(
            "both global signs fit the f'' identity comparably")
    return BiflatState.from_vector(y, z)


# ---------------------------------------------------------------------------
# exceptional linear family


def exceptional_f(C12, C23, z):
    """The linear sigma-form solution attached to the 3-d tri-flat case."""
    return (-C12 * C23 - C23 ** 2 + C23 + z * C12 * C23
            + 0.5 * (C12 ** 2 + C12 * C23 + C23 ** 2 - C12 - C23))


def exceptional_family(C12, C23, C, z):
    """One-parameter family of six-field states over the linear f.

    The parameter ``C`` selects the family member.  The closed form
    involves 2F1 at x = z/(z-1) together with x^(C12-1), which is real
    only for x in (0, 1); hence z < 0 is required.
    """
    z = float(z)
    x = z / (z - 1.0)
    if not 0.0 < x < 1.0:
        raise DomainError("exceptional family is evaluated for z < 0 "
                          "(hypergeometric argument in (0,1))")
    C31 = 1.0 - C12 - C23
    h1 = hyp2f1(1.0 - C12, C31, 2.0 - C12, x)
    h2 = hyp2f1(2.0 - C12, 1.0 + C31, 3.0 - C12, x)
    w = x ** (C12 - 1.0)
    den = C * (C12 - 2.0) * h1 + w
    if abs(den) < 1e-14:
        raise SingularityError("family denominator vanishes", last_t=z)
    F21 = (C * (C12 - 2.0) * (C23 * z + C12 - 1.0) * h1 / ((z - 1.0) * den)
           + (C * (C12 - 1.0) * (-C31) * h2
              + C23 * w * (z - 1.0)) * z / ((z - 1.0) ** 2 * den))
    if abs(F21) < 1e-14 or abs(C23 - F21) < 1e-14:
        raise ReconstructionError("family member hits a pole of the closed form")
    F12 = C12 * C23 / F21
    F13 = -(C12 * C23 - C12 * F21) / F21
    F23 = -F21 + C23
    F31 = F21 * (-1.0 + C12 + C23) / (C23 - F21)
    F32 = -(C12 * C23 + C23 ** 2 - C23) / (C23 - F21)
    return BiflatState(F12=F12, F21=F21, F13=F13, F31=F31,
                       F23=F23, F32=F32, z=z)
