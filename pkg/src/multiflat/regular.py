"""Non-semisimple regular structures in three coordinates.

Two six-field ODE systems in a single similarity variable z carry all
the Christoffel data of the regular non-semisimple models: the
full-block flow (z = u^3/u^2, one 3x3 Jordan block) and the split-block
flow (z = (u^3 - u^1)/u^2, block sizes 2+1).  Each flow conserves three
integrals; on their level sets the flow collapses to a single scalar
second-order equation which, after explicit changes of variables,
becomes the full Painleve IV (full block) or Painleve V (split block)
equation.  The same six fields, spread over a coordinate patch, build
the pair of compatible flat connections of each model.

Independently, a ladder of flat connections indexed by an integer l
(and its generalization driven by an arbitrary profile f(u^1)) realizes
infinitely many compatible flat structures on one three-dimensional
product; see :func:`multiflat_family` and :func:`general_f_family`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._backend import maybe_njit
from .errors import (DomainError, InconsistencyError, ParameterError,
                     SingularityError)
from .geom import ChristoffelField, ProductField, VectorField, as_coords
from .numerics import rk_adaptive

COORD_POLE_GUARD = 1e-12
TRANSFORM_POLE_GUARD = 1e-9
DEGENERATE_SCALE = 1e-12
DEFAULT_DRIFT_TOL = 1e-6


# ---------------------------------------------------------------------------
# states and flows
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class J3State:
    """Six-field state of the full-block flow at abscissa z = u^3/u^2."""

    F1: float
    F2: float
    F3: float
    F4: float
    F5: float
    F6: float
    z: float

    @property
    def vector(self):
        return np.array([self.F1, self.F2, self.F3,
                         self.F4, self.F5, self.F6], dtype=float)

    @staticmethod
    def from_vector(y, z):
        y = np.asarray(y, dtype=float)
        return J3State(*(float(v) for v in y), z=float(z))


@dataclass(frozen=True)
class J21State:
    """Six-field state of the split-block flow at z = (u^3 - u^1)/u^2."""

    F1: float
    F2: float
    F3: float
    F4: float
    F5: float
    F6: float
    z: float

    def __post_init__(self):
        if self.z == 0.0:
            raise ParameterError("split-block abscissa z must be nonzero")

    @property
    def vector(self):
        return np.array([self.F1, self.F2, self.F3,
                         self.F4, self.F5, self.F6], dtype=float)

    @staticmethod
    def from_vector(y, z):
        y = np.asarray(y, dtype=float)
        return J21State(*(float(v) for v in y), z=float(z))


@maybe_njit
def _j3_kernel(z, y):
    F1, F2, F3, F4, F5, F6 = y[0], y[1], y[2], y[3], y[4], y[5]
    out = np.empty(6)
    out[0] = 0.0
    out[1] = (2.0 * F4 * F3 * z + 2.0 * F2 * F1 * z - 2.0 * F5 * F1 * z
              + F6 * F1 - F2 * F3 + F4 - F3)
    out[2] = -F4 * F3 - F2 * F1 + F5 * F1 - F1
    out[3] = F4 * F3 + F2 * F1 - F5 * F1 - F1
    out[4] = (F4 * F3 * z + F2 * F1 * z - F5 * F1 * z - F6 * F1
              + F2 * F3 + F1 * z - F3)
    out[5] = (-2.0 * F4 * F3 * z * z - 2.0 * F2 * F1 * z * z
              + 2.0 * F5 * F1 * z * z - F6 * F1 * z + F2 * F3 * z
              + F4 * F6 - F4 * z + F2 * F2 - F2 * F5 + F3 * z - F2)
    return out


@maybe_njit
def _j21_kernel(z, y):
    F1, F2, F3, F4, F5, F6 = y[0], y[1], y[2], y[3], y[4], y[5]
    out = np.empty(6)
    out[0] = -(F3 * F4 - F1 * F1 + F1 * F6 + F1) / z
    out[1] = (F3 * F5 - F2 * F1 - F2) / z
    out[2] = 0.0
    out[3] = -(F3 * F4 - F1 * F1 + F1 * F6 + F4 * z + F1) / (z * z)
    out[4] = (-F5 * F1 * z + F5 * F6 * z + F2 * F4 * z + F3 * F5
              - F5 * z - F2 * F1 - F2) / (z * z)
    out[5] = -2.0 * F3 * F5 + 2.0 * F2 * F1
    return out


def _state_vec(state, cls):
    if isinstance(state, cls):
        return state.vector, state.z
    raise ParameterError(f"expected a {cls.__name__}")


def j3_rhs(state):
    """Right-hand side of the full-block flow at a state."""
    y, z = _state_vec(state, J3State)
    return _j3_kernel(z, y)


def j21_rhs(state):
    """Right-hand side of the split-block flow at a state."""
    y, z = _state_vec(state, J21State)
    return _j21_kernel(z, y)


class IntegralTriple(NamedTuple):
    I1: float
    I2: float
    I3: float

    @property
    def as_array(self):
        return np.array(self, dtype=float)


def j3_integrals(state):
    """The three conserved quantities of the full-block flow."""
    y, z = _state_vec(state, J3State)
    F1, F2, F3, F4, F5, _F6 = y
    return IntegralTriple(F1,
                          2.0 * F1 * z + F3 + F4,
                          -2.0 * F3 * z + F4 * z - F2 - F5)


def j21_integrals(state):
    """The three conserved quantities of the split-block flow.

    The third one is F6 + 2 F2 z; its constancy is an identity of the
    six-field system (and is what makes the staged elimination below
    close).
    """
    y, z = _state_vec(state, J21State)
    F1, F2, F3, F4, _F5, F6 = y
    return IntegralTriple(F3, F1 - F4 * z, F6 + 2.0 * F2 * z)


def integrate_j3(state0, z1, rtol=1e-10, atol=1e-12):
    """Integrate the full-block flow from ``state0.z`` to ``z1``."""
    y, z0 = _state_vec(state0, J3State)
    return rk_adaptive(_j3_kernel, y, z0, z1, rtol=rtol, atol=atol)


def integrate_j21(state0, z1, rtol=1e-10, atol=1e-12):
    """Integrate the split-block flow from ``state0.z`` to ``z1``.

    The interval must not contain z = 0 (a pole of the right-hand side).
    """
    y, z0 = _state_vec(state0, J21State)
    if z0 < 0.0 < z1 or z0 == 0.0:
        raise DomainError("the split-block flow has a pole at z = 0; "
                          "integrate on one side of it")
    return rk_adaptive(_j21_kernel, y, z0, z1, rtol=rtol, atol=atol)


def _drift(traj, integrals_of, cls):
    ref = integrals_of(cls.from_vector(traj.y[0], traj.t0)).as_array
    scale = np.maximum(1.0, np.abs(ref))
    worst = 0.0
    for zq in np.linspace(traj.t0, traj.t1, 17):
        cur = integrals_of(cls.from_vector(traj.eval(zq), zq)).as_array
        worst = max(worst, float(np.max(np.abs(cur - ref) / scale)))
    return worst


def j3_integral_drift(traj):
    """Max relative drift of the full-block integrals along ``traj``."""
    return _drift(traj, j3_integrals, J3State)


def j21_integral_drift(traj):
    """Max relative drift of the split-block integrals along ``traj``."""
    return _drift(traj, j21_integrals, J21State)


# ---------------------------------------------------------------------------
# reduction to the full Painleve IV equation (full-block flow)
# ---------------------------------------------------------------------------

class PIVReduction(NamedTuple):
    t: np.ndarray
    y: np.ndarray
    b: float
    c: float
    C1: float
    drift: float


def _j3_f4_derivs(y, z):
    """(F4', F4'') along the flow, purely algebraically."""
    d = _j3_kernel(z, y)
    F1, F2, F3, F4, F5, _F6 = y
    f4p = d[3]
    # differentiate F4' = F4 F3 + F2 F1 - F5 F1 - F1 along the flow
    f4pp = d[3] * F3 + F4 * d[2] + (d[1] - d[4]) * F1
    return f4p, f4pp


def j3_eliminated_tail(y, z, ints):
    """(F5, F6) recovered from F4 and the integrals; exact on solutions."""
    I1, I2, I3 = ints
    F4 = y[3]
    f4p, f4pp = _j3_f4_derivs(y, z)
    f5 = (4.0 * I1 ** 2 * z ** 2 - 2.0 * I2 * I1 * z + F4 * I1 * z
          + I2 * F4 - I3 * I1 - F4 ** 2 - f4p - I1) / (2.0 * I1)
    f6 = -(8.0 * I1 ** 3 * z ** 3 - 8.0 * I1 ** 2 * I2 * z ** 2
           + 14.0 * I1 ** 2 * F4 * z ** 2 + 2.0 * I1 * I2 ** 2 * z
           - 9.0 * I1 * F4 * I2 * z - 2.0 * I1 ** 2 * I3 * z
           + 7.0 * I1 * F4 ** 2 * z + F4 * I2 ** 2 + I1 * I2 * I3
           - 2.0 * F4 ** 2 * I2 - I1 * F4 * I3 + f4p * z * I1 + F4 ** 3
           + 2.0 * I1 ** 2 * z - I1 * I2 - F4 * f4p - f4pp) / (2.0 * I1 ** 2)
    return f5, f6


def _piv_constant(y, z, ints):
    """The scalar-equation constant, read off at one flow point.

    Uses the shifted unknown g(w) = F4 + I1 z - I2, w = z + I2/I1, whose
    second-order equation g g'' = 3/2 g^4 + 2 A w g^3 + (B + A^2 w^2/2) g^2
    + (g')^2/2 + C has constant C along solutions.
    """
    I1, I2, I3 = ints
    F4 = y[3]
    f4p, f4pp = _j3_f4_derivs(y, z)
    g = F4 + I1 * z - I2
    w = z + I2 / I1
    gp = f4p + I1
    A, B = I1, I1 - I3 * I1
    return (g * f4pp - 1.5 * g ** 4 - 2.0 * A * w * g ** 3
            - (B + 0.5 * A * A * w * w) * g * g - 0.5 * gp * gp)


def piv_reduction(traj, samples=41, drift_tol=DEFAULT_DRIFT_TOL):
    """Collapse a full-block trajectory to a Painleve IV profile.

    Returns ``(t, y, b, c, C1, drift)``: the scaled abscissae
    t = sqrt(I1/2) (z + I2/I1), the profile y(t) = g(w)/sqrt(I1/2), and
    the two scalar-equation parameters, so that
    y y'' = 3/2 y^4 + 4 t y^3 + 2 (t^2 - b) y^2 + (y')^2/2 + c.
    ``C1`` is the raw integration constant before the parameter shift.
    """
    ints = j3_integrals(J3State.from_vector(traj.y[0], traj.t0))
    I1, I2, I3 = ints
    if I1 <= 0.0:
        raise DomainError(
            "reduction needs I1 > 0 for the real scaling sqrt(I1/2); "
            "I1 = 0 states form the lower-triangular branch that "
            "integrates in closed form instead")
    zs = np.linspace(traj.t0, traj.t1, samples)
    Cs = np.array([_piv_constant(traj.eval(zq), zq, ints) for zq in zs])
    C = float(Cs[0])
    drift = float(np.max(np.abs(Cs - C)) / max(1.0, abs(C)))
    if drift > drift_tol:
        raise InconsistencyError(
            f"scalar-equation constant drifts by {drift:.3e} along the "
            "trajectory; the input does not solve the flow")
    C1 = C - (I3 * I1 * I2 ** 2 - I1 * I2 ** 2 - 0.5 * I1 ** 2)
    alpha = np.sqrt(I1 / 2.0)
    t = alpha * (zs + I2 / I1)
    yv = (traj.eval(zs)[:, 3] + I1 * zs - I2) / alpha
    b = I3 - 1.0
    c = 4.0 * C / I1 ** 2
    return PIVReduction(t=t, y=yv, b=b, c=c, C1=float(C1), drift=drift)


def piv_profile(traj):
    """The reduced profile y(t) of a full-block trajectory, as a callable."""
    ints = j3_integrals(J3State.from_vector(traj.y[0], traj.t0))
    I1, I2, _I3 = ints
    if I1 <= 0.0:
        raise DomainError("reduction needs I1 > 0")
    alpha = np.sqrt(I1 / 2.0)

    def y_of_t(t):
        zq = t / alpha - I2 / I1
        return float(traj.eval(zq)[3] + I1 * zq - I2) / alpha

    return y_of_t


def piv_full_residual(y_of_t, t, b, c, h=1e-4):
    """|y y'' - 3/2 y^4 - 4 t y^3 - 2 (t^2-b) y^2 - (y')^2/2 - c| at ``t``.

    Derivatives by fourth-order central differences with step ``h``.
    """
    y = y_of_t(t)
    yp = (-y_of_t(t + 2 * h) + 8 * y_of_t(t + h)
          - 8 * y_of_t(t - h) + y_of_t(t - 2 * h)) / (12 * h)
    ypp = (-y_of_t(t + 2 * h) + 16 * y_of_t(t + h) - 30 * y
           + 16 * y_of_t(t - h) - y_of_t(t - 2 * h)) / (12 * h * h)
    return abs(y * ypp - 1.5 * y ** 4 - 4.0 * t * y ** 3
               - 2.0 * (t * t - b) * y * y - 0.5 * yp * yp - c)


# ---------------------------------------------------------------------------
# reduction to the full Painleve V equation (split-block flow)
# ---------------------------------------------------------------------------

class PVReduction(NamedTuple):
    s: np.ndarray
    G: np.ndarray
    a: float
    b: float
    g: float
    d: float
    alpha: float
    C: float
    drift: float


def j21_eliminated_pair(y, z, ints):
    """(F2, F5) recovered from F4 and the integrals; exact on solutions."""
    I1, I2, I3 = ints
    F2, F4 = y[1], y[3]
    d = _j21_kernel(z, y)
    f2p, f4p = d[1], d[3]
    den = 2.0 * z * (F4 * z + I2)
    if abs(den) < DEGENERATE_SCALE:
        raise SingularityError("elimination denominator z (F4 z + I2) "
                               "vanishes at this point")
    f2 = (-F4 * F4 * z * z - 2.0 * I2 * F4 * z + I3 * F4 * z + F4 * I1
          - I2 * I2 + I2 * I3 + (f4p * z + F4) * z + F4 * z + I2) / den
    f5 = (F4 * F2 * z + I2 * F2 + f2p * z + F2) / I1
    return f2, f5


def _j21_f4_derivs(y, z):
    """(F4', F4'') along the split-block flow, algebraically."""
    d = _j21_kernel(z, y)
    F1, _F2, F3, F4, _F5, F6 = y
    num = F3 * F4 - F1 * F1 + F1 * F6 + F4 * z + F1
    nump = (F3 * d[3] - 2.0 * F1 * d[0] + d[0] * F6 + F1 * d[5]
            + d[3] * z + F4 + d[0])
    f4pp = -(nump * z * z - 2.0 * z * num) / z ** 4
    return d[3], f4pp


def _pv_chain(y, z, ints, with_derivs=True):
    """G and (optionally) dG/ds, d2G/ds2 at s = 1/z via the exact chain.

    The chain is F4 -> P = (z^2 F4 + I2 z)/I1 -> Q = P/(P-1) -> G(s)=Q(1/s).
    """
    I1, I2, _I3 = ints
    F4 = y[3]
    P = (z * z * F4 + I2 * z) / I1
    if abs(P - 1.0) < TRANSFORM_POLE_GUARD:
        raise SingularityError(
            "the Moebius step P -> P/(P-1) hits its pole P = 1 on this "
            "trajectory; reduce over a smaller interval")
    Q = P / (P - 1.0)
    if not with_derivs:
        return Q, None, None
    f4p, f4pp = _j21_f4_derivs(y, z)
    Pp = (2.0 * z * F4 + z * z * f4p + I2) / I1
    Ppp = (2.0 * F4 + 4.0 * z * f4p + z * z * f4pp) / I1
    Qp = -Pp / (P - 1.0) ** 2
    Qpp = -Ppp / (P - 1.0) ** 2 + 2.0 * Pp * Pp / (P - 1.0) ** 3
    Gp = -z * z * Qp
    Gpp = 2.0 * z ** 3 * Qp + z ** 4 * Qpp
    return Q, Gp, Gpp


def _pv_alpha_at(y, z, ints):
    """Pointwise value of the quintic-coefficient constant, or None.

    Solves the reduced fifth-degree equation in G for the coefficient
    multiplying G^2 (G-1)^3; returns None where that multiplier
    degenerates (constant-G trajectories).
    """
    I1, I2, I3 = ints
    s = 1.0 / z
    G, Gp, Gpp = _pv_chain(y, z, ints)
    rest = ((2.0 * I1 ** 4 * G * G * s * s - 2.0 * I1 ** 4 * G * s * s) * Gpp
            + (-3.0 * I1 ** 4 * G * s * s + I1 ** 4 * s * s) * Gp * Gp
            + (2.0 * I1 ** 4 * G * G * s - 2.0 * I1 ** 4 * G * s) * Gp
            + (I1 ** 6 * s * s - 2.0 * I1 ** 5 * I3 * s
               - 2.0 * I1 ** 5 * s + I1 ** 4 * I2 * I2) * G ** 3
            + (I1 ** 6 * s * s + 2.0 * I1 ** 5 * I3 * s
               + 2.0 * I1 ** 5 * s - 3.0 * I1 ** 4 * I2 * I2) * G * G
            + 3.0 * I1 ** 4 * I2 * I2 * G - I1 ** 4 * I2 * I2)
    mult = G * G * (G - 1.0) ** 3
    if abs(mult) < DEGENERATE_SCALE * max(1.0, I1 ** 4):
        return None
    return -rest / mult


def pv_reduction(traj, samples=41, drift_tol=DEFAULT_DRIFT_TOL):
    """Collapse a split-block trajectory to a Painleve V profile.

    Returns ``(s, G, a, b, g, d, alpha, C, drift)``: the reciprocal
    abscissae s = 1/z, the profile G(s), and the four parameters of the
    expanded scalar form (see :func:`pv_full_residual`).  ``alpha`` and
    ``C`` are the raw reduction constants; degenerate (constant-G)
    trajectories get alpha = 0, which satisfies the equation exactly.
    """
    ints = j21_integrals(J21State.from_vector(traj.y[0], traj.t0))
    I1, I2, I3 = ints
    if I1 == 0.0:
        raise DomainError(
            "reduction needs I1 != 0; I1 = 0 states form the explicitly "
            "integrable branch")
    zs = np.linspace(traj.t0, traj.t1, samples)
    alphas = [_pv_alpha_at(traj.eval(zq), zq, ints) for zq in zs]
    known = [av for av in alphas if av is not None]
    if known:
        alpha = float(known[0])
        drift = float(max(abs(av - alpha) for av in known)
                      / max(1.0, abs(alpha)))
        if drift > drift_tol:
            raise InconsistencyError(
                f"reduction constant drifts by {drift:.3e} along the "
                "trajectory; the input does not solve the flow")
    else:
        alpha, drift = 0.0, 0.0
    C = (alpha - 4.0 * I1 ** 4 * I2 ** 2 + 4.0 * I1 ** 4 * I2 * I3
         + 4.0 * I1 ** 4 * I2 + 4.0 * I1 ** 4) / (2.0 * I1 ** 3)
    svals = 1.0 / zs[::-1] if zs[0] > 0 else 1.0 / zs
    svals = np.sort(svals)
    Gv = np.array([_pv_chain(traj.eval(1.0 / s), 1.0 / s, ints,
                             with_derivs=False)[0] for s in svals])
    return PVReduction(s=svals, G=Gv,
                       a=-alpha / (2.0 * I1 ** 4),
                       b=-I2 ** 2 / 2.0,
                       g=I1 * I3 + I1,
                       d=-I1 ** 2 / 2.0,
                       alpha=float(alpha), C=float(C), drift=drift)


def pv_profile(traj):
    """The reduced profile G(s) of a split-block trajectory, callable."""
    ints = j21_integrals(J21State.from_vector(traj.y[0], traj.t0))
    if ints.I1 == 0.0:
        raise DomainError("reduction needs I1 != 0")

    def G_of_s(s):
        zq = 1.0 / s
        return float(_pv_chain(traj.eval(zq), zq, ints,
                               with_derivs=False)[0])

    return G_of_s


def pv_full_residual(G_of_s, s, a, b, g, d, h=1e-4):
    """Residual of the expanded Painleve V form at abscissa ``s``.

    (2y^2 x^2 - 2y x^2) y'' + (x^2 - 3y x^2) (y')^2 + (2y^2 x - 2y x) y'
    - 2a y^5 + 6a y^4 - (2d x^2 + 2g x + 6a + 2b) y^3
    + (2g x - 2d x^2 + 2a + 6b) y^2 - 6b y + 2b, with x = s, y = G(s),
    derivatives by fourth-order central differences.
    """
    x = s
    y = G_of_s(s)
    yp = (-G_of_s(s + 2 * h) + 8 * G_of_s(s + h)
          - 8 * G_of_s(s - h) + G_of_s(s - 2 * h)) / (12 * h)
    ypp = (-G_of_s(s + 2 * h) + 16 * G_of_s(s + h) - 30 * y
           + 16 * G_of_s(s - h) - G_of_s(s - 2 * h)) / (12 * h * h)
    return abs((2 * y * y * x * x - 2 * y * x * x) * ypp
               + (-3 * y * x * x + x * x) * yp * yp
               + (2 * y * y * x - 2 * y * x) * yp
               - 2 * a * y ** 5 + 6 * a * y ** 4
               - (2 * d * x * x + 2 * g * x + 6 * a + 2 * b) * y ** 3
               + (2 * g * x - 2 * d * x * x + 2 * a + 6 * b) * y ** 2
               - 6 * b * y + 2 * b)


def pv_parameters_inverse(a, b, g, d, sign_I1=1.0, sign_I2=1.0):
    """Invert (a, b, g, d) back to (I1, I2, I3, alpha).

    The map only sees I1^2 and I2^2, so the two sign choices select the
    branch.  Requires d < 0 and b <= 0.
    """
    if d >= 0.0 or b > 0.0:
        raise ParameterError("inversion needs d < 0 and b <= 0")
    I1 = sign_I1 * np.sqrt(-2.0 * d)
    I2 = sign_I2 * np.sqrt(-2.0 * b)
    I3 = g / I1 - 1.0
    alpha = -2.0 * a * I1 ** 4
    return float(I1), float(I2), float(I3), float(alpha)


# ---------------------------------------------------------------------------
# connection tables (full block, split block, two-dimensional model)
# ---------------------------------------------------------------------------

def _six_profiles(F):
    F = tuple(F)
    if len(F) != 6 or not all(callable(f) for f in F):
        raise ParameterError("F must be six scalar functions of z")
    return F


def _guard(value, name):
    if abs(value) < COORD_POLE_GUARD:
        raise SingularityError(f"coordinate {name} sits on a pole "
                               "of the connection table")
    return value


def j3_product():
    """The full-block commutative product: d_i o d_j = d_{i+j-1}."""
    n = 3
    c = np.zeros((n, n, n))
    for i in range(n):
        for j in range(n):
            if i + j < n:
                c[i + j, i, j] = 1.0
    zero = np.zeros((n, n, n, n))
    return ProductField(lambda u: c, n, partials=lambda u: zero)


def j21_product():
    """The split-block product: a 2-block unit algebra plus a 1-block."""
    n = 3
    c = np.zeros((n, n, n))
    for i in range(2):
        for j in range(2):
            if i + j < 2:
                c[i + j, i, j] = 1.0
    c[2, 2, 2] = 1.0
    zero = np.zeros((n, n, n, n))
    return ProductField(lambda u: c, n, partials=lambda u: zero)


def _j3_gamma1_table(F, u):
    x, y, w = u
    _guard(y, "u2")
    z = w / y
    F1, F2, F3, F4, F5, F6 = (f(z) for f in F)
    G = np.zeros((3, 3, 3))
    G[0, 1, 2] = G[0, 2, 1] = F1 / y
    G[2, 1, 2] = G[2, 2, 1] = F2 / y
    G[1, 1, 2] = G[1, 2, 1] = F3 / y
    G[0, 1, 1] = F4 / y
    G[1, 1, 1] = F5 / y
    G[2, 1, 1] = F6 / y
    G[1, 2, 2] = F1 / y
    G[2, 2, 2] = (F3 - F4) / y
    return G


def _j3_gamma2_table(F, u):
    x, y, w = u
    _guard(x, "u1")
    g1 = _j3_gamma1_table(F, u)
    a1, a2, a3 = g1[0, 1, 1], g1[1, 1, 1], g1[2, 1, 1]
    b1, b2, b3 = g1[0, 2, 1], g1[1, 2, 1], g1[2, 2, 1]
    G = np.zeros((3, 3, 3))
    G[0, 0, 0] = (-x * x + a1 * x * y * y
                  + b1 * (2 * x * y * w - y ** 3)) / x ** 3
    G[1, 0, 0] = (a2 * x * y * y + b2 * (2 * x * y * w - y ** 3)
                  + y * x + b1 * (x * w * w - y * y * w)) / x ** 3
    G[2, 0, 0] = (a3 * x * y * y + b3 * (2 * x * y * w - y ** 3)
                  + b2 * (x * w * w - y * y * w) + x * w - y * y
                  + a1 * (y * y * w - w * w * x)) / x ** 3
    G[0, 0, 1] = G[0, 1, 0] = -(a1 * x * y + b1 * (x * w - y * y)) / x ** 2
    G[1, 0, 1] = G[1, 1, 0] = -(a2 * x * y + b2 * (x * w - y * y)
                                + x - b1 * y * w) / x ** 2
    G[2, 0, 1] = G[2, 1, 0] = -(a3 * x * y + b3 * (x * w - y * y)
                                + (a1 - b2) * y * w - y) / x ** 2
    G[0, 0, 2] = G[0, 2, 0] = -(y / x) * b1
    G[1, 0, 2] = G[1, 2, 0] = -(b2 * y + b1 * w) / x
    G[2, 0, 2] = G[2, 2, 0] = (-b3 * y + (a1 - b2) * w - 1.0) / x
    G[0, 1, 1] = -(b1 * y - a1 * x) / x
    G[1, 1, 1] = (a2 * x - b1 * w - b2 * y) / x
    G[2, 1, 1] = (a3 * x - b3 * y + w * a1 - b2 * w - 1.0) / x
    G[0, 1, 2] = G[0, 2, 1] = b1
    G[1, 1, 2] = G[1, 2, 1] = b2
    G[2, 1, 2] = G[2, 2, 1] = b3
    G[1, 2, 2] = b1
    G[2, 2, 2] = -a1 + b2
    return G


def j3_connections(u, F):
    """The compatible connection pair of the full-block model.

    ``F`` is a sequence of six scalar functions of z = u^3/u^2 (for a
    flat pair they must solve the six-field flow).  ``u`` is validated
    against the table poles (u^2 = 0 for the first connection, also
    u^1 = 0 for the second); the returned fields evaluate anywhere.
    """
    F = _six_profiles(F)
    u = as_coords(u)
    if u.size != 3:
        raise ParameterError("u must be a 3-point")
    _j3_gamma2_table(F, u)  # validates both poles at u
    return (ChristoffelField(lambda v: _j3_gamma1_table(F, v), 3),
            ChristoffelField(lambda v: _j3_gamma2_table(F, v), 3))


def _j21_gamma1_table(F, u):
    x, y, w = u
    _guard(y, "u2")
    z = (w - x) / y
    F1, F2, F3, F4, F5, F6 = (f(z) for f in F)
    G = np.zeros((3, 3, 3))
    G[2, 0, 2] = G[2, 2, 0] = F4 / y
    G[0, 1, 1] = F3 / y
    G[1, 1, 1] = F6 / y
    G[2, 1, 2] = G[2, 2, 1] = F1 / y
    G[0, 0, 2] = G[0, 2, 0] = F2 / y
    G[1, 0, 2] = G[1, 2, 0] = F5 / y
    G[0, 0, 0] = -F2 / y
    G[1, 0, 0] = -F5 / y
    G[2, 0, 0] = -F4 / y
    G[1, 0, 1] = G[1, 1, 0] = -F2 / y
    G[2, 0, 1] = G[2, 1, 0] = -F1 / y
    G[1, 1, 2] = G[1, 2, 1] = F2 / y
    G[0, 2, 2] = -F2 / y
    G[1, 2, 2] = -F5 / y
    G[2, 2, 2] = -F4 / y
    return G


def _j21_gamma2_table(F, u):
    x, y, w = u
    _guard(x, "u1")
    _guard(w, "u3")
    g1 = _j21_gamma1_table(F, u)
    A1, A2 = g1[0, 1, 1], g1[1, 1, 1]
    B1, B2 = g1[0, 0, 2], g1[1, 0, 2]
    C3, D3 = g1[2, 1, 2], g1[2, 0, 2]
    G = np.zeros((3, 3, 3))
    G[0, 0, 0] = (A1 * y * y - B1 * w * x - x) / x ** 2
    G[1, 0, 0] = (B1 * w * y - B2 * w * x + A2 * y * y + y) / x ** 2
    G[2, 0, 0] = (C3 * y * w - D3 * x * w) / x ** 2
    G[0, 0, 1] = G[0, 1, 0] = -A1 * y / x
    G[1, 0, 1] = G[1, 1, 0] = -(B1 * w + A2 * y + 1.0) / x
    G[2, 0, 1] = G[2, 1, 0] = -C3 * w / x
    G[0, 0, 2] = G[0, 2, 0] = B1
    G[1, 0, 2] = G[1, 2, 0] = B2
    G[2, 0, 2] = G[2, 2, 0] = D3
    G[0, 1, 1] = A1
    G[1, 1, 1] = A2
    G[1, 1, 2] = G[1, 2, 1] = B1
    G[2, 1, 2] = G[2, 2, 1] = C3
    G[0, 2, 2] = -B1 * x / w
    G[1, 2, 2] = -(B2 * x + B1 * y) / w
    G[2, 2, 2] = -(C3 * y + D3 * x + 1.0) / w
    return G


def j21_connections(u, F):
    """The compatible connection pair of the split-block model.

    ``F`` is a sequence of six scalar functions of z = (u^3 - u^1)/u^2.
    Raises :class:`SingularityError` when ``u`` sits on a table pole
    (u^2 = 0; additionally u^1 = 0 or u^3 = 0 for the second
    connection).
    """
    F = _six_profiles(F)
    u = as_coords(u)
    if u.size != 3:
        raise ParameterError("u must be a 3-point")
    _j21_gamma2_table(F, u)
    return (ChristoffelField(lambda v: _j21_gamma1_table(F, v), 3),
            ChristoffelField(lambda v: _j21_gamma2_table(F, v), 3))


def twodim_regular(u, C1, C2):
    """The single two-dimensional regular non-semisimple model.

    First connection: Gamma^1_22 = C1/u^2, Gamma^2_22 = C2/u^2, all
    other entries zero; second connection determined by it.
    """
    u = as_coords(u)
    if u.size != 2:
        raise ParameterError("u must be a 2-point")
    C1, C2 = float(C1), float(C2)

    def gamma1(v):
        x, y = v
        _guard(y, "u2")
        G = np.zeros((2, 2, 2))
        G[0, 1, 1] = C1 / y
        G[1, 1, 1] = C2 / y
        return G

    def gamma2(v):
        x, y = v
        _guard(y, "u2")
        _guard(x, "u1")
        a1, a2 = C1 / y, C2 / y
        G = np.zeros((2, 2, 2))
        G[0, 0, 0] = (a1 * y * y - x) / x ** 2
        G[1, 0, 0] = (a2 * y * y + y) / x ** 2
        G[0, 0, 1] = G[0, 1, 0] = -(y / x) * a1
        G[1, 0, 1] = G[1, 1, 0] = -(y / x) * a2 - 1.0 / x
        G[0, 1, 1] = a1
        G[1, 1, 1] = a2
        return G

    gamma2(u)  # validate poles at u
    return (ChristoffelField(gamma1, 2), ChristoffelField(gamma2, 2))


# ---------------------------------------------------------------------------
# exact tri-flat profile and eventual identities on the full-block model
# ---------------------------------------------------------------------------

def triflat_profiles(f1, f3):
    """Closed-form six-field profile of the tri-flat full-block model.

    For any constants (f1, f3) the profile solves the six-field flow
    identically; :func:`triflat_constants_residual` exposes the check.
    """
    f1, f3 = float(f1), float(f3)
    return (lambda z: f1,
            lambda z: -f1 * z * z - 1.0,
            lambda z: f3,
            lambda z: -2.0 * f1 * z,
            lambda z: -f1 * z * z - 2.0 * f3 * z,
            lambda z: -f3 * z * z + 2.0 * z)


def triflat_constants_residual(f1, f3, z_points=None):
    """Max flow residual of the closed-form tri-flat profile.

    Root-finding hook for the flatness constraint on (f1, f3): returns
    max |dF/dz - rhs(F, z)| over sample abscissae (the derivative of the
    closed form is analytic).
    """
    if z_points is None:
        z_points = np.linspace(0.5, 2.5, 9)
    f1, f3 = float(f1), float(f3)
    worst = 0.0
    for z in np.asarray(z_points, dtype=float):
        y = np.array([f1, -f1 * z * z - 1.0, f3, -2.0 * f1 * z,
                      -f1 * z * z - 2.0 * f3 * z, -f3 * z * z + 2.0 * z])
        dy = np.array([0.0, -2.0 * f1 * z, 0.0, -2.0 * f1,
                       -2.0 * f1 * z - 2.0 * f3, -2.0 * f3 * z + 2.0])
        worst = max(worst, float(np.max(np.abs(dy - _j3_kernel(z, y)))))
    return worst


def j3_eventual_identity(G1, G1p, G2, G2y, G3):
    """An eventual identity of the full-block product, from its shape.

    Components (G1(u1), G2(u1,u2), -u3 G1'(u1) + 2 u3 dG2/du2 + G3(u1,u2));
    ``G1p`` and ``G2y`` supply the two derivatives analytically.
    """

    def value(u):
        x, y, w = u
        return np.array([G1(x), G2(x, y),
                         -w * G1p(x) + 2.0 * w * G2y(x, y) + G3(x, y)])

    return VectorField(value=value)


# ---------------------------------------------------------------------------
# the integer-indexed family of flat structures and its f-generalization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FamilyParams:
    """Parameters of the flat-structure ladder: constants (a, b), rung l."""

    a: float
    b: float
    l: int

    def __post_init__(self):
        if self.a == -2.0:
            raise ParameterError("a = -2 makes the table denominators vanish")
        if not (isinstance(self.l, (int, np.integer)) and self.l >= 0):
            raise ParameterError("l must be a nonnegative integer")


def _family_gamma(a, b, l):
    d = a + 2.0

    def gamma(u):
        x, y, w = u
        _guard(x, "u1")
        _guard(y, "u2")
        G = np.zeros((3, 3, 3))
        G[0, 0, 0] = -l / x
        G[1, 0, 0] = l * y * (l * a * a + l * a + a + 2.0) / (d * x * x)
        G[2, 0, 0] = l * ((2.0 * l * a * a + 2.0 * l * a + a + 2.0) * x * w
                          - (l * a * a + 2.0 * l * a + a + 2.0) * y * y
                          + (l * a * b + 2.0 * l * b) * x * y) / (d * x ** 3)
        G[1, 0, 1] = G[1, 1, 0] = -l * (a * a + 2.0 * a + 2.0) / (x * d)
        G[2, 0, 1] = G[2, 1, 0] = l * (
            (l * a * a + a * a + 2.0 * l * a + 4.0 * a + 4.0) * y * y
            - 2.0 * a * a * x * w
            - (2.0 * a * b + 4.0 * b) * x * y) / (2.0 * y * d * x * x)
        G[2, 0, 2] = G[2, 2, 0] = -l * (a + 1.0) / x
        G[2, 1, 2] = G[2, 2, 1] = a / y
        G[1, 1, 1] = a * (a + 1.0) / (y * d)
        G[2, 1, 1] = -((l * a * a + 3.0 * l * a + 2.0 * l) * y * y
                       - (a * b + 2.0 * b) * x * y
                       + 2.0 * a * x * w) / (d * x * y * y)
        return G

    def partials(u):
        x, y, w = u
        _guard(x, "u1")
        _guard(y, "u2")
        K1 = l * (l * a * a + l * a + a + 2.0) / d
        A1 = l * (2.0 * l * a * a + 2.0 * l * a + a + 2.0) / d
        A2 = l * (l * a * a + 2.0 * l * a + a + 2.0) / d
        A3 = l * l * b * (a + 2.0) / d
        K2 = l * (a * a + 2.0 * a + 2.0) / d
        B1 = l * (l * a * a + a * a + 2.0 * l * a + 4.0 * a + 4.0) / (2.0 * d)
        B2 = a * a * l / d
        B3 = l * b * (a + 2.0) / d
        K3 = l * (a + 1.0)
        C1 = l * (a * a + 3.0 * a + 2.0) / d
        C2 = b * (a + 2.0) / d
        C3 = 2.0 * a / d
        dG = np.zeros((3, 3, 3, 3))
        dG[0, 0, 0, 0] = l / (x * x)
        dG[0, 1, 0, 0] = -2.0 * K1 * y / x ** 3
        dG[1, 1, 0, 0] = K1 / (x * x)
        dG[0, 2, 0, 0] = (-2.0 * (A1 * w + A3 * y) / x ** 3
                          + 3.0 * A2 * y * y / x ** 4)
        dG[1, 2, 0, 0] = A3 / (x * x) - 2.0 * A2 * y / x ** 3
        dG[2, 2, 0, 0] = A1 / (x * x)
        dG[0, 1, 0, 1] = dG[0, 1, 1, 0] = K2 / (x * x)
        dG[0, 2, 0, 1] = dG[0, 2, 1, 0] = (-2.0 * B1 * y / x ** 3
                                           + B2 * w / (x * x * y)
                                           + B3 / (x * x))
        dG[1, 2, 0, 1] = dG[1, 2, 1, 0] = (B1 / (x * x)
                                           + B2 * w / (x * y * y))
        dG[2, 2, 0, 1] = dG[2, 2, 1, 0] = -B2 / (x * y)
        dG[0, 2, 0, 2] = dG[0, 2, 2, 0] = K3 / (x * x)
        dG[1, 2, 1, 2] = dG[1, 2, 2, 1] = -a / (y * y)
        dG[1, 1, 1, 1] = -a * (a + 1.0) / (d * y * y)
        dG[0, 2, 1, 1] = C1 / (x * x)
        dG[1, 2, 1, 1] = -C2 / (y * y) + 2.0 * C3 * w / y ** 3
        dG[2, 2, 1, 1] = -C3 / (y * y)
        return dG

    return gamma, partials


def _family_euler(l):
    def value(u):
        x, y, w = u
        e1 = x ** l
        e2 = l * y * x ** (l - 1) if l >= 1 else 0.0
        e3 = l * w * x ** (l - 1) if l >= 1 else 0.0
        if l >= 2:
            e3 += 0.5 * (l * l - l) * y * y * x ** (l - 2)
        return np.array([e1, e2, e3])

    def jacobian(u):
        x, y, w = u
        J = np.zeros((3, 3))
        if l >= 1:
            J[0, 0] = l * x ** (l - 1)
            J[1, 1] = l * x ** (l - 1)
            J[2, 2] = l * x ** (l - 1)
            if l >= 2:
                J[1, 0] = l * (l - 1) * y * x ** (l - 2)
                J[2, 0] = l * (l - 1) * w * x ** (l - 2)
                J[2, 1] = (l * l - l) * y * x ** (l - 2)
                if l >= 3:
                    J[2, 0] += 0.5 * (l * l - l) * (l - 2) * y * y * x ** (l - 3)
        return J

    return VectorField(value=value, jacobian=jacobian)


def multiflat_family(p, u):
    """One rung of the flat-structure ladder: (connection, its identity).

    For :class:`FamilyParams` ``p`` the connection is flat, parallelizes
    the returned field, and all rungs share their off-diagonal data; the
    ladder realizes infinitely many compatible flat structures.
    """
    if not isinstance(p, FamilyParams):
        raise ParameterError("p must be a FamilyParams")
    u = as_coords(u)
    if u.size != 3:
        raise ParameterError("u must be a 3-point")
    _guard(u[0], "u1")
    _guard(u[1], "u2")
    gamma, partials = _family_gamma(p.a, p.b, int(p.l))
    return (ChristoffelField(gamma, 3, partials=partials),
            _family_euler(int(p.l)))


def general_f_family(f, a, b, u):
    """The profile-driven generalization of the flat-structure ladder.

    ``f`` is a sequence of four callables (f, f', f'', f''') of u^1.
    Specializes to :func:`multiflat_family` rung l at f = (u^1)^l.
    """
    fs = tuple(f)
    if len(fs) != 4 or not all(callable(g) for g in fs):
        raise ParameterError(
            "f must supply (f, f', f'', f''') as four callables")
    a, b = float(a), float(b)
    if a == -2.0:
        raise ParameterError("a = -2 makes the table denominators vanish")
    u = as_coords(u)
    if u.size != 3:
        raise ParameterError("u must be a 3-point")
    _guard(u[1], "u2")
    d = a + 2.0

    def gamma(v):
        x, y, w = v
        _guard(y, "u2")
        f0, f1, f2, f3 = (g(x) for g in fs)
        if abs(f0) < COORD_POLE_GUARD:
            raise SingularityError("profile f vanishes at u1")
        G = np.zeros((3, 3, 3))
        G[0, 0, 0] = -f1 / f0
        G[1, 0, 0] = y * ((a * a + 2.0 * a + 2.0) * f1 * f1
                          - d * f0 * f2) / (f0 * f0 * d)
        G[2, 0, 0] = -((2.0 * a * a + 6.0 * a + 4.0) * y * y * f1 ** 3
                       + (-4.0 * a * a * w - 2.0 * a * b * y - 6.0 * a * w
                          - 4.0 * b * y - 4.0 * w) * f0 * f1 * f1
                       + (-2.0 * a * a - 7.0 * a - 6.0) * y * y * f0 * f1 * f2
                       + (2.0 * a + 4.0) * w * f0 * f0 * f2
                       + d * y * y * f0 * f0 * f3) / (2.0 * f0 ** 3 * d)
        G[1, 0, 1] = G[1, 1, 0] = -(a * a + 2.0 * a + 2.0) * f1 / (d * f0)
        G[2, 0, 1] = G[2, 1, 0] = -(d * d * y * y * f0 * f2
                                    - (2.0 * a * a + 6.0 * a + 4.0) * y * y * f1 * f1
                                    + (2.0 * a * a * w + 2.0 * a * b * y
                                       + 4.0 * b * y) * f0 * f1) / (2.0 * y * d * f0 * f0)
        G[2, 0, 2] = G[2, 2, 0] = -(a + 1.0) * f1 / f0
        G[2, 1, 2] = G[2, 2, 1] = a / y
        G[1, 1, 1] = a * (a + 1.0) / (y * d)
        G[2, 1, 1] = ((-a * a - 3.0 * a - 2.0) * y * y * f1
                      + (a * b * y - 2.0 * a * w + 2.0 * b * y) * f0) / (d * y * y * f0)
        return G

    gamma(u)  # validate at the given point
    return ChristoffelField(gamma, 3)


def family_product(p):
    """The twisted product of rung ``p``: X, Y -> (E_p o)^{-1} (X o Y).

    The rung connection is compatible with this product (symmetric
    covariant derivative); at l = 0 it is the plain full-block product.
    """
    if not isinstance(p, FamilyParams):
        raise ParameterError("p must be a FamilyParams")
    base = j3_product()
    E = _family_euler(int(p.l))

    def _minv(u):
        c = base.table(u)
        M = np.einsum('ijk,k->ij', c, E.val(u))
        try:
            return c, np.linalg.inv(M)
        except np.linalg.LinAlgError:
            raise SingularityError(
                "multiplication by the rung identity is singular here")

    def c_table(u):
        c, Minv = _minv(u)
        return np.einsum('im,mjk->ijk', Minv, c)

    def c_partials(u):
        c, Minv = _minv(u)
        J = E.jac(u)
        # d(M^{-1}) = -M^{-1} (c . dE) M^{-1}
        dM = np.einsum('ijk,kq->qij', c, J)
        dMinv = -np.einsum('im,qmn,nr->qir', Minv, dM, Minv)
        return np.einsum('qim,mjk->qijk', dMinv, c)

    return ProductField(c_table, 3, partials=c_partials)


def almost_equivalence_residual(conn_a, conn_b, prod, u):
    """Residual of almost hydrodynamic equivalence of two connections.

    Two torsionless connections are almost hydrodynamically equivalent
    when (d_A - d_B)(X o) = 0 for every field X; with the difference
    tensor D = Gamma_A - Gamma_B this reads, for all q,

        D^i_{jm} c^m_{qk} - D^i_{km} c^m_{qj} = 0.

    Returns the max-norm of the left side at ``u``.
    """
    u = as_coords(u)
    D = conn_a.table(u) - conn_b.table(u)
    c = prod.table(u)
    T = (np.einsum('ijm,mqk->ijkq', D, c)
         - np.einsum('ikm,mqj->ijkq', D, c))
    return float(np.max(np.abs(T)))
