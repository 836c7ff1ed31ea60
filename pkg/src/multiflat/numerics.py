"""Shared numerical kernels.

Adaptive Runge-Kutta integration with dense output, fourth-order finite
difference stencils, partial derivatives of array-valued fields, and a
real Gauss hypergeometric evaluator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ParameterError, SingularityError

# Finite-difference step scales (relative, floored at 1 in absolute size).
FD_STEP_SCALE_1 = 6e-3
FD_STEP_SCALE_2 = 2e-2

# Hypergeometric series truncation (relative term size).
HYP2F1_RELTOL = 1e-15
_HYP2F1_MAX_TERMS = 50_000

# Step-size collapse threshold, relative to the integration interval.
MIN_STEP_FRACTION = 1e-12

# Dormand-Prince 4(5) tableau.
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = np.array([
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1 / 5, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3 / 40, 9 / 40, 0.0, 0.0, 0.0, 0.0],
    [44 / 45, -56 / 15, 32 / 9, 0.0, 0.0, 0.0],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0.0, 0.0],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656, 0.0],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
])
# Difference between the 5th- and embedded 4th-order weight rows.
_E = np.array([
    71 / 57600, 0.0, -71 / 16695, 71 / 1920,
    -17253 / 339200, 22 / 525, -1 / 40,
])
# Dense-output coefficients for the 4th-order interpolant.
_D = np.array([
    -12715105075 / 11282082432, 0.0, 87487479700 / 32700410799,
    -10690763975 / 1880347072, 701980252875 / 199316789632,
    -1453857185 / 822651844, 69997945 / 29380423,
])

# 0.85 keeps accumulated drift on long conservative runs below the
# tolerance-scaled budget (0.9 overshoots by ~2x on the oscillator).
_SAFETY = 0.85
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0
# PI step controller exponents.
_ALPHA = 0.7 / 5.0
_BETA = 0.4 / 5.0


@dataclass
class Trajectory:
    """Dense-output solution of an initial value problem.

    ``t``/``y`` hold the accepted nodes; :meth:`eval` interpolates with
    the integrator's own fourth-order interpolant, so sampling is as
    accurate as the step acceptance test.
    """

    t: np.ndarray
    y: np.ndarray
    stats: dict = field(default_factory=dict)
    _rcont: np.ndarray = field(default=None, repr=False)

    @property
    def t0(self):
        return float(self.t[0])

    @property
    def t1(self):
        return float(self.t[-1])

    @property
    def dim(self):
        return self.y.shape[1]

    def eval(self, tq):
        """Interpolate the solution at scalar or array abscissae."""
        tq_arr = np.atleast_1d(np.asarray(tq, dtype=float))
        span = self.t1 - self.t0
        lo, hi = self.t0 - 1e-12 * span, self.t1 + 1e-12 * span
        if np.any(tq_arr < lo) or np.any(tq_arr > hi):
            raise DomainError("query point outside the integrated interval")
        idx = np.clip(np.searchsorted(self.t, tq_arr, side="right") - 1,
                      0, len(self.t) - 2)
        out = np.empty((tq_arr.size, self.dim))
        for m, (ti, i) in enumerate(zip(tq_arr, idx)):
            h = self.t[i + 1] - self.t[i]
            th = (ti - self.t[i]) / h
            r1, r2, r3, r4, r5 = self._rcont[i]
            out[m] = r1 + th * (r2 + (1.0 - th) * (r3 + th * (r4 + (1.0 - th) * r5)))
        if np.isscalar(tq) or np.asarray(tq).ndim == 0:
            return out[0]
        return out


def rk_adaptive(rhs, y0, t0, t1, rtol=1e-10, atol=1e-12, max_steps=1_000_000):
    """Integrate ``y' = rhs(t, y)`` from ``t0`` to ``t1`` (``t1 > t0``).

    Embedded Dormand-Prince 4(5) pairs with a PI step controller and a
    free fourth-order dense output.  Raises :class:`SingularityError`
    when the step size collapses below ``MIN_STEP_FRACTION`` times the
    interval, which is how poles along the path surface.
    """
    t0 = float(t0)
    t1 = float(t1)
    if not t1 > t0:
        raise ParameterError("rk_adaptive requires t1 > t0")
    y = np.asarray(y0, dtype=float).copy()
    if y.ndim != 1:
        raise ParameterError("y0 must be one-dimensional")
    n = y.size
    span = t1 - t0
    hmin = MIN_STEP_FRACTION * span

    ts = [t0]
    ys = [y.copy()]
    rconts = []

    t = t0
    h = min(0.01 * span, span)
    k = np.empty((7, n))
    k[0] = rhs(t, y)
    nfev = 1
    errold = 1e-4
    nsteps = nrej = 0

    while t < t1:
        if h < hmin:
            raise SingularityError(
                f"step size collapsed near t={t!r}", last_t=t)
        h = min(h, t1 - t)
        for i in range(1, 7):
            k[i] = rhs(t + _C[i] * h, y + h * (_A[i, :i] @ k[:i]))
        nfev += 6
        ynew = y + h * (_A[6] @ k[:6])  # k[6] is rhs at (t+h, ynew)
        errvec = h * (_E @ k)
        sk = atol + rtol * np.maximum(np.abs(y), np.abs(ynew))
        with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
            err = math.sqrt(float(np.mean((errvec / sk) ** 2)))
        finite = np.all(np.isfinite(ynew)) and np.isfinite(err)

        if finite and err <= 1.0:
            dy = ynew - y
            r3 = h * k[0] - dy
            rconts.append(np.stack([
                y.copy(), dy, r3, dy - h * k[6] - r3, h * (_D @ k)]))
            t += h
            y = ynew
            ts.append(t)
            ys.append(y.copy())
            k[0] = k[6]  # FSAL
            nsteps += 1
            if nsteps + nrej > max_steps:
                raise SingularityError(
                    f"step budget exhausted near t={t!r}", last_t=t)
            fac = _SAFETY * err ** (-_ALPHA) * errold ** _BETA if err > 0 else _MAX_FACTOR
            h *= min(_MAX_FACTOR, max(_MIN_FACTOR, fac))
            errold = max(err, 1e-4)
        else:
            nrej += 1
            if nsteps + nrej > max_steps:
                raise SingularityError(
                    f"step budget exhausted near t={t!r}", last_t=t)
            if not finite:
                h *= _MIN_FACTOR
            else:
                fac = _SAFETY * err ** (-_ALPHA) * errold ** _BETA
                h *= min(1.0, max(_MIN_FACTOR, fac))

    return Trajectory(
        t=np.array(ts), y=np.array(ys),
        stats={"n_steps": nsteps, "n_rejected": nrej, "nfev": nfev},
        _rcont=np.array(rconts))


def fd_derivative(f, x, order=1):
    """Fourth-order central difference derivative of a scalar function."""
    x = float(x)
    if order == 1:
        h = FD_STEP_SCALE_1 * max(1.0, abs(x))
        return (-f(x + 2 * h) + 8 * f(x + h) - 8 * f(x - h) + f(x - 2 * h)) / (12 * h)
    if order == 2:
        h = FD_STEP_SCALE_2 * max(1.0, abs(x))
        return (-f(x + 2 * h) + 16 * f(x + h) - 30 * f(x)
                + 16 * f(x - h) - f(x - 2 * h)) / (12 * h * h)
    raise ParameterError("fd_derivative supports order 1 and 2 only")


def fd_field_partials(f, u):
    """All coordinate partials of an array-valued field ``f(u)``.

    Returns an array whose leading axis indexes the differentiation
    direction: ``out[l, ...] = d f(u) / d u^l``.
    """
    u = np.asarray(u, dtype=float)
    n = u.size
    parts = []
    for l in range(n):
        h = FD_STEP_SCALE_1 * max(1.0, abs(u[l]))

        def at(x, l=l):
            v = u.copy()
            v[l] = x
            return np.asarray(f(v), dtype=float)

        x = u[l]
        parts.append((-at(x + 2 * h) + 8 * at(x + h)
                      - 8 * at(x - h) + at(x - 2 * h)) / (12 * h))
    return np.stack(parts)


@dataclass(frozen=True)
class Hyp2F1Params:
    a: float
    b: float
    c: float
    x: float


def _hyp2f1_series(a, b, c, x):
    total = term = 1.0
    small = 0
    for k_ in range(_HYP2F1_MAX_TERMS):
        term *= (a + k_) * (b + k_) / ((c + k_) * (k_ + 1.0)) * x
        total += term
        if abs(term) <= HYP2F1_RELTOL * max(abs(total), 1e-300):
            small += 1
            if small >= 2:
                return total
        else:
            small = 0
    raise DomainError("hypergeometric series did not converge")


def hyp2f1(a, b=None, c=None, x=None):
    """Real Gauss hypergeometric function 2F1(a, b; c; x), x < 1.

    Direct power series on -1/2 < x < 1; for x <= -1/2 the argument is
    mapped into (0, 1) first, via 2F1(a,b;c;x) =
    (1-x)^(-a) 2F1(a, c-b; c; x/(x-1)).
    """
    if isinstance(a, Hyp2F1Params):
        p = a
        a, b, c, x = p.a, p.b, p.c, p.x
    a, b, c, x = float(a), float(b), float(c), float(x)
    if c <= 0 and c == round(c):
        raise ParameterError("2F1 undefined for non-positive integer c")
    if x >= 1.0:
        raise DomainError("2F1 supported for real x < 1 only")
    if x <= -0.5:
        return (1.0 - x) ** (-a) * _hyp2f1_series(a, c - b, c, x / (x - 1.0))
    return _hyp2f1_series(a, b, c, x)
