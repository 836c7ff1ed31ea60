"""Natural/dual connection builders and the flatness residual operators.

Oracles: direct substitution into the diagonal completion rules,
exact e/E contraction identities, FD curvature, and the algebraic
cross-ratio identity satisfied by the weighted rational symbols.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multiflat.connections import (EventualIdentityDiag, OffDiagonalGammas,
                                   build_dual, build_natural,
                                   crosspartials_residual,
                                   euler_flatness_residual,
                                   hamiltonian_metric_residual,
                                   multiflat_system_residual,
                                   sample_distinct_points,
                                   semi_hamiltonian_residual, tsarev_residual,
                                   unit_flatness_residual)
from multiflat.errors import SingularityError
from multiflat.models import (EpsilonParams, epsilon_gammas, fp_metrics,
                              triflat3d_gammas)


def constant_gammas(G):
    G = np.asarray(G, dtype=float)
    n = G.shape[0]
    return OffDiagonalGammas(lambda u: G, n,
                             partials=lambda u: np.zeros((n, n, n)))


# ---------------------------------------------------------------------------
# builders


def test_natural_completion_in_two_dimensions():
    a, b = 0.7, -1.3
    conn = build_natural(constant_gammas([[0.0, a], [b, 0.0]]))
    t = conn.table([0.2, 1.4])
    assert t[0, 0, 1] == a and t[0, 1, 0] == a
    assert t[0, 0, 0] == -a and t[0, 1, 1] == -a
    assert t[1, 1, 0] == b and t[1, 0, 0] == -b and t[1, 1, 1] == -b


def test_natural_of_zero_is_zero():
    conn = build_natural(constant_gammas(np.zeros((3, 3))))
    assert np.all(conn.table([0.1, 1.0, 2.0]) == 0.0)


def test_natural_unity_contraction_exact():
    # sum_j Gamma^i_{jk} e^j = 0 must hold identically, not just to FD
    gam = epsilon_gammas(EpsilonParams(3, np.array([0.2, 0.3, 0.4])))
    conn = build_natural(gam)
    t = conn.table([0.0, 1.0, 3.0])
    assert np.max(np.abs(t.sum(axis=1))) < 1e-15


def test_dual_with_unity_reduces_to_natural():
    gam = epsilon_gammas(EpsilonParams(3, np.array([0.2, 0.3, 0.4])))
    u = np.array([0.3, 1.1, 2.6])
    nat = build_natural(gam).table(u)
    dual = build_dual(gam, EventualIdentityDiag.unity(3)).table(u)
    assert np.max(np.abs(nat - dual)) < 1e-14


def test_dual_euler_contraction():
    gam = epsilon_gammas(EpsilonParams(3, np.array([0.2, 0.3, 0.4])))
    E = EventualIdentityDiag.euler(3)
    conn = build_dual(gam, E)
    u = np.array([1.0, 2.0, 4.0])
    # nabla_j E^i = d_j E^i + Gamma^i_{jk} E^k = 0
    t = conn.table(u)
    nab = np.diag(E.deriv(u)) + np.einsum("ijk,k->ij", t, E.value(u))
    assert np.max(np.abs(nab)) < 1e-12


# ---------------------------------------------------------------------------
# residual operators


def test_tsarev_residual_weighted_model():
    gam = epsilon_gammas(EpsilonParams(3, np.array([0.2, 0.3, 0.4])))
    assert tsarev_residual(gam, np.array([0.0, 1.0, 3.0])) < 1e-9


def test_tsarev_vacuous_in_two_dimensions():
    gam = epsilon_gammas(EpsilonParams(2, np.array([0.5, 0.3])))
    assert tsarev_residual(gam, np.array([0.0, 1.0])) == 0.0


def test_tsarev_detects_perturbed_weight():
    eps = np.array([0.2, 0.3, 0.4])

    def g(u):
        base = epsilon_gammas(EpsilonParams(3, eps)).matrix(u)
        base[0, 1] = (eps[1] + 0.1) / (u[0] - u[1])
        return base

    gam = OffDiagonalGammas(g, 3)
    assert tsarev_residual(gam, np.array([0.0, 1.0, 3.0])) > 1e-3


def test_tsarev_rejects_coincident_coordinates():
    gam = epsilon_gammas(EpsilonParams(3, np.array([0.2, 0.3, 0.4])))
    with pytest.raises(SingularityError):
        tsarev_residual(gam, np.array([1.0, 1.0, 3.0]))


def test_unit_flatness_weighted_model():
    gam = epsilon_gammas(EpsilonParams(3, np.array([0.2, 0.3, 0.4])))
    assert unit_flatness_residual(gam, np.array([0.1, 1.3, 2.9])) < 1e-8


def test_unit_flatness_detects_linear_symbol():
    def g(u):
        G = np.zeros((2, 2))
        G[0, 1] = u[0]
        return G

    assert abs(unit_flatness_residual(OffDiagonalGammas(g, 2),
                                      np.array([0.5, 1.5])) - 1.0) < 1e-7


def test_unit_flatness_constant_symbols():
    res = unit_flatness_residual(constant_gammas([[0.0, 1.0], [2.0, 0.0]]),
                                 np.array([0.5, 1.5]))
    assert res < 1e-12


def test_euler_flatness_weighted_model():
    gam = epsilon_gammas(EpsilonParams(3, np.array([0.2, 0.3, 0.4])))
    E = EventualIdentityDiag.euler(3)
    assert euler_flatness_residual(gam, E, np.array([0.1, 1.3, 2.9])) < 1e-8


def test_quadratic_identity_not_flat_for_weighted_model():
    gam = epsilon_gammas(EpsilonParams(3, np.array([0.2, 0.3, 0.4])))
    E2 = EventualIdentityDiag.power(3, 2)
    assert euler_flatness_residual(gam, E2, np.array([0.1, 1.3, 2.9])) > 1e-3


def test_multiflat_system_three_weight_model():
    gam = triflat3d_gammas(0.4, 0.35, 0.25)
    E_list = [EventualIdentityDiag.unity(3), EventualIdentityDiag.euler(3),
              EventualIdentityDiag.power(3, 2)]
    res = multiflat_system_residual(gam, E_list, np.array([0.4, 1.3, 2.9]))
    assert np.max(res) < 1e-8


def test_multiflat_system_weighted_model_stops_at_linear():
    gam = epsilon_gammas(EpsilonParams(3, np.array([0.2, 0.3, 0.4])))
    E_list = [EventualIdentityDiag.unity(3), EventualIdentityDiag.euler(3),
              EventualIdentityDiag.power(3, 2)]
    res = multiflat_system_residual(gam, E_list, np.array([0.4, 1.3, 2.9]))
    # flat against the constant and linear identities, not the quadratic
    assert np.max(res[:-1]) < 1e-8 and res[-1] > 1e-3


def test_crosspartials_weighted_model_four_dim():
    gam = epsilon_gammas(EpsilonParams(4, np.array([0.2, 0.3, 0.4, 0.05])))
    assert crosspartials_residual(gam, np.array([0.0, 1.0, 3.0, 5.0])) < 1e-5


def test_crosspartials_zero_symbols():
    res = crosspartials_residual(
        constant_gammas(np.zeros((3, 3))), np.array([0.2, 1.1, 2.5]))
    assert res < 1e-10


def test_semi_hamiltonian_identity_speeds():
    assert semi_hamiltonian_residual(
        lambda u: np.array(u, dtype=float),
        np.array([0.3, 1.2, 2.8])) < 1e-10


def test_semi_hamiltonian_weighted_flow():
    eps = np.array([0.2, 0.3, 0.4])

    def v(u):
        return np.asarray(u, dtype=float) - float(eps @ u)

    assert semi_hamiltonian_residual(v, np.array([0.3, 1.2, 2.8])) < 1e-6


def test_semi_hamiltonian_detects_generic_speeds():
    def v(u):
        return np.array([u[1] * u[2], u[0], u[1]])

    assert semi_hamiltonian_residual(v, np.array([0.5, 1.4, 2.7])) > 1e-3


def test_metric_log_derivative_residual():
    gam, metric = fp_metrics(3, 0)
    res = hamiltonian_metric_residual(gam, metric, np.array([0.3, 1.5, 3.1]))
    assert res < 1e-6


def test_metric_residual_same_symbols_for_all_weights():
    # the log-derivative symbols do not depend on the metric weight
    u = np.array([0.4, 1.6, 3.2])
    for alpha in range(0, 4):
        gam, metric = fp_metrics(3, alpha)
        assert hamiltonian_metric_residual(gam, metric, u) < 1e-6


def test_metric_residual_detects_mismatch():
    # an extra exp(sum u) factor shifts every log-derivative by 1/2
    gam, metric = fp_metrics(3, 0)

    def bad(u):
        return np.asarray(metric(u)) * np.exp(np.sum(u))

    res = hamiltonian_metric_residual(gam, bad, np.array([0.4, 1.6, 3.2]))
    assert res > 0.4


# ---------------------------------------------------------------------------
# sampling helpers and properties


def test_sample_distinct_points_respects_constraints():
    rng = np.random.default_rng(3)
    pts = sample_distinct_points(4, 25, rng, low=-2.0, high=2.0,
                                 min_sep=0.1, min_abs=0.05)
    assert len(pts) == 25
    for p in pts:
        diffs = np.abs(p[:, None] - p[None, :])
        np.fill_diagonal(diffs, np.inf)
        assert diffs.min() > 0.1
        assert np.min(np.abs(p)) > 0.05
        assert np.all((p >= -2.0) & (p <= 2.0))


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(min_value=-0.9, max_value=0.9), min_size=3,
                max_size=3))
def test_tsarev_holds_for_any_weights(eps):
    # the weighted rational symbols satisfy the integrability conditions
    # identically in the weights
    gam = epsilon_gammas(EpsilonParams(3, np.array(eps)))
    assert tsarev_residual(gam, np.array([0.0, 1.0, 3.0])) < 1e-9


@settings(max_examples=25, deadline=None)
@given(st.floats(min_value=0.05, max_value=0.9),
       st.floats(min_value=0.05, max_value=0.9))
def test_three_weight_model_flat_for_any_admissible_weights(c12, c23):
    c31 = 1.0 - c12 - c23
    gam = triflat3d_gammas(c12, c23, c31)
    u = np.array([0.5, 1.4, 3.0])
    assert tsarev_residual(gam, u) < 1e-9
    assert unit_flatness_residual(gam, u) < 1e-8
    assert euler_flatness_residual(gam, EventualIdentityDiag.euler(3), u) < 1e-8
