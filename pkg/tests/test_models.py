"""Closed-form model constructors.

Oracles: direct substitution of the defining formulas, cross-module
agreement (hyperplane-pair assembly vs the diagonal completion rules,
exponential-coordinate pullback vs the rational form), and brute-force
algebra checks on the covector systems.
"""

import numpy as np
import pytest

from multiflat.connections import (EventualIdentityDiag, build_natural,
                                   euler_flatness_residual,
                                   multiflat_system_residual, tsarev_residual,
                                   unit_flatness_residual)
from multiflat.errors import DomainError, ParameterError, SingularityError
from multiflat.geom import (Point, VectorField, product_algebra_residual,
                            riemann_at)
from multiflat.models import (EpsilonParams, VeeSystem, an_covectors,
                              biflat2d_gammas, epsilon_gammas,
                              exponential_eventual_identity,
                              exponential_identities, fp_metrics,
                              jordan_canonical_data, lauricella_connection,
                              triflat3d_exponential_gammas, triflat3d_gammas,
                              vee_condition_residual, vee_flat_connection,
                              vee_product, vee_unity_residual)


# ---------------------------------------------------------------------------
# weighted rational symbols


def test_weighted_symbols_direct_values():
    gam = epsilon_gammas(EpsilonParams(2, np.array([0.5, 1 / 3])))
    G = gam.matrix(np.array([1.0, 0.0]))
    assert abs(G[0, 1] - 1 / 3) < 1e-15
    assert abs(G[1, 0] - (-0.5)) < 1e-15


def test_weighted_symbols_reject_coincident_point():
    gam = epsilon_gammas(EpsilonParams(2, np.array([0.5, 0.5])))
    with pytest.raises(SingularityError):
        gam.matrix(np.array([1.0, 1.0]))


def test_weighted_symbols_reduced_ratio_identity():
    # Gamma^k_{kj}/Gamma^i_{ij} + Gamma^j_{jk}/Gamma^i_{ik} = 1 for
    # distinct i, j, k — the algebraic form of the integrability
    # conditions for this family
    gam = epsilon_gammas(EpsilonParams(3, np.array([0.2, 0.3, 0.4])))
    G = gam.matrix(np.array([0.0, 1.0, 3.0]))
    for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        assert abs(G[k, j] / G[i, j] + G[j, k] / G[i, k] - 1.0) < 1e-12


def test_two_dim_alias():
    u = np.array([0.4, 1.7])
    a = biflat2d_gammas(0.5, 0.3).matrix(u)
    b = epsilon_gammas(EpsilonParams(2, np.array([0.5, 0.3]))).matrix(u)
    assert np.array_equal(a, b)


# ---------------------------------------------------------------------------
# diagonal metrics


def test_metric_family_direct_value():
    _, metric = fp_metrics(3, 0)
    g = metric(np.array([0.0, 1.0, 3.0]))
    assert abs(g[0] - 3.0) < 1e-15  # (1-0)(3-0)


def test_metric_family_negative_coordinate_guard():
    _, metric = fp_metrics(3, 0.5)
    with pytest.raises(DomainError):
        metric(np.array([-1.0, 1.0, 3.0]))


def test_metric_family_integer_weight_any_sign():
    _, metric = fp_metrics(3, 2)
    g = metric(np.array([-1.0, 1.0, 3.0]))
    assert np.all(np.isfinite(g))


# ---------------------------------------------------------------------------
# hyperplane-pair assembly


def test_pair_assembly_direct_values():
    conn = lauricella_connection(EpsilonParams(2, np.array([1.0, 1.0])))
    t = conn.table(np.array([2.0, 0.0]))
    assert abs(t[0, 0, 1] - 0.5) < 1e-15
    assert abs(t[0, 0, 0] + 0.5) < 1e-15


def test_pair_assembly_matches_diagonal_completion():
    p = EpsilonParams(3, np.array([0.2, 0.3, 0.4]))
    u = np.array([0.3, 1.4, 2.9])
    a = lauricella_connection(p).table(u)
    b = build_natural(epsilon_gammas(p)).table(u)
    assert np.max(np.abs(a - b)) < 1e-12


def test_pair_assembly_partials_match():
    p = EpsilonParams(3, np.array([0.2, 0.3, 0.4]))
    u = np.array([0.3, 1.4, 2.9])
    a = lauricella_connection(p).partial_table(u)
    b = build_natural(epsilon_gammas(p)).partial_table(u)
    assert np.max(np.abs(a - b)) < 1e-12


def test_pair_assembly_pole_on_hyperplane():
    conn = lauricella_connection(EpsilonParams(2, np.array([1.0, 1.0])))
    with pytest.raises(SingularityError):
        conn.table(np.array([1.0, 1.0]))


# ---------------------------------------------------------------------------
# three-dimensional tri-flat symbols


def test_triflat3d_direct_value():
    gam = triflat3d_gammas(1 / 3, 1 / 3, 1 / 3)
    G = gam.matrix(np.array([0.0, 1.0, 3.0]))
    assert abs(G[0, 1] - (-0.5)) < 1e-15


def test_triflat3d_constraint_enforced():
    with pytest.raises(ParameterError):
        triflat3d_gammas(0.3, 0.3, 0.3)


def test_triflat3d_exponential_pullback_matches():
    c = (0.4, 0.35, 0.25)
    base = triflat3d_gammas(*c)
    expg = triflat3d_exponential_gammas(*c)
    u = np.array([0.2, 0.9, 1.5])
    # chain rule: G_exp(u)[i, j] = G(e^u)[i, j] * e^{u_j}
    expected = base.matrix(np.exp(u)) * np.exp(u)[None, :]
    assert np.max(np.abs(expg.matrix(u) - expected)) < 1e-12


def test_triflat3d_exponential_flat_against_its_identities():
    gam = triflat3d_exponential_gammas(0.4, 0.35, 0.25)
    ids = exponential_identities((0, 1, 2))
    res = multiflat_system_residual(gam, ids, np.array([0.2, 0.9, 1.7]))
    assert np.max(res) < 1e-8


# ---------------------------------------------------------------------------
# exponential eventual identities


def test_exponential_identity_zero_rate_is_linear():
    E = exponential_eventual_identity(0.0, np.ones(3), 1.0, n=3)
    u = np.array([0.3, 1.1, 2.4])
    assert np.max(np.abs(E.value(u) - u)) == 0.0


def test_exponential_identity_bracket_closure():
    beta, alpha = 1.3, 0.7
    cvec = np.array([1.0, 0.5, 2.0])
    E = exponential_eventual_identity(beta, cvec, alpha)
    u = np.array([0.2, 0.8, 1.4])
    e = VectorField.constant(np.ones(3))
    Ef = E.as_vector_field()
    # [e, E] = alpha*e + beta*E componentwise
    lie = Ef.jac(u) @ e.val(u) - e.jac(u) @ Ef.val(u)
    target = alpha * e.val(u) + beta * Ef.val(u)
    assert np.max(np.abs(lie - target)) < 1e-12


def test_exponential_identity_rectifies_under_coordinate_change():
    # the substitution v^i = -exp(-beta u^i)/(beta c_i) straightens the
    # alpha = 0 field into the constant unity field
    beta = 0.9
    cvec = np.array([1.0, 2.0, 0.5])
    E = exponential_eventual_identity(beta, cvec, 0.0)
    u = np.array([0.3, 1.0, 1.9])
    pushed = np.exp(-beta * u) / cvec * E.value(u)  # dv^i/du^i * E^i
    assert np.max(np.abs(pushed - np.ones(3))) < 1e-12


# ---------------------------------------------------------------------------
# covector systems


def test_covector_duals_resolve_identity():
    sys_ = VeeSystem(an_covectors(3))
    resolved = sum(np.outer(d, a) for a, d in
                   zip(sys_.covectors, sys_.duals))
    assert np.max(np.abs(resolved - np.eye(3))) < 1e-12


def test_covector_unity_and_associativity():
    sys_ = VeeSystem(an_covectors(3))
    u = np.array([0.7, 1.9, -0.8])
    assert vee_unity_residual(sys_, u) < 1e-12
    assert product_algebra_residual(vee_product(sys_), Point(u)) < 1e-8


def test_covector_plane_condition_holds_for_an():
    for n in (2, 3):
        assert vee_condition_residual(VeeSystem(an_covectors(n))) < 1e-9


def test_two_covector_system_trivially_satisfies_plane_condition():
    sys_ = VeeSystem(np.array([[1.0, 0.3], [0.2, 1.1]]))
    assert vee_condition_residual(sys_) < 1e-12


def test_generic_covector_set_fails_plane_condition():
    # a skewed extra covector in the xy-plane breaks the projection
    # condition once other covectors tilt the Gram operator out of
    # that plane (a set confined to a single plane passes trivially)
    rows = np.array([
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [1.0, 1.0, 0.0],
        [1.0, 0.0, 1.0],
        [1.0, 2.5, 0.0],
    ])
    assert vee_condition_residual(VeeSystem(rows)) > 1e-3


def test_covector_connection_flat_across_scalings():
    sys_ = VeeSystem(an_covectors(3))
    u = Point([0.7, 1.9, -0.8])
    for lam in (0.5, 1.0, 2.0):
        conn = vee_flat_connection(sys_, lam=lam)
        assert riemann_at(conn, u).max_abs() < 1e-6


def test_covector_product_pole_on_hyperplane():
    sys_ = VeeSystem(an_covectors(2))
    prod = vee_product(sys_)
    with pytest.raises(SingularityError):
        prod.table(np.array([1.0, 1.0]))  # on the (1,-1) hyperplane


# ---------------------------------------------------------------------------
# regular normal forms


def test_jordan_unity_acts_as_identity():
    data = jordan_canonical_data(3)
    u = np.array([0.4, 1.2, 2.1])
    t = data.product.table(u)
    L = np.einsum("ijk,j->ik", t, data.e.val(u))
    assert np.max(np.abs(L - np.eye(3))) == 0.0


def test_jordan_euler_operator_single_block():
    data = jordan_canonical_data(3)
    a = 0.7
    u = np.array([a, 1.0, 0.0])
    t = data.product.table(u)
    L = np.einsum("ijk,k->ij", t, data.E.val(u))
    eigs = np.linalg.eigvals(L)
    assert np.max(np.abs(eigs - a)) < 1e-12
    # non-diagonalizable: rank of (L - a I) is 2 for one 3-block
    assert np.linalg.matrix_rank(L - a * np.eye(3)) == 2


def test_jordan_two_block_data():
    data = jordan_canonical_data(3, blocks=(2, 1))
    u = np.array([0.4, 1.2, 2.1])
    t = data.product.table(u)
    assert t[2, 2, 2] == 1.0
    assert t[0, 0, 0] == 1.0 and t[1, 0, 1] == 1.0
    assert product_algebra_residual(data.product, Point(u)) == 0.0


def test_jordan_block_validation():
    with pytest.raises(ParameterError):
        jordan_canonical_data(3, blocks=(2, 2))
