"""Rotation-coefficient triples and the four-dimensional cross-ratio
reduction with its hypergeometric solvable branch.

Oracles: tight finite-difference stencils on the closed-form profiles
against the governing first-order equation, the eight linear relations
evaluated directly, agreement between the two displayed right-hand
sides of every reduced equation, cross-module agreement with the
three-dimensional constant family, and curvature of the assembled
connections.
"""

import numpy as np
import pytest

from multiflat import triflat4 as t4
from multiflat.errors import DomainError, ParameterError, SingularityError
from multiflat.geom import Point, riemann_at
from multiflat.models import triflat3d_gammas

ORDERED3 = np.array([2.9, 1.3, 0.4])


@pytest.fixture(scope="module")
def branch():
    return t4.TriflatC(C2=0.3, C3=0.4, C8=1.0)


@pytest.fixture(scope="module")
def profiles(branch):
    return t4.family_profiles(branch)


def tight_final_eq(t, F12_of_z, z, h=1e-3):
    # fourth-order stencil; the library helper's default step is too
    # coarse near the lower end of the z-range
    f = F12_of_z
    d = (f(z - 2 * h) - 8 * f(z - h) + 8 * f(z + h) - f(z + 2 * h)) / (12 * h)
    F12 = f(z)
    return abs(d + F12 * ((F12 + t.C3 - 1.0) * (1.0 - z) + t.C2)
               / (z * (z - 1.0)))


# ---------------------------------------------------------------------------
# branch constants


def test_branch_derived_constants(branch):
    assert abs(branch.C9 - 0.6) < 1e-15
    assert abs(branch.C7 - (-1.3)) < 1e-15


def test_branch_rejects_degenerate_exponent():
    for c3 in (1.0, 2.0, 3.0):
        with pytest.raises(ParameterError):
            t4.TriflatC(0.3, c3, 1.0)
    # negative non-integer exponent is fine
    t4.TriflatC(0.3, 1.5, 1.0)


# ---------------------------------------------------------------------------
# closed-form profile family


def test_family_domain_guard(branch):
    for z in (1.0, 0.5, -2.0):
        with pytest.raises(DomainError):
            t4.triflat4d_family(branch, z)


def test_family_solves_final_equation(branch, profiles):
    worst = max(tight_final_eq(branch, profiles[(1, 2)], z)
                for z in np.linspace(1.5, 4.0, 11))
    assert worst < 1e-8


def test_library_final_equation_helper_is_coarser(branch, profiles):
    # the shared-step helper stays under a loose bound but the tight
    # stencil above is orders of magnitude better near z = 1.5
    coarse = t4.final_equation_residual(branch, 1.5)
    assert coarse < 1e-6
    assert tight_final_eq(branch, profiles[(1, 2)], 1.5) < coarse


def test_family_satisfies_linear_constraints(branch):
    worst = 0.0
    for z in np.linspace(1.5, 4.0, 21):
        F = t4.triflat4d_family(branch, z)
        res = t4.constraint_residuals(branch, F, z)
        assert res.size == 8
        worst = max(worst, float(np.max(np.abs(res))))
    assert worst < 1e-12


def test_family_two_rhs_forms_agree(branch):
    worst = max(t4.rhs_pair_spread(t4.triflat4d_family(branch, z), z)
                for z in np.linspace(1.5, 4.0, 21))
    assert worst < 1e-12


def test_family_solves_full_reduced_system(branch, profiles):
    for z in (1.6, 2.0, 3.0):
        res = t4.system_residuals(profiles, z)
        assert res.size == 24
        assert np.max(np.abs(res)) < 1e-6


def test_family_duplicate_slot_identity(branch):
    F = t4.triflat4d_family(branch, 2.4)
    assert F[(1, 4)] == F[(1, 2)]


def test_family_large_scale_constant_suppresses_leading_profile():
    # F12 ~ 1/C8 for large C8
    vals = [abs(t4.triflat4d_family(t4.TriflatC(0.3, 0.4, c8), 2.0)[(1, 2)])
            for c8 in (1.0, 1e2, 1e4)]
    assert vals[0] > vals[1] > vals[2]
    assert vals[2] < 1e-3


# ---------------------------------------------------------------------------
# cross-ratio and assembled four-dimensional symbols


def test_cross_ratio_direct_value():
    u = np.array([0.5, 1.2, 2.0, 3.3])
    expected = (0.5 - 1.2) * (2.0 - 3.3) / ((1.2 - 2.0) * (0.5 - 3.3))
    assert abs(t4.cross_ratio(u) - expected) < 1e-15


def test_cross_ratio_guards():
    with pytest.raises(SingularityError):
        t4.cross_ratio(np.array([1.0, 1.0, 2.0, 3.0]))
    with pytest.raises(ParameterError):
        t4.cross_ratio(np.array([1.0, 2.0, 3.0]))


def test_gammas_entries_are_profiles_times_prefactors(branch, profiles):
    u = np.array([5.0, 1.0, 2.0, 4.0])
    z = t4.cross_ratio(u)
    assert z > 1.0
    G = t4.triflat4d_gammas(profiles).matrix(u)
    u1, u2, u3, u4 = u
    pref = {1: (u3 - u2) / ((u1 - u3) * (u1 - u2)),
            2: (u3 - u1) / ((u2 - u3) * (u2 - u1)),
            3: (u2 - u1) / ((u3 - u1) * (u3 - u2)),
            4: (u1 - u3) / ((u4 - u1) * (u4 - u3))}
    F = t4.triflat4d_family(branch, z)
    for (i, j) in t4.PAIR_ORDER:
        assert abs(G[i - 1, j - 1] - F[(i, j)] * pref[j]) < 1e-13
    assert np.max(np.abs(np.diag(G))) == 0.0


def test_gammas_reject_incomplete_profile_map(profiles):
    partial = dict(profiles)
    del partial[(2, 3)]
    with pytest.raises(ParameterError):
        t4.triflat4d_gammas(partial)


def test_gammas_validate_supplied_point(profiles):
    with pytest.raises(SingularityError):
        t4.triflat4d_gammas(profiles, u=np.array([1.0, 1.0, 2.0, 3.0]))


# ---------------------------------------------------------------------------
# augmented rotation-coefficient system


def test_egorov_data_shape_validation():
    with pytest.raises(ParameterError):
        t4.EgorovData(beta=lambda u: np.zeros((3, 3)),
                      H=lambda u: np.ones(3),
                      d=np.zeros(3), c=np.zeros(2))


def test_egorov_residual_zero_data_is_exact():
    zero = t4.EgorovData(beta=lambda u: np.zeros((3, 3)),
                         H=lambda u: np.ones(3),
                         d=np.zeros(3), c=np.zeros(3))
    rep = t4.egorov_residual(zero, ORDERED3)
    assert rep.max_abs == 0.0
    assert set(rep.entries) == {
        "beta-closure", "beta-translation", "beta-scaling",
        "beta-quadratic", "lame-closure", "lame-translation",
        "lame-scaling", "lame-quadratic"}


def test_egorov_residual_dimension_mismatch():
    zero = t4.EgorovData(beta=lambda u: np.zeros((3, 3)),
                         H=lambda u: np.ones(3),
                         d=np.zeros(3), c=np.zeros(3))
    with pytest.raises(ParameterError):
        t4.egorov_residual(zero, np.array([2.0, 1.0]))


def test_symmetric_constant_family_satisfies_full_system():
    data = t4.triflat3d_egorov_data(1 / 3, 1 / 3, 1 / 3)
    rep = t4.egorov_residual(data, ORDERED3)
    assert rep.max_abs < 1e-7  # FD-stencil limited


def test_generic_constants_break_only_the_scaling_symmetry():
    # the rotation coefficients are homogeneous of degree -1 only when
    # the three constants coincide; closure and translation hold for
    # any admissible constants
    data = t4.triflat3d_egorov_data(0.4, 0.35, 0.25)
    rep = t4.egorov_residual(data, ORDERED3)
    assert rep["beta-scaling"] > 1e-2
    assert rep["beta-closure"] < 1e-7
    assert rep["beta-translation"] < 1e-7
    assert rep["lame-closure"] < 1e-7
    assert rep["lame-translation"] < 1e-7


def test_constant_family_parameter_and_domain_guards():
    with pytest.raises(ParameterError):
        t4.triflat3d_egorov_data(0.4, 0.4, 0.4)  # sum != 1
    data = t4.triflat3d_egorov_data(0.4, 0.35, 0.25)
    with pytest.raises(DomainError):
        data.H(np.array([0.4, 1.3, 2.9]))  # needs u1 > u2 > u3


def test_egorov_offdiag_matches_constant_symbols():
    data = t4.triflat3d_egorov_data(1 / 3, 1 / 3, 1 / 3)
    a = t4.egorov_offdiag(data).matrix(ORDERED3)
    b = triflat3d_gammas(1 / 3, 1 / 3, 1 / 3).matrix(ORDERED3)
    assert np.max(np.abs(a - b)) < 1e-14


def test_connection_triple_is_flat():
    data = t4.triflat3d_egorov_data(1 / 3, 1 / 3, 1 / 3)
    triple = t4.triflat_connection_triple(data, ORDERED3)
    assert len(triple) == 3
    p = Point(ORDERED3)
    for conn in triple:
        assert riemann_at(conn, p).max_abs() < 1e-6


def test_connection_triple_validates_point():
    data = t4.triflat3d_egorov_data(1 / 3, 1 / 3, 1 / 3)
    with pytest.raises(SingularityError):
        t4.triflat_connection_triple(data, np.array([2.0, 2.0, 0.4]))
