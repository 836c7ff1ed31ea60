"""Top-level acceptance suite.

One test per released guarantee: conservation of the six-field flow,
the scalar second-order reduction, the reduce/reconstruct roundtrip,
flatness of every declared connection family, the bracket-generation
certificates, both Painleve-type reductions, the non-semisimple
connection ladder, the four-dimensional hypergeometric branch, and
byte-stable CLI reports.  Tolerances are pinned to the released
values; runtime budgets are asserted where the guarantee includes one.
"""

import json
import time

import numpy as np
import pytest
from click.testing import CliRunner

from multiflat import biflat6 as b6
from multiflat import connections, models, regular, triflat4, virasoro
from multiflat.cli import main
from multiflat.connections import EventualIdentityDiag
from multiflat.geom import riemann_at


def _parallel_residual(conn, E, u):
    G = conn.table(u)
    return float(np.max(np.abs(E.jac(u)
                               + np.einsum('ijk,k->ij', G, E.val(u)))))


@pytest.fixture(scope="module")
def seeded_mainsys_trajectories():
    rng = np.random.default_rng(42)
    out = []
    for _ in range(10):
        y0 = rng.uniform(-0.5, 0.5, 6)
        traj = b6.integrate(b6.BiflatState.from_vector(y0, 1.5), 3.0,
                            rtol=1e-10, atol=1e-12)
        out.append(traj)
    return out


# ---------------------------------------------------------------------------
# 1. conservation of the six-field flow


def test_acceptance_mainsys_conservation():
    rng = np.random.default_rng(42)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(10):
        y0 = rng.uniform(-0.5, 0.5, 6)
        traj = b6.integrate(b6.BiflatState.from_vector(y0, 1.5), 3.0,
                            rtol=1e-10, atol=1e-12)
        worst = max(worst, float(np.max(b6.integral_drift(traj))))
    elapsed = time.perf_counter() - start
    assert worst < 1e-8
    assert elapsed < 5.0


# ---------------------------------------------------------------------------
# 2. scalar second-order reduction along the flow


def test_acceptance_sigma_form_residual(seeded_mainsys_trajectories):
    h = 1e-3
    worst = 0.0
    for traj in seeded_mainsys_trajectories:
        ints = b6.first_integrals(traj.y[0])
        for z in np.linspace(1.6, 2.9, 9):
            # second derivative by finite differences of the reduced
            # scalar profile, not the algebraic closure
            stencil = [z - 2 * h, z - h, z, z + h, z + 2 * h]
            ss, _ = b6.sigma_reduction(traj, zs=stencil)
            fs = [s.f for s in ss]
            fpp = (-fs[4] + 16 * fs[3] - 30 * fs[2]
                   + 16 * fs[1] - fs[0]) / (12 * h * h)
            s = ss[2]
            sample = b6.SigmaSample(z=s.z, f=s.f, fp=s.fp, fpp=fpp,
                                    g1=s.g1, g2=s.g2)
            worst = max(worst, b6.pvi_residual(sample, ints))
    assert worst < 1e-5


# ---------------------------------------------------------------------------
# 3. reduce-then-reconstruct roundtrip


def test_acceptance_reconstruction_roundtrip(seeded_mainsys_trajectories):
    traj = seeded_mainsys_trajectories[0]
    ints = b6.first_integrals(traj.y[0])
    zs = np.linspace(1.5, 3.0, 22)[1:-1]  # 20 interior points
    samples, _ = b6.sigma_reduction(traj, zs=zs)

    def sweep(sign):
        worst = 0.0
        for s in samples:
            actual = traj.eval(s.z)
            errs = []
            for branch in (0, 1):
                rp = b6.ReconstructionParams(
                    q1=ints.I4, q2=ints.I5, d1=ints.I1, d2=ints.I2,
                    d3=ints.I3, mu_branch=branch)
                rec = b6.reconstruct(s.z, s.f, s.fp, s.fpp, rp).vector
                errs.append(np.max(np.abs(sign * rec - actual))
                            / max(1.0, np.max(np.abs(actual))))
            worst = max(worst, min(errs))
        return worst

    assert min(sweep(1.0), sweep(-1.0)) < 1e-5


def test_acceptance_degenerate_inputs_detected():
    z = -1.0
    state = b6.exceptional_family(0.3, 0.4, 1.0, z)
    ints = b6.first_integrals(state)
    sample = b6._sigma_values(state.vector, z, ints.I4)
    rp = b6.ReconstructionParams(q1=ints.I4, q2=ints.I5, d1=ints.I1,
                                 d2=ints.I2, d3=ints.I3, mu_branch=0)
    with pytest.raises(b6.DegenerateMuError):
        b6.reconstruct(z, sample.f, sample.fp, sample.fpp, rp)


def test_acceptance_exceptional_family_solves_the_flow():
    h = 1e-3

    def vec(z):
        return b6.exceptional_family(0.3, 0.4, 1.0, z).vector

    worst = 0.0
    for z0 in (-2.5, -1.5, -1.0):
        d = (vec(z0 - 2 * h) - 8 * vec(z0 - h)
             + 8 * vec(z0 + h) - vec(z0 + 2 * h)) / (12 * h)
        worst = max(worst,
                    float(np.max(np.abs(d - b6.mainsys_rhs(z0, vec(z0))))))
    assert worst < 1e-6


# ---------------------------------------------------------------------------
# 4. integrability conditions and flatness, sampled


def _flatness_suite(gam, n, identities, rng, low=-3.0, high=3.0,
                    min_abs=0.05):
    pts = connections.sample_distinct_points(n, 50, rng, low=low, high=high,
                                             min_sep=0.5, min_abs=min_abs)
    built = [connections.build_natural(gam)]
    built += [connections.build_dual(gam, E) for E in identities]
    tsarev = flat = curv = 0.0
    for u in pts:
        tsarev = max(tsarev, connections.tsarev_residual(gam, u))
        for E in identities:
            flat = max(flat, connections.euler_flatness_residual(gam, E, u))
        for conn in built:
            curv = max(curv, riemann_at(conn, u).max_abs())
    return tsarev, flat, curv


def test_acceptance_flatness_equivalence_sampled():
    rng = np.random.default_rng(7)
    suites = []
    for n in (2, 3, 4):
        eps = rng.uniform(-0.4, 0.4, n)
        gam = models.epsilon_gammas(models.EpsilonParams(n, eps))
        suites.append((gam, n, [EventualIdentityDiag.euler(n)], {}))
    fp_gam, _metric = models.fp_metrics(3, 1)
    suites.append((fp_gam, 3, [EventualIdentityDiag.euler(3)],
                   dict(low=0.2, high=3.0, min_abs=0.1)))
    suites.append((models.triflat3d_gammas(0.4, 0.35, 0.25), 3,
                   [EventualIdentityDiag.euler(3),
                    EventualIdentityDiag.power(3, 2)],
                   dict(min_abs=0.1)))
    for gam, n, identities, kw in suites:
        tsarev, flat, curv = _flatness_suite(gam, n, identities, rng, **kw)
        assert tsarev < 1e-9
        assert flat < 1e-8
        assert curv < 1e-5


# ---------------------------------------------------------------------------
# 5. bracket-generation certificates


def test_acceptance_distribution_ranks_and_determinant():
    vdm = 0.0
    for n in (3, 4, 5):
        rng = np.random.default_rng(100 + n)
        for _ in range(5):
            u = np.concatenate([
                np.sort(rng.uniform(0.3, 2.5, n)) + 0.1 * np.arange(n),
                [rng.uniform(0.3, 1.2)],
            ])
            if n == 3:
                for m in (-1, 0, 2, 5):
                    assert virasoro.distribution_rank([1, m], u).rank == 2
                assert virasoro.distribution_rank([0, 1, 2], u).rank == 3
            assert virasoro.distribution_rank([0, 1, 2, 3], u).rank == n + 1
            direct, closed = virasoro.vandermonde_nonholonomy_det(u, j=1)
            vdm = max(vdm, abs(direct - closed) / max(1.0, abs(direct)))
    assert vdm < 1e-9


# ---------------------------------------------------------------------------
# 6. first Painleve-type reduction


def _seeded_j3_states(count):
    rng = np.random.default_rng(61)
    out = []
    while len(out) < count:
        y0 = rng.uniform(-0.5, 0.5, 6)
        y0[0] = rng.uniform(0.5, 1.5)  # conserved F1 = I1 > 0
        out.append(y0)
    return out


def test_acceptance_piv_reduction():
    worst = drift = 0.0
    for y0 in _seeded_j3_states(3):
        traj = regular.integrate_j3(regular.J3State.from_vector(y0, 1.5),
                                    2.5, rtol=1e-12, atol=1e-14)
        red = regular.piv_reduction(traj)
        drift = max(drift, red.drift)
        y_of_t = regular.piv_profile(traj)
        for t in np.linspace(red.t[0], red.t[-1], 13)[1:-1]:
            worst = max(worst, regular.piv_full_residual(
                y_of_t, t, red.b, red.c, h=1e-3))
    assert worst < 1e-4
    assert drift < 1e-7


# ---------------------------------------------------------------------------
# 7. second Painleve-type reduction


def test_acceptance_pv_reduction_and_parameter_inversion():
    rng = np.random.default_rng(71)
    worst = inv_err = 0.0
    for _ in range(3):
        y0 = rng.uniform(-0.5, 0.5, 6)
        y0[2] = rng.uniform(0.8, 1.6)  # F3 != 0 keeps I1 != 0
        traj = regular.integrate_j21(regular.J21State.from_vector(y0, 1.5),
                                     2.5, rtol=1e-12, atol=1e-14)
        red = regular.pv_reduction(traj)
        assert red.drift < 1e-7
        G_of_s = regular.pv_profile(traj)
        for s in np.linspace(red.s[0], red.s[-1], 13)[1:-1]:
            worst = max(worst, regular.pv_full_residual(
                G_of_s, s, red.a, red.b, red.g, red.d, h=1e-3))
        ints = regular.j21_integrals(
            regular.J21State.from_vector(traj.y[0], traj.t0))
        I1r, I2r, I3r, alphar = regular.pv_parameters_inverse(
            red.a, red.b, red.g, red.d,
            sign_I1=1.0 if ints.I1 >= 0 else -1.0,
            sign_I2=1.0 if ints.I2 >= 0 else -1.0)
        ref = np.array([ints.I1, ints.I2, ints.I3, red.alpha])
        got = np.array([I1r, I2r, I3r, alphar])
        inv_err = max(inv_err, float(np.max(np.abs(got - ref))
                                     / max(1.0, np.max(np.abs(ref)))))
    assert worst < 1e-4
    assert inv_err < 1e-10


# ---------------------------------------------------------------------------
# 8. non-semisimple connection ladder


def test_acceptance_multiflat_family_ladder():
    rng = np.random.default_rng(81)
    start = time.perf_counter()
    plain = regular.j3_product()
    curv = par = off = 0.0
    for _ in range(10):
        a = rng.uniform(-1.5, 1.5)
        if abs(a + 2.0) < 0.2:
            a += 0.5
        b = rng.uniform(-1.0, 1.0)
        pts = connections.sample_distinct_points(3, 50, rng, min_abs=0.3)
        ref, _ = regular.multiflat_family(regular.FamilyParams(a, b, 1),
                                          pts[0])
        for l in range(1, 7):
            conn, E = regular.multiflat_family(regular.FamilyParams(a, b, l),
                                               pts[0])
            for u in pts:
                curv = max(curv, riemann_at(conn, u).max_abs())
                par = max(par, _parallel_residual(conn, E, u))
                off = max(off, regular.almost_equivalence_residual(
                    conn, ref, plain, u))
    elapsed = time.perf_counter() - start
    assert curv < 1e-6
    assert par < 1e-10
    assert off < 1e-12
    assert elapsed < 30.0


# ---------------------------------------------------------------------------
# 9. four-dimensional hypergeometric branch


def test_acceptance_triflat4d_branch():
    triples = [(0.3, 0.4, 1.0), (0.2, 0.5, 2.0), (-0.4, 0.7, 1.5),
               (0.6, -0.3, 0.8), (1.1, 0.45, 3.0)]
    h = 1e-3
    feq = cons = 0.0
    for c2, c3, c8 in triples:
        t = triflat4.TriflatC(c2, c3, c8)
        f12 = triflat4.family_profiles(t)[(1, 2)]
        for z in np.linspace(1.5, 4.0, 11):
            d = (f12(z - 2 * h) - 8 * f12(z - h)
                 + 8 * f12(z + h) - f12(z + 2 * h)) / (12 * h)
            F12 = f12(z)
            feq = max(feq, abs(d + F12 * ((F12 + t.C3 - 1.0) * (1.0 - z)
                                          + t.C2) / (z * (z - 1.0))))
            F = triflat4.triflat4d_family(t, z)
            cons = max(cons, float(np.max(np.abs(
                triflat4.constraint_residuals(t, F, z)))))
    assert feq < 1e-8
    assert cons < 1e-9


# ---------------------------------------------------------------------------
# 10. deterministic reports


def test_acceptance_cli_reports_byte_stable():
    runner = CliRunner()
    invocations = [
        ["verify", "--model", "epsilon",
         "--params", "n=3,eps=0.2,0.3,0.4", "--points", "6", "--seed", "5"],
        ["verify", "--model", "family",
         "--params", "a=1.0,b=0.5,lmax=2", "--points", "4", "--seed", "5"],
        ["triflat4", "--params", "C2=0.3,C3=0.4,C8=1.0", "--points", "5"],
        ["distribution", "--params", "n=3,indices=0,1,2,3", "--seed", "5"],
        ["integrate", "--model", "mainsys",
         "--params", "F12=0.2,F21=0.3,F13=0.1,F31=0.4,F23=0.25,F32=0.15",
         "--z0", "2.0", "--z1", "3.0", "--points", "5"],
        ["reconstruct", "--model", "exceptional",
         "--params", "C12=0.3,C23=0.4,C=1.0", "--points", "5"],
    ]
    for args in invocations:
        first = runner.invoke(main, args, catch_exceptions=False)
        second = runner.invoke(main, args, catch_exceptions=False)
        assert first.exit_code == second.exit_code
        assert first.output_bytes == second.output_bytes, args
        json.loads(first.output)  # and the report is well-formed JSON
