"""Command-line front end.

Runs verification suites on the named model structures, integrates the
three six-field ODE systems, performs the scalar reductions and the
algebraic reconstruction, and checks bracket-generation of the extended
identity fields.  Every command prints a JSON report to stdout (see
:mod:`multiflat.report`); commands that produce tabular data also write
a CSV when ``--out`` is given.

Exit codes: 0 when every check passes, 1 on a residual failure or a
singularity hit at run time, 2 on a usage or configuration error.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Optional

import click
import numpy as np

from . import biflat6, connections, models, regular, triflat4, virasoro
from .connections import EventualIdentityDiag
from .errors import (DimensionError, DomainError, InconsistencyError,
                     InvertibilityError, ParameterError,
                     ReconstructionError, SingularityError)
from .geom import nabla_c_symmetry_residual, riemann_at
from .report import ResidualReport, csv_text, format_float, write_text

MAINSYS_FIELDS = ("F12", "F21", "F13", "F31", "F23", "F32")
SIX_FIELDS = ("F1", "F2", "F3", "F4", "F5", "F6")

_REQUIRED = object()


# ---------------------------------------------------------------------------
# configuration plumbing
# ---------------------------------------------------------------------------

@dataclass
class RunConfig:
    """Resolved options of one CLI invocation (flags over config file)."""

    command: str
    model: Optional[str] = None
    params: dict = field(default_factory=dict)
    points: Optional[int] = None
    seed: int = 0
    z0: Optional[float] = None
    z1: Optional[float] = None
    rtol: Optional[float] = None
    atol: Optional[float] = None
    out: Optional[str] = None
    traj: Optional[str] = None

    def tolerances(self, rtol_default=1e-10, atol_default=1e-12):
        return (self.rtol if self.rtol is not None else rtol_default,
                self.atol if self.atol is not None else atol_default)


def _usage_fail(message):
    click.echo(f"error: {message}", err=True)
    raise SystemExit(2)


def _parse_scalar(text):
    try:
        return float(text)
    except ValueError:
        raise ParameterError(f"parameter value {text!r} is not numeric")


def parse_params(text):
    """Parse ``k=v[,v...]`` lists; bare values extend the previous key."""
    out = {}
    if not text:
        return out
    key = None
    for token in str(text).split(","):
        token = token.strip()
        if not token:
            continue
        if "=" in token:
            key, _, value = token.partition("=")
            key = key.strip()
            if not key:
                raise ParameterError("empty parameter name")
            out[key] = [_parse_scalar(value)]
        else:
            if key is None:
                raise ParameterError(
                    f"value {token!r} appears before any 'name=' key")
            out[key].append(_parse_scalar(token))
    return {k: (v[0] if len(v) == 1 else v) for k, v in out.items()}


def _load_config_file(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        _usage_fail(f"cannot read config file {path}: {exc}")
    if not isinstance(data, dict):
        _usage_fail(f"config file {path} must hold a JSON object")
    return data


def _build_config(command, kw):
    filecfg = {}
    if kw.get("config"):
        filecfg = _load_config_file(kw["config"])
    try:
        params = dict(filecfg.get("params") or {})
        if isinstance(filecfg.get("params"), str):
            params = parse_params(filecfg["params"])
        params.update(parse_params(kw.get("params")))
    except ParameterError as exc:
        _usage_fail(str(exc))

    def pick(name, cast=None, default=None):
        value = kw.get(name)
        if value is None:
            value = filecfg.get(name, default)
        if value is not None and cast is not None:
            value = cast(value)
        return value

    return RunConfig(
        command=command,
        model=pick("model"),
        params=params,
        points=pick("points", int),
        seed=pick("seed", int, 0),
        z0=pick("z0", float),
        z1=pick("z1", float),
        rtol=pick("rtol", float),
        atol=pick("atol", float),
        out=pick("out", str),
        traj=pick("traj", str),
    )


def _fparam(params, name, default=_REQUIRED):
    if name not in params:
        if default is _REQUIRED:
            raise ParameterError(f"missing parameter {name!r}")
        return default
    value = params[name]
    if isinstance(value, list):
        raise ParameterError(f"parameter {name!r} must be a single number")
    return float(value)


def _iparam(params, name, default=_REQUIRED):
    value = _fparam(params, name, default)
    if value != int(value):
        raise ParameterError(f"parameter {name!r} must be an integer")
    return int(value)


def _lparam(params, name, default=_REQUIRED):
    if name not in params:
        if default is _REQUIRED:
            raise ParameterError(f"missing parameter {name!r}")
        return list(default)
    value = params[name]
    return [float(v) for v in (value if isinstance(value, list) else [value])]


def _out_paths(out):
    if out is None:
        return None, None
    base, ext = os.path.splitext(out)
    if ext == ".csv":
        return base + ".json", out
    if ext == ".json":
        return out, base + ".csv"
    return out + ".json", out + ".csv"


def _emit(report, cfg, csv_header=None, csv_rows=None, exit_code=None):
    json_path, csv_path = _out_paths(cfg.out)
    text = report.to_json()
    click.echo(text, nl=False)
    if json_path is not None:
        write_text(json_path, text)
    if csv_header is not None and csv_path is not None:
        write_text(csv_path, csv_text(csv_header, csv_rows))
    code = exit_code if exit_code is not None else (0 if report.all_pass
                                                    else 1)
    raise SystemExit(code)


def _run(cfg, report, body):
    """Execute a command body with the shared error-to-exit-code policy."""
    try:
        table = body()
    except SingularityError as exc:
        note = f"singularity: {exc}"
        if exc.last_t is not None:
            note += f"; last z = {format_float(exc.last_t)}"
        report.add_note(note)
        _emit(report, cfg, exit_code=1)
    except InconsistencyError as exc:
        report.add_note(f"inconsistency: {exc}")
        _emit(report, cfg, exit_code=1)
    except (ParameterError, DimensionError, DomainError,
            InvertibilityError) as exc:
        _usage_fail(str(exc))
    else:
        header, rows = table if table is not None else (None, None)
        _emit(report, cfg, header, rows)


def _common_options(f):
    decorators = [
        click.option("--model", default=None, help="Model or mode name."),
        click.option("--params", default=None,
                     help="Comma-separated k=v[,v...] parameter list."),
        click.option("--points", default=None, type=int,
                     help="Sample-point / output-row count."),
        click.option("--seed", default=None, type=int, help="RNG seed."),
        click.option("--z0", default=None, type=float,
                     help="Interval start."),
        click.option("--z1", default=None, type=float, help="Interval end."),
        click.option("--rtol", default=None, type=float,
                     help="Integrator relative tolerance."),
        click.option("--atol", default=None, type=float,
                     help="Integrator absolute tolerance."),
        click.option("--out", default=None,
                     help="Output path; writes <out>.json and <out>.csv."),
        click.option("--config", default=None,
                     help="JSON config file; flags override its fields."),
        click.option("--traj", default=None,
                     help="Stored trajectory CSV (reduce / reconstruct)."),
    ]
    for dec in reversed(decorators):
        f = dec(f)
    return f


# ---------------------------------------------------------------------------
# shared numerical helpers
# ---------------------------------------------------------------------------

def _parallel_residual(conn, E, u):
    """Max |d_j E^i + Gamma^i_{jk} E^k| at ``u``."""
    G = conn.table(u)
    return float(np.max(np.abs(E.jac(u)
                               + np.einsum('ijk,k->ij', G, E.val(u)))))


def _interior(a, b, count, frac=0.02):
    pad = frac * (b - a)
    return np.linspace(a + pad, b - pad, count)


def _replay_trajectory(path, fields, rtol, atol, integrator):
    """Re-integrate a stored trajectory CSV from its first sample."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as exc:
        raise ParameterError(f"cannot read trajectory file {path}: {exc}")
    expected = ["z"] + list(fields)
    if header[:7] != expected:
        raise ParameterError(
            f"trajectory file {path} has columns {header[:7]}, "
            f"expected {expected}")
    if data.shape[0] < 2 or data.shape[1] < 7:
        raise ParameterError(f"trajectory file {path} is too short")
    z0, z1 = float(data[0, 0]), float(data[-1, 0])
    y0 = data[0, 1:7]
    return integrator(y0, z0, z1, rtol, atol), z0, z1


def _rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b)) / max(1.0, float(np.max(np.abs(b)))))


# ---------------------------------------------------------------------------
# verify suites
# ---------------------------------------------------------------------------

def _semisimple_suite(report, gam, n, cfg, identities, low=-3.0, high=3.0,
                      min_abs=0.05, metric=None):
    rng = np.random.default_rng(cfg.seed)
    count = cfg.points or 50
    # wide separation keeps finite-difference stencils clear of the
    # coordinate-coincidence poles
    pts = connections.sample_distinct_points(n, count, rng, low=low,
                                             high=high, min_sep=0.5,
                                             min_abs=min_abs)
    natural = connections.build_natural(gam)
    duals = [(name, connections.build_dual(gam, E)) for name, E in identities]
    worst = {"tsarev": 0.0, "unity-flatness": 0.0, "curvature-natural": 0.0}
    for name, _E in identities:
        worst[f"{name}-flatness"] = 0.0
        worst[f"curvature-dual-{name}"] = 0.0
    if metric is not None:
        worst["metric-compatibility"] = 0.0
    for u in pts:
        worst["tsarev"] = max(worst["tsarev"],
                              connections.tsarev_residual(gam, u))
        worst["unity-flatness"] = max(
            worst["unity-flatness"],
            connections.unit_flatness_residual(gam, u))
        worst["curvature-natural"] = max(
            worst["curvature-natural"], riemann_at(natural, u).max_abs())
        for (name, E), (_n2, dual) in zip(identities, duals):
            worst[f"{name}-flatness"] = max(
                worst[f"{name}-flatness"],
                connections.euler_flatness_residual(gam, E, u))
            worst[f"curvature-dual-{name}"] = max(
                worst[f"curvature-dual-{name}"],
                riemann_at(dual, u).max_abs())
        if metric is not None:
            worst["metric-compatibility"] = max(
                worst["metric-compatibility"],
                connections.hamiltonian_metric_residual(gam, metric, u))
    report.add_check("tsarev", worst["tsarev"], 1e-9)
    report.add_check("unity-flatness", worst["unity-flatness"], 1e-8)
    for name, _E in identities:
        report.add_check(f"{name}-flatness", worst[f"{name}-flatness"], 1e-8)
    report.add_check("curvature-natural", worst["curvature-natural"], 1e-5)
    for name, _E in identities:
        report.add_check(f"curvature-dual-{name}",
                         worst[f"curvature-dual-{name}"], 1e-5)
    if metric is not None:
        # finite-difference log-derivative check; stencil-limited accuracy
        report.add_check("metric-compatibility",
                         worst["metric-compatibility"], 1e-5)
    report.add_note(f"sampled {count} admissible points")


def _verify_epsilon(cfg, report):
    n = _iparam(cfg.params, "n")
    eps = _lparam(cfg.params, "eps")
    gam = models.epsilon_gammas(models.EpsilonParams(n, np.asarray(eps)))
    _semisimple_suite(report, gam, n, cfg,
                      [("euler", EventualIdentityDiag.euler(n))])


def _verify_fp(cfg, report):
    n = _iparam(cfg.params, "n")
    alpha = _fparam(cfg.params, "alpha")
    gam, metric = models.fp_metrics(n, alpha)
    _semisimple_suite(report, gam, n, cfg,
                      [("euler", EventualIdentityDiag.euler(n))],
                      low=0.2, high=3.0, min_abs=0.1, metric=metric)


def _verify_triflat3d(cfg, report):
    C12 = _fparam(cfg.params, "C12")
    C23 = _fparam(cfg.params, "C23")
    C31 = _fparam(cfg.params, "C31")
    gam = models.triflat3d_gammas(C12, C23, C31)
    _semisimple_suite(report, gam, 3, cfg,
                      [("euler", EventualIdentityDiag.euler(3)),
                       ("euler2", EventualIdentityDiag.power(3, 2))],
                      min_abs=0.1)


def _verify_family(cfg, report):
    a = _fparam(cfg.params, "a")
    b = _fparam(cfg.params, "b")
    lmax = _iparam(cfg.params, "lmax", 6)
    if lmax < 1:
        raise ParameterError("lmax must be at least 1")
    rng = np.random.default_rng(cfg.seed)
    count = cfg.points or 50
    pts = connections.sample_distinct_points(3, count, rng, min_abs=0.3)
    plain = regular.j3_product()
    conn_ref, _ = regular.multiflat_family(
        regular.FamilyParams(a, b, 1), pts[0])
    worst = {"curvature": 0.0, "identity-parallel": 0.0,
             "product-symmetry": 0.0, "offdiag-agreement": 0.0}
    per_l = []
    for l in range(1, lmax + 1):
        p = regular.FamilyParams(a, b, l)
        conn, E = regular.multiflat_family(p, pts[0])
        prod = regular.family_product(p)
        here = dict.fromkeys(worst, 0.0)
        for u in pts:
            here["curvature"] = max(here["curvature"],
                                    riemann_at(conn, u).max_abs())
            here["identity-parallel"] = max(here["identity-parallel"],
                                            _parallel_residual(conn, E, u))
            here["product-symmetry"] = max(
                here["product-symmetry"],
                nabla_c_symmetry_residual(conn, prod, u))
            here["offdiag-agreement"] = max(
                here["offdiag-agreement"],
                regular.almost_equivalence_residual(conn, conn_ref, plain, u))
        per_l.append((l, here["curvature"], here["identity-parallel"],
                      here["product-symmetry"], here["offdiag-agreement"]))
        for key in worst:
            worst[key] = max(worst[key], here[key])
    report.add_check("curvature", worst["curvature"], 1e-6)
    report.add_check("identity-parallel", worst["identity-parallel"], 1e-10)
    report.add_check("product-symmetry", worst["product-symmetry"], 1e-9)
    report.add_check("offdiag-agreement", worst["offdiag-agreement"], 1e-12)
    report.add_note(f"flat-structure ladder checked for l = 1..{lmax} "
                    f"at {count} points")
    header = ("l", "curvature", "identity_parallel", "product_symmetry",
              "offdiag_agreement")
    return header, per_l


_VERIFY_MODELS = {
    "epsilon": _verify_epsilon,
    "fp": _verify_fp,
    "triflat3d": _verify_triflat3d,
    "family": _verify_family,
}


# ---------------------------------------------------------------------------
# reduction check blocks (shared by `reduce` and `regular`)
# ---------------------------------------------------------------------------

def _piv_checks(traj, report, count):
    red = regular.piv_reduction(traj)
    report.add_check("constant-drift", red.drift, 1e-7)
    y_of_t = regular.piv_profile(traj)
    worst = 0.0
    for t in _interior(red.t[0], red.t[-1], count):
        # h = 1e-3 balances stencil truncation against dense-output
        # interpolation noise amplified by the second difference
        worst = max(worst, regular.piv_full_residual(y_of_t, t, red.b, red.c,
                                                     h=1e-3))
    report.add_check("painleve-iv-residual", worst, 1e-4)
    ints = regular.j3_integrals(
        regular.J3State.from_vector(traj.y[0], traj.t0))
    elim = 0.0
    for z in _interior(traj.t0, traj.t1, count):
        y = traj.eval(z)
        f5, f6 = regular.j3_eliminated_tail(y, z, ints)
        elim = max(elim, _rel_err([f5, f6], [y[4], y[5]]))
    report.add_check("elimination-consistency", elim, 1e-6)
    report.add_note("recovered parameters: "
                    f"b = {format_float(red.b)}, c = {format_float(red.c)}, "
                    f"C1 = {format_float(red.C1)}")
    report.add_note(f"integrals: I1 = {format_float(ints.I1)}, "
                    f"I2 = {format_float(ints.I2)}, "
                    f"I3 = {format_float(ints.I3)}")


def _pv_checks(traj, report, count):
    red = regular.pv_reduction(traj)
    report.add_check("constant-drift", red.drift, 1e-7)
    G_of_s = regular.pv_profile(traj)
    worst = 0.0
    for s in _interior(red.s[0], red.s[-1], count):
        worst = max(worst, regular.pv_full_residual(G_of_s, s, red.a, red.b,
                                                    red.g, red.d, h=1e-3))
    report.add_check("painleve-v-residual", worst, 1e-4)
    ints = regular.j21_integrals(
        regular.J21State.from_vector(traj.y[0], traj.t0))
    elim = 0.0
    for z in _interior(traj.t0, traj.t1, count):
        y = traj.eval(z)
        f2, f5 = regular.j21_eliminated_pair(y, z, ints)
        elim = max(elim, _rel_err([f2, f5], [y[1], y[4]]))
    report.add_check("elimination-consistency", elim, 1e-6)
    s1 = 1.0 if ints.I1 >= 0 else -1.0
    s2 = 1.0 if ints.I2 >= 0 else -1.0
    I1r, I2r, I3r, alphar = regular.pv_parameters_inverse(
        red.a, red.b, red.g, red.d, sign_I1=s1, sign_I2=s2)
    inv = _rel_err([I1r, I2r, I3r, alphar],
                   [ints.I1, ints.I2, ints.I3, red.alpha])
    report.add_check("parameter-inversion", inv, 1e-10)
    report.add_note("recovered parameters: "
                    f"a = {format_float(red.a)}, b = {format_float(red.b)}, "
                    f"g = {format_float(red.g)}, d = {format_float(red.d)}")
    report.add_note(f"integrals: I1 = {format_float(ints.I1)}, "
                    f"I2 = {format_float(ints.I2)}, "
                    f"I3 = {format_float(ints.I3)}")


def _trajectory_rows(traj, z0, z1, count, fields):
    zs = np.linspace(z0, z1, count)
    rows = [[z] + [float(v) for v in traj.eval(z)] for z in zs]
    return ("z",) + tuple(fields), rows


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

@click.group()
def main():
    """Verification and reduction harness for multi-flat structures."""


@main.command()
@_common_options
def verify(**kw):
    """Run the declared residual suite of a named model."""
    cfg = _build_config("verify", kw)
    if cfg.model not in _VERIFY_MODELS:
        _usage_fail(f"unknown model {cfg.model!r}; choose from "
                    f"{sorted(_VERIFY_MODELS)}")
    report = ResidualReport(command="verify", model=cfg.model,
                            params=cfg.params, seed=cfg.seed)
    _run(cfg, report, lambda: _VERIFY_MODELS[cfg.model](cfg, report))


def _integrate_mainsys(cfg, report):
    z0 = cfg.z0 if cfg.z0 is not None else 1.5
    z1 = cfg.z1 if cfg.z1 is not None else 3.0
    y0 = [_fparam(cfg.params, name, 0.0) for name in MAINSYS_FIELDS]
    state = biflat6.BiflatState.from_vector(y0, z0)
    rtol, atol = cfg.tolerances()
    traj = biflat6.integrate(state, z1, rtol=rtol, atol=atol)
    drift = biflat6.integral_drift(traj)
    report.add_check("integral-drift", float(np.max(drift)), 1e-8)
    ints = biflat6.first_integrals(traj.y[0])
    report.add_note("integrals: " + ", ".join(
        f"I{k + 1} = {format_float(v)}" for k, v in
        enumerate(ints.as_array)))
    return _trajectory_rows(traj, z0, z1, cfg.points or 101, MAINSYS_FIELDS)


def _integrate_six(cfg, report, state_cls, integrator, drift_of,
                   integrals_of):
    z0 = cfg.z0 if cfg.z0 is not None else 1.5
    z1 = cfg.z1 if cfg.z1 is not None else 2.5
    y0 = [_fparam(cfg.params, name, 0.0) for name in SIX_FIELDS]
    state = state_cls.from_vector(y0, z0)
    rtol, atol = cfg.tolerances()
    traj = integrator(state, z1, rtol=rtol, atol=atol)
    report.add_check("integral-drift", float(np.max(drift_of(traj))), 1e-8)
    ints = integrals_of(state)
    report.add_note(f"integrals: I1 = {format_float(ints.I1)}, "
                    f"I2 = {format_float(ints.I2)}, "
                    f"I3 = {format_float(ints.I3)}")
    return traj, z0, z1


@main.command()
@_common_options
def integrate(**kw):
    """Integrate one of the six-field systems and tabulate the flow."""
    cfg = _build_config("integrate", kw)
    report = ResidualReport(command="integrate", model=cfg.model,
                            params=cfg.params, seed=cfg.seed)

    def body():
        if cfg.model == "mainsys":
            return _integrate_mainsys(cfg, report)
        if cfg.model == "j3":
            traj, z0, z1 = _integrate_six(
                cfg, report, regular.J3State, regular.integrate_j3,
                regular.j3_integral_drift,
                lambda s: regular.j3_integrals(s))
        elif cfg.model == "j21":
            traj, z0, z1 = _integrate_six(
                cfg, report, regular.J21State, regular.integrate_j21,
                regular.j21_integral_drift,
                lambda s: regular.j21_integrals(s))
        else:
            raise ParameterError(
                f"unknown model {cfg.model!r}; choose from "
                "['j21', 'j3', 'mainsys']")
        return _trajectory_rows(traj, z0, z1, cfg.points or 101, SIX_FIELDS)

    _run(cfg, report, body)


@main.command()
@_common_options
def reduce(**kw):
    """Reduce a stored trajectory to its scalar second-order form."""
    cfg = _build_config("reduce", kw)
    report = ResidualReport(command="reduce", model=cfg.model,
                            params=cfg.params, seed=cfg.seed)

    def body():
        if cfg.traj is None:
            raise ParameterError("reduce needs --traj (a CSV written by "
                                 "`integrate` or `regular`)")
        count = cfg.points or 33
        if cfg.model == "sigma":
            traj, _, _ = _replay_trajectory(
                cfg.traj, MAINSYS_FIELDS, *cfg.tolerances(1e-12, 1e-14),
                lambda y0, z0, z1, r, a: biflat6.integrate(
                    biflat6.BiflatState.from_vector(y0, z0), z1,
                    rtol=r, atol=a))
            samples, fp_check = biflat6.sigma_reduction(traj)
            ints = biflat6.first_integrals(traj.y[0])
            worst = max(biflat6.pvi_residual(s, ints) for s in samples)
            report.add_check("sigma-form-residual", worst, 1e-5)
            report.add_check("fprime-consistency", fp_check, 1e-6)
            report.add_note("recovered parameters: " + ", ".join(
                f"{n} = {format_float(v)}" for n, v in
                zip(("d1", "d2", "d3", "q1", "q2"), ints.as_array)))
        elif cfg.model == "piv":
            traj, _, _ = _replay_trajectory(
                cfg.traj, SIX_FIELDS, *cfg.tolerances(1e-12, 1e-14),
                lambda y0, z0, z1, r, a: regular.integrate_j3(
                    regular.J3State.from_vector(y0, z0), z1,
                    rtol=r, atol=a))
            _piv_checks(traj, report, count)
        elif cfg.model == "pv":
            traj, _, _ = _replay_trajectory(
                cfg.traj, SIX_FIELDS, *cfg.tolerances(1e-12, 1e-14),
                lambda y0, z0, z1, r, a: regular.integrate_j21(
                    regular.J21State.from_vector(y0, z0), z1,
                    rtol=r, atol=a))
            _pv_checks(traj, report, count)
        else:
            raise ParameterError(
                f"unknown model {cfg.model!r}; choose from "
                "['piv', 'pv', 'sigma']")
        report.add_note("trajectory replayed from the first stored sample")

    _run(cfg, report, body)


FPP_SKIP_TOL = 1e-9


def _reconstruct_from_trajectory(cfg, report):
    traj, z0, z1 = _replay_trajectory(
        cfg.traj, MAINSYS_FIELDS, *cfg.tolerances(1e-12, 1e-14),
        lambda y0, zz0, zz1, r, a: biflat6.integrate(
            biflat6.BiflatState.from_vector(y0, zz0), zz1, rtol=r, atol=a))
    ints = biflat6.first_integrals(traj.y[0])
    rp = biflat6.ReconstructionParams(q1=ints.I4, q2=ints.I5, d1=ints.I1,
                                      d2=ints.I2, d3=ints.I3)
    count = cfg.points or 20
    zs = np.linspace(z0, z1, count + 2)[1:-1]
    samples, _ = biflat6.sigma_reduction(traj, zs=zs)
    rows = []
    candidates, actuals = [], []
    degenerate = 0
    for s in samples:
        actual = traj.eval(s.z)
        if abs(s.fpp) < FPP_SKIP_TOL:
            rows.append([s.z] + [float("nan")] * 7 + ["fpp-zero-skipped"])
            continue
        # both roots of the reconstruction quadratic satisfy every
        # pointwise identity (including the f'' one, after the internal
        # sign resolution), so the roundtrip keeps both and matches
        # against the source
        cands = []
        for branch in (0, 1):
            rpb = biflat6.ReconstructionParams(
                q1=rp.q1, q2=rp.q2, d1=rp.d1, d2=rp.d2, d3=rp.d3,
                mu_branch=branch)
            try:
                cands.append(biflat6.reconstruct(s.z, s.f, s.fp, s.fpp,
                                                 rpb).vector)
            except biflat6.DegenerateMuError:
                degenerate += 1
                break
            except ReconstructionError:
                continue
        else:
            if cands:
                candidates.append(cands)
                actuals.append(actual)
                rows.append([s.z] + list(cands[0]) + [0.0, "ok"])
            else:
                rows.append([s.z] + [float("nan")] * 7
                            + ["no-candidate-skipped"])
            continue
        rows.append([s.z] + [float("nan")] * 7 + ["exceptional-family"])
    if degenerate and not candidates:
        report.add_note("verdict: exceptional family (the reconstruction "
                        "variable degenerates at every reconstructible "
                        "point)")
        report.add_check("exceptional-family-detected", 0.0, 0.0)
    elif candidates:
        def sweep(sign):
            errs, picks = [], []
            for cands, actual in zip(candidates, actuals):
                scored = sorted(
                    (_rel_err(sign * c, actual), k)
                    for k, c in enumerate(cands))
                errs.append(scored[0][0])
                picks.append(scored[0][1])
            return max(errs), errs, picks
        plus, errs_p, picks_p = sweep(1.0)
        minus, errs_m, picks_m = sweep(-1.0)
        sign = 1.0 if plus <= minus else -1.0
        errs, picks = (errs_p, picks_p) if sign > 0 else (errs_m, picks_m)
        k = 0
        for row in rows:
            if row[-1] != "ok":
                continue
            row[1:7] = list(sign * candidates[k][picks[k]])
            row[7] = errs[k]
            k += 1
        report.add_check("roundtrip-relative-error", min(plus, minus), 1e-5)
        report.add_note(f"global sign resolved to {int(sign):+d}")
    else:
        report.add_note("no point admitted a reconstruction")
        report.add_check("roundtrip-relative-error", float("nan"), 1e-5)
    header = ("z",) + tuple(MAINSYS_FIELDS) + ("roundtrip_error", "flag")
    return header, rows


def _reconstruct_exceptional(cfg, report):
    C12 = _fparam(cfg.params, "C12")
    C23 = _fparam(cfg.params, "C23")
    C = _fparam(cfg.params, "C", 1.0)
    z0 = cfg.z0 if cfg.z0 is not None else -3.0
    z1 = cfg.z1 if cfg.z1 is not None else -1.2
    count = cfg.points or 20
    zs = np.linspace(z0, z1, count)
    rows = []
    degenerate = 0
    for z in zs:
        state = biflat6.exceptional_family(C12, C23, C, z)
        ints = biflat6.first_integrals(state)
        rp = biflat6.ReconstructionParams(q1=ints.I4, q2=ints.I5,
                                          d1=ints.I1, d2=ints.I2,
                                          d3=ints.I3)
        sample = biflat6._sigma_values(state.vector, z, ints.I4)
        try:
            biflat6.reconstruct(z, sample.f, sample.fp, sample.fpp, rp)
            rows.append([z] + list(state.vector)
                        + [float("nan"), "unexpected-reconstruction"])
        except biflat6.DegenerateMuError:
            degenerate += 1
            rows.append([z] + list(state.vector)
                        + [float("nan"), "exceptional-family"])
    report.add_check("exceptional-family-detected",
                     float(len(zs) - degenerate), 0.0)
    if degenerate == len(zs):
        report.add_note("verdict: exceptional family (the reconstruction "
                        "variable degenerates at every sampled point)")
    header = ("z",) + tuple(MAINSYS_FIELDS) + ("roundtrip_error", "flag")
    return header, rows


@main.command()
@_common_options
def reconstruct(**kw):
    """Rebuild six-field states from reduced (f, f', f'') data."""
    cfg = _build_config("reconstruct", kw)
    report = ResidualReport(command="reconstruct", model=cfg.model,
                            params=cfg.params, seed=cfg.seed)

    def body():
        if cfg.model == "exceptional":
            return _reconstruct_exceptional(cfg, report)
        if cfg.traj is None:
            raise ParameterError("reconstruct needs --traj (a mainsys CSV) "
                                 "or --model exceptional")
        return _reconstruct_from_trajectory(cfg, report)

    _run(cfg, report, body)


@main.command()
@_common_options
def distribution(**kw):
    """Rank / integrability verdicts for the extended identity fields."""
    cfg = _build_config("distribution", kw)
    report = ResidualReport(command="distribution", model=cfg.model,
                            params=cfg.params, seed=cfg.seed)

    def body():
        n = _iparam(cfg.params, "n", 3)
        j = _iparam(cfg.params, "j", 1)
        indices = [int(v) for v in _lparam(cfg.params, "indices")]
        count = cfg.points or 5
        rng = np.random.default_rng(cfg.seed)
        pts = rng.uniform(0.4, 2.6, size=(count, n + 1))
        ranks, depths = [], []
        vdm_err = 0.0
        for u in pts:
            res = virasoro.distribution_rank(indices, u, j=j)
            ranks.append(res.rank)
            depths.append(res.depth)
            direct, closed = virasoro.vandermonde_nonholonomy_det(u, j)
            vdm_err = max(vdm_err, abs(direct - closed)
                          / max(1.0, abs(closed)))
        report.add_check("rank-stability",
                         float(max(ranks) - min(ranks)), 0.0)
        report.add_check("vandermonde-determinant", vdm_err, 1e-9)
        rank = ranks[0]
        k = len(set(indices))
        label = "Delta_(" + ",".join(str(i) for i in indices) + ")"
        if rank == n + 1:
            report.add_note(f"verdict: {label} is totally non-holonomic "
                            f"(bracket-generated rank n+1 = {rank})")
        elif rank == k:
            report.add_note(f"verdict: {label} is integrable (bracket hull "
                            f"rank stays {rank} at every sampled point)")
        else:
            report.add_note(f"verdict: {label} is non-involutive with "
                            f"bracket-generated rank {rank}")
        report.add_note(f"bracket generations used: {max(depths)}")

    _run(cfg, report, body)


@click.command(name="triflat4")
@_common_options
def triflat4_cmd(**kw):
    """Tabulate the 4-d hypergeometric profile family and its residuals."""
    cfg = _build_config("triflat4", kw)
    report = ResidualReport(command="triflat4", model=cfg.model,
                            params=cfg.params, seed=cfg.seed)

    def body():
        from . import triflat4 as t4
        t = t4.TriflatC(C2=_fparam(cfg.params, "C2"),
                        C3=_fparam(cfg.params, "C3"),
                        C8=_fparam(cfg.params, "C8"))
        z0 = cfg.z0 if cfg.z0 is not None else 1.5
        z1 = cfg.z1 if cfg.z1 is not None else 4.0
        if z0 <= 1.0:
            raise ParameterError("the closed-form family needs z0 > 1")
        count = cfg.points or 25
        profiles = t4.family_profiles(t)
        def final_eq(z, h=1e-3):
            # same residual as the library helper, but with a tight
            # stencil: the default step is too coarse near z0 ~ 1.5
            F12 = t4.triflat4d_family(t, z)[(1, 2)]

            def f(s):
                return t4.triflat4d_family(t, s)[(1, 2)]

            d = (-f(z + 2 * h) + 8 * f(z + h)
                 - 8 * f(z - h) + f(z - 2 * h)) / (12 * h)
            return abs(d + F12 * ((F12 + t.C3 - 1.0) * (1.0 - z) + t.C2)
                       / (z * (z - 1.0)))

        rows = []
        worst = {"final-equation": 0.0, "linear-constraints": 0.0,
                 "rhs-pair-spread": 0.0, "system-residuals": 0.0}
        for z in np.linspace(z0, z1, count):
            F = t4.triflat4d_family(t, z)
            feq = final_eq(z)
            cons = float(np.max(np.abs(t4.constraint_residuals(t, F, z))))
            spread = t4.rhs_pair_spread(F, z)
            sysres = float(np.max(np.abs(t4.system_residuals(profiles, z))))
            worst["final-equation"] = max(worst["final-equation"], feq)
            worst["linear-constraints"] = max(worst["linear-constraints"],
                                              cons)
            worst["rhs-pair-spread"] = max(worst["rhs-pair-spread"], spread)
            worst["system-residuals"] = max(worst["system-residuals"],
                                            sysres)
            rows.append([z] + [F[p] for p in t4.PAIR_ORDER]
                        + [feq, cons, spread, sysres])
        report.add_check("final-equation", worst["final-equation"], 1e-8)
        report.add_check("linear-constraints", worst["linear-constraints"],
                         1e-9)
        report.add_check("rhs-pair-spread", worst["rhs-pair-spread"], 1e-8)
        report.add_check("system-residuals", worst["system-residuals"], 1e-6)
        header = (("z",)
                  + tuple(f"F{i}{j}" for i, j in t4.PAIR_ORDER)
                  + ("final_equation", "constraints_max", "rhs_pair_spread",
                     "system_residual_max"))
        return header, rows

    _run(cfg, report, body)


@click.command(name="regular")
@_common_options
def regular_cmd(**kw):
    """Suites for the non-semisimple models: j3, j21, or family."""
    cfg = _build_config("regular", kw)
    report = ResidualReport(command="regular", model=cfg.model,
                            params=cfg.params, seed=cfg.seed)

    def body():
        count = cfg.points or 33
        if cfg.model == "j3":
            defaults = dict(zip(SIX_FIELDS,
                                (1.0, 0.3, -0.2, 0.5, 0.1, -0.4)))
            z0 = cfg.z0 if cfg.z0 is not None else 1.5
            z1 = cfg.z1 if cfg.z1 is not None else 2.5
            y0 = [_fparam(cfg.params, n, defaults[n]) for n in SIX_FIELDS]
            traj = regular.integrate_j3(
                regular.J3State.from_vector(y0, z0), z1,
                *cfg.tolerances(1e-12, 1e-14))
            report.add_check("integral-drift",
                             float(np.max(regular.j3_integral_drift(traj))),
                             1e-8)
            _piv_checks(traj, report, count)
            return _trajectory_rows(traj, z0, z1, cfg.points or 101,
                                    SIX_FIELDS)
        if cfg.model == "j21":
            defaults = dict(zip(SIX_FIELDS,
                                (0.4, -0.3, 1.2, 0.2, 0.5, -0.1)))
            z0 = cfg.z0 if cfg.z0 is not None else 1.5
            z1 = cfg.z1 if cfg.z1 is not None else 2.5
            y0 = [_fparam(cfg.params, n, defaults[n]) for n in SIX_FIELDS]
            traj = regular.integrate_j21(
                regular.J21State.from_vector(y0, z0), z1,
                *cfg.tolerances(1e-12, 1e-14))
            report.add_check("integral-drift",
                             float(np.max(regular.j21_integral_drift(traj))),
                             1e-8)
            _pv_checks(traj, report, count)
            return _trajectory_rows(traj, z0, z1, cfg.points or 101,
                                    SIX_FIELDS)
        if cfg.model == "family":
            return _verify_family(cfg, report)
        raise ParameterError(f"unknown mode {cfg.model!r}; choose from "
                             "['family', 'j21', 'j3']")

    _run(cfg, report, body)


main.add_command(triflat4_cmd)
main.add_command(regular_cmd)


if __name__ == "__main__":
    main()
