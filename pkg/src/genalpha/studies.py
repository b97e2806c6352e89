"""Convergence, dispersion, preconditioner and spectrum studies.

Every study takes a plain ``dict`` configuration (usually read from JSON),
runs its independent cells, possibly in a thread pool, and returns a
:class:`StudyResult` that can be written as CSV.
"""

from __future__ import annotations

import csv
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .assembly import SemiDiscreteSystem
from .geometry import get_domain
from .integrator import (CFLError, InstabilityError, MassSolver, StepError, compute_params,
                         init_state, integrate, max_generalized_eigenvalue, cfl_timestep)
from .manufactured import get_problem
from .params import ParameterError
from .precond import mass_preconditioner
from .spectral import find_bifurcation, find_stability, spectrum_sweep

log = logging.getLogger(__name__)

THREADS_ENV = "GENALPHA_NUM_THREADS"


class ConfigError(ValueError):
    """Invalid or incomplete study configuration."""


@dataclass
class StudyResult:
    kind: str
    header: list
    rows: list
    summary: dict = field(default_factory=dict)
    aborted: int = 0

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.header)
            for row in self.rows:
                w.writerow([_fmt(v) for v in row])

    def column(self, name):
        i = self.header.index(name)
        return [r[i] for r in self.rows]


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.10g}"
    return v


def _get(cfg, key, default=None, kind=None, required=False):
    if key not in cfg:
        if required:
            raise ConfigError(f"missing configuration key {key!r}")
        return default
    val = cfg[key]
    if kind is list:
        if not isinstance(val, (list, tuple)) or len(val) == 0:
            raise ConfigError(f"{key!r} must be a nonempty list")
        return list(val)
    if kind is not None:
        try:
            return kind(val)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{key!r}: {exc}") from None
    return val


def _threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _map(fn, items):
    n = _threads()
    if n == 1 or len(items) < 2:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def _domain(cfg, default):
    try:
        return get_domain(cfg.get("geometry", default))
    except (KeyError, TypeError, FileNotFoundError) as exc:
        raise ConfigError(f"geometry: {exc}") from None


def _params(cfg):
    try:
        return compute_params(_get(cfg, "k", 2, int), cfg.get("rho_b", 0.0), cfg.get("rho_s"),
                              cfg.get("formulas", "factored"))
    except ParameterError as exc:
        raise ConfigError(str(exc)) from None


def _problem(cfg, default, **kw):
    try:
        return get_problem(cfg.get("problem", default), **kw)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"problem: {exc}") from None


def build_system(domain, p, n_sub, problem, damping=(0.0, 0.0)):
    mp = domain.discretize(p, n_sub)
    return SemiDiscreteSystem(mp, omega=problem.omega, damping=tuple(damping), source=problem.source,
                              boundary=problem.boundary)


def _status(exc) -> str:
    """Row status for an aborted run: ``cfl`` (rejected up front) or ``unstable``."""
    return "cfl" if isinstance(exc, CFLError) else "unstable"


def least_squares_slope(h, err, count: int = 3) -> float:
    """Slope of ``log err`` against ``log h`` over the ``count`` smallest ``h``."""
    h = np.asarray(h, float)
    err = np.asarray(err, float)
    ok = np.isfinite(err) & (err > 0)
    h, err = h[ok], err[ok]
    if h.size < 2:
        return float("nan")
    order = np.argsort(h)[:count]
    return float(np.polyfit(np.log(h[order]), np.log(err[order]), 1)[0])


# ---------------------------------------------------------------- time


def run_time_convergence(cfg: dict) -> StudyResult:
    """Final-time L2 errors in ``u`` and ``v`` for a list of time steps.

    Columns: ``tau, err_u_L2, err_v_L2, slope, slope_v, status``. ``slope``
    and ``slope_v`` are local slopes against the next larger stable ``tau``;
    the last row (status ``fit``) holds least-squares slopes over the three
    finest stable steps.
    """
    taus = sorted((float(t) for t in _get(cfg, "taus", kind=list, required=True)), reverse=True)
    T = _get(cfg, "T", 0.1, float)
    problem = _problem(cfg, "standing_wave_1d")
    domain = _domain(cfg, "unit_interval")
    params = _params(cfg)
    system = build_system(domain, _get(cfg, "p", 5, int), _get(cfg, "n_sub", 64, int), problem,
                          cfg.get("damping", (0.0, 0.0)))
    lam = max_generalized_eigenvalue(system).value
    pre = mass_preconditioner(system)
    U0 = system.project(problem.exact, 0.0, 0)
    V0 = system.project(problem.exact, 0.0, 1)

    def cell(tau):
        try:
            rep = integrate(system, params, U0, V0, tau, T, MassSolver(system.M, pre), lam_max=lam)
        except (CFLError, InstabilityError, StepError) as exc:
            log.info("tau = %.3e aborted: %s", tau, exc)
            return tau, float("nan"), float("nan"), _status(exc)
        t = rep.state.t
        return (tau, system.l2_error(rep.state.U, problem.exact, t, 0),
                system.l2_error(rep.state.V, problem.exact, t, 1), "ok")

    cells = _map(cell, taus)
    rows, prev = [], None
    for tau, eu, ev, status in cells:
        su = sv = float("nan")
        if status == "ok" and prev is not None:
            su = float(np.log(prev[1] / eu) / np.log(prev[0] / tau))
            sv = float(np.log(prev[2] / ev) / np.log(prev[0] / tau))
        if status == "ok":
            prev = (tau, eu, ev)
        rows.append([tau, eu, ev, su, sv, status])
    ok = [c for c in cells if c[3] == "ok"]
    fit_u = least_squares_slope([c[0] for c in ok], [c[1] for c in ok])
    fit_v = least_squares_slope([c[0] for c in ok], [c[2] for c in ok])
    rows.append([float("nan"), float("nan"), float("nan"), fit_u, fit_v, "fit"])
    aborted = sum(c[3] != "ok" for c in cells)
    return StudyResult("time-convergence", ["tau", "err_u_L2", "err_v_L2", "slope", "slope_v", "status"],
                       rows, {"slope_u": fit_u, "slope_v": fit_v, "lambda_max": lam,
                              "tau_cfl": cfl_timestep(lam, params)}, aborted)


# ---------------------------------------------------------------- space


def run_space_convergence(cfg: dict) -> StudyResult:
    """Relative L2 error at ``T`` for every ``(p, n_sub)``.

    Columns: ``n_sub, p, rel_err_L2, slope, status``; rows with status
    ``fit`` hold the least-squares slope in ``h = 1/n_sub`` over the three
    finest meshes of each degree.
    """
    degrees = [int(p) for p in _get(cfg, "degrees", [1, 2, 3, 4], list)]
    n_subs = sorted(int(n) for n in _get(cfg, "n_subs", [8, 16, 32, 64], list))
    tau = _get(cfg, "tau", 1e-5, float)
    T = _get(cfg, "T", 64 * tau, float)
    problem = _problem(cfg, "smooth_trig")
    domain = _domain(cfg, "quarter_annulus")
    params = _params(cfg)

    def cell(pn):
        p, n_sub = pn
        system = build_system(domain, p, n_sub, problem, cfg.get("damping", (0.0, 0.0)))
        U0 = system.project(problem.exact, 0.0, 0)
        V0 = system.project(problem.exact, 0.0, 1)
        try:
            rep = integrate(system, params, U0, V0, tau, T)
        except (CFLError, InstabilityError, StepError) as exc:
            log.info("p = %d, n_sub = %d aborted: %s", p, n_sub, exc)
            return p, n_sub, float("nan"), _status(exc)
        return p, n_sub, system.l2_error(rep.state.U, problem.exact, rep.state.t), "ok"

    cells = _map(cell, [(p, n) for p in degrees for n in n_subs])
    rows, summary = [], {}
    for p in degrees:
        mine = [c for c in cells if c[0] == p]
        prev = None
        for _, n, e, status in mine:
            s = float("nan")
            if status == "ok" and prev is not None:
                s = float(np.log(prev[1] / e) / np.log(n / prev[0]))
            if status == "ok":
                prev = (n, e)
            rows.append([n, p, e, s, status])
        ok = [c for c in mine if c[3] == "ok"]
        fit = least_squares_slope([1.0 / c[1] for c in ok], [c[2] for c in ok])
        summary[p] = fit
        rows.append([float("nan"), p, float("nan"), fit, "fit"])
    aborted = sum(c[3] != "ok" for c in cells)
    return StudyResult("space-convergence", ["n_sub", "p", "rel_err_L2", "slope", "status"], rows,
                       {"slopes": summary}, aborted)


# ---------------------------------------------------------------- dispersion


def run_dispersion(cfg: dict) -> StudyResult:
    """Errors of ``sin(j pi x) cos(pi t)`` modes for several ``rho`` and ``tau``.

    Columns: ``j, rho, tau, err, status``. Time steps above the stability
    bound of the given mode are reported with status ``cfl``.
    """
    modes = [int(j) for j in _get(cfg, "modes", [1, 10, 50, 100, 200, 300], list)]
    rhos = [float(r) for r in _get(cfg, "rhos", [0.1, 0.5, 0.9], list)]
    taus = [float(t) for t in _get(cfg, "taus", [0.05, 1e-3], list)]
    T = _get(cfg, "T", 5.0, float)
    p = _get(cfg, "p", 4, int)
    n_sub = _get(cfg, "n_sub", 400, int)
    k = _get(cfg, "k", 2, int)
    domain = _domain(cfg, "unit_interval")
    base = build_system(domain, p, n_sub, get_problem("dispersion", j=1))
    lam1 = max_generalized_eigenvalue(base).value
    pre = mass_preconditioner(base)

    def cell(item):
        j, rho, tau = item
        problem = get_problem("dispersion", j=j)
        system = build_system(domain, p, n_sub, problem)
        params = compute_params(k, rho)
        U0 = system.project(problem.exact, 0.0, 0)
        V0 = system.project(problem.exact, 0.0, 1)
        try:
            rep = integrate(system, params, U0, V0, tau, T, MassSolver(system.M, pre),
                            lam_max=lam1 / j ** 2)
        except (CFLError, InstabilityError, StepError) as exc:
            return [j, rho, tau, float("nan"), _status(exc)]
        return [j, rho, tau, system.l2_error(rep.state.U, problem.exact, rep.state.t), "ok"]

    rows = _map(cell, [(j, r, t) for t in taus for j in modes for r in rhos])
    aborted = sum(r[-1] != "ok" for r in rows)
    return StudyResult("dispersion", ["j", "rho", "tau", "err", "status"], rows, {}, aborted)


# ---------------------------------------------------------------- preconditioner


def run_precond_iterations(cfg: dict) -> StudyResult:
    """Mean PCG iterations per mass solve over a short run.

    Columns: ``geometry, p, n_sub, mean_iters, kappa``; ``kappa`` is the mean
    extreme-Ritz-value ratio reported by PCG. Initialization solves are not
    counted.
    """
    geoms = _get(cfg, "geometries", ["quarter_annulus"], list)
    degrees = [int(p) for p in _get(cfg, "degrees", [1, 2, 3, 4], list)]
    n_subs = sorted(int(n) for n in _get(cfg, "n_subs", [8, 16, 32], list))
    tau = _get(cfg, "tau", 1e-5, float)
    steps = _get(cfg, "steps", 64, int)
    problem = _problem(cfg, "smooth_trig")
    params = _params(cfg)

    def cell(item):
        geom, p, n_sub = item
        domain = _domain({"geometry": geom}, geom)
        system = build_system(domain, p, n_sub, problem)
        pre = mass_preconditioner(system)
        solver = MassSolver(system.M, pre, tol=_get(cfg, "tol", 1e-12, float))
        U0 = system.project(problem.exact, 0.0, 0)
        V0 = system.project(problem.exact, 0.0, 1)
        state = init_state(system, params, U0, V0, solver)
        solver.reset()
        integrate(system, params, U0, V0, tau, steps * tau, solver, unsafe=True, state0=state)
        name = geom if isinstance(geom, str) else geom.get("name", "custom")
        return [name, p, n_sub, solver.mean_iterations, float(np.nanmean(solver.kappas))]

    rows = _map(cell, [(g, p, n) for g in geoms for p in degrees for n in n_subs])
    return StudyResult("precond-iterations", ["geometry", "p", "n_sub", "mean_iters", "kappa"], rows)


# ---------------------------------------------------------------- spectrum


def run_spectrum(cfg: dict) -> StudyResult:
    """Spectral radius sweeps plus stability and bifurcation annotations.

    Columns: ``kind, k, block, rho_b, rho_s, theta, rho_G, closed_form`` followed by
    ``re_lambda_i, im_lambda_i`` for ``i = 1 .. 3 k_max``. ``kind`` is
    ``sample``, ``theta_max`` or ``omega_b``; ``block`` is 1-based for the
    annotation rows and 0 for samples of the whole matrix.
    """
    rhos = [float(r) for r in _get(cfg, "rhos", [0.0, 0.5, 0.9, 0.99], list)]
    ks = [int(k) for k in _get(cfg, "ks", [1], list)]
    grid = _get(cfg, "theta_grid", {"start": 0.0, "stop": 5.0, "num": 501})
    if isinstance(grid, dict):
        thetas = np.linspace(float(grid.get("start", 0.0)), float(grid["stop"]), int(grid.get("num", 501)))
    else:
        thetas = np.asarray(grid, float)
    rho_s_cfg = cfg.get("rho_s")
    formulas = cfg.get("formulas", "factored")
    kmax = max(ks)
    header = ["kind", "k", "block", "rho_b", "rho_s", "theta", "rho_G", "closed_form"]
    for i in range(3 * kmax):
        header += [f"re_lambda_{i + 1}", f"im_lambda_{i + 1}"]
    pad = 2 * 3 * kmax
    rows, summary = [], {}
    for k in ks:
        for rho in rhos:
            rs = rho if rho_s_cfg is None else min(float(rho_s_cfg), rho)
            try:
                params = compute_params(k, rho, rs, formulas)
            except ParameterError as exc:
                raise ConfigError(str(exc)) from None
            for s in spectrum_sweep(params, thetas):
                vals = []
                for lam in s.eigenvalues:
                    vals += [lam.real, lam.imag]
                rows.append(["sample", k, 0, rho, rs, s.theta, s.radius, float("nan")]
                            + vals + [float("nan")] * (pad - len(vals)))
            st = find_stability(params)
            summary[(k, rho)] = st.theta_max
            for j in range(k):
                rows.append(["theta_max", k, j + 1, rho, rs, st.per_block[j], float("nan"), st.closed_form[j]]
                            + [float("nan")] * pad)
                bif = find_bifurcation(params, j)
                rows.append(["omega_b", k, j + 1, rho, rs, bif.theta, float("nan"), bif.closed_form]
                            + [float("nan")] * pad)
    return StudyResult("spectrum", header, rows, {"theta_max": summary})


# ---------------------------------------------------------------- single run


def run_trajectory(cfg: dict) -> StudyResult:
    """One run with observer rows ``t, L2_error_u, L2_error_v, energy``."""
    problem = _problem(cfg, "smooth_trig")
    domain = _domain(cfg, "quarter_annulus")
    params = _params(cfg)
    system = build_system(domain, _get(cfg, "p", 2, int), _get(cfg, "n_sub", 8, int), problem,
                          cfg.get("damping", (0.0, 0.0)))
    lam = max_generalized_eigenvalue(system).value
    if "tau" in cfg:
        tau = _get(cfg, "tau", kind=float)
    else:
        tau = cfl_timestep(lam, params, _get(cfg, "cfl_safety", 0.9, float))
    T = _get(cfg, "T", required=True, kind=float)
    rows = []

    def observer(t, state):
        rows.append([t, system.l2_error(state.U, problem.exact, t, 0),
                     system.l2_error(state.V, problem.exact, t, 1), system.energy(state.U, state.V)])

    U0 = system.project(problem.exact, 0.0, 0)
    V0 = system.project(problem.exact, 0.0, 1)
    aborted = 0
    try:
        integrate(system, params, U0, V0, tau, T, observers=[observer], cadence=_get(cfg, "cadence", 1, int),
                  lam_max=lam, unsafe=bool(cfg.get("unsafe", False)))
    except (InstabilityError, CFLError, StepError) as exc:
        log.error("run aborted: %s", exc)
        aborted = 1
    return StudyResult("run", ["t", "L2_error_u", "L2_error_v", "energy"], rows, {"tau": tau}, aborted)


STUDIES = {
    "time-convergence": run_time_convergence,
    "space-convergence": run_space_convergence,
    "dispersion": run_dispersion,
    "precond-iterations": run_precond_iterations,
    "spectrum": run_spectrum,
    "run": run_trajectory,
}
