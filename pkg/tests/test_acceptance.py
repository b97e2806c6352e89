"""End-to-end checks of the nine acceptance criteria.

Each test prints one ``PASS`` or ``FAIL`` line; the lines are repeated in the
pytest terminal summary.
"""

import json
import logging
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from genalpha.assembly import SemiDiscreteSystem
from genalpha.geometry import get_domain
from genalpha.integrator import IntegratorState, MassSolver, MatrixSystem, step
from genalpha.params import compute_params
from genalpha.precond import mass_preconditioner, preconditioned_condition_number
from genalpha.spectral import build_G, diagonal_block, find_bifurcation, find_stability
from genalpha.studies import run_precond_iterations, run_space_convergence, run_time_convergence

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def load(name):
    return json.loads((CONFIGS / name).read_text())


def test_temporal_order(criterion):
    t0 = time.perf_counter()
    k2 = run_time_convergence(load("time_convergence_k2.json")).summary
    k1 = run_time_convergence(load("time_convergence_k1.json")).summary
    elapsed = time.perf_counter() - t0
    ok = (abs(k2["slope_u"] - 4) <= 0.15 and abs(k2["slope_v"] - 4) <= 0.15
          and abs(k1["slope_u"] - 2) <= 0.15 and abs(k1["slope_v"] - 2) <= 0.15 and elapsed <= 120)
    criterion(1, ok, f"k=2 slopes u {k2['slope_u']:.3f} v {k2['slope_v']:.3f}; "
                     f"k=1 slopes u {k1['slope_u']:.3f} v {k1['slope_v']:.3f}; {elapsed:.0f} s")


def test_spatial_order(criterion, monkeypatch):
    monkeypatch.setenv("GENALPHA_NUM_THREADS", "4")
    t0 = time.perf_counter()
    slopes = run_space_convergence(load("space_convergence.json")).summary["slopes"]
    elapsed = time.perf_counter() - t0
    ok = all(abs(s - (p + 1)) <= 0.2 for p, s in slopes.items()) and len(slopes) == 4 and elapsed <= 600
    detail = ", ".join(f"p={p}: {s:.3f}" for p, s in slopes.items())
    criterion(2, ok, f"slopes {detail}; {elapsed:.0f} s")


def test_step_matches_amplification_matrix(criterion):
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        k = int(rng.integers(1, 4))
        rho = rng.uniform(0.0, 0.95)
        par = compute_params(k, rho)
        theta = rng.uniform(0.0, 6.0)
        tau = rng.uniform(1e-3, 1.0)
        sys = MatrixSystem(np.array([[1.0]]), np.array([[theta / tau ** 2]]))
        x = rng.standard_normal(3 * k)
        new = step(sys, par, IntegratorState.from_scaled(x, tau), tau, MassSolver(sys.M, method="direct"))
        ref = build_G(par, theta).matrix @ x
        worst = max(worst, float(np.abs(new.scaled(tau) - ref).max() / max(1.0, np.abs(ref).max())))
    criterion(3, worst <= 1e-10, f"max deviation {worst:.2e} over 100 random cases")


def test_stability_edge(criterion, caplog):
    with caplog.at_level(logging.WARNING):
        edge = find_stability(compute_params(1, 0.99)).theta_max
        spreads = {}
        closed = []
        for rho in (0.0, 0.5, 0.9):
            limits = [find_stability(compute_params(k, rho)).theta_max for k in (1, 2, 3)]
            spreads[rho] = max(limits) - min(limits)
            rep = find_stability(compute_params(3, rho))
            closed += [(rho, j + 1, n, c) for j, (n, c) in enumerate(zip(rep.per_block, rep.closed_form))]
    ok = abs(edge - 4.0) <= 0.04 and all(s <= 1e-6 for s in spreads.values())
    worst = max(abs(c - n) / n for _, _, n, c in closed)
    criterion(4, ok, f"Theta_max(0.99) = {edge:.6f}; spread over k = "
                     + ", ".join(f"{r}: {s:.1e}" for r, s in spreads.items())
                     + f"; largest closed-form deviation {100 * worst:.2f}%, "
                       f"{len(caplog.records)} discrepancy warnings logged")


def dominant_decay(k, rho, theta, steps=40):
    par = compute_params(k, rho)
    block = diagonal_block(par, 0, theta)
    ev, vec = np.linalg.eig(block)
    i = int(np.argmax(np.abs(ev)))
    assert abs(ev[i].imag) < 1e-14
    x = np.zeros(3 * k)
    x[:3] = vec[:, i].real
    tau = 0.01
    sys = MatrixSystem(np.array([[1.0]]), np.array([[theta / tau ** 2]]))
    solver = MassSolver(sys.M, method="direct")
    state = IntegratorState.from_scaled(x, tau)
    n0 = np.linalg.norm(x)
    for _ in range(steps):
        state = step(sys, par, state, tau, solver)
    measured = (np.linalg.norm(state.scaled(tau)) / n0) ** (1.0 / steps)
    return measured, abs(ev[i])


def test_dissipation_plateau(criterion):
    worst, cases = 0.0, 0
    for rho in (0.0, 0.5):
        for k in (1, 2, 3):
            par = compute_params(k, rho)
            lo = find_bifurcation(par, 0).theta
            hi = find_stability(par).theta_max
            for theta in np.linspace(lo, hi, 7)[1:-1]:
                measured, expected = dominant_decay(k, rho, theta)
                worst = max(worst, abs(measured - expected))
                cases += 1
    criterion(5, worst <= 1e-8, f"max |decay - |lambda|| = {worst:.2e} over {cases} (k, rho, Theta) cases")


def test_preconditioner_robustness(criterion, monkeypatch):
    monkeypatch.setenv("GENALPHA_NUM_THREADS", "4")
    res = run_precond_iterations(load("precond_iterations.json"))
    table = {}
    for g, p, n, it, _ in res.rows:
        table.setdefault((g, p), []).append((n, it))
    ok, notes = True, []
    for (g, p), vals in table.items():
        its = [it for _, it in sorted(vals)]
        nonincreasing = all(b <= a + 1e-12 for a, b in zip(its, its[1:]))
        bound = 15 if g != "ring" else 50
        ok &= nonincreasing and max(its) <= bound
        notes.append(f"{g} p={p}: " + "/".join(f"{v:.1f}" for v in its))
    criterion(6, ok, "; ".join(notes))


def test_asymptotic_exactness(criterion):
    kappas = []
    for n in (4, 8, 16):
        sys = SemiDiscreteSystem(get_domain("quarter_annulus").discretize(2, n))
        kappas.append(preconditioned_condition_number(sys.M, mass_preconditioner(sys)))
    ex = np.array(kappas) - 1.0
    ok = bool(np.all(np.diff(kappas) < 0) and np.all(ex[1:] <= 0.75 * ex[:-1]))
    criterion(7, ok, "kappa " + ", ".join(f"{k:.5f}" for k in kappas))


def test_cost_model(criterion):
    per_dof = []
    for n in (8, 16, 32):
        sys = SemiDiscreteSystem(get_domain("quarter_annulus").discretize(2, n))
        pre = mass_preconditioner(sys)
        before = pre.kron.flops
        pre(np.ones(sys.n))
        measured = pre.kron.flops - before + 2 * sys.n
        per_dof.append(measured / sys.n)
    spread = max(per_dof) / min(per_dof) - 1.0
    criterion(8, spread <= 0.2, "FLOPs per DOF " + ", ".join(f"{v:.1f}" for v in per_dof)
              + f" (spread {100 * spread:.1f}%)")


def test_parameter_identities(criterion):
    rng = np.random.default_rng(7)
    bad = 0
    for _ in range(1000):
        k = int(rng.integers(1, 5))
        rb = rng.uniform(0.0, 1.0, k) * (1 - 1e-9)
        rs = rb * rng.uniform(0.0, 1.0, k)
        par = compute_params(k, rb, rs)
        for a, g, af in zip(par.alpha, par.gamma, par.alpha_f):
            if Fraction(g) - Fraction(a) + Fraction(af) != Fraction(1, 2) or a < 0.5:
                bad += 1
    criterion(9, bad == 0, f"{bad} violations in 1000 random parameter sets")
