"""Acceptance suite: one PASS/FAIL line per criterion, repeated in the terminal summary."""

import json
import time
from pathlib import Path

import numpy as np

from conftest import empty_twin, record_acceptance
from twinforge import tape as tp
from twinforge import train as tr
from twinforge import twin as tw
from twinforge import verify as vf
from twinforge.basis import BasisId, Dictionary
from twinforge.control import ControlField
from twinforge.field import build_grid, uniform_time_weights
from twinforge.graybox import GrayBoxCase, InitialCondition, graybox_run

U = BasisId.univariate
CONFIGS = Path(__file__).resolve().parent.parent / "configs"
OBJECTIVE = tw.TerminalQuadratic(0.5)


def adhoc_lattice():
    return Dictionary([U(3, e) for e in range(9)])


def control_gradient_error(dictionary, run):
    twin = tw.TwinModel.from_gray(dictionary, run.field, run.substeps)
    c = ControlField.uniform(run.field.grid, 0.0)
    g = tw.value_and_grad(twin, OBJECTIVE, c).d_control
    ref = vf.reference_gradient(twin, "buckley_leverett", OBJECTIVE, c).d_control
    return vf.integrated_gradient_error(g, ref, grid=run.field.grid)


def test_1_adjoint_matches_finite_differences(wide_run):
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    ids = [U(1, 1), U(2, 1), U(2, 3), U(3, 4)]
    alphas = rng.uniform(-0.2, 0.4, len(ids))
    twin = tw.TwinModel.from_gray(Dictionary(ids, alphas), wide_run.field, wide_run.substeps)
    mis = tw.MismatchFunctional(wide_run.field)
    ga = tw.value_and_grad(twin, mis).d_alpha
    fa = tw.fd_gradient(lambda a: tw.evaluate(twin, mis, alphas=a), alphas, 1e-5)
    c = ControlField(0.01 * rng.standard_normal(wide_run.field.grid.shape))
    gc = tw.value_and_grad(twin, OBJECTIVE, c).d_control
    comps = rng.choice(c.size, 10, replace=False)
    fc = tw.fd_gradient(lambda cc: tw.evaluate(twin, OBJECTIVE, cc), c, 1e-5, comps)
    err_a = tw.GradientReport.compare(ga, np.arange(len(ids)), fa).max_rel_err
    err_c = tw.GradientReport.compare(gc, comps, fc).max_rel_err
    elapsed = time.perf_counter() - t0
    ok = err_a <= 1e-4 and err_c <= 1e-4 and elapsed <= 10.0
    record_acceptance(1, "adjoint vs central FD", ok,
                      f"max rel err dM/dalpha {err_a:.2e}, dxi/dc {err_c:.2e} (<= 1e-4); {elapsed:.1f} s (<= 10 s)")
    assert ok


def test_2_solve_counts(wide_run):
    twin = tw.TwinModel.from_gray(Dictionary([U(1, 1), U(2, 3)], [0.3, -0.1]), wide_run.field, wide_run.substeps)
    g = wide_run.field.grid
    c = ControlField.uniform(g, 0.0)
    before = tw.solve_count()
    tw.value_and_grad(twin, OBJECTIVE, c)
    adjoint = tw.solve_count() - before
    before = tw.solve_count()
    tw.fd_gradient(lambda cc: tw.evaluate(twin, OBJECTIVE, cc), c, 1e-5)
    fd = tw.solve_count() - before
    ok = adjoint == 1 and fd == 2 * g.M * g.N
    record_acceptance(2, "cost independence", ok, f"adjoint solves {adjoint} (== 1), FD solves {fd} (== {2 * g.M * g.N})")
    assert ok


def test_3_adaptive_beats_adhoc(wide_run, wide_trained):
    lattice = adhoc_lattice()
    stored = json.loads((CONFIGS / "adhoc_lattice.json").read_text())
    assert [(r["j"][0], r["eta"][0]) for r in stored] == [(b.j[0], b.eta[0]) for b in lattice]
    t0 = time.perf_counter()
    d_ad, report = wide_trained
    obj = tr.Objective(empty_twin(wide_run), wide_run.field, "mismatch")
    d_hoc, _ = tr.train_coefficients(obj, lattice, tr.TrainConfig(l1_weight=1e-6))
    e_ad = control_gradient_error(d_ad, wide_run)
    e_hoc = control_gradient_error(d_hoc, wide_run)
    elapsed = time.perf_counter() - t0 + report.wall_time  # includes the cached adaptive training
    ratio = e_hoc / max(e_ad, 1e-300)
    ok = ratio >= 10.0 and elapsed <= 300.0
    record_acceptance(3, "gradient quality", ok,
                      f"adaptive ({len(d_ad)} bases) {e_ad:.2e} vs ad hoc ({len(d_hoc)} bases) {e_hoc:.2e}, "
                      f"ratio {ratio:.1e} (>= 10); {elapsed:.1f} s")
    assert ok


def test_4_flux_recovery(wide_run, wide_trained):
    d, _ = wide_trained
    rep = vf.flux_recovery_report(d, "buckley_leverett", wide_run.field)
    shifted = d.added(U(-40, 0), 3.0)
    rep_s = vf.flux_recovery_report(shifted, "buckley_leverett", wide_run.field)
    twin = tw.TwinModel.from_gray(d, wide_run.field, wide_run.substeps)
    m0 = tr.mismatch(tw.twin_solve(twin), wide_run.field)
    m1 = tr.mismatch(tw.twin_solve(twin.with_dictionary(shifted)), wide_run.field)
    offset_ok = abs(m1 - m0) <= 1e-10 * max(m0, 1e-300) + 1e-20 and abs(rep_s.rel_l2_derivative - rep.rel_l2_derivative) <= 1e-10
    ok = rep.rel_l2_derivative <= 0.05 and offset_ok
    record_acceptance(4, "flux recovery", ok,
                      f"dF rel L2 {rep.rel_l2_derivative:.2%} on u in [{rep.u_min:.3f}, {rep.u_max:.3f}] (<= 5%); "
                      f"F offset mean {rep.offset_mean:.3f}, spread {rep.offset_spread:.1e}; "
                      f"constant basis changes M by {abs(m1 - m0):.1e}")
    assert ok


def test_5_algorithm_discipline(wide_trained, narrow_trained):
    d_w, r_w = wide_trained
    d_n, r_n = narrow_trained
    mono = all(all(b < a for a, b in zip(cv, cv[1:])) for cv in (r_w.accepted_cv(), r_n.accepted_cv()))
    terminated = not r_w.max_outer_reached and not r_n.max_outer_reached
    ok = mono and terminated and len(d_n) < len(d_w)
    record_acceptance(5, "basis selection discipline", ok,
                      f"accepted CV strictly decreasing: {mono}; terminated: {terminated}; "
                      f"narrow size {len(d_n)} < wide size {len(d_w)}")
    assert ok


def test_6_pretraining(wide_run, wide_trained):
    d, _ = wide_trained
    ids = Dictionary(d.ids)
    t_obj = tr.Objective(empty_twin(wide_run), wide_run.field, "truncation").for_dictionary(ids)
    m_obj = tr.Objective(empty_twin(wide_run), wide_run.field, "mismatch").for_dictionary(ids)
    sgd = tr.sgd_pretrain(t_obj)
    reduction = sgd.initial / max(sgd.final, 1e-300)
    cold = tr.minimize_inner(m_obj).value
    fine = tr.minimize_inner(m_obj, alpha0=sgd.alphas).value

    case = GrayBoxCase("linear_advection", InitialCondition("gaussian", {"center": 0.3, "width": 0.1}),
                       build_grid(21, 32, 1.0), bc="inflow")
    run = graybox_run(case)
    twin = tw.TwinModel.from_gray(Dictionary(), run.field, 1, bc="inflow", scheme="implicit_upwind_linear")
    d_c, _ = tr.pretrain_finetune(tr.Objective(twin, run.field, "mismatch", weights=uniform_time_weights(run.field.grid)))
    con = tr.contraction_check(twin.with_dictionary(d_c), run.field, uniform_time_weights(run.field.grid))
    ok = (reduction >= 100 and sgd.twin_solves == 0 and fine <= 2 * cold
          and con.beta + 0.01 < 1 and bool(con.holds))
    record_acceptance(6, "pre-training", ok,
                      f"SGD reduces T by {reduction:.1e}x (>= 100) with {sgd.twin_solves} solves; "
                      f"fine-tuned M {fine:.2e} vs cold start {cold:.2e} (<= 2x); "
                      f"contraction beta {con.beta:.3f} (+0.01 < 1), M {con.mismatch:.2e} <= T/(1-beta) {con.bound:.2e}")
    assert ok


def test_7_scheme_sanity(wide_run):
    mass = wide_run.field.u[:, :-1].sum(axis=1) * wide_run.field.grid.dx
    drift = float(np.max(np.abs(mass - mass[0])) / abs(mass[0]))
    errors = []
    for N in (64, 128, 256):
        case = GrayBoxCase("linear_advection", InitialCondition("sine", {"amplitude": 0.3, "offset": 0.5}),
                           build_grid(5, N, 1.0))
        r = graybox_run(case)
        u = r.field.u
        errors.append(float(np.sqrt(np.sum((u[-1] - u[0])[:-1] ** 2) * r.field.grid.dx)))
    ratios = [b / a for a, b in zip(errors, errors[1:])]
    ok = drift <= 1e-12 and all(0.4 <= q <= 0.6 for q in ratios)
    record_acceptance(7, "scheme sanity", ok,
                      f"relative mass drift {drift:.1e} (<= 1e-12); one-period advection errors "
                      + ", ".join(f"{e:.2e}" for e in errors) + " at N=64,128,256, ratios "
                      + ", ".join(f"{q:.3f}" for q in ratios) + " (0.5 +- 20%)")
    assert ok


def test_8_tape_example():
    rng = np.random.default_rng(8)
    worst = 0.0
    for c1v, c2v in rng.uniform(-3, 3, (10, 2)):
        t = tp.Tape()
        c1, c2 = t.input(c1v), t.input(c2v)
        g1, g2 = t.backward(c1 * c2 + tp.sin(c1))
        worst = max(worst, abs(float(g1) - (np.cos(c1v) + c2v)), abs(float(g2) - c1v))
    ok = worst <= 1e-12
    record_acceptance(8, "tape example", ok, f"max abs deviation from (cos(c1) + c2, c1) at 10 points {worst:.1e} (<= 1e-12)")
    assert ok
