"""End-to-end acceptance battery.

One test per shipped guarantee, each at its stated tolerance, printing a
pass line on completion (run with -s to see them)."""

import json

import numpy as np
import pytest

from jdisk.brody import (brody_reparametrize, derivative_ladder_family,
                         dilation_family, extract_line, scaling_sup)
from jdisk.cauchygreen import cg_apply, cg_build, cg_residual
from jdisk.cli import run as cli_run
from jdisk.diskgrid import eval_interp, make_grid
from jdisk.kobayashi import (KobayashiOptions, chain_cost, derivative_bound,
                             estimate_distance, pushforward_chain)
from jdisk.solver import (SolverConfig, affine_target, picard_solve,
                          two_point_disk)
from jdisk.structure import gallery, q_field, q_matrix

from conftest import complex_map


@pytest.fixture(scope="module")
def grids():
    return {N: make_grid(1.0, N) for N in (33, 65, 129)}


def _report(name):
    print(f"[PASS] {name}")


def test_criterion_01_structure_algebra(rng):
    for n in (1, 2):
        J_std = gallery("standard", n=n)
        J_conj = gallery("conjugated", n=n, epsilon=0.1)
        pts = rng.uniform(-1, 1, size=(1000, 2 * n))
        for J in (J_std, J_conj):
            mats = J.eval(pts)
            resid = np.max(np.abs(np.einsum("mij,mjk->mik", mats, mats) + np.eye(2 * n)))
            assert resid < 1e-12
        # dilatation of the standard structure vanishes identically
        assert np.all(q_field(J_std, pts) == 0.0)
        assert np.all(q_matrix(J_std, pts[0]) == 0.0)
        # equivalence of the two first-order forms
        conv = J_conj.convention
        a = rng.normal(size=(1000, 2 * n))
        jm = J_conj.eval(pts)
        q = q_field(J_conj, pts)
        uy = np.einsum("mij,mj->mi", jm, a)
        lhs = a + conv.mul_i(uy)
        rhs = np.einsum("mij,mj->mi", q, a - conv.mul_i(uy))
        assert np.max(np.linalg.norm(lhs - rhs, axis=-1)) < 1e-10
    _report("criterion 1: structure algebra (residuals, dilatation, form equivalence)")


def test_criterion_02_cauchy_transform(grids):
    densities = {
        "constant": lambda z: np.ones_like(z),
        "real part": lambda z: z.real.astype(complex),
        "identity": lambda z: z,
    }
    residuals = {name: [] for name in densities}
    for N in (33, 65, 129):
        g = grids[N]
        op = cg_build(g)
        for name, fn in densities.items():
            residuals[name].append(cg_residual(op, complex_map(g, fn)))
    for name, (r33, r65, r129) in residuals.items():
        assert r65 < 5e-2, name
        assert r33 > r65 > r129, name
        assert np.log2(r33 / r65) >= 1.0, name
        assert np.log2(r65 / r129) >= 1.0, name
    g = grids[129]
    out = cg_apply(cg_build(g), complex_map(g, lambda z: np.ones_like(z)))
    err = np.abs(out.component_complex(0) - np.conj(g.Z))[g.interior].max()
    assert err < 5e-2
    _report("criterion 2: transform inversion residuals and constant-density image")


def test_criterion_03_integrable_reduction(grids, rng):
    J = gallery("standard", n=1)
    cfg = SolverConfig()
    g = grids[65]
    for k in range(20):
        p = rng.uniform(-1, 1, size=2)
        q = rng.uniform(-1, 1, size=2)
        t = (0.5, 0.25)[k % 2]
        sol = two_point_disk(J, p, q, t, cfg, g)
        target = affine_target(p, q, t, g)
        assert np.max(np.abs(sol.v.values - target.values)) < 1e-12
        assert np.linalg.norm(sol.v.value_at_center() - p) < 1e-12
        assert np.linalg.norm(eval_interp(sol.v, complex(t, 0)) - q) < 1e-12
    _report("criterion 3: integrable reduction returns affine disks exactly")


def test_criterion_04_non_integrable_solve(grids):
    J = gallery("conjugated", n=1, epsilon=0.1)
    cfg = SolverConfig(epsilon=0.05)
    g = grids[65]
    sol = picard_solve(J, cfg, affine_target(np.array([0.3, -0.4]),
                                             np.array([-0.5, 0.2]), 0.5, g))
    assert sol.iterations <= 50
    ratios = sol.contraction_ratios()
    assert ratios and max(ratios) <= 0.9

    p0, q0 = np.array([0.0, 0.0]), np.array([0.1, 0.0])
    tp = two_point_disk(J, p0, q0, 0.5, cfg, g)
    assert np.linalg.norm(tp.v.value_at_center() - p0) < 1e-6
    assert np.linalg.norm(eval_interp(tp.v, 0.5 + 0j) - q0) < 1e-6
    assert tp.residual < 1e-3

    resid = []
    for N in (33, 65, 129):
        gg = grids[N]
        resid.append(picard_solve(J, cfg, affine_target(np.array([0.3, -0.4]),
                                                        np.array([-0.5, 0.2]),
                                                        0.5, gg)).residual)
    assert resid[0] > resid[1] > resid[2]
    assert np.log2(resid[0] / resid[1]) >= 1.0
    assert np.log2(resid[1] / resid[2]) >= 1.0
    _report("criterion 4: non-integrable solve (contraction, endpoints, refinement)")


def test_criterion_05_vanishing_distance_on_flat_chart(rng):
    J = gallery("standard", n=1)
    bound = float(np.arctanh(0.05)) + 1e-9
    for _ in range(5):
        p = rng.uniform(-1, 1, size=2)
        q = rng.uniform(-1, 1, size=2)
        if np.array_equal(p, q):
            continue
        est = estimate_distance(J, p, q, KobayashiOptions(
            k_max=1, t_grid=(0.05, 0.1, 0.25, 0.5), grid_n=33))
        assert est.upper <= bound
    p, q = np.zeros(2), np.array([0.4, 0.1])
    uppers = []
    for tg in ((0.5,), (0.5, 0.25), (0.5, 0.25, 0.1), (0.5, 0.25, 0.1, 0.05)):
        uppers.append(estimate_distance(J, p, q, KobayashiOptions(
            k_max=1, t_grid=tg, grid_n=33)).upper)
    assert all(a >= b for a, b in zip(uppers, uppers[1:]))
    assert uppers[-1] <= bound
    _report("criterion 5: chain bound drops to arctanh(t_min) on the flat chart")


def test_criterion_06_distance_decreasing_maps():
    J_torus = gallery("torus-flat", n=1)
    est = estimate_distance(J_torus, np.zeros(2), np.array([0.5, 0.0]),
                            KobayashiOptions(k_max=1, t_grid=(0.25, 0.5), grid_n=33))
    pushed = pushforward_chain(est.best_chain, lambda v: v + np.array([0.3, -0.8]),
                               J_torus, residual_tol=1e-3)
    assert abs(chain_cost(pushed) - est.upper) <= 1e-15
    assert all(link.disk.residual < 1e-3 for link in pushed.links)

    J_chart = gallery("standard", n=1)
    est2 = estimate_distance(J_chart, np.zeros(2), np.array([0.3, 0.0]),
                             KobayashiOptions(k_max=1, t_grid=(0.25, 0.5), grid_n=33))
    pushed2 = pushforward_chain(est2.best_chain, lambda v: 2.0 * v, J_chart,
                                residual_tol=1e-3)
    assert abs(chain_cost(pushed2) - est2.upper) <= 1e-15
    assert all(link.disk.residual < 1e-3 for link in pushed2.links)
    _report("criterion 6: pushforward preserves chain cost with certified links")


def test_criterion_07_derivative_bound_indicator():
    J_ball = gallery("standard", n=1, radius=1.0)
    rep = derivative_bound(J_ball, np.zeros(2), np.array([1.0, 0.0]), 4.0,
                           cfg=SolverConfig(), grid=make_grid(1.0, 33))
    assert abs(rep.lambda_lower - 1.0) <= 0.05
    assert not rep.unbounded_suspected

    J_torus = gallery("torus-flat", n=1)
    rep2 = derivative_bound(J_torus, np.array([0.1, 0.6]), np.array([1.0, 0.0]),
                            1e3, cfg=SolverConfig(), grid=make_grid(1.0, 33))
    assert rep2.lambda_lower == 1e3
    assert rep2.unbounded_suspected
    _report("criterion 7: derivative scale bound (ball ~1, torus unbounded flag)")


def test_criterion_08_reparametrization_equalities(grids):
    g = grids[129]
    f = complex_map(g, lambda z: z + z ** 2)
    rep = brody_reparametrize(f, 0.5)
    assert abs(rep.s_sup - rep.s_at_0) < 1e-3
    assert abs(rep.s_at_0 - 0.5) < 1e-3
    sq = complex_map(g, lambda z: z ** 2)
    assert abs(scaling_sup(sq, 1.0) - 4.0 / (3.0 * np.sqrt(3.0))) < 1e-3
    _report("criterion 8: reparametrization equalities and analytic scaling sup")


def test_criterion_09_line_extraction_pipeline():
    J = gallery("torus-flat", n=1)
    g = make_grid(1.0, 33)
    rep = extract_line(J, dilation_family(g, base=4.0, factor=2.0), R=2.0,
                       tol=1e-10, n_max=8)
    assert rep.converged
    by_step_3 = [d for s, d in zip(rep.steps, rep.deltas) if s.n <= 3 and d is not None]
    assert by_step_3 and all(d < 1e-10 for d in by_step_3)
    assert rep.final.derivative_at_0 == pytest.approx(1.0, abs=1e-6)
    assert rep.final.cr_residual < 1e-10

    Jp = gallery("torus-perturbed", n=1, epsilon=0.05)
    g65 = make_grid(1.0, 65)
    lams = [3.0 - 1.5 * 0.5 ** k for k in range(6)]
    fam = derivative_ladder_family(Jp, np.array([0.25, 0.0]), np.array([1.0, 0.0]),
                                   lams, SolverConfig(epsilon=0.1), g65)
    rep2 = extract_line(Jp, fam, R=1.5, tol=1e-8, n_max=8)
    assert rep2.final is not None
    assert rep2.final.derivative_at_0 == pytest.approx(1.0, abs=1e-2)
    assert rep2.final.cr_residual < 1e-2
    ds = [d for d in rep2.deltas if d is not None]
    assert len(ds) >= 3 and all(a > b for a, b in zip(ds, ds[1:]))
    _report("criterion 9: line extraction (flat exact, perturbed invariant bundle)")


def test_criterion_10_deterministic_selftest():
    cfg = {"command": "selftest", "seed": 11}
    code1, rep1 = cli_run(dict(cfg))
    code2, rep2 = cli_run(dict(cfg))
    assert code1 == 0 and code2 == 0
    assert rep1["results"]["all_passed"] is True
    b1 = json.dumps({k: v for k, v in rep1.items() if k != "timestamp"}).encode()
    b2 = json.dumps({k: v for k, v in rep2.items() if k != "timestamp"}).encode()
    assert b1 == b2
    _report("criterion 10: selftest reports are byte-identical modulo timestamp")
