import numpy as np
import pytest

from jdisk.brody import (brody_reparametrize, derivative_ladder_family,
                         dilation_family, extract_line, rescale_step,
                         scaling_sup)
from jdisk.diskgrid import make_grid
from jdisk.errors import HypothesisViolated, InvalidParams, ZeroDerivative
from jdisk.solver import SolverConfig
from jdisk.structure import gallery

from conftest import complex_map


@pytest.fixture(scope="module")
def g129():
    return make_grid(1.0, 129)


def dense_scan_oracle(fprime, t, m=4000):
    """Dense polar scan of sup t |f'(t z)| (1 - |z|^2) for analytic f'."""
    rho = np.linspace(0.0, 1.0, m)[None, :]
    th = np.linspace(0.0, 2 * np.pi, 720, endpoint=False)[:, None]
    z = rho * np.exp(1j * th)
    vals = t * np.abs(fprime(t * z)) * (1.0 - rho ** 2)
    return float(vals.max())


def test_scaling_sup_basics(g129):
    ident = complex_map(g129, lambda z: z)
    assert scaling_sup(ident, 0.0) == 0.0
    assert scaling_sup(ident, 1.0) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(InvalidParams):
        scaling_sup(ident, 1.5)


def test_scaling_sup_of_squaring_map(g129):
    sq = complex_map(g129, lambda z: z ** 2)
    target = 4.0 / (3.0 * np.sqrt(3.0))
    assert scaling_sup(sq, 1.0) == pytest.approx(target, abs=1e-3)
    assert scaling_sup(sq, 0.5) == pytest.approx(0.25 * target, abs=1e-3)
    # dense scan oracle agrees at an off-grid t
    oracle = dense_scan_oracle(lambda w: 2 * w, 0.73)
    assert scaling_sup(sq, 0.73) == pytest.approx(oracle, abs=1e-3)


def test_reparametrize_identity_unchanged(g129):
    ident = complex_map(g129, lambda z: z)
    rep = brody_reparametrize(ident, 1.0)
    assert rep.t0 == 1.0
    assert rep.z0 is None
    assert rep.f_tilde is ident
    assert rep.s_at_0 == pytest.approx(1.0, abs=1e-12)


def test_reparametrize_pure_dilation(g129):
    two = complex_map(g129, lambda z: 2 * z)
    rep = brody_reparametrize(two, 1.0)
    assert rep.t0 == pytest.approx(0.5, abs=1e-5)
    assert rep.z0 is None
    assert rep.s_at_0 == pytest.approx(1.0, abs=1e-6)
    assert rep.s_sup == pytest.approx(1.0, abs=1e-6)


def test_reparametrize_recenters_quadratic_map(g129):
    f = complex_map(g129, lambda z: z + z ** 2)
    rep = brody_reparametrize(f, 0.5)
    assert rep.z0 is not None and abs(rep.z0) > 0.1
    assert abs(rep.s_sup - rep.s_at_0) < 1e-3
    assert abs(rep.s_at_0 - 0.5) < 1e-3
    assert rep.within_tolerance
    # scaling root cross-checked against a dense scan of the analytic field
    lo, hi = 0.0, 1.0
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if dense_scan_oracle(lambda w: 1 + 2 * w, mid) >= 0.5:
            hi = mid
        else:
            lo = mid
    assert rep.t0 == pytest.approx(hi, abs=5e-3)


def test_reparametrize_hypothesis_checked(g129):
    small = complex_map(g129, lambda z: 0.25 * z)
    with pytest.raises(HypothesisViolated):
        brody_reparametrize(small, 1.0)


def test_rescale_step_exact_on_lattice(g129):
    five = complex_map(g129, lambda z: 5 * z)
    g, r_n = rescale_step(five)
    assert r_n == pytest.approx(5.0, abs=1e-12)
    assert g.grid.r == pytest.approx(5.0, abs=1e-12)
    # g(w) = w on the scaled lattice, value for value
    assert np.allclose(g.values[..., 0][g.grid.mask], g.grid.X[g.grid.mask], atol=1e-12)
    unit = complex_map(g129, lambda z: z)
    g2, r2 = rescale_step(unit)
    assert r2 == pytest.approx(1.0, abs=1e-14)
    assert np.array_equal(g2.values, unit.values)


def test_rescale_step_rejects_constant(g129):
    const = complex_map(g129, lambda z: np.full_like(z, 0.2 + 0.1j))
    with pytest.raises(ZeroDerivative):
        rescale_step(const)


def test_rescale_normalizes_derivative_for_solved_disks():
    J = gallery("torus-perturbed", n=1, epsilon=0.05)
    g = make_grid(1.0, 33)
    cfg = SolverConfig(epsilon=0.1)
    for lam in (2.0, 3.0):
        fam = list(derivative_ladder_family(J, np.array([0.25, 0.0]),
                                            np.array([1.0, 0.0]), [lam], cfg, g))
        gg, r_n = rescale_step(fam[0])
        from jdisk.brody import _derivative_at_origin
        assert _derivative_at_origin(gg) == pytest.approx(1.0, abs=1e-6)


def test_extract_line_flat_torus_dilations():
    J = gallery("torus-flat", n=1)
    g = make_grid(1.0, 33)
    rep = extract_line(J, dilation_family(g, base=4.0, factor=2.0), R=2.0,
                       tol=1e-10, n_max=8)
    assert rep.converged
    finite = [d for d in rep.deltas if d is not None]
    assert finite and finite[0] < 1e-10
    assert rep.final.derivative_at_0 == pytest.approx(1.0, abs=1e-6)
    assert rep.final.cr_residual < 1e-10
    # the limit is the affine embedding
    w = rep.final.samples
    assert np.allclose(w.values[..., 0][w.grid.mask], w.grid.X[w.grid.mask], atol=1e-10)


def test_extract_line_flat_chart_dilations():
    J = gallery("standard", n=1)
    g = make_grid(1.0, 33)
    rep = extract_line(J, dilation_family(g, base=4.0, factor=2.0), R=2.0,
                       tol=1e-10, n_max=8)
    assert rep.converged
    assert rep.final.derivative_at_0 == pytest.approx(1.0, abs=1e-8)
    assert rep.final.cr_residual < 1e-10


def test_extract_line_reports_nonconvergence_without_crash():
    J = gallery("torus-flat", n=1)
    g = make_grid(1.0, 33)
    # family too short to ever cover the window
    rep = extract_line(J, dilation_family(g, base=0.5, factor=1.01, count=3),
                       R=2.0, tol=1e-10, n_max=3)
    assert not rep.converged
    assert rep.final is None
    assert "window" in rep.message


def test_extract_line_perturbed_torus_ladder():
    J = gallery("torus-perturbed", n=1, epsilon=0.05)
    g = make_grid(1.0, 65)
    cfg = SolverConfig(epsilon=0.1)
    lams = [3.0 - 1.5 * 0.5 ** k for k in range(6)]
    fam = derivative_ladder_family(J, np.array([0.25, 0.0]),
                                   np.array([1.0, 0.0]), lams, cfg, g)
    rep = extract_line(J, fam, R=1.5, tol=1e-8, n_max=8)
    assert rep.final is not None
    assert rep.final.derivative_at_0 == pytest.approx(1.0, abs=1e-2)
    assert rep.final.cr_residual < 1e-2
    ds = [d for d in rep.deltas if d is not None]
    assert len(ds) >= 3
    assert all(a > b for a, b in zip(ds, ds[1:]))
    assert rep.final.derivative_at_0 > 0  # nontrivial by construction
