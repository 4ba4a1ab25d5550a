import numpy as np
import pytest

from jdisk.diskgrid import make_grid
from jdisk.errors import InvalidChain, NoChainFound, NotHolomorphicMap
from jdisk.kobayashi import (KobayashiOptions, chain_cost, concatenate_chains,
                             derivative_bound, estimate_distance,
                             pushforward_chain, validate_chain)
from jdisk.solver import SolverConfig
from jdisk.structure import gallery


@pytest.fixture(scope="module")
def J_std():
    return gallery("standard", n=1)


@pytest.fixture(scope="module")
def J_torus():
    return gallery("torus-flat", n=1)


def quick_opts(**kw):
    base = dict(k_max=2, t_grid=(0.05, 0.1, 0.25, 0.5), grid_n=33)
    base.update(kw)
    return KobayashiOptions(**base)


def test_identical_points_give_zero(J_std):
    est = estimate_distance(J_std, np.array([0.2, 0.1]), np.array([0.2, 0.1]),
                            quick_opts())
    assert est.upper == 0.0
    assert est.best_chain.links == []


def test_chain_cost_single_and_double_link(J_std):
    p, q = np.zeros(2), np.array([0.3, 0.0])
    est = estimate_distance(J_std, p, q, quick_opts(t_grid=(0.5,), k_max=1))
    assert est.upper == pytest.approx(np.arctanh(0.5), abs=1e-15)
    est2 = estimate_distance(J_std, p, q, quick_opts(t_grid=(0.5,), k_max=2))
    # with only t = 0.5 available the one-link chain is already cheapest
    assert est2.upper == est.upper
    # out-and-back concatenation: two links of equal cost add exactly
    back = estimate_distance(J_std, q, p, quick_opts(t_grid=(0.5,), k_max=1))
    loop = concatenate_chains(est.best_chain, back.best_chain)
    assert chain_cost(loop) == 2 * est.upper


def test_flat_chart_bound_shrinks_with_t(J_std):
    est = estimate_distance(J_std, np.zeros(2), np.array([0.3, 0.0]), quick_opts())
    assert est.upper <= np.arctanh(0.05) + 1e-9
    assert len(est.best_chain.links) == 1
    validate_chain(est.best_chain)


def test_monotone_in_search_breadth(J_std):
    p, q = np.zeros(2), np.array([0.4, 0.2])
    coarse = estimate_distance(J_std, p, q, quick_opts(t_grid=(0.5, 0.25), k_max=1))
    finer_t = estimate_distance(J_std, p, q, quick_opts(t_grid=(0.5, 0.25, 0.1), k_max=1))
    more_k = estimate_distance(J_std, p, q, quick_opts(t_grid=(0.5, 0.25), k_max=3))
    assert finer_t.upper <= coarse.upper
    assert more_k.upper <= coarse.upper


def test_symmetry_of_estimates(J_std):
    p, q = np.array([0.1, -0.2]), np.array([-0.3, 0.25])
    a = estimate_distance(J_std, p, q, quick_opts())
    b = estimate_distance(J_std, q, p, quick_opts())
    assert a.upper == b.upper


def test_search_log_records_attempts(J_std):
    est = estimate_distance(J_std, np.zeros(2), np.array([0.3, 0.0]),
                            quick_opts(k_max=1))
    assert est.search_log
    ks, ts, costs = zip(*est.search_log)
    assert all(k == 1 for k in ks)
    assert min(costs) == est.upper


def test_torus_distance_vanishes_with_t(J_torus):
    est = estimate_distance(J_torus, np.zeros(2), np.array([0.5, 0.0]),
                            quick_opts(t_grid=(0.05, 0.25)))
    assert est.upper == pytest.approx(np.arctanh(0.05), abs=1e-12)
    finer = estimate_distance(J_torus, np.zeros(2), np.array([0.5, 0.0]),
                              quick_opts(t_grid=(0.01, 0.05, 0.25)))
    assert finer.upper < est.upper


def test_torus_waypoints_use_shortest_representative(J_torus):
    # q ~ (0.9, 0) is one lattice shift away from (-0.1, 0)
    est = estimate_distance(J_torus, np.zeros(2), np.array([0.9, 0.0]),
                            quick_opts(t_grid=(0.05,), k_max=1))
    assert est.upper == pytest.approx(np.arctanh(0.05), abs=1e-12)
    link = est.best_chain.links[0]
    assert np.linalg.norm(link.dst - np.array([-0.1, 0.0])) < 1e-12


def test_no_chain_in_tiny_ball():
    J = gallery("standard", n=1, radius=0.2)
    with pytest.raises(NoChainFound):
        estimate_distance(J, np.zeros(2), np.array([0.15, 0.0]),
                          quick_opts(t_grid=(0.5,), k_max=1))


def test_triangle_via_concatenation(J_std):
    p = np.zeros(2)
    q = np.array([0.2, 0.0])
    r = np.array([0.2, 0.2])
    pq = estimate_distance(J_std, p, q, quick_opts())
    qr = estimate_distance(J_std, q, r, quick_opts())
    joined = concatenate_chains(pq.best_chain, qr.best_chain)
    validate_chain(joined)
    assert chain_cost(joined) == pq.upper + qr.upper


def test_concatenation_rejects_disjoint_chains(J_std):
    a = estimate_distance(J_std, np.zeros(2), np.array([0.2, 0.0]), quick_opts())
    b = estimate_distance(J_std, np.array([0.5, 0.5]), np.array([0.7, 0.5]), quick_opts())
    with pytest.raises(InvalidChain):
        concatenate_chains(a.best_chain, b.best_chain)


def test_pushforward_preserves_cost_exactly(J_std, J_torus):
    est = estimate_distance(J_torus, np.zeros(2), np.array([0.5, 0.0]), quick_opts())
    shift = np.array([0.3, 0.7])
    pushed = pushforward_chain(est.best_chain, lambda v: v + shift, J_torus)
    assert chain_cost(pushed) == est.upper
    assert all(link.disk.residual < 1e-10 for link in pushed.links)

    est2 = estimate_distance(J_std, np.zeros(2), np.array([0.3, 0.0]), quick_opts())
    conv = est2.best_chain.links[0].disk.v.convention

    def double(v):  # complex-linear map z -> 2z in the real representation
        return 2.0 * v

    pushed2 = pushforward_chain(est2.best_chain, double, J_std)
    assert chain_cost(pushed2) == est2.upper
    assert all(link.disk.residual < 1e-10 for link in pushed2.links)
    # target estimate never exceeds the pushed-forward source estimate
    tgt = estimate_distance(J_std, 2 * np.zeros(2), np.array([0.6, 0.0]), quick_opts())
    assert tgt.upper <= chain_cost(pushed2) + 1e-15


def test_pushforward_rejects_conjugation(J_std):
    est = estimate_distance(J_std, np.zeros(2), np.array([0.3, 0.0]), quick_opts())

    def conjugate(v):
        out = v.copy()
        out[..., 1] = -out[..., 1]
        return out

    with pytest.raises(NotHolomorphicMap):
        pushforward_chain(est.best_chain, conjugate, J_std)


def test_derivative_bound_unit_ball():
    J = gallery("standard", n=1, radius=1.0)
    rep = derivative_bound(J, np.zeros(2), np.array([1.0, 0.0]), 4.0,
                           cfg=SolverConfig(), grid=make_grid(1.0, 33))
    assert abs(rep.lambda_lower - 1.0) <= 0.05
    assert not rep.unbounded_suspected
    assert rep.probes[0][0] == 4.0 and rep.probes[0][1] is False


def test_derivative_bound_torus_flags_unbounded(J_torus):
    rep = derivative_bound(J_torus, np.array([0.2, 0.7]), np.array([1.0, 0.0]),
                           1e3, cfg=SolverConfig(), grid=make_grid(1.0, 33))
    assert rep.lambda_lower == 1e3
    assert rep.unbounded_suspected


def test_derivative_bound_zero_scale_always_feasible(J_torus):
    rep = derivative_bound(J_torus, np.zeros(2), np.array([0.0, 1.0]), 1e3,
                           cfg=SolverConfig(), grid=make_grid(1.0, 17))
    assert rep.lambda_lower > 0.0
