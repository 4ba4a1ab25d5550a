"""Chain-based estimation of the holomorphic pseudo-distance.

A chain joins two points through waypoints, each consecutive pair realized
by a solved disk evaluated at source parameter a = 0 and target parameter
b = t; its cost is the hyperbolic distance between the parameters, so the
total cost of any certified chain is an upper bound on the pseudo-distance
by definition.  The search explores waypoints equally spaced along the
chart segment (shortest lattice representative on a torus) and sweeps the
interpolation node t per link, keeping the cheapest chain found.  The
returned bound is monotone: enlarging ``k_max`` or refining ``t_grid`` can
only grow the candidate set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .diskgrid import DiskGrid, DiskMap, eval_interp, make_grid, poincare_distance
from .errors import (Diverged, InvalidChain, NewtonFailed, NoChainFound,
                     NotHolomorphicMap, Singular)
from .solver import DiskSolution, SolverConfig, cr_residual, derivative_disk, two_point_disk
from .structure import DomainDescriptor, StructureField


@dataclass
class ChainLink:
    disk: DiskSolution
    a: complex
    b: complex
    cost: float
    src: np.ndarray
    dst: np.ndarray


@dataclass
class Chain:
    links: list
    waypoints: list
    domain: DomainDescriptor

    @property
    def total_cost(self) -> float:
        return float(sum(link.cost for link in self.links))


@dataclass
class DistanceEstimate:
    upper: float
    best_chain: Chain
    search_log: list


@dataclass
class BoundReport:
    lambda_lower: float
    lambda_max: float
    unbounded_suspected: bool
    probes: list


@dataclass
class KobayashiOptions:
    k_max: int = 3
    t_grid: tuple = (0.05, 0.1, 0.25, 0.5)
    cfg: SolverConfig = field(default_factory=SolverConfig)
    grid_n: int = 33
    grid_r: float = 1.0
    residual_cap: float = 1e-2
    endpoint_tol: float | None = None   # defaults to cfg.tol_newton


def chain_cost(chain: Chain, tol: float = 1e-8) -> float:
    """Total cost after checking that consecutive links share endpoints."""
    dom = chain.domain
    prev_dst = None
    for i, link in enumerate(chain.links):
        if prev_dst is not None and dom.point_gap(prev_dst, link.src) > tol:
            raise InvalidChain(f"links {i - 1} and {i} do not share an endpoint")
        prev_dst = link.dst
    return chain.total_cost


def validate_chain(chain: Chain, tol_endpoint: float = 1e-6) -> None:
    """Certify every link: declared endpoints are hit by the stored disk."""
    dom = chain.domain
    for i, link in enumerate(chain.links):
        va = eval_interp(link.disk.v, link.a)
        vb = eval_interp(link.disk.v, link.b)
        if dom.point_gap(va, link.src) > tol_endpoint:
            raise InvalidChain(f"link {i} misses its source point")
        if dom.point_gap(vb, link.dst) > tol_endpoint:
            raise InvalidChain(f"link {i} misses its target point")
    chain_cost(chain, tol=tol_endpoint)


def concatenate_chains(c1: Chain, c2: Chain, tol: float = 1e-8) -> Chain:
    """Join two chains end to end; the joint must match within tolerance."""
    if c1.domain.kind != c2.domain.kind:
        raise InvalidChain("chains live on different domain kinds")
    if c1.links and c2.links and c1.domain.point_gap(c1.links[-1].dst, c2.links[0].src) > tol:
        raise InvalidChain("chains do not meet at a common waypoint")
    return Chain(c1.links + c2.links, c1.waypoints + c2.waypoints[1:], c1.domain)


def _image_in_domain(v: DiskMap, dom: DomainDescriptor) -> bool:
    if dom.is_torus or not math.isfinite(dom.radius):
        return True
    return dom.contains(v.values[v.grid.mask])


def _solve_link(J, src, dst, t, cfg, grid):
    sol = two_point_disk(J, src, dst, t, cfg, grid)
    cost = poincare_distance(0.0, t, r=1.0)
    return ChainLink(sol, 0j, complex(t, 0.0), cost, np.asarray(src, float),
                     np.asarray(dst, float))


def estimate_distance(J: StructureField, p, q, opts: KobayashiOptions | None = None) -> DistanceEstimate:
    """Cheapest certified chain joining p and q.

    Every accepted link passes endpoint matching (solver tolerance), the
    residual cap, and domain containment, so ``upper`` is a true upper
    bound regardless of how the search was pruned.  The search log records
    one (k, t, cost) triple per attempted link solve, with infinite cost
    for rejected attempts.
    """
    opts = opts or KobayashiOptions()
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    dom = J.domain
    if dom.point_gap(p, q) == 0.0:
        return DistanceEstimate(0.0, Chain([], [p], dom), [])

    grid = make_grid(opts.grid_r, opts.grid_n)
    t_values = sorted(opts.t_grid)
    endpoint_tol = opts.endpoint_tol if opts.endpoint_tol is not None else opts.cfg.tol_newton
    delta = dom.shortest_delta(p, q)

    best: Chain | None = None
    best_key = None
    log: list = []
    for k in range(1, opts.k_max + 1):
        waypoints = [p + (i / k) * delta for i in range(k + 1)]
        links = []
        feasible = True
        worst_t = 0.0
        for i in range(k):
            link = None
            for t in t_values:
                try:
                    cand = _solve_link(J, waypoints[i], waypoints[i + 1], t, opts.cfg, grid)
                except (Diverged, NewtonFailed, Singular):
                    log.append((k, t, math.inf))
                    continue
                ok = (cand.disk.residual <= opts.residual_cap
                      and _image_in_domain(cand.disk.v, dom)
                      and dom.point_gap(eval_interp(cand.disk.v, cand.b), cand.dst)
                      <= endpoint_tol)
                log.append((k, t, cand.cost if ok else math.inf))
                if ok:
                    link = cand
                    break
            if link is None:
                feasible = False
                break
            links.append(link)
            worst_t = max(worst_t, link.b.real)
        if not feasible:
            continue
        chain = Chain(links, waypoints, dom)
        key = (chain.total_cost, k, worst_t)
        if best is None or key < best_key:
            best, best_key = chain, key
    if best is None:
        raise NoChainFound(
            f"no (k <= {opts.k_max}, t in {tuple(t_values)}) chain joins the points")
    return DistanceEstimate(best.total_cost, best, log)


def pushforward_chain(chain: Chain, f, J_target: StructureField,
                      residual_tol: float = 1e-3) -> Chain:
    """Compose every link disk with a map between domains.

    Source and target parameters are untouched, so the cost is preserved
    exactly.  Each composed disk is re-certified against the target
    structure; failure raises ``NotHolomorphicMap``.
    """
    new_links = []
    for i, link in enumerate(chain.links):
        vals = np.asarray(f(link.disk.v.values.reshape(-1, link.disk.v.values.shape[-1])))
        vals = vals.reshape(link.disk.v.values.shape[:2] + (vals.shape[-1],))
        v_new = DiskMap(link.disk.v.grid, vals)
        resid = cr_residual(J_target, v_new)
        if resid > residual_tol:
            raise NotHolomorphicMap(
                f"composed link {i} has residual {resid:.3e} > {residual_tol:.1e}")
        sol = DiskSolution(None, v_new, resid, link.disk.iterations,
                           link.disk.epsilon_used)
        src = np.asarray(f(link.src[None, :]))[0]
        dst = np.asarray(f(link.dst[None, :]))[0]
        new_links.append(ChainLink(sol, link.a, link.b, link.cost, src, dst))
    waypoints = [np.asarray(f(np.asarray(w, float)[None, :]))[0] for w in chain.waypoints]
    return Chain(new_links, waypoints, J_target.domain)


def derivative_bound(J: StructureField, p, nu, lambda_max: float,
                     cfg: SolverConfig | None = None, grid: DiskGrid | None = None,
                     bisect_tol: float = 0.01) -> BoundReport:
    """Largest derivative scale at which a disk through p with prescribed
    derivative exists and stays inside the domain.

    Bisection on the scale; the result is a lower bound for the derivative
    supremum over all disks.  Feasibility at ``lambda_max`` itself is
    flagged as ``unbounded_suspected`` (the scan cannot certify an actual
    supremum).
    """
    cfg = cfg or SolverConfig()
    grid = grid or make_grid(1.0, 33)
    p = np.asarray(p, dtype=np.float64)
    nu = np.asarray(nu, dtype=np.float64)
    nrm = np.linalg.norm(nu)
    if nrm == 0:
        raise ValueError("direction must be nonzero")
    nu = nu / nrm
    dom = J.domain
    probes: list = []

    def feasible(lam: float) -> bool:
        if lam == 0.0:
            probes.append((0.0, True))
            return True
        try:
            sol = derivative_disk(J, p, lam * nu, cfg, grid)
        except (Diverged, NewtonFailed, Singular):
            probes.append((lam, False))
            return False
        ok = _image_in_domain(sol.v, dom)
        probes.append((lam, ok))
        return ok

    if feasible(lambda_max):
        return BoundReport(lambda_max, lambda_max, True, probes)
    lo, hi = 0.0, lambda_max
    while hi - lo > bisect_tol:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return BoundReport(lo, lambda_max, False, probes)
