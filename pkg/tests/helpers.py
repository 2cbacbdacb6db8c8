"""Scenario factories and independent oracles shared by the test modules."""
from __future__ import annotations

import itertools
import math

import numpy as np

from eqgrid.model import BessUnit, GlobalParams, Household, Scenario, SolarUnit
from eqgrid.rl import Batch, loss_and_grad, loss_terms, policy
from eqgrid.sched import OPTIMAL, Schedule

INCOME_BY_CLASS = {"Lower": 100_000.0, "Middle": 200_000.0, "Upper": 350_000.0}


ACCEPTANCE: list[str] = []  # one line per acceptance criterion, printed in the terminal summary


def report(n: int, title: str, ok: bool, detail: str) -> bool:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} {title} ({detail})"
    ACCEPTANCE.append(line)
    print(line)
    return ok


def household(i, demand, income_class="Middle", weight=1.0, **override):
    h = Household.from_income(i, INCOME_BY_CLASS[income_class], income_class, demand, weight)
    if override:
        fields = {"xi": h.xi, "beta": h.beta, "lam": h.lam, **override}
        h = Household(h.id, h.income, h.income_class, h.demand, fields["xi"], fields["beta"], fields["lam"], weight)
    return h


def scenario(demands, prices, *, solar=(), bess=(), classes=None, label="test", **params):
    demands = np.atleast_2d(np.asarray(demands, dtype=float))
    classes = classes or ["Middle"] * len(demands)
    hs = [household(i, d, classes[i]) for i, d in enumerate(demands)]
    ss = [SolarUnit(k, g) for k, g in enumerate(solar)]
    p = GlobalParams(horizon_T=demands.shape[1]).with_overrides(**params)
    return Scenario(hs, ss, list(bess), prices, p, label)


def make_schedule(sc: Scenario, *, p_grid=None, solar=None, charge=None, discharge=None, bess_charge=None,
                  bess_discharge=None, soc=None, p_peak=None, weights=None, status=OPTIMAL) -> Schedule:
    """Hand-built schedule; unspecified flows are zero and the peak is the pooled maximum."""
    N, T, B = sc.N, sc.T, sc.B

    def arr(x, shape):
        return np.zeros(shape) if x is None else np.asarray(x, dtype=float).reshape(shape)

    g = arr(p_grid, (N, T))
    peak = float(g.sum(axis=0).max()) if p_peak is None else float(p_peak)
    w = sc.weights() if weights is None else np.asarray(weights, dtype=float)
    return Schedule(status, g, arr(solar, (N, T)), arr(charge, (N, T)), arr(discharge, (N, T)),
                    arr(bess_charge, (B, T)), arr(bess_discharge, (B, T)), arr(soc, (B, T)), peak,
                    np.zeros(N), 0.0, 0.0, 0.0, 0.0, w,
                    sc.solar_matrix().sum(axis=0) if sc.S else np.zeros(T), sc.S)


# --------------------------------------------------------------- brute force

def random_tiny_instance(rng: np.random.Generator) -> tuple[Scenario, np.ndarray]:
    """At most 2 households, 3 hours and one battery; IR off, budget loose."""
    N = int(rng.integers(1, 3))
    T = int(rng.integers(1, 4))
    has_solar = rng.random() < 0.8
    has_bess = rng.random() < 0.7
    D = rng.uniform(0.2, 1.5, size=(N, T))
    prices = rng.uniform(10.0, 120.0, size=T)
    classes = list(rng.choice(["Lower", "Middle", "Upper"], size=N))
    hs = [household(i, D[i], classes[i], xi=1e7) for i in range(N)]
    solar = [SolarUnit(0, rng.uniform(0.0, 1.5, size=T))] if has_solar else []
    bess = []
    if has_bess:
        cap = float(rng.uniform(0.5, 2.0))
        bess = [BessUnit(0, cap, float(rng.uniform(0.2, 1.0)), eta_c=float(rng.uniform(0.85, 1.0)),
                         eta_d=float(rng.uniform(0.85, 1.0)))]
    omega = -math.inf if rng.random() < 0.5 else float(rng.uniform(-300.0, -150.0))
    params = GlobalParams(horizon_T=T, omega=omega, enforce_ir=False, r_max=float(rng.uniform(0.2, 1.0)),
                          c_peak=float(rng.uniform(50.0, 500.0)), theta=float(rng.uniform(0.2, 0.8)))
    weights = rng.uniform(0.5, 2.0, size=N)
    return Scenario(hs, solar, bess, prices, params), weights


def _battery_delta_range(pos, neg, P, unit):
    """Range of one-step SOC change when households net ``pos`` out of and ``neg`` into local supply.

    Discharge E and extra solar-fed charge u are free: 0 <= E <= pos, the
    solar used ``pos - E + u`` must lie in [0, P], and C = neg + u with
    C <= pmax, E <= pmax and C + E <= pmax.
    """
    pmax, ec, ed = unit.p_max, unit.eta_c, unit.eta_d
    e_lo = np.maximum(0.0, pos - P)
    e_hi = np.minimum(pos, pmax - neg)
    ok = (e_lo <= e_hi + 1e-12) & (neg <= pmax + 1e-12)
    d_min = ec * neg - e_hi / ed
    best = np.full(pos.shape, -np.inf)
    # umax(E) = min(P - pos + E, pmax - neg - E); the maximiser sits at a breakpoint or an end
    cands = (e_lo, e_hi, (pmax - neg - P + pos) / 2.0)
    for E in cands:
        E = np.clip(E, e_lo, np.maximum(e_lo, e_hi))
        u = np.minimum(P - pos + E, pmax - neg - E)
        val = np.where(u >= -1e-12, ec * (neg + np.maximum(u, 0.0)) - E / ed, -np.inf)
        best = np.maximum(best, val)
    return ok, d_min, best


def _least_imports(floor, ramp):
    """Pointwise least imports >= floor whose hourly change at t stays within ramp[:, t].

    g_t = max_s floor_s - (ramp allowance between s and t); cheapest for any
    nonnegative prices because both energy cost and peak grow with g.
    """
    T = floor.shape[-1]
    cum = np.concatenate([np.zeros((ramp.shape[0], 1)), np.cumsum(ramp[:, 1:], axis=1)], axis=1)
    g = np.empty_like(floor)
    for t in range(T):
        dist = np.abs(cum[:, t:t + 1] - cum)  # N x T
        g[..., t] = np.max(floor - dist[None], axis=-1)
    return g


def _evaluate(sc: Scenario, w: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Objective for local supplies ``r`` (points x N x T), +inf where infeasible."""
    p = sc.params
    D = sc.demand_matrix()[None]
    P = sc.solar_matrix().sum(axis=0) if sc.S else np.zeros(sc.T)
    g = _least_imports(np.maximum(D * (1 - p.epsilon) - r, 0.0), p.r_max * D[0])
    ok = np.all(g + r <= D * (1 + p.epsilon) + 1e-12, axis=(1, 2))
    pos = np.clip(r, 0.0, None).sum(axis=1)
    neg = np.clip(-r, 0.0, None).sum(axis=1)
    if sc.B:
        unit = sc.bess[0]
        lo = hi = np.full(r.shape[0], unit.soc_initial)
        smin, smax = unit.soc_min_frac * unit.capacity_E, unit.soc_max_frac * unit.capacity_E
        for t in range(sc.T):
            step_ok, dmin, dmax = _battery_delta_range(pos[:, t], neg[:, t], P[t], unit)
            lo = np.maximum(lo + dmin, smin)
            hi = np.minimum(hi + dmax, smax)
            ok &= step_ok & (lo <= hi + 1e-12)
        ok &= hi >= p.terminal_soc_frac * unit.capacity_E - 1e-12
    else:
        ok &= np.all(neg <= 1e-12, axis=1) & np.all(pos <= P[None] + 1e-12, axis=1)
    if math.isfinite(p.omega):
        beta = np.array([h.beta for h in sc.households])[None, :, None]
        lam = np.array([h.lam for h in sc.households])[None, :, None]
        ok &= np.all(beta * (g + r) - lam * g >= p.omega - 1e-9, axis=(1, 2))
    lam_i = np.array([h.lam for h in sc.households])
    share = r.sum(axis=2) / D[0].sum(axis=1)
    cost = (np.einsum("i,t,pit->p", w, sc.prices, g)
            + p.c_peak * g.sum(axis=1).max(axis=1)
            + np.abs(share - p.theta) @ lam_i)
    return np.where(ok, cost, np.inf)


GRID_POINTS = {1: 41, 2: 21, 3: 11, 4: 9, 5: 7, 6: 5}


def _zoom(f, lo, hi, levels, shrink):
    """Grid search on the box [lo, hi], re-centred on the incumbent each level; None if nothing is feasible."""
    dims = lo.size
    axes = [np.linspace(-1.0, 1.0, GRID_POINTS[dims])] * dims
    offs = np.array(list(itertools.product(*axes))).reshape(-1, *lo.shape)
    centre, half = (lo + hi) / 2, (hi - lo) / 2
    best, best_z = math.inf, None
    for _ in range(levels):
        z = np.clip(centre[None] + offs * half[None], lo[None], hi[None])
        vals = f(z)[0]
        k = int(np.argmin(vals))
        if vals[k] < best:
            best, best_z = float(vals[k]), z[k]
        if best_z is None:
            return None
        centre = best_z
        half = half * shrink
    return best_z


def _directions(shape, rng, n_random):
    """Axis moves, pairwise sum-preserving and sum-changing moves, then random unit directions."""
    n = int(np.prod(shape))
    eye = np.eye(n)
    pairs = [eye[i] + sgn * eye[j] for i, j in itertools.combinations(range(n), 2) for sgn in (1.0, -1.0)]
    rand = rng.normal(size=(n_random, n))
    dirs = np.vstack([eye] + ([np.array(pairs)] if pairs else []) + [rand])
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return dirs.reshape(-1, *shape)


def _pattern_search(f, z0, scale, rng, rounds=300, n_random=32):
    """Compass search from z0; pinned coordinates and sum constraints are followed by the pair moves."""
    best = float(f(z0[None])[0][0])
    z, step = z0.copy(), 0.1
    for _ in range(rounds):
        dirs = _directions(z.shape, rng, n_random) * scale
        cand = np.concatenate([z[None] + step * dirs, z[None] - step * dirs])
        vals = f(cand)[0]
        k = int(np.argmin(vals))
        if vals[k] < best - 1e-12:
            best, z = float(vals[k]), cand[k]
            step = min(step * 1.5, 0.5)
        else:
            step *= 0.6
            if step < 1e-8:
                break
    return best


def brute_force_objective(sc: Scenario, w, levels: int = 30, shrink: float = 0.7, seed: int = 0) -> float:
    """Derivative-free minimum of the dispatch cost.

    Two searches run, each a zooming grid polished by a random-direction
    pattern search: one over local supplies r[i, t], one over first-hour
    imports plus ramp-boxed hourly import changes (with r at the bottom of the
    balance band).  The first copes with thin storage-driven regions, the
    second with ramp-pinned ones.  For each r the imports are the least
    ramp-feasible sequence above the band, which is optimal for that r.
    Returns +inf when neither search finds a feasible point.
    """
    w = np.asarray(w, dtype=float)
    p = sc.params
    D = sc.demand_matrix()
    pmax = sc.bess[0].p_max if sc.B else 0.0
    P = sc.solar_matrix().sum(axis=0) if sc.S else np.zeros(sc.T)
    r_hi = np.minimum(D * (1 + p.epsilon), P[None] + pmax)  # nobody gets more than solar plus discharge
    r_lo = np.full(D.shape, -pmax)

    def in_r(z):
        return _evaluate(sc, w, z), z

    def in_g(z):
        g = np.cumsum(z, axis=-1)
        r = np.clip(D * (1 - p.epsilon) - g, r_lo, r_hi)
        vals = np.where(np.all(g >= -1e-12, axis=(1, 2)), _evaluate(sc, w, r), np.inf)
        return vals, r

    g_lo, g_hi = np.empty(D.shape), np.empty(D.shape)
    g_lo[:, 0], g_hi[:, 0] = 0.0, D[:, 0] * (1 - p.epsilon) + pmax
    g_lo[:, 1:], g_hi[:, 1:] = -p.r_max * D[:, 1:], p.r_max * D[:, 1:]

    best = math.inf
    for f, lo, hi in ((in_r, r_lo, r_hi), (in_g, g_lo, g_hi)):
        z0 = _zoom(f, lo, hi, levels, shrink)
        if z0 is not None:
            best = min(best, _pattern_search(f, z0, np.maximum(hi - lo, 1e-9), np.random.default_rng(seed)))
    return best


def gini_pairwise(x) -> float:
    """Literal double-sum Gini, independent of the sorted formula in the package."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if x.sum() == 0:
        return 0.0
    return float(np.abs(x[:, None] - x[None, :]).sum() / (2 * n * n * x.mean()))


def shapley_classical(n: int, value) -> np.ndarray:
    """Exact Shapley values by enumerating coalitions (value maps a frozenset to a number)."""
    phi = np.zeros(n)
    players = range(n)
    for i in players:
        others = [j for j in players if j != i]
        for k in range(n):
            for coal in itertools.combinations(others, k):
                s = frozenset(coal)
                weight = math.factorial(k) * math.factorial(n - k - 1) / math.factorial(n)
                phi[i] += weight * (value(s | {i}) - value(s))
    return phi


# ------------------------------------------------------------------- ppo

def random_batch(params, n=16, seed=0, shift=None):
    """PPO batch with random states, advantages and returns, and old log-probs near the current ones."""
    rng = np.random.default_rng(seed)
    states = rng.normal(size=(n, 4))
    logp, _ = policy(params, states)
    actions = rng.integers(0, 3, size=n)
    old = logp[np.arange(n), actions] + (rng.normal(scale=0.3, size=n) if shift is None else shift)
    return Batch(states, actions, np.minimum(old, 0.0), rng.normal(size=n), rng.normal(size=n))


def fd_check(params, batch, cfg, h=1e-5, n_probe=None, seed=0):
    """Worst relative error of the analytic loss gradient against central differences."""
    _, grad = loss_and_grad(params, batch, cfg)
    x = params.flat()
    idx = np.arange(x.size)
    if n_probe is not None:
        idx = np.random.default_rng(seed).choice(x.size, n_probe, replace=False)
    worst = 0.0
    for k in idx:
        xp, xm = x.copy(), x.copy()
        xp[k] += h
        xm[k] -= h
        fd = (loss_terms(params.with_flat(xp), batch, cfg)["loss"]
              - loss_terms(params.with_flat(xm), batch, cfg)["loss"]) / (2 * h)
        worst = max(worst, abs(fd - grad[k]) / max(abs(fd), abs(grad[k]), 1e-6))
    return worst
