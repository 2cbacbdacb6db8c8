"""Assembly of the day-ahead dispatch LP.

Column layout, in order (each block row-major, household index then time):

    p_grid[i, t]        N*T
    solar[i, t]         N*T   solar energy delivered to i (only when S > 0)
    charge[i, t]        N*T   energy i sends into the fleet (only when B > 0)
    discharge[i, t]     N*T   energy the fleet delivers to i (only when B > 0)
    bess_charge[b, t]   B*T
    bess_discharge[b, t] B*T
    soc[b, t]           B*T
    p_peak              1
    e_pen[i]            N
    slacks              0-2   (only for relaxed constraints)
    mode[b, t]          B*T   binaries, strict mode only

Solar and storage enter the balance only through per-household totals and
the per-unit limits only through per-unit totals, so the aggregate
variables above describe exactly the same feasible set as per-unit
allocation fractions; ``Schedule`` expands them back into per-unit tensors
by proportional splitting.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..model import Scenario, check_weights
from .economics import outside_options

RELAX_ORDER = ("individual_rationality", "rawlsian_floor", "budget")
SLACK_PENALTY = 1e6
INF = math.inf


@dataclass
class RowBlock:
    name: str
    sense: str  # "<=" or "=="
    start: int
    stop: int


@dataclass
class DispatchProblem:
    scenario: Scenario
    weights: np.ndarray
    blocks: dict[str, tuple[int, tuple[int, ...]]]  # name -> (offset, shape)
    c: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    A_ub: sp.csr_matrix
    b_ub: np.ndarray
    A_eq: sp.csr_matrix
    b_eq: np.ndarray
    rows_ub: list[RowBlock]
    rows_eq: list[RowBlock]
    integrality: np.ndarray | None = None
    relaxed: tuple[str, ...] = ()
    outside: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_vars(self) -> int:
        return len(self.c)

    @property
    def n_rows(self) -> int:
        return self.A_ub.shape[0] + self.A_eq.shape[0]

    def index(self, name: str) -> np.ndarray:
        off, shape = self.blocks[name]
        return off + np.arange(int(np.prod(shape))).reshape(shape)

    def has(self, name: str) -> bool:
        return name in self.blocks

    def block_rows(self, name: str) -> RowBlock:
        for rb in self.rows_ub + self.rows_eq:
            if rb.name == name:
                return rb
        raise KeyError(name)

    def row_counts(self) -> dict[str, int]:
        return {rb.name: rb.stop - rb.start for rb in self.rows_ub + self.rows_eq}


class _Assembler:
    def __init__(self):
        self.blocks: dict[str, tuple[int, tuple[int, ...]]] = {}
        self.n = 0
        self.lb: list[np.ndarray] = []
        self.ub: list[np.ndarray] = []
        self.cost: list[np.ndarray] = []
        self.rows = {"<=": [], "==": []}
        self.nrows = {"<=": 0, "==": 0}
        self.row_blocks = {"<=": [], "==": []}

    def var(self, name, shape, lb=0.0, ub=INF, cost=0.0) -> np.ndarray:
        size = int(np.prod(shape))
        idx = self.n + np.arange(size).reshape(shape)
        self.blocks[name] = (self.n, tuple(shape))
        self.n += size
        for store, val in ((self.lb, lb), (self.ub, ub), (self.cost, cost)):
            store.append(np.broadcast_to(np.asarray(val, dtype=float), shape).ravel().copy())
        return idx

    def rows_(self, name, sense, terms, rhs):
        """Add a block of rows.

        ``terms`` is a list of (row_ids, col_ids, coefs) with local row ids in
        ``range(len(rhs))``; arrays are broadcast against each other.
        """
        rhs = np.asarray(rhs, dtype=float).ravel()
        m = len(rhs)
        if m == 0:
            return
        base = self.nrows[sense]
        r_all, c_all, v_all = [], [], []
        for r, c, v in terms:
            r, c, v = np.broadcast_arrays(np.asarray(r), np.asarray(c), np.asarray(v, dtype=float))
            r_all.append(r.ravel() + base)
            c_all.append(c.ravel())
            v_all.append(v.ravel())
        self.rows[sense].append((np.concatenate(r_all), np.concatenate(c_all), np.concatenate(v_all), rhs))
        self.row_blocks[sense].append(RowBlock(name, sense, base, base + m))
        self.nrows[sense] += m

    def matrix(self, sense):
        parts = self.rows[sense]
        if not parts:
            return sp.csr_matrix((0, self.n)), np.zeros(0)
        r = np.concatenate([p[0] for p in parts])
        c = np.concatenate([p[1] for p in parts])
        v = np.concatenate([p[2] for p in parts])
        b = np.concatenate([p[3] for p in parts])
        A = sp.coo_matrix((v, (r, c)), shape=(self.nrows[sense], self.n)).tocsr()
        A.sum_duplicates()
        return A, b


def build_problem(
    scenario: Scenario,
    weights=None,
    *,
    relax: tuple[str, ...] = (),
    strict: bool = False,
    strict_updown: bool = False,
    outside: np.ndarray | None = None,
    floor_slack: str = "shared",
) -> DispatchProblem:
    """Encode the dispatch LP for ``scenario`` under equity ``weights``.

    ``relax`` names constraints from :data:`RELAX_ORDER` to loosen: individual
    rationality is dropped, the Rawlsian floor and budget rows each get one
    shared slack penalised at :data:`SLACK_PENALTY` per unit.
    """
    p = scenario.params
    N, T, B = scenario.N, scenario.T, scenario.B
    if weights is None:
        weights = scenario.weights()
    w = check_weights(weights, p, N)
    unknown = set(relax) - set(RELAX_ORDER)
    if unknown:
        raise ValueError(f"cannot relax {sorted(unknown)}")
    D = scenario.demand_matrix()
    if D.shape != (N, T):
        raise ValueError(f"demand matrix {D.shape} does not match N={N}, T={T}")
    price = scenario.prices
    sol_total = scenario.solar_matrix().sum(axis=0) if scenario.S else np.zeros(T)
    if sol_total.shape != (T,):
        raise ValueError("solar series length does not match the horizon")
    beta = np.array([h.beta for h in scenario.households])
    lam = np.array([h.lam for h in scenario.households])
    xi = np.array([h.xi for h in scenario.households])

    asm = _Assembler()
    g = asm.var("p_grid", (N, T), cost=w[:, None] * price[None, :])
    q = asm.var("solar", (N, T), ub=np.broadcast_to(sol_total, (N, T))) if scenario.S else None
    if B:
        pmax = np.array([u.p_max for u in scenario.bess])
        cap = np.array([u.capacity_E for u in scenario.bess])
        c = asm.var("charge", (N, T), ub=pmax.sum())
        e = asm.var("discharge", (N, T), ub=pmax.sum())
        cb = asm.var("bess_charge", (B, T), ub=pmax[:, None])
        db = asm.var("bess_discharge", (B, T), ub=pmax[:, None])
        smin = np.array([u.soc_min_frac for u in scenario.bess]) * cap
        smax = np.array([u.soc_max_frac for u in scenario.bess]) * cap
        soc = asm.var("soc", (B, T), lb=smin[:, None], ub=smax[:, None])
    peak = asm.var("p_peak", (1,), cost=p.c_peak)[0]
    epen = asm.var("e_pen", (N,), cost=lam)
    s_rawls = None
    if "rawlsian_floor" in relax:
        if floor_slack == "per_row":
            s_rawls = asm.var("slack_rawlsian_floor", (N, T), cost=SLACK_PENALTY)
        else:
            s_rawls = asm.var("slack_rawlsian_floor", (1,), cost=SLACK_PENALTY)[0]
    s_budget = asm.var("slack_budget", (1,), cost=SLACK_PENALTY)[0] if "budget" in relax else None

    nt = np.arange(N * T).reshape(N, T)

    # local supply terms: solar + discharge - charge, per (i, t)
    def renewable_terms(rows, scale=1.0):
        out = []
        if q is not None:
            out.append((rows, q, scale))
        if B:
            out.append((rows, e, scale))
            out.append((rows, c, -scale))
        return out

    supply = [(nt, g, 1.0)] + renewable_terms(nt)
    asm.rows_("balance_hi", "<=", supply, D * (1 + p.epsilon))
    asm.rows_("balance_lo", "<=", [(r, col, -v) for r, col, v in supply], -D * (1 - p.epsilon))

    tt = np.broadcast_to(np.arange(T), (N, T))
    if q is not None:
        asm.rows_("solar_pool", "<=", [(tt, q, 1.0)], sol_total)

    if B:
        bt = np.arange(B * T).reshape(B, T)
        tb = np.broadcast_to(np.arange(T), (B, T))
        asm.rows_("charge_link", "==", [(tt, c, 1.0), (tb, cb, -1.0)], np.zeros(T))
        asm.rows_("discharge_link", "==", [(tt, e, 1.0), (tb, db, -1.0)], np.zeros(T))
        eta_c = np.array([u.eta_c for u in scenario.bess])[:, None]
        eta_d = np.array([u.eta_d for u in scenario.bess])[:, None]
        soc0 = np.array([u.soc_initial for u in scenario.bess])
        rhs = np.zeros((B, T))
        rhs[:, 0] = soc0
        terms = [(bt, soc, 1.0), (bt, cb, -eta_c), (bt, db, 1.0 / eta_d)]
        if T > 1:
            terms.append((bt[:, 1:], soc[:, :-1], -1.0))
        asm.rows_("soc_dynamics", "==", terms, rhs)
        asm.rows_("bess_combined", "<=", [(bt, cb, 1.0), (bt, db, 1.0)], np.broadcast_to(pmax[:, None], (B, T)))
        asm.rows_("terminal_soc", "<=", [(np.arange(B), soc[:, -1], -1.0)], -p.terminal_soc_frac * cap)

    asm.rows_("peak", "<=", [(tt, g, 1.0), (np.arange(T), peak, -1.0)], np.zeros(T))

    if T > 1:
        rr = np.arange(N * (T - 1)).reshape(N, T - 1)
        ramp_rhs = p.r_max * D[:, 1:]
        asm.rows_("ramp_up", "<=", [(rr, g[:, 1:], 1.0), (rr, g[:, :-1], -1.0)], ramp_rhs)
        asm.rows_("ramp_down", "<=", [(rr, g[:, 1:], -1.0), (rr, g[:, :-1], 1.0)], ramp_rhs)

    budget = [(nt, g, np.broadcast_to(price, (N, T)))]
    if B:
        budget += [(nt, c, p.c_bess), (nt, e, p.c_bess)]
    if s_budget is not None:
        budget.append((nt, s_budget, -1.0))
    asm.rows_("budget", "<=", budget, np.broadcast_to(xi[:, None], (N, T)))

    if math.isfinite(p.omega):
        # beta*d - lam*g >= omega with d = g + renewables
        rawls = [(nt, g, np.broadcast_to((lam - beta)[:, None], (N, T)))]
        rawls += renewable_terms(nt, -np.broadcast_to(beta[:, None], (N, T)))
        if s_rawls is not None:
            rawls.append((nt, s_rawls, -1.0))
        asm.rows_("rawlsian_floor", "<=", rawls, np.full((N, T), -p.omega))

    total_d = D.sum(axis=1)
    inv_d = np.divide(1.0, total_d, out=np.zeros(N), where=total_d > 0)
    ii = np.broadcast_to(np.arange(N)[:, None], (N, T))
    share = renewable_terms(ii, np.broadcast_to(inv_d[:, None], (N, T)))
    # a household without demand has share 0 by definition and no target to miss
    target = np.where(total_d > 0, p.theta, 0.0)
    asm.rows_("equity_hi", "<=", share + [(np.arange(N), epen, -1.0)], target)
    asm.rows_("equity_lo", "<=", [(r, col, -v) for r, col, v in share] + [(np.arange(N), epen, -1.0)], -target)

    if outside is None and p.enforce_ir and "individual_rationality" not in relax:
        outside = outside_options(scenario)
    if p.enforce_ir and "individual_rationality" not in relax:
        # sum_t(utility - payment) >= s_out, negated into <= form
        coef_g = -(beta[:, None] - lam[:, None] - price[None, :])
        ir = [(ii, g, coef_g)]
        ir += renewable_terms(ii, -np.broadcast_to(beta[:, None], (N, T)))
        if B:
            ir += [(ii, c, p.c_bess), (ii, e, p.c_bess)]
        asm.rows_("individual_rationality", "<=", ir, -np.asarray(outside, dtype=float))

    integrality = None
    if strict or strict_updown:
        if not B:
            raise ValueError("strict mode needs at least one BESS unit")
        mode = asm.var("mode", (B, T), lb=0.0, ub=1.0)
        asm.rows_("exclusive_charge", "<=", [(bt, cb, 1.0), (bt, mode, -pmax[:, None])], np.zeros((B, T)))
        asm.rows_("exclusive_discharge", "<=", [(bt, db, 1.0), (bt, mode, pmax[:, None])],
                  np.broadcast_to(pmax[:, None], (B, T)))
        if strict_updown and T > 1:
            _updown_rows(asm, mode, B, T, p.tau_min)
        integrality = np.zeros(asm.n)
        integrality[mode.ravel()] = 1

    applicable = {"individual_rationality": p.enforce_ir, "rawlsian_floor": math.isfinite(p.omega), "budget": True}
    A_ub, b_ub = asm.matrix("<=")
    A_eq, b_eq = asm.matrix("==")
    return DispatchProblem(
        scenario=scenario,
        weights=w,
        blocks=asm.blocks,
        c=np.concatenate(asm.cost),
        lb=np.concatenate(asm.lb),
        ub=np.concatenate(asm.ub),
        A_ub=A_ub,
        b_ub=b_ub,
        A_eq=A_eq,
        b_eq=b_eq,
        rows_ub=asm.row_blocks["<="],
        rows_eq=asm.row_blocks["=="],
        integrality=integrality,
        relaxed=tuple(r for r in RELAX_ORDER if r in relax and applicable[r]),
        outside=None if outside is None else np.asarray(outside, dtype=float),
        meta={"strict": strict, "strict_updown": strict_updown},
    )


def _updown_rows(asm: _Assembler, mode, B, T, tau):
    """Once the mode switches it must hold for ``tau`` steps."""
    rows_up = []
    for b in range(B):
        for t in range(1, T):
            for tp in range(t + 1, min(t + tau, T)):
                rows_up.append((mode[b, t], mode[b, t - 1], mode[b, tp]))
    if not rows_up:
        return
    cur, prev, hold = (np.array(x) for x in zip(*rows_up))
    r = np.arange(len(cur))
    # mode_t - mode_{t-1} - mode_tp <= 0
    asm.rows_("min_up", "<=", [(r, cur, 1.0), (r, prev, -1.0), (r, hold, -1.0)], np.zeros(len(cur)))
    # mode_{t-1} - mode_t + mode_tp <= 1
    asm.rows_("min_down", "<=", [(r, cur, -1.0), (r, prev, 1.0), (r, hold, 1.0)], np.ones(len(cur)))

