"""Agent observations and rewards, and the solve/learn loop that tunes the weights."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..metrics import access_for_equity, gini
from ..model import Scenario
from ..rng import stream
from ..sched import LinearSolver, Schedule, outside_options, renewable_access_all, solve_scenario
from .nets import Adam, PolicyParams
from .ppo import (
    DECREASE,
    INCREASE,
    AgentExperience,
    Batch,
    PpoConfig,
    act,
    gae,
    normalize,
    policy,
    ppo_update,
)

log = logging.getLogger(__name__)


class LoopAborted(RuntimeError):
    """The scheduler stayed infeasible after the whole recovery ladder."""

    def __init__(self, message, schedule=None, history=None):
        super().__init__(message)
        self.schedule = schedule
        self.history = history or []


@dataclass(frozen=True)
class AgentState:
    gini: float
    c_norm: float
    u_norm: float
    u_dev: float
    flags: tuple[str, ...] = ()

    def as_array(self) -> np.ndarray:
        return np.array([self.gini, self.c_norm, self.u_norm, self.u_dev])


def household_utility(schedule: Schedule, scenario: Scenario) -> np.ndarray:
    """Sum over the day of ``beta * d - lambda * p_grid`` with d the delivered supply."""
    beta = np.array([h.beta for h in scenario.households])
    lam = np.array([h.lam for h in scenario.households])
    return beta * schedule.supply.sum(axis=1) - lam * schedule.p_grid.sum(axis=1)


def household_payment(schedule: Schedule, scenario: Scenario) -> np.ndarray:
    """Grid energy bought plus the storage usage fee, per household over the day."""
    fee = scenario.params.c_bess * (schedule.charge + schedule.discharge).sum(axis=1)
    return schedule.p_grid @ scenario.prices + fee


def _relative(x: np.ndarray, name: str) -> tuple[np.ndarray, tuple[str, ...]]:
    m = x.mean()
    if m == 0:
        return np.ones_like(x), (f"{name}_mean_zero",)
    return x / m, ()


def compute_states(schedule: Schedule, scenario: Scenario) -> list[AgentState]:
    g = gini(access_for_equity(renewable_access_all(schedule, scenario)))
    cost = household_payment(schedule, scenario)
    util = household_utility(schedule, scenario)
    c_norm, cf = _relative(cost, "cost")
    u_norm, uf = _relative(util, "utility")
    u_dev = util - util.mean()
    return [AgentState(g, float(c_norm[i]), float(u_norm[i]), float(u_dev[i]), cf + uf)
            for i in range(scenario.N)]


def compute_state(schedule: Schedule, scenario: Scenario, i: int) -> AgentState:
    return compute_states(schedule, scenario)[i]


def compute_reward(u_norm, access, c_norm, theta):
    return 0.5 * u_norm - 0.3 * np.abs(access - theta) - 0.2 * c_norm


def apply_action(w: float, action: int, delta: float, bounds=(0.1, 2.0)) -> float:
    if action == INCREASE:
        w = w + delta
    elif action == DECREASE:
        w = w - delta
    return float(min(max(w, bounds[0]), bounds[1]))


def income_deltas(incomes, delta_base: float = 0.05) -> np.ndarray:
    """Step size per household; lower incomes move their weight faster."""
    inc = np.asarray(incomes, dtype=float)
    return delta_base * np.clip(np.median(inc) / inc, 0.5, 2.0)


@dataclass
class Agent:
    params: PolicyParams
    optimizer: Adam
    rng: np.random.Generator
    trajectory: list = field(default_factory=list)

    def batch(self, config: PpoConfig) -> Batch:
        """Whole trajectory so far, with log-probs and values taken under the current parameters."""
        states = np.vstack([e.state for e in self.trajectory])
        actions = np.array([e.action for e in self.trajectory], dtype=int)
        logp, values = policy(self.params, states)
        rewards = np.array([e.reward for e in self.trajectory])
        adv, ret = gae(rewards, values, 0.0, config.gamma, config.gae_lambda)
        return Batch(states, actions, logp[np.arange(len(actions)), actions], normalize(adv), ret)


@dataclass
class LoopResult:
    schedule: Schedule
    weights: np.ndarray
    history: list
    level: int
    converged: bool

    @property
    def iterations(self) -> int:
        return len(self.history)


def make_agents(n: int, seed: int, config: PpoConfig) -> list[Agent]:
    agents = []
    for i in range(n):
        params = PolicyParams.init(stream(seed, i, "agent_init"), hidden=config.hidden)
        agents.append(Agent(params, Adam(params.flat().size, lr=config.lr), stream(seed, i, "agent_policy")))
    return agents


def run_equity_loop(
    scenario: Scenario,
    config: PpoConfig | None = None,
    seed: int = 0,
    *,
    solver: LinearSolver | None = None,
    strict: bool = False,
    on_iteration=None,
) -> LoopResult:
    """Alternate solving the dispatch and letting each household's agent nudge its weight.

    Stops after ``config.max_iterations`` solves or once the largest weight
    change stays below ``config.tolerance`` for ``config.patience`` iterations.
    The returned schedule is the last one solved; the returned weights are the
    ones after the last update.
    """
    config = config or PpoConfig()
    p = scenario.params
    bounds = (p.w_min, p.w_max)
    w = np.clip(np.ones(scenario.N), *bounds)
    deltas = income_deltas([h.income for h in scenario.households], config.delta_base)
    agents = make_agents(scenario.N, seed, config)
    outside = outside_options(scenario) if p.enforce_ir else None

    level, quiet, history = 0, 0, []
    schedule = None
    for k in range(config.max_iterations):
        schedule, level = solve_scenario(scenario, w, solver=solver, start_level=level,
                                         outside=outside, strict=strict)
        if not schedule.ok:
            msg = f"{scenario.label}: infeasible at iteration {k} after the full recovery ladder"
            raise LoopAborted(msg, schedule, history)

        states = compute_states(schedule, scenario)
        access = renewable_access_all(schedule, scenario)
        new_w = w.copy()
        rewards, actions, kls, early = [], [], [], []
        for i, agent in enumerate(agents):
            s = states[i]
            r = float(compute_reward(s.u_norm, access[i], s.c_norm, p.theta))
            a, lp, v = act(agent.params, s.as_array(), agent.rng)
            agent.trajectory.append(AgentExperience(s.as_array(), a, r, v, lp))
            agent.params, diag = ppo_update(agent.params, agent.batch(config), config, agent.optimizer)
            new_w[i] = apply_action(w[i], a, deltas[i], bounds)
            rewards.append(r)
            actions.append(a)
            kls.append(diag.kl)
            early.append(diag.stopped_early)

        change = float(np.max(np.abs(new_w - w)))
        record = {
            "iteration": k,
            "status": schedule.status,
            "relaxed": list(schedule.relaxed),
            "objective": schedule.objective,
            "gini": states[0].gini,
            "weights": w.tolist(),
            "new_weights": new_w.tolist(),
            "actions": actions,
            "rewards": rewards,
            "kl": kls,
            "stopped_early": early,
            "max_weight_change": change,
        }
        history.append(record)
        if on_iteration is not None:
            on_iteration(record)
        w = new_w
        quiet = quiet + 1 if change < config.tolerance else 0
        if quiet >= config.patience:
            log.info("%s: weights converged after %d iterations", scenario.label, k + 1)
            break

    return LoopResult(schedule, w, history, level, converged=quiet >= config.patience)
