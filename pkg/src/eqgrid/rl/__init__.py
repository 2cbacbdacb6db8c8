"""Per-household PPO agents that tune the equity weights around the dispatch solver."""
from .loop import (
    Agent,
    AgentState,
    LoopAborted,
    LoopResult,
    apply_action,
    compute_reward,
    compute_state,
    compute_states,
    household_payment,
    household_utility,
    income_deltas,
    run_equity_loop,
)
from .nets import Adam, Dense, PolicyParams
from .ppo import (
    ACTIONS,
    DECREASE,
    INCREASE,
    NO_CHANGE,
    AgentExperience,
    Batch,
    PpoConfig,
    UpdateDiagnostics,
    act,
    entropy,
    gae,
    kl_divergence,
    log_softmax,
    loss_and_grad,
    loss_terms,
    policy,
    ppo_update,
)
