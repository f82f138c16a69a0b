"""The interaction model: perception, planning, valuation and evidence accumulation."""

from commotions.model.core import (
    AgentSimState,
    ActionSet,
    BehaviorIntent,
    BeliefState,
    ControlScheme,
    InteractionMode,
    ModelParams,
    SimConfig,
    Trajectory,
    accumulate_and_select,
    evaluate_value,
    generate_trajectory,
    perceive,
    theory_of_mind_weights,
)
from commotions.model.simulate import (
    RolloutPair,
    RolloutSet,
    rollout_rng,
    simulate_batch,
    simulate_jobs,
    simulate_pair,
)
