from .baselines import (
    FhParams,
    MaddpgAgent,
    MaddpgCollector,
    MaddpgConfig,
    MaddpgTransition,
    fh_hold,
    fh_policy,
    iac_factory,
    maddpg_joint,
    nc_policy,
)
from .caac import (
    EDGE_GAP_CLIP,
    CaacAgent,
    CaacConfig,
    CaacNets,
    ReplayBuffer,
    Transition,
    TransitionCollector,
    actor_objective,
    actor_objective_grad,
    aggregate_side,
    attention_weights,
    canonical_rows,
    critic_loss,
    critic_targets,
    ego_feature,
    event_critic_batch,
    event_critic_forward,
    inductive_return,
    node_features,
    select_action,
    side_matrix,
)

__all__ = [
    "EDGE_GAP_CLIP",
    "CaacAgent",
    "CaacConfig",
    "CaacNets",
    "FhParams",
    "MaddpgAgent",
    "MaddpgCollector",
    "MaddpgConfig",
    "MaddpgTransition",
    "ReplayBuffer",
    "Transition",
    "TransitionCollector",
    "actor_objective",
    "actor_objective_grad",
    "aggregate_side",
    "attention_weights",
    "canonical_rows",
    "critic_loss",
    "critic_targets",
    "ego_feature",
    "event_critic_batch",
    "event_critic_forward",
    "fh_hold",
    "fh_policy",
    "iac_factory",
    "inductive_return",
    "maddpg_joint",
    "nc_policy",
    "node_features",
    "select_action",
    "side_matrix",
]
