"""Control baselines: no-control, forward-headway holding, IAC, MADDPG."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..env import EpisodeObserver, Observation, PendingDecision
from ..errors import StateError
from ..nn import (
    Adam,
    Mlp,
    ParameterSet,
    Tape,
    Tensor,
    concat,
    mean_all,
    mul,
    no_tape,
    soft_update,
    square,
    sub,
)
from ..routes import RouteConfig
from .caac import OBS_DIM, CaacAgent, CaacConfig


def nc_policy(obs: Observation) -> float:
    """No control: hold nothing, ever."""
    return 0.0


@dataclass(frozen=True)
class FhParams:
    H0: float  # desired departure headway (s)
    d_bar: float = 15.0  # equilibrium mean delay (s)
    g: float = 0.15  # control gain

    def __post_init__(self):
        if self.H0 <= 0 or self.d_bar < 0 or self.g <= 0:
            raise ValueError("FH parameters require H0 > 0, d_bar >= 0, g > 0")


def fh_hold(h_minus: float, p: FhParams, max_hold: float) -> float:
    """Forward-headway holding rule, capped at the common holding bound."""
    if h_minus < 0:
        raise ValueError("forward headway must be >= 0")
    return min(max(0.0, p.d_bar + p.g * (p.H0 - h_minus)), max_hold)


def fh_policy(route: RouteConfig, params: FhParams | None = None):
    """Rule-based holding on the departure headway measured at the stop.

    The forward headway fed to the rule is the time elapsed since the leader
    departed the stop the bus just arrived at (clamped at zero while the
    leader is still dwelling there); the lead bus sees its scheduled headway.
    Returned as a fraction of max_hold so it plugs into the common action
    interface.
    """
    p = params or FhParams(H0=route.dispatch_mean)

    def policy(obs: Observation, sim, decision) -> float:
        if route.max_hold == 0:
            return 0.0
        if decision.bus_index == 0:
            h_minus = p.H0
        else:
            leader_dep = sim.buses[decision.bus_index - 1].departure_times[decision.stop]
            h_minus = p.H0 if leader_dep is None else max(0.0, decision.t - leader_dep)
        return fh_hold(h_minus, p, route.max_hold) / route.max_hold

    policy.contextual = True
    return policy


def iac_factory(cfg: CaacConfig, seed: int) -> CaacAgent:
    """Independent actor-critic: the same agent with the event critic disabled."""
    return CaacAgent(replace(cfg, event_critic=False), seed)


# ---------------------------------------------------------------------------
# MADDPG with zero-filled joint slots for inactive agents.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MaddpgConfig:
    n_agents: int  # fixed at the training route's fleet size
    gamma: float = 0.9
    actor_lr: float = 2e-4
    critic_lr: float = 1e-3
    tau: float = 0.005
    batch_size: int = 128
    buffer_capacity: int = 2000
    sigma_start: float = 0.3
    sigma_end: float = 0.05
    explore_eps: float = 0.02
    hidden: int = 64
    update_every: int = 1
    warmup: int = 600


@dataclass
class MaddpgTransition:
    joint_obs: np.ndarray  # (3N,)
    joint_act: np.ndarray  # (N,), zero except the deciding slot
    obs: np.ndarray  # (3,) local
    slot: int
    action: float
    reward: float
    terminal: bool
    next_joint_obs: np.ndarray | None = None
    next_obs: np.ndarray | None = None


def maddpg_joint(sim, deciding_bus: int, action: float, n_slots: int) -> tuple[np.ndarray, np.ndarray]:
    """Fixed-size joint feature: observation slots for active buses, zeros
    elsewhere; the action vector carries only the deciding bus's action.

    Fleets larger than ``n_slots`` are truncated to the lowest indices;
    smaller fleets leave the upper slots zero-filled.
    """
    from ..env import observe_bus

    joint_obs = np.zeros(3 * n_slots)
    joint_act = np.zeros(n_slots)
    for i in range(min(n_slots, len(sim.buses))):
        if sim.buses[i].active:
            joint_obs[3 * i : 3 * i + 3] = observe_bus(sim, i).as_array()
    if 0 <= deciding_bus < n_slots:
        joint_act[deciding_bus] = action
    return joint_obs, joint_act


class _MaddpgNets:
    def __init__(self, cfg: MaddpgConfig, rng: np.random.Generator | None):
        h, n = cfg.hidden, cfg.n_agents
        self.actor_ps = ParameterSet()
        self.actor = Mlp(self.actor_ps, rng, "actor", [OBS_DIM, h, h, 1], head="sigmoid")
        self.critic_ps = ParameterSet()
        self.critic = Mlp(self.critic_ps, rng, "critic", [4 * n, h, h, 1], head="linear")

    def copy(self, cfg: MaddpgConfig) -> "_MaddpgNets":
        out = _MaddpgNets(cfg, None)
        out.actor_ps.load_values({k: t.data for k, t in self.actor_ps.items()})
        out.critic_ps.load_values({k: t.data for k, t in self.critic_ps.items()})
        return out


class MaddpgAgent:
    """Shared actor over local observations; centralized critic over joint slots."""

    def __init__(self, cfg: MaddpgConfig, seed: int):
        self.cfg = cfg
        self.seed = seed
        ss = np.random.SeedSequence([seed, 0xA1])
        init_ss, explore_ss, batch_ss = ss.spawn(3)
        self.nets = _MaddpgNets(cfg, np.random.default_rng(init_ss))
        self.targets = self.nets.copy(cfg)
        self.explore_rng = np.random.default_rng(explore_ss)
        self.batch_rng = np.random.default_rng(batch_ss)
        self.buffer: list[MaddpgTransition] = []
        self._next_slot = 0
        self.actor_opt = Adam(self.nets.actor_ps, cfg.actor_lr)
        self.critic_opt = Adam(self.nets.critic_ps, cfg.critic_lr)
        self.step_count = 0

    @property
    def kind(self) -> str:
        return "maddpg"

    def snapshot_values(self) -> dict:
        return {
            "actor": {k: t.data.copy() for k, t in self.nets.actor_ps.items()},
            "critic": {k: t.data.copy() for k, t in self.nets.critic_ps.items()},
            "actor_tar": {k: t.data.copy() for k, t in self.targets.actor_ps.items()},
            "critic_tar": {k: t.data.copy() for k, t in self.targets.critic_ps.items()},
        }

    def restore_values(self, snap: dict) -> None:
        self.nets.actor_ps.load_values(snap["actor"])
        self.nets.critic_ps.load_values(snap["critic"])
        self.targets.actor_ps.load_values(snap["actor_tar"])
        self.targets.critic_ps.load_values(snap["critic_tar"])

    def act(self, obs: Observation, sigma: float = 0.0) -> float:
        with no_tape():
            a = float(self.nets.actor.forward(Tensor(obs.as_array().reshape(1, OBS_DIM))).data[0, 0])
        if sigma > 0:
            a += float(self.explore_rng.normal(0.0, sigma))
        return min(1.0, max(0.0, a))

    def act_explore(self, obs: Observation, sigma: float) -> float:
        if len(self.buffer) < self.cfg.warmup:
            return float(self.explore_rng.uniform(0.0, 1.0))
        u = float(self.explore_rng.uniform(0.0, 1.0))
        if u < self.cfg.explore_eps:
            return float(self.explore_rng.uniform(0.0, 1.0))
        return self.act(obs, sigma)

    def push(self, tr: MaddpgTransition) -> None:
        if len(self.buffer) < self.cfg.buffer_capacity:
            self.buffer.append(tr)
        else:
            self.buffer[self._next_slot] = tr
            self._next_slot = (self._next_slot + 1) % self.cfg.buffer_capacity

    def ready(self) -> bool:
        return len(self.buffer) >= max(self.cfg.batch_size, self.cfg.warmup)

    def update(self) -> dict | None:
        if not self.ready():
            return None
        cfg = self.cfg
        idx = self.batch_rng.choice(len(self.buffer), size=cfg.batch_size, replace=False)
        batch = [self.buffer[i] for i in idx]
        n = cfg.n_agents

        y = np.empty((len(batch), 1))
        with no_tape():
            for i, tr in enumerate(batch):
                if tr.terminal:
                    y[i, 0] = tr.reward
                    continue
                a_next = float(
                    self.targets.actor.forward(Tensor(tr.next_obs.reshape(1, OBS_DIM))).data[0, 0]
                )
                joint_act = np.zeros(n)
                if 0 <= tr.slot < n:
                    joint_act[tr.slot] = a_next
                q_next = float(
                    self.targets.critic.forward(
                        Tensor(np.concatenate([tr.next_joint_obs, joint_act]).reshape(1, 4 * n))
                    ).data[0, 0]
                )
                y[i, 0] = tr.reward + cfg.gamma * q_next

        joint_obs = np.stack([tr.joint_obs for tr in batch])
        joint_act = np.stack([tr.joint_act for tr in batch])
        x = np.concatenate([joint_obs, joint_act], axis=1)
        self.nets.critic_ps.zero_grad()
        with Tape() as tape:
            q = self.nets.critic.forward(Tensor(x))
            loss = mean_all(square(sub(Tensor(y), q)))
            tape.backward(loss)
        self.critic_opt.step(self.nets.critic_ps.gradients())

        obs = np.stack([tr.obs for tr in batch])
        onehot = np.zeros((len(batch), n))
        for i, tr in enumerate(batch):
            if 0 <= tr.slot < n:
                onehot[i, tr.slot] = 1.0
        self.nets.actor_ps.zero_grad()
        self.nets.critic_ps.zero_grad()
        with Tape() as tape:
            a = self.nets.actor.forward(Tensor(obs))
            acts = mul(a, Tensor(onehot))  # deciding slot carries the policy action
            j = mean_all(self.nets.critic.forward(concat([Tensor(joint_obs), acts], axis=1)))
            tape.backward(j)
        grads = self.nets.actor_ps.gradients()
        self.actor_opt.step({k: -g for k, g in grads.items()})
        self.nets.actor_ps.zero_grad()
        self.nets.critic_ps.zero_grad()

        soft_update(self.targets.actor_ps, self.nets.actor_ps, cfg.tau)
        soft_update(self.targets.critic_ps, self.nets.critic_ps, cfg.tau)
        self.step_count += 1
        return {"critic_loss": float(loss.data)}


class MaddpgCollector(EpisodeObserver):
    """Joint-feature snapshots at decision and feedback times."""

    def __init__(self, agent: MaddpgAgent):
        self.agent = agent
        self._open: dict[int, tuple[PendingDecision, np.ndarray, np.ndarray]] = {}

    def on_decision(self, sim, decision: PendingDecision) -> None:
        joint_obs, joint_act = maddpg_joint(
            sim, decision.bus_index, decision.action, self.agent.cfg.n_agents
        )
        self._open[decision.bus_index] = (decision, joint_obs, joint_act)

    def on_finalized(self, sim, decision: PendingDecision) -> None:
        entry = self._open.pop(decision.bus_index, None)
        if entry is None:
            return
        d, joint_obs, joint_act = entry
        if d is not decision:
            raise StateError("decision bookkeeping out of order")
        if decision.truncated:
            return  # horizon cutoffs are not real terminals; see TransitionCollector
        if decision.terminal:
            tr = MaddpgTransition(
                joint_obs=joint_obs,
                joint_act=joint_act,
                obs=d.observation.as_array(),
                slot=d.bus_index,
                action=d.action,
                reward=d.reward,
                terminal=True,
            )
        else:
            next_joint_obs, _ = maddpg_joint(sim, -1, 0.0, self.agent.cfg.n_agents)
            tr = MaddpgTransition(
                joint_obs=joint_obs,
                joint_act=joint_act,
                obs=d.observation.as_array(),
                slot=d.bus_index,
                action=d.action,
                reward=d.reward,
                terminal=False,
                next_joint_obs=next_joint_obs,
                next_obs=decision.next_observation.as_array(),
            )
        self.agent.push(tr)
