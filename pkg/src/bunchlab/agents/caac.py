"""Credit-assigned actor-critic for asynchronous holding control.

One shared deterministic actor maps the local observation to a holding
strength in [0, 1].  Policy evaluation combines two critics:

* an ego critic scoring the agent's own state-action pair, and
* an event critic that approximates the marginal contribution of the other
  buses' interleaved arrivals: events inside the decision window are split
  into upstream (followers) and downstream (leaders) sets, each aggregated
  with its own attention block over 6-dim node features (observation,
  action, stop-gap, index-gap); the ego message plus the attended neighbor
  aggregate feed a shared head that maps the two sides' sum to a scalar
  correction.

The critic target bootstraps the sum of both critics at the bus's next
decision; when a side of the event graph is empty the aggregate falls back
to the ego message alone and its squared norm is penalized, which
regularizes the shared attention weights.  Disabling the event critic
altogether yields the independent actor-critic used as a baseline.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import ProtocolError, StateError
from ..events import EdgeFeature, EventLog, EventNode, NeighborSets, neighbor_sets, record_event
from ..env import EpisodeObserver, Observation, PendingDecision
from ..nn import (
    Adam,
    Mlp,
    ParameterSet,
    Tape,
    Tensor,
    add,
    concat,
    dense,
    leaky_relu,
    matmul,
    mean_all,
    mul,
    no_tape,
    scale,
    sigmoid,
    scatter_rows,
    segment_softmax,
    segment_sum,
    softmax_col,
    soft_update,
    square,
    sub,
    sum_all,
    sum_rows,
    take_rows,
    tanh,
)

EDGE_GAP_CLIP = 10.0  # vehicle index gaps are clipped here before entering networks
NODE_FEATURE_DIM = 6
OBS_DIM = 3


@dataclass(frozen=True)
class CaacConfig:
    gamma: float = 0.9
    actor_lr: float = 2e-4
    critic_lr: float = 1e-3
    tau: float = 0.005  # soft target blend
    batch_size: int = 128
    buffer_capacity: int = 2000
    sigma_start: float = 0.3  # exploration noise, decays linearly per episode
    sigma_end: float = 0.05
    explore_eps: float = 0.02  # probability of a uniform random action while training
    beta: float = 0.1  # empty-side L2 coefficient
    event_lr_scale: float = 0.1  # event critic learns slower than the ego critic
    u_bound: float = 0.5  # event-critic correction is tanh-bounded to this scale
    w: float = 0.2  # reward action weight (forwarded to RewardConfig)
    max_hold: float = 180.0
    hidden: int = 64
    att_dim: int = 32
    leaky_slope: float = 0.2
    update_every: int = 1
    critic_sweeps: int = 2  # critic gradient steps per update call
    actor_delay: int = 2  # actor/target updates every N critic updates
    actor_logit_reg: float = 5e-4  # keeps the sigmoid head out of its flat tails
    warmup: int = 600
    event_critic: bool = True

    def validate(self) -> None:
        if not (0.0 <= self.gamma < 1.0):
            raise ValueError("gamma must be in [0,1)")
        for name in ("actor_lr", "critic_lr", "beta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not (0.0 < self.tau <= 1.0):
            raise ValueError("tau must be in (0,1]")
        if self.batch_size < 1 or self.buffer_capacity < 1:
            raise ValueError("batch_size and buffer_capacity must be >= 1")
        if not (0.0 <= self.w <= 1.0):
            raise ValueError("w must be in [0,1]")


@dataclass
class Transition:
    obs: np.ndarray  # (3,)
    action: float
    reward: float
    up: np.ndarray  # (n_up, 6) neighbor features in the decision window
    down: np.ndarray  # (n_down, 6)
    terminal: bool
    next_obs: np.ndarray | None = None  # (3,) unless terminal
    next_up: np.ndarray | None = None  # (m, 6) for the following window
    next_down: np.ndarray | None = None

    def __post_init__(self):
        if self.terminal:
            if self.next_obs is not None or self.next_up is not None or self.next_down is not None:
                raise ValueError("terminal transitions carry no bootstrap fields")
        else:
            if self.next_obs is None or self.next_up is None or self.next_down is None:
                raise ValueError("non-terminal transitions need next_obs and next-window sets")


class ReplayBuffer:
    """FIFO ring of transitions with uniform without-replacement sampling."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self._items: list[Transition] = []
        self._next = 0

    def __len__(self) -> int:
        return len(self._items)

    def push(self, tr: Transition) -> None:
        if len(self._items) < self.capacity:
            self._items.append(tr)
        else:
            self._items[self._next] = tr
            self._next = (self._next + 1) % self.capacity

    def sample_batch(self, rng: np.random.Generator, batch_size: int) -> list[Transition]:
        if len(self._items) < batch_size:
            raise StateError(
                f"buffer holds {len(self._items)} transitions, need {batch_size}"
            )
        idx = rng.choice(len(self._items), size=batch_size, replace=False)
        return [self._items[i] for i in idx]


# ---------------------------------------------------------------------------
# Node features and the event critic.
# ---------------------------------------------------------------------------


def node_features(node: EventNode, edge: EdgeFeature | None = None) -> np.ndarray:
    """6-dim feature vector; the ego event pads the edge slots with zeros."""
    o = node.observation
    if edge is None:
        e1, e2 = 0.0, 0.0
    else:
        e1, e2 = edge.stop_gap_norm, min(float(edge.index_gap), EDGE_GAP_CLIP)
    return np.array(
        [o.occupancy_norm, o.forward_headway_norm, o.backward_headway_norm, node.action, e1, e2]
    )


def ego_feature(obs: np.ndarray, action: float) -> np.ndarray:
    return np.concatenate([obs, [action, 0.0, 0.0]])


def side_matrix(pairs: list[tuple[EventNode, EdgeFeature]]) -> np.ndarray:
    """Stack neighbor features into an (n, 6) matrix in canonical row order."""
    if not pairs:
        return np.zeros((0, NODE_FEATURE_DIM))
    return canonical_rows(np.stack([node_features(n, e) for n, e in pairs]))


def canonical_rows(mat: np.ndarray) -> np.ndarray:
    """Lexicographic row order, making aggregation independent of input order."""
    if mat.shape[0] < 2:
        return mat
    return mat[np.lexsort(mat[:, ::-1].T)]


class CaacNets:
    """Actor, ego critic, and (optionally) the event critic parameter sets."""

    def __init__(self, cfg: CaacConfig, rng: np.random.Generator | None, event_critic: bool):
        h, d = cfg.hidden, cfg.att_dim
        self.cfg = cfg
        self.event_critic = event_critic
        self.actor_ps = ParameterSet()
        self.actor = Mlp(self.actor_ps, rng, "actor", [OBS_DIM, h, h, 1], head="sigmoid")
        self.q_ps = ParameterSet()
        self.q = Mlp(self.q_ps, rng, "q", [OBS_DIM + 1, h, h, 1], head="linear")
        if event_critic:
            self.ev_ps = ParameterSet()
            bound = 1.0 / np.sqrt(NODE_FEATURE_DIM)
            sbound = 1.0 / np.sqrt(2 * d)
            for side in ("up", "down"):
                self.ev_ps.add(
                    f"{side}.att.w",
                    np.zeros((NODE_FEATURE_DIM, d)) if rng is None
                    else rng.uniform(-bound, bound, size=(NODE_FEATURE_DIM, d)),
                )
                self.ev_ps.add(
                    f"{side}.score.w",
                    np.zeros((2 * d, 1)) if rng is None
                    else rng.uniform(-sbound, sbound, size=(2 * d, 1)),
                )
                self.ev_ps.add(
                    f"{side}.score.b",
                    np.zeros((1,)) if rng is None else rng.uniform(-sbound, sbound, size=(1,)),
                )
            self.head = Mlp(self.ev_ps, rng, "head", [d, h, 1], head="linear")
            # The correction starts at exactly zero (pure ego critic) and
            # grows as the event critic learns; a randomly-initialized output
            # layer would inject window-size-correlated noise into the TD
            # targets from step one.
            self.ev_ps["head.l1.w"].data = np.zeros_like(self.ev_ps["head.l1.w"].data)
            self.ev_ps["head.l1.b"].data = np.zeros_like(self.ev_ps["head.l1.b"].data)
        else:
            self.ev_ps = None
            self.head = None

    def copy(self) -> "CaacNets":
        out = CaacNets(self.cfg, None, self.event_critic)
        out.actor_ps.load_values({k: t.data for k, t in self.actor_ps.items()})
        out.q_ps.load_values({k: t.data for k, t in self.q_ps.items()})
        if self.event_critic:
            out.ev_ps.load_values({k: t.data for k, t in self.ev_ps.items()})
        return out

    def actor_forward(self, obs: Tensor) -> Tensor:
        return self.actor.forward(obs)

    def q_forward(self, obs: Tensor, action: Tensor) -> Tensor:
        return self.q.forward(concat([obs, action], axis=1))


def _attend(ev_ps: ParameterSet, side: str, ego_h, H, slope: float):
    """Shared-weight attention over one side; returns (alpha, whe, WH)."""
    Wa = ev_ps[f"{side}.att.w"]
    ego2d = Tensor(np.asarray(ego_h, dtype=float).reshape(1, NODE_FEATURE_DIM))
    whe = matmul(ego2d, Wa)  # (1, d)
    n = H.shape[0]
    if n == 0:
        return None, whe, None
    Ht = Tensor(np.asarray(H, dtype=float))
    WH = matmul(Ht, Wa)  # (n, d)
    tiled = matmul(Tensor(np.ones((n, 1))), whe)  # ego message repeated per neighbor
    scores = dense(
        concat([tiled, WH], axis=1), ev_ps[f"{side}.score.w"], ev_ps[f"{side}.score.b"]
    )
    alpha = softmax_col(leaky_relu(scores, slope))  # (n, 1)
    return alpha, whe, WH


def attention_weights(ev_ps: ParameterSet, side: str, ego_h, H, slope: float = 0.2) -> Tensor:
    """Softmax attention coefficients of the ego event over one neighbor side."""
    if np.asarray(H).shape[0] == 0:
        raise ProtocolError("attention requires at least one neighbor event")
    alpha, _, _ = _attend(ev_ps, side, ego_h, H, slope)
    return alpha


def aggregate_side(
    ev_ps: ParameterSet, side: str, ego_h, H, slope: float = 0.2
) -> tuple[Tensor, bool]:
    """Aggregate one side: M = tanh(ego message) + tanh(attended neighbor sum).

    The attention weights are softmax-normalized, so the neighbor term is a
    weighted mean and M stays bounded no matter how many events fall in the
    window; an unbounded per-event sum lets the critic trade value against
    window length, which the holding action itself controls.  An empty side
    aggregates the ego message alone and is flagged so the training loss can
    penalize its norm.
    """
    H = canonical_rows(np.asarray(H, dtype=float).reshape(-1, NODE_FEATURE_DIM))
    alpha, whe, WH = _attend(ev_ps, side, ego_h, H, slope)
    if alpha is None:
        return tanh(whe), True
    attended = sum_rows(mul(alpha, WH))  # (1, d) softmax-weighted aggregate
    return add(tanh(whe), tanh(attended)), False


def event_critic_forward(
    nets: CaacNets, ego_h, up_H, down_H, slope: float = 0.2, u_bound: float = 0.5
) -> tuple[Tensor, Tensor, Tensor, bool, bool]:
    """(U, M_up, M_down, up_empty, down_empty) for one decision window.

    The head output is squashed to (-u_bound, u_bound): the correction term
    models the bounded marginal contribution of other agents' actions inside
    one window, and an unbounded head lets temporal-difference drift dump
    arbitrary value into it.  With no events on either side the correction is
    pinned to zero; the side aggregates are still produced so the loss can
    regularize them.
    """
    m_up, up_empty = aggregate_side(nets.ev_ps, "up", ego_h, up_H, slope)
    m_down, down_empty = aggregate_side(nets.ev_ps, "down", ego_h, down_H, slope)
    if up_empty and down_empty:
        u = Tensor(np.zeros((1, 1)))
    else:
        u = scale(tanh(nets.head.forward(add(m_up, m_down))), u_bound)
    return u, m_up, m_down, up_empty, down_empty


def inductive_return(q: Tensor, u: Tensor) -> Tensor:
    """Estimated return: ego critic plus event-critic correction."""
    return add(q, u)


def select_action(
    nets: CaacNets, obs: Observation, sigma: float, rng: np.random.Generator | None
) -> float:
    """Deterministic policy output plus clipped Gaussian exploration noise."""
    with no_tape():
        a = float(nets.actor_forward(Tensor(obs.as_array().reshape(1, OBS_DIM))).data[0, 0])
    if sigma > 0:
        a += float(rng.normal(0.0, sigma))
    return min(1.0, max(0.0, a))


# ---------------------------------------------------------------------------
# Batched event critic (one graph for the whole batch).
# ---------------------------------------------------------------------------


def _side_batch(ev_ps: ParameterSet, side: str, we: Tensor, mats: list[np.ndarray],
                slope: float, n_batch: int) -> tuple[Tensor, np.ndarray]:
    """Aggregate one side for every sample at once via contiguous segments."""
    counts = np.array([m.shape[0] for m in mats], dtype=np.intp)
    ego_term = tanh(we)
    pos = np.flatnonzero(counts)
    if pos.size == 0:
        return ego_term, counts == 0
    sizes = counts[pos]
    starts = np.concatenate(([0], np.cumsum(sizes)[:-1]))
    h_all = Tensor(np.concatenate([mats[i] for i in pos], axis=0))
    wh = matmul(h_all, ev_ps[f"{side}.att.w"])
    e_all = take_rows(we, np.repeat(pos, sizes))
    scores = leaky_relu(
        dense(concat([e_all, wh], axis=1), ev_ps[f"{side}.score.w"], ev_ps[f"{side}.score.b"]),
        slope,
    )
    alpha = segment_softmax(scores, starts)
    attended = tanh(segment_sum(mul(alpha, wh), starts))  # (K, d)
    return add(ego_term, scatter_rows(attended, pos, n_batch)), counts == 0


def event_critic_batch(
    nets: CaacNets,
    ego_feats: np.ndarray,
    up_mats: list[np.ndarray],
    down_mats: list[np.ndarray],
    slope: float = 0.2,
    u_bound: float = 0.5,
) -> tuple[Tensor, Tensor, Tensor, np.ndarray, np.ndarray]:
    """Batched equivalent of :func:`event_critic_forward` over B windows.

    Returns (U (B,1), M_up (B,d), M_down (B,d), up_empty, down_empty); rows
    whose both sides are empty have U pinned to zero.
    """
    n_batch = ego_feats.shape[0]
    ego_t = Tensor(np.asarray(ego_feats, dtype=float))
    we_up = matmul(ego_t, nets.ev_ps["up.att.w"])
    we_down = matmul(ego_t, nets.ev_ps["down.att.w"])
    m_up, up_empty = _side_batch(nets.ev_ps, "up", we_up, up_mats, slope, n_batch)
    m_down, down_empty = _side_batch(nets.ev_ps, "down", we_down, down_mats, slope, n_batch)
    u = scale(tanh(nets.head.forward(add(m_up, m_down))), u_bound)
    both = up_empty & down_empty
    if both.any():
        u = mul(u, Tensor((~both).astype(float).reshape(n_batch, 1)))
    return u, m_up, m_down, up_empty, down_empty


# ---------------------------------------------------------------------------
# Losses.
# ---------------------------------------------------------------------------


def critic_targets(nets_tar: CaacNets, batch: list[Transition], cfg: CaacConfig) -> np.ndarray:
    """TD targets y = r + gamma * (Q' + U') at the next decision, tape-free."""
    y = np.array([[tr.reward] for tr in batch])
    nt = [i for i, tr in enumerate(batch) if not tr.terminal]
    if not nt:
        return y
    with no_tape():
        next_obs = np.stack([batch[i].next_obs for i in nt])
        next_a = nets_tar.actor_forward(Tensor(next_obs)).data
        q_next = nets_tar.q_forward(Tensor(next_obs), Tensor(next_a)).data
        if nets_tar.event_critic:
            # The target's ego action at the next event comes from the target
            # policy; neighbor features keep the logged actions.
            ego_feats = np.concatenate([next_obs, next_a, np.zeros((len(nt), 2))], axis=1)
            u_t, _, _, _, _ = event_critic_batch(
                nets_tar,
                ego_feats,
                [batch[i].next_up for i in nt],
                [batch[i].next_down for i in nt],
                cfg.leaky_slope,
                cfg.u_bound,
            )
            u_next = u_t.data
        else:
            u_next = np.zeros((len(nt), 1))
    for k, i in enumerate(nt):
        y[i, 0] = batch[i].reward + cfg.gamma * (float(q_next[k, 0]) + float(u_next[k, 0]))
    return y


def critic_loss(
    nets: CaacNets,
    nets_tar: CaacNets,
    batch: list[Transition],
    cfg: CaacConfig,
) -> tuple[Tensor, dict]:
    """Mean squared TD error plus the empty-side aggregate penalty."""
    if not batch:
        raise ValueError("batch must be nonempty")
    y = critic_targets(nets_tar, batch, cfg)
    obs = np.stack([tr.obs for tr in batch])
    act = np.array([[tr.action] for tr in batch])
    q = nets.q_forward(Tensor(obs), Tensor(act))  # (B, 1)

    diag = {"mean_q": float(q.data.mean())}
    penalties = []
    if nets.event_critic:
        ego_feats = np.stack([ego_feature(tr.obs, tr.action) for tr in batch])
        u, m_up, m_down, up_empty, down_empty = event_critic_batch(
            nets, ego_feats, [tr.up for tr in batch], [tr.down for tr in batch],
            cfg.leaky_slope, cfg.u_bound,
        )
        g = inductive_return(q, u)
        diag["mean_u"] = float(u.data.mean())
        if cfg.beta != 0.0:
            if up_empty.any():
                mask = Tensor(up_empty.astype(float).reshape(-1, 1))
                penalties.append(sum_all(square(mul(m_up, mask))))
            if down_empty.any():
                mask = Tensor(down_empty.astype(float).reshape(-1, 1))
                penalties.append(sum_all(square(mul(m_down, mask))))
    else:
        g = q
        diag["mean_u"] = 0.0

    td = mean_all(square(sub(Tensor(y), g)))
    diag["td_loss"] = float(td.data)
    if penalties:
        pen = penalties[0]
        for p in penalties[1:]:
            pen = add(pen, p)
        loss = add(td, scale(pen, cfg.beta / len(batch)))
        diag["penalty"] = float(pen.data) / len(batch)
    else:
        loss = td
        diag["penalty"] = 0.0
    return loss, diag


def actor_objective(nets: CaacNets, batch: list[Transition], logit_reg: float = 0.0) -> Tensor:
    """Mean ego-critic score of the policy's own actions (to be maximized).

    A small penalty on the squared pre-sigmoid output keeps the policy head
    in its responsive range: once the sigmoid saturates, recovery gradients
    vanish and the policy freezes at an action extreme.
    """
    obs = Tensor(np.stack([tr.obs for tr in batch]))
    logits = nets.actor.forward_pre_head(obs)
    j = mean_all(nets.q_forward(obs, sigmoid(logits)))
    if logit_reg > 0.0:
        j = sub(j, scale(mean_all(square(logits)), logit_reg))
    return j


def actor_objective_grad(
    nets: CaacNets, batch: list[Transition], logit_reg: float = 0.0
) -> dict[str, np.ndarray]:
    """Ascent direction of the actor objective, critics held fixed."""
    nets.actor_ps.zero_grad()
    nets.q_ps.zero_grad()
    with Tape() as tape:
        j = actor_objective(nets, batch, logit_reg)
        tape.backward(j)
    grads = nets.actor_ps.gradients()
    nets.actor_ps.zero_grad()
    nets.q_ps.zero_grad()
    return grads


# ---------------------------------------------------------------------------
# Agent.
# ---------------------------------------------------------------------------


class CaacAgent:
    def __init__(self, cfg: CaacConfig, seed: int, event_critic: bool | None = None):
        cfg.validate()
        self.cfg = cfg
        self.seed = seed
        self.event_critic = cfg.event_critic if event_critic is None else event_critic
        ss = np.random.SeedSequence([seed, 0xCA])
        init_ss, explore_ss, batch_ss = ss.spawn(3)
        self.nets = CaacNets(cfg, np.random.default_rng(init_ss), self.event_critic)
        self.targets = self.nets.copy()
        self.explore_rng = np.random.default_rng(explore_ss)
        self.batch_rng = np.random.default_rng(batch_ss)
        self.buffer = ReplayBuffer(cfg.buffer_capacity)
        self.actor_opt = Adam(self.nets.actor_ps, cfg.actor_lr)
        self.q_opt = Adam(self.nets.q_ps, cfg.critic_lr)
        self.ev_opt = (
            Adam(self.nets.ev_ps, cfg.critic_lr * cfg.event_lr_scale)
            if self.event_critic
            else None
        )
        self.train_event_critic = self.event_critic
        self.step_count = 0

    @property
    def kind(self) -> str:
        return "caac" if self.event_critic else "iac"

    def snapshot_values(self) -> dict:
        """Copy of all network parameter values (online and target)."""
        snap = {
            "actor": {k: t.data.copy() for k, t in self.nets.actor_ps.items()},
            "q": {k: t.data.copy() for k, t in self.nets.q_ps.items()},
            "actor_tar": {k: t.data.copy() for k, t in self.targets.actor_ps.items()},
            "q_tar": {k: t.data.copy() for k, t in self.targets.q_ps.items()},
        }
        if self.event_critic:
            snap["ev"] = {k: t.data.copy() for k, t in self.nets.ev_ps.items()}
            snap["ev_tar"] = {k: t.data.copy() for k, t in self.targets.ev_ps.items()}
        return snap

    def restore_values(self, snap: dict) -> None:
        self.nets.actor_ps.load_values(snap["actor"])
        self.nets.q_ps.load_values(snap["q"])
        self.targets.actor_ps.load_values(snap["actor_tar"])
        self.targets.q_ps.load_values(snap["q_tar"])
        if self.event_critic:
            self.nets.ev_ps.load_values(snap["ev"])
            self.targets.ev_ps.load_values(snap["ev_tar"])

    def act(self, obs: Observation, sigma: float = 0.0) -> float:
        return select_action(self.nets, obs, sigma, self.explore_rng)

    def act_explore(self, obs: Observation, sigma: float) -> float:
        """Training-time action: uniform over [0,1] until the replay warmup
        is filled (so the first critic fits see the whole action range), then
        the policy plus Gaussian noise, with a small uniform-action floor that
        keeps the critic's action coverage alive once the policy narrows."""
        if len(self.buffer) < self.cfg.warmup:
            return float(self.explore_rng.uniform(0.0, 1.0))
        u = float(self.explore_rng.uniform(0.0, 1.0))
        if u < self.cfg.explore_eps:
            return float(self.explore_rng.uniform(0.0, 1.0))
        return self.act(obs, sigma)

    def ready(self) -> bool:
        return len(self.buffer) >= max(self.cfg.batch_size, self.cfg.warmup)

    def update(self) -> dict | None:
        if not self.ready():
            return None
        cfg = self.cfg
        for _ in range(cfg.critic_sweeps):
            batch = self.buffer.sample_batch(self.batch_rng, cfg.batch_size)
            self.nets.q_ps.zero_grad()
            if self.event_critic:
                self.nets.ev_ps.zero_grad()
            with Tape() as tape:
                loss, diag = critic_loss(self.nets, self.targets, batch, cfg)
                tape.backward(loss)
            self.q_opt.step(self.nets.q_ps.gradients())
            if self.event_critic and self.train_event_critic:
                self.ev_opt.step(self.nets.ev_ps.gradients())

        self.step_count += 1
        if self.step_count % cfg.actor_delay == 0:
            grads = actor_objective_grad(self.nets, batch, cfg.actor_logit_reg)
            self.actor_opt.step({k: -g for k, g in grads.items()})
            soft_update(self.targets.actor_ps, self.nets.actor_ps, cfg.tau)
            soft_update(self.targets.q_ps, self.nets.q_ps, cfg.tau)
            if self.event_critic and self.train_event_critic:
                soft_update(self.targets.ev_ps, self.nets.ev_ps, cfg.tau)
        diag["critic_loss"] = float(loss.data)
        return diag


# ---------------------------------------------------------------------------
# Transition collection from the asynchronous decision stream.
# ---------------------------------------------------------------------------


class TransitionCollector(EpisodeObserver):
    """Builds replay transitions from finalized decisions.

    A decision's transition is stored only once the *following* decision of
    the same bus has been finalized, so that the bootstrap window's neighbor
    sets exist.  Completion is additionally deferred until the clock passes
    the window end, which guarantees that same-instant arrivals of
    higher-index buses are already in the event log.
    """

    def __init__(self, buffer: ReplayBuffer, n_stops: int):
        self.buffer = buffer
        self.n_stops = n_stops
        self.log = EventLog()
        self._last: dict[int, PendingDecision] = {}
        self._deferred: list[tuple[float, PendingDecision, PendingDecision | None]] = []
        self.completed = 0

    def _window_sets(self, d: PendingDecision) -> NeighborSets:
        if d.t_next <= d.t:
            # Horizon-truncated straggler: feedback landed at its own decision
            # instant, so the window is empty.
            return NeighborSets(upstream=[], downstream=[], window=(d.t, d.t))
        return neighbor_sets(self.log, d.bus_index, d.t, d.t_next, d.stop, self.n_stops)

    def _emit(self, d: PendingDecision, nxt: PendingDecision | None) -> None:
        sets = self._window_sets(d)
        if nxt is None:
            tr = Transition(
                obs=d.observation.as_array(),
                action=d.action,
                reward=d.reward,
                up=side_matrix(sets.upstream),
                down=side_matrix(sets.downstream),
                terminal=True,
            )
        else:
            nsets = self._window_sets(nxt)
            tr = Transition(
                obs=d.observation.as_array(),
                action=d.action,
                reward=d.reward,
                up=side_matrix(sets.upstream),
                down=side_matrix(sets.downstream),
                terminal=False,
                next_obs=d.next_observation.as_array(),
                next_up=side_matrix(nsets.upstream),
                next_down=side_matrix(nsets.downstream),
            )
        self.buffer.push(tr)
        self.completed += 1

    def _flush(self, now: float | None) -> None:
        keep = []
        for ready_time, d, nxt in self._deferred:
            if now is None or ready_time < now:
                self._emit(d, nxt)
            else:
                keep.append((ready_time, d, nxt))
        self._deferred = keep

    def on_clock(self, sim, t: float) -> None:
        self._flush(t)

    def on_event(self, sim, node: EventNode) -> None:
        record_event(self.log, node)

    def on_finalized(self, sim, decision: PendingDecision) -> None:
        prev = self._last.pop(decision.bus_index, None)
        if prev is not None:
            # prev's bootstrap needs decision's full window in the log
            self._deferred.append((decision.t_next, prev, decision))
        if decision.terminal:
            # Horizon-truncated decisions are not stored: treating a cutoff as
            # a real terminal teaches the critic that long holds pay off by
            # running out the clock.
            if not decision.truncated:
                self._deferred.append((decision.t_next, decision, None))
        else:
            self._last[decision.bus_index] = decision

    def on_episode_end(self, sim) -> None:
        self._flush(None)
        self._last.clear()
