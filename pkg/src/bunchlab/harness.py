"""Experiment orchestration: train, evaluate, transfer, plot.

All randomness in a run derives from the experiment seed: per-episode demand
scales, simulation seeds, network initialization, exploration noise, and
replay sampling each use a tagged child of that seed, so a run is exactly
reproducible from its configuration alone.  Evaluation always pairs each
(seed, demand scale) with a no-control reference episode on the identical
simulation, and reports deltas against it.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field, fields, replace
from multiprocessing import get_context
from pathlib import Path

import numpy as np

from .agents import (
    CaacAgent,
    CaacConfig,
    MaddpgAgent,
    MaddpgCollector,
    MaddpgConfig,
    TransitionCollector,
    fh_policy,
    nc_policy,
)
from .env import EpisodeObserver, RewardConfig, drive_episode, rollout_episode, write_decision_csv
from .errors import CheckpointFormatError, ConfigurationError
from .metrics import EpisodeMetrics, metrics_from_summary, write_metrics_csv
from .nn.serialize import FORMAT_VERSION, params_from_doc, params_to_doc
from .routes import DemandProfile, RouteConfig, load_route
from .sim import build_simulation, write_event_csv, write_passenger_csv
from .svgplot import emit_trajectory_svg

POLICIES = ("nc", "fh", "iac", "maddpg", "caac")

_SCALE_TAG = 0x5C
_SIM_TAG = 0x51
_TRAIN_SCALE_TAG = 0x7C
_TRAIN_SIM_TAG = 0x71


@dataclass
class ExperimentConfig:
    route: str = "r1s"
    policy: str = "caac"
    episodes: int = 250
    seeds: tuple[int, ...] = (0,)
    demand_scale_range: tuple[float, float] = (0.8, 1.2)
    out_dir: str = "runs"
    checkpoint: str | None = None
    desk_scale: bool = False
    checkpoint_every: int = 50
    jobs: int = 1
    dump_logs: bool = False
    resume: bool = False
    agent_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.episodes < 1:
            raise ConfigurationError("episodes must be >= 1")
        if not self.seeds:
            raise ConfigurationError("seeds must be nonempty")
        lo, hi = self.demand_scale_range
        if not (0 < lo <= hi):
            raise ConfigurationError("demand scale range must satisfy 0 < lo <= hi")


def _derived_seed(*tags: int) -> int:
    return int(np.random.SeedSequence(list(tags)).generate_state(1)[0])


def demand_scale_for(seed: int, lo: float, hi: float, tag: int = _SCALE_TAG) -> float:
    rng = np.random.default_rng(np.random.SeedSequence([seed, tag]))
    return float(rng.uniform(lo, hi))


def _filtered_overrides(cls, overrides: dict) -> dict:
    names = {f.name for f in fields(cls)}
    unknown = set(overrides) - names
    if unknown:
        raise ConfigurationError(f"unknown agent options {sorted(unknown)} for {cls.__name__}")
    return dict(overrides)


def build_agent(policy: str, route_cfg: RouteConfig, overrides: dict, seed: int):
    if policy in ("caac", "iac"):
        base = {"max_hold": route_cfg.max_hold, "event_critic": policy == "caac"}
        base.update(_filtered_overrides(CaacConfig, overrides))
        base["event_critic"] = policy == "caac"
        return CaacAgent(CaacConfig(**base), seed)
    if policy == "maddpg":
        base = {"n_agents": route_cfg.n_services}
        base.update(_filtered_overrides(MaddpgConfig, overrides))
        return MaddpgAgent(MaddpgConfig(**base), seed)
    raise ConfigurationError(f"policy {policy!r} is not trainable")


class _TrainingObserver(EpisodeObserver):
    """Feeds the collector and runs one gradient update per decision batch."""

    def __init__(self, agent, collector: EpisodeObserver, update_every: int):
        self.agent = agent
        self.collector = collector
        self.update_every = max(1, update_every)
        self.decisions = 0
        self.updates = 0
        self.loss_sum = 0.0

    def on_clock(self, sim, t):
        self.collector.on_clock(sim, t)

    def on_event(self, sim, node):
        self.collector.on_event(sim, node)

    def on_finalized(self, sim, decision):
        self.collector.on_finalized(sim, decision)

    def on_episode_end(self, sim):
        self.collector.on_episode_end(sim)

    def on_decision(self, sim, decision):
        self.collector.on_decision(sim, decision)
        self.decisions += 1
        if self.decisions % self.update_every == 0:
            diag = self.agent.update()
            if diag is not None:
                self.updates += 1
                self.loss_sum += diag.get("critic_loss", 0.0)


CURVE_CSV_COLUMNS = (
    "episode",
    "demand_scale",
    "sigma",
    "mean_reward",
    "aht",
    "awt",
    "aod",
    "critic_loss",
    "updates",
)

_VAL_TAG = 0x7A
VALIDATION_SEEDS = 3  # greedy episodes used to score candidate snapshots
CANDIDATE_EVERY = 5  # snapshot cadence (episodes) for candidate selection


def _sigma_at(agent_cfg, episode: int, episodes: int) -> float:
    s0, s1 = agent_cfg.sigma_start, agent_cfg.sigma_end
    if episodes <= 1:
        return s0
    return s0 + (s1 - s0) * episode / (episodes - 1)


def _validation_score(agent, route_cfg, demand, rcfg, train_seed: int) -> float:
    """Mean greedy reward over the held-out validation episodes."""
    scores = []
    for k in range(VALIDATION_SEEDS):
        sim_seed = _derived_seed(train_seed, _VAL_TAG, k)
        sim = build_simulation(route_cfg, demand, sim_seed)
        _d, summary = rollout_episode(sim, lambda obs: agent.act(obs, 0.0), rcfg)
        rewards = [d.reward for d in summary.decisions]
        scores.append(float(np.mean(rewards)) if rewards else 0.0)
    return float(np.mean(scores))


def train_one_seed(
    route_name: str,
    policy: str,
    seed: int,
    episodes: int,
    out_dir: str | Path,
    desk_scale: bool = False,
    demand_scale_range: tuple[float, float] = (0.8, 1.2),
    agent_overrides: dict | None = None,
    checkpoint_every: int = 50,
    resume: bool = False,
) -> Path:
    """Train one agent; returns the final checkpoint path."""
    if policy not in ("caac", "iac", "maddpg"):
        raise ConfigurationError(f"policy {policy!r} is not trainable")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    route_cfg, demand = load_route(route_name, desk_scale)
    agent = build_agent(policy, route_cfg, agent_overrides or {}, seed)
    cfg = agent.cfg
    rcfg = RewardConfig(w=getattr(cfg, "w", 0.2), gamma=cfg.gamma)

    final_path = out_dir / f"{policy}_seed{seed}.json"
    curve_path = out_dir / f"{policy}_seed{seed}_curve.csv"
    start_episode = 0
    curve_rows: list[list] = []
    if resume and final_path.exists():
        agent, meta = load_checkpoint(final_path, expected_kind=agent.kind)
        start_episode = meta.get("episode", 0) + 1
        if curve_path.exists():
            with open(curve_path, newline="") as fh:
                curve_rows = [row for row in csv.reader(fh)][1:]
        if start_episode >= episodes:
            return final_path

    scale_rng = np.random.default_rng(np.random.SeedSequence([seed, _TRAIN_SCALE_TAG]))
    # Replay scale draws consumed by already-completed episodes.
    for _ in range(start_episode):
        scale_rng.uniform(*demand_scale_range)

    # Candidate snapshots scored on held-out greedy validation episodes; the
    # saved model is the best-scoring one, which shields the result from
    # late-training policy drift.
    candidates: list[tuple[int, dict]] = []
    for ep in range(start_episode, episodes):
        sigma = _sigma_at(cfg, ep, episodes)
        scale = float(scale_rng.uniform(*demand_scale_range))
        sim_seed = _derived_seed(seed, _TRAIN_SIM_TAG, ep)
        sim = build_simulation(route_cfg, demand.scaled(scale), sim_seed)
        if policy == "maddpg":
            collector = MaddpgCollector(agent)
        else:
            collector = TransitionCollector(agent.buffer, route_cfg.n_stops)
        observer = _TrainingObserver(agent, collector, cfg.update_every)
        summary = drive_episode(sim, rcfg, lambda obs, d: agent.act_explore(obs, sigma), observer)
        m = metrics_from_summary(summary)
        rewards = [d.reward for d in summary.decisions]
        curve_rows.append(
            [
                ep,
                repr(scale),
                repr(sigma),
                repr(float(np.mean(rewards)) if rewards else 0.0),
                repr(m.aht),
                repr(m.awt),
                repr(m.aod),
                repr(observer.loss_sum / observer.updates if observer.updates else 0.0),
                observer.updates,
            ]
        )
        if (ep + 1) % CANDIDATE_EVERY == 0 or ep + 1 == episodes:
            candidates.append((ep, agent.snapshot_values()))
        if checkpoint_every and (ep + 1) % checkpoint_every == 0 and ep + 1 < episodes:
            save_checkpoint(agent, final_path, route_name=route_name, episode=ep)
    if len(candidates) > 1:
        scored = []
        for ep, snap in candidates:
            agent.restore_values(snap)
            scored.append((_validation_score(agent, route_cfg, demand, rcfg, seed), ep, snap))
        best_score, best_ep, best_snap = max(scored, key=lambda x: (x[0], x[1]))
        agent.restore_values(best_snap)
    save_checkpoint(agent, final_path, route_name=route_name, episode=episodes - 1)
    with open(curve_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CURVE_CSV_COLUMNS)
        writer.writerows(curve_rows)
    return final_path


def _train_worker(kwargs: dict) -> str:
    return str(train_one_seed(**kwargs))


def cmd_train(config: ExperimentConfig) -> list[Path]:
    """Train every seed (optionally in parallel worker processes)."""
    jobs = []
    for seed in config.seeds:
        jobs.append(
            dict(
                route_name=config.route,
                policy=config.policy,
                seed=seed,
                episodes=config.episodes,
                out_dir=config.out_dir,
                desk_scale=config.desk_scale,
                demand_scale_range=config.demand_scale_range,
                agent_overrides=config.agent_overrides,
                checkpoint_every=config.checkpoint_every,
                resume=config.resume,
            )
        )
    if config.jobs > 1 and len(jobs) > 1:
        with get_context("spawn").Pool(min(config.jobs, len(jobs))) as pool:
            paths = pool.map(_train_worker, jobs)
        return [Path(p) for p in paths]
    return [train_one_seed(**kw) for kw in jobs]


# ---------------------------------------------------------------------------
# Checkpoints.
# ---------------------------------------------------------------------------


def _rng_state(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state


def save_checkpoint(agent, path: str | Path, route_name: str = "", episode: int = -1) -> None:
    if isinstance(agent, CaacAgent):
        nets = {
            "actor": params_to_doc(agent.nets.actor_ps),
            "ego_critic": params_to_doc(agent.nets.q_ps),
        }
        targets = {
            "actor": params_to_doc(agent.targets.actor_ps),
            "ego_critic": params_to_doc(agent.targets.q_ps),
        }
        if agent.event_critic:
            nets["event_critic"] = params_to_doc(agent.nets.ev_ps)
            targets["event_critic"] = params_to_doc(agent.targets.ev_ps)
        optim = {
            "actor": agent.actor_opt.state_dict(),
            "ego_critic": agent.q_opt.state_dict(),
        }
        if agent.event_critic:
            optim["event_critic"] = agent.ev_opt.state_dict()
        doc = {
            "format_version": FORMAT_VERSION,
            "kind": agent.kind,
            "seed": agent.seed,
            "step": agent.step_count,
            "episode": episode,
            "route": route_name,
            "config": asdict(agent.cfg),
            "nets": nets,
            "targets": targets,
            "optim": _optim_doc(optim),
            "rng": {"explore": _rng_state(agent.explore_rng), "batch": _rng_state(agent.batch_rng)},
        }
    elif isinstance(agent, MaddpgAgent):
        doc = {
            "format_version": FORMAT_VERSION,
            "kind": "maddpg",
            "seed": agent.seed,
            "step": agent.step_count,
            "episode": episode,
            "route": route_name,
            "config": asdict(agent.cfg),
            "nets": {
                "actor": params_to_doc(agent.nets.actor_ps),
                "critic": params_to_doc(agent.nets.critic_ps),
            },
            "targets": {
                "actor": params_to_doc(agent.targets.actor_ps),
                "critic": params_to_doc(agent.targets.critic_ps),
            },
            "optim": _optim_doc(
                {"actor": agent.actor_opt.state_dict(), "critic": agent.critic_opt.state_dict()}
            ),
            "rng": {"explore": _rng_state(agent.explore_rng), "batch": _rng_state(agent.batch_rng)},
        }
    else:
        raise CheckpointFormatError(f"cannot checkpoint object of type {type(agent).__name__}")
    Path(path).write_text(json.dumps(doc) + "\n")


def _optim_doc(states: dict) -> dict:
    out = {}
    for net, st in states.items():
        out[net] = {
            "t": st["t"],
            "m": {k: v.reshape(-1).tolist() for k, v in st["m"].items()},
            "v": {k: v.reshape(-1).tolist() for k, v in st["v"].items()},
        }
    return out


def _optim_from_doc(opt, doc: dict) -> None:
    opt.t = int(doc["t"])
    for k in opt.m:
        opt.m[k] = np.array(doc["m"][k], dtype=np.float64).reshape(opt.m[k].shape)
        opt.v[k] = np.array(doc["v"][k], dtype=np.float64).reshape(opt.v[k].shape)


def load_checkpoint(path: str | Path, expected_kind: str | None = None):
    """Rebuild an agent from a checkpoint; returns (agent, metadata)."""
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"cannot read checkpoint {path}: {exc}")
    if not isinstance(doc, dict):
        raise CheckpointFormatError(f"checkpoint {path} must be a JSON object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointFormatError(
            f"unsupported format_version {version!r} in {path}, expected {FORMAT_VERSION}"
        )
    kind = doc.get("kind")
    if kind not in ("caac", "iac", "maddpg"):
        raise CheckpointFormatError(f"unknown checkpoint kind {kind!r} in {path}")
    if expected_kind is not None and kind != expected_kind:
        detail = ""
        if expected_kind == "caac" and "event_critic" not in doc.get("nets", {}):
            detail = ": the 'event_critic' network block is missing"
        raise CheckpointFormatError(
            f"checkpoint {path} holds a {kind!r} model, expected {expected_kind!r}{detail}"
        )
    try:
        if kind in ("caac", "iac"):
            cfg = CaacConfig(**doc["config"])
            agent = CaacAgent(cfg, int(doc.get("seed", 0)))
            agent.nets.actor_ps.load_values(params_from_doc(doc["nets"]["actor"]))
            agent.nets.q_ps.load_values(params_from_doc(doc["nets"]["ego_critic"]))
            agent.targets.actor_ps.load_values(params_from_doc(doc["targets"]["actor"]))
            agent.targets.q_ps.load_values(params_from_doc(doc["targets"]["ego_critic"]))
            if kind == "caac":
                if "event_critic" not in doc["nets"]:
                    raise CheckpointFormatError(
                        f"checkpoint {path}: the 'event_critic' network block is missing"
                    )
                agent.nets.ev_ps.load_values(params_from_doc(doc["nets"]["event_critic"]))
                agent.targets.ev_ps.load_values(params_from_doc(doc["targets"]["event_critic"]))
            if doc.get("optim"):
                _optim_from_doc(agent.actor_opt, doc["optim"]["actor"])
                _optim_from_doc(agent.q_opt, doc["optim"]["ego_critic"])
                if kind == "caac" and "event_critic" in doc["optim"]:
                    _optim_from_doc(agent.ev_opt, doc["optim"]["event_critic"])
        else:
            cfg = MaddpgConfig(**doc["config"])
            agent = MaddpgAgent(cfg, int(doc.get("seed", 0)))
            agent.nets.actor_ps.load_values(params_from_doc(doc["nets"]["actor"]))
            agent.nets.critic_ps.load_values(params_from_doc(doc["nets"]["critic"]))
            agent.targets.actor_ps.load_values(params_from_doc(doc["targets"]["actor"]))
            agent.targets.critic_ps.load_values(params_from_doc(doc["targets"]["critic"]))
            if doc.get("optim"):
                _optim_from_doc(agent.actor_opt, doc["optim"]["actor"])
                _optim_from_doc(agent.critic_opt, doc["optim"]["critic"])
    except CheckpointFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointFormatError(f"malformed checkpoint {path}: {exc}")
    if doc.get("rng"):
        agent.explore_rng.bit_generator.state = doc["rng"]["explore"]
        agent.batch_rng.bit_generator.state = doc["rng"]["batch"]
    agent.step_count = int(doc.get("step", 0))
    meta = {"episode": int(doc.get("episode", -1)), "route": doc.get("route", ""), "kind": kind}
    return agent, meta


# ---------------------------------------------------------------------------
# Evaluation and transfer.
# ---------------------------------------------------------------------------


def resolve_policy(policy: str, route_cfg: RouteConfig, checkpoint: str | Path | None):
    """A plain ``obs -> action`` callable plus a note for the metrics row."""
    note = ""
    if policy == "nc":
        return nc_policy, note
    if policy == "fh":
        return fh_policy(route_cfg), note
    if checkpoint is None:
        raise ConfigurationError(f"policy {policy!r} needs --checkpoint")
    agent, _meta = load_checkpoint(checkpoint, expected_kind=policy)
    if policy == "maddpg" and agent.cfg.n_agents != route_cfg.n_services:
        mode = "truncated" if route_cfg.n_services > agent.cfg.n_agents else "zero-padded"
        note = f"maddpg joint slots {mode}: fleet {route_cfg.n_services} vs trained {agent.cfg.n_agents}"
    return (lambda obs: agent.act(obs, 0.0)), note


def run_eval_episode(
    route_cfg: RouteConfig,
    demand: DemandProfile,
    policy,
    eval_seed: int,
    scale_range: tuple[float, float],
    reward_cfg: RewardConfig | None = None,
):
    """One deterministic evaluation episode at this seed's demand scale."""
    scale = demand_scale_for(eval_seed, *scale_range)
    sim_seed = _derived_seed(eval_seed, _SIM_TAG)
    sim = build_simulation(route_cfg, demand.scaled(scale), sim_seed)
    _decisions, summary = rollout_episode(sim, policy, reward_cfg or RewardConfig())
    return metrics_from_summary(summary), summary


def _dump_logs(summary, out_dir: Path, label: str) -> None:
    logs = out_dir / "logs"
    logs.mkdir(parents=True, exist_ok=True)
    write_event_csv(summary.events, logs / f"{label}_events.csv")
    write_decision_csv(summary.decisions, logs / f"{label}_decisions.csv")
    write_passenger_csv(summary.passengers, logs / f"{label}_passengers.csv")


def eval_rows(
    route_name: str,
    route_cfg: RouteConfig,
    demand: DemandProfile,
    policy_name: str,
    policy,
    note: str,
    seeds,
    scale_range,
    out_dir: Path | None = None,
    dump_logs: bool = False,
) -> list[dict]:
    """Metrics rows for one policy over the seed sweep, with deltas vs NC."""
    rows = []
    for seed in seeds:
        nc_metrics, nc_summary = run_eval_episode(route_cfg, demand, nc_policy, seed, scale_range)
        m, summary = (
            (nc_metrics, nc_summary)
            if policy_name == "nc"
            else run_eval_episode(route_cfg, demand, policy, seed, scale_range)
        )
        rows.append(
            {
                "route": route_name,
                "policy": policy_name,
                "seed": seed,
                "aht": m.aht,
                "awt": m.awt,
                "ajt": m.ajt,
                "att": m.att,
                "aod": m.aod,
                "d_awt": m.awt - nc_metrics.awt,
                "d_ajt": m.ajt - nc_metrics.ajt,
                "d_att": m.att - nc_metrics.att,
                "d_aod": m.aod - nc_metrics.aod,
                "note": note,
            }
        )
        if dump_logs and out_dir is not None:
            _dump_logs(summary, out_dir, f"{route_name}_{policy_name}_seed{seed}")
    return rows


def cmd_eval(config: ExperimentConfig) -> Path:
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    route_cfg, demand = load_route(config.route, config.desk_scale)
    policy, note = resolve_policy(config.policy, route_cfg, config.checkpoint)
    rows = eval_rows(
        config.route,
        route_cfg,
        demand,
        config.policy,
        policy,
        note,
        config.seeds,
        config.demand_scale_range,
        out_dir,
        config.dump_logs,
    )
    path = out_dir / "metrics.csv"
    write_metrics_csv(rows, path)
    return path


def cmd_transfer(
    config: ExperimentConfig,
    routes: list[str],
    policies: list[str],
    checkpoints: dict[str, str | None],
) -> Path:
    """Evaluate trained policies on other routes without any parameter update."""
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for route_name in routes:
        route_cfg, demand = load_route(route_name, config.desk_scale)
        for policy_name in policies:
            policy, note = resolve_policy(policy_name, route_cfg, checkpoints.get(policy_name))
            rows.extend(
                eval_rows(
                    route_name,
                    route_cfg,
                    demand,
                    policy_name,
                    policy,
                    note,
                    config.seeds,
                    config.demand_scale_range,
                    out_dir,
                    config.dump_logs,
                )
            )
    path = out_dir / "transfer.csv"
    write_metrics_csv(rows, path)
    return path


def cmd_plot(
    route_name: str,
    policy_name: str,
    seed: int,
    out_path: str | Path,
    checkpoint: str | None = None,
    desk_scale: bool = False,
    scale_range: tuple[float, float] = (0.8, 1.2),
    events_csv: str | None = None,
) -> Path:
    """Render a time-space trajectory diagram for one episode."""
    route_cfg, demand = load_route(route_name, desk_scale)
    if events_csv is not None:
        from .sim import read_event_csv

        events = read_event_csv(events_csv)
        title = f"{route_name}: replayed log"
    else:
        policy, _note = resolve_policy(policy_name, route_cfg, checkpoint)
        _m, summary = run_eval_episode(route_cfg, demand, policy, seed, scale_range)
        events = summary.events
        title = f"{route_name}: {policy_name}, seed {seed}"
    emit_trajectory_svg(
        events, out_path, route_cfg.stop_positions, route_cfg.capacity, title=title
    )
    return Path(out_path)
