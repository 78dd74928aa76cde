"""Discrete soft actor-critic training loop at desk scale.

One shared policy and one shared privileged critic across agents (CTDE
with parameter sharing).  The critic target is the expected soft value of
the next action set under the current policy; the temperature follows a
per-sample target entropy of 0.01 * log(k) where k is that sample's
action-set size.  The paper-mirroring hyperparameters are the TrainConfig
defaults; run configs may override the throughput knobs for small maps.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import torch

from .episode import CriticObs, PolicyObs, Simulator
from .neural import CriticNet, NetConfig, PolicyNet, save_checkpoint, load_checkpoint
from .world import MapGenParams, OccupancyGrid, SensorSpec, generate_map

RETURN_BOUND = 128 * 2.3 + 10.0 + 50.0  # gamma=1, bounded by truncation + slack


@dataclass
class TrainConfig:
    episode_len: int = 128
    gamma: float = 1.0
    batch: int = 256
    buffer: int = 10_000
    warmup: int = 2_000
    lr: float = 1e-5
    target_update: int = 256
    entropy_scale: float = 0.01   # target entropy = entropy_scale * log(k)
    grad_clip: float = 5.0
    episodes: int = 3000
    update_cap: int = 64          # updates per episode = min(epochs, cap)
    agents: int = 2
    seed: int = 0
    torch_threads: int = 1
    checkpoint_every: int = 200
    eval_every: int = 100
    eval_maps: int = 8
    net: NetConfig = field(default_factory=NetConfig)

    def __post_init__(self):
        if self.gamma != 1.0:
            raise ValueError("gamma is fixed at 1.0")
        for name in ("episode_len", "batch", "buffer", "warmup", "target_update",
                     "episodes", "agents"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class Transition:
    obs: PolicyObs
    cobs: CriticObs
    action: int
    reward: float
    done: bool
    next_obs: PolicyObs | None
    next_cobs: CriticObs | None

    def __post_init__(self):
        if self.action >= len(self.obs.pair_nodes):
            raise ValueError("action index out of range for its action set")
        if not self.done and self.next_obs is None:
            raise ValueError("non-terminal transition needs a successor observation")


class ReplayBuffer:
    """FIFO ring of transitions."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.items: list[Transition] = []
        self._next = 0

    def __len__(self) -> int:
        return len(self.items)

    def push(self, t: Transition) -> None:
        if len(self.items) < self.capacity:
            self.items.append(t)
        else:
            self.items[self._next] = t
            self._next = (self._next + 1) % self.capacity

    def sample(self, rng: np.random.Generator, batch: int) -> list[Transition]:
        idx = rng.integers(len(self.items), size=batch)
        return [self.items[i] for i in idx]


# ---------------------------------------------------------------------------
# Collation: pad variable node/action counts, rebuild attention masks.

def _mask_from_edges(n_pad: int, n: int, edges: np.ndarray) -> torch.Tensor:
    m = torch.eye(n_pad, dtype=torch.bool)
    if edges.size:
        e = torch.from_numpy(edges.astype(np.int64))
        m[e[:, 0], e[:, 1]] = True
        m[e[:, 1], e[:, 0]] = True
    return m


def collate_policy(obs_list: list[PolicyObs]):
    b = len(obs_list)
    n_max = max(o.feats.shape[0] for o in obs_list)
    k_max = max(len(o.pair_nodes) for o in obs_list)
    fdim = obs_list[0].feats.shape[1]
    feats = torch.zeros(b, n_max, fdim)
    bins = torch.zeros(b, n_max, 36)
    mask = torch.zeros(b, n_max, n_max, dtype=torch.bool)
    cur = torch.zeros(b, dtype=torch.long)
    pair_nodes = torch.zeros(b, k_max, dtype=torch.long)
    pair_valid = torch.zeros(b, k_max, dtype=torch.bool)
    pair_feats = torch.zeros(b, k_max, 72)
    for i, o in enumerate(obs_list):
        n = o.feats.shape[0]
        k = len(o.pair_nodes)
        feats[i, :n] = torch.from_numpy(o.feats)
        bins[i, :n] = torch.from_numpy(o.bins)
        mask[i] = _mask_from_edges(n_max, n, o.edges)
        cur[i] = int(o.cur)
        pair_nodes[i, :k] = torch.from_numpy(o.pair_nodes.astype(np.int64))
        pair_valid[i, :k] = True
        pair_feats[i, :k] = torch.from_numpy(o.pair_feats)
    return feats, bins, mask, cur, pair_nodes, pair_valid, pair_feats


def collate_critic(obs_list: list[CriticObs]):
    b = len(obs_list)
    n_max = max(o.feats.shape[0] for o in obs_list)
    k_max = max(len(o.pair_nodes) for o in obs_list)
    m_max = max(len(o.others) for o in obs_list)
    fdim = obs_list[0].feats.shape[1]
    feats = torch.zeros(b, n_max, fdim)
    bins = torch.zeros(b, n_max, 36)
    mask = torch.zeros(b, n_max, n_max, dtype=torch.bool)
    cur = torch.zeros(b, dtype=torch.long)
    others = torch.full((b, m_max), -1, dtype=torch.long)
    pair_nodes = torch.zeros(b, k_max, dtype=torch.long)
    pair_valid = torch.zeros(b, k_max, dtype=torch.bool)
    pair_feats = torch.zeros(b, k_max, 72)
    for i, o in enumerate(obs_list):
        n = o.feats.shape[0]
        k = len(o.pair_nodes)
        feats[i, :n] = torch.from_numpy(o.feats)
        bins[i, :n] = torch.from_numpy(o.bins)
        mask[i] = _mask_from_edges(n_max, n, o.edges)
        cur[i] = int(o.cur)
        if len(o.others):
            others[i, :len(o.others)] = torch.from_numpy(o.others.astype(np.int64))
        pair_nodes[i, :k] = torch.from_numpy(o.pair_nodes.astype(np.int64))
        pair_valid[i, :k] = True
        pair_feats[i, :k] = torch.from_numpy(o.pair_feats)
    return feats, bins, mask, cur, others, pair_nodes, pair_valid, pair_feats


def obs_to_tensors(obs: PolicyObs):
    return collate_policy([obs])


# ---------------------------------------------------------------------------
# Episode collection.

def sample_actions(net: PolicyNet, sim: Simulator, rng: np.random.Generator,
                   stochastic: bool = True) -> list[int]:
    idxs = []
    with torch.no_grad():
        for i in range(sim.n_agents):
            logp = net(*obs_to_tensors(sim.policy_obs(i))).squeeze(0)
            if stochastic:
                p = logp.exp().numpy().astype(np.float64)
                p = np.maximum(p, 0)
                p /= p.sum()
                idxs.append(int(rng.choice(len(p), p=p)))
            else:
                idxs.append(int(torch.argmax(logp)))
    return idxs


def collect_episode(grid: OccupancyGrid, sensor: SensorSpec, n_agents: int,
                    net: PolicyNet, buffer: ReplayBuffer,
                    rng: np.random.Generator, max_epochs: int = 128,
                    stochastic: bool = True) -> dict:
    """Roll one episode, appending one transition per agent per epoch."""
    sim = Simulator(grid, sensor, n_agents, privileged=True, max_epochs=max_epochs)
    pending = None  # per-agent dicts waiting for their successor observation
    added = 0
    while not sim.done:
        sim.ensure_gt_pairs()
        obs = [sim.policy_obs(i) for i in range(n_agents)]
        cobs = [sim.critic_obs(i) for i in range(n_agents)]
        idxs = sample_actions(net, sim, rng, stochastic)
        choices = [sim.pairs[i][k] for i, k in enumerate(idxs)]
        resolved = sim.resolve(choices)
        gt_before = [a.gt_node for a in sim.agents]
        res = sim.step(resolved)
        gt_after = [a.gt_node for a in sim.agents]
        for i in range(n_agents):
            cobs[i].others = np.array(
                [v for j in range(n_agents) if j != i
                 for v in (gt_before[j], gt_after[j])], dtype=np.int32)
        if pending is not None:
            for i, rec in enumerate(pending):
                buffer.push(Transition(rec["obs"], rec["cobs"], rec["action"],
                                       rec["reward"], False, obs[i], cobs[i]))
                added += 1
        terminal = sim.done and sim.reason in ("success", "stalled")
        pending = [{"obs": obs[i], "cobs": cobs[i], "action": idxs[i],
                    "reward": res.rewards[i].total} for i in range(n_agents)]
        if sim.done:
            if terminal:
                for rec in pending:
                    buffer.push(Transition(rec["obs"], rec["cobs"], rec["action"],
                                           rec["reward"], True, None, None))
                    added += 1
            else:  # truncated: bootstrap from the final state
                for i, rec in enumerate(pending):
                    fobs = sim.policy_obs(i)
                    fcobs = sim.critic_obs(i)
                    fcobs.others = np.array(
                        [v for j in range(n_agents) if j != i
                         for v in (gt_after[j], gt_after[j])], dtype=np.int32)
                    buffer.push(Transition(rec["obs"], rec["cobs"], rec["action"],
                                           rec["reward"], False, fobs, fcobs))
                    added += 1
            pending = None
    return {
        "epochs": sim.epoch,
        "rho": sim.rho,
        "success": sim.reason == "success",
        "trajectory_length": float(sum(sim.epoch_costs)),
        "transitions": added,
    }


# ---------------------------------------------------------------------------
# SAC update.

class Trainer:
    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        torch.manual_seed(cfg.seed)
        self.policy = PolicyNet(cfg.net)
        self.critic = CriticNet(cfg.net)
        self.critic_target = CriticNet(cfg.net)
        self.critic_target.load_state_dict(self.critic.state_dict())
        for p in self.critic_target.parameters():
            p.requires_grad_(False)
        # Start the temperature well below the reward scale (~1 per step);
        # auto-tuning drives it toward the 0.01*log(k) entropy target anyway.
        self.log_alpha = torch.full((1,), math.log(0.1), requires_grad=True)
        self.opt_policy = torch.optim.Adam(self.policy.parameters(), lr=cfg.lr)
        self.opt_critic = torch.optim.Adam(self.critic.parameters(), lr=cfg.lr)
        self.opt_alpha = torch.optim.Adam([self.log_alpha], lr=max(cfg.lr, 1e-4))
        self.updates = 0

    @property
    def alpha(self) -> float:
        return float(self.log_alpha.exp())

    def sac_update(self, buffer: ReplayBuffer, rng: np.random.Generator) -> dict:
        """One gradient step on critic, policy and temperature."""
        cfg = self.cfg
        if len(buffer) < cfg.warmup:
            raise RuntimeError(f"buffer {len(buffer)} below warmup {cfg.warmup}")
        batch = buffer.sample(rng, cfg.batch)
        alpha = self.log_alpha.exp().detach()

        # Soft target from the successor action set under the current policy.
        live = [i for i, t in enumerate(batch) if not t.done]
        targets = torch.zeros(len(batch))
        if live:
            with torch.no_grad():
                np_obs = collate_policy([batch[i].next_obs for i in live])
                logp_n = self.policy(*np_obs)
                nc_obs = collate_critic([batch[i].next_cobs for i in live])
                q_n = self.critic_target(*nc_obs)
                valid = np_obs[5]
                pi_n = torch.where(valid, logp_n.exp(), torch.zeros_like(logp_n))
                v_n = (pi_n * (q_n - alpha * torch.where(valid, logp_n,
                                                         torch.zeros_like(logp_n)))).sum(-1)
                targets[live] = cfg.gamma * v_n
        rewards = torch.tensor([t.reward for t in batch])
        y = rewards + targets
        if float(y.abs().max()) > RETURN_BOUND:
            raise RuntimeError(f"critic target {float(y.abs().max()):.1f} exceeds "
                               f"the gamma=1 truncation bound {RETURN_BOUND:.1f}")

        c_obs = collate_critic([t.cobs for t in batch])
        q_all = self.critic(*c_obs)
        actions = torch.tensor([t.action for t in batch], dtype=torch.long)
        q_taken = q_all.gather(1, actions.unsqueeze(1)).squeeze(1)
        critic_loss = torch.nn.functional.mse_loss(q_taken, y)
        self.opt_critic.zero_grad()
        critic_loss.backward()
        torch.nn.utils.clip_grad_norm_(self.critic.parameters(), cfg.grad_clip)
        self.opt_critic.step()

        p_obs = collate_policy([t.obs for t in batch])
        valid = p_obs[5]
        logp = self.policy(*p_obs)
        pi = torch.where(valid, logp.exp(), torch.zeros_like(logp))
        safe_logp = torch.where(valid, logp, torch.zeros_like(logp))
        with torch.no_grad():
            q_pi = self.critic(*c_obs)
        policy_loss = (pi * (alpha * safe_logp - q_pi)).sum(-1).mean()
        self.opt_policy.zero_grad()
        policy_loss.backward()
        torch.nn.utils.clip_grad_norm_(self.policy.parameters(), cfg.grad_clip)
        self.opt_policy.step()

        entropy = -(pi * safe_logp).sum(-1)
        k = valid.sum(-1).float()
        target_h = cfg.entropy_scale * torch.log(k)
        alpha_loss = self.log_alpha * (entropy - target_h).mean().detach()
        self.opt_alpha.zero_grad()
        alpha_loss.backward()
        self.opt_alpha.step()

        self.updates += 1
        if self.updates % cfg.target_update == 0:
            self.critic_target.load_state_dict(self.critic.state_dict())
        if not bool(torch.isfinite(critic_loss.detach()) and torch.isfinite(policy_loss.detach())):
            raise RuntimeError(
                f"non-finite loss (critic={float(critic_loss)}, policy={float(policy_loss)})")
        return {
            "critic_loss": float(critic_loss.detach()),
            "policy_loss": float(policy_loss.detach()),
            "alpha": self.alpha,
            "entropy": float(entropy.detach().mean()),
        }

    def save(self, path: str | Path, meta: dict,
             rng_states: dict | None = None) -> None:
        state = {}
        for prefix, module in (("policy.", self.policy), ("critic.", self.critic)):
            for k, v in module.state_dict().items():
                state[prefix + k] = v
        state["log_alpha"] = self.log_alpha.detach()
        state["torch_rng"] = torch.get_rng_state().to(torch.float32)
        save_checkpoint(path, state, self.cfg.net.to_dict(),
                        {**meta, "kind": "trainer", "updates": self.updates,
                         "rng": rng_states or {}})

    def restore(self, path: str | Path) -> dict:
        state, config, meta = load_checkpoint(path)
        self.policy.load_state_dict(
            {k[len("policy."):]: v for k, v in state.items() if k.startswith("policy.")})
        self.critic.load_state_dict(
            {k[len("critic."):]: v for k, v in state.items() if k.startswith("critic.")})
        self.critic_target.load_state_dict(self.critic.state_dict())
        with torch.no_grad():
            self.log_alpha.copy_(state["log_alpha"])
        if "torch_rng" in state:
            torch.set_rng_state(state["torch_rng"].to(torch.uint8))
        self.updates = int(meta.get("updates", 0))
        return meta


def evaluate_policy(net: PolicyNet, maps: list[OccupancyGrid], sensor: SensorSpec,
                    n_agents: int, max_epochs: int = 128) -> dict:
    """Greedy-decoding evaluation; failures count at truncation length."""
    lengths, succ = [], 0
    for grid in maps:
        sim = Simulator(grid, sensor, n_agents, max_epochs=max_epochs)
        rng = np.random.default_rng(0)
        while not sim.done:
            idxs = sample_actions(net, sim, rng, stochastic=False)
            choices = [sim.pairs[i][k] for i, k in enumerate(idxs)]
            sim.step(sim.resolve(choices))
        lengths.append(sum(sim.epoch_costs))
        succ += sim.reason == "success"
    return {"mean_length": float(np.mean(lengths)), "success_rate": succ / len(maps)}


def train(cfg: TrainConfig, map_params: MapGenParams, sensor: SensorSpec,
          out_dir: str | Path, train_maps: int = 200,
          resume: str | Path | None = None) -> Path:
    """Full training run: curves CSV, periodic/best/final checkpoints.

    Returns the path of the checkpoint selected by validation (falls back
    to the final one when validation never ran).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    torch.set_num_threads(cfg.torch_threads)
    root = np.random.SeedSequence(cfg.seed)
    # Fixed stream purposes: 0=maps, 1=collection, 2=updates, 3=validation.
    maps_rng, collect_rng, update_rng, _ = [np.random.default_rng(s)
                                            for s in root.spawn(4)]
    pool = [generate_map(int(maps_rng.integers(2 ** 31)), map_params)
            for _ in range(train_maps)]
    val_maps = [generate_map(int(maps_rng.integers(2 ** 31)), map_params)
                for _ in range(cfg.eval_maps)]

    trainer = Trainer(cfg)
    start_ep = 0
    if resume:
        meta = trainer.restore(resume)
        start_ep = int(meta.get("episodes", 0))
        for name, gen in (("collect", collect_rng), ("update", update_rng)):
            if name in meta.get("rng", {}):
                gen.bit_generator.state = meta["rng"][name]
    buffer = ReplayBuffer(cfg.buffer)
    curves = out / "curves.csv"
    new_file = not curves.exists() or start_ep == 0
    best = {"score": math.inf, "path": None}
    t0 = time.time()

    with curves.open("w" if new_file else "a", newline="") as fh:
        wtr = csv.writer(fh)
        if new_file:
            wtr.writerow(["episode", "epochs", "rho", "success", "trajectory_length",
                          "buffer", "updates", "critic_loss", "policy_loss",
                          "alpha", "entropy", "wall_s"])
        for ep in range(start_ep, cfg.episodes):
            grid = pool[int(collect_rng.integers(len(pool)))]
            stats = collect_episode(grid, sensor, cfg.agents, trainer.policy,
                                    buffer, collect_rng, cfg.episode_len)
            losses = {"critic_loss": "", "policy_loss": "", "alpha": "", "entropy": ""}
            if len(buffer) >= cfg.warmup:
                n_up = min(stats["epochs"], cfg.update_cap)
                for _ in range(n_up):
                    losses = trainer.sac_update(buffer, update_rng)
            wtr.writerow([ep + 1, stats["epochs"], f"{stats['rho']:.4f}",
                          int(stats["success"]), f"{stats['trajectory_length']:.2f}",
                          len(buffer), trainer.updates,
                          losses["critic_loss"], losses["policy_loss"],
                          losses["alpha"], losses["entropy"],
                          f"{time.time() - t0:.1f}"])
            fh.flush()
            done_ep = ep + 1
            if cfg.eval_every and done_ep % cfg.eval_every == 0:
                ev = evaluate_policy(trainer.policy, val_maps, sensor, cfg.agents,
                                     cfg.episode_len)
                score = ev["mean_length"] + (1 - ev["success_rate"]) * 1000
                if score < best["score"]:
                    best["score"] = score
                    best["path"] = out / "policy_best.ckpt"
                    _save_policy_ckpt(trainer, best["path"], done_ep, ev)
            if done_ep % cfg.checkpoint_every == 0 or done_ep == cfg.episodes:
                trainer.save(out / "trainer_last.ckpt", {"episodes": done_ep},
                             {"collect": collect_rng.bit_generator.state,
                              "update": update_rng.bit_generator.state})
    final = out / "policy_final.ckpt"
    _save_policy_ckpt(trainer, final, cfg.episodes, {})
    return Path(best["path"]) if best["path"] else final


def _save_policy_ckpt(trainer: Trainer, path: Path, episodes: int, extra: dict) -> None:
    save_checkpoint(path, trainer.policy.state_dict(), trainer.cfg.net.to_dict(),
                    {"episodes": episodes, "kind": "policy", **extra})
