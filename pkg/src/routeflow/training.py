"""Adversarial training loop: trajectory-balance generator updates against a
least-squares discriminator, with expert-refined positives.

Every random draw is derived statelessly from (master seed, epoch, step,
purpose), so a run resumed from any checkpoint continues bit-identically.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as F
from .core import Instance, build_distance_matrix, check_feasible, knn_sparsify
from .expert import HgsConfig, expert_refine
from .io import derive_seed, generate_uniform
from .neural import (
    Dims,
    DiscParams,
    EPSILON_GREEDY,
    GREEDY,
    SAMPLE,
    PolicyParams,
    Trajectory,
    backward_grads,
    batch_log_pf,
    batch_rollouts,
    best_of,
    build_edge_index,
    default_knn,
    disc_forward,
    disc_score,
    disc_traj_scores_t,
    encode,
    init_disc,
    init_params,
    lift_disc,
    lift_policy,
    node_features,
    rollout,
    trajectory_from_solution,
)


class TrainingDivergedError(RuntimeError):
    """A loss went non-finite; a diagnostic snapshot is written before raising."""


@dataclass(frozen=True)
class TrainConfig:
    n: int = 20
    instances_per_epoch: int = 200
    n_rollouts: int = 20  # stochastic rollouts per instance
    epsilon: float = 0.05
    update_ratio: int = 4  # generator updates per discriminator update
    lr_gen: float = 1e-3
    lr_disc: float = 1e-3
    lr_logz: float = 1e-2
    epochs: int = 1
    expert_hgs: HgsConfig = field(
        default_factory=lambda: HgsConfig(population_size=8, max_iterations=40)
    )
    m: int = 200  # decomposition target subproblem size
    dims: Dims = field(default_factory=Dims)
    k_nn: int | None = None  # None: quarter of the node count
    seed: int = 0
    checkpoint_every: int = 0  # epochs between checkpoints; 0 disables
    grad_clip: float = 10.0
    out_dir: str = "runs"

    def __post_init__(self):
        if self.update_ratio < 1:
            raise ValueError("update_ratio must be >= 1")
        if min(self.lr_gen, self.lr_disc, self.lr_logz) < 0:
            raise ValueError("learning rates must be non-negative")


class Adam:
    """Adam with per-parameter learning rates; moments are checkpointable."""

    def __init__(self, named_shapes, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {name: np.zeros(shape) for name, shape in named_shapes}
        self.v = {name: np.zeros(shape) for name, shape in named_shapes}

    def step(self, container, grads: dict[str, np.ndarray], lr_of) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for name, arr in container.named_arrays():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m[...] = self.beta1 * m + (1 - self.beta1) * g
            v[...] = self.beta2 * v + (1 - self.beta2) * g * g
            arr[...] = arr - lr_of(name) * (m / b1c) / (np.sqrt(v / b2c) + self.eps)

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "m": {k: v.tolist() for k, v in self.m.items()},
            "v": {k: v.tolist() for k, v in self.v.items()},
        }

    @classmethod
    def from_dict(cls, payload: dict, named_shapes) -> "Adam":
        opt = cls(named_shapes)
        opt.t = payload["t"]
        for k in opt.m:
            opt.m[k][...] = np.asarray(payload["m"][k])
            opt.v[k][...] = np.asarray(payload["v"][k])
        return opt


@dataclass
class TrainState:
    policy: PolicyParams
    disc: DiscParams
    opt_policy: Adam
    opt_disc: Adam
    epoch: int = 0
    history: list[dict] = field(default_factory=list)


def init_train_state(cfg: TrainConfig) -> TrainState:
    policy = init_params(cfg.dims, derive_seed(cfg.seed, 101))
    disc = init_disc(cfg.dims, derive_seed(cfg.seed, 102))
    return TrainState(
        policy,
        disc,
        Adam([(n, a.shape) for n, a in policy.named_arrays()]),
        Adam([(n, a.shape) for n, a in disc.named_arrays()]),
    )


# ---------------------------------------------------------------------------
# losses


def tb_loss(policy: PolicyParams, trajectories: list[Trajectory], disc_scores) -> float:
    """Mean squared trajectory-balance residual, (logZ + logPF - logPB - D)^2."""
    log_z = float(policy.log_z)
    residuals = [
        log_z + t.log_pf - t.log_pb - d for t, d in zip(trajectories, disc_scores)
    ]
    return float(np.mean(np.square(residuals)))


def disc_loss(neg_rewards, pos_rewards):
    """Least-squares adversarial loss: E[r_neg^2] + E[(1 - r_pos)^2].

    Accepts float lists or (T,) tensors; rewards must lie in (0, 1].
    """
    if isinstance(neg_rewards, F.Tensor) or isinstance(pos_rewards, F.Tensor):
        neg_sq = F.mean(F.square(neg_rewards))
        pos_sq = F.mean(F.square(1.0 - pos_rewards))
        return neg_sq + pos_sq
    neg = np.asarray(neg_rewards, dtype=np.float64)
    pos = np.asarray(pos_rewards, dtype=np.float64)
    return float(np.mean(neg**2) + np.mean((1.0 - pos) ** 2))


# ---------------------------------------------------------------------------
# sample generation


def _graph_for(instance: Instance, cfg: TrainConfig):
    dm = build_distance_matrix(instance)
    k = cfg.k_nn if cfg.k_nn is not None else default_knn(instance.n_nodes)
    return dm, knn_sparsify(dm, k)


def make_training_pair(policy: PolicyParams, instance: Instance, cfg: TrainConfig,
                       seed: int = 0) -> tuple[list[Trajectory], list[Trajectory]]:
    """Negatives: epsilon-greedy rollouts from the policy. Positive: the best
    negative's solution refined by the decomposition-augmented expert, replayed
    as a trajectory under the current policy."""
    dm, graph = _graph_for(instance, cfg)
    ctx = encode(policy, instance, graph, dm, training=True)
    neg = batch_rollouts(
        policy, instance, ctx, cfg.n_rollouts, EPSILON_GREEDY, seed, cfg.epsilon
    )
    seed_sol = best_of(neg).solution
    expert_cfg = HgsConfig(
        **{**_hgs_dict(cfg.expert_hgs), "seed": derive_seed(seed, 7)}
    )
    refined = expert_refine(instance, seed_sol, cfg.m, expert_cfg, dm)
    report = check_feasible(instance, refined)
    if not report.feasible:
        raise TrainingDivergedError(f"expert produced infeasible solution: {report.violations}")
    pos = [trajectory_from_solution(policy, ctx, refined)]
    return neg, pos


def _hgs_dict(cfg: HgsConfig) -> dict:
    return {f: getattr(cfg, f) for f in cfg.__dataclass_fields__}


# ---------------------------------------------------------------------------
# updates


def _clip_grads(grads: dict[str, np.ndarray], clip: float) -> dict[str, np.ndarray]:
    total = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if clip > 0 and total > clip:
        scale = clip / total
        return {k: g * scale for k, g in grads.items()}
    return grads


def _check_finite(value: float, what: str, snapshot: dict, out_dir: str):
    if math.isfinite(value):
        return
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "divergence_snapshot.json")
    with open(path, "w") as fh:
        json.dump(snapshot | {"loss": repr(value), "where": what}, fh, indent=2)
    raise TrainingDivergedError(f"non-finite {what}; snapshot at {path}")


def generator_update(state: TrainState, instances, cfg: TrainConfig, seed: int) -> float:
    """One TB-loss gradient step on the generator; discriminator frozen."""
    lifted = lift_policy(state.policy)
    residual_parts = []
    traj_count = 0
    for idx, instance in enumerate(instances):
        dm, graph = _graph_for(instance, cfg)
        ctx = encode(state.policy, instance, graph, dm, training=True)
        # full sampling here: near-deterministic rollouts would let logZ alone
        # satisfy the balance condition on a single repeated trajectory
        trajs = batch_rollouts(
            state.policy, instance, ctx, cfg.n_rollouts, SAMPLE,
            derive_seed(seed, idx), cfg.epsilon,
        )
        matrix = disc_forward(state.disc, instance, ctx.ei, training=True)
        d_scores = np.array([disc_score(matrix, t) for t in trajs])
        feats = node_features(instance)
        log_pf = batch_log_pf(
            lifted, ctx.ei, feats, instance, trajs, training=True, update_running=True
        )
        residual_parts.append(lifted.log_z + log_pf - d_scores)
        traj_count += len(trajs)
    pooled = F.concat(residual_parts, axis=0)
    loss = F.mean(F.square(pooled))
    loss_val = float(F.value(loss))
    _check_finite(loss_val, "tb_loss", {"epoch": state.epoch}, cfg.out_dir)
    F.backward(loss)
    grads = _clip_grads(backward_grads(lifted), cfg.grad_clip)
    lr_of = lambda name: cfg.lr_logz if name == "log_z" else cfg.lr_gen
    state.opt_policy.step(state.policy, grads, lr_of)
    return loss_val


def discriminator_update(state: TrainState, instances, cfg: TrainConfig,
                         seed: int) -> tuple[float, float]:
    """One LSGAN step on the discriminator; generator frozen. Returns the
    loss and the mean negative-sample reward."""
    lifted = lift_disc(state.disc)
    neg_parts, pos_parts = [], []
    for idx, instance in enumerate(instances):
        neg, pos = make_training_pair(state.policy, instance, cfg, derive_seed(seed, idx))
        dm, graph = _graph_for(instance, cfg)
        ei = build_edge_index(graph)
        feats = node_features(instance)
        scores = disc_traj_scores_t(
            lifted, ei, feats, dm, neg + pos, training=True, update_running=True
        )
        rewards = F.exp(scores)
        neg_parts.append(rewards[: len(neg)])
        pos_parts.append(rewards[len(neg):])
    neg_all = F.concat(neg_parts, axis=0)
    pos_all = F.concat(pos_parts, axis=0)
    loss = disc_loss(neg_all, pos_all)
    loss_val = float(F.value(loss))
    _check_finite(loss_val, "disc_loss", {"epoch": state.epoch}, cfg.out_dir)
    F.backward(loss)
    grads = _clip_grads(backward_grads(lifted), cfg.grad_clip)
    state.opt_disc.step(state.disc, grads, lambda name: cfg.lr_disc)
    return loss_val, float(F.value(neg_all).mean())


def train_step(state: TrainState, instances, cfg: TrainConfig,
               epoch: int = 0, step: int = 0) -> TrainState:
    """One adversarial round: ``update_ratio`` generator updates with the
    discriminator frozen, then one discriminator update with the generator
    frozen. Appends one history record."""
    base = derive_seed(derive_seed(cfg.seed, epoch), step)
    tb = math.nan
    for u in range(cfg.update_ratio):
        tb = generator_update(state, instances, cfg, derive_seed(base, 1000 + u))
    d_loss, mean_reward = discriminator_update(state, instances, cfg, derive_seed(base, 2000))
    greedy_costs = []
    for instance in instances:
        dm, graph = _graph_for(instance, cfg)
        ctx = encode(state.policy, instance, graph, dm, training=True)
        greedy_costs.append(rollout(state.policy, instance, ctx, GREEDY).solution.total_cost)
    state.history.append(
        {
            "step": len(state.history),
            "tb_loss": tb,
            "disc_loss": d_loss,
            "mean_reward": mean_reward,
            "mean_greedy_cost": float(np.mean(greedy_costs)),
        }
    )
    return state


# ---------------------------------------------------------------------------
# the full loop with checkpoints


def _instance_for(cfg: TrainConfig, epoch: int, idx: int) -> Instance:
    return generate_uniform(cfg.n, derive_seed(derive_seed(cfg.seed, 31 + epoch), idx))


def save_train_state(state: TrainState, cfg: TrainConfig, path: str) -> None:
    from .neural import _container_payload

    payload = {
        "format_version": 1,
        "kind": "train_state",
        "epoch": state.epoch,
        "policy": _container_payload("policy", state.policy),
        "disc": _container_payload("discriminator", state.disc),
        "opt_policy": state.opt_policy.to_dict(),
        "opt_disc": state.opt_disc.to_dict(),
        "history": state.history,
        "dims": cfg.dims.to_dict(),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_train_state(path: str) -> TrainState:
    from .neural import CheckpointError, _fill_container

    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("kind") != "train_state":
        raise CheckpointError(f"not a training checkpoint: {payload.get('kind')}")
    dims = Dims(**payload["dims"])
    policy = init_params(dims, 0)
    _fill_container(policy, payload["policy"])
    disc = init_disc(dims, 0)
    _fill_container(disc, payload["disc"])
    shapes_p = [(n, a.shape) for n, a in policy.named_arrays()]
    shapes_d = [(n, a.shape) for n, a in disc.named_arrays()]
    state = TrainState(
        policy,
        disc,
        Adam.from_dict(payload["opt_policy"], shapes_p),
        Adam.from_dict(payload["opt_disc"], shapes_d),
        epoch=payload["epoch"],
        history=payload["history"],
    )
    return state


def _write_log(state: TrainState, cfg: TrainConfig) -> None:
    os.makedirs(cfg.out_dir, exist_ok=True)
    with open(os.path.join(cfg.out_dir, "training_log.json"), "w") as fh:
        json.dump(state.history, fh, indent=2)


def train(cfg: TrainConfig, resume_from: TrainState | str | None = None) -> TrainState:
    """Run the full loop, checkpointing per cadence plus a final checkpoint.

    Resuming from a checkpoint continues bit-identically because all
    randomness is keyed off (seed, epoch, step), never off live state.
    """
    os.makedirs(cfg.out_dir, exist_ok=True)
    if resume_from is None:
        state = init_train_state(cfg)
    elif isinstance(resume_from, str):
        state = load_train_state(resume_from)
    else:
        state = resume_from
    if state.epoch == 0 and cfg.checkpoint_every:
        save_train_state(state, cfg, os.path.join(cfg.out_dir, "checkpoint_epoch0.json"))
    for epoch in range(state.epoch, cfg.epochs):
        for idx in range(cfg.instances_per_epoch):
            instance = _instance_for(cfg, epoch, idx)
            train_step(state, [instance], cfg, epoch, idx)
        state.epoch = epoch + 1
        if cfg.checkpoint_every and state.epoch % cfg.checkpoint_every == 0:
            save_train_state(
                state, cfg, os.path.join(cfg.out_dir, f"checkpoint_epoch{state.epoch}.json")
            )
    save_train_state(state, cfg, os.path.join(cfg.out_dir, "checkpoint_final.json"))
    _write_log(state, cfg)
    return state
