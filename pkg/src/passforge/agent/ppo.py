"""PPO training over the multi-design pass-ordering environment."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..ir import IrModule
from ..qor import OpCostTable
from .env import N_ACTIONS, PassEnv, STOP_ACTION
from .nets import (
    PpoConfig, init_actor_critic, policy_probs, ppo_loss_grad, value,
)


class DivergenceError(Exception):
    pass


@dataclass
class Trajectory:
    obs: list[np.ndarray] = field(default_factory=list)
    actions: list[int] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)
    values: list[float] = field(default_factory=list)
    log_probs: list[float] = field(default_factory=list)
    terminal: bool = False
    design: str = ""
    cycles_ratio: float = 1.0

    @property
    def total_return(self) -> float:
        return float(sum(self.rewards))

    def pass_sequence(self, actions=None):
        from .env import ACTIONS
        out = []
        for a in (actions if actions is not None else self.actions):
            if a == STOP_ACTION:
                break
            out.append(ACTIONS[a])
        return out


def gae_advantages(rewards: list[float], values: list[float], gamma: float,
                   lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimates and discounted-return targets for one
    terminated episode (bootstrap value 0 at the end)."""
    n = len(rewards)
    adv = np.zeros(n)
    last = 0.0
    for t in range(n - 1, -1, -1):
        next_v = values[t + 1] if t + 1 < n else 0.0
        delta = rewards[t] + gamma * next_v - values[t]
        last = delta + gamma * lam * last
        adv[t] = last
    returns = adv + np.asarray(values)
    return adv, returns


def rollout_episode(env: PassEnv, params: dict, rng: np.random.Generator,
                    greedy: bool = False) -> Trajectory:
    traj = Trajectory(design=env.design_name)
    state = env.reset()
    l0 = state.cycles_history[0]
    done = False
    while not done:
        probs = policy_probs(params, state.obs)
        if greedy:
            action = int(np.argmax(probs))
        else:
            action = int(rng.choice(len(probs), p=probs))
        v = value(params, state.obs)
        traj.obs.append(state.obs)
        traj.actions.append(action)
        traj.values.append(v)
        traj.log_probs.append(float(np.log(max(probs[action], 1e-300))))
        state, r, done = env.step(state, action)
        traj.rewards.append(r)
    traj.terminal = True
    traj.cycles_ratio = state.best_cycles / l0 if l0 > 0 else 1.0
    return traj


def ppo_update(params: dict, trajectories: list[Trajectory],
               config: PpoConfig, opt: "AdamOpt") -> float:
    obs, actions, old_logp, advs, rets = [], [], [], [], []
    for traj in trajectories:
        a, r = gae_advantages(traj.rewards, traj.values, config.gamma,
                              config.gae_lambda)
        obs.extend(traj.obs)
        actions.extend(traj.actions)
        old_logp.extend(traj.log_probs)
        advs.extend(a.tolist())
        rets.extend(r.tolist())
    obs_a = np.asarray(obs)
    act_a = np.asarray(actions)
    logp_a = np.asarray(old_logp)
    adv_a = np.asarray(advs)
    ret_a = np.asarray(rets)
    if adv_a.std() > 1e-8:
        adv_a = (adv_a - adv_a.mean()) / adv_a.std()

    n = len(act_a)
    last_loss = 0.0
    rng = np.random.default_rng(opt.t + config.seed)
    for _ in range(config.epochs_per_update):
        order = rng.permutation(n)
        for start in range(0, n, config.minibatch_size):
            sel = order[start:start + config.minibatch_size]
            batch = {"obs": obs_a[sel], "actions": act_a[sel],
                     "old_logp": logp_a[sel], "advantages": adv_a[sel],
                     "returns": ret_a[sel]}
            loss, grads = ppo_loss_grad(params, batch, config)
            if not np.isfinite(loss):
                raise DivergenceError("non-finite PPO loss")
            opt.step(params, grads)
            last_loss = loss
    return last_loss


class AdamOpt:
    def __init__(self, params: dict, lr: float):
        self.lr = lr
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        for k in sorted(params):
            g = grads[k]
            self.m[k] = 0.9 * self.m[k] + 0.1 * g
            self.v[k] = 0.999 * self.v[k] + 0.001 * (g * g)
            m_hat = self.m[k] / (1 - 0.9 ** self.t)
            v_hat = self.v[k] / (1 - 0.999 ** self.t)
            params[k] -= self.lr * m_hat / (np.sqrt(v_hat) + 1e-8)


@dataclass
class CurvePoint:
    iteration: int
    mean_return: float
    mean_cycles_ratio: float


def train(designs: list[tuple[str, IrModule]], obs_fn, config: PpoConfig,
          seed: int, obs_dim: int, costs=None,
          log_fn=None) -> tuple[dict, list[CurvePoint]]:
    """Round-robin PPO across the design environments; deterministic per seed."""
    rng = np.random.default_rng(seed)
    envs = [PassEnv(name, module, obs_fn,
                    costs=costs if costs is not None else OpCostTable(),
                    max_steps=config.max_episode_len)
            for name, module in designs]
    params = init_actor_critic(obs_dim, N_ACTIONS, config.hidden, seed)
    opt = AdamOpt(params, config.lr)
    curve: list[CurvePoint] = []
    env_cursor = 0
    for it in range(config.iterations):
        trajectories = []
        for _ in range(config.episodes_per_iteration):
            env = envs[env_cursor % len(envs)]
            env_cursor += 1
            trajectories.append(rollout_episode(env, params, rng))
        ppo_update(params, trajectories, config, opt)
        point = CurvePoint(
            it,
            float(np.mean([t.total_return for t in trajectories])),
            float(np.mean([t.cycles_ratio for t in trajectories])))
        curve.append(point)
        if log_fn is not None:
            log_fn(point)
    return params, curve


def infer(design: IrModule, params: dict, obs_fn, costs=None,
          max_steps: int = 16):
    """Greedy rollout; returns the best-prefix pass sequence and the cycle
    trace, so the caller never receives a regressing suffix."""
    env = PassEnv("infer", design, obs_fn,
                  costs=costs if costs is not None else OpCostTable(),
                  max_steps=max_steps)
    rng = np.random.default_rng(0)
    traj = rollout_episode(env, params, rng, greedy=True)
    state = env.reset()
    cycles = [state.cycles_history[0]]
    seq_actions: list[int] = []
    for action in traj.actions:
        if action == STOP_ACTION:
            break
        prev_t = state.t
        state, _r, done = env.step(state, action)
        if state.t == prev_t + 1:  # the pass actually applied
            cycles.append(state.cycles_history[-1])
            seq_actions.append(action)
        if done:
            break
    best_idx = int(np.argmin(cycles))
    best_prefix = seq_actions[:best_idx]
    return traj.pass_sequence(best_prefix), cycles, best_idx
