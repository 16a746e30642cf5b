"""Environment semantics, PPO math, and the search baselines."""
import numpy as np
import pytest

from passforge.agent import (
    ACTIONS, N_ACTIONS, PassEnv, PpoConfig, STOP_ACTION, gae_advantages,
    init_actor_critic, policy_probs, ppo_loss_grad, reward, rollout_episode,
    search_baseline, search_greedy, search_random, train,
)
from passforge.embedder import featurize_baseline
from passforge.ir import parse_module
from passforge.passes import PassId


def test_reward_formula_instances():
    assert reward(100, 80, 100) == pytest.approx(0.2)
    assert reward(100, 100, 100) == 0.0
    assert reward(80, 100, 80) == pytest.approx(-0.25)


def test_reward_telescopes_with_frozen_best():
    # With the denominator frozen at L0, the episode return telescopes.
    trace = [100.0, 90.0, 95.0, 60.0]
    l0 = trace[0]
    total = sum((trace[t] - trace[t + 1]) / l0 for t in range(len(trace) - 1))
    assert total == pytest.approx((trace[0] - trace[-1]) / l0)
    # With the running best, each all-improving step divides by a smaller or
    # equal denominator, so the return only grows.
    improving = [100.0, 90.0, 70.0, 50.0]
    best = improving[0]
    running = 0.0
    for t in range(len(improving) - 1):
        running += reward(improving[t], improving[t + 1], best)
        best = min(best, improving[t + 1])
    assert running >= (improving[0] - improving[-1]) / improving[0] - 1e-12


def _obs_fn(dim=16):
    return lambda g: featurize_baseline(g, "opcode_histogram", dim)


@pytest.fixture
def adce_env():
    m = parse_module("""
top func @f(%a: i32, %b: i32) -> i32 {
block entry:
  %d1 = mul i32 %a, %b
  %d2 = mul i32 %d1, %b
  %d3 = mul i32 %d2, %a
  %live = add i32 %a, %b
  ret i32 %live
}
""")
    return PassEnv("adce_fixture", m, _obs_fn(), max_steps=4)


def test_stop_at_t0_gives_empty_episode(adce_env):
    state = adce_env.reset()
    new_state, r, done = adce_env.step(state, STOP_ACTION)
    assert done and r == 0.0 and new_state.t == 0


def test_adce_step_gives_nonnegative_reward(adce_env):
    state = adce_env.reset()
    action = ACTIONS.index(PassId.ADCE)
    new_state, r, done = adce_env.step(state, action)
    assert r >= 0.0
    assert new_state.cycles_history[-1] <= state.cycles_history[-1]
    assert r == pytest.approx(
        (state.cycles_history[-1] - new_state.cycles_history[-1])
        / state.best_cycles)


def test_observation_recomputed_each_step(adce_env):
    state = adce_env.reset()
    new_state, _r, _done = adce_env.step(state, ACTIONS.index(PassId.ADCE))
    assert not np.array_equal(state.obs, new_state.obs)


def test_best_cycles_non_increasing(adce_env, rng):
    state = adce_env.reset()
    best = state.best_cycles
    for _ in range(4):
        a = int(rng.integers(0, N_ACTIONS))
        state, _r, done = adce_env.step(state, a)
        assert state.best_cycles <= best
        best = state.best_cycles
        if done:
            break


def test_policy_outputs_distribution():
    params = init_actor_critic(8, N_ACTIONS, (16, 16), seed=0)
    obs = np.random.default_rng(1).normal(size=8)
    p = policy_probs(params, obs)
    assert abs(p.sum() - 1.0) < 1e-9
    assert (p >= 0).all()
    entropy = -(p * np.log(p)).sum()
    assert entropy >= 0.0


def test_gae_lambda_one_closed_form():
    rewards = [1.0, 0.5, 2.0]
    values = [0.3, 0.2, 0.1]
    gamma = 0.9
    adv, rets = gae_advantages(rewards, values, gamma, lam=1.0)
    discounted = []
    acc = 0.0
    for r in reversed(rewards):
        acc = r + gamma * acc
        discounted.append(acc)
    discounted.reverse()
    for t in range(3):
        assert adv[t] == pytest.approx(discounted[t] - values[t])
        assert rets[t] == pytest.approx(adv[t] + values[t])


def test_ppo_clip_arithmetic():
    # ratio 1.5 with positive advantage and eps 0.2 uses the clipped 1.2
    adv = 2.0
    assert min(1.5 * adv, np.clip(1.5, 0.8, 1.2) * adv) == pytest.approx(2.4)


def test_ppo_gradient_unclipped_matches_policy_gradient():
    cfg = PpoConfig(hidden=(6, 5), entropy_coef=0.0, value_coef=0.0)
    params = init_actor_critic(4, 3, cfg.hidden, seed=2)
    rng = np.random.default_rng(3)
    obs = rng.normal(size=(6, 4))
    actions = rng.integers(0, 3, size=6)
    # old_logp equal to current logp makes every ratio exactly 1 (unclipped).
    from passforge.agent.nets import _mlp_forward
    logits, _ = _mlp_forward(params, "actor", obs)
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    old_logp = logp[np.arange(6), actions]
    adv = rng.normal(size=6)
    batch = {"obs": obs, "actions": actions, "old_logp": old_logp,
             "advantages": adv, "returns": np.zeros(6)}
    loss, grads = ppo_loss_grad(params, batch, cfg)
    # at ratio exactly 1 the surrogate is -mean(adv * ratio); the analytic
    # policy gradient is -mean(adv * dlogp)
    h = 1e-6
    key = "actor/w3"
    flat = params[key].reshape(-1)
    gflat = grads[key].reshape(-1)
    idx = 5
    old = flat[idx]
    flat[idx] = old + h
    lp, _ = ppo_loss_grad(params, batch, cfg, want_grads=False)
    flat[idx] = old - h
    lm, _ = ppo_loss_grad(params, batch, cfg, want_grads=False)
    flat[idx] = old
    assert abs(gflat[idx] - (lp - lm) / (2 * h)) < 1e-6


def test_pass_failure_terminates_episode_without_crash():
    # loop_deletion on a post-return-unreachable shape can never fail here;
    # instead simulate failure by monkeypatching estimate via a bad cost
    # table is intrusive, so exercise the path with a pass that can raise
    # PragmaError: none are in the action space, meaning failures come only
    # from internal errors; the env contract is still exercised by Stop.
    m = parse_module("""
top func @f(%a: i32) -> i32 {
block entry:
  ret i32 %a
}
""")
    env = PassEnv("tiny", m, _obs_fn(), max_steps=3)
    state = env.reset()
    for a in range(min(4, N_ACTIONS - 1)):
        state2, r, done = env.step(state, a)
        assert np.isfinite(r)
        if done:
            break


def test_rollout_and_train_deterministic(small_corpus):
    designs = small_corpus[:3]
    cfg = PpoConfig(iterations=3, episodes_per_iteration=3,
                    max_episode_len=4, minibatch_size=16, seed=0)
    p1, c1 = train(designs, _obs_fn(), cfg, seed=0, obs_dim=16)
    p2, c2 = train(designs, _obs_fn(), cfg, seed=0, obs_dim=16)
    for k in p1:
        assert np.array_equal(p1[k], p2[k])
    assert [(p.mean_return, p.mean_cycles_ratio) for p in c1] == \
        [(p.mean_return, p.mean_cycles_ratio) for p in c2]


def test_greedy_on_single_profitable_pass():
    # A dead load sits on the critical path: store-free, so dse and mem2reg
    # cannot touch it, and the pure-cleanup sweeps in other passes skip
    # loads; only adce removes it.
    m = parse_module("""
top func @f(%a: i32[8], %i: i32) -> i32 {
block entry:
  %p = getelementptr %a, 0
  %dead = load i32 %p
  %live = add i32 %i, 1
  ret i32 %live
}
""")
    result = search_greedy(m, max_len=4)
    assert result.sequence == [PassId.ADCE]
    assert result.cycles <= result.baseline_cycles


def test_greedy_never_regresses(small_corpus):
    for _name, m in small_corpus[:5]:
        r = search_greedy(m, max_len=5)
        assert r.cycles <= r.baseline_cycles


def test_random_reproducible(small_corpus):
    _name, m = small_corpus[0]
    a = search_random(m, budget_sequences=5, seed=42)
    b = search_random(m, budget_sequences=5, seed=42)
    assert [p.value for p in a.sequence] == [p.value for p in b.sequence]
    assert a.cycles == b.cycles


def test_genetic_elitism_monotone(small_corpus):
    _name, m = small_corpus[1]
    from passforge.agent.baselines import _Evaluator, search_genetic
    r = search_genetic(m, population=6, generations=4, seed=7, genome_len=5)
    assert r.cycles <= r.baseline_cycles


def test_search_baseline_dispatch(small_corpus):
    _name, m = small_corpus[2]
    for method in ("random", "greedy", "genetic"):
        r = search_baseline(m, method, seed=1, budget=4)
        assert r.method == method
        assert r.cycles <= r.baseline_cycles
