import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from safeagc.control import (
    MLP, Agent, AgentHyper, CheckpointError, Observation, PiController, RewardConfig, TrainingDiverged,
    load_networks, pi_step, reward, reward_terms, save_networks, sharing_imbalance,
)

from oracles import central_difference, relative_error

GROUPS = ((0, 1), (2, 3))
RC = RewardConfig(r1=(2.0, 2.0), r2=40.0, r3=25.0, r4=15.0, r5=200.0, r6=1e5)


def obs(f=(0.0, 0.0), tie=(0.0,), export=None, ace_int=None):
    f = np.asarray(f, float)
    tie = np.asarray(tie, float)
    export = np.array([tie[0], -tie[0]]) if export is None else np.asarray(export, float)
    return Observation(f=f, p_tie=tie, net_export=export, ace_integral=ace_int)


# reward -----------------------------------------------------------------

def test_reward_zero():
    assert reward(RC, [0, 0], [0], np.zeros(4), GROUPS) == 0.0


def test_reward_worked_example():
    r = reward(RC, [0.1, -0.1], [0.02], np.zeros(4), GROUPS)
    assert r == pytest.approx(-1.2, abs=1e-12)


def sharing_double_sum(P, groups):
    total = 0.0
    for members in groups:
        mean = sum(P[j] for j in members) / len(members)
        for j in members:
            total += (P[j] - mean) ** 2
    return total


def test_sharing_term_perturbation():
    base = np.array([0.02, 0.02, -0.01, -0.01])
    assert sharing_imbalance(base, GROUPS) == 0.0
    for delta in (1e-3, 0.05, -0.2):
        P = base.copy()
        P[0] += delta
        want = delta**2 * (1 - 1 / 2)
        assert sharing_imbalance(P, GROUPS) == pytest.approx(want, rel=1e-12)
        assert sharing_imbalance(P, GROUPS) == pytest.approx(sharing_double_sum(P, GROUPS), rel=1e-12)


def test_flag_and_violation_terms():
    t = reward_terms(RC, [0, 0], [0], np.zeros(4), GROUPS, cbf_flag=True, violation=True)
    assert t.flag == -200.0 and t.violation == -1e5
    assert t.total == -100200.0


def test_change_variant():
    rc = RewardConfig(r1=(0, 0), r2=0, r3=25.0, r4=0, r5=0, r6=0, dispatch_penalty="change")
    P = np.array([0.1, 0.0, 0.0, 0.0])
    assert reward(rc, [0, 0], [0], P, GROUPS, Pref_prev=P) == 0.0
    assert reward(rc, [0, 0], [0], P, GROUPS) == pytest.approx(-25 * 0.01)


def test_reward_config_validation():
    with pytest.raises(ValueError):
        RewardConfig(r1=(-1.0, 2.0), r2=40, r3=25, r4=15, r5=200, r6=1e5)
    with pytest.raises(ValueError):
        RewardConfig(r1=(1.0,), r2=40, r3=25, r4=15, r5=200, r6=1e5, dispatch_penalty="delta")


vec4 = arrays(np.float64, 4, elements=st.floats(-1, 1))
vec2 = arrays(np.float64, 2, elements=st.floats(-1, 1))


@given(vec2, arrays(np.float64, 1, elements=st.floats(-1, 1)), vec4, st.booleans(), st.booleans())
@settings(max_examples=200)
def test_reward_decomposition(f, tie, P, flag, viol):
    t = reward_terms(RC, f, tie, P, GROUPS, cbf_flag=flag, violation=viol)
    assert all(v <= 0 for v in t.as_tuple())
    assert t.total == pytest.approx(sum(t.as_tuple()))
    assert (t.total == 0) == (all(v == 0 for v in t.as_tuple()) and not flag and not viol)
    if viol:
        assert t.total <= -1e5


@given(vec4, st.booleans(), st.booleans())
@settings(max_examples=200)
def test_sharing_zero_iff_equal(P, tie_a, tie_b):
    if tie_a:
        P[1] = P[0]
    if tie_b:
        P[3] = P[2]
    s = sharing_imbalance(P, GROUPS)
    gap = max(abs(P[0] - P[1]), abs(P[2] - P[3]))
    if gap == 0:
        assert s <= 1e-12
    elif gap > 1e-12:
        assert s > 0


# PI ---------------------------------------------------------------------

def make_pi(kp=0.3, ki=0.1):
    return PiController(kp=[kp, kp], ki=[ki, ki], participation=[[0.6, 0.4], [0.5, 0.5]],
                        groups=GROUPS, bias=[0.8417, 0.8417])


def test_pi_zero():
    np.testing.assert_array_equal(pi_step(make_pi(), obs(), 2.0), 0.0)


def test_pi_integrator_growth():
    c = make_pi(kp=0.0, ki=0.1)
    o = obs(f=(0.1, 0.0), tie=(0.0,))
    ace = 0.8417 * 0.1
    u0 = c.step(o, 0.5)
    u1 = u0
    for _ in range(9):
        u1 = c.step(o, 0.5)
    np.testing.assert_allclose(u1 - u0, -np.array([0.6, 0.4, 0, 0]) * 0.1 * ace * 4.5, atol=1e-15)


def test_pi_validation():
    with pytest.raises(ValueError):
        PiController(kp=[0, 0], ki=[-1, 0], participation=[[0.5, 0.5]] * 2, groups=GROUPS, bias=[1, 1])
    with pytest.raises(ValueError):
        PiController(kp=[0, 0], ki=[0, 0], participation=[[0.7, 0.4]] * 2, groups=GROUPS, bias=[1, 1])
    with pytest.raises(ValueError):
        make_pi().step(obs(), 0.0)


def test_pi_reset():
    c = make_pi()
    c.step(obs(f=(0.1, 0.1)), 2.0)
    c.reset()
    np.testing.assert_array_equal(c.integral, 0.0)


# networks -----------------------------------------------------------------

def test_zero_final_layer_centre_output():
    net = MLP((5, 8, 3), "tanh", rng=np.random.default_rng(0))
    net.params[-2][:] = 0.0
    net.params[-1][:] = 0.0
    np.testing.assert_array_equal(net.forward(np.ones((4, 5))), 0.0)


@pytest.mark.parametrize("draw", range(10))
def test_gradients_match_finite_differences(draw):
    rng = np.random.default_rng(draw)
    for act in ("tanh", "linear"):
        net = MLP((5, 7, 6, 3), act, rng=rng, final_scale=0.5)
        X = rng.normal(size=(4, 5))
        W = rng.normal(size=(4, 3))

        def loss():
            return float(np.sum(W * net.forward(X)))

        out, cache = net.forward(X, keep=True)
        grads, gin = net.backward(cache, W)
        fd = central_difference(loss, net.params, eps=1e-5)
        for g, f in zip(grads, fd):
            assert relative_error([g], [f]) < 1e-4
        Xc = X.copy()

        def loss_x():
            return float(np.sum(W * net.forward(Xc)))

        (fdx,) = central_difference(loss_x, [Xc], eps=1e-5)
        assert relative_error([gin], [fdx]) < 1e-4


def test_checkpoint_roundtrip_bit_identical():
    rng = np.random.default_rng(3)
    nets = {"a": MLP((3, 4, 2), "tanh", rng=rng), "b": MLP((5, 6, 1), "linear", rng=rng)}
    buf = io.BytesIO()
    blob = save_networks(buf, nets, {"k": 1})
    buf.seek(0)
    loaded, meta = load_networks(buf)
    assert meta == {"k": 1}
    X = rng.normal(size=(7, 3))
    assert np.array_equal(loaded["a"].forward(X), nets["a"].forward(X))
    assert blob[:8] == b"SAGCNET\0"


def test_checkpoint_corruption_detected():
    nets = {"a": MLP((3, 4, 2), "tanh")}
    blob = save_networks(io.BytesIO(), nets)
    with pytest.raises(CheckpointError):
        load_networks(io.BytesIO(b"BADMAGIC" + blob[8:]))
    with pytest.raises(CheckpointError):
        load_networks(io.BytesIO(blob[:-3]))
    with pytest.raises(CheckpointError):
        load_networks(io.BytesIO(blob + b"\0"))


# agent --------------------------------------------------------------------

HP = AgentHyper(hidden=(16, 16), batch_size=8, buffer_size=64, warmup=8)


@given(arrays(np.float64, (64, 5), elements=st.floats(-1e6, 1e6)))
@settings(max_examples=50, deadline=None)
def test_actor_bounded(S):
    agent = Agent(5, 4, HP, seed=0)
    a = agent.actor_forward(S)
    assert np.all(np.abs(a) <= HP.action_limit)


def test_actor_bounded_bulk():
    agent = Agent(5, 4, HP, seed=1)
    agent.actor.params[-2] *= 1e4  # push the output into saturation
    S = np.random.default_rng(0).normal(0, 10, size=(100_000, 5))
    assert np.all(np.abs(agent.actor_forward(S)) <= HP.action_limit)
    assert np.all(np.abs(agent.act(S[0], noise=10.0)) <= HP.action_limit)


def test_identical_seeds_identical_outputs():
    s = np.linspace(-1, 1, 5)
    a, b = Agent(5, 4, HP, seed=9), Agent(5, 4, HP, seed=9)
    assert np.array_equal(a.actor_forward(s), b.actor_forward(s))
    assert a.critic_forward(s, np.ones(4)) == b.critic_forward(s, np.ones(4))
    assert a.digest() == b.digest()


def _batch(rng, n=8, done=1.0):
    return (rng.normal(size=(n, 5)), rng.uniform(-0.1, 0.1, (n, 4)), rng.normal(size=n),
            rng.normal(size=(n, 5)), np.full(n, done))


def test_gamma_zero_terminal_regression():
    hp = AgentHyper(hidden=(16, 16), gamma=1e-12, batch_size=8, buffer_size=64, critic_lr=1e-3, reward_scale=1.0)
    agent = Agent(5, 4, hp, seed=0)
    batch = _batch(np.random.default_rng(0))
    losses = [agent.update(batch)["critic_loss"] for _ in range(100)]
    assert np.all(np.diff(losses) < 0)


def test_tau_one_hard_copy():
    hp = AgentHyper(hidden=(16, 16), tau=1.0, batch_size=8, buffer_size=64)
    agent = Agent(5, 4, hp, seed=0)
    agent.update(_batch(np.random.default_rng(1), done=0.0))
    for a, b in ((agent.actor, agent.actor_target), (agent.critic, agent.critic_target)):
        for p, q in zip(a.params, b.params):
            assert np.array_equal(p, q)


def test_nonfinite_loss_halts():
    agent = Agent(5, 4, HP, seed=0)
    s, a, r, s2, d = _batch(np.random.default_rng(2))
    r[0] = np.nan
    with pytest.raises(TrainingDiverged):
        agent.update((s, a, r, s2, d))


def test_agent_hyper_validation():
    with pytest.raises(ValueError):
        AgentHyper(gamma=1.0)
    with pytest.raises(ValueError):
        AgentHyper(tau=0.0)


def test_agent_save_load():
    agent = Agent(5, 4, HP, seed=4)
    agent.update(_batch(np.random.default_rng(5), done=0.0))
    buf = io.BytesIO()
    agent.save(buf)
    buf.seek(0)
    other = Agent.load(buf)
    S = np.random.default_rng(6).normal(size=(10, 5))
    assert np.array_equal(other.actor_forward(S), agent.actor_forward(S))
    assert other.digest() == agent.digest()


def test_noise_schedule():
    hp = AgentHyper(action_limit=0.1, noise_start=0.5, noise_end=0.05, noise_decay_episodes=100)
    assert hp.noise_at(0) == pytest.approx(0.05)
    assert hp.noise_at(100) == pytest.approx(0.005)
    assert hp.noise_at(1000) == pytest.approx(0.005)


def test_toy_lqr_within_ten_percent():
    """Scalar plant xdot = -x + u, reward -(x^2 + u^2), compared to the best constant gain."""
    dt, steps = 0.1, 30
    Ad, Bd = np.exp(-dt), 1.0 - np.exp(-dt)

    def rollout(policy, x0s):
        total = 0.0
        for x0 in x0s:
            x = x0
            for _ in range(steps):
                u = policy(x)
                total += -(x * x + u * u)
                x = Ad * x + Bd * u
        return total / len(x0s)

    x0s = np.linspace(-1, 1, 21)
    gains = np.linspace(-3, 1, 401)
    best = max(rollout(lambda x, k=k: float(np.clip(k * x, -1, 1)), x0s) for k in gains)

    hp = AgentHyper(hidden=(32, 32), action_limit=1.0, gamma=0.95, tau=0.01, actor_lr=1e-3,
                    critic_lr=2e-3, batch_size=64, buffer_size=20000, warmup=256, reward_scale=1.0)
    agent = Agent(1, 1, hp, seed=0)
    rng = np.random.default_rng(0)
    for ep in range(150):
        x = rng.uniform(-1, 1)
        for _ in range(steps):
            s = np.array([x])
            u = agent.act(s, noise=0.3 * max(0.05, 1 - ep / 100))
            r = -(x * x + u[0] ** 2)
            x2 = Ad * x + Bd * u[0]
            agent.remember(s, u, r, np.array([x2]), False)
            if len(agent.buffer) >= hp.warmup:
                agent.update()
            x = x2
    learned = rollout(lambda x: float(agent.actor_forward(np.array([x]))[0]), x0s)
    assert learned >= best * 1.10  # returns are negative: within 10% of the optimum
