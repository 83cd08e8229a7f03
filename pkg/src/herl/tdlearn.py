"""Model-free learners: TD(0), SARSA(0), Z-learning.

Every learner keeps the plaintext table and, when the backend is noisy or
encrypted, a shadow table that evolves through the backend (or through the
client/cloud protocol) from its own values. The sampling path (actions,
transitions) is driven by the plaintext table, so identical seeds give
identical sample sequences for the plain and shadow runs and the error trace
measures arithmetic noise only.

Plain updates use the same association order as the homomorphic circuit
(v + a*r + (a*g)*v' - a*v), which makes the exact backend bit-identical.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from herl import mdp, protocol
from herl.errors import ApproximationDomainError, StructuralError
from herl.mdp import TransitionSample


def taylor_exp(x, degree=5, x_min=-1.0):
    """Horner evaluation of sum_{i<=k} x^i / i! on the domain [x_min, 0]."""
    if not x_min - 1e-12 <= x <= 1e-12:
        raise ApproximationDomainError(
            f"x={x} outside the approximation domain [{x_min}, 0]")
    acc = 1.0 / math.factorial(degree)
    for i in range(degree - 1, -1, -1):
        acc = acc * x + 1.0 / math.factorial(i)
    return acc


def taylor_remainder_bound(degree=5, l_max=1.0):
    """Lagrange remainder of the degree-k series on [-l_max, 0]."""
    return l_max ** (degree + 1) / math.factorial(degree + 1)


@dataclass
class ErrorTrace:
    """Per-update max-norm distance between the plain and shadow tables."""

    tracked_state: int = 0
    max_errors: list = field(default_factory=list)
    tracked_values: list = field(default_factory=list)
    tracked_errors: list = field(default_factory=list)

    def record(self, plain, shadow):
        if shadow is None:
            self.max_errors.append(0.0)
            err_s = 0.0
        else:
            self.max_errors.append(float(np.abs(plain - shadow).max()))
            err_s = float(np.abs(plain - shadow).flat[self.tracked_state])
        self.tracked_values.append(float(plain.flat[self.tracked_state]))
        self.tracked_errors.append(err_s)

    def __len__(self):
        return len(self.max_errors)


@dataclass
class LearnerState:
    algo: str
    table: np.ndarray
    shadow: np.ndarray | None
    visits: np.ndarray
    episodes: int = 0
    updates: int = 0
    cost_clips: int = 0
    negative_z_flags: int = 0
    # online empirical model (counts of (s,a,s') and reward sums per (s,a))
    model_counts: np.ndarray | None = None
    model_rewards: np.ndarray | None = None

    def estimated_model(self, env):
        if self.model_counts is None:
            raise StructuralError("this learner keeps no model estimate")
        totals = self.model_counts.sum(axis=2)
        visited = totals > 0
        P = np.zeros_like(self.model_counts, dtype=np.float64)
        P[visited] = self.model_counts[visited] / totals[visited][:, None]
        idx = np.nonzero(~visited)
        P[idx[0], idx[1], idx[0]] = 1.0
        R = np.zeros(P.shape)
        R[visited] = (self.model_rewards[visited] / totals[visited])[:, None]
        est = mdp.Mdp(n_states=env.n_states, n_actions=env.n_actions, P=P,
                      R=R, gamma=env.gamma, terminal=env.terminal)
        return est, visited


def init_state(algo, env):
    n, n_a = env.n_states, env.n_actions
    if algo == "td0":
        table = np.zeros(n)
        visits = np.zeros(n, dtype=np.int64)
    elif algo == "sarsa":
        table = np.zeros((n, n_a))
        visits = np.zeros((n, n_a), dtype=np.int64)
    elif algo == "z":
        table = np.ones(n)
        # boundary desirability: goal keeps exp(0)=1, traps get exp(-l_trap)
        if env.state_cost is not None:
            for s in np.nonzero(env.terminal)[0]:
                table[s] = math.exp(-float(env.state_cost[s]))
        visits = np.zeros(n, dtype=np.int64)
    else:
        raise ValueError(f"unknown algorithm {algo!r}")
    state = LearnerState(algo=algo, table=table, shadow=None, visits=visits)
    if algo in ("td0", "sarsa"):
        state.model_counts = np.zeros((n, n_a, n), dtype=np.int64)
        state.model_rewards = np.zeros((n, n_a))
    return state


def _ensure_shadow(state, backend):
    if backend.kind != "exact" and state.shadow is None:
        state.shadow = state.table.copy()


def _backend_td_circuit(backend, v, vp, alpha, gamma, r):
    sv = {k: backend.encrypt(x) for k, x in
          dict(v=v, vp=vp, a=alpha, g=gamma, r=r).items()}
    t1 = backend.mul(sv["a"], sv["r"])
    t2 = backend.mul(backend.mul(sv["a"], sv["g"]), sv["vp"])
    t3 = backend.mul(sv["a"], sv["v"])
    out = backend.sub(backend.add(backend.add(sv["v"], t1), t2), t3)
    return backend.decrypt(out)


def _backend_z_circuit(backend, z, zp, alpha, exp_l):
    sv_z = backend.encrypt(z)
    sv_zp = backend.encrypt(zp)
    sv_a = backend.encrypt(alpha)
    t1 = backend.mul(sv_a, backend.mul_plain(sv_zp, exp_l))
    out = backend.sub(backend.add(sv_z, t1), backend.mul(sv_a, sv_z))
    return backend.decrypt(out)


def _shadow_update(state, algo, h, alpha, theta, backend, cloud, request_id):
    """One shadow-table write through the protocol or the backend ops."""
    if cloud is not None:
        req = protocol.client_prepare(algo, h, state.shadow, alpha,
                                      theta.gamma, backend,
                                      request_id=request_id,
                                      cost_max=theta.cost_max)
        resp = cloud.evaluate(req)
        return protocol.client_finalize(resp, req, backend.keys)
    values = protocol.role_values(algo, h, state.shadow, alpha, theta.gamma)
    if algo in ("td0", "sarsa"):
        v = values["v"] if algo == "td0" else values["q"]
        vp = values["vp"] if algo == "td0" else values["qp"]
        return _backend_td_circuit(backend, v, vp, alpha, theta.gamma,
                                   values["r"])
    return _backend_z_circuit(backend, values["z"], values["zp"], alpha,
                              math.exp(-values["l"]))


def td0_update(state, h, theta, backend, cloud=None):
    """V(s) <- V(s) + a r + a g V(s') - a V(s); returns the learner state."""
    _ensure_shadow(state, backend)
    alpha = mdp.learning_rate(state.visits[h.s], theta.lr_constant)
    state.visits[h.s] += 1
    v, vp = state.table[h.s], state.table[h.s_next]
    state.table[h.s] = ((v + alpha * h.r) + (alpha * theta.gamma) * vp) \
        - alpha * v
    if state.shadow is not None:
        state.shadow[h.s] = _shadow_update(state, "td0", h, alpha, theta,
                                           backend, cloud, state.updates)
    state.updates += 1
    return state


def sarsa_update(state, h, theta, backend, cloud=None):
    """Q(s,a) <- Q(s,a) + a r + a g Q(s',a') - a Q(s,a)."""
    _ensure_shadow(state, backend)
    alpha = mdp.learning_rate(state.visits[h.s, h.a], theta.lr_constant)
    state.visits[h.s, h.a] += 1
    q = state.table[h.s, h.a]
    qp = 0.0 if h.a_next is None else state.table[h.s_next, h.a_next]
    state.table[h.s, h.a] = ((q + alpha * h.r)
                             + (alpha * theta.gamma) * qp) - alpha * q
    if state.shadow is not None:
        state.shadow[h.s, h.a] = _shadow_update(state, "sarsa", h, alpha,
                                                theta, backend, cloud,
                                                state.updates)
    state.updates += 1
    return state


def z_update(state, h, theta, backend, cloud=None):
    """Z(s) <- Z(s) + a exp(-l) Z(s') - a Z(s), desirability update.

    The plain table uses the exact exponential; the encrypted path replaces
    it with the degree-k Taylor circuit.
    """
    _ensure_shadow(state, backend)
    cost = h.cost
    if cost < 0.0 or cost > theta.cost_max:
        clipped = min(max(cost, 0.0), theta.cost_max)
        state.cost_clips += 1
        h = TransitionSample(s=h.s, a=h.a, r=h.r, s_next=h.s_next,
                             episode=h.episode, step=h.step, cost=clipped,
                             a_next=h.a_next)
    alpha = mdp.learning_rate(state.visits[h.s], theta.lr_constant)
    state.visits[h.s] += 1
    z, zp = state.table[h.s], state.table[h.s_next]
    state.table[h.s] = (z + alpha * (math.exp(-h.cost) * zp)) - alpha * z
    if state.table[h.s] < 0:
        state.negative_z_flags += 1
    if state.shadow is not None:
        state.shadow[h.s] = _shadow_update(state, "z", h, alpha, theta,
                                           backend, cloud, state.updates)
    state.updates += 1
    return state


def lookahead_q(state, env, s):
    """One-step lookahead on the online empirical model with the V table."""
    counts = state.model_counts[s]
    totals = counts.sum(axis=1)
    q = np.zeros(env.n_actions)
    nz = totals > 0
    if nz.any():
        p_hat = counts[nz] / totals[nz][:, None]
        r_hat = state.model_rewards[s][nz] / totals[nz]
        q[nz] = r_hat + env.gamma * (p_hat @ state.table)
    return q


def _policy_row(state, env, s):
    if state.algo == "td0":
        return lookahead_q(state, env, s)
    return state.table[s]


def run_learning(algo, env, theta, backend, episodes, seed, *,
                 max_updates=None, cloud=None, trace_state=0, start=0,
                 max_steps=100):
    """Full learning loop: sample, update both tables, record the trace.

    Runs `episodes` episodes (GLIE schedule across them) or stops early once
    `max_updates` table writes have happened.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 17]))
    state = init_state(algo, env)
    trace = ErrorTrace(tracked_state=trace_state)
    update = {"td0": td0_update, "sarsa": sarsa_update, "z": z_update}[algo]

    for ep in range(episodes):
        if max_updates is not None and state.updates >= max_updates:
            break
        eps = mdp.glie_epsilon(ep, episodes - 1)
        s = start
        a = (mdp.glie_action(_policy_row(state, env, s), eps, rng)
             if algo == "sarsa" else None)
        for step_i in range(max_steps):
            if env.terminal[s]:
                break
            if max_updates is not None and state.updates >= max_updates:
                break
            if algo == "z":
                h = mdp.passive_step(env, s, rng)
            else:
                act = a if algo == "sarsa" else mdp.glie_action(
                    _policy_row(state, env, s), eps, rng)
                h = mdp.step(env, s, act, rng)
                state.model_counts[h.s, h.a, h.s_next] += 1
                state.model_rewards[h.s, h.a] += h.r
                if algo == "sarsa":
                    if env.terminal[h.s_next]:
                        h.a_next = None
                    else:
                        h.a_next = mdp.glie_action(
                            _policy_row(state, env, h.s_next), eps, rng)
            h.episode, h.step = ep, step_i
            update(state, h, theta, backend, cloud=cloud)
            trace.record(state.table, state.shadow)
            s = h.s_next
            if algo == "sarsa":
                a = h.a_next
        state.episodes = ep + 1
    return state, trace


def greedy_policy(state, env):
    """Greedy action per state: lookahead Q for TD(0), the Q table for SARSA."""
    if state.algo == "td0":
        return np.array([int(np.argmax(lookahead_q(state, env, s)))
                         for s in range(env.n_states)])
    if state.algo == "sarsa":
        return state.table.argmax(axis=1)
    raise ValueError("greedy policy extraction needs td0 or sarsa")


def rollout(env, policy, start, goal, max_steps=100):
    """Follow a deterministic policy; reports (reached_goal, hit_trap, path)."""
    rng = np.random.default_rng(0)
    s = start
    path = [s]
    for _ in range(max_steps):
        if env.terminal[s]:
            break
        h = mdp.step(env, s, int(policy[s]), rng)
        s = h.s_next
        path.append(s)
    hit_goal = s == goal
    hit_trap = bool(env.terminal[s]) and not hit_goal
    return hit_goal, hit_trap, path


def write_trace_csv(path, trace):
    ts = trace.tracked_state + 1
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "max_norm_error", f"value_s{ts}",
                    f"error_s{ts}"])
        for i, (err, val, verr) in enumerate(zip(
                trace.max_errors, trace.tracked_values,
                trace.tracked_errors), start=1):
            w.writerow([i, repr(err), repr(val), repr(verr)])


def write_value_csv(path, table):
    values = np.asarray(table)
    if values.ndim == 2:
        values = values.max(axis=1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["state", "value"])
        for s, v in enumerate(values, start=1):
            w.writerow([s, repr(float(v))])
