"""Dynamic programming with and without bounded per-backup noise.

The noisy variants perturb every Q(s,a) by a fresh w with |w| <= eps before
the max, which realizes V~_{k+1} = T V~_k + w~_k with ||w~_k||_inf <= eps.
Checkers compare trailing-window gaps against the eps/(1-gamma) bound for
synchronous sweeps and M*eps/(1-gamma) at sweep-subsequence points for
asynchronous updates.

Terminal states are pinned at value 0 throughout (their rows are absorbing
self-loops with zero reward, so this is also the fixed point).
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from herl.errors import HerlError, StructuralError


class AssumptionViolation(HerlError):
    """A state was starved of updates beyond the configured horizon."""


def q_backup(m, V):
    """Q(s,a) = sum_s' P(s'|s,a) [R + gamma V(s')]."""
    V = np.asarray(V, dtype=np.float64)
    if V.shape != (m.n_states,):
        raise StructuralError("value table has wrong length")
    return m.expected_reward() + m.gamma * (m.P @ V)


def bellman_backup(m, V):
    """(TV)(s) = max_a Q(s,a); terminal states stay 0."""
    out = q_backup(m, V).max(axis=1)
    out[m.terminal] = 0.0
    return out


@dataclass
class ViResult:
    V: np.ndarray
    iterations: int
    converged: bool
    residual: float


def vi_sync(m, V0=None, tol=1e-8, max_iter=10_000):
    """Iterate T until the sup-norm step is below tol."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    V = (np.zeros(m.n_states) if V0 is None
         else np.array(V0, dtype=np.float64))
    for k in range(1, max_iter + 1):
        nxt = bellman_backup(m, V)
        residual = np.abs(nxt - V).max()
        V = nxt
        if residual <= tol:
            return ViResult(V=V, iterations=k, converged=True,
                            residual=residual)
    return ViResult(V=V, iterations=max_iter, converged=False,
                    residual=residual)


def _draw_noise(rng, shape, eps, mode):
    if eps == 0.0:
        return np.zeros(shape)
    if mode == "adversarial":
        return np.full(shape, eps)
    if mode == "uniform":
        return rng.uniform(-eps, eps, shape)
    raise ValueError(f"unknown noise mode {mode!r}")


def vi_sync_noisy(m, V0=None, eps=0.0, iters=500, seed=0, mode="uniform"):
    """Trajectory of the noisy synchronous VI (row k = table after k sweeps)."""
    if eps < 0:
        raise ValueError("eps must be >= 0")
    rng = np.random.default_rng(seed)
    V = (np.zeros(m.n_states) if V0 is None
         else np.array(V0, dtype=np.float64))
    out = np.empty((iters + 1, m.n_states))
    out[0] = V
    nonterm = ~m.terminal
    for k in range(1, iters + 1):
        q = q_backup(m, V) + _draw_noise(rng, (m.n_states, m.n_actions), eps,
                                         mode)
        V = np.where(nonterm, q.max(axis=1), 0.0)
        out[k] = V
    return out


def vi_async(m, V0=None, order=(), eps=0.0, seed=0, mode="uniform",
             starvation_horizon=None):
    """Asynchronous (one state per step, in place) VI, optionally noisy.

    `order` is the visit sequence; it must sweep every state often enough
    (Assumption-1 style) for the bound to mean anything. If a
    starvation_horizon is set, a state unseen for that many consecutive
    updates raises AssumptionViolation.
    """
    if eps < 0:
        raise ValueError("eps must be >= 0")
    rng = np.random.default_rng(seed)
    order = np.asarray(list(order), dtype=np.int64)
    V = (np.zeros(m.n_states) if V0 is None
         else np.array(V0, dtype=np.float64))
    out = np.empty((len(order) + 1, m.n_states))
    out[0] = V
    last_seen = np.zeros(m.n_states, dtype=np.int64)
    r_bar = m.expected_reward()
    for t, s in enumerate(order, start=1):
        if not m.terminal[s]:
            q = r_bar[s] + m.gamma * (m.P[s] @ V)
            if eps:
                q = q + _draw_noise(rng, m.n_actions, eps, mode)
            V[s] = q.max()
        last_seen[s] = t
        if starvation_horizon is not None and t - last_seen.min() > \
                starvation_horizon:
            starved = int(np.argmin(last_seen))
            raise AssumptionViolation(
                f"state {starved} unvisited for more than "
                f"{starvation_horizon} updates (t={t})")
        out[t] = V
    return out


def vi_async_egreedy(m, eps=0.0, steps=1000, seed=0, mode="uniform",
                     explore_eps=0.3):
    """Asynchronous noisy VI along an epsilon-greedy exploration trace.

    The visit order follows simulated transitions (greedy w.r.t. the current
    table with probability 1-explore_eps), restarting from a random
    non-terminal state at terminals so every state keeps getting swept.
    Returns (trajectory, visit order).
    """
    rng = np.random.default_rng(seed)
    noise_rng = np.random.default_rng(np.random.SeedSequence([seed, 3]))
    V = np.zeros(m.n_states)
    out = np.empty((steps + 1, m.n_states))
    out[0] = V
    order = np.empty(steps, dtype=np.int64)
    r_bar = m.expected_reward()
    nonterm = np.nonzero(~m.terminal)[0]
    deterministic = bool(np.all(np.count_nonzero(m.P, axis=2) == 1))
    nxt = m.P.argmax(axis=2) if deterministic else None
    s = int(nonterm[0])
    for t in range(1, steps + 1):
        order[t - 1] = s
        if m.terminal[s]:
            # pinned no-op update, then restart the exploration episode
            out[t] = V
            s = int(rng.choice(nonterm))
            continue
        q = r_bar[s] + m.gamma * (m.P[s] @ V)
        noisy_q = q + _draw_noise(noise_rng, m.n_actions, eps, mode)
        V[s] = noisy_q.max()
        if rng.random() < explore_eps:
            a = int(rng.integers(0, m.n_actions))
        else:
            a = int(np.argmax(q))
        if deterministic:
            s = int(nxt[s, a])
        else:
            s = int(rng.choice(m.n_states, p=m.P[s, a]))
        out[t] = V
    return out, order


@dataclass
class SweepTracker:
    """Sub-sequence k_0=0 < k_1 < ... where each interval covers every state."""

    n_states: int
    k_points: list = field(default_factory=lambda: [0])
    _pending: set = field(default_factory=set)
    _count: int = 0

    def __post_init__(self):
        if not self._pending:
            self._pending = set(range(self.n_states))

    def push(self, state):
        self._count += 1
        self._pending.discard(int(state))
        if not self._pending:
            self.k_points.append(self._count)
            self._pending = set(range(self.n_states))

    @property
    def M(self):
        """Largest number of updates needed to complete one sweep."""
        gaps = [b - a for a, b in zip(self.k_points, self.k_points[1:])]
        return max(gaps) if gaps else None


def sweep_track(updates, n_states):
    tracker = SweepTracker(n_states=n_states)
    for s in updates:
        tracker.push(s)
    return tracker


@dataclass
class BoundReport:
    name: str
    observed: float
    bound: float
    passed: bool
    eps: float
    gamma: float
    window_points: int
    M: int | None = None

    def to_text(self):
        status = "PASS" if self.passed else "FAIL"
        m_part = f" M={self.M}" if self.M is not None else ""
        return (f"{self.name}: observed={self.observed:.6g} "
                f"bound={self.bound:.6g}{m_part} eps={self.eps} "
                f"gamma={self.gamma} window={self.window_points} -> {status}")


def _trailing(idx_count, fraction=0.25):
    start = int(np.floor(idx_count * (1 - fraction)))
    return min(start, idx_count - 1)


def check_thm1(m, eps, trajectory, v_star=None, window=0.25):
    """Sync bound: trailing max ||V* - V~_k||_inf <= eps/(1-gamma)."""
    if len(trajectory) < 2:
        raise ValueError("trajectory too short for a trailing window")
    if v_star is None:
        v_star = vi_sync(m, tol=1e-10, max_iter=100_000).V
    gaps = np.abs(trajectory - v_star).max(axis=1)
    start = _trailing(len(gaps), window)
    observed = float(gaps[start:].max())
    bound = eps / (1.0 - m.gamma)
    return BoundReport(name="theorem-1-sync", observed=observed, bound=bound,
                       passed=observed <= bound, eps=eps, gamma=m.gamma,
                       window_points=len(gaps) - start)


def check_thm2(m, eps, trajectory, tracker, v_star=None, window=0.25):
    """Async bound at sweep points: trailing max <= M*eps/(1-gamma)."""
    if tracker.M is None:
        raise ValueError("tracker never completed a sweep")
    if v_star is None:
        v_star = vi_sync(m, tol=1e-10, max_iter=100_000).V
    points = [k for k in tracker.k_points if k < len(trajectory)]
    if len(points) < 2:
        raise ValueError("not enough subsequence points in the trajectory")
    gaps = np.abs(trajectory[points] - v_star).max(axis=1)
    start = _trailing(len(gaps), window)
    observed = float(gaps[start:].max())
    bound = tracker.M * eps / (1.0 - m.gamma)
    return BoundReport(name="theorem-2-async", observed=observed, bound=bound,
                       passed=observed <= bound, eps=eps, gamma=m.gamma,
                       window_points=len(gaps) - start, M=tracker.M)


def dump_trajectory_csv(path, trajectory, v_star):
    """Long-format dump: iteration, state, value, gap-to-Vstar."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "state", "value", "gap_to_vstar"])
        for k, row in enumerate(trajectory):
            for s, val in enumerate(row):
                w.writerow([k, s + 1, repr(float(val)),
                            repr(float(abs(val - v_star[s])))])
