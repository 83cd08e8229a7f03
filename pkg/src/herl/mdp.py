"""Finite MDPs and the 6x6 grid-world environment.

States are indexed 0..n-1 (the grid row-major, top-left first; rendered
artifacts use 1-based labels). The nine grid actions are, in order:
up, up-right, right, down-right, down, down-left, left, up-left, stay.
Moves into a wall resolve to "stay". Traps and the goal are terminal:
their transition rows are self-loops with zero reward, so value tables pin
them at 0 without special-casing.
"""

import configparser
from dataclasses import dataclass

import numpy as np

from herl.errors import ConfigError, StructuralError

ACTIONS = ("up", "up-right", "right", "down-right", "down", "down-left",
           "left", "up-left", "stay")
_MOVES = ((-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1),
          (-1, -1), (0, 0))


@dataclass(frozen=True)
class Mdp:
    """Tabular MDP: transition kernel P(s'|s,a), rewards R(s,a,s')."""

    n_states: int
    n_actions: int
    P: np.ndarray
    R: np.ndarray
    gamma: float
    terminal: np.ndarray
    state_cost: np.ndarray | None = None

    def __post_init__(self):
        if not 0 <= self.gamma < 1:
            raise ValueError("discount must lie in [0, 1)")
        if self.P.shape != (self.n_states, self.n_actions, self.n_states):
            raise StructuralError("transition kernel has wrong shape")
        rows = self.P.sum(axis=2)
        if np.abs(rows - 1.0).max() > 1e-12:
            raise StructuralError("transition rows must sum to 1")

    def expected_reward(self):
        """R_bar(s,a) = sum_s' P(s'|s,a) R(s,a,s') (computed once)."""
        cached = getattr(self, "_r_bar", None)
        if cached is None:
            cached = (self.P * self.R).sum(axis=2)
            object.__setattr__(self, "_r_bar", cached)
        return cached


@dataclass(frozen=True)
class GridWorldConfig:
    width: int = 6
    height: int = 6
    start: tuple = (1, 1)            # (row, col), 1-based, top-left
    goal: tuple = (6, 6)
    traps: tuple = ((2, 3), (4, 2), (5, 5))
    gamma: float = 0.9
    reward_seed: int = 0
    step_reward_low: float = -0.1
    step_reward_high: float = 0.0
    goal_reward: float = 1.0
    trap_reward: float = -1.0
    max_episode_steps: int = 100

    def index(self, cell):
        r, c = cell
        if not (1 <= r <= self.height and 1 <= c <= self.width):
            raise ConfigError(f"cell {cell} outside the {self.height}x"
                              f"{self.width} grid")
        return (r - 1) * self.width + (c - 1)

    def cell(self, index):
        return (index // self.width + 1, index % self.width + 1)


@dataclass(frozen=True)
class Hyperparams:
    gamma: float = 0.9
    lr_constant: float = 500.0
    taylor_degree: int = 5
    cost_max: float = 1.0


@dataclass
class TransitionSample:
    """One step h_t = (s, a, r, s') plus bookkeeping indices.

    For Z-learning `a` is None and `cost` carries the state cost l(s);
    SARSA additionally records the already-chosen next action a'.
    """

    s: int
    a: int | None
    r: float
    s_next: int
    episode: int = 0
    step: int = 0
    cost: float | None = None
    a_next: int | None = None


def gridworld_build(cfg: GridWorldConfig) -> Mdp:
    """Deterministic grid world with terminal traps/goal and seeded rewards."""
    special = [cfg.goal, *cfg.traps]
    if len({cfg.index(c) for c in special}) != len(special):
        raise ConfigError("goal and trap cells must be distinct")
    if cfg.index(cfg.start) in {cfg.index(c) for c in special}:
        raise ConfigError("start cell cannot be terminal")
    n = cfg.width * cfg.height
    n_a = len(ACTIONS)
    goal = cfg.index(cfg.goal)
    traps = {cfg.index(c) for c in cfg.traps}
    terminal = np.zeros(n, dtype=bool)
    terminal[goal] = True
    terminal[list(traps)] = True

    rng = np.random.default_rng(cfg.reward_seed)
    step_rewards = rng.uniform(cfg.step_reward_low, cfg.step_reward_high,
                               size=(n, n_a))
    # state costs for Z-learning: negated step rewards, clipped to [0, 1]
    costs = np.clip(-rng.uniform(cfg.step_reward_low, cfg.step_reward_high,
                                 size=n), 0.0, 1.0)
    costs[goal] = 0.0
    costs[list(traps)] = 1.0

    P = np.zeros((n, n_a, n))
    R = np.zeros((n, n_a, n))
    for s in range(n):
        r, c = cfg.cell(s)
        for a, (dr, dc) in enumerate(_MOVES):
            if terminal[s]:
                P[s, a, s] = 1.0
                continue
            nr, nc = r + dr, c + dc
            if not (1 <= nr <= cfg.height and 1 <= nc <= cfg.width):
                nr, nc = r, c
            s2 = cfg.index((nr, nc))
            P[s, a, s2] = 1.0
            if s2 == goal:
                R[s, a, s2] = cfg.goal_reward
            elif s2 in traps:
                R[s, a, s2] = cfg.trap_reward
            else:
                R[s, a, s2] = step_rewards[s, a]
    return Mdp(n_states=n, n_actions=n_a, P=P, R=R, gamma=cfg.gamma,
               terminal=terminal, state_cost=costs)


def step(m: Mdp, s, a, rng) -> TransitionSample:
    """Sample one environment transition."""
    if m.terminal[s]:
        raise StructuralError(f"cannot step from terminal state {s}")
    s2 = int(rng.choice(m.n_states, p=m.P[s, a]))
    return TransitionSample(s=s, a=a, r=float(m.R[s, a, s2]), s_next=s2)


def passive_step(m: Mdp, s, rng) -> TransitionSample:
    """Uncontrolled transition: uniform over the distinct grid neighbors.

    Returns the state cost l(s) of the state being left, which is what the
    desirability update consumes.
    """
    if m.terminal[s]:
        raise StructuralError(f"cannot step from terminal state {s}")
    neighbors = np.unique(np.nonzero(m.P[s].sum(axis=0))[0])
    s2 = int(rng.choice(neighbors))
    cost = float(m.state_cost[s]) if m.state_cost is not None else 0.0
    return TransitionSample(s=s, a=None, r=0.0, s_next=s2, cost=cost)


def glie_epsilon(episode, total):
    """Linear decay from fully exploratory (1.0) to greedy (0.0).

    `total` is the last episode index; a single-episode run stays
    exploratory.
    """
    if not 0 <= episode <= max(total, 0):
        raise ValueError("episode outside [0, total]")
    if total <= 0:
        return 1.0
    return 1.0 - episode / total


def glie_action(q_row, eps, rng):
    """Epsilon-greedy with lowest-index tie-break on the greedy side."""
    if rng.random() < eps:
        return int(rng.integers(0, len(q_row)))
    return int(np.argmax(q_row))


def learning_rate(n_visits, constant=500.0):
    """alpha = c / (c + n); equals 1 at a first visit."""
    if n_visits < 0:
        raise ValueError("visit count must be >= 0")
    return constant / (constant + n_visits)


def estimate_model(samples, n_states, n_actions, gamma=0.9, terminal=None):
    """Empirical kernel P_hat = N(s,a,s')/N(s,a) and mean rewards per (s,a).

    Returns (Mdp, visited) where visited[s,a] flags rows backed by data;
    unvisited rows default to a self-loop to keep the kernel stochastic.
    """
    counts = np.zeros((n_states, n_actions, n_states))
    reward_sum = np.zeros((n_states, n_actions))
    for h in samples:
        counts[h.s, h.a, h.s_next] += 1
        reward_sum[h.s, h.a] += h.r
    totals = counts.sum(axis=2)
    visited = totals > 0
    P = np.zeros_like(counts)
    P[visited] = counts[visited] / totals[visited][:, None]
    idx = np.nonzero(~visited)
    P[idx[0], idx[1], idx[0]] = 1.0
    R = np.zeros((n_states, n_actions, n_states))
    R[visited] = (reward_sum[visited] / totals[visited])[:, None]
    if terminal is None:
        terminal = np.zeros(n_states, dtype=bool)
    est = Mdp(n_states=n_states, n_actions=n_actions, P=P, R=R, gamma=gamma,
              terminal=terminal)
    return est, visited


# ---------------------------------------------------------------------------
# Grid config files (key-value with sections)
# ---------------------------------------------------------------------------

def _parse_cell(text):
    parts = [int(x) for x in text.replace(";", ",").split(",") if x.strip()]
    if len(parts) != 2:
        raise ConfigError(f"expected 'row,col', got {text!r}")
    return tuple(parts)


def load_grid_config(path):
    """GridWorldConfig from an INI file (section [grid]; see README)."""
    cp = configparser.ConfigParser()
    read = cp.read(path)
    if not read:
        raise ConfigError(f"cannot read grid config {path}")
    if "grid" not in cp:
        raise ConfigError("grid config needs a [grid] section")
    g = cp["grid"]
    kwargs = {}
    for key in ("width", "height", "reward_seed", "max_episode_steps"):
        if key in g:
            kwargs[key] = g.getint(key)
    for key in ("gamma", "step_reward_low", "step_reward_high", "goal_reward",
                "trap_reward"):
        if key in g:
            kwargs[key] = g.getfloat(key)
    for key in ("start", "goal"):
        if key in g:
            kwargs[key] = _parse_cell(g[key])
    if "traps" in g:
        kwargs["traps"] = tuple(_parse_cell(c) for c in g["traps"].split(";")
                                if c.strip())
    return GridWorldConfig(**kwargs)


def save_grid_config(cfg, path):
    cp = configparser.ConfigParser()
    cp["grid"] = {
        "width": str(cfg.width),
        "height": str(cfg.height),
        "start": f"{cfg.start[0]},{cfg.start[1]}",
        "goal": f"{cfg.goal[0]},{cfg.goal[1]}",
        "traps": ";".join(f"{r},{c}" for r, c in cfg.traps),
        "gamma": repr(cfg.gamma),
        "reward_seed": str(cfg.reward_seed),
        "step_reward_low": repr(cfg.step_reward_low),
        "step_reward_high": repr(cfg.step_reward_high),
        "goal_reward": repr(cfg.goal_reward),
        "trap_reward": repr(cfg.trap_reward),
        "max_episode_steps": str(cfg.max_episode_steps),
    }
    with open(path, "w") as fh:
        cp.write(fh)
