"""Baseline agents and the episode loop tying them to the pseudo-count pipeline.

Learning happens after the episode: observations are embedded in one batch,
clustered, rewarded through the global table, and only then do the recorded
transitions reach the agent with their combined rewards.  That matches how
the intrinsic signal is defined (it needs the whole episode) and keeps the
environment loop cheap.
"""

from dataclasses import dataclass

import numpy as np

from .pseudocount import EpisodicClustering, RewardTrace, combine_rewards
from .rng import np_generator


class RandomAgent:
    """Uniform action choice; ignores rewards entirely."""

    def __init__(self, n_actions: int, seed: int = 0):
        self.n_actions = n_actions
        self._rng = np_generator(seed, "agent")

    def begin_episode(self, episode_index: int):
        pass

    def act(self, key) -> int:
        return int(self._rng.integers(self.n_actions))

    def update_batch(self, keys, actions, rewards, next_keys, dones):
        pass


class QLearningAgent:
    """Tabular Q-learning over hashable state keys, epsilon-greedy behaviour.

    Epsilon decays per episode from ``epsilon`` toward ``epsilon_final`` by a
    multiplicative factor.  Unvisited states start at ``q_init``; positive
    values keep untried actions attractive, which matters when the reward is
    a shrinking novelty bonus and plain zero-init would rank every explored
    state above every unexplored one.  Terminal transitions bootstrap nothing.
    """

    def __init__(self, n_actions: int, seed: int = 0, alpha: float = 0.5,
                 gamma: float = 0.99, epsilon: float = 1.0,
                 epsilon_final: float = 0.05, epsilon_decay: float = 0.97,
                 q_init: float = 0.0):
        if not 0.0 < alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {alpha}")
        if not 0.0 <= gamma < 1.0:
            raise ValueError(f"gamma must be in [0, 1), got {gamma}")
        if not 0.0 <= epsilon <= 1.0 or not 0.0 <= epsilon_final <= 1.0:
            raise ValueError("epsilon values must be in [0, 1]")
        if not 0.0 < epsilon_decay <= 1.0:
            raise ValueError(f"epsilon_decay must be in (0, 1], got {epsilon_decay}")
        self.n_actions = n_actions
        self.alpha = alpha
        self.gamma = gamma
        self.epsilon_initial = epsilon
        self.epsilon_final = epsilon_final
        self.epsilon_decay = epsilon_decay
        self.epsilon = epsilon
        self.q_init = q_init
        self._rng = np_generator(seed, "agent")
        self.q: dict = {}

    def begin_episode(self, episode_index: int):
        self.epsilon = max(self.epsilon_final,
                           self.epsilon_initial * self.epsilon_decay ** episode_index)

    def _values(self, key) -> np.ndarray:
        v = self.q.get(key)
        if v is None:
            v = np.full(self.n_actions, self.q_init, dtype=np.float64)
            self.q[key] = v
        return v

    def act(self, key) -> int:
        if self._rng.random() < self.epsilon:
            return int(self._rng.integers(self.n_actions))
        v = self._values(key)
        best = np.flatnonzero(v == v.max())
        if best.shape[0] == 1:
            return int(best[0])
        # break exact ties uniformly; a fixed argmax would park the agent on
        # "wait" whenever a state's values are all equal
        return int(best[self._rng.integers(best.shape[0])])

    def update_batch(self, keys, actions, rewards, next_keys, dones):
        # sweep the episode backwards so late rewards reach early states in
        # a single pass instead of one step per episode
        for key, a, r, nkey, done in reversed(list(zip(keys, actions, rewards,
                                                       next_keys, dones))):
            v = self._values(key)
            target = r if done else r + self.gamma * float(np.max(self._values(nkey)))
            v[a] += self.alpha * (target - v[a])


@dataclass
class EpisodeResult:
    actions: np.ndarray            # (T,) int64
    extrinsic: np.ndarray          # (T,) float64
    combined: np.ndarray           # (T,) float64
    embeddings: np.ndarray         # (T, d) float32, one per pre-action observation
    positions: np.ndarray          # (T, 2) float32 pre-action agent positions
    intrinsic: RewardTrace
    clustering: EpisodicClustering
    reached_goal: bool
    observations: list | None = None


def run_episode(env, agent, encoder, clusterer, table, *, ir_scale: float = 0.1,
                counter=None, episode_index: int = 0,
                collect_observations: bool = False) -> EpisodeResult:
    """One full episode: act, embed, cluster, reward, learn.

    ``clusterer`` may be None (pure extrinsic baseline); the table is left
    untouched and intrinsic rewards are zero.  Pre-action observations are
    the ones embedded, so intrinsic reward t describes the state in which
    action t was chosen.
    """
    agent.begin_episode(episode_index)
    state, obs = env.reset()
    observations = [obs]
    keys = [env.state_key(state)]
    positions = []
    actions: list[int] = []
    extrinsic: list[float] = []
    reached_goal = False
    done = False
    while not done:
        a = agent.act(keys[-1])
        positions.append((state.x, state.y))
        if counter is not None:
            counter.record(state.x, state.y)
        state, obs, r, done = env.step(state, a)
        actions.append(a)
        extrinsic.append(r)
        if r > 0.0:
            reached_goal = True
        if done:
            final_key = env.state_key(state)
        else:
            observations.append(obs)
            keys.append(env.state_key(state))

    t_total = len(actions)
    embeddings = encoder.encode_batch(observations)
    ext = np.asarray(extrinsic, dtype=np.float64)

    if clusterer is not None:
        clustering = clusterer.cluster(embeddings, episode_index)
        trace = table.process_episode(clustering)
        combined = combine_rewards(ext, trace, ir_scale)
    else:
        clustering = EpisodicClustering.from_labels(
            np.zeros((1, embeddings.shape[1])), np.zeros(t_total, dtype=np.int64))
        trace = RewardTrace(
            rewards=np.zeros(t_total), pseudo_counts=np.zeros(t_total, dtype=np.int64),
            table_indices=np.full(t_total, -1, dtype=np.int64))
        combined = ext

    next_keys = keys[1:] + [final_key]
    dones = [False] * (t_total - 1) + [True]
    agent.update_batch(keys, actions, combined, next_keys, dones)

    return EpisodeResult(
        actions=np.asarray(actions, dtype=np.int64),
        extrinsic=ext,
        combined=combined,
        embeddings=embeddings,
        positions=np.asarray(positions, dtype=np.float32),
        intrinsic=trace,
        clustering=clustering,
        reached_goal=reached_goal,
        observations=observations if collect_observations else None,
    )
