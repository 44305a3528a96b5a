"""Q-learning of the threshold-switching policy.

A small Q-network maps the six-dimensional rolling state to action values
for the two thresholds.  Training follows the classic recipe: epsilon-greedy
exploration with optional action holding (a fresh action only every
``action_hold`` steps), a FIFO replay buffer with uniform sampling, a frozen
target network refreshed every ``target_copy_every`` episodes, and bootstrap
targets r + gamma * max_a' Q_target(s', a') that collapse to r on terminal
transitions.  Gradient updates happen only at episode end, one summed
squared-error minibatch step per update.

Episodes replay the same training segment end to end; exploration decays
once per episode.  Inference is greedy (epsilon 0, no holding) and ties in
the action values break toward action 0 (the active threshold).
"""

import json
import os
from typing import NamedTuple

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from ._io import atomic_write_text
from .env import ACTION_THRESHOLDS, N_ACTIONS, STATE_DIM, EnvConfig, ThresholdingEnv, classify
from .nn import Mlp, make_optimizer
from .validation import check_positive_int


class Transition(NamedTuple):
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    terminal: bool


class ReplayMemory:
    """Bounded FIFO transition store with uniform sampling."""

    def __init__(self, capacity):
        check_positive_int(capacity, "capacity")
        self.capacity = capacity
        self._items = []
        self._write = 0

    def __len__(self):
        return len(self._items)

    def push(self, transition):
        if len(self._items) < self.capacity:
            self._items.append(transition)
        else:
            # Ring overwrite: the oldest transition goes first.
            self._items[self._write] = transition
            self._write = (self._write + 1) % self.capacity

    def sample(self, batch_size, rng):
        """Uniform minibatch; samples with replacement only when the buffer
        holds fewer than ``batch_size`` transitions."""
        if not self._items:
            raise ValueError("replay memory is empty")
        replace = len(self._items) < batch_size
        idx = rng.choice(len(self._items), size=batch_size, replace=replace)
        return [self._items[i] for i in idx]


def select_action(q_net, state_vector, t, action_hold, epsilon, previous_action, rng):
    """Epsilon-greedy with action holding.

    A fresh action is drawn only when ``t % action_hold == 0`` (steps are
    0-based inside an episode, so the first step always draws); otherwise the
    previous action is repeated regardless of epsilon.  Greedy ties break
    toward action 0.
    """
    if t % action_hold != 0:
        if previous_action is None:
            raise ValueError("no previous action to hold")
        return previous_action
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(0, N_ACTIONS))
    return int(np.argmax(q_net.forward(state_vector)))


def compute_targets(batch, target_net, gamma):
    """Bootstrap targets: r on terminals, else r + gamma * max Q_target(s')."""
    rewards = np.array([tr.reward for tr in batch], dtype=np.float64)
    terminals = np.array([tr.terminal for tr in batch], dtype=bool)
    next_states = np.stack([tr.next_state for tr in batch])
    q_next = target_net.forward(next_states)
    return np.where(terminals, rewards, rewards + gamma * q_next.max(axis=1))


class DqnThresholder(BaseEstimator):
    """Dynamic-threshold detector trained with deep Q-learning.

    ``fit`` expects the scored training segment (scores in [0, 1]) with its
    ground-truth window labels; ``decision_trace``/``predict`` replay a
    held-out stream greedily.  Identical data, parameters and random_state
    give bit-identical fitted networks and predictions.
    """

    def __init__(self, lookback=2, alpha=0.9, beta=0.1, action_hold=1,
                 episodes=2000, gamma=0.99, epsilon=1.0, epsilon_min=0.01,
                 epsilon_decay=0.999, target_copy_every=10, minibatch=32,
                 replay_capacity=10000, lr=1e-3, hidden=(64, 64),
                 optimizer="adam", updates_per_episode=1, random_state=0):
        self.lookback = lookback
        self.alpha = alpha
        self.beta = beta
        self.action_hold = action_hold
        self.episodes = episodes
        self.gamma = gamma
        self.epsilon = epsilon
        self.epsilon_min = epsilon_min
        self.epsilon_decay = epsilon_decay
        self.target_copy_every = target_copy_every
        self.minibatch = minibatch
        self.replay_capacity = replay_capacity
        self.lr = lr
        self.hidden = hidden
        self.optimizer = optimizer
        self.updates_per_episode = updates_per_episode
        self.random_state = random_state

    def _env_config(self):
        return EnvConfig(lookback=self.lookback, alpha=self.alpha, beta=self.beta)

    def _validate_params(self):
        check_positive_int(self.action_hold, "action_hold")
        check_positive_int(self.episodes, "episodes")
        check_positive_int(self.target_copy_every, "target_copy_every")
        check_positive_int(self.minibatch, "minibatch")
        check_positive_int(self.updates_per_episode, "updates_per_episode")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must be in [0, 1]")
        if not 0.0 <= self.epsilon_min <= self.epsilon <= 1.0:
            raise ValueError("need 0 <= epsilon_min <= epsilon <= 1")
        if not 0.0 < self.epsilon_decay <= 1.0:
            raise ValueError("epsilon_decay must be in (0, 1]")

    def fit(self, scores, truths):
        """Train the policy by replaying the segment for ``episodes`` episodes."""
        self._validate_params()
        env = ThresholdingEnv(scores, truths, self._env_config())
        rng = np.random.default_rng(self.random_state)
        q_net = Mlp([STATE_DIM, *self.hidden, N_ACTIONS], "identity", rng)
        target_net = q_net.clone()
        opt = make_optimizer(self.optimizer, self.lr)
        replay = ReplayMemory(self.replay_capacity)
        eps = float(self.epsilon)
        log = []
        for episode in range(1, self.episodes + 1):
            state_vec = env.reset().as_vector()
            previous = None
            total = 0.0
            for t in range(env.n_steps):
                action = select_action(
                    q_net, state_vec, t, self.action_hold, eps, previous, rng
                )
                outcome = env.step(action)
                next_vec = outcome.state.as_vector()
                replay.push(Transition(state_vec, action, outcome.reward,
                                       next_vec, outcome.terminal))
                total += outcome.reward
                state_vec = next_vec
                previous = action
            for _ in range(self.updates_per_episode):
                self._gradient_step(q_net, target_net, opt, replay, rng)
            log.append((episode, total, eps))
            eps = max(self.epsilon_min, eps * self.epsilon_decay)
            if episode % self.target_copy_every == 0:
                target_net.copy_parameters_from(q_net)
        self.q_net_ = q_net
        self.target_net_ = target_net
        self.training_log_ = log
        self.final_epsilon_ = eps
        if not np.all(np.isfinite(q_net.forward(np.zeros(STATE_DIM)))):
            raise RuntimeError(
                "Q-network diverged to non-finite values; lower lr or check the reward scale"
            )
        return self

    def _gradient_step(self, q_net, target_net, opt, replay, rng):
        batch = replay.sample(self.minibatch, rng)
        states = np.stack([tr.state for tr in batch])
        actions = np.array([tr.action for tr in batch])
        targets = compute_targets(batch, target_net, self.gamma)
        q_all, cache = q_net.forward_cache(states)
        rows = np.arange(len(batch))
        # Summed squared error over the minibatch, on the taken actions only.
        err = np.zeros_like(q_all)
        err[rows, actions] = 2.0 * (q_all[rows, actions] - targets)
        opt.step(q_net, q_net.backward(cache, err))

    def _check_fitted(self):
        if not hasattr(self, "q_net_"):
            raise NotFittedError("DqnThresholder is not fitted; call fit first")

    def decision_trace(self, scores, truths):
        """Greedy pass over a stream: per-window (threshold, prediction).

        The first ``lookback`` windows are warm-up and get the passive
        threshold; every later window gets the policy's choice.  The stream
        must contain at least lookback + 1 windows.
        """
        self._check_fitted()
        env = ThresholdingEnv(scores, truths, self._env_config())
        state_vec = env.reset().as_vector()
        n = len(env.scores)
        k = self.lookback
        thresholds = np.empty(n, dtype=np.float64)
        predictions = np.empty(n, dtype=np.int64)
        passive = ACTION_THRESHOLDS[1]
        for i in range(k):
            thresholds[i] = passive
            predictions[i] = classify(float(env.scores[i]), passive)
        q_net = self.q_net_
        for i in range(k, n):
            action = int(np.argmax(q_net.forward(state_vec)))
            outcome = env.step(action)
            thresholds[i] = outcome.threshold
            predictions[i] = outcome.prediction
            state_vec = outcome.state.as_vector()
        return thresholds, predictions

    def predict(self, scores, truths):
        """Greedy per-window anomaly predictions for a labeled stream."""
        return self.decision_trace(scores, truths)[1]

    def save(self, prefix):
        """Write <prefix>.json (hyperparameters) and <prefix>.net.w (Q-net)."""
        self._check_fitted()
        net_file = os.path.basename(prefix) + ".net.w"
        header = {
            "format": 1,
            "params": {k: (list(v) if isinstance(v, tuple) else v)
                       for k, v in self.get_params().items()},
            "final_epsilon": self.final_epsilon_,
            "net_file": net_file,
        }
        atomic_write_text(prefix + ".json", json.dumps(header, indent=2) + "\n")
        self.q_net_.save(os.path.join(os.path.dirname(prefix) or ".", net_file))

    @classmethod
    def load(cls, prefix):
        with open(prefix + ".json", "r", encoding="utf-8") as fh:
            header = json.load(fh)
        if header.get("format") != 1:
            raise ValueError(f"{prefix}.json: unsupported policy format {header.get('format')}")
        params = dict(header["params"])
        if isinstance(params.get("hidden"), list):
            params["hidden"] = tuple(params["hidden"])
        est = cls(**params)
        est.q_net_ = Mlp.load(os.path.join(os.path.dirname(prefix) or ".", header["net_file"]))
        est.target_net_ = est.q_net_.clone()
        est.training_log_ = []
        est.final_epsilon_ = header.get("final_epsilon", est.epsilon_min)
        if est.q_net_.layer_sizes[0] != STATE_DIM or est.q_net_.layer_sizes[-1] != N_ACTIONS:
            raise ValueError(f"{prefix}: weight file shape does not match the state/action space")
        return est
