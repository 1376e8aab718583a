"""Behavior strategies: deterministic maps from public histories to mixed actions.

Enforcement strategies (grim trigger and both test-then-punish variants)
share read-only test state owned by the episode; all monitoring players see
the same verdicts. Punishment is absorbing: once a strategy outputs the
punishment action it does so at every later history.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .game import (
    GameError,
    MixedAction,
    MixedProfile,
    PayoffTarget,
    StageGame,
    pure_action_payoffs,
    tv_ball_contains,
)
from .sequential import BatchTestState, EProcessState, StalenessError


class ModeError(ValueError):
    """History mode incompatible with the strategy."""


class ConfigurationError(ValueError):
    """Missing or invalid strategy configuration."""


@dataclass
class PublicHistory:
    """Append-only record of play visible to every player.

    In imperfect mode each round is a tuple of realized pure-action indices;
    in perfect mode each round is the joint MixedProfile actually played.
    """

    mode: str = "imperfect"
    rounds: list = field(default_factory=list)

    def __post_init__(self):
        if self.mode not in ("imperfect", "perfect"):
            raise ModeError(f"unknown history mode {self.mode!r}")

    def __len__(self) -> int:
        return len(self.rounds)

    def append(self, joint) -> None:
        if self.mode == "imperfect":
            self.rounds.append(tuple(int(a) for a in joint))
        else:
            if not isinstance(joint, MixedProfile):
                joint = MixedProfile(tuple(joint))
            self.rounds.append(joint)


def grim_trigger_act(history: PublicHistory, target: PayoffTarget, player: int) -> MixedAction:
    """Cooperate while every recorded joint profile equals the cooperative one.

    Requires perfect monitoring: the branch condition is a set equality on
    actual mixed profiles, compared exactly (1e-12 tolerance).
    """
    if history.mode != "perfect":
        raise ModeError("grim trigger needs a perfect-monitoring history")
    for joint in history.rounds:
        if not joint.close_to(target.cooperative):
            return target.punishment[player]
    return target.cooperative[player]


def anytime_ttp_act(shared_tests, target: PayoffTarget, player: int,
                    t: int | None = None) -> MixedAction:
    """Cooperate while no player's e-process test has ever fired."""
    for state in shared_tests:
        if t is not None and state.t != t:
            raise StalenessError(
                f"test state for player {state.player} at t={state.t}, round is {t}"
            )
        if state.fired_at is not None:
            return target.punishment[player]
    return target.cooperative[player]


def batch_ttp_act(shared_tests, target: PayoffTarget, player: int, t: int) -> MixedAction:
    """Cooperate through batch 0, then while no completed batch was rejected.

    A rejection at batch kappa sends every player to punishment from the
    first round of batch kappa + 1.
    """
    for state in shared_tests:
        if not isinstance(state, BatchTestState) or state.batch_length < 1:
            raise ConfigurationError("batch test states need a configured batch length")
    batch_length = shared_tests[0].batch_length
    k_t = t // batch_length
    if k_t == 0:
        return target.cooperative[player]
    for state in shared_tests:
        if state.fired_at_batch is not None and state.fired_at_batch <= k_t - 1:
            return target.punishment[player]
    return target.cooperative[player]


class Stationary:
    """Plays one fixed mixed action at every history."""

    def __init__(self, action):
        self.action = action if isinstance(action, MixedAction) else MixedAction(action)

    def act(self, history, t: int) -> MixedAction:
        return self.action


class SmallBall(Stationary):
    """Stationary action on the boundary of the TV ball around the cooperative action.

    Mass epsilon is moved along a payoff-increasing direction, so the emitted
    action sits at L1 distance exactly 2 epsilon from the reference.
    """

    def __init__(self, game: StageGame, target: PayoffTarget, player: int,
                 epsilon: float, direction=None):
        if epsilon < 0.0:
            raise ConfigurationError("epsilon must be nonnegative")
        ref = target.cooperative[player].probs
        if direction is not None:
            d = np.asarray(direction, dtype=float)
            if d.size != ref.size or abs(d.sum()) > 1e-9:
                raise ConfigurationError("direction must match the action set and sum to 0")
            norm = np.abs(d).sum()
            if norm == 0.0:
                raise ConfigurationError("direction must be nonzero")
            probs = ref + d * (2.0 * epsilon / norm)
            if np.any(probs < -1e-12) or np.any(probs > 1.0 + 1e-12):
                raise ConfigurationError("boundary point leaves the simplex")
        else:
            probs = self._payoff_increasing(game, target, player, ref, epsilon)
        self.epsilon = epsilon
        super().__init__(MixedAction(probs))

    @staticmethod
    def _payoff_increasing(game, target, player, ref, epsilon):
        # Shift mass from the worst stage actions to the best one.
        payoffs = pure_action_payoffs(game, target.cooperative, player)
        best = int(np.argmax(payoffs))
        probs = ref.copy()
        remaining = epsilon
        for a in np.argsort(payoffs, kind="stable"):
            if a == best or remaining <= 0.0:
                continue
            take = min(probs[a], remaining)
            probs[a] -= take
            probs[best] += take
            remaining -= take
        if remaining > 1e-12:
            raise ConfigurationError(
                f"cannot move mass {epsilon} off the cooperative action"
            )
        return probs


class BatchAdversarial:
    """Commits per batch to a pure multiset matching the cooperative frequencies.

    The multiset is the integer count vector closest to L * w in L1 (ties
    toward lower action index), so the batch test accepts it whenever
    delta > K / L; for delta <= K / L the strategy falls back to playing the
    cooperative mixed action itself. Actions are ordered by descending stage
    payoff against the cooperative opponents, front-loading value under
    discounting.
    """

    def __init__(self, game: StageGame, target: PayoffTarget, player: int,
                 batch_length: int, delta: float):
        if batch_length < 2:
            raise ConfigurationError("batch length must be >= 2")
        if delta <= 0.0:
            raise ConfigurationError("delta must be positive")
        self.batch_length = batch_length
        self.delta = delta
        self.player = player
        ref = target.cooperative[player].probs
        num_actions = ref.size
        self.num_actions = num_actions
        counts = self._rounded_counts(ref, batch_length)
        distance = np.abs(counts / batch_length - ref).sum()
        if distance >= delta:
            # Counts cannot be placed strictly inside the acceptance region.
            self.schedule = None
            self.fallback = target.cooperative[player]
            return
        payoffs = pure_action_payoffs(game, target.cooperative, player)
        order = sorted(range(num_actions), key=lambda a: (-payoffs[a], a))
        schedule = []
        for a in order:
            schedule.extend([a] * int(counts[a]))
        self.schedule = np.array(schedule, dtype=np.int64)
        self.fallback = None

    @staticmethod
    def _rounded_counts(ref: np.ndarray, batch_length: int) -> np.ndarray:
        scaled = ref * batch_length
        counts = np.floor(scaled).astype(np.int64)
        shortfall = batch_length - int(counts.sum())
        frac = scaled - counts
        for a in sorted(range(ref.size), key=lambda a: (-frac[a], a))[:shortfall]:
            counts[a] += 1
        return counts

    def act(self, history, t: int) -> MixedAction:
        if self.schedule is None:
            return self.fallback
        probs = np.zeros(self.num_actions)
        probs[int(self.schedule[t % self.batch_length])] = 1.0
        return MixedAction(probs)


class OneShotDeviation:
    """A grim-trigger follower forced to play one pure action at a fixed round.

    Outside the forced round it behaves like everyone else: cooperate on a
    clean perfect-monitoring history, punish forever after any off-path
    round (including its own forced deviation).
    """

    def __init__(self, target: PayoffTarget, player: int, at_round: int, action: int):
        self.target = target
        self.player = player
        self.at_round = at_round
        probs = np.zeros(len(target.cooperative[player]))
        probs[action] = 1.0
        self.deviation = MixedAction(probs)

    def act(self, history, t: int) -> MixedAction:
        if t == self.at_round:
            return self.deviation
        if history.mode == "perfect":
            return grim_trigger_act(history, self.target, self.player)
        return self.target.cooperative[self.player]


def make_deviation(kind: str, params: dict):
    """Build a deviation strategy from a named family.

    Kinds: ``stationary`` (probs), ``small_ball`` (game, target, player,
    epsilon, optional direction), ``batch_adversarial`` (game, target,
    player, batch_length, delta).
    """
    if kind == "stationary":
        return Stationary(params["probs"])
    if kind == "small_ball":
        return SmallBall(params["game"], params["target"], params["player"],
                         params["epsilon"], params.get("direction"))
    if kind == "batch_adversarial":
        return BatchAdversarial(params["game"], params["target"], params["player"],
                                params["batch_length"], params["delta"])
    raise ConfigurationError(f"unknown deviation kind {kind!r}")
