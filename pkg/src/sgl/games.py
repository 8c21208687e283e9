"""Finite stochastic games, stationary policies, induced chains, rollouts.

A game couples per-player reward tensors with a controlled Markov chain over
a finite state set. Policies are stationary: one mixed action per (player,
state). Joint actions are flattened row-major with the LAST player's action
varying fastest; every tensor in this package and in the JSON file format
shares that convention, so indices are bit-exact across I/O and oracles.
"""

from __future__ import annotations

import hashlib
import json
import math
from bisect import bisect_right
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .errors import DimensionError, DomainError, ErgodicityError, GameFormatError

ROW_SUM_TOL = 1e-12
STATIONARY_TOL = 1e-10
_UNIT_EIG_TOL = 1e-9
_POWER_TOL = 1e-12
_POWER_CAP = 1_000_000


# ---------------------------------------------------------------------------
# core types


@dataclass(frozen=True)
class StochasticGame:
    """Finite stochastic game.

    rewards has shape (n_players, n_states, n_joint) and transitions has
    shape (n_states, n_joint, n_states); the joint-action axis uses the
    shared row-major flattening (last player fastest).
    """

    n_states: int
    n_actions: tuple[int, ...]
    rewards: np.ndarray
    transitions: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_states < 1:
            raise GameFormatError("n_states must be a positive integer")
        n_actions = tuple(int(m) for m in self.n_actions)
        if not n_actions or any(m < 1 for m in n_actions):
            raise GameFormatError("every player needs at least one action")
        object.__setattr__(self, "n_actions", n_actions)

        rewards = np.asarray(self.rewards, dtype=float)
        transitions = np.asarray(self.transitions, dtype=float)
        n_joint = int(np.prod(n_actions))
        if rewards.shape != (len(n_actions), self.n_states, n_joint):
            raise GameFormatError(
                f"rewards shape {rewards.shape} != "
                f"{(len(n_actions), self.n_states, n_joint)}"
            )
        if transitions.shape != (self.n_states, n_joint, self.n_states):
            raise GameFormatError(
                f"transitions shape {transitions.shape} != "
                f"{(self.n_states, n_joint, self.n_states)}"
            )

        bad = np.argwhere(~np.isfinite(rewards))
        if bad.size:
            i, s, j = bad[0]
            raise GameFormatError(
                f"reward entry (player={i}, state={s}, joint_action={j}) is not finite"
            )
        bad = np.argwhere(transitions < 0.0)
        if bad.size:
            s, j, s2 = bad[0]
            raise GameFormatError(
                f"transition entry (state={s}, joint_action={j}, next_state={s2}) "
                f"is negative: {transitions[s, j, s2]!r}"
            )
        sums = transitions.sum(axis=2)
        bad = np.argwhere(np.abs(sums - 1.0) > ROW_SUM_TOL)
        if bad.size:
            s, j = bad[0]
            raise GameFormatError(
                f"transition row (state={s}, joint_action={j}) sums to {sums[s, j]!r}"
            )

        rewards.flags.writeable = False
        transitions.flags.writeable = False
        object.__setattr__(self, "rewards", rewards)
        object.__setattr__(self, "transitions", transitions)
        # joint index -> per-player action ids, row-major, last player fastest
        table = np.array(list(np.ndindex(*n_actions)), dtype=int)
        table.flags.writeable = False
        object.__setattr__(self, "_action_table", table)

    @property
    def n_players(self) -> int:
        return len(self.n_actions)

    @property
    def n_joint(self) -> int:
        return self.transitions.shape[1]

    @property
    def players(self) -> list[tuple[int, int]]:
        return list(enumerate(self.n_actions))

    @property
    def action_table(self) -> np.ndarray:
        """(n_joint, n_players) array mapping joint index to action ids."""
        return self._action_table

    def joint_index(self, actions) -> int:
        return int(np.ravel_multi_index(tuple(actions), self.n_actions))

    def joint_actions(self, index: int) -> tuple[int, ...]:
        return tuple(int(a) for a in np.unravel_index(index, self.n_actions))

    def max_abs_reward(self, player: int | None = None) -> float:
        if player is None:
            return float(np.abs(self.rewards).max())
        return float(np.abs(self.rewards[player]).max())


@dataclass(frozen=True)
class PolicyProfile:
    """One probability vector over actions per (player, state)."""

    probs: tuple[np.ndarray, ...]

    def __post_init__(self):
        blocks = []
        for i, block in enumerate(self.probs):
            arr = np.asarray(block, dtype=float)
            if arr.ndim != 2:
                raise DimensionError(f"player {i} policy must be 2-d (states x actions)")
            if (arr < -ROW_SUM_TOL).any():
                s, a = np.argwhere(arr < -ROW_SUM_TOL)[0]
                raise GameFormatError(
                    f"policy entry (player={i}, state={s}, action={a}) is negative"
                )
            sums = arr.sum(axis=1)
            off = np.argwhere(np.abs(sums - 1.0) > ROW_SUM_TOL)
            if off.size:
                s = int(off[0][0])
                raise GameFormatError(
                    f"policy row (player={i}, state={s}) sums to {sums[s]!r}"
                )
            arr = np.clip(arr, 0.0, None)
            arr.flags.writeable = False
            blocks.append(arr)
        object.__setattr__(self, "probs", tuple(blocks))

    @property
    def n_players(self) -> int:
        return len(self.probs)

    @property
    def n_states(self) -> int:
        return self.probs[0].shape[0]

    def replace(self, player: int, block: np.ndarray) -> "PolicyProfile":
        blocks = list(self.probs)
        blocks[player] = np.asarray(block, dtype=float)
        return PolicyProfile(tuple(blocks))


@dataclass(frozen=True)
class TrajectoryStep:
    """One realized stage of play."""

    t: int
    state: int
    joint_action: tuple[int, ...]
    rewards: np.ndarray


@dataclass(frozen=True)
class ChainAnalysis:
    """Induced chain of one policy profile plus its contraction certificate.

    contraction is the Dobrushin coefficient of the transition matrix; it
    upper-bounds the one-step l1 contraction factor of the chain, and
    tau = -1/log(contraction) is the implied mixing constant.
    """

    transition_matrix: np.ndarray
    stationary: np.ndarray
    contraction: float
    tau: float


@dataclass(frozen=True)
class MixingCertificate:
    """Sampled contraction certificate over a finite set of policies.

    This is a certificate over the sampled policies only, not a proof over
    the whole policy space. When every raw transition entry is at least
    eps_floor > 0, the chain contracts for all profiles; that sufficient
    condition is reported alongside.
    """

    contraction: float
    tau: float
    ok: bool
    n_policies: int
    failing_index: int | None
    eps_floor: float

    @property
    def instant_mixing(self) -> bool:
        return self.contraction == 0.0


# ---------------------------------------------------------------------------
# policy constructors


def uniform_profile(game: StochasticGame) -> PolicyProfile:
    return PolicyProfile(
        tuple(np.full((game.n_states, m), 1.0 / m) for m in game.n_actions)
    )


def random_profile(game, rng, margin: float = 0.0) -> PolicyProfile:
    """Random policy profile; margin blends toward uniform so that every
    action keeps probability at least margin / n_actions."""
    blocks = []
    for m in game.n_actions:
        raw = rng.dirichlet(np.ones(m), size=game.n_states)
        if margin:
            raw = (1.0 - margin) * raw + margin / m
        blocks.append(raw)
    return PolicyProfile(tuple(blocks))


def deterministic_profile(game: StochasticGame, actions) -> PolicyProfile:
    """Pure profile; actions[i][s] is the action player i takes in state s."""
    blocks = []
    for i, m in enumerate(game.n_actions):
        block = np.zeros((game.n_states, m))
        for s in range(game.n_states):
            block[s, actions[i][s]] = 1.0
        blocks.append(block)
    return PolicyProfile(tuple(blocks))


def profile_vector(policy: PolicyProfile) -> np.ndarray:
    """Flatten a profile into one vector (players concatenated)."""
    return np.concatenate([b.ravel() for b in policy.probs])


def profile_distance(a: PolicyProfile, b: PolicyProfile, ord=2) -> float:
    return float(np.linalg.norm(profile_vector(a) - profile_vector(b), ord))


# ---------------------------------------------------------------------------
# induced chain


def _check_compatible(game: StochasticGame, policy: PolicyProfile) -> None:
    if policy.n_players != game.n_players:
        raise DimensionError(
            f"policy has {policy.n_players} players, game has {game.n_players}"
        )
    for i, (block, m) in enumerate(zip(policy.probs, game.n_actions)):
        if block.shape != (game.n_states, m):
            raise DimensionError(
                f"player {i} policy shape {block.shape} != {(game.n_states, m)}"
            )


def joint_weight_matrix(game, policy) -> np.ndarray:
    """(n_states, n_joint) probabilities of every joint action per state."""
    w = np.ones((game.n_states, 1))
    for block in policy.probs:
        w = (w[:, :, None] * block[:, None, :]).reshape(game.n_states, -1)
    return w


def joint_action_weights(game, policy, state: int) -> np.ndarray:
    """Probability of each joint action in `state` under the profile."""
    w = np.ones(1)
    for block in policy.probs:
        w = (w[:, None] * block[state][None, :]).ravel()
    return w


def induced_transition_matrix(game: StochasticGame, policy: PolicyProfile) -> np.ndarray:
    """State transition matrix of the chain induced by a profile.

    Row s is the joint-action-probability-weighted mixture of the raw
    transition rows at s; rows sum to one within 1e-12 by construction.
    """
    _check_compatible(game, policy)
    w = joint_weight_matrix(game, policy)
    return np.einsum("sj,sjt->st", w, game.transitions)


def _power_iteration(P: np.ndarray, tol: float = _POWER_TOL, cap: int = _POWER_CAP):
    n = P.shape[0]
    p = np.full(n, 1.0 / n)
    for _ in range(cap):
        nxt = p @ P
        if np.abs(nxt - p).sum() < tol:
            return nxt / nxt.sum()
        p = nxt
    raise ErgodicityError(
        f"ergodicity check failed: power iteration did not converge in {cap} steps"
    )


def stationary_distribution(P: np.ndarray) -> np.ndarray:
    """Unique stationary distribution of an ergodic row-stochastic matrix.

    Solves the balance equations directly (transpose system with a
    normalization row appended); power iteration is the fallback and
    cross-check. Raises ErgodicityError, naming the failing check, when the
    chain is not ergodic.
    """
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise DimensionError(f"transition matrix must be square, got {P.shape}")
    if np.abs(P.sum(axis=1) - 1.0).max() > 1e-9 or (P < -ROW_SUM_TOL).any():
        raise DomainError("matrix is not row-stochastic")

    eigvals = np.linalg.eigvals(P)
    n_unit = int(np.sum(np.abs(eigvals) > 1.0 - _UNIT_EIG_TOL))
    if n_unit != 1:
        raise ErgodicityError(
            "ergodicity check failed: unit-circle eigenvalue count "
            f"{n_unit} != 1 (chain reducible or periodic)"
        )

    n = P.shape[0]
    A = np.vstack([P.T - np.eye(n), np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    p, *_ = np.linalg.lstsq(A, b, rcond=None)
    p = np.clip(p, 0.0, None)
    total = p.sum()
    if total <= 0:
        raise ErgodicityError("ergodicity check failed: linear solve degenerate")
    p = p / total
    if np.abs(p @ P - p).sum() > STATIONARY_TOL:
        p = _power_iteration(P)
    residual = np.abs(p @ P - p).sum()
    if residual > STATIONARY_TOL:
        raise ErgodicityError(
            f"ergodicity check failed: fixed-point residual {residual:.3e} "
            f"> {STATIONARY_TOL}"
        )
    return p


def dobrushin_coefficient(P: np.ndarray) -> float:
    """Half the maximum l1 distance between two rows of P.

    Coefficients below 1e-12 are snapped to zero so that chains whose rows
    are identical up to roundoff report instant mixing.
    """
    P = np.asarray(P, dtype=float)
    diffs = np.abs(P[:, None, :] - P[None, :, :]).sum(axis=2)
    c = float(diffs.max() / 2.0)
    return 0.0 if c < 1e-12 else c


def _tau_from_contraction(c: float) -> float:
    if c <= 0.0:
        return 0.0
    if c >= 1.0:
        return math.inf
    return -1.0 / math.log(c)


def analyze_chain(game: StochasticGame, policy: PolicyProfile) -> ChainAnalysis:
    P = induced_transition_matrix(game, policy)
    p = stationary_distribution(P)
    c = dobrushin_coefficient(P)
    return ChainAnalysis(P, p, c, _tau_from_contraction(c))


def certify_mixing(game: StochasticGame, sample_policies) -> MixingCertificate:
    """Worst-case Dobrushin contraction over a finite sample of policies.

    Returns the maximum coefficient over the sample and the implied mixing
    constant; a coefficient of 1 for any sample is reported as a failure
    (the index of the first offending policy is recorded).
    """
    policies = list(sample_policies)
    if not policies:
        raise DomainError("certify_mixing needs a non-empty policy sample")
    worst = 0.0
    failing = None
    for k, policy in enumerate(policies):
        c = dobrushin_coefficient(induced_transition_matrix(game, policy))
        worst = max(worst, c)
        if c >= 1.0 - 1e-15 and failing is None:
            failing = k
    ok = failing is None
    return MixingCertificate(
        contraction=worst,
        tau=_tau_from_contraction(worst) if ok else math.inf,
        ok=ok,
        n_policies=len(policies),
        failing_index=failing,
        eps_floor=float(game.transitions.min()),
    )


def certification_sample(game, n_random: int = 8, rng=None, corner_cap: int = 64):
    """Uniform profile, pure-profile corners (capped), and random draws."""
    rng = np.random.default_rng(rng)
    samples = [uniform_profile(game)]
    n_corners = 1
    for m in game.n_actions:
        n_corners *= m ** game.n_states
    if n_corners <= corner_cap:
        per_player = [
            list(product(range(m), repeat=game.n_states)) for m in game.n_actions
        ]
        for combo in product(*per_player):
            actions = [[combo[i][s] for s in range(game.n_states)] for i in range(game.n_players)]
            samples.append(deterministic_profile(game, actions))
    else:
        for _ in range(corner_cap // 2):
            actions = [
                rng.integers(0, m, size=game.n_states) for m in game.n_actions
            ]
            samples.append(deterministic_profile(game, actions))
    for _ in range(n_random):
        samples.append(random_profile(game, rng))
    return samples


# ---------------------------------------------------------------------------
# simulation


def _cdf_rows(mat: np.ndarray) -> list[list[float]]:
    return [np.cumsum(row).tolist() for row in mat]


def rollout(game, policy, start_state: int, horizon: int, rng):
    """Simulate `horizon` stages; returns (states, actions, rewards) arrays.

    states has shape (horizon,), actions (horizon, n_players) and rewards
    (horizon, n_players). Deterministic given the rng seed.
    """
    _check_compatible(game, policy)
    if horizon < 1:
        raise DomainError("horizon must be at least 1")
    if not 0 <= start_state < game.n_states:
        raise DomainError(f"start_state {start_state} out of range")

    n = game.n_players
    pol_cdf = [_cdf_rows(block) for block in policy.probs]
    trans_cdf = [_cdf_rows(game.transitions[s]) for s in range(game.n_states)]
    strides = np.cumprod((game.n_actions + (1,))[::-1])[::-1][1:]  # row-major strides

    u = rng.random((horizon, n + 1))
    states = np.empty(horizon, dtype=int)
    actions = np.empty((horizon, n), dtype=int)
    rewards = np.empty((horizon, n))
    s = start_state
    for t in range(horizon):
        joint = 0
        row = u[t]
        for i in range(n):
            a = bisect_right(pol_cdf[i][s], row[i])
            a = min(a, game.n_actions[i] - 1)  # guard cumulative rounding
            actions[t, i] = a
            joint += a * strides[i]
        states[t] = s
        rewards[t] = game.rewards[:, s, joint]
        s = bisect_right(trans_cdf[s][joint], row[n])
        s = min(s, game.n_states - 1)
    return states, actions, rewards


def simulate(game, policy, start_state, horizon, rng) -> list[TrajectoryStep]:
    """Rollout packaged as a list of TrajectoryStep records."""
    states, actions, rewards = rollout(game, policy, start_state, horizon, rng)
    return [
        TrajectoryStep(t, int(states[t]), tuple(int(a) for a in actions[t]), rewards[t])
        for t in range(horizon)
    ]


# ---------------------------------------------------------------------------
# file format


def game_to_dict(game: StochasticGame) -> dict:
    out = {
        "n_states": game.n_states,
        "actions": list(game.n_actions),
        "rewards": game.rewards.tolist(),
        "transitions": game.transitions.tolist(),
    }
    if game.meta:
        out["meta"] = game.meta
    return out


def game_from_dict(data: dict) -> StochasticGame:
    try:
        n_states = int(data["n_states"])
        actions = tuple(int(m) for m in data["actions"])
        rewards = np.asarray(data["rewards"], dtype=float)
        transitions = np.asarray(data["transitions"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise GameFormatError(f"malformed game document: {exc}") from exc
    meta = data.get("meta", {})
    if not isinstance(meta, dict):
        raise GameFormatError("meta must be an object")
    return StochasticGame(n_states, actions, rewards, transitions, meta)


def save_game(game: StochasticGame, path) -> None:
    with open(path, "w") as fh:
        json.dump(game_to_dict(game), fh, indent=1)
        fh.write("\n")


def load_game(path) -> StochasticGame:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise GameFormatError(f"not valid JSON: {exc}") from exc
    return game_from_dict(data)


def game_hash(game: StochasticGame) -> str:
    blob = json.dumps(game_to_dict(game), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def policy_to_dict(policy: PolicyProfile) -> dict:
    return {"probs": [block.tolist() for block in policy.probs]}


def policy_from_dict(data: dict) -> PolicyProfile:
    try:
        blocks = tuple(np.asarray(b, dtype=float) for b in data["probs"])
    except (KeyError, TypeError, ValueError) as exc:
        raise GameFormatError(f"malformed policy document: {exc}") from exc
    return PolicyProfile(blocks)


def save_policy(policy: PolicyProfile, path) -> None:
    with open(path, "w") as fh:
        json.dump(policy_to_dict(policy), fh, indent=1)
        fh.write("\n")


def load_policy(path) -> PolicyProfile:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise GameFormatError(f"not valid JSON: {exc}") from exc
    return policy_from_dict(data)
