"""Exact desk-scale analysis: values, advantages, payoff gradients, gaps.

Everything here assumes the induced chain is ergodic for the profiles it is
given and works in closed form: long-run average values come from the
stationary distribution, advantages from the average-reward Poisson
equation, and per-player payoff gradients from the product
stationary-weight times average advantage.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .errors import ContractError, DomainError, ErgodicityError
from .games import (
    ChainAnalysis,
    PolicyProfile,
    StochasticGame,
    analyze_chain,
    induced_transition_matrix,
    joint_weight_matrix,
    random_profile,
    stationary_distribution,
)


@dataclass(frozen=True)
class ValueReport:
    """Per-player long-run average values and expected stage rewards.

    values[i] equals stationary . stage_rewards[i] by construction.
    """

    values: np.ndarray          # (n_players,)
    stage_rewards: np.ndarray   # (n_players, n_states)
    stationary: np.ndarray      # (n_states,)
    chain: ChainAnalysis


@dataclass(frozen=True)
class AdvantageTable:
    """Joint and own-action advantages plus the relative-value vectors.

    joint[i, s, j] is player i's advantage of joint action j in state s;
    own[i] has shape (n_states, n_actions_i) and marginalizes opponents
    under the profile; bias[i] solves the Poisson equation with zero
    stationary mean.
    """

    joint: np.ndarray
    own: tuple[np.ndarray, ...]
    bias: np.ndarray
    values: np.ndarray
    stationary: np.ndarray


@dataclass(frozen=True)
class ExactGradient:
    """Per-player payoff gradient in policy coordinates.

    blocks[i][s, a] = stationary(s) * own_advantage_i(s, a).
    """

    blocks: tuple[np.ndarray, ...]
    values: np.ndarray
    stationary: np.ndarray
    provenance: str = "exact"


@dataclass(frozen=True)
class DominanceCheck:
    lhs: float
    rhs: float
    holds: bool


@dataclass(frozen=True)
class GapReport:
    """Unilateral best-response improvements per player."""

    gaps: np.ndarray
    values: np.ndarray
    best_values: np.ndarray
    best_actions: tuple[tuple[int, ...], ...]
    flags: tuple[str, ...]

    @property
    def max_gap(self) -> float:
        return float(self.gaps.max())


# ---------------------------------------------------------------------------
# values and advantages


def _stage_rewards(game, policy) -> np.ndarray:
    w = joint_weight_matrix(game, policy)
    return np.einsum("isj,sj->is", game.rewards, w)


def exact_value(game: StochasticGame, policy: PolicyProfile) -> ValueReport:
    """Long-run average payoff of every player under a stationary profile."""
    chain = analyze_chain(game, policy)
    R = _stage_rewards(game, policy)
    return ValueReport(R @ chain.stationary, R, chain.stationary, chain)


def opponent_weights(game, policy, state: int, player: int) -> np.ndarray:
    """Probability of each joint action's opponent part, per joint index."""
    table = game.action_table
    w = np.ones(game.n_joint)
    for j, block in enumerate(policy.probs):
        if j != player:
            w *= block[state, table[:, j]]
    return w


def advantages(game: StochasticGame, policy: PolicyProfile) -> AdvantageTable:
    """Advantage tables computed through the relative-value route.

    Solves (I - P + 1 p) h_i = R_i - V_i 1 per player (so p . h_i = 0), then
    joint[i, s, a] = r_i(s, a) - V_i + transitions[s, a] . h_i. The
    infinite-sum definition is recovered exactly; the truncated sum is kept
    as a test oracle.
    """
    report = exact_value(game, policy)
    P = report.chain.transition_matrix
    p = report.stationary
    n, S, J = game.n_players, game.n_states, game.n_joint

    A = np.eye(S) - P + np.outer(np.ones(S), p)
    bias = np.empty((n, S))
    try:
        for i in range(n):
            bias[i] = np.linalg.solve(A, report.stage_rewards[i] - report.values[i])
    except np.linalg.LinAlgError as exc:
        raise ErgodicityError(
            f"ergodicity check failed: singular fundamental matrix ({exc})"
        ) from exc

    joint = np.empty((n, S, J))
    for s in range(S):
        future = game.transitions[s] @ bias.T           # (J, n)
        joint[:, s, :] = (
            game.rewards[:, s, :] - report.values[:, None] + future.T
        )

    own = []
    table = game.action_table
    for i, m in enumerate(game.n_actions):
        block = np.zeros((S, m))
        for s in range(S):
            w = opponent_weights(game, policy, s, i)
            block[s] = np.bincount(table[:, i], weights=w * joint[i, s], minlength=m)
        own.append(block)
    return AdvantageTable(joint, tuple(own), bias, report.values, p)


def exact_gradient(game: StochasticGame, policy: PolicyProfile) -> ExactGradient:
    """Per-player payoff gradient: stationary weight times own advantage."""
    table = advantages(game, policy)
    blocks = tuple(table.stationary[:, None] * block for block in table.own)
    return ExactGradient(blocks, table.values, table.stationary)


def finite_difference_gradient(
    game: StochasticGame, policy: PolicyProfile, step: float = 1e-5
) -> tuple[np.ndarray, ...]:
    """Central finite differences of the value along simplex-tangent swaps.

    Returns per-player arrays of shape (n_states, n_actions - 1) holding the
    directional derivatives along e_a - e_last within each state, so the
    perturbed points remain valid policies. The policy must be interior by
    more than `step` in every coordinate.
    """
    out = []
    for i, m in enumerate(game.n_actions):
        block = np.zeros((game.n_states, m - 1))
        for s in range(game.n_states):
            for a in range(m - 1):
                direction = np.zeros(m)
                direction[a] = 1.0
                direction[m - 1] = -1.0
                plus = np.array(policy.probs[i])
                minus = np.array(policy.probs[i])
                plus[s] += step * direction
                minus[s] -= step * direction
                v_plus = exact_value(game, policy.replace(i, plus)).values[i]
                v_minus = exact_value(game, policy.replace(i, minus)).values[i]
                block[s, a] = (v_plus - v_minus) / (2.0 * step)
        out.append(block)
    return tuple(out)


def truncated_advantage_series(
    game: StochasticGame, policy: PolicyProfile, n_terms: int = 200
) -> np.ndarray:
    """Direct forward-recursion oracle for the advantage definition.

    Sums expected reward-minus-value terms for n_terms stages starting from
    each (state, joint action); the tail is geometrically small once the
    chain has mixed. Shape (n_players, n_states, n_joint).
    """
    report = exact_value(game, policy)
    P = report.chain.transition_matrix
    R = report.stage_rewards                      # (n, S)
    S, J = game.n_states, game.n_joint

    total = game.rewards - report.values[:, None, None]
    # mu[s, j] is the state distribution after taking joint action j in s
    mu = game.transitions.reshape(S * J, S).copy()
    for _ in range(1, n_terms + 1):
        term = mu @ R.T - report.values            # (S*J, n)
        total += term.T.reshape(game.n_players, S, J)
        mu = mu @ P
    return total


# ---------------------------------------------------------------------------
# equilibrium diagnostics


def check_gradient_dominance(
    game: StochasticGame,
    policy: PolicyProfile,
    deviation_policy: PolicyProfile,
    mismatch: float,
    tol: float = 1e-8,
) -> DominanceCheck:
    """Value gain of a unilateral deviation versus its linearized bound.

    lhs is the deviating player's value improvement, rhs is mismatch times
    the inner product of her payoff gradient with the policy difference;
    holds means lhs <= rhs + tol.
    """
    movers = [
        i
        for i in range(game.n_players)
        if not np.array_equal(policy.probs[i], deviation_policy.probs[i])
    ]
    if len(movers) > 1:
        raise ContractError(f"deviation changes players {movers}; exactly one allowed")
    if not movers:
        return DominanceCheck(0.0, 0.0, True)
    i = movers[0]
    base = exact_value(game, policy).values[i]
    moved = exact_value(game, policy.replace(i, deviation_policy.probs[i])).values[i]
    grad = exact_gradient(game, policy).blocks[i]
    lhs = float(moved - base)
    rhs = float(mismatch * np.sum(grad * (deviation_policy.probs[i] - policy.probs[i])))
    return DominanceCheck(lhs, rhs, lhs <= rhs + tol)


def estimate_mismatch(game: StochasticGame, policy_samples) -> float:
    """Sampled lower bound on the worst stationary-distribution ratio.

    Maximum over ordered sample pairs of max_s p(s) / p'(s). The true
    coefficient maximizes over all profile pairs, so this is a lower bound.
    """
    samples = list(policy_samples)
    if len(samples) < 2:
        raise DomainError("estimate_mismatch needs at least 2 sample policies")
    dists = np.array(
        [stationary_distribution(induced_transition_matrix(game, pi)) for pi in samples]
    )
    return float((dists.max(axis=0) / dists.min(axis=0)).max())


def _frozen_mdp(game, policy, player):
    """Single-agent average-reward MDP faced by `player` with others frozen."""
    S, m = game.n_states, game.n_actions[player]
    table = game.action_table
    P = np.zeros((S, m, S))
    R = np.zeros((S, m))
    for s in range(S):
        w = opponent_weights(game, policy, s, player)
        for j in range(game.n_joint):
            a = table[j, player]
            P[s, a] += w[j] * game.transitions[s, j]
            R[s, a] += w[j] * game.rewards[player, s, j]
    return P, R


def _evaluate_deterministic(P, R, actions):
    S = P.shape[0]
    rows = np.arange(S)
    P_pi = P[rows, actions]
    R_pi = R[rows, actions]
    p = stationary_distribution(P_pi)
    gain = float(p @ R_pi)
    A = np.eye(S) - P_pi + np.outer(np.ones(S), p)
    h = np.linalg.solve(A, R_pi - gain)
    return gain, h


def best_response(
    game: StochasticGame,
    policy: PolicyProfile,
    player: int,
    method: str = "policy-iteration",
    max_iters: int = 1000,
):
    """Optimal average reward of one player against a frozen profile.

    policy-iteration runs Howard improvement over deterministic stationary
    policies; enumerate scores every deterministic policy (use only when
    n_actions ** n_states is small). Returns (value, actions, flags).
    """
    P, R = _frozen_mdp(game, policy, player)
    S, m = R.shape
    flags: list[str] = []

    if method == "enumerate":
        best, best_actions = -np.inf, None
        for combo in product(range(m), repeat=S):
            actions = np.array(combo)
            try:
                gain, _ = _evaluate_deterministic(P, R, actions)
            except ErgodicityError:
                flags.append(f"player {player}: skipped non-ergodic candidate {combo}")
                continue
            if gain > best:
                best, best_actions = gain, tuple(combo)
        if best_actions is None:
            raise ErgodicityError(
                f"ergodicity check failed: no ergodic deterministic response "
                f"for player {player}"
            )
        return best, best_actions, tuple(flags)

    if method != "policy-iteration":
        raise DomainError(f"unknown best-response method {method!r}")

    actions = np.asarray([int(np.argmax(R[s])) for s in range(S)])
    gain, h = _evaluate_deterministic(P, R, actions)
    for _ in range(max_iters):
        q = R + P @ h                                  # (S, m)
        nxt = actions.copy()
        for s in range(S):
            best_a = int(np.argmax(q[s]))
            # keep the incumbent on ties so the iteration terminates
            if q[s, best_a] > q[s, actions[s]] + 1e-12:
                nxt[s] = best_a
        if np.array_equal(nxt, actions):
            return gain, tuple(int(a) for a in actions), tuple(flags)
        actions = nxt
        gain, h = _evaluate_deterministic(P, R, actions)
    raise ErgodicityError(
        f"policy iteration for player {player} did not settle in {max_iters} sweeps"
    )


def nash_gap(
    game: StochasticGame, policy: PolicyProfile, method: str = "policy-iteration"
) -> GapReport:
    """Best unilateral improvement available to each player.

    gap_i = max over player i's stationary policies of her value against the
    frozen opponents, minus her current value; the inner maximum is exact
    because a deterministic policy attains it.
    """
    values = exact_value(game, policy).values
    gaps = np.empty(game.n_players)
    best_vals = np.empty(game.n_players)
    best_actions = []
    flags: list[str] = []
    for i in range(game.n_players):
        val, actions, f = best_response(game, policy, i, method=method)
        best_vals[i] = val
        gaps[i] = val - values[i]
        best_actions.append(actions)
        flags.extend(f)
    return GapReport(gaps, values, best_vals, tuple(best_actions), tuple(flags))


def first_order_residual(game: StochasticGame, policy: PolicyProfile) -> float:
    """Largest linearized gain over the whole profile polytope.

    max over profiles pi' of <gradient, pi' - pi>; separates per (player,
    state) into a max over simplex vertices, so it is computed exactly.
    """
    grad = exact_gradient(game, policy)
    total = 0.0
    for block, probs in zip(grad.blocks, policy.probs):
        total += float(np.sum(block.max(axis=1) - np.sum(block * probs, axis=1)))
    return total


def lipschitz_probe(
    game: StochasticGame,
    n_pairs: int | None = None,
    rng=None,
    pairs=None,
    margin: float = 0.05,
) -> float:
    """Empirical Lipschitz constant of the stacked payoff gradient.

    Maximum over sampled policy pairs of the sup-norm gradient difference
    divided by the sup-norm policy difference. Identical pairs are skipped;
    if every pair is identical the probe is undefined.
    """
    rng = np.random.default_rng(rng)
    if pairs is None:
        if n_pairs is None or n_pairs < 1:
            raise DomainError("lipschitz_probe needs n_pairs >= 1 or explicit pairs")
        pairs = [
            (random_profile(game, rng, margin), random_profile(game, rng, margin))
            for _ in range(n_pairs)
        ]
    best = None
    for a, b in pairs:
        diff = max(
            float(np.abs(pa - pb).max()) for pa, pb in zip(a.probs, b.probs)
        )
        if diff == 0.0:
            continue
        ga = exact_gradient(game, a).blocks
        gb = exact_gradient(game, b).blocks
        gdiff = max(float(np.abs(x - y).max()) for x, y in zip(ga, gb))
        ratio = gdiff / diff
        best = ratio if best is None else max(best, ratio)
    if best is None:
        raise DomainError("degenerate pair: all sampled pairs are identical")
    return best
