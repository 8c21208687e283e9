"""One-point payoff-based gradient estimation in reduced policy coordinates.

A policy block with m actions per state is represented by its first m - 1
action probabilities per state (the last one is implied), which makes the
feasible set full-dimensional so sphere perturbations stay meaningful. A
safety net recenters perturbations toward the uniform policy so every
queried point is feasible, and the block lifting matrix carries reduced
vectors back to simplex-tangent policy-shaped tensors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ScheduleError
from .games import PolicyProfile, StochasticGame

REDUCED_TOL = 1e-12


# ---------------------------------------------------------------------------
# reduced coordinates


def reduce_block(block: np.ndarray) -> np.ndarray:
    """Drop the last action column of one player's (states x actions) block."""
    block = np.asarray(block, dtype=float)
    return np.array(block[:, :-1])


def lift_block(x: np.ndarray) -> np.ndarray:
    """Rebuild the full block; the last action gets 1 minus the row sum."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if (x < -REDUCED_TOL).any():
        s, a = np.argwhere(x < -REDUCED_TOL)[0]
        raise DomainError(f"reduced entry (state={s}, action={a}) is negative")
    rest = 1.0 - x.sum(axis=1)
    if (rest < -REDUCED_TOL).any():
        s = int(np.argwhere(rest < -REDUCED_TOL)[0][0])
        raise DomainError(f"reduced row (state={s}) sums to more than 1")
    x = np.clip(x, 0.0, None)
    return np.hstack([x, np.clip(rest, 0.0, None)[:, None]])


def reduce_policy(policy: PolicyProfile) -> list[np.ndarray]:
    return [reduce_block(b) for b in policy.probs]


def lift_policy(blocks) -> PolicyProfile:
    return PolicyProfile(tuple(lift_block(x) for x in blocks))


def reduced_dim(n_states: int, n_actions: int) -> int:
    return n_states * (n_actions - 1)


def reduced_from_full(grad_block: np.ndarray) -> np.ndarray:
    """Chain rule from policy coordinates: entry a becomes entry a minus the
    last action's entry within the same state."""
    g = np.asarray(grad_block, dtype=float)
    return g[:, :-1] - g[:, -1:]


# ---------------------------------------------------------------------------
# lifting matrices


@dataclass(frozen=True)
class Lifting:
    """Block-diagonal map from reduced vectors to simplex-tangent tensors.

    Each per-state block is the (m x (m-1)) matrix with the identity on top
    and a row of -1, so lifted tensors have zero action-sum in every state.
    """

    n_states: int
    n_actions: int
    block: np.ndarray
    matrix: np.ndarray
    op_norm: float

    def apply(self, reduced: np.ndarray) -> np.ndarray:
        """(states x (m-1)) or flat input -> (states x m) tangent tensor."""
        x = np.asarray(reduced, dtype=float).reshape(self.n_states, self.n_actions - 1)
        return x @ self.block.T


def lifting_for(n_states: int, n_actions: int) -> Lifting:
    if n_actions < 1:
        raise DomainError("n_actions must be positive")
    k = n_actions - 1
    block = np.vstack([np.eye(k), -np.ones((1, k))]) if k else np.zeros((1, 0))
    matrix = np.kron(np.eye(n_states), block)
    op_norm = float(np.linalg.norm(block, 2)) if k else 0.0
    return Lifting(n_states, n_actions, block, matrix, op_norm)


# ---------------------------------------------------------------------------
# safety net


@dataclass(frozen=True)
class SafetyNet:
    """Interior center and a radius whose ball stays inside the reduced set."""

    center: np.ndarray
    radius: float

    def contains(self, x: np.ndarray, tol: float = 1e-12) -> bool:
        x = np.asarray(x, dtype=float)
        return bool((x >= -tol).all() and (x.sum(axis=1) <= 1.0 + tol).all())


def safety_net_for(n_states: int, n_actions: int) -> SafetyNet:
    """Uniform-policy center with the exact inscribed Euclidean radius.

    Per state the binding facets sit at distance 1/m (coordinate floors) and
    (1/m)/sqrt(m-1) (the row-sum cap); the product over states keeps the
    same minimum. Single-action players get an empty net and are skipped by
    perturbation.
    """
    if n_actions < 1:
        raise DomainError("n_actions must be positive")
    k = n_actions - 1
    if k == 0:
        return SafetyNet(np.zeros((n_states, 0)), np.inf)
    center = np.full((n_states, k), 1.0 / n_actions)
    radius = min(1.0 / n_actions, (1.0 / n_actions) / np.sqrt(k))
    return SafetyNet(center, float(radius))


def sample_sphere(d: int, rng) -> np.ndarray:
    """Uniform draw from the unit sphere in d dimensions."""
    if d < 1:
        raise DomainError("sphere dimension must be at least 1")
    while True:
        z = rng.standard_normal(d)
        norm = np.linalg.norm(z)
        if norm > 1e-12:
            return z / norm


def perturb(x: np.ndarray, z: np.ndarray, delta: float, net: SafetyNet) -> np.ndarray:
    """Feasibility-adjusted query point x + delta * (z - (x - center)/radius).

    Equals the convex combination (1 - delta/radius) x + (delta/radius)
    (center + radius z), hence stays feasible whenever delta < radius.
    """
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float).reshape(x.shape)
    norm = np.linalg.norm(z)
    if abs(norm - 1.0) > 1e-12:
        raise DomainError(f"perturbation direction has norm {norm!r}, expected 1")
    if delta >= net.radius:
        raise ScheduleError(
            f"query radius {delta} exceeds safety radius {net.radius}"
        )
    lam = delta / net.radius
    return (1.0 - lam) * x + lam * (net.center + net.radius * z)


# ---------------------------------------------------------------------------
# the estimator


@dataclass(frozen=True)
class GradientEstimate:
    """Gradient-shaped estimate with its provenance.

    reduced is (states x (m-1)); lifted is the simplex-tangent (states x m)
    image whose last action coordinate is minus the sum of the others.
    """

    reduced: np.ndarray
    lifted: np.ndarray
    provenance: str


def estimate_gradient(
    payoff: float, z: np.ndarray, delta: float, lifting: Lifting
) -> GradientEstimate:
    """Scale the sphere direction by dim/delta times the observed payoff."""
    if delta <= 0.0:
        raise DomainError("delta must be positive")
    d = reduced_dim(lifting.n_states, lifting.n_actions)
    reduced = (d / delta) * float(payoff) * np.asarray(z, float).reshape(
        lifting.n_states, lifting.n_actions - 1
    )
    return GradientEstimate(reduced, lifting.apply(reduced), "spsa")


# ---------------------------------------------------------------------------
# smoothed-payoff diagnostics (oracle access to exact values)


@dataclass(frozen=True)
class BiasProbe:
    """Monte Carlo estimate of the smoothing bias of the estimator."""

    value: float
    per_player: tuple[np.ndarray, ...]
    stderr: float
    n_draws: int
    delta: float


def _nets_for(game: StochasticGame) -> list[SafetyNet]:
    return [safety_net_for(game.n_states, m) for m in game.n_actions]


def smoothed_gradient_estimate(
    game: StochasticGame,
    policy: PolicyProfile,
    delta: float,
    n_draws: int,
    rng,
    nets: list[SafetyNet] | None = None,
):
    """Monte Carlo mean of the oracle-payoff estimator, in reduced coordinates.

    All players are perturbed jointly through their safety nets and the
    exact value at the queried profile plays the role of the observed
    payoff. The current value is subtracted as a control variate, which
    leaves the mean unchanged and shrinks the variance. Returns (means,
    stderrs) as per-player (states x (m-1)) arrays.
    """
    from .analysis import exact_value

    nets = nets or _nets_for(game)
    base = reduce_policy(policy)
    active = [i for i, m in enumerate(game.n_actions) if m >= 2]
    if not active:
        raise DomainError("no player has at least 2 actions")
    for i in active:
        if delta >= nets[i].radius:
            raise ScheduleError(
                f"query radius {delta} exceeds safety radius {nets[i].radius}"
            )
    base_values = exact_value(game, policy).values
    dims = {i: reduced_dim(game.n_states, game.n_actions[i]) for i in active}

    sums = {i: np.zeros_like(base[i]) for i in active}
    sq_sums = {i: np.zeros_like(base[i]) for i in active}
    for _ in range(n_draws):
        zs = {i: sample_sphere(dims[i], rng) for i in active}
        queried = [
            perturb(base[i], zs[i], delta, nets[i]) if i in active else base[i]
            for i in range(game.n_players)
        ]
        values = exact_value(game, lift_policy(queried)).values
        for i in active:
            sample = (dims[i] / delta) * (values[i] - base_values[i]) * zs[i].reshape(
                base[i].shape
            )
            sums[i] += sample
            sq_sums[i] += sample * sample

    means, stderrs = [], []
    for i in range(game.n_players):
        if i not in active:
            means.append(np.zeros((game.n_states, 0)))
            stderrs.append(np.zeros((game.n_states, 0)))
            continue
        mean = sums[i] / n_draws
        var = np.clip(sq_sums[i] / n_draws - mean * mean, 0.0, None)
        means.append(mean)
        stderrs.append(np.sqrt(var / n_draws))
    return means, stderrs


def bias_probe(
    game: StochasticGame,
    policy: PolicyProfile,
    delta: float,
    n_draws: int = 20000,
    rng=None,
    nets: list[SafetyNet] | None = None,
) -> BiasProbe:
    """Sup-norm distance between the smoothed and exact reduced gradients.

    The smoothed gradient is estimated by Monte Carlo with oracle payoffs;
    the exact gradient comes from the closed-form analysis. The reported
    stderr is the largest per-coordinate Monte Carlo standard error.
    """
    from .analysis import exact_gradient

    rng = np.random.default_rng(rng)
    means, stderrs = smoothed_gradient_estimate(
        game, policy, delta, n_draws, rng, nets=nets
    )
    exact = [reduced_from_full(b) for b in exact_gradient(game, policy).blocks]
    diffs = tuple(m - e for m, e in zip(means, exact))
    finite = [np.abs(d).max() for d in diffs if d.size]
    err = [s.max() for s in stderrs if s.size]
    return BiasProbe(
        value=float(max(finite)) if finite else 0.0,
        per_player=diffs,
        stderr=float(max(err)) if err else 0.0,
        n_draws=n_draws,
        delta=delta,
    )
