"""Regularizers on per-state simplices, mirror maps, Fenchel couplings.

Two regularizer kinds are supported: negative entropy (default, mirror map
is the per-state softmax) and the squared Euclidean norm (mirror map is the
exact sort-based projection onto each state's simplex). Both are 1-strongly
convex in the Euclidean norm on the product of simplices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, xlogy

from .errors import DomainError
from .games import PolicyProfile, StochasticGame

ENTROPY = "entropy"
EUCLIDEAN = "euclidean"
KINDS = (ENTROPY, EUCLIDEAN)


@dataclass(frozen=True)
class Regularizer:
    """Per-player regularizer; same kind and modulus for every player."""

    kind: str
    modulus: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown regularizer kind {self.kind!r}; use {KINDS}")

    def block_value(self, block: np.ndarray) -> float:
        """Regularizer value of one player's (states x actions) policy block."""
        block = np.asarray(block, dtype=float)
        if self.kind == ENTROPY:
            return float(xlogy(block, block).sum())   # 0 log 0 = 0
        return 0.5 * float(np.sum(block * block))

    def value(self, policy: PolicyProfile) -> float:
        return sum(self.block_value(b) for b in policy.probs)

    def block_gradient(self, block: np.ndarray) -> np.ndarray:
        """Gradient of the block value; entropy kind requires interior input."""
        block = np.asarray(block, dtype=float)
        if self.kind == ENTROPY:
            if (block <= 0.0).any():
                raise DomainError("entropy gradient undefined on the boundary")
            return 1.0 + np.log(block)
        return block


def make_regularizer(name: str) -> Regularizer:
    return Regularizer(name)


def zero_scores(game: StochasticGame) -> list[np.ndarray]:
    """Fresh all-zero dual scores shaped like a policy profile."""
    return [np.zeros((game.n_states, m)) for m in game.n_actions]


@dataclass(frozen=True)
class FenchelReport:
    """Fenchel coupling between a profile and a dual score.

    bregman is the divergence to the mirrored point and is only defined when
    that point is interior; bregman_defined records this.
    """

    value: float
    per_player: np.ndarray
    conjugate: float
    mirrored: PolicyProfile
    bregman: float | None
    bregman_defined: bool


@dataclass(frozen=True)
class BoundCheck:
    lhs: float
    rhs: float
    holds: bool


# ---------------------------------------------------------------------------
# mirror maps


def softmax_rows(y: np.ndarray) -> np.ndarray:
    shifted = y - y.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def project_simplex(y: np.ndarray) -> np.ndarray:
    """Exact Euclidean projection of each row onto the probability simplex.

    Sort-based: find the largest support size k with threshold
    (cumsum - 1) / k below the k-th sorted value, then clip.
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    m = y.shape[1]
    sorted_desc = -np.sort(-y, axis=1)
    cumsum = np.cumsum(sorted_desc, axis=1)
    counts = np.arange(1, m + 1)
    theta = (cumsum - 1.0) / counts
    ok = sorted_desc - theta > 0
    k = ok.shape[1] - 1 - np.argmax(ok[:, ::-1], axis=1)   # last True per row
    row_theta = theta[np.arange(y.shape[0]), k]
    return np.clip(y - row_theta[:, None], 0.0, None)


def _map_block(reg: Regularizer, y: np.ndarray) -> np.ndarray:
    if not np.isfinite(y).all():
        raise DomainError("dual scores must be finite")
    if reg.kind == ENTROPY:
        return softmax_rows(y)
    return project_simplex(y)


def mirror_map(reg: Regularizer, scores) -> PolicyProfile:
    """Map dual scores to the feasible policy profile they select.

    Entropy kind gives the per-state softmax (logit choice); Euclidean kind
    gives the per-state simplex projection.
    """
    return PolicyProfile(tuple(_map_block(reg, np.asarray(y, float)) for y in scores))


def _conjugate_block(reg: Regularizer, y: np.ndarray) -> float:
    if reg.kind == ENTROPY:
        return float(logsumexp(y, axis=1).sum())
    q = project_simplex(y)
    return float(np.sum(y * q) - 0.5 * np.sum(q * q))


def conjugate(reg: Regularizer, scores) -> float:
    """Convex conjugate of the aggregate regularizer at the given scores."""
    return sum(_conjugate_block(reg, np.asarray(y, float)) for y in scores)


# ---------------------------------------------------------------------------
# couplings


def fenchel_coupling(reg: Regularizer, policy: PolicyProfile, scores) -> FenchelReport:
    """F(p, y) = h(p) + h*(y) - <y, p>, with the Bregman cross-check.

    The divergence D(p, Q(y)) is returned whenever the mirrored point is
    interior; for the entropy kind F equals the per-state KL divergence to
    the mirrored point.
    """
    scores = [np.asarray(y, float) for y in scores]
    per_player = np.array(
        [
            reg.block_value(p) + _conjugate_block(reg, y) - float(np.sum(y * p))
            for p, y in zip(policy.probs, scores)
        ]
    )
    mirrored = mirror_map(reg, scores)
    interior = all((b > 0.0).all() for b in mirrored.probs)
    bregman = None
    if interior:
        bregman = 0.0
        for p, q in zip(policy.probs, mirrored.probs):
            grad = reg.block_gradient(q)
            bregman += (
                reg.block_value(p) - reg.block_value(q) - float(np.sum(grad * (p - q)))
            )
    return FenchelReport(
        value=float(per_player.sum()),
        per_player=per_player,
        conjugate=conjugate(reg, scores),
        mirrored=mirrored,
        bregman=bregman,
        bregman_defined=interior,
    )


def fenchel_step_bound_check(
    reg: Regularizer, policy: PolicyProfile, scores, new_scores, slack: float = 1e-9
) -> BoundCheck:
    """Check the one-step coupling bound
    F(p, y') <= F(p, y) + <y' - y, Q(y) - p> + ||y' - y||^2 / (2 K)."""
    scores = [np.asarray(y, float) for y in scores]
    new_scores = [np.asarray(y, float) for y in new_scores]
    before = fenchel_coupling(reg, policy, scores)
    after = fenchel_coupling(reg, policy, new_scores)
    cross = sum(
        float(np.sum((y2 - y1) * (q - p)))
        for y1, y2, q, p in zip(scores, new_scores, before.mirrored.probs, policy.probs)
    )
    sq = sum(float(np.sum((y2 - y1) ** 2)) for y1, y2 in zip(scores, new_scores))
    rhs = before.value + cross + sq / (2.0 * reg.modulus)
    return BoundCheck(after.value, rhs, after.value <= rhs + slack)
