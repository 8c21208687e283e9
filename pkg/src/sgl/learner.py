"""Payoff-only bandit learning loop over a shared game trajectory.

Each outer iteration perturbs every player's reduced policy through a
safety net, plays the fixed perturbed profile for a scheduled number of
stages so the chain approaches stationarity, reads one instantaneous reward
per player as a value sample, turns it into a one-point gradient estimate,
and applies a mirror-descent style dual update. The game is never reset:
the state carries over between outer iterations.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ErgodicityError, ScheduleError
from .games import (
    PolicyProfile,
    StochasticGame,
    certification_sample,
    certify_mixing,
    game_hash,
    rollout,
    _cdf_rows,
)
from .mirror import ENTROPY, Regularizer, fenchel_coupling, _map_block
from .spsa import (
    Lifting,
    SafetyNet,
    lift_block,
    lifting_for,
    perturb,
    reduced_dim,
    reduced_from_full,
    safety_net_for,
    smoothed_gradient_estimate,
)

CSV_COLUMNS = (
    "t",
    "gamma",
    "delta",
    "horizon",
    "player",
    "value",
    "fenchel",
    "nash_gap",
    "dist_to_ref",
    "est_norm",
)


# ---------------------------------------------------------------------------
# schedules


@dataclass(frozen=True)
class Schedule:
    """Step-size, query-radius, and stage-window schedules.

    gamma(t) = gamma_scale / (t+1)^gamma_exp, delta(t) likewise; the window
    is ceil(horizon_param * log(t+2)) + 1 in log mode and
    ceil((t+1)^horizon_param) + 1 in power mode.
    """

    gamma_exp: float
    delta_exp: float
    gamma_scale: float = 1.0
    delta_scale: float = 0.25
    horizon_mode: str = "log"
    horizon_param: float = 1.0

    def __post_init__(self):
        if self.horizon_mode not in ("log", "power"):
            raise ScheduleError(f"unknown horizon mode {self.horizon_mode!r}")
        if self.gamma_scale <= 0 or self.delta_scale <= 0:
            raise ScheduleError("schedule scales must be positive")

    def gamma(self, t: int) -> float:
        return self.gamma_scale / (t + 1) ** self.gamma_exp

    def delta(self, t: int) -> float:
        return self.delta_scale / (t + 1) ** self.delta_exp

    def horizon(self, t: int) -> int:
        if self.horizon_mode == "log":
            return int(math.ceil(self.horizon_param * math.log(t + 2))) + 1
        return int(math.ceil((t + 1) ** self.horizon_param)) + 1

    def to_dict(self) -> dict:
        return {
            "gamma_exp": self.gamma_exp,
            "delta_exp": self.delta_exp,
            "gamma_scale": self.gamma_scale,
            "delta_scale": self.delta_scale,
            "horizon_mode": self.horizon_mode,
            "horizon_param": self.horizon_param,
        }


def min_safety_radius(game: StochasticGame) -> float:
    radii = [
        safety_net_for(game.n_states, m).radius for m in game.n_actions if m >= 2
    ]
    if not radii:
        raise DomainError("every player has a single action; nothing to learn")
    return min(radii)


def default_schedule(
    game: StochasticGame,
    tau: float | None = None,
    gamma_exp: float = 1.0,
    delta_exp: float = 1.0 / 3.0,
    gamma_scale: float = 1.0,
) -> Schedule:
    """Exponents (1, 1/3), query scale a quarter of the tightest safety
    radius, and a log window twice the certified mixing constant."""
    if tau is None:
        tau = certify_mixing(game, certification_sample(game, rng=0)).tau
    return Schedule(
        gamma_exp=gamma_exp,
        delta_exp=delta_exp,
        gamma_scale=gamma_scale,
        delta_scale=0.25 * min_safety_radius(game),
        horizon_mode="log",
        horizon_param=2.0 * tau,
    )


def sqrt_horizon_schedule(game: StochasticGame, gamma_scale: float = 1.0) -> Schedule:
    """Preset with exponents (1, 1/3) and window ceil(sqrt(t+1)) + 1, usable
    when the mixing constant is unknown."""
    return Schedule(
        gamma_exp=1.0,
        delta_exp=1.0 / 3.0,
        gamma_scale=gamma_scale,
        delta_scale=0.25 * min_safety_radius(game),
        horizon_mode="power",
        horizon_param=0.5,
    )


SCHEDULE_PRESETS = ("default", "sqrt-horizon")


@dataclass(frozen=True)
class ScheduleReport:
    """Pass/fail record of the summability conditions a schedule must meet."""

    conditions: dict
    notes: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return all(self.conditions.values())


def validate_schedule(schedule: Schedule, tau: float) -> ScheduleReport:
    """Check the power-law summability conditions symbolically.

    The five requirements: both step sequences vanish, the step sizes still
    sum to infinity, gamma * delta is summable, (gamma/delta)^2 is summable,
    and the window term (gamma/delta) * e^(-T/tau) is summable. Failing
    schedules are reported, never rejected.
    """
    p, q = schedule.gamma_exp, schedule.delta_exp
    notes: list[str] = []
    conditions = {
        "vanishing_steps": p > 0 and q > 0,
        "infinite_travel": p <= 1,
        "gamma_delta_summable": p + q > 1,
        "squared_ratio_summable": p - q > 0.5,
    }
    if schedule.horizon_mode == "power":
        conditions["horizon_term_summable"] = schedule.horizon_param > 0
        if schedule.horizon_param > 0:
            notes.append("power window decays the bias term faster than any polynomial")
    elif tau <= 0.0:
        conditions["horizon_term_summable"] = True
        notes.append("chain mixes instantly; the window bias term is zero")
    elif not math.isfinite(tau):
        conditions["horizon_term_summable"] = False
        notes.append("no finite mixing constant certified")
    else:
        conditions["horizon_term_summable"] = (
            p - q + schedule.horizon_param / tau > 1.0
        )
    return ScheduleReport(conditions, tuple(notes))


# ---------------------------------------------------------------------------
# state and diagnostics


@dataclass
class LearnerState:
    """Loop variables: dual scores, the policy they select, and the shared
    trajectory position."""

    scores: list[np.ndarray]
    policy: PolicyProfile
    reduced: list[np.ndarray]
    iteration: int
    state: int


@dataclass(frozen=True)
class StepDecomposition:
    """Estimate split into gradient, smoothing bias, sphere noise, and
    window bias, all in lifted (policy-shaped, simplex-tangent) coordinates.

    The gradient term is the lifted reduced exact gradient; smoothing_bias
    compares the Monte Carlo smoothed gradient at the net-shifted center
    against it; noise is the sphere fluctuation around the smoothed
    gradient; window_bias carries the finite-window payoff error. The four
    parts sum to the realized estimate exactly.
    """

    gradient: tuple[np.ndarray, ...]
    smoothing_bias: tuple[np.ndarray, ...]
    noise: tuple[np.ndarray, ...]
    window_bias: tuple[np.ndarray, ...]
    query_values: np.ndarray


@dataclass(frozen=True)
class StepDiagnostics:
    """Checkpoint record; t counts completed outer iterations."""

    t: int
    gamma: float
    delta: float
    horizon: int
    payoffs: np.ndarray
    estimate_norms: np.ndarray
    values: np.ndarray | None
    fenchel: float | None
    fenchel_per_player: np.ndarray | None
    nash_gaps: np.ndarray | None
    dist_to_ref: np.ndarray | None
    decomposition: StepDecomposition | None


@dataclass
class RunLog:
    """Everything a single run produced."""

    schedule: Schedule
    seed: int
    mirror_kind: str
    game_digest: str
    iters: int
    log_every: int
    rows: list[dict] = field(default_factory=list)
    diagnostics: list[StepDiagnostics] = field(default_factory=list)
    final_state: LearnerState | None = None
    clamped_steps: int = 0
    reference: PolicyProfile | None = None

    def checkpoint_times(self) -> list[int]:
        return sorted({row["t"] for row in self.rows})

    def column(self, name: str, player: int | None = None) -> np.ndarray:
        vals = [
            row[name]
            for row in self.rows
            if player is None or row["player"] == player
        ]
        return np.array([math.nan if v is None else v for v in vals])

    def write(self, out_dir) -> None:
        import pathlib

        out = pathlib.Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "run.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for row in self.rows:
                writer.writerow(
                    ["" if row[c] is None else repr(row[c]) if isinstance(row[c], float) else row[c] for c in CSV_COLUMNS]
                )
        sidecar = {
            "schedule": self.schedule.to_dict(),
            "seed": self.seed,
            "mirror": self.mirror_kind,
            "game_hash": self.game_digest,
            "iters": self.iters,
            "log_every": self.log_every,
            "clamped_steps": self.clamped_steps,
            "columns": list(CSV_COLUMNS),
        }
        with open(out / "run.json", "w") as fh:
            json.dump(sidecar, fh, indent=1)
            fh.write("\n")


# ---------------------------------------------------------------------------
# the loop


def _initial_scores(reg: Regularizer, game: StochasticGame, init_policy):
    if init_policy is None:
        return [np.zeros((game.n_states, m)) for m in game.n_actions]
    if reg.kind == ENTROPY:
        blocks = []
        for b in init_policy.probs:
            if (b <= 0.0).any():
                raise DomainError(
                    "entropy initialization requires an interior policy"
                )
            blocks.append(np.log(b))
        return blocks
    return [np.array(b) for b in init_policy.probs]


def decompose_step(
    game: StochasticGame,
    policy: PolicyProfile,
    directions,
    delta: float,
    payoffs,
    rng=None,
    nets: list[SafetyNet] | None = None,
    liftings: list[Lifting] | None = None,
    smoothing_draws: int = 256,
    smoothed=None,
) -> StepDecomposition:
    """Oracle decomposition of one realized estimate.

    directions[i] is the sphere draw used for player i (None for a skipped
    single-action player) and payoffs[i] the realized value sample. The
    smoothed gradient may be passed in (reduced coordinates, e.g. cached at
    a checkpoint) or is estimated here with smoothing_draws oracle queries.
    """
    from .analysis import exact_gradient, exact_value
    from .spsa import reduce_policy

    nets = nets or [safety_net_for(game.n_states, m) for m in game.n_actions]
    liftings = liftings or [lifting_for(game.n_states, m) for m in game.n_actions]
    active = [i for i, m in enumerate(game.n_actions) if m >= 2]
    reduced = reduce_policy(policy)

    if smoothed is None:
        rng = np.random.default_rng(rng)
        smoothed, _ = smoothed_gradient_estimate(
            game, policy, delta, smoothing_draws, rng, nets=nets
        )

    queried = [
        perturb(reduced[i], directions[i], delta, nets[i]) if i in active else reduced[i]
        for i in range(game.n_players)
    ]
    query_values = exact_value(
        game, PolicyProfile(tuple(lift_block(x) for x in queried))
    ).values
    exact = exact_gradient(game, policy)

    grad, smooth_bias, noise, window = [], [], [], []
    for i, m in enumerate(game.n_actions):
        if i not in active:
            zeros = np.zeros((game.n_states, m))
            grad.append(zeros)
            smooth_bias.append(zeros.copy())
            noise.append(zeros.copy())
            window.append(zeros.copy())
            continue
        lift = liftings[i]
        d = reduced_dim(game.n_states, m)
        g = lift.apply(reduced_from_full(exact.blocks[i]))
        sm = lift.apply(smoothed[i])
        z = np.asarray(directions[i], float).reshape(game.n_states, m - 1)
        at_query = (d / delta) * query_values[i] * lift.apply(z)
        realized = (d / delta) * float(payoffs[i]) * lift.apply(z)
        grad.append(g)
        smooth_bias.append(sm - g)
        noise.append(at_query - sm)
        window.append(realized - at_query)
    return StepDecomposition(
        tuple(grad), tuple(smooth_bias), tuple(noise), tuple(window), query_values
    )


def run(
    game: StochasticGame,
    schedule: Schedule,
    regularizer: Regularizer,
    iters: int,
    seed: int,
    oracle_mode: bool = False,
    reference: PolicyProfile | None = None,
    start_state: int = 0,
    log_every: int = 1,
    init_policy: PolicyProfile | None = None,
    out_dir=None,
    decomposition_draws: int = 256,
    compute_gaps: bool = True,
) -> RunLog:
    """Run the bandit learner for `iters` outer iterations.

    Per iteration: draw one sphere direction per player, form the safety-net
    adjusted query profile, play it for the scheduled window continuing the
    shared trajectory, read the single instantaneous reward at the stage
    after the window as the value sample, update dual scores with the
    one-point estimate, and mirror them back to policies. Deterministic
    given the seed. Checkpoints are taken every log_every iterations (and at
    the end); oracle_mode adds the exact decomposition at checkpoints.
    """
    from .analysis import exact_value, nash_gap as nash_gap_fn

    if iters < 0:
        raise DomainError("iters must be nonnegative")
    if not 0 <= start_state < game.n_states:
        raise DomainError(f"start_state {start_state} out of range")
    rng = np.random.default_rng(seed)

    nets = [safety_net_for(game.n_states, m) for m in game.n_actions]
    liftings = [lifting_for(game.n_states, m) for m in game.n_actions]
    dims = [reduced_dim(game.n_states, m) for m in game.n_actions]
    active = [i for i, m in enumerate(game.n_actions) if m >= 2]
    if not active:
        raise DomainError("every player has a single action; nothing to learn")
    radius_cap = 0.99 * min(nets[i].radius for i in active)
    norm_cap = max(
        dims[i] * game.max_abs_reward(i) * liftings[i].op_norm for i in active
    )

    scores = _initial_scores(regularizer, game, init_policy)
    policy_blocks = [_map_block(regularizer, y) for y in scores]
    reduced = [b[:, :-1].copy() for b in policy_blocks]

    trans_cdf = [_cdf_rows(game.transitions[s]) for s in range(game.n_states)]
    strides = [int(s) for s in np.cumprod((game.n_actions + (1,))[::-1])[::-1][1:]]

    log = RunLog(
        schedule=schedule,
        seed=seed,
        mirror_kind=regularizer.kind,
        game_digest=game_hash(game),
        iters=iters,
        log_every=max(1, int(log_every)),
        reference=reference,
    )
    state = start_state

    # hot-loop constants; the loop inlines perturb / lift / estimate for
    # speed, with math identical to the public wrappers
    n_players = game.n_players
    n_states = game.n_states
    centers = [nets[i].center for i in range(n_players)]
    radii = [nets[i].radius for i in range(n_players)]
    blocks_t = [liftings[i].block.T.copy() for i in range(n_players)]
    rewards = game.rewards
    n_actions = game.n_actions

    for t in range(iters):
        gamma = schedule.gamma(t)
        delta_raw = schedule.delta(t)
        delta = min(delta_raw, radius_cap)
        if delta < delta_raw:
            log.clamped_steps += 1
        horizon = schedule.horizon(t)

        directions: list = [None] * n_players
        played_blocks: list = [None] * n_players
        for i in range(n_players):
            if i not in active:
                played_blocks[i] = policy_blocks[i]
                continue
            z = rng.standard_normal(dims[i])
            z_norm = math.sqrt(float(z @ z))
            while z_norm <= 1e-12:
                z = rng.standard_normal(dims[i])
                z_norm = math.sqrt(float(z @ z))
            z /= z_norm
            directions[i] = z
            lam = delta / radii[i]
            x_hat = (1.0 - lam) * reduced[i] + lam * (
                centers[i] + radii[i] * z.reshape(n_states, n_actions[i] - 1)
            )
            block = np.empty((n_states, n_actions[i]))
            block[:, :-1] = x_hat
            block[:, -1] = 1.0 - x_hat.sum(axis=1)
            np.clip(block, 0.0, None, out=block)  # roundoff dust only
            played_blocks[i] = block

        pol_cdf = [b.cumsum(axis=1).tolist() for b in played_blocks]
        u = rng.random((horizon + 1, n_players + 1)).tolist()
        s = state
        payoffs = None
        for step in range(horizon + 1):
            row = u[step]
            joint = 0
            for i in range(n_players):
                a = bisect_right(pol_cdf[i][s], row[i])
                if a >= n_actions[i]:
                    a = n_actions[i] - 1
                joint += a * strides[i]
            if step == horizon:
                payoffs = rewards[:, s, joint].copy()
            nxt = bisect_right(trans_cdf[s][joint], row[-1])
            s = nxt if nxt < n_states else n_states - 1
        state = s

        checkpoint = (t + 1) % log.log_every == 0 or (t + 1) == iters
        decomposition = None
        if checkpoint and oracle_mode:
            try:
                decomposition = decompose_step(
                    game,
                    PolicyProfile(tuple(policy_blocks)),
                    directions,
                    delta,
                    payoffs,
                    rng=rng,
                    nets=nets,
                    liftings=liftings,
                    smoothing_draws=decomposition_draws,
                )
            except ErgodicityError as exc:
                warnings.warn(f"oracle decomposition skipped at t={t}: {exc}")

        est_norms = np.zeros(n_players)
        coeff_cap = norm_cap / delta * (1.0 + 1e-9)
        for i in active:
            k = n_actions[i] - 1
            lifted = (
                (dims[i] / delta) * float(payoffs[i]) * directions[i].reshape(n_states, k)
            ) @ blocks_t[i]
            norm = math.sqrt(float((lifted * lifted).sum()))
            if norm > coeff_cap:
                raise RuntimeError(
                    f"estimate norm {norm} exceeds bound {norm_cap / delta} at t={t}"
                )
            est_norms[i] = norm
            scores[i] = scores[i] + gamma * lifted
            policy_blocks[i] = _map_block(regularizer, scores[i])
            reduced[i] = policy_blocks[i][:, :-1]

        if checkpoint:
            policy_now = PolicyProfile(tuple(policy_blocks))
            values = gaps = None
            try:
                values = exact_value(game, policy_now).values
                if compute_gaps:
                    gaps = nash_gap_fn(game, policy_now).gaps
            except ErgodicityError as exc:
                warnings.warn(f"checkpoint oracle skipped at t={t}: {exc}")
            fen_total = fen_pp = dist = None
            if reference is not None:
                report = fenchel_coupling(regularizer, reference, scores)
                fen_total, fen_pp = report.value, report.per_player
                dist = np.array(
                    [
                        float(np.linalg.norm(policy_now.probs[i] - reference.probs[i]))
                        for i in range(game.n_players)
                    ]
                )
            diag = StepDiagnostics(
                t=t + 1,
                gamma=gamma,
                delta=delta,
                horizon=horizon,
                payoffs=payoffs,
                estimate_norms=est_norms,
                values=values,
                fenchel=fen_total,
                fenchel_per_player=fen_pp,
                nash_gaps=gaps,
                dist_to_ref=dist,
                decomposition=decomposition,
            )
            log.diagnostics.append(diag)
            for i in range(game.n_players):
                log.rows.append(
                    {
                        "t": t + 1,
                        "gamma": gamma,
                        "delta": delta,
                        "horizon": horizon,
                        "player": i,
                        "value": None if values is None else float(values[i]),
                        "fenchel": None if fen_pp is None else float(fen_pp[i]),
                        "nash_gap": None if gaps is None else float(gaps[i]),
                        "dist_to_ref": None if dist is None else float(dist[i]),
                        "est_norm": float(est_norms[i]),
                    }
                )

    log.final_state = LearnerState(
        scores=scores,
        policy=PolicyProfile(tuple(policy_blocks)),
        reduced=reduced,
        iteration=iters,
        state=state,
    )
    if out_dir is not None:
        log.write(out_dir)
    return log


# ---------------------------------------------------------------------------
# window-length bias check


@dataclass(frozen=True)
class HorizonBiasReport:
    """Measured one-step value-sample bias against the mixing bound."""

    horizon: int
    n_draws: int
    mean: np.ndarray
    exact: np.ndarray
    bias: np.ndarray
    bound: np.ndarray
    stderr: np.ndarray

    @property
    def ok(self) -> bool:
        return bool((self.bias <= self.bound + 3.0 * self.stderr).all())


def horizon_bias_check(
    game: StochasticGame,
    policy: PolicyProfile,
    horizon: int,
    n_draws: int,
    rng=None,
    start_state: int = 0,
    contraction: float | None = None,
) -> HorizonBiasReport:
    """Estimate |E[value sample] - exact value| for a fixed window length.

    Runs n_draws independent rollouts of horizon + 1 stages from
    start_state, reads the reward at the final stage, and compares the mean
    against the exact value. The bound is n_states * max|reward| times the
    certified contraction to the power horizon.
    """
    from .analysis import exact_value

    rng = np.random.default_rng(rng)
    if contraction is None:
        contraction = certify_mixing(
            game, certification_sample(game, rng=0)
        ).contraction
    exact = exact_value(game, policy).values
    samples = np.empty((n_draws, game.n_players))
    for k in range(n_draws):
        _, _, rewards = rollout(game, policy, start_state, horizon + 1, rng)
        samples[k] = rewards[-1]
    mean = samples.mean(axis=0)
    stderr = samples.std(axis=0, ddof=1) / math.sqrt(n_draws)
    bound = np.array(
        [
            game.n_states * game.max_abs_reward(i) * contraction**horizon
            for i in range(game.n_players)
        ]
    )
    return HorizonBiasReport(
        horizon=horizon,
        n_draws=n_draws,
        mean=mean,
        exact=exact,
        bias=np.abs(mean - exact),
        bound=bound,
        stderr=stderr,
    )
