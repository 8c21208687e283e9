"""Benchmark game constructions and seed-sweep orchestration.

The built-in benchmarks instantiate verifiable premises at desk scale:
random-ergodic games satisfy the transition floor that guarantees uniform
mixing, and the two zero-sum constructions have action-independent (or
trivial) transitions so the stationary distribution is policy-free, values
are multilinear per state, and the per-state uniform profile is the
equilibrium.
"""

from __future__ import annotations

import json
import math
import pathlib
from dataclasses import dataclass, field

import numpy as np

from .analysis import nash_gap
from .errors import ConfigError
from .games import (
    PolicyProfile,
    StochasticGame,
    certification_sample,
    certify_mixing,
    load_game,
    load_policy,
    uniform_profile,
)
from .learner import (
    RunLog,
    Schedule,
    ScheduleReport,
    default_schedule,
    min_safety_radius,
    run,
    validate_schedule,
)
from .mirror import Regularizer, make_regularizer

KINDS = ("random-ergodic", "matching-pennies", "zerosum-switching", "custom-file")


@dataclass(frozen=True)
class GeneratorSpec:
    """What to build: a benchmark kind plus its size and range parameters."""

    kind: str
    n_states: int = 2
    n_players: int = 2
    n_actions: int | tuple[int, ...] = 2
    eps: float = 0.1
    reward_low: float = 0.0
    reward_high: float = 1.0
    seed: int = 0
    path: str | None = None

    def action_counts(self) -> tuple[int, ...]:
        if isinstance(self.n_actions, int):
            return (self.n_actions,) * self.n_players
        return tuple(int(m) for m in self.n_actions)


def _matching_pennies() -> StochasticGame:
    # joint order (0,0), (0,1), (1,0), (1,1); +1 to player 1 on a match
    r1 = np.array([[1.0, -1.0, -1.0, 1.0]])
    rewards = np.stack([r1, -r1])
    transitions = np.ones((1, 4, 1))
    return StochasticGame(1, (2, 2), rewards, transitions, {"kind": "matching-pennies"})


def _zerosum_switching() -> StochasticGame:
    # two states, per-state zero-sum 2x2 stage games (second state doubled),
    # transitions independent of play so the state chain is a fair coin
    stage = np.array([1.0, -1.0, -1.0, 1.0])
    r1 = np.stack([stage, 2.0 * stage])
    rewards = np.stack([r1, -r1])
    transitions = np.full((2, 4, 2), 0.5)
    return StochasticGame(2, (2, 2), rewards, transitions, {"kind": "zerosum-switching"})


def _random_ergodic(spec: GeneratorSpec) -> StochasticGame:
    actions = spec.action_counts()
    if spec.n_states < 1 or any(m < 1 for m in actions):
        raise ConfigError("sizes must be positive")
    if spec.eps < 0 or spec.eps * spec.n_states >= 1.0:
        raise ConfigError(
            f"need eps * n_states < 1, got {spec.eps} * {spec.n_states}"
        )
    if spec.reward_high < spec.reward_low:
        raise ConfigError("reward_high must be at least reward_low")
    rng = np.random.default_rng(spec.seed)
    n_joint = int(np.prod(actions))
    raw = rng.random((spec.n_states, n_joint, spec.n_states))
    raw /= raw.sum(axis=2, keepdims=True)
    transitions = spec.eps + (1.0 - spec.eps * spec.n_states) * raw
    rewards = rng.uniform(
        spec.reward_low,
        spec.reward_high,
        size=(len(actions), spec.n_states, n_joint),
    )
    meta = {
        "kind": "random-ergodic",
        "eps": spec.eps,
        "seed": spec.seed,
        "reward_range": [spec.reward_low, spec.reward_high],
    }
    return StochasticGame(spec.n_states, actions, rewards, transitions, meta)


def generate(spec: GeneratorSpec) -> StochasticGame:
    """Build the game a GeneratorSpec describes."""
    if spec.kind == "matching-pennies":
        return _matching_pennies()
    if spec.kind == "zerosum-switching":
        return _zerosum_switching()
    if spec.kind == "random-ergodic":
        return _random_ergodic(spec)
    if spec.kind == "custom-file":
        if not spec.path:
            raise ConfigError("custom-file kind needs a path")
        return load_game(spec.path)
    raise ConfigError(f"unknown generator kind {spec.kind!r}; use one of {KINDS}")


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class ExperimentResult:
    """Per-run logs plus cross-seed aggregates at shared checkpoints."""

    grid: list[Schedule]
    seeds: list[int]
    iters: int
    schedule_reports: list[ScheduleReport]
    runs: list[dict] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)
    aggregates: list[dict] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "grid": [
                {
                    **schedule.to_dict(),
                    "theorem_conditions": {
                        **report.conditions,
                        "ok": report.ok,
                    },
                }
                for schedule, report in zip(self.grid, self.schedule_reports)
            ],
            "seeds": self.seeds,
            "iters": self.iters,
            "runs": [
                {k: v for k, v in entry.items() if k != "log"} for entry in self.runs
            ],
            "failures": self.failures,
            "aggregates": self.aggregates,
        }


def _quartiles(values: np.ndarray) -> dict:
    finite = values[np.isfinite(values)]
    if finite.size == 0:
        return {"q25": None, "median": None, "q75": None}
    q25, med, q75 = np.percentile(finite, [25, 50, 75])
    return {"q25": float(q25), "median": float(med), "q75": float(q75)}


def _aggregate(logs: list[RunLog]) -> list[dict]:
    """Cross-seed quartiles of distance, gap, and coupling per checkpoint."""
    if not logs:
        return []
    times = logs[0].checkpoint_times()
    out = []
    for t in times:
        dist, gap, fen = [], [], []
        for log in logs:
            rows = [r for r in log.rows if r["t"] == t]
            if not rows:
                continue
            d = [r["dist_to_ref"] for r in rows]
            g = [r["nash_gap"] for r in rows]
            f = [r["fenchel"] for r in rows]
            dist.append(
                math.sqrt(sum(x * x for x in d)) if None not in d else math.nan
            )
            gap.append(max(g) if None not in g else math.nan)
            fen.append(sum(f) if None not in f else math.nan)
        out.append(
            {
                "t": t,
                "dist_to_ref": _quartiles(np.array(dist)),
                "nash_gap": _quartiles(np.array(gap)),
                "fenchel": _quartiles(np.array(fen)),
            }
        )
    return out


def sweep(
    game: StochasticGame,
    grid,
    seeds,
    iters: int,
    regularizer: Regularizer | None = None,
    reference: PolicyProfile | None = None,
    log_every: int = 100,
    out=None,
    tau: float | None = None,
) -> ExperimentResult:
    """Run the learner for every (schedule, seed) pair and aggregate.

    Individual run failures are recorded and the sweep continues. When out
    is given, per-run CSVs and a summary.json are written there.
    """
    grid = list(grid)
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ConfigError("sweep needs at least one seed")
    regularizer = regularizer or make_regularizer("entropy")
    if tau is None:
        tau = certify_mixing(game, certification_sample(game, rng=0)).tau
    result = ExperimentResult(
        grid=grid,
        seeds=seeds,
        iters=iters,
        schedule_reports=[validate_schedule(s, tau) for s in grid],
    )
    out_path = pathlib.Path(out) if out is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)

    for gi, schedule in enumerate(grid):
        logs = []
        for seed in seeds:
            entry = {"schedule_index": gi, "seed": seed}
            try:
                log = run(
                    game,
                    schedule,
                    regularizer,
                    iters,
                    seed,
                    reference=reference,
                    log_every=log_every,
                )
            except Exception as exc:  # recorded, sweep continues
                result.failures.append(
                    {"schedule_index": gi, "seed": seed, "error": str(exc)}
                )
                continue
            logs.append(log)
            entry["log"] = log
            if out_path is not None:
                run_dir = out_path / f"run_g{gi}_s{seed}"
                log.write(run_dir)
                entry["csv"] = str(run_dir / "run.csv")
            result.runs.append(entry)
        result.aggregates.append(
            {"schedule_index": gi, "checkpoints": _aggregate(logs)}
        )

    if out_path is not None:
        with open(out_path / "summary.json", "w") as fh:
            json.dump(result.summary(), fh, indent=1)
            fh.write("\n")
    return result


def convergence_benchmark(
    kind: str,
    iters: int,
    seeds,
    log_every: int = 1000,
    gamma_scale: float = 1.0,
    early_at: int = 1000,
    out=None,
) -> dict:
    """Learner-vs-equilibrium benchmark on one zero-sum construction.

    Runs one seed per entry with the default schedule (exponents (1, 1/3),
    log window at twice the certified mixing constant), measures distance to
    the per-state uniform equilibrium and the Fenchel coupling, and reports
    three clauses: median end distance at most 0.15, median end distance no
    larger than at `early_at`, and median coupling over the last tenth of
    checkpoints below the first tenth.
    """
    game = generate(GeneratorSpec(kind=kind))
    reference = uniform_profile(game)
    cert = certify_mixing(game, certification_sample(game, rng=0))
    schedule = default_schedule(game, tau=cert.tau, gamma_scale=gamma_scale)
    reg = make_regularizer("entropy")

    def profile_dist(log: RunLog, t: int) -> float:
        rows = [r for r in log.rows if r["t"] == t]
        return math.sqrt(sum(r["dist_to_ref"] ** 2 for r in rows))

    def coupling(log: RunLog, t: int) -> float:
        return sum(r["fenchel"] for r in log.rows if r["t"] == t)

    logs = []
    for seed in seeds:
        logs.append(
            run(
                game,
                schedule,
                reg,
                iters,
                int(seed),
                reference=reference,
                log_every=log_every,
                out_dir=None if out is None else f"{out}/{kind}_seed{seed}",
            )
        )

    times = logs[0].checkpoint_times()
    t_early = min((t for t in times if t >= early_at), default=times[0])
    t_end = times[-1]
    decile = max(1, len(times) // 10)
    first_win, last_win = times[:decile], times[-decile:]

    end_dist = float(np.median([profile_dist(lg, t_end) for lg in logs]))
    early_dist = float(np.median([profile_dist(lg, t_early) for lg in logs]))
    fen_first = float(
        np.median([np.median([coupling(lg, t) for t in first_win]) for lg in logs])
    )
    fen_last = float(
        np.median([np.median([coupling(lg, t) for t in last_win]) for lg in logs])
    )
    return {
        "game": kind,
        "uniform_nash_gap": nash_gap(game, reference).max_gap,
        "schedule": schedule.to_dict(),
        "iters": iters,
        "seeds": [int(s) for s in seeds],
        "median_end_dist": end_dist,
        "median_early_dist": early_dist,
        "median_fenchel_first_decile": fen_first,
        "median_fenchel_last_decile": fen_last,
        "clauses": {
            "end_dist_below_0.15": end_dist <= 0.15,
            "end_dist_below_early": end_dist <= early_dist,
            "fenchel_last_below_first": fen_last < fen_first,
        },
    }


def load_sweep_config(path) -> dict:
    with open(path) as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"sweep config is not valid JSON: {exc}") from exc
    for key in ("game", "grid", "seeds", "iters"):
        if key not in cfg:
            raise ConfigError(f"sweep config missing key {key!r}")
    return cfg


def schedule_from_grid_entry(entry: dict, game: StochasticGame) -> Schedule:
    try:
        return Schedule(
            gamma_exp=float(entry["p"]),
            delta_exp=float(entry["q"]),
            gamma_scale=float(entry.get("gamma0", 1.0)),
            delta_scale=float(entry.get("delta0", 0.25 * min_safety_radius(game))),
            horizon_mode=str(entry.get("horizon", "log")),
            horizon_param=float(entry["T0"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad grid entry {entry!r}: {exc}") from exc


def run_sweep_config(path) -> ExperimentResult:
    """Execute a sweep described by a JSON config file."""
    cfg = load_sweep_config(path)
    game = load_game(cfg["game"])
    grid = [schedule_from_grid_entry(e, game) for e in cfg["grid"]]
    ref = cfg.get("ref", "uniform")
    if ref == "uniform":
        reference = uniform_profile(game)
    elif ref is None:
        reference = None
    else:
        reference = load_policy(ref)
    return sweep(
        game,
        grid,
        cfg["seeds"],
        int(cfg["iters"]),
        regularizer=make_regularizer(cfg.get("mirror", "entropy")),
        reference=reference,
        log_every=int(cfg.get("log_every", 100)),
        out=cfg.get("out"),
    )
