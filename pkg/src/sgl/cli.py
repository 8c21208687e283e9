"""Command-line harness.

Subcommands: validate, analyze (alias: report), gradient, learn, generate,
sweep. Exit codes: 0 success, 1 validation/config error, 2 runtime error.
The environment variable SGL_SEED provides the default seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import analysis, games, generators, learner, mirror, spsa
from .errors import (
    ConfigError,
    ContractError,
    DimensionError,
    DomainError,
    GameFormatError,
    ScheduleError,
)

_VALIDATION_ERRORS = (
    GameFormatError,
    ConfigError,
    DomainError,
    DimensionError,
    ContractError,
    ScheduleError,
    FileNotFoundError,
    IsADirectoryError,
)


class _Parser(argparse.ArgumentParser):
    """argparse variant that exits 1 (not 2) on bad usage."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _default_seed() -> int:
    return int(os.environ.get("SGL_SEED", "0"))


def _load_policy_arg(game, value):
    if value is None or value == "uniform":
        return games.uniform_profile(game)
    return games.load_policy(value)


def _emit(doc: dict, out: str | None) -> None:
    text = json.dumps(doc, indent=1)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


# ---------------------------------------------------------------------------
# subcommands


def _cmd_validate(args) -> int:
    game = games.load_game(args.game)
    print(
        f"ok: {game.n_states} states, {game.n_players} players, "
        f"actions {list(game.n_actions)}, hash {games.game_hash(game)[:12]}"
    )
    return 0


def _cmd_analyze(args) -> int:
    game = games.load_game(args.game)
    policy = _load_policy_arg(game, args.policy)
    rng = np.random.default_rng(args.seed)

    cert = games.certify_mixing(
        game, games.certification_sample(game, n_random=args.samples, rng=rng)
    )
    doc = {
        "game": {
            "hash": games.game_hash(game),
            "n_states": game.n_states,
            "actions": list(game.n_actions),
        },
        "mixing": {
            "contraction": cert.contraction,
            "tau": cert.tau,
            "ok": cert.ok,
            "certificate": "sampled",
            "eps_floor": cert.eps_floor,
            "eps_floor_condition": cert.eps_floor > 0.0,
        },
    }
    if not cert.ok:
        doc["mixing"]["failing_policy_index"] = cert.failing_index
        _emit(doc, args.out)
        print("mixing certification failed; skipping value analysis", file=sys.stderr)
        return 0

    report = analysis.exact_value(game, policy)
    grad = analysis.exact_gradient(game, policy)
    gaps = analysis.nash_gap(game, policy)
    sample_profiles = [games.random_profile(game, rng, margin=0.05) for _ in range(args.samples)]
    sample_profiles.append(games.uniform_profile(game))
    doc.update(
        {
            "values": report.values.tolist(),
            "stationary": report.stationary.tolist(),
            "gradients": [b.tolist() for b in grad.blocks],
            "nash_gap": {"per_player": gaps.gaps.tolist(), "max": gaps.max_gap},
            "first_order_residual": analysis.first_order_residual(game, policy),
            "mismatch_estimate": {
                "value": analysis.estimate_mismatch(game, sample_profiles),
                "certificate": "sampled lower bound",
            },
            "lipschitz_estimate": analysis.lipschitz_probe(
                game, n_pairs=max(2, args.samples), rng=rng
            ),
        }
    )
    _emit(doc, args.out)
    return 0


def _cmd_gradient(args) -> int:
    game = games.load_game(args.game)
    policy = _load_policy_arg(game, args.policy)
    exact = [
        spsa.reduced_from_full(b).tolist()
        for b in analysis.exact_gradient(game, policy).blocks
    ]
    doc = {"method": args.method, "coordinates": "reduced"}
    if args.method == "exact":
        doc["gradient"] = exact
    elif args.method == "fd":
        fd = analysis.finite_difference_gradient(game, policy, step=args.step)
        doc["gradient"] = [b.tolist() for b in fd]
        doc["max_abs_diff_vs_exact"] = max(
            float(np.abs(np.asarray(a) - np.asarray(b)).max()) if np.asarray(a).size else 0.0
            for a, b in zip(doc["gradient"], exact)
        )
    else:  # spsa
        rng = np.random.default_rng(args.seed)
        means, stderrs = spsa.smoothed_gradient_estimate(
            game, policy, args.delta, args.draws, rng
        )
        doc["delta"] = args.delta
        doc["draws"] = args.draws
        doc["gradient"] = [m.tolist() for m in means]
        doc["stderr"] = [s.tolist() for s in stderrs]
        doc["max_abs_diff_vs_exact"] = max(
            float(np.abs(m - np.asarray(e)).max()) if m.size else 0.0
            for m, e in zip(means, exact)
        )
    if "max_abs_diff_vs_exact" in doc:
        print(
            f"max abs difference vs exact: {doc['max_abs_diff_vs_exact']:.3e}",
            file=sys.stderr,
        )
    _emit(doc, args.out)
    return 0


def _resolve_schedule(args, game) -> learner.Schedule:
    if args.preset == "sqrt-horizon":
        return learner.sqrt_horizon_schedule(game, gamma_scale=args.gamma_scale)
    base = learner.default_schedule(game, gamma_scale=args.gamma_scale)
    return learner.Schedule(
        gamma_exp=args.gamma_exp if args.gamma_exp is not None else base.gamma_exp,
        delta_exp=args.delta_exp if args.delta_exp is not None else base.delta_exp,
        gamma_scale=args.gamma_scale,
        delta_scale=args.delta_scale
        if args.delta_scale is not None
        else base.delta_scale,
        horizon_mode=args.horizon if args.horizon else base.horizon_mode,
        horizon_param=args.horizon_param
        if args.horizon_param is not None
        else base.horizon_param,
    )


def _cmd_learn(args) -> int:
    game = games.load_game(args.game)
    reg = mirror.make_regularizer(args.mirror)
    schedule = _resolve_schedule(args, game)
    reference = None if args.ref is None else _load_policy_arg(game, args.ref)
    init_policy = (
        None if args.init_policy is None else _load_policy_arg(game, args.init_policy)
    )
    cert = games.certify_mixing(game, games.certification_sample(game, rng=0))
    report = learner.validate_schedule(schedule, cert.tau)
    if not report.ok:
        failing = [k for k, v in report.conditions.items() if not v]
        print(f"warning: schedule conditions failing: {failing}", file=sys.stderr)

    log = learner.run(
        game,
        schedule,
        reg,
        args.iters,
        args.seed,
        oracle_mode=args.oracle,
        reference=reference,
        start_state=args.start_state,
        log_every=args.log_every,
        init_policy=init_policy,
        out_dir=args.out,
    )
    final = log.final_state
    summary = {
        "iters": args.iters,
        "seed": args.seed,
        "mirror": reg.kind,
        "schedule_ok": report.ok,
        "clamped_steps": log.clamped_steps,
        "final_policy": [b.tolist() for b in final.policy.probs],
    }
    if log.rows:
        last_t = log.rows[-1]["t"]
        last = [r for r in log.rows if r["t"] == last_t]
        summary["final_values"] = [r["value"] for r in last]
        summary["final_nash_gap"] = max(
            (r["nash_gap"] for r in last if r["nash_gap"] is not None), default=None
        )
        if reference is not None:
            summary["final_dist_to_ref"] = float(
                np.sqrt(sum(r["dist_to_ref"] ** 2 for r in last))
            )
    print(json.dumps(summary, indent=1))
    return 0


def _cmd_generate(args) -> int:
    actions = tuple(args.actions) if len(args.actions) > 1 else int(args.actions[0])
    spec = generators.GeneratorSpec(
        kind=args.kind,
        n_states=args.states,
        n_players=args.players,
        n_actions=actions,
        eps=args.eps,
        reward_low=args.reward_low,
        reward_high=args.reward_high,
        seed=args.seed,
        path=args.path,
    )
    game = generators.generate(spec)
    games.save_game(game, args.out)
    print(
        f"wrote {args.out}: {game.n_states} states, {game.n_players} players, "
        f"hash {games.game_hash(game)[:12]}"
    )
    return 0


def _cmd_sweep(args) -> int:
    result = generators.run_sweep_config(args.config)
    doc = result.summary()
    print(
        json.dumps(
            {
                "schedules": len(doc["grid"]),
                "seeds": doc["seeds"],
                "completed": len(doc["runs"]),
                "failures": doc["failures"],
            },
            indent=1,
        )
    )
    return 0


# ---------------------------------------------------------------------------
# wiring


def build_parser() -> _Parser:
    parser = _Parser(prog="sgl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("validate", help="check a game file against its invariants")
    p.add_argument("game")
    p.set_defaults(func=_cmd_validate)

    for name in ("analyze", "report"):
        p = sub.add_parser(name, help="exact analysis document for a game")
        p.add_argument("--game", required=True)
        p.add_argument("--policy", default=None, help="policy file or 'uniform'")
        p.add_argument("--samples", type=int, default=8)
        p.add_argument("--seed", type=int, default=_default_seed())
        p.add_argument("--out", default=None)
        p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("gradient", help="payoff gradient in reduced coordinates")
    p.add_argument("--game", required=True)
    p.add_argument("--policy", required=True, help="policy file or 'uniform'")
    p.add_argument("--method", choices=("exact", "fd", "spsa"), default="exact")
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--draws", type=int, default=20000)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_gradient)

    p = sub.add_parser("learn", help="run the bandit learner")
    p.add_argument("--game", required=True)
    p.add_argument("--iters", type=int, required=True)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--mirror", choices=mirror.KINDS, default="entropy")
    p.add_argument("--preset", choices=learner.SCHEDULE_PRESETS, default="default")
    p.add_argument("--gamma-exp", type=float, default=None)
    p.add_argument("--delta-exp", type=float, default=None)
    p.add_argument("--gamma-scale", type=float, default=1.0)
    p.add_argument("--delta-scale", type=float, default=None)
    p.add_argument("--horizon", choices=("log", "power"), default=None)
    p.add_argument("--horizon-param", type=float, default=None)
    p.add_argument("--oracle", action="store_true")
    p.add_argument("--ref", default=None, help="reference policy file or 'uniform'")
    p.add_argument("--init-policy", default=None)
    p.add_argument("--start-state", type=int, default=0)
    p.add_argument("--log-every", type=int, default=100)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_learn)

    p = sub.add_parser("generate", help="write a benchmark game file")
    p.add_argument("--kind", choices=generators.KINDS, required=True)
    p.add_argument("--states", type=int, default=2)
    p.add_argument("--players", type=int, default=2)
    p.add_argument("--actions", type=int, nargs="+", default=[2])
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--reward-low", type=float, default=0.0)
    p.add_argument("--reward-high", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--path", default=None, help="source file for kind custom-file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("sweep", help="run a schedule/seed sweep from a config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # anything else is a runtime failure
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
