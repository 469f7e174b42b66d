"""Command-line front end.

Subcommands: plan, sample, perturb, solve, audit, exp1, exp2, exp3, sweep.
Exit codes: 0 success, 2 configuration error, 3 assumption or precondition
failure, 4 property violation detected.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

import numpy as np

from . import __version__
from .equilibrium import (EquilibriumResult, best_response_dynamics, projected_gradient_ne,
                          solve_lq_ne, solve_perturbed_lq_ne)
from .experiments import (ConfigError, ExperimentConfig, PreconditionError, PropertyViolation,
                          build_game, build_network, ensure_out_dir, load_config, metadata,
                          resolve_noise, run_experiment1, run_experiment2, run_experiment3,
                          run_sweep, write_csv, write_json)
from .game import monotonicity_constant, pseudo_gradient
from .llqfp import check_psd, draw, draw_to_dict
from .network import group_factor
from .privacy import (PrivacyBudget, audit_mechanism, mechanism_input_from_game, min_bound,
                      min_scale, plan, tight_plan, worst_case_pair)
from .trunc_laplace import GENERATOR_ALGORITHM, NoiseParams, delta_profile, sample

# profile overshoot beyond delta that counts as a violation
_PROFILE_TOL = 1e-9


def _loose_meta(command: str, base_seed: int) -> dict:
    cfg = ExperimentConfig(network={}, b=(0.0,), box_lo=0.0, box_hi=1.0,
                           noise_specs=(), executions=1, base_seed=base_seed,
                           config_hash="none")
    return metadata(cfg, command)


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, base_seed=args.seed)
    return cfg


def cmd_plan(args) -> int:
    budget = PrivacyBudget(epsilon=args.epsilon, delta=args.delta, mu=args.mu, p=args.p)
    params = plan(budget)
    tight = tight_plan(budget)
    profile = delta_profile(budget.epsilon, budget.mu, params, args.grid_step)
    tight_profile = delta_profile(budget.epsilon, budget.mu, tight, args.grid_step)
    lam_min = min_scale(budget.mu, budget.epsilon, budget.delta)
    a_min = min_bound(budget.mu, budget.delta, params.lam)

    print(f"planned noise: a = {params.a!r}, lambda = {params.lam!r}")
    print(f"closed-form bounds: lambda_min = {lam_min!r}, a_min = {a_min!r} (both met)")
    print(f"exact profile at gap mu: {profile!r} (target delta = {budget.delta!r})")
    overshoot = profile > budget.delta + _PROFILE_TOL
    if overshoot:
        print("warning: parameters meet the closed-form bounds but the exact "
              "profile exceeds the delta target; the bounds are not sufficient")
        print(f"exact-target variant: a = {tight.a!r}, lambda = {tight.lam!r} "
              f"reaches profile {tight_profile!r}")
    print(f"network-wide guarantee: ({budget.p} * epsilon, {budget.p} * delta) = "
          f"({budget.p * budget.epsilon!r}, {budget.p * budget.delta!r})")

    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_json(os.path.join(args.out, "plan.json"), {
            "meta": _loose_meta("plan", 0),
            "budget": {"epsilon": budget.epsilon, "delta": budget.delta,
                       "mu": budget.mu, "p": budget.p},
            "planned": {"a": params.a, "lambda": params.lam},
            "bounds": {"lambda_min": lam_min, "a_min": a_min},
            "profile": {"planned": profile, "exact_target_variant": tight_profile},
            "exact_target_variant": {"a": tight.a, "lambda": tight.lam},
            "network_wide": {"epsilon": budget.p * budget.epsilon,
                             "delta": budget.p * budget.delta},
        })
    if args.strict and overshoot:
        raise PropertyViolation(
            f"exact profile {profile!r} exceeds delta target {budget.delta!r}"
        )
    return 0


def cmd_sample(args) -> int:
    params = NoiseParams(a=args.a, lam=args.lam)
    values = sample(args.count, params, args.seed)
    if len(values):
        print(f"{len(values)} draws in [{float(values.min())!r}, {float(values.max())!r}], "
              f"mean {float(values.mean())!r}")
    else:
        print("0 draws")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_csv(os.path.join(args.out, "sample.csv"),
                  {**_loose_meta("sample", args.seed),
                   "a": params.a, "lambda": params.lam},
                  ["index", "value"],
                  [(i, float(v)) for i, v in enumerate(values)])
    return 0


def _pick_noise(cfg: ExperimentConfig, net, label: str | None):
    resolved = resolve_noise(cfg, net)
    if label is None:
        return resolved[0]
    for entry in resolved:
        if entry[0] == label:
            return entry
    raise ConfigError(f"no noise label {label!r} in the config")


def cmd_perturb(args) -> int:
    cfg = _load(args)
    net = build_network(cfg)
    build_game(cfg, net)  # surfaces assumption failures before drawing
    label, params, _ = _pick_noise(cfg, net, args.label)
    seed = cfg.base_seed
    drw = draw(net, params, seed)
    sym_eig = check_psd(drw.d.T)
    print(f"draw '{label}' seed {seed}: {drw.noise_count} noises, "
          f"min symmetric-part eigenvalue {sym_eig!r}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_json(os.path.join(args.out, "draw.json"),
                   {"meta": metadata(cfg, "perturb", {"label": label}),
                    "draw": draw_to_dict(drw)})
    return 0


def _iterative_original(game, method: str) -> EquilibriumResult:
    x0 = np.clip(game.b, game.box_lo, game.box_hi)
    if method == "projected_gradient":
        l_m = monotonicity_constant(game)
        lips = float(np.linalg.norm(np.eye(game.n) - game.net.weights, 2))
        return projected_gradient_ne(game, step=l_m / lips**2, tol=1e-10,
                                     max_iter=200000, x0=x0)
    traj = best_response_dynamics(game, x0, rounds=500)
    x = traj[-1]
    residual = float(np.max(np.abs(pseudo_gradient(game, x))))
    interior = bool(np.all(x > game.box_lo + 1e-9) and np.all(x < game.box_hi - 1e-9))
    return EquilibriumResult(x_star=x, method="best_response", iterations=len(traj) - 1,
                             residual=residual, interior=interior)


def cmd_solve(args) -> int:
    cfg = _load(args)
    net = build_network(cfg)
    game = build_game(cfg, net)
    if args.method == "closed_form":
        base = solve_lq_ne(game)
    else:
        base = _iterative_original(game, args.method)
    rows = [("", base.method, base.residual, base.interior) + tuple(float(v) for v in base.x_star)]
    print(f"original equilibrium ({base.method}): residual {base.residual!r}, "
          f"interior {base.interior}")
    print("x* =", np.array2string(base.x_star, precision=6))
    if args.with_noise:
        for label, params, _ in resolve_noise(cfg, net):
            res = solve_perturbed_lq_ne(game, draw(net, params, cfg.base_seed))
            rows.append((f"{label}:{cfg.base_seed}", res.method, res.residual, res.interior)
                        + tuple(float(v) for v in res.x_star))
            print(f"perturbed equilibrium '{label}' seed {cfg.base_seed}: "
                  f"distance {float(np.linalg.norm(base.x_star - res.x_star))!r}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        columns = ["seed", "method", "residual", "interior"] + \
            [f"x_{i + 1}" for i in range(game.n)]
        write_csv(os.path.join(args.out, "solve.csv"),
                  metadata(cfg, "solve"), columns, rows)
    return 0


def cmd_audit(args) -> int:
    cfg = _load(args)
    net = build_network(cfg)
    game = build_game(cfg, net)
    base_input = mechanism_input_from_game(game)
    entries = resolve_noise(cfg, net)
    if args.label is not None:
        entries = [e for e in entries if e[0] == args.label]
        if not entries:
            raise ConfigError(f"no noise label {args.label!r} in the config")
    reports = []
    for label, params, origin in entries:
        if origin.get("source") == "planned":
            budget = PrivacyBudget(epsilon=origin["epsilon"], delta=origin["delta"],
                                   mu=origin["mu"], p=group_factor(net))
        elif args.epsilon is not None and args.delta is not None and args.mu is not None:
            budget = PrivacyBudget(epsilon=args.epsilon, delta=args.delta,
                                   mu=args.mu, p=group_factor(net))
        else:
            raise ConfigError(
                f"noise '{label}' is explicit; supply --epsilon/--delta/--mu to audit it"
            )
        v, v_prime = worst_case_pair(base_input, budget.mu, args.i0)
        report = audit_mechanism(net, budget, params, v, v_prime, args.grid_step)
        reports.append((label, report))
        worst = max((f.delta_required for f in report.findings), default=0.0)
        print(f"audit '{label}': a={params.a!r} lambda={params.lam!r} "
              f"player {report.i0}, {len(report.findings)} differing coordinates")
        print(f"  worst per-coordinate delta required {worst!r} vs target {report.delta!r} "
              f"-> {'pass' if report.passed else 'FAIL'}")
        print(f"  scale bound met: {report.scale_ok}; half-width bound met: {report.bound_ok}")
        print(f"  composed ({report.composed_epsilon!r}, {report.composed_delta!r}); "
              f"network-wide ({report.network_epsilon!r}, {report.network_delta!r})")
        if args.out:
            os.makedirs(args.out, exist_ok=True)
            write_json(os.path.join(args.out, f"audit_{label}.json"),
                       {"meta": metadata(cfg, "audit", {"label": label}),
                        "report": report.to_dict()})
    if any(not report.passed for _, report in reports):
        raise PropertyViolation("at least one audited coordinate exceeds the delta target")
    return 0


def cmd_exp1(args) -> int:
    cfg = _load(args)
    out = ensure_out_dir(cfg, args.out)
    result = run_experiment1(cfg, parallel=args.parallel)
    write_csv(os.path.join(out, "exp1.csv"), metadata(cfg, "exp1"),
              ["label", "seed", "distance", "gamma_realized", "gamma_realized_fro",
               "gamma_worst", "interior", "alt_solve_gap"],
              result.rows)
    write_json(os.path.join(out, "exp1_summary.json"),
               {"meta": metadata(cfg, "exp1"), "labels": result.summary})
    from . import plots
    plots.render_exp1(result, os.path.join(out, "exp1_distances.png"))
    for label, stats in result.summary.items():
        print(f"{label}: {stats['executions']} runs, "
              f"{stats['violations_realized']} distance violations, "
              f"{stats['violations_worst']} radius-ordering violations, "
              f"max distance {stats['max_distance']!r}")
    return 0


def cmd_exp2(args) -> int:
    cfg = _load(args)
    out = ensure_out_dir(cfg, args.out)
    result = run_experiment2(cfg, parallel=args.parallel)
    write_csv(os.path.join(out, "exp2_hist.csv"), metadata(cfg, "exp2"),
              ["label", "player", "bin_lo", "bin_hi", "count"], result.hist_rows)
    write_csv(os.path.join(out, "exp2_bias.csv"), metadata(cfg, "exp2"),
              ["label", "player", "x_star", "mean_perturbed", "bias"], result.bias_rows)
    write_json(os.path.join(out, "exp2_summary.json"),
               {"meta": metadata(cfg, "exp2"), "labels": result.summary})
    from . import plots
    plots.render_exp2(result, os.path.join(out, "exp2_histograms.png"))
    for label, stats in result.summary.items():
        print(f"{label}: all biases negative: {stats['all_biases_negative']}, "
              f"max |bias| {stats['max_abs_bias']!r}")
    return 0


def cmd_exp3(args) -> int:
    cfg = _load(args)
    out = ensure_out_dir(cfg, args.out)
    result = run_experiment3(cfg, parallel=args.parallel)
    columns = ["player", "payoff_original"] + [f"mean_payoff_{l}" for l in result.labels]
    write_csv(os.path.join(out, "exp3.csv"), metadata(cfg, "exp3"), columns, result.rows)
    write_json(os.path.join(out, "exp3_summary.json"),
               {"meta": metadata(cfg, "exp3"), "labels": result.summary})
    from . import plots
    plots.render_exp3(result, os.path.join(out, "exp3_payoffs.png"))
    for label, stats in result.summary.items():
        print(f"{label}: mean payoffs below original for every player: "
              f"{stats['all_below_original']}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _load(args)
    out = ensure_out_dir(cfg, args.out)
    result = run_sweep(cfg, parallel=args.parallel)
    write_csv(os.path.join(out, "sweep.csv"),
              metadata(cfg, "sweep", {"note": result.note}),
              ["epsilon", "lambda", "a", "mean_rel_distance"], result.rows)
    write_json(os.path.join(out, "sweep_summary.json"),
               {"meta": metadata(cfg, "sweep", {"note": result.note}),
                "points": [{"epsilon": e, "lambda": l, "a": a, "mean_rel_distance": d}
                           for e, l, a, d in result.rows]})
    from . import plots
    plots.render_sweep(result, os.path.join(out, "sweep_tradeoff.png"))
    for eps, _, a, rel in result.rows:
        print(f"epsilon {eps!r}: a {a!r}, mean relative distance {rel!r}")
    return 0


def _add_config_flags(sub, with_parallel: bool = True) -> None:
    sub.add_argument("--config", required=True, help="experiment config file")
    sub.add_argument("--seed", type=int, default=None, help="override the config base seed")
    sub.add_argument("--out", default=None, help="output directory")
    if with_parallel:
        sub.add_argument("--parallel", type=int, default=1,
                         help="worker processes (1 = serial; results identical)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="privgame",
        description="Noise planning, perturbed equilibrium computation, and "
                    "privacy auditing for linear-quadratic network games.",
    )
    parser.add_argument("--version", action="version", version=f"privgame {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="turn a privacy budget into noise parameters")
    p.add_argument("--mu", type=float, required=True, help="adjacency radius")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--p", type=int, default=1, help="group factor of the target network")
    p.add_argument("--grid-step", type=float, default=None)
    p.add_argument("--strict", action="store_true",
                   help="exit 4 when the exact profile exceeds the delta target")
    p.add_argument("--out", default=None)
    p.set_defaults(handler=cmd_plan)

    p = sub.add_parser("sample", help="draw truncated-Laplace noise values")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--a", type=float, required=True, help="truncation half-width")
    p.add_argument("--lambda", dest="lam", type=float, required=True, help="scale")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(handler=cmd_sample)

    p = sub.add_parser("perturb", help="draw one mechanism realization and record it")
    _add_config_flags(p, with_parallel=False)
    p.add_argument("--label", default=None, help="noise label to use (default: first)")
    p.set_defaults(handler=cmd_perturb)

    p = sub.add_parser("solve", help="compute the equilibrium of the configured game")
    _add_config_flags(p, with_parallel=False)
    p.add_argument("--method", choices=["closed_form", "projected_gradient", "best_response"],
                   default="closed_form")
    p.add_argument("--with-noise", action="store_true",
                   help="also solve the perturbed game for every noise label")
    p.set_defaults(handler=cmd_solve)

    p = sub.add_parser("audit", help="audit the privacy guarantee on a worst-case pair")
    _add_config_flags(p, with_parallel=False)
    p.add_argument("--label", default=None, help="audit only this noise label")
    p.add_argument("--epsilon", type=float, default=None,
                   help="budget for explicit noise labels")
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--mu", type=float, default=None)
    p.add_argument("--i0", type=int, default=None, help="player whose row is shifted")
    p.add_argument("--grid-step", type=float, default=None)
    p.set_defaults(handler=cmd_audit)

    for name, handler, help_text in [
        ("exp1", cmd_exp1, "equilibrium displacement vs accuracy radii"),
        ("exp2", cmd_exp2, "perturbed equilibrium distribution and bias"),
        ("exp3", cmd_exp3, "payoffs at original and perturbed equilibria"),
        ("sweep", cmd_sweep, "privacy-accuracy tradeoff curve"),
    ]:
        p = sub.add_parser(name, help=help_text)
        _add_config_flags(p)
        p.set_defaults(handler=handler)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except PreconditionError as exc:
        print(f"precondition failure: {exc}", file=sys.stderr)
        return 3
    except PropertyViolation as exc:
        print(f"property violation: {exc}", file=sys.stderr)
        return 4
    except (ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
