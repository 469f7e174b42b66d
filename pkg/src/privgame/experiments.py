"""Experiment harness: config files, seeded batch runs, and deterministic
output writing.

Configs are flat ``key = value`` text with ``#`` comments.  Unknown keys are
rejected so typos cannot silently change an experiment.  Every run is a pure
function of (config, base seed), executions are keyed by seed, and results are
gathered sorted by seed, so reruns produce byte-identical delimited output
with or without parallelism.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import __version__
from .equilibrium import (gamma_realized, gamma_worst_case, solve_lq_ne,
                          solve_perturbed_lq_ne)
from .game import LQGame, monotonicity_constant, payoff
from .llqfp import draw
from .network import Network, group_factor, load_edge_list, path, random_symmetric, \
    ring_lattice, star
from .privacy import PrivacyBudget, plan
from .trunc_laplace import GENERATOR_ALGORITHM, NoiseParams

FORMAT_VERSION = 1


class ConfigError(ValueError):
    """Malformed or inconsistent configuration (exit code 2)."""


class PreconditionError(RuntimeError):
    """A modeling assumption or run precondition failed (exit code 3)."""


class PropertyViolation(RuntimeError):
    """A certified property was violated at runtime (exit code 4)."""


@dataclass(frozen=True)
class NoiseSpec:
    """One labeled noise configuration: either explicit parameters or a
    privacy budget the planner turns into parameters."""

    label: str
    a: float | None = None
    lam: float | None = None
    epsilon: float | None = None
    delta: float | None = None
    mu: float | None = None

    def __post_init__(self) -> None:
        explicit = self.a is not None or self.lam is not None
        budget = self.epsilon is not None or self.delta is not None or self.mu is not None
        if explicit and budget:
            raise ConfigError(
                f"noise.{self.label}: give either (a, lambda) or (epsilon, delta, mu), not both"
            )
        if explicit and (self.a is None or self.lam is None):
            raise ConfigError(f"noise.{self.label}: explicit noise needs both a and lambda")
        if budget and (self.epsilon is None or self.delta is None or self.mu is None):
            raise ConfigError(f"noise.{self.label}: a budget needs epsilon, delta and mu")
        if not explicit and not budget:
            raise ConfigError(f"noise.{self.label}: empty noise spec")

    def resolve(self, net: Network) -> tuple[NoiseParams, dict]:
        if self.a is not None:
            return NoiseParams(a=self.a, lam=self.lam), {"source": "explicit"}
        budget = PrivacyBudget(epsilon=self.epsilon, delta=self.delta,
                               mu=self.mu, p=group_factor(net))
        params = plan(budget)
        return params, {"source": "planned", "epsilon": self.epsilon,
                        "delta": self.delta, "mu": self.mu, "p": budget.p}


@dataclass(frozen=True)
class SweepSpec:
    epsilons: tuple
    mu: float
    cap: float
    executions: int


@dataclass(frozen=True)
class ExperimentConfig:
    network: dict
    b: tuple
    box_lo: float
    box_hi: float
    noise_specs: tuple
    executions: int
    base_seed: int
    out_dir: str | None = None
    sweep: SweepSpec | None = None
    config_hash: str = "unset"
    source: str = "<memory>"


_NETWORK_KEYS = {
    "ring": {"n": int, "k": int, "w": float},
    "star": {"n": int, "w": float},
    "path": {"n": int, "w": float},
    "random": {"n": int, "edge_prob": float, "weight_lo": float, "weight_hi": float,
               "seed": int, "spectral_cap": float},
    "file": {"file": str},
}
# keys optional within their section
_OPTIONAL_NETWORK_KEYS = {"spectral_cap"}


def _parse_scalar(key: str, raw: str, kind):
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind.__name__}") from exc


def _parse_float_list(key: str, raw: str) -> tuple:
    try:
        return tuple(float(tok) for tok in raw.split(",") if tok.strip())
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r} as a comma list of numbers") from exc


def load_config(config_path) -> ExperimentConfig:
    """Parse and validate a config file; see the shipped configs for the key
    vocabulary.  Raises ConfigError on unknown keys, bad values, or missing
    required entries."""
    with open(config_path, encoding="utf-8") as handle:
        text = handle.read()
    pairs: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{config_path}:{lineno}: expected 'key = value', got {line!r}")
        key, _, value = body.partition("=")
        key, value = key.strip(), value.strip()
        if not key or not value:
            raise ConfigError(f"{config_path}:{lineno}: empty key or value")
        if key in pairs:
            raise ConfigError(f"{config_path}:{lineno}: duplicate key {key!r}")
        pairs[key] = value

    network: dict = {}
    noise_raw: dict[str, dict[str, float]] = {}
    sweep_raw: dict[str, object] = {}
    b_spec: tuple = (10.0,)
    box_lo, box_hi = 0.0, 100.0
    executions = 1
    base_seed = 0
    out_dir = None

    for key, raw in pairs.items():
        parts = key.split(".")
        if key == "network.kind":
            if raw not in _NETWORK_KEYS:
                raise ConfigError(f"network.kind: unknown kind {raw!r}")
            network["kind"] = raw
        elif parts[0] == "network" and len(parts) == 2:
            network[parts[1]] = raw
        elif key == "game.b":
            b_spec = _parse_float_list(key, raw)
            if not b_spec:
                raise ConfigError("game.b: empty value")
        elif key == "game.box_lo":
            box_lo = _parse_scalar(key, raw, float)
        elif key == "game.box_hi":
            box_hi = _parse_scalar(key, raw, float)
        elif parts[0] == "noise" and len(parts) == 3:
            label, fieldname = parts[1], parts[2]
            if fieldname not in {"a", "lambda", "epsilon", "delta", "mu"}:
                raise ConfigError(f"{key}: unknown noise field {fieldname!r}")
            noise_raw.setdefault(label, {})[fieldname] = _parse_scalar(key, raw, float)
        elif key == "sweep.epsilons":
            sweep_raw["epsilons"] = _parse_float_list(key, raw)
        elif key in {"sweep.mu", "sweep.cap"}:
            sweep_raw[parts[1]] = _parse_scalar(key, raw, float)
        elif key == "sweep.executions":
            sweep_raw["executions"] = _parse_scalar(key, raw, int)
        elif key == "executions":
            executions = _parse_scalar(key, raw, int)
        elif key == "base_seed":
            base_seed = _parse_scalar(key, raw, int)
        elif key == "out_dir":
            out_dir = raw
        else:
            raise ConfigError(f"unknown config key {key!r}")

    if "kind" in network:
        expected = _NETWORK_KEYS[network["kind"]]
        for name, value in list(network.items()):
            if name == "kind":
                continue
            if name not in expected:
                raise ConfigError(f"network.{name}: not a setting of kind {network['kind']!r}")
            network[name] = _parse_scalar(f"network.{name}", value, expected[name])
        missing = [name for name in expected
                   if name not in network and name not in _OPTIONAL_NETWORK_KEYS]
        if missing:
            raise ConfigError(f"network.kind {network['kind']!r} needs network.{missing[0]}")
    elif network:
        raise ConfigError("network settings given without network.kind")

    if executions < 1:
        raise ConfigError(f"executions must be >= 1, got {executions}")

    specs = tuple(
        NoiseSpec(label=label,
                  **{("lam" if name == "lambda" else name): value
                     for name, value in fields.items()})
        for label, fields in noise_raw.items()
    )
    sweep = None
    if sweep_raw:
        if "epsilons" not in sweep_raw or not sweep_raw["epsilons"]:
            raise ConfigError("sweep needs sweep.epsilons")
        sweep = SweepSpec(
            epsilons=tuple(sweep_raw["epsilons"]),
            mu=float(sweep_raw.get("mu", 0.01)),
            cap=float(sweep_raw.get("cap", 8.0)),
            executions=int(sweep_raw.get("executions", 50)),
        )
        if sweep.mu <= 0 or sweep.cap <= 0 or sweep.executions < 1:
            raise ConfigError("sweep.mu and sweep.cap must be positive, sweep.executions >= 1")

    return ExperimentConfig(
        network=network, b=b_spec, box_lo=box_lo, box_hi=box_hi,
        noise_specs=specs, executions=executions, base_seed=base_seed,
        out_dir=out_dir, sweep=sweep,
        config_hash=hashlib.sha256(text.encode("utf-8")).hexdigest(),
        source=str(config_path),
    )


def build_network(cfg: ExperimentConfig) -> Network:
    spec = cfg.network
    if "kind" not in spec:
        raise ConfigError("config has no network section")
    try:
        kind = spec["kind"]
        if kind == "ring":
            return ring_lattice(spec["n"], spec["k"], spec["w"])
        if kind == "star":
            return star(spec["n"], spec["w"])
        if kind == "path":
            return path(spec["n"], spec["w"])
        if kind == "random":
            return random_symmetric(spec["n"], spec["edge_prob"], spec["weight_lo"],
                                    spec["weight_hi"], spec["seed"],
                                    spec.get("spectral_cap"))
        return load_edge_list(spec["file"])
    except (ValueError, OSError) as exc:
        raise ConfigError(f"cannot build network: {exc}") from exc


def build_game(cfg: ExperimentConfig, net: Network | None = None) -> LQGame:
    net = build_network(cfg) if net is None else net
    b = cfg.b[0] if len(cfg.b) == 1 else np.asarray(cfg.b)
    if len(cfg.b) not in (1, net.n):
        raise ConfigError(f"game.b has {len(cfg.b)} entries for {net.n} players")
    if cfg.box_lo >= cfg.box_hi:
        raise ConfigError("game.box_lo must be below game.box_hi")
    try:
        return LQGame(net=net, b=np.broadcast_to(np.asarray(b, dtype=float), (net.n,)),
                      action_box=(cfg.box_lo, cfg.box_hi))
    except ValueError as exc:
        # covers both the monotonicity and the nonnegative-benefit assumptions
        raise PreconditionError(f"game assumptions fail: {exc}") from exc


def resolve_noise(cfg: ExperimentConfig, net: Network):
    if not cfg.noise_specs:
        raise ConfigError("config defines no noise.<label> entries")
    return [(spec.label,) + spec.resolve(net) for spec in cfg.noise_specs]


# ---------------------------------------------------------------------------
# batch execution


def _solved_x_hat(game: LQGame, params: NoiseParams, seed: int) -> tuple[np.ndarray, object]:
    drw = draw(game.net, params, seed)
    res = solve_perturbed_lq_ne(game, drw)
    if not res.interior:
        raise PreconditionError(
            f"perturbed equilibrium left the action-box interior at seed {seed}"
        )
    return res.x_star, drw


def _exp1_task(args) -> tuple:
    game, params, x_star, l_m, gamma_w, seed = args
    x_hat, drw = _solved_x_hat(game, params, seed)
    alt = solve_perturbed_lq_ne(game, drw, transpose=False)
    distance = float(np.linalg.norm(x_star - x_hat))
    g_real = gamma_realized(drw, x_star, l_m)
    g_fro = gamma_realized(drw, x_star, l_m, matrix_norm="frobenius")
    alt_gap = float(np.linalg.norm(x_hat - alt.x_star))
    return (seed, distance, g_real, g_fro, gamma_w, True, alt_gap)


def _xhat_task(args) -> tuple:
    game, params, seed = args
    x_hat, _ = _solved_x_hat(game, params, seed)
    return (seed, x_hat)


def _run_tasks(worker, tasks, parallel: int):
    if parallel <= 1:
        return [worker(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=parallel) as pool:
        return list(pool.map(worker, tasks, chunksize=max(1, len(tasks) // (4 * parallel))))


def _base_solution(game: LQGame):
    base = solve_lq_ne(game)
    if not base.interior:
        raise PreconditionError("original equilibrium is not interior to the action box")
    return base.x_star, monotonicity_constant(game)


@dataclass(frozen=True)
class Exp1Result:
    rows: tuple        # (label, seed, distance, g_real, g_fro, g_worst, interior, alt_gap)
    summary: dict      # label -> statistics
    x_star: np.ndarray


def run_experiment1(cfg: ExperimentConfig, parallel: int = 1) -> Exp1Result:
    """Per-execution equilibrium displacement against both accuracy radii."""
    net = build_network(cfg)
    game = build_game(cfg, net)
    x_star, l_m = _base_solution(game)
    x_norm = float(np.linalg.norm(x_star))
    rows = []
    summary: dict[str, dict] = {}
    for label, params, origin in resolve_noise(cfg, net):
        gamma_w = gamma_worst_case(net, params.a, x_norm, l_m)
        tasks = [(game, params, x_star, l_m, gamma_w, cfg.base_seed + j)
                 for j in range(cfg.executions)]
        results = sorted(_run_tasks(_exp1_task, tasks, parallel))
        rows.extend((label,) + r for r in results)
        dists = np.array([r[1] for r in results])
        g_reals = np.array([r[2] for r in results])
        summary[label] = {
            "a": params.a, "lambda": params.lam, **origin,
            "executions": cfg.executions,
            "violations_realized": int(np.sum(dists > g_reals)),
            "violations_worst": int(np.sum(g_reals > gamma_w)),
            "max_distance": float(dists.max()),
            "median_distance": float(np.median(dists)),
            "mean_distance": float(dists.mean()),
            "gamma_worst": gamma_w,
            "gamma_worst_tight": gamma_worst_case(net, params.a, x_norm, l_m, tight=True),
            "max_alt_solve_gap": float(max(r[6] for r in results)),
        }
    return Exp1Result(rows=tuple(rows), summary=summary, x_star=x_star)


@dataclass(frozen=True)
class Exp2Result:
    hist_rows: tuple   # (label, player, bin_lo, bin_hi, count)
    bias_rows: tuple   # (label, player, x_star_i, mean_perturbed, bias)
    summary: dict
    samples: dict      # label -> (executions, n) matrix of perturbed equilibria
    x_star: np.ndarray


def run_experiment2(cfg: ExperimentConfig, parallel: int = 1, bins: int = 30) -> Exp2Result:
    """Distribution of the perturbed equilibrium per player, plus signed bias."""
    net = build_network(cfg)
    game = build_game(cfg, net)
    x_star, _ = _base_solution(game)
    hist_rows = []
    bias_rows = []
    summary: dict[str, dict] = {}
    samples: dict[str, np.ndarray] = {}
    for label, params, origin in resolve_noise(cfg, net):
        tasks = [(game, params, cfg.base_seed + j) for j in range(cfg.executions)]
        results = sorted(_run_tasks(_xhat_task, tasks, parallel), key=lambda r: r[0])
        mat = np.vstack([r[1] for r in results])
        samples[label] = mat
        bias = mat.mean(axis=0) - x_star
        for i in range(game.n):
            counts, edges = np.histogram(mat[:, i], bins=bins)
            hist_rows.extend(
                (label, i + 1, float(edges[k]), float(edges[k + 1]), int(counts[k]))
                for k in range(bins)
            )
            bias_rows.append((label, i + 1, float(x_star[i]),
                              float(mat[:, i].mean()), float(bias[i])))
        summary[label] = {
            "a": params.a, "lambda": params.lam, **origin,
            "executions": cfg.executions,
            "bias": [float(v) for v in bias],
            "all_biases_negative": bool(np.all(bias < 0)),
            "max_abs_bias": float(np.max(np.abs(bias))),
        }
    return Exp2Result(hist_rows=tuple(hist_rows), bias_rows=tuple(bias_rows),
                      summary=summary, samples=samples, x_star=x_star)


@dataclass(frozen=True)
class Exp3Result:
    rows: tuple        # (player, payoff_original, mean payoff per label...)
    labels: tuple
    summary: dict


def run_experiment3(cfg: ExperimentConfig, parallel: int = 1) -> Exp3Result:
    """Original payoffs evaluated at the original and perturbed equilibria."""
    net = build_network(cfg)
    game = build_game(cfg, net)
    x_star, _ = _base_solution(game)
    base_payoffs = np.array([payoff(game, i, x_star) for i in range(1, game.n + 1)])
    labels = []
    means = []
    summary: dict[str, dict] = {}
    for label, params, origin in resolve_noise(cfg, net):
        tasks = [(game, params, cfg.base_seed + j) for j in range(cfg.executions)]
        results = sorted(_run_tasks(_xhat_task, tasks, parallel), key=lambda r: r[0])
        pay = np.vstack([
            [payoff(game, i, x_hat) for i in range(1, game.n + 1)]
            for _, x_hat in results
        ])
        mean_pay = pay.mean(axis=0)
        labels.append(label)
        means.append(mean_pay)
        summary[label] = {
            "a": params.a, "lambda": params.lam, **origin,
            "executions": cfg.executions,
            "mean_payoffs": [float(v) for v in mean_pay],
            "all_below_original": bool(np.all(mean_pay < base_payoffs)),
        }
    rows = tuple(
        (i + 1, float(base_payoffs[i])) + tuple(float(m[i]) for m in means)
        for i in range(game.n)
    )
    return Exp3Result(rows=rows, labels=tuple(labels), summary=summary)


@dataclass(frozen=True)
class SweepResult:
    rows: tuple        # (epsilon, lam, a, mean_rel_distance)
    note: str


def run_sweep(cfg: ExperimentConfig, parallel: int = 1) -> SweepResult:
    """Privacy-accuracy tradeoff curve in the zero-delta limit.

    The half-width formula degenerates as delta goes to zero (division by
    2*delta), so the sweep uses the limit scale mu/epsilon and caps the
    half-width at ``cap`` times the scale.
    """
    if cfg.sweep is None:
        raise ConfigError("config has no sweep section")
    net = build_network(cfg)
    game = build_game(cfg, net)
    x_star, _ = _base_solution(game)
    x_norm = float(np.linalg.norm(x_star))
    sweep = cfg.sweep
    rows = []
    for eps in sweep.epsilons:
        if eps <= 0:
            raise ConfigError(f"sweep epsilon must be positive, got {eps}")
        lam = sweep.mu / eps
        a = max(sweep.mu, sweep.cap * lam)
        params = NoiseParams(a=a, lam=lam)
        tasks = [(game, params, cfg.base_seed + j) for j in range(sweep.executions)]
        results = sorted(_run_tasks(_xhat_task, tasks, parallel), key=lambda r: r[0])
        rel = [float(np.linalg.norm(x_star - x_hat)) / x_norm for _, x_hat in results]
        rows.append((float(eps), lam, a, float(np.mean(rel))))
    note = ("zero-delta sweep: scale = mu/epsilon (the delta->0 limit), "
            f"half-width = max(mu, {sweep.cap!r}*scale)")
    return SweepResult(rows=tuple(rows), note=note)


# ---------------------------------------------------------------------------
# deterministic output files


def metadata(cfg: ExperimentConfig, command: str, extra: dict | None = None) -> dict:
    meta = {
        "format_version": FORMAT_VERSION,
        "command": command,
        "config_hash": cfg.config_hash,
        "base_seed": cfg.base_seed,
        "artifact_version": __version__,
        "generator": GENERATOR_ALGORITHM,
    }
    if extra:
        meta.update(extra)
    return meta


def _cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path_out, meta: dict, columns, rows) -> None:
    """CSV with a '#'-prefixed metadata preamble; floats use shortest
    round-trip formatting and lines end in LF, so equal data means equal
    bytes."""
    with open(path_out, "w", newline="\n", encoding="utf-8") as handle:
        for key, value in meta.items():
            handle.write(f"# {key} = {_cell(value)}\n")
        handle.write(",".join(columns) + "\n")
        for row in rows:
            handle.write(",".join(_cell(v) for v in row) + "\n")


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj]
    return obj


def write_json(path_out, obj) -> None:
    with open(path_out, "w", newline="\n", encoding="utf-8") as handle:
        json.dump(_plain(obj), handle, indent=2, sort_keys=True)
        handle.write("\n")


def ensure_out_dir(cfg: ExperimentConfig, override: str | None) -> str:
    out = override or cfg.out_dir
    if not out:
        raise ConfigError("no output directory: set out_dir in the config or pass --out")
    os.makedirs(out, exist_ok=True)
    return out
