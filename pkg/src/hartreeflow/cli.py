"""Run configuration, persistence, and command-line entry points.

A run is fully described by a JSON config (schema below, unknown keys
rejected) plus a seed; outputs are deterministic given (config, seed) and are
written under the output directory together with a manifest listing inputs,
versions, and content hashes.

    {
      "params": {"space_dim": 1, "component_count": 2, "power": 2.0,
                  "kernel_exponent": 0.5, "masses": [1.0, 1.0],
                  "box_length": 40.0, "points_per_dim": 256},
      "solver": {"tol": 1e-6, "max_iters": 300000, "seeds": 2},
      "evolution": {"T": 5.0, "dt": 0.001},
      "experiment": "validate",
      "output_dir": "out",
      "seed": 0
    }

Subcommands: validate | minimize | evolve | scan | stability | check-lemmas,
each taking --config PATH and optional --out DIR, --seed N, --workers N (the
HARTREEFLOW_WORKERS environment variable is the lowest-precedence override).
check-lemmas exits nonzero if any assertion fails.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from . import grid as gridmod
from .analysis import (
    concentration_profile,
    cross_term_check,
    default_cases_m3,
    default_mass_pairs_m2,
    scaling_negativity_test,
    stability_experiment,
    strict_scaling_check,
    subadditivity_scan,
)
from .evolve import evolve, write_trace_csv
from .hartree import build_kernel
from .minimize import ground_state, phase_factorize, save_ground_state
from .params import InvalidParameterError, SystemParams, validate_assumptions

EXPERIMENTS = ("minimize", "evolve", "scan-subadditivity", "stability", "validate", "lemma-checks")
WORKERS_ENV = "HARTREEFLOW_WORKERS"


class ConfigError(ValueError):
    """Malformed or schema-violating run configuration."""


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-6
    max_iters: int = 300_000
    seeds: int = 2


@dataclass(frozen=True)
class EvolutionConfig:
    T: float = 5.0
    dt: float = 1e-3


@dataclass(frozen=True)
class RunConfig:
    params: SystemParams
    solver: SolverConfig = field(default_factory=SolverConfig)
    evolution: EvolutionConfig = field(default_factory=EvolutionConfig)
    experiment: str = "validate"
    output_dir: str = "out"
    seed: int = 0


def _require_keys(section: dict, allowed: dict, where: str) -> None:
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")
    for key, kind in allowed.items():
        if key in section and not isinstance(section[key], kind):
            raise ConfigError(f"{where}.{key} has wrong type: expected {kind}, got {type(section[key]).__name__}")


def parse_config(raw: dict) -> RunConfig:
    """Validate a parsed JSON object against the schema, filling defaults."""
    if not isinstance(raw, dict):
        raise ConfigError("top-level config must be an object")
    _require_keys(
        raw,
        {
            "params": dict,
            "solver": dict,
            "evolution": dict,
            "experiment": str,
            "output_dir": str,
            "seed": int,
        },
        "config",
    )
    if "params" not in raw:
        raise ConfigError("config.params is required")
    praw = raw["params"]
    _require_keys(
        praw,
        {
            "space_dim": int,
            "component_count": int,
            "power": (int, float),
            "kernel_exponent": (int, float),
            "masses": list,
            "box_length": (int, float),
            "points_per_dim": int,
        },
        "config.params",
    )
    missing = {"space_dim", "component_count", "power", "kernel_exponent", "masses", "box_length", "points_per_dim"} - set(praw)
    if missing:
        raise ConfigError(f"config.params missing key(s): {', '.join(sorted(missing))}")
    try:
        params = SystemParams(
            space_dim=praw["space_dim"],
            component_count=praw["component_count"],
            power=float(praw["power"]),
            kernel_exponent=float(praw["kernel_exponent"]),
            masses=tuple(float(v) for v in praw["masses"]),
            box_length=float(praw["box_length"]),
            points_per_dim=praw["points_per_dim"],
        )
    except InvalidParameterError as exc:
        raise ConfigError(f"config.params invalid: {exc}") from exc

    report = validate_assumptions(params)
    if not report.passed:
        names = ", ".join(c.name for c in report.failing())
        raise ConfigError(f"parameter assumptions violated: {names}")

    sraw = raw.get("solver", {})
    _require_keys(sraw, {"tol": (int, float), "max_iters": int, "seeds": int}, "config.solver")
    solver = SolverConfig(
        tol=float(sraw.get("tol", SolverConfig.tol)),
        max_iters=sraw.get("max_iters", SolverConfig.max_iters),
        seeds=sraw.get("seeds", SolverConfig.seeds),
    )
    if solver.tol <= 0 or solver.max_iters <= 0 or solver.seeds <= 0:
        raise ConfigError("config.solver values must be positive")

    eraw = raw.get("evolution", {})
    _require_keys(eraw, {"T": (int, float), "dt": (int, float)}, "config.evolution")
    evolution = EvolutionConfig(
        T=float(eraw.get("T", EvolutionConfig.T)), dt=float(eraw.get("dt", EvolutionConfig.dt))
    )
    if evolution.T <= 0 or evolution.dt <= 0:
        raise ConfigError("config.evolution values must be positive")

    experiment = raw.get("experiment", "validate")
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}; expected one of {', '.join(EXPERIMENTS)}")

    return RunConfig(
        params=params,
        solver=solver,
        evolution=evolution,
        experiment=experiment,
        output_dir=raw.get("output_dir", "out"),
        seed=raw.get("seed", 0),
    )


def load_config(path) -> RunConfig:
    """Parse and validate a JSON run config; parse errors carry line info."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}")
    return parse_config(raw)


# -- output helpers -------------------------------------------------------------


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _config_dict(config: RunConfig) -> dict:
    return {
        "params": {
            "space_dim": config.params.space_dim,
            "component_count": config.params.component_count,
            "power": config.params.power,
            "kernel_exponent": config.params.kernel_exponent,
            "masses": list(config.params.masses),
            "box_length": config.params.box_length,
            "points_per_dim": config.params.points_per_dim,
        },
        "solver": {"tol": config.solver.tol, "max_iters": config.solver.max_iters, "seeds": config.solver.seeds},
        "evolution": {"T": config.evolution.T, "dt": config.evolution.dt},
        "experiment": config.experiment,
        "output_dir": config.output_dir,
        "seed": config.seed,
    }


def _write_manifest(out_dir, config: RunConfig, inputs: dict, outputs: list) -> None:
    manifest = {
        "config": _config_dict(config),
        "inputs": inputs,
        "versions": {
            "hartreeflow": __version__,
            "numpy": np.__version__,
            "python": ".".join(str(v) for v in sys.version_info[:3]),
        },
        "outputs": {os.path.basename(p): _sha256(p) for p in sorted(outputs)},
    }
    _write_json(os.path.join(out_dir, "manifest.json"), manifest)


# -- experiments ----------------------------------------------------------------


def _solve_reference(config: RunConfig, kernel):
    return ground_state(
        config.params,
        kernel,
        tol=config.solver.tol,
        max_iters=config.solver.max_iters,
        seed=config.seed,
    )


def _run_validate(config: RunConfig, out_dir: str, outputs: list) -> int:
    report = validate_assumptions(config.params)
    print(report.summary())
    path = os.path.join(out_dir, "validation.json")
    _write_json(
        path,
        {
            "passed": report.passed,
            "clauses": [
                {"name": c.name, "passed": c.passed, "margin": c.margin, "strict": c.strict}
                for c in report.clauses
            ],
        },
    )
    outputs.append(path)
    return 0


def _run_minimize(config: RunConfig, kernel, out_dir: str, outputs: list) -> int:
    gs = _solve_reference(config, kernel)
    snap, meta = save_ground_state(os.path.join(out_dir, "ground_state"), gs, config.params)
    outputs.extend([snap, meta])
    status = "converged" if gs.converged else "NOT converged"
    print(
        f"minimize: {status} in {gs.iterations} iterations, "
        f"energy={gs.energy.total:.10g}, lambda={[round(float(v), 8) for v in gs.multipliers]}"
    )
    return 0


def _run_evolve(config: RunConfig, kernel, out_dir: str, outputs: list) -> int:
    gs = _solve_reference(config, kernel)
    steps = max(1, int(round(config.evolution.T / config.evolution.dt)))
    trace = evolve(
        gs.fields,
        config.evolution.T,
        config.evolution.dt,
        kernel,
        config.params.power,
        ground_state=gs,
        record_every=max(1, steps // 200),
    )
    path = os.path.join(out_dir, "trace.csv")
    write_trace_csv(path, trace)
    outputs.append(path)
    print(
        f"evolve: T={trace.T}, mass drift={trace.mass_drift:.3e}, "
        f"energy drift={trace.energy_drift:.3e}, flags={trace.flags}"
    )
    return 0


def _scan_pairs_for(config: RunConfig):
    if config.params.component_count == 3:
        return [(m, t) for _, m, t in default_cases_m3(seed=config.seed)]
    if config.params.component_count == 2:
        return default_mass_pairs_m2()
    return [((0.5,), (0.5,)), ((1.0,), (1.0,)), ((0.5,), (1.0,))]


def _run_scan(config: RunConfig, kernel, out_dir: str, outputs: list, workers: int) -> int:
    pairs = _scan_pairs_for(config)
    result = subadditivity_scan(
        pairs,
        config.params,
        kernel,
        tol=config.solver.tol,
        max_iters=config.solver.max_iters,
        seeds_per_value=config.solver.seeds,
        base_seed=config.seed,
        workers=workers,
    )
    path = os.path.join(out_dir, "subadditivity.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["masses_m", "masses_t", "i_m", "i_t", "i_sum", "margin", "converged"])
        for rec in result.records + result.excluded:
            writer.writerow(
                [
                    ";".join(repr(v) for v in rec.masses_m),
                    ";".join(repr(v) for v in rec.masses_t),
                    repr(rec.i_m),
                    repr(rec.i_t),
                    repr(rec.i_sum),
                    repr(rec.margin),
                    rec.converged,
                ]
            )
    outputs.append(path)
    summary_path = os.path.join(out_dir, "subadditivity_summary.json")
    all_positive = all(r.margin > 0 for r in result.records)
    _write_json(
        summary_path,
        {
            "pairs": len(pairs),
            "converged_records": len(result.records),
            "excluded_records": len(result.excluded),
            "min_margin": result.min_margin,
            "all_margins_positive": all_positive,
        },
    )
    outputs.append(summary_path)
    print(
        f"scan: {len(result.records)} records, {len(result.excluded)} excluded, "
        f"min margin = {result.min_margin:.6g}"
    )
    return 0


def _run_stability(config: RunConfig, kernel, out_dir: str, outputs: list) -> int:
    gs = _solve_reference(config, kernel)
    report = stability_experiment(
        gs,
        [0.0, 1e-3, 1e-2],
        config.evolution.T,
        config.evolution.dt,
        kernel,
        config.params.power,
        seed=config.seed,
    )
    path = os.path.join(out_dir, "stability.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epsilon", "max_distance", "ratio", "flags"])
        for e in report.entries:
            writer.writerow([repr(e.epsilon), repr(e.max_distance), repr(e.ratio), ";".join(sorted(e.flags))])
    outputs.append(path)
    for e in report.entries:
        print(f"stability: eps={e.epsilon:g} max_distance={e.max_distance:.6g} ratio={e.ratio:.6g}")
    return 0


def _run_lemma_checks(config: RunConfig, kernel, out_dir: str, outputs: list, workers: int) -> int:
    """Battery of the analytically guaranteed facts at the configured scale."""
    params = config.params
    p = params.power
    checks = []

    def record(name, passed, detail):
        checks.append({"name": name, "passed": bool(passed), "detail": detail})
        print(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")

    gs = _solve_reference(config, kernel)
    record(
        "infimum-negative",
        gs.converged and gs.energy.total < -10 * config.solver.tol,
        f"energy={gs.energy.total:.8g} converged={gs.converged}",
    )
    record(
        "multipliers-positive",
        gs.converged and bool(np.all(gs.multipliers > 0)),
        f"lambda={[round(float(v), 6) for v in gs.multipliers]}",
    )
    if gs.converged:
        devs = [phase_factorize(c).deviation for c in gs.fields.components]
        record("phase-factorization", max(devs) <= 1e-6, f"max deviation={max(devs):.3e}")

        comp = gs.fields.components[0]
        sc = strict_scaling_check(comp, 1.5, kernel, p)
        identity_err = abs(sc.delta_observed - (1.5**p - 1.5) * sc.pair_term)
        record(
            "scaling-gap-positive",
            sc.delta_observed > 0 and identity_err <= 1e-10 * max(abs(sc.delta_observed), 1.0),
            f"delta={sc.delta_observed:.8g}",
        )

        if params.component_count == 2:
            v1, v2 = cross_term_check(gs, kernel, p)
            record("cross-term-negative", v1 < 0 and v2 < 0, f"values=({v1:.6g}, {v2:.6g})")
    else:
        for name in ("phase-factorization", "scaling-gap-positive", "cross-term-negative"):
            record(name, False, "reference solve did not converge")

    pair = ((tuple(m / 2 for m in params.masses)), tuple(m / 2 for m in params.masses))
    scan = subadditivity_scan(
        [pair],
        params,
        kernel,
        tol=config.solver.tol,
        max_iters=config.solver.max_iters,
        seeds_per_value=config.solver.seeds,
        base_seed=config.seed,
        workers=workers,
    )
    margin = scan.records[0].margin if scan.records else float("nan")
    record(
        "subadditivity-sample",
        len(scan.records) == 1 and margin > 10 * config.solver.tol,
        f"margin={margin:.6g}",
    )

    if gs.converged:
        grid = gs.fields.grid
        radii = np.linspace(grid.spacing, grid.box_length / 4, 16)
        profile = concentration_profile(gs.fields, radii)
        q_quarter = profile.q_values[-1]
        record(
            "concentration-tight",
            q_quarter >= 0.99 * params.total_mass,
            f"Q(L/4)={q_quarter:.8g} of total={params.total_mass}",
        )
    else:
        record("concentration-tight", False, "reference solve did not converge")

    path = os.path.join(out_dir, "lemma_checks.json")
    passed = all(c["passed"] for c in checks)
    _write_json(path, {"passed": passed, "checks": checks})
    outputs.append(path)
    return 0 if passed else 1


def run(config: RunConfig, workers: int = 1, config_path: str | None = None) -> int:
    """Execute one experiment; writes artifacts plus a manifest, returns exit status."""
    out_dir = config.output_dir
    os.makedirs(out_dir, exist_ok=True)
    outputs: list = []
    inputs = {"config_path": config_path or "<inline>"}
    if config_path and os.path.exists(config_path):
        inputs["config_sha256"] = _sha256(config_path)

    if config.experiment == "validate":
        status = _run_validate(config, out_dir, outputs)
    else:
        kernel = build_kernel(gridmod.grid_for(config.params), config.params.kernel_exponent)
        if config.experiment == "minimize":
            status = _run_minimize(config, kernel, out_dir, outputs)
        elif config.experiment == "evolve":
            status = _run_evolve(config, kernel, out_dir, outputs)
        elif config.experiment == "scan-subadditivity":
            status = _run_scan(config, kernel, out_dir, outputs, workers)
        elif config.experiment == "stability":
            status = _run_stability(config, kernel, out_dir, outputs)
        elif config.experiment == "lemma-checks":
            status = _run_lemma_checks(config, kernel, out_dir, outputs, workers)
        else:  # pragma: no cover - parse_config guards this
            raise ConfigError(f"unknown experiment {config.experiment!r}")

    _write_manifest(out_dir, config, inputs, outputs)
    return status


_SUBCOMMAND_EXPERIMENTS = {
    "validate": "validate",
    "minimize": "minimize",
    "evolve": "evolve",
    "scan": "scan-subadditivity",
    "stability": "stability",
    "check-lemmas": "lemma-checks",
}


def _resolve_workers(cli_value) -> int:
    if cli_value is not None:
        return max(1, cli_value)
    env = os.environ.get(WORKERS_ENV)
    if env is not None:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {env!r}")
    return 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="hartreeflow", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _SUBCOMMAND_EXPERIMENTS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", required=True, help="path to the JSON run config")
        cmd.add_argument("--out", default=None, help="output directory (overrides config)")
        cmd.add_argument("--seed", type=int, default=None, help="seed override")
        cmd.add_argument("--workers", type=int, default=None, help="work-pool size for scans")
    args = parser.parse_args(argv)

    from dataclasses import replace

    try:
        config = load_config(args.config)
        config = replace(config, experiment=_SUBCOMMAND_EXPERIMENTS[args.command])
        if args.out is not None:
            config = replace(config, output_dir=args.out)
        if args.seed is not None:
            config = replace(config, seed=args.seed)
        workers = _resolve_workers(args.workers)
        return run(config, workers=workers, config_path=args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
