from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd

from .config import (
    RunConfig,
    configure_logging,
    load_env_file,
    max_denominator,
    parse_pair,
    parse_ring,
    resolve_seed,
    split_list,
    worker_count,
)
from .constants import (
    COMMANDS,
    DEFAULT_BURN_IN,
    DEFAULT_GRID_POINTS,
    DEFAULT_STEPS,
    ENV_FILE_ENV,
    EXIT_OK,
    EXIT_UNEXPECTED,
    INITIAL_CONDITIONS,
)
from .diagram import (
    MeasuredDiagram,
    breakpoints,
    curve_from_spec,
    curve_to_spec,
    density_grid,
    diagram_for,
    diagram_frame,
    load_measurements,
    normalize_measurements,
    simulated_sweep,
    sweep_frame,
    triangle_check,
)
from .errors import ConfigError, ModelSpecError, NonConvergenceError, RingflowError
from .fitting import fit_concave, fit_minmax
from .minplus import karp_eigenvalue, power_iteration
from .models import MinPlusModel, load_model, model_from_spec, uniform_eigenvector, verify_eigenpair
from .output import artifact_path, to_json_line, write_csv, write_json
from .ring import RingConfig
from .simulate import initial_state, simulate, snapshot_frame, summarize


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(
        prog="ringflow",
        description="Fundamental traffic diagrams of min-plus, stochastic control and game models on a ring road.",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--model", type=Path, help="model spec JSON")
    parser.add_argument("--ring", help="N,M: cars and road length")
    parser.add_argument("--densities", help="comma-separated densities, as n/m ratios or decimals")
    parser.add_argument("--grid", type=int, default=DEFAULT_GRID_POINTS)
    parser.add_argument("--steps", type=int, default=DEFAULT_STEPS)
    parser.add_argument("--burn-in", type=int, default=DEFAULT_BURN_IN)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--stride", type=int)
    parser.add_argument("--out", type=Path, help="output path prefix")
    parser.add_argument("--format", default="csv", choices=("csv", "json"))
    parser.add_argument("--clamp-zero", action="store_true")
    parser.add_argument("--init", default="uniform", choices=INITIAL_CONDITIONS)
    parser.add_argument("--input", type=Path, help="measured diagram CSV with occupancy,flow columns")
    parser.add_argument("--template", type=Path, help="min-max template JSON for fit")
    parser.add_argument("--max-segments", type=int, default=6)
    parser.add_argument("--free-speed-ref", help="D,FLOW used to normalize measured flows")
    parser.add_argument("--workers", type=int)
    return parser


def parse_args(argv: Optional[Sequence[str]] = None) -> RunConfig:
    args = build_parser().parse_args(argv)
    free_speed_ref = None
    if args.free_speed_ref:
        d_text, flow_text = parse_pair(args.free_speed_ref, "--free-speed-ref")
        try:
            free_speed_ref = (float(d_text), float(flow_text))
        except ValueError as err:
            raise ConfigError(f"--free-speed-ref expects numbers, got {args.free_speed_ref!r}") from err
    return RunConfig(
        command=args.command,
        model_spec=args.model,
        ring=parse_ring(args.ring) if args.ring else None,
        densities=split_list(args.densities) if args.densities else [],
        grid=args.grid,
        steps=args.steps,
        burn_in=args.burn_in,
        seed=resolve_seed(args.seed),
        stride=args.stride,
        output=args.out,
        format=args.format,
        clamp_zero=args.clamp_zero,
        init=args.init,
        input_path=args.input,
        template=args.template,
        max_segments=args.max_segments,
        free_speed_ref=free_speed_ref,
        workers=worker_count(args.workers),
    )


def _write_table(config: RunConfig, suffix: str, frame: pd.DataFrame) -> Path:
    if config.format == "json":
        records = frame.astype(object).where(frame.notna(), None).to_dict(orient="records")
        return write_json(artifact_path(config.output, f"{suffix}.json"), records)
    return write_csv(artifact_path(config.output, f"{suffix}.csv"), frame)


def _ring(config: RunConfig) -> RingConfig:
    n, m = config.ring
    return RingConfig(n, m)


def run_eigen(config: RunConfig) -> int:
    model = load_model(config.model_spec)
    ring = _ring(config)
    closed = model.closed_form_speed(ring.density)
    payload: Dict[str, Any] = {
        "model": model.kind,
        "n": ring.n,
        "m": ring.m,
        "density": ring.d,
        "mu": closed.mu,
        "argmin": closed.argmin,
    }
    if closed.argmax is not None:
        payload["argmax"] = closed.argmax
    payload["eigenpair_verified"] = verify_eigenpair(closed.mu, uniform_eigenvector(ring), model, ring)
    if isinstance(model, MinPlusModel):
        matrix = model.matrix(ring)
        result = power_iteration(matrix, initial_state(config.init, ring, config.seed), max_steps=config.steps)
        payload.update({"mu_karp": karp_eigenvalue(matrix), "mu_power": result.mu, "K": result.K, "T": result.T})
    line = to_json_line(payload)
    print(line)
    if config.output is not None:
        write_json(artifact_path(config.output, "eigen.json"), payload)
    return EXIT_OK


def run_simulate(config: RunConfig) -> int:
    model = load_model(config.model_spec)
    ring = _ring(config)
    trajectory = simulate(model, ring, config.steps, init=config.init, seed=config.seed, stride=config.stride)
    _write_table(config, "snapshots", snapshot_frame(trajectory))
    summary = summarize(trajectory, min(config.burn_in, trajectory.step - 1))
    write_json(artifact_path(config.output, "summary.json"), summary)
    return EXIT_OK


def run_diagram(config: RunConfig) -> int:
    model = load_model(config.model_spec)
    curve = diagram_for(model)
    grid = density_grid(config.grid)
    _write_table(config, "diagram", diagram_frame(curve, grid, clamp_zero=config.clamp_zero))
    check = triangle_check(curve, grid)
    if not check.ok:
        logging.warning(
            "Diagram leaves the triangle f(d) <= 1-d at d=%.4g (excess %.3g)",
            check.worst_density,
            check.worst_excess,
        )
    logging.info("Phase boundaries: %s", ", ".join(f"{d:.6g}" for d in breakpoints(curve)) or "none")
    return EXIT_OK


def _sweep_rings(config: RunConfig) -> List[RingConfig]:
    bound = max_denominator()
    return [RingConfig.from_density(token, max_denominator=bound) for token in config.densities]


def run_sweep(config: RunConfig) -> int:
    model = load_model(config.model_spec)
    points = simulated_sweep(
        model,
        _sweep_rings(config),
        config.steps,
        burn_in=config.burn_in,
        init=config.init,
        seed=config.seed,
        workers=config.workers,
    )
    _write_table(config, "sweep", sweep_frame(diagram_for(model), points, clamp_zero=config.clamp_zero))
    return EXIT_OK


def _load_template(path: Path) -> Any:
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise ConfigError(f"Template {path} is not valid JSON: {err}") from err
    if "type" in payload:
        return curve_from_spec(payload)
    if "branches" in payload:
        return [int(size) for size in payload["branches"]]
    raise ConfigError(f"Template {path} needs a model 'type' or a 'branches' list")


def run_fit(config: RunConfig) -> int:
    points = load_measurements(config.input_path)
    if config.free_speed_ref is not None:
        points = normalize_measurements(MeasuredDiagram(points, config.free_speed_ref))
    if config.template is not None:
        result = fit_minmax(points, _load_template(config.template), seed=config.seed)
    else:
        result = fit_concave(points, config.max_segments)

    spec = curve_to_spec(result.curve, clamp=True)
    try:
        model_from_spec(spec)
    except ModelSpecError as err:
        logging.warning("Fitted curve is not a valid model: %s", err)
    spec["fit"] = {**result.report(), "raw": curve_to_spec(result.curve, clamp=False)}
    write_json(artifact_path(config.output, "fit.json"), spec)
    print(to_json_line(result.report()))
    if not result.converged:
        raise NonConvergenceError(
            f"Fit did not converge after {result.iterations} sweeps",
            best_estimate=result.max_residual,
            steps=result.iterations,
        )
    return EXIT_OK


HANDLERS = {
    "eigen": run_eigen,
    "simulate": run_simulate,
    "diagram": run_diagram,
    "sweep": run_sweep,
    "fit": run_fit,
}


def run(config: RunConfig) -> int:
    config.validate()
    logging.debug("Running %s with %s", config.command, config)
    return HANDLERS[config.command](config)


def _emit_error(err: Exception) -> None:
    payload: Dict[str, Any] = {"error": type(err).__name__, "message": str(err)}
    if isinstance(err, RingflowError):
        payload.update(err.details())
    print(to_json_line(payload), file=sys.stderr)


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        applied = load_env_file(os.getenv(ENV_FILE_ENV))
        configure_logging()
        if applied:
            logging.debug("Env file set %s", ", ".join(sorted(applied)))
        return run(parse_args(argv))
    except RingflowError as err:
        _emit_error(err)
        return err.exit_code
    except Exception as err:  # noqa: BLE001
        logging.exception("Unexpected failure: %s", err)
        _emit_error(err)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())


__all__ = ["build_parser", "main", "parse_args", "run"]
