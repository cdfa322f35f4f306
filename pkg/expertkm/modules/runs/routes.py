"""
Command-line routes.

Each command validates its inputs, calls the services and writes its outputs
with a `<output>.manifest.json` alongside. Service exceptions map to exit
codes: 2 for invalid input or configuration, 3 for numeric failures.
"""

import functools
import json
from pathlib import Path
from typing import Optional

import click
import pandas as pd
import pydantic
from loguru import logger

from expertkm.modules.experts.service import ExpertService
from expertkm.modules.product_limit.service import ProductLimitService
from expertkm.modules.runs.service import RunService
from expertkm.modules.semiparametric.schemas import ParametricModel
from expertkm.modules.semiparametric.service import FitService
from expertkm.modules.simulation.schemas import (
    ProportionalKernel,
    ScenarioConfig,
    SophisticatedNoise,
    TopQuantileKernel,
    TopQuantileReopen,
    UniformReopen,
)
from expertkm.modules.simulation.service import SimulationService
from expertkm.modules.survival.service import SurvivalService
from expertkm.utils import constants
from expertkm.utils.exceptions import ConfigurationError, NumericError, ValidationError

EXIT_INVALID = 2
EXIT_NUMERIC = 3

SCHEMES = {
    "uniform-reopen": UniformReopen,
    "top-quantile-reopen": TopQuantileReopen,
    "proportional-kernel": ProportionalKernel,
    "top-quantile-kernel": TopQuantileKernel,
}


def handle_errors(fn):
    """Map service exceptions to exit codes with the message on stderr."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ValidationError, ConfigurationError, pydantic.ValidationError, json.JSONDecodeError, OSError) as exc:
            logger.error(f"❌ {type(exc).__name__}: {exc}")
            click.echo(f"Error: {exc}", err=True)
            click.get_current_context().exit(EXIT_INVALID)
        except NumericError as exc:
            logger.error(f"❌ {type(exc).__name__}: {exc}")
            click.echo(f"Numeric error: {exc}", err=True)
            click.get_current_context().exit(EXIT_NUMERIC)

    return wrapper


def _arguments(ctx: click.Context) -> dict:
    return {key: str(value) if isinstance(value, Path) else value for key, value in ctx.params.items()}


def _parse_noise(value: Optional[str], shrink: float) -> Optional[SophisticatedNoise]:
    if value is None:
        return None
    if value in constants.SOPH_NOISE_PRESETS:
        return SophisticatedNoise.preset(value, shrink=shrink)
    try:
        mean_shape, mean_rate, sd_shape, sd_rate = (float(part) for part in value.split(","))
    except ValueError:
        raise ValidationError(f"--soph-noise expects a preset name or four numbers shape1,rate1,shape2,rate2; got {value!r}")
    return SophisticatedNoise(mean_shape=mean_shape, mean_rate=mean_rate, sd_shape=sd_shape, sd_rate=sd_rate, shrink=shrink)


def _parse_ints(value: str, name: str) -> list[int]:
    """'1,5,10' or '1-20' or a mix."""
    out: list[int] = []
    try:
        for part in value.split(","):
            part = part.strip()
            if "-" in part:
                first, last = (int(p) for p in part.split("-", 1))
                out.extend(range(first, last + 1))
            elif part:
                out.append(int(part))
    except ValueError:
        raise ValidationError(f"--{name} expects integers or ranges like 1-20, got {value!r}")
    if not out:
        raise ValidationError(f"--{name} is empty")
    return out


def _load_config(config: Optional[Path]) -> dict:
    if config is None:
        return {}
    return json.loads(Path(config).read_text(encoding="utf-8"))


def _load_sample(observations: Path, kernels: Optional[Path]):
    obs, ids = RunService.read_observations(observations)
    sample = SurvivalService.sort_sample(obs)
    beliefs = RunService.read_kernels(kernels, ids, obs) if kernels is not None else None
    return obs, ids, sample, beliefs


@click.command()
@click.option("--config", "config", type=click.Path(exists=True, dir_okay=False, path_type=Path), help="ScenarioConfig JSON file.")
@click.option("--n", "n", type=int, help="Sample size (overrides the config).")
@click.option("--seed", type=int, help="Scenario seed (overrides the config).")
@click.option("--crude-p0", type=float, help="Crude expert effectiveness p0 in [0, 1].")
@click.option("--soph-noise", type=str, help="Noise preset (expert1, expert2) or shape1,rate1,shape2,rate2.")
@click.option("--shrink", type=float, default=1.0, show_default=True, help="Noise shrink factor for the sophisticated expert.")
@click.option("--scheme", type=click.Choice(sorted(SCHEMES)), help="Dataset expert scheme with its default parameters.")
@click.option("--output", "-o", required=True, type=click.Path(dir_okay=False, path_type=Path), help="Observation CSV to write.")
@click.option("--kernels", type=click.Path(dir_okay=False, path_type=Path), help="Kernel CSV to write (default: <output>.kernels.csv).")
@click.pass_context
@handle_errors
def simulate(ctx, config, n, seed, crude_p0, soph_noise, shrink, scheme, output, kernels):
    """Simulate the contaminated disability scenario with optional expert information."""
    output = Path(output)
    kernels = Path(kernels) if kernels is not None else None
    settings = _load_config(config)
    overrides = {"n": n, "seed": seed, "crude_p0": crude_p0}
    settings.update({key: value for key, value in overrides.items() if value is not None})
    noise = _parse_noise(soph_noise, shrink)
    if noise is not None:
        settings["soph_noise"] = noise.model_dump()
    if scheme is not None:
        settings["dataset_scheme"] = SCHEMES[scheme]().model_dump()
    cfg = ScenarioConfig.model_validate(settings)

    scheme_cfg = cfg.dataset_scheme
    judging_scheme = scheme_cfg is not None and scheme_cfg.scheme.endswith("reopen")
    kernel_scheme = scheme_cfg is not None and not judging_scheme
    if cfg.crude_p0 is not None and judging_scheme:
        raise ConfigurationError("choose either --crude-p0 or a reopen scheme for the judgment column")
    if cfg.soph_noise is not None and kernel_scheme:
        raise ConfigurationError("choose either --soph-noise or a kernel scheme for the kernel file")

    obs = SimulationService.sample_event_times(cfg)
    eta = None
    if cfg.crude_p0 is not None:
        eta = SimulationService.crude_expert_scenario(obs, cfg.hazards, cfg.crude_p0, cfg.seed)
    elif judging_scheme:
        eta = SimulationService.dataset_expert_scenario(obs, scheme_cfg, cfg.seed)

    outputs = [RunService.write_observations(output, obs, eta=eta)]
    beliefs = None
    if cfg.soph_noise is not None:
        beliefs = SimulationService.sophisticated_expert_scenario(obs, cfg.soph_noise, cfg.seed)
    elif kernel_scheme:
        beliefs = SimulationService.dataset_expert_scenario(obs, scheme_cfg, cfg.seed)
    if beliefs is not None:
        kernels = kernels or output.with_name(output.stem + ".kernels.csv")
        outputs.append(RunService.write_kernels(kernels, beliefs))

    config_echo = cfg.model_dump()
    config_echo["contamination_fraction"] = SimulationService.contamination_fraction(obs)
    RunService.write_manifest(output, "simulate", _arguments(ctx), config_echo, outputs=outputs)
    click.echo(f"Simulated {cfg.n} observations -> {', '.join(str(p) for p in outputs)}")


@click.command()
@click.option("--observations", "-i", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--estimator", "-e", type=click.Choice(["km", "crude", "sophisticated", "oracle"]), default="km", show_default=True)
@click.option("--kernels", type=click.Path(exists=True, dir_okay=False, path_type=Path), help="Kernel CSV (sophisticated).")
@click.option("--grid-points", type=int, default=constants.GRID_POINTS, show_default=True)
@click.option("--output", "-o", required=True, type=click.Path(dir_okay=False, path_type=Path), help="Curve CSV to write.")
@click.pass_context
@handle_errors
def estimate(ctx, observations, estimator, kernels, grid_points, output):
    """Evaluate an estimator of F on the export grid."""
    _, _, sample, beliefs = _load_sample(observations, kernels)
    if estimator == "km":
        curve = ProductLimitService.km_event(sample)
    elif estimator == "crude":
        curve = ExpertService.crude_km(ExpertService.build_crude(sample))
    elif estimator == "sophisticated":
        if beliefs is None:
            raise ConfigurationError("the sophisticated estimator requires --kernels")
        curve = ExpertService.sophisticated_km(ExpertService.build_sophisticated(sample, beliefs))
    else:
        curve = ExpertService.oracle_km(sample)

    grid = ExpertService.export_grid(sample, grid_points)
    RunService.write_curve(output, grid, curve.evaluate(grid))
    inputs = [observations] + ([kernels] if kernels is not None else [])
    config_echo = {
        "estimator": estimator,
        "n": sample.n,
        "grid_points": grid_points,
        "grid_size": int(grid.size),
        "theta": ExpertService.theta_hat(sample),
        "theta_quantile": constants.THETA_QUANTILE,
    }
    RunService.write_manifest(output, "estimate", _arguments(ctx), config_echo, inputs=inputs, outputs=[output])
    click.echo(f"{estimator} curve on {grid.size} points -> {output}")


@click.command()
@click.option("--observations", "-i", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--kernels", type=click.Path(exists=True, dir_okay=False, path_type=Path), help="Kernel CSV (sophisticated mode).")
@click.option("--model", "family", type=click.Choice(["exp", "pareto", "hill"]), required=True)
@click.option("--mode", type=click.Choice(["crude", "sophisticated"]), default="crude", show_default=True)
@click.option("--sigma", type=float, help="Known Pareto scale.")
@click.option("--k", "k", type=int, help="Number of upper order statistics for hill.")
@click.option("--sweep", is_flag=True, help="Hill estimates for every k in 1..n-1.")
@click.option("--numeric", is_flag=True, help="Use the numeric maximizer instead of the closed form.")
@click.option("--workers", type=int, default=constants.SWEEP_WORKERS, show_default=True, help="Threads for --sweep.")
@click.option("--output", "-o", type=click.Path(dir_okay=False, path_type=Path), help="Report JSON (or sweep CSV) to write.")
@click.pass_context
@handle_errors
def fit(ctx, observations, kernels, family, mode, sigma, k, sweep, numeric, workers, output):
    """Fit an Exponential, Pareto or Hill-type tail model to the expert estimators."""
    _, _, sample, beliefs = _load_sample(observations, kernels)
    if mode == "sophisticated":
        if beliefs is None:
            raise ConfigurationError("sophisticated fits require --kernels")
        expert = ExpertService.build_sophisticated(sample, beliefs)
    else:
        expert = ExpertService.build_crude(sample)

    inputs = [observations] + ([kernels] if kernels is not None else [])
    config_echo = {"model": family, "mode": mode, "sigma": sigma, "k": k, "sweep": sweep, "numeric": numeric, "n": sample.n}

    if family == "hill" and sweep:
        rows = FitService.fit_hill_sweep(expert, mode, max_workers=workers)
        table = pd.DataFrame([row.model_dump() for row in rows], columns=["k", "estimate", "error"])
        if output is None:
            click.echo(table.to_csv(index=False, float_format=constants.FLOAT_FORMAT, na_rep=""), nl=False)
            return
        RunService.write_table(output, table)
        RunService.write_manifest(output, "fit", _arguments(ctx), config_echo, inputs=inputs, outputs=[output])
        click.echo(f"Hill sweep over {len(rows)} values of k -> {output}")
        return

    if family == "exp":
        if numeric:
            result = FitService.fit_numeric(expert, ParametricModel(family="exponential"), mode)
        elif mode == "crude":
            result = FitService.fit_exponential_crude(expert)
        else:
            result = FitService.fit_exponential_sophisticated(expert)
    elif family == "pareto":
        if sigma is None:
            raise ValidationError("--model pareto requires --sigma")
        if not sigma > 0:
            raise ValidationError(f"--sigma must be > 0, got {sigma!r}")
        if numeric:
            result = FitService.fit_numeric(expert, ParametricModel(family="pareto", sigma=sigma), mode)
        else:
            result = FitService.fit_pareto(expert, sigma, mode)
    else:
        if k is None:
            raise ValidationError("--model hill requires --k or --sweep")
        result = FitService.fit_hill_numeric(expert, k, mode) if numeric else FitService.fit_hill(expert, k, mode)

    report = result.model_dump_json(indent=2)
    if output is not None:
        Path(output).parent.mkdir(parents=True, exist_ok=True)
        Path(output).write_text(report + "\n", encoding="utf-8")
        RunService.write_manifest(output, "fit", _arguments(ctx), config_echo, inputs=inputs, outputs=[output])
    click.echo(report)


@click.command()
@click.option("--config", "config", type=click.Path(exists=True, dir_okay=False, path_type=Path), help="ScenarioConfig JSON file.")
@click.option("--sizes", default="500,5000", show_default=True, help="Sample sizes, e.g. 500,5000.")
@click.option("--seeds", default="1-20", show_default=True, help="Seeds, e.g. 1-20 or 1,2,3.")
@click.option("--crude-p0", type=float, help="Crude expert effectiveness p0 in [0, 1].")
@click.option("--soph-noise", type=str, help="Noise preset (expert1, expert2) or shape1,rate1,shape2,rate2.")
@click.option("--noise-shrink", type=click.Choice(["fixed", "root-n"]), default="fixed", show_default=True)
@click.option("--output", "-o", required=True, type=click.Path(dir_okay=False, path_type=Path), help="Per-run sup-error CSV.")
@click.pass_context
@handle_errors
def study(ctx, config, sizes, seeds, crude_p0, soph_noise, noise_shrink, output):
    """Monte-Carlo sup-errors of the estimators against the true F."""
    output = Path(output)
    settings = _load_config(config)
    if crude_p0 is not None:
        settings["crude_p0"] = crude_p0
    noise = _parse_noise(soph_noise, 1.0)
    if noise is not None:
        settings["soph_noise"] = noise.model_dump()
    cfg = ScenarioConfig.model_validate(settings)

    table = SimulationService.run_study(cfg, _parse_ints(sizes, "sizes"), _parse_ints(seeds, "seeds"), noise_shrink=noise_shrink)
    summary = SimulationService.summarize_study(table)
    summary_path = output.with_name(output.stem + ".summary.csv")
    outputs = [RunService.write_table(output, table), RunService.write_table(summary_path, summary)]
    RunService.write_manifest(output, "study", _arguments(ctx), cfg.model_dump(), outputs=outputs)
    click.echo(summary.to_string(index=False))


COMMANDS = {"simulate": simulate, "estimate": estimate, "fit": fit, "study": study}


@click.command()
@click.argument("manifest", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.pass_context
@handle_errors
def replay(ctx, manifest):
    """Re-run a command from its manifest and check that the outputs are unchanged."""
    recorded = RunService.read_manifest(manifest)
    changed_inputs = RunService.changed_files(recorded.inputs)
    if changed_inputs:
        raise ValidationError(f"inputs changed since the manifest was written: {changed_inputs}")

    ctx.invoke(COMMANDS[recorded.command], **recorded.arguments)
    changed = RunService.changed_files(recorded.outputs)
    if changed:
        logger.warning(f"⚠️ Replay of {recorded.command} produced different outputs: {changed}")
        raise click.ClickException(f"outputs differ from the manifest: {changed}")
    click.echo(f"Replayed {recorded.command}: {len(recorded.outputs)} output(s) identical")
