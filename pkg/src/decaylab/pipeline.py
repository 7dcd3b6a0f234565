"""Run configuration and the staged analysis pipeline.

A run resolves its configuration from defaults, then an optional JSON
config file, then explicit flag overrides. Every run is driven by one
64-bit seed, writes a manifest with the resolved config and its hash,
and holds a lockfile so two runs never write the same output directory
concurrently.

Stages execute in a fixed order (distances, fits, comparison, boundary
and functionals, diagnostics, heterogeneity, plus the self-contained
simulation, panel, and synthetic-data stages). A stage failure is
recorded with its stage name and the completed stages are still
written, so partial results are always available. ``results.json`` is
byte-identical across runs with the same config and seed; wall-clock
metadata lives only in the manifest.
"""

from __future__ import annotations

import dataclasses
import datetime
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    ConfigError,
    DataError,
    DecayLabError,
    EstimationError,
    InvalidConfig,
)
from .estimation import HacConfig, Sample, compare_models, fit_nls, fit_ols_log
from .functionals import (
    BUILTIN_SPLITS,
    ExposureSpec,
    boundary_evolution,
    boundary_velocity,
    cumulative_exposure,
    implied_diffusion,
    sign_reversal_test,
    spatial_boundary,
    stratified_fit,
)
from .geo import GeoPoint, SourceSet, build_distance_table
from .models import DecayModelKind, DecayParams, predict, clamp_distances
from . import io as dio
from .panel import (
    BANDED_EFFECT_CONFIG,
    DEFAULT_PANEL_CONFIG,
    PanelConfig,
    distance_band_effects,
    event_study,
    fit_twfe,
    generate_synthetic_panel,
    interaction_did,
)
from .pde import (
    BoundaryCondition,
    FieldGrid,
    PdeParams,
    PointSource,
    SimulationConfig,
    max_stable_dt,
    recover_kappa_eff,
    solve_transient,
    steady_state_green,
)

__all__ = ["RunConfig", "PipelineOutcome", "run_pipeline", "STAGE_ORDER"]

STAGE_ORDER = (
    "synth",
    "distances",
    "fit",
    "compare",
    "boundary",
    "functionals",
    "diagnose",
    "heterogeneity",
    "pde",
    "did",
)

_MODEL_NAMES = tuple(kind.value for kind in DecayModelKind)


@dataclass
class RunConfig:
    """Resolved settings for one pipeline run."""

    units_csv: str | None = None
    sources_csv: str | None = None
    panel_csv: str | None = None
    outcome: str | None = None
    models: tuple[str, ...] = _MODEL_NAMES
    epsilon: float = 0.9
    hac_cutoff_km: float = 50.0
    hac_kernel: str = "bartlett"
    exposure_horizon_years: float = 10.0
    domain_span_km: float = 4500.0
    heterogeneity_splits: tuple[str, ...] = ()
    pde: dict = field(default_factory=dict)
    did: dict = field(default_factory=dict)
    synth: dict = field(default_factory=dict)
    output_dir: str = "decaylab_out"
    seed: int = 0
    figures: bool = True
    stages: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not 0.0 < self.epsilon < 1.0:
            raise InvalidConfig(f"epsilon must be in (0, 1), got {self.epsilon}")
        if not self.hac_cutoff_km > 0:
            raise InvalidConfig(f"hac_cutoff_km must be positive, got {self.hac_cutoff_km}")
        if self.hac_kernel not in ("bartlett", "uniform"):
            raise InvalidConfig(f"unknown hac_kernel {self.hac_kernel!r}")
        if not self.exposure_horizon_years > 0:
            raise InvalidConfig("exposure_horizon_years must be positive")
        models = tuple(self.models)
        try:
            self.models = tuple(DecayModelKind.parse(name).value for name in models)
        except ValueError as exc:
            raise InvalidConfig(str(exc)) from None
        if len(set(self.models)) != len(self.models):
            raise InvalidConfig("duplicate model names")
        for split in self.heterogeneity_splits:
            if split not in BUILTIN_SPLITS:
                raise InvalidConfig(
                    f"unknown split {split!r}; available: {sorted(BUILTIN_SPLITS)}"
                )
        self.heterogeneity_splits = tuple(self.heterogeneity_splits)
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise InvalidConfig(f"seed must be a nonnegative integer, got {self.seed!r}")
        if self.seed >= 2**64:
            raise InvalidConfig("seed must fit in 64 bits")
        self.stages = tuple(self.stages)
        for stage in self.stages:
            if stage not in STAGE_ORDER:
                raise InvalidConfig(f"unknown stage {stage!r}")

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in dataclasses.fields(cls))

    @classmethod
    def resolve(cls, config_file: str | None = None, overrides: dict | None = None) -> "RunConfig":
        """Defaults, overlaid by a JSON config file, overlaid by flags."""
        values: dict = {}
        if config_file:
            try:
                loaded = dio.read_json(config_file)
            except FileNotFoundError as exc:
                raise ConfigError(f"config file not found: {config_file}") from exc
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file {config_file} is not valid JSON: {exc}") from exc
            if not isinstance(loaded, dict):
                raise ConfigError("config file must hold a JSON object")
            unknown = set(loaded) - set(cls.field_names())
            if unknown:
                raise ConfigError(f"unknown config keys: {sorted(unknown)}")
            values.update(loaded)
        for key, value in (overrides or {}).items():
            if value is None:
                continue
            if key not in cls.field_names():
                raise ConfigError(f"unknown config override {key!r}")
            values[key] = value
        for key in ("models", "heterogeneity_splits", "stages"):
            if key in values:
                values[key] = tuple(values[key])
        try:
            return cls(**values)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["models"] = list(self.models)
        out["heterogeneity_splits"] = list(self.heterogeneity_splits)
        out["stages"] = list(self.stages)
        return out

    def config_hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    def hac(self) -> HacConfig:
        return HacConfig(cutoff_km=self.hac_cutoff_km, kernel=self.hac_kernel)


@dataclass
class PipelineOutcome:
    results: dict
    errors: list[dict]
    output_dir: str
    # exception objects matching ``errors``, kept for exit-code mapping
    exceptions: list[DecayLabError] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


class _OutputLock:
    """Exclusive lockfile per output directory."""

    def __init__(self, directory: Path) -> None:
        self.path = directory / ".decaylab.lock"
        self.fd: int | None = None

    def __enter__(self) -> "_OutputLock":
        try:
            self.fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise ConfigError(
                f"output directory is locked by another run ({self.path}); "
                "remove the lockfile if that run is dead"
            ) from None
        os.write(self.fd, str(os.getpid()).encode())
        return self

    def __exit__(self, *exc_info) -> None:
        if self.fd is not None:
            os.close(self.fd)
            self.path.unlink(missing_ok=True)
            self.fd = None
        try:
            os.unlink(self.path)
        except FileNotFoundError:
            pass


def _jsonable(value):
    """Make results JSON-serializable with deterministic float text."""
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.floating, float)):
        v = float(value)
        if math.isnan(v):
            return "NaN"
        if math.isinf(v):
            return "Infinity" if v > 0 else "-Infinity"
        return v
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, DecayModelKind):
        return value.value
    return value


def _curve_rows(sample: Sample, fits: dict, n_bins: int = 25) -> list[dict]:
    """Quantile-binned outcome means with 95% CIs plus fitted values."""
    d = sample.distances_km
    y = sample.outcomes
    n_bins = max(1, min(n_bins, sample.n // 4 or 1))
    edges = np.unique(np.quantile(d, np.linspace(0.0, 1.0, n_bins + 1)))
    if edges.size < 2:
        edges = np.array([d.min(), d.max() + 1.0])
    idx = np.clip(np.searchsorted(edges, d, side="right") - 1, 0, edges.size - 2)
    rows = []
    for b in range(edges.size - 1):
        mask = idx == b
        n_b = int(mask.sum())
        if n_b == 0:
            continue
        center = float(np.mean(d[mask]))
        mean = float(np.mean(y[mask]))
        sd = float(np.std(y[mask], ddof=1)) if n_b > 1 else 0.0
        half = 1.96 * sd / math.sqrt(n_b) if n_b > 1 else 0.0
        row = {
            "d_km": center,
            "binned_mean": mean,
            "binned_ci_lo": mean - half,
            "binned_ci_hi": mean + half,
            "bin_n": n_b,
        }
        for name, fit in fits.items():
            clamped = clamp_distances(np.array([center]), fit.params.kind)
            row[f"fitted_{name}"] = float(predict(fit.params, clamped)[0])
        rows.append(row)
    return rows


def _default_stages(config: RunConfig) -> tuple[str, ...]:
    """Infer the stage set from what the config provides."""
    stages: list[str] = []
    if config.synth:
        stages.append("synth")
    if config.units_csv:
        stages += ["distances", "fit", "compare", "boundary", "functionals", "diagnose"]
        if config.heterogeneity_splits:
            stages.append("heterogeneity")
    if config.pde:
        stages.append("pde")
    if config.panel_csv:
        stages.append("did")
    if not stages:
        raise ConfigError(
            "nothing to do: provide units_csv, panel_csv, a pde scenario, "
            "a synth spec, or an explicit stage list"
        )
    return tuple(stages)


def run_pipeline(config: RunConfig) -> PipelineOutcome:
    """Execute the configured stages and write all outputs.

    Returns the in-memory results next to the list of per-stage errors;
    everything is also persisted under ``config.output_dir``.
    """
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    selected = config.stages or _default_stages(config)
    stages = [s for s in STAGE_ORDER if s in selected]
    results: dict = {"stages_run": [], "seed": config.seed}
    errors: list[dict] = []
    exceptions: list[DecayLabError] = []
    context: dict = {}

    with _OutputLock(out_dir):
        for stage in stages:
            runner = _STAGE_RUNNERS[stage]
            try:
                runner(config, context, results, out_dir)
                results["stages_run"].append(stage)
            except DecayLabError as exc:
                errors.append(
                    {"stage": stage, "error": type(exc).__name__, "message": str(exc)}
                )
                exceptions.append(exc)
        results["errors"] = errors
        dio.write_json(out_dir / "results.json", _jsonable(results))
        manifest = {
            "config": config.to_dict(),
            "config_hash": config.config_hash(),
            "seed": config.seed,
            "package_version": __version__,
            "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        }
        dio.write_json(out_dir / "manifest.json", manifest)
    return PipelineOutcome(
        results=results, errors=errors, output_dir=str(out_dir), exceptions=exceptions
    )


def _require_context(context: dict, key: str, hint: str):
    if key not in context:
        raise EstimationError(f"stage needs {hint} from an earlier stage")
    return context[key]


def _stage_synth(config: RunConfig, context: dict, results: dict, out_dir: Path) -> None:
    spec = dict(config.synth)
    kind = spec.pop("kind", "units")
    rng = np.random.default_rng(config.seed)
    if kind == "panel":
        preset = spec.pop("preset", "default")
        try:
            base = {"default": DEFAULT_PANEL_CONFIG, "banded": BANDED_EFFECT_CONFIG}[preset]
        except KeyError:
            raise InvalidConfig(f"unknown panel preset {preset!r}") from None
        known = {f.name for f in dataclasses.fields(PanelConfig)}
        unknown = set(spec) - known
        if unknown:
            raise InvalidConfig(f"unknown panel DGP keys: {sorted(unknown)}")
        overrides = dict(spec)
        for key in ("opening_years", "modifier_shares", "interaction_effects", "band_multipliers"):
            if key in overrides and overrides[key] is not None:
                overrides[key] = tuple(
                    tuple(item) if isinstance(item, (list, tuple)) else item
                    for item in overrides[key]
                )
        panel_config = dataclasses.replace(base, **overrides) if overrides else base
        panel = generate_synthetic_panel(panel_config, config.seed)
        path = out_dir / "panel.csv"
        dio.write_panel_csv(path, panel)
        results["synth"] = {
            "kind": "panel",
            "path": str(path),
            "n_rows": len(panel),
            "dgp": panel_config.to_metadata(),
        }
        return
    if kind != "units":
        raise InvalidConfig(f"unknown synth kind {kind!r}")
    n = int(spec.get("n", 4000))
    model = DecayModelKind.parse(spec.get("model", "log_linear"))
    q = float(spec.get("q", 12.04))
    rate = float(spec.get("rate", 0.16))
    noise_sd = float(spec.get("noise_sd", 1.0))
    d_min = float(spec.get("d_min_km", 0.5))
    d_max = float(spec.get("d_max_km", 800.0))
    center_lat, center_lon = 39.5, -98.35
    distances = np.exp(rng.uniform(math.log(d_min), math.log(d_max), n))
    bearings = rng.uniform(0.0, 2.0 * math.pi, n)
    lat = center_lat + (distances / 111.195) * np.cos(bearings)
    lon = center_lon + (distances / (111.195 * math.cos(math.radians(center_lat)))) * np.sin(
        bearings
    )
    params = DecayParams(model, q, rate)
    outcomes = predict(params, clamp_distances(distances, model)) + rng.normal(0, noise_sd, n)
    covariates = {
        "median_age": rng.normal(45.0, 9.0, n),
        "pct_bachelors": rng.normal(27.0, 7.0, n),
        "pct_female": rng.normal(51.0, 2.0, n),
        "income": rng.lognormal(10.8, 0.4, n),
    }
    units_path = out_dir / "units.csv"
    import csv as _csv

    with open(units_path, "w", newline="") as handle:
        writer = _csv.writer(handle)
        writer.writerow(
            ["unit_id", "latitude", "longitude", "outcome", "distance_km", *covariates]
        )
        width = len(str(n - 1))
        for i in range(n):
            writer.writerow(
                [
                    f"z{i:0{width}d}",
                    repr(float(lat[i])),
                    repr(float(lon[i])),
                    repr(float(outcomes[i])),
                    repr(float(distances[i])),
                    *[repr(float(covariates[c][i])) for c in covariates],
                ]
            )
    sources_path = out_dir / "sources.csv"
    with open(sources_path, "w", newline="") as handle:
        writer = _csv.writer(handle)
        writer.writerow(["source_id", "latitude", "longitude"])
        writer.writerow(["s0", repr(center_lat), repr(center_lon)])
    results["synth"] = {
        "kind": "units",
        "units_path": str(units_path),
        "sources_path": str(sources_path),
        "n": n,
        "dgp": {
            "model": model.value,
            "q": q,
            "rate": rate,
            "noise_sd": noise_sd,
            "d_range_km": [d_min, d_max],
        },
    }


def _stage_distances(config: RunConfig, context: dict, results: dict, out_dir: Path) -> None:
    if not config.units_csv:
        raise ConfigError("units_csv is required for the distance stage")
    if not config.outcome:
        raise ConfigError("an outcome column name is required")
    sources = dio.read_sources_csv(config.sources_csv) if config.sources_csv else None
    sample, report = dio.ingest_units(config.units_csv, config.outcome, sources)
    context["sample"] = sample
    results["ingestion"] = report.to_dict()
    summary = {
        "n_units": sample.n,
        "distance_km_min": float(sample.distances_km.min()),
        "distance_km_max": float(sample.distances_km.max()),
        "distance_km_mean": float(sample.distances_km.mean()),
    }
    if sources is not None:
        records = build_distance_table(
            [
                (uid, GeoPoint(la, lo))
                for uid, la, lo in zip(sample.unit_ids, sample.latitudes, sample.longitudes)
            ],
            sources,
        )
        dio.write_distance_csv(out_dir / "distances.csv", records)
        summary["n_sources"] = len(sources)
        summary["table_path"] = str(out_dir / "distances.csv")
    results["distances"] = summary


def _stage_fit(config: RunConfig, context: dict, results: dict, out_dir: Path) -> None:
    sample = _require_context(context, "sample", "an ingested sample")
    hac = config.hac()
    fits = {}
    fit_summaries = {}
    fit_errors = {}
    for name in config.models:
        kind = DecayModelKind.parse(name)
        try:
            fits[name] = fit_nls(sample, kind, hac=hac)
            fit_summaries[name] = fits[name].summary_dict()
        except EstimationError as exc:
            fit_errors[name] = f"{type(exc).__name__}: {exc}"
    try:
        log_ols = fit_ols_log(sample, hac=hac)
        results["log_ols"] = log_ols.summary_dict()
    except (EstimationError, DataError) as exc:
        fit_errors["log_ols"] = f"{type(exc).__name__}: {exc}"
    if not fits:
        raise EstimationError(f"every requested fit failed: {fit_errors}")
    context["fits"] = fits
    results["fits"] = fit_summaries
    if fit_errors:
        results["fit_errors"] = fit_errors
    curve = _curve_rows(sample, fits)
    context["curve"] = curve
    dio.write_decay_curve_csv(out_dir / "decay_curve.csv", curve, list(fits))
    if config.figures:
        from . import figures

        figures.save_decay_curve_figure(out_dir / "decay_curve.png", curve, list(fits))


def _stage_compare(config: RunConfig, context: dict, results: dict, out_dir: Path) -> None:
    sample = _require_context(context, "sample", "an ingested sample")
    comparison = compare_models(
        sample, [DecayModelKind.parse(m) for m in config.models], hac=config.hac()
    )
    rows = []
    for name in config.models:
        kind = DecayModelKind.parse(name)
        if kind in comparison.fits:
            fit = comparison.fits[kind]
            rows.append(
                {
                    "model": name,
                    "q": fit.params.q,
                    "rate": fit.params.rate,
                    "rmse": fit.rmse,
                    "r2": fit.r2,
                    "loglik": fit.loglik,
                    "aic": fit.aic,
                    "bic": fit.bic,
                    "delta_aic": comparison.delta_aic[kind],
                    "best": int(kind is comparison.best),
                }
            )
    dio.write_comparison_csv(out_dir / "comparison.csv", rows)
    results["comparison"] = {
        "best": comparison.best.value,
        "delta_aic": {k.value: v for k, v in comparison.delta_aic.items()},
        "ties": [k.value for k in comparison.ties],
        "failed": {k.value: v for k, v in comparison.failed.items()},
        "table_path": str(out_dir / "comparison.csv"),
    }
    context["comparison"] = comparison
    if config.figures:
        from . import figures

        figures.save_comparison_figure(out_dir / "comparison.png", rows)


def _exponential_fit(context: dict):
    fits = _require_context(context, "fits", "fitted models")
    name = DecayModelKind.EXPONENTIAL.value
    if name not in fits:
        raise EstimationError("this stage needs the exponential family among the fitted models")
    return fits[name]


def _stage_boundary(config: RunConfig, context: dict, results: dict, out_dir: Path) -> None:
    fit = _exponential_fit(context)
    boundary = spatial_boundary(fit, config.epsilon)
    results["boundary"] = {
        "d_star_km": boundary.d_star_km,
        "epsilon": boundary.epsilon,
        "se_km": boundary.se_km,
        "ci95_km": list(boundary.ci95_km),
    }
    context["boundary"] = boundary


def _stage_functionals(config: RunConfig, context: dict, results: dict, out_dir: Path) -> None:
    fit = _exponential_fit(context)
    if "boundary" not in context:
        context["boundary"] = spatial_boundary(fit, config.epsilon)
        results.setdefault(
            "boundary",
            {
                "d_star_km": context["boundary"].d_star_km,
                "epsilon": context["boundary"].epsilon,
                "se_km": context["boundary"].se_km,
                "ci95_km": list(context["boundary"].ci95_km),
            },
        )
    boundary = context["boundary"]
    diffusion = implied_diffusion(fit, config.epsilon)
    horizon = ExposureSpec(config.exposure_horizon_years)
    times = [1.0, 4.0, 9.0]
    eval_d = sorted({10.0, round(boundary.d_star_km, 6)})
    payload = {
        "kappa": fit.params.rate,
        "q": fit.params.q,
        "boundary": results.get("boundary")
        or {
            "d_star_km": boundary.d_star_km,
            "epsilon": boundary.epsilon,
            "se_km": boundary.se_km,
            "ci95_km": list(boundary.ci95_km),
        },
        "diffusion": {
            "nu": diffusion.nu,
            "xi_star": diffusion.xi_star,
            "sensitivity_d_nu": diffusion.sensitivity_d_nu,
            "elasticity": diffusion.elasticity,
        },
        "evolution_km": {str(t): boundary_evolution(diffusion, t) for t in times},
        "velocity_km_per_yr": {str(t): boundary_velocity(diffusion, t) for t in times},
        "gradient_at": {
            str(d): fit.params.rate * fit.params.q * math.exp(-fit.params.rate * d)
            for d in eval_d
        },
        "exposure": {
            "horizon_years": horizon.horizon_years,
            "at": {str(d): cumulative_exposure(fit, horizon, d) for d in eval_d},
        },
    }
    results["functionals"] = payload
    if config.figures:
        from . import figures

        figures.save_functionals_figure(out_dir / "functionals.png", payload)


def _stage_diagnose(config: RunConfig, context: dict, results: dict, out_dir: Path) -> None:
    fit = _exponential_fit(context)
    verdict = sign_reversal_test(fit, domain_span_km=config.domain_span_km)
    results["diagnostic"] = {
        "verdict": verdict.verdict.value,
        "kappa": verdict.kappa,
        "se": verdict.se,
        "z": verdict.z,
        "r2": verdict.r2,
        "d_star_km": verdict.d_star_km,
        "domain_span_km": verdict.domain_span_km,
    }


def _stage_heterogeneity(config: RunConfig, context: dict, results: dict, out_dir: Path) -> None:
    sample = _require_context(context, "sample", "an ingested sample")
    if not config.heterogeneity_splits:
        raise ConfigError("no heterogeneity splits requested")
    out: dict = {}
    failures: dict = {}
    for name in config.heterogeneity_splits:
        rule = BUILTIN_SPLITS[name]
        try:
            strat = stratified_fit(sample, rule, hac=config.hac())
        except (EstimationError, DataError) as exc:
            failures[name] = f"{type(exc).__name__}: {exc}"
            continue
        out[name] = {
            "covariate": rule.covariate,
            "high_threshold": rule.high_threshold,
            "low_threshold": rule.low_threshold,
            "n_high": strat.n_high,
            "n_low": strat.n_low,
            "n_excluded": strat.n_excluded,
            "ratio_high_low": strat.ratio,
            "fits": {label: f.summary_dict() for label, f in strat.fits.items()},
        }
    results["heterogeneity"] = {"splits": out, "failed": failures}
    if not out and failures:
        raise EstimationError(f"every requested split failed: {failures}")


def _stage_pde(config: RunConfig, context: dict, results: dict, out_dir: Path) -> None:
    spec = dict(config.pde)
    if not spec:
        raise ConfigError("pde stage requested without a pde scenario")
    dim = int(spec.get("dim", 1))
    diffusion = float(spec.get("diffusion_d", 100.0))
    kappa = float(spec.get("decay_kappa", 1.0))
    spacing = float(spec.get("spacing_km", 1.0))
    cells = spec.get("cells", 501)
    grid = FieldGrid.zeros(dim, cells, spacing)
    if spec.get("source_position") is not None:
        pos = spec["source_position"]
        position = tuple(float(p) for p in (pos if isinstance(pos, (list, tuple)) else [pos]))
    else:
        position = tuple(
            float(grid.axis_centers(ax)[grid.values.shape[ax] // 2]) for ax in range(dim)
        )
    strength = float(spec.get("source_strength", 1.0))
    params = PdeParams(
        diffusion_d=diffusion,
        decay_kappa=kappa,
        sources=(PointSource(position=position, strength=strength),),
    )
    bound = max_stable_dt(grid, params)
    dt = float(spec.get("dt_years", 0.9 * bound))
    sim_config = SimulationConfig(
        dt_years=dt,
        t_end_years=float(spec.get("t_end_years", 10.0)),
        boundary=BoundaryCondition(spec.get("boundary", "zero_flux")),
    )
    sim = solve_transient(grid, params, sim_config)
    dio.write_field_csv(out_dir / "pde_field.csv", sim.final)
    meta: dict = {
        "dim": dim,
        "diffusion_d": diffusion,
        "decay_kappa": kappa,
        "spacing_km": spacing,
        "cells": list(sim.final.values.shape),
        "dt_years": dt,
        "max_stable_dt_years": bound,
        "t_end_years": sim_config.t_end_years,
        "boundary": sim_config.boundary.value,
        "source_position": list(position),
        "source_strength": strength,
        "final_time_years": sim.final.time_years,
        "total_mass": sim.final.total_mass(),
        "kappa_eff_theory": params.kappa_eff if kappa > 0 else None,
        "field_path": str(out_dir / "pde_field.csv"),
    }
    radii = sim.final.radii_from(position).ravel()
    window = None
    try:
        recovered = recover_kappa_eff(sim.final, position)
        edge = min(
            min(position[ax] - grid.axis_centers(ax)[0], grid.axis_centers(ax)[-1] - position[ax])
            for ax in range(dim)
        )
        window = (3.0 * spacing, 0.5 * edge)
        meta["kappa_eff_recovered"] = recovered
        meta["fit_window_km"] = list(window)
    except DecayLabError as exc:
        meta["kappa_eff_recovered"] = None
        meta["kappa_eff_error"] = f"{type(exc).__name__}: {exc}"
    if kappa > 0:
        try:
            mask = radii > 0
            analytic = steady_state_green(params, radii[mask], dim)
            meta["max_abs_field_gap_vs_green"] = float(
                np.max(np.abs(sim.final.values.ravel()[mask] - analytic))
            )
        except DecayLabError:
            pass
    results["pde"] = meta
    if config.figures:
        from . import figures

        figures.save_field_profile_figure(
            out_dir / "pde_profile.png",
            radii,
            sim.final.values.ravel(),
            meta.get("kappa_eff_recovered"),
            window,
        )


def _stage_did(config: RunConfig, context: dict, results: dict, out_dir: Path) -> None:
    if not config.panel_csv:
        raise ConfigError("panel_csv is required for the did stage")
    panel = dio.read_panel_csv(config.panel_csv)
    spec = dict(config.did)
    out: dict = {"n_rows": len(panel)}
    twfe = fit_twfe(panel)
    out["twfe"] = {
        "beta": twfe.beta,
        "se": twfe.se,
        "n_obs": twfe.n_obs,
        "n_units": twfe.n_units,
        "n_treated_units": twfe.n_treated_units,
        "r2_within": twfe.r2_within,
    }
    window = tuple(spec.get("event_window", (-3, 6)))
    study = event_study(panel, window)  # type: ignore[arg-type]
    out["event_study"] = {
        "window": list(window),
        "reference": study.reference,
        "coefficients": {str(k): list(v) for k, v in study.coefficients.items()},
        "dropped_bins": list(study.dropped_bins),
    }
    if spec.get("bands"):
        bands = [(float(lo), float(hi)) for lo, hi in spec["bands"]]
        band_results = distance_band_effects(panel, bands)
        out["distance_bands"] = [
            {
                "lo_km": b.lo_km,
                "hi_km": b.hi_km,
                "n_treated_units": b.n_treated_units,
                "beta": b.result.beta if b.result else None,
                "se": b.result.se if b.result else None,
                "error": b.error,
            }
            for b in band_results
        ]
    if spec.get("modifier"):
        inter = interaction_did(panel, str(spec["modifier"]))
        out["interaction"] = {
            "modifier": spec["modifier"],
            "beta_post": inter.beta_post,
            "beta_interaction": inter.beta_interaction,
            "se_post": inter.se_post,
            "se_interaction": inter.se_interaction,
        }
    results["did"] = out
    if config.figures:
        from . import figures

        figures.save_event_study_figure(
            out_dir / "event_study.png",
            {int(k): tuple(v) for k, v in out["event_study"]["coefficients"].items()},
        )


_STAGE_RUNNERS = {
    "synth": _stage_synth,
    "distances": _stage_distances,
    "fit": _stage_fit,
    "compare": _stage_compare,
    "boundary": _stage_boundary,
    "functionals": _stage_functionals,
    "diagnose": _stage_diagnose,
    "heterogeneity": _stage_heterogeneity,
    "pde": _stage_pde,
    "did": _stage_did,
}
