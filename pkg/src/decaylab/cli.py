"""Command-line interface.

Ten subcommands map onto the pipeline stages:

``distances``
    Ingest a units CSV (plus optional sources CSV) and write the
    nearest-source distance table.
``fit`` / ``compare``
    Fit the requested decay families; ``compare`` adds the AIC/BIC
    comparison table.
``boundary`` / ``functionals`` / ``diagnose``
    Threshold boundary, implied-diffusion panel, and the sign/strength
    verdict, all from the exponential fit.
``heterogeneity``
    Stratified fits over built-in covariate splits.
``simulate-pde``
    Explicit diffusion-decay simulation with field export and rate
    recovery.
``did``
    Two-way fixed-effects, event-study, distance-band, and interaction
    estimates from a panel CSV.
``synth``
    Deterministic synthetic cross-section or panel generation.

Settings resolve as defaults < ``--config`` JSON file < explicit flags.
Exit codes: 0 success, 2 configuration error, 3 data error,
4 estimation/numerical error. Set ``DECAYLAB_VERBOSE=1`` for more
chatter on stderr; verbosity never changes results.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .errors import ConfigError, DataError, DecayLabError, EstimationError
from .pipeline import RunConfig, run_pipeline
from . import io as dio

__all__ = ["main", "build_parser"]


def _verbose() -> bool:
    return bool(os.environ.get("DECAYLAB_VERBOSE"))


def _comma_list(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def _comma_floats(text: str) -> list[float]:
    return [float(part) for part in _comma_list(text)]


def _parse_bands(text: str) -> list[list[float]]:
    bands = []
    for chunk in _comma_list(text):
        lo, _, hi = chunk.partition("-")
        if not _ or not lo or not hi:
            raise argparse.ArgumentTypeError(
                f"band {chunk!r} is not of the form LO-HI (e.g. 0-25)"
            )
        bands.append([float(lo), float(hi)])
    return bands


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file; flags override its values")
    parser.add_argument("--out", dest="output_dir", help="output directory")
    parser.add_argument("--seed", type=int, help="64-bit run seed")
    parser.add_argument(
        "--figures",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="render PNG figures next to the CSV/JSON outputs",
    )


def _add_data(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--units", dest="units_csv", help="units CSV path")
    parser.add_argument("--sources", dest="sources_csv", help="sources CSV path")
    parser.add_argument("--outcome", help="outcome column name in the units CSV")


def _add_fit(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--models",
        type=_comma_list,
        help="comma-separated decay families (exponential,power_law,log_linear)",
    )
    parser.add_argument("--hac-cutoff-km", type=float, help="spatial HAC cutoff (km)")
    parser.add_argument("--hac-kernel", choices=("bartlett", "uniform"), help="HAC kernel")


def _add_functional(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--epsilon", type=float, help="retained-fraction threshold in (0,1)")
    parser.add_argument(
        "--horizon-years", dest="exposure_horizon_years", type=float, help="exposure horizon"
    )
    parser.add_argument(
        "--domain-span-km", type=float, help="study-domain span used by the verdict rule"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="decaylab",
        description="Distance-decay estimation, boundary functionals, diffusion "
        "simulation, and panel benchmarks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("distances", help="ingest units and build the nearest-source table")
    _add_common(p)
    _add_data(p)

    for name, extra_help in (
        ("fit", "fit decay families to the ingested sample"),
        ("compare", "fit and rank families by AIC"),
        ("boundary", "threshold distance with delta-method CI"),
        ("functionals", "boundary, implied diffusion, velocities, exposure"),
        ("diagnose", "decay verdict (sign, strength, in-domain boundary)"),
    ):
        p = sub.add_parser(name, help=extra_help)
        _add_common(p)
        _add_data(p)
        _add_fit(p)
        _add_functional(p)

    p = sub.add_parser("heterogeneity", help="stratified fits over covariate splits")
    _add_common(p)
    _add_data(p)
    _add_fit(p)
    p.add_argument(
        "--splits",
        type=_comma_list,
        help="comma-separated split names (elderly,education,female)",
    )

    p = sub.add_parser("simulate-pde", help="diffusion-decay field simulation")
    _add_common(p)
    p.add_argument("--dim", type=int, choices=(1, 2), help="spatial dimension")
    p.add_argument("--diffusion", type=float, help="diffusivity D (km^2/yr)")
    p.add_argument("--kappa", type=float, help="first-order decay rate (1/yr)")
    p.add_argument("--cells", type=_comma_list, help="cells per axis, e.g. 501 or 201,201")
    p.add_argument("--spacing", type=float, help="cell spacing h (km)")
    p.add_argument("--dt", type=float, help="time step (yr); default 0.9x the stable bound")
    p.add_argument("--t-end", type=float, help="simulated horizon (yr)")
    p.add_argument("--boundary", choices=("zero_flux", "absorbing"), help="edge condition")
    p.add_argument("--source-pos", type=_comma_floats, help="source position (km), per axis")
    p.add_argument("--source-strength", type=float, help="deposit rate (mass/yr)")

    p = sub.add_parser("did", help="panel difference-in-differences estimates")
    _add_common(p)
    p.add_argument("--panel", dest="panel_csv", help="panel CSV path")
    p.add_argument(
        "--window",
        nargs=2,
        type=int,
        metavar=("PRE", "POST"),
        help="event-study window, e.g. --window -3 6",
    )
    p.add_argument("--bands", type=_parse_bands, help="distance bands, e.g. 0-25,25-50")
    p.add_argument("--modifier", help="binary modifier column for the interaction model")

    p = sub.add_parser("synth", help="generate a synthetic units or panel CSV")
    _add_common(p)
    p.add_argument("--kind", choices=("units", "panel"), help="dataset type")
    p.add_argument("--n", type=int, help="units-CSV rows")
    p.add_argument("--model", help="units DGP decay family")
    p.add_argument("--q", type=float, help="units DGP level parameter")
    p.add_argument("--rate", type=float, help="units DGP decay rate")
    p.add_argument("--noise-sd", type=float, help="additive noise scale")
    p.add_argument("--d-min", type=float, help="minimum sampled distance (km)")
    p.add_argument("--d-max", type=float, help="maximum sampled distance (km)")
    p.add_argument("--preset", choices=("default", "banded"), help="panel DGP preset")
    p.add_argument("--n-units", type=int, help="panel DGP unit count")
    p.add_argument(
        "--homogeneous-effect",
        type=float,
        help="flat post-treatment effect (placebo at 0.0); disables dynamics",
    )

    return parser


_STAGES_BY_COMMAND = {
    "distances": ("distances",),
    "fit": ("distances", "fit"),
    "compare": ("distances", "fit", "compare"),
    "boundary": ("distances", "fit", "boundary"),
    "functionals": ("distances", "fit", "boundary", "functionals"),
    "diagnose": ("distances", "fit", "diagnose"),
    "heterogeneity": ("distances", "heterogeneity"),
    "simulate-pde": ("pde",),
    "did": ("did",),
    "synth": ("synth",),
}

_TOP_LEVEL_KEYS = (
    "units_csv",
    "sources_csv",
    "panel_csv",
    "outcome",
    "models",
    "epsilon",
    "hac_cutoff_km",
    "hac_kernel",
    "exposure_horizon_years",
    "domain_span_km",
    "output_dir",
    "seed",
    "figures",
)

_PDE_FLAGS = {
    "dim": "dim",
    "diffusion": "diffusion_d",
    "kappa": "decay_kappa",
    "spacing": "spacing_km",
    "dt": "dt_years",
    "t_end": "t_end_years",
    "boundary": "boundary",
    "source_pos": "source_position",
    "source_strength": "source_strength",
}

_SYNTH_FLAGS = {
    "kind": "kind",
    "n": "n",
    "model": "model",
    "q": "q",
    "rate": "rate",
    "noise_sd": "noise_sd",
    "d_min": "d_min_km",
    "d_max": "d_max_km",
    "preset": "preset",
    "n_units": "n_units",
    "homogeneous_effect": "homogeneous_effect",
}


def _nested_from_file(config_file: str | None, key: str) -> dict:
    if not config_file:
        return {}
    try:
        raw = dio.read_json(config_file)
    except (OSError, json.JSONDecodeError):
        return {}  # resolve() reports the real error with context
    if isinstance(raw, dict) and isinstance(raw.get(key), dict):
        return dict(raw[key])
    return {}


def _build_overrides(args: argparse.Namespace) -> dict:
    values = vars(args)
    overrides: dict = {
        key: values[key] for key in _TOP_LEVEL_KEYS if values.get(key) is not None
    }
    command = args.command
    overrides["stages"] = _STAGES_BY_COMMAND[command]

    if command == "heterogeneity" and values.get("splits") is not None:
        overrides["heterogeneity_splits"] = tuple(values["splits"])

    if command == "simulate-pde":
        pde = _nested_from_file(values.get("config"), "pde")
        for flag, key in _PDE_FLAGS.items():
            if values.get(flag) is not None:
                pde[key] = values[flag]
        if values.get("cells") is not None:
            cells = [int(c) for c in values["cells"]]
            pde["cells"] = cells[0] if len(cells) == 1 else cells
        overrides["pde"] = pde

    if command == "did":
        did = _nested_from_file(values.get("config"), "did")
        if values.get("window") is not None:
            did["event_window"] = list(values["window"])
        if values.get("bands") is not None:
            did["bands"] = values["bands"]
        if values.get("modifier") is not None:
            did["modifier"] = values["modifier"]
        overrides["did"] = did

    if command == "synth":
        synth = _nested_from_file(values.get("config"), "synth")
        for flag, key in _SYNTH_FLAGS.items():
            if values.get(flag) is not None:
                synth[key] = values[flag]
        overrides["synth"] = synth

    return overrides


def _exit_code(exc: DecayLabError) -> int:
    if isinstance(exc, ConfigError):
        return 2
    if isinstance(exc, DataError):
        return 3
    if isinstance(exc, EstimationError):
        return 4
    return 1


def _summarize(results: dict, stream) -> None:
    if "comparison" in results:
        comp = results["comparison"]
        print(f"best model: {comp['best']}", file=stream)
    if "fits" in results:
        for name, fit in results["fits"].items():
            print(
                f"{name}: q={fit['q']:.6g} rate={fit['rate']:.6g} r2={fit['r2']:.4f}",
                file=stream,
            )
    if "boundary" in results:
        b = results["boundary"]
        lo, hi = b["ci95_km"]
        print(
            f"d* = {b['d_star_km']:.3f} km (95% CI {lo:.3f}-{hi:.3f}) at epsilon={b['epsilon']}",
            file=stream,
        )
    if "diagnostic" in results:
        print(f"verdict: {results['diagnostic']['verdict']}", file=stream)
    if "pde" in results:
        pde = results["pde"]
        rec = pde.get("kappa_eff_recovered")
        if rec is not None:
            print(f"recovered kappa_eff = {rec:.6g} /km", file=stream)
    if "did" in results and "twfe" in results["did"]:
        twfe = results["did"]["twfe"]
        print(f"twfe beta = {twfe['beta']:.4f} (se {twfe['se']:.4f})", file=stream)
    if "synth" in results:
        print(f"synth: wrote {results['synth'].get('path') or results['synth'].get('units_path')}",
              file=stream)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = RunConfig.resolve(args.config, _build_overrides(args))
        outcome = run_pipeline(config)
    except DecayLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if _verbose():
            import traceback

            traceback.print_exc()
        return _exit_code(exc)
    for err in outcome.errors:
        print(f"error in stage {err['stage']}: {err['message']}", file=sys.stderr)
    if _verbose():
        _summarize(outcome.results, sys.stderr)
    print(f"wrote {outcome.output_dir}/results.json")
    if outcome.exceptions:
        return _exit_code(outcome.exceptions[0])
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
