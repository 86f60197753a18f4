"""Command-line harness.

Every subcommand resolves its configuration from built-in defaults, an
optional TOML file (``--config``) and explicit flags, in that order of
precedence, validates it completely, and only then computes. Outputs go
to ``--out`` together with a ``manifest.json`` recording the resolved
configuration, seeds, package version, input digests and written files.
Re-running with ``--config`` pointing at that manifest reproduces the
CSV outputs.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 I/O or input-format error. ``DELAYLIK_THREADS`` sets the number of
worker processes for multi-run commands.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
from scipy import linalg

from . import __version__, experiments
from .diagnostics import THREADS_ENV, LaplaceError, StudyConfig, worker_count
from .gp import (HyperParams, LightCurveFormatError, LightCurvePair, ObservationGrid,
                 read_light_curve, write_light_curve)
from .io import CSVFormatError, RunManifest, write_csv
from .samplers import (NSConfig, PriorBox, SamplerConfigError, SMCConfig, merge_equal_weight,
                       nested_sampling, smc)
from .samplers.quadrature import QuadratureError
from .statespace import DelayLikelihood, JointLikelihood
from .svg import emit_svg, svg_from_csv
from .synth import make_rng, sample_pair, stream

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


_THETA = {"amplitude": 1.0, "length_scale": 10.0, "noise": 0.01, "true_delay": 10.0}

DEFAULTS = {
    "simulate": {**_THETA, "t_min": 0.0, "t_max": 1000.0, "n_data": 100, "n_datasets": 25,
                 "seed": experiments.DATA_SEED},
    "scan": {**_THETA, "mode": "analytic", "t_range": 1000.0, "n_data": 100, "n_delays": 2001,
             "y1": "", "y2": "", "length_scales": [1.0, 10.0, 100.0], "whiten": True,
             "decorrelation": "t_range", "svg": True},
    "sample": {**_THETA, "sampler": "ns", "params": "delay", "t_range": 1000.0, "n_data": 100,
               "n_datasets": 25, "nlive": 75, "num_repeats": 0, "n_particles": 1000,
               "mcmc_steps": 5, "data_seed": experiments.DATA_SEED,
               "seed": experiments.RUN_SEED, "merge_seed": experiments.MERGE_SEED,
               "merge": True, "y1": "", "y2": "", "flat": False},
    "convergence": {**_THETA, "samplers": ["ns", "smc"], "budgets": [10, 25, 100, 250],
                    "t_ranges": [1000.0, 10000.0], "n_runs": 50, "n_data": 100,
                    "seed": experiments.STUDY_SEED, "f": 5.0, "calibrate": True,
                    "n_reference": 10, "reference_nlive": 500, "mcmc_steps": 5,
                    "shared_datasets": False},
    "appendix": {"which": "", "amplitude": 1.0, "length_scale": 10.0, "noise": 0.01,
                 "spacing": 10.0, "n_data": 100, "n_points": 1000, "n_delays": 60000,
                 "t_range": 1000.0},
    "plot": {"csv": "", "x": "", "y": [], "title": "", "log_y": False, "output": ""},
}

APPENDIX_CHECKS = ("lengthscale", "moments", "bayes-spectrum", "condition")


# ----------------------------------------------------------------- config

def _coerce(key, value, default):
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("1", "true", "yes", "on", "0", "false",
                                                         "no", "off"):
            return value.lower() in ("1", "true", "yes", "on")
        raise ConfigError(f"{key}: expected a boolean, got {value!r}")
    if isinstance(default, int):
        try:
            f = float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: expected an integer, got {value!r}") from None
        if f != int(f):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return int(f)
    if isinstance(default, float):
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: expected a number, got {value!r}") from None
    if isinstance(default, list):
        items = value.split(",") if isinstance(value, str) else list(value)
        items = [i for i in items if not (isinstance(i, str) and not i.strip())]
        if default and not isinstance(default[0], str):
            return [_coerce(key, i, default[0]) for i in items]
        return [str(i).strip() for i in items]
    return str(value)


def resolve_config(command: str, file_cfg: dict, overrides: dict) -> dict:
    defaults = DEFAULTS[command]
    cfg = dict(defaults)
    for source in (file_cfg, overrides):
        for key, value in source.items():
            if value is None:
                continue
            if key not in defaults:
                raise ConfigError(f"unknown setting {key!r} for {command}")
            cfg[key] = _coerce(key, value, defaults[key])
    _validate(command, cfg)
    return cfg


def _require(cond, msg):
    if not cond:
        raise ConfigError(msg)


def _validate_theta(cfg):
    _require(cfg["amplitude"] > 0, "amplitude must be positive")
    _require(cfg["length_scale"] > 0, "length_scale must be positive")
    _require(cfg["noise"] >= 0, "noise must be non-negative")


def _validate(command, cfg):
    if "amplitude" in cfg and command != "appendix":
        _validate_theta(cfg)
    if command == "simulate":
        _require(cfg["n_data"] >= 1, "n_data must be at least 1")
        _require(cfg["n_datasets"] >= 1, "n_datasets must be at least 1")
        _require(cfg["n_data"] == 1 or cfg["t_max"] > cfg["t_min"], "t_max must exceed t_min")
        _require(cfg["noise"] > 0, "simulation needs noise > 0")
    elif command == "scan":
        _require(cfg["mode"] in ("analytic", "data"), "mode must be 'analytic' or 'data'")
        _require(cfg["n_delays"] >= 1, "the delay grid must have at least one point")
        if cfg["mode"] == "analytic":
            _require(cfg["n_data"] >= 2, "n_data must be at least 2")
            _require(cfg["t_range"] > 0, "t_range must be positive")
            _require(cfg["decorrelation"] in ("t_range", "block"),
                     "decorrelation must be 't_range' or 'block'")
        else:
            _require(cfg["y1"] and cfg["y2"], "data mode needs y1 and y2 files")
            _require(cfg["length_scales"], "length_scales must not be empty")
            _require(all(v > 0 for v in cfg["length_scales"]), "length scales must be positive")
    elif command == "sample":
        _require(cfg["sampler"] in ("ns", "smc"), "sampler must be 'ns' or 'smc'")
        _require(cfg["params"] in ("delay", "joint"), "params must be 'delay' or 'joint'")
        _require(cfg["nlive"] >= 2, "nlive must be at least 2")
        _require(cfg["num_repeats"] >= 0, "num_repeats must be non-negative (0 = default)")
        _require(cfg["n_particles"] >= 2, "n_particles must be at least 2")
        _require(cfg["mcmc_steps"] >= 0, "mcmc_steps must be non-negative")
        _require(bool(cfg["y1"]) == bool(cfg["y2"]), "give both y1 and y2 or neither")
        if not cfg["y1"]:
            _require(cfg["n_datasets"] >= 1, "n_datasets must be at least 1")
            _require(cfg["n_data"] >= 2, "n_data must be at least 2")
            _require(cfg["t_range"] > 0, "t_range must be positive")
            _require(cfg["noise"] > 0, "simulation needs noise > 0")
    elif command == "convergence":
        _require(cfg["budgets"], "budgets must not be empty")
        _require(all(b >= 2 for b in cfg["budgets"]), "budgets must be at least 2")
        _require(cfg["t_ranges"], "t_ranges must not be empty")
        _require(all(t > 0 for t in cfg["t_ranges"]), "t_ranges must be positive")
        _require(cfg["samplers"] and set(cfg["samplers"]) <= {"ns", "smc"},
                 "samplers must be drawn from 'ns', 'smc'")
        _require(cfg["n_runs"] >= 1, "n_runs must be at least 1")
        _require(cfg["f"] > 0, "f must be positive")
        _require(cfg["n_reference"] >= 1, "n_reference must be at least 1")
        _require(cfg["reference_nlive"] >= 2, "reference_nlive must be at least 2")
    elif command == "appendix":
        _require(cfg["which"] in APPENDIX_CHECKS,
                 f"which must be one of {', '.join(APPENDIX_CHECKS)}")
        _validate_theta(cfg)
        _require(cfg["spacing"] > 0, "spacing must be positive")
        _require(cfg["n_data"] >= 1, "n_data must be at least 1")
        _require(cfg["n_points"] >= 2 and cfg["n_delays"] >= 1, "grid sizes must be positive")
    elif command == "plot":
        _require(cfg["csv"], "plot needs a csv file")


def _load_config_file(path) -> dict:
    if not path:
        return {}
    path = Path(path)
    try:
        text = path.read_bytes()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc}") from exc
    if path.suffix == ".json":
        data = json.loads(text)
        return data.get("config", data)
    try:
        return tomllib.loads(text.decode("utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


# ----------------------------------------------------------------- helpers

def _theta(cfg, delay=None):
    return HyperParams(cfg["amplitude"], cfg["length_scale"], cfg["noise"],
                       cfg["true_delay"] if delay is None else delay)


def _outdir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _finish(manifest: RunManifest, out: Path) -> None:
    # outputs are listed relative to the output directory so replays compare equal
    manifest.outputs = [str(Path(p).relative_to(out)) for p in manifest.outputs]
    manifest.write(out / "manifest.json")


def _load_pair(cfg, manifest) -> LightCurvePair:
    t1, m1 = read_light_curve(cfg["y1"])
    t2, m2 = read_light_curve(cfg["y2"])
    if t1.shape != t2.shape or not np.array_equal(t1, t2):
        raise LightCurveFormatError("the two light curves must share observation times")
    manifest.add_input(cfg["y1"])
    manifest.add_input(cfg["y2"])
    return LightCurvePair(m1, m2, ObservationGrid(t1))


# ----------------------------------------------------------------- commands

def cmd_simulate(cfg, out, manifest):
    if cfg["n_data"] == 1:
        grid = ObservationGrid(np.array([cfg["t_min"]]))
    else:
        grid = ObservationGrid.uniform(cfg["t_min"], cfg["t_max"], cfg["n_data"])
    theta = _theta(cfg)
    seeds = {}
    for k in range(cfg["n_datasets"]):
        seed = stream(cfg["seed"], k)
        seeds[f"pair_{k:03d}"] = seed
        pair = sample_pair(grid, theta, seed)
        for name, y in (("y1", pair.y1), ("y2", pair.y2)):
            path = out / f"pair_{k:03d}_{name}.csv"
            write_light_curve(path, grid.times, y)
            manifest.add_output(path)
        meta = out / f"pair_{k:03d}.json"
        meta.write_text(json.dumps({"theta_true": theta.as_dict(), "grid": grid.as_dict(),
                                    "seed": seed, "base_seed": cfg["seed"], "index": k},
                                   indent=2, sort_keys=True) + "\n", encoding="utf-8")
        manifest.add_output(meta)
    manifest.seeds = {"base_seed": cfg["seed"], "derived": seeds}


def cmd_scan(cfg, out, manifest):
    if cfg["mode"] == "analytic":
        decor = "t_range" if cfg["decorrelation"] == "t_range" else None
        scan = experiments.averaged_scan(cfg["n_data"], cfg["t_range"], cfg["length_scale"],
                                         cfg["noise"], cfg["true_delay"], cfg["amplitude"],
                                         cfg["n_delays"], decor)
        cols = ["delta_t", "e_loglik", "sd_exact", "sd_elementwise", "e_loglik_reg"]
        title = "data-averaged log-likelihood"
    else:
        pair = _load_pair(cfg, manifest)
        t_range = pair.grid.t_range
        delays = np.linspace(-t_range, t_range, cfg["n_delays"])
        scan = experiments.data_scan(pair, cfg["length_scales"], delays, cfg["amplitude"],
                                     cfg["noise"], cfg["whiten"])
        cols = list(scan)
        title = "log-likelihood cuts"
    path = write_csv(out / "scan.csv", cols, zip(*(scan[c] for c in cols)))
    manifest.add_output(path)
    if cfg["svg"]:
        ys = ["e_loglik"] if cfg["mode"] == "analytic" else cols[1:]
        svg = out / "scan.svg"
        svg_from_csv(path, svg, "delta_t", ys, title=title, ylabel="log-likelihood")
        manifest.add_output(svg)
        if cfg["mode"] == "analytic":
            svg = out / "scan_regularised.svg"
            svg_from_csv(path, svg, "delta_t", ["e_loglik_reg"], title="regularised",
                         ylabel="log-likelihood")
            manifest.add_output(svg)


def _flat_loglik(x):
    return 0.0


def cmd_sample(cfg, out, manifest):
    if cfg["y1"]:
        pairs = [_load_pair(cfg, manifest)]
        data_seeds = {}
    else:
        grid = ObservationGrid.uniform(0.0, cfg["t_range"], cfg["n_data"])
        theta = _theta(cfg)
        data_seeds = {k: stream(cfg["data_seed"], k) for k in range(cfg["n_datasets"])}
        pairs = [sample_pair(grid, theta, s) for s in data_seeds.values()]
    run_seeds = {k: stream(cfg["seed"], k) for k in range(len(pairs))}
    runs = []
    for k, pair in enumerate(pairs):
        t_range = pair.grid.t_range
        if cfg["params"] == "delay":
            prior = PriorBox.delay_only(t_range)
            like = DelayLikelihood(pair, _theta(cfg, 0.0))
        else:
            prior = PriorBox.delay_length_noise(t_range)
            like = JointLikelihood(pair, cfg["amplitude"])
        if cfg["flat"]:
            like = _flat_loglik
        if cfg["sampler"] == "ns":
            sampler_cfg = NSConfig(nlive=cfg["nlive"], num_repeats=cfg["num_repeats"] or None,
                                   seed=run_seeds[k])
            res = nested_sampling(like, prior, sampler_cfg)
        else:
            sampler_cfg = SMCConfig(n_particles=cfg["n_particles"], mcmc_steps=cfg["mcmc_steps"],
                                    seed=run_seeds[k])
            res = smc(like, prior, sampler_cfg)
        res.names = prior.names
        path = out / f"samples_{k:03d}.csv"
        res.to_csv(path, {"seed": run_seeds[k], "data_seed": data_seeds.get(k)})
        manifest.add_output(path)
        manifest.add_output(path.with_suffix(".json"))
        runs.append(res)
    if cfg["merge"]:
        pool = merge_equal_weight(runs, make_rng(cfg["merge_seed"]))
        path = write_csv(out / "merged.csv", list(runs[0].names), pool)
        manifest.add_output(path)
        hist, edges = np.histogram(pool[:, 0], bins=100,
                                   range=(-pairs[0].grid.t_range, pairs[0].grid.t_range),
                                   density=True)
        svg = out / "merged_delay.svg"
        svg.write_text(emit_svg(0.5 * (edges[1:] + edges[:-1]), {"density": hist},
                                title="merged delay posterior", xlabel="delta_t",
                                ylabel="density"), encoding="utf-8")
        manifest.add_output(svg)
    manifest.seeds = {"data_seed": cfg["data_seed"], "seed": cfg["seed"],
                      "merge_seed": cfg["merge_seed"], "data": data_seeds, "runs": run_seeds}


def cmd_convergence(cfg, out, manifest):
    study = StudyConfig(samplers=tuple(cfg["samplers"]), budgets=tuple(cfg["budgets"]),
                        t_ranges=tuple(cfg["t_ranges"]), n_runs=cfg["n_runs"],
                        n_data=cfg["n_data"], amplitude=cfg["amplitude"],
                        length_scale=cfg["length_scale"], noise=cfg["noise"],
                        true_delay=cfg["true_delay"], base_seed=cfg["seed"], f=cfg["f"],
                        smc_mcmc_steps=cfg["mcmc_steps"],
                        shared_datasets=cfg["shared_datasets"], workers=worker_count())
    used, calib, rows = experiments.convergence_experiment(
        study, cfg["calibrate"], cfg["n_reference"], cfg["reference_nlive"])
    head = ["sampler", "budget", "t_range", "n_runs", "n_unconverged", "n_excluded", "fraction"]
    path = write_csv(out / "fractions.csv", head,
                     ([r.as_row()[h] for h in head] for r in rows))
    manifest.add_output(path)
    detail_head = ["sampler", "t_range", "run_id", "budget", "posterior_mean", "laplace_mode",
                   "laplace_sd", "curvature", "deviation", "f_threshold", "converged"]
    detail = []
    for r in rows:
        for rec in r.records:
            d = rec.as_row()
            detail.append([r.sampler, r.t_range] + [d[h] for h in detail_head[2:]])
    manifest.add_output(write_csv(out / "runs.csv", detail_head, detail))
    if calib:
        manifest.add_output(write_csv(out / "calibration.csv", detail_head[2:],
                                      ([rec.as_row()[h] for h in detail_head[2:]]
                                       for rec in calib)))
    series = {}
    for r in rows:
        series.setdefault(f"{r.sampler} t_range={r.t_range:g}", []).append(r.fraction)
    svg = out / "fractions.svg"
    svg.write_text(emit_svg(np.log10(study.budgets), series,
                            title=f"unconverged fraction (f = {used.f:.4g})",
                            xlabel="log10 budget", ylabel="fraction"), encoding="utf-8")
    manifest.add_output(svg)
    manifest.results["f_applied"] = used.f
    manifest.results["f_calibrated"] = bool(cfg["calibrate"])
    manifest.seeds = {"base_seed": cfg["seed"], "reference_seed": cfg["seed"] + 1}


def cmd_appendix(cfg, out, manifest):
    which = cfg["which"]
    if which == "lengthscale":
        ell, val = experiments.appendix_lengthscale(cfg["length_scale"], cfg["spacing"],
                                                    cfg["n_points"])
        path = write_csv(out / "lengthscale.csv", ["ell", "loglik_per_point"], zip(ell, val))
    elif which == "moments":
        rows = experiments.appendix_moments(length_scale=cfg["length_scale"],
                                            spacing=cfg["spacing"], amplitude=cfg["amplitude"])
        path = write_csv(out / "moments.csv", ["n_data", "noise", "log_EL", "log_EL_closed",
                                               "log_EL2", "log_EL2_closed"], rows)
    elif which == "bayes-spectrum":
        rep = experiments.appendix_bayes_spectrum(cfg["n_data"], cfg["t_range"],
                                                  cfg["amplitude"], cfg["length_scale"],
                                                  cfg["noise"])
        path = write_csv(out / "bayes_spectrum.csv", ["index", "rho"], enumerate(rep.rho))
        manifest.results["min_rho"] = rep.min_rho
        manifest.results["is_positive_definite"] = rep.is_positive_definite
    else:
        rows = experiments.appendix_condition(cfg["n_data"], cfg["spacing"], cfg["amplitude"],
                                              cfg["length_scale"], cfg["noise"],
                                              cfg["n_delays"])
        path = write_csv(out / "condition.csv", ["delta_t", "condition_number"], rows)
    manifest.add_output(path)
    svg = path.with_suffix(".svg")
    svg_from_csv(path, svg, log_y=which == "condition", title=which)
    manifest.add_output(svg)


def cmd_plot(cfg, out, manifest):
    target = Path(cfg["output"]) if cfg["output"] else out / (Path(cfg["csv"]).stem + ".svg")
    manifest.add_input(cfg["csv"])
    svg_from_csv(cfg["csv"], target, cfg["x"] or None, cfg["y"] or None,
                 title=cfg["title"], log_y=cfg["log_y"])
    manifest.add_output(target)


COMMANDS = {"simulate": cmd_simulate, "scan": cmd_scan, "sample": cmd_sample,
            "convergence": cmd_convergence, "appendix": cmd_appendix, "plot": cmd_plot}

HELP = {
    "simulate": "draw synthetic light-curve pairs",
    "scan": "delay scans of the averaged or single-dataset log-likelihood",
    "sample": "run nested sampling or SMC on synthetic or supplied data",
    "convergence": "unconverged-fraction study against sampler budget",
    "appendix": "analytic checks: lengthscale, moments, bayes-spectrum, condition",
    "plot": "render a CSV as an SVG line plot",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="delaylik",
        description="Time-delay Gaussian-process likelihood experiments.",
        epilog=f"Set {THREADS_ENV} to run multi-run commands in several worker processes. "
               "Light curves are CSV files with header time_days,magnitude; the data-mode scan "
               "whitens each curve with the n-1 sample standard deviation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, defaults in DEFAULTS.items():
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("--config", help="TOML file, or a manifest.json to replay")
        p.add_argument("--out", default="out", help="output directory (default: out)")
        for key, default in defaults.items():
            flag = "--" + key.replace("_", "-")
            if isinstance(default, list):
                hint = "comma-separated list"
            elif isinstance(default, bool):
                hint = "true/false"
            else:
                hint = type(default).__name__
            p.add_argument(flag, dest=key, default=None, metavar=hint.upper().split()[0],
                           help=f"{hint} (default: {default!r})")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    command = args.command
    overrides = {k: v for k, v in vars(args).items()
                 if k not in ("command", "config", "out") and v is not None}
    try:
        cfg = resolve_config(command, _load_config_file(args.config), overrides)
        workers = worker_count()
    except ConfigError as exc:
        print(f"delaylik {command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"delaylik {command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"delaylik {command}: {exc}", file=sys.stderr)
        return EXIT_IO
    manifest = RunManifest(command, dict(cfg), version=__version__)
    try:
        out = _outdir(args.out)
        COMMANDS[command](cfg, out, manifest)
        manifest.results.setdefault("workers", workers)
        _finish(manifest, out)
    except (LightCurveFormatError, CSVFormatError, OSError) as exc:
        print(f"delaylik {command}: {exc}", file=sys.stderr)
        return EXIT_IO
    except (linalg.LinAlgError, np.linalg.LinAlgError, SamplerConfigError, LaplaceError,
            QuadratureError, FloatingPointError, RuntimeError) as exc:
        print(f"delaylik {command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"delaylik {command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
