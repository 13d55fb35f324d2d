"""Command-line entry point: experiment orchestration and persistence.

``ldp-activation run <config.json>`` executes one experiment described by
a JSON config (schema printable via ``ldp-activation schema``) and writes
``results.csv`` plus ``summary.json`` into the configured output
directory; fluctuation and validation experiments add their module
reports (``fluctuation.json`` + covariance CSVs, ``validation.json``).

Exit codes: 0 success, 2 config/schema violation, 3 model-domain error,
4 numeric failure.  Failures emit a machine-readable JSON object on
stderr (and ``error.json`` when the output directory is usable).

Determinism contract: all randomness is derived from the config seed via
fixed substream paths (environments, replicas, Monte Carlo blocks), so a
given config reproduces byte-identical outputs for any parallelism
setting (cap threads with the ``LDP_THREADS`` environment variable).
Numbers are written with 17 significant digits, which round-trips
float64 exactly.
"""

from __future__ import annotations

import argparse
import csv
import importlib.resources
import json
import sys
import time
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .annealed import probability_annealed
from .distributions import degenerate
from .errors import ConfigError, DecompositionError, DomainError, LdpError
from .fluctuation import simulate_fluctuation
from .model import (
    Environment,
    ModelParams,
    conditional_moments,
    config_digest,
    moments_annealed,
    moments_quenched_R,
    moments_quenched_Z,
    normal_interval,
    sample_environment,
)
from .oracle import exact_tail, tilted_is
from .quenched import probability_quenched
from .streams import derive_rng, ordered_map

# substream path tags (first component after the config seed)
_ENV_STREAM = 1
_REPLICA_STREAM = 2
_FLUCT_STREAM = 3
_VALIDATE_STREAM = 4

_CURVE_COLUMNS = ["regime", "z_f", "a", "probability", "log_probability",
                  "rate", "theta", "sigma2", "warnings"]


class SchemaViolation(Exception):
    """Config rejected before any model is built (exit code 2)."""


def load_schema(name: str = "config") -> dict:
    text = (importlib.resources.files("ldp_activation") / "schemas"
            / f"{name}.schema.json").read_text()
    return json.loads(text)


def _fmt(value) -> str:
    if value is None or value == "":
        return ""
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def _write_csv(path: Path, columns: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(col)) for col in columns])


def _require(cfg: dict, experiment: str, *fields: str) -> None:
    missing = [f for f in fields if f not in cfg]
    if missing:
        raise SchemaViolation(
            f"experiment {experiment!r} requires config field(s): {', '.join(missing)}"
        )


def _load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise SchemaViolation(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"config is not valid JSON: {exc}")
    try:
        jsonschema.validate(cfg, load_schema("config"))
    except jsonschema.ValidationError as exc:
        raise SchemaViolation(f"config violates the schema: {exc.message}")
    experiment = cfg["experiment"]
    if experiment in ("curve", "quenched-ensemble"):
        _require(cfg, experiment, "regime", "a_grid", "z_f_list")
    if experiment == "quenched-ensemble":
        _require(cfg, experiment, "replicas")
        if cfg["regime"] == "annealed":
            raise SchemaViolation("quenched-ensemble requires a quenched regime")
    if experiment == "moments":
        _require(cfg, experiment, "z_f_list")
    if experiment == "fluctuation":
        _require(cfg, experiment, "regime", "a_grid", "replicas")
        if cfg["regime"] == "annealed":
            raise SchemaViolation("fluctuation requires a quenched regime")
    return cfg


def _estimate_row(params: ModelParams, regime: str, env: Environment | None,
                  z_f: float, a: float) -> dict:
    row = {"regime": regime, "z_f": z_f, "a": a}
    try:
        p = params.with_z_f(z_f)
        if regime == "annealed":
            est = probability_annealed(p, a)
        else:
            est = probability_quenched(p, env, a)
        row.update(
            probability=est.value,
            log_probability=est.diagnostics["log_probability"],
            rate=est.diagnostics["rate"],
            theta=est.diagnostics["theta"],
            sigma2=est.diagnostics["sigma2"],
            warnings="; ".join(est.warnings),
        )
    except LdpError as exc:
        # invalid grid points are marked, not fatal
        row.update(probability="", log_probability="", rate="", theta="",
                   sigma2="", warnings=f"invalid point: {exc}")
    return row


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

def _run_curve(cfg: dict, params: ModelParams, out: Path):
    regime = cfg["regime"]
    seed = cfg["seed"]
    env = None
    envs = []
    if regime != "annealed":
        kind = regime[-1]
        env = sample_environment(params, kind, derive_rng(seed, _ENV_STREAM))
        envs.append(env.to_json())
    tasks = [(z, a) for z in cfg["z_f_list"] for a in cfg["a_grid"]]
    rows = ordered_map(lambda t: _estimate_row(params, regime, env, t[0], t[1]), tasks)
    _write_csv(out / "results.csv", _CURVE_COLUMNS, rows)
    if cfg.get("emit_plot_script"):
        _emit_plot_script(out, cfg)
    return rows, {"environments": envs}, ["results.csv"]


def _run_ensemble(cfg: dict, params: ModelParams, out: Path):
    regime = cfg["regime"]
    kind = regime[-1]
    seed = cfg["seed"]
    replicas = cfg["replicas"]

    def one_replica(i: int) -> list[dict]:
        env = sample_environment(params, kind, derive_rng(seed, _REPLICA_STREAM, i))
        rows = []
        for z in cfg["z_f_list"]:
            for a in cfg["a_grid"]:
                row = {"replica": i, "env_hash": env.digest()}
                row.update(_estimate_row(params, regime, env, z, a))
                rows.append(row)
        return rows

    nested = ordered_map(one_replica, range(replicas))
    rows = [row for chunk in nested for row in chunk]
    _write_csv(out / "results.csv", ["replica", "env_hash"] + _CURVE_COLUMNS, rows)

    aggregates = {}
    for z in cfg["z_f_list"]:
        for a in cfg["a_grid"]:
            rates = [r["rate"] for r in rows
                     if r["z_f"] == z and r["a"] == a and r["rate"] != ""]
            if rates:
                aggregates[f"z_f={z:g},a={a:g}"] = {
                    "replicas": len(rates),
                    "rate_mean": float(np.mean(rates)),
                    "rate_std": float(np.std(rates, ddof=1)) if len(rates) > 1 else 0.0,
                }
    return rows, {"diagnostics": {"rate_aggregates": aggregates}}, ["results.csv"]


def _run_moments(cfg: dict, params: ModelParams, out: Path):
    regime = cfg.get("regime", "annealed")
    coverage = cfg.get("coverage", 0.99)
    env = None
    envs = []
    if regime != "annealed":
        env = sample_environment(params, regime[-1], derive_rng(cfg["seed"], _ENV_STREAM))
        envs.append(env.to_json())
    rows = []
    for z in cfg["z_f_list"]:
        p = params.with_z_f(z)
        if regime == "annealed":
            mom = moments_annealed(p)
            mean, var = mom.mean, mom.variance
            mean_diff, var_diff = 0.0, mom.variance_diff(z)
        else:
            mean, var = conditional_moments(p, env)
            diff = (moments_quenched_R if regime == "quenched-R"
                    else moments_quenched_Z)(p, env)
            mean_diff, var_diff = diff.mean_diff, diff.variance_diff
        lo, hi = normal_interval(params, z, coverage=coverage, regime=regime, env=env)
        rows.append({"regime": regime, "z_f": z, "mean": mean, "variance": var,
                     "mean_diff": mean_diff, "variance_diff": var_diff,
                     "interval_lo": lo, "interval_hi": hi})
    columns = ["regime", "z_f", "mean", "variance", "mean_diff", "variance_diff",
               "interval_lo", "interval_hi"]
    _write_csv(out / "results.csv", columns, rows)
    return rows, {"environments": envs, "diagnostics": {"coverage": coverage}}, ["results.csv"]


def _run_fluctuation(cfg: dict, params: ModelParams, out: Path):
    kind = cfg["regime"][-1]
    report = simulate_fluctuation(
        params, kind, cfg["a_grid"], cfg["replicas"],
        derive_rng(cfg["seed"], _FLUCT_STREAM),
    )
    with open(out / "fluctuation.json", "w") as fh:
        json.dump(report.to_json(), fh, indent=2)
        fh.write("\n")
    np.savetxt(out / "cov_empirical.csv", report.empirical_cov,
               fmt="%.17g", delimiter=",")
    np.savetxt(out / "cov_predicted.csv", report.predicted_cov,
               fmt="%.17g", delimiter=",")
    valid_as = [a for a, ok in zip(report.a_grid, report.valid) if ok]
    rows = []
    for j, aj in enumerate(valid_as):
        for l, al in enumerate(valid_as):
            rows.append({
                "a_row": aj, "a_col": al,
                "empirical": float(report.empirical_cov[j, l]),
                "predicted": float(report.predicted_cov[j, l]),
                "jackknife_se": float(report.jackknife_se[j, l]),
            })
    _write_csv(out / "results.csv",
               ["a_row", "a_col", "empirical", "predicted", "jackknife_se"], rows)
    extras = {"diagnostics": {
        "max_abs_cov_error": report.max_abs_cov_error,
        "normality_pvalues": [None if np.isnan(p) else p
                              for p in report.normality_pvalues],
        "point_errors": list(report.point_errors),
    }}
    return rows, extras, ["results.csv", "fluctuation.json",
                          "cov_empirical.csv", "cov_predicted.csv"]


# ---------------------------------------------------------------------------
# validation corpus
# ---------------------------------------------------------------------------

def default_corpus() -> list[dict]:
    """Built-in validation instances (small exact-oracle corpus plus one
    rare-event importance-sampling instance)."""
    bernoulli_w = {"kind": "discrete", "support": [0.0, 1.0], "probs": [0.5, 0.5]}
    unit = {"kind": "discrete", "support": [1.0], "probs": [1.0]}
    fine_w = {"kind": "discrete", "support": [0.25, 0.5, 0.75, 1.0],
              "probs": [0.25, 0.25, 0.25, 0.25]}
    z12 = {"kind": "discrete", "support": [1.0, 2.0], "probs": [0.5, 0.5]}
    corpus = [
        {"name": "bernoulli-n12", "oracle": "exact", "a": 0.75,
         "model": {"n_c": 6, "n_v": 5, "z_f": 0.0, "a": 0.75, "seed": 12,
                   "law_Zc": unit, "law_Zv": unit, "law_W": bernoulli_w}},
        {"name": "mixed-n12", "oracle": "exact", "a": 1.3,
         "model": {"n_c": 6, "n_v": 5, "z_f": 0.0, "a": 1.3, "seed": 13,
                   "law_Zc": z12, "law_Zv": z12, "law_W": fine_w}},
        {"name": "mixed-n12-foreign", "oracle": "exact", "a": 1.3,
         "model": {"n_c": 6, "n_v": 5, "z_f": 2.0, "a": 1.3, "seed": 14,
                   "law_Zc": z12, "law_Zv": z12, "law_W": fine_w}},
        {"name": "quenchedR-n12", "oracle": "exact", "a": 1.0,
         "regime": "quenched-R",
         "model": {"n_c": 6, "n_v": 5, "z_f": 0.0, "a": 1.0, "seed": 15,
                   "law_Zc": z12, "law_Zv": z12, "law_W": fine_w}},
        {"name": "quenchedZ-n12", "oracle": "exact", "a": 1.0,
         "regime": "quenched-Z",
         "model": {"n_c": 6, "n_v": 5, "z_f": 0.0, "a": 1.0, "seed": 16,
                   "law_Zc": z12, "law_Zv": z12, "law_W": fine_w}},
        {"name": "degenerate-env-R", "oracle": "degenerate-env-agreement",
         "regime": "quenched-R", "a": 1.6, "rel_tolerance": 1e-9,
         "model": {"n_c": 10, "n_v": 10, "z_f": 0.0, "a": 1.6, "seed": 17,
                   "law_Zc": z12, "law_Zv": z12,
                   "law_W": {"kind": "discrete", "support": [1.0], "probs": [1.0]}}},
        {"name": "rare-is-n400", "oracle": "tilted-is", "a": 0.65,
         "draws": 100000,
         "model": {"n_c": 200, "n_v": 199, "z_f": 0.0, "a": 0.65, "seed": 18,
                   "law_Zc": unit, "law_Zv": unit, "law_W": bernoulli_w}},
    ]
    return corpus


def _run_validate(cfg: dict, _params: ModelParams, out: Path):
    instances = cfg.get("instances") or default_corpus()
    seed = cfg["seed"]

    def check(item) -> dict:
        idx, inst = item
        params = ModelParams.from_config(inst["model"])
        regime = inst.get("regime", "annealed")
        a = inst["a"]
        oracle = inst["oracle"]
        inst_seed = int(np.random.SeedSequence((seed, _VALIDATE_STREAM, idx))
                        .generate_state(1)[0])
        env = None
        if regime != "annealed":
            env = sample_environment(params, regime[-1],
                                     derive_rng(seed, _VALIDATE_STREAM, idx))
        row = {"name": inst["name"], "regime": regime, "z_f": params.z_f, "a": a,
               "method": oracle, "seed": inst_seed, "draws": inst.get("draws", 0)}
        try:
            if regime == "annealed":
                approx = probability_annealed(params, a)
            else:
                approx = probability_quenched(params, env, a)
            if oracle == "exact":
                tol = inst.get("rel_tolerance", 0.25)
                ref = exact_tail(params, env, a)
                rel = abs(approx.value / ref.value - 1.0) if ref.value > 0 else float("inf")
                row.update(approx=approx.value, reference=ref.value, std_error=0.0,
                           rel_error=rel, tolerance=tol, passed=rel <= tol)
            elif oracle == "tilted-is":
                tol = inst.get("rel_tolerance", 0.10)
                mult = inst.get("se_multiplier", 3.0)
                ref = tilted_is(params, env, a, inst.get("draws", 100000), inst_seed)
                band = mult * ref.std_error + tol * ref.value
                err = abs(approx.value - ref.value)
                row.update(approx=approx.value, reference=ref.value,
                           std_error=ref.std_error,
                           rel_error=err / ref.value if ref.value > 0 else float("inf"),
                           tolerance=tol, passed=err <= band)
            elif oracle == "degenerate-env-agreement":
                tol = inst.get("rel_tolerance", 1e-9)
                kind = regime[-1]
                law = params.law_W if kind == "R" else None
                if kind == "R":
                    if not law.is_degenerate:
                        raise ConfigError(
                            "degenerate-env-agreement (R) needs a degenerate W law")
                    w0 = float(law.support[0])
                    env = Environment("R", np.full(params.n_c + params.n_v + 1, w0))
                else:
                    if not (params.law_Zc.is_degenerate and params.law_Zv.is_degenerate):
                        raise ConfigError(
                            "degenerate-env-agreement (Z) needs degenerate Z laws")
                    env = Environment("Z", np.concatenate([
                        np.full(params.n_c, float(params.law_Zc.support[0])),
                        np.full(params.n_v, float(params.law_Zv.support[0]))]))
                cond = probability_quenched(params, env, a)
                ann = probability_annealed(params, a)
                rel = abs(cond.value / ann.value - 1.0) if ann.value > 0 else float("inf")
                row.update(approx=cond.value, reference=ann.value, std_error=0.0,
                           rel_error=rel, tolerance=tol, passed=rel <= tol)
            else:
                raise ConfigError(f"unknown oracle {oracle!r}")
        except LdpError as exc:
            row.update(approx="", reference="", std_error="", rel_error="",
                       tolerance="", passed=False, warnings=str(exc))
        return row

    rows = ordered_map(check, list(enumerate(instances)))
    columns = ["name", "regime", "method", "z_f", "a", "approx", "reference",
               "std_error", "rel_error", "tolerance", "passed", "seed", "draws"]
    _write_csv(out / "results.csv", columns, rows)
    all_pass = all(bool(r.get("passed")) for r in rows)
    report = {"version": __version__, "all_pass": all_pass,
              "instances": len(rows), "rows": rows}
    with open(out / "validation.json", "w") as fh:
        json.dump(report, fh, indent=2, default=str)
        fh.write("\n")
    return rows, {"diagnostics": {"all_pass": all_pass}}, ["results.csv", "validation.json"]


def _emit_plot_script(out: Path, cfg: dict) -> None:
    lines = [
        "# gnuplot script for the activation curves in results.csv",
        'set datafile separator ","',
        "set key autotitle columnheader",
        "set logscale y",
        'set xlabel "threshold slope a"',
        'set ylabel "activation probability"',
        'plot "results.csv" using 3:4 with linespoints',
    ]
    (out / "plot.gp").write_text("\n".join(lines) + "\n")


_EXPERIMENTS = {
    "curve": _run_curve,
    "quenched-ensemble": _run_ensemble,
    "moments": _run_moments,
    "fluctuation": _run_fluctuation,
    "validate": _run_validate,
}


# ---------------------------------------------------------------------------
# entry points
# ---------------------------------------------------------------------------

def _emit_error(out_dir: Path | None, exc: Exception, code: int) -> None:
    payload = {"error": {"type": type(exc).__name__, "message": str(exc),
                         "exit_code": code}}
    print(json.dumps(payload), file=sys.stderr)
    if out_dir is not None:
        try:
            with open(out_dir / "error.json", "w") as fh:
                json.dump(payload, fh, indent=2)
                fh.write("\n")
        except OSError:
            pass


def _execute(config_path: str, force_experiment: str | None = None) -> int:
    out_dir: Path | None = None
    try:
        cfg = _load_config(config_path)
        if force_experiment and cfg["experiment"] != force_experiment:
            raise SchemaViolation(
                f"this subcommand requires experiment={force_experiment!r}, "
                f"config says {cfg['experiment']!r}"
            )
        out_dir = Path(cfg["output_dir"])
        out_dir.mkdir(parents=True, exist_ok=True)
    except SchemaViolation as exc:
        _emit_error(out_dir, exc, 2)
        return 2

    started = time.time()
    try:
        params = ModelParams.from_config(cfg["model"])
        rows, extras, files = _EXPERIMENTS[cfg["experiment"]](cfg, params, out_dir)
    except (ConfigError, DomainError, DecompositionError) as exc:
        _emit_error(out_dir, exc, 3)
        return 3
    except Exception as exc:  # numeric failure or bug: still machine-readable
        _emit_error(out_dir, exc, 4)
        return 4

    summary = {
        "version": __version__,
        "experiment": cfg["experiment"],
        "regime": cfg.get("regime"),
        "seed": cfg["seed"],
        "config_digest": config_digest(cfg),
        "timing_seconds": time.time() - started,
        "files": files + ["summary.json"],
        "rows": len(rows),
        "environments": extras.get("environments", []),
        "diagnostics": extras.get("diagnostics", {}),
    }
    with open(out_dir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ldp-activation",
        description="Sharp large-deviation activation probabilities: experiments, "
                    "validation, and config schema.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run the experiment described by a JSON config")
    p_run.add_argument("config", help="path to the experiment config JSON")
    p_val = sub.add_parser("validate",
                           help="run approximation-vs-oracle validation")
    p_val.add_argument("config", help="path to a config with experiment=validate")
    sub.add_parser("schema", help="print the config JSON schema")

    args = parser.parse_args(argv)
    if args.command == "schema":
        print(json.dumps(load_schema("config"), indent=2))
        return 0
    if args.command == "run":
        return _execute(args.config)
    return _execute(args.config, force_experiment="validate")


if __name__ == "__main__":
    sys.exit(main())
