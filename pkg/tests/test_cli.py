import csv
import json

import jsonschema
import pytest

import ldp_activation as ldp
from ldp_activation.cli import default_corpus, load_schema, main


def base_model(z_f=0.0):
    return {
        "n_c": 200, "n_v": 199, "z_f": z_f, "a": 2.1, "seed": 7,
        "law_Zc": {"kind": "discrete", "support": [1, 2, 3], "probs": [0.3, 0.5, 0.2]},
        "law_Zv": {"kind": "discrete", "support": [1, 2], "probs": [0.5, 0.5]},
        "law_W": {"kind": "discrete", "support": [0.6, 1.0, 1.4],
                  "probs": [0.2, 0.3, 0.5]},
    }


def write_config(tmp_path, name, cfg):
    path = tmp_path / name
    path.write_text(json.dumps(cfg, indent=2))
    return str(path)


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def curve_config(tmp_path, out="out", **overrides):
    cfg = {
        "model": base_model(),
        "experiment": "curve",
        "regime": "annealed",
        "a_grid": [2.0, 2.1, 2.2],
        "z_f_list": [0, 60],
        "output_dir": str(tmp_path / out),
        "seed": 42,
    }
    cfg.update(overrides)
    return cfg


class TestSchemaCommand:
    def test_schema_is_valid_jsonschema(self, capsys):
        assert main(["schema"]) == 0
        printed = json.loads(capsys.readouterr().out)
        jsonschema.Draft202012Validator.check_schema(printed)
        assert printed == load_schema("config")


class TestCurveExperiment:
    def test_writes_results_and_summary(self, tmp_path):
        cfg = curve_config(tmp_path)
        assert main(["run", write_config(tmp_path, "c.json", cfg)]) == 0
        rows = read_rows(tmp_path / "out" / "results.csv")
        assert len(rows) == 6
        summary = json.loads((tmp_path / "out" / "summary.json").read_text())
        jsonschema.validate(summary, load_schema("summary"))
        assert summary["rows"] == 6

    def test_foreign_load_raises_probability_at_small_threshold(self, tmp_path):
        cfg = curve_config(tmp_path)
        main(["run", write_config(tmp_path, "c.json", cfg)])
        rows = read_rows(tmp_path / "out" / "results.csv")
        by_z = {}
        for r in rows:
            by_z.setdefault(r["a"], {})[r["z_f"]] = float(r["probability"])
        for a, pair in by_z.items():
            assert pair["60"] > pair["0"], f"no foreign gain at a={a}"

    def test_byte_identical_across_parallelism(self, tmp_path, monkeypatch):
        cfg = curve_config(tmp_path, regime="quenched-R")
        path = write_config(tmp_path, "c.json", cfg)
        monkeypatch.setenv("LDP_THREADS", "1")
        main(["run", path])
        first = (tmp_path / "out" / "results.csv").read_bytes()
        monkeypatch.setenv("LDP_THREADS", "6")
        main(["run", path])
        second = (tmp_path / "out" / "results.csv").read_bytes()
        assert first == second

    def test_invalid_points_are_marked_not_fatal(self, tmp_path):
        cfg = curve_config(tmp_path, a_grid=[1.0, 2.1])  # 1.0 is below the mean
        assert main(["run", write_config(tmp_path, "c.json", cfg)]) == 0
        rows = read_rows(tmp_path / "out" / "results.csv")
        bad = [r for r in rows if r["a"] == "1" or r["a"] == "1.0"]
        assert bad and all(r["probability"] == "" for r in bad)
        assert all("invalid point" in r["warnings"] for r in bad)

    def test_plot_script_emission(self, tmp_path):
        cfg = curve_config(tmp_path, emit_plot_script=True)
        main(["run", write_config(tmp_path, "c.json", cfg)])
        assert (tmp_path / "out" / "plot.gp").exists()


class TestExitCodes:
    def test_empty_a_grid_is_schema_error(self, tmp_path, capsys):
        cfg = curve_config(tmp_path, a_grid=[])
        assert main(["run", write_config(tmp_path, "c.json", cfg)]) == 2
        err = json.loads(capsys.readouterr().err)
        assert err["error"]["exit_code"] == 2

    def test_missing_field_is_schema_error(self, tmp_path):
        cfg = curve_config(tmp_path)
        del cfg["model"]["law_W"]
        assert main(["run", write_config(tmp_path, "c.json", cfg)]) == 2

    def test_missing_file_is_schema_error(self):
        assert main(["run", "/nonexistent/config.json"]) == 2

    def test_model_domain_error(self, tmp_path, capsys):
        cfg = curve_config(tmp_path)
        cfg["model"]["z_f"] = 1e9  # z_f >= n_M
        assert main(["run", write_config(tmp_path, "c.json", cfg)]) == 3
        err = json.loads(capsys.readouterr().err)
        assert err["error"]["exit_code"] == 3

    def test_validate_subcommand_requires_validate_experiment(self, tmp_path):
        cfg = curve_config(tmp_path)
        assert main(["validate", write_config(tmp_path, "c.json", cfg)]) == 2


class TestOtherExperiments:
    def test_moments(self, tmp_path):
        cfg = curve_config(tmp_path, experiment="moments", z_f_list=[0, 30, 60])
        del cfg["a_grid"]
        assert main(["run", write_config(tmp_path, "m.json", cfg)]) == 0
        rows = read_rows(tmp_path / "out" / "results.csv")
        assert len(rows) == 3
        means = {float(r["mean"]) for r in rows}
        assert len(means) == 1  # mean invariance visible in the table

    def test_quenched_ensemble(self, tmp_path):
        cfg = curve_config(tmp_path, experiment="quenched-ensemble",
                           regime="quenched-R", replicas=5,
                           a_grid=[2.1], z_f_list=[0.0])
        assert main(["run", write_config(tmp_path, "e.json", cfg)]) == 0
        rows = read_rows(tmp_path / "out" / "results.csv")
        assert len(rows) == 5
        assert len({r["env_hash"] for r in rows}) == 5
        summary = json.loads((tmp_path / "out" / "summary.json").read_text())
        assert summary["diagnostics"]["rate_aggregates"]

    def test_ensemble_requires_quenched_regime(self, tmp_path):
        cfg = curve_config(tmp_path, experiment="quenched-ensemble",
                           regime="annealed", replicas=5)
        assert main(["run", write_config(tmp_path, "e.json", cfg)]) == 2

    def test_fluctuation(self, tmp_path):
        cfg = curve_config(tmp_path, experiment="fluctuation",
                           regime="quenched-R", replicas=150,
                           a_grid=[1.95, 2.05])
        del cfg["z_f_list"]
        assert main(["run", write_config(tmp_path, "f.json", cfg)]) == 0
        out = tmp_path / "out"
        for name in ("results.csv", "fluctuation.json",
                     "cov_empirical.csv", "cov_predicted.csv", "summary.json"):
            assert (out / name).exists(), name
        report = json.loads((out / "fluctuation.json").read_text())
        assert report["replicas"] == 150


class TestValidate:
    def test_default_corpus_passes(self, tmp_path):
        cfg = {
            "model": base_model(), "experiment": "validate",
            "output_dir": str(tmp_path / "val"), "seed": 99,
        }
        assert main(["validate", write_config(tmp_path, "v.json", cfg)]) == 0
        report = json.loads((tmp_path / "val" / "validation.json").read_text())
        assert report["all_pass"] is True
        assert report["instances"] == len(default_corpus())
        for row in report["rows"]:
            assert "seed" in row and "method" in row and "passed" in row

    def test_explicit_instances(self, tmp_path):
        instance = {
            "name": "bernoulli-check", "oracle": "exact", "a": 0.75,
            "rel_tolerance": 0.25,
            "model": {
                "n_c": 6, "n_v": 5, "z_f": 0.0, "a": 0.75, "seed": 12,
                "law_Zc": {"kind": "discrete", "support": [1], "probs": [1]},
                "law_Zv": {"kind": "discrete", "support": [1], "probs": [1]},
                "law_W": {"kind": "discrete", "support": [0, 1], "probs": [0.5, 0.5]},
            },
        }
        cfg = {
            "model": base_model(), "experiment": "validate",
            "instances": [instance],
            "output_dir": str(tmp_path / "val2"), "seed": 1,
        }
        assert main(["validate", write_config(tmp_path, "v.json", cfg)]) == 0
        report = json.loads((tmp_path / "val2" / "validation.json").read_text())
        assert report["all_pass"] is True
        assert report["rows"][0]["name"] == "bernoulli-check"
