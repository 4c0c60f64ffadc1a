import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from cthmm_subtyping import load_model, save_model
from cthmm_subtyping.cli import main

from conftest import separated_mixture, simple_scheme


@pytest.fixture()
def workdir(tmp_path):
    config = {
        "features": [
            {"name": "heart_rate", "lower": 40, "upper": 150, "bins": 5},
            {"name": "systolic_bp", "lower": 40, "upper": 200, "bins": 5},
        ],
        "subtypes": 2,
        "states": 2,
        "seed": 7,
        "em": {
            "max_iterations": 8,
            "restarts": 1,
            "delta_quantization": 0.1,
            "mixture_iterations": 6,
        },
        "simulate": {"patients": 24, "missing_rate": 0.1, "max_observations": 16},
    }
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps(config))
    return tmp_path, str(config_path)


def _read_rows(path):
    with open(path, newline="") as handle:
        return list(csv.DictReader(handle))


class TestPipeline:
    def test_simulate_fit_assign_forecast(self, workdir, capsys):
        tmp, config = workdir
        cohort = tmp / "cohort.csv"
        model = tmp / "model.json"

        assert main(["simulate", "--config", config, "--out", str(cohort)]) == 0
        truth = tmp / "cohort.truth.csv"
        assert cohort.exists() and truth.exists()
        truth_rows = _read_rows(truth)
        assert {"patient_id", "subtype", "time", "hidden_state"} <= set(truth_rows[0])

        assert (
            main(
                [
                    "fit",
                    "--config",
                    config,
                    "--data",
                    str(cohort),
                    "--out",
                    str(model),
                    "--truth",
                    str(truth),
                ]
            )
            == 0
        )
        fit_output = capsys.readouterr().out
        assert "label accuracy" in fit_output
        persisted = load_model(model)
        assert persisted.n_subtypes == 2

        assignments = tmp / "assignments.csv"
        assert (
            main(
                [
                    "assign",
                    "--model",
                    str(model),
                    "--data",
                    str(cohort),
                    "--out",
                    str(assignments),
                ]
            )
            == 0
        )
        rows = _read_rows(assignments)
        assert len(rows) == 24
        by_id = {row["patient_id"]: int(row["subtype"]) for row in rows}
        # fitting stores training assignments; re-assigning the training
        # data must reproduce them exactly
        ordered = [by_id[f"p{i:05d}"] for i in range(24)]
        assert ordered == persisted.assignments.tolist()

        forecasts = tmp / "forecast.csv"
        assert (
            main(
                [
                    "forecast",
                    "--model",
                    str(model),
                    "--data",
                    str(cohort),
                    "--out",
                    str(forecasts),
                    "--config",
                    config,
                ]
            )
            == 0
        )
        out = capsys.readouterr().out
        assert "forecast cross-entropy" in out
        assert len(_read_rows(forecasts)) > 0

    def test_report_rows_per_subtype(self, tmp_path, capsys):
        scheme = simple_scheme()
        mixture = separated_mixture(
            [
                np.array([[0, 0], [1, 1], [2, 2], [3, 3]]),
                np.array([[4, 4], [3, 2], [2, 1], [0, 0]]),
            ],
            [[0.5, 0.4, 0.3], [0.6, 0.2, 0.7]],
            scheme=scheme,
        )
        model_path = tmp_path / "model.json"
        save_model(mixture, model_path)
        out = tmp_path / "report.csv"
        assert main(["report", "--model", str(model_path), "--out", str(out)]) == 0
        rows = _read_rows(out)
        assert len(rows) == 8
        per_subtype = {}
        for row in rows:
            per_subtype.setdefault(row["subtype"], []).append(row["state"])
        assert per_subtype == {"0": ["0", "1", "2", "3"], "1": ["0", "1", "2", "3"]}
        final = [r for r in rows if r["state"] == "3"]
        assert all(r["expected_duration"] == "inf" for r in final)

    def test_grid_outputs_and_byte_reproducibility(self, workdir, capsys):
        tmp, config = workdir
        cohort = tmp / "cohort.csv"
        main(["simulate", "--config", config, "--out", str(cohort)])
        capsys.readouterr()

        out_a = tmp / "grid_a.csv"
        out_b = tmp / "grid_b.csv"
        args = [
            "grid",
            "--config",
            config,
            "--data",
            str(cohort),
            "--subtypes",
            "1",
            "--states",
            "1,2",
        ]
        assert main(args + ["--out", str(out_a)]) == 0
        text_a = capsys.readouterr().out
        assert "Subtypes" in text_a
        assert main(args + ["--out", str(out_b)]) == 0
        assert out_a.read_bytes() == out_b.read_bytes()
        rows = _read_rows(out_a)
        assert len(rows) == 2
        assert {row["states"] for row in rows} == {"1", "2"}


class TestErrorSurface:
    def test_missing_file_gives_single_error_line(self, capsys):
        code = main(["assign", "--model", "/nonexistent/model.json", "--data", "x", "--out", "y"])
        assert code == 1
        err = capsys.readouterr().err
        lines = [line for line in err.splitlines() if line]
        assert len(lines) == 1
        assert lines[0].startswith("error ")
        assert ":" in lines[0]

    def test_bad_model_file_names_error_class(self, tmp_path, capsys):
        bad = tmp_path / "model.json"
        bad.write_text("{}")
        code = main(["report", "--model", str(bad), "--out", str(tmp_path / "r.csv")])
        assert code == 1
        err = capsys.readouterr().err
        assert err.startswith("error VersionMismatch")

    def test_fit_rejects_grid_values(self, workdir, capsys):
        tmp, config = workdir
        cohort = tmp / "cohort.csv"
        main(["simulate", "--config", config, "--out", str(cohort)])
        capsys.readouterr()
        code = main(
            [
                "fit",
                "--config",
                config,
                "--data",
                str(cohort),
                "--out",
                str(tmp / "m.json"),
                "--subtypes",
                "1,2",
            ]
        )
        assert code == 1
        assert "error SubtypingError" in capsys.readouterr().err


def test_console_entry_point_runs():
    result = subprocess.run(
        [sys.executable, "-m", "cthmm_subtyping", "--help"],
        capture_output=True,
        text=True,
    )
    assert result.returncode == 0
    assert "fit" in result.stdout and "simulate" in result.stdout
