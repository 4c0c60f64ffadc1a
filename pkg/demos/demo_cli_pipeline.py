"""
The command-line pipeline, end to end
=====================================

simulate -> fit -> assign -> report -> forecast, all through the CLI,
using a temporary directory.  Every output is a plain-text file.
"""

import json
import pathlib
import subprocess
import sys
import tempfile

workdir = pathlib.Path(tempfile.mkdtemp(prefix="cthmm-demo-"))
print(f"working in {workdir}\n")

config = {
    "features": [
        {"name": "heart_rate", "lower": 40, "upper": 150, "bins": 5},
        {"name": "systolic_bp", "lower": 40, "upper": 200, "bins": 5},
        {"name": "intervention", "lower": 0, "upper": 1, "bins": 2},
    ],
    "intervention_feature": "intervention",
    "eval_features": ["heart_rate", "systolic_bp"],
    "subtypes": 2,
    "states": 3,
    "left_to_right": True,
    "terminal_intervention": True,
    "seed": 21,
    "em": {
        "max_iterations": 40,
        "restarts": 2,
        "delta_quantization": 0.1,
        "mixture_iterations": 10,
    },
    "simulate": {"patients": 80, "missing_rate": 0.15, "max_observations": 18},
}
config_path = workdir / "config.json"
config_path.write_text(json.dumps(config, indent=2))


def run(*args):
    command = [sys.executable, "-m", "cthmm_subtyping", *args]
    print("$", "cthmm-subtype", *args)
    result = subprocess.run(command, capture_output=True, text=True)
    print(result.stdout, end="")
    if result.returncode != 0:
        print(result.stderr, end="")
        raise SystemExit(result.returncode)
    print()


cohort = workdir / "cohort.csv"
model = workdir / "model.json"

run("simulate", "--config", str(config_path), "--out", str(cohort))
run(
    "fit",
    "--config",
    str(config_path),
    "--data",
    str(cohort),
    "--out",
    str(model),
    "--truth",
    str(workdir / "cohort.truth.csv"),
)
run("assign", "--model", str(model), "--data", str(cohort), "--out", str(workdir / "assignments.csv"))
run("report", "--model", str(model), "--out", str(workdir / "progression.csv"))
run(
    "forecast",
    "--model",
    str(model),
    "--data",
    str(cohort),
    "--config",
    str(config_path),
    "--out",
    str(workdir / "forecast.csv"),
)

print("progression report contents:")
print((workdir / "progression.csv").read_text())
