import csv
import hashlib
import json
import math
import subprocess
import sys
from pathlib import Path

import pytest

from dpprocure.cli import main
from dpprocure.config import ConfigError, load_config, parse_config

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

TWO_UNIFORMS = """
[[types]]
kind = "uniform"
lo = 0.0
hi = 1.0
[[types]]
kind = "uniform"
lo = 0.0
hi = 2.0
"""


def _write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_validate_shipped_configs(capsys):
    for cfg in sorted(CONFIGS.glob("*.toml")):
        assert main(["validate", "--config", str(cfg)]) == 0, cfg
    assert "config_hash" in capsys.readouterr().out


def test_accuracy_sweep_resolves_k(tmp_path):
    cfg = _write(tmp_path, f"""
seed = 11
replications = 300
[population]
counts = [300, 300]
{TWO_UNIFORMS}
[mechanism]
k = 60
""")
    out = tmp_path / "out"
    assert main(["accuracy-sweep", "--config", str(cfg), "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["resolved"]["c"] == pytest.approx(0.5, abs=1e-12)
    assert manifest["resolved"]["epsilon"] == pytest.approx(4 * math.sqrt(3) / 60, abs=1e-12)
    for art in manifest["artifacts"]:
        digest = hashlib.sha256((out / art["file"]).read_bytes()).hexdigest()
        assert digest == art["sha256"]
    rows = _read_csv(out / "results.csv")
    assert float(rows[0]["accuracy_bound"]) <= 60 * (1 + 1e-9)


def test_noise_off_degenerate_run_recovers_count(tmp_path):
    cfg = _write(tmp_path, """
seed = 3
replications = 50
[population]
counts = [7, 5]
[[types]]
kind = "discrete"
atoms = [0.0]
probs = [1.0]
[[types]]
kind = "discrete"
atoms = [0.0]
probs = [1.0]
[mechanism]
c = 1.0
epsilon = 1.0
""")
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out), "--noise-off"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["s_hat_equals_n_target"] is True
    assert all(float(r["s_hat"]) == 7.0 for r in _read_csv(out / "results.csv"))


def test_reruns_are_byte_identical(tmp_path):
    cfg = CONFIGS / "run.toml"
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", str(cfg), "--out", str(a)]) == 0
    assert main(["run", "--config", str(cfg), "--out", str(b)]) == 0
    assert (a / "results.csv").read_bytes() == (b / "results.csv").read_bytes()
    c = tmp_path / "c"
    main(["run", "--config", str(cfg), "--out", str(c), "--seed", "1"])
    assert (a / "results.csv").read_bytes() != (c / "results.csv").read_bytes()


def test_rows_carry_seed_and_hash(tmp_path):
    out = tmp_path / "out"
    assert main(["benchmark", "--config", str(CONFIGS / "benchmark.toml"), "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    rows = _read_csv(out / "results.csv")
    assert rows
    for row in rows:
        assert row["seed"] == str(summary["seed"])
        assert row["config_hash"] == summary["config_hash"]


def test_config_hash_tracks_content():
    base = {"seed": 1, "population": {"counts": [2, 2]}, "types": [{"kind": "uniform", "lo": 0, "hi": 1}] * 2,
            "mechanism": {"c": 0.5, "epsilon": 1.0}}
    a, b = parse_config(base), parse_config(json.loads(json.dumps(base)))
    assert a.config_hash() == b.config_hash()
    base["seed"] = 2
    assert parse_config(base).config_hash() != a.config_hash()


@pytest.mark.parametrize(
    "body",
    [
        "replications = 10\n[population]\ncounts=[1,1]\n" + TWO_UNIFORMS + "[mechanism]\nc=0.5\nepsilon=1.0\n",
        "seed = -1\n[population]\ncounts=[1,1]\n" + TWO_UNIFORMS + "[mechanism]\nc=0.5\nepsilon=1.0\n",
        "seed = 1\n[population]\ncounts=[1,1]\n" + TWO_UNIFORMS + "[mechanism]\nc=0.5\n",
        "seed = 1\n[population]\ncounts=[1,1]\n" + TWO_UNIFORMS + "[mechanism]\nc=0.5\nk=3\nepsilon=1.0\n",
        "seed = 1\n[population]\ncounts=[1,1,1]\n" + TWO_UNIFORMS + "[mechanism]\nc=0.5\nepsilon=1.0\n",
        "seed = 1\n[population]\ncounts=[1,1]\n" + TWO_UNIFORMS + "[mechanism]\nc=1.5\nepsilon=1.0\n",
        "seed = 1\n[population\n",
    ],
)
def test_invalid_config_exits_2(tmp_path, body):
    cfg = _write(tmp_path, body)
    assert main(["validate", "--config", str(cfg)]) == 2
    with pytest.raises(ConfigError):
        load_config(cfg)


def test_infeasible_budget_exits_3(tmp_path):
    cfg = _write(tmp_path, f"""
seed = 1
[population]
counts = [50, 50]
{TWO_UNIFORMS}
[mechanism]
budget = 0.01
""")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3


def _audit_cfg(tmp_path, samples, targets):
    return _write(tmp_path, f"""
seed = 7
[population]
counts = [10, 190]
{TWO_UNIFORMS}
[mechanism]
c = 0.5
epsilon = 0.5
[audit]
flipped_index = 10
flip_to = 1
samples = {samples}
statistic = "estimate"
epsilon_targets = {targets}
""")


def test_audit_too_few_samples_exits_4(tmp_path):
    cfg = _audit_cfg(tmp_path, 1000, "[0.5]")
    assert main(["audit-dp", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 4


def test_audit_failure_exits_5(tmp_path):
    cfg = _audit_cfg(tmp_path, 100_000, "[0.5, 0.05]")
    out = tmp_path / "o"
    assert main(["audit-dp", "--config", str(cfg), "--out", str(out)]) == 5
    checks = json.loads((out / "summary.json").read_text())["checks"]
    assert checks == {"estimate@0.5": "pass", "estimate@0.05": "fail"}


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "dpprocure.cli", "validate", "--config", str(CONFIGS / "budget.toml")],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    resolved = json.loads(proc.stdout)["resolved"]
    assert resolved["epsilon"] * resolved["c"] > 0
