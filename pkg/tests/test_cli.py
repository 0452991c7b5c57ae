import csv
import json
from pathlib import Path

import numpy as np
import pytest

from epbraid.cli import load_config, main
from epbraid.errors import ConfigError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write_config(tmp_path, **overrides):
    cfg = {
        "loop": {"delta0": 0.5, "omega0": 0.5, "gamma0": 1.0, "phi": 0.0, "d": 1},
        "schedule": {"t0": 5.0},
        "protocol_kind": "uncorrected",
        "grid_size": 512,
        "tol": 1e-9,
    }
    cfg.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return list(reader)


class TestConfigValidation:
    def test_schema_violation_reports_field(self, tmp_path):
        path = write_config(tmp_path, grid_size=8)
        with pytest.raises(ConfigError, match="grid_size"):
            load_config(path)

    def test_schema_violation_exit_code(self, tmp_path, capsys):
        path = write_config(tmp_path, tol=1e-3)
        assert main(["simulate", "--config", str(path), "--out", str(tmp_path / "o")]) == 2
        assert "tol" in capsys.readouterr().err

    def test_unknown_key_rejected(self, tmp_path):
        path = write_config(tmp_path, extra_knob=1)
        with pytest.raises(ConfigError):
            load_config(path)

    def test_missing_file(self, tmp_path):
        assert main(["simulate", "--config", str(tmp_path / "nope.json"), "--out", "o"]) == 2

    def test_numeric_failure_exit_code(self, tmp_path, capsys):
        # a loop threaded through the degeneracy cannot be corrected
        path = write_config(
            tmp_path, loop={"delta0": 0.5, "omega0": 0.0, "gamma0": 1.0, "phi": 0.0, "d": 1}
        )
        rc = main(["correct", "td", "--config", str(path), "--out", str(tmp_path / "o")])
        assert rc == 4
        assert "degeneracy" in capsys.readouterr().err


class TestSimulate:
    def test_slow_loop_populations_config(self, tmp_path):
        out = tmp_path / "out"
        rc = main(
            ["simulate", "--config", str(CONFIGS / "slow_loop_populations.json"), "--out", str(out)]
        )
        assert rc == 0
        rows = read_csv(out / "simulate.csv")
        final = rows[-1]
        assert float(final["P_mp"]) > 0.99
        assert float(final["P_pp"]) > 0.99
        manifest = json.loads((out / "run_manifest.json").read_text())
        assert manifest["command"] == "simulate"
        assert "simulate.csv" in manifest["outputs"]
        assert manifest["library_version"]

    def test_byte_identical_reruns(self, tmp_path):
        path = write_config(tmp_path, schedule={"t0": 3.0})
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["simulate", "--config", str(path), "--out", str(out1)]) == 0
        assert main(["simulate", "--config", str(path), "--out", str(out2)]) == 0
        assert (out1 / "simulate.csv").read_bytes() == (out2 / "simulate.csv").read_bytes()


class TestCorrect:
    def test_invalid_dressing_exit_code(self, tmp_path, capsys):
        path = write_config(
            tmp_path,
            loop={
                "delta0": 0.5,
                "omega0": 1.0 / 6.0,
                "gamma0": 1.0,
                "phi": -np.pi / 8,
                "d": 1,
            },
            schedule={"t0": 2.0},
            grid_size=1024,
        )
        rc = main(["correct", "satd", "--config", str(path), "--out", str(tmp_path / "o")])
        assert rc == 3
        assert "mu(t0)/pi" in capsys.readouterr().err

    def test_td_protocol_and_report(self, tmp_path):
        path = write_config(tmp_path)
        out = tmp_path / "out"
        assert main(["correct", "td", "--config", str(path), "--out", str(out)]) == 0
        report = json.loads((out / "correction.json").read_text())
        assert report["kind"] == "td"
        assert report["rms_total"] > report["rms_correction"] > 0
        rows = read_csv(out / "protocol.csv")
        assert float(rows[0]["fy_re"]) == pytest.approx(0.0, abs=1e-12)

    def test_radd_with_pinned_mask(self, tmp_path):
        path = write_config(
            tmp_path,
            protocol_kind="radd",
            schedule={"t0": 7.0},
            radd_mask={"amplitude": 0.5, "width": 1.0, "exponent": 2},
            grid_size=1024,
        )
        out = tmp_path / "out"
        assert main(["correct", "radd", "--config", str(path), "--out", str(out)]) == 0
        report = json.loads((out / "correction.json").read_text())
        assert report["kind"] == "radd"

    def test_rms_sweep(self, tmp_path):
        path = write_config(tmp_path, sweep={"loop_time": [4.0, 8.0]}, grid_size=512)
        out = tmp_path / "out"
        assert main(["correct", "td", "--config", str(path), "--out", str(out)]) == 0
        rows = read_csv(out / "correction_sweep.csv")
        assert len(rows) == 2
        assert float(rows[0]["rms_correction"]) > float(rows[1]["rms_correction"])


class TestValidityMap:
    def test_alternating_bands(self, tmp_path):
        out = tmp_path / "out"
        rc = main(
            ["validity-map", "--config", str(CONFIGS / "validity_map.json"), "--out", str(out)]
        )
        assert rc == 0
        rows = read_csv(out / "validity.csv")
        flags = [row["valid"] for row in rows]
        by_time = {float(r["loop_time"]): r["valid"] for r in rows}
        assert by_time[2.0] == "0"
        assert by_time[5.0] == "1"
        assert "0" in flags and "1" in flags  # both bands present

    def test_spectrum_and_contour_outputs(self, tmp_path):
        path = write_config(tmp_path)
        out = tmp_path / "out"
        assert main(["spectrum", "--config", str(path), "--out", str(out)]) == 0
        assert main(["contour", "--config", str(path), "--out", str(out)]) == 0
        spec_rows = read_csv(out / "spectrum.csv")
        first, last = spec_rows[0], spec_rows[-1]
        assert float(first["lambda_plus_re"]) == pytest.approx(
            -float(last["lambda_plus_re"]), abs=1e-9
        )
        branch = json.loads((out / "branch.json").read_text())
        assert branch["n_crossings"] == 1


class TestPlots:
    def test_probability_plot(self, tmp_path):
        path = write_config(tmp_path, schedule={"t0": 3.0})
        out = tmp_path / "out"
        assert main(["simulate", "--config", str(path), "--out", str(out)]) == 0
        svg = tmp_path / "plot.svg"
        rc = main(
            ["emit-plot", "--csv", str(out / "simulate.csv"), "--kind", "probability", "--out", str(svg)]
        )
        assert rc == 0
        assert svg.read_text().lstrip().startswith("<?xml")

    def test_column_mismatch_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("a,b\n1,2\n")
        rc = main(["emit-plot", "--csv", str(bad), "--kind", "probability", "--out", str(tmp_path / "x.svg")])
        assert rc == 2
        assert "columns" in capsys.readouterr().err


class TestOptomechMap:
    def test_schedules_csv(self, tmp_path):
        out = tmp_path / "out"
        rc = main(
            ["map-optomech", "--config", str(CONFIGS / "optomech_map.json"), "--out", str(out)]
        )
        assert rc == 0
        rows = read_csv(out / "optomech_schedules.csv")
        assert len(rows) == 257
        assert all(float(r["p_laser"]) >= 0.0 for r in rows)

    def test_missing_section_is_config_error(self, tmp_path):
        path = write_config(tmp_path)
        rc = main(["map-optomech", "--config", str(path), "--out", str(tmp_path / "o")])
        assert rc == 2


class TestEncircleCheck:
    def test_td_map_produces_grid(self, tmp_path):
        out = tmp_path / "out"
        rc = main(
            ["encircle-check", "--config", str(CONFIGS / "encircle_map.json"), "--out", str(out)]
        )
        assert rc == 0
        rows = read_csv(out / "encircle.csv")
        assert len(rows) == 4
        ok = [r for r in rows if r["status"] == "ok"]
        assert ok
        assert all(r["braid_cond1"] == "1" for r in ok)


class TestShippedConfigs:
    def test_short_loop_corrections(self, tmp_path):
        out = tmp_path / "out"
        rc = main(
            ["correct", "satd", "--config", str(CONFIGS / "short_loop_corrections.json"), "--out", str(out)]
        )
        assert rc == 0
        report = json.loads((out / "correction.json").read_text())
        assert report["satd_valid"]

    def test_quasi_unitary_window(self, tmp_path):
        out = tmp_path / "out"
        rc = main(
            ["simulate", "--config", str(CONFIGS / "quasi_unitary_window.json"), "--out", str(out)]
        )
        assert rc == 0
        rows = read_csv(out / "simulate.csv")
        # at the tuned loop time both modes return to themselves
        assert float(rows[-1]["P_mp"]) < 0.05
        assert float(rows[-1]["P_pm"]) < 0.05

    def test_radd_optimization(self, tmp_path):
        out = tmp_path / "out"
        rc = main(
            ["optimize-radd", "--config", str(CONFIGS / "radd_optimization.json"), "--out", str(out)]
        )
        assert rc == 0
        result = json.loads((out / "radd.json").read_text())
        assert result["rms_correction"] < result["rms_correction_satd"]
        assert (out / "protocol.csv").exists()

    def test_robustness_sweep(self, tmp_path):
        out = tmp_path / "out"
        rc = main(
            ["robustness", "--config", str(CONFIGS / "robustness_sweep.json"), "--out", str(out)]
        )
        assert rc == 0
        rows = read_csv(out / "robustness.csv")
        assert len(rows) == 4  # two loop times x two protocol kinds
        by_key = {(r["loop_time"], r["kind"]): float(r["error"]) for r in rows}
        assert by_key[("40.0", "td")] > by_key[("5.0", "td")]
