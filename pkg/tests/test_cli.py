"""CLI: spec files, exit codes, output formats, determinism."""

import json
import math
import os

import numpy as np
import pytest

from ratecost.cli import EXIT_INFEASIBLE, EXIT_OK, EXIT_SPEC, main
from ratecost.instances import drive_to_zero
from ratecost.specio import SpecFileError, load_spec, parse_spec, spec_document

from oracles import binary_entropy


def write_spec(tmp_path, doc, name="spec.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def bernoulli_doc(p=0.2, horizon=2):
    return {
        "name": "bernoulli-source",
        "horizon": horizon,
        "states": 2,
        "actions": 2,
        "mode": "source",
        "kernel": {
            "mode": "markov",
            "initial": [1.0 - p, p],
            "transition": [[1.0 - p, p], [1.0 - p, p]],
        },
        "cost": [[0.0, 1.0], [1.0, 0.0]],
    }


def controlled_doc():
    return spec_document(drive_to_zero(2), name="drive-to-zero")


class TestSpecIO:
    def test_roundtrip_document(self):
        spec = load_spec_from_doc(controlled_doc())
        assert spec.horizon == 2
        assert spec.num_states == spec.num_actions == 2

    def test_source_mode_broadcasts_transition(self):
        spec = parse_spec(bernoulli_doc())
        assert spec.source_mode
        k2 = spec.stage_kernel(2).reshape(-1, 2, 2)
        np.testing.assert_allclose(k2[:, 0, :], k2[:, 1, :])

    def test_malformed_json_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(SpecFileError) as err:
            load_spec(str(path))
        assert "line" in str(err.value)

    def test_schema_violation_names_key(self):
        doc = bernoulli_doc()
        doc["horizon"] = 0
        with pytest.raises(SpecFileError) as err:
            parse_spec(doc)
        assert "horizon" in str(err.value)

    def test_mild_denormalization_warns_and_renormalizes(self):
        doc = bernoulli_doc()
        doc["kernel"]["initial"] = [0.8 + 2e-7, 0.2]
        with pytest.warns(UserWarning, match="renormalizing"):
            spec = parse_spec(doc)
        assert spec.stage_kernel(1).sum() == pytest.approx(1.0, abs=1e-12)

    def test_bad_normalization_rejected(self):
        doc = bernoulli_doc()
        doc["kernel"]["initial"] = [0.7, 0.2]
        with pytest.raises(SpecFileError, match="initial"):
            parse_spec(doc)

    def test_source_mode_with_controlled_kernel_rejected(self):
        doc = bernoulli_doc()
        doc["kernel"]["transition"] = [
            [[0.8, 0.2], [0.5, 0.5]],
            [[0.8, 0.2], [0.5, 0.5]],
        ]
        with pytest.raises(SpecFileError, match="action-independent"):
            parse_spec(doc)

    def test_full_history_mode(self):
        doc = {
            "horizon": 2,
            "states": 2,
            "actions": 2,
            "kernel": {
                "mode": "full-history",
                "stages": [
                    [[0.5, 0.5]],
                    [[1.0, 0.0]] * 4,
                ],
            },
            "cost": [[0.0, 1.0], [1.0, 0.0]],
        }
        spec = parse_spec(doc)
        assert spec.stage_kernel(2).shape == (4, 2)


def load_spec_from_doc(doc):
    return parse_spec(doc)


class TestSolveCommand:
    def test_source_curve_matches_analytic(self, tmp_path):
        spec_path = write_spec(tmp_path, bernoulli_doc(0.2))
        out = tmp_path / "out"
        code = main(["rd", "--spec", spec_path, "--out", str(out),
                     "--d-grid", "0.05,0.1,0.15", "--restarts", "4",
                     "--seed", "0"])
        assert code == EXIT_OK
        doc = json.loads((out / "rd.json").read_text())
        for entry in doc["requested"]:
            want = binary_entropy(0.2) - binary_entropy(entry["D"])
            assert entry["rate_bits"] == pytest.approx(want, abs=2e-3)
        csv = (out / "rd_curve.csv").read_text().splitlines()
        assert csv[0] == "D,rate_bits,mu"

    def test_zero_cost_spec_curve_identically_zero(self, tmp_path):
        doc = bernoulli_doc(0.3)
        doc["cost"] = [[0.0, 0.0], [0.0, 0.0]]
        spec_path = write_spec(tmp_path, doc)
        out = tmp_path / "out"
        code = main(["solve", "--spec", spec_path, "--out", str(out),
                     "--d-grid", "0.0,0.5", "--restarts", "2"])
        assert code == EXIT_OK
        doc = json.loads((out / "solve.json").read_text())
        assert all(abs(e["rate_bits"]) <= 1e-9 for e in doc["requested"])

    def test_malformed_spec_exit_code(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"horizon": "two"}')
        assert main(["solve", "--spec", str(path)]) == EXIT_SPEC

    def test_rd_rejects_controlled_spec(self, tmp_path):
        spec_path = write_spec(tmp_path, controlled_doc())
        assert main(["rd", "--spec", spec_path, "--out", str(tmp_path)]) == EXIT_SPEC

    def test_infeasible_budget_exit_code(self, tmp_path):
        spec_path = write_spec(tmp_path, controlled_doc())
        code = main(["solve", "--spec", spec_path, "--out", str(tmp_path),
                     "--D", "0.01", "--restarts", "2"])
        assert code == EXIT_INFEASIBLE


class TestSynthCommand:
    def run_synth(self, tmp_path, spec_path, tag, *extra):
        out = tmp_path / tag
        argv = ["synth", "--spec", spec_path, "--D", "0.4", "--out", str(out),
                "--trials", "400", "--cloud-size", "40", "--proposals", "256",
                "--restarts", "4", "--seed", "0", *extra]
        code = main(argv)
        return code, out

    def test_pipeline_passes_and_writes_bundle(self, tmp_path):
        spec_path = write_spec(tmp_path, controlled_doc())
        code, out = self.run_synth(tmp_path, spec_path, "a")
        assert code == EXIT_OK
        doc = json.loads((out / "result_bundle.json").read_text())
        assert doc["sandwich"]["passed"]
        assert doc["exact"]["cost"] <= 0.4
        f = doc["bounds"]["info_rate_bits"]
        want = f + math.log2(f + 3.4) + 2.0 + 0.5 + doc["gamma"]
        assert doc["bounds"]["rate_budget_bits"] == pytest.approx(want, abs=1e-12)

    def test_byte_identical_across_runs(self, tmp_path):
        spec_path = write_spec(tmp_path, controlled_doc())
        _, out_a = self.run_synth(tmp_path, spec_path, "a")
        _, out_b = self.run_synth(tmp_path, spec_path, "b")
        assert (out_a / "result_bundle.json").read_bytes() == \
            (out_b / "result_bundle.json").read_bytes()

    def test_trials_csv_written(self, tmp_path):
        spec_path = write_spec(tmp_path, controlled_doc())
        outdir = tmp_path / "d"
        code = main(["synth", "--spec", spec_path, "--D", "0.4", "--out",
                     str(outdir), "--trials", "50", "--cloud-size", "20",
                     "--proposals", "128", "--restarts", "2", "--trials-csv"])
        assert code == EXIT_OK
        lines = (outdir / "trials.csv").read_text().splitlines()
        assert lines[0] == "trial,bits_per_stage,cost_per_stage"
        assert len(lines) == 51

    def test_infeasible_budget_exit(self, tmp_path):
        spec_path = write_spec(tmp_path, controlled_doc())
        code = main(["synth", "--spec", spec_path, "--D", "0.05",
                     "--out", str(tmp_path), "--restarts", "2"])
        assert code == EXIT_INFEASIBLE


class TestLqgCommand:
    def test_worked_point_row(self, tmp_path):
        out = tmp_path / "lqg"
        code = main(["lqg", "--a", "2", "--b", "1", "--q", "1", "--r", "0",
                     "--sigma2", "1", "--d-grid", "2.0", "--out", str(out)])
        assert code == EXIT_OK
        lines = (out / "lqg_curve.csv").read_text().splitlines()
        assert lines[0].startswith("# s=1.0, m=1.0, D_min=1.0")
        d, rate = lines[2].split(",")
        assert float(d) == 2.0
        assert float(rate) == pytest.approx(1.5, abs=1e-12)

    def test_memoryless_plant_zero_column(self, tmp_path):
        out = tmp_path / "lqg0"
        code = main(["lqg", "--a", "0", "--b", "1", "--q", "1", "--r", "0.5",
                     "--sigma2", "1", "--d-grid", "1.5,2.0,3.0", "--out", str(out)])
        assert code == EXIT_OK
        lines = (out / "lqg_curve.csv").read_text().splitlines()[2:]
        assert all(float(row.split(",")[1]) == 0.0 for row in lines)

    def test_grid_at_floor_rejected_names_floor(self, tmp_path, capsys):
        code = main(["lqg", "--a", "2", "--b", "1", "--q", "1", "--r", "0",
                     "--sigma2", "1", "--d-grid", "2.0,1.0", "--out", str(tmp_path)])
        assert code == EXIT_SPEC
        err = capsys.readouterr().err
        assert "D_min" in err or "floor" in err


class TestEnvMirrors:
    def test_env_provides_defaults(self, tmp_path, monkeypatch):
        spec_path = write_spec(tmp_path, bernoulli_doc())
        monkeypatch.setenv("RATECOST_SPEC", spec_path)
        monkeypatch.setenv("RATECOST_OUT", str(tmp_path / "envout"))
        monkeypatch.setenv("RATECOST_D", "0.1")
        monkeypatch.setenv("RATECOST_RESTARTS", "2")
        # parser defaults are read at build time, so reimport the builder
        from ratecost.cli import build_parser

        parser = build_parser()
        args = parser.parse_args(["solve"])
        assert args.spec == spec_path
        assert args.budget == 0.1
        assert args.restarts == 2
