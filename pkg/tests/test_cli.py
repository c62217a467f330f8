import json
import math

import numpy as np
import pytest

from rcpsim import distributions as dist
from rcpsim.cli import (
    EXIT_INVALID,
    EXIT_IO,
    EXIT_NOT_CONVERGED,
    EXIT_OK,
    demo_degenerate_pair,
    demo_writer_reader,
    fit_command,
    main,
)
from rcpsim.measurement import ExperimentDesign, MeasurementRecord, write_record
from rcpsim.quantum_core import DensityMatrix, density_from_json
from rcpsim.rcps import degenerate_pair, spec_to_dict


def run(argv, capsys):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured


# report file -> keys holding serialized density matrices
DENSITY_KEYS = {
    "density.json": [("analytic",), ("monte_carlo",)],
    "evolve.json": [("initial",), ("evolved",)],
    "degenerate_pair.json": [("analytic", "density_a"), ("analytic", "density_b")],
    "writer_reader.json": [("monte_carlo_density",)],
    "from_rho.json": [("density",)],
}


@pytest.fixture
def spec_file(tmp_path):
    path = tmp_path / "pair_a.json"
    path.write_text(json.dumps(spec_to_dict(degenerate_pair()[0])))
    return path


class TestDegeneratePairDemo:
    def test_analytic_values(self, tmp_path):
        report = demo_degenerate_pair(tmp_path, shots=0)
        assert report["analytic"]["order2"] == pytest.approx([0.06625625, 0.19895], abs=1e-12)
        assert report["analytic"]["order1"] == pytest.approx([0.2525, 0.2525], abs=1e-12)
        assert report["analytic"]["equal"] == [True, False]
        assert report["matches_reference"]
        assert report["empirical"] is None
        on_disk = json.loads((tmp_path / "degenerate_pair.json").read_text())
        assert on_disk["analytic"]["order2"] == report["analytic"]["order2"]

    def test_cli_default_run(self, tmp_path, capsys):
        code, cap = run(["demo-degenerate-pair", "--out", str(tmp_path), "--realizations", "20000"], capsys)
        assert code == EXIT_OK
        report = json.loads((tmp_path / "degenerate_pair.json").read_text())
        emp = report["empirical"]
        for key, target in (("a", 0.06625625), ("b", 0.19895)):
            est = emp[key]["estimates"][1]
            assert abs(est["value"] - target) <= 4 * est["standard_error"]
        assert '"order2"' in cap.out

    def test_shots_zero_analytic_only(self, tmp_path, capsys):
        code, _ = run(["demo-degenerate-pair", "--out", str(tmp_path), "--shots", "0"], capsys)
        assert code == EXIT_OK
        assert json.loads((tmp_path / "degenerate_pair.json").read_text())["empirical"] is None

    def test_bit_identical(self, tmp_path, capsys):
        for name in ("a", "b"):
            args = ["demo-degenerate-pair", "--out", str(tmp_path / name), "--seed", "12", "--realizations", "5000"]
            assert run(args, capsys)[0] == EXIT_OK
        assert (tmp_path / "a" / "degenerate_pair.json").read_bytes() == (
            tmp_path / "b" / "degenerate_pair.json"
        ).read_bytes()

    def test_densities_revalidate(self, tmp_path):
        report = demo_degenerate_pair(tmp_path, shots=0)
        for key in ("density_a", "density_b"):
            rho = density_from_json(report["analytic"][key])
            np.testing.assert_allclose(rho.matrix, np.diag([0.2525, 0.7475]), atol=1e-12)


class TestWriterReaderDemo:
    def test_fixed_angle(self, tmp_path):
        design = ExperimentDesign(2000, 100, 4)
        report = demo_writer_reader(dist.Constant(math.pi / 3), dist.Uniform(-math.pi, math.pi), design, tmp_path)
        est = report["estimates"][0]
        assert abs(est["value"] - 0.75) <= 3 * est["standard_error"] + 3 * math.sqrt(0.75 * 0.25 / (2000 * 100))
        assert (tmp_path / "writer_reader_hist.csv").read_text().startswith("bin_lo,bin_hi,count")

    def test_zero_angle_all_plus(self, tmp_path):
        report = demo_writer_reader(dist.Constant(0.0), dist.Constant(0.0), ExperimentDesign(50, 20, 1), tmp_path)
        assert report["mean_frequency"] == 1.0
        assert report["mean_sz"] == 0.5

    def test_uniform_angle(self, tmp_path):
        report = demo_writer_reader(
            dist.Uniform(0, math.pi), dist.Uniform(-math.pi, math.pi), ExperimentDesign(20000, 20, 9), tmp_path
        )
        est = report["estimates"][0]
        assert abs(est["value"] - 0.5) <= 4 * est["standard_error"]

    def test_histogram_totals(self, tmp_path):
        demo_writer_reader(dist.Uniform(0, math.pi), dist.Constant(0.0), ExperimentDesign(300, 10, 2), tmp_path, bins=7)
        rows = (tmp_path / "writer_reader_hist.csv").read_text().strip().splitlines()[1:]
        assert len(rows) == 7
        assert sum(int(r.split(",")[2]) for r in rows) == 300

    def test_cli_inline_laws(self, tmp_path, capsys):
        args = [
            "demo-writer-reader",
            "--out",
            str(tmp_path),
            "--theta-law",
            '{"type": "constant", "value": 0.0}',
            "--realizations",
            "10",
            "--shots",
            "5",
        ]
        assert run(args, capsys)[0] == EXIT_OK
        report = json.loads((tmp_path / "writer_reader.json").read_text())
        assert report["mean_frequency"] == 1.0
        DensityMatrix(density_from_json(report["monte_carlo_density"]).matrix)


class TestFit:
    def test_simulated(self, tmp_path):
        sim = dict(eta=0.6, sigma=0.15, realizations=20000, shots=200, seed=1)
        report, code = fit_command(simulate=sim, out=tmp_path)
        assert code == EXIT_OK
        assert abs(report["fit"]["eta_hat"] - 0.6) <= 0.02
        assert abs(report["fit"]["sigma_hat"] - 0.15) <= 0.02
        assert json.loads((tmp_path / "fit.json").read_text())["fit"] == report["fit"]

    def test_all_success_record_flagged(self, tmp_path, capsys):
        path = tmp_path / "ones.csv"
        write_record(MeasurementRecord(np.full(50, 8), 8, "", 0), path)
        code, _ = run(["fit", "--record", str(path), "--out", str(tmp_path)], capsys)
        report = json.loads((tmp_path / "fit.json").read_text())
        assert report["fit"]["at_boundary"]
        assert code == (EXIT_OK if report["fit"]["converged"] else EXIT_NOT_CONVERGED)
        assert code == EXIT_NOT_CONVERGED

    def test_support_violation(self, tmp_path, capsys, caplog):
        code, _ = run(["fit", "--moments", "0.3,0.35", "--out", str(tmp_path)], capsys)
        assert code == EXIT_INVALID
        assert "support bound violated" in caplog.text
        assert "support bound violated" in json.loads((tmp_path / "fit.json").read_text())["error"]

    def test_jensen_violation_from_record(self, tmp_path, capsys, caplog):
        # one success in two shots every time: m1 = 0.5, m2 = 0
        path = tmp_path / "half.csv"
        write_record(MeasurementRecord(np.ones(10, dtype=int), 2, "", 0), path)
        code, _ = run(["fit", "--record", str(path), "--out", str(tmp_path)], capsys)
        assert code == EXIT_INVALID
        assert "Jensen" in caplog.text

    def test_bad_moment_list(self, tmp_path, capsys):
        assert run(["fit", "--moments", "0.3", "--out", str(tmp_path)], capsys)[0] == EXIT_INVALID


class TestCommands:
    def test_experiment_and_record(self, tmp_path, spec_file, capsys):
        args = [
            "experiment",
            "--spec",
            str(spec_file),
            "--out",
            str(tmp_path),
            "--realizations",
            "3000",
            "--shots",
            "10",
        ]
        assert run(args, capsys)[0] == EXIT_OK
        assert (tmp_path / "record.csv").exists() and (tmp_path / "record.json").exists()
        moments = json.loads((tmp_path / "moments.json").read_text())["estimates"]
        assert [m["order"] for m in moments] == [1, 2]

    def test_experiment_worker_invariant(self, tmp_path, spec_file, capsys):
        for w in ("1", "3"):
            args = [
                "experiment",
                "--spec",
                str(spec_file),
                "--out",
                str(tmp_path / w),
                "--realizations",
                "9000",
                "--workers",
                w,
            ]
            assert run(args, capsys)[0] == EXIT_OK
        assert (tmp_path / "1" / "record.csv").read_bytes() == (tmp_path / "3" / "record.csv").read_bytes()

    def test_density(self, tmp_path, spec_file, capsys):
        args = ["density", "--spec", str(spec_file), "--out", str(tmp_path), "--realizations", "2000"]
        assert run(args, capsys)[0] == EXIT_OK
        report = json.loads((tmp_path / "density.json").read_text())
        np.testing.assert_allclose(density_from_json(report["analytic"]).matrix, np.diag([0.2525, 0.7475]), atol=1e-15)

    def test_density_analytic_only_unsupported(self, tmp_path, capsys):
        spec = {"type": "real_remainder", "laws": [dist.law_to_dict(dist.Uniform(-0.3, 0.3))] * 2}
        path = tmp_path / "rr.json"
        path.write_text(json.dumps(spec))
        code, _ = run(["density", "--spec", str(path), "--out", str(tmp_path), "--analytic-only"], capsys)
        assert code == EXIT_INVALID

    def test_sample(self, tmp_path, spec_file, capsys):
        assert run(["sample", "--spec", str(spec_file), "--out", str(tmp_path), "--realizations", "7"], capsys)[0] == 0
        amps = json.loads((tmp_path / "samples.json").read_text())["amplitudes"]
        assert len(amps) == 7

    def test_evolve(self, tmp_path, spec_file, capsys):
        args = [
            "evolve",
            "--spec",
            str(spec_file),
            "--out",
            str(tmp_path),
            "--theta",
            str(math.pi / 2),
            "--realizations",
            "10000",
        ]
        assert run(args, capsys)[0] == EXIT_OK
        report = json.loads((tmp_path / "evolve.json").read_text())
        assert report["lvn_residual"] <= 1e-6
        assert report["ensemble_distance"] <= 0.05

    @pytest.mark.parametrize("family", ["gaussian", "laplace"])
    def test_from_rho(self, tmp_path, family, capsys):
        args = ["from-rho", "--eigenvalues", "0.3,0.7", "--family", family, "--out", str(tmp_path)]
        assert run(args, capsys)[0] == EXIT_OK
        report = json.loads((tmp_path / "from_rho.json").read_text())
        np.testing.assert_allclose(density_from_json(report["density"]).matrix, np.diag([0.3, 0.7]), atol=1e-8)

    def test_from_rho_infeasible(self, tmp_path, capsys):
        args = ["from-rho", "--eigenvalues", "0.5,0.5", "--family", "gaussian", "--out", str(tmp_path)]
        assert run(args, capsys)[0] == EXIT_INVALID

    def test_from_rho_d3_monte_carlo(self, tmp_path, capsys):
        args = ["from-rho", "--eigenvalues", "0.05,0.05,0.9", "--out", str(tmp_path), "--realizations", "5000"]
        assert run(args, capsys)[0] == EXIT_OK
        assert json.loads((tmp_path / "from_rho.json").read_text())["density_kind"] == "monte_carlo"

    def test_emitted_densities_revalidate(self, tmp_path, spec_file, capsys):
        run(["density", "--spec", str(spec_file), "--out", str(tmp_path / "d"), "--realizations", "500"], capsys)
        run(["evolve", "--spec", str(spec_file), "--out", str(tmp_path / "e"), "--realizations", "500"], capsys)
        run(
            ["from-rho", "--eigenvalues", "0.05,0.05,0.9", "--out", str(tmp_path / "r"), "--realizations", "500"],
            capsys,
        )
        demo_degenerate_pair(tmp_path / "p", shots=0)
        demo_writer_reader(dist.Uniform(0, 1), dist.Constant(0.0), ExperimentDesign(100, 5, 0), tmp_path / "w")
        found = 0
        for path in tmp_path.rglob("*.json"):
            report = json.loads(path.read_text())
            for keys in DENSITY_KEYS.get(path.name, []):
                node = report
                for k in keys:
                    node = node[k]
                DensityMatrix(density_from_json(node).matrix)
                found += 1
        assert found == 8


class TestConfigAndErrors:
    def test_config_fills_and_flags_win(self, tmp_path, spec_file, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"spec": str(spec_file), "realizations": 40, "shots": 3, "out": str(tmp_path / "c")}))
        assert run(["--config", str(cfg), "experiment"], capsys)[0] == EXIT_OK
        assert json.loads((tmp_path / "c" / "record.json").read_text())["m"] == 40
        assert run(["--config", str(cfg), "experiment", "--realizations", "25"], capsys)[0] == EXIT_OK
        meta = json.loads((tmp_path / "c" / "record.json").read_text())
        assert (meta["m"], meta["n"]) == (25, 3)

    def test_missing_spec_file(self, tmp_path, capsys, caplog):
        code, _ = run(["density", "--spec", str(tmp_path / "nope.json"), "--out", str(tmp_path)], capsys)
        assert code == EXIT_IO
        assert "cannot read" in caplog.text

    def test_missing_record(self, tmp_path, capsys):
        assert run(["fit", "--record", str(tmp_path / "nope.csv"), "--out", str(tmp_path)], capsys)[0] == EXIT_IO

    def test_unwritable_output(self, tmp_path, spec_file, capsys):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        code, _ = run(["density", "--spec", str(spec_file), "--out", str(blocker / "sub")], capsys)
        assert code == EXIT_IO

    def test_invalid_spec(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"type": "two_level_polar", "alpha_law": {"type": "uniform", "lo": 0, "hi": 3}}))
        assert run(["density", "--spec", str(path), "--out", str(tmp_path)], capsys)[0] == EXIT_INVALID

    def test_spec_required(self, tmp_path, capsys):
        assert run(["density", "--out", str(tmp_path)], capsys)[0] == EXIT_INVALID
