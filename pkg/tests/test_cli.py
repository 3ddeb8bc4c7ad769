import json

import pytest
from click.testing import CliRunner

from subspace_audit.cli import main

SCHEME_CFG = """\
feature.score = continuous:0:10:8
feature.age = continuous:18:80:5
"""

SWEEP_CFG = SCHEME_CFG + """\
protected = SEX
subgroup = Female
eps = 0.2,0.4
samples = 5,20
trials = 300
seed = 314159
"""


@pytest.fixture()
def workspace(tmp_path):
    runner = CliRunner()
    (tmp_path / "scheme.cfg").write_text(SCHEME_CFG)
    (tmp_path / "sweep.cfg").write_text(SWEEP_CFG)
    result = runner.invoke(main, ["synth", "--rows", "4000", "--seed", "21",
                                  "--out", str(tmp_path / "data.csv")])
    assert result.exit_code == 0, result.output
    return runner, tmp_path


def run(runner, args):
    return runner.invoke(main, [str(a) for a in args])


class TestBin:
    def test_writes_histogram_and_manifest(self, workspace):
        runner, root = workspace
        result = run(runner, ["bin", "--data", root / "data.csv",
                              "--config", root / "scheme.cfg",
                              "--filter", "SEX=Female",
                              "--out", root / "fem.hist"])
        assert result.exit_code == 0, result.output
        assert (root / "fem.hist").exists()
        manifest = json.loads((root / "fem.hist.manifest.json").read_text())
        assert manifest["command"] == "bin"
        assert set(manifest["inputs"]) == {"data.csv", "scheme.cfg"}
        assert all(v.startswith("sha256:") for v in manifest["inputs"].values())

    def test_missing_column_exit_2_names_column(self, workspace):
        runner, root = workspace
        (root / "bad.cfg").write_text("feature.income = continuous:0:10:4\n")
        result = run(runner, ["bin", "--data", root / "data.csv",
                              "--config", root / "bad.cfg",
                              "--out", root / "x.hist"])
        assert result.exit_code == 2
        assert "income" in result.output

    def test_rerun_is_byte_identical(self, workspace):
        runner, root = workspace
        args = ["bin", "--data", root / "data.csv", "--config", root / "scheme.cfg",
                "--out", root / "a.hist"]
        assert run(runner, args).exit_code == 0
        first = (root / "a.hist").read_bytes()
        assert run(runner, args).exit_code == 0
        assert (root / "a.hist").read_bytes() == first

    def test_complement_filter(self, workspace):
        runner, root = workspace
        for spec, name in (("SEX=Female", "f.hist"), ("SEX!=Female", "m.hist"), (None, "all.hist")):
            args = ["bin", "--data", root / "data.csv", "--config", root / "scheme.cfg",
                    "--out", root / name]
            if spec:
                args[5:5] = ["--filter", spec]
            assert run(runner, args).exit_code == 0

        def total(name):
            for line in (root / name).read_text().splitlines():
                if line.startswith("# total:"):
                    return int(line.split(":")[1])
        assert total("f.hist") + total("m.hist") == total("all.hist")


class TestQuery:
    @pytest.fixture()
    def hists(self, workspace):
        runner, root = workspace
        for flt, name in (("SEX=Female", "fem.hist"), (None, "all.hist")):
            args = ["bin", "--data", root / "data.csv", "--config", root / "scheme.cfg",
                    "--out", root / name]
            if flt:
                args += ["--filter", flt]
            assert run(runner, args).exit_code == 0
        return runner, root

    def test_identical_files_inside_exit_0(self, hists):
        runner, root = hists
        result = run(runner, ["query", "--reference", root / "all.hist",
                              "--test", root / "all.hist", "--delta", "0.1"])
        assert result.exit_code == 0
        assert result.output.startswith("TRUE,")

    def test_outside_exit_1_with_witness(self, hists):
        runner, root = hists
        result = run(runner, ["query", "--reference", root / "all.hist",
                              "--test", root / "fem.hist", "--delta", "1e-6"])
        assert result.exit_code == 1
        fields = result.output.strip().splitlines()[-1].split(",")
        assert fields[0] == "FALSE" and fields[4] != ""

    def test_subsampled_deterministic_output(self, hists):
        runner, root = hists
        args = ["query", "--reference", root / "all.hist", "--test", root / "fem.hist",
                "--delta", "0.001", "--samples", "10", "--seed", "99"]
        first = run(runner, args)
        second = run(runner, args)
        assert first.output == second.output
        assert first.exit_code == second.exit_code

    def test_subsampled_false_implies_exact_false(self, hists):
        runner, root = hists
        exact = run(runner, ["query", "--reference", root / "all.hist",
                             "--test", root / "fem.hist", "--delta", "1e-5"])
        for seed in range(5):
            sub = run(runner, ["query", "--reference", root / "all.hist",
                               "--test", root / "fem.hist", "--delta", "1e-5",
                               "--samples", "30", "--seed", seed])
            if sub.exit_code == 1:
                assert exact.exit_code == 1

    def test_incompatible_schemes_exit_3(self, workspace):
        runner, root = workspace
        (root / "other.cfg").write_text("feature.score = continuous:0:10:8\n")
        for cfg, name in (("scheme.cfg", "a.hist"), ("other.cfg", "b.hist")):
            assert run(runner, ["bin", "--data", root / "data.csv",
                                "--config", root / cfg, "--out", root / name]).exit_code == 0
        result = run(runner, ["query", "--reference", root / "a.hist",
                              "--test", root / "b.hist", "--delta", "0.1"])
        assert result.exit_code == 3


class TestSampleSize:
    def test_example_row(self):
        # d = vc_dimension_bound(1) = 7, s = ceil(112 * ln 112) = 529
        runner = CliRunner()
        result = run(runner, ["sample-size", "--eps", "0.5", "--delta", "0.5",
                              "--n-features", "1"])
        assert result.exit_code == 0
        assert result.output.strip() == "7,529"

    def test_delta_monotonicity_across_invocations(self):
        runner = CliRunner()
        sizes = []
        for delta in ("0.2", "0.1", "0.01"):
            out = run(runner, ["sample-size", "--eps", "0.1", "--delta", delta,
                               "--n-features", "2"]).output
            sizes.append(int(out.strip().split(",")[1]))
        assert sizes == sorted(sizes)

    def test_cap_marker_with_total_bins(self):
        runner = CliRunner()
        result = run(runner, ["sample-size", "--eps", "0.05", "--delta", "0.05",
                              "--n-features", "2", "--total-bins", "100"])
        fields = result.output.strip().split(",")
        assert fields[1] == "100" and fields[-1] == "capped"

    def test_bad_parameters_exit_2(self):
        runner = CliRunner()
        assert run(runner, ["sample-size", "--eps", "1.5", "--delta", "0.1",
                            "--n-features", "1"]).exit_code == 2


class TestSweep:
    def test_sweep_writes_csv_and_manifest(self, workspace):
        runner, root = workspace
        result = run(runner, ["sweep", "--config", root / "sweep.cfg",
                              "--data", root / "data.csv", "--out", root / "out.csv"])
        assert result.exit_code == 0, result.output
        lines = (root / "out.csv").read_text().strip().splitlines()
        assert lines[0] == "eps,delta,s,empirical_error,analytic_error,stderr,trials"
        assert len(lines) == 1 + 2 * 2
        manifest = json.loads((root / "out.csv.manifest.json").read_text())
        assert manifest["seed"] == 314159

    def test_rerun_identical(self, workspace):
        runner, root = workspace
        args = ["sweep", "--config", root / "sweep.cfg", "--data", root / "data.csv",
                "--out", root / "out.csv"]
        assert run(runner, args).exit_code == 0
        first = (root / "out.csv").read_bytes()
        assert run(runner, args).exit_code == 0
        assert (root / "out.csv").read_bytes() == first

    def test_seed_flag_overrides_config(self, workspace):
        runner, root = workspace
        args = ["sweep", "--config", root / "sweep.cfg", "--data", root / "data.csv",
                "--out", root / "out.csv"]
        assert run(runner, args).exit_code == 0
        base = (root / "out.csv").read_bytes()
        assert run(runner, args + ["--seed", "777"]).exit_code == 0
        assert (root / "out.csv").read_bytes() != base

    def test_config_error_names_offending_key(self, workspace):
        runner, root = workspace
        (root / "broken.cfg").write_text(SCHEME_CFG + "protected = SEX\nsubgroup = Female\n"
                                         "eps = 0.2\nsamples = nope\ntrials = 10\nseed = 1\n")
        result = run(runner, ["sweep", "--config", root / "broken.cfg",
                              "--data", root / "data.csv", "--out", root / "o.csv"])
        assert result.exit_code == 2
        assert "samples" in result.output

    def test_baseline_writes_second_csv(self, workspace):
        runner, root = workspace
        cfg = SWEEP_CFG + "baseline = wasserstein\np = 2\nthreshold_factor = 1.25\nbaseline_trials = 10\n"
        (root / "wb.cfg").write_text(cfg)
        result = run(runner, ["sweep", "--config", root / "wb.cfg",
                              "--data", root / "data.csv", "--out", root / "wb.csv"])
        assert result.exit_code == 0, result.output
        baseline = (root / "wb.csv.wasserstein.csv").read_text().strip().splitlines()
        assert baseline[0] == "eps,delta,s,empirical_error,analytic_error,stderr,trials"
        assert len(baseline) == 1 + 2


class TestDistance:
    @pytest.fixture()
    def hists(self, workspace):
        runner, root = workspace
        for flt, name in (("SEX=Female", "fem.hist"), (None, "all.hist")):
            args = ["bin", "--data", root / "data.csv", "--config", root / "scheme.cfg",
                    "--out", root / name]
            if flt:
                args += ["--filter", flt]
            assert run(runner, args).exit_code == 0
        return runner, root

    def test_prints_distance_and_residual(self, hists):
        runner, root = hists
        result = run(runner, ["distance", "--a", root / "all.hist",
                              "--b", root / "fem.hist", "--p", "2"])
        assert result.exit_code == 0, result.output
        distance, residual = (float(x) for x in result.output.strip().split(","))
        assert distance > 0
        assert residual <= 1e-9

    def test_identical_files_zero(self, hists):
        runner, root = hists
        result = run(runner, ["distance", "--a", root / "all.hist",
                              "--b", root / "all.hist"])
        distance = float(result.output.strip().split(",")[0])
        assert distance == pytest.approx(0.0, abs=1e-9)

    def test_entropic_method(self, hists):
        runner, root = hists
        exact = run(runner, ["distance", "--a", root / "all.hist", "--b", root / "fem.hist"])
        approx = run(runner, ["distance", "--a", root / "all.hist", "--b", root / "fem.hist",
                              "--method", "entropic", "--reg", "0.0001"])
        assert approx.exit_code == 0, approx.output
        d_exact = float(exact.output.strip().split(",")[0])
        d_approx = float(approx.output.strip().split(",")[0])
        assert d_approx == pytest.approx(d_exact, rel=0.1)

    def test_incompatible_schemes_exit_3(self, hists):
        runner, root = hists
        (root / "other.cfg").write_text("feature.score = continuous:0:10:8\n")
        assert run(runner, ["bin", "--data", root / "data.csv",
                            "--config", root / "other.cfg",
                            "--out", root / "c.hist"]).exit_code == 0
        result = run(runner, ["distance", "--a", root / "all.hist", "--b", root / "c.hist"])
        assert result.exit_code == 3


class TestSynth:
    def test_deterministic(self, tmp_path):
        runner = CliRunner()
        for name in ("a.csv", "b.csv"):
            assert run(runner, ["synth", "--rows", "500", "--seed", "5",
                                "--out", tmp_path / name]).exit_code == 0
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
