import numpy as np
import pytest

from ddopt import cli, signals, sim


class TestSignalGrammar:
    def test_plain_sinusoid(self):
        sig = cli.parse_signal("sin(5t-2)")
        comp = sig.components[0]
        assert (comp.amplitude, comp.omega, comp.phase, comp.kind) == (1.0, 5.0, -2.0, "sin")

    def test_amplitude_and_star(self):
        comp = cli.parse_signal("2*cos(3*t+1)").components[0]
        assert (comp.amplitude, comp.omega, comp.phase, comp.kind) == (2.0, 3.0, 1.0, "cos")

    def test_cos_squared(self):
        comp = cli.parse_signal("cos2(5t-2)").components[0]
        assert comp.kind == "cos2"

    def test_unit_frequency(self):
        comp = cli.parse_signal("sin(t)").components[0]
        assert (comp.omega, comp.phase) == (1.0, 0.0)

    def test_polynomial_keeps_its_commas(self):
        sig = cli.parse_signal("poly:1,2,0.5")
        assert sig.dim == 1
        assert sig.components[0].coefficients == (1.0, 2.0, 0.5)

    def test_mixed_components(self):
        sig = cli.parse_signal("cos(5t-2),poly:0,1,sin(t)")
        assert sig.dim == 3
        assert isinstance(sig.components[0], signals.Sinusoid)
        assert sig.components[1].coefficients == (0.0, 1.0)
        assert isinstance(sig.components[2], signals.Sinusoid)

    def test_whitespace_insensitive(self):
        sig = cli.parse_signal(" sin( 5 t - 2 ) , cos2(5t-2) ")
        assert sig.dim == 2

    def test_benchmark_default_parses(self):
        sig = cli.parse_signal("cos(5*t-2),sin(5*t-2),cos2(5*t-2)")
        ref = signals.benchmark_parameter_path()
        for t in (0.0, 0.7):
            assert np.allclose(sig.eval(t, 1), ref.eval(t, 1))

    @pytest.mark.parametrize("bad", ["tan(3t)", "sin(5x-2)", "poly:abc", "sin(5t*2)",
                                     "", "sin(5t-2),,cos(t)", "2**sin(t)"])
    def test_errors_name_the_token(self, bad):
        with pytest.raises(cli.SpecError):
            cli.parse_signal(bad)


class TestConfigFile:
    def test_precedence_flags_over_config_over_defaults(self, tmp_path, capsys):
        config = tmp_path / "run.cfg"
        config.write_text("sigma = 7\ntf = 2\nh = 1e-2\n# comment\n")
        out = tmp_path / "out"
        rc = cli.main(["estimate", "--config", str(config), "--sigma", "9",
                       "--out", str(out)])
        assert rc == 0
        printed = capsys.readouterr().out
        # CLI sigma=9 beat the config's 7: oracle is 25/sqrt(25+81) = 2.42821
        assert "2.42821" in printed
        # config tf=2 applied: trajectory spans [0, 2]
        traj = sim.Trajectory.from_csv(out / "trajectory.csv")
        assert traj.t[-1] == pytest.approx(2.0)

    def test_unknown_key_rejected(self, tmp_path):
        config = tmp_path / "run.cfg"
        config.write_text("sigmah = 7\n")
        rc = cli.main(["estimate", "--config", str(config), "--out", str(tmp_path / "o")])
        assert rc == 2

    def test_malformed_line_rejected(self, tmp_path):
        config = tmp_path / "run.cfg"
        config.write_text("sigma 7\n")
        assert cli.main(["estimate", "--config", str(config)]) == 2


class TestEstimateCommand:
    def test_writes_outputs_and_prints_oracle(self, tmp_path, capsys):
        out = tmp_path / "run"
        rc = cli.main(["estimate", "--sigma", "5", "--tf", "2", "--out", str(out)])
        assert rc == 0
        assert (out / "trajectory.csv").exists()
        assert (out / "estimate.svg").exists()
        printed = capsys.readouterr().out
        assert "analytic oracle" in printed
        svg = (out / "estimate.svg").read_text()
        assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
        assert svg.count("<polyline") == 2  # true derivative + estimate

    def test_csv_roundtrip(self, tmp_path):
        out = tmp_path / "run"
        assert cli.main(["estimate", "--tf", "1", "--h", "1e-2", "--out", str(out)]) == 0
        traj = sim.Trajectory.from_csv(out / "trajectory.csv")
        assert "thetahat_0" in traj.columns
        assert len(traj) == 101

    def test_noisy_rerun_is_byte_identical(self, tmp_path):
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        args = ["estimate", "--noise-var", "0.01", "--seed", "42", "--sigma", "20",
                "--tf", "2"]
        assert cli.main(args + ["--out", str(out_a)]) == 0
        assert cli.main(args + ["--out", str(out_b)]) == 0
        assert (out_a / "trajectory.csv").read_bytes() == (out_b / "trajectory.csv").read_bytes()
        assert (out_a / "estimate.svg").read_bytes() == (out_b / "estimate.svg").read_bytes()

    @pytest.mark.parametrize("flags", [["--k", "0"], ["--sigma", "-3"], ["--h", "0"],
                                       ["--tf", "-1"], ["--signal", "tan(t)"],
                                       ["--noise-var", "-0.5"], ["--mode", "sorcery"],
                                       ["--cost", "cubic"], ["--seed", "-1"]])
    def test_invalid_spec_exits_two(self, tmp_path, flags):
        assert cli.main(["estimate", "--out", str(tmp_path / "x")] + flags) == 2

    def test_unstable_gain_step_combination_exits_one(self, tmp_path):
        # sigma*h far past the stability limit: warned, then aborted cleanly.
        with pytest.warns(UserWarning, match="sigma"):
            rc = cli.main(["estimate", "--sigma", "1e6", "--tf", "1",
                           "--out", str(tmp_path / "x")])
        assert rc == 1


class TestOptimizeCommand:
    def test_default_modes_write_three_runs(self, tmp_path, capsys):
        out = tmp_path / "opt"
        rc = cli.main(["optimize", "--tf", "1", "--h", "1e-2", "--out", str(out)])
        assert rc == 0
        assert (out / "trajectory_ideal.csv").exists()
        assert (out / "trajectory_estimated-s5.csv").exists()
        assert (out / "trajectory_estimated-s20.csv").exists()
        assert (out / "loss.svg").exists()
        printed = capsys.readouterr().out
        assert printed.count("final-window mean loss") == 3

    def test_none_mode_included(self, tmp_path):
        out = tmp_path / "opt"
        rc = cli.main(["optimize", "--mode", "none,ideal", "--tf", "1", "--h", "1e-2",
                       "--out", str(out)])
        assert rc == 0
        assert (out / "trajectory_none.csv").exists()
        assert (out / "trajectory_ideal.csv").exists()

    def test_logcosh_cost_accepted(self, tmp_path):
        out = tmp_path / "opt"
        rc = cli.main(["optimize", "--cost", "logcosh", "--mode", "ideal",
                       "--tf", "1", "--h", "1e-2", "--out", str(out)])
        assert rc == 0


class TestSweepCommand:
    def test_fits_slope_and_writes_csv(self, tmp_path, capsys):
        out = tmp_path / "sweep"
        rc = cli.main(["sweep", "--sigma", "40,80,160", "--tf", "6", "--out", str(out)])
        assert rc == 0
        printed = capsys.readouterr().out
        assert "slope" in printed
        lines = (out / "sweep.csv").read_text().splitlines()
        assert lines[0] == "sigma,est_error_sup_1"
        assert len(lines) == 4

    def test_two_sigmas_is_a_spec_error(self, tmp_path):
        assert cli.main(["sweep", "--sigma", "40,80", "--out", str(tmp_path / "s")]) == 2


class TestVerifyCommand:
    def test_subset_passes(self, capsys):
        rc = cli.main(["verify", "--only", "lyapunov-residuals,transfer-equivalence"])
        assert rc == 0
        printed = capsys.readouterr().out
        assert "lyapunov-residuals" in printed
        assert "verification PASSED" in printed

    def test_perturbed_transfer_fails(self, capsys):
        rc = cli.main(["verify", "--only", "transfer-equivalence",
                       "--perturb-transfer", "1e-3"])
        assert rc == 1
        assert "FAIL" in capsys.readouterr().out

    def test_unknown_check_name(self):
        assert cli.main(["verify", "--only", "bogus-check"]) == 2


class TestParser:
    def test_missing_command_exits_two(self):
        assert cli.main([]) == 2

    def test_unknown_flag_exits_two(self):
        assert cli.main(["estimate", "--banana", "1"]) == 2
