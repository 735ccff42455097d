import numpy as np
import pytest

from lpvembed.bench import model_text
from lpvembed.cli import UsageError, main, parse_csv_floats, parse_csv_ints


@pytest.fixture
def model_file(tmp_path):
    path = tmp_path / "example1.nlsys"
    path.write_text(model_text("example1.nlsys"))
    return path


@pytest.fixture
def embedded(model_file, tmp_path, capsys):
    out = tmp_path / "run"
    code = main(["embed", "--model", str(model_file), "--pf", "1", "--pg", "0", "--sched", "3",
                 "--gamma-scale", "1e-3", "--samples", "1500", "--out", str(out)])
    assert code == 0
    return out, capsys.readouterr()


def parsed_vector(stdout, name):
    line = next(l for l in stdout.splitlines() if l.startswith(name + " = ["))
    return np.array([float(v) for v in line.split("[", 1)[1].rstrip("]").split(",")])


class TestParsing:
    def test_floats(self):
        np.testing.assert_array_equal(parse_csv_floats(" 1, -2.5,3e-1"), [1, -2.5, 0.3])

    @pytest.mark.parametrize("bad", ["", "1,,2", "a", "1;2", "nan"])
    def test_bad_floats(self, bad):
        with pytest.raises(UsageError):
            parse_csv_floats(bad)

    def test_ints(self):
        assert parse_csv_ints("3,4") == (3, 4)
        with pytest.raises(UsageError):
            parse_csv_ints("3.5")


class TestEmbed:
    def test_outputs(self, embedded):
        out, io = embedded
        assert (out / "model.json").is_file() and (out / "vm.csv").is_file()
        assert "v = 3  v_m = " in io.out
        assert io.err == ""

    def test_vm_target(self, model_file, tmp_path, capsys):
        code = main(["embed", "--model", str(model_file), "--vm-target", "0.9",
                     "--samples", "800", "--out", str(tmp_path / "o")])
        assert code == 0
        first = capsys.readouterr().out.splitlines()[0]
        assert float(first.split("v_m = ")[1]) >= 0.9

    def test_missing_model(self, tmp_path, capsys):
        assert main(["embed", "--model", str(tmp_path / "none.nlsys")]) == 2
        assert "not found" in capsys.readouterr().err

    def test_no_model(self, capsys):
        assert main(["embed"]) == 2

    def test_conflicting_selection(self, model_file, capsys):
        assert main(["embed", "--model", str(model_file), "--sched", "2",
                     "--vm-target", "0.9"]) == 2

    def test_stage_failure_exit_1(self, tmp_path, capsys):
        bad = tmp_path / "bad.nlsys"
        bad.write_text("states 1\ninputs 1\ndomain x1 -1 1\nf[1] = cos(x1)\n")
        assert main(["embed", "--model", str(bad)]) == 1
        assert "vanish" in capsys.readouterr().err

    def test_config_file(self, model_file, tmp_path, capsys):
        cfg = tmp_path / "run.json"
        cfg.write_text('{"model": "%s", "samples": 400, "sched": 1}' % model_file)
        out = tmp_path / "c"
        assert main(["embed", "--config", str(cfg), "--seed", "2", "--out", str(out)]) == 0
        assert '"seed": 2' in (out / "model.json").read_text()

    def test_bad_flag(self, capsys):
        assert main(["embed", "--pf", "one"]) == 2


class TestEval:
    def test_origin(self, embedded, capsys):
        out, _ = embedded
        assert main(["eval", "--model", str(out / "model.json"), "--x", "0,0", "--u", "0"]) == 0
        stdout = capsys.readouterr().out
        np.testing.assert_array_equal(parsed_vector(stdout, "xdot_hat"), [0.0, 0.0])
        for name in ("A =", "B =", "C =", "D =", "y_error"):
            assert name in stdout

    def test_full_rank_error_column(self, model_file, tmp_path, capsys):
        out = tmp_path / "full"
        assert main(["embed", "--model", str(model_file), "--samples", "800",
                     "--out", str(out)]) == 0
        assert main(["eval", "--model", str(out / "model.json"),
                     "--x", "0.31,-0.42", "--u", "1.7"]) == 0
        stdout = capsys.readouterr().out
        assert np.abs(parsed_vector(stdout, "xdot_error")).max() < 1e-8
        assert np.abs(parsed_vector(stdout, "y_error")).max() < 1e-8

    def test_malformed_csv(self, embedded, capsys):
        out, _ = embedded
        assert main(["eval", "--model", str(out / "model.json"), "--x", "0,a", "--u", "0"]) == 2
        assert "malformed" in capsys.readouterr().err

    def test_dimension_mismatch(self, embedded, capsys):
        out, _ = embedded
        assert main(["eval", "--model", str(out / "model.json"), "--x", "0", "--u", "0"]) == 2

    def test_corrupt_model(self, tmp_path, capsys):
        bad = tmp_path / "m.json"
        bad.write_text("{}")
        assert main(["eval", "--model", str(bad), "--x", "0", "--u", "0"]) == 1


class TestBenchAndInspect:
    def test_bench_sweep(self, tmp_path, capsys):
        assert main(["bench", "example2", "--sched", "3,4", "--samples", "600",
                     "--out", str(tmp_path)]) == 0
        lines = (tmp_path / "example2" / "vm.csv").read_text().splitlines()
        assert [l.split(",")[0] for l in lines[1:]] == ["3", "4"]

    def test_unknown_case(self, capsys):
        assert main(["bench", "nosuch"]) == 2
        assert "unknown case" in capsys.readouterr().err

    def test_inspect(self, embedded, capsys):
        out, _ = embedded
        assert main(["inspect", str(out / "model.json")]) == 0
        assert "theta3" in capsys.readouterr().out

    def test_inspect_missing(self, tmp_path, capsys):
        assert main(["inspect", str(tmp_path / "none.json")]) == 2
