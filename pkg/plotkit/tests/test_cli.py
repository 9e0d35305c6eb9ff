from pathlib import Path

from plotkit.cli import main

DATA = Path(__file__).parent / "data"


def test_cli_renders_theta_hist(tmp_path, capsys):
    out = tmp_path / "theta.svg"
    code = main(["theta_hist", "--in", str(DATA / "theta-run"), "--out", str(out)])
    assert code == 0
    assert out.exists()
    assert "wrote" in capsys.readouterr().out


def test_cli_two_invocations_byte_identical(tmp_path):
    out1 = tmp_path / "a.svg"
    out2 = tmp_path / "b.svg"
    assert main(["mean_box_with_reference", "--in", str(DATA / "lattice"),
                 "--out", str(out1)]) == 0
    assert main(["mean_box_with_reference", "--in", str(DATA / "lattice"),
                 "--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()


def test_cli_error_exit_code(tmp_path, capsys):
    out = tmp_path / "x.svg"
    code = main(["theta_hist", "--in", str(tmp_path), "--out", str(out)])
    assert code == 2
    assert "error:" in capsys.readouterr().err
    assert not out.exists()


def test_cli_metric_flag(tmp_path):
    out = tmp_path / "w1.png"
    code = main(["series_vs_time", "--in", str(DATA / "decay"),
                 "--out", str(out), "--metric", "w1_avg"])
    assert code == 0
    assert out.exists()
