import json

import numpy as np
import pytest

from sdstab.cli import (
    load_system, main, parse_system_file, read_trajectory_csv, CliError,
)


def test_load_double_integrator(systems_dir):
    sysd = load_system(systems_dir / "dblint.sys")
    assert sysd.dim == 2
    np.testing.assert_allclose(sysd.f_at(np.array([0.5, -2.0])), [-2.0, 0.0])
    np.testing.assert_allclose(sysd.g_at(np.array([0.5, -2.0])), [0.0, 1.0])


def test_load_rotation_with_parameters(systems_dir):
    sysd = load_system(systems_dir / "rotation3.sys")
    assert sysd.dim == 3
    p = np.array([0.3, -0.9, 0.2])
    np.testing.assert_allclose(
        sysd.f_at(p), [p[1] * (1 + p[2]), -p[0], 0.0], atol=1e-14)


def test_dimension_mismatch_rejected(tmp_path):
    bad = tmp_path / "bad.sys"
    bad.write_text('dim = 3\nf = ["x2", "0"]\ng = ["0", "0", "1"]\n'
                   'V = "0.5*(x1^2+x2^2+x3^2)"\n')
    with pytest.raises(CliError, match="dimension mismatch"):
        load_system(bad)


def test_missing_key_rejected(tmp_path):
    bad = tmp_path / "bad.sys"
    bad.write_text('dim = 2\nf = ["x2", "0"]\nV = "0.5*(x1^2+x2^2)"\n')
    with pytest.raises(CliError, match="missing required key 'g'"):
        load_system(bad)


def test_parse_error_reports_line(tmp_path):
    bad = tmp_path / "bad.sys"
    bad.write_text('dim = 2\nf = [x2, "0"]\ng = ["0", "1"]\nV = "x1^2"\n')
    with pytest.raises(CliError, match="bad.sys:2"):
        load_system(bad)


def test_parameter_substitution():
    sf = parse_system_file(
        'dim = 1\nrate = "2+x1"\nf = ["-x1*rate"]\ng = ["1"]\nV = "0.5*x1^2"\n')
    sysd = sf.build()
    assert sysd.f_at(np.array([0.5]))[0] == pytest.approx(-0.5 * 2.5)


def test_reserved_parameter_names_rejected():
    with pytest.raises(CliError, match="reserved"):
        parse_system_file('dim = 1\nsin = "2"\nf = ["0"]\ng = ["1"]\nV = "x1^2"\n')


# --- command dispatch -------------------------------------------------------------

def _sys_arg(systems_dir, name):
    return ["--system", str(systems_dir / name)]


def test_certify_command(systems_dir, tmp_path, capsys):
    code = main(["certify", *_sys_arg(systems_dir, "dblint.sys"),
                 "--at", "1,0", "--out", str(tmp_path)])
    assert code == 0
    out = capsys.readouterr().out
    assert "case=P2 N=1" in out
    rows = (tmp_path / "certificates.csv").read_text().strip().splitlines()
    assert rows[0] == "x1,x2,case,N,gV,fV,witness_name,witness_value"
    assert any("ad_g^1(f)V,-1" in row for row in rows)


def test_certify_rejects_origin(systems_dir, tmp_path):
    code = main(["certify", *_sys_arg(systems_dir, "dblint.sys"),
                 "--at", "0,0", "--out", str(tmp_path)])
    assert code == 1


def test_certify_inconclusive_exit_code(tmp_path):
    stuck = tmp_path / "stuck.sys"
    stuck.write_text('dim = 2\nf = ["0", "0"]\ng = ["0", "1"]\n'
                     'V = "0.5*(x1^2+x2^2)"\n')
    code = main(["certify", "--system", str(stuck), "--at", "1,0",
                 "--out", str(tmp_path)])
    assert code == 2


def test_certify_grid_command(systems_dir, tmp_path, capsys):
    code = main(["certify-grid", *_sys_arg(systems_dir, "dblint.sys"),
                 "--box=-1:1,-1:1", "--res", "3,3", "--out", str(tmp_path)])
    assert code == 0
    out = capsys.readouterr().out
    assert "Transversal=6" in out
    assert "P2=2" in out
    assert "skipped=1" in out


def test_step_command(systems_dir, tmp_path, capsys):
    code = main(["step", *_sys_arg(systems_dir, "dblint.sys"),
                 "--at", "1,0", "--out", str(tmp_path)])
    assert code == 0
    assert "case=P2" in capsys.readouterr().out
    assert (tmp_path / "step_program.csv").exists()


def test_diagnose_m_command(systems_dir, tmp_path, capsys):
    code = main(["diagnose-m", *_sys_arg(systems_dir, "rotation3.sys"),
                 "--at", "1,1,0", "--order", "2", "--out", str(tmp_path)])
    assert code == 0
    assert "m^(2)(0)" in capsys.readouterr().out
    assert (tmp_path / "m_derivatives.csv").exists()


def test_cbh_check_command(systems_dir, tmp_path, capsys):
    code = main(["cbh-check", *_sys_arg(systems_dir, "dblint.sys"),
                 "--at", "1,0", "--k", "2", "--t", "0.01", "--out", str(tmp_path)])
    assert code == 0
    assert (tmp_path / "cbh_residuals.csv").exists()


def test_simulate_command_and_csv_round_trip(systems_dir, tmp_path, capsys):
    code = main(["simulate", *_sys_arg(systems_dir, "dblint.sys"),
                 "--x0", "1,0", "--partition", "uniform:0.5", "--horizon", "2",
                 "--out", str(tmp_path)])
    assert code == 0
    assert (tmp_path / "report.json").exists()
    assert (tmp_path / "plot_trajectory.gp").exists()
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["overshoot_ratio"] <= 2.0 + 1e-9

    csv_path = tmp_path / "trajectory.csv"
    times, states, vs = read_trajectory_csv(csv_path)
    sysd = load_system(systems_dir / "dblint.sys")
    for state, v in zip(states, vs):
        assert v == sysd.v_at(state)

    # 17-significant-digit text reproduces the floats exactly
    first = csv_path.read_text().splitlines()[1].split(",")
    assert float(first[0]) == times[0]
    assert float(first[3]) == vs[0]


def test_simulate_synthesis_failure_exit_code(tmp_path):
    stuck = tmp_path / "stuck.sys"
    stuck.write_text('dim = 2\nf = ["0", "0"]\ng = ["0", "1"]\n'
                     'V = "0.5*(x1^2+x2^2)"\n')
    code = main(["simulate", "--system", str(stuck), "--x0", "1,0",
                 "--partition", "uniform:0.5", "--horizon", "2",
                 "--out", str(tmp_path)])
    assert code == 2


def test_usage_errors_exit_one(systems_dir, tmp_path):
    assert main(["certify", *_sys_arg(systems_dir, "dblint.sys"),
                 "--out", str(tmp_path)]) == 1          # missing --at
    assert main(["certify", "--system", "no-such-file.sys", "--at", "1,0",
                 "--out", str(tmp_path)]) == 1          # unreadable system
    assert main(["simulate", *_sys_arg(systems_dir, "dblint.sys"),
                 "--x0", "1,0", "--partition", "weekly:1",
                 "--out", str(tmp_path)]) == 1          # bad partition kind
    assert main(["certify", *_sys_arg(systems_dir, "dblint.sys"),
                 "--at", "one,zero", "--out", str(tmp_path)]) == 1


def test_explicit_partition_flag(systems_dir, tmp_path):
    code = main(["simulate", *_sys_arg(systems_dir, "dblint.sys"),
                 "--x0", "1,0", "--partition", "explicit:0,0.1,0.7,0.8,2.0+0.5",
                 "--horizon", "2.5", "--out", str(tmp_path)])
    assert code == 0
