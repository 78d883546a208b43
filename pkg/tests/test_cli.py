import json

import pytest

from quasi_equilibria import cli
from quasi_equilibria.config import Settings
from quasi_equilibria.errors import UsageError
from quasi_equilibria.reports import strip_timing


@pytest.fixture(autouse=True)
def isolated(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    for name in ("RESIDUAL_TOL", "MULTISTART", "MAX_STARTS", "SETTLE_AFTER", "GRID", "THREADS", "LOG_LEVEL"):
        monkeypatch.setenv(f"QPE_{name}", "")
        monkeypatch.delenv(f"QPE_{name}")


def _emit(tmp_path, name, *params):
    path = tmp_path / f"{name}.json"
    args = ["gallery", name, "--emit", str(path)]
    for param in params:
        args += ["--param", param]
    assert cli.run(args) == cli.EXIT_OK
    return path


class TestParsing:
    def test_parse_vector(self):
        assert cli.parse_vector("0, 0.5,1") == [0.0, 0.5, 1.0]

    def test_parse_vector_rejects_text(self):
        with pytest.raises(UsageError):
            cli.parse_vector("0,a")

    def test_parse_blocks(self):
        assert cli.parse_blocks("1;0.5") == [[1.0], [0.5]]

    def test_parse_param(self):
        assert cli.parse_param("h = -w") == ("h", "-w")
        with pytest.raises(UsageError):
            cli.parse_param("novalue")

    def test_usage_error_exits_1(self, capsys):
        assert cli.run(["solve"]) == cli.EXIT_ERROR
        assert "error" in capsys.readouterr().err

    def test_unknown_gallery_name(self):
        assert cli.run(["gallery", "prisoners_dilemma"]) == cli.EXIT_ERROR

    def test_missing_instance_file(self, tmp_path, capsys):
        assert cli.run(["solve", str(tmp_path / "absent.json")]) == cli.EXIT_ERROR
        assert capsys.readouterr().err.startswith("quasi-eq: error:")

    def test_local_and_pessimistic_are_exclusive(self, tmp_path, capsys):
        instance = _emit(tmp_path, "pf_variant")
        args = ["verify", str(instance), "--x", "0,0", "--y", "1;1", "--local", "--pessimistic"]
        assert cli.run(args) == cli.EXIT_ERROR
        assert "not allowed with" in capsys.readouterr().err

    def test_schema_error(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"name": "bad"}')
        assert cli.run(["check", str(path)]) == cli.EXIT_ERROR


class TestWorkflow:
    def test_gallery_to_stdout(self, capsys):
        assert cli.run(["gallery", "pf_variant", "--param", "h=w"]) == cli.EXIT_OK
        data = json.loads(capsys.readouterr().out)
        assert data["h"] == "w"

    def test_emit_solve_verify(self, tmp_path):
        instance = _emit(tmp_path, "pf_variant", "h=-w")
        solve_report = tmp_path / "solve.json"
        args = ["solve", str(instance), "--grid", "11", "--multistart", "9", "--report", str(solve_report)]
        assert cli.run(args) == cli.EXIT_OK
        solved = json.loads(solve_report.read_text())
        assert solved["x"] == [0.0, 0.0]
        assert solved["w"] == [1.0]
        assert solved["value"] == pytest.approx(-1.0, abs=1e-9)

        verify_report = tmp_path / "verify.json"
        args = [
            "verify", str(instance), "--x", "0,0", "--y", "1;1", "--grid", "11", "--multistart", "9",
            "--stationarity", "--report", str(verify_report),
        ]
        assert cli.run(args) == cli.EXIT_OK
        verified = json.loads(verify_report.read_text())
        assert verified["verdict"] is True
        assert verified["global"]["max_gap"] <= 1e-9
        assert verified["stationarity"]["verdict"] is True

    def test_false_verdict_exits_2(self, tmp_path):
        instance = _emit(tmp_path, "pang_fukushima")
        args = ["verify", str(instance), "--x", "0,0", "--y", "1;1", "--grid", "11", "--multistart", "9"]
        assert cli.run(args) == cli.EXIT_VERDICT_FALSE

    def test_nonexistence_exits_2(self, tmp_path, capsys):
        instance = _emit(tmp_path, "pang_fukushima")
        csv_path = tmp_path / "cert.csv"
        report = tmp_path / "cert.json"
        args = ["nonexist", str(instance), "--grid", "11", "--multistart", "9", "--csv", str(csv_path)]
        assert cli.run(args + ["--report", str(report)]) == cli.EXIT_VERDICT_FALSE
        assert json.loads(report.read_text())["delta_star"] > 0
        assert csv_path.read_text().startswith("x1,x2,y1,y2,max_gap")
        assert "no epsilon-equilibrium" in capsys.readouterr().out

    def test_followers(self, tmp_path):
        instance = _emit(tmp_path, "multivalued_vi_demo")
        report = tmp_path / "followers.json"
        assert cli.run(["followers", str(instance), "--x", "0", "--report", str(report)]) == cli.EXIT_OK
        assert json.loads(report.read_text())["solutions"] == [[0.0], [0.5], [1.0]]

    def test_check_passes_on_variant(self, tmp_path):
        instance = _emit(tmp_path, "pf_variant")
        report = tmp_path / "check.json"
        assert cli.run(["check", str(instance), "--samples", "16", "--report", str(report)]) == cli.EXIT_OK
        names = [c["name"] for c in json.loads(report.read_text())["checks"]]
        assert names == ["feasible_region", "potential_existence", "gradient_identity"]

    def test_implicit_on_multivalued_is_an_error(self, tmp_path, capsys):
        instance = _emit(tmp_path, "multivalued_vi_demo")
        assert cli.run(["solve", str(instance), "--implicit", "--grid", "5"]) == cli.EXIT_ERROR
        assert "3 members" in capsys.readouterr().err

    def test_reports_identical_apart_from_timing(self, tmp_path):
        instance = _emit(tmp_path, "pf_variant", "h=w")
        outputs = []
        for run_id in (1, 2):
            report = tmp_path / f"run{run_id}.json"
            args = ["solve", str(instance), "--grid", "11", "--multistart", "9", "--report", str(report)]
            assert cli.run(args) == cli.EXIT_OK
            outputs.append(strip_timing(json.loads(report.read_text())))
        assert outputs[0] == outputs[1]

    def test_scan_csv(self, tmp_path):
        instance = _emit(tmp_path, "pf_variant")
        scan = tmp_path / "scan.csv"
        args = ["solve", str(instance), "--grid", "3", "--multistart", "9", "--no-refine"]
        args += ["--scan-csv", str(scan)]
        assert cli.run(args) == cli.EXIT_OK
        assert len(scan.read_text().splitlines()) == 1 + 9


class TestDispatch:
    def test_pessimistic_flag_selects_solver(self, tmp_path, mocker):
        instance = _emit(tmp_path, "multivalued_vi_demo")
        solver = mocker.patch.object(cli, "solve_p_pessimistic", wraps=cli.solve_p_pessimistic)
        assert cli.run(["solve", str(instance), "--pessimistic", "--grid", "3", "--multistart", "9"]) == 0
        solver.assert_called_once()
        cfg = solver.call_args.args[1]
        assert cfg.grid == 3
        assert cfg.vi.multistart == 9

    def test_local_flag_selects_local_check(self, tmp_path, mocker):
        instance = _emit(tmp_path, "pf_variant")
        local = mocker.patch.object(cli, "verify_local", wraps=cli.verify_local)
        args = ["verify", str(instance), "--x", "0,0", "--y", "1;1", "--local", "--radius", "0.02"]
        assert cli.run(args + ["--multistart", "9"]) == cli.EXIT_OK
        assert local.call_args.args[3] == 0.02

    def test_environment_sets_defaults(self, tmp_path, monkeypatch, mocker):
        monkeypatch.setenv("QPE_GRID", "7")
        monkeypatch.setenv("QPE_MULTISTART", "5")
        instance = _emit(tmp_path, "pf_variant")
        solver = mocker.patch.object(cli, "solve_p_quasi", wraps=cli.solve_p_quasi)
        assert cli.run(["solve", str(instance)]) == cli.EXIT_OK
        cfg = solver.call_args.args[1]
        assert (cfg.grid, cfg.vi.multistart) == (7, 5)

    def test_dotenv_file_is_read(self, tmp_path, monkeypatch):
        (tmp_path / ".env").write_text("QPE_THREADS=3\n")
        cli.run(["gallery", "pf_variant"])
        assert Settings().threads == 3
