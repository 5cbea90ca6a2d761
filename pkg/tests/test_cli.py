import json
import logging
import textwrap

import pytest

from cli import run
from models.exceptions import ConfigError
from services.runner_service import forms_columns, immersion_columns, runner_service

SL2_CONFIG = """\
[algebra]
n = 2

[model]
mu_plus = 1.0
mu_minus = 1.0
c = 1.0

[solution]
kind = "builtin"
name = "liouville_cosh"

[grid]
z_min = 0.2
z_max = 0.6
zbar_min = 0.2
zbar_max = 0.6
nz = 3
nzbar = 3

[run]
transport_step = 1e-2

[outputs]
forms_csv = "out/forms.csv"
immersion_csv = "out/immersion.csv"
report_json = "out/report.json"

[checks]
enabled = ["field_eq", "zero_curvature", "gcr", "gauge_invariance", "curvature"]
"""


def _write(tmp_path, text=SL2_CONFIG, name="run.toml"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def _report(tmp_path):
    return json.loads((tmp_path / "out" / "report.json").read_text(encoding="utf-8"))


class TestRun:
    def test_successful_run_writes_artifacts(self, tmp_path):
        assert run(["--config", str(_write(tmp_path))]) == 0
        out = tmp_path / "out"
        assert (out / "forms.csv").is_file()
        assert (out / "immersion.csv").is_file()
        report = _report(tmp_path)
        assert report["status"] == "passed"
        assert report["algebra_dim"] == 3
        assert report["nu_bar"] == 1
        assert report["nu_perp"] == 0
        assert report["points"] == 9
        assert {c["name"] for c in report["checks"]} == {
            "field_eq", "zero_curvature", "gcr", "gauge_invariance", "curvature",
        }
        header = (out / "forms.csv").read_text(encoding="utf-8").splitlines()[0]
        assert header.startswith("z,zbar,g12,K_closed,K_fd,K_gauss,b_1_11")

    def test_output_is_reproducible(self, tmp_path):
        config = _write(tmp_path)
        assert run(["--config", str(config), "--quiet"]) == 0
        first = (tmp_path / "out" / "forms.csv").read_bytes()
        assert run(["--config", str(config), "--quiet"]) == 0
        assert (tmp_path / "out" / "forms.csv").read_bytes() == first

    def test_check_only_skips_csv(self, tmp_path):
        assert run(["--config", str(_write(tmp_path)), "--check-only"]) == 0
        assert not (tmp_path / "out" / "forms.csv").exists()
        assert not (tmp_path / "out" / "immersion.csv").exists()
        assert _report(tmp_path)["status"] == "passed"

    def test_negative_c_override(self, tmp_path):
        code = run(["--config", str(_write(tmp_path)), "--override", "model.c=-1", "--check-only"])
        assert code == 0
        report = _report(tmp_path)
        assert report["nu_bar"] == 2
        assert report["nu_perp"] == 1
        assert report["config"]["model"]["c"] == -1.0

    def test_zero_c_is_input_error(self, tmp_path, caplog):
        with caplog.at_level(logging.ERROR):
            code = run(["--config", str(_write(tmp_path)), "--override", "model.c=0"])
        assert code == 2
        assert "c ≠ 0" in caplog.text
        assert not (tmp_path / "out").exists()

    def test_missing_grid_file(self, tmp_path):
        text = SL2_CONFIG.replace('kind = "builtin"\nname = "liouville_cosh"', 'kind = "grid_file"\npath = "absent.csv"')
        assert run(["--config", str(_write(tmp_path, text))]) == 2
        assert not (tmp_path / "out").exists()

    def test_goursat_source_must_cover_grid(self, tmp_path):
        # liouville_log 的定义域从 0.05 开始
        text = SL2_CONFIG.replace(
            'kind = "builtin"\nname = "liouville_cosh"',
            'kind = "goursat"\ninitial = "liouville_log"\nstep = 0.05',
        ).replace("z_min = 0.2", "z_min = 0.0")
        assert run(["--config", str(_write(tmp_path, text))]) == 2
        assert not (tmp_path / "out").exists()

    def test_builtin_domain_must_cover_grid(self, tmp_path):
        text = SL2_CONFIG.replace("z_max = 0.6", "z_max = 1.5")
        assert run(["--config", str(_write(tmp_path, text))]) == 2
        assert not (tmp_path / "out").exists()

    def test_goursat_blow_up_writes_report(self, tmp_path, caplog):
        text = (
            SL2_CONFIG.replace("mu_plus = 1.0\nmu_minus = 1.0", "mu_plus = 100.0\nmu_minus = -100.0")
            .replace('kind = "builtin"\nname = "liouville_cosh"', 'kind = "goursat"\ninitial = "zero"\nstep = 0.01')
            .replace("z_min = 0.2\nz_max = 0.6\nzbar_min = 0.2\nzbar_max = 0.6", "z_min = 0.0\nz_max = 1.0\nzbar_min = 0.0\nzbar_max = 1.0")
        )
        with caplog.at_level(logging.ERROR):
            code = run(["--config", str(_write(tmp_path, text))])
        assert code == 1
        assert "发散" in caplog.text
        report = _report(tmp_path)
        assert report["status"] == "failed"
        assert report["points"] == 0
        assert report["goursat"]["blew_up"] is True
        assert report["goursat"]["completed_rows"] >= 1
        assert 0.0 <= report["goursat"]["last_valid_zbar"] < 1.0
        assert not (tmp_path / "out" / "forms.csv").exists()

    def test_immersion_columns(self, tmp_path):
        assert run(["--config", str(_write(tmp_path))]) == 0
        lines = (tmp_path / "out" / "immersion.csv").read_text(encoding="utf-8").splitlines()
        assert lines[0] == "z,zbar,y1,y2,y3"
        assert len(lines) == 1 + 9

    def test_missing_config(self, tmp_path):
        assert run(["--config", str(tmp_path / "absent.toml")]) == 2

    def test_tight_tolerance_fails_checks(self, tmp_path):
        text = SL2_CONFIG + "\n[tolerances]\ncurvature = 1e-30\n"
        assert run(["--config", str(_write(tmp_path, text)), "--check-only"]) == 1
        report = _report(tmp_path)
        assert report["status"] == "failed"
        failed = [c["name"] for c in report["checks"] if not c["passed"]]
        assert failed == ["curvature"]


class TestConfig:
    def test_relative_paths_follow_config(self, tmp_path):
        config = runner_service.load_config(_write(tmp_path))
        assert config.outputs.forms_csv == tmp_path / "out" / "forms.csv"
        assert config.model.lam == 0.0

    def test_validation_error_points_at_line(self, tmp_path):
        text = SL2_CONFIG.replace("c = 1.0", "c = 0.0")
        with pytest.raises(ConfigError) as info:
            runner_service.load_config(_write(tmp_path, text))
        assert info.value.line == 7
        assert info.value.column == 1

    def test_syntax_error_points_at_line(self, tmp_path):
        text = textwrap.dedent("""\
            [algebra]
            n = 2
            [model
            """)
        with pytest.raises(ConfigError) as info:
            runner_service.load_config(_write(tmp_path, text))
        assert info.value.line == 3

    def test_unknown_check(self, tmp_path):
        text = SL2_CONFIG.replace('"curvature"]', '"curvature", "torsion"]')
        with pytest.raises(ConfigError, match="torsion"):
            runner_service.load_config(_write(tmp_path, text))

    def test_apply_override(self):
        data = {"model": {"c": 1.0}}
        runner_service.apply_override(data, "model.c=-1")
        runner_service.apply_override(data, "outputs.forms_csv=out/x.csv")
        runner_service.apply_override(data, "checks.enabled=['gcr']")
        assert data["model"]["c"] == -1
        assert data["outputs"]["forms_csv"] == "out/x.csv"
        assert data["checks"]["enabled"] == ["gcr"]

    @pytest.mark.parametrize("item", ["model.c", "=3", "model.c.x=1"])
    def test_bad_override(self, item):
        with pytest.raises(ConfigError):
            runner_service.apply_override({"model": {"c": 1.0}}, item)


def test_forms_columns(sl2_model, sl3_model):
    assert forms_columns(sl2_model, ["gcr"]) == [
        "z", "zbar", "g12", "K_closed", "K_fd", "K_gauss",
        "b_1_11", "b_1_12", "b_1_21", "b_1_22",
        "mu_1_1_1", "mu_1_1_2",
        "H_norm_sq", "res_gcr",
    ]
    columns = forms_columns(sl3_model, [])
    assert len(columns) == 6 + 6 * 4 + 6 * 6 * 2 + 1


def test_immersion_columns_follow_dimension(sl3_model):
    columns = immersion_columns(sl3_model)
    assert columns[:2] == ["z", "zbar"]
    assert columns[2:] == [f"y{j}" for j in range(1, 9)]
