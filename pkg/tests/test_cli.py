import json
import math

import numpy as np
import pytest

from flowlab import cli, config
from flowlab.config import ConfigError


def _run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


class TestSerialization:
    def test_json_digits_and_nan(self):
        text = cli.to_json({"b": float("nan"), "a": 0.1, "c": [1, float("inf")]})
        assert json.loads(text) == {"a": 0.1, "b": None, "c": [1, None]}
        assert "0.10000000000000001" in text
        assert text.index('"a"') < text.index('"b"')

    def test_round_trip_exact(self, rng):
        vals = rng.standard_normal(20)
        assert np.array_equal(np.array(json.loads(cli.to_json(vals))), vals)

    def test_csv_config_header(self):
        cfg = config.resolve("kernel-table", {"n": "2"})
        text = cli.csv_table(("a", "b"), [(1.0, 2.0)], cfg)
        first = text.splitlines()[0]
        assert first.startswith("# config: ")
        assert json.loads(first[len("# config: "):])["parameters"]["n"] == 2


class TestConfig:
    def test_defaults_and_override(self):
        cfg = config.resolve("taylor-green", {"N": "32", "T": "0.5"})
        assert cfg["N"] == 32 and cfg["T"] == 0.5 and cfg["dt"] is None
        assert cfg.sources["N"] == "given" and cfg.sources["tol"] == "default"

    def test_unknown_key(self):
        with pytest.raises(ConfigError) as exc:
            config.resolve("taylor-green", {"Nx": "32"})
        assert exc.value.key == "Nx"

    def test_bad_value(self):
        with pytest.raises(ConfigError) as exc:
            config.resolve("axisym-run", {"initial": "spiral"})
        assert exc.value.key == "initial"

    def test_parse_text(self):
        raw = config.parse_text("# comment\nN = 32\nL = 2pi  # period\n")
        assert raw == {"N": "32", "L": "2pi"}
        assert config.resolve("taylor-green", raw)["L"] == pytest.approx(2 * math.pi)

    def test_duplicate_key(self):
        with pytest.raises(ConfigError):
            config.parse_text("N = 1\nN = 2\n")

    def test_points(self):
        cfg = config.resolve("harnack-probe", {"K": "0,0; 0.1,0.2", "lower": "-1,-1", "upper": "1,1"})
        assert cfg["K"] == ((0.0, 0.0), (0.1, 0.2))

    def test_split_params(self):
        raw = cli._split_params(["N=8", "--T", "0.5", "--max-iter=4"])
        assert raw == {"N": "8", "T": "0.5", "max_iter": "4"}
        with pytest.raises(ConfigError):
            cli._split_params(["N=8", "N=9"])

    @pytest.mark.parametrize("scenario", config.SCENARIOS)
    def test_describe_is_valid_config(self, scenario):
        raw = config.parse_text(config.describe(scenario))
        assert set(raw) == set(config.SCHEMAS[scenario])

    def test_thread_cap(self, monkeypatch):
        monkeypatch.setenv("FLOWLAB_THREADS", "2")
        assert cli._effective_jobs(8) == 2
        monkeypatch.setenv("FLOWLAB_THREADS", "many")
        with pytest.raises(ConfigError):
            cli._effective_jobs(2)


class TestRun:
    def test_taylor_green(self, tmp_path, capsys):
        report = tmp_path / "report.json"
        traj = tmp_path / "traj.csv"
        code, out, _ = _run(capsys, "run", "taylor-green", "N=64", "T=1", "store_every=16",
                            "--emit", f"{traj},{report}")
        assert code == 0
        rep = json.loads(report.read_text())
        assert rep["sup_error"] <= 1e-6
        assert rep["config"]["parameters"]["N"] == 64
        assert json.loads(out)["summary"]["sup_error"] <= 1e-6
        assert traj.read_text().count("\n") > 0
        log = tmp_path / "traj.csv.log"
        assert log.exists() and "finished" in log.read_text()

    def test_unknown_key(self, tmp_path, capsys):
        code, _, err = _run(capsys, "run", "taylor-green", "bogus=1", "--emit", str(tmp_path / "r.json"))
        assert code == 2
        diag = json.loads(err)
        assert diag["key"] == "bogus" and "bogus" in diag["message"]

    def test_bad_emit_suffix(self, tmp_path, capsys):
        code, _, err = _run(capsys, "run", "kernel-table", "--emit", str(tmp_path / "t.txt"))
        assert code == 2 and json.loads(err)["key"] == "emit"

    def test_unknown_scenario(self, capsys):
        assert _run(capsys, "run", "warp-drive")[0] == 2

    def test_config_file(self, tmp_path, capsys):
        cfgfile = tmp_path / "run.cfg"
        cfgfile.write_text("kind = Kijk\nn = 3\nscales = 1:100:10\n")
        table = tmp_path / "k.csv"
        code, _, _ = _run(capsys, "run", "kernel-table", "--config", str(cfgfile), "--emit", str(table), "--quiet")
        assert code == 0
        lines = table.read_text().splitlines()
        slope = float(next(l for l in lines if l.startswith("# fitted_slope:")).split(":")[1])
        assert slope == pytest.approx(-4.0, abs=0.05)

    def test_command_line_overrides_file(self, tmp_path, capsys):
        cfgfile = tmp_path / "run.cfg"
        cfgfile.write_text("kind = Kijk\nn = 3\n")
        table = tmp_path / "k.csv"
        _run(capsys, "run", "kernel-table", "--config", str(cfgfile), "kind=Gamma", "--emit", str(table), "--quiet")
        slope = float(next(l for l in table.read_text().splitlines() if l.startswith("# fitted_slope:")).split(":")[1])
        # the heat kernel on the ray x = 0, t = s^2 decays like s^-n
        assert slope == pytest.approx(-3.0, abs=0.05)

    def test_deterministic(self, tmp_path, capsys, monkeypatch):
        outs = []
        for jobs, cap in (("1", None), ("3", "2")):
            if cap:
                monkeypatch.setenv("FLOWLAB_THREADS", cap)
            path = tmp_path / f"eps{jobs}.csv"
            code, _, _ = _run(capsys, "run", "harnack-probe", "nx=41", "deltas=0.5,0.2", "--jobs", jobs,
                              "--seed", "5", "--emit", str(path), "--quiet")
            assert code == 0
            outs.append(path.read_text())
        assert outs[0] == outs[1]

    def test_solver_failure(self, tmp_path, capsys):
        code, _, err = _run(capsys, "run", "mild-solve", "datum=random", "norm=50", "N=16", "T=0.5",
                            "max_iter=3", "--emit", str(tmp_path / "r.json"), "--quiet")
        assert code == 3
        assert json.loads(err)["summary"]["converged"] is False

    def test_axisym_fields(self, tmp_path, capsys):
        mon = tmp_path / "monitors.csv"
        fields = tmp_path / "fields"
        code, _, _ = _run(capsys, "run", "axisym-run", "nr=9", "nz=17", "steps=4", "every=2",
                          "--emit", f"{mon},{fields}/", "--quiet")
        assert code == 0
        assert mon.read_text().startswith("# config:")
        written = sorted(p.name for p in fields.iterdir())
        assert written and all(n.endswith(".csv") for n in written)

    def test_blowup_trace(self, tmp_path, capsys):
        t = np.linspace(0, 0.999, 200)
        trace = tmp_path / "trace.csv"
        trace.write_text("t,h\n" + "".join(f"{a!r},{(1 - a) ** -0.5!r}\n" for a in t.tolist()))
        out = tmp_path / "class.json"
        code, _, _ = _run(capsys, "run", "blowup-analyze", f"trace={trace}", "T=1", "--emit", str(out), "--quiet")
        assert code == 0
        res = json.loads(out.read_text())
        assert res["type"] == "TypeI" and res["C_fit"] == pytest.approx(1.0, rel=1e-6)

    def test_blowup_from_trajectory(self, tmp_path, capsys):
        traj = tmp_path / "traj.csv"
        assert _run(capsys, "run", "taylor-green", "N=16", "T=1", "--emit", str(traj), "--quiet")[0] == 0
        out = tmp_path / "class.json"
        code, _, _ = _run(capsys, "run", "blowup-analyze", f"traj={traj}", "T=1.01", "--emit", str(out), "--quiet")
        assert code == 0
        assert json.loads(out.read_text())["type"] == "NoBlowup"

    def test_blowup_bad_trace(self, tmp_path, capsys):
        trace = tmp_path / "trace.csv"
        trace.write_text("t,h\n0,one\n")
        code, _, err = _run(capsys, "run", "blowup-analyze", f"trace={trace}", "--emit", str(tmp_path / "c.json"))
        assert code == 2 and json.loads(err)["key"] == "trace"

    def test_blowup_needs_one_input(self, capsys):
        code, _, err = _run(capsys, "run", "blowup-analyze", "T=1")
        assert code == 2 and json.loads(err)["key"] == "traj"


class TestVerify:
    def test_kernels_suite(self, capsys, tmp_path):
        summary = tmp_path / "verify.json"
        code, out, _ = _run(capsys, "verify", "kernels", "--emit", str(summary))
        assert code == 0 and "[PASS]" in out
        assert json.loads(summary.read_text())["failed"] == []

    def test_bogus_suite(self, capsys):
        code, _, err = _run(capsys, "verify", "bogus")
        assert code == 2 and json.loads(err)["key"] == "suite"

    def test_help_and_version(self, capsys):
        assert _run(capsys, "--help")[0] == 0
        code, out, _ = _run(capsys, "--version")
        assert code == 0 and out.strip() == "0.1.0"
        assert _run(capsys)[0] == 2
