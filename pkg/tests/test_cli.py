import csv
import json
from pathlib import Path

import pytest

from degbill import flow
from degbill.cli import main
from degbill.config import RunConfig, load_config, parse_config
from degbill.errors import ConfigError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture(autouse=True)
def _restore_event_tol():
    tol = flow.EVENT_TOL
    yield
    flow.EVENT_TOL = tol


def _write(tmp_path, name, data):
    p = tmp_path / name
    p.write_text(json.dumps(data, indent=1) if not isinstance(data, str) else data)
    return str(p)


def _triangle():
    return json.loads((CONFIGS / "triangle.json").read_text())


# -- config -----------------------------------------------------------------

def test_defaults_materialized_and_hash_stable():
    cfg = load_config(CONFIGS / "triangle.json")
    dumped = cfg.model_dump()
    assert dumped["tolerances"] == {"integration": 1e-12, "newton": 1e-10, "event": 1e-13}
    assert dumped["tube"]["C"] == 10.0 and dumped["regularization"]["order"] == 5
    again = RunConfig.model_validate(dumped)
    assert again.digest() == cfg.digest()


def test_unknown_keys_rejected_with_line():
    text = '{\n  "problem": {"kind": "n-centers-2d", "centers": [[0, 0]]},\n  "enrgy": 1\n}'
    with pytest.raises(ConfigError, match=r"enrgy \(line 3\)"):
        parse_config(text)


def test_malformed_json_reports_position():
    with pytest.raises(ConfigError, match="line 2, column"):
        parse_config('{"problem":\n  }')


def test_overrides():
    cfg = load_config(CONFIGS / "triangle.json")
    c2 = cfg.with_overrides({"integration": 1e-10, "tube.rho": 0.04})
    assert c2.tolerances.integration == 1e-10 and c2.build_problem().rho == 0.04
    with pytest.raises(ConfigError):
        cfg.with_overrides({"integration": -1.0})
    with pytest.raises(ConfigError):
        cfg.with_overrides({"nope": 1.0})


def test_scan_values_and_zero_mu():
    cfg = load_config(CONFIGS / "triangle.json")
    assert cfg.scan.values() == [-1e-3, -1e-4, -1e-5, -1e-6]
    data = _triangle()
    data["scan"] = {"mu": [0.0, 1e-3]}
    with pytest.raises(ConfigError):
        parse_config(json.dumps(data))


# -- commands ---------------------------------------------------------------

def test_problem_validate(tmp_path, capsys):
    assert main(["problem", "validate", "--config", str(CONFIGS / "triangle.json")]) == 0
    assert "[FAIL]" not in capsys.readouterr().out
    data = _triangle()
    data["tube"] = {"rho": 0.6}
    assert main(["problem", "validate", "--config", _write(tmp_path, "o.json", data)]) == 1
    assert "[FAIL] tubes disjoint" in capsys.readouterr().out


def test_config_errors_exit_2(tmp_path, capsys):
    assert main(["problem", "validate", "--config",
                 _write(tmp_path, "bad.json", '{"problem": {,}}')]) == 2
    assert "line 1" in capsys.readouterr().err
    assert main(["problem", "validate", "--config", str(tmp_path / "missing.json")]) == 2
    assert main(["problem", "validate"]) == 2
    assert main(["nonsense"]) == 2


def test_chain_find(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["chain", "find", "--config", str(CONFIGS / "triangle.json"),
                 "--chain", "triangle", "--out", str(out)]) == 0
    rep = json.loads((out / "chain_triangle.json").read_text())
    assert rep["gradient_norm"] == 0.0 and rep["chain"]["converged"]
    man = json.loads((out / "manifest.json").read_text())
    assert man["config_sha256"] == load_config(CONFIGS / "triangle.json").digest()
    assert main(["chain", "find", "--config", str(CONFIGS / "triangle.json"),
                 "--chain", "missing", "--out", str(out)]) == 2


def test_chain_find_degenerate_prints_kernel(tmp_path, capsys):
    assert main(["chain", "find", "--config", str(CONFIGS / "wires_parallel.json"),
                 "--chain", "bounce", "--out", str(tmp_path)]) == 0
    assert "kernel basis" in capsys.readouterr().out
    rep = json.loads((tmp_path / "chain_bounce.json").read_text())
    assert not rep["nondegenerate"] and len(rep["kernel"]) == 2


def test_chain_certify(tmp_path):
    assert main(["chain", "certify", "--config", str(CONFIGS / "wires_skew.json"),
                 "--chain", "bounce", "--out", str(tmp_path)]) == 0
    assert main(["chain", "certify", "--config", str(CONFIGS / "wires_parallel.json"),
                 "--chain", "bounce", "--out", str(tmp_path)]) == 1


def test_shadow_run_single_mu(tmp_path):
    assert main(["shadow", "run", "--config", str(CONFIGS / "triangle.json"), "--chain",
                 "triangle", "--mu", "-1e-4", "--out", str(tmp_path)]) == 0
    assert len(list(tmp_path.glob("orbit_*.csv"))) == 1
    assert main(["shadow", "run", "--config", str(CONFIGS / "triangle.json"), "--chain",
                 "triangle", "--mu", "0.5", "--out", str(tmp_path)]) == 2
    assert main(["shadow", "run", "--config", str(CONFIGS / "triangle.json"), "--chain",
                 "triangle", "--mu", "0", "--out", str(tmp_path)]) == 2


def test_scan_mu_four_decades(tmp_path):
    assert main(["scan", "mu", "--config", str(CONFIGS / "triangle.json"), "--chain",
                 "triangle", "--mu-range", "-1,3,6", "--out", str(tmp_path)]) == 0
    with open(tmp_path / "scan_triangle.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 4 and all(r["status"] == "ok" for r in rows)
    assert float(rows[0]["mu"]) == -1e-3
    assert main(["scan", "mu", "--config", str(CONFIGS / "triangle.json"), "--chain",
                 "triangle", "--mu-range", "1,1,2", "--out", str(tmp_path)]) == 2


def test_scan_failure_row_exit_1(tmp_path, monkeypatch):
    from degbill import shadow
    from degbill.errors import NoConnectionError
    real = shadow._shadow

    def flaky(sp, mu, q=None, max_iter=20, tol=shadow.GRAD_TOL):
        if abs(mu) < 5e-5:
            raise NoConnectionError("forced failure")
        return real(sp, mu, q, max_iter, tol)

    monkeypatch.setattr(shadow, "_shadow", flaky)
    assert main(["scan", "mu", "--config", str(CONFIGS / "triangle.json"), "--chain",
                 "triangle", "--mu-range", "-1,4,5", "--out", str(tmp_path)]) == 1
    with open(tmp_path / "scan_triangle.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["status"] for r in rows] == ["ok", "failed: forced failure"]


def test_scan_workers_over_chains(tmp_path):
    assert main(["scan", "mu", "--config", str(CONFIGS / "triangle.json"), "--chain",
                 "triangle,pinned", "--mu-range", "-1,4,4", "--workers", "2",
                 "--out", str(tmp_path)]) == 0
    assert (tmp_path / "scan_pinned.csv").exists() and (tmp_path / "scan_triangle.csv").exists()


def test_reg_test(tmp_path, capsys):
    assert main(["reg", "test", "--config", str(CONFIGS / "centers_3d.json")]) == 0
    assert "KS gauge drift" in capsys.readouterr().out
    data = json.loads((CONFIGS / "wires_skew.json").read_text())
    data["problem"]["wires"][0]["frame"] = [[0, 1, 0], [0, 1, 1]]
    assert main(["reg", "test", "--config", _write(tmp_path, "b.json", data)]) == 1
    assert "[FAIL] normal frame orthonormal" in capsys.readouterr().out


def test_tol_override_reaches_runtime(tmp_path):
    assert main(["reg", "test", "--config", str(CONFIGS / "triangle.json"),
                 "--tol-override", "event=1e-12", "--out", str(tmp_path)]) == 0
    assert flow.EVENT_TOL == 1e-12
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["tolerances"]["event"] == 1e-12
    assert main(["reg", "test", "--config", str(CONFIGS / "triangle.json"),
                 "--tol-override", "event"]) == 2


def test_log_level_env(monkeypatch):
    monkeypatch.setenv("DEGBILL_LOG", "DEBUG")
    assert main(["--version"]) == 0
