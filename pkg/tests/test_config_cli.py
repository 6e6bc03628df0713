import json

import pytest

from sglab import cli
from sglab.config import ConfigError, load_and_validate, normalize, resolved_grid


def test_defaults_and_overrides():
    cfg = load_and_validate('{"subcommand": "trees", "eps": 0.0625}', overrides={"beta2_pi": 5.8, "seed": None})
    assert cfg.beta2_pi == 5.8 and cfg.eps == 0.0625 and cfg.seed is not None
    assert resolved_grid(cfg) == (32, 2.0 ** -10)


@pytest.mark.parametrize("doc", [
    '{"subcommand": "nope"}',
    '{"subcommand": "trees", "beta2_pi": 6.0}',
    '{"subcommand": "trees", "bogus": 1}',
    '{"subcommand": "trees", "n": 12}',
    '[1, 2]',
    '{not json',
])
def test_invalid_configs(doc):
    with pytest.raises(ConfigError):
        load_and_validate(doc)


def test_normalize_is_stable():
    a = normalize({"subcommand": "simulate", "lambdas": "0.5, 1"})
    b = normalize(json.loads(a))
    assert a == b


def test_trees_run_writes_manifest(tmp_path):
    out = tmp_path / "t"
    assert cli.main(["trees", "--beta2-pi", "5.8", "--seed", "1", "--out", str(out)]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["status"] == "ok" and man["master_seed"] == 1
    rows = (out / "trees.csv").read_text().strip().splitlines()
    assert len(rows) == 27
    names = {f["path"] for f in man["files"]}
    assert {"config.json", "trees.csv"} <= names


def test_exit_codes(tmp_path, capsys):
    assert cli.main(["bogus"]) == 2
    assert cli.main(["trees", "--beta2-pi", "6", "--out", str(tmp_path / "a")]) == 2
    assert "unsupported regime" in capsys.readouterr().err
    code = cli.main(["simulate", "--eps", "0.01", "--n", "16", "--dt", "0.001", "--T", "0.01",
                     "--out", str(tmp_path / "b")])
    assert code == 3
    assert json.loads((tmp_path / "b" / "manifest.json").read_text())["status"] == "refused"


def test_rerun_from_config_is_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    args = ["simulate", "--eps", "0.25", "--n", "16", "--T", "0.0625", "--times", "0.0625"]
    assert cli.main(args + ["--out", str(a)]) == 0
    assert cli.main(["simulate", "--config", str(a / "config.json"), "--out", str(b)]) == 0
    fa = json.loads((a / "manifest.json").read_text())["files"]
    fb = json.loads((b / "manifest.json").read_text())["files"]
    sa = {f["path"]: f["sha256"] for f in fa if f["path"] != "config.json"}
    sb = {f["path"]: f["sha256"] for f in fb if f["path"] != "config.json"}
    assert sa and sa == sb


def test_output_root_env(tmp_path, monkeypatch):
    monkeypatch.setenv("SGLAB_OUTPUT_ROOT", str(tmp_path))
    assert cli.main(["trees", "--seed", "3"]) == 0
    dirs = list(tmp_path.glob("trees-*"))
    assert len(dirs) == 1 and (dirs[0] / "manifest.json").exists()
