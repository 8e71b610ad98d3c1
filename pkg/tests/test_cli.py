import json

import pytest

from parsentropy import ConfigError, model_to_dict, reference_model, save_model
from parsentropy.cli import (
    cmd_report,
    cmd_simulate,
    cmd_verify,
    derive_seeds,
    main,
    parse_config,
    resolve_workers,
)


@pytest.fixture()
def m1_file(tmp_path):
    path = tmp_path / "m1.json"
    save_model(reference_model("m1"), path)
    return path


def _write_config(tmp_path, name="config.json", **overrides):
    config = {
        "schema_version": 1,
        "experiment": "convergence",
        "model": "m1.json",
        "parser": {"family": "growing", "schedule": "sqrt"},
        "n_grid": [500, 2000],
        "seeds": [7],
        "mode": "as",
        "tolerance": 0.05,
    }
    config.update(overrides)
    path = tmp_path / name
    path.write_text(json.dumps(config))
    return path


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------


def test_parse_config_roundtrip(tmp_path, m1_file):
    path = _write_config(tmp_path)
    config = parse_config(path)
    assert config.experiment == "convergence"
    assert config.n_grid == (500, 2000)
    assert config.parser_spec.family == "growing"
    assert config.config_hash == parse_config(path).config_hash


def test_parse_config_rejects_unknown_keys(tmp_path):
    path = _write_config(tmp_path, typo_key=1)
    with pytest.raises(ConfigError, match="unknown keys"):
        parse_config(path)


def test_parse_config_rejects_bad_version(tmp_path):
    path = _write_config(tmp_path, schema_version=2)
    with pytest.raises(ConfigError, match="schema_version"):
        parse_config(path)


def test_parse_config_rejects_misplaced_sections(tmp_path):
    path = _write_config(tmp_path, counterexample={"K": 4, "epsilon_schedule": [0.1]})
    with pytest.raises(ConfigError, match="counterexample"):
        parse_config(path)


def test_parse_config_rejects_bad_parser(tmp_path):
    path = _write_config(tmp_path, parser={"family": "fixed", "K": 3, "junk": 1})
    with pytest.raises(ConfigError, match="parser"):
        parse_config(path)


def test_grid_expansion_geometric_with_parity(tmp_path):
    path = _write_config(tmp_path, n_grid={"start": 1000, "stop": 100_000,
                                           "points": 3, "parity": "both"})
    config = parse_config(path)
    assert config.n_grid == (1000, 1001, 10000, 10001, 100000, 100001)


def test_seed_derivation_is_deterministic(tmp_path):
    path = _write_config(tmp_path, seeds={"count": 5, "master_seed": 99})
    config = parse_config(path)
    assert config.seeds == derive_seeds(99, 5)
    assert len(set(config.seeds)) == 5


def test_resolve_workers_env_fallback(monkeypatch):
    monkeypatch.setenv("PARSENTROPY_WORKERS", "3")
    assert resolve_workers(None, None) == 3
    assert resolve_workers(2, None) == 2
    monkeypatch.delenv("PARSENTROPY_WORKERS")
    assert resolve_workers(None, 5) == 5


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def test_simulate_writes_artifacts_and_passes(tmp_path, m1_file):
    path = _write_config(tmp_path)
    out = tmp_path / "runs"
    assert cmd_simulate(str(path), workers=1, out_dir=str(out)) == 0
    run_dir = next(out.iterdir())
    assert (run_dir / "results.csv").exists()
    summary = json.loads((run_dir / "summary.json").read_text())
    assert summary["results"]["verdict"] == "pass"
    manifest = json.loads((run_dir / "manifest.json").read_text())
    assert manifest["config_hash"]
    header = (run_dir / "results.csv").read_text().splitlines()[0]
    assert header == ("N,seed,parser_family,parser_params,blockwise_info:estimate,"
                      "smb_info:estimate,residual:estimate,c_over_N:estimate,"
                      "target:oracle,deviation:estimate")


def test_simulate_is_byte_deterministic_across_runs_and_workers(tmp_path, m1_file):
    path = _write_config(tmp_path, mode="l1", seeds=list(range(20)), n_grid=[2000])
    outs = []
    for i, workers in enumerate((1, 1, 3)):
        out = tmp_path / f"runs{i}"
        assert cmd_simulate(str(path), workers=workers, out_dir=str(out)) == 0
        run_dir = next(out.iterdir())
        outs.append((run_dir / "results.csv").read_bytes())
    assert outs[0] == outs[1] == outs[2]


def test_simulate_counterexample_precondition_exit_code(tmp_path, m1_file):
    path = _write_config(
        tmp_path, experiment="counterexample", parser=None,
        counterexample={"K": 4, "epsilon_schedule": [0.1]},
        n_grid=[1000, 1001, 2000, 2001])
    config = json.loads(path.read_text())
    del config["parser"]
    path.write_text(json.dumps(config))
    # first-order chain: the two limits coincide, so the gap check refuses it
    assert cmd_simulate(str(path), workers=1, out_dir=str(tmp_path / "o")) == 3


def test_simulate_bad_config_exit_code(tmp_path, m1_file):
    path = _write_config(tmp_path, typo=1)
    assert cmd_simulate(str(path), workers=1, out_dir=str(tmp_path / "o")) == 4
    missing = _write_config(tmp_path, name="missing_model.json", model="nope.json")
    assert cmd_simulate(str(missing), workers=1, out_dir=str(tmp_path / "o")) == 4


def test_simulate_perturbation_and_birkhoff(tmp_path, m1_file):
    pert = _write_config(tmp_path, name="pert.json", experiment="perturbation",
                         perturbation={"plan": "trim1"}, n_grid=[10_000, 100_000])
    assert cmd_simulate(str(pert), workers=1, out_dir=str(tmp_path / "p")) == 0
    config = json.loads(_write_config(tmp_path, name="b.json").read_text())
    del config["parser"]
    config.update(experiment="birkhoff", n_grid=[10_000], tolerance=0.01,
                  birkhoff={"observable": "abs_log_z_d", "depth": 8})
    b = tmp_path / "b.json"
    b.write_text(json.dumps(config))
    assert cmd_simulate(str(b), workers=1, out_dir=str(tmp_path / "bout")) == 0


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("suite", ["measures", "martingale", "parsing"])
def test_verify_suites_pass(suite, capsys):
    assert cmd_verify(suite) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out
    assert "checks passed" in out


def test_verify_writes_csv(tmp_path, capsys):
    assert cmd_verify("parsing", out_dir=str(tmp_path)) == 0
    lines = (tmp_path / "verify_results.csv").read_text().splitlines()
    assert lines[0] == "check_name,model_id,parameters,residual,bound,pass"
    assert all(line.endswith("pass") for line in lines[1:])


def test_verify_flags_corrupted_model_file(tmp_path, capsys):
    bad = model_to_dict(reference_model("m1"))
    bad["transition"][0][0] = 0.71  # row sum 1.01
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(bad))
    assert cmd_verify("parsing", model_files=[str(path)]) == 2


def test_verify_accepts_valid_model_file(tmp_path, m1_file):
    assert cmd_verify("parsing", model_files=[str(m1_file)]) == 0


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


def test_report_emits_plot_tables(tmp_path, m1_file):
    path = _write_config(tmp_path)
    out = tmp_path / "runs"
    cmd_simulate(str(path), workers=1, out_dir=str(out))
    run_dir = next(out.iterdir())
    assert cmd_report(str(run_dir)) == 0
    plots = list(run_dir.glob("plot__*.tsv"))
    assert len(plots) == 1
    lines = plots[0].read_text().splitlines()
    assert lines[0].startswith("N\tseed\tblockwise_info:estimate")
    assert len(lines) == 3  # header + two grid points


def test_report_missing_manifest_exits_4(tmp_path):
    assert cmd_report(str(tmp_path)) == 4


def test_main_dispatch(tmp_path, m1_file, capsys):
    path = _write_config(tmp_path)
    assert main(["simulate", "--config", str(path), "--workers", "1",
                 "--out", str(tmp_path / "o")]) == 0
