"""Configuration loading, experiment runners, ablations, replay, and the CLI."""

import dataclasses
import json

import numpy as np
import pytest

from clustercount import cli
from clustercount.embedding import read_trace
from clustercount.harness import (ClusteringSection, ConfigError, GmmClusterer,
                                  PassthroughClusterer, StepwiseClusterer,
                                  ablate_episodic, ablate_kappa, dump_table_text,
                                  emit_toml, load_config, replay_trace,
                                  run_experiment)
from clustercount.pseudocount import table_restore


def _tiny_overrides(**extra):
    """A run that finishes in well under a second: tabular one-room maze."""
    base = {
        "run": {"seeds": [1], "total_steps": 80, "name": "tiny"},
        "env": {"kind": "tabular", "rooms": 1, "room_size": 5,
                "episode_length": 40, "frame_skip": 1,
                "move_quantum": 1.0, "turn_quantum": 90.0,
                "reward_mode": "intrinsic_only"},
        "encoder": {"kind": "identity"},
        "clustering": {"kind": "passthrough"},
        "agent": {"kind": "random"},
    }
    for section, data in extra.items():
        base.setdefault(section, {}).update(data)
    return base


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def test_defaults_load_without_file():
    cfg = load_config()
    assert cfg.run.seeds == [1, 2, 3]
    assert cfg.env.kind == "maze"
    assert cfg.table.kappa == 0.8


def test_toml_file_overrides_defaults(tmp_path):
    path = tmp_path / "exp.toml"
    path.write_text('[table]\nkappa = 0.5\n\n[run]\nseeds = [9]\n')
    cfg = load_config(path)
    assert cfg.table.kappa == 0.5
    assert cfg.run.seeds == [9]
    assert cfg.env.rooms == 9  # untouched default


def test_overrides_beat_the_file(tmp_path):
    path = tmp_path / "exp.toml"
    path.write_text("[table]\nkappa = 0.5\n")
    cfg = load_config(path, {"table": {"kappa": 0.25}})
    assert cfg.table.kappa == 0.25


def test_unknown_section_named():
    with pytest.raises(ConfigError, match=r"unknown section \[tabel\]"):
        load_config(None, {"tabel": {"kappa": 0.5}})


def test_unknown_key_named():
    with pytest.raises(ConfigError, match="unknown key table.kapa"):
        load_config(None, {"table": {"kapa": 0.5}})


def test_type_errors_name_the_key():
    with pytest.raises(ConfigError, match="run.total_steps"):
        load_config(None, {"run": {"total_steps": "many"}})
    with pytest.raises(ConfigError, match="table.kappa"):
        load_config(None, {"table": {"kappa": "high"}})
    # booleans are not acceptable integers
    with pytest.raises(ConfigError, match="run.total_steps"):
        load_config(None, {"run": {"total_steps": True}})
    # ints promote to floats silently
    cfg = load_config(None, {"table": {"kappa": 1}})
    assert cfg.table.kappa == 1.0 and isinstance(cfg.table.kappa, float)


def test_choice_fields_reject_unknown_values():
    with pytest.raises(ConfigError, match="env.kind"):
        load_config(None, {"env": {"kind": "doom"}})
    with pytest.raises(ConfigError, match="clustering.kind"):
        load_config(None, {"clustering": {"kind": "kmeans"}})


def test_semantic_validation():
    with pytest.raises(ConfigError, match="table.kappa"):
        load_config(None, {"table": {"kappa": 1.5}})
    with pytest.raises(ConfigError, match="m_fraction"):
        load_config(None, {"clustering": {"m_fraction": 0.0}})
    with pytest.raises(ConfigError, match="run.seeds"):
        load_config(None, {"run": {"seeds": []}})
    with pytest.raises(ConfigError, match="total_steps"):
        load_config(None, {"run": {"total_steps": 0}})
    with pytest.raises(ConfigError, match="identity"):
        load_config(None, {"env": {"kind": "tabular"},
                           "encoder": {"kind": "random"}})


def test_config_error_is_a_value_error():
    assert issubclass(ConfigError, ValueError)


def test_bad_toml_reports_as_config_error(tmp_path):
    path = tmp_path / "broken.toml"
    path.write_text("[run\nseeds = [1]\n")
    with pytest.raises(ConfigError, match="cannot parse"):
        load_config(path)


def test_emit_toml_round_trips(tmp_path):
    cfg = load_config(None, _tiny_overrides(table={"kappa": 0.37},
                                            run={"trace_path": "tr.bin"}))
    path = tmp_path / "resolved.toml"
    path.write_text(emit_toml(cfg))
    again = load_config(path)
    assert again == cfg


# ---------------------------------------------------------------------------
# clusterer adapters
# ---------------------------------------------------------------------------


def test_gmm_component_count_rule():
    c = GmmClusterer(m_fraction=0.1)
    assert c.n_components(95) == 10   # rounded, not truncated
    assert c.n_components(3) == 1
    assert c.n_components(2400) == 240
    # a fixed count overrides the fraction but is capped at the data size
    c = GmmClusterer(m_fraction=0.1, m_fixed=8)
    assert c.n_components(500) == 8
    assert c.n_components(5) == 5


def test_gmm_clusterer_deterministic_per_episode():
    rng = np.random.default_rng(3)
    emb = rng.standard_normal((60, 4))
    a = GmmClusterer(m_fixed=3, seed=11).cluster(emb, episode_index=2)
    b = GmmClusterer(m_fixed=3, seed=11).cluster(emb, episode_index=2)
    assert np.array_equal(a.labels, b.labels)
    assert np.array_equal(a.centers, b.centers)


def test_stepwise_clusterer_one_cluster_per_step():
    emb = np.arange(12, dtype=np.float64).reshape(6, 2)
    clustering = StepwiseClusterer().cluster(emb, episode_index=0)
    assert np.array_equal(clustering.labels, np.arange(6))
    assert np.array_equal(clustering.centers, emb)


def test_passthrough_clusterer_groups_duplicates():
    emb = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
    clustering = PassthroughClusterer().cluster(emb, episode_index=0)
    assert clustering.centers.shape[0] == 2
    assert clustering.labels[0] == clustering.labels[2]


# ---------------------------------------------------------------------------
# run_experiment
# ---------------------------------------------------------------------------


def test_run_experiment_writes_expected_files(tmp_path):
    cfg = load_config(None, _tiny_overrides(
        run={"stream_steps": True, "trace_path": "trace.bin"}))
    res = run_experiment(cfg, tmp_path / "out")
    out = tmp_path / "out"
    for name in ("resolved_config.toml", "summary.csv", "episodes_seed1.jsonl",
                 "steps_seed1.jsonl", "table_seed1.bin", "trace.bin",
                 "run_info.json"):
        assert (out / name).exists(), name

    s = res["summaries"][0]
    assert s["steps"] >= 80 and s["episodes"] == 2
    # the echoed config reproduces the run's configuration exactly
    assert load_config(out / "resolved_config.toml") == cfg

    lines = (out / "episodes_seed1.jsonl").read_text().splitlines()
    assert len(lines) == s["episodes"]
    last = json.loads(lines[-1])
    assert last["steps_total"] == s["steps"]
    assert last["table_size"] == s["table_size"]

    step_lines = (out / "steps_seed1.jsonl").read_text().splitlines()
    assert len(step_lines) == s["steps"]

    header, row = (out / "summary.csv").read_text().splitlines()
    assert header.startswith("seed,episodes,steps,")
    assert row.split(",")[0] == "1"

    table = table_restore(out / "table_seed1.bin")
    assert table.size == s["table_size"]
    assert table.total_count() == s["table_total"]

    trace = read_trace(out / "trace.bin")
    assert len(trace.episodes) == s["episodes"]
    assert trace.episodes[0].embeddings.shape[1] == 100  # one-hot identity dim


def test_run_experiment_multi_seed_files_and_trace_suffix(tmp_path):
    cfg = load_config(None, _tiny_overrides(
        run={"seeds": [4, 9], "trace_path": "tr.bin"}))
    run_experiment(cfg, tmp_path / "out")
    out = tmp_path / "out"
    for name in ("episodes_seed4.jsonl", "episodes_seed9.jsonl",
                 "table_seed4.bin", "table_seed9.bin",
                 "tr_seed4.bin", "tr_seed9.bin"):
        assert (out / name).exists(), name


def test_run_experiment_deterministic_outputs(tmp_path):
    cfg = load_config(None, _tiny_overrides(run={"stream_steps": True}))
    run_experiment(cfg, tmp_path / "a")
    run_experiment(cfg, tmp_path / "b")
    names = ("resolved_config.toml", "summary.csv", "episodes_seed1.jsonl",
             "steps_seed1.jsonl", "table_seed1.bin")
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == \
               (tmp_path / "b" / name).read_bytes(), name


def test_no_snapshot_skips_table_file(tmp_path):
    cfg = load_config(None, _tiny_overrides(table={"snapshot": False}))
    run_experiment(cfg, tmp_path / "out")
    assert not (tmp_path / "out" / "table_seed1.bin").exists()


def test_clustering_none_runs_without_table(tmp_path):
    cfg = load_config(None, _tiny_overrides(clustering={"kind": "none"}))
    res = run_experiment(cfg, tmp_path / "out")
    s = res["summaries"][0]
    assert s["table_size"] == 0
    assert s["intrinsic_sum"] == 0.0


def test_out_root_env_var(tmp_path, monkeypatch):
    monkeypatch.setenv("CLUSTERCOUNT_OUT_ROOT", str(tmp_path))
    cfg = load_config(None, _tiny_overrides(run={"name": "rooted"}))
    res = run_experiment(cfg)
    assert res["out_dir"] == str(tmp_path / "rooted")
    assert (tmp_path / "rooted" / "summary.csv").exists()


# ---------------------------------------------------------------------------
# ablations
# ---------------------------------------------------------------------------


def test_ablate_kappa_outputs(tmp_path):
    cfg = load_config(None, _tiny_overrides())
    res = ablate_kappa(cfg, [0.5, 0.9], tmp_path / "sweep")
    assert len(res["rows"]) == 2  # two kappas x one seed
    assert {row["kappa"] for row in res["rows"]} == {0.5, 0.9}
    assert (tmp_path / "sweep" / "kappa_summary.csv").exists()
    assert (tmp_path / "sweep" / "kappa_0.5" / "summary.csv").exists()
    assert (tmp_path / "sweep" / "kappa_0.9" / "summary.csv").exists()


def test_ablate_kappa_validation(tmp_path):
    cfg = load_config(None, _tiny_overrides())
    with pytest.raises(ConfigError):
        ablate_kappa(cfg, [], tmp_path / "x")
    with pytest.raises(ConfigError, match="kappa"):
        ablate_kappa(cfg, [1.5], tmp_path / "y")


def test_ablate_episodic_outputs(tmp_path):
    cfg = load_config(None, _tiny_overrides())
    res = ablate_episodic(cfg, tmp_path / "ab")
    variants = {row["variant"] for row in res["rows"]}
    assert variants == {"episodic", "per_step"}
    assert (tmp_path / "ab" / "episodic_summary.csv").exists()
    assert (tmp_path / "ab" / "episodic" / "summary.csv").exists()
    assert (tmp_path / "ab" / "per_step" / "summary.csv").exists()


def test_ablate_episodic_rejects_stepwise_base(tmp_path):
    cfg = load_config(None, _tiny_overrides(clustering={"kind": "stepwise"}))
    with pytest.raises(ConfigError, match="episodic"):
        ablate_episodic(cfg, tmp_path / "x")


# ---------------------------------------------------------------------------
# trace replay
# ---------------------------------------------------------------------------


def test_replay_matches_live_run_bit_for_bit(tmp_path):
    cfg = load_config(None, _tiny_overrides(
        run={"stream_steps": True, "trace_path": "trace.bin"}))
    run_experiment(cfg, tmp_path / "live")

    res = replay_trace(tmp_path / "live" / "trace.bin", tmp_path / "replay",
                       kappa=cfg.table.kappa, ir_scale=cfg.table.ir_scale,
                       clustering=ClusteringSection(kind="passthrough"),
                       master_seed=1)
    live = [json.loads(line) for line in
            (tmp_path / "live" / "steps_seed1.jsonl").read_text().splitlines()]
    replayed = [json.loads(line) for line in
                (tmp_path / "replay" / "replay_rewards.jsonl").read_text().splitlines()]
    assert len(live) == len(replayed)
    for a, b in zip(live, replayed):
        assert a["intrinsic"] == b["intrinsic"]
        assert a["pseudo_count"] == b["pseudo_count"]
        assert a["table_index"] == b["table_index"]

    live_table = (tmp_path / "live" / "table_seed1.bin").read_bytes()
    replay_table = (tmp_path / "replay" / "table_replay.bin").read_bytes()
    assert live_table == replay_table
    assert res["episodes"] == 2


def test_replay_gmm_needs_a_seed(tmp_path):
    cfg = load_config(None, _tiny_overrides(run={"trace_path": "trace.bin"}))
    run_experiment(cfg, tmp_path / "live")
    with pytest.raises(ConfigError, match="seed"):
        replay_trace(tmp_path / "live" / "trace.bin", tmp_path / "replay",
                     clustering=ClusteringSection(kind="gmm", seed=-1))


def test_replay_missing_trace_raises_oserror(tmp_path):
    with pytest.raises(OSError):
        replay_trace(tmp_path / "nope.bin", tmp_path / "replay",
                     clustering=ClusteringSection(kind="passthrough"))


# ---------------------------------------------------------------------------
# dump-table
# ---------------------------------------------------------------------------


def test_dump_table_text(tmp_path):
    cfg = load_config(None, _tiny_overrides())
    res = run_experiment(cfg, tmp_path / "out")
    size = res["summaries"][0]["table_size"]
    text = dump_table_text(tmp_path / "out" / "table_seed1.bin")
    assert text.startswith(f"entries {size} dim 100")
    assert len(text.splitlines()) == size + 1
    limited = dump_table_text(tmp_path / "out" / "table_seed1.bin", limit=1)
    assert f"... {size - 1} more entries" in limited


# ---------------------------------------------------------------------------
# command line
# ---------------------------------------------------------------------------


def _tiny_cli_flags(out, *extra):
    return ["--env", "tabular", "--rooms", "1", "--room-size", "5",
            "--episode-length", "40", "--frame-skip", "1",
            "--move-quantum", "1.0", "--turn-quantum", "90.0",
            "--reward-mode", "intrinsic_only",
            "--encoder", "identity", "--clustering", "passthrough",
            "--agent", "random", "--seed", "1", "--total-steps", "80",
            "--out", str(out), *extra]


def test_cli_run_succeeds(tmp_path, capsys):
    rc = cli.main(["run", *_tiny_cli_flags(tmp_path / "out")])
    assert rc == 0
    assert "wrote" in capsys.readouterr().out
    assert (tmp_path / "out" / "summary.csv").exists()


def test_cli_oracle_mode_preset(tmp_path):
    rc = cli.main(["run", "--oracle-mode", "--rooms", "1", "--room-size", "5",
                   "--episode-length", "40", "--frame-skip", "1",
                   "--move-quantum", "1.0", "--turn-quantum", "90.0",
                   "--agent", "random", "--seed", "1", "--total-steps", "80",
                   "--out", str(tmp_path / "out")])
    assert rc == 0
    resolved = load_config(tmp_path / "out" / "resolved_config.toml")
    assert resolved.env.kind == "tabular"
    assert resolved.encoder.kind == "identity"
    assert resolved.clustering.kind == "passthrough"
    assert resolved.table.kappa == 0.99


def test_cli_config_error_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[table]\nkapa = 0.5\n")
    rc = cli.main(["run", "--config", str(bad)])
    assert rc == 2
    assert "kapa" in capsys.readouterr().err


def test_cli_bad_seed_list_exits_2(tmp_path, capsys):
    rc = cli.main(["run", *_tiny_cli_flags(tmp_path / "out"), "--seeds", "1,x"])
    assert rc == 2
    assert "seeds" in capsys.readouterr().err


def test_cli_missing_trace_exits_3(tmp_path, capsys):
    rc = cli.main(["replay-trace", str(tmp_path / "nope.bin"),
                   "--out", str(tmp_path / "replay")])
    assert rc == 3
    assert "error" in capsys.readouterr().err


def test_cli_corrupt_snapshot_exits_3(tmp_path, capsys):
    junk = tmp_path / "junk.bin"
    junk.write_bytes(b"not a snapshot at all")
    rc = cli.main(["dump-table", str(junk)])
    assert rc == 3
    assert "error" in capsys.readouterr().err


def test_cli_replay_round_trip(tmp_path, capsys):
    rc = cli.main(["run", *_tiny_cli_flags(tmp_path / "live"),
                   "--embedding-trace", "trace.bin", "--stream-steps"])
    assert rc == 0
    rc = cli.main(["replay-trace", str(tmp_path / "live" / "trace.bin"),
                   "--out", str(tmp_path / "replay"),
                   "--clustering", "passthrough", "--kappa", "0.8"])
    assert rc == 0
    assert "replayed 2 episodes" in capsys.readouterr().out


def test_cli_ablate_kappa(tmp_path, capsys):
    rc = cli.main(["ablate-kappa", *_tiny_cli_flags(tmp_path / "sweep"),
                   "--kappas", "0.5,0.9"])
    assert rc == 0
    assert (tmp_path / "sweep" / "kappa_summary.csv").exists()


def test_cli_dump_table_prints_entries(tmp_path, capsys):
    assert cli.main(["run", *_tiny_cli_flags(tmp_path / "out")]) == 0
    capsys.readouterr()
    rc = cli.main(["dump-table", str(tmp_path / "out" / "table_seed1.bin"),
                   "--limit", "2"])
    assert rc == 0
    assert capsys.readouterr().out.startswith("entries ")


def test_cli_unknown_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        cli.main(["frobnicate"])
    assert exc.value.code == 2
