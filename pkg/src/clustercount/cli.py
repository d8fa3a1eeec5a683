"""Command-line entry points.

Subcommands: run, ablate-kappa, ablate-episodic, replay-trace, dump-table.
Flags override the config file, which overrides built-in defaults.  Exit
codes: 0 success, 2 configuration or usage problems, 3 I/O and file-format
problems, 1 anything unexpected.
"""

import argparse
import dataclasses
import sys

from .embedding import TraceFormatError
from .harness import (ClusteringSection, ConfigError, ablate_episodic,
                      ablate_kappa, dump_table_text, load_config, replay_trace,
                      run_experiment)
from .pseudocount import TableFormatError

_ORACLE_PRESET = {
    "env": {"kind": "tabular"},
    "encoder": {"kind": "identity"},
    "clustering": {"kind": "passthrough"},
    "table": {"kappa": 0.99},
}


def _add_common_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="TOML configuration file")
    p.add_argument("--out", help="output directory (overrides run.out_dir)")
    p.add_argument("--name", help="run name")
    p.add_argument("--seeds", help="comma-separated master seeds, e.g. 1,2,3")
    p.add_argument("--seed", type=int, help="single master seed (shorthand)")
    p.add_argument("--total-steps", type=int, dest="total_steps")
    p.add_argument("--stream-steps", action="store_true", default=None,
                   dest="stream_steps", help="write per-step JSONL streams")
    p.add_argument("--embedding-trace", dest="trace_path",
                   help="record embeddings per episode to this file")
    p.add_argument("--dump-gmm", dest="dump_gmm",
                   help="write the most recent episode's mixture to this file")

    p.add_argument("--env", choices=["maze", "tabular"], dest="env_kind")
    p.add_argument("--env-seed", type=int, dest="env_seed")
    p.add_argument("--rooms", type=int)
    p.add_argument("--room-size", type=int, dest="room_size")
    p.add_argument("--episode-length", type=int, dest="episode_length")
    p.add_argument("--frame-skip", type=int, dest="frame_skip")
    p.add_argument("--move-quantum", type=float, dest="move_quantum")
    p.add_argument("--turn-quantum", type=float, dest="turn_quantum")
    p.add_argument("--obs-height", type=int, dest="obs_height")
    p.add_argument("--obs-width", type=int, dest="obs_width")
    p.add_argument("--fov", type=float)
    p.add_argument("--reward-mode", choices=["sparse", "intrinsic_only"],
                   dest="reward_mode")
    p.add_argument("--noisy-tv", action="store_true", default=None, dest="noisy_tv",
                   help="append an independent random frame to every observation")

    p.add_argument("--encoder", choices=["random", "identity"], dest="encoder_kind")
    p.add_argument("--embed-dim", type=int, dest="embed_dim")
    p.add_argument("--pool", type=int)
    p.add_argument("--encoder-seed", type=int, dest="encoder_seed")

    p.add_argument("--clustering", choices=["gmm", "passthrough", "stepwise", "none"],
                   dest="clustering_kind")
    p.add_argument("--m-fraction", type=float, dest="m_fraction")
    p.add_argument("--m-fixed", type=int, dest="m_fixed")
    p.add_argument("--reg-covar", type=float, dest="reg_covar")
    p.add_argument("--max-iter", type=int, dest="max_iter")
    p.add_argument("--tol", type=float)
    p.add_argument("--n-init", type=int, dest="n_init")
    p.add_argument("--clustering-seed", type=int, dest="clustering_seed")
    p.add_argument("--no-episodic-clustering", action="store_true", default=None,
                   dest="no_episodic",
                   help="ablation: match each step against the table individually")

    p.add_argument("--kappa", type=float)
    p.add_argument("--ir-scale", type=float, dest="ir_scale")
    p.add_argument("--no-snapshot", action="store_true", default=None,
                   dest="no_snapshot", help="skip writing table snapshots")

    p.add_argument("--agent", choices=["qlearning", "random"], dest="agent_kind")
    p.add_argument("--alpha", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--epsilon-final", type=float, dest="epsilon_final")
    p.add_argument("--epsilon-decay", type=float, dest="epsilon_decay")

    p.add_argument("--oracle-mode", action="store_true", default=None,
                   dest="oracle_mode",
                   help="tabular env, identity encoder, passthrough clustering, "
                        "kappa 0.99")


_FLAG_MAP = {
    "name": ("run", "name"), "total_steps": ("run", "total_steps"),
    "out": ("run", "out_dir"), "stream_steps": ("run", "stream_steps"),
    "trace_path": ("run", "trace_path"), "dump_gmm": ("run", "dump_gmm"),
    "env_kind": ("env", "kind"), "env_seed": ("env", "seed"),
    "rooms": ("env", "rooms"), "room_size": ("env", "room_size"),
    "episode_length": ("env", "episode_length"),
    "frame_skip": ("env", "frame_skip"),
    "move_quantum": ("env", "move_quantum"),
    "turn_quantum": ("env", "turn_quantum"),
    "obs_height": ("env", "obs_height"), "obs_width": ("env", "obs_width"),
    "fov": ("env", "fov"), "reward_mode": ("env", "reward_mode"),
    "noisy_tv": ("env", "noisy_tv"),
    "encoder_kind": ("encoder", "kind"), "embed_dim": ("encoder", "dim"),
    "pool": ("encoder", "pool"), "encoder_seed": ("encoder", "seed"),
    "clustering_kind": ("clustering", "kind"),
    "m_fraction": ("clustering", "m_fraction"),
    "m_fixed": ("clustering", "m_fixed"),
    "reg_covar": ("clustering", "reg_covar"),
    "max_iter": ("clustering", "max_iter"), "tol": ("clustering", "tol"),
    "n_init": ("clustering", "n_init"),
    "clustering_seed": ("clustering", "seed"),
    "kappa": ("table", "kappa"), "ir_scale": ("table", "ir_scale"),
    "agent_kind": ("agent", "kind"), "alpha": ("agent", "alpha"),
    "gamma": ("agent", "gamma"), "epsilon": ("agent", "epsilon"),
    "epsilon_final": ("agent", "epsilon_final"),
    "epsilon_decay": ("agent", "epsilon_decay"),
}


def _parse_seed_list(text: str) -> list:
    try:
        return [int(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError:
        raise ConfigError(f"run.seeds: cannot parse {text!r}") from None


def _overrides_from_args(args) -> dict:
    overrides: dict = {}
    if getattr(args, "oracle_mode", None):
        for section, data in _ORACLE_PRESET.items():
            overrides.setdefault(section, {}).update(data)
    for flag, (section, key) in _FLAG_MAP.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides.setdefault(section, {})[key] = value
    if getattr(args, "seeds", None) is not None:
        overrides.setdefault("run", {})["seeds"] = _parse_seed_list(args.seeds)
    elif getattr(args, "seed", None) is not None:
        overrides.setdefault("run", {})["seeds"] = [args.seed]
    if getattr(args, "no_episodic", None):
        overrides.setdefault("clustering", {})["kind"] = "stepwise"
    if getattr(args, "no_snapshot", None):
        overrides.setdefault("table", {})["snapshot"] = False
    return overrides


def _parse_kappa_list(text: str) -> list:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError:
        raise ConfigError(f"cannot parse kappa list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clustercount",
        description="Exploration experiments driven by clustered pseudo-counts.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment over its master seeds")
    _add_common_flags(p_run)

    p_k = sub.add_parser("ablate-kappa", help="sweep the match threshold")
    _add_common_flags(p_k)
    p_k.add_argument("--kappas", default="0.3,0.5,0.8,0.9",
                     help="comma-separated thresholds")

    p_e = sub.add_parser("ablate-episodic",
                         help="episodic clustering vs per-step table growth")
    _add_common_flags(p_e)

    p_r = sub.add_parser("replay-trace",
                         help="recompute intrinsic rewards from an embedding trace")
    p_r.add_argument("trace", help="embedding trace file")
    p_r.add_argument("--out", required=True, help="output directory")
    p_r.add_argument("--kappa", type=float, default=0.8)
    p_r.add_argument("--ir-scale", type=float, default=0.1, dest="ir_scale")
    p_r.add_argument("--clustering", default="gmm",
                     choices=["gmm", "passthrough", "stepwise"], dest="clustering_kind")
    p_r.add_argument("--m-fraction", type=float, dest="m_fraction")
    p_r.add_argument("--m-fixed", type=int, dest="m_fixed")
    p_r.add_argument("--reg-covar", type=float, dest="reg_covar")
    p_r.add_argument("--max-iter", type=int, dest="max_iter")
    p_r.add_argument("--tol", type=float)
    p_r.add_argument("--n-init", type=int, dest="n_init")
    p_r.add_argument("--clustering-seed", type=int, dest="clustering_seed")
    p_r.add_argument("--master-seed", type=int, dest="master_seed",
                     help="derive the clustering seed the way a live run would")

    p_d = sub.add_parser("dump-table", help="print a table snapshot")
    p_d.add_argument("snapshot", help="table snapshot file")
    p_d.add_argument("--limit", type=int, help="print at most this many entries")

    return parser


def _cmd_run(args) -> int:
    cfg = load_config(args.config, _overrides_from_args(args))
    res = run_experiment(cfg)
    for s in res["summaries"]:
        print(f"seed {s['seed']}: {s['episodes']} episodes, {s['steps']} steps, "
              f"table {s['table_size']}, unique visits {s['unique_visits']}")
    print(f"wrote {res['out_dir']}")
    return 0


def _cmd_ablate_kappa(args) -> int:
    cfg = load_config(args.config, _overrides_from_args(args))
    res = ablate_kappa(cfg, _parse_kappa_list(args.kappas))
    for row in res["rows"]:
        print(f"kappa {row['kappa']:g} seed {row['seed']}: "
              f"table {row['table_size']}, unique visits {row['unique_visits']}")
    print(f"wrote {res['out_dir']}")
    return 0


def _cmd_ablate_episodic(args) -> int:
    cfg = load_config(args.config, _overrides_from_args(args))
    res = ablate_episodic(cfg)
    for row in res["rows"]:
        print(f"{row['variant']} seed {row['seed']}: "
              f"table {row['table_size']}, unique visits {row['unique_visits']}")
    print(f"wrote {res['out_dir']}")
    return 0


def _cmd_replay(args) -> int:
    section = ClusteringSection(kind=args.clustering_kind)
    for key in ("m_fraction", "m_fixed", "reg_covar", "max_iter", "tol", "n_init"):
        value = getattr(args, key, None)
        if value is not None:
            setattr(section, key, value)
    if args.clustering_seed is not None:
        section.seed = args.clustering_seed
    res = replay_trace(args.trace, args.out, kappa=args.kappa,
                       ir_scale=args.ir_scale, clustering=section,
                       master_seed=args.master_seed)
    print(f"replayed {res['episodes']} episodes, table {res['table_size']} "
          f"(total count {res['table_total']})")
    print(f"wrote {res['out_dir']}")
    return 0


def _cmd_dump_table(args) -> int:
    sys.stdout.write(dump_table_text(args.snapshot, args.limit))
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "ablate-kappa": _cmd_ablate_kappa,
        "ablate-episodic": _cmd_ablate_episodic,
        "replay-trace": _cmd_replay,
        "dump-table": _cmd_dump_table,
    }
    try:
        return handlers[args.command](args)
    except (TraceFormatError, TableFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
