"""Command-line entry points.

Verbs:
  simulate     one episode, per-slot CSV trace
  sweep        scheduler x sweep-value x repetition grid, CSV + metadata
  gen-dataset  greedy-teacher dataset for the neural scheduler
  train        fit the network, save checkpoint and loss curve
  eval         per-user accuracy of a checkpoint on a dataset
  profile      per-scheduler component timing table

Every run writes a sidecar JSON with the resolved config, seed, and a
config hash so results can be reproduced bit-for-bit (timing columns
excepted). Exit code 0 on success; failures print a JSON error line to
stderr and exit nonzero.
"""

import argparse
import csv
import hashlib
import json
import subprocess
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import neural, protocol
from .config import ConfigError, SCHEDULER_NAMES, SimConfig

_CONFIG_FLAGS = {
    "n_users": int, "n_rx": int, "n_tx_h": int, "n_tx_v": int,
    "n_rf_chains": int, "max_served": int, "n_prb": int,
    "tx_power_dbm": float, "noise_dbm": float, "carrier_hz": float,
    "scs_hz": float, "symbols_per_slot": int, "n_long_blocks": int,
    "slots_per_long_block": int, "ema_factor": float, "cell_radius_m": float,
    "speed_max_mps": float, "link_gain_offset_db": float,
    "scheduler": str, "seed": int,
}


@dataclass
class ExperimentSpec:
    base: SimConfig
    sweep_values: list = field(default_factory=lambda: [8])
    schedulers: list = field(default_factory=lambda: ["greedy-inc"])
    repetitions: int = 1
    output_dir: Path = Path("results")
    output_format: str = "csv"

    def validate(self) -> "ExperimentSpec":
        if not self.sweep_values:
            raise ConfigError("sweep value list must be non-empty")
        if not self.schedulers:
            raise ConfigError("scheduler list must be non-empty")
        for name in self.schedulers:
            if name not in SCHEDULER_NAMES:
                raise ConfigError(f"unknown scheduler {name!r}")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if self.output_format not in ("csv", "json"):
            raise ConfigError("output format must be csv or json")
        return self


def parse_config(path=None, overrides=None) -> SimConfig:
    """Config file plus flag overrides, validated; defaults fill the rest."""
    data = {}
    if path is not None:
        with open(path) as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
    if overrides:
        data.update(overrides)
    return SimConfig.from_dict(data)


def config_hash(config: SimConfig) -> str:
    blob = json.dumps(config.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _git_revision() -> str:
    try:
        out = subprocess.run(["git", "rev-parse", "HEAD"], capture_output=True,
                             text=True, timeout=5)
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return "unknown"


def write_metadata(path: Path, config: SimConfig, extra=None) -> None:
    meta = {"config": config.to_dict(), "config_hash": config_hash(config),
            "seed": config.seed, "git_revision": _git_revision()}
    if extra:
        meta.update(extra)
    path.write_text(json.dumps(meta, indent=2))


# --------------------------------------------------------------------------
# sweep

SWEEP_COLUMNS = ["scheduler", "max_served", "repetition", "seed", "final_pf",
                 "mean_sum_rate", "mean_served_fraction", "mean_slot_time_s",
                 "effective_channel_s", "precoder_s", "search_s"]


def _config_for_cell(base: SimConfig, max_served: int, scheduler: str,
                     repetition: int) -> SimConfig:
    rf = max(base.n_rf_chains, max_served)
    return base.with_overrides(max_served=max_served, n_rf_chains=rf,
                               scheduler=scheduler, seed=base.seed + repetition)


def _run_cell(args) -> dict:
    base, scheduler, value, rep, checkpoint = args
    cfg = _config_for_cell(base, value, scheduler, rep)
    params = neural.load_checkpoint(checkpoint) if scheduler == "learned" else None
    result = protocol.run_episode(cfg, mlp_params=params)
    t = result.mean_timings()
    return {
        "scheduler": scheduler, "max_served": value, "repetition": rep,
        "seed": cfg.seed, "final_pf": result.final_pf,
        "mean_sum_rate": result.mean_sum_rate,
        "mean_served_fraction": result.mean_served / cfg.n_users,
        "mean_slot_time_s": t["slot_total_s"],
        "effective_channel_s": t["effective_channel_s"],
        "precoder_s": t["precoder_s"], "search_s": t["search_s"],
    }


def run_sweep(spec: ExperimentSpec, checkpoint=None, workers: int = 1) -> list:
    spec.validate()
    if "learned" in spec.schedulers and checkpoint is None:
        raise ConfigError("the learned scheduler requires --checkpoint")
    cells = [(spec.base, s, v, r, checkpoint)
             for s in spec.schedulers
             for v in spec.sweep_values
             for r in range(spec.repetitions)]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_cell, cells))
    else:
        records = []
        for cell in cells:
            try:
                records.append(_run_cell(cell))
            except Exception as exc:
                raise RuntimeError(
                    f"sweep cell scheduler={cell[1]} max_served={cell[2]} "
                    f"repetition={cell[3]} failed: {exc}") from exc
    return records


def write_records(records: list, path: Path, fmt: str = "csv") -> None:
    if fmt == "json":
        path.write_text(json.dumps(records, indent=2))
        return
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        writer.writeheader()
        writer.writerows(records)


def emit_tradeoff(records: list, reference: str = "learned") -> list:
    """Per-scheduler (mean PF, mean run time) with ratios to a reference."""
    names = []
    for rec in records:
        if rec["scheduler"] not in names:
            names.append(rec["scheduler"])
    if reference not in names:
        reference = names[0]
    means = {}
    for name in names:
        rows = [r for r in records if r["scheduler"] == name]
        means[name] = (float(np.mean([r["final_pf"] for r in rows])),
                       float(np.mean([r["mean_slot_time_s"] for r in rows])))
    ref_pf, ref_time = means[reference]
    table = []
    for name in names:
        pf, rt = means[name]
        table.append({"scheduler": name, "mean_pf": pf, "mean_run_time_s": rt,
                      "pf_ratio": pf / ref_pf if ref_pf else float("nan"),
                      "run_time_ratio": rt / ref_time if ref_time else float("nan")})
    return table


# --------------------------------------------------------------------------
# argument plumbing

def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="JSON config file")
    parser.add_argument("--save-config", type=Path,
                        help="write the resolved config to this path and continue")
    for name, typ in _CONFIG_FLAGS.items():
        flag = "--" + name.replace("_", "-")
        if name == "scheduler":
            parser.add_argument(flag, type=str, choices=SCHEDULER_NAMES)
        else:
            parser.add_argument(flag, type=typ)


def _resolve_config(args) -> SimConfig:
    overrides = {name: getattr(args, name) for name in _CONFIG_FLAGS
                 if getattr(args, name, None) is not None}
    cfg = parse_config(args.config, overrides)
    if args.save_config:
        args.save_config.write_text(json.dumps(cfg.to_dict(), indent=2))
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mmwsched",
                                     description="mmWave multiuser scheduling simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one episode")
    _add_config_flags(p)
    p.add_argument("--out", type=Path, default=Path("episode.csv"))
    p.add_argument("--checkpoint", type=Path, help="model for scheduler=learned")
    p.add_argument("--dump-channel", type=Path,
                   help="save the first slot's channel tensor as .npz")

    p = sub.add_parser("sweep", help="scheduler / max-served grid")
    _add_config_flags(p)
    p.add_argument("--schedulers", nargs="+", default=["greedy-inc"],
                   choices=SCHEDULER_NAMES)
    p.add_argument("--max-served-values", nargs="+", type=int, default=[8])
    p.add_argument("--repetitions", type=int, default=1)
    p.add_argument("--out-dir", type=Path, default=Path("results"))
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--checkpoint", type=Path)

    p = sub.add_parser("gen-dataset", help="greedy-teacher samples")
    _add_config_flags(p)
    p.add_argument("--episodes", type=int, default=120)
    p.add_argument("--slots", type=int, default=100)
    p.add_argument("--out", type=Path, default=Path("dataset.npz"))
    p.add_argument("--data-seed", type=int, default=0)

    p = sub.add_parser("train", help="train the neural scheduler")
    _add_config_flags(p)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--out", type=Path, default=Path("model.npz"))
    p.add_argument("--loss-curve", type=Path)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--step-size", type=float, default=0.01)
    p.add_argument("--init-seed", type=int, default=0)

    p = sub.add_parser("eval", help="accuracy of a checkpoint")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path, required=True)

    p = sub.add_parser("profile", help="component timings per scheduler")
    _add_config_flags(p)
    p.add_argument("--schedulers", nargs="+",
                   default=["greedy-inc", "greedy-dec", "sorting", "random"],
                   choices=SCHEDULER_NAMES)
    p.add_argument("--out", type=Path, default=Path("profile.csv"))
    p.add_argument("--checkpoint", type=Path)
    return parser


# --------------------------------------------------------------------------
# verb implementations

def _cmd_simulate(args) -> int:
    cfg = _resolve_config(args)
    params = None
    if cfg.scheduler == "learned":
        if args.checkpoint is None:
            raise ConfigError("scheduler=learned requires --checkpoint")
        params = neural.load_checkpoint(args.checkpoint)

    sink_state = {}
    def sink(tensor):
        if args.dump_channel and "h" not in sink_state:
            sink_state["h"] = tensor.h

    result = protocol.run_episode(cfg, mlp_params=params,
                                  channel_sink=sink if args.dump_channel else None)
    if args.dump_channel:
        np.savez_compressed(args.dump_channel, h=sink_state["h"])

    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["slot", "selected", "weighted_sum_rate", "pf",
                         "sum_rate", "n_served"])
        for t in range(result.n_slots):
            writer.writerow([t + 1, " ".join(map(str, result.selected[t])),
                             repr(result.weighted_sum_rates[t]),
                             repr(result.pf_trace[t]),
                             repr(float(result.rates[t].sum())),
                             len(result.selected[t])])
    write_metadata(args.out.with_suffix(".meta.json"), cfg,
                   {"final_pf": result.final_pf,
                    "mean_sum_rate": result.mean_sum_rate})
    print(f"final PF {result.final_pf:.4f}, mean sum rate {result.mean_sum_rate:.2f}, "
          f"mean served {result.mean_served:.2f}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = _resolve_config(args)
    spec = ExperimentSpec(cfg, list(args.max_served_values), list(args.schedulers),
                          args.repetitions, args.out_dir, args.format)
    records = run_sweep(spec, checkpoint=args.checkpoint, workers=args.workers)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    ext = "json" if args.format == "json" else "csv"
    out = args.out_dir / f"sweep.{ext}"
    write_records(records, out, args.format)
    write_metadata(args.out_dir / "sweep.meta.json", cfg,
                   {"schedulers": spec.schedulers,
                    "max_served_values": spec.sweep_values,
                    "repetitions": spec.repetitions})
    tradeoff = emit_tradeoff(records)
    with open(args.out_dir / "tradeoff.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(tradeoff[0].keys()))
        writer.writeheader()
        writer.writerows(tradeoff)
    print(f"wrote {len(records)} records to {out}")
    return 0


def _cmd_gen_dataset(args) -> int:
    cfg = _resolve_config(args)
    dataset = neural.generate_dataset(cfg, args.episodes, args.slots,
                                      seed=args.data_seed)
    neural.save_dataset(args.out, dataset)
    write_metadata(args.out.with_suffix(".meta.json"), cfg,
                   {"episodes": args.episodes, "slots": args.slots,
                    "samples": len(dataset)})
    print(f"wrote {len(dataset)} samples to {args.out}")
    return 0


def _cmd_train(args) -> int:
    cfg = _resolve_config(args)
    dataset = neural.load_dataset(args.dataset)
    dims = (dataset.features.shape[1],) + neural.HIDDEN_LAYERS + (dataset.labels.shape[1],)
    params = neural.init_params(dims, np.random.default_rng(args.init_seed))
    params, losses = neural.train(dataset, params, args.batch_size, args.epochs,
                                  args.step_size, seed=args.init_seed)
    neural.save_checkpoint(args.out, params)
    if args.loss_curve:
        with open(args.loss_curve, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_loss"])
            for epoch, loss in enumerate(losses, start=1):
                writer.writerow([epoch, repr(float(loss))])
    _, (x_eval, y_eval) = dataset.split()
    acc = neural.per_user_accuracy(params, x_eval, y_eval) if len(x_eval) else float("nan")
    write_metadata(args.out.with_suffix(".meta.json"), cfg,
                   {"epochs": args.epochs, "final_train_loss": float(losses[-1]),
                    "eval_accuracy": acc})
    print(f"final train loss {losses[-1]:.5f}, eval accuracy {acc:.4f}")
    return 0


def _cmd_eval(args) -> int:
    dataset = neural.load_dataset(args.dataset)
    params = neural.load_checkpoint(args.checkpoint)
    _, (x_eval, y_eval) = dataset.split()
    acc = neural.per_user_accuracy(params, x_eval, y_eval)
    baseline = neural.all_zeros_accuracy(y_eval)
    print(f"eval accuracy {acc:.4f} vs all-zeros baseline {baseline:.4f}")
    return 0


def _cmd_profile(args) -> int:
    cfg = _resolve_config(args)
    rows = []
    for name in args.schedulers:
        params = None
        if name == "learned":
            if args.checkpoint is None:
                raise ConfigError("scheduler=learned requires --checkpoint")
            params = neural.load_checkpoint(args.checkpoint)
        result = protocol.run_episode(cfg.with_overrides(scheduler=name),
                                      mlp_params=params)
        t = result.mean_timings()
        rows.append({"scheduler": name, **{k: repr(v) for k, v in t.items()}})
    with open(args.out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote timing profile for {len(rows)} schedulers to {args.out}")
    return 0


_COMMANDS = {"simulate": _cmd_simulate, "sweep": _cmd_sweep,
             "gen-dataset": _cmd_gen_dataset, "train": _cmd_train,
             "eval": _cmd_eval, "profile": _cmd_profile}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, OSError, ValueError, RuntimeError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
