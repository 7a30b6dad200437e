"""Command line front end.

Subcommands cover the full workflow on 2-d synthetic data: train a
model, sample it, run the transport operations (interpolation, cycles,
barycentric grids), evaluate against a held-out split, and sweep the
sampler step count. Configuration is a JSON file organized in sections
(model, train, data, sample, transport) merged over built-in desk-scale
defaults; --set section.key=value tweaks single entries. Unknown keys
anywhere are rejected. Exit codes: 0 on success, 2 for configuration
problems, 1 for runtime failures.
"""

import argparse
import copy
import hashlib
import json
import os
import sys
from dataclasses import fields

import numpy as np

import gaf
from gaf import rng
from gaf.data import make_dataset
from gaf.metrics import energy_distance, evaluate_model, sample_class
from gaf.model import GafConfig, build_model
from gaf.raster import scatter_ppm
from gaf.trainer import TrainConfig, load_checkpoint, train
from gaf.transport import (barycentric_grid, cyclic_transport, interpolate_pair)


class ConfigError(ValueError):
    pass


DEFAULT_CONFIG = {
    "out_dir": "runs/default",
    "model": {
        "data_dim": 2,
        "num_classes": 3,
        "trunk_width": 192,
        "trunk_depth": 3,
        "time_embed_size": 64,
        "head_hidden": 0,
        "linear_heads": False,
        "class_in_trunk": True,
        "head_init": "zero",
        "seed": 1,
    },
    "train": {
        "batch_size": 256,
        "iterations": 30000,
        "lr": 1e-4,
        "lam_res": 0.003,
        "lam_swap": 0.002,
        "t_eps": 1e-3,
        "seed": 1,
        "log_interval": 200,
        "checkpoint_interval": 0,
        "weight_decay": 0.0,
        "dataset_id": "",
    },
    "data": {
        "kind": "gaussians",
        "num_classes": 3,
        "samples_per_class": 2000,
        "seed": 1,
        "heldout_seed": 2,
    },
    "sample": {
        "n_steps": 250,
        "schedule": "linear",
        "method": "euler",
        "latents_per_class": 1000,
        "seed": 37,
        "sweep_steps": [2, 5, 10, 20, 80, 250],
    },
    "transport": {
        "pair": [0, 1],
        "alphas": 10,
        "cycle": [0, 1, 2, 0],
        "alpha_steps": 5,
        "classes": [0, 1, 2],
        "resolution": 5,
        "n_steps": 80,
        "cycle_latents": 128,
    },
}


def _merge_section(base, override, path):
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in base:
            raise ConfigError(f"unknown config key {path + key!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config section {path + key!r} must be an object")
            out[key] = _merge_section(base[key], value, path + key + ".")
        else:
            out[key] = value
    return out


def load_config(path=None, overrides=()):
    """Defaults, optionally overlaid with a JSON file and --set pairs."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        try:
            with open(path) as fh:
                user = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("config root must be a JSON object")
        cfg = _merge_section(cfg, user, "")
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set needs section.key=value, got {item!r}")
        dotted, raw = item.split("=", 1)
        parts = dotted.split(".")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = {parts[-1]: value}
        for part in reversed(parts[:-1]):
            node = {part: node}
        cfg = _merge_section(cfg, node, "")
    if cfg["model"]["num_classes"] != cfg["data"]["num_classes"]:
        raise ConfigError(
            f"model.num_classes ({cfg['model']['num_classes']}) must match "
            f"data.num_classes ({cfg['data']['num_classes']})")
    return cfg


def _dataclass_from(cls, section, name):
    known = {f.name for f in fields(cls)}
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"unknown {name} keys: {sorted(unknown)}")
    try:
        obj = cls(**section)
        obj.validate()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {name} section: {exc}") from exc
    return obj


def build_parts(cfg, with_heldout=False):
    """Datasets and a freshly initialized model from a config dict."""
    model_cfg = _dataclass_from(GafConfig, cfg["model"], "model")
    train_cfg = _dataclass_from(TrainConfig, cfg["train"], "train")
    dc = cfg["data"]
    try:
        dataset = make_dataset(dc["kind"], dc["num_classes"], dc["samples_per_class"], dc["seed"])
        heldout = None
        if with_heldout:
            heldout = make_dataset(dc["kind"], dc["num_classes"], dc["samples_per_class"],
                                   dc["heldout_seed"], stats=dataset.stats)
    except ValueError as exc:
        raise ConfigError(f"bad data section: {exc}") from exc
    model = build_model(model_cfg)
    return model, dataset, heldout, train_cfg


def config_digest(cfg):
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def write_manifest(out_dir, command, cfg):
    manifest = {
        "command": command,
        "code_version": gaf.__version__,
        "config": cfg,
        "config_digest": config_digest(cfg),
        "seeds": {
            "model": cfg["model"]["seed"],
            "train": cfg["train"]["seed"],
            "data": cfg["data"]["seed"],
            "sample": cfg["sample"]["seed"],
        },
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return path


def _out_dir(args, cfg):
    out = args.out if args.out else cfg["out_dir"]
    os.makedirs(out, exist_ok=True)
    return out


def _load_model(args):
    if not args.checkpoint:
        raise ConfigError("this command needs --checkpoint")
    return load_checkpoint(args.checkpoint)


def _transport_latent(cfg, d, count=1):
    g = rng.stream(cfg["sample"]["seed"], rng.LATENT, 999)
    z = g.standard_normal((count, d)).astype(np.float32)
    return z[0] if count == 1 else z


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(row + "\n")


def _fmt(values):
    return ",".join(f"{float(v):.8g}" for v in values)


def cmd_train(args, cfg):
    model, dataset, _, train_cfg = build_parts(cfg)
    out = _out_dir(args, cfg)
    train(model, dataset, train_cfg, out_dir=out, verbose=not args.quiet)
    write_manifest(out, "train", cfg)
    print(f"trained {train_cfg.iterations} iterations, wrote {out}/checkpoint_final.gaf")
    return 0


def cmd_sample(args, cfg):
    model, _, _, _ = _load_model(args)
    sc = cfg["sample"]
    out = _out_dir(args, cfg)
    pts, labs = [], []
    for c in range(model.config.num_classes):
        final = sample_class(model, c, sc["latents_per_class"], sc["n_steps"],
                             schedule=sc["schedule"], seed=sc["seed"], method=sc["method"])
        pts.append(final)
        labs.append(np.full(final.shape[0], c, dtype=np.int64))
    pts = np.concatenate(pts)
    labs = np.concatenate(labs)
    d = pts.shape[1]
    header = "class," + ",".join(f"x_{i}" for i in range(d))
    rows = [f"{labs[i]}," + _fmt(pts[i]) for i in range(pts.shape[0])]
    _write_csv(os.path.join(out, "samples.csv"), header, rows)
    if d == 2:
        scatter_ppm(os.path.join(out, "samples.ppm"), pts, labs)
    write_manifest(out, "sample", cfg)
    print(f"wrote {pts.shape[0]} samples to {out}/samples.csv")
    return 0


def cmd_interp(args, cfg):
    model, _, _, _ = _load_model(args)
    tc = cfg["transport"]
    out = _out_dir(args, cfg)
    a, b = (int(v) for v in tc["pair"])
    z0 = _transport_latent(cfg, model.config.data_dim)
    result = interpolate_pair(model, a, b, z0, tc["alphas"], tc["n_steps"],
                              schedule=cfg["sample"]["schedule"])
    d = model.config.data_dim
    header = "frame,alpha," + ",".join(f"x_{i}" for i in range(d))
    rows = [f"{i},{result.alphas[i]:.8g}," + _fmt(result.frames[i])
            for i in range(len(result.alphas))]
    _write_csv(os.path.join(out, "interp.csv"), header, rows)
    write_manifest(out, "interp", cfg)
    print(f"wrote {len(result.alphas)} interpolation frames to {out}/interp.csv")
    return 0


def cmd_cycle(args, cfg):
    model, _, _, _ = _load_model(args)
    tc = cfg["transport"]
    out = _out_dir(args, cfg)
    z0 = _transport_latent(cfg, model.config.data_dim, count=tc["cycle_latents"])
    result = cyclic_transport(model, tc["cycle"], z0, tc["alpha_steps"], tc["n_steps"],
                              schedule=cfg["sample"]["schedule"])
    d = model.config.data_dim
    header = "index,leg,alpha," + ",".join(f"x_{i}" for i in range(d))
    rows = [f"{i},{fr.leg},{fr.alpha:.8g}," + _fmt(fr.sample[0])
            for i, fr in enumerate(result.frames)]
    _write_csv(os.path.join(out, "cycle_frames.csv"), header, rows)
    report = {
        "cycle": result.cycle,
        "n_latents": int(result.closure.shape[0]),
        "n_frames": len(result.frames),
        "closure_distance": result.closure_distance,
        "closure_mean": float(np.mean(result.closure)),
    }
    with open(os.path.join(out, "closure_report.json"), "w") as fh:
        json.dump(report, fh, sort_keys=True, indent=2)
        fh.write("\n")
    write_manifest(out, "cycle", cfg)
    print(f"cycle closure distance {result.closure_distance:.8g} "
          f"over {report['n_latents']} latents")
    return 0


def cmd_bary(args, cfg):
    model, _, _, _ = _load_model(args)
    tc = cfg["transport"]
    out = _out_dir(args, cfg)
    z0 = _transport_latent(cfg, model.config.data_dim)
    result = barycentric_grid(model, tc["classes"], z0, tc["resolution"], tc["n_steps"],
                              schedule=cfg["sample"]["schedule"])
    d = model.config.data_dim
    header = "row,col,alpha,beta,gamma," + ",".join(f"x_{i}" for i in range(d))
    rows = []
    for r in range(result.resolution):
        for c in range(result.resolution):
            w = result.weights[r, c]
            rows.append(f"{r},{c}," + _fmt(w) + "," + _fmt(result.samples[r, c]))
    _write_csv(os.path.join(out, "bary.csv"), header, rows)
    write_manifest(out, "bary", cfg)
    print(f"wrote {result.resolution}x{result.resolution} barycentric grid to {out}/bary.csv")
    return 0


def cmd_eval(args, cfg):
    model, _, _, _ = _load_model(args)
    _, dataset, heldout, _ = build_parts(cfg, with_heldout=True)
    sc = cfg["sample"]
    out = _out_dir(args, cfg)
    report = evaluate_model(model, dataset, heldout, n_per_class=sc["latents_per_class"],
                            n_steps=sc["n_steps"], schedule=sc["schedule"], seed=sc["seed"])
    with open(os.path.join(out, "eval_report.json"), "w") as fh:
        json.dump(report.to_json_dict(), fh, sort_keys=True, indent=2)
        fh.write("\n")
    _write_csv(os.path.join(out, "eval.csv"), report.csv_header(), [report.csv_row()])
    write_manifest(out, "eval", cfg)
    print(f"pooled energy distance {report.pooled_energy:.8g}, "
          f"report in {out}/eval_report.json")
    return 0


def cmd_steps_sweep(args, cfg):
    model, _, _, _ = _load_model(args)
    _, dataset, heldout, _ = build_parts(cfg, with_heldout=True)
    sc = cfg["sample"]
    out = _out_dir(args, cfg)
    rows = []
    for n_steps in sc["sweep_steps"]:
        gen = [sample_class(model, c, sc["latents_per_class"], int(n_steps),
                            schedule=sc["schedule"], seed=sc["seed"],
                            method=sc["method"])
               for c in range(model.config.num_classes)]
        ref = [heldout.class_points(c) for c in range(model.config.num_classes)]
        ed = energy_distance(np.concatenate(gen), np.concatenate(ref))
        per = np.mean([energy_distance(g, r) for g, r in zip(gen, ref)])
        rows.append(f"{int(n_steps)},{ed:.8g},{per:.8g}")
        if not args.quiet:
            print(f"steps {n_steps}: pooled energy distance {ed:.8g}")
    _write_csv(os.path.join(out, "sweep.csv"), "n_steps,pooled_energy,mean_class_energy", rows)
    write_manifest(out, "steps-sweep", cfg)
    return 0


_COMMANDS = {
    "train": cmd_train,
    "sample": cmd_sample,
    "interp": cmd_interp,
    "cycle": cmd_cycle,
    "bary": cmd_bary,
    "eval": cmd_eval,
    "steps-sweep": cmd_steps_sweep,
}


def _build_parser():
    parser = argparse.ArgumentParser(prog="gaf", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="SECTION.KEY=VALUE", help="override one config entry")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--checkpoint", default=None, help="checkpoint file to load")
        p.add_argument("--seed", type=int, default=None,
                       help="override every section seed at once")
        p.add_argument("--steps", type=int, default=None,
                       help="override sampler and transport step counts")
        p.add_argument("--schedule", default=None, choices=["linear", "cosine"],
                       help="override the sampling schedule")
        p.add_argument("--quiet", action="store_true")
    return parser


def _apply_flags(args, cfg):
    if args.seed is not None:
        cfg["model"]["seed"] = args.seed
        cfg["train"]["seed"] = args.seed
        cfg["data"]["seed"] = args.seed
        cfg["data"]["heldout_seed"] = args.seed + 1
        cfg["sample"]["seed"] = args.seed
    if args.steps is not None:
        cfg["sample"]["n_steps"] = args.steps
        cfg["transport"]["n_steps"] = args.steps
    if args.schedule is not None:
        cfg["sample"]["schedule"] = args.schedule
    return cfg


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _apply_flags(args, load_config(args.config, args.overrides))
        return _COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    except (RuntimeError, OSError, ValueError, FloatingPointError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
