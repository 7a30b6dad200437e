"""Training loop, Adam state, and binary checkpoints.

Each iteration draws its minibatch rows, bridge noise, and bridge times
from counter-based streams keyed by the iteration number, so iteration
k is the same computation whether the run got there directly or through
a checkpoint resume. Checkpoints serialize parameters and both Adam
moments as raw little-endian float32 behind a canonical JSON header;
saving, loading, and saving again yields byte-identical files.
"""

import json
import os
import struct
from dataclasses import asdict, dataclass, fields

import numpy as np

from gaf import rng
from gaf.diffcore import AdamState, ComputationTape, adam_step, backward, recording
from gaf.model import GafConfig, build_model
from gaf.objective import gaf_loss, make_bridge

CKPT_MAGIC = b"GAFCKPT1"
CKPT_VERSION = 1
METRICS_HEADER = "iter,loss_pair,loss_res,loss_swap,loss_total"


class CheckpointFormatError(ValueError):
    """Raised when a checkpoint file is malformed, naming the bad part."""


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 256
    iterations: int = 20000
    lr: float = 1e-4
    lam_res: float = 0.003
    lam_swap: float = 0.002
    t_eps: float = 1e-3
    seed: int = 0
    log_interval: int = 200
    checkpoint_interval: int = 0  # 0 writes only the final checkpoint
    weight_decay: float = 0.0
    dataset_id: str = ""

    def validate(self):
        if self.batch_size < 1 or self.iterations < 0:
            raise ValueError("batch_size must be >= 1 and iterations >= 0")
        if not 0.0 < self.t_eps < 0.5:
            raise ValueError(f"t_eps must lie in (0, 0.5), got {self.t_eps}")
        if self.lr <= 0.0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.lam_res < 0.0 or self.lam_swap < 0.0 or self.weight_decay < 0.0:
            raise ValueError("loss weights and weight_decay must be nonnegative")


def dataset_id(ds):
    return f"{ds.kind}-c{ds.num_classes}-m{ds.samples_per_class}-s{ds.seed}"


def _batch_rows(dataset, cfg, iteration):
    g = rng.stream(cfg.seed, rng.TRAIN_BATCH, iteration)
    idx = g.integers(0, dataset.points.shape[0], cfg.batch_size)
    return dataset.points[idx], dataset.labels[idx]


def train_step(model, adam, z_x, c, cfg, iteration):
    """One optimization step on one minibatch of data rows.

    Bridge noise and times come from iteration-keyed streams, not from
    any sequential generator, which is what makes resume exact.
    """
    b = z_x.shape[0]
    d = model.config.data_dim
    z_y = rng.stream(cfg.seed, rng.TRAIN_NOISE, iteration).standard_normal((b, d))
    t = rng.stream(cfg.seed, rng.TRAIN_TIME, iteration).uniform(cfg.t_eps, 1.0 - cfg.t_eps, b)
    sample = make_bridge(z_y.astype(model.dtype), np.asarray(z_x, dtype=model.dtype), t, c)
    tape = ComputationTape()
    with recording(tape):
        total, breakdown = gaf_loss(model, sample, cfg.lam_res, cfg.lam_swap)
    if not np.isfinite(breakdown.total):
        raise RuntimeError(
            f"non-finite loss at iteration {iteration}: pair={breakdown.pair} "
            f"res={breakdown.res} swap={breakdown.swap}")
    grads = backward(tape, total, model.params.values())
    adam_step(adam, model.params, grads)
    return breakdown


def _format_row(iteration, bd):
    vals = ",".join(f"{v:.8g}" for v in bd.as_row())
    return f"{iteration},{vals}"


def train(model, dataset, cfg, out_dir=None, adam=None, start_iteration=0, verbose=False):
    """Run (or continue) training up to cfg.iterations.

    Returns (adam, rows) where rows holds (iteration, LossBreakdown)
    at every logging point. With out_dir set, writes metrics.csv and
    periodic plus final checkpoints there.
    """
    cfg.validate()
    if cfg.dataset_id and cfg.dataset_id != dataset_id(dataset):
        raise ValueError(f"config expects dataset {cfg.dataset_id!r} "
                         f"but got {dataset_id(dataset)!r}")
    if adam is None:
        adam = AdamState(model.params, lr=cfg.lr, weight_decay=cfg.weight_decay)
    rows = []
    log_fh = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        metrics_path = os.path.join(out_dir, "metrics.csv")
        fresh = start_iteration == 0 or not os.path.exists(metrics_path)
        log_fh = open(metrics_path, "w" if fresh else "a")
        if fresh:
            log_fh.write(METRICS_HEADER + "\n")
    try:
        for it in range(start_iteration, cfg.iterations):
            z_x, c = _batch_rows(dataset, cfg, it)
            bd = train_step(model, adam, z_x, c, cfg, it)
            done = it + 1
            if done % cfg.log_interval == 0 or done == cfg.iterations:
                rows.append((done, bd))
                if log_fh is not None:
                    log_fh.write(_format_row(done, bd) + "\n")
                if verbose:
                    print(f"iter {done}/{cfg.iterations} "
                          f"pair {bd.pair:.6f} res {bd.res:.6f} swap {bd.swap:.6f}")
            if out_dir is not None and cfg.checkpoint_interval > 0 and done % cfg.checkpoint_interval == 0:
                save_checkpoint(os.path.join(out_dir, f"checkpoint_{done:07d}.gaf"),
                                model, adam, cfg, done)
        if out_dir is not None:
            save_checkpoint(os.path.join(out_dir, "checkpoint_final.gaf"),
                            model, adam, cfg, cfg.iterations)
    finally:
        if log_fh is not None:
            log_fh.close()
    return adam, rows


def _array_manifest(model):
    names = list(model.params.keys())
    return names + [f"adam.m.{n}" for n in names] + [f"adam.v.{n}" for n in names]


def save_checkpoint(path, model, adam, cfg, iteration):
    """Write the full training state as header JSON plus float32 blocks."""
    names = list(model.params.keys())
    blocks = [model.params[n].data for n in names]
    blocks += [adam.m[n] for n in names]
    blocks += [adam.v[n] for n in names]
    manifest = [{"name": name, "shape": list(arr.shape)}
                for name, arr in zip(_array_manifest(model), blocks)]
    header = {
        "format_version": CKPT_VERSION,
        "model_config": asdict(model.config),
        "train_config": asdict(cfg),
        "iteration": int(iteration),
        "adam": {
            "lr": adam.lr, "beta1": adam.beta1, "beta2": adam.beta2,
            "eps": adam.eps, "weight_decay": adam.weight_decay,
            "step_count": adam.step_count,
        },
        "rng": {"seed": cfg.seed, "iteration": int(iteration)},
        "arrays": manifest,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for arr in blocks:
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _config_from_dict(cls, payload, what):
    known = {f.name for f in fields(cls)}
    unknown = set(payload) - known
    if unknown:
        raise CheckpointFormatError(f"unknown {what} keys in checkpoint: {sorted(unknown)}")
    missing = known - set(payload)
    if missing:
        raise CheckpointFormatError(f"missing {what} keys in checkpoint: {sorted(missing)}")
    return cls(**payload)


def load_checkpoint(path, dtype=np.float32):
    """Rebuild (model, adam, train config, iteration) from a file."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < len(CKPT_MAGIC) + 8 or raw[: len(CKPT_MAGIC)] != CKPT_MAGIC:
        raise CheckpointFormatError("not a checkpoint file: bad magic")
    (hlen,) = struct.unpack_from("<Q", raw, len(CKPT_MAGIC))
    off = len(CKPT_MAGIC) + 8
    if len(raw) < off + hlen:
        raise CheckpointFormatError("checkpoint truncated in header section")
    try:
        header = json.loads(raw[off : off + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"checkpoint header is not valid JSON: {exc}") from exc
    if header.get("format_version") != CKPT_VERSION:
        raise CheckpointFormatError(
            f"unsupported checkpoint version {header.get('format_version')!r}, "
            f"expected {CKPT_VERSION}")
    off += hlen

    model_cfg = _config_from_dict(GafConfig, header["model_config"], "model config")
    train_cfg = _config_from_dict(TrainConfig, header["train_config"], "train config")
    model = build_model(model_cfg, dtype=dtype)
    expected = _array_manifest(model)
    got = [entry["name"] for entry in header["arrays"]]
    if got != expected:
        raise CheckpointFormatError("checkpoint array manifest does not match model layout")

    arrays = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 4
        if len(raw) < off + nbytes:
            raise CheckpointFormatError(f"checkpoint truncated in array {entry['name']!r}")
        arrays[entry["name"]] = np.frombuffer(raw, dtype="<f4", count=count,
                                              offset=off).reshape(shape).copy()
        off += nbytes

    for name, p in model.params.items():
        stored = arrays[name].astype(dtype)
        if stored.shape != p.data.shape:
            raise CheckpointFormatError(
                f"array {name!r} has shape {stored.shape}, expected {p.data.shape}")
        p.data[...] = stored
    ad = header["adam"]
    adam = AdamState(model.params, lr=ad["lr"], beta1=ad["beta1"], beta2=ad["beta2"],
                     eps=ad["eps"], weight_decay=ad["weight_decay"])
    adam.step_count = int(ad["step_count"])
    for name in model.params:
        adam.m[name][...] = arrays[f"adam.m.{name}"].astype(dtype)
        adam.v[name][...] = arrays[f"adam.v.{name}"].astype(dtype)
    return model, adam, train_cfg, int(header["iteration"])


def resume_training(path, dataset, out_dir=None, verbose=False):
    """Continue a checkpointed run to its configured iteration count."""
    model, adam, cfg, iteration = load_checkpoint(path)
    adam_out, rows = train(model, dataset, cfg, out_dir=out_dir, adam=adam,
                           start_iteration=iteration, verbose=verbose)
    return model, adam_out, cfg, rows
