"""Bridges between noise and data, and the losses trained on them.

A bridge point is x_t = (1 - t) z_y + t z_x for noise z_y, data z_x.
Both twins are supervised at once: the pair loss pulls J toward z_y
weighted by (1 - t) and K toward z_x weighted by t, the residual loss
shrinks the head outputs near the anchored ends, and the swap loss ties
residuals at time t to residuals at time 1 - t so the learned field
behaves consistently when a bridge is traversed in either direction.
All squared norms are means over elements, which keeps the loss weights
independent of batch size and dimension.
"""

from dataclasses import dataclass

import numpy as np

from gaf.diffcore import DenseArray, add, elem_mul, reduce_mean, scalar_mul, square, sub
from gaf.model import twin_forward

SWAP_KINDS = ("swap", "flip", "swap_flip")


@dataclass
class BridgeConfig:
    """Endpoints, times, and classes defining a batch of bridges."""

    z_y: np.ndarray
    z_x: np.ndarray
    t: np.ndarray
    c: np.ndarray


@dataclass
class BridgeSample:
    """Interpolated bridge points together with how they were built."""

    x_t: np.ndarray
    config: BridgeConfig

    @property
    def t(self):
        return self.config.t

    @property
    def c(self):
        return self.config.c


def _validate_config(z_y, z_x, t, c):
    z_y = np.asarray(z_y)
    z_x = np.asarray(z_x)
    if z_y.ndim != 2 or z_y.shape != z_x.shape:
        raise ValueError(f"endpoint shapes must match and be 2-d, got {z_y.shape} and {z_x.shape}")
    if not (np.all(np.isfinite(z_y)) and np.all(np.isfinite(z_x))):
        raise ValueError("bridge endpoints must be finite")
    n = z_y.shape[0]
    t_vec = np.asarray(t, dtype=np.float64)
    if t_vec.ndim == 0:
        t_vec = np.full(n, float(t_vec))
    if t_vec.shape != (n,):
        raise ValueError(f"time shape {np.shape(t)} does not match batch size {n}")
    if not np.all(np.isfinite(t_vec)) or np.any(t_vec < 0.0) or np.any(t_vec > 1.0):
        raise ValueError("bridge times must be finite and lie in [0, 1]")
    c_vec = np.asarray(c)
    if c_vec.ndim == 0:
        c_vec = np.full(n, int(c_vec))
    c_vec = c_vec.astype(np.int64)
    if c_vec.shape != (n,):
        raise ValueError(f"class shape {np.shape(c)} does not match batch size {n}")
    return z_y, z_x, t_vec, c_vec


def bridge_from_config(cfg):
    """Interpolate x_t; at t = 0 and t = 1 this reproduces the endpoint
    arrays bitwise because the scalar factors are exactly 1 and 0."""
    dt = cfg.z_y.dtype
    w_x = cfg.t.astype(dt)[:, None]
    w_y = (1.0 - cfg.t).astype(dt)[:, None]
    return BridgeSample(x_t=w_y * cfg.z_y + w_x * cfg.z_x, config=cfg)


def make_bridge(z_y, z_x, t, c):
    z_y, z_x, t_vec, c_vec = _validate_config(z_y, z_x, t, c)
    return bridge_from_config(BridgeConfig(z_y=z_y, z_x=z_x, t=t_vec, c=c_vec))


def swap_config(cfg, kind):
    """One of the three bridge symmetries.

    swap exchanges the endpoint roles, flip reverses time, swap_flip
    does both and therefore lands on the same bridge point x_t.
    """
    if kind == "swap":
        return BridgeConfig(z_y=cfg.z_x, z_x=cfg.z_y, t=cfg.t, c=cfg.c)
    if kind == "flip":
        return BridgeConfig(z_y=cfg.z_y, z_x=cfg.z_x, t=1.0 - cfg.t, c=cfg.c)
    if kind == "swap_flip":
        return BridgeConfig(z_y=cfg.z_x, z_x=cfg.z_y, t=1.0 - cfg.t, c=cfg.c)
    raise ValueError(f"unknown swap kind {kind!r}, expected one of {SWAP_KINDS}")


def _per_sample_msq(x):
    return reduce_mean(square(x), axis=1)


def _weighted_batch_mean(per_sample, weights_f64, dtype):
    w = DenseArray(weights_f64.astype(dtype))
    return reduce_mean(elem_mul(per_sample, w))


def loss_pair(output, sample):
    """Endpoint regression: (1 - t) on J toward z_y, t on K toward z_x."""
    dt = output.j.dtype
    cfg = sample.config
    err_j = _per_sample_msq(sub(output.j, DenseArray(cfg.z_y.astype(dt))))
    err_k = _per_sample_msq(sub(output.k, DenseArray(cfg.z_x.astype(dt))))
    term_j = _weighted_batch_mean(err_j, 1.0 - cfg.t, dt)
    term_k = _weighted_batch_mean(err_k, cfg.t, dt)
    return add(term_j, term_k)


def loss_res(output, sample):
    """Shrinks each residual head near the end it anchors."""
    dt = output.j_res.dtype
    t = sample.config.t
    term_j = _weighted_batch_mean(_per_sample_msq(output.j_res), 1.0 - t, dt)
    term_k = _weighted_batch_mean(_per_sample_msq(output.k_res), t, dt)
    return add(term_j, term_k)


def loss_swap(output, flipped_output):
    """Couples residuals at t with residuals at 1 - t on the same x_t.

    Penalizes J_res(x, t) + K_res(x, 1 - t) and the mirrored pairing,
    driving the two traversal directions toward opposite residuals.
    """
    s1 = _per_sample_msq(add(output.j_res, flipped_output.k_res))
    s2 = _per_sample_msq(add(output.k_res, flipped_output.j_res))
    return reduce_mean(add(s1, s2))


@dataclass
class LossBreakdown:
    pair: float
    res: float
    swap: float
    total: float
    lam_res: float
    lam_swap: float

    def as_row(self):
        return [self.pair, self.res, self.swap, self.total]


def loss_total(pair, res, swap, lam_res, lam_swap):
    pair, res, swap = float(pair), float(res), float(swap)
    for name, v in (("pair", pair), ("res", res), ("swap", swap)):
        if not np.isfinite(v) or v < 0.0:
            raise FloatingPointError(f"loss component {name} is invalid: {v}")
    total = pair + lam_res * res + lam_swap * swap
    return LossBreakdown(pair=pair, res=res, swap=swap, total=total,
                         lam_res=float(lam_res), lam_swap=float(lam_swap))


def gaf_loss(model, sample, lam_res, lam_swap):
    """Full objective on one batch: scalar tape value plus breakdown.

    Runs the twins at t and at 1 - t (the second pass feeds the swap
    coupling), so each call costs two trunk evaluations.
    """
    out = twin_forward(model, sample.x_t, sample.t, sample.c)
    out_flip = twin_forward(model, sample.x_t, 1.0 - sample.t, sample.c)
    pair = loss_pair(out, sample)
    res = loss_res(out, sample)
    swp = loss_swap(out, out_flip)
    total = add(pair, add(scalar_mul(res, lam_res), scalar_mul(swp, lam_swap)))
    breakdown = loss_total(pair.item(), res.item(), swp.item(), lam_res, lam_swap)
    return total, breakdown
