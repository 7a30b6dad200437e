"""Trunk plus twin heads over a linear noise-data bridge.

One shared trunk maps (x_t, t, class) to features. A single J head
predicts the noise endpoint z_y through J = (1 - t) x_t + J_res, and
one K head per class predicts the data endpoint through
K = t x_t + K_res. The anchor terms (1 - t) x_t and t x_t are data,
not parameters, so they enter the graph as constants and gradients
flow only through the residual heads.

Class identity acts twice: it adds a learned embedding to the time
conditioning inside the trunk, and it selects which K head runs. Both
twins therefore see the class, which matters: J must recover the noise
posterior of the class being generated, not a class-averaged one, or
per-class sampling lands on a visibly wrong distribution. Blended
velocity queries evaluate each participating class field separately
and combine them with the query weights, so blends are exactly linear
in the weights by construction.
"""

from dataclasses import dataclass

import numpy as np

from gaf import rng
from gaf.diffcore import DEFAULT_DTYPE, DenseArray, add, concat, gelu, matmul, scalar_mul, sub

_FREQ_MAX = 1000.0


@dataclass(frozen=True)
class GafConfig:
    data_dim: int = 2
    num_classes: int = 3
    trunk_width: int = 256
    trunk_depth: int = 4
    time_embed_size: int = 64
    head_hidden: int = 0  # 0 means 2 * trunk_width
    linear_heads: bool = False
    class_in_trunk: bool = True  # False ablates to a class-blind trunk
    head_init: str = "zero"  # "zero" or "random"
    seed: int = 0

    def hidden_size(self):
        return self.head_hidden if self.head_hidden > 0 else 2 * self.trunk_width

    def validate(self):
        if self.data_dim < 1:
            raise ValueError(f"data_dim must be positive, got {self.data_dim}")
        if self.num_classes < 1:
            raise ValueError(f"num_classes must be positive, got {self.num_classes}")
        if self.trunk_width < 1 or self.trunk_depth < 0:
            raise ValueError("trunk_width must be >= 1 and trunk_depth >= 0")
        if self.trunk_depth > 900:
            raise ValueError("trunk_depth beyond 900 collides with head init streams")
        if self.time_embed_size < 2 or self.time_embed_size % 2 != 0:
            raise ValueError(f"time_embed_size must be even and >= 2, got {self.time_embed_size}")
        if self.head_hidden < 0:
            raise ValueError(f"head_hidden must be >= 0, got {self.head_hidden}")
        if self.head_init not in ("zero", "random"):
            raise ValueError(f"head_init must be 'zero' or 'random', got {self.head_init!r}")


@dataclass
class TwinOutput:
    """Batched twin predictions; all fields are tape values."""

    features: DenseArray
    j: DenseArray
    k: DenseArray
    j_res: DenseArray
    k_res: DenseArray


class VelocityQuery:
    """Convex class weights defining which velocity field to evaluate.

    The field of weights w is v_w = sum_m w_m v_m with v_m the pure
    class-m velocity K_m - J, each term evaluated under its own class
    conditioning. A one-hot weight vector is a plain class-conditional
    field; anything else is a blended field. Classes with zero weight
    are never evaluated, so a one-hot query runs the same computation
    as the single-class path.
    """

    __slots__ = ("weights",)

    def __init__(self, weights):
        w = np.asarray(weights, dtype=np.float64)
        if w.ndim != 1 or w.size == 0:
            raise ValueError(f"weights must be a nonempty vector, got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        if np.any(w < -1e-12):
            raise ValueError(f"weights must be nonnegative, got {w}")
        if abs(float(w.sum()) - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1, got sum {w.sum()!r}")
        self.weights = w

    @classmethod
    def single(cls, class_index, num_classes):
        if not 0 <= class_index < num_classes:
            raise ValueError(f"class index {class_index} out of range for {num_classes} classes")
        w = np.zeros(num_classes)
        w[class_index] = 1.0
        return cls(w)

    @classmethod
    def pair(cls, class_a, class_b, alpha, num_classes):
        """Weights (1 - alpha) on class_a, alpha on class_b."""
        if not 0.0 <= alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
        if class_a == class_b:
            raise ValueError("pair query needs two distinct classes")
        w = np.zeros(num_classes)
        w[class_a] = 1.0 - alpha
        w[class_b] = alpha
        return cls(w)

    def __repr__(self):
        return f"VelocityQuery({np.array2string(self.weights, precision=4)})"


class GafModel:
    """Parameter store plus evaluation counters.

    Parameters live in a name-keyed dict in a fixed canonical order;
    the checkpoint format serializes them in exactly this order.
    """

    def __init__(self, config, params, dtype):
        self.config = config
        self.params = params
        self.dtype = np.dtype(dtype)
        self.counters = {"trunk": 0, "head_j": 0}
        for m in range(config.num_classes):
            self.counters[f"head_k{m}"] = 0

    def reset_counters(self):
        for key in self.counters:
            self.counters[key] = 0

    @property
    def num_params(self):
        return sum(p.data.size for p in self.params.values())

    def param_vector(self):
        return np.concatenate([p.data.reshape(-1) for p in self.params.values()])


def _draw(generator, shape, scale):
    # draws are always float32 and widened later if the model is float64,
    # so the same seed yields numerically identical nets in both dtypes
    return generator.standard_normal(shape, dtype=np.float32) * np.float32(scale)


def _head_param_specs(config, prefix, gen):
    width = config.trunk_width
    hidden = config.hidden_size()
    d = config.data_dim
    random_out = config.head_init == "random"
    if config.linear_heads:
        w = _draw(gen, (width, d), 1.0 / np.sqrt(width)) if random_out else np.zeros((width, d), dtype=np.float32)
        return [(f"{prefix}.w", w), (f"{prefix}.b", np.zeros(d, dtype=np.float32))]
    w1 = _draw(gen, (width, hidden), 1.0 / np.sqrt(width))
    w2 = _draw(gen, (hidden, d), 1.0 / np.sqrt(hidden)) if random_out else np.zeros((hidden, d), dtype=np.float32)
    return [
        (f"{prefix}.w1", w1),
        (f"{prefix}.b1", np.zeros(hidden, dtype=np.float32)),
        (f"{prefix}.w2", w2),
        (f"{prefix}.b2", np.zeros(d, dtype=np.float32)),
    ]


def build_model(config, dtype=DEFAULT_DTYPE):
    """Initialize all parameters from per-component random streams.

    Each component (time projection, class table, every trunk layer,
    every head) draws from its own counter-based stream, so growing the
    model in one place reproduces all other tensors bitwise.
    """
    config.validate()
    dtype = np.dtype(dtype)
    e = config.time_embed_size
    width = config.trunk_width
    d = config.data_dim
    raw = []

    g = rng.stream(config.seed, rng.INIT, rng.INIT_TIME_PROJ)
    raw.append(("time_proj.w1", _draw(g, (e, e), 1.0 / np.sqrt(e))))
    raw.append(("time_proj.b1", np.zeros(e, dtype=np.float32)))
    raw.append(("time_proj.w2", _draw(g, (e, e), 1.0 / np.sqrt(e))))
    raw.append(("time_proj.b2", np.zeros(e, dtype=np.float32)))

    if config.class_in_trunk:
        # embeddings start at the same scale as the projected time features
        # so class identity is visible to the trunk from the first step
        g = rng.stream(config.seed, rng.INIT, rng.INIT_CLASS_TABLE)
        raw.append(("class_table", _draw(g, (config.num_classes, e), 1.0 / np.sqrt(e))))

    g = rng.stream(config.seed, rng.INIT, rng.INIT_TRUNK_IN)
    raw.append(("trunk.in.w", _draw(g, (d + e, width), 1.0 / np.sqrt(d + e))))
    raw.append(("trunk.in.b", np.zeros(width, dtype=np.float32)))
    for i in range(config.trunk_depth):
        g = rng.stream(config.seed, rng.INIT, rng.INIT_TRUNK_BLOCK + i)
        raw.append((f"trunk.block{i}.w", _draw(g, (width, width), 1.0 / np.sqrt(width))))
        raw.append((f"trunk.block{i}.b", np.zeros(width, dtype=np.float32)))

    raw.extend(_head_param_specs(config, "head_j", rng.stream(config.seed, rng.INIT, rng.INIT_HEAD_J)))
    for m in range(config.num_classes):
        raw.extend(_head_param_specs(config, f"head_k{m}", rng.stream(config.seed, rng.INIT, rng.INIT_HEAD_K + m)))

    params = {name: DenseArray(arr.astype(dtype), requires_grad=True) for name, arr in raw}
    return GafModel(config, params, dtype)


def time_features(t_vec, size):
    """Sinusoidal features of bridge time, shape (B, size).

    Geometric frequencies from 1 to 1000 over size/2 channels; sines
    then cosines. Pure function of (t, size).
    """
    half = size // 2
    if half == 1:
        omega = np.ones(1)
    else:
        omega = np.exp(np.linspace(0.0, np.log(_FREQ_MAX), half))
    angles = np.asarray(t_vec, dtype=np.float64)[:, None] * omega[None, :]
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=1)


def embed_time(t, size, proj=None, dtype=DEFAULT_DTYPE):
    """Time embedding, raw or passed through a learned projection.

    With proj=None this is the fixed sinusoidal map. With proj given as
    a dict holding w1, b1, w2, b2 the features go through one hidden
    gelu layer, matching what the trunk consumes internally.
    """
    t_arr = np.asarray(t, dtype=np.float64)
    scalar_in = t_arr.ndim == 0
    t_vec = t_arr.reshape(-1)
    if t_vec.size == 0:
        raise ValueError("embed_time needs at least one time value")
    if not np.all(np.isfinite(t_vec)) or np.any(t_vec < 0.0) or np.any(t_vec > 1.0):
        raise ValueError("time values must be finite and lie in [0, 1]")
    if size < 2 or size % 2 != 0:
        raise ValueError(f"embedding size must be even and >= 2, got {size}")
    if proj is None:
        feats = DenseArray(time_features(t_vec, size).astype(dtype))
        if scalar_in:
            return DenseArray(feats.data[0])
        return feats
    feats = DenseArray(time_features(t_vec, size).astype(proj["w1"].dtype))
    hidden = gelu(add(matmul(feats, proj["w1"]), proj["b1"]))
    return add(matmul(hidden, proj["w2"]), proj["b2"])


def _time_embedding(model, t_vec):
    p = model.params
    feats = DenseArray(time_features(t_vec, model.config.time_embed_size).astype(model.dtype))
    hidden = gelu(add(matmul(feats, p["time_proj.w1"]), p["time_proj.b1"]))
    return add(matmul(hidden, p["time_proj.w2"]), p["time_proj.b2"])


def _onehot(rows, num_classes, dtype):
    out = np.zeros((len(rows), num_classes), dtype=dtype)
    out[np.arange(len(rows)), rows] = 1
    return out


def _trunk(model, x_np, t_vec, class_rows=None):
    """Features for a batch; exactly one trunk pass."""
    cfg = model.config
    p = model.params
    temb = _time_embedding(model, t_vec)
    if cfg.class_in_trunk and class_rows is not None:
        temb = add(temb, matmul(DenseArray(_onehot(class_rows, cfg.num_classes, model.dtype)), p["class_table"]))
    xin = concat([DenseArray(x_np), temb], axis=1)
    h = gelu(add(matmul(xin, p["trunk.in.w"]), p["trunk.in.b"]))
    for i in range(cfg.trunk_depth):
        h = add(h, gelu(add(matmul(h, p[f"trunk.block{i}.w"]), p[f"trunk.block{i}.b"])))
    model.counters["trunk"] += 1
    return h


def _run_head(model, prefix, feats):
    p = model.params
    counter = "head_j" if prefix == "head_j" else prefix
    model.counters[counter] += 1
    if model.config.linear_heads:
        return add(matmul(feats, p[f"{prefix}.w"]), p[f"{prefix}.b"])
    hidden = gelu(add(matmul(feats, p[f"{prefix}.w1"]), p[f"{prefix}.b1"]))
    return add(matmul(hidden, p[f"{prefix}.w2"]), p[f"{prefix}.b2"])


def _routed_k(model, feats, c_vec):
    """Per-row K residuals, each row through its own class head.

    Rows are gathered per class with constant one-hot selectors and
    scattered back the same way; heads of absent classes never run, so
    their parameters receive exact zero gradients.
    """
    classes = np.unique(c_vec)
    if classes.size == 1:
        return _run_head(model, f"head_k{int(classes[0])}", feats)
    n = len(c_vec)
    acc = None
    for m in classes:
        rows = np.nonzero(c_vec == m)[0]
        gather = np.zeros((rows.size, n), dtype=model.dtype)
        gather[np.arange(rows.size), rows] = 1
        part = _run_head(model, f"head_k{int(m)}", matmul(DenseArray(gather), feats))
        scattered = matmul(DenseArray(np.ascontiguousarray(gather.T)), part)
        acc = scattered if acc is None else add(acc, scattered)
    return acc


def _anchor(factor_f64, x_np, dtype):
    # per-sample scalars are formed in float64, cast, then applied in
    # the model dtype so anchors match the bridge construction exactly
    return np.asarray(factor_f64, dtype=np.float64).astype(dtype)[:, None] * x_np


def _validate_batch(model, x_t, t, c=None):
    cfg = model.config
    x = np.asarray(x_t, dtype=model.dtype)
    if x.ndim != 2 or x.shape[1] != cfg.data_dim:
        raise ValueError(f"expected batch of shape (B, {cfg.data_dim}), got {np.shape(x_t)}")
    if not np.all(np.isfinite(x)):
        raise ValueError("bridge points must be finite")
    t_vec = np.asarray(t, dtype=np.float64)
    if t_vec.ndim == 0:
        t_vec = np.full(x.shape[0], float(t_vec))
    if t_vec.shape != (x.shape[0],):
        raise ValueError(f"time shape {np.shape(t)} does not match batch size {x.shape[0]}")
    if not np.all(np.isfinite(t_vec)) or np.any(t_vec < 0.0) or np.any(t_vec > 1.0):
        raise ValueError("bridge times must be finite and lie in [0, 1]")
    if c is None:
        return x, t_vec, None
    c_vec = np.asarray(c)
    if c_vec.ndim == 0:
        c_vec = np.full(x.shape[0], int(c_vec))
    c_vec = c_vec.astype(np.int64)
    if c_vec.shape != (x.shape[0],):
        raise ValueError(f"class shape {np.shape(c)} does not match batch size {x.shape[0]}")
    if np.any(c_vec < 0) or np.any(c_vec >= cfg.num_classes):
        raise ValueError(f"class labels must lie in [0, {cfg.num_classes}), got range "
                         f"[{c_vec.min()}, {c_vec.max()}]")
    return x, t_vec, c_vec


def twin_forward(model, x_t, t, c):
    """Both endpoint predictions for a batch of bridge points.

    x_t is (B, d), t is a scalar or (B,) vector in [0, 1], c holds the
    class label per row. All outputs stay on the active tape.
    """
    x, t_vec, c_vec = _validate_batch(model, x_t, t, c)
    feats = _trunk(model, x, t_vec, class_rows=c_vec)
    j_res = _run_head(model, "head_j", feats)
    k_res = _routed_k(model, feats, c_vec)
    j = add(DenseArray(_anchor(1.0 - t_vec, x, model.dtype)), j_res)
    k = add(DenseArray(_anchor(t_vec, x, model.dtype)), k_res)
    return TwinOutput(features=feats, j=j, k=k, j_res=j_res, k_res=k_res)


def velocity(model, x, t, query):
    """Velocity v = sum_m w_m (K_m - J_m) at one time, as a numpy array.

    Each class with nonzero weight is evaluated as its own conditional
    field (trunk conditioned on m, shared J head, class-m K head) and
    the pure velocities are combined with the query weights, so a blend
    is exactly linear in the weights. A class-blind trunk collapses the
    per-class terms onto one shared trunk and J pass. Accepts a (B, d)
    batch or a single (d,) point and returns the same rank.
    """
    arr = np.asarray(x, dtype=model.dtype)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    w = query.weights
    if w.size != model.config.num_classes:
        raise ValueError(f"query has {w.size} weights but model has {model.config.num_classes} classes")
    x_np, t_vec, _ = _validate_batch(model, arr, float(t))
    anchor_j = DenseArray(_anchor(1.0 - t_vec, x_np, model.dtype))
    anchor_k = DenseArray(_anchor(t_vec, x_np, model.dtype))
    shared = None
    if not model.config.class_in_trunk:
        feats = _trunk(model, x_np, t_vec)
        shared = (feats, add(anchor_j, _run_head(model, "head_j", feats)))
    acc = None
    for m in range(model.config.num_classes):
        wm = float(w[m])
        if wm == 0.0:
            continue
        if shared is not None:
            feats, j = shared
        else:
            feats = _trunk(model, x_np, t_vec, class_rows=np.full(x_np.shape[0], m, dtype=np.int64))
            j = add(anchor_j, _run_head(model, "head_j", feats))
        k_m = add(anchor_k, _run_head(model, f"head_k{m}", feats))
        term = scalar_mul(sub(k_m, j), wm)
        acc = term if acc is None else add(acc, term)
    out = acc.data
    return out[0] if single else out
