"""Distribution distances and model diagnostics for 2-d experiments.

Energy distance and sliced Wasserstein stand in for the heavyweight
perceptual metrics used on images; both are exact computations here,
no estimators with hidden variance knobs. The endpoint and symmetry
diagnostics probe the twins directly: how well J recovers noise near
t = 0, how well K recovers data near t = 1, and how close the field
comes to v(x, 1 - t) = -v(x, t).
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from gaf import rng
from gaf.model import VelocityQuery, twin_forward
from gaf.objective import make_bridge
from gaf.sampler import euler_integrate, heun_integrate, make_grid

_SW_DIRECTIONS = 0  # METRIC stream indices
_RMSE_ROWS = 1
_RMSE_NOISE = 2
_SYM_ROWS = 3
_SYM_NOISE = 4
_SYM_TIME = 5


def _check_cloud_pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ValueError(f"point clouds must be (n, d) with matching d, got {a.shape} and {b.shape}")
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("point clouds must be nonempty")
    return a, b


def energy_distance(a, b):
    """Exact energy distance between two point clouds.

    2 E|a - b| - E|a - a'| - E|b - b'| with all pairs included, so the
    value is zero when a and b are the same cloud and small but positive
    for two finite samples of one distribution.
    """
    a, b = _check_cloud_pair(a, b)
    e_ab = cdist(a, b).mean()
    e_aa = cdist(a, a).mean()
    e_bb = cdist(b, b).mean()
    return float(2.0 * e_ab - e_aa - e_bb)


def sliced_wasserstein(a, b, n_projections=64, seed=0):
    """Mean 1-d W2 over seeded random directions."""
    a, b = _check_cloud_pair(a, b)
    if n_projections < 1:
        raise ValueError(f"n_projections must be >= 1, got {n_projections}")
    d = a.shape[1]
    g = rng.stream(seed, rng.METRIC, _SW_DIRECTIONS)
    dirs = g.standard_normal((n_projections, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    pa = np.sort(a @ dirs.T, axis=0)
    pb = np.sort(b @ dirs.T, axis=0)
    n, m = pa.shape[0], pb.shape[0]
    if n == m:
        diffs = pa - pb
    else:
        grid = max(n, m)
        q = (np.arange(grid) + 0.5) / grid
        qa = pa[np.minimum((q * n).astype(int), n - 1)]
        qb = pb[np.minimum((q * m).astype(int), m - 1)]
        diffs = qa - qb
    return float(np.mean(np.sqrt(np.mean(diffs * diffs, axis=0))))


def fit_centroids(points, labels, num_classes):
    pts = np.asarray(points, dtype=np.float64)
    out = np.empty((num_classes, pts.shape[1]))
    for c in range(num_classes):
        rows = pts[np.asarray(labels) == c]
        if rows.shape[0] == 0:
            raise ValueError(f"no points labeled {c} to fit a centroid")
        out[c] = rows.mean(axis=0)
    return out


def centroid_accuracy(points, labels, centroids):
    """Fraction of points nearest their own class centroid."""
    pts = np.asarray(points, dtype=np.float64)
    dists = cdist(pts, np.asarray(centroids, dtype=np.float64))
    return float(np.mean(dists.argmin(axis=1) == np.asarray(labels)))


def transition_score(points, centroids, class_a, class_b):
    """Continuous position of points between two class centroids.

    0 at centroid a, 1 at centroid b, monotone in between along the
    segment; used to check that interpolated samples actually migrate.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[None, :]
    da = np.linalg.norm(pts - centroids[class_a], axis=1)
    db = np.linalg.norm(pts - centroids[class_b], axis=1)
    return da / (da + db + 1e-12)


def _eval_rows(model, dataset, n_samples, seed, row_slot, noise_slot):
    g_rows = rng.stream(seed, rng.METRIC, row_slot)
    idx = g_rows.integers(0, dataset.points.shape[0], n_samples)
    z_x = dataset.points[idx].astype(model.dtype)
    c = dataset.labels[idx].astype(np.int64)
    g_noise = rng.stream(seed, rng.METRIC, noise_slot)
    z_y = g_noise.standard_normal((n_samples, dataset.data_dim)).astype(model.dtype)
    return z_x, c, z_y


def endpoint_rmse(model, dataset, side, n_samples=512, seed=0, t_eps=1e-3):
    """Root mean squared endpoint error of one twin near its anchor.

    side='noise' scores J against z_y at t = t_eps, side='data' scores
    K against z_x at t = 1 - t_eps.
    """
    if side not in ("noise", "data"):
        raise ValueError(f"side must be 'noise' or 'data', got {side!r}")
    z_x, c, z_y = _eval_rows(model, dataset, n_samples, seed, _RMSE_ROWS, _RMSE_NOISE)
    t = np.full(n_samples, t_eps if side == "noise" else 1.0 - t_eps)
    sample = make_bridge(z_y, z_x, t, c)
    out = twin_forward(model, sample.x_t, sample.t, sample.c)
    pred = out.j.data if side == "noise" else out.k.data
    target = z_y if side == "noise" else z_x
    err = pred.astype(np.float64) - target.astype(np.float64)
    return float(np.sqrt(np.mean(err * err)))


def antisymmetry_residual(model, dataset, n_samples=512, seed=0, t_eps=1e-3):
    """Mean relative size of v(x, t) + v(x, 1 - t) on bridge points.

    Zero for a field that is exactly antisymmetric around t = 1/2.
    """
    z_x, c, z_y = _eval_rows(model, dataset, n_samples, seed, _SYM_ROWS, _SYM_NOISE)
    t = rng.stream(seed, rng.METRIC, _SYM_TIME).uniform(t_eps, 1.0 - t_eps, n_samples)
    sample = make_bridge(z_y, z_x, t, c)
    out = twin_forward(model, sample.x_t, sample.t, sample.c)
    out_flip = twin_forward(model, sample.x_t, 1.0 - sample.t, sample.c)
    v1 = (out.k.data - out.j.data).astype(np.float64)
    v2 = (out_flip.k.data - out_flip.j.data).astype(np.float64)
    num = np.linalg.norm(v1 + v2, axis=1)
    den = np.linalg.norm(v1, axis=1) + 1e-8
    return float(np.mean(num / den))


@dataclass
class EvalReport:
    """Everything the eval command reports, serializable to JSON/CSV."""

    dataset_kind: str
    n_per_class: int
    n_steps: int
    schedule: str
    seed: int
    per_class_energy: list = field(default_factory=list)
    pooled_energy: float = 0.0
    pooled_sliced_w: float = 0.0
    rmse_noise: float = 0.0
    rmse_data: float = 0.0
    antisymmetry: float = 0.0

    def to_json_dict(self):
        return {
            "dataset_kind": self.dataset_kind,
            "n_per_class": self.n_per_class,
            "n_steps": self.n_steps,
            "schedule": self.schedule,
            "seed": self.seed,
            "per_class_energy": [float(v) for v in self.per_class_energy],
            "pooled_energy": self.pooled_energy,
            "pooled_sliced_w": self.pooled_sliced_w,
            "rmse_noise": self.rmse_noise,
            "rmse_data": self.rmse_data,
            "antisymmetry": self.antisymmetry,
        }

    def csv_header(self):
        per_class = ",".join(f"energy_class{c}" for c in range(len(self.per_class_energy)))
        return ("dataset_kind,n_per_class,n_steps,schedule,seed,pooled_energy,"
                "pooled_sliced_w,rmse_noise,rmse_data,antisymmetry," + per_class)

    def csv_row(self):
        head = [self.dataset_kind, str(self.n_per_class), str(self.n_steps),
                self.schedule, str(self.seed)]
        vals = [self.pooled_energy, self.pooled_sliced_w, self.rmse_noise,
                self.rmse_data, self.antisymmetry, *self.per_class_energy]
        return ",".join(head + [f"{v:.8g}" for v in vals])


def sample_class(model, class_index, n_samples, n_steps, schedule="linear",
                 t_eps=1e-3, seed=0, method="euler"):
    """Integrate n_samples latents through one class field."""
    g = rng.stream(seed, rng.LATENT, class_index)
    z0 = g.standard_normal((n_samples, model.config.data_dim)).astype(model.dtype)
    grid = make_grid(n_steps, schedule=schedule, t_eps=t_eps)
    query = VelocityQuery.single(class_index, model.config.num_classes)
    integrate = heun_integrate if method == "heun" else euler_integrate
    return integrate(model, z0, grid, query).final


def evaluate_model(model, dataset, heldout, n_per_class=1000, n_steps=250,
                   schedule="linear", t_eps=1e-3, seed=0):
    """Generate per class and score against a held-out split."""
    per_class = []
    gen_all = []
    ref_all = []
    for c in range(model.config.num_classes):
        gen = sample_class(model, c, n_per_class, n_steps, schedule, t_eps, seed)
        ref = heldout.class_points(c)
        per_class.append(energy_distance(gen, ref))
        gen_all.append(gen)
        ref_all.append(ref)
    gen_pool = np.concatenate(gen_all, axis=0)
    ref_pool = np.concatenate(ref_all, axis=0)
    return EvalReport(
        dataset_kind=dataset.kind,
        n_per_class=n_per_class,
        n_steps=n_steps,
        schedule=schedule,
        seed=seed,
        per_class_energy=per_class,
        pooled_energy=energy_distance(gen_pool, ref_pool),
        pooled_sliced_w=sliced_wasserstein(gen_pool, ref_pool, seed=seed),
        rmse_noise=endpoint_rmse(model, dataset, "noise", seed=seed, t_eps=t_eps),
        rmse_data=endpoint_rmse(model, dataset, "data", seed=seed, t_eps=t_eps),
        antisymmetry=antisymmetry_residual(model, dataset, seed=seed, t_eps=t_eps),
    )
