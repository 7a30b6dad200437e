"""ODE integration of the emergent velocity field.

Sampling never queries a separate velocity network: the field is the
difference of the two endpoint predictions, v = K - J, evaluated along
a time grid from near 0 (noise) to near 1 (data). Euler takes one field
evaluation per step, Heun two. Reversing the grid runs the same field
from data back to noise, which is what the transport operations chain.
"""

from dataclasses import dataclass

import numpy as np

from gaf.model import velocity

SCHEDULES = ("linear", "cosine")
DIRECTIONS = ("forward", "reverse")


@dataclass(frozen=True)
class TimeGrid:
    """Monotone integration nodes covering [t_eps, 1 - t_eps]."""

    nodes: np.ndarray
    n_steps: int
    schedule: str
    t_eps: float
    direction: str

    @property
    def start(self):
        return float(self.nodes[0])

    @property
    def end(self):
        return float(self.nodes[-1])

    def reversed(self):
        return TimeGrid(nodes=np.ascontiguousarray(self.nodes[::-1]), n_steps=self.n_steps,
                        schedule=self.schedule, t_eps=self.t_eps,
                        direction="reverse" if self.direction == "forward" else "forward")


def make_grid(n_steps, schedule="linear", t_eps=1e-3, direction="forward"):
    """Build a grid of n_steps + 1 nodes.

    Endpoints are exactly t_eps and 1 - t_eps for both schedules. The
    cosine schedule concentrates nodes near the two ends.
    """
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    if not 0.0 <= t_eps < 0.5:
        raise ValueError(f"t_eps must lie in [0, 0.5), got {t_eps}")
    if schedule not in SCHEDULES:
        raise ValueError(f"schedule must be one of {SCHEDULES}, got {schedule!r}")
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}, got {direction!r}")
    lo = float(t_eps)
    hi = 1.0 - float(t_eps)
    if schedule == "linear":
        nodes = np.linspace(lo, hi, n_steps + 1)
    else:
        k = np.arange(n_steps + 1, dtype=np.float64)
        s = 0.5 * (1.0 - np.cos(np.pi * k / n_steps))
        nodes = (1.0 - s) * lo + s * hi
        nodes[0] = lo
        nodes[-1] = hi
    if direction == "reverse":
        nodes = np.ascontiguousarray(nodes[::-1])
    return TimeGrid(nodes=nodes, n_steps=n_steps, schedule=schedule,
                    t_eps=float(t_eps), direction=direction)


@dataclass
class Trajectory:
    """Every visited state along a grid, first node included."""

    times: np.ndarray
    states: np.ndarray
    method: str
    n_evals: int

    @property
    def final(self):
        return self.states[-1]

    def write_csv(self, path):
        if self.states.ndim != 2:
            raise ValueError("trajectory CSV export needs a single-latent trajectory")
        d = self.states.shape[1]
        header = "step,t," + ",".join(f"x_{i}" for i in range(d))
        lines = [header]
        for k in range(len(self.times)):
            coords = ",".join(f"{v:.8g}" for v in self.states[k])
            lines.append(f"{k},{self.times[k]:.8g},{coords}")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def integrate_field(field, z0, grid, method="euler"):
    """Integrate dx/dt = field(x, t) along the grid nodes.

    `field` maps (state array, scalar t) to an array of the same shape.
    Step sizes are applied in the state dtype. Raises on a non-finite
    state, naming the step where it appeared.
    """
    if method not in ("euler", "heun"):
        raise ValueError(f"method must be 'euler' or 'heun', got {method!r}")
    z = np.array(z0)
    if z.dtype not in (np.float32, np.float64):
        z = z.astype(np.float32)
    nodes = grid.nodes
    states = np.empty((len(nodes),) + z.shape, dtype=z.dtype)
    states[0] = z
    n_evals = 0
    for k in range(len(nodes) - 1):
        t_k = float(nodes[k])
        dt = z.dtype.type(nodes[k + 1] - nodes[k])
        v = np.asarray(field(z, t_k))
        n_evals += 1
        if v.shape != z.shape:
            raise ValueError(f"field returned shape {v.shape}, expected {z.shape}")
        if method == "euler":
            z = z + dt * v
        else:
            z_pred = z + dt * v
            v2 = np.asarray(field(z_pred, float(nodes[k + 1])))
            n_evals += 1
            z = z + z.dtype.type(0.5) * dt * (v + v2)
        if not np.all(np.isfinite(z)):
            raise FloatingPointError(f"non-finite state at integration step {k + 1}")
        states[k + 1] = z
    return Trajectory(times=nodes.copy(), states=states, method=method, n_evals=n_evals)


def _model_field(model, query):
    return lambda x, t: velocity(model, x, t, query)


def euler_integrate(model, z0, grid, query):
    """One velocity evaluation per step."""
    z = np.asarray(z0, dtype=model.dtype)
    return integrate_field(_model_field(model, query), z, grid, method="euler")


def heun_integrate(model, z0, grid, query):
    """Two velocity evaluations per step, second order accurate."""
    z = np.asarray(z0, dtype=model.dtype)
    return integrate_field(_model_field(model, query), z, grid, method="heun")
