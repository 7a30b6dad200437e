"""Transport algebra on class-conditional velocity fields.

Every class field transports the same standard-normal latent space, so
trained fields can be combined with no extra machinery: convex blends
interpolate between classes, a reverse-then-forward chain carries a
sample from one class to another through its noise preimage, cycles of
blends return to their start, and three-way blends fill a barycentric
patch. Every operation here reduces to integrating some velocity query
along a time grid.
"""

from dataclasses import dataclass

import numpy as np

from gaf.model import VelocityQuery
from gaf.sampler import euler_integrate, heun_integrate, make_grid

_INTEGRATORS = {"euler": euler_integrate, "heun": heun_integrate}


@dataclass(frozen=True)
class TransportLeg:
    """One integration: a velocity query plus grid settings."""

    weights: tuple
    direction: str = "forward"
    n_steps: int = 80
    schedule: str = "linear"

    def query(self):
        return VelocityQuery(np.array(self.weights))


@dataclass
class TransportPlan:
    """Sequence of legs; each starts from the previous leg's endpoint."""

    legs: list
    t_eps: float = 1e-3
    method: str = "euler"


def execute_plan(model, z0, plan):
    """Run all legs, chaining states; returns one Trajectory per leg."""
    if not plan.legs:
        raise ValueError("transport plan has no legs")
    integrate = _INTEGRATORS[plan.method]
    state = np.asarray(z0, dtype=model.dtype)
    trajectories = []
    for leg in plan.legs:
        grid = make_grid(leg.n_steps, schedule=leg.schedule, t_eps=plan.t_eps,
                         direction=leg.direction)
        traj = integrate(model, state, grid, leg.query())
        trajectories.append(traj)
        state = traj.final
    return trajectories


def _single_leg(model, z0, query, n_steps, schedule, t_eps, method, direction):
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    grid = make_grid(n_steps, schedule=schedule, t_eps=t_eps, direction=direction)
    return _INTEGRATORS[method](model, np.asarray(z0, dtype=model.dtype), grid, query)


def generate(model, class_index, z0, n_steps, schedule="linear", t_eps=1e-3,
             method="euler", return_trajectory=False):
    """Integrate latents forward through one class field."""
    query = VelocityQuery.single(class_index, model.config.num_classes)
    traj = _single_leg(model, z0, query, n_steps, schedule, t_eps, method, "forward")
    return traj if return_trajectory else traj.final


def encode(model, class_index, x, n_steps, schedule="linear", t_eps=1e-3,
           method="euler", return_trajectory=False):
    """Integrate samples backward through one class field to noise."""
    query = VelocityQuery.single(class_index, model.config.num_classes)
    traj = _single_leg(model, x, query, n_steps, schedule, t_eps, method, "reverse")
    return traj if return_trajectory else traj.final


@dataclass
class CrossClassResult:
    sample: np.ndarray
    noise: np.ndarray
    encode_trajectory: object
    decode_trajectory: object


def cross_class_transport(model, x, class_from, class_to, n_steps,
                          schedule="linear", t_eps=1e-3, method="euler"):
    """Carry samples from one class to another through shared noise.

    Encodes with the source field (reverse integration), then decodes
    the recovered noise with the target field. Both fields anchor the
    same noise prior, which makes the recovered coordinates a valid
    latent for the target class.
    """
    if class_from == class_to:
        raise ValueError("cross-class transport needs two distinct classes")
    enc = encode(model, class_from, x, n_steps, schedule, t_eps, method,
                 return_trajectory=True)
    dec = generate(model, class_to, enc.final, n_steps, schedule, t_eps, method,
                   return_trajectory=True)
    return CrossClassResult(sample=dec.final, noise=enc.final,
                            encode_trajectory=enc, decode_trajectory=dec)


@dataclass
class InterpolationResult:
    class_a: int
    class_b: int
    alphas: np.ndarray
    frames: np.ndarray  # (n_frames,) + z0.shape


def interpolate_pair(model, class_a, class_b, z0, alphas, n_steps,
                     schedule="linear", t_eps=1e-3, method="euler"):
    """Decode one latent under a sweep of two-class blended fields.

    alphas may be an integer count (uniform sweep including both ends)
    or an explicit vector in [0, 1]. alpha = 0 runs exactly the pure
    class_a computation and alpha = 1 exactly class_b, because heads
    with zero weight are skipped rather than multiplied by zero.
    """
    if isinstance(alphas, (int, np.integer)):
        if alphas < 2:
            raise ValueError(f"need at least 2 interpolation frames, got {alphas}")
        alphas = np.linspace(0.0, 1.0, int(alphas))
    else:
        alphas = np.asarray(alphas, dtype=np.float64)
        if alphas.ndim != 1 or alphas.size == 0:
            raise ValueError("alphas must be a nonempty vector")
        if np.any(alphas < 0.0) or np.any(alphas > 1.0):
            raise ValueError("interpolation weights must lie in [0, 1]")
    n = model.config.num_classes
    frames = []
    for a in alphas:
        query = VelocityQuery.pair(class_a, class_b, float(a), n)
        frames.append(_single_leg(model, z0, query, n_steps, schedule, t_eps,
                                  method, "forward").final)
    return InterpolationResult(class_a=class_a, class_b=class_b,
                               alphas=alphas, frames=np.stack(frames))


@dataclass
class CycleFrame:
    leg: int
    alpha: float
    weights: np.ndarray
    sample: np.ndarray


@dataclass
class CyclicResult:
    cycle: list
    frames: list  # CycleFrame, in traversal order
    closure: np.ndarray  # per-latent distance between first and last frame

    @property
    def closure_distance(self):
        return float(np.max(self.closure))


def _validate_cycle(cycle, num_classes):
    cycle = [int(c) for c in cycle]
    if len(cycle) < 3:
        raise ValueError(f"a cycle needs at least two legs, got {cycle}")
    if cycle[0] != cycle[-1]:
        raise ValueError(f"cycle must return to its start, got {cycle}")
    for c in cycle:
        if not 0 <= c < num_classes:
            raise ValueError(f"cycle class {c} out of range for {num_classes} classes")
    for a, b in zip(cycle, cycle[1:]):
        if a == b:
            raise ValueError(f"cycle repeats class {a} on consecutive stops")
    return cycle


def cyclic_transport(model, cycle, z0, alpha_steps, n_steps,
                     schedule="linear", t_eps=1e-3, method="euler"):
    """Sweep blended fields around a class cycle from one shared latent.

    Every frame decodes the same z0; only the blend weights move. The
    first and last frames are therefore the same one-hot computation,
    so the cycle closes exactly, not just approximately.
    """
    cycle = _validate_cycle(cycle, model.config.num_classes)
    if alpha_steps < 2:
        raise ValueError(f"alpha_steps must be >= 2, got {alpha_steps}")
    n = model.config.num_classes
    frames = []
    for leg, (c_from, c_to) in enumerate(zip(cycle, cycle[1:])):
        alphas = np.linspace(0.0, 1.0, alpha_steps)
        if leg > 0:
            alphas = alphas[1:]  # the previous leg already emitted this frame
        for a in alphas:
            query = VelocityQuery.pair(c_from, c_to, float(a), n)
            final = _single_leg(model, z0, query, n_steps, schedule, t_eps,
                                method, "forward").final
            frames.append(CycleFrame(leg=leg, alpha=float(a),
                                     weights=query.weights.copy(), sample=final))
    first = frames[0].sample
    last = frames[-1].sample
    closure = np.linalg.norm((first - last).reshape(first.shape[0], -1) if first.ndim > 1
                             else (first - last)[None, :], axis=1)
    return CyclicResult(cycle=cycle, frames=frames, closure=closure)


@dataclass
class ChainedCycleResult:
    cycle: list
    start: np.ndarray
    final: np.ndarray
    leg_samples: list
    closure: np.ndarray

    @property
    def closure_distance(self):
        return float(np.max(self.closure))


def chained_cycle_transport(model, cycle, x0, n_steps, schedule="linear",
                            t_eps=1e-3, method="euler"):
    """Walk a cycle by repeated encode and decode, accumulating error.

    Unlike the shared-latent sweep this really moves the sample through
    every intermediate class, so the closure error is nonzero and
    shrinks with the integrator step count.
    """
    cycle = _validate_cycle(cycle, model.config.num_classes)
    x0 = np.asarray(x0, dtype=model.dtype)
    state = x0
    leg_samples = []
    for c_from, c_to in zip(cycle, cycle[1:]):
        res = cross_class_transport(model, state, c_from, c_to, n_steps,
                                    schedule, t_eps, method)
        state = res.sample
        leg_samples.append(state)
    diff = (state - x0).reshape(x0.shape[0], -1) if x0.ndim > 1 else (state - x0)[None, :]
    return ChainedCycleResult(cycle=cycle, start=x0, final=state,
                              leg_samples=leg_samples,
                              closure=np.linalg.norm(diff, axis=1))


def square_to_simplex(u, v):
    """Map the unit square onto three-way convex weights.

    alpha = u (1 - v), beta = (1 - u)(1 - v), gamma = v. The corners
    (1,0), (0,0) and the whole edge v = 1 hit the three vertices with
    exact 0/1 weights, and the weights sum to 1 up to rounding.
    """
    u = float(u)
    v = float(v)
    if not (0.0 <= u <= 1.0 and 0.0 <= v <= 1.0):
        raise ValueError(f"(u, v) must lie in the unit square, got ({u}, {v})")
    return u * (1.0 - v), (1.0 - u) * (1.0 - v), v


def barycentric_grid_weights(resolution):
    """(resolution, resolution, 3) weights; rows move v, columns move u."""
    if resolution < 2:
        raise ValueError(f"resolution must be >= 2, got {resolution}")
    axis = np.linspace(0.0, 1.0, resolution)
    out = np.empty((resolution, resolution, 3))
    for r, v in enumerate(axis):
        for c, u in enumerate(axis):
            out[r, c] = square_to_simplex(u, v)
    return out


@dataclass
class BarycentricResult:
    classes: tuple
    resolution: int
    weights: np.ndarray  # (R, R, 3)
    samples: np.ndarray  # (R, R) + z0.shape


def barycentric_grid(model, classes, z0, resolution, n_steps,
                     schedule="linear", t_eps=1e-3, method="euler"):
    """Decode one latent under every three-class blend on a grid.

    Grid corners run the pure single-class computations for the three
    anchor classes; everything else is a convex blend of their fields.
    """
    classes = tuple(int(c) for c in classes)
    if len(classes) != 3 or len(set(classes)) != 3:
        raise ValueError(f"barycentric transport needs three distinct classes, got {classes}")
    n = model.config.num_classes
    for c in classes:
        if not 0 <= c < n:
            raise ValueError(f"class {c} out of range for {n} classes")
    weights = barycentric_grid_weights(resolution)
    z0 = np.asarray(z0, dtype=model.dtype)
    samples = np.empty((resolution, resolution) + z0.shape, dtype=model.dtype)
    for r in range(resolution):
        for c in range(resolution):
            full = np.zeros(n)
            full[list(classes)] = weights[r, c]
            query = VelocityQuery(full)
            samples[r, c] = _single_leg(model, z0, query, n_steps, schedule,
                                        t_eps, method, "forward").final
    return BarycentricResult(classes=classes, resolution=resolution,
                             weights=weights, samples=samples)
