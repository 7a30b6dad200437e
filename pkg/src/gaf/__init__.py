"""Generative anchored fields: twin endpoint predictors on linear bridges.

A single trunk network feeds two heads. The J head predicts the noise
endpoint of a bridge x_t = (1 - t) z_y + t z_x, the per-class K heads
predict the data endpoint, and their difference v = K - J is the
velocity field integrated at sampling time. Class identity enters as a
conditioning signal (trunk embedding plus a K head per class), so
velocities of different classes can be blended, inverted, and chained
into transport operations.
"""

__version__ = "0.1.0"

from gaf.diffcore import AdamState, ComputationTape, DenseArray, backward, recording
from gaf.model import GafConfig, GafModel, TwinOutput, VelocityQuery, build_model
from gaf.objective import BridgeConfig, BridgeSample, LossBreakdown, make_bridge
from gaf.sampler import TimeGrid, Trajectory, euler_integrate, heun_integrate, make_grid
from gaf.trainer import TrainConfig, load_checkpoint, save_checkpoint, train

__all__ = [
    "AdamState",
    "BridgeConfig",
    "BridgeSample",
    "ComputationTape",
    "DenseArray",
    "GafConfig",
    "GafModel",
    "LossBreakdown",
    "TimeGrid",
    "TrainConfig",
    "Trajectory",
    "TwinOutput",
    "VelocityQuery",
    "backward",
    "build_model",
    "euler_integrate",
    "heun_integrate",
    "load_checkpoint",
    "make_bridge",
    "make_grid",
    "recording",
    "save_checkpoint",
    "train",
    "__version__",
]
