"""Action-conditioned, transformation-based video prediction.

The model emits a bounded per-pixel flow field and two compositing masks per
step; the next frame is the masked blend of the flow-warped input frame and
the sequence's first frame. Designated-pixel probability maps are pushed
through the same flow fields.
"""

from gvf.predictor.model import (
    PredictorConfig,
    PredictorModel,
    PredictorState,
    init_predictor,
    predictor_step,
)
from gvf.predictor.rollout import (
    Rollout,
    initial_pixel_distribution,
    propagate_pixel_distribution,
    rollout,
    rollout_many,
)
from gvf.predictor.train import PredictorTrainConfig, train_predictor

__all__ = [
    "PredictorConfig",
    "PredictorModel",
    "PredictorState",
    "PredictorTrainConfig",
    "Rollout",
    "init_predictor",
    "initial_pixel_distribution",
    "predictor_step",
    "propagate_pixel_distribution",
    "rollout",
    "rollout_many",
    "train_predictor",
]
