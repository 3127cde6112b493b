"""From-scratch convolutional network engine."""

from .layers import ClassAvgPoolHead, LayerSpec, layer_param_count
from .model import (
    DEFAULT_MLP_HIDDEN,
    NetworkModel,
    build_csen1,
    build_csen2,
    build_mlp,
    build_reconnet_baseline,
)
from .train import (
    AdamState,
    TrainConfig,
    adam_step,
    backward,
    loss_and_gradients,
    predict,
    predict_scores,
    softmax_cross_entropy,
    support_probability_map,
    train,
)
