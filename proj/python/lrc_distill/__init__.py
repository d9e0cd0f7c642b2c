"""Python bindings for the lrc distillation engine."""

from ._lrc import (
    ConfigError,
    ContractError,
    DimensionError,
    EncoderConfig,
    EncoderModel,
    Error,
    InputError,
    NumericError,
    ParameterError,
    Sample,
    StateError,
    angular_distance,
    cos_nce,
    default_layer_map,
    distill,
    evaluate,
    gen_pair_match,
    gen_parity,
    gen_regression,
    grad_check,
    hard_loss,
    mse_layer_loss,
    param_count,
    parity_label,
    regression_losses,
    soft_loss,
    softmax,
    stage_weights,
    train_teacher,
)

__all__ = [name for name in dir() if not name.startswith("_")]
