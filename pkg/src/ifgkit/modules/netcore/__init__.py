from .params import Adam, CheckpointError, ParamStore, ShapeError, load_checkpoint, save_checkpoint
from .layers import (
    Mlp, dense_backward, dense_forward, l2_normalize, l2_normalize_backward, max_pool, max_pool_backward,
    relu, relu_backward, sigmoid,
)
from .extractor import FeatureExtractorConfig, IntrinsicFeatureExtractor, intrinsic_feature, set_abstraction
from .grad_check import GradCheckReport, check_store_gradients, grad_check

__all__ = [
    'Adam', 'CheckpointError', 'ParamStore', 'ShapeError', 'load_checkpoint', 'save_checkpoint',
    'Mlp', 'dense_backward', 'dense_forward', 'l2_normalize', 'l2_normalize_backward', 'max_pool',
    'max_pool_backward', 'relu', 'relu_backward', 'sigmoid',
    'FeatureExtractorConfig', 'IntrinsicFeatureExtractor', 'intrinsic_feature', 'set_abstraction',
    'GradCheckReport', 'check_store_gradients', 'grad_check',
]
