from .config import (
    AblationConfig, ConfigError, InferConfig, PipelineConfig, RefineConfig, RpnConfig, SceneGenConfig, TrainConfig,
    config_from_dict, load_config,
)
from .scene import (
    SceneGenerationError, SceneSample, generate_scene, generate_scenes, read_scene_cloud, read_scenes,
    sample_object_points, write_scene,
)
from .rpn import Proposals, RegionProposalNetwork
from .refine import RefinementHead, pool_points
from .detector import Detector
from .trainer import TrainResult, Trainer, TrainingDivergedError, train
from .inference import Detection, detect, infer
from .core import AblationRow, IfgDetector, write_ablation_csv

__all__ = [
    'AblationConfig', 'ConfigError', 'InferConfig', 'PipelineConfig', 'RefineConfig', 'RpnConfig', 'SceneGenConfig',
    'TrainConfig', 'config_from_dict', 'load_config',
    'SceneGenerationError', 'SceneSample', 'generate_scene', 'generate_scenes', 'read_scene_cloud', 'read_scenes',
    'sample_object_points', 'write_scene',
    'Proposals', 'RegionProposalNetwork', 'RefinementHead', 'pool_points', 'Detector',
    'TrainResult', 'Trainer', 'TrainingDivergedError', 'train', 'Detection', 'detect', 'infer',
    'AblationRow', 'IfgDetector', 'write_ablation_csv',
]
