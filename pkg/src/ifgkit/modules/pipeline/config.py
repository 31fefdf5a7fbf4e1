"""
Configuration of the pipeline: one frozen dataclass per concern, loaded from a
JSON file whose sections mirror the dataclasses.
"""

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Any, Dict, Mapping, Tuple, Type, TypeVar

from src.ifgkit.modules.assign.core import AssignmentConfig
from src.ifgkit.modules.eval.metrics import EvalConfig
from src.ifgkit.modules.losses.CONSTANTS import LossCONSTANTS
from src.ifgkit.modules.netcore.extractor import FeatureExtractorConfig
from src.ifgkit.modules.pipeline.CONSTANTS import PipelineCONSTANTS

T = TypeVar('T')


class ConfigError(ValueError):
    """Raised for unknown sections or keys and for invalid values."""
    pass


@dataclass(frozen=True)
class SceneGenConfig:
    x_range: Tuple[float, float] = (0.0, 40.0)
    y_range: Tuple[float, float] = (-20.0, 20.0)
    z_range: Tuple[float, float] = (-1.5, 1.5)
    min_objects: int = 1
    max_objects: int = 8
    # car, pedestrian, cyclist
    class_weights: Tuple[float, float, float] = (0.5, 0.25, 0.25)
    dim_jitter: float = 0.05
    template_k: int = 1024
    template_seed: int = 0
    # points survive with probability min(1, (reference_distance / d)^2)
    reference_distance: float = 10.0
    min_sensor_distance: float = 3.0
    occlusion_probability: float = 0.3
    occlusion_keep: float = 0.5
    ground_density: float = 0.25
    max_poles: int = 3
    pole_points: int = 200
    noise_sigma: float = 0.02
    max_placement_attempts: int = 100

    def __post_init__(self) -> None:
        for name in ('x_range', 'y_range', 'z_range'):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ConfigError(f"scene.{name} must be increasing, got {(lo, hi)}")
        if not 0 <= self.min_objects <= self.max_objects:
            raise ConfigError(f"Need 0 <= min_objects <= max_objects, got {self.min_objects}, {self.max_objects}")
        if len(self.class_weights) != 3 or min(self.class_weights) < 0 or sum(self.class_weights) <= 0:
            raise ConfigError(f"scene.class_weights needs three non-negative weights, got {self.class_weights}")
        positive = ('reference_distance', 'max_placement_attempts', 'template_k')
        if any(getattr(self, name) <= 0 for name in positive):
            raise ConfigError(f"scene.{', '.join(positive)} must be positive")
        non_negative = ('dim_jitter', 'ground_density', 'noise_sigma', 'max_poles', 'pole_points')
        if any(getattr(self, name) < 0 for name in non_negative):
            raise ConfigError(f"scene.{', '.join(non_negative)} must be non-negative")
        if not 0 <= self.occlusion_probability <= 1 or not 0 < self.occlusion_keep <= 1:
            raise ConfigError("scene.occlusion_probability must lie in [0, 1] and occlusion_keep in (0, 1]")

    @property
    def ground_z(self) -> float:
        return self.z_range[0]


@dataclass(frozen=True)
class RpnConfig:
    cell_size: float = 0.4
    window: int = 3
    # the window is repeated over context_block x context_block neighborhood statistics; 1 disables it
    context_block: int = 3
    hidden: int = 64
    # initial foreground probability of every anchor
    prior_probability: float = 0.01
    pre_nms_top_k: int = 1024
    # log-size residuals are clipped to +-size_delta_clamp before decoding
    size_delta_clamp: float = 2.0

    def __post_init__(self) -> None:
        if self.cell_size <= 0 or self.hidden <= 0 or self.pre_nms_top_k <= 0 or self.size_delta_clamp <= 0:
            raise ConfigError("rpn sizes must be positive")
        if self.window < 1 or self.window % 2 == 0:
            raise ConfigError(f"rpn.window must be a positive odd number, got {self.window}")
        if self.context_block < 1 or self.context_block % 2 == 0:
            raise ConfigError(f"rpn.context_block must be a positive odd number, got {self.context_block}")
        if not 0 < self.prior_probability < 1:
            raise ConfigError(f"rpn.prior_probability must lie in (0, 1), got {self.prior_probability}")

    @property
    def input_dim(self) -> int:
        scales = 1 if self.context_block == 1 else 2
        return scales * self.window * self.window * PipelineCONSTANTS.CELL_FEATURES


@dataclass(frozen=True)
class RefineConfig:
    pool_margin: float = 1.2
    max_points: int = 64
    encoder_dims: Tuple[int, ...] = (3, 32, 64)
    head_hidden: int = 32
    projection_hidden: int = 64
    projection_dim: int = LossCONSTANTS.PROJECTION_DIM
    # RPN proposals plus jittered GT copies, so stage two sees positives before the RPN localizes
    proposal_mode: str = 'mixed'
    jitter_xyz: float = 0.1
    jitter_theta: float = 0.1
    jitter_copies: int = 4

    def __post_init__(self) -> None:
        if self.pool_margin < 1:
            raise ConfigError(f"refine.pool_margin must be at least 1, got {self.pool_margin}")
        if self.proposal_mode not in ('rpn', 'jitter', 'mixed'):
            raise ConfigError(f"Unknown refine.proposal_mode '{self.proposal_mode}'. Use: rpn, jitter, mixed")
        if self.encoder_dims[0] != 3 or len(self.encoder_dims) < 2:
            raise ConfigError(f"refine.encoder_dims must start at 3, got {self.encoder_dims}")
        if min(self.max_points, self.head_hidden, self.projection_hidden, self.projection_dim, self.jitter_copies) <= 0:
            raise ConfigError("refine sizes must be positive")

    @property
    def feature_dim(self) -> int:
        return self.encoder_dims[-1]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    num_scenes: int = 50
    batch_size: int = 2
    learning_rate: float = 1e-3
    schedule: str = 'constant'
    seed: int = 0
    tau: float = LossCONSTANTS.CONTRASTIVE_TAU
    mu: float = LossCONSTANTS.TEMPLATE_MU
    contrastive_reduction: str = 'mean'
    w_conf: float = 1.0
    w_reg: float = 1.0
    w_temp: float = 1.0
    # applied after contrastive_reduction: 'mean' divides the summed L_contra by the number of
    # proposals with a positive, so w_contra = 1 here is much weaker than under 'sum'
    w_contra: float = 1.0
    progress: bool = True

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.num_scenes < 1 or self.batch_size < 1:
            raise ConfigError("train.epochs, num_scenes and batch_size must be positive")
        if self.learning_rate <= 0 or self.tau <= 0 or not 0 < self.mu < 1:
            raise ConfigError("train.learning_rate and tau must be positive, mu in (0, 1)")
        if self.schedule not in ('constant', 'one_cycle'):
            raise ConfigError(f"Unknown train.schedule '{self.schedule}'. Use: constant, one_cycle")
        if self.contrastive_reduction not in ('sum', 'mean'):
            raise ConfigError(f"Unknown train.contrastive_reduction '{self.contrastive_reduction}'. Use: sum, mean")


@dataclass(frozen=True)
class InferConfig:
    preset: str = 'kitti'
    final_nms_threshold: float = 0.1
    score_threshold: float = 0.05
    max_detections: int = 100

    def __post_init__(self) -> None:
        if self.preset not in PipelineCONSTANTS.Presets.BY_NAME:
            raise ConfigError(f"Unknown infer.preset '{self.preset}'. Use: {', '.join(PipelineCONSTANTS.Presets.BY_NAME)}")
        if not 0 <= self.final_nms_threshold <= 1 or not 0 <= self.score_threshold <= 1:
            raise ConfigError("infer thresholds must lie in [0, 1]")

    @property
    def proposal_nms(self):
        return PipelineCONSTANTS.Presets.BY_NAME[self.preset]


@dataclass(frozen=True)
class AblationConfig:
    train_scenes: int = 50
    eval_scenes: int = 200
    eval_seed: int = 10_000

    def __post_init__(self) -> None:
        if self.train_scenes < 1 or self.eval_scenes < 1:
            raise ConfigError("ablation scene counts must be positive")


@dataclass(frozen=True)
class PipelineConfig:
    scene: SceneGenConfig = field(default_factory=SceneGenConfig)
    rpn: RpnConfig = field(default_factory=RpnConfig)
    refine: RefineConfig = field(default_factory=RefineConfig)
    extractor: FeatureExtractorConfig = field(default_factory=FeatureExtractorConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    infer: InferConfig = field(default_factory=InferConfig)
    ablation: AblationConfig = field(default_factory=AblationConfig)
    assign: AssignmentConfig = field(default_factory=AssignmentConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def __post_init__(self) -> None:
        if self.scene.template_k < self.extractor.m:
            raise ConfigError(f"scene.template_k ({self.scene.template_k}) must be at least extractor.m "
                              f"({self.extractor.m})")

    def replace(self, **sections: Mapping[str, Any]) -> 'PipelineConfig':
        """Copy with some fields of some sections overridden, e.g. replace(train={'epochs': 3})."""
        merged = self.to_dict()
        for section, values in sections.items():
            if section not in merged:
                raise ConfigError(f"Unknown config section '{section}'")
            merged[section].update(values)
        return config_from_dict(merged)

    def to_dict(self) -> Dict[str, Dict[str, Any]]:
        return {f.name: dataclasses.asdict(getattr(self, f.name)) for f in dataclasses.fields(self)}


SECTIONS: Dict[str, Type] = {f.name: f.type for f in dataclasses.fields(PipelineConfig)}


def _section(name: str, cls: Type[T], values: Mapping[str, Any]) -> T:
    if not isinstance(values, Mapping):
        raise ConfigError(f"Config section '{name}' must be an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"Unknown key(s) in section '{name}': {', '.join(unknown)}")
    converted = {k: tuple(v) if isinstance(v, list) else v for k, v in values.items()}
    try:
        return cls(**converted)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Invalid value in section '{name}': {e}") from e


def config_from_dict(data: Mapping[str, Any]) -> PipelineConfig:
    unknown = sorted(set(data) - set(SECTIONS))
    if unknown:
        raise ConfigError(f"Unknown config section(s): {', '.join(unknown)}. Use: {', '.join(SECTIONS)}")
    return PipelineConfig(**{name: _section(name, cls, data[name]) for name, cls in SECTIONS.items() if name in data})


def load_config(path: str) -> PipelineConfig:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except OSError as e:
        raise ConfigError(f"Cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config {path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"Config {path} must hold a JSON object")
    return config_from_dict(data)
