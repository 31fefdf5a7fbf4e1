"""
Core module for the detector pipeline.

This module defines the `IfgDetector` class, which ties scene synthesis,
training, inference, evaluation and the module ablation together.
"""

import csv
import os
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

from absl import logging
from tqdm import tqdm

from src.ifgkit.modules.eval.labels import LabeledBox
from src.ifgkit.modules.eval.metrics import ApRow, class_ap, evaluate
from src.ifgkit.modules.pipeline.config import PipelineConfig
from src.ifgkit.modules.pipeline.CONSTANTS import PipelineCONSTANTS
from src.ifgkit.modules.pipeline.detector import Detector
from src.ifgkit.modules.pipeline.inference import Detection, detect
from src.ifgkit.modules.pipeline.scene import SceneSample, generate_scenes
from src.ifgkit.modules.pipeline.trainer import TrainResult, Trainer
from src.ifgkit.modules.templates.core import TemplateLibrary
from src.ifgkit.modules.templates.CONSTANTS import TemplateCONSTANTS
from src.ifgkit.utils.CONSTANTS import DEFAULT_OUT_DIR


@dataclass(frozen=True)
class AblationRow:
    method: str
    use_tafe: bool
    use_pscl: bool
    car_ap: Optional[float]
    ped_ap: Optional[float]
    cyc_ap: Optional[float]

    def cells(self) -> Tuple[str, ...]:
        aps = ('skipped' if ap is None else f'{100 * ap:.2f}' for ap in (self.car_ap, self.ped_ap, self.cyc_ap))
        return (self.method, 'yes' if self.use_tafe else 'no', 'yes' if self.use_pscl else 'no', *aps)

    @property
    def mean_ap(self) -> float:
        aps = [ap for ap in (self.car_ap, self.ped_ap, self.cyc_ap) if ap is not None]
        return sum(aps) / len(aps) if aps else 0.0


def detections_as_labels(per_scene: Sequence[Sequence[Detection]]) -> List[LabeledBox]:
    return [d.labeled(frame) for frame, detections in enumerate(per_scene) for d in detections]


def scenes_as_labels(scenes: Sequence[SceneSample]) -> List[LabeledBox]:
    return [label for frame, scene in enumerate(scenes) for label in scene.labels(frame)]


def write_ablation_csv(rows: Sequence[AblationRow], path: str) -> str:
    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(PipelineCONSTANTS.Ablation.HEADER)
        writer.writerows(row.cells() for row in rows)
    return path


class IfgDetector:
    """
    Orchestrates the template-guided two-stage detector.

    This class is the main entry point of the library: it generates synthetic
    scenes, trains detectors with or without the template-feature and
    contrastive modules, runs inference and evaluates the results. Templates
    are built lazily on first use and shared by every scene.

    Parameters
    ----------
    cfg : PipelineConfig, optional
        Every setting of the pipeline (default is `PipelineConfig()`).
    seed : int, optional
        Base seed of scene generation (default is 0).
    out_dir : str, optional
        Directory receiving checkpoints and logs (default is `DEFAULT_OUT_DIR`).

    Attributes
    ----------
    __library : TemplateLibrary
        The lazily-initialized class templates.

    Raises
    ------
    ValueError
        If `seed` is negative.

    Examples
    --------
    >>> pipeline = IfgDetector(PipelineConfig(), seed=0)
    >>> scenes = pipeline.generate_scenes(10)
    >>> result = pipeline.train(scenes, use_tafe=True, use_pscl=True)
    >>> detections = pipeline.infer(result.checkpoint_path, scenes)
    """

    def __init__(self, cfg: PipelineConfig = PipelineConfig(), seed: int = 0, out_dir: str = DEFAULT_OUT_DIR) -> None:
        if seed < 0:
            raise ValueError("Seed cannot be negative")
        self.cfg = cfg
        self.seed = seed
        self.out_dir = out_dir
        self.__library: TemplateLibrary | None = None

    @property
    def library(self) -> TemplateLibrary:
        if self.__library is None:
            self.__library = TemplateLibrary(self.cfg.scene.template_k, self.cfg.scene.template_seed)
        return self.__library

    def generate_scenes(self, count: int, seed: Optional[int] = None) -> List[SceneSample]:
        seed = self.seed if seed is None else seed
        scenes = generate_scenes(self.cfg.scene, count, seed, self.library)
        logging.info('Generated %s scenes from seed %s', count, seed)
        return scenes

    def train(self, scenes: Sequence[SceneSample], use_tafe: bool = False, use_pscl: bool = False,
              out_dir: Optional[str] = None) -> TrainResult:
        trainer = Trainer(self.cfg, use_tafe, use_pscl, self.library)
        return trainer.train(scenes, out_dir or self.out_dir)

    def infer(self, checkpoint_path: str, scenes: Sequence[SceneSample]) -> List[List[Detection]]:
        detector = Detector.from_checkpoint(self.cfg, checkpoint_path)
        return [detect(detector, scene.cloud, self.cfg.infer) for scene in scenes]

    def evaluate(self, detections: Sequence[Sequence[Detection]], scenes: Sequence[SceneSample]) -> List[ApRow]:
        return evaluate(detections_as_labels(detections), scenes_as_labels(scenes), self.cfg.eval)

    def ablate(self, out_dir: Optional[str] = None) -> List[AblationRow]:
        """
        Train and evaluate every method of the module grid on the same
        training scenes and the same held-out scenes.
        """
        out_dir = out_dir or self.out_dir
        ablation = self.cfg.ablation
        train_scenes = self.generate_scenes(ablation.train_scenes, self.seed)
        eval_scenes = self.generate_scenes(ablation.eval_scenes, self.seed + ablation.eval_seed)
        gts = scenes_as_labels(eval_scenes)
        mode = self.cfg.eval.summary_mode

        rows = []
        for method, use_tafe, use_pscl in tqdm(PipelineCONSTANTS.Ablation.METHODS, desc='methods',
                                              disable=not self.cfg.train.progress):
            result = self.train(train_scenes, use_tafe, use_pscl, os.path.join(out_dir, method))
            detections = detections_as_labels(self.infer(result.checkpoint_path, eval_scenes))
            aps = [class_ap(detections, gts, class_id, self.cfg.eval, mode) for class_id in TemplateCONSTANTS.CLASS_IDS]
            rows.append(AblationRow(method, use_tafe, use_pscl, *aps))
            logging.info('Method %s: mean AP %.4f', method, rows[-1].mean_ap)
        return rows
