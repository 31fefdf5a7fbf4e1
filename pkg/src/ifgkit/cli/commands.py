"""
Command classes behind the `ifgkit` subcommands.

Each command resolves its configuration once (flags over config file over
defaults), writes its artifacts under the output directory and returns the
process exit code from `execute`.
"""

import argparse
import csv
import os
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Tuple, Type

from absl import logging

from src.ifgkit.cli.checks import run_checks
from src.ifgkit.cli.CONSTANTS import CliCONSTANTS
from src.ifgkit.cli.report import print_report
from src.ifgkit.modules.eval.CONSTANTS import EvalCONSTANTS
from src.ifgkit.modules.eval.labels import LabeledBox, read_labels, write_labels
from src.ifgkit.modules.eval.metrics import evaluate, write_ap_csv
from src.ifgkit.modules.pipeline.config import PipelineConfig, load_config
from src.ifgkit.modules.pipeline.CONSTANTS import PipelineCONSTANTS
from src.ifgkit.modules.pipeline.core import IfgDetector, write_ablation_csv
from src.ifgkit.modules.pipeline.detector import Detector
from src.ifgkit.modules.pipeline.inference import detect
from src.ifgkit.modules.pipeline.scene import SceneSample, read_scenes, scene_name, write_scene
from src.ifgkit.modules.templates.core import generate_template
from src.ifgkit.modules.templates.ply_io import write_template
from src.ifgkit.modules.templates.CONSTANTS import TemplateCONSTANTS
from src.ifgkit.utils.CONSTANTS import ABLATION_CSV_FILENAME, AP_CSV_FILENAME, DEFAULT_OUT_DIR

ARTIFACTS = CliCONSTANTS.Artifacts


@dataclass(frozen=True)
class CommandSpec:
    """One parsed invocation: the subcommand, its flags, the config file and the seed."""
    subcommand: str
    flags: Mapping[str, Any] = field(default_factory=dict)
    config_path: Optional[str] = None
    seed: int = 0
    out_dir: str = DEFAULT_OUT_DIR

    def __post_init__(self) -> None:
        if self.seed < 0:
            raise ValueError("Seed cannot be negative")

    def flag(self, name: str, default: Any = None) -> Any:
        value = self.flags.get(name)
        return default if value is None else value


class Command(ABC):
    """
    Base class for subcommands.

    `OVERRIDES` maps a flag to the config (section, key) it replaces when the
    flag is given.
    """
    name: str = ''
    help: str = ''
    OVERRIDES: Dict[str, Tuple[str, str]] = {}

    def __init__(self, spec: CommandSpec) -> None:
        self.spec = spec
        self.__cfg: PipelineConfig | None = None

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser) -> None:
        """Declare the subcommand's own flags."""
        pass

    @property
    def cfg(self) -> PipelineConfig:
        if self.__cfg is None:
            base = load_config(self.spec.config_path) if self.spec.config_path else PipelineConfig()
            sections: Dict[str, Dict[str, Any]] = {}
            for flag, (section, key) in self.OVERRIDES.items():
                if self.spec.flags.get(flag) is not None:
                    sections.setdefault(section, {})[key] = self.spec.flags[flag]
            self.__cfg = base.replace(**sections) if sections else base
        return self.__cfg

    def out_path(self, *parts: str) -> str:
        path = os.path.join(self.spec.out_dir, *parts)
        os.makedirs(os.path.dirname(path) or '.', exist_ok=True)
        return path

    def pipeline(self) -> IfgDetector:
        return IfgDetector(self.cfg, self.spec.seed, self.spec.out_dir)

    @abstractmethod
    def execute(self) -> int:
        """Run the subcommand and return the exit code."""
        pass


def add_scene_source(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--data', metavar='DIR', help='Read scene dumps written by gen-scenes instead of generating')
    parser.add_argument('--scenes', type=int, metavar='N', help='Number of scenes generated from --seed')


def add_progress(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--quiet', dest='progress', action='store_const', const=False,
                        help='Hide progress bars (train.progress)')


def scene_source(command: Command, default_count: int) -> List[SceneSample]:
    data = command.spec.flag('data')
    if data:
        return read_scenes(data)
    return command.pipeline().generate_scenes(command.spec.flag('scenes', default_count))


class GenTemplates(Command):
    name = 'gen-templates'
    help = 'Write one PLY template per class'
    OVERRIDES = {'k': ('scene', 'template_k'), 'seed': ('scene', 'template_seed')}

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser) -> None:
        parser.add_argument('--k', type=int, help='Points per template (scene.template_k)')

    def execute(self) -> int:
        scene = self.cfg.scene
        for class_id in TemplateCONSTANTS.CLASS_IDS:
            template = generate_template(class_id, scene.template_k, scene.template_seed)
            name = TemplateCONSTANTS.CLASSES[class_id].name.lower()
            print(write_template(template, self.out_path(f'{name}.ply')))
        return CliCONSTANTS.EXIT_OK


class GenScenes(Command):
    name = 'gen-scenes'
    help = 'Write synthetic scene dumps (.bin clouds and .txt labels)'

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser) -> None:
        parser.add_argument('--scenes', type=int, metavar='N', help='Number of scenes (default train.num_scenes)')

    def execute(self) -> int:
        scenes = self.pipeline().generate_scenes(self.spec.flag('scenes', self.cfg.train.num_scenes))
        directory = os.path.join(self.spec.out_dir, ARTIFACTS.SCENES_DIR)
        for index, scene in enumerate(scenes):
            write_scene(scene, directory, index)
        dropped = sum(scene.dropped_objects for scene in scenes)
        print(f"Wrote {len(scenes)} scenes to {directory} ({dropped} objects dropped without points)")
        return CliCONSTANTS.EXIT_OK


class Train(Command):
    name = 'train'
    help = 'Train a detector and write its checkpoint and loss log'
    OVERRIDES = {
        'epochs': ('train', 'epochs'), 'lr': ('train', 'learning_rate'), 'batch_size': ('train', 'batch_size'),
        'schedule': ('train', 'schedule'), 'seed': ('train', 'seed'), 'progress': ('train', 'progress'),
    }

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser) -> None:
        add_scene_source(parser)
        parser.add_argument('--epochs', type=int, help='train.epochs')
        parser.add_argument('--lr', type=float, help='train.learning_rate')
        parser.add_argument('--batch-size', type=int, help='train.batch_size')
        parser.add_argument('--schedule', choices=('constant', 'one_cycle'), help='train.schedule')
        parser.add_argument('--tafe', action='store_true', help='Enable template-assisted feature enhancement')
        parser.add_argument('--pscl', action='store_true', help='Enable proposal-level contrastive learning')
        add_progress(parser)

    def execute(self) -> int:
        scenes = scene_source(self, self.cfg.train.num_scenes)
        result = self.pipeline().train(scenes, self.spec.flag('tafe', False), self.spec.flag('pscl', False))
        print(f"Checkpoint: {result.checkpoint_path}")
        print(f"Loss log: {result.loss_log_path}")
        if result.history:
            print(f"Total loss: {result.history[0].total:.6f} -> {result.history[-1].total:.6f}")
        return CliCONSTANTS.EXIT_OK


class Infer(Command):
    name = 'infer'
    help = 'Detect objects in scenes and write scored label files'
    OVERRIDES = {'preset': ('infer', 'preset'), 'score_threshold': ('infer', 'score_threshold')}

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser) -> None:
        parser.add_argument('--checkpoint', required=True, metavar='PATH', help='Checkpoint written by train')
        add_scene_source(parser)
        parser.add_argument('--preset', choices=tuple(PipelineCONSTANTS.Presets.BY_NAME),
                            help='Proposal NMS protocol (infer.preset)')
        parser.add_argument('--score-threshold', type=float, help='infer.score_threshold')

    def execute(self) -> int:
        scenes = scene_source(self, self.cfg.ablation.eval_scenes)
        detector = Detector.from_checkpoint(self.cfg, self.spec.flags['checkpoint'])
        directory = os.path.join(self.spec.out_dir, ARTIFACTS.DETECTIONS_DIR)
        os.makedirs(directory, exist_ok=True)
        total = 0
        for index, scene in enumerate(scenes):
            detections = detect(detector, scene.cloud, self.cfg.infer)
            total += len(detections)
            name = scene_name(index) + PipelineCONSTANTS.Scene.LABEL_SUFFIX
            write_labels((d.labeled(index) for d in detections), os.path.join(directory, name))
        print(f"Wrote {total} detections for {len(scenes)} scenes to {directory}")
        return CliCONSTANTS.EXIT_OK


def read_label_dir(directory: Optional[str], names: List[str]) -> List[LabeledBox]:
    objects: List[LabeledBox] = []
    for frame, name in enumerate(names):
        path = os.path.join(directory, name) if directory else None
        if path and os.path.exists(path):
            objects.extend(read_labels(path, frame))
    return objects


def label_names(*directories: str) -> List[str]:
    suffix = PipelineCONSTANTS.Scene.LABEL_SUFFIX
    names = set()
    for directory in directories:
        names.update(name for name in os.listdir(directory) if name.endswith(suffix))
    return sorted(names)


class Eval(Command):
    name = 'eval'
    help = 'Score detection label files against ground-truth label files'

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser) -> None:
        parser.add_argument('--detections', required=True, metavar='DIR', help='Scored label files')
        parser.add_argument('--labels', required=True, metavar='DIR', help='Ground-truth label files')

    def execute(self) -> int:
        detections_dir, labels_dir = self.spec.flags['detections'], self.spec.flags['labels']
        names = label_names(detections_dir, labels_dir)
        rows = evaluate(read_label_dir(detections_dir, names), read_label_dir(labels_dir, names), self.cfg.eval)
        path = write_ap_csv(rows, self.out_path(AP_CSV_FILENAME))
        print_report(EvalCONSTANTS.Csv.HEADER, [row.cells() for row in rows])
        print(f"Wrote {path}")
        return CliCONSTANTS.EXIT_OK


class Ablate(Command):
    name = 'ablate'
    help = 'Train and evaluate the four module combinations on matched scenes'
    OVERRIDES = {
        'scenes': ('ablation', 'eval_scenes'), 'train_scenes': ('ablation', 'train_scenes'),
        'epochs': ('train', 'epochs'), 'seed': ('train', 'seed'), 'progress': ('train', 'progress'),
    }

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser) -> None:
        parser.add_argument('--scenes', type=int, metavar='N', help='Held-out scenes (ablation.eval_scenes)')
        parser.add_argument('--train-scenes', type=int, metavar='N', help='ablation.train_scenes')
        parser.add_argument('--epochs', type=int, help='train.epochs')
        add_progress(parser)

    def execute(self) -> int:
        rows = self.pipeline().ablate(self.spec.out_dir)
        path = write_ablation_csv(rows, self.out_path(ABLATION_CSV_FILENAME))
        print_report(PipelineCONSTANTS.Ablation.HEADER, [row.cells() for row in rows])
        print(f"Wrote {path}")
        return CliCONSTANTS.EXIT_OK


class Check(Command):
    name = 'check'
    help = 'Run the IoU, NMS, encoding, gradient and metric oracle suites'

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser) -> None:
        parser.add_argument('--quick', action='store_true', help='Run reduced suites')

    def execute(self) -> int:
        results = run_checks(self.spec.flag('quick', False), self.spec.seed)
        rows = [result.cells() for result in results]
        print_report(CliCONSTANTS.Check.HEADER, rows)
        with open(self.out_path(ARTIFACTS.CHECKS_CSV), 'w', encoding='utf-8', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(CliCONSTANTS.Check.HEADER)
            writer.writerows(rows)
        failed = [result.name for result in results if not result.passed]
        if failed:
            logging.error('Oracle suites failed: %s', ', '.join(failed))
            return CliCONSTANTS.EXIT_FAILURE
        return CliCONSTANTS.EXIT_OK


COMMANDS: Dict[str, Type[Command]] = {
    command.name: command for command in (GenTemplates, GenScenes, Train, Infer, Eval, Ablate, Check)
}
