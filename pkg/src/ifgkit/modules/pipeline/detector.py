"""
The detector's parameters and both stages.
"""

from absl import logging

from src.ifgkit.modules.netcore.params import ParamStore, load_checkpoint, save_checkpoint
from src.ifgkit.modules.pipeline.config import PipelineConfig
from src.ifgkit.modules.pipeline.refine import RefinementHead
from src.ifgkit.modules.pipeline.rpn import RegionProposalNetwork


class Detector:
    """
    RPN and refinement stage sharing one ParamStore.

    Parameters
    ----------
    cfg : PipelineConfig
    use_tafe, use_pscl : bool
        Build the training-only heads. Inference never needs them.
    seed : int, optional
        Initialization seed (default is `cfg.train.seed`).
    """

    def __init__(self, cfg: PipelineConfig, use_tafe: bool = False, use_pscl: bool = False, seed: int = None) -> None:
        self.cfg = cfg
        self.use_tafe = use_tafe
        self.use_pscl = use_pscl
        self.store = ParamStore(cfg.train.seed if seed is None else seed)
        self.rpn = RegionProposalNetwork(self.store, cfg.rpn, cfg.scene)
        self.refiner = RefinementHead(self.store, cfg.refine, cfg.extractor.out_dim, use_tafe, use_pscl)

    def save(self, path: str) -> str:
        return save_checkpoint(self.store.state(), path)

    def load(self, path: str) -> 'Detector':
        """Load the tensors this detector has; extra heads in the file are ignored."""
        state = load_checkpoint(path)
        extra = [name for name in state if name not in self.store]
        if extra:
            logging.info('Ignoring %s checkpoint tensors not used by this detector', len(extra))
        self.store.load_state({name: value for name, value in state.items() if name in self.store})
        return self

    @classmethod
    def from_checkpoint(cls, cfg: PipelineConfig, path: str) -> 'Detector':
        return cls(cfg).load(path)
