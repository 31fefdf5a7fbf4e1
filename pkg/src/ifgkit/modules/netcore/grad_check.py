"""
Central finite-difference verification of analytic gradients.
"""

from dataclasses import dataclass
from typing import Callable, Dict, Mapping, Optional, Tuple

import numpy as np

from src.ifgkit.modules.netcore.CONSTANTS import NetcoreCONSTANTS

DEFAULTS = NetcoreCONSTANTS.GradCheck


@dataclass(frozen=True)
class GradCheckEntry:
    name: str
    index: Tuple[int, ...]
    analytic: float
    numeric: float
    rel_error: float


@dataclass(frozen=True)
class GradCheckReport:
    """Outcome of a gradient check; `worst` is sorted by decreasing error."""
    max_rel_error: float
    worst: Tuple[GradCheckEntry, ...]
    checked: int
    tolerance: float
    skipped: int = 0

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def summary(self) -> str:
        if not self.worst:
            return f"checked {self.checked} entries, nothing to compare"
        top = self.worst[0]
        return (f"checked {self.checked} entries ({self.skipped} skipped at kinks), "
                f"max relative error {self.max_rel_error:.3e} "
                f"at {top.name}{list(top.index)} (analytic {top.analytic:.6e}, numeric {top.numeric:.6e})")


def relative_error(analytic: float, numeric: float, floor: float = DEFAULTS.DENOMINATOR_FLOOR) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def grad_check(function: Callable[[], float], params: Mapping[str, np.ndarray], analytic: Mapping[str, np.ndarray],
               step: float = DEFAULTS.STEP, tolerance: float = DEFAULTS.TOLERANCE,
               max_entries: Optional[int] = None, seed: int = 0,
               worst_count: int = DEFAULTS.WORST_COUNT, skip_kinks: bool = False) -> GradCheckReport:
    """
    Compare `analytic` gradients with central differences of `function`.

    `function` takes no arguments and reads the arrays in `params`, which are
    perturbed in place and restored. With `max_entries`, each tensor is checked
    on a seeded random subset of at most that many entries.

    With `skip_kinks`, entries whose one-sided differences disagree by more
    than `DEFAULTS.KINK_THRESHOLD` (the step straddles a ReLU kink or a
    max-pool switch) are counted as skipped instead of compared.
    """
    rng = np.random.default_rng(seed)
    entries = []
    skipped = 0
    baseline = function() if skip_kinks else 0.0
    for name, value in params.items():
        grad = np.asarray(analytic[name])
        if grad.shape != value.shape:
            raise ValueError(f"Analytic gradient for '{name}' has shape {grad.shape}, expected {value.shape}")
        flat_indices = np.arange(value.size)
        if max_entries is not None and value.size > max_entries:
            flat_indices = np.sort(rng.choice(value.size, size=max_entries, replace=False))
        for flat in flat_indices:
            index = np.unravel_index(flat, value.shape)
            original = value[index]
            value[index] = original + step
            plus = function()
            value[index] = original - step
            minus = function()
            value[index] = original
            numeric = (plus - minus) / (2 * step)
            one_sided = ((plus - baseline) / step, (baseline - minus) / step)
            if skip_kinks and relative_error(*one_sided) > DEFAULTS.KINK_THRESHOLD:
                skipped += 1
                continue
            a = float(grad[index])
            entries.append(GradCheckEntry(name, tuple(int(i) for i in index), a, numeric, relative_error(a, numeric)))

    entries.sort(key=lambda e: e.rel_error, reverse=True)
    max_error = entries[0].rel_error if entries else 0.0
    return GradCheckReport(max_error, tuple(entries[:worst_count]), len(entries), tolerance, skipped)


def check_store_gradients(function: Callable[[], float], backward: Callable[[], None], store,
                          names=None, **kwargs) -> GradCheckReport:
    """
    Gradient check over tensors of a ParamStore: `backward` must fill the
    store's gradient buffers for the current parameters.
    """
    names = list(store) if names is None else list(names)
    store.zero_grad()
    backward()
    analytic: Dict[str, np.ndarray] = {n: store.grad(n).copy() for n in names}
    return grad_check(function, {n: store[n] for n in names}, analytic, **kwargs)
