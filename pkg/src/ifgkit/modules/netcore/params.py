"""
Named parameter storage, the Adam optimizer and the binary checkpoint format.
"""

import math
import os
import struct
from typing import Dict, Iterator, List, Literal, Mapping, Optional, Sequence, Tuple

import numpy as np
from absl import logging

from src.ifgkit.modules.netcore.CONSTANTS import NetcoreCONSTANTS
from src.ifgkit.utils.numeric_utils import name_seed

Init = Literal['glorot', 'zeros']


class ShapeError(ValueError):
    """Raised when array shapes disagree."""
    pass


class CheckpointError(ValueError):
    """Raised for unreadable or inconsistent checkpoint files."""
    pass


def glorot_uniform(shape: Tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    fan_in, fan_out = (shape[0], shape[1]) if len(shape) >= 2 else (shape[0], shape[0])
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class ParamStore:
    """
    Ordered named float64 tensors with same-shaped gradient buffers.

    Each tensor is initialized from a generator keyed on (seed, name), so the
    initial value of a tensor never depends on which other tensors exist.

    Examples
    --------
    >>> store = ParamStore(seed=0)
    >>> w = store.add('head.0.weight', (64, 32))
    >>> store.grad('head.0.weight').shape
    (64, 32)
    """

    def __init__(self, seed: int = 0) -> None:
        self.seed = seed
        self.__params: Dict[str, np.ndarray] = {}
        self.__grads: Dict[str, np.ndarray] = {}

    def add(self, name: str, shape: Sequence[int], init: Init = 'glorot') -> np.ndarray:
        """Return the named tensor, creating it on first use."""
        shape = tuple(int(s) for s in shape)
        if name in self.__params:
            if self.__params[name].shape != shape:
                raise ShapeError(f"Parameter '{name}' exists with shape {self.__params[name].shape}, requested {shape}")
            return self.__params[name]
        if init == 'glorot':
            value = glorot_uniform(shape, name_seed(self.seed, name))
        elif init == 'zeros':
            value = np.zeros(shape)
        else:
            raise ValueError(f"Unknown initializer '{init}'. Use: glorot, zeros")
        self.__params[name] = value
        self.__grads[name] = np.zeros(shape)
        return value

    def __getitem__(self, name: str) -> np.ndarray:
        return self.__params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.__params

    def __len__(self) -> int:
        return len(self.__params)

    def __iter__(self) -> Iterator[str]:
        return iter(self.__params)

    def names(self, prefix: str = '') -> List[str]:
        return [n for n in self.__params if n.startswith(prefix)]

    def grad(self, name: str) -> np.ndarray:
        return self.__grads[name]

    def accumulate(self, name: str, grad: np.ndarray) -> None:
        buffer = self.__grads[name]
        if buffer.shape != np.shape(grad):
            raise ShapeError(f"Gradient for '{name}' has shape {np.shape(grad)}, expected {buffer.shape}")
        buffer += grad

    def zero_grad(self) -> None:
        for buffer in self.__grads.values():
            buffer.fill(0.0)

    def scale_grads(self, factor: float) -> None:
        for buffer in self.__grads.values():
            buffer *= factor

    def grads(self, prefix: str = '') -> Dict[str, np.ndarray]:
        return {n: g for n, g in self.__grads.items() if n.startswith(prefix)}

    def state(self) -> Dict[str, np.ndarray]:
        """Copy of every tensor, in insertion order."""
        return {n: p.copy() for n, p in self.__params.items()}

    def load_state(self, state: Mapping[str, np.ndarray], strict: bool = True) -> None:
        """Overwrite tensors in place from `state`."""
        missing = [n for n in self.__params if n not in state]
        if strict and missing:
            raise CheckpointError(f"Checkpoint lacks parameters: {', '.join(missing)}")
        for name, value in state.items():
            if name not in self.__params:
                self.__params[name] = np.array(value, dtype=np.float64)
                self.__grads[name] = np.zeros_like(self.__params[name])
            elif self.__params[name].shape != np.shape(value):
                raise CheckpointError(
                    f"Parameter '{name}' has shape {np.shape(value)} in checkpoint, expected {self.__params[name].shape}")
            else:
                self.__params[name][...] = value


class Adam:
    """
    Adam over every tensor of a ParamStore.

    `schedule='one_cycle'` warms the rate up from lr/div_factor to lr over the
    first `pct_start` of `total_steps`, then anneals it with a cosine to
    lr/final_div_factor.
    """
    CONSTANTS = NetcoreCONSTANTS.Adam

    def __init__(self, store: ParamStore, lr: float = CONSTANTS.LEARNING_RATE, schedule: str = 'constant',
                 total_steps: Optional[int] = None, beta1: float = CONSTANTS.BETA1, beta2: float = CONSTANTS.BETA2,
                 eps: float = CONSTANTS.EPSILON) -> None:
        if lr <= 0:
            raise ValueError(f"Learning rate must be positive, got {lr}")
        if schedule not in ('constant', 'one_cycle'):
            raise ValueError(f"Unknown schedule '{schedule}'. Use: constant, one_cycle")
        if schedule == 'one_cycle' and not total_steps:
            raise ValueError("one_cycle schedule needs total_steps")
        self.store = store
        self.lr = lr
        self.schedule = schedule
        self.total_steps = total_steps
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.steps = 0
        self.__m: Dict[str, np.ndarray] = {}
        self.__v: Dict[str, np.ndarray] = {}

    def learning_rate(self, step: int) -> float:
        if self.schedule == 'constant':
            return self.lr
        progress = min(step / self.total_steps, 1.0)
        start = self.lr / self.CONSTANTS.ONE_CYCLE_DIV_FACTOR
        final = self.lr / self.CONSTANTS.ONE_CYCLE_FINAL_DIV_FACTOR
        pct = self.CONSTANTS.ONE_CYCLE_PCT_START
        if progress < pct:
            return start + (self.lr - start) * (1 - math.cos(math.pi * progress / pct)) / 2
        return final + (self.lr - final) * (1 + math.cos(math.pi * (progress - pct) / (1 - pct))) / 2

    def step(self) -> float:
        """Apply one update from the accumulated gradients; returns the rate used."""
        lr = self.learning_rate(self.steps)
        self.steps += 1
        correction1 = 1 - self.beta1 ** self.steps
        correction2 = 1 - self.beta2 ** self.steps
        for name in self.store:
            grad = self.store.grad(name)
            m = self.__m.setdefault(name, np.zeros_like(grad))
            v = self.__v.setdefault(name, np.zeros_like(grad))
            m *= self.beta1
            m += (1 - self.beta1) * grad
            v *= self.beta2
            v += (1 - self.beta2) * grad * grad
            self.store[name][...] -= lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)
        return lr


def save_checkpoint(tensors: Mapping[str, np.ndarray], path: str) -> str:
    """Write named float64 tensors in the IFGK layout."""
    layout = NetcoreCONSTANTS.Checkpoint
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    chunks = [struct.pack(layout.HEADER_FORMAT, layout.MAGIC, layout.VERSION, len(tensors))]
    for name, value in tensors.items():
        encoded = name.encode('utf-8')
        array = np.asarray(value, dtype=layout.PAYLOAD_DTYPE)
        chunks.append(struct.pack(layout.U32_FORMAT, len(encoded)) + encoded)
        chunks.append(struct.pack(f'<I{array.ndim}I', array.ndim, *array.shape))
        chunks.append(array.tobytes(order='C'))
    with open(path, 'wb') as f:
        f.write(b''.join(chunks))
    logging.info('Wrote checkpoint with %s tensors to %s', len(tensors), path)
    return path


class _Reader:
    def __init__(self, data: bytes) -> None:
        self.data = data
        self.offset = 0

    def take(self, size: int, what: str) -> bytes:
        if self.offset + size > len(self.data):
            raise CheckpointError(f"Checkpoint truncated while reading {what} at byte {self.offset}")
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def u32(self, what: str) -> int:
        return struct.unpack(NetcoreCONSTANTS.Checkpoint.U32_FORMAT, self.take(4, what))[0]


def load_checkpoint(path: str) -> Dict[str, np.ndarray]:
    """Read a checkpoint written by `save_checkpoint`."""
    layout = NetcoreCONSTANTS.Checkpoint
    try:
        with open(path, 'rb') as f:
            reader = _Reader(f.read())
    except OSError as e:
        raise CheckpointError(f"Cannot read checkpoint {path}: {e}") from e

    magic, version, count = struct.unpack(layout.HEADER_FORMAT, reader.take(12, 'header'))
    if magic != layout.MAGIC:
        raise CheckpointError(f"Not a checkpoint file (magic {magic!r})")
    if version != layout.VERSION:
        raise CheckpointError(f"Unsupported checkpoint version {version}")
    tensors: Dict[str, np.ndarray] = {}
    for _ in range(count):
        try:
            name = reader.take(reader.u32('name length'), 'name').decode('utf-8')
        except UnicodeDecodeError as e:
            raise CheckpointError(f"Invalid tensor name at byte {reader.offset}") from e
        rank = reader.u32(f"rank of '{name}'")
        shape = tuple(reader.u32(f"dims of '{name}'") for _ in range(rank))
        size = int(np.prod(shape, dtype=np.int64)) * 8
        payload = reader.take(size, f"payload of '{name}'")
        tensors[name] = np.frombuffer(payload, dtype=layout.PAYLOAD_DTYPE).reshape(shape).astype(np.float64)
    if reader.offset != len(reader.data):
        raise CheckpointError(f"Trailing bytes after {count} tensors")
    return tensors
