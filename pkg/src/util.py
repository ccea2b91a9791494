import logging
from typing import Optional, Tuple, Union

import numpy as np

SeedLike = Union[int, np.random.SeedSequence]

LOG_FORMAT = "[%(levelname)s] %(message)s"


class Colors:
    RED = "\033[91m"
    GREEN = "\033[92m"
    YELLOW = "\033[93m"
    BLUE = "\033[94m"
    RESET = "\033[0m"

    @staticmethod
    def colorize(text, color):
        return f"{color}{text}{Colors.RESET}"


class ColoredLevelNameFormatter(logging.Formatter):
    LEVEL_COLORS = {
        "WARNING": Colors.YELLOW,
        "INFO": Colors.BLUE,
        "DEBUG": Colors.GREEN,
        "CRITICAL": Colors.RED,
        "ERROR": Colors.RED,
    }
    RESET_COLOR = "\033[0m"

    def format(self, record):
        levelname = record.levelname
        if levelname in self.LEVEL_COLORS:
            levelname_color = self.LEVEL_COLORS[levelname]
            record.levelname = f"{levelname_color}{levelname}{self.RESET_COLOR}"
        try:
            return super(ColoredLevelNameFormatter, self).format(record)
        finally:
            # other handlers may share the record
            record.levelname = levelname


def setup_logging(level: int = logging.INFO) -> None:
    logging.basicConfig(level=level, format=LOG_FORMAT)
    logging.root.setLevel(level)
    for handler in logging.root.handlers:
        handler.setFormatter(ColoredLevelNameFormatter(LOG_FORMAT))


# power quantities only: 20*log10(sigma) == 10*log10(sigma**2)
def to_db(x):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(x)


def from_db(x_db):
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


def symmetrize(a: np.ndarray) -> np.ndarray:
    # (A + A^H)/2 is bitwise Hermitian: addition commutes and conj/halving are exact
    return (a + a.conj().T) / 2.0


def min_eigenvalue(a: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(symmetrize(a))[0])


def crandn(rng: np.random.Generator, shape) -> np.ndarray:
    # CN(0,1): real and imaginary parts each carry variance 1/2
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def make_rng(seed: SeedLike) -> np.random.Generator:
    return np.random.default_rng(seed)


def trial_seeds(master_seed: int, trial_index: int) -> Tuple[np.random.SeedSequence, ...]:
    """Independent (channel, csi error, ecsi) streams for one trial."""
    root = np.random.SeedSequence(entropy=master_seed, spawn_key=(trial_index,))
    return tuple(root.spawn(3))


def phase_of(z: complex) -> complex:
    mag = abs(z)
    if mag == 0.0:
        return 1.0 + 0.0j
    return z / mag


def apply_phase_convention(v: np.ndarray, u: Optional[np.ndarray] = None):
    """Rotate every column of v so its largest-magnitude entry is real positive.

    The matching column of u gets the same rotation, which leaves u v^H unchanged.
    """
    v = np.array(v, dtype=complex, copy=True)
    u = None if u is None else np.array(u, dtype=complex, copy=True)
    for col in range(v.shape[1]):
        # argmax keeps the first index on ties
        pivot = int(np.argmax(np.abs(v[:, col])))
        c = np.conj(phase_of(v[pivot, col]))
        v[:, col] *= c
        if u is not None and col < u.shape[1]:
            u[:, col] *= c
    return v, u


def align_to(reference: np.ndarray, vec: np.ndarray) -> np.ndarray:
    """Rotate vec (last axis) by a unit phase so that reference^H vec is real positive."""
    inner = np.sum(np.conj(reference) * vec, axis=-1, keepdims=True)
    mag = np.abs(inner)
    rot = np.where(mag > 0.0, np.conj(inner) / np.where(mag > 0.0, mag, 1.0), 1.0)
    return vec * rot
