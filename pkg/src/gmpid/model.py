"""System model: random channels, Gaussian sources, AWGN observations.

The linear model throughout the package is

    y = H x + n,      H: (M, K),  x ~ N(0, diag(source_vars)),  n ~ N(0, noise_var I)

with K transmitting users and M receive antennas. All randomness flows
through one documented transform (53-bit uniform -> inverse normal CDF) so
that a seed pins every generated instance bit-for-bit across platforms and
library versions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .validation import (
    as_matrix,
    as_seed,
    as_variance_vector,
    as_vector,
    check_nonnegative_float,
    check_positive_int,
)

__all__ = [
    "Dimensions",
    "SystemInstance",
    "generate_channel",
    "sample_sources",
    "transmit",
    "make_instance",
    "save_instance",
    "load_instance",
]

# Sub-stream indices: changing one parameter (e.g. noise variance) must not
# shift the draws of the other components.
_CHANNEL_STREAM = 0
_SOURCE_STREAM = 1
_NOISE_STREAM = 2


@dataclass(frozen=True)
class Dimensions:
    """Problem size: ``num_users`` K and ``num_antennas`` M."""

    num_users: int
    num_antennas: int

    def __post_init__(self):
        check_positive_int(self.num_users, "num_users")
        check_positive_int(self.num_antennas, "num_antennas")

    @property
    def load_factor(self) -> float:
        """Users-to-antennas ratio K/M, the quantity that governs convergence."""
        return self.num_users / self.num_antennas


@dataclass
class SystemInstance:
    """One concrete realization of the linear model.

    ``x`` is the transmitted truth; it is optional so that detectors can be
    fit on observed (H, y) alone, in which case truth-referenced traces are
    NaN. The noise vector itself is never stored, only ``y``.
    """

    H: np.ndarray
    y: np.ndarray
    noise_var: float
    source_vars: np.ndarray
    x: np.ndarray | None = None
    dims: Dimensions = field(init=False)

    def __post_init__(self):
        self.H = as_matrix(self.H, "H")
        M, K = self.H.shape
        self.dims = Dimensions(K, M)
        self.y = as_vector(self.y, "y", M)
        self.noise_var = check_nonnegative_float(self.noise_var, "noise_var")
        self.source_vars = as_variance_vector(self.source_vars, "source_vars", K)
        if self.x is not None:
            self.x = as_vector(self.x, "x", K)


def _stream(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))


def _standard_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """Fixed normal sampler: uniform on a 53-bit grid, then the inverse CDF.

    Pinned to this one transform (rather than the generator's native normal
    method) so seeded values are reproducible independent of numpy's choice
    of ziggurat algorithm.
    """
    u = rng.integers(1, 2**53, size=shape).astype(float) / 2**53
    return ndtri(u)


def generate_channel(dims: Dimensions, seed: int) -> np.ndarray:
    """Draw an (M, K) channel matrix with i.i.d. standard-normal entries."""
    seed = as_seed(seed)
    rng = _stream(seed, _CHANNEL_STREAM)
    return _standard_normal(rng, (dims.num_antennas, dims.num_users))


def sample_sources(dims: Dimensions, source_vars, seed: int) -> np.ndarray:
    """Draw the K source symbols, x_k ~ N(0, source_vars[k]) independently."""
    seed = as_seed(seed)
    source_vars = as_variance_vector(source_vars, "source_vars", dims.num_users)
    rng = _stream(seed, _SOURCE_STREAM)
    return np.sqrt(source_vars) * _standard_normal(rng, dims.num_users)


def transmit(H: np.ndarray, x: np.ndarray, noise_var: float, seed: int) -> np.ndarray:
    """Return y = Hx + n with n i.i.d. N(0, noise_var).

    noise_var = 0 is permitted for oracle tests and consumes the same number
    of draws as noise_var > 0 (the draw is scaled by zero), so switching the
    noise level never shifts the other random streams.
    """
    H = as_matrix(H, "H")
    x = as_vector(x, "x", H.shape[1])
    noise_var = check_nonnegative_float(noise_var, "noise_var")
    seed = as_seed(seed)
    rng = _stream(seed, _NOISE_STREAM)
    n = np.sqrt(noise_var) * _standard_normal(rng, H.shape[0])
    return H @ x + n


def make_instance(dims: Dimensions, noise_var: float, source_vars, seed: int) -> SystemInstance:
    """Generate a full SystemInstance from one seed.

    Channel, sources and noise come from disjoint sub-streams of the seed, so
    the H returned here equals ``generate_channel(dims, seed)`` exactly, and
    likewise for the other components.
    """
    H = generate_channel(dims, seed)
    x = sample_sources(dims, source_vars, seed)
    y = transmit(H, x, noise_var, seed)
    return SystemInstance(
        H=H,
        y=y,
        noise_var=noise_var,
        source_vars=as_variance_vector(source_vars, "source_vars", dims.num_users),
        x=x,
    )


# Plain-text serialization for golden-file tests. Layout:
#   line 1: "K M"
#   line 2: noise_var
#   line 3: source_vars (K values)
#   next M lines: H rows (K values each)
#   next line: x (K values)
#   last line: y (M values)
# All floats printed with %.17g, which round-trips float64 exactly.
def _fmt(values) -> str:
    return " ".join(f"{v:.17g}" for v in np.atleast_1d(values))


def save_instance(inst: SystemInstance, path) -> None:
    if inst.x is None:
        raise ValueError("cannot serialize an instance without its source vector x")
    lines = [
        f"{inst.dims.num_users} {inst.dims.num_antennas}",
        _fmt(inst.noise_var),
        _fmt(inst.source_vars),
    ]
    lines.extend(_fmt(row) for row in inst.H)
    lines.append(_fmt(inst.x))
    lines.append(_fmt(inst.y))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_instance(path) -> SystemInstance:
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in (line.strip() for line in fh) if ln]
    K, M = (int(tok) for tok in lines[0].split())
    noise_var = float(lines[1])
    source_vars = np.array([float(t) for t in lines[2].split()])
    H = np.array([[float(t) for t in lines[3 + m].split()] for m in range(M)])
    x = np.array([float(t) for t in lines[3 + M].split()])
    y = np.array([float(t) for t in lines[4 + M].split()])
    return SystemInstance(H=H, y=y, noise_var=noise_var, source_vars=source_vars, x=x)
