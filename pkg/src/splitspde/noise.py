"""Reproducible, nested Brownian drivers.

Each noise index of each Monte Carlo path gets its own Philox stream keyed by
``(master_seed, path_index, l)``, so paths can be generated in any order or in
parallel and adding a noise never perturbs the earlier ones.

A path stores the cumulative values ``W`` on its grid (left-to-right prefix
sums).  Coarsening subsamples those values, so every coarser path agrees
bitwise with the fine one at shared times; increments are differences of the
stored values.
"""
from __future__ import annotations

import dataclasses
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"SPLTBRW1"
_HEADER = struct.Struct("<8sQQIIdQ")  # magic, seed, path_index, L, reserved, T, steps


def _is_pow2(n: int) -> bool:
    return n >= 1 and not n & (n - 1)


@dataclass(frozen=True, eq=False)
class BrownianPath:
    seed: int
    path_index: int
    horizon: float
    steps: int
    values: np.ndarray  # shape (L, steps + 1), values[:, 0] == 0

    @property
    def n_noises(self) -> int:
        return self.values.shape[0]

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=1)

    def index_of(self, t: float) -> int:
        """Grid index of ``t``; off-grid times are rejected, never interpolated."""
        x = t / self.horizon * self.steps
        j = int(round(x))
        if abs(x - j) > 1e-9 * max(1.0, abs(x)) or not 0 <= j <= self.steps:
            raise ValueError(f"time {t!r} is not on the path grid (dt = {self.dt!r})")
        return j

    def value_at(self, l: int, t: float) -> float:
        return float(self.values[l, self.index_of(t)])

    def window(self, s: float, t: float) -> np.ndarray:
        """W at every grid time in [s, t], shape (L, k + 1)."""
        i, j = self.index_of(s), self.index_of(t)
        if j < i:
            raise ValueError("window needs s <= t")
        return self.values[:, i : j + 1]

    def __eq__(self, other):
        return (
            isinstance(other, BrownianPath)
            and (self.seed, self.path_index, self.horizon, self.steps)
            == (other.seed, other.path_index, other.horizon, other.steps)
            and np.array_equal(self.values, other.values)
        )


def stream(seed: int, path_index: int, l: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=(int(path_index), int(l)))
    return np.random.Generator(np.random.Philox(ss))


def generate(seed: int, n_noises: int, horizon: float, fine_steps: int, path_index: int = 0) -> BrownianPath:
    """Independent Brownian motions W^1..W^L sampled at ``fine_steps`` equal steps."""
    if not _is_pow2(fine_steps):
        raise ValueError("fine_steps must be a power of two")
    if n_noises < 0:
        raise ValueError("number of noises must be >= 0")
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    scale = np.sqrt(horizon / fine_steps)
    values = np.zeros((n_noises, fine_steps + 1))
    for l in range(n_noises):
        dw = stream(seed, path_index, l).standard_normal(fine_steps) * scale
        np.cumsum(dw, out=values[l, 1:])
    values.flags.writeable = False
    return BrownianPath(int(seed), int(path_index), float(horizon), int(fine_steps), values)


def coarsen(path: BrownianPath, factor: int) -> BrownianPath:
    """Keep every ``factor``-th grid value."""
    if factor < 1 or path.steps % factor:
        raise ValueError(f"factor {factor} does not divide {path.steps} steps")
    if factor == 1:
        return path
    values = np.ascontiguousarray(path.values[:, ::factor])
    values.flags.writeable = False
    return dataclasses.replace(path, steps=path.steps // factor, values=values)


def coarsen_to(path: BrownianPath, steps: int) -> BrownianPath:
    if steps < 1 or path.steps % steps:
        raise ValueError(f"{steps} steps do not divide the path's {path.steps} steps")
    return coarsen(path, path.steps // steps)


def value_at(path: BrownianPath, l: int, t: float) -> float:
    return path.value_at(l, t)


def dump(path: BrownianPath, filename) -> None:
    """Little-endian binary dump: 8-byte magic, fixed header, then W at grid times 1..steps."""
    header = _HEADER.pack(MAGIC, path.seed & (2**64 - 1), path.path_index, path.n_noises, 0,
                          path.horizon, path.steps)
    with open(filename, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(path.values[:, 1:], dtype="<f8").tobytes())


def load(filename) -> BrownianPath:
    data = Path(filename).read_bytes()
    if len(data) < _HEADER.size or data[:8] != MAGIC:
        raise ValueError(f"{filename}: not a Brownian path dump")
    _, seed, path_index, L, _, T, steps = _HEADER.unpack_from(data)
    body = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    if body.size != L * steps:
        raise ValueError(f"{filename}: expected {L * steps} values, found {body.size}")
    values = np.zeros((L, steps + 1))
    values[:, 1:] = body.reshape(L, steps)
    values.flags.writeable = False
    return BrownianPath(int(seed), int(path_index), float(T), int(steps), values)
