"""Residual datasets: binary container and synthetic generator.

File layout (all little-endian)::

    b"DTTP"                  magic
    u16 version              currently 1
    u16 n                    block size
    u32 count                number of blocks (> 0)
    u16 n_modes              mode-label table ...
      n_modes x (u16 len, utf-8 bytes)
    u16 len, utf-8 bytes     source tag
    count x u16              mode index per block
    count * n * n x i16      block samples, row-major per block
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "DatasetFormatError",
    "ResidualDataset",
    "SynthModel",
    "ar1_generator",
    "load_dataset",
    "save_dataset",
    "synth_residuals",
]

MAGIC = b"DTTP"
VERSION = 1
I16_MIN, I16_MAX = -(1 << 15), (1 << 15) - 1


class DatasetFormatError(ValueError):
    pass


@dataclass(eq=False)
class ResidualDataset:
    n: int
    blocks: np.ndarray  # (count, n, n) int16
    mode_index: np.ndarray  # (count,) int
    mode_names: list
    source: str = ""

    def __post_init__(self):
        self.blocks = np.asarray(self.blocks)
        self.mode_index = np.asarray(self.mode_index, dtype=np.int64)
        if self.blocks.ndim != 3 or self.blocks.shape[1:] != (self.n, self.n):
            raise ValueError(f"blocks must have shape (count, {self.n}, {self.n})")
        if self.blocks.dtype.kind not in "iu":
            raise ValueError("residual blocks must be integers")
        if self.blocks.size and (self.blocks.min() < I16_MIN or self.blocks.max() > I16_MAX):
            raise ValueError("residuals exceed the 16-bit range")
        self.blocks = self.blocks.astype(np.int16)
        if self.mode_index.shape != (self.blocks.shape[0],):
            raise ValueError("one mode label per block required")
        if self.mode_index.size and (self.mode_index.min() < 0 or self.mode_index.max() >= len(self.mode_names)):
            raise ValueError("mode label outside the declared mode set")

    @property
    def count(self) -> int:
        return self.blocks.shape[0]

    @property
    def labels(self) -> list:
        return [self.mode_names[i] for i in self.mode_index]

    def select(self, mode: str) -> np.ndarray:
        return self.blocks[self.mode_index == self.mode_names.index(mode)]

    @classmethod
    def concat(cls, parts: list, source: str = "") -> "ResidualDataset":
        names: list = []
        for p in parts:
            for name in p.mode_names:
                if name not in names:
                    names.append(name)
        idx = [np.array([names.index(p.mode_names[i]) for i in p.mode_index], dtype=np.int64) for p in parts]
        return cls(parts[0].n, np.concatenate([p.blocks for p in parts]), np.concatenate(idx), names, source)


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise ValueError("string too long for the label table")
    return struct.pack("<H", len(raw)) + raw


def save_dataset(ds: ResidualDataset, path) -> None:
    if ds.count == 0:
        raise ValueError("refusing to write an empty dataset")
    out = bytearray(MAGIC)
    out += struct.pack("<HHI", VERSION, ds.n, ds.count)
    out += struct.pack("<H", len(ds.mode_names))
    for name in ds.mode_names:
        out += _pack_str(name)
    out += _pack_str(ds.source)
    out += ds.mode_index.astype("<u2").tobytes()
    out += ds.blocks.astype("<i2").tobytes()
    Path(path).write_bytes(bytes(out))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, size: int) -> bytes:
        if self.pos + size > len(self.data):
            raise DatasetFormatError("truncated dataset file")
        chunk = self.data[self.pos:self.pos + size]
        self.pos += size
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def string(self) -> str:
        (length,) = self.unpack("<H")
        try:
            return self.take(length).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DatasetFormatError("corrupted label table") from exc


def load_dataset(path) -> ResidualDataset:
    rd = _Reader(Path(path).read_bytes())
    if rd.take(4) != MAGIC:
        raise DatasetFormatError("bad magic: not a DTTP residual dataset")
    version, n, count = rd.unpack("<HHI")
    if version != VERSION:
        raise DatasetFormatError(f"unsupported dataset version {version}")
    if count == 0:
        raise DatasetFormatError("empty dataset")
    if n < 1:
        raise DatasetFormatError("invalid block size")
    (n_modes,) = rd.unpack("<H")
    names = [rd.string() for _ in range(n_modes)]
    source = rd.string()
    idx = np.frombuffer(rd.take(2 * count), dtype="<u2").astype(np.int64)
    values = np.frombuffer(rd.take(2 * count * n * n), dtype="<i2")
    if rd.pos != len(rd.data):
        raise DatasetFormatError("trailing bytes after dataset payload")
    try:
        return ResidualDataset(n, values.reshape(count, n, n).astype(np.int16), idx, names, source)
    except ValueError as exc:
        raise DatasetFormatError(str(exc)) from exc


@dataclass(frozen=True)
class SynthModel:
    """Separable boundary-predicted AR(1) residual model.

    Along each axis ``x_1 = s0 e_1`` and ``x_k = rho x_{k-1} + e_k`` with unit
    innovations, where ``s0 = boundary / sqrt(1 - rho**2)``.  ``boundary = 1``
    gives a stationary field; smaller values model a well-predicted first
    row/column.  The row axis runs along each row (left boundary), the column
    axis along each column (top boundary).
    """

    rho_r: float = 0.9
    rho_c: float = 0.9
    boundary_r: float = 1.0
    boundary_c: float = 1.0
    sigma: float = 4.0
    n: int = 8
    count: int = 1000
    seed: int = 0
    mode: str = "synthetic"

    def __post_init__(self):
        for name in ("rho_r", "rho_c"):
            if not -1 < getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in (-1, 1)")
        for name in ("boundary_r", "boundary_c", "sigma"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.n < 1:
            raise ValueError("n must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "SynthModel":
        d = dict(d)
        if "boundary_decay" in d:
            d.setdefault("boundary_r", d["boundary_decay"])
            d.setdefault("boundary_c", d.pop("boundary_decay"))
        if "rho" in d:
            d.setdefault("rho_r", d["rho"])
            d.setdefault("rho_c", d.pop("rho"))
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown synth model keys: {sorted(unknown)}")
        return cls(**d)


def ar1_generator(n: int, rho: float, boundary: float) -> np.ndarray:
    """Lower-triangular ``A`` such that ``A @ e`` is the 1-D boundary-started AR(1) process."""
    if not -1 < rho < 1:
        raise ValueError("rho must lie in (-1, 1)")
    if not boundary > 0:
        raise ValueError("boundary factor must be positive")
    k = np.arange(n)
    a = np.tril(rho ** np.abs(k[:, None] - k[None, :]).astype(float))
    a[:, 0] *= boundary / np.sqrt(1.0 - rho * rho)
    return a


def synth_residuals(model: SynthModel) -> ResidualDataset:
    """Integer residual blocks ``round(sigma * A_c Z A_r^T)``, deterministic per seed."""
    if model.count < 1:
        raise ValueError("count must be positive")
    rng = np.random.default_rng(model.seed)
    a_r = ar1_generator(model.n, model.rho_r, model.boundary_r)
    a_c = ar1_generator(model.n, model.rho_c, model.boundary_c)
    z = rng.standard_normal((model.count, model.n, model.n))
    x = model.sigma * (a_c @ z @ a_r.T)
    blocks = np.clip(np.round(x), I16_MIN, I16_MAX).astype(np.int16)
    return ResidualDataset(model.n, blocks, np.zeros(model.count, dtype=np.int64), [model.mode], "synth")
