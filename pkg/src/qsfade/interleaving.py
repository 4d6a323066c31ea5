"""Bit interleavers built from block stages or explicit permutations.

A permutation ``perm`` is stored as a forward map: ``out[perm[k]] = in[k]``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class BlockStage:
    """Row-write / column-read block interleaver of ``rows x cols`` bits.

    When ``rows * cols`` is smaller than the codeword the stage is applied
    independently to consecutive segments of that size.
    """

    rows: int
    cols: int
    read: str = "cols"


@dataclass(frozen=True)
class InterleaverSpec:
    length: int
    stages: tuple[BlockStage, ...] = ()
    permutation: tuple[int, ...] | None = None
    id: str = ""

    def __post_init__(self):
        if not self.id:
            object.__setattr__(self, "id", _default_id(self))


def _default_id(spec: InterleaverSpec) -> str:
    if spec.permutation is not None:
        return f"explicit{spec.length}"
    if not spec.stages:
        return f"identity{spec.length}"
    parts = [f"{s.rows}x{s.cols}{'' if s.read == 'cols' else 'r'}" for s in spec.stages]
    return f"block{spec.length}-" + "-".join(parts)


@dataclass(frozen=True)
class Permutation:
    forward: np.ndarray
    inverse: np.ndarray = field(repr=False)
    id: str = ""

    @property
    def length(self) -> int:
        return len(self.forward)

    @classmethod
    def from_forward(cls, forward, id: str = "") -> "Permutation":
        forward = np.asarray(forward, dtype=np.int64)
        n = len(forward)
        if not np.array_equal(np.sort(forward), np.arange(n)):
            raise ValueError("permutation must contain every index exactly once")
        inverse = np.empty(n, dtype=np.int64)
        inverse[forward] = np.arange(n)
        forward.setflags(write=False)
        inverse.setflags(write=False)
        return cls(forward=forward, inverse=inverse, id=id)

    def compose(self, other: "Permutation") -> "Permutation":
        """Apply ``self`` first, then ``other``."""
        return Permutation.from_forward(other.forward[self.forward], id=f"{self.id}+{other.id}")


def _stage_read_order(stage: BlockStage, length: int) -> np.ndarray:
    """Index sequence read out of the stage: out[k] = in[order[k]]."""
    seg = stage.rows * stage.cols
    if seg <= 0 or length % seg:
        raise ValueError(
            f"stage {stage.rows}x{stage.cols} does not tile a codeword of {length} bits"
        )
    if stage.read not in ("cols", "rows"):
        raise ValueError(f"unknown read order {stage.read!r}")
    block = np.arange(seg).reshape(stage.rows, stage.cols)
    local = block.T.ravel() if stage.read == "cols" else block.ravel()
    offsets = np.arange(0, length, seg)
    return (offsets[:, None] + local[None, :]).ravel()


def build(spec: InterleaverSpec) -> Permutation:
    n = spec.length
    if spec.permutation is not None:
        if len(spec.permutation) != n:
            raise ValueError("explicit permutation length does not match spec length")
        return Permutation.from_forward(spec.permutation, id=spec.id)
    # track where each input index ends up as the stages are applied in order
    order = np.arange(n)
    for stage in spec.stages:
        order = order[_stage_read_order(stage, n)]
    forward = np.empty(n, dtype=np.int64)
    forward[order] = np.arange(n)
    return Permutation.from_forward(forward, id=spec.id)


def interleave(values, perm: Permutation) -> np.ndarray:
    values = np.asarray(values)
    if values.shape[-1] != perm.length:
        raise ValueError(f"expected {perm.length} values, got {values.shape[-1]}")
    out = np.empty_like(values)
    out[..., perm.forward] = values
    return out


def deinterleave(values, perm: Permutation) -> np.ndarray:
    values = np.asarray(values)
    if values.shape[-1] != perm.length:
        raise ValueError(f"expected {perm.length} values, got {values.shape[-1]}")
    return values[..., perm.forward]


def identity_spec(length: int) -> InterleaverSpec:
    return InterleaverSpec(length=length)


def mbofdm_spec(n_tones: int, bits_per_symbol: int, n_symbols: int = 3,
                tone_rows: int = 10) -> InterleaverSpec:
    """MB-OFDM-style two-stage interleaver over one equivalent OFDM block.

    The symbol stage sends consecutive coded bits to different OFDM symbols
    (sub-bands); the tone stage then spreads each symbol's bits over its
    tones with a ``tone_rows``-row block interleaver.
    """
    length = n_tones * bits_per_symbol
    per_symbol = length // n_symbols
    if per_symbol * n_symbols != length or per_symbol % tone_rows:
        raise ValueError("codeword does not split into the requested symbol/tone blocks")
    stages = (
        BlockStage(rows=per_symbol, cols=n_symbols),
        BlockStage(rows=tone_rows, cols=per_symbol // tone_rows),
    )
    return InterleaverSpec(length=length, stages=stages,
                           id=f"mbofdm-{n_tones}x{bits_per_symbol}-s{n_symbols}-t{tone_rows}")


def save_permutation(perm: Permutation, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for k in perm.forward:
            w.writerow([int(k) + 1])


def load_permutation(path, id: str | None = None) -> Permutation:
    rows = Path(path).read_text().split()
    forward = np.array([int(r) - 1 for r in rows], dtype=np.int64)
    return Permutation.from_forward(forward, id=id or Path(path).stem)
