"""Reference transmission and the (start position, error vector) event table
shared by both analysis methods.

For every start position ``i`` and error vector ``e_j`` the competing
codeword is ``c xor q_ij`` with ``q_ij`` the zero-padded error vector. After
interleaving and mapping it differs from the reference symbols ``x`` on a
handful of tones; the table stores, per event, those tones and the complex
distances ``x_t - z_t``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .code import CodeSpec, ErrorSet, encode
from .interleaving import Permutation, interleave
from .modem import Constellation, bits_to_labels


@dataclass(frozen=True)
class SnrPoint:
    eb_n0_db: float
    rate: float
    bits_per_symbol: int

    @property
    def eb_n0(self) -> float:
        return 10.0 ** (self.eb_n0_db / 10.0)

    @property
    def es_n0(self) -> float:
        return self.eb_n0 * self.rate * self.bits_per_symbol


def snr_point(eb_n0_db: float, code: CodeSpec, c: Constellation) -> SnrPoint:
    return SnrPoint(float(eb_n0_db), float(code.rate), c.bits_per_symbol)


@dataclass(frozen=True)
class ReferenceTransmission:
    b: np.ndarray
    c: np.ndarray
    c_pi: np.ndarray
    labels: np.ndarray
    x: np.ndarray
    seed: int

    @property
    def L_c(self) -> int:
        return len(self.c)

    @property
    def N(self) -> int:
        return len(self.x)


DEFAULT_REFERENCE_SEED = 20070101


def make_reference(code: CodeSpec, perm: Permutation, const: Constellation, N: int,
                   seed: int = DEFAULT_REFERENCE_SEED, b=None) -> ReferenceTransmission:
    """Random reference codeword for an ``N``-tone block.

    The info block holds ``R_c * N * log2 M`` bits; the last ``K - 1`` are
    zero so the encoder ends in the zero state.
    """
    L_c = N * const.bits_per_symbol
    if perm.length != L_c:
        raise ValueError(f"interleaver length {perm.length} != coded block {L_c}")
    rate = code.rate
    n_info = L_c * rate.numerator / rate.denominator
    if n_info != int(n_info) or int(n_info) % code.period:
        raise ValueError(f"{N} tones of {const.M}-QAM do not hold a whole number of code periods")
    n_info = int(n_info)
    if b is None:
        rng = np.random.default_rng(seed)
        b = rng.integers(0, 2, size=n_info, dtype=np.int8)
        b[n_info - (code.constraint_length - 1):] = 0
    b = np.asarray(b, dtype=np.int8)
    if len(b) != n_info:
        raise ValueError(f"reference needs {n_info} info bits, got {len(b)}")
    c = encode(b, code)
    c_pi = interleave(c, perm)
    labels = bits_to_labels(c_pi, const)
    return ReferenceTransmission(b=b, c=c, c_pi=c_pi, labels=labels,
                                 x=const.points[labels], seed=seed)


@dataclass(frozen=True)
class EventTable:
    """Flattened event list in canonical ``(i, j)`` order.

    Event ``e`` touches tones ``tones[ptr[e]:ptr[e+1]]`` with distances
    ``diffs[...]`` (``x - z`` on those tones).
    """

    start: np.ndarray  # i (0-based) per event
    vector: np.ndarray  # j per event
    weight: np.ndarray  # a_j / period per event
    ptr: np.ndarray
    tones: np.ndarray
    diffs: np.ndarray
    L_c: int
    N: int

    @property
    def n_events(self) -> int:
        return len(self.start)

    @property
    def touched_counts(self) -> np.ndarray:
        return np.diff(self.ptr)

    def event(self, e: int):
        s = slice(self.ptr[e], self.ptr[e + 1])
        return self.tones[s], self.diffs[s]

    def distance_matrix(self):
        """Sparse (events x N) matrix of squared distances |x_t - z_t|^2."""
        from scipy.sparse import csr_matrix

        return csr_matrix((np.abs(self.diffs) ** 2, self.tones, self.ptr),
                          shape=(self.n_events, self.N))

    def start_matrix(self):
        """Sparse (L_c x events) matrix summing a_j-weighted terms per start position."""
        from scipy.sparse import csr_matrix

        order = np.arange(self.n_events)
        counts = np.bincount(self.start, minlength=self.L_c)
        ptr = np.concatenate([[0], np.cumsum(counts)])
        return csr_matrix((self.weight, order, ptr), shape=(self.L_c, self.n_events))


EDGE_MODES = ("wrap", "truncate", "skip")


def build_events(ref: ReferenceTransmission, E: ErrorSet, perm: Permutation,
                 const: Constellation, edge: str = "wrap") -> EventTable:
    """Event table for all start positions ``i`` and error vectors ``j``.

    Vectors running past the end of the block are handled by ``edge``:
    ``"wrap"`` continues them cyclically at the block start so every event
    keeps its full weight, ``"truncate"`` cuts them at the block end, and
    ``"skip"`` drops events that do not fit.
    """
    if edge not in EDGE_MODES:
        raise ValueError(f"unknown edge mode {edge!r}")
    L_c = ref.L_c
    m = const.bits_per_symbol
    starts = np.arange(L_c)
    weights = E.info_weights
    if edge == "wrap" and E.max_length > L_c:
        raise ValueError(f"error vectors of {E.max_length} bits do not fit a {L_c}-bit block")

    key_parts, flip_parts, ev_start, ev_vec = [], [], [], []
    n_ev = 0
    for j, v in enumerate(E.vectors):
        offs = v.positions
        s = starts[starts + v.length <= L_c] if edge == "skip" else starts
        pos = s[:, None] + offs[None, :]
        if edge == "wrap":
            pos %= L_c
        valid = pos < L_c
        keep = valid.any(axis=1)
        s, pos, valid = s[keep], pos[keep], valid[keep]
        ev_ids = n_ev + np.repeat(np.arange(len(s)), valid.sum(axis=1))
        ppi = perm.forward[pos[valid]]
        tone = ppi // m
        flip = 1 << (m - 1 - ppi % m)
        key_parts.append(ev_ids * ref.N + tone)
        flip_parts.append(flip)
        ev_start.append(s)
        ev_vec.append(np.full(len(s), j))
        n_ev += len(s)

    if n_ev == 0:
        empty = np.zeros(0, dtype=np.int64)
        return EventTable(empty, empty, np.zeros(0), np.zeros(1, dtype=np.int64), empty,
                          np.zeros(0, dtype=complex), L_c, ref.N)

    ev_start = np.concatenate(ev_start)
    ev_vec = np.concatenate(ev_vec)
    # canonical order: by start position, then by vector index
    order = np.lexsort((ev_vec, ev_start))
    rank = np.empty(n_ev, dtype=np.int64)
    rank[order] = np.arange(n_ev)

    keys = np.concatenate(key_parts)
    flips = np.concatenate(flip_parts)
    ev = rank[keys // ref.N]
    tone = keys % ref.N
    keys = ev * ref.N + tone
    uniq, inv = np.unique(keys, return_inverse=True)
    # bit positions within a tone are distinct, so summing flips is an OR
    fl = np.zeros(len(uniq), dtype=np.int64)
    np.add.at(fl, inv, flips)
    ev_u = uniq // ref.N
    tone_u = uniq % ref.N
    lab = ref.labels[tone_u]
    diffs = const.points[lab] - const.points[lab ^ fl]
    ptr = np.concatenate([[0], np.cumsum(np.bincount(ev_u, minlength=n_ev))])
    return EventTable(
        start=ev_start[order], vector=ev_vec[order], weight=weights[ev_vec[order]],
        ptr=ptr.astype(np.int64), tones=tone_u.astype(np.int64), diffs=diffs, L_c=L_c, N=ref.N,
    )
