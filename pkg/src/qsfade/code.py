"""Punctured convolutional codes: encoding, soft Viterbi decoding and
enumeration of low-weight error events.

Register convention: the current input bit is the most significant of the
``K`` register bits, so a generator's leading octal digit taps the newest
input (the usual textbook/802.11 reading of ``133``, ``171``...). The
encoder state is the previous ``K - 1`` inputs, newest first.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np


class EnumerationLimitError(RuntimeError):
    """Raised when an error-event search exceeds its resource limits."""


def _parity(x: int) -> int:
    return bin(x).count("1") & 1


@dataclass(frozen=True)
class CodeSpec:
    """Convolutional mother code with a puncture pattern and bit repetition.

    ``puncture`` has one row per mother generator and one column per input
    step of the puncture period; ``True`` marks a transmitted bit. With
    ``repetition > 1`` every transmitted bit of a step is sent ``repetition``
    times, which is the same as repeating the generator list.
    """

    constraint_length: int
    generators: tuple[int, ...]
    puncture: tuple[tuple[bool, ...], ...] | None = None
    repetition: int = 1
    nominal_rate: Fraction | None = None
    name: str = ""

    def __post_init__(self):
        K = self.constraint_length
        if K < 2:
            raise ValueError("constraint length must be at least 2")
        if not self.generators:
            raise ValueError("at least one generator is required")
        for g in self.generators:
            if g <= 0 or g >= 1 << K:
                raise ValueError(f"generator {g:o} does not fit constraint length {K}")
        if self.repetition not in (1, 2, 4):
            raise ValueError("repetition factor must be 1, 2 or 4")
        if self.puncture is None:
            object.__setattr__(self, "puncture", tuple((True,) for _ in self.generators))
        pat = np.asarray(self.puncture, dtype=bool)
        if pat.ndim != 2 or pat.shape[0] != len(self.generators):
            raise ValueError("puncture pattern needs one row per generator")
        if not pat.any(axis=0).all():
            raise ValueError("puncture pattern must transmit at least one bit per input step")
        if self.nominal_rate is not None and Fraction(self.nominal_rate) != self.rate:
            raise ValueError(f"puncture pattern gives rate {self.rate}, declared {self.nominal_rate}")

    @property
    def n_mother(self) -> int:
        return len(self.generators)

    @property
    def period(self) -> int:
        return len(self.puncture[0])

    @property
    def n_states(self) -> int:
        return 1 << (self.constraint_length - 1)

    @property
    def mask(self) -> np.ndarray:
        """(period, n_eff) transmit mask in output order, repetition included."""
        pat = np.asarray(self.puncture, dtype=bool).T
        return np.tile(pat, (1, self.repetition))

    @property
    def effective_generators(self) -> tuple[int, ...]:
        return self.generators * self.repetition

    @property
    def n_eff(self) -> int:
        return self.n_mother * self.repetition

    @property
    def bits_per_period(self) -> int:
        return int(self.mask.sum())

    @property
    def rate(self) -> Fraction:
        return Fraction(self.period, self.bits_per_period)

    @property
    def code_id(self) -> str:
        gens = "-".join(f"{g:o}" for g in self.generators)
        pat = "".join("".join("1" if b else "0" for b in row) + "." for row in self.puncture)
        return f"K{self.constraint_length}_g{gens}_p{pat.rstrip('.')}_r{self.repetition}"

    def coded_length(self, n_info: int) -> int:
        if n_info % self.period:
            raise ValueError(f"{n_info} info bits is not a multiple of the puncture period {self.period}")
        return (n_info // self.period) * self.bits_per_period

    def step_output_table(self) -> np.ndarray:
        """(n_states, 2, n_eff) mother-code outputs for each state and input."""
        K = self.constraint_length
        table = np.zeros((self.n_states, 2, self.n_eff), dtype=np.int8)
        gens = self.effective_generators
        for s in range(self.n_states):
            for u in (0, 1):
                reg = (u << (K - 1)) | s
                table[s, u] = [_parity(reg & g) for g in gens]
        return table


def mother_encode(info_bits, code: CodeSpec) -> np.ndarray:
    """Unpunctured encoder output, shape ``(..., T, n_eff)``; starts in state 0."""
    b = np.asarray(info_bits, dtype=np.int8)
    K = code.constraint_length
    T = b.shape[-1]
    padded = np.concatenate([np.zeros(b.shape[:-1] + (K - 1,), dtype=np.int8), b], axis=-1)
    # delayed[d][..., t] = b[t - d]
    delayed = [padded[..., K - 1 - d: K - 1 - d + T] for d in range(K)]
    out = np.zeros(b.shape + (code.n_eff,), dtype=np.int8)
    for n, g in enumerate(code.effective_generators):
        acc = np.zeros(b.shape, dtype=np.int8)
        for d in range(K):
            if (g >> (K - 1 - d)) & 1:
                acc ^= delayed[d]
        out[..., n] = acc
    return out


def _step_mask(code: CodeSpec, T: int, phase: int = 0) -> np.ndarray:
    idx = (np.arange(T) + phase) % code.period
    return code.mask[idx]


def puncture(mother_bits, code: CodeSpec) -> np.ndarray:
    """Drop punctured positions from ``(..., T, n_eff)`` data, flattened per step."""
    mb = np.asarray(mother_bits)
    T = mb.shape[-2]
    if T % code.period:
        raise ValueError(f"{T} steps is not a multiple of the puncture period {code.period}")
    keep = _step_mask(code, T).ravel()
    flat = mb.reshape(mb.shape[:-2] + (-1,))
    return flat[..., keep]


def depuncture(punctured, code: CodeSpec) -> np.ndarray:
    """Reinsert neutral 0.0 metrics; returns ``(..., T * n_eff)``."""
    v = np.asarray(punctured, dtype=float)
    per = code.bits_per_period
    if v.shape[-1] % per:
        raise ValueError(f"{v.shape[-1]} metrics do not fill whole puncture periods of {per}")
    T = v.shape[-1] // per * code.period
    keep = _step_mask(code, T).ravel()
    out = np.zeros(v.shape[:-1] + (T * code.n_eff,), dtype=float)
    out[..., keep] = v
    return out


def encode(info_bits, code: CodeSpec) -> np.ndarray:
    """Encode and puncture.

    The encoder starts in the zero state. Callers that want a terminated
    trellis put ``K - 1`` zero tail bits at the end of ``info_bits``; they
    count toward the block length so the output is exactly
    ``len(info_bits) / R_c`` bits.
    """
    b = np.asarray(info_bits, dtype=np.int8)
    code.coded_length(b.shape[-1])
    return puncture(mother_encode(b, code), code)


def viterbi_decode(soft_metrics, code: CodeSpec, tail: int | None = None) -> np.ndarray:
    """Soft-input Viterbi decoder over depunctured LLRs.

    ``soft_metrics`` has shape ``(..., T * n_eff)``; positive values favour a
    0 bit. The last ``tail`` inputs (default ``K - 1``) are known zeros, so
    the survivor ending in state 0 is chosen and the tail is stripped. With
    ``tail=0`` the best final state wins (lowest index on ties).
    """
    llr = np.asarray(soft_metrics, dtype=float)
    if tail is None:
        tail = code.constraint_length - 1
    n = code.n_eff
    if llr.shape[-1] % n:
        raise ValueError(f"metric length {llr.shape[-1]} is not a multiple of {n}")
    batch_shape = llr.shape[:-1]
    llr = llr.reshape(-1, llr.shape[-1] // n, n)
    B, T, _ = llr.shape
    if tail > T:
        raise ValueError("tail longer than the block")
    S = code.n_states
    smask = S - 1
    K = code.constraint_length
    table = code.step_output_table()  # (S, 2, n)
    sign = 1.0 - 2.0 * table.astype(float)

    ns = np.arange(S)
    p0 = (ns << 1) & smask
    p1 = p0 | 1
    u = ns >> (K - 2)
    sign0 = sign[p0, u]  # (S, n) branch labels into ns from p0
    sign1 = sign[p1, u]

    neg = -np.inf
    pm = np.full((B, S), neg)
    pm[:, 0] = 0.0
    decisions = np.empty((T, B, S), dtype=bool)
    for t in range(T):
        lt = llr[:, t, :]
        m0 = pm[:, p0] + lt @ sign0.T
        m1 = pm[:, p1] + lt @ sign1.T
        choose1 = m1 > m0  # ties keep the lower predecessor
        decisions[t] = choose1
        pm = np.where(choose1, m1, m0)
        if t >= T - tail:
            # tail inputs are zero: states with the newest bit set are unreachable
            pm[:, S // 2:] = neg

    state = np.zeros(B, dtype=np.int64) if tail > 0 else np.argmax(pm, axis=1)
    bits = np.empty((B, T), dtype=np.int8)
    rows = np.arange(B)
    for t in range(T - 1, -1, -1):
        bits[:, t] = state >> (K - 2)
        state = ((state << 1) & smask) | decisions[t, rows, state]
    return bits[:, : T - tail].reshape(batch_shape + (T - tail,))


# ---------------------------------------------------------------------------
# error events


@dataclass(frozen=True)
class ErrorVector:
    bits: tuple[int, ...]
    info_errors: int
    inputs: tuple[int, ...] | None = field(default=None, compare=False)
    phase: int = field(default=0, compare=False)

    @property
    def length(self) -> int:
        return len(self.bits)

    @property
    def weight(self) -> int:
        return sum(self.bits)

    @property
    def positions(self) -> np.ndarray:
        return np.flatnonzero(np.asarray(self.bits))

    def hex(self) -> str:
        return np.packbits(np.asarray(self.bits, dtype=np.uint8)).tobytes().hex()


@dataclass(frozen=True)
class ErrorSet:
    vectors: tuple[ErrorVector, ...]
    w_max: int
    code: CodeSpec

    @property
    def L(self) -> int:
        return len(self.vectors)

    def __len__(self) -> int:
        return len(self.vectors)

    def __iter__(self):
        return iter(self.vectors)

    @property
    def max_length(self) -> int:
        return max((v.length for v in self.vectors), default=0)

    @property
    def min_weight(self) -> int | None:
        return min((v.weight for v in self.vectors), default=None)

    @property
    def info_weights(self) -> np.ndarray:
        """Info-error counts per vector, divided by the puncture period.

        Events are enumerated from every puncture phase, so each phase only
        accounts for ``1 / period`` of the starting positions.
        """
        return np.array([v.info_errors for v in self.vectors], dtype=float) / self.code.period

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["L", "w_max", "code_id"])
        w.writerow([self.L, self.w_max, self.code.code_id])
        w.writerow(["weight", "l", "a", "bits_hex"])
        for v in self.vectors:
            w.writerow([v.weight, v.length, v.info_errors, v.hex()])
        return buf.getvalue()

    def save(self, path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def from_csv(cls, text: str, code: CodeSpec) -> "ErrorSet":
        rows = list(csv.reader(io.StringIO(text)))
        if rows[0] != ["L", "w_max", "code_id"]:
            raise ValueError("not an error-set file")
        L, w_max, code_id = int(rows[1][0]), int(rows[1][1]), rows[1][2]
        if code_id != code.code_id:
            raise ValueError(f"error set was built for {code_id}, not {code.code_id}")
        vectors = []
        for weight, l, a, hx in rows[3:]:
            packed = np.frombuffer(bytes.fromhex(hx), dtype=np.uint8)
            bits = tuple(int(b) for b in np.unpackbits(packed)[: int(l)])
            if sum(bits) != int(weight):
                raise ValueError("corrupt error-set row: weight does not match bits")
            vectors.append(ErrorVector(bits=bits, info_errors=int(a)))
        if len(vectors) != L:
            raise ValueError("error-set row count does not match header")
        return cls(vectors=tuple(vectors), w_max=w_max, code=code)

    @classmethod
    def load(cls, path, code: CodeSpec) -> "ErrorSet":
        return cls.from_csv(Path(path).read_text(), code)


def _search_phase(code: CodeSpec, w_max: int, phase: int, depth_cap: int,
                  limit: int, table, mask) -> tuple[list, bool]:
    """Depth-first search of minimal error events starting at ``phase``.

    Returns the events found and whether some path was still alive at the
    depth cap (meaning the cap was too small).
    """
    S = code.n_states
    P = code.period
    found = []
    hit_cap = False
    # (state, step, bits, inputs, weight)
    stack = [(0, 0, (), (1,), 0)]
    while stack:
        state, step, bits, inputs, weight = stack.pop()
        u = inputs[-1]
        out = table[state, u][mask[(phase + step) % P]]
        weight += int(out.sum())
        if weight >= w_max:
            continue
        bits = bits + tuple(int(x) for x in out)
        nxt = ((u << (code.constraint_length - 1)) | state) >> 1
        if nxt == 0:
            found.append((bits, inputs))
            if len(found) > limit:
                raise EnumerationLimitError(f"more than {limit} error events below weight {w_max}")
            continue
        if step + 1 >= depth_cap:
            hit_cap = True
            continue
        for nu in (1, 0):
            stack.append((nxt, step + 1, bits, inputs + (nu,), weight))
    assert S > 0
    return found, hit_cap


def is_catastrophic(code: CodeSpec) -> bool:
    """True if some nonzero-state cycle of the punctured trellis has zero output weight."""
    table = code.step_output_table()
    mask = code.mask
    P = code.period
    S = code.n_states
    K = code.constraint_length
    # zero-weight edges between nonzero states, on the (state, phase) graph
    succ: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for ph in range(P):
        for s in range(1, S):
            for u in (0, 1):
                nxt = ((u << (K - 1)) | s) >> 1
                if nxt and not table[s, u][mask[ph]].any():
                    succ.setdefault((s, ph), []).append((nxt, (ph + 1) % P))
    color: dict[tuple[int, int], int] = {}
    for root in succ:
        if color.get(root):
            continue
        stack = [(root, iter(succ.get(root, ())))]
        color[root] = 1
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                color[node] = 2
                stack.pop()
            elif color.get(nxt) == 1:
                return True
            elif not color.get(nxt):
                color[nxt] = 1
                stack.append((nxt, iter(succ.get(nxt, ()))))
    return False


def enumerate_error_set(code: CodeSpec, w_max: int = 14, *, max_vectors: int = 200_000,
                        max_depth: int = 4096) -> ErrorSet:
    """All minimal error events with punctured output weight below ``w_max``.

    Every puncture phase is searched as a possible divergence point; events
    with identical output bits are merged by adding their info-error counts.
    """
    if w_max < 1:
        raise ValueError("w_max must be at least 1")
    if is_catastrophic(code):
        raise EnumerationLimitError(f"code {code.code_id} is catastrophic: error events never terminate")
    table = code.step_output_table()
    mask = code.mask
    merged: dict[tuple[int, ...], ErrorVector] = {}
    for phase in range(code.period):
        cap = 8 * code.constraint_length
        while True:
            found, hit_cap = _search_phase(code, w_max, phase, cap, max_vectors, table, mask)
            if not hit_cap:
                break
            cap *= 2
            if cap > max_depth:
                raise EnumerationLimitError(
                    f"error events below weight {w_max} do not terminate within {max_depth} steps "
                    "(catastrophic code or puncture pattern?)"
                )
        for bits, inputs in found:
            a = sum(inputs)
            prev = merged.get(bits)
            if prev is None:
                merged[bits] = ErrorVector(bits=bits, info_errors=a, inputs=inputs, phase=phase)
            else:
                merged[bits] = ErrorVector(bits=bits, info_errors=prev.info_errors + a,
                                           inputs=prev.inputs, phase=prev.phase)
        if len(merged) > max_vectors:
            raise EnumerationLimitError(f"more than {max_vectors} error vectors below weight {w_max}")
    vectors = sorted(merged.values(), key=lambda v: (v.weight, v.length, v.bits))
    return ErrorSet(vectors=tuple(vectors), w_max=w_max, code=code)


def free_distance(code: CodeSpec, limit: int = 64) -> int:
    """Smallest output weight of any error event, from every puncture phase."""
    for w in range(1, limit + 1):
        es = enumerate_error_set(code, w + 1)
        if es.L:
            return es.min_weight
    raise EnumerationLimitError(f"free distance exceeds {limit}")
