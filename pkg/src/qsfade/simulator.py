"""Monte Carlo link simulation of the coded OFDM chain over fixed channels."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .code import CodeSpec, depuncture, encode, viterbi_decode
from .events import SnrPoint
from .interleaving import Permutation, deinterleave, interleave
from .modem import Constellation, bits_to_labels, demap_hard, demap_soft


@dataclass(frozen=True)
class Link:
    """Transmitter/receiver chain for one ``N``-tone block.

    ``code=None`` gives the uncoded bypass: bits are mapped straight onto the
    tones and detected by minimum distance.
    """

    code: CodeSpec | None
    perm: Permutation | None
    const: Constellation
    N: int

    @property
    def L_c(self) -> int:
        return self.N * self.const.bits_per_symbol

    @property
    def n_info(self) -> int:
        if self.code is None:
            return self.L_c
        r = self.code.rate
        return self.L_c * r.numerator // r.denominator

    @property
    def tail(self) -> int:
        return 0 if self.code is None else self.code.constraint_length - 1

    @property
    def payload_bits(self) -> int:
        """Bits counted per packet (the zero tail is excluded)."""
        return self.n_info - self.tail


@dataclass(frozen=True)
class StopRule:
    min_errors: int = 100
    max_bits: int = 10_000_000
    max_packets: int | None = None
    max_batch: int = 256


@dataclass(frozen=True)
class SimResult:
    eb_n0_db: float
    realization_index: int
    bits_sent: int
    bit_errors: int
    seed: int

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits_sent


def simulate_batch(link: Link, h, snr: SnrPoint, rng: np.random.Generator, n_packets: int,
                   noise_scale: float = 1.0) -> tuple[int, int]:
    """Send ``n_packets`` independent packets over the fixed gains ``h``.

    Returns ``(bits_sent, bit_errors)`` counted over the payload bits.
    """
    h = np.asarray(getattr(h, "h", h), dtype=complex)
    if h.shape != (link.N,):
        raise ValueError(f"channel has shape {h.shape}, link needs ({link.N},)")
    const = link.const
    b = rng.integers(0, 2, size=(n_packets, link.n_info), dtype=np.int8)
    if link.tail:
        b[:, -link.tail:] = 0
    c = b if link.code is None else encode(b, link.code)
    c_pi = c if link.perm is None else interleave(c, link.perm)
    x = const.points[bits_to_labels(c_pi, const)]
    # unit-variance noise; signal scaled by sqrt(Es/N0)
    n = (rng.standard_normal(x.shape) + 1j * rng.standard_normal(x.shape)) / np.sqrt(2.0)
    amp = np.sqrt(snr.es_n0)
    r = amp * h * x + noise_scale * n
    if link.code is None:
        b_hat = demap_hard(r / np.where(h == 0, 1.0, amp * h), const)
        if np.any(h == 0):
            zero = np.repeat(h == 0, const.bits_per_symbol)
            b_hat[:, zero] = rng.integers(0, 2, size=(n_packets, int(zero.sum())))
    else:
        # the demapper's noise model needs a positive variance
        llr = demap_soft(r / max(noise_scale, 1e-12), h * (amp / max(noise_scale, 1e-12)), 1.0, const)
        llr = llr.reshape(n_packets, link.L_c)
        if link.perm is not None:
            llr = deinterleave(llr, link.perm)
        b_hat = viterbi_decode(depuncture(llr, link.code), link.code, tail=link.tail)
        b = b[:, : link.payload_bits]
    errors = int(np.count_nonzero(b_hat[:, : b.shape[1]] != b))
    return n_packets * b.shape[1], errors


def simulate_packet(link: Link, h, snr: SnrPoint, seed: int, noise_scale: float = 1.0) -> tuple[int, int]:
    return simulate_batch(link, h, snr, np.random.default_rng(seed), 1, noise_scale)


def cell_seed(master_seed: int, realization: int, snr_index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([master_seed, realization, snr_index])


def simulate_cell(link: Link, h, snr: SnrPoint, stop: StopRule, master_seed: int,
                  realization_index: int = 0, snr_index: int = 0) -> SimResult:
    """Run batches of packets until the stop rule fires.

    Batch sizes double from 1 up to ``stop.max_batch``, so the packet count
    at which a cell stops depends only on its seed.
    """
    rng = np.random.default_rng(cell_seed(master_seed, realization_index, snr_index))
    bits = errors = packets = 0
    batch = 1
    while True:
        if stop.max_packets is not None:
            batch = min(batch, stop.max_packets - packets)
        remaining = -(-(stop.max_bits - bits) // link.payload_bits)
        batch = max(1, min(batch, remaining))
        nb, ne = simulate_batch(link, h, snr, rng, batch)
        bits += nb
        errors += ne
        packets += batch
        if errors >= stop.min_errors or bits >= stop.max_bits:
            break
        if stop.max_packets is not None and packets >= stop.max_packets:
            break
        batch = min(2 * batch, stop.max_batch)
    return SimResult(eb_n0_db=snr.eb_n0_db, realization_index=realization_index, bits_sent=bits,
                     bit_errors=errors, seed=master_seed)


def ber_curve_sim(link: Link, h, snr_points, stop: StopRule = StopRule(), master_seed: int = 0,
                  threads: int = 1, realization_offset: int = 0) -> list[SimResult]:
    """Simulate every (realization, SNR) cell; results in (realization, SNR) order."""
    H = np.asarray(getattr(h, "h", h), dtype=complex)
    if H.ndim == 1:
        H = H[None, :]
    cells = [(r, s) for r in range(H.shape[0]) for s in range(len(snr_points))]

    def run(cell):
        r, s = cell
        ridx = realization_offset + r
        return simulate_cell(link, H[r], snr_points[s], stop, master_seed, ridx, s)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(run, cells))
    return [run(c) for c in cells]


def results_matrix(results: list[SimResult], n_snr: int) -> np.ndarray:
    """(realizations, SNR) BER matrix from ``ber_curve_sim`` output."""
    return np.array([r.ber for r in results]).reshape(-1, n_snr)
