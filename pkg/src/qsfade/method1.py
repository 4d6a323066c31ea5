"""Per-realization truncated union bound and outage statistics."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .code import ErrorSet
from .events import EventTable, ReferenceTransmission, SnrPoint, build_events
from .interleaving import Permutation
from .modem import Constellation

Q_ARG_CEILING = 38.0


def qfunc(x):
    """Gaussian tail probability; zero above ``Q_ARG_CEILING``."""
    x = np.asarray(x, dtype=float)
    return np.where(x > Q_ARG_CEILING, 0.0, 0.5 * erfc(x / np.sqrt(2.0)))


def pep(h, x, z, snr: SnrPoint) -> float:
    h, x, z = (np.asarray(v) for v in (h, x, z))
    if not (h.shape == x.shape == z.shape):
        raise ValueError("h, x and z must have the same length")
    d2 = np.sum(np.abs(h) ** 2 * np.abs(x - z) ** 2)
    return float(qfunc(np.sqrt(snr.es_n0 / 2.0 * d2)))


def _as_gain_matrix(h) -> np.ndarray:
    h = np.asarray(getattr(h, "h", h))
    return h[None, :] if h.ndim == 1 else h


def method1_bers(table: EventTable, h, es_n0, *, clip: bool = True,
                 chunk: int | None = None, threads: int = 1) -> np.ndarray:
    """``P(H)`` for every realization (rows of ``h``) and every Es/N0.

    Returns an array of shape ``(count, len(es_n0))``.
    """
    H = _as_gain_matrix(h)
    es = np.atleast_1d(np.asarray(es_n0, dtype=float))
    if H.shape[1] != table.N:
        raise ValueError(f"channel has {H.shape[1]} tones, events were built for {table.N}")
    count = H.shape[0]
    D = table.distance_matrix()
    S = table.start_matrix()
    if chunk is None:
        chunk = max(1, int(2e7 // max(table.n_events, 1)))

    def run(lo: int) -> np.ndarray:
        gains = (np.abs(H[lo: lo + chunk]) ** 2).T  # (N, c)
        dist = np.asarray(D @ gains)  # (events, c)
        out = np.empty((gains.shape[1], len(es)))
        for s, e in enumerate(es):
            per_start = S @ qfunc(np.sqrt(e / 2.0 * dist))  # (L_c, c)
            if clip:
                per_start = np.minimum(per_start, 0.5)
            out[:, s] = per_start.sum(axis=0) / table.L_c
        return out

    starts = range(0, count, chunk)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(run, starts))
    else:
        parts = [run(lo) for lo in starts]
    if not parts:
        return np.zeros((0, len(es)))
    return np.concatenate(parts, axis=0)


def per_start_ber(table: EventTable, h, snr: SnrPoint) -> np.ndarray:
    """Unclipped ``P_i(H)`` for each start position of one realization."""
    H = _as_gain_matrix(h)[0]
    dist = table.distance_matrix() @ (np.abs(H) ** 2)
    return table.start_matrix() @ qfunc(np.sqrt(snr.es_n0 / 2.0 * dist))


def per_realization_ber(ref: ReferenceTransmission, E: ErrorSet, perm: Permutation,
                        const: Constellation, h, snr: SnrPoint, edge: str = "wrap") -> float:
    if ref.L_c != perm.length:
        raise ValueError("reference and interleaver lengths differ")
    H = _as_gain_matrix(h)
    if H.shape != (1, ref.N):
        raise ValueError(f"expected one realization with {ref.N} tones")
    table = build_events(ref, E, perm, const, edge=edge)
    return float(method1_bers(table, H, [snr.es_n0])[0, 0])


def outage_ber(values, x_percent: float) -> float:
    """Worst value left after discarding the ``x_percent`` largest ones."""
    v = np.sort(np.asarray(values, dtype=float))[::-1]
    if len(v) == 0:
        raise ValueError("outage of an empty set")
    if not 0 <= x_percent < 100:
        raise ValueError("outage percentage must be in [0, 100)")
    n_out = int(np.floor(x_percent * len(v) / 100.0 + 1e-9))
    return float(v[n_out])


@dataclass
class Method1Curves:
    eb_n0_db: np.ndarray
    per_realization: np.ndarray  # (count, n_snr)
    outage_x: float

    @property
    def outage(self) -> np.ndarray:
        return np.array([outage_ber(col, self.outage_x) for col in self.per_realization.T])

    @property
    def average(self) -> np.ndarray:
        return self.per_realization.mean(axis=0)


def ber_curve_method1(table: EventTable, h, snr_points, outage_x: float = 10.0,
                      threads: int = 1) -> Method1Curves:
    es = [p.es_n0 for p in snr_points]
    bers = method1_bers(table, h, es, threads=threads)
    return Method1Curves(eb_n0_db=np.array([p.eb_n0_db for p in snr_points]),
                         per_realization=bers, outage_x=outage_x)
