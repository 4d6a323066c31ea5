"""Average BER from the frequency-domain correlation matrix.

For each event the gains on the touched tones are zero-mean complex
Gaussian, so the decision statistic ``g = D h'`` has covariance
``R_gg = D R_h'h' D^H`` and the averaged pairwise error probability is the
finite-range integral of ``det(Es/(N0 sin^2 t) R_gg + I)^-1``, evaluated here
by Gauss-Legendre quadrature.

The pairwise statistic used by the per-realization bound is
``Q(sqrt(Es/(2 N0) |D h|^2))``. Written in Craig's form its exponent is
``Es |D h|^2 / (4 N0 sin^2 t)``, so the BER routines here feed the
determinant integral with ``Es/N0 / 4`` (see ``craig_scale``). The single
event helper ``event_average_pep`` takes the determinant scale directly.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .channels import CorrelationMatrix
from .events import EventTable

DEFAULT_NODES = 64
SHADOW_NODES = 20
PSD_TOL = 1e-9


@lru_cache(maxsize=None)
def theta_rule(n: int = DEFAULT_NODES) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights mapped to (0, pi/2)."""
    x, w = np.polynomial.legendre.leggauss(n)
    theta = (x + 1.0) * np.pi / 4.0
    return theta, w * np.pi / 4.0


@lru_cache(maxsize=None)
def shadow_rule(n: int = SHADOW_NODES) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Hermite rule for a standard normal: nodes and weights summing to 1."""
    t, w = np.polynomial.hermite.hermgauss(n)
    return np.sqrt(2.0) * t, w / np.sqrt(np.pi)


def _as_sigma(sigma) -> np.ndarray:
    return np.asarray(sigma.sigma if isinstance(sigma, CorrelationMatrix) else sigma, dtype=complex)


def extract_submatrix(sigma, tones) -> np.ndarray:
    S = _as_sigma(sigma)
    t = np.asarray(tones, dtype=np.int64)
    if len(np.unique(t)) != len(t):
        raise ValueError("tone indices must be distinct")
    if len(t) and (t.min() < 0 or t.max() >= S.shape[0]):
        raise IndexError("tone index outside the correlation matrix")
    return S[np.ix_(t, t)]


@dataclass(frozen=True)
class EventStatistics:
    distances: np.ndarray  # diagonal of D
    R_hh: np.ndarray
    info_errors: float

    @property
    def R_gg(self) -> np.ndarray:
        d = self.distances
        return d[:, None] * self.R_hh * d.conj()[None, :]


def event_statistics(table: EventTable, sigma, e: int) -> EventStatistics:
    tones, diffs = table.event(e)
    return EventStatistics(distances=diffs, R_hh=extract_submatrix(sigma, tones),
                           info_errors=float(table.weight[e]))


def _check_psd(lam: np.ndarray, trace: np.ndarray) -> np.ndarray:
    """Clip tiny negative eigenvalues; reject real violations."""
    floor = -PSD_TOL * np.maximum(trace, 0.0)
    if np.any(lam < floor[..., None]):
        raise ValueError("R_gg is not positive semi-definite beyond tolerance")
    return np.clip(lam, 0.0, None)


def craig_scale(es_n0):
    """Determinant scale matching ``Q(sqrt(es_n0/2 * d2))`` after averaging."""
    return np.asarray(es_n0, dtype=float) / 4.0


def event_average_pep(R_gg, info_errors: float, es_n0: float, nodes: int = DEFAULT_NODES) -> float:
    """Averaged error probability of one event by direct quadrature.

    Each node's determinant comes from a Cholesky factorisation of the
    Hermitian positive-definite matrix ``Es/(N0 sin^2 t) R_gg + I``.
    """
    R = np.atleast_2d(np.asarray(R_gg, dtype=complex))
    R = 0.5 * (R + R.conj().T)
    if R.size:
        lam = np.linalg.eigvalsh(R)
        if lam.min() < -PSD_TOL * max(np.trace(R).real, 0.0):
            raise ValueError("R_gg is not positive semi-definite beyond tolerance")
    theta, w = theta_rule(nodes)
    eye = np.eye(R.shape[0])
    total = 0.0
    for t, wt in zip(theta, w):
        A = es_n0 / np.sin(t) ** 2 * R + eye
        L = np.linalg.cholesky(A)
        logdet = 2.0 * np.sum(np.log(np.diag(L).real))
        total += wt * np.exp(-logdet)
    return info_errors * total / np.pi


@dataclass
class Method2Prepared:
    """Per-event eigenvalues of ``R_gg`` grouped by touched-tone count."""

    groups: list  # (event indices, eigenvalues (n, m))
    table: EventTable


def prepare_method2(table: EventTable, sigma, chunk: int = 20000) -> Method2Prepared:
    S = _as_sigma(sigma)
    if S.shape != (table.N, table.N):
        raise ValueError(f"correlation matrix is {S.shape}, events need {table.N}x{table.N}")
    counts = table.touched_counts
    groups = []
    for m in np.unique(counts):
        idx = np.flatnonzero(counts == m)
        lam_parts = []
        for lo in range(0, len(idx), chunk):
            ev = idx[lo: lo + chunk]
            base = table.ptr[ev][:, None] + np.arange(m)[None, :]
            tones = table.tones[base]
            d = table.diffs[base]
            R = S[tones[:, :, None], tones[:, None, :]]
            Rgg = d[:, :, None] * R * d.conj()[:, None, :]
            Rgg = 0.5 * (Rgg + np.conj(np.swapaxes(Rgg, 1, 2)))
            lam = np.linalg.eigvalsh(Rgg) if m else np.zeros((len(ev), 0))
            trace = np.trace(Rgg, axis1=1, axis2=2).real
            lam_parts.append(_check_psd(lam, trace))
        groups.append((idx, np.concatenate(lam_parts)))
    return Method2Prepared(groups=groups, table=table)


def _event_values(prep: Method2Prepared, es_n0: float, nodes: int) -> np.ndarray:
    theta, w = theta_rule(nodes)
    scale = es_n0 / np.sin(theta) ** 2
    vals = np.empty(prep.table.n_events)
    with np.errstate(over="ignore"):
        for idx, lam in prep.groups:
            for lo in range(0, len(idx), 4096):
                lm = lam[lo: lo + 4096]
                # det(I + s R) as a product over eigenvalues; overflow to inf gives 0
                det = np.prod(1.0 + lm[:, :, None] * scale[None, None, :], axis=1)
                vals[idx[lo: lo + 4096]] = (1.0 / det) @ w / np.pi
    return vals


def method2_ber(prep: Method2Prepared, es_n0, nodes: int = DEFAULT_NODES) -> np.ndarray:
    """Average BER for each Es/N0, summed per start position in (i, j) order."""
    es = np.atleast_1d(craig_scale(es_n0))
    S = prep.table.start_matrix()
    out = np.empty(len(es))
    for k, e in enumerate(es):
        per_start = S @ _event_values(prep, e, nodes)
        out[k] = per_start.sum() / prep.table.L_c
    return out


def average_ber_method2(table: EventTable, sigma, es_n0, nodes: int = DEFAULT_NODES) -> np.ndarray:
    return method2_ber(prepare_method2(table, sigma), es_n0, nodes)


def average_over_shadowing(ber_at_snr, sigma_db: float, es_n0: float = 1.0,
                           n_nodes: int = SHADOW_NODES) -> float:
    """Average ``ber_at_snr(es_n0 * G^2)`` over ``10 log10 G^2 ~ N(0, sigma_db^2)``."""
    if sigma_db < 0:
        raise ValueError("sigma_db must be non-negative")
    if sigma_db == 0:
        return float(ber_at_snr(es_n0))
    z, w = shadow_rule(n_nodes)
    g2 = 10.0 ** (sigma_db * z / 10.0)
    vals = np.array([ber_at_snr(es_n0 * g) for g in g2], dtype=float)
    return float(w @ vals)


def method2_ber_shadowed(prep: Method2Prepared, es_n0, sigma_db: float,
                         nodes: int = DEFAULT_NODES, n_shadow: int = SHADOW_NODES) -> np.ndarray:
    """Vectorised ``average_over_shadowing`` of ``method2_ber`` on a grid."""
    es = np.atleast_1d(np.asarray(es_n0, dtype=float))
    if sigma_db == 0:
        return method2_ber(prep, es, nodes)
    z, w = shadow_rule(n_shadow)
    g2 = 10.0 ** (sigma_db * z / 10.0)
    grid = method2_ber(prep, (es[:, None] * g2[None, :]).ravel(), nodes).reshape(len(es), len(g2))
    return grid @ w
