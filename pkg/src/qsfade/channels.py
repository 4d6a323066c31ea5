"""Quasi-static channel realizations and frequency-domain correlation.

Covers the modified Saleh-Valenzuela UWB model (clustered rays, lognormal
ray gains, random polarity, outer lognormal shadowing), its sampling onto
the equivalent 384-tone MB-OFDM grid, normalisation by the shadowing term,
correlation estimation, and correlated Rayleigh ensembles.
"""

from __future__ import annotations

import csv
import logging
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import stats

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SVParams:
    """Saleh-Valenzuela parameters; times in ns, rates in 1/ns, spreads in dB."""

    cluster_rate: float
    ray_rate: float
    cluster_decay: float
    ray_decay: float
    cluster_sigma_db: float
    ray_sigma_db: float
    shadow_sigma_db: float
    nlos: bool = False
    window: float = 10.0  # observe clusters/rays up to window * decay constant
    name: str = "sv"

    def __post_init__(self):
        for key in ("cluster_rate", "ray_rate", "cluster_decay", "ray_decay", "window"):
            if getattr(self, key) <= 0:
                raise ValueError(f"SV parameter {key} must be positive")
        for key in ("cluster_sigma_db", "ray_sigma_db", "shadow_sigma_db"):
            if getattr(self, key) < 0:
                raise ValueError(f"SV parameter {key} must be non-negative")


# IEEE 802.15.3a CM1 (LOS, 0-4 m)
CM1 = SVParams(
    cluster_rate=0.0233,
    ray_rate=2.5,
    cluster_decay=7.1,
    ray_decay=4.3,
    cluster_sigma_db=3.3941,
    ray_sigma_db=3.3941,
    shadow_sigma_db=3.0,
    nlos=False,
    name="CM1",
)


@dataclass(frozen=True)
class SVImpulse:
    """Continuous-time ray list with unit total energy, plus shadowing ``G``."""

    delays: np.ndarray  # ns, sorted
    gains: np.ndarray  # real amplitudes, sum of squares == 1
    G: float


def realization_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def _arrivals(rng: np.random.Generator, rate: float, horizon: float, start: float = 0.0) -> np.ndarray:
    """Poisson arrival times in [start, horizon), the first one at ``start``."""
    times = [np.array([start])]
    last = start
    chunk = max(8, int(1.5 * rate * (horizon - start)) + 8)
    while True:
        steps = last + np.cumsum(rng.exponential(1.0 / rate, size=chunk))
        keep = steps[steps < horizon]
        times.append(keep)
        if len(keep) < chunk:
            return np.concatenate(times)
        last = steps[-1]


def generate_sv_realization(params: SVParams, rng: np.random.Generator | int) -> SVImpulse:
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    ln10 = np.log(10.0)
    mu_const = (params.cluster_sigma_db ** 2 + params.ray_sigma_db ** 2) * ln10 / 20.0
    first = rng.exponential(1.0 / params.cluster_rate) if params.nlos else 0.0
    cluster_times = _arrivals(rng, params.cluster_rate, params.window * params.cluster_decay, first)
    delays, gains = [], []
    for tc in cluster_times:
        cluster_fade = params.cluster_sigma_db * rng.standard_normal()
        tr = _arrivals(rng, params.ray_rate, params.window * params.ray_decay)
        mu = (-10.0 * tc / params.cluster_decay - 10.0 * tr / params.ray_decay) / ln10 - mu_const
        ray_db = mu + params.ray_sigma_db * rng.standard_normal(len(tr))
        polarity = 2.0 * rng.integers(0, 2, size=len(tr)) - 1.0
        delays.append(tc + tr)
        gains.append(polarity * 10.0 ** ((cluster_fade + ray_db) / 20.0))
    delays = np.concatenate(delays)
    gains = np.concatenate(gains)
    order = np.argsort(delays, kind="stable")
    delays, gains = delays[order], gains[order]
    gains = gains / np.sqrt(np.sum(gains ** 2))
    G = 10.0 ** (params.shadow_sigma_db * rng.standard_normal() / 20.0)
    return SVImpulse(delays=delays, gains=gains, G=float(G))


@dataclass(frozen=True)
class ToneGrid:
    """Equivalent multiband OFDM tone grid.

    ``n_fft`` tones span ``sample_rate`` (GHz); ``data_tones`` indexes the
    retained tones in that grid and ``cp_samples`` is the cyclic-prefix
    length in grid samples (impulses are truncated to it).
    """

    n_fft: int
    sample_rate: float
    data_tones: np.ndarray
    cp_samples: int

    @property
    def N(self) -> int:
        return len(self.data_tones)

    @property
    def spacing(self) -> float:
        return self.sample_rate / self.n_fft


def mbofdm_tone_grid(n_bands: int = 3) -> ToneGrid:
    """Hopping pattern 1: three 128-tone, 528 MHz sub-bands side by side.

    Per band the 100 data tones are the used tones -56..56 without DC and
    without pilots at +/-5, 15, ..., 55.
    """
    pilots = {p * s for p in (5, 15, 25, 35, 45, 55) for s in (1, -1)}
    local = [k for k in range(-56, 57) if k != 0 and k not in pilots]
    tones = [128 * b + 64 + k for b in range(n_bands) for k in local]
    return ToneGrid(n_fft=128 * n_bands, sample_rate=0.528 * n_bands,
                    data_tones=np.array(tones, dtype=np.int64), cp_samples=32 * n_bands)


def full_tone_grid(n: int, cp_samples: int | None = None, sample_rate: float = 1.0) -> ToneGrid:
    return ToneGrid(n_fft=n, sample_rate=sample_rate, data_tones=np.arange(n),
                    cp_samples=n if cp_samples is None else cp_samples)


def sample_impulse(imp: SVImpulse, grid: ToneGrid) -> np.ndarray:
    """Bin rays onto the grid's sample period and truncate to the cyclic prefix.

    The result carries ``G`` and the ray energy (1 before truncation).
    """
    idx = np.floor(imp.delays * grid.sample_rate).astype(np.int64)
    taps = np.zeros(max(int(idx.max()) + 1, 1))
    np.add.at(taps, idx, imp.gains)
    taps /= np.sqrt(np.sum(taps ** 2))
    if len(taps) > grid.cp_samples:
        lost = np.sum(taps[grid.cp_samples:] ** 2)
        log.debug("truncating impulse to %d samples, energy loss %.3e", grid.cp_samples, lost)
        taps = taps[: grid.cp_samples]
    return imp.G * taps


@dataclass(frozen=True)
class ChannelRealization:
    h: np.ndarray
    G: float = 1.0
    seed: int = 0
    model_id: str = ""

    def __post_init__(self):
        if not self.G > 0:
            raise ValueError("shadowing amplitude G must be positive")

    @property
    def N(self) -> int:
        return len(self.h)


def to_frequency_domain(taps, grid: ToneGrid, G: float = 1.0, seed: int = 0,
                        model_id: str = "") -> ChannelRealization:
    taps = np.asarray(taps, dtype=float)
    if len(taps) > grid.n_fft:
        raise ValueError("impulse response longer than the DFT grid")
    if grid.data_tones.max() >= grid.n_fft or grid.data_tones.min() < 0:
        raise ValueError("tone grid indexes outside the DFT")
    H = np.fft.fft(taps, n=grid.n_fft)
    return ChannelRealization(h=H[grid.data_tones], G=G, seed=seed, model_id=model_id)


def normalize(r: ChannelRealization) -> ChannelRealization:
    if not r.G > 0:
        raise ValueError("shadowing amplitude G must be positive")
    return replace(r, h=r.h / r.G, G=1.0)


@dataclass
class Ensemble:
    """A set of realizations stored as one (count, N) array."""

    h: np.ndarray
    G: np.ndarray
    model_id: str = ""
    seed: int = 0

    @property
    def count(self) -> int:
        return self.h.shape[0]

    @property
    def N(self) -> int:
        return self.h.shape[1]

    def __getitem__(self, k: int) -> ChannelRealization:
        return ChannelRealization(h=self.h[k], G=float(self.G[k]), seed=self.seed, model_id=self.model_id)

    def subset(self, index) -> "Ensemble":
        return Ensemble(h=self.h[index], G=self.G[index], model_id=self.model_id, seed=self.seed)

    def normalized(self) -> "Ensemble":
        return Ensemble(h=self.h / self.G[:, None], G=np.ones_like(self.G),
                        model_id=self.model_id, seed=self.seed)

    def save(self, path) -> None:
        mid = self.model_id.encode()
        with open(path, "wb") as fh:
            fh.write(struct.pack("<4sIIIH", b"QSFE", 1, self.N, self.count, len(mid)))
            fh.write(mid)
            rec = np.empty((self.count, 1 + 2 * self.N), dtype="<f8")
            rec[:, 0] = self.G
            rec[:, 1::2] = self.h.real
            rec[:, 2::2] = self.h.imag
            fh.write(rec.tobytes())

    @classmethod
    def load(cls, path) -> "Ensemble":
        data = Path(path).read_bytes()
        magic, version, N, count, mlen = struct.unpack_from("<4sIIIH", data)
        if magic != b"QSFE" or version != 1:
            raise ValueError(f"{path}: not a channel ensemble file")
        off = struct.calcsize("<4sIIIH")
        model_id = data[off: off + mlen].decode()
        rec = np.frombuffer(data, dtype="<f8", offset=off + mlen).reshape(count, 1 + 2 * N)
        h = rec[:, 1::2] + 1j * rec[:, 2::2]
        return cls(h=h, G=rec[:, 0].copy(), model_id=model_id)

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "G"] + [f"{p}{k}" for k in range(self.N) for p in ("re", "im")])
            for k in range(self.count):
                vals = np.empty(2 * self.N)
                vals[0::2], vals[1::2] = self.h[k].real, self.h[k].imag
                w.writerow([k, repr(float(self.G[k]))] + [repr(float(v)) for v in vals])

    @classmethod
    def load_csv(cls, path, model_id: str = "") -> "Ensemble":
        rows = list(csv.reader(open(path, newline="")))[1:]
        arr = np.array([[float(v) for v in r[1:]] for r in rows])
        return cls(h=arr[:, 1::2] + 1j * arr[:, 2::2], G=arr[:, 0], model_id=model_id)


def _sv_frequency_response(params: SVParams, grid: ToneGrid, seed: int, index: int):
    imp = generate_sv_realization(params, realization_rng(seed, index))
    taps = sample_impulse(imp, grid)
    return np.fft.fft(taps, n=grid.n_fft)[grid.data_tones], imp.G


def generate_sv_ensemble(params: SVParams, grid: ToneGrid, count: int, seed: int,
                         start: int = 0, threads: int = 1) -> Ensemble:
    """Realizations ``start .. start+count-1``; each uses stream ``(seed, index)``."""
    def one(k):
        return _sv_frequency_response(params, grid, seed, start + k)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(one, range(count)))
    else:
        results = [one(k) for k in range(count)]
    h = np.array([r[0] for r in results]).reshape(count, grid.N)
    G = np.array([r[1] for r in results], dtype=float)
    return Ensemble(h=h, G=G, model_id=params.name, seed=seed)


# ---------------------------------------------------------------------------
# correlation


@dataclass
class CorrelationMatrix:
    sigma: np.ndarray
    sample_count: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return self.sigma.shape[0]

    def check(self, tol: float = 1e-9) -> None:
        s = self.sigma
        if s.ndim != 2 or s.shape[0] != s.shape[1]:
            raise ValueError("correlation matrix must be square")
        if np.max(np.abs(s - s.conj().T), initial=0.0) > 1e-12 * max(1.0, np.abs(s).max(initial=0.0)):
            raise ValueError("correlation matrix is not Hermitian")
        lam = np.linalg.eigvalsh(s)
        floor = -tol * max(np.trace(s).real, 0.0) / self.N
        if lam.min() < floor:
            raise ValueError(f"correlation matrix is not PSD (min eigenvalue {lam.min():.3e})")

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(struct.pack("<QQ", self.N, self.sample_count))
            pairs = np.empty((self.N, self.N, 2), dtype="<f8")
            pairs[..., 0], pairs[..., 1] = self.sigma.real, self.sigma.imag
            fh.write(pairs.tobytes())

    @classmethod
    def load(cls, path) -> "CorrelationMatrix":
        data = Path(path).read_bytes()
        N, count = struct.unpack_from("<QQ", data)
        pairs = np.frombuffer(data, dtype="<f8", offset=16).reshape(N, N, 2)
        return cls(sigma=pairs[..., 0] + 1j * pairs[..., 1], sample_count=int(count))


def estimate_correlation(h, chunk: int = 4096) -> CorrelationMatrix:
    """Sample correlation ``(1/K) sum_k h_k h_k^H`` of zero-mean gains (rows of ``h``)."""
    h = np.asarray(h.h if isinstance(h, Ensemble) else h, dtype=complex)
    if h.ndim != 2 or h.shape[0] == 0:
        raise ValueError("need a non-empty (count, N) ensemble")
    K, N = h.shape
    if K < N:
        log.warning("estimating a %dx%d correlation from only %d realizations", N, N, K)
    acc = np.zeros((N, N), dtype=complex)
    for s in range(0, K, chunk):
        block = h[s: s + chunk]
        acc += block.T @ block.conj()
    sigma = acc / K
    sigma = 0.5 * (sigma + sigma.conj().T)
    return CorrelationMatrix(sigma=sigma, sample_count=K)


def psd_sqrt(sigma: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Matrix ``A`` with ``A A^H = sigma`` for a Hermitian PSD ``sigma``."""
    sigma = 0.5 * (sigma + sigma.conj().T)
    lam, vec = np.linalg.eigh(sigma)
    N = sigma.shape[0]
    floor = -tol * max(np.trace(sigma).real, 0.0) / N
    if N and lam.min() < floor:
        raise ValueError(f"matrix is not PSD (min eigenvalue {lam.min():.3e})")
    return vec * np.sqrt(np.clip(lam, 0.0, None))


def generate_rayleigh_ensemble(sigma, count: int, seed: int, chunk: int = 8192) -> Ensemble:
    sigma = np.asarray(sigma.sigma if isinstance(sigma, CorrelationMatrix) else sigma, dtype=complex)
    A = psd_sqrt(sigma)
    N = sigma.shape[0]
    rng = np.random.default_rng(seed)
    out = np.empty((count, N), dtype=complex)
    for s in range(0, count, chunk):
        n = min(chunk, count - s)
        w = (rng.standard_normal((n, N)) + 1j * rng.standard_normal((n, N))) / np.sqrt(2.0)
        out[s: s + n] = w @ A.T
    return Ensemble(h=out, G=np.ones(count), model_id=f"rayleigh{N}", seed=seed)


def gaussianity_pvalues(h) -> np.ndarray:
    """Per-tone KS p-values of real and imaginary parts against a zero-mean normal.

    Returns an (N, 2) array. The scale of each normal is the zero-mean
    maximum-likelihood fit, sqrt(mean(x^2)).
    """
    h = np.asarray(h.h if isinstance(h, Ensemble) else h)
    out = np.empty((h.shape[1], 2))
    for k in range(h.shape[1]):
        for p, part in enumerate((h[:, k].real, h[:, k].imag)):
            scale = np.sqrt(np.mean(part ** 2))
            out[k, p] = stats.kstest(part, "norm", args=(0.0, scale)).pvalue
    return out
