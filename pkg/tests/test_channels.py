import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qsfade.channels import (CM1, ChannelRealization, CorrelationMatrix, Ensemble, SVImpulse, SVParams,
                             estimate_correlation, full_tone_grid, gaussianity_pvalues, generate_rayleigh_ensemble,
                             generate_sv_ensemble, generate_sv_realization, mbofdm_tone_grid, normalize, psd_sqrt,
                             realization_rng, sample_impulse, to_frequency_domain)


def test_mbofdm_grid():
    g = mbofdm_tone_grid()
    assert g.N == 300 and g.n_fft == 384 and g.cp_samples == 96
    assert len(np.unique(g.data_tones)) == 300
    local = g.data_tones[:100] - 64
    assert 0 not in local and 5 not in local and -55 not in local
    assert local.min() == -56 and local.max() == 56


def test_sv_realization_is_normalised_and_sorted():
    imp = generate_sv_realization(CM1, realization_rng(3, 0))
    assert np.sum(imp.gains ** 2) == pytest.approx(1.0)
    assert np.all(np.diff(imp.delays) >= 0) and imp.delays[0] == 0.0
    assert imp.G > 0


def test_cm1_delay_statistics():
    """Averages against the published CM1 characteristics (5.05 ns mean, 5.28 ns rms)."""
    mean_excess, rms = [], []
    for k in range(400):
        imp = generate_sv_realization(CM1, realization_rng(1, k))
        p, t = imp.gains ** 2, imp.delays
        m = np.sum(p * t)
        mean_excess.append(m)
        rms.append(np.sqrt(np.sum(p * t * t) - m * m))
    assert np.mean(mean_excess) == pytest.approx(5.05, rel=0.12)
    assert np.mean(rms) == pytest.approx(5.28, rel=0.12)


def test_shadowing_spread():
    G = np.array([generate_sv_realization(CM1, realization_rng(2, k)).G for k in range(2000)])
    db = 20 * np.log10(G)
    assert abs(db.mean()) < 0.25
    assert db.std() == pytest.approx(3.0, rel=0.08)


def test_sv_params_validation():
    with pytest.raises(ValueError):
        SVParams(0.0, 2.5, 7.1, 4.3, 3.4, 3.4, 3.0)
    with pytest.raises(ValueError):
        SVParams(0.02, 2.5, 7.1, 4.3, -1.0, 3.4, 3.0)


def test_sampling_keeps_energy_and_prefix():
    grid = mbofdm_tone_grid()
    imp = SVImpulse(delays=np.array([0.0, 0.1, 1.0, 500.0]), gains=np.array([0.5, 0.5, 0.5, 0.5]), G=2.0)
    taps = sample_impulse(imp, grid)
    assert len(taps) == grid.cp_samples
    # samples are 0.63 ns apart: the first two rays share sample 0, the last is cut off
    # after renormalising over all binned rays (energy 1 + 0.25 + 0.25)
    assert taps[0] == pytest.approx(2.0 / np.sqrt(1.5))
    assert taps[1] == pytest.approx(1.0 / np.sqrt(1.5))


def test_frequency_response_matches_dft():
    grid = full_tone_grid(16)
    taps = np.array([1.0, 0.5, -0.25])
    r = to_frequency_domain(taps, grid)
    k = np.arange(16)
    ref = sum(t * np.exp(-2j * np.pi * k * n / 16) for n, t in enumerate(taps))
    assert np.allclose(r.h, ref)


def test_normalize_divides_out_shadowing():
    r = ChannelRealization(h=np.array([2.0, 4.0j]), G=2.0)
    n = normalize(r)
    assert np.allclose(n.h, [1.0, 2.0j]) and n.G == 1.0
    with pytest.raises(ValueError):
        ChannelRealization(h=np.ones(2), G=0.0)


def test_ensemble_is_deterministic_per_index():
    grid = mbofdm_tone_grid()
    a = generate_sv_ensemble(CM1, grid, 6, seed=9)
    b = generate_sv_ensemble(CM1, grid, 3, seed=9, start=3)
    c = generate_sv_ensemble(CM1, grid, 6, seed=9, threads=3)
    assert np.array_equal(a.h[3:], b.h)
    assert np.array_equal(a.h, c.h) and np.array_equal(a.G, c.G)


def test_ensemble_binary_and_csv_round_trip(tmp_path):
    ens = generate_sv_ensemble(CM1, mbofdm_tone_grid(), 4, seed=1)
    ens.save(tmp_path / "e.bin")
    back = Ensemble.load(tmp_path / "e.bin")
    assert np.array_equal(back.h, ens.h) and np.array_equal(back.G, ens.G)
    assert back.model_id == "CM1"
    ens.save_csv(tmp_path / "e.csv")
    back = Ensemble.load_csv(tmp_path / "e.csv")
    assert np.array_equal(back.h, ens.h) and np.array_equal(back.G, ens.G)


def test_ensemble_load_rejects_garbage(tmp_path):
    (tmp_path / "x.bin").write_bytes(b"NOPE" + bytes(20))
    with pytest.raises(ValueError):
        Ensemble.load(tmp_path / "x.bin")


def test_correlation_file_round_trip(tmp_path):
    h = generate_rayleigh_ensemble(np.eye(4), 50, seed=1).h
    corr = estimate_correlation(h)
    corr.save(tmp_path / "c.bin")
    back = CorrelationMatrix.load(tmp_path / "c.bin")
    assert np.array_equal(back.sigma, corr.sigma) and back.sample_count == 50


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 8), st.integers(0, 2**32 - 1))
def test_estimated_correlation_is_hermitian_psd(N, seed):
    rng = np.random.default_rng(seed)
    h = rng.normal(size=(3, N)) + 1j * rng.normal(size=(3, N))  # rank deficient on purpose
    corr = estimate_correlation(h)
    assert np.array_equal(corr.sigma, corr.sigma.conj().T)
    corr.check()
    ref = sum(np.outer(row, row.conj()) for row in h) / 3
    assert np.allclose(corr.sigma, ref)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_psd_sqrt(N, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(N, N)) + 1j * rng.normal(size=(N, N))
    sigma = A @ A.conj().T
    B = psd_sqrt(sigma)
    assert np.allclose(B @ B.conj().T, sigma)


def test_psd_checks_reject_indefinite():
    bad = np.array([[1.0, 2.0], [2.0, 1.0]], dtype=complex)
    with pytest.raises(ValueError):
        psd_sqrt(bad)
    with pytest.raises(ValueError):
        CorrelationMatrix(bad).check()


def test_rayleigh_ensemble_covariance():
    sigma = np.array([[1.0, 0.6j], [-0.6j, 1.0]])
    ens = generate_rayleigh_ensemble(sigma, 40000, seed=4)
    est = estimate_correlation(ens.h).sigma
    assert np.allclose(est, sigma, atol=0.03)
    assert np.mean(ens.h) == pytest.approx(0.0, abs=0.02)


def test_gaussianity_pvalues_accept_gaussian_reject_uniform():
    rng = np.random.default_rng(0)
    g = (rng.normal(size=(4000, 3)) + 1j * rng.normal(size=(4000, 3))) / np.sqrt(2)
    assert gaussianity_pvalues(g).min() > 0.001
    u = rng.uniform(-1, 1, size=(4000, 2)) + 1j * rng.uniform(-1, 1, size=(4000, 2))
    assert gaussianity_pvalues(u).max() < 1e-6
