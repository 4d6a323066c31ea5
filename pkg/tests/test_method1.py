import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qsfade.code import CodeSpec, enumerate_error_set, encode
from qsfade.events import SnrPoint, build_events, make_reference, snr_point
from qsfade.interleaving import BlockStage, InterleaverSpec, build, identity_spec
from qsfade.method1 import (Method1Curves, ber_curve_method1, method1_bers, outage_ber, pep, per_realization_ber,
                            per_start_ber, qfunc)
from qsfade.modem import make_constellation

import oracles

K3 = CodeSpec(3, (0o7, 0o5))
QPSK = make_constellation(4)
N = 12


@pytest.fixture(scope="module")
def toy():
    perm = build(InterleaverSpec(length=2 * N, stages=(BlockStage(4, 6),)))
    E = enumerate_error_set(K3, 8)
    ref = make_reference(K3, perm, QPSK, N, seed=5)
    return perm, E, ref


def naive_bound(ref, E, perm, h, es_n0, edge, clip=True):
    """Loop-by-loop union bound: build v = c xor q, interleave, map, sum Q."""
    L_c = len(ref.c)
    total = 0.0
    for i in range(L_c):
        acc = 0.0
        for v in E:
            if edge == "skip" and i + v.length > L_c:
                continue
            q = np.zeros(L_c, dtype=int)
            for k, bit in enumerate(v.bits):
                pos = i + k
                if pos >= L_c:
                    if edge == "wrap":
                        pos -= L_c
                    else:
                        continue
                q[pos] ^= bit
            if not q.any():
                continue
            vv = ref.c ^ q
            v_pi = np.empty(L_c, dtype=int)
            v_pi[perm.forward] = vv
            z = np.array([oracles.gray_qpsk(v_pi[2 * t], v_pi[2 * t + 1]) for t in range(N)])
            d2 = np.sum(np.abs(h) ** 2 * np.abs(ref.x - z) ** 2)
            acc += v.info_errors / K3.period * oracles.q_function(np.sqrt(es_n0 / 2 * d2))
        total += min(0.5, acc) if clip else acc
    return total / L_c


def test_reference_transmission(toy):
    perm, E, ref = toy
    assert ref.L_c == 2 * N and ref.N == N
    assert not ref.b[-2:].any()
    assert np.array_equal(ref.c, encode(ref.b, K3))
    assert np.allclose(ref.x, [oracles.gray_qpsk(ref.c_pi[2 * t], ref.c_pi[2 * t + 1]) for t in range(N)])


@pytest.mark.parametrize("edge", ["wrap", "truncate", "skip"])
def test_matches_naive_loops(toy, edge):
    perm, E, ref = toy
    h = np.random.default_rng(1).normal(size=N) + 1j * np.random.default_rng(2).normal(size=N)
    snr = SnrPoint(4.0, 0.5, 2)
    ours = per_realization_ber(ref, E, perm, QPSK, h, snr, edge=edge)
    assert ours == pytest.approx(naive_bound(ref, E, perm, h, snr.es_n0, edge), rel=1e-12)


def test_canonical_event_order(toy):
    perm, E, ref = toy
    t = build_events(ref, E, perm, QPSK)
    key = t.start * E.L + t.vector
    assert np.all(np.diff(key) > 0)
    assert t.n_events == ref.L_c * E.L


def test_awgn_per_start_equals_spectrum_bound(toy):
    perm, E, ref = toy
    table = build_events(ref, E, perm, QPSK)
    for db in (2.0, 6.0):
        snr = SnrPoint(db, 0.5, 2)
        per_start = per_start_ber(table, np.ones(N), snr)
        # Gray QPSK: each flipped bit adds |x - z|^2 = 2
        classical = sum(v.info_errors * oracles.q_function(np.sqrt(snr.es_n0 * v.weight)) for v in E)
        assert np.allclose(per_start, classical, rtol=1e-12, atol=0)


def test_pep_against_closed_form():
    h = np.array([1.0, 0.5j])
    x = np.array([1.0, 1.0])
    z = np.array([-1.0, 1j])
    snr = SnrPoint(3.0, 1.0, 1)
    d2 = 1.0 * 4 + 0.25 * 2
    assert pep(h, x, z, snr) == pytest.approx(oracles.q_function(np.sqrt(snr.es_n0 / 2 * d2)), rel=1e-12)
    with pytest.raises(ValueError):
        pep(h, x, z[:1], snr)


def test_qfunc_floor():
    assert qfunc(38.5) == 0.0
    assert qfunc(1.0) == pytest.approx(oracles.q_function(1.0), rel=1e-14)


def test_outage_convention():
    v = np.arange(1.0, 11.0)
    assert outage_ber(v, 10) == 9.0  # the worst 10% (one value) is in outage
    assert outage_ber(v, 0) == 10.0
    assert outage_ber(v, 25) == 8.0
    with pytest.raises(ValueError):
        outage_ber(v, 100)
    with pytest.raises(ValueError):
        outage_ber([], 10)


def _rayleigh(count, seed):
    rng = np.random.default_rng(seed)
    return (rng.normal(size=(count, N)) + 1j * rng.normal(size=(count, N))) / np.sqrt(2)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-5, 20))
def test_ber_in_half_open_interval(seed, db):
    perm = build(identity_spec(2 * N))
    E = enumerate_error_set(K3, 8)
    table = build_events(make_reference(K3, perm, QPSK, N), E, perm, QPSK)
    es = SnrPoint(db, 0.5, 2).es_n0
    p = method1_bers(table, _rayleigh(1, seed), [es])[0, 0]
    assert 0 < p <= 0.5


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 2 * np.pi))
def test_phase_invariance(seed, phi):
    perm = build(identity_spec(2 * N))
    E = enumerate_error_set(K3, 8)
    table = build_events(make_reference(K3, perm, QPSK, N), E, perm, QPSK)
    h = _rayleigh(1, seed)
    rng = np.random.default_rng(seed + 1)
    per_tone = np.exp(1j * rng.uniform(0, 2 * np.pi, N))
    base = method1_bers(table, h, [3.0])
    assert np.allclose(method1_bers(table, h * np.exp(1j * phi), [3.0]), base, rtol=1e-13)
    assert np.allclose(method1_bers(table, h * per_tone, [3.0]), base, rtol=1e-13)


def test_monotone_in_snr(toy):
    perm, E, ref = toy
    table = build_events(ref, E, perm, QPSK)
    es = 10 ** np.linspace(-1, 2, 25)
    bers = method1_bers(table, _rayleigh(30, 3), es)
    assert np.all(np.diff(bers, axis=1) <= 0)
    assert np.all(np.diff(bers.mean(axis=0)) <= 0)


def test_deterministic_across_threads_and_chunks(toy):
    perm, E, ref = toy
    table = build_events(ref, E, perm, QPSK)
    h = _rayleigh(40, 7)
    a = method1_bers(table, h, [1.0, 4.0])
    b = method1_bers(table, h, [1.0, 4.0], threads=4, chunk=7)
    assert np.array_equal(a, b)


def test_curves(toy):
    perm, E, ref = toy
    table = build_events(ref, E, perm, QPSK)
    pts = [snr_point(db, K3, QPSK) for db in (2, 4, 6)]
    c = ber_curve_method1(table, _rayleigh(20, 1), pts, outage_x=10)
    assert isinstance(c, Method1Curves)
    assert c.per_realization.shape == (20, 3)
    assert np.allclose(c.average, c.per_realization.mean(axis=0))
    assert c.outage[0] == np.sort(c.per_realization[:, 0])[-3]


def test_rejects_mismatched_inputs(toy):
    perm, E, ref = toy
    table = build_events(ref, E, perm, QPSK)
    with pytest.raises(ValueError):
        method1_bers(table, np.ones((1, N + 1)), [1.0])
    with pytest.raises(ValueError):
        build_events(ref, E, perm, QPSK, edge="bounce")
    with pytest.raises(ValueError):
        make_reference(K3, build(identity_spec(10)), QPSK, N)
