from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qsfade.code import (CodeSpec, EnumerationLimitError, ErrorSet, depuncture, encode, enumerate_error_set,
                         free_distance, is_catastrophic, mother_encode, puncture, viterbi_decode)
from qsfade.presets import CODES

import oracles

K3 = CodeSpec(3, (0o7, 0o5))
HALF = CODES["mbofdm-1/2"]


def test_k3_impulse_response():
    # input 1,0,0 through (7,5): 11 10 11
    assert encode([1, 0, 0], K3).tolist() == [1, 1, 1, 0, 1, 1]


def test_all_zero_input_gives_all_zero_output():
    assert not encode(np.zeros(60, dtype=np.int8), HALF).any()


def test_punctured_rate_arithmetic():
    assert HALF.rate == Fraction(1, 2)
    assert len(encode(np.zeros(600, dtype=np.int8), HALF)) == 1200
    assert CODES["mbofdm-1/4"].rate == Fraction(1, 4)
    assert CODES["mbofdm-1/8"].rate == Fraction(1, 8)
    assert CODES["mbofdm-3/4"].rate == Fraction(3, 4)


def test_declared_rate_must_match_pattern():
    with pytest.raises(ValueError):
        CodeSpec(7, (0o133, 0o165, 0o171), puncture=((1, 1), (1, 0), (0, 1)), nominal_rate=Fraction(2, 3))


@pytest.mark.parametrize("bad", [
    dict(constraint_length=3, generators=(0o17,)),
    dict(constraint_length=3, generators=(0o7, 0o5), repetition=3),
    dict(constraint_length=3, generators=(0o7, 0o5), puncture=((1, 0), (0, 0))),
    dict(constraint_length=3, generators=(0o7, 0o5), puncture=((1,),)),
])
def test_code_spec_validation(bad):
    with pytest.raises(ValueError):
        CodeSpec(**bad)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=4, max_size=40))
def test_encoder_matches_shift_register(bits):
    bits = bits[: len(bits) // 2 * 2]
    ours = encode(bits, HALF).tolist()
    ref = oracles.punctured_encode(bits, HALF.generators, 7, HALF.puncture)
    assert ours == ref


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=12, max_size=12), st.lists(st.integers(0, 1), min_size=12, max_size=12))
def test_encode_is_linear(a, b):
    a, b = np.array(a, dtype=np.int8), np.array(b, dtype=np.int8)
    for code in (K3, HALF, CODES["mbofdm-3/4"]):
        assert np.array_equal(encode(a ^ b, code), encode(a, code) ^ encode(b, code))


def test_repetition_equals_repeated_generators():
    rep = CodeSpec(3, (0o7, 0o5), repetition=2)
    twice = CodeSpec(3, (0o7, 0o5, 0o7, 0o5))
    b = np.random.default_rng(0).integers(0, 2, 30)
    assert np.array_equal(encode(b, rep), encode(b, twice))


def test_depuncture_inserts_zeros():
    code = CodeSpec(3, (0o7, 0o5), puncture=((1, 1), (1, 0)))
    out = depuncture([1.0, 2.0, 3.0], code)
    assert out.tolist() == [1.0, 2.0, 3.0, 0.0]
    two_of_three = CodeSpec(3, (0o7, 0o5, 0o3), puncture=((1,), (1,), (0,)))
    v = depuncture([1.0, 2.0, 3.0, 4.0], two_of_three)
    assert v.tolist() == [1.0, 2.0, 0.0, 3.0, 4.0, 0.0]


def test_depuncture_identity_without_puncturing():
    v = np.arange(10.0)
    assert np.array_equal(depuncture(v, K3), v)


def test_depuncture_length_mismatch():
    with pytest.raises(ValueError):
        depuncture(np.zeros(5), HALF)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 20), st.integers(0, 2**32 - 1))
def test_puncture_depuncture_round_trip(periods, seed):
    v = np.random.default_rng(seed).normal(size=periods * HALF.bits_per_period)
    full = depuncture(v, HALF).reshape(-1, HALF.n_eff)
    assert np.array_equal(puncture(full, HALF), v)


@pytest.mark.parametrize("code", [K3, HALF, CODES["mbofdm-3/4"], CODES["mbofdm-1/4"]])
def test_viterbi_noiseless_round_trip(code):
    rng = np.random.default_rng(3)
    n = 24 * code.period
    b = rng.integers(0, 2, size=(5, n), dtype=np.int8)
    b[:, -(code.constraint_length - 1):] = 0
    llr = 8.0 * (1 - 2.0 * encode(b, code))
    out = viterbi_decode(depuncture(llr, code), code)
    assert np.array_equal(out, b[:, : n - code.constraint_length + 1])


def test_viterbi_all_zero_metrics_is_deterministic():
    a = viterbi_decode(np.zeros(2 * 20), K3)
    b = viterbi_decode(np.zeros(2 * 20), K3)
    assert np.array_equal(a, b)
    assert not a.any()  # ties keep the lower predecessor, i.e. the zero path


def test_viterbi_corrects_few_flips():
    rng = np.random.default_rng(5)
    for _ in range(20):
        b = np.concatenate([rng.integers(0, 2, 10), [0, 0]]).astype(np.int8)
        c = encode(b, K3)
        llr = 5.0 * (1 - 2.0 * c)
        flips = rng.choice(len(c), size=2, replace=False)  # d_free = 5
        llr[flips] *= -0.9
        assert np.array_equal(viterbi_decode(llr, K3), b[:10])


def test_viterbi_matches_exhaustive_ml():
    rng = np.random.default_rng(8)
    for _ in range(15):
        n_info = 8
        llr = rng.normal(size=2 * (n_info + 2))
        ours = viterbi_decode(llr, K3)
        ref = oracles.exhaustive_ml(llr, (0o7, 0o5), 3, n_info)
        # compare path metrics rather than bits so exact ties cannot flake
        def metric(u):
            c = np.array(oracles.shift_register_encode(list(u) + [0, 0], (0o7, 0o5), 3))
            return float(np.sum(llr * (1 - 2 * c)))
        assert metric(ours) == pytest.approx(metric(ref), abs=1e-12)


def test_k3_event_spectrum_matches_brute_force():
    E = enumerate_error_set(K3, 7)
    hist = {}
    for v in E:
        hist[v.weight] = hist.get(v.weight, 0) + 1
    assert hist == {5: 1, 6: 2}
    assert hist == oracles.brute_force_events((0o7, 0o5), 3, 12, 7)


def test_k7_spectrum_matches_brute_force():
    code = CODES["k7-1/2"]
    E = enumerate_error_set(code, 13)
    hist = {}
    for v in E:
        hist[v.weight] = hist.get(v.weight, 0) + 1
    assert hist == oracles.brute_force_events((0o133, 0o171), 7, 18, 13)


def test_error_vectors_reencode():
    E = enumerate_error_set(HALF, 12)
    for v in E:
        T = len(v.inputs) + HALF.constraint_length - 1
        full = mother_encode(list(v.inputs) + [0] * (HALF.constraint_length - 1), HALF)
        mask = HALF.mask[(np.arange(T) + v.phase) % HALF.period]
        bits = full[mask]
        assert tuple(bits[: v.length].tolist()) == v.bits
        assert not bits[v.length:].any()
        assert v.bits[0] == 1 and v.bits[-1] == 1


def test_weight_bound_is_strict():
    d = free_distance(K3)
    assert d == 5
    assert enumerate_error_set(K3, d).L == 0
    assert enumerate_error_set(K3, d + 1).min_weight == d


def test_enumeration_is_deterministic_and_round_trips(tmp_path):
    a = enumerate_error_set(HALF, 12)
    b = enumerate_error_set(HALF, 12)
    assert a.to_csv() == b.to_csv()
    a.save(tmp_path / "e.csv")
    back = ErrorSet.load(tmp_path / "e.csv", HALF)
    assert back.to_csv() == a.to_csv()
    with pytest.raises(ValueError):
        ErrorSet.load(tmp_path / "e.csv", K3)


def test_enumeration_limits():
    with pytest.raises(EnumerationLimitError):
        enumerate_error_set(HALF, 20, max_vectors=50)
    catastrophic = CodeSpec(3, (0o6, 0o5))  # 1+D / 1+D^2 share a factor
    assert is_catastrophic(catastrophic)
    with pytest.raises(EnumerationLimitError):
        enumerate_error_set(catastrophic, 8)
