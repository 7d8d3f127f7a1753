import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cdpnes.compressors import (KINDS, CompressorContract, CompressorError, ContractViolation,
                                Identity, NormSign, StochasticQuantizer, TopK, bits_per_round,
                                compress, decode_payload, estimate_contract, make_compressor)
from cdpnes.rng import stream

from conftest import backends

ALL = [Identity(), StochasticQuantizer(1), StochasticQuantizer(2), StochasticQuantizer(4),
       TopK(1), TopK(3), NormSign()]


def test_identity_lossless(rng):
    x = rng.normal(size=7)
    msg = compress("identity", x)
    np.testing.assert_array_equal(msg.decoded, x)
    assert msg.bits == 7 * 32


def test_top1_example():
    msg = compress("top_k", np.array([3.0, -1.0]), k=1)
    np.testing.assert_array_equal(msg.decoded, [3.0, 0.0])
    err = np.sum((msg.decoded - [3.0, -1.0]) ** 2)
    assert err == 1.0 <= (1 - 1 / 2) * 10


def test_top_k_ties_lowest_index():
    np.testing.assert_array_equal(compress("top_k", np.array([1.0, -1.0, 1.0]), k=2).decoded,
                                  [1.0, -1.0, 0.0])


def test_quantizer_unbiased(rng):
    x = np.array([0.9, -0.3, 0.05, 0.0, -1.2])
    q = StochasticQuantizer(2)
    N = 100_000
    U = stream(7, 0, "compress").random((N, x.size))
    Y = q.decode_rows(np.tile(x, (N, 1)), U)
    se = Y.std(axis=0, ddof=1) / math.sqrt(N)
    # summation rounding slack for coordinates that are decoded exactly
    assert np.all(np.abs(Y.mean(axis=0) - x) <= 3 * se + 1e-10 * np.abs(x))


def test_quantizer_levels():
    q = StochasticQuantizer(2)
    x = np.array([2.0, -1.0, 0.3])
    Y = q.decode_rows(np.tile(x, (200, 1)), stream(1, 0, "compress").random((200, 3)))
    assert set(np.unique(np.abs(Y) / 2.0)) <= {0.0, 0.5, 1.0}
    assert np.all(Y[:, 0] == 2.0)


def test_norm_sign_values():
    y = NormSign().decode_rows(np.array([[4.0, -1.0, 0.0]]))[0]
    np.testing.assert_array_equal(y, [2.0, -2.0, 2.0])


@pytest.mark.parametrize("comp", ALL, ids=repr)
def test_zero_vector(comp):
    msg = comp.compress(np.zeros(5), stream(0, 0, "compress"))
    np.testing.assert_array_equal(msg.decoded, 0.0)
    np.testing.assert_array_equal(decode_payload(msg.payload, comp), 0.0)


def test_zero_vector_header_bits():
    assert StochasticQuantizer(2).compress(np.zeros(4), stream(0, 0, "compress")).bits == 32
    assert NormSign().compress(np.zeros(4)).bits == 32


@pytest.mark.parametrize("kind,kw", [("quantize", {"b": 0}), ("top_k", {"k": 0}),
                                     ("quantize", {"b": 1.5})])
def test_bad_parameters(kind, kw):
    with pytest.raises(CompressorError):
        make_compressor(kind, **kw)


def test_unknown_kind():
    with pytest.raises(CompressorError):
        make_compressor("gzip")


def test_randomized_needs_rng():
    with pytest.raises(CompressorError):
        StochasticQuantizer().compress(np.ones(3))


@pytest.mark.parametrize("comp", ALL, ids=repr)
def test_payload_roundtrip(comp, rng):
    x = rng.normal(size=11)
    msg = comp.compress(x, stream(3, 0, "compress"))
    np.testing.assert_array_equal(decode_payload(msg.payload, comp), msg.decoded)
    assert msg.payload[0] == comp.tag
    assert int.from_bytes(msg.payload[1:5], "little") == 11


@pytest.mark.parametrize("comp", ALL, ids=repr)
def test_deterministic(comp, rng):
    x = rng.normal(size=9)
    a = comp.compress(x, stream(5, 2, "compress"))
    b = comp.compress(x, stream(5, 2, "compress"))
    assert a.payload == b.payload
    np.testing.assert_array_equal(a.decoded, b.decoded)


@settings(max_examples=40, deadline=None)
@given(alpha=st.floats(1e-3, 1e3), seed=st.integers(0, 1000))
def test_quantizer_scale_covariant(alpha, seed):
    rng = np.random.default_rng(seed)
    x, U = rng.normal(size=(1, 8)), rng.random((1, 8))
    q = StochasticQuantizer(3)
    np.testing.assert_allclose(q.decode_rows(alpha * x, U), alpha * q.decode_rows(x, U),
                               rtol=1e-12, atol=0)


@pytest.mark.parametrize("comp", ALL, ids=repr)
@pytest.mark.parametrize("m", [1, 2, 10, 100])
def test_contract_consistency(comp, m):
    c = comp.contract(m)
    assert c.C <= c.consistency_bound + 1e-12


def test_contract_validation():
    with pytest.raises(CompressorError):
        CompressorContract(0.1, 0.0, 1.0)


@pytest.mark.parametrize("comp", [Identity(), TopK(10)], ids=repr)
def test_estimate_lossless(comp):
    rep = estimate_contract(comp, 10, n_trials=1000)
    assert rep.C_hat == pytest.approx(0.0, abs=1e-24)
    assert rep.delta_hat == pytest.approx(1.0, abs=1e-12)


def test_estimate_norm_sign_dim4():
    rep = estimate_contract(NormSign(), 4, n_trials=1000)
    assert rep.C_hat <= rep.declared.C


def test_estimate_detects_violation():
    class Liar(TopK):
        def contract(self, m):
            return CompressorContract(0.01, 0.99, 1.0)

    with pytest.raises(ContractViolation):
        estimate_contract(Liar(1), 10, n_trials=1000)


def test_bits_per_round_examples():
    assert bits_per_round(StochasticQuantizer(2, l=32), 100, 50) == 16600
    assert bits_per_round(Identity(l=32), 100, 50) == 160000
    assert bits_per_round(StochasticQuantizer(2, l=32), 0, 50) == 50 * 32


def test_top_k_bits():
    assert TopK(3).message_bits(100) == 3 * (32 + 7)


@backends
@pytest.mark.parametrize("comp", ALL, ids=repr)
def test_backends_agree(comp, backend, rng):
    D = rng.normal(size=(6, 13))
    D[2] = 0.0
    U = rng.random(D.shape)
    ref = comp.decode_rows(D, U, "python")
    np.testing.assert_array_equal(comp.decode_rows(D, U, backend), ref)


def test_kinds_registry():
    assert set(KINDS) == {"identity", "quantize", "top_k", "norm_sign"}
