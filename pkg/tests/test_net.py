import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sca import functional as F
from sca.net import CodecNet, NetworkConfig, SparseCodeMaps, checkpoint_bytes, read_checkpoint
from sca.tensor import ShapeError, Tensor

from conftest import tiny_config
from oracles import network_fd_check, sort_oracle_support


# -- top-k ------------------------------------------------------------------
def test_topk_definitional_example():
    out = F.top_k_sparsify(np.array([3.0, -5.0, 1.0, 0.5]), 2)
    np.testing.assert_array_equal(out, [3.0, -5.0, 0.0, 0.0])


def test_topk_ties_go_to_lower_index():
    np.testing.assert_array_equal(F.top_k_indices(np.array([1.0, -1.0, 1.0, 0.0]), 2), [0, 1])
    np.testing.assert_array_equal(F.top_k_indices(np.zeros(5), 3), [0, 1, 2])


def test_topk_rejects_bad_k():
    with pytest.raises(ValueError):
        F.top_k_indices(np.ones(4), 0)
    with pytest.raises(ValueError):
        F.top_k_indices(np.ones(4), 5)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-100, 100, allow_nan=False), min_size=1, max_size=40), st.data())
def test_topk_matches_sort_oracle(values, data):
    v = np.array(values, dtype=np.float64)
    k = data.draw(st.integers(1, len(v)))
    np.testing.assert_array_equal(F.top_k_indices(v, k), sort_oracle_support(list(v), k))
    out = F.top_k_sparsify(v, k)
    assert np.count_nonzero(out) <= k
    np.testing.assert_array_equal(F.top_k_sparsify(out, k), out)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 30), st.integers(0, 10_000))
def test_topk_permutation_equivariant(m, seed):
    rng = np.random.default_rng(seed)
    v = rng.permutation(m) + rng.uniform(0.1, 0.9, size=m)  # distinct magnitudes
    v *= rng.choice([-1, 1], size=m)
    k = int(rng.integers(1, m + 1))
    perm = rng.permutation(m)
    np.testing.assert_array_equal(F.top_k_sparsify(v[perm], k), F.top_k_sparsify(v, k)[perm])


# -- config -----------------------------------------------------------------------
def test_config_invariants():
    with pytest.raises(ValueError):
        NetworkConfig(input_shape=(1, 30, 30))  # 8 does not divide 30
    with pytest.raises(ValueError):
        NetworkConfig(k=65)
    with pytest.raises(ValueError):
        NetworkConfig(block_channels=(32, 64, 64, 128, 128, 5))
    full = NetworkConfig.full_scale()
    assert (full.L, full.m, full.k, full.input_shape) == (20, 512, 128, (3, 128, 128))
    assert full.bottleneck_hw == (16, 16)
    assert NetworkConfig.desk().bottleneck_hw == (4, 4)


def test_parameter_count_independent_of_batch(tiny_net):
    n = tiny_net.num_parameters()
    tiny_net.encode_batch(np.zeros((5, 1, 8, 8)))
    assert tiny_net.num_parameters() == n
    assert "group.weight" in tiny_net.params
    assert not any("dec" in name and "group" in name and "weight" in name for name in tiny_net.params)


# -- encode / decode ---------------------------------------------------------------
def test_encode_gives_exactly_k_nonzeros(tiny_net, rng):
    x = rng.uniform(size=(7, 1, 8, 8))
    for codes in tiny_net.encode_batch(x):
        assert codes.values.shape == (2, 6) and codes.support.shape == (2, 2)
        assert np.all(codes.nonzero_counts() <= 2)
        np.testing.assert_array_equal(codes.support, F.top_k_indices(codes.values, 2))


def test_zero_image_zero_biases_keeps_k_element_support():
    net = CodecNet(tiny_config(), seed=0)
    for name, p in net.params.items():
        if name.endswith("bias"):
            p.data[...] = 0
    codes = net.encode(np.zeros((1, 8, 8)))
    assert not codes.values.any()
    np.testing.assert_array_equal(codes.support, [[0, 1], [0, 1]])


def test_decode_shape_and_clamp(tiny_net, rng):
    x = rng.uniform(size=(1, 8, 8))
    out = tiny_net.decode(tiny_net.encode(x))
    assert out.shape == (1, 1, 8, 8)
    zero = SparseCodeMaps(np.zeros((2, 6)), [[0, 1], [0, 1]])
    z = tiny_net.decode(zero)
    assert z.min() >= 0 and z.max() <= 1


def test_bottleneck_zero_codes_ignore_input(tiny_net, rng):
    a, b = rng.uniform(size=(2, 1, 1, 8, 8))
    za = tiny_net.code_tensor(Tensor(a)).data * 0
    zb = tiny_net.code_tensor(Tensor(b)).data * 0
    np.testing.assert_array_equal(tiny_net.decode_values(za), tiny_net.decode_values(zb))


def test_decode_single_group(tiny_net, rng):
    codes = tiny_net.encode(rng.uniform(size=(1, 8, 8)))
    assert tiny_net.decode_single_group(codes, 1).shape == (1, 1, 8, 8)
    with pytest.raises(ValueError):
        tiny_net.decode_single_group(codes, 0)
    with pytest.raises(ValueError):
        tiny_net.decode_single_group(codes, 3)
    # group layer is linear: per-group maps sum to the full map, bias counted once
    z = Tensor(codes.values[None])
    full = tiny_net.bottleneck_maps(z).data
    bias = tiny_net.params["group.dec_bias"].data
    parts = []
    for g in range(2):
        v = np.zeros_like(codes.values)
        v[g] = codes.values[g]
        parts.append(tiny_net.bottleneck_maps(Tensor(v[None])).data - bias)
    np.testing.assert_allclose(sum(parts) + bias, full, atol=1e-6)


def test_encode_rejects_wrong_shape(tiny_net):
    with pytest.raises(ShapeError):
        tiny_net.encode_batch(np.zeros((2, 1, 4, 4)))


def test_sparse_code_maps_validation():
    with pytest.raises(ValueError):
        SparseCodeMaps(np.array([[1.0, 2.0, 0.0]]), [[0]])  # nonzero off support
    with pytest.raises(ValueError):
        SparseCodeMaps(np.array([[1.0, 2.0, 0.0]]), [[1, 0]])  # not increasing
    c = SparseCodeMaps.from_dense(np.array([[0.0, 3.0, 0.0, -2.0]]), 2, "x")
    np.testing.assert_array_equal(c.support, [[1, 3]])


# -- gradients --------------------------------------------------------------------
def test_full_network_gradients_fd():
    """Every parameter of the encoder-decoder against central differences, 64-bit."""
    _seed, bad, n = network_fd_check(tiny_config())
    assert n == len(CodecNet(tiny_config()).params)
    assert bad == []


# -- checkpoint format --------------------------------------------------------------
def test_checkpoint_round_trip_bitwise(tiny_net):
    raw = checkpoint_bytes(tiny_net)
    assert raw[:4] == b"SCAM"
    back = read_checkpoint(io.BytesIO(raw))
    assert back.config == tiny_net.config
    for name in tiny_net.params:
        np.testing.assert_array_equal(back.params[name].data, tiny_net.params[name].data)
    assert checkpoint_bytes(back) == raw


def test_checkpoint_bad_magic():
    with pytest.raises(ValueError):
        read_checkpoint(io.BytesIO(b"XXXX\x01"))
