import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from sca.net import SparseCodeMaps
from sca.protocol import (
    AmbiguatedCodes,
    NoiseModel,
    SupportKey,
    ambiguate,
    attack_random_guess,
    extract_support,
    fit_noise_model,
    purify,
    sample_truncated_magnitudes,
    support_of,
    verify_support,
)


def random_codes(rng, L=4, m=64, k=8, item_id="x"):
    vals = np.zeros((L, m), dtype=np.float32)
    support = np.sort(np.stack([rng.choice(m, k, replace=False) for _ in range(L)]), axis=1)
    mags = rng.uniform(0.1, 2.0, size=(L, k)) * rng.choice([-1, 1], size=(L, k))
    np.put_along_axis(vals, support, mags.astype(np.float32), axis=1)
    return SparseCodeMaps(vals, support, item_id)


def simple_noise(L=4):
    return NoiseModel(
        mean=np.ones(L), std=np.full(L, 0.3), threshold=np.full(L, 0.1),
        sign_prob=np.full(L, 0.5), loc=np.ones(L), scale=np.full(L, 0.3),
    )


def test_extract_support_example():
    c = SparseCodeMaps(np.array([[0.0, 3.0, 0.0, -2.0]]), [[1, 3]])
    np.testing.assert_array_equal(extract_support(c).indices, [[1, 3]])
    np.testing.assert_array_equal(support_of([0, 3, 0, -2]), [1, 3])


def test_fit_noise_constant_group():
    codes = [SparseCodeMaps(np.array([[2.0, 0.0, 2.0]]), [[0, 2]]) for _ in range(3)]
    nm = fit_noise_model(codes)
    assert nm.mean[0] == 2.0 and nm.std[0] == 0.0 and nm.threshold[0] == 2.0 and nm.sign_prob[0] == 1.0


def test_fit_noise_single_code():
    c = SparseCodeMaps(np.array([[1.0, -3.0, 0.0, 2.0]]), [[0, 1, 3]])
    nm = fit_noise_model([c])
    assert nm.mean[0] == pytest.approx(2.0)
    assert nm.std[0] == pytest.approx(1.0)
    assert nm.threshold[0] == 1.0
    assert nm.sign_prob[0] == pytest.approx(2 / 3)


def test_fit_noise_empty():
    with pytest.raises(ValueError):
        fit_noise_model([])


def test_fit_noise_recovers_known_gaussian_law():
    rng = np.random.default_rng(0)
    mu, sigma, n = 5.0, 0.5, 4000  # truncation far in the tail: effectively Gaussian
    codes = []
    for i in range(n // 4):
        vals = np.zeros((1, 8), dtype=np.float32)
        vals[0, :4] = rng.normal(mu, sigma, size=4)
        codes.append(SparseCodeMaps(vals, [[0, 1, 2, 3]]))
    nm = fit_noise_model(codes)
    se_mean = sigma / np.sqrt(n)
    se_std = sigma / np.sqrt(2 * (n - 1))
    assert abs(nm.mean[0] - mu) < 3 * se_mean
    assert abs(nm.std[0] - sigma) < 3 * se_std


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 56), st.integers(0, 2**31 - 1))
def test_exact_unlock_and_superset(code_seed, k_n, amb_seed):
    rng = np.random.default_rng(code_seed)
    z = random_codes(rng, item_id=f"item{code_seed}")
    u_p = ambiguate(z, simple_noise(), k_n, amb_seed)
    assert u_p.indices.shape == (4, 8 + k_n)
    dense = u_p.to_dense()
    assert np.all(np.count_nonzero(dense, axis=1) == 8 + k_n)
    for g in range(4):
        assert set(z.support[g]) <= set(u_p.indices[g])
    # noise only off the true support
    np.testing.assert_array_equal(np.take_along_axis(dense - z.values, z.support, axis=1), 0)
    back = purify(u_p, extract_support(z))
    assert back.values.tobytes() == z.values.tobytes()
    np.testing.assert_array_equal(back.support, z.support)


def test_k_n_zero_is_identity():
    z = random_codes(np.random.default_rng(1))
    u_p = ambiguate(z, simple_noise(), 0, 3)
    np.testing.assert_array_equal(u_p.to_dense(), z.values)


def test_k_n_out_of_range():
    z = random_codes(np.random.default_rng(1))
    with pytest.raises(ValueError):
        ambiguate(z, simple_noise(), 57, 0)
    with pytest.raises(ValueError):
        ambiguate(z, simple_noise(), -1, 0)


def test_full_scale_k_prime():
    rng = np.random.default_rng(2)
    z = random_codes(rng, L=2, m=512, k=128)
    u_p = ambiguate(z, simple_noise(2), 128, 0)
    assert u_p.k_prime == 256
    assert np.all(np.count_nonzero(u_p.to_dense(), axis=1) == 256)


def test_ambiguation_reproducible_per_item_and_seed():
    z = random_codes(np.random.default_rng(1), item_id="abc")
    a = ambiguate(z, simple_noise(), 8, 5)
    b = ambiguate(z, simple_noise(), 8, 5)
    c = ambiguate(z, simple_noise(), 8, 6)
    np.testing.assert_array_equal(a.values, b.values)
    assert not np.array_equal(a.indices, c.indices)


def test_decoys_respect_threshold_and_signs():
    noise = NoiseModel(mean=[1.0], std=[0.5], threshold=[0.8], sign_prob=[1.0], loc=[1.0], scale=[0.5])
    rng = np.random.default_rng(0)
    vals = noise.sample(0, 5000, rng)
    assert vals.min() >= 0.8
    assert np.all(vals > 0)


def test_truncated_sampler_matches_scipy_law():
    u = np.random.default_rng(3).uniform(size=20_000)
    x = sample_truncated_magnitudes(u, 0.5, 0.4, 0.3)
    a = (0.3 - 0.5) / 0.4
    assert stats.kstest(x, stats.truncnorm(a, np.inf, loc=0.5, scale=0.4).cdf).pvalue > 0.001


def test_decoy_magnitudes_indistinguishable_from_truth():
    """10,000 decoys vs truncated-Gaussian true magnitudes: KS below the 1% critical value."""
    rng = np.random.default_rng(9)
    loc, scale, thr = 0.6, 0.3, 0.25
    a = (thr - loc) / scale
    law = stats.truncnorm(a, np.inf, loc=loc, scale=scale)
    codes = []
    for i in range(2500):
        vals = np.zeros((1, 16), dtype=np.float32)
        vals[0, :4] = law.rvs(size=4, random_state=rng) * rng.choice([-1, 1], size=4)
        codes.append(SparseCodeMaps(vals, [[0, 1, 2, 3]], f"t{i}"))
    true_mag = np.concatenate([np.abs(c.values[0, :4]) for c in codes])
    noise = fit_noise_model(codes)
    fake = np.abs(noise.sample(0, 10_000, np.random.default_rng(10)))
    n1, n2 = len(true_mag), len(fake)
    crit = 1.628 * np.sqrt((n1 + n2) / (n1 * n2))
    assert stats.ks_2samp(true_mag, fake).statistic < crit


def test_purify_errors_and_disjoint_key():
    z = random_codes(np.random.default_rng(4), item_id="a")
    u_p = ambiguate(z, simple_noise(), 8, 0)
    with pytest.raises(ValueError):
        purify(u_p, SupportKey(z.support, 64, "b"))
    with pytest.raises(ValueError):
        purify(u_p, SupportKey(z.support, 128, "a"))
    off = np.stack([np.setdiff1d(np.arange(64), row)[:8] for row in u_p.indices])
    assert not purify(u_p, SupportKey(off, 64, "a")).values.any()


def test_malformed_key_rejected():
    with pytest.raises(ValueError):
        SupportKey(np.array([[3, 1]]), 8)
    with pytest.raises(ValueError):
        SupportKey(np.array([[1, 9]]), 8)


def test_guess_with_k_equal_k_prime_is_full_support():
    z = random_codes(np.random.default_rng(5))
    u_p = ambiguate(z, simple_noise(), 8, 0)
    np.testing.assert_array_equal(attack_random_guess(u_p, 16, 3).indices, u_p.indices)
    with pytest.raises(ValueError):
        attack_random_guess(u_p, 17, 0)


def test_guess_selection_frequency_is_uniform():
    z = random_codes(np.random.default_rng(6), L=1)
    u_p = ambiguate(z, simple_noise(1), 8, 0)
    trials, k, kp = 4000, 8, 16
    counts = {i: 0 for i in u_p.indices[0]}
    for s in range(trials):
        for i in attack_random_guess(u_p, k, s).indices[0]:
            counts[i] += 1
    p = k / kp
    sigma = np.sqrt(trials * p * (1 - p))
    for c in counts.values():
        assert abs(c - trials * p) < 3 * sigma


def test_retained_true_entries_hypergeometric_mean():
    rng = np.random.default_rng(7)
    z = random_codes(rng, L=1, m=512, k=128)
    u_p = ambiguate(z, simple_noise(1), 128, 0)
    key = extract_support(z)
    hits = [verify_support(attack_random_guess(u_p, 128, s), key)[0] for s in range(400)]
    mean = stats.hypergeom(256, 128, 128).mean()
    assert mean == 64
    se = stats.hypergeom(256, 128, 128).std() / np.sqrt(len(hits))
    assert abs(np.mean(hits) - mean) < 4 * se


def test_verify_support_examples():
    a = SupportKey(np.array([[0, 1, 2, 3]]), 8)
    assert verify_support(a, a) == [4]
    assert verify_support(a, SupportKey(np.array([[4, 5, 6, 7]]), 8)) == [0]
    assert verify_support(a, SupportKey(np.array([[2, 3, 4, 5]]), 8)) == [2]
    with pytest.raises(ValueError):
        verify_support(a, SupportKey(np.array([[0, 1, 2]]), 8))


def test_ambiguated_codes_validation():
    with pytest.raises(ValueError):
        AmbiguatedCodes(np.array([[0, 1]]), np.array([[1.0]]), 4)
