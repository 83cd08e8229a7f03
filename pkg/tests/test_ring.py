import numpy as np
import pytest

from herl import ring
from herl.errors import StructuralError

SIGMA_PAPER = 8 / np.sqrt(2 * np.pi)


def small_params(n=16, bits=(7,), base=1):
    primes = ring.find_ntt_primes(n, bits)
    return ring.RingParams(n=n, primes=primes, base_count=base)


def schoolbook_negacyclic(a_coeffs, b_coeffs, n, q):
    """O(N^2) oracle over Python ints."""
    out = [0] * n
    for i in range(n):
        ai = int(a_coeffs[i])
        for j in range(n):
            k = i + j
            v = ai * int(b_coeffs[j])
            if k >= n:
                out[k - n] = (out[k - n] - v) % q
            else:
                out[k] = (out[k] + v) % q
    return out


def residues(elem, prime_idx=0):
    return [int(x) for x in elem.data[prime_idx]]


class TestParams:
    def test_prime_search_properties(self):
        for n, bits in [(16, [7, 13]), (4096, [40, 40, 40]), (8192, [30, 29])]:
            primes = ring.find_ntt_primes(n, bits)
            assert len(set(primes)) == len(primes)
            for q, b in zip(primes, bits):
                assert q % (2 * n) == 1
                assert q.bit_length() == b
                assert ring.is_prime(q)

    def test_prime_search_deterministic(self):
        a = ring.find_ntt_primes(1024, [40, 40, 30])
        b = ring.find_ntt_primes(1024, [40, 40, 30])
        assert a == b

    def test_total_bits(self):
        p = ring.RingParams.generate(1024, [30], [40, 40])
        assert p.total_bits == 110
        assert p.max_level == 2

    def test_non_power_of_two_rejected(self):
        with pytest.raises(ValueError):
            ring.RingParams(n=12, primes=(97,))

    def test_bad_prime_rejected(self):
        with pytest.raises(ValueError):
            ring.RingParams(n=16, primes=(101,))  # not 1 mod 32


class TestAdd:
    def test_additive_identity(self):
        p = small_params()
        rng = np.random.default_rng(0)
        a = ring.sample("uniform", p, rng, level=0)
        z = ring.zero(p, 0)
        assert ring.ring_add(a, z) == a

    def test_additive_inverse(self):
        p = small_params()
        a = ring.sample("uniform", p, np.random.default_rng(1), level=0)
        assert ring.ring_add(a, ring.ring_neg(a)) == ring.zero(p, 0)

    def test_matches_schoolbook_mod_add(self):
        p = ring.RingParams(n=16, primes=(97,))
        rng = np.random.default_rng(2)
        for _ in range(20):
            a = ring.sample("uniform", p, rng, level=0)
            b = ring.sample("uniform", p, rng, level=0)
            want = [(x + y) % 97 for x, y in zip(residues(a), residues(b))]
            assert residues(ring.ring_add(a, b)) == want

    def test_level_mismatch_rejected(self):
        p = small_params(bits=(7, 8))
        rng = np.random.default_rng(3)
        a = ring.sample("uniform", p, rng, level=0)
        b = ring.sample("uniform", p, rng, level=1)
        with pytest.raises(StructuralError):
            ring.ring_add(a, b)

    def test_representation_mismatch_rejected(self):
        p = small_params()
        rng = np.random.default_rng(4)
        a = ring.sample("uniform", p, rng, level=0)
        b = ring.ntt_transform(a, "forward")
        with pytest.raises(StructuralError):
            ring.ring_add(a, b)


class TestMul:
    def test_multiplicative_identity(self):
        p = small_params()
        rng = np.random.default_rng(5)
        a = ring.sample("uniform", p, rng, level=0)
        one = ring.from_int_coeffs([1] + [0] * 15, p, 0)
        got = ring.to_coef(ring.ring_mul(a, one))
        assert got == a

    def test_x_half_squared_is_minus_one(self):
        # X^(N/2) * X^(N/2) = X^N = -1 in the ring
        p = ring.RingParams(n=16, primes=(97,))
        coeffs = [0] * 16
        coeffs[8] = 1
        x_half = ring.from_int_coeffs(coeffs, p, 0)
        got = ring.to_coef(ring.ring_mul(x_half, x_half))
        assert residues(got) == [96] + [0] * 15

    @pytest.mark.parametrize("n,q", [(8, 97), (16, 97), (32, 193)])
    def test_matches_schoolbook_negacyclic(self, n, q):
        p = ring.RingParams(n=n, primes=(q,))
        rng = np.random.default_rng(n)
        for _ in range(100):
            a = ring.sample("uniform", p, rng, level=0)
            b = ring.sample("uniform", p, rng, level=0)
            got = ring.to_coef(ring.ring_mul(a, b))
            assert residues(got) == schoolbook_negacyclic(
                residues(a), residues(b), n, q)

    def test_multi_prime_rows_independent(self):
        p = small_params(n=32, bits=(9, 10, 11), base=1)
        rng = np.random.default_rng(7)
        a = ring.sample("ternary", p, rng, level=2)
        b = ring.sample("ternary", p, rng, level=2)
        got = ring.to_coef(ring.ring_mul(a, b))
        for i, q in enumerate(p.primes):
            want = schoolbook_negacyclic(a.data[i], b.data[i], 32, q)
            assert [int(x) for x in got.data[i]] == want


class TestNtt:
    def test_roundtrip_identity(self):
        p = small_params(n=64, bits=(20,))
        rng = np.random.default_rng(8)
        for _ in range(10):
            a = ring.sample("uniform", p, rng, level=0)
            back = ring.ntt_transform(ring.ntt_transform(a, "forward"), "inverse")
            assert back == a

    def test_forward_of_zero(self):
        p = small_params()
        z = ring.zero(p, 0)
        assert ring.ntt_transform(z, "forward").data.sum() == 0

    def test_pointwise_product_equals_ring_mul(self):
        n, q = 32, 193
        p = ring.RingParams(n=n, primes=(q,))
        rng = np.random.default_rng(9)
        for _ in range(25):
            a = ring.sample("uniform", p, rng, level=0)
            b = ring.sample("uniform", p, rng, level=0)
            got = ring.to_coef(ring.ring_mul(a, b))
            want = schoolbook_negacyclic(residues(a), residues(b), n, q)
            assert residues(got) == want

    def test_wrong_direction_rejected(self):
        p = small_params()
        a = ring.sample("uniform", p, np.random.default_rng(10), level=0)
        with pytest.raises(StructuralError):
            ring.ntt_transform(a, "inverse")
        f = ring.ntt_transform(a, "forward")
        with pytest.raises(StructuralError):
            ring.ntt_transform(f, "forward")


class TestSamplers:
    def test_gaussian_empirical_std(self):
        # Table value sigma = 8/sqrt(2*pi) ~ 3.1915
        p = ring.RingParams.generate(1024, [40], [])
        rng = np.random.default_rng(11)
        draws = []
        for _ in range(1000):  # 1000 * 1024 > 1e6 draws
            e = ring.sample("gaussian", p, rng, sigma=SIGMA_PAPER)
            draws.append(ring.to_float_centered(e))
        flat = np.concatenate(draws)
        assert flat.size > 10**6
        assert abs(flat.std() - 3.192) <= 0.02

    def test_gaussian_tail_cut(self):
        p = ring.RingParams.generate(1024, [40], [])
        rng = np.random.default_rng(12)
        limit = np.ceil(6 * SIGMA_PAPER)
        worst = 0.0
        for _ in range(1000):
            e = ring.sample("gaussian", p, rng, sigma=SIGMA_PAPER)
            worst = max(worst, np.abs(ring.to_float_centered(e)).max())
        assert worst <= limit

    def test_same_seed_same_element(self):
        p = small_params()
        for kind in ("uniform", "ternary", "gaussian"):
            a = ring.sample(kind, p, np.random.default_rng(13), sigma=3.2, level=0)
            b = ring.sample(kind, p, np.random.default_rng(13), sigma=3.2, level=0)
            assert a == b

    def test_ternary_support(self):
        p = small_params(n=64, bits=(20,))
        e = ring.sample("ternary", p, np.random.default_rng(14), level=0)
        vals = set(ring.to_float_centered(e).tolist())
        assert vals <= {-1.0, 0.0, 1.0}

    def test_uniform_in_range(self):
        p = small_params(bits=(7, 8))
        e = ring.sample("uniform", p, np.random.default_rng(15), level=1)
        for i, q in enumerate(p.active_primes(1)):
            assert e.data[i].max() < q

    def test_invalid_sigma(self):
        p = small_params()
        with pytest.raises(ValueError):
            ring.sample("gaussian", p, np.random.default_rng(0), sigma=0)


class TestModDrop:
    def test_drop_structure(self):
        p = small_params(n=16, bits=(7, 8, 9))
        rng = np.random.default_rng(16)
        a = ring.sample("uniform", p, rng, level=2)
        d1 = ring.mod_drop(a)
        assert d1.level == 1 and d1.data.shape == (2, 16)
        d0 = ring.mod_drop(d1)
        assert d0.level == 0 and d0.data.shape == (1, 16)

    def test_drop_preserves_retained_residues(self):
        p = small_params(n=16, bits=(7, 8, 9))
        a = ring.sample("uniform", p, np.random.default_rng(17), level=2)
        d = ring.mod_drop(a)
        assert np.array_equal(d.data, a.data[:2])

    def test_drop_at_level_zero_rejected(self):
        p = small_params()
        a = ring.sample("uniform", p, np.random.default_rng(18), level=0)
        with pytest.raises(StructuralError):
            ring.mod_drop(a)


class TestAlgebra:
    @pytest.mark.parametrize("n,q", [(8, 97), (16, 97), (32, 193)])
    def test_field_properties(self, n, q):
        p = ring.RingParams(n=n, primes=(q,))
        rng = np.random.default_rng(19)
        for _ in range(25):
            a = ring.sample("uniform", p, rng, level=0)
            b = ring.sample("uniform", p, rng, level=0)
            c = ring.sample("uniform", p, rng, level=0)
            assert ring.ring_add(a, b) == ring.ring_add(b, a)
            assert ring.ring_add(ring.ring_add(a, b), c) == \
                ring.ring_add(a, ring.ring_add(b, c))
            ab = ring.to_coef(ring.ring_mul(a, b))
            ba = ring.to_coef(ring.ring_mul(b, a))
            assert ab == ba
            abc1 = ring.to_coef(ring.ring_mul(ring.ring_mul(a, b), ring.to_ntt(c)))
            abc2 = ring.to_coef(ring.ring_mul(ring.to_ntt(a), ring.ring_mul(b, c)))
            assert abc1 == abc2
            lhs = ring.to_coef(ring.ring_mul(a, ring.ring_add(b, c)))
            rhs = ring.ring_add(ring.to_coef(ring.ring_mul(a, b)),
                                ring.to_coef(ring.ring_mul(a, c)))
            assert lhs == rhs

    def test_outputs_fully_reduced(self):
        p = small_params(n=32, bits=(9, 10))
        rng = np.random.default_rng(20)
        a = ring.sample("uniform", p, rng, level=1)
        b = ring.sample("uniform", p, rng, level=1)
        for result in (ring.ring_add(a, b), ring.ring_sub(a, b),
                       ring.to_coef(ring.ring_mul(a, b))):
            for i, q in enumerate(p.active_primes(1)):
                assert result.data[i].max() < q


class TestCentering:
    def test_int_and_float_centering_agree(self):
        p = small_params(n=16, bits=(7, 8, 9))
        rng = np.random.default_rng(21)
        coeffs = rng.integers(-5000, 5000, 16, dtype=np.int64)
        e = ring.from_int_coeffs(coeffs, p, 2)
        assert ring.to_int_centered(e) == coeffs.tolist()
        assert np.array_equal(ring.to_float_centered(e), coeffs.astype(float))
