import math

import numpy as np
import pytest

from herl import ckks, ring
from herl.errors import (DecryptionFailure, DepthExhausted, FramingError,
                         ScaleMismatch, StructuralError, VersionError)

SIGMA = 8 / math.sqrt(2 * math.pi)
LOG_SCALE = 40.0


@pytest.fixture(scope="module")
def params():
    return ring.RingParams.generate(1024, [40, 40], [40, 40, 40])


@pytest.fixture(scope="module")
def keys(params):
    return ckks.keygen(params, SIGMA, seed=1234)


@pytest.fixture(scope="module")
def eval_keys(keys, params):
    return ckks.EvalKeys.from_keyset(keys, range(params.max_level + 1))


def enc(x, keys, rng, level=None):
    params = keys.params
    v = np.atleast_1d(np.asarray(x, dtype=np.float64))
    return ckks.encrypt(ckks.encode(v, LOG_SCALE, params), keys, rng,
                        level=level)


def dec(ct, keys, count=1):
    vals = ckks.decode(ckks.decrypt(ct, keys))
    return vals[0] if count == 1 else vals[:count]


class TestKeygen:
    def test_zero_vector_roundtrip(self, params, keys):
        rng = np.random.default_rng(0)
        ct = ckks.encrypt(ckks.encode(np.zeros(params.n // 2), LOG_SCALE,
                                      params), keys, rng)
        got = ckks.decode(ckks.decrypt(ct, keys))
        assert np.abs(got).max() <= ckks.noise_epsilon(ct)

    def test_same_seed_same_keys(self, params):
        k1 = ckks.keygen(params, SIGMA, seed=7)
        k2 = ckks.keygen(params, SIGMA, seed=7)
        assert k1.sk == k2.sk
        assert k1.pk[0] == k2.pk[0] and k1.pk[1] == k2.pk[1]
        e1 = k1.evk(1)
        e2 = k2.evk(1)
        assert all(a == b and c == d for (a, c), (b, d) in zip(e1, e2))

    def test_pk_decrypts_to_zero(self, params):
        # pk0 + pk1*sk = e, so coefficients stay within the sampler tail cut
        limit = ring.gaussian_tail_bound(SIGMA)
        for seed in range(100):
            k = ckks.keygen(params, SIGMA, seed=seed)
            resid = ring.ring_add(k.pk[0], ring.ring_mul(k.pk[1], k.sk))
            coeffs = ring.to_float_centered(ring.to_coef(resid))
            assert np.abs(coeffs).max() <= limit

    def test_evk_relinearizes_sk_squared(self, params, keys, eval_keys):
        # a pure degree-2 ciphertext (0, 0, x) must key-switch to x*sk^2
        rng = np.random.default_rng(1)
        lvl = params.max_level
        x = ring.sample("uniform", params, rng, level=lvl, domain=ring.NTT)
        z = ring.zero(params, lvl, ring.NTT)
        t = ckks.TensorCiphertext(z, z, x, lvl, 2 * LOG_SCALE,
                                  p=2.0 ** 43, B=0.0)
        ct = ckks.tensor_relinearize(t, eval_keys)
        m = ring.ring_add(ct.c0, ring.ring_mul(ct.c1, keys.sk))
        sk2 = ring.ring_mul(keys.sk, keys.sk)
        want = ring.ring_mul(x, sk2)
        diff = ring.to_float_centered(ring.to_coef(ring.ring_sub(m, want)))
        assert np.abs(diff).max() <= ckks.keyswitch_noise_bound(params, lvl,
                                                                SIGMA)


class TestEncoding:
    def test_zero_vector_exact(self, params):
        pt = ckks.encode(np.zeros(params.n // 2), LOG_SCALE, params)
        assert np.all(ckks.decode(pt) == 0.0)

    def test_roundtrip_error(self, params):
        rng = np.random.default_rng(2)
        for _ in range(20):
            v = rng.uniform(-10, 10, params.n // 2)
            err = np.abs(ckks.decode(ckks.encode(v, LOG_SCALE, params)) - v)
            assert err.max() <= 1e-6

    def test_linearity(self, params):
        rng = np.random.default_rng(3)
        u = rng.uniform(-5, 5, params.n // 2)
        v = rng.uniform(-5, 5, params.n // 2)
        pu, pv = (ckks.encode(x, LOG_SCALE, params) for x in (u, v))
        total = ring.ring_add(pu.elem, pv.elem)
        pt_sum = ckks.Plaintext(elem=total, log_scale=LOG_SCALE,
                                p=pu.p + pv.p, err=pu.err + pv.err)
        got = ckks.decode(pt_sum)
        bound = 2 * pu.err / pu.scale
        assert np.abs(got - (u + v)).max() <= bound

    def test_vector_too_long(self, params):
        with pytest.raises(ValueError):
            ckks.encode(np.zeros(params.n // 2 + 1), LOG_SCALE, params)

    def test_scale_too_small(self, params):
        with pytest.raises(ValueError):
            ckks.encode(np.ones(4), 10.0, params)

    def test_const_encoding_exact_scale(self, params):
        pt = ckks.encode_const(1.0, 80.0, params)
        assert pt.const_coeff == 2 ** 80
        assert pt.err <= 0.5 + 2.0 ** 31


class TestEncryptDecrypt:
    def test_roundtrip_within_bound(self, params, keys):
        rng = np.random.default_rng(4)
        for _ in range(25):
            v = rng.uniform(-10, 10, params.n // 2)
            ct = ckks.encrypt(ckks.encode(v, LOG_SCALE, params), keys, rng)
            err = np.abs(ckks.decode(ckks.decrypt(ct, keys)) - v).max()
            assert err <= ckks.noise_epsilon(ct)

    def test_encryption_randomized(self, params, keys):
        rng = np.random.default_rng(5)
        pt = ckks.encode(np.array([1.0]), LOG_SCALE, params)
        c1 = ckks.encrypt(pt, keys, rng)
        c2 = ckks.encrypt(pt, keys, rng)
        assert c1.c0 != c2.c0 and c1.c1 != c2.c1

    def test_measured_error_within_tracked_bound_many(self, params, keys):
        rng = np.random.default_rng(6)
        worst_ratio = 0.0
        for _ in range(200):
            v = rng.uniform(-10, 10, params.n // 2)
            ct = ckks.encrypt(ckks.encode(v, LOG_SCALE, params), keys, rng)
            err = np.abs(ckks.decode(ckks.decrypt(ct, keys)) - v).max()
            worst_ratio = max(worst_ratio, err / ckks.noise_epsilon(ct))
        assert worst_ratio <= 1.0

    def test_encrypt_at_lower_level(self, params, keys):
        rng = np.random.default_rng(7)
        ct = enc(2.5, keys, rng, level=1)
        assert ct.level == 1
        assert abs(dec(ct, keys) - 2.5) <= ckks.noise_epsilon(ct)

    def test_depth_beyond_chain_fails(self, params, keys, eval_keys):
        rng = np.random.default_rng(8)
        ct = enc(1.001, keys, rng)
        for _ in range(params.max_level):
            ct = ckks.he_mul(ct, ct, eval_keys)
        with pytest.raises(DepthExhausted):
            ckks.he_mul(ct, ct, eval_keys)

    def test_budget_exhaustion_flagged_at_decrypt(self, params, keys,
                                                  eval_keys):
        # a scale-2^80 product dropped to level 0 no longer fits the modulus
        rng = np.random.default_rng(9)
        ct = enc(10.0, keys, rng)
        prod = ckks.tensor_relinearize(ckks.tensor_raw(ct, ct), eval_keys)
        hot = ckks.drop_to(prod, 0)
        with pytest.raises(DecryptionFailure):
            ckks.decrypt(hot, keys)

    def test_add_then_decrypt_within_combined_bound(self, params, keys):
        rng = np.random.default_rng(10)
        c1, c2 = enc(1.5, keys, rng), enc(2.25, keys, rng)
        cs = ckks.he_add(c1, c2)
        assert cs.B == c1.B + c2.B
        assert abs(dec(cs, keys) - 3.75) <= cs.B / cs.scale


class TestAdd:
    def test_plaintext_oracle(self, params, keys):
        rng = np.random.default_rng(11)
        got = dec(ckks.he_add(enc(1.5, keys, rng), enc(2.25, keys, rng)), keys)
        assert abs(got - 3.75) <= 1e-6

    def test_add_zero_identity(self, params, keys):
        rng = np.random.default_rng(12)
        c = enc(4.2, keys, rng)
        cz = enc(0.0, keys, rng)
        got = dec(ckks.he_add(c, cz), keys)
        assert abs(got - 4.2) <= ckks.noise_epsilon(c) + ckks.noise_epsilon(cz)

    def test_bounds_combine_additively(self, params, keys):
        # Eq-style bookkeeping: (p1+p2, B1+B2)
        rng = np.random.default_rng(13)
        c1, c2 = enc(1.0, keys, rng), enc(-2.0, keys, rng)
        cs = ckks.he_add(c1, c2)
        assert cs.p == c1.p + c2.p
        assert cs.B == c1.B + c2.B

    def test_k_fold_addition_bound(self, params, keys):
        rng = np.random.default_rng(14)
        k = 8
        cts = [enc(0.5, keys, rng) for _ in range(k)]
        acc = cts[0]
        for c in cts[1:]:
            acc = ckks.he_add(acc, c)
        assert acc.B == pytest.approx(sum(c.B for c in cts), rel=1e-12)
        measured = abs(dec(acc, keys) - 0.5 * k)
        assert measured <= acc.B / acc.scale

    def test_level_mismatch_rejected(self, params, keys):
        rng = np.random.default_rng(15)
        c1 = enc(1.0, keys, rng)
        c2 = enc(1.0, keys, rng, level=1)
        with pytest.raises(StructuralError):
            ckks.he_add(c1, c2)

    def test_scale_mismatch_rejected(self, params, keys):
        rng = np.random.default_rng(16)
        c1 = enc(1.0, keys, rng)
        c2 = ckks.raise_scale(enc(1.0, keys, rng), c1.log_scale + 25.0)
        with pytest.raises(ScaleMismatch):
            ckks.he_add(c1, c2)


class TestMul:
    def test_plaintext_oracle(self, params, keys, eval_keys):
        rng = np.random.default_rng(17)
        prod = ckks.he_mul(enc(2.0, keys, rng), enc(3.0, keys, rng), eval_keys)
        assert abs(dec(prod, keys) - 6.0) <= ckks.noise_epsilon(prod)
        assert prod.level == params.max_level - 1

    def test_multiplicative_identity(self, params, keys, eval_keys):
        rng = np.random.default_rng(18)
        c = enc(-7.25, keys, rng)
        got = dec(ckks.he_mul(c, enc(1.0, keys, rng), eval_keys), keys)
        prod = ckks.he_mul(c, enc(1.0, keys, rng), eval_keys)
        assert abs(got + 7.25) <= ckks.noise_epsilon(prod)

    def test_depth_two_product(self, params, keys, eval_keys):
        rng = np.random.default_rng(19)
        a = enc(0.5, keys, rng)
        g = enc(0.9, keys, rng)
        v = enc(2.0, keys, rng)
        m1 = ckks.he_mul(a, g, eval_keys)
        m2 = ckks.he_mul(m1, ckks.drop_to(v, m1.level), eval_keys)
        assert abs(dec(m2, keys) - 0.9) <= 1e-4

    def test_message_bound_multiplies(self, params, keys, eval_keys):
        rng = np.random.default_rng(20)
        c1, c2 = enc(2.0, keys, rng), enc(3.0, keys, rng)
        t = ckks.tensor_raw(c1, c2)
        assert t.p == c1.p * c2.p

    def test_level_zero_rejected(self, params, keys, eval_keys):
        rng = np.random.default_rng(21)
        c = enc(1.0, keys, rng, level=0)
        with pytest.raises(DepthExhausted):
            ckks.he_mul(c, c, eval_keys)


class TestRescale:
    def test_structure(self, params, keys, eval_keys):
        rng = np.random.default_rng(22)
        t = ckks.tensor_relinearize(
            ckks.tensor_raw(enc(2.0, keys, rng), enc(0.5, keys, rng)),
            eval_keys)
        r = ckks.rescale(t)
        q_top = params.primes[params.base_count + t.level - 1]
        assert r.level == t.level - 1
        assert r.log_scale == pytest.approx(t.log_scale - math.log2(q_top))
        assert r.p == pytest.approx(t.p / q_top)

    def test_level_zero_rejected(self, params, keys):
        rng = np.random.default_rng(23)
        with pytest.raises(DepthExhausted):
            ckks.rescale(enc(1.0, keys, rng, level=0))

    def test_scale_bookkeeping_roundtrip(self, params, keys, eval_keys):
        rng = np.random.default_rng(24)
        prod = ckks.he_mul(enc(1.5, keys, rng), enc(2.0, keys, rng), eval_keys)
        assert abs(prod.log_scale - LOG_SCALE) < 1e-3
        assert abs(dec(prod, keys) - 3.0) <= ckks.noise_epsilon(prod)


class TestNoiseEpsilon:
    def test_fresh_epsilon_small(self, params, keys):
        rng = np.random.default_rng(25)
        ct = enc(1.0, keys, rng)
        assert ckks.noise_epsilon(ct) <= 1e-6

    def test_monotone_nondecreasing(self, params, keys, eval_keys):
        rng = np.random.default_rng(26)
        c = enc(1.0, keys, rng)
        eps = [ckks.noise_epsilon(c)]
        c2 = ckks.he_add(c, enc(2.0, keys, rng))
        eps.append(ckks.noise_epsilon(c2))
        c3 = ckks.he_mul(c2, enc(0.5, keys, rng), eval_keys)
        eps.append(ckks.noise_epsilon(c3))
        c4 = ckks.he_add(c3, ckks.drop_to(enc(1.0, keys, rng), c3.level))
        eps.append(ckks.noise_epsilon(c4))
        assert all(b >= a * (1 - 1e-12) for a, b in zip(eps, eps[1:]))


class TestSoundness:
    def test_random_operation_chains(self, params, keys, eval_keys):
        """Measured slot error never exceeds the tracked bound."""
        rng = np.random.default_rng(27)
        slots = params.n // 2
        for _ in range(30):
            v1 = rng.uniform(-5, 5, slots)
            v2 = rng.uniform(-5, 5, slots)
            c1 = ckks.encrypt(ckks.encode(v1, LOG_SCALE, params), keys, rng)
            c2 = ckks.encrypt(ckks.encode(v2, LOG_SCALE, params), keys, rng)
            plain1, plain2 = v1.copy(), v2.copy()
            for _ in range(rng.integers(1, 5)):
                op = rng.integers(0, 3)
                if op == 0:
                    c1, plain1 = ckks.he_add(c1, c2), plain1 + plain2
                elif op == 1:
                    c1, plain1 = ckks.he_sub(c1, c2), plain1 - plain2
                elif c1.level >= 1:
                    c1 = ckks.he_mul(c1, c2, eval_keys)
                    plain1 = plain1 * plain2
                    c2 = ckks.drop_to(c2, c1.level)
                    plain2 = plain2
            err = np.abs(ckks.decode(ckks.decrypt(c1, keys)) - plain1).max()
            assert err <= ckks.noise_epsilon(c1)


class TestSerialization:
    def test_bit_exact_roundtrip(self, params, keys, eval_keys):
        rng = np.random.default_rng(28)
        cts = [enc(3.25, keys, rng)]
        cts.append(ckks.he_mul(cts[0], enc(-1.5, keys, rng), eval_keys))
        for ct in cts:
            blob = ckks.serialize_ciphertext(ct)
            back = ckks.deserialize_ciphertext(blob, params)
            assert back.level == ct.level
            assert back.log_scale == ct.log_scale
            assert back.p == ct.p and back.B == ct.B
            assert back.c0 == ct.c0 and back.c1 == ct.c1
            assert ckks.serialize_ciphertext(back) == blob

    def test_truncated_rejected(self, params, keys):
        rng = np.random.default_rng(29)
        blob = ckks.serialize_ciphertext(enc(1.0, keys, rng))
        with pytest.raises(FramingError):
            ckks.deserialize_ciphertext(blob[:-8], params)

    def test_bad_magic_rejected(self, params, keys):
        rng = np.random.default_rng(30)
        blob = bytearray(ckks.serialize_ciphertext(enc(1.0, keys, rng)))
        blob[0] = 0x58
        with pytest.raises(FramingError):
            ckks.deserialize_ciphertext(bytes(blob), params)

    def test_bad_version_rejected(self, params, keys):
        rng = np.random.default_rng(31)
        blob = bytearray(ckks.serialize_ciphertext(enc(1.0, keys, rng)))
        blob[4] = 0xFF
        with pytest.raises(VersionError):
            ckks.deserialize_ciphertext(bytes(blob), params)

    def test_evk_roundtrip(self, params, keys):
        levels = [1, 2]
        blob = ckks.serialize_evk(keys, levels)
        ek = ckks.deserialize_evk(blob, params)
        for lv in levels:
            for (b1, a1), (b2, a2) in zip(keys.evk(lv), ek.evk(lv)):
                assert b1 == b2 and a1 == a2


class TestLevelDiscipline:
    @pytest.mark.parametrize("budget", [1, 2, 3])
    def test_depth_succeeds_iff_budget(self, budget):
        params = ring.RingParams.generate(256, [40, 40], [40] * budget)
        keys = ckks.keygen(params, SIGMA, seed=5)
        ek = ckks.EvalKeys.from_keyset(keys, range(params.max_level + 1))
        rng = np.random.default_rng(32)

        def run_depth(d):
            ct = ckks.encrypt(ckks.encode(np.array([1.01]), LOG_SCALE, params),
                              keys, rng)
            for _ in range(d):
                ct = ckks.he_mul(ct, ct, ek)
            return ct

        ct = run_depth(budget)
        assert ct.level == 0
        with pytest.raises(DepthExhausted):
            run_depth(budget + 1)
