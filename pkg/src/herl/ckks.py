"""Leveled CKKS-style approximate homomorphic encryption.

Vectors of N/2 reals are encoded through the canonical embedding into
integer polynomials at a scale, encrypted under RLWE, and evaluated with
addition, multiplication (tensor + relinearization + rescale) and level
drops. Every ciphertext carries the tuple (c, level, p, B): p bounds the
message polynomial and B the noise polynomial, both in the canonical
embedding sup-norm, which is exactly the norm slot errors live in, so the
message-space error after decode is at most B / scale (= noise_epsilon).

Bound bookkeeping is conservative: additions add bounds, products multiply
them, and fresh randomness (encryption noise, key-switching digits, rescale
rounding) enters through standard CKKS-style high-probability constants.
Soundness of the tracking is checked empirically in the test suite.

Scales are stored as log2(scale); the wire format serializes log2(scale)
directly, which keeps round trips bit-exact even for post-rescale scales.
"""

import math
import struct
from dataclasses import dataclass, replace

import numpy as np

from herl import ring
from herl.errors import (DecryptionFailure, DepthExhausted, FramingError,
                         ScaleMismatch, StructuralError, VersionError)
from herl.ring import COEF, NTT, RingElement

MIN_LOG_SCALE = 20.0
ADD_LOG_TOL = 1e-3   # scale drift absorbed (soundly) into the noise bound
MUL_LOG_TOL = 0.5    # "equal scale within rounding" for multiplication

# High-probability canonical-norm constants: a single random polynomial stays
# within C_SINGLE per-slot standard deviations, a product of two independent
# ones within C_PROD times the product of the standard deviations.
C_SINGLE = 10.0
C_PROD = 25.0


def _std_gauss(n, sigma):
    return sigma * math.sqrt(n)


def _std_ternary(n):
    return math.sqrt(2.0 * n / 3.0)


def _std_round(n):
    return math.sqrt(n / 12.0)


def fresh_noise_bound(params, sigma):
    """Canonical bound on e0 + u*e_pk + s*e1 for a fresh encryption."""
    n = params.n
    prod = C_PROD * _std_ternary(n) * _std_gauss(n, sigma)
    return 2.0 * prod + C_SINGLE * _std_gauss(n, sigma)


def keyswitch_noise_bound(params, level, sigma):
    """Canonical bound on sum_i d_i * e_i over the active primes.

    Digits are modeled as uniform in (-q_i/2, q_i/2): per-slot standard
    deviation q_i * sqrt(N/12).
    """
    n = params.n
    return sum(C_PROD * (q * _std_round(n)) * _std_gauss(n, sigma)
               for q in params.active_primes(level))


def rescale_noise_bound(params):
    """Canonical bound on the rounding term rho0 + s*rho1 of one rescale."""
    n = params.n
    return C_SINGLE * _std_round(n) + C_PROD * _std_round(n) * _std_ternary(n)


@dataclass
class Plaintext:
    """Encoded message: ring element (coefficient form), scale, bounds.

    `p` bounds the canonical norm of the message polynomial, `err` the
    canonical distance to the intended scaled vector (encoding error).
    Constant plaintexts (every slot equal) keep their single coefficient for
    a fast multiplication path.
    """

    elem: RingElement
    log_scale: float
    p: float
    err: float
    const_coeff: int | None = None

    @property
    def scale(self):
        return 2.0 ** self.log_scale


@dataclass
class Ciphertext:
    """(c0, c1) in NTT form plus level, scale, message/noise bounds."""

    c0: RingElement
    c1: RingElement
    level: int
    log_scale: float
    p: float
    B: float

    @property
    def params(self):
        return self.c0.params

    @property
    def scale(self):
        return 2.0 ** self.log_scale


def noise_epsilon(ct):
    """Worst-case message-space error of this ciphertext: B / scale."""
    return 2.0 ** (math.log2(ct.B) - ct.log_scale) if ct.B > 0 else 0.0


# ---------------------------------------------------------------------------
# Encoding via the canonical embedding
# ---------------------------------------------------------------------------

_twiddles: dict = {}


def _twiddle(n):
    if n not in _twiddles:
        i = np.arange(n)
        zeta = np.exp(1j * np.pi * i / n)      # zeta^i, zeta = e^(i*pi/N)
        _twiddles[n] = (zeta, np.conj(zeta))
    return _twiddles[n]


def encode(values, log_scale, params, level=None):
    """Encode <= N/2 reals at the given scale (inverse canonical embedding)."""
    if log_scale < MIN_LOG_SCALE:
        raise ValueError(f"scale 2^{log_scale} below minimum 2^{MIN_LOG_SCALE}")
    n = params.n
    slots = n // 2
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1 or values.size > slots:
        raise ValueError(f"expected a vector of at most {slots} values")
    if level is None:
        level = params.max_level
    z = np.zeros(slots, dtype=np.complex128)
    z[: values.size] = values
    f = np.fft.fft(z)
    zeta, zeta_conj = _twiddle(n)
    spectrum = np.concatenate([f, f]) * zeta_conj
    scale = 2.0 ** log_scale
    coeffs_f = (2.0 / n) * spectrum.real * scale
    coeffs = np.round(coeffs_f).astype(np.int64)
    vmax = float(np.abs(values).max()) if values.size else 0.0
    fp_slack = scale * vmax * n * 3e-15
    err = 0.5 * n + fp_slack
    p = scale * vmax + err
    elem = ring.from_int_coeffs(coeffs, params, level)
    return Plaintext(elem=elem, log_scale=float(log_scale), p=p, err=err)


def encode_const(value, log_scale, params, level=None):
    """Exact constant plaintext (same value in every slot).

    The canonical embedding of a constant polynomial is the constant itself,
    so this needs no FFT and supports arbitrarily large scales (the single
    coefficient is kept as a Python int).
    """
    if level is None:
        level = params.max_level
    coeff = round(value * 2.0 ** log_scale)
    qs = params.active_primes(level)
    data = np.zeros((len(qs), params.n), dtype=np.uint64)
    for i, q in enumerate(qs):
        data[i, 0] = coeff % q
    elem = RingElement(params, level, COEF, data)
    err = abs(coeff - value * 2.0 ** log_scale) + abs(value) * 2.0 ** (log_scale - 50)
    return Plaintext(elem=elem, log_scale=float(log_scale), p=float(abs(coeff)) + err,
                     err=err + 0.5, const_coeff=coeff)


def decode(pt):
    """Slot values of a plaintext (real parts; inverse of encode)."""
    n = pt.elem.params.n
    coeffs = ring.to_float_centered(ring.to_coef(pt.elem))
    zeta, _ = _twiddle(n)
    t = coeffs * zeta
    u = t[: n // 2] + t[n // 2:]
    z = np.fft.ifft(u) * (n // 2)
    return z.real / 2.0 ** pt.log_scale


# ---------------------------------------------------------------------------
# Keys
# ---------------------------------------------------------------------------

class KeySet:
    """Secret, public and per-level relinearization keys.

    Relinearization keys are generated lazily per level from a seed-derived
    substream, so materialization order never changes their values.
    """

    def __init__(self, params, sigma, seed):
        self.params = params
        self.sigma = sigma
        self.seed = seed
        top = params.max_level
        sk_rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
        self.sk = ring.to_ntt(ring.sample("ternary", params, sk_rng, level=top))
        pk_rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
        a = ring.sample("uniform", params, pk_rng, level=top, domain=NTT)
        e = ring.to_ntt(ring.sample("gaussian", params, pk_rng, sigma=sigma,
                                    level=top))
        self.pk = (ring.ring_add(ring.ring_neg(ring.ring_mul(a, self.sk)), e), a)
        self._evk: dict = {}

    def evk(self, level):
        """Relinearization key digits for ciphertexts at `level`."""
        if level not in self._evk:
            rng = np.random.default_rng(
                np.random.SeedSequence([self.seed, 2, level]))
            sk_l = ring.mod_drop(self.sk, self.params.max_level - level)
            sk2 = ring.ring_mul(sk_l, sk_l)
            pairs = []
            k = self.params.base_count + level
            for i in range(k):
                a = ring.sample("uniform", self.params, rng, level=level,
                                domain=NTT)
                e = ring.to_ntt(ring.sample("gaussian", self.params, rng,
                                            sigma=self.sigma, level=level))
                b = ring.ring_add(ring.ring_neg(ring.ring_mul(a, sk_l)), e)
                bump = b.copy_data()
                bump[i] = (bump[i] + sk2.data[i]) % np.uint64(
                    self.params.primes[i])
                pairs.append((RingElement(self.params, level, NTT, bump), a))
            self._evk[level] = pairs
        return self._evk[level]


def keygen(params, sigma, seed):
    return KeySet(params, sigma, seed)


class EvalKeys:
    """Cloud-side key material: evaluation keys only, never the secret key."""

    def __init__(self, params, sigma, evk_by_level):
        self.params = params
        self.sigma = sigma
        self._evk = dict(evk_by_level)

    @classmethod
    def from_keyset(cls, keys, levels):
        return cls(keys.params, keys.sigma,
                   {lv: keys.evk(lv) for lv in levels})

    def evk(self, level):
        if level not in self._evk:
            raise StructuralError(f"no evaluation key material for level {level}")
        return self._evk[level]


# ---------------------------------------------------------------------------
# Encrypt / decrypt
# ---------------------------------------------------------------------------

def encrypt(pt, keys, rng, level=None):
    """Fresh encryption of a plaintext (at L_max unless a level is given)."""
    params = keys.params
    if level is None:
        level = params.max_level
    drop = params.max_level - level
    pk0 = ring.mod_drop(keys.pk[0], drop)
    pk1 = ring.mod_drop(keys.pk[1], drop)
    u = ring.to_ntt(ring.sample("ternary", params, rng, level=level))
    e0 = ring.sample("gaussian", params, rng, sigma=keys.sigma, level=level)
    e1 = ring.sample("gaussian", params, rng, sigma=keys.sigma, level=level)
    m = pt.elem
    if m.level != level:
        if m.level < level:
            raise StructuralError("plaintext encoded below target level")
        m = ring.mod_drop(m, m.level - level)
    c0 = ring.ring_add(ring.ring_mul(pk0, u),
                       ring.to_ntt(ring.ring_add(e0, m)))
    c1 = ring.ring_add(ring.ring_mul(pk1, u), ring.to_ntt(e1))
    B = fresh_noise_bound(params, keys.sigma) + pt.err
    return Ciphertext(c0=c0, c1=c1, level=level, log_scale=pt.log_scale,
                      p=pt.p, B=B)


def decrypt(ct, keys):
    """m + e as a plaintext; fails when the tracked bounds no longer fit."""
    params = ct.params
    q_l = params.modulus(ct.level)
    if 4.0 * (ct.p + ct.B) >= float(q_l):
        raise DecryptionFailure(
            f"tracked p+B = 2^{math.log2(ct.p + ct.B):.1f} exceeds the "
            f"level-{ct.level} modulus safety margin (level budget exhausted)")
    sk = ring.mod_drop(keys.sk, params.max_level - ct.level)
    m = ring.ring_add(ct.c0, ring.ring_mul(ct.c1, sk))
    return Plaintext(elem=ring.to_coef(m), log_scale=ct.log_scale,
                     p=ct.p + ct.B, err=ct.B)


# ---------------------------------------------------------------------------
# Homomorphic operations
# ---------------------------------------------------------------------------

def _check_levels(c1, c2, op):
    if c1.level != c2.level:
        raise StructuralError(
            f"{op}: level mismatch ({c1.level} vs {c2.level})")


def _absorb_scale_drift(c1, c2):
    """Treat both operands at the larger scale; returns (log_scale, extra_B)."""
    dlog = abs(c1.log_scale - c2.log_scale)
    if dlog > ADD_LOG_TOL:
        raise ScaleMismatch(
            f"scales differ by 2^{dlog:.3g} (tolerance 2^{ADD_LOG_TOL})")
    if dlog == 0.0:
        return c1.log_scale, 0.0
    low = c1 if c1.log_scale < c2.log_scale else c2
    return max(c1.log_scale, c2.log_scale), low.p * (2.0 ** dlog - 1.0)


def he_add(c1, c2):
    """Component-wise sum; bounds combine as (p1+p2, B1+B2)."""
    _check_levels(c1, c2, "he_add")
    log_scale, extra = _absorb_scale_drift(c1, c2)
    return Ciphertext(c0=ring.ring_add(c1.c0, c2.c0),
                      c1=ring.ring_add(c1.c1, c2.c1),
                      level=c1.level, log_scale=log_scale,
                      p=c1.p + c2.p, B=c1.B + c2.B + extra)


def he_sub(c1, c2):
    _check_levels(c1, c2, "he_sub")
    log_scale, extra = _absorb_scale_drift(c1, c2)
    return Ciphertext(c0=ring.ring_sub(c1.c0, c2.c0),
                      c1=ring.ring_sub(c1.c1, c2.c1),
                      level=c1.level, log_scale=log_scale,
                      p=c1.p + c2.p, B=c1.B + c2.B + extra)


def he_neg(ct):
    return replace(ct, c0=ring.ring_neg(ct.c0), c1=ring.ring_neg(ct.c1))


def mod_drop_ct(ct, count=1):
    """Drop primes without rescaling: message and scale unchanged."""
    if count == 0:
        return ct
    return replace(ct, c0=ring.mod_drop(ct.c0, count),
                   c1=ring.mod_drop(ct.c1, count), level=ct.level - count)


def drop_to(ct, level):
    if level > ct.level:
        raise StructuralError(f"cannot raise level {ct.level} to {level}")
    return mod_drop_ct(ct, ct.level - level)


def tensor_mul(c1, c2, eval_keys):
    """Tensor product + relinearization, without rescaling.

    The result stays at the same level with scale s1*s2; circuits that add
    several products rescale once at the end (scales then agree exactly).
    """
    return tensor_relinearize(tensor_raw(c1, c2), eval_keys)


def _keyswitch(d2, evk_pairs):
    """sum_i [d2]_{q_i} (*) evk_i with centered RNS digits."""
    from herl import kernels

    params = d2.params
    level = d2.level
    qs = params.active_primes(level)
    qs_arr = params.active_array(level)
    d2c = ring.to_coef(d2)
    n = params.n
    acc0 = np.zeros((len(qs), n), dtype=np.uint64)
    acc1 = np.zeros_like(acc0)
    for i, qi in enumerate(qs):
        row = d2c.data[i].astype(np.int64)
        row[row >= (qi + 1) // 2] -= qi
        digit = kernels.reduce_center_2d(row, qs_arr)
        digit = kernels.ntt_forward_2d(digit, n, qs)
        b_i, a_i = evk_pairs[i]
        kernels.addto_mul_mod_2d(acc0, digit, b_i.data, qs_arr)
        kernels.addto_mul_mod_2d(acc1, digit, a_i.data, qs_arr)
    return (RingElement(params, level, NTT, acc0),
            RingElement(params, level, NTT, acc1))


def rescale(ct):
    """Drop the top prime and divide the scale by it."""
    if ct.level < 1:
        raise DepthExhausted("rescale at level 0: no droppable prime left")
    params = ct.params
    qs = params.active_primes(ct.level)
    q_top = qs[-1]
    new = [_rescale_elem(comp, qs) for comp in (ct.c0, ct.c1)]
    b_new = ct.B / q_top + rescale_noise_bound(params)
    return Ciphertext(c0=new[0], c1=new[1], level=ct.level - 1,
                      log_scale=ct.log_scale - math.log2(q_top),
                      p=ct.p / q_top, B=b_new)


class TensorCiphertext:
    """Three-component ciphertext (pre-relinearization form).

    Circuits accumulate products here so relinearization runs once, at the
    lowest level reached, instead of after every multiplication. Decrypts as
    c0 + c1*s + c2*s^2.
    """

    __slots__ = ("c0", "c1", "c2", "level", "log_scale", "p", "B")

    def __init__(self, c0, c1, c2, level, log_scale, p, B):
        self.c0, self.c1, self.c2 = c0, c1, c2
        self.level = level
        self.log_scale = log_scale
        self.p = p
        self.B = B

    @property
    def params(self):
        return self.c0.params


def tensor_raw(c1, c2):
    """Tensor product without relinearization or rescaling."""
    _check_levels(c1, c2, "tensor_raw")
    d0 = ring.ring_mul(c1.c0, c2.c0)
    d1 = ring.ring_add(ring.ring_mul(c1.c0, c2.c1),
                       ring.ring_mul(c1.c1, c2.c0))
    d2 = ring.ring_mul(c1.c1, c2.c1)
    return TensorCiphertext(d0, d1, d2, c1.level,
                            c1.log_scale + c2.log_scale,
                            c1.p * c2.p,
                            c1.p * c2.B + c2.p * c1.B + c1.B * c2.B)


def _as_tensor(ct):
    if isinstance(ct, TensorCiphertext):
        return ct
    z = ring.zero(ct.params, ct.level, NTT)
    return TensorCiphertext(ct.c0, ct.c1, z, ct.level, ct.log_scale, ct.p,
                            ct.B)


def tensor_add(t1, t2, negate=False):
    """Sum (or difference) of tensor/regular ciphertexts at equal scale."""
    t1, t2 = _as_tensor(t1), _as_tensor(t2)
    _check_levels(t1, t2, "tensor_add")
    log_scale, extra = _absorb_scale_drift(t1, t2)
    op = ring.ring_sub if negate else ring.ring_add
    return TensorCiphertext(op(t1.c0, t2.c0), op(t1.c1, t2.c1),
                            op(t1.c2, t2.c2), t1.level, log_scale,
                            t1.p + t2.p, t1.B + t2.B + extra)


def tensor_pt_mul(t, pt):
    out = [None, None, None]
    ct_like = Ciphertext(c0=t.c0, c1=t.c1, level=t.level,
                         log_scale=t.log_scale, p=t.p, B=t.B)
    front = pt_mul(ct_like, pt)
    elem = pt.elem
    if elem.level > t.level:
        elem = ring.mod_drop(elem, elem.level - t.level)
    if pt.const_coeff is not None:
        scalars = [pt.const_coeff % q for q in t.params.active_primes(t.level)]
        c2 = ring.scalar_mul_rows(t.c2, scalars)
    else:
        c2 = ring.ring_mul(t.c2, ring.to_ntt(elem))
    return TensorCiphertext(front.c0, front.c1, c2, t.level, front.log_scale,
                            front.p, front.B)


def tensor_rescale(t):
    if t.level < 1:
        raise DepthExhausted("rescale at level 0: no droppable prime left")
    params = t.params
    qs = params.active_primes(t.level)
    q_top = qs[-1]
    comps = [_rescale_elem(c, qs) for c in (t.c0, t.c1, t.c2)]
    # rounding rho0 + rho1*s + rho2*s^2; the s^2 term dominates
    n = params.n
    b_round = (C_SINGLE * _std_round(n)
               + C_PROD * _std_round(n) * _std_ternary(n)
               + C_PROD * _std_round(n) * (4.0 * n / 3.0))
    return TensorCiphertext(comps[0], comps[1], comps[2], t.level - 1,
                            t.log_scale - math.log2(q_top), t.p / q_top,
                            t.B / q_top + b_round)


def tensor_relinearize(t, eval_keys):
    """Back to a two-component ciphertext via the evaluation key."""
    r0, r1 = _keyswitch(t.c2, eval_keys.evk(t.level))
    b_ks = keyswitch_noise_bound(t.params, t.level, eval_keys.sigma)
    return Ciphertext(c0=ring.ring_add(t.c0, r0), c1=ring.ring_add(t.c1, r1),
                      level=t.level, log_scale=t.log_scale, p=t.p,
                      B=t.B + b_ks)


def _rescale_elem(elem, qs):
    from herl import kernels

    params = elem.params
    n = params.n
    q_top = qs[-1]
    rest = qs[:-1]
    rest_arr = params.active_array(elem.level - 1)
    top_coef = kernels.ntt_inverse(elem.data[-1], n, q_top).astype(np.int64)
    top_coef[top_coef >= (q_top + 1) // 2] -= q_top
    corr = kernels.ntt_forward_2d(kernels.reduce_center_2d(top_coef, rest_arr),
                                  n, rest)
    diff = kernels.sub_mod_2d(np.ascontiguousarray(elem.data[:-1]), corr,
                              rest_arr)
    invs = [pow(q_top, -1, qj) for qj in rest]
    out = kernels.scalar_mul_mod_2d(diff, invs, rest_arr)
    return RingElement(params, elem.level - 1, NTT, out)


def he_mul(c1, c2, eval_keys):
    """Standard multiplication: tensor + relinearize + rescale (level - 1)."""
    if c1.level < 1 or c2.level < 1:
        raise DepthExhausted("he_mul at level 0: no room to rescale")
    _check_levels(c1, c2, "he_mul")
    if abs(c1.log_scale - c2.log_scale) > MUL_LOG_TOL:
        raise ScaleMismatch("he_mul operands at incompatible scales")
    return rescale(tensor_mul(c1, c2, eval_keys))


def pt_mul(ct, pt):
    """Multiply by a plaintext (no relinearization; no level consumed)."""
    from herl import kernels

    params = ct.params
    elem = pt.elem
    if elem.level < ct.level:
        raise StructuralError("plaintext encoded below ciphertext level")
    if elem.level > ct.level:
        elem = ring.mod_drop(elem, elem.level - ct.level)
    if pt.const_coeff is not None:
        qs = params.active_primes(ct.level)
        scalars = [pt.const_coeff % q for q in qs]
        c0 = ring.scalar_mul_rows(ct.c0, scalars)
        c1 = ring.scalar_mul_rows(ct.c1, scalars)
    else:
        m = ring.to_ntt(elem)
        c0 = ring.ring_mul(ct.c0, m)
        c1 = ring.ring_mul(ct.c1, m)
    return Ciphertext(c0=c0, c1=c1, level=ct.level,
                      log_scale=ct.log_scale + pt.log_scale,
                      p=ct.p * pt.p, B=ct.B * pt.p + (ct.p + ct.B) * pt.err)


def raise_scale(ct, target_log_scale):
    """Multiply by an exact constant one so the scale becomes the target."""
    dlog = target_log_scale - ct.log_scale
    if dlog < MIN_LOG_SCALE:
        raise ScaleMismatch(
            f"scale raise of 2^{dlog:.2f} below minimum plaintext scale")
    one = encode_const(1.0, dlog, ct.params, level=ct.level)
    out = pt_mul(ct, one)
    return replace(out, log_scale=target_log_scale)


# ---------------------------------------------------------------------------
# Serialization (wire format; see also herl.protocol)
# ---------------------------------------------------------------------------

MAGIC = b"ERLC"
WIRE_VERSION = 1
_HEADER = struct.Struct("<4sHIHdH")


def serialize_ciphertext(ct):
    params = ct.params
    qs = params.active_primes(ct.level)
    parts = [_HEADER.pack(MAGIC, WIRE_VERSION, params.n, ct.level,
                          ct.log_scale, len(qs))]
    parts.append(np.array(qs, dtype="<u8").tobytes())
    parts.append(np.ascontiguousarray(ct.c0.data, dtype="<u8").tobytes())
    parts.append(np.ascontiguousarray(ct.c1.data, dtype="<u8").tobytes())
    parts.append(struct.pack("<dd", ct.p, ct.B))
    return b"".join(parts)


def deserialize_ciphertext(data, params):
    if len(data) < _HEADER.size:
        raise FramingError("ciphertext blob shorter than header")
    magic, version, n, level, log_scale, k = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FramingError(f"bad magic {magic!r}")
    if version != WIRE_VERSION:
        raise VersionError(f"unsupported ciphertext version {version}")
    if n != params.n:
        raise StructuralError(f"ring degree mismatch: {n} vs {params.n}")
    if k != params.base_count + level:
        raise FramingError("prime count inconsistent with level")
    off = _HEADER.size
    need = off + 8 * k + 2 * (8 * k * n) + 16
    if len(data) != need:
        raise FramingError(f"ciphertext blob length {len(data)}, want {need}")
    primes = np.frombuffer(data, dtype="<u8", count=k, offset=off)
    if tuple(int(q) for q in primes) != params.primes[:k]:
        raise StructuralError("modulus chain mismatch")
    off += 8 * k
    c0 = np.frombuffer(data, dtype="<u8", count=k * n, offset=off)
    off += 8 * k * n
    c1 = np.frombuffer(data, dtype="<u8", count=k * n, offset=off)
    off += 8 * k * n
    p, bound = struct.unpack_from("<dd", data, off)
    c0 = RingElement(params, level, NTT,
                     c0.reshape(k, n).astype(np.uint64))
    c1 = RingElement(params, level, NTT,
                     c1.reshape(k, n).astype(np.uint64))
    return Ciphertext(c0=c0, c1=c1, level=level, log_scale=log_scale,
                      p=p, B=bound)


def serialize_evk(eval_keys_or_keyset, levels):
    """Evaluation-key blob for the cloud setup message."""
    src = eval_keys_or_keyset
    parts = [struct.pack("<dH", src.sigma, len(levels))]
    for lv in sorted(levels):
        pairs = src.evk(lv)
        parts.append(struct.pack("<HH", lv, len(pairs)))
        for b, a in pairs:
            for elem in (b, a):
                parts.append(np.ascontiguousarray(elem.data,
                                                  dtype="<u8").tobytes())
    return b"".join(parts)


def deserialize_evk(data, params):
    if len(data) < 10:
        raise FramingError("evk blob too short")
    sigma, n_levels = struct.unpack_from("<dH", data, 0)
    off = 10
    n = params.n
    evk = {}
    for _ in range(n_levels):
        if off + 4 > len(data):
            raise FramingError("truncated evk blob")
        lv, count = struct.unpack_from("<HH", data, off)
        off += 4
        k = params.base_count + lv
        if count != k:
            raise FramingError("evk digit count mismatch")
        pairs = []
        for _ in range(count):
            elems = []
            for _ in range(2):
                end = off + 8 * k * n
                if end > len(data):
                    raise FramingError("truncated evk blob")
                arr = np.frombuffer(data, dtype="<u8", count=k * n,
                                    offset=off).reshape(k, n)
                elems.append(RingElement(params, lv, NTT,
                                         arr.astype(np.uint64)))
                off = end
            pairs.append((elems[0], elems[1]))
        evk[lv] = pairs
    if off != len(data):
        raise FramingError("trailing bytes in evk blob")
    return EvalKeys(params, sigma, evk)
