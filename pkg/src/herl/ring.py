"""Exact arithmetic in R_q = Z_q[X]/(X^N + 1) with an RNS (per-prime) layout.

Elements carry their residues for the currently active prefix of the modulus
chain ("level"), either in coefficient or NTT representation. All operations
are pure: inputs are never mutated, outputs are new read-only arrays.

The chain consists of `base_count` primes that are never dropped (they form
the level-0 modulus and set the final message capacity) followed by the
rescaling primes, one consumed per level. A level-ell element holds residues
for primes[0 : base_count + ell].
"""

from dataclasses import dataclass, field

import numpy as np

from herl import kernels
from herl.errors import StructuralError

COEF = "coef"
NTT = "ntt"

# Largest prime size the pure-numpy kernel handles exactly (20-bit split).
MAX_PRIME_BITS = 41

_MR_WITNESSES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


def is_prime(n: int) -> bool:
    """Deterministic Miller-Rabin, exact for n < 3.3e24."""
    if n < 2:
        return False
    for p in _MR_WITNESSES:
        if n % p == 0:
            return n == p
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in _MR_WITNESSES:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def find_ntt_primes(n: int, bit_sizes) -> tuple:
    """Distinct primes = 1 (mod 2N) at the requested bit sizes.

    Deterministic: for each size the scan starts just below 2^bits and walks
    down in steps of 2N, skipping primes already taken, so parameter presets
    are reproducible.
    """
    taken = set()
    out = []
    for bits in bit_sizes:
        if bits > MAX_PRIME_BITS:
            raise ValueError(f"prime size {bits} exceeds {MAX_PRIME_BITS} bits")
        x = (1 << bits) - 1
        x -= (x - 1) % (2 * n)
        while x.bit_length() == bits:
            if x not in taken and is_prime(x):
                taken.add(x)
                out.append(x)
                break
            x -= 2 * n
        else:
            raise ValueError(f"no {bits}-bit NTT prime for N={n}")
    return tuple(out)


@dataclass(frozen=True)
class RingParams:
    """Ring degree and modulus chain.

    primes[:base_count] are never dropped; each remaining prime backs one
    rescaling level.
    """

    n: int
    primes: tuple
    base_count: int = 1
    _inv_cache: dict = field(default_factory=dict, repr=False, compare=False,
                             hash=False)

    def __post_init__(self):
        if self.n < 2 or self.n & (self.n - 1):
            raise ValueError("N must be a power of two >= 2")
        if not 1 <= self.base_count <= len(self.primes):
            raise ValueError("base_count out of range")
        if len(set(self.primes)) != len(self.primes):
            raise ValueError("chain primes must be distinct")
        for q in self.primes:
            if q % (2 * self.n) != 1:
                raise ValueError(f"prime {q} is not 1 mod 2N")
            if q.bit_length() > MAX_PRIME_BITS:
                raise ValueError(f"prime {q} exceeds {MAX_PRIME_BITS} bits")
            if not is_prime(q):
                raise ValueError(f"{q} is not prime")

    @classmethod
    def generate(cls, n, base_bits, rescale_bits):
        """Build a chain from bit sizes (base primes first)."""
        base_bits = list(base_bits)
        rescale_bits = list(rescale_bits)
        primes = find_ntt_primes(n, base_bits + rescale_bits)
        return cls(n=n, primes=primes, base_count=len(base_bits))

    @property
    def max_level(self):
        return len(self.primes) - self.base_count

    @property
    def total_bits(self):
        return sum(q.bit_length() for q in self.primes)

    def active_primes(self, level):
        if not 0 <= level <= self.max_level:
            raise StructuralError(f"level {level} outside [0, {self.max_level}]")
        return self.primes[: self.base_count + level]

    def active_array(self, level):
        cache = self._inv_cache.setdefault("_arrays", {})
        if level not in cache:
            cache[level] = np.array(self.active_primes(level), dtype=np.uint64)
        return cache[level]

    def modulus(self, level):
        """Product of the active primes (a Python int)."""
        m = 1
        for q in self.active_primes(level):
            m *= q
        return m

    def inv_table(self, level):
        """inv[i][j] = primes[i]^-1 mod primes[j] for the active prefix."""
        k = self.base_count + level
        if k not in self._inv_cache:
            act = self.primes[:k]
            self._inv_cache[k] = [
                [pow(act[i], -1, act[j]) if i != j else 0 for j in range(k)]
                for i in range(k)
            ]
        return self._inv_cache[k]


class RingElement:
    """Residues (active primes x N) plus level and representation flag."""

    __slots__ = ("params", "level", "domain", "data")

    def __init__(self, params, level, domain, data):
        k = params.base_count + level
        if data.shape != (k, params.n) or data.dtype != np.uint64:
            raise StructuralError("residue array shape/dtype mismatch")
        data.setflags(write=False)
        self.params = params
        self.level = level
        self.domain = domain
        self.data = data

    def __repr__(self):
        return (f"RingElement(N={self.params.n}, level={self.level}, "
                f"domain={self.domain})")

    def __eq__(self, other):
        return (isinstance(other, RingElement)
                and self.params is other.params
                and self.level == other.level
                and self.domain == other.domain
                and np.array_equal(self.data, other.data))

    def copy_data(self):
        return np.array(self.data, dtype=np.uint64)


def _check_pair(a, b, need_domain=None):
    if a.params is not b.params and a.params != b.params:
        raise StructuralError("ring parameter mismatch")
    if a.level != b.level:
        raise StructuralError(f"level mismatch: {a.level} vs {b.level}")
    if a.domain != b.domain:
        raise StructuralError(f"representation mismatch: {a.domain} vs {b.domain}")
    if need_domain is not None and a.domain != need_domain:
        raise StructuralError(f"operands must be in {need_domain} form")


def zero(params, level, domain=COEF):
    k = params.base_count + level
    return RingElement(params, level, domain,
                       np.zeros((k, params.n), dtype=np.uint64))


def from_int_coeffs(coeffs, params, level):
    """Coefficient-domain element from (possibly negative) int64 coefficients."""
    coeffs = np.ascontiguousarray(coeffs, dtype=np.int64)
    if coeffs.shape != (params.n,):
        raise StructuralError("coefficient vector has wrong length")
    data = kernels.reduce_center_2d(coeffs, params.active_array(level))
    return RingElement(params, level, COEF, data)


def ring_add(a, b):
    _check_pair(a, b)
    qs = a.params.active_array(a.level)
    return RingElement(a.params, a.level, a.domain,
                       kernels.add_mod_2d(a.data, b.data, qs))


def ring_sub(a, b):
    _check_pair(a, b)
    qs = a.params.active_array(a.level)
    return RingElement(a.params, a.level, a.domain,
                       kernels.sub_mod_2d(a.data, b.data, qs))


def ring_neg(a):
    qs = a.params.active_array(a.level)
    return RingElement(a.params, a.level, a.domain,
                       kernels.neg_mod_2d(a.data, qs))


def ntt_transform(a, direction):
    """Switch representation; forward: coef -> ntt, inverse: ntt -> coef."""
    if direction == "forward":
        if a.domain != COEF:
            raise StructuralError("forward NTT expects coefficient form")
        new_domain = NTT
    elif direction == "inverse":
        if a.domain != NTT:
            raise StructuralError("inverse NTT expects NTT form")
        new_domain = COEF
    else:
        raise ValueError(f"unknown direction {direction!r}")
    n = a.params.n
    primes = a.params.active_primes(a.level)
    if direction == "forward":
        out = kernels.ntt_forward_2d(a.data, n, primes)
    else:
        out = kernels.ntt_inverse_2d(a.data, n, primes)
    return RingElement(a.params, a.level, new_domain, out)


def to_ntt(a):
    return a if a.domain == NTT else ntt_transform(a, "forward")


def to_coef(a):
    return a if a.domain == COEF else ntt_transform(a, "inverse")


def ring_mul(a, b):
    """Negacyclic product; operands are moved to NTT form as needed."""
    if a.level != b.level:
        raise StructuralError(f"level mismatch: {a.level} vs {b.level}")
    a = to_ntt(a)
    b = to_ntt(b)
    out = kernels.mul_mod_2d(a.data, b.data, a.params.active_array(a.level))
    return RingElement(a.params, a.level, NTT, out)


def scalar_mul_rows(a, scalars):
    """Multiply each prime row by its own scalar (already reduced mod q_i)."""
    out = kernels.scalar_mul_mod_2d(a.data, scalars,
                                    a.params.active_array(a.level))
    return RingElement(a.params, a.level, a.domain, out)


def mod_drop(a, count=1):
    """Remove the top `count` active primes (used by rescaling/level drops)."""
    if count < 0 or a.level - count < 0:
        raise StructuralError(f"cannot drop {count} primes from level {a.level}")
    if count == 0:
        return a
    k = a.params.base_count + a.level - count
    return RingElement(a.params, a.level - count, a.domain,
                       np.array(a.data[:k], dtype=np.uint64))


def sample(kind, params, rng, sigma=None, level=None, domain=COEF):
    """Random element: 'uniform', 'ternary', or 'gaussian' (needs sigma).

    Uniform draws each residue independently in [0, q_i); ternary and
    gaussian draw one integer coefficient vector and reduce it per prime.
    The gaussian is a discrete Gaussian sampled by inverting its cumulative
    table, tail-cut at 6 sigma.
    """
    if level is None:
        level = params.max_level
    n = params.n
    if kind == "uniform":
        qs = params.active_primes(level)
        data = np.stack([rng.integers(0, q, n, dtype=np.uint64) for q in qs])
        return RingElement(params, level, domain, data)
    if kind == "ternary":
        coeffs = rng.integers(0, 3, n, dtype=np.int64) - 1
    elif kind == "gaussian":
        if sigma is None or sigma <= 0:
            raise ValueError("gaussian sampling needs sigma > 0")
        quantiles = _gaussian_table(sigma)
        coeffs = quantiles[rng.integers(0, quantiles.size, n)]
    else:
        raise ValueError(f"unknown sampler kind {kind!r}")
    elem = from_int_coeffs(coeffs, params, level)
    if domain == NTT:
        elem = ntt_transform(elem, "forward")
    return elem


_gauss_tables: dict = {}
_GAUSS_QUANTILES = 1 << 16


def _gaussian_table(sigma):
    """Quantile table inverting the discrete-Gaussian CDF (tail cut 6*sigma)."""
    key = float(sigma)
    if key not in _gauss_tables:
        tail = int(6 * sigma)
        support = np.arange(-tail, tail + 1, dtype=np.int64)
        w = np.exp(-(support.astype(np.float64) ** 2) / (2 * sigma * sigma))
        cdf = np.cumsum(w / w.sum())
        cdf[-1] = 1.0
        u = (np.arange(_GAUSS_QUANTILES, dtype=np.float64) + 0.5) / _GAUSS_QUANTILES
        _gauss_tables[key] = support[np.searchsorted(cdf, u)]
    return _gauss_tables[key]


def gaussian_tail_bound(sigma):
    """Largest coefficient magnitude the tail-cut sampler can emit."""
    return int(6 * sigma)


def garner_digits(elem):
    """Mixed-radix digits of the coefficient vector (coef form required)."""
    if elem.domain != COEF:
        raise StructuralError("Garner decomposition needs coefficient form")
    qs = elem.params.active_primes(elem.level)
    inv = elem.params.inv_table(elem.level)
    k = len(qs)
    digits = [elem.data[0].copy()]
    for j in range(1, k):
        t = elem.data[j].copy()
        qj = qs[j]
        for i in range(j):
            di = digits[i] % np.uint64(qj)
            t = (t + np.uint64(qj) - di) % np.uint64(qj)
            t = kernels.mul_mod(t, inv[i][j], qj)
        digits.append(t)
    return digits


def to_float_centered(elem):
    """Centered coefficient vector as float64.

    Exact whenever the underlying integers are small relative to the modulus
    (the case for well-formed plaintexts); degrades gracefully otherwise.
    """
    qs = elem.params.active_primes(elem.level)
    digits = garner_digits(elem)
    signed = []
    carry = np.zeros(elem.params.n, dtype=np.int64)
    for i, q in enumerate(qs):
        d = digits[i].astype(np.int64) + carry
        wrap = d >= q
        d[wrap] -= q
        half = (q + 1) // 2
        high = d >= half
        d[high] -= q
        carry = wrap.astype(np.int64) + high.astype(np.int64)
        signed.append(d)
    val = signed[-1].astype(np.float64)
    for i in range(len(qs) - 2, -1, -1):
        val = signed[i] + float(qs[i]) * val
    return val


def to_int_centered(elem):
    """Centered coefficients as exact Python ints (small-N test helper)."""
    qs = elem.params.active_primes(elem.level)
    modulus = elem.params.modulus(elem.level)
    n = elem.params.n
    vals = []
    for j in range(n):
        x, prod = 0, 1
        for i, q in enumerate(qs):
            r = int(elem.data[i, j])
            inv = pow(prod % q, -1, q)
            x += prod * ((r - x) * inv % q)
            prod *= q
        if x > modulus // 2:
            x -= modulus
        vals.append(x)
    return vals
