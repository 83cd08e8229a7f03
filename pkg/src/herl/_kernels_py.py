"""Pure-numpy modular/NTT kernels.

Fallback used when the compiled extension is unavailable (see herl.kernels).
All primes are below 2^41, so a 20-bit operand split keeps every intermediate
product inside uint64:

    a*b mod q = (((a >> 20)*b mod q) << 20) + (a & 0xFFFFF)*b   (mod q)

with (a >> 20) < 2^21 and b < 2^41, i.e. partial products < 2^62.
"""

import numpy as np

_LOW20 = np.uint64(0xFFFFF)
_S20 = np.uint64(20)

IMPLEMENTATION = "python"


def mul_mod(a, b, q):
    """Elementwise a*b mod q for uint64 arrays (or scalars) below q < 2^41."""
    a = np.asarray(a, dtype=np.uint64)
    b = np.asarray(b, dtype=np.uint64)
    q = np.uint64(q)
    hi = (a >> _S20) * b % q
    return ((hi << _S20) + (a & _LOW20) * b) % q


def addto_mul_mod(acc, a, b, q):
    """acc = (acc + a*b) mod q, elementwise; returns acc (modified in place)."""
    acc += mul_mod(a, b, q)
    acc %= np.uint64(q)
    return acc


def ntt_forward(a, q, psi_rev, psi_shoup):
    """In-place forward negacyclic NTT (Cooley-Tukey, merged psi powers).

    `psi_rev` holds powers of the 2N-th root of unity in bit-reversed order;
    `psi_shoup` is unused here (kept for signature parity with the compiled
    kernel, which uses Shoup precomputation).
    """
    n = a.shape[0]
    q = np.uint64(q)
    t = n
    m = 1
    while m < n:
        t >>= 1
        blocks = a.reshape(m, 2 * t)
        u = blocks[:, :t]
        v = mul_mod(blocks[:, t:], psi_rev[m : 2 * m, None], q)
        lo = (u + v) % q
        hi = (u + q - v) % q
        blocks[:, :t] = lo
        blocks[:, t:] = hi
        m <<= 1
    return a


def ntt_inverse(a, q, ipsi_rev, ipsi_shoup, n_inv, n_inv_shoup):
    """In-place inverse NTT (Gentleman-Sande), final scaling by N^-1."""
    n = a.shape[0]
    q = np.uint64(q)
    t = 1
    m = n
    while m > 1:
        h = m >> 1
        blocks = a.reshape(h, 2 * t)
        u = blocks[:, :t].copy()
        v = blocks[:, t:]
        blocks[:, :t] = (u + v) % q
        blocks[:, t:] = mul_mod((u + q - v) % q, ipsi_rev[h : 2 * h, None], q)
        t <<= 1
        m = h
    a[:] = mul_mod(a, np.uint64(n_inv), q)
    return a


def ntt_forward_2d(a, qs, psi_rev, psi_shoup):
    for i in range(a.shape[0]):
        ntt_forward(a[i], qs[i], psi_rev[i], None)
    return a


def ntt_inverse_2d(a, qs, ipsi_rev, ipsi_shoup, n_inv, n_inv_shoup):
    for i in range(a.shape[0]):
        ntt_inverse(a[i], qs[i], ipsi_rev[i], None, n_inv[i], None)
    return a


def add_mod_2d(a, b, out, qs):
    np.copyto(out, (a + b) % qs[:, None])


def sub_mod_2d(a, b, out, qs):
    np.copyto(out, (a + qs[:, None] - b) % qs[:, None])


def neg_mod_2d(a, out, qs):
    np.copyto(out, (qs[:, None] - a) % qs[:, None])


def mul_mod_2d(a, b, out, qs):
    for i in range(a.shape[0]):
        np.copyto(out[i], mul_mod(a[i], b[i], qs[i]))


def addto_mul_mod_2d(acc, a, b, qs):
    for i in range(a.shape[0]):
        addto_mul_mod(acc[i], a[i], b[i], qs[i])


def reduce_center_2d(coeffs, out, qs):
    rows = np.mod(coeffs[None, :], qs.astype(np.int64)[:, None])
    np.copyto(out, rows.astype(np.uint64))


def scalar_mul_mod_2d(a, scalars, out, qs):
    for i in range(a.shape[0]):
        np.copyto(out[i], mul_mod(a[i], np.uint64(scalars[i]), qs[i]))
