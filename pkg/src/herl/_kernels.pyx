# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled modular/NTT kernels.

The NTT cores are verbatim C with Harvey-style lazy reduction (values ride in
[0, 4q) through the forward pass, [0, 2q) through the inverse) and Shoup
multiplication for twiddles, so the inner loop is branch-free. Data-data
products use Barrett reduction. Valid for q < 2^62 (primes here are < 2^41).
"""

from libc.stdint cimport uint64_t

cdef extern from *:
    """
    #include <stdint.h>
    typedef unsigned __int128 herl_u128;

    static inline uint64_t herl_shoup_const(uint64_t w, uint64_t q) {
        return (uint64_t)((((herl_u128)w) << 64) / q);
    }

    /* Lazy Shoup product: result in [0, 2q). */
    static inline uint64_t herl_mulmod_shoup_lazy(uint64_t a, uint64_t w,
                                                  uint64_t wshoup, uint64_t q) {
        uint64_t hi = (uint64_t)(((herl_u128)a * wshoup) >> 64);
        return a * w - hi * q;
    }

    static inline uint64_t herl_mulmod_shoup(uint64_t a, uint64_t w,
                                             uint64_t wshoup, uint64_t q) {
        uint64_t r = herl_mulmod_shoup_lazy(a, w, wshoup, q);
        return r >= q ? r - q : r;
    }

    /* nu = floor(2^(63+k)/q), k = bit length of q; valid for a, b < q. */
    static inline uint64_t herl_barrett_mulmod(uint64_t a, uint64_t b,
                                               uint64_t q, uint64_t nu,
                                               int shift) {
        herl_u128 x = (herl_u128)a * b;
        uint64_t u = (uint64_t)(x >> shift);
        uint64_t qhat = (uint64_t)(((herl_u128)u * nu) >> 64);
        uint64_t r = (uint64_t)(x - (herl_u128)qhat * q);
        r -= q * (r >= q);
        r -= q * (r >= q);
        return r;
    }

    static inline uint64_t herl_barrett_nu(uint64_t q, int k) {
        return (uint64_t)((((herl_u128)1) << (63 + k)) / q);
    }

    static void herl_ntt_forward(uint64_t *a, size_t n, uint64_t q,
                                 const uint64_t *psi, const uint64_t *psi_sh) {
        const uint64_t q2 = 2 * q;
        size_t t = n, m = 1, i, j;
        while (m < n) {
            t >>= 1;
            for (i = 0; i < m; i++) {
                const uint64_t w = psi[m + i], wsh = psi_sh[m + i];
                uint64_t *x = a + 2 * i * t, *y = x + t;
                for (j = 0; j < t; j++) {
                    uint64_t u = x[j];
                    u -= q2 * (u >= q2);
                    uint64_t v = herl_mulmod_shoup_lazy(y[j], w, wsh, q);
                    x[j] = u + v;
                    y[j] = u - v + q2;
                }
            }
            m <<= 1;
        }
        for (j = 0; j < n; j++) {
            uint64_t u = a[j];
            u -= q2 * (u >= q2);
            u -= q * (u >= q);
            a[j] = u;
        }
    }

    static void herl_ntt_inverse(uint64_t *a, size_t n, uint64_t q,
                                 const uint64_t *ipsi, const uint64_t *ipsi_sh,
                                 uint64_t n_inv, uint64_t n_inv_sh) {
        const uint64_t q2 = 2 * q;
        size_t t = 1, m = n, h, i, j;
        while (m > 1) {
            h = m >> 1;
            for (i = 0; i < h; i++) {
                const uint64_t w = ipsi[h + i], wsh = ipsi_sh[h + i];
                uint64_t *x = a + 2 * i * t, *y = x + t;
                for (j = 0; j < t; j++) {
                    uint64_t u = x[j], v = y[j];
                    uint64_t s = u + v;
                    s -= q2 * (s >= q2);
                    x[j] = s;
                    y[j] = herl_mulmod_shoup_lazy(u - v + q2, w, wsh, q);
                }
            }
            t <<= 1;
            m = h;
        }
        for (j = 0; j < n; j++)
            a[j] = herl_mulmod_shoup(a[j], n_inv, n_inv_sh, q);
    }
    """
    uint64_t herl_shoup_const(uint64_t w, uint64_t q) noexcept nogil
    uint64_t herl_mulmod_shoup(uint64_t a, uint64_t w, uint64_t wshoup,
                               uint64_t q) noexcept nogil
    uint64_t herl_barrett_mulmod(uint64_t a, uint64_t b, uint64_t q,
                                 uint64_t nu, int shift) noexcept nogil
    uint64_t herl_barrett_nu(uint64_t q, int k) noexcept nogil
    void herl_ntt_forward(uint64_t *a, size_t n, uint64_t q,
                          const uint64_t *psi, const uint64_t *psi_sh) noexcept nogil
    void herl_ntt_inverse(uint64_t *a, size_t n, uint64_t q,
                          const uint64_t *ipsi, const uint64_t *ipsi_sh,
                          uint64_t n_inv, uint64_t n_inv_sh) noexcept nogil

IMPLEMENTATION = "compiled"


cdef inline int _bitlen(uint64_t q) noexcept nogil:
    cdef int k = 0
    while q > 0:
        q >>= 1
        k += 1
    return k


def mul_mod(const uint64_t[::1] a, const uint64_t[::1] b, uint64_t[::1] out,
            uint64_t q):
    cdef Py_ssize_t i, n = a.shape[0]
    cdef int k = _bitlen(q)
    cdef uint64_t nu = herl_barrett_nu(q, k)
    with nogil:
        for i in range(n):
            out[i] = herl_barrett_mulmod(a[i], b[i], q, nu, k - 1)


def scalar_mul_mod(const uint64_t[::1] a, uint64_t s, uint64_t[::1] out,
                   uint64_t q):
    cdef Py_ssize_t i, n = a.shape[0]
    cdef uint64_t sshoup = herl_shoup_const(s, q)
    with nogil:
        for i in range(n):
            out[i] = herl_mulmod_shoup(a[i], s, sshoup, q)


def addto_mul_mod(uint64_t[::1] acc, const uint64_t[::1] a,
                  const uint64_t[::1] b, uint64_t q):
    cdef Py_ssize_t i, n = a.shape[0]
    cdef int k = _bitlen(q)
    cdef uint64_t nu = herl_barrett_nu(q, k)
    cdef uint64_t r
    with nogil:
        for i in range(n):
            r = acc[i] + herl_barrett_mulmod(a[i], b[i], q, nu, k - 1)
            if r >= q:
                r -= q
            acc[i] = r


def ntt_forward(uint64_t[::1] a, uint64_t q, const uint64_t[::1] psi_rev,
                const uint64_t[::1] psi_shoup):
    cdef Py_ssize_t n = a.shape[0]
    with nogil:
        herl_ntt_forward(&a[0], n, q, &psi_rev[0], &psi_shoup[0])


def ntt_inverse(uint64_t[::1] a, uint64_t q, const uint64_t[::1] ipsi_rev,
                const uint64_t[::1] ipsi_shoup, uint64_t n_inv,
                uint64_t n_inv_shoup):
    cdef Py_ssize_t n = a.shape[0]
    with nogil:
        herl_ntt_inverse(&a[0], n, q, &ipsi_rev[0], &ipsi_shoup[0], n_inv,
                         n_inv_shoup)


def ntt_forward_2d(uint64_t[:, ::1] a, const uint64_t[::1] qs,
                   const uint64_t[:, ::1] psi_rev,
                   const uint64_t[:, ::1] psi_shoup):
    cdef Py_ssize_t i, k = a.shape[0], n = a.shape[1]
    with nogil:
        for i in range(k):
            herl_ntt_forward(&a[i, 0], n, qs[i], &psi_rev[i, 0],
                             &psi_shoup[i, 0])


def ntt_inverse_2d(uint64_t[:, ::1] a, const uint64_t[::1] qs,
                   const uint64_t[:, ::1] ipsi_rev,
                   const uint64_t[:, ::1] ipsi_shoup,
                   const uint64_t[::1] n_inv, const uint64_t[::1] n_inv_shoup):
    cdef Py_ssize_t i, k = a.shape[0], n = a.shape[1]
    with nogil:
        for i in range(k):
            herl_ntt_inverse(&a[i, 0], n, qs[i], &ipsi_rev[i, 0],
                             &ipsi_shoup[i, 0], n_inv[i], n_inv_shoup[i])


def add_mod_2d(const uint64_t[:, ::1] a, const uint64_t[:, ::1] b,
               uint64_t[:, ::1] out, const uint64_t[::1] qs):
    cdef Py_ssize_t i, j, k = a.shape[0], n = a.shape[1]
    cdef uint64_t q, s
    with nogil:
        for i in range(k):
            q = qs[i]
            for j in range(n):
                s = a[i, j] + b[i, j]
                out[i, j] = s - q if s >= q else s


def sub_mod_2d(const uint64_t[:, ::1] a, const uint64_t[:, ::1] b,
               uint64_t[:, ::1] out, const uint64_t[::1] qs):
    cdef Py_ssize_t i, j, k = a.shape[0], n = a.shape[1]
    cdef uint64_t q, x, y
    with nogil:
        for i in range(k):
            q = qs[i]
            for j in range(n):
                x = a[i, j]
                y = b[i, j]
                out[i, j] = x - y if x >= y else x + q - y


def neg_mod_2d(const uint64_t[:, ::1] a, uint64_t[:, ::1] out,
               const uint64_t[::1] qs):
    cdef Py_ssize_t i, j, k = a.shape[0], n = a.shape[1]
    cdef uint64_t q
    with nogil:
        for i in range(k):
            q = qs[i]
            for j in range(n):
                out[i, j] = q - a[i, j] if a[i, j] != 0 else 0


def mul_mod_2d(const uint64_t[:, ::1] a, const uint64_t[:, ::1] b,
               uint64_t[:, ::1] out, const uint64_t[::1] qs):
    cdef Py_ssize_t i, j, k = a.shape[0], n = a.shape[1]
    cdef uint64_t q, nu
    cdef int kb
    with nogil:
        for i in range(k):
            q = qs[i]
            kb = _bitlen(q)
            nu = herl_barrett_nu(q, kb)
            for j in range(n):
                out[i, j] = herl_barrett_mulmod(a[i, j], b[i, j], q, nu, kb - 1)


def addto_mul_mod_2d(uint64_t[:, ::1] acc, const uint64_t[:, ::1] a,
                     const uint64_t[:, ::1] b, const uint64_t[::1] qs):
    cdef Py_ssize_t i, j, k = a.shape[0], n = a.shape[1]
    cdef uint64_t q, nu, r
    cdef int kb
    with nogil:
        for i in range(k):
            q = qs[i]
            kb = _bitlen(q)
            nu = herl_barrett_nu(q, kb)
            for j in range(n):
                r = acc[i, j] + herl_barrett_mulmod(a[i, j], b[i, j], q, nu,
                                                    kb - 1)
                if r >= q:
                    r -= q
                acc[i, j] = r


def reduce_center_2d(const long long[::1] coeffs, uint64_t[:, ::1] out,
                     const uint64_t[::1] qs):
    """Rows of `coeffs mod q_i` for a signed (centered) coefficient vector."""
    cdef Py_ssize_t i, j, k = qs.shape[0], n = coeffs.shape[0]
    cdef long long q, v
    with nogil:
        for i in range(k):
            q = <long long> qs[i]
            for j in range(n):
                v = coeffs[j] % q
                out[i, j] = <uint64_t> (v + q if v < 0 else v)


def scalar_mul_mod_2d(const uint64_t[:, ::1] a, const uint64_t[::1] scalars,
                      uint64_t[:, ::1] out, const uint64_t[::1] qs):
    """Per-row scalar products: out[i] = a[i] * scalars[i] mod qs[i]."""
    cdef Py_ssize_t i, j, k = a.shape[0], n = a.shape[1]
    cdef uint64_t q, s, sh
    with nogil:
        for i in range(k):
            q = qs[i]
            s = scalars[i]
            sh = herl_shoup_const(s, q)
            for j in range(n):
                out[i, j] = herl_mulmod_shoup(a[i, j], s, sh, q)
