"""Kernel selection and NTT precomputation.

Imports the compiled extension when available, otherwise the pure-numpy
fallback. Set HERL_PURE_PY=1 to force the fallback (used by the kernel
benchmark and parity tests).
"""

import os

import numpy as np

if os.environ.get("HERL_PURE_PY"):
    from herl import _kernels_py as _impl
else:
    try:
        from herl import _kernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        from herl import _kernels_py as _impl

_COMPILED = _impl.IMPLEMENTATION == "compiled"


def implementation():
    """Name of the active kernel backend: 'compiled' or 'python'."""
    return _impl.IMPLEMENTATION


def _bitrev(x, bits):
    r = 0
    for _ in range(bits):
        r = (r << 1) | (x & 1)
        x >>= 1
    return r


def _shoup(w, q):
    return (w << 64) // q


class NttPlan:
    """Per-(N, q) twiddle tables for the negacyclic NTT."""

    def __init__(self, n, q):
        if q % (2 * n) != 1:
            raise ValueError(f"prime {q} is not 1 mod 2N (N={n})")
        self.n = n
        self.q = q
        psi = _find_2n_root(n, q)
        ipsi = pow(psi, -1, q)
        bits = n.bit_length() - 1
        order = [_bitrev(i, bits) for i in range(n)]
        self.psi_rev = np.array([pow(psi, e, q) for e in order], dtype=np.uint64)
        self.ipsi_rev = np.array([pow(ipsi, e, q) for e in order], dtype=np.uint64)
        self.psi_shoup = np.array([_shoup(int(w), q) for w in self.psi_rev],
                                  dtype=np.uint64)
        self.ipsi_shoup = np.array([_shoup(int(w), q) for w in self.ipsi_rev],
                                   dtype=np.uint64)
        self.n_inv = pow(n, -1, q)
        self.n_inv_shoup = _shoup(self.n_inv, q)


def _find_2n_root(n, q):
    # Deterministic: first base whose (q-1)/2N power is a primitive 2N-th root.
    e = (q - 1) // (2 * n)
    for g in range(2, q):
        psi = pow(g, e, q)
        if pow(psi, n, q) == q - 1:
            return psi
    raise ValueError(f"no 2N-th root of unity mod {q}")


_plans: dict = {}
_stacks: dict = {}


def plan_for(n, q):
    key = (n, q)
    plan = _plans.get(key)
    if plan is None:
        plan = _plans[key] = NttPlan(n, q)
    return plan


class PlanStack:
    """Row-stacked twiddle tables for a fixed prime tuple (2D kernels)."""

    def __init__(self, n, primes):
        plans = [plan_for(n, q) for q in primes]
        self.qs = np.array(primes, dtype=np.uint64)
        self.psi_rev = np.stack([p.psi_rev for p in plans])
        self.psi_shoup = np.stack([p.psi_shoup for p in plans])
        self.ipsi_rev = np.stack([p.ipsi_rev for p in plans])
        self.ipsi_shoup = np.stack([p.ipsi_shoup for p in plans])
        self.n_inv = np.array([p.n_inv for p in plans], dtype=np.uint64)
        self.n_inv_shoup = np.array([p.n_inv_shoup for p in plans],
                                    dtype=np.uint64)


def stack_for(n, primes):
    key = (n, tuple(primes))
    stack = _stacks.get(key)
    if stack is None:
        stack = _stacks[key] = PlanStack(n, key[1])
    return stack


def ntt_forward(a, n, q):
    """Forward NTT of a uint64 vector (copied, input untouched)."""
    plan = plan_for(n, q)
    out = np.array(a, dtype=np.uint64)
    _impl.ntt_forward(out, q, plan.psi_rev, plan.psi_shoup)
    return out


def ntt_inverse(a, n, q):
    plan = plan_for(n, q)
    out = np.array(a, dtype=np.uint64)
    _impl.ntt_inverse(out, q, plan.ipsi_rev, plan.ipsi_shoup, plan.n_inv,
                      plan.n_inv_shoup)
    return out


def mul_mod(a, b, q):
    """Elementwise (or array-by-scalar) product mod q."""
    if _COMPILED:
        out = np.empty_like(a)
        if np.isscalar(b) or getattr(b, "ndim", 1) == 0:
            _impl.scalar_mul_mod(a, int(b) % q, out, q)
        else:
            _impl.mul_mod(a, b, out, q)
        return out
    return _impl.mul_mod(a, b, q)


def addto_mul_mod(acc, a, b, q):
    """acc <- (acc + a*b) mod q in place."""
    if _COMPILED:
        _impl.addto_mul_mod(acc, a, b, q)
        return acc
    return _impl.addto_mul_mod(acc, a, b, q)


# 2D variants: one call per ring element (rows = primes).

def ntt_forward_2d(data, n, primes):
    """Forward NTT of every row (copied input)."""
    s = stack_for(n, primes)
    out = np.array(data, dtype=np.uint64)
    _impl.ntt_forward_2d(out, s.qs, s.psi_rev, s.psi_shoup)
    return out


def ntt_inverse_2d(data, n, primes):
    s = stack_for(n, primes)
    out = np.array(data, dtype=np.uint64)
    _impl.ntt_inverse_2d(out, s.qs, s.ipsi_rev, s.ipsi_shoup, s.n_inv,
                         s.n_inv_shoup)
    return out


def add_mod_2d(a, b, qs):
    out = np.empty_like(a)
    _impl.add_mod_2d(a, b, out, qs)
    return out


def sub_mod_2d(a, b, qs):
    out = np.empty_like(a)
    _impl.sub_mod_2d(a, b, out, qs)
    return out


def neg_mod_2d(a, qs):
    out = np.empty_like(a)
    _impl.neg_mod_2d(a, out, qs)
    return out


def mul_mod_2d(a, b, qs):
    out = np.empty_like(a)
    _impl.mul_mod_2d(a, b, out, qs)
    return out


def addto_mul_mod_2d(acc, a, b, qs):
    _impl.addto_mul_mod_2d(acc, a, b, qs)
    return acc


def reduce_center_2d(coeffs, qs):
    """Residue rows of a signed int64 coefficient vector."""
    out = np.empty((qs.shape[0], coeffs.shape[0]), dtype=np.uint64)
    _impl.reduce_center_2d(coeffs, out, qs)
    return out


def scalar_mul_mod_2d(a, scalars, qs):
    """Per-row scalar products (scalars already reduced mod the row prime)."""
    out = np.empty_like(a)
    _impl.scalar_mul_mod_2d(a, np.asarray(scalars, dtype=np.uint64), out, qs)
    return out
