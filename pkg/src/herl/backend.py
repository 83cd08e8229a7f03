"""Interchangeable evaluation backends.

Every learner runs its update arithmetic through one of these, so the same
algorithm code can execute exactly (floats), under injected bounded noise
(|w| <= eps per emitted result, the abstraction the convergence bounds are
stated over), or fully encrypted (CKKS).

Values are opaque handles tagged with their backend; handles from different
backends never mix.
"""

import numpy as np

from herl import ckks
from herl.errors import StructuralError


class SecureValue:
    __slots__ = ("backend", "payload")

    def __init__(self, backend, payload):
        self.backend = backend
        self.payload = payload

    def __repr__(self):
        return f"SecureValue({self.backend.kind})"


class _Base:
    kind = "abstract"

    def _check(self, *values):
        for v in values:
            if not isinstance(v, SecureValue) or v.backend is not self:
                raise StructuralError(
                    "value does not belong to this backend")

    # circuit depth this backend can evaluate (None = unlimited)
    depth_budget = None


class ExactBackend(_Base):
    """Plain float arithmetic; b_decrypt(b_encrypt(x)) is the identity."""

    kind = "exact"

    def encrypt(self, x):
        return SecureValue(self, float(x))

    def decrypt(self, v):
        self._check(v)
        return v.payload

    def add(self, a, b):
        self._check(a, b)
        return SecureValue(self, a.payload + b.payload)

    def sub(self, a, b):
        self._check(a, b)
        return SecureValue(self, a.payload - b.payload)

    def mul(self, a, b):
        self._check(a, b)
        return SecureValue(self, a.payload * b.payload)

    def mul_plain(self, a, c):
        self._check(a)
        return SecureValue(self, a.payload * c)


class BoundedNoiseBackend(_Base):
    """Exact arithmetic plus a fresh |w| <= eps on every emitted result.

    `adversarial` replaces the uniform draw with the worst case +eps, which
    the theorem bounds must also cover.
    """

    kind = "noise"

    def __init__(self, eps, seed=0, adversarial=False):
        if eps < 0:
            raise ValueError("eps must be >= 0")
        self.eps = float(eps)
        self.adversarial = adversarial
        self.rng = np.random.default_rng(seed)

    def _w(self):
        if self.eps == 0.0:
            return 0.0
        if self.adversarial:
            return self.eps
        return self.rng.uniform(-self.eps, self.eps)

    def encrypt(self, x):
        return SecureValue(self, float(x))

    def decrypt(self, v):
        self._check(v)
        return v.payload

    def add(self, a, b):
        self._check(a, b)
        return SecureValue(self, a.payload + b.payload + self._w())

    def sub(self, a, b):
        self._check(a, b)
        return SecureValue(self, a.payload - b.payload + self._w())

    def mul(self, a, b):
        self._check(a, b)
        return SecureValue(self, a.payload * b.payload + self._w())

    def mul_plain(self, a, c):
        self._check(a)
        return SecureValue(self, a.payload * c + self._w())


class EncryptedBackend(_Base):
    """CKKS-backed arithmetic, one scalar in slot 0 per ciphertext.

    `work_level` is where fresh values are encrypted; it must cover the
    multiplicative depth of the circuit being run. `encrypt_vector` packs a
    whole table row into the N/2 slots (optional batched mode).
    """

    kind = "encrypted"

    def __init__(self, params, keys, seed=0, work_level=None, log_scale=40.0):
        self.params = params
        self.keys = keys
        self.rng = np.random.default_rng(seed)
        self.work_level = (params.max_level if work_level is None
                           else work_level)
        if not 0 <= self.work_level <= params.max_level:
            raise ValueError("work_level outside the modulus chain")
        self.log_scale = log_scale
        self.eval_keys = ckks.EvalKeys.from_keyset(
            keys, range(self.work_level + 1))

    @property
    def depth_budget(self):
        return self.work_level

    def encrypt(self, x):
        pt = ckks.encode(np.array([float(x)]), self.log_scale, self.params,
                         level=self.work_level)
        ct = ckks.encrypt(pt, self.keys, self.rng, level=self.work_level)
        return SecureValue(self, ct)

    def encrypt_vector(self, xs):
        pt = ckks.encode(np.asarray(xs, dtype=np.float64), self.log_scale,
                         self.params, level=self.work_level)
        ct = ckks.encrypt(pt, self.keys, self.rng, level=self.work_level)
        return SecureValue(self, ct)

    def decrypt(self, v):
        self._check(v)
        return float(ckks.decode(ckks.decrypt(v.payload, self.keys))[0])

    def decrypt_vector(self, v, count):
        self._check(v)
        return ckks.decode(ckks.decrypt(v.payload, self.keys))[:count]

    def epsilon(self, v):
        self._check(v)
        return ckks.noise_epsilon(v.payload)

    def _align(self, a, b):
        ca, cb = a.payload, b.payload
        if ca.level > cb.level:
            ca = ckks.drop_to(ca, cb.level)
        elif cb.level > ca.level:
            cb = ckks.drop_to(cb, ca.level)
        return ca, cb

    def add(self, a, b):
        self._check(a, b)
        return SecureValue(self, ckks.he_add(*self._align(a, b)))

    def sub(self, a, b):
        self._check(a, b)
        return SecureValue(self, ckks.he_sub(*self._align(a, b)))

    def mul(self, a, b):
        self._check(a, b)
        ca, cb = self._align(a, b)
        return SecureValue(self, ckks.he_mul(ca, cb, self.eval_keys))

    def mul_plain(self, a, c):
        self._check(a)
        ct = a.payload
        pt = ckks.encode_const(float(c), self.log_scale, self.params,
                               level=ct.level)
        return SecureValue(self, ckks.rescale(ckks.pt_mul(ct, pt)))


def make_backend(kind, *, eps=0.0, seed=0, adversarial=False, params=None,
                 keys=None, work_level=None):
    """Factory matching the CLI's --backend choices."""
    if kind == "exact":
        return ExactBackend()
    if kind == "noise":
        return BoundedNoiseBackend(eps, seed=seed, adversarial=adversarial)
    if kind == "encrypted":
        if params is None or keys is None:
            raise ValueError("encrypted backend needs params and keys")
        return EncryptedBackend(params, keys, seed=seed,
                                work_level=work_level)
    raise ValueError(f"unknown backend kind {kind!r}")
