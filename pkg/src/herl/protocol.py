"""Client/cloud message flow for encrypted learning updates.

The client encodes and encrypts the role values an update rule needs, the
cloud evaluates the rule homomorphically (it holds evaluation keys only,
never the secret key), and the client decrypts the result and writes its
table. Runs in-process by default; the loopback mode moves the cloud into a
separate process behind a length-prefixed TCP stream using the same wire
format, and must produce bit-identical results.

Wire format: each ciphertext uses the ckks blob layout; messages wrap them
in an envelope {version, kind, algorithm tag, request id, aux, role count,
(role id, blob)...} followed by a CRC32 of everything before it.
"""

import math
import multiprocessing
import socket
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from herl import ckks, circuits
from herl.ckks import deserialize_ciphertext, serialize_ciphertext
from herl.circuits import DECLARED_DEPTH
from herl.errors import (ApproximationDomainError, ChecksumError,
                         FramingError, ProtocolError, VersionError)
from herl.ring import RingParams

ENVELOPE_MAGIC = b"ERLM"
ENVELOPE_VERSION = 1
_KIND_REQUEST = 1
_KIND_RESPONSE = 2
_KIND_SETUP = 3
_KIND_BYE = 4

_ALGO_TAGS = {"td0": 1, "sarsa": 2, "z": 3, "q_backup": 4}
_TAG_ALGOS = {v: k for k, v in _ALGO_TAGS.items()}


@dataclass
class ClientRequest:
    algo: str
    request_id: int
    roles: dict
    n_states: int = 0
    n_actions: int = 0


@dataclass
class CloudResponse:
    request_id: int
    results: dict
    levels_consumed: int


def role_values(algo, h, table, alpha, gamma):
    """Plaintext role set for one update, indexed from the current table."""
    if algo == "td0":
        return {"v": float(table[h.s]), "vp": float(table[h.s_next]),
                "alpha": alpha, "gamma": gamma, "r": h.r}
    if algo == "sarsa":
        qp = 0.0 if h.a_next is None else float(table[h.s_next, h.a_next])
        return {"q": float(table[h.s, h.a]), "qp": qp, "alpha": alpha,
                "gamma": gamma, "r": h.r}
    if algo == "z":
        return {"z": float(table[h.s]), "zp": float(table[h.s_next]),
                "alpha": alpha, "l": h.cost}
    raise ValueError(f"unknown algorithm {algo!r}")


def client_prepare(algo, h, table, alpha, gamma, enc_backend, request_id=0,
                   cost_max=1.0):
    """Encode and encrypt the role set for one update."""
    values = role_values(algo, h, table, alpha, gamma)
    if algo == "z" and not 0.0 <= values["l"] <= cost_max:
        raise ApproximationDomainError(
            f"cost {values['l']} outside the Taylor domain [0, {cost_max}]")
    roles = {name: enc_backend.encrypt(val).payload
             for name, val in values.items()}
    return ClientRequest(algo=algo, request_id=request_id, roles=roles)


def prepare_q_backup(s, V, est, gamma, enc_backend, request_id=0):
    """Roles for one state's encrypted model-based backup (all actions)."""
    roles = {"gamma": enc_backend.encrypt(gamma).payload}
    for j in range(est.n_states):
        roles[f"v:{j}"] = enc_backend.encrypt(float(V[j])).payload
    r_bar = est.expected_reward()
    for a in range(est.n_actions):
        roles[f"r:{a}"] = enc_backend.encrypt(float(r_bar[s, a])).payload
        for j in range(est.n_states):
            roles[f"p:{a}:{j}"] = enc_backend.encrypt(
                float(est.P[s, a, j])).payload
    return ClientRequest(algo="q_backup", request_id=request_id, roles=roles,
                         n_states=est.n_states, n_actions=est.n_actions)


class CloudService:
    """The semi-honest evaluator: evaluation keys only, no secret material.

    With circuit privacy enabled it pads the result by adding a fresh
    encryption of zero under the public key (which changes the ciphertext,
    never the decrypted value); padding randomness is seeded so loopback
    runs stay reproducible.
    """

    def __init__(self, params, eval_keys, circuit_privacy=False, pk=None,
                 pad_seed=0):
        self.params = params
        self.eval_keys = eval_keys
        self.circuit_privacy = circuit_privacy
        self.pk = pk
        if circuit_privacy and pk is None:
            raise ProtocolError("circuit privacy padding needs the public key")
        self.pad_rng = np.random.default_rng(pad_seed)

    def evaluate(self, req):
        if req.algo not in _ALGO_TAGS:
            raise ProtocolError(f"unknown algorithm tag {req.algo!r}")
        in_level = max(ct.level for ct in req.roles.values())
        if req.algo == "td0":
            results = {"out": circuits.td_rule(req.roles, self.eval_keys)}
        elif req.algo == "sarsa":
            results = {"out": circuits.sarsa_rule(req.roles, self.eval_keys)}
        elif req.algo == "z":
            results = {"out": circuits.z_rule(req.roles, self.eval_keys)}
        else:
            results = circuits.q_backup_rule(req.roles, self.eval_keys,
                                             req.n_states, req.n_actions)
        if self.circuit_privacy:
            results = {k: self._pad(ct) for k, ct in results.items()}
        out_level = min(ct.level for ct in results.values())
        consumed = in_level - out_level
        if consumed != DECLARED_DEPTH[req.algo]:
            raise ProtocolError(
                f"{req.algo} consumed {consumed} levels, declared "
                f"{DECLARED_DEPTH[req.algo]}")
        return CloudResponse(request_id=req.request_id, results=results,
                             levels_consumed=consumed)

    def _pad(self, ct):
        zero = ckks.encode(np.zeros(1), ct.log_scale, self.params,
                           level=ct.level)
        pad = ckks.encrypt(zero, _PkOnly(self.params, self.pk), self.pad_rng,
                           level=ct.level)
        return ckks.he_add(ct, pad)


class _PkOnly:
    """Adapter giving encrypt() a key holder without any secret key."""

    def __init__(self, params, pk):
        self.params = params
        self.pk = pk
        self.sigma = 8.0 / math.sqrt(2.0 * math.pi)


def cloud_evaluate(req, eval_keys, **service_kwargs):
    """One-shot evaluation against fresh cloud state (see CloudService)."""
    return CloudService(eval_keys.params, eval_keys,
                        **service_kwargs).evaluate(req)


def client_finalize(resp, req, keys):
    """Decrypt the result; for q_backup apply the greedy max over actions.

    Returns the new table entry (scalar rules) or (value, argmax action).
    """
    if resp.request_id != req.request_id:
        raise ProtocolError(
            f"response id {resp.request_id} does not match request "
            f"{req.request_id}")
    if req.algo in ("td0", "sarsa", "z"):
        pt = ckks.decrypt(resp.results["out"], keys)
        return float(ckks.decode(pt)[0])
    q_row = np.array([ckks.decode(ckks.decrypt(resp.results[f"q:{a}"],
                                               keys))[0]
                      for a in range(req.n_actions)])
    best = int(np.argmax(q_row))
    return float(q_row[best]), best


# ---------------------------------------------------------------------------
# Envelopes
# ---------------------------------------------------------------------------

def _pack_roles(roles):
    parts = [struct.pack("<H", len(roles))]
    for name in sorted(roles):
        blob = serialize_ciphertext(roles[name])
        ident = name.encode()
        parts.append(struct.pack("<B", len(ident)))
        parts.append(ident)
        parts.append(struct.pack("<I", len(blob)))
        parts.append(blob)
    return parts


def _unpack_roles(data, off, params):
    if off + 2 > len(data):
        raise FramingError("truncated role table")
    (count,) = struct.unpack_from("<H", data, off)
    off += 2
    roles = {}
    for _ in range(count):
        if off + 1 > len(data):
            raise FramingError("truncated role id")
        (id_len,) = struct.unpack_from("<B", data, off)
        off += 1
        name = data[off:off + id_len].decode()
        off += id_len
        if off + 4 > len(data):
            raise FramingError("truncated role blob length")
        (blob_len,) = struct.unpack_from("<I", data, off)
        off += 4
        if off + blob_len > len(data):
            raise FramingError("truncated role blob")
        roles[name] = deserialize_ciphertext(data[off:off + blob_len], params)
        off += blob_len
    return roles, off


def _seal(parts):
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def _open(data, kind):
    if len(data) < 12:
        raise FramingError("message too short")
    body, (crc,) = data[:-4], struct.unpack_from("<I", data, len(data) - 4)
    if zlib.crc32(body) != crc:
        raise ChecksumError("message checksum mismatch")
    magic, version, got_kind = struct.unpack_from("<4sHB", body, 0)
    if magic != ENVELOPE_MAGIC:
        raise FramingError(f"bad envelope magic {magic!r}")
    if version != ENVELOPE_VERSION:
        raise VersionError(f"unsupported envelope version {version}")
    if got_kind != kind:
        raise ProtocolError(f"expected message kind {kind}, got {got_kind}")
    return body, struct.calcsize("<4sHB")


def serialize_request(req):
    parts = [struct.pack("<4sHB", ENVELOPE_MAGIC, ENVELOPE_VERSION,
                         _KIND_REQUEST),
             struct.pack("<BQHH", _ALGO_TAGS[req.algo], req.request_id,
                         req.n_states, req.n_actions)]
    parts += _pack_roles(req.roles)
    return _seal(parts)


def deserialize_request(data, params):
    body, off = _open(data, _KIND_REQUEST)
    tag, request_id, n_states, n_actions = struct.unpack_from("<BQHH", body,
                                                              off)
    if tag not in _TAG_ALGOS:
        raise FramingError(f"unknown algorithm tag {tag}")
    roles, off = _unpack_roles(body, off + struct.calcsize("<BQHH"), params)
    if off != len(body):
        raise FramingError("trailing bytes in request")
    return ClientRequest(algo=_TAG_ALGOS[tag], request_id=request_id,
                         roles=roles, n_states=n_states, n_actions=n_actions)


def serialize_response(resp):
    parts = [struct.pack("<4sHB", ENVELOPE_MAGIC, ENVELOPE_VERSION,
                         _KIND_RESPONSE),
             struct.pack("<QB", resp.request_id, resp.levels_consumed)]
    parts += _pack_roles(resp.results)
    return _seal(parts)


def deserialize_response(data, params):
    body, off = _open(data, _KIND_RESPONSE)
    request_id, consumed = struct.unpack_from("<QB", body, off)
    results, off = _unpack_roles(body, off + struct.calcsize("<QB"), params)
    if off != len(body):
        raise FramingError("trailing bytes in response")
    return CloudResponse(request_id=request_id, results=results,
                         levels_consumed=consumed)


def serialize_setup(params, sigma, evk_src, levels, circuit_privacy=False,
                    pk=None, pad_seed=0):
    evk_blob = ckks.serialize_evk(evk_src, levels)
    parts = [struct.pack("<4sHB", ENVELOPE_MAGIC, ENVELOPE_VERSION,
                         _KIND_SETUP),
             struct.pack("<IHH", params.n, params.base_count,
                         len(params.primes))]
    parts.append(np.array(params.primes, dtype="<u8").tobytes())
    parts.append(struct.pack("<dBq", sigma, 1 if circuit_privacy else 0,
                             pad_seed))
    pk_blob = b""
    if circuit_privacy:
        fake = ckks.Ciphertext(c0=pk[0], c1=pk[1],
                               level=params.max_level, log_scale=0.0,
                               p=0.0, B=0.0)
        pk_blob = serialize_ciphertext(fake)
    parts.append(struct.pack("<I", len(pk_blob)))
    parts.append(pk_blob)
    parts.append(struct.pack("<I", len(evk_blob)))
    parts.append(evk_blob)
    return _seal(parts)


def deserialize_setup(data):
    body, off = _open(data, _KIND_SETUP)
    n, base_count, k = struct.unpack_from("<IHH", body, off)
    off += struct.calcsize("<IHH")
    primes = tuple(int(q) for q in np.frombuffer(body, dtype="<u8", count=k,
                                                 offset=off))
    off += 8 * k
    params = RingParams(n=n, primes=primes, base_count=base_count)
    sigma, privacy, pad_seed = struct.unpack_from("<dBq", body, off)
    off += struct.calcsize("<dBq")
    (pk_len,) = struct.unpack_from("<I", body, off)
    off += 4
    pk = None
    if pk_len:
        fake = deserialize_ciphertext(body[off:off + pk_len], params)
        pk = (fake.c0, fake.c1)
        off += pk_len
    (evk_len,) = struct.unpack_from("<I", body, off)
    off += 4
    eval_keys = ckks.deserialize_evk(body[off:off + evk_len], params)
    off += evk_len
    if off != len(body):
        raise FramingError("trailing bytes in setup")
    return CloudService(params, eval_keys, circuit_privacy=bool(privacy),
                        pk=pk, pad_seed=pad_seed)


# ---------------------------------------------------------------------------
# Transports
# ---------------------------------------------------------------------------

class InProcessCloud:
    """Default mode: the cloud service runs in the client's process."""

    def __init__(self, service):
        self.service = service

    def evaluate(self, req):
        return self.service.evaluate(req)

    def close(self):
        pass


def _send_frame(sock, payload):
    sock.sendall(struct.pack("<I", len(payload)) + payload)


def _recv_frame(sock):
    header = _recv_exact(sock, 4)
    (length,) = struct.unpack("<I", header)
    return _recv_exact(sock, length)


def _recv_exact(sock, count):
    chunks = []
    while count:
        chunk = sock.recv(count)
        if not chunk:
            raise FramingError("connection closed mid-frame")
        chunks.append(chunk)
        count -= len(chunk)
    return b"".join(chunks)


def _serve_loopback(conn_pipe, host="127.0.0.1", port=0):
    listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    listener.bind((host, port))
    listener.listen(1)
    conn_pipe.send(listener.getsockname()[1])
    conn_pipe.close()
    sock, _ = listener.accept()
    service = None
    try:
        while True:
            frame = _recv_frame(sock)
            kind = frame[6] if len(frame) > 6 else 0
            if kind == _KIND_BYE:
                break
            if kind == _KIND_SETUP:
                service = deserialize_setup(frame)
                _send_frame(sock, b"ok")
            elif kind == _KIND_REQUEST:
                if service is None:
                    raise ProtocolError("request before setup")
                req = deserialize_request(frame, service.params)
                resp = service.evaluate(req)
                _send_frame(sock, serialize_response(resp))
            else:
                raise ProtocolError(f"unexpected message kind {kind}")
    finally:
        sock.close()
        listener.close()


class LoopbackCloud:
    """Two-process mode: the cloud service lives in a spawned process."""

    def __init__(self, params, sigma, evk_src, levels, circuit_privacy=False,
                 pk=None, pad_seed=0, host="127.0.0.1", port=None):
        parent, child = multiprocessing.Pipe()
        self.proc = multiprocessing.Process(
            target=_serve_loopback, args=(child, host, port or 0),
            daemon=True)
        self.proc.start()
        child.close()
        bound_port = parent.recv()
        parent.close()
        self.params = params
        self.sock = socket.create_connection((host, bound_port), timeout=120)
        _send_frame(self.sock, serialize_setup(
            params, sigma, evk_src, levels, circuit_privacy=circuit_privacy,
            pk=pk, pad_seed=pad_seed))
        ack = _recv_frame(self.sock)
        if ack != b"ok":
            raise ProtocolError("cloud setup failed")

    def evaluate(self, req):
        _send_frame(self.sock, serialize_request(req))
        return deserialize_response(_recv_frame(self.sock), self.params)

    def close(self):
        try:
            _send_frame(self.sock, _seal(
                [struct.pack("<4sHB", ENVELOPE_MAGIC, ENVELOPE_VERSION,
                             _KIND_BYE)]))
            self.sock.close()
        finally:
            self.proc.join(timeout=10)
            if self.proc.is_alive():
                self.proc.terminate()
