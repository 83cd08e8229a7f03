#!/usr/bin/env python3
"""Regenerates the frozen wire-format fixtures under tests/data/.

Run only when the wire format version changes; committed fixtures pin the
format so accidental changes fail the protocol tests.
"""

import math
import pathlib

import numpy as np

from herl import ckks, protocol
from herl.backend import EncryptedBackend
from herl.mdp import TransitionSample
from herl.ring import RingParams

OUT = pathlib.Path(__file__).resolve().parent.parent / "tests" / "data"

PARAMS = RingParams.generate(256, [40, 40], [40, 40])
SIGMA = 8 / math.sqrt(2 * math.pi)
KEY_SEED = 2024
BACKEND_SEED = 31337


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    keys = ckks.keygen(PARAMS, SIGMA, seed=KEY_SEED)
    backend = EncryptedBackend(PARAMS, keys, seed=BACKEND_SEED, work_level=2)
    h = TransitionSample(s=3, a=2, r=-0.25, s_next=4)
    table = np.linspace(-1.0, 1.0, 36)
    req = protocol.client_prepare("td0", h, table, alpha=0.5, gamma=0.9,
                                  enc_backend=backend, request_id=7)
    req_bytes = protocol.serialize_request(req)
    (OUT / "golden_td0_request.bin").write_bytes(req_bytes)

    service = protocol.CloudService(PARAMS, backend.eval_keys)
    resp = service.evaluate(req)
    resp_bytes = protocol.serialize_response(resp)
    (OUT / "golden_td0_response.bin").write_bytes(resp_bytes)
    print(f"wrote {len(req_bytes)} request bytes, {len(resp_bytes)} "
          f"response bytes to {OUT}")


if __name__ == "__main__":
    main()
