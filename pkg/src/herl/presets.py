"""Encryption parameter presets.

paper-td0 / paper-z mirror the reported simulation parameters (N, total
modulus bits, sigma); desk is a smaller preset for quick local runs at the
same default scale. Chains are split into never-dropped base primes (message
capacity at level 0) plus ~40-bit rescaling primes, one per usable level.
The desk preset is NOT a secure parameter set; the paper presets adopt the
reported sizes without independent security estimation.
"""

import math
from dataclasses import dataclass

from herl.ring import RingParams

SIGMA_DEFAULT = 8.0 / math.sqrt(2.0 * math.pi)
LOG_SCALE_DEFAULT = 40.0


@dataclass(frozen=True)
class Preset:
    name: str
    n: int
    base_bits: tuple
    rescale_bits: tuple
    sigma: float = SIGMA_DEFAULT
    log_scale: float = LOG_SCALE_DEFAULT

    @property
    def total_bits(self):
        return sum(self.base_bits) + sum(self.rescale_bits)

    @property
    def depth_budget(self):
        return len(self.rescale_bits)

    def ring_params(self):
        return RingParams.generate(self.n, self.base_bits, self.rescale_bits)


PRESETS = {
    "paper-td0": Preset("paper-td0", n=8192, base_bits=(30, 29),
                        rescale_bits=(40,) * 4),
    "paper-z": Preset("paper-z", n=16384, base_bits=(41, 40, 40),
                      rescale_bits=(40,) * 8),
    "desk": Preset("desk", n=4096, base_bits=(40, 40),
                   rescale_bits=(40,) * 5),
}

_params_cache: dict = {}


def get_preset(name):
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choices: {sorted(PRESETS)}")


def preset_params(name):
    """RingParams for a preset (cached: prime search runs once)."""
    if name not in _params_cache:
        _params_cache[name] = get_preset(name).ring_params()
    return _params_cache[name]
