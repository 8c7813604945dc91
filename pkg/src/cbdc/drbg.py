"""Deterministic randomness derived from a single seed.

``HashDrbg`` is a SHA-256 counter-mode generator exposed through the
:class:`random.Random` interface, so ``randrange``, ``shuffle``, ``randbytes``
and friends all draw from the hash stream. It is used wherever key material
must be reproducible from a seed. Simulation noise uses the faster
``random.Random`` seeded through :func:`derive_seed`.
"""
import hashlib
import random

from cbdc.encoding import encode


def _seed_bytes(seed, label):
    return hashlib.sha256(b"cbdc-drbg\x00" + encode((_norm(seed), _norm(label)))).digest()


def _norm(value):
    if isinstance(value, (list, tuple)):
        return tuple(_norm(v) for v in value)
    if isinstance(value, int) and not isinstance(value, bool) and value < 0:
        return ("neg", -value)
    return value


def derive_seed(seed, label=""):
    """Derive an independent 64-bit integer seed for ``label``."""
    return int.from_bytes(_seed_bytes(seed, label)[:8], "big")


class HashDrbg(random.Random):
    def __new__(cls, *args, **kwargs):
        return super().__new__(cls)

    def __init__(self, seed, label=""):
        self._key = _seed_bytes(seed, label)
        self._counter = 0
        self._buffer = b""
        super().__init__(0)

    def seed(self, *args, **kwargs):
        # the stream is fixed by the constructor key
        pass

    def getstate(self):
        raise NotImplementedError("HashDrbg state is not exportable")

    def setstate(self, state):
        raise NotImplementedError("HashDrbg state is not importable")

    def _take(self, n):
        while len(self._buffer) < n:
            block = hashlib.sha256(self._key + self._counter.to_bytes(8, "big")).digest()
            self._counter += 1
            self._buffer += block
        out, self._buffer = self._buffer[:n], self._buffer[n:]
        return out

    def getrandbits(self, k):
        if k < 0:
            raise ValueError("number of bits must be non-negative")
        if k == 0:
            return 0
        nbytes = (k + 7) // 8
        return int.from_bytes(self._take(nbytes), "big") >> (nbytes * 8 - k)

    def random(self):
        return self.getrandbits(53) * (2.0**-53)

    def randbytes(self, n):
        return self._take(n)
