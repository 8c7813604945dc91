"""Deterministic RSA key generation on top of the big-integer kernels."""
from dataclasses import dataclass
from math import gcd

from cbdc import kernels

PUBLIC_EXPONENT = 65537


@dataclass(frozen=True, repr=False)
class RsaPrivate:
    n: int
    e: int
    d: int
    p: int
    q: int
    dp: int
    dq: int
    qinv: int

    def __repr__(self):
        return f"RsaPrivate(bits={self.n.bit_length()})"

    def power(self, x):
        """x^d mod n using CRT."""
        return kernels.rsa_crt(x, self.p, self.q, self.dp, self.dq, self.qinv)


def generate_prime(bits, rng):
    """Random prime of exactly ``bits`` bits with the top two bits set."""
    if bits < 16:
        raise ValueError("prime too small")
    top = (1 << (bits - 1)) | (1 << (bits - 2))
    while True:
        candidate = rng.getrandbits(bits) | top | 1
        # incremental search; restart if the window overflows the bit length
        for _ in range(4 * bits):
            if candidate.bit_length() != bits:
                break
            if kernels.is_probable_prime(candidate):
                return candidate
            candidate += 2


def generate_rsa(bits, rng, e=PUBLIC_EXPONENT):
    """Modulus of exactly ``bits`` bits, ``e*d = 1 mod lcm(p-1, q-1)``."""
    half = bits // 2
    while True:
        p = generate_prime(half, rng)
        q = generate_prime(bits - half, rng)
        if p == q or gcd(e, p - 1) != 1 or gcd(e, q - 1) != 1:
            continue
        n = p * q
        if n.bit_length() != bits:
            continue
        lam = (p - 1) * (q - 1) // gcd(p - 1, q - 1)
        d = kernels.invert(e, lam)
        if p < q:
            p, q = q, p
        return RsaPrivate(
            n=n,
            e=e,
            d=d,
            p=p,
            q=q,
            dp=d % (p - 1),
            dq=d % (q - 1),
            qinv=kernels.invert(q, p),
        )
