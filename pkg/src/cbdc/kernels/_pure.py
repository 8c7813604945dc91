"""Pure-Python big-integer kernels (reference backend)."""
from math import gcd


def _small_primes(limit):
    sieve = bytearray([1]) * limit
    sieve[0:2] = b"\x00\x00"
    for i in range(2, int(limit**0.5) + 1):
        if sieve[i]:
            sieve[i * i :: i] = bytearray(len(sieve[i * i :: i]))
    return tuple(i for i, flag in enumerate(sieve) if flag)


SMALL_PRIMES = _small_primes(2000)
_PRIMORIAL = 1
for _p in SMALL_PRIMES:
    _PRIMORIAL *= _p
del _p


def powmod(base, exponent, modulus):
    return pow(base, exponent, modulus)


def invert(value, modulus):
    return pow(value, -1, modulus)


def rsa_crt(x, p, q, dp, dq, qinv):
    """x^d mod pq via the Chinese remainder theorem."""
    m1 = pow(x, dp, p)
    m2 = pow(x, dq, q)
    h = (qinv * (m1 - m2)) % p
    return m2 + h * q


def is_probable_prime(n, rounds=32):
    if n < 2:
        return False
    if n <= SMALL_PRIMES[-1]:
        return n in SMALL_PRIMES
    if gcd(n, _PRIMORIAL) != 1:
        return False
    d = n - 1
    s = 0
    while not d & 1:
        d >>= 1
        s += 1
    for a in SMALL_PRIMES[:rounds]:
        x = pow(a, d, n)
        if x == 1 or x == n - 1:
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True
