import pytest
from hypothesis import given
from hypothesis import strategies as st

from cbdc import kernels
from cbdc.kernels import _pure

backends = list(kernels.BACKENDS.items())
ids = [name for name, _ in backends]

# 40th Mersenne exponent region is too big; use well-known primes and composites.
KNOWN_PRIMES = [2, 3, 1999, 2003, 2**61 - 1, 2**89 - 1, 2**127 - 1]
KNOWN_COMPOSITES = [0, 1, 4, 2001, 561, 41041, 3215031751, (2**61 - 1) * (2**31 - 1), 2**127 + 1]


@pytest.mark.parametrize("impl", [b for _, b in backends], ids=ids)
def test_primality(impl):
    assert all(impl.is_probable_prime(p) for p in KNOWN_PRIMES)
    assert not any(impl.is_probable_prime(c) for c in KNOWN_COMPOSITES)


@given(st.integers(0, 2**300), st.integers(0, 2**300), st.integers(2, 2**300))
def test_powmod_backends_agree(b, e, m):
    expected = pow(b, e, m)
    for _, impl in backends:
        assert impl.powmod(b, e, m) == expected


@given(st.integers(1, 2**256), st.integers(3, 2**256))
def test_invert_backends_agree(a, m):
    from math import gcd
    if gcd(a, m) != 1:
        return
    for _, impl in backends:
        inv = impl.invert(a, m)
        assert inv * a % m == 1 and 0 <= inv < m


@given(st.integers(1, 2**64))
def test_is_probable_prime_backends_agree(n):
    results = {impl.is_probable_prime(n) for _, impl in backends}
    assert len(results) == 1


def test_rsa_crt_matches_plain_exponent():
    from cbdc.drbg import HashDrbg
    from cbdc.rsakeys import generate_rsa
    key = generate_rsa(512, HashDrbg(3, "crt"))
    for x in (0, 1, 2, key.n - 1, 123456789):
        expected = pow(x, key.d, key.n)
        for _, impl in backends:
            assert impl.rsa_crt(x, key.p, key.q, key.dp, key.dq, key.qinv) == expected


def test_pure_fallback_always_present():
    assert kernels.BACKENDS["python"] is _pure
    assert kernels.BACKEND in ("gmp", "python")
