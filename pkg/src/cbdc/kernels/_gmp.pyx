# cython: language_level=3, boundscheck=False, wraparound=False
"""GMP-backed big-integer kernels.

Same contract as ``_pure``: every function returns exactly the value the
pure-Python backend returns for the same arguments. Only non-negative
integers cross the boundary.
"""
from cbdc.kernels._pure import SMALL_PRIMES as _PY_SMALL_PRIMES

cdef extern from "gmp.h":
    ctypedef struct __mpz_struct:
        pass
    ctypedef __mpz_struct mpz_t[1]
    ctypedef unsigned long mp_bitcnt_t

    void mpz_init(mpz_t)
    void mpz_clear(mpz_t)
    void mpz_set(mpz_t, const mpz_t)
    void mpz_set_ui(mpz_t, unsigned long)
    void mpz_import(mpz_t, size_t, int, size_t, int, size_t, const void *)
    void *mpz_export(void *, size_t *, int, size_t, int, size_t, const mpz_t)
    size_t mpz_sizeinbase(const mpz_t, int)
    void mpz_powm(mpz_t, const mpz_t, const mpz_t, const mpz_t)
    int mpz_invert(mpz_t, const mpz_t, const mpz_t)
    void mpz_mul(mpz_t, const mpz_t, const mpz_t)
    void mpz_add(mpz_t, const mpz_t, const mpz_t)
    void mpz_sub(mpz_t, const mpz_t, const mpz_t)
    void mpz_sub_ui(mpz_t, const mpz_t, unsigned long)
    void mpz_mod(mpz_t, const mpz_t, const mpz_t)
    void mpz_fdiv_q_2exp(mpz_t, const mpz_t, mp_bitcnt_t)
    mp_bitcnt_t mpz_scan1(const mpz_t, mp_bitcnt_t)
    int mpz_cmp(const mpz_t, const mpz_t)
    int mpz_cmp_ui(const mpz_t, unsigned long)
    unsigned long mpz_tdiv_ui(const mpz_t, unsigned long)


cdef unsigned long SMALL[400]
cdef int NSMALL = len(_PY_SMALL_PRIMES)
for _i, _p in enumerate(_PY_SMALL_PRIMES):
    SMALL[_i] = _p
cdef unsigned long LARGEST_SMALL = max(_PY_SMALL_PRIMES)


cdef void _load(mpz_t z, object x) except *:
    if x < 0:
        raise ValueError("negative integers are not supported")
    cdef bytes b = x.to_bytes((x.bit_length() + 7) // 8 or 1, "big")
    mpz_import(z, len(b), 1, 1, 1, 0, <const char *>b)


cdef object _store(mpz_t z):
    if mpz_cmp_ui(z, 0) == 0:
        return 0
    cdef size_t n = (mpz_sizeinbase(z, 2) + 7) // 8
    cdef size_t count = 0
    buf = bytearray(n)
    cdef char *ptr = buf
    mpz_export(ptr, &count, 1, 1, 1, 0, z)
    return int.from_bytes(buf[:count], "big")


def powmod(base, exponent, modulus):
    if exponent < 0:
        return powmod(invert(base, modulus), -exponent, modulus)
    cdef mpz_t b, e, m, r
    mpz_init(b); mpz_init(e); mpz_init(m); mpz_init(r)
    try:
        _load(b, base % modulus); _load(e, exponent); _load(m, modulus)
        mpz_powm(r, b, e, m)
        return _store(r)
    finally:
        mpz_clear(b); mpz_clear(e); mpz_clear(m); mpz_clear(r)


def invert(value, modulus):
    cdef mpz_t a, m, r
    mpz_init(a); mpz_init(m); mpz_init(r)
    try:
        _load(a, value % modulus); _load(m, modulus)
        if not mpz_invert(r, a, m):
            raise ValueError("base is not invertible for the given modulus")
        return _store(r)
    finally:
        mpz_clear(a); mpz_clear(m); mpz_clear(r)


def rsa_crt(x, p, q, dp, dq, qinv):
    cdef mpz_t zx, zp, zq, zdp, zdq, zqi, m1, m2, h
    mpz_init(zx); mpz_init(zp); mpz_init(zq); mpz_init(zdp); mpz_init(zdq)
    mpz_init(zqi); mpz_init(m1); mpz_init(m2); mpz_init(h)
    try:
        _load(zx, x); _load(zp, p); _load(zq, q)
        _load(zdp, dp); _load(zdq, dq); _load(zqi, qinv)
        mpz_powm(m1, zx, zdp, zp)
        mpz_powm(m2, zx, zdq, zq)
        mpz_sub(h, m1, m2)
        mpz_mul(h, h, zqi)
        mpz_mod(h, h, zp)
        mpz_mul(h, h, zq)
        mpz_add(h, h, m2)
        return _store(h)
    finally:
        mpz_clear(zx); mpz_clear(zp); mpz_clear(zq); mpz_clear(zdp); mpz_clear(zdq)
        mpz_clear(zqi); mpz_clear(m1); mpz_clear(m2); mpz_clear(h)


def is_probable_prime(n, int rounds=32):
    if n < 2:
        return False
    if n <= LARGEST_SMALL:
        return n in _PY_SMALL_PRIMES
    cdef mpz_t zn, d, nm1, a, x
    cdef int i, j, s
    cdef bint composite
    mpz_init(zn); mpz_init(d); mpz_init(nm1); mpz_init(a); mpz_init(x)
    try:
        _load(zn, n)
        for i in range(NSMALL):
            if mpz_tdiv_ui(zn, SMALL[i]) == 0:
                return False
        mpz_sub_ui(nm1, zn, 1)
        s = mpz_scan1(nm1, 0)
        mpz_fdiv_q_2exp(d, nm1, s)
        for i in range(min(rounds, NSMALL)):
            mpz_set_ui(a, SMALL[i])
            mpz_powm(x, a, d, zn)
            if mpz_cmp_ui(x, 1) == 0 or mpz_cmp(x, nm1) == 0:
                continue
            composite = True
            for j in range(s - 1):
                mpz_mul(x, x, x)
                mpz_mod(x, x, zn)
                if mpz_cmp(x, nm1) == 0:
                    composite = False
                    break
            if composite:
                return False
        return True
    finally:
        mpz_clear(zn); mpz_clear(d); mpz_clear(nm1); mpz_clear(a); mpz_clear(x)
