"""Compare compiled kernels against their pure-Python fallbacks.

Usage:
    python3 benchmarks/bench_kernels.py [--repeat 5] [--bits 512]

Each row times one kernel on fixed inputs under both backends and reports
the speedup. Backends missing from this build are reported as such.
"""
import argparse
import logging
import random
import timeit

from cbdc import encoding, kernels
from cbdc.kernels import _pure

log = logging.getLogger("bench_kernels")


def rsa_inputs(bits, rng):
    half = bits // 2

    def prime():
        while True:
            p = rng.getrandbits(half) | (1 << (half - 1)) | 1
            if _pure.is_probable_prime(p):
                return p

    p, q = prime(), prime()
    n, phi = p * q, (p - 1) * (q - 1)
    d = pow(65537, -1, phi)
    return {
        "n": n, "d": d, "p": p, "q": q,
        "dp": d % (p - 1), "dq": d % (q - 1), "qinv": pow(q, -1, p),
        "x": rng.randrange(2, n),
    }


def sample_entry(rng):
    # shaped like a ledger withdrawal payload: nested tuples of ints and bytes
    blinded = tuple((rng.randbytes(32), rng.getrandbits(512)) for _ in range(16))
    return ("withdrawal", 7, "msb2", rng.randbytes(32), blinded, None, True, 10**12)


def cases(bits, rng):
    k = rsa_inputs(bits, rng)
    entry = sample_entry(rng)
    wire = encoding.encode_py(entry)
    return [
        ("powmod", lambda impl: impl.powmod(k["x"], k["d"], k["n"]), "bigint"),
        ("rsa_crt", lambda impl: impl.rsa_crt(k["x"], k["p"], k["q"], k["dp"], k["dq"], k["qinv"]), "bigint"),
        ("invert", lambda impl: impl.invert(k["x"], k["n"]), "bigint"),
        ("is_probable_prime", lambda impl: impl.is_probable_prime(k["p"]), "bigint"),
        ("encode", lambda impl: impl.encode(entry), "codec"),
        ("decode", lambda impl: impl.decode(wire), "codec"),
    ]


def backends(kind):
    if kind == "bigint":
        return _pure, kernels.BACKENDS.get("gmp")
    pure = argparse.Namespace(encode=encoding.encode_py, decode=encoding.decode_py)
    return pure, kernels.CODEC


def per_call(fn, repeat):
    timer = timeit.Timer(fn)
    number, _ = timer.autorange()
    return min(timer.repeat(repeat, number)) / number


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--bits", type=int, default=512)
    parser.add_argument("--seed", type=int, default=1)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    rng = random.Random(args.seed)
    print(f"{'kernel':<18} {'python us':>10} {'compiled us':>12} {'speedup':>8}")
    for name, call, kind in cases(args.bits, rng):
        pure, compiled = backends(kind)
        slow = per_call(lambda: call(pure), args.repeat)
        if compiled is None:
            print(f"{name:<18} {slow * 1e6:>10.2f} {'missing':>12} {'-':>8}")
            continue
        if call(pure) != call(compiled):
            raise SystemExit(f"{name}: backends disagree")
        fast = per_call(lambda: call(compiled), args.repeat)
        print(f"{name:<18} {slow * 1e6:>10.2f} {fast * 1e6:>12.2f} {slow / fast:>7.1f}x")
    log.info("active backends: bigint=%s codec=%s", kernels.BACKEND,
             "compiled" if kernels.CODEC is not None else "python")


if __name__ == "__main__":
    main()
