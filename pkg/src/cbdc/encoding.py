"""Canonical serialization.

Every value that is hashed, signed or sent between nodes goes through
:func:`encode`. The format is a tagged, length-prefixed byte string:

    None   00
    bool   01 <0|1>
    int    02 <u32 length> <big-endian magnitude, minimal, empty for 0>
    bytes  03 <u32 length> <data>
    str    04 <u32 length> <utf-8>
    list   05 <u32 count> <items...>

Only non-negative integers are representable. Tuples and lists encode
identically and decode as tuples. A compiled codec replaces :func:`encode`
and :func:`decode` when it is available; ``encode_py``/``decode_py`` remain
the reference.
"""
import hashlib
import struct

from cbdc import kernels
from cbdc.errors import DecodeError

_U32 = struct.Struct(">I")
_pack = _U32.pack


def encode(value):
    out = []
    _encode_into(value, out)
    return b"".join(out)


def _enc_int(value, out):
    if value < 0:
        raise ValueError("negative integers have no canonical encoding")
    raw = value.to_bytes((value.bit_length() + 7) // 8, "big")
    out.append(b"\x02" + _pack(len(raw)) + raw)


def _enc_bytes(value, out):
    out.append(b"\x03" + _pack(len(value)) + bytes(value))


def _enc_str(value, out):
    raw = value.encode("utf-8")
    out.append(b"\x04" + _pack(len(raw)) + raw)


def _enc_seq(value, out):
    out.append(b"\x05" + _pack(len(value)))
    for item in value:
        _ENCODERS.get(type(item), _encode_slow)(item, out)


def _enc_none(value, out):
    out.append(b"\x00")


def _enc_bool(value, out):
    out.append(b"\x01\x01" if value else b"\x01\x00")


_ENCODERS = {
    int: _enc_int,
    bytes: _enc_bytes,
    bytearray: _enc_bytes,
    str: _enc_str,
    tuple: _enc_seq,
    list: _enc_seq,
    type(None): _enc_none,
    bool: _enc_bool,
}


def _encode_slow(value, out):
    # subclasses (IntEnum and friends) fall back to an isinstance walk
    for kind in (bool, int, bytes, bytearray, str, tuple, list):
        if isinstance(value, kind):
            _ENCODERS[kind](value, out)
            return
    raise TypeError(f"cannot encode {type(value).__name__}")


def _encode_into(value, out):
    _ENCODERS.get(type(value), _encode_slow)(value, out)


def decode(data):
    try:
        value, end = _decode_at(data, 0)
    except (IndexError, struct.error, UnicodeDecodeError) as exc:
        raise DecodeError(f"malformed encoding: {exc}") from None
    if end != len(data):
        raise DecodeError(f"{len(data) - end} trailing bytes")
    return value


def _decode_at(data, pos, _unpack=_U32.unpack_from, _from_bytes=int.from_bytes):
    tag = data[pos]
    pos += 1
    if tag == 5:
        (count,) = _unpack(data, pos)
        pos += 4
        items = []
        append = items.append
        for _ in range(count):
            item, pos = _decode_at(data, pos)
            append(item)
        return tuple(items), pos
    if tag in (2, 3, 4):
        (length,) = _unpack(data, pos)
        pos += 4
        end = pos + length
        if end > len(data):
            raise DecodeError("length overruns buffer")
        if tag == 3:
            return bytes(data[pos:end]), end
        if tag == 2:
            if length and data[pos] == 0:
                raise DecodeError("non-minimal integer")
            return _from_bytes(data[pos:end], "big"), end
        return bytes(data[pos:end]).decode("utf-8"), end
    if tag == 0:
        return None, pos
    if tag == 1:
        flag = data[pos]
        if flag > 1:
            raise DecodeError("bad bool")
        return flag == 1, pos + 1
    raise DecodeError(f"unknown tag {tag}")


# pure-Python reference implementations, kept for backend comparisons
encode_py = encode
decode_py = decode
if kernels.CODEC is not None:
    encode = kernels.CODEC.encode  # noqa: F811
    decode = kernels.CODEC.decode  # noqa: F811


def sha256(*parts):
    h = hashlib.sha256()
    for part in parts:
        h.update(part)
    return h.digest()


def digest(value):
    """SHA-256 of the canonical encoding of ``value``."""
    return hashlib.sha256(encode(value)).digest()


def int_to_fixed(value, width):
    return value.to_bytes(width, "big")


def fixed_to_int(raw):
    return int.from_bytes(raw, "big")
