# cython: boundscheck=False, wraparound=False
"""Compiled canonical codec; byte-for-byte identical to cbdc.encoding's Python path."""
from cbdc.errors import DecodeError


cdef inline void _put_u32(bytearray out, Py_ssize_t n) except *:
    out += (<unsigned int>n).to_bytes(4, "big")


cdef void _enc(object value, bytearray out) except *:
    cdef type t = type(value)
    if t is tuple or t is list:
        out.append(5)
        _put_u32(out, len(value))
        for item in value:
            _enc(item, out)
    elif t is bytes:
        out.append(3)
        _put_u32(out, len(<bytes>value))
        out += <bytes>value
    elif t is int:
        if value < 0:
            raise ValueError("negative integers have no canonical encoding")
        raw = (<object>value).to_bytes(((<object>value).bit_length() + 7) // 8, "big")
        out.append(2)
        _put_u32(out, len(raw))
        out += raw
    elif t is str:
        raw = (<str>value).encode("utf-8")
        out.append(4)
        _put_u32(out, len(raw))
        out += raw
    elif value is None:
        out.append(0)
    elif t is bool:
        out.append(1)
        out.append(1 if value else 0)
    elif isinstance(value, bool):
        out.append(1)
        out.append(1 if value else 0)
    elif isinstance(value, int):
        _enc(int(value), out)
    elif isinstance(value, (bytes, bytearray)):
        _enc(bytes(value), out)
    elif isinstance(value, str):
        _enc(str(value), out)
    elif isinstance(value, (tuple, list)):
        _enc(tuple(value), out)
    else:
        raise TypeError(f"cannot encode {type(value).__name__}")


def encode(value):
    cdef bytearray out = bytearray()
    _enc(value, out)
    return bytes(out)


cdef inline Py_ssize_t _u32(const unsigned char[:] buf, Py_ssize_t pos, Py_ssize_t size) except -1:
    if pos + 4 > size:
        raise DecodeError("malformed encoding: truncated length")
    return (<Py_ssize_t>buf[pos] << 24) | (<Py_ssize_t>buf[pos + 1] << 16) | (<Py_ssize_t>buf[pos + 2] << 8) | buf[pos + 3]


cdef object _dec(object data, const unsigned char[:] buf, Py_ssize_t size, Py_ssize_t* pos):
    cdef Py_ssize_t p = pos[0]
    cdef Py_ssize_t n, end, i
    cdef unsigned char tag
    if p >= size:
        raise DecodeError("malformed encoding: truncated")
    tag = buf[p]
    p += 1
    if tag == 5:
        n = _u32(buf, p, size)
        p += 4
        items = []
        pos[0] = p
        for i in range(n):
            items.append(_dec(data, buf, size, pos))
        return tuple(items)
    if tag == 2 or tag == 3 or tag == 4:
        n = _u32(buf, p, size)
        p += 4
        end = p + n
        if end > size:
            raise DecodeError("length overruns buffer")
        pos[0] = end
        if tag == 3:
            return bytes(data[p:end])
        if tag == 2:
            if n and buf[p] == 0:
                raise DecodeError("non-minimal integer")
            return int.from_bytes(data[p:end], "big")
        try:
            return bytes(data[p:end]).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DecodeError(f"malformed encoding: {exc}") from None
    if tag == 0:
        pos[0] = p
        return None
    if tag == 1:
        if p >= size:
            raise DecodeError("malformed encoding: truncated")
        if buf[p] > 1:
            raise DecodeError("bad bool")
        pos[0] = p + 1
        return buf[p] == 1
    raise DecodeError(f"unknown tag {tag}")


def decode(data):
    cdef const unsigned char[:] buf = data
    cdef Py_ssize_t size = len(data)
    cdef Py_ssize_t pos = 0
    value = _dec(data, buf, size, &pos)
    if pos != size:
        raise DecodeError(f"{size - pos} trailing bytes")
    return value
