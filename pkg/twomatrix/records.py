"""JSON encodings shared by every output file: complex numbers travel as [re, im]."""
import hashlib
import json

import numpy as np


def encode_complex(z):
    z = complex(z)
    return [z.real, z.imag]


def decode_complex(value):
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ValueError(f"complex value must be [re, im], got {value!r}")
        return complex(float(value[0]), float(value[1]))
    if isinstance(value, bool):
        raise ValueError("booleans are not numbers")
    return complex(value)


def encode_array(values):
    arr = np.asarray(values, dtype=complex)
    if arr.ndim == 0:
        return encode_complex(arr)
    return [encode_array(v) for v in arr]


def decode_array(values):
    def walk(v):
        if isinstance(v, (list, tuple)) and len(v) == 2 and not isinstance(v[0], (list, tuple)):
            return decode_complex(v)
        if isinstance(v, (list, tuple)):
            return [walk(x) for x in v]
        return decode_complex(v)

    return np.array(walk(values), dtype=complex)


def dumps(obj):
    return json.dumps(obj, sort_keys=True, indent=2)


def digest(obj):
    """Stable sha256 of a JSON-serialisable object."""
    canonical = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
