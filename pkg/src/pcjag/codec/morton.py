"""Morton (Z-order) codes. Within each bit level x is the most significant
of the three interleaved bits, so the low three bits of a code form the
octree child index ``(x << 2) | (y << 1) | z``."""

import numpy as np


def morton_encode(coords, bits: int = 16) -> np.ndarray:
    c = np.asarray(coords, dtype=np.int64).reshape(-1, 3)
    code = np.zeros(len(c), dtype=np.int64)
    for b in range(bits - 1, -1, -1):
        code = (code << 3) | (((c[:, 0] >> b) & 1) << 2) | (((c[:, 1] >> b) & 1) << 1) | ((c[:, 2] >> b) & 1)
    return code


def morton_decode(codes, bits: int = 16) -> np.ndarray:
    k = np.asarray(codes, dtype=np.int64)
    out = np.zeros((len(k), 3), dtype=np.int64)
    for b in range(bits):
        out[:, 0] |= ((k >> (3 * b + 2)) & 1) << b
        out[:, 1] |= ((k >> (3 * b + 1)) & 1) << b
        out[:, 2] |= ((k >> (3 * b)) & 1) << b
    return out


def morton_order(coords, bits: int = 16) -> np.ndarray:
    return np.argsort(morton_encode(coords, bits), kind="stable")
