"""Counter-based normal variates (Philox4x32-10, inverse-CDF transform).

Every variate is a pure function of ``(seed, stream, path, step, component)``,
so simulations give bit-identical output however paths are split across
workers.
"""

import numpy as np
from scipy.special import ndtri

__all__ = ["philox4x32", "uniforms", "normals"]

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK = np.uint64(0xFFFFFFFF)
_SHIFT = np.uint64(32)


def philox4x32(counter, key, rounds=10):
    """Philox4x32 block function.

    Parameters
    ----------
    counter : array_like of uint32, shape (4, n)
    key : array_like of uint32, shape (2,) or (2, n)

    Returns
    -------
    ndarray of uint32, shape (4, n)
    """
    return np.stack(_philox_u64(counter, key, rounds)).astype(np.uint32)


def _philox_u64(counter, key, rounds=10):
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) for c in counter)
    k0, k1 = (np.asarray(k, dtype=np.uint64) for k in key)
    for r in range(rounds):
        if r:
            k0 = (k0 + _W0) & _MASK
            k1 = (k1 + _W1) & _MASK
        p0 = _M0 * c0
        p1 = _M1 * c2
        c0, c1, c2, c3 = (
            (p1 >> _SHIFT) ^ c1 ^ k0,
            p1 & _MASK,
            (p0 >> _SHIFT) ^ c3 ^ k1,
            p0 & _MASK,
        )
    return c0, c1, c2, c3


def _key(seed):
    seed = int(seed)
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be in [0, 2**64), got {seed}")
    return np.uint64(seed & 0xFFFFFFFF), np.uint64(seed >> 32)


def uniforms(seed, stream, paths, step, block=0):
    """Two uniforms in the open interval (0, 1) per path, shape ``(n, 2)``."""
    paths = np.asarray(paths, dtype=np.uint64)
    n = paths.shape[0]
    ctr = (
        np.full(n, step, dtype=np.uint64),
        paths & _MASK,
        np.full(n, stream, dtype=np.uint64) & _MASK,
        np.full(n, block, dtype=np.uint64) & _MASK,
    )
    w = _philox_u64(ctr, _key(seed))
    out = np.empty((n, 2))
    for j, (a, b) in enumerate(((0, 1), (2, 3))):
        bits = ((w[a] >> np.uint64(5)) << np.uint64(26)) | (w[b] >> np.uint64(6))
        out[:, j] = (bits.astype(np.float64) + 0.5) * 2.0**-53
    return out


def normals(seed, stream, paths, step, dim):
    """Standard normals of shape ``(len(paths), dim)`` for one time step."""
    blocks = [uniforms(seed, stream, paths, step, block=j) for j in range((dim + 1) // 2)]
    u = np.concatenate(blocks, axis=1)[:, :dim]
    return ndtri(u)
