"""Counter-based random streams for reproducible matrix-free simulation.

Every random variate the simulator consumes is addressed, not drawn: a
Philox-4x32 block cipher (10 rounds) maps a 128-bit counter and a 64-bit key
to four 32-bit words, each word becomes a uniform in (0,1) via
u = (word + 0.5) * 2^-32, and normals come from the PPND16 rational
approximation of the normal quantile (max abs error well under 1e-9). Any
weight row, bias vector, or input sign can therefore be regenerated in
isolation, on any worker, in any order, with bit-identical results.

Counter layout (32-bit fields):
    c0 = block index within the stream (4 variates per block)
    c1 = row index (0 when the stream is not per-row)
    c2 = trial index
    c3 = purpose << 16 | layer
Key = the 64-bit master seed split into two 32-bit words.

A numba-compiled kernel fuses generation, quantile transform, and the dot
product for the forward pass; a pure-numpy fallback produces the identical
streams (dot-product reassociation aside) when numba is unavailable.
"""
from __future__ import annotations

import numpy as np

PURPOSE_WEIGHT = 0
PURPOSE_BIAS = 1
PURPOSE_INPUT = 2

_MASK32 = 0xFFFFFFFF
_M0 = 0xD2511F53
_M1 = 0xCD9E8D57
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85

_U01_SCALE = 2.0 ** -32

# PPND16 rational-approximation coefficients (central / middle / far tail).
_PA = (
    3.3871328727963666080e0, 1.3314166789178437745e2, 1.9715909503065514427e3,
    1.3731693765509461125e4, 4.5921953931549871457e4, 6.7265770927008700853e4,
    3.3430575583588128105e4, 2.5090809287301226727e3,
)
_PB = (
    4.2313330701600911252e1, 6.8718700749205790830e2, 5.3941960214247511077e3,
    2.1213794301586595867e4, 3.9307895800092710610e4, 2.8729085735721942674e4,
    5.2264952788528545610e3,
)
_PC = (
    1.42343711074968357734e0, 4.63033784615654529590e0, 5.76949722146069140550e0,
    3.64784832476320460504e0, 1.27045825245236838258e0, 2.41780725177450611770e-1,
    2.27238449892691845833e-2, 7.74545014278341407640e-4,
)
_PD = (
    2.05319162663775882187e0, 1.67638483018380384940e0, 6.89767334985100004550e-1,
    1.48103976427480074590e-1, 1.51986665636164571966e-2, 5.47593808499534494600e-4,
    1.05075007164441684324e-9,
)
_PE = (
    6.65790464350110377720e0, 5.46378491116411436990e0, 1.78482653991729133580e0,
    2.96560571828504891230e-1, 2.65321895265761230930e-2, 1.24266094738807843860e-3,
    2.71155556874348757815e-5, 2.01033439929228813265e-7,
)
_PF = (
    5.99832206555887937690e-1, 1.36929880922735805310e-1, 1.48753612908506148525e-2,
    7.86869131145613259100e-4, 1.84631831751005468180e-5, 1.42151175831644588870e-7,
    2.04426310338993978564e-15,
)


def split_seed(seed: int) -> tuple[int, int]:
    if not (0 <= seed < 2**64):
        raise ValueError("seed must be a 64-bit unsigned integer")
    return seed & _MASK32, (seed >> 32) & _MASK32


def counter_word3(purpose: int, layer: int) -> int:
    if not (0 <= layer <= 0xFFFF):
        raise ValueError("layer index exceeds the 16-bit counter field")
    return (purpose << 16) | layer


def philox4x32_10(counter: tuple[int, int, int, int], key: tuple[int, int]) -> tuple[int, int, int, int]:
    """Reference block function; matches the published test vectors."""
    c0, c1, c2, c3 = (c & _MASK32 for c in counter)
    k0, k1 = key[0] & _MASK32, key[1] & _MASK32
    for _ in range(10):
        p0 = _M0 * c0
        p1 = _M1 * c2
        c0, c1, c2, c3 = ((p1 >> 32) ^ c1 ^ k0, p1 & _MASK32, (p0 >> 32) ^ c3 ^ k1, p0 & _MASK32)
        k0 = (k0 + _W0) & _MASK32
        k1 = (k1 + _W1) & _MASK32
    return c0, c1, c2, c3


def _philox_blocks(c0: np.ndarray, c1: int, c2: int, c3: int, k0: int, k1: int) -> np.ndarray:
    """Vectorized block function over an array of c0 values -> (len, 4) words."""
    m0 = np.uint64(_M0)
    m1 = np.uint64(_M1)
    w0 = np.uint64(_W0)
    w1 = np.uint64(_W1)
    mask = np.uint64(_MASK32)
    shift = np.uint64(32)
    x0 = c0.astype(np.uint64)
    n = x0.shape[0]
    x1 = np.full(n, np.uint64(c1))
    x2 = np.full(n, np.uint64(c2))
    x3 = np.full(n, np.uint64(c3))
    key0 = np.uint64(k0)
    key1 = np.uint64(k1)
    for _ in range(10):
        p0 = m0 * x0
        p1 = m1 * x2
        x0, x1, x2, x3 = ((p1 >> shift) ^ x1 ^ key0, p1 & mask, (p0 >> shift) ^ x3 ^ key1, p0 & mask)
        key0 = (key0 + w0) & mask
        key1 = (key1 + w1) & mask
    return np.stack([x0, x1, x2, x3], axis=1)


def _uniform_words(n: int, row: int, trial: int, purpose: int, layer: int, seed: int) -> np.ndarray:
    k0, k1 = split_seed(seed)
    blocks = (n + 3) // 4
    words = _philox_blocks(np.arange(blocks, dtype=np.uint64), row, trial, counter_word3(purpose, layer), k0, k1)
    return (words.reshape(-1)[:n].astype(np.float64) + 0.5) * _U01_SCALE


def normal_quantile(p):
    """PPND16 inverse of the standard normal CDF, elementwise."""
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0.0) | (p >= 1.0)):
        raise ValueError("p must lie strictly inside (0, 1)")
    out = np.empty_like(p)
    q = p - 0.5
    central = np.abs(q) <= 0.425
    if central.any():
        r = 0.180625 - q[central] * q[central]
        num = _PA[7]
        for a in _PA[6::-1]:
            num = num * r + a
        den = _PB[6]
        for b in _PB[5::-1]:
            den = den * r + b
        den = den * r + 1.0
        out[central] = q[central] * num / den
    tail = ~central
    if tail.any():
        qt = q[tail]
        r = np.where(qt < 0.0, p[tail], 1.0 - p[tail])
        r = np.sqrt(-np.log(r))
        mid = r <= 5.0
        val = np.empty_like(r)
        if mid.any():
            rr = r[mid] - 1.6
            num = _PC[7]
            for c in _PC[6::-1]:
                num = num * rr + c
            den = _PD[6]
            for d in _PD[5::-1]:
                den = den * rr + d
            den = den * rr + 1.0
            val[mid] = num / den
        far = ~mid
        if far.any():
            rr = r[far] - 5.0
            num = _PE[7]
            for e in _PE[6::-1]:
                num = num * rr + e
            den = _PF[6]
            for f in _PF[5::-1]:
                den = den * rr + f
            den = den * rr + 1.0
            val[far] = num / den
        out[tail] = np.where(qt < 0.0, -val, val)
    return out if out.ndim else float(out)


def weight_normals(seed: int, trial: int, layer: int, row: int, n: int) -> np.ndarray:
    """Standard normals for row `row` of the layer's weight matrix."""
    return normal_quantile(_uniform_words(n, row, trial, PURPOSE_WEIGHT, layer, seed))


def bias_normals(seed: int, trial: int, layer: int, n: int) -> np.ndarray:
    return normal_quantile(_uniform_words(n, 0, trial, PURPOSE_BIAS, layer, seed))


def input_signs(seed: int, n: int) -> np.ndarray:
    """Quenched +-1 vector derived from its own seed; no trial component."""
    u = _uniform_words(n, 0, 0, PURPOSE_INPUT, 0, seed)
    return np.where(u < 0.5, -1.0, 1.0)


def _layer_preacts_numpy(x: np.ndarray, seed: int, trial: int, layer: int,
                         w_scale: float, sigma_b: float) -> np.ndarray:
    n = x.shape[0]
    out = np.empty(n)
    for i in range(n):
        out[i] = w_scale * float(np.dot(weight_normals(seed, trial, layer, i, n), x))
    if sigma_b != 0.0:
        out += sigma_b * bias_normals(seed, trial, layer, n)
    return out


try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

if HAVE_NUMBA:
    _NB_M0 = np.uint64(_M0)
    _NB_M1 = np.uint64(_M1)
    _NB_W0 = np.uint64(_W0)
    _NB_W1 = np.uint64(_W1)
    _NB_MASK = np.uint64(_MASK32)
    _NB_SHIFT = np.uint64(32)

    @njit(inline="always", cache=True)
    def _nb_philox(c0, c1, c2, c3, k0, k1):
        for _ in range(10):
            p0 = _NB_M0 * c0
            p1 = _NB_M1 * c2
            n0 = (p1 >> _NB_SHIFT) ^ c1 ^ k0
            n1 = p1 & _NB_MASK
            n2 = (p0 >> _NB_SHIFT) ^ c3 ^ k1
            n3 = p0 & _NB_MASK
            c0, c1, c2, c3 = n0, n1, n2, n3
            k0 = (k0 + _NB_W0) & _NB_MASK
            k1 = (k1 + _NB_W1) & _NB_MASK
        return c0, c1, c2, c3

    @njit(fastmath=True, cache=True)
    def _nb_ppnd16(p):
        q = p - 0.5
        if abs(q) <= 0.425:
            r = 0.180625 - q * q
            num = ((((((_PA[7] * r + _PA[6]) * r + _PA[5]) * r + _PA[4]) * r
                     + _PA[3]) * r + _PA[2]) * r + _PA[1]) * r + _PA[0]
            den = ((((((_PB[6] * r + _PB[5]) * r + _PB[4]) * r + _PB[3]) * r
                     + _PB[2]) * r + _PB[1]) * r + _PB[0]) * r + 1.0
            return q * num / den
        if q < 0.0:
            r = p
        else:
            r = 1.0 - p
        r = np.sqrt(-np.log(r))
        if r <= 5.0:
            r = r - 1.6
            num = ((((((_PC[7] * r + _PC[6]) * r + _PC[5]) * r + _PC[4]) * r
                     + _PC[3]) * r + _PC[2]) * r + _PC[1]) * r + _PC[0]
            den = ((((((_PD[6] * r + _PD[5]) * r + _PD[4]) * r + _PD[3]) * r
                     + _PD[2]) * r + _PD[1]) * r + _PD[0]) * r + 1.0
        else:
            r = r - 5.0
            num = ((((((_PE[7] * r + _PE[6]) * r + _PE[5]) * r + _PE[4]) * r
                     + _PE[3]) * r + _PE[2]) * r + _PE[1]) * r + _PE[0]
            den = ((((((_PF[6] * r + _PF[5]) * r + _PF[4]) * r + _PF[3]) * r
                     + _PF[2]) * r + _PF[1]) * r + _PF[0]) * r + 1.0
        val = num / den
        return -val if q < 0.0 else val

    @njit(cache=True)
    def _nb_layer_preacts(x, trial, layer, k0, k1, w_scale, sigma_b, out):
        n = x.shape[0]
        full = n // 4
        rem = n - 4 * full
        c2 = np.uint64(trial)
        c3w = np.uint64((PURPOSE_WEIGHT << 16) | layer)
        c3b = np.uint64((PURPOSE_BIAS << 16) | layer)
        for i in range(out.shape[0]):
            c1 = np.uint64(i)
            acc = 0.0
            for blk in range(full):
                r0, r1, r2, r3 = _nb_philox(np.uint64(blk), c1, c2, c3w, k0, k1)
                j = 4 * blk
                acc += _nb_ppnd16((r0 + 0.5) * _U01_SCALE) * x[j]
                acc += _nb_ppnd16((r1 + 0.5) * _U01_SCALE) * x[j + 1]
                acc += _nb_ppnd16((r2 + 0.5) * _U01_SCALE) * x[j + 2]
                acc += _nb_ppnd16((r3 + 0.5) * _U01_SCALE) * x[j + 3]
            if rem > 0:
                r0, r1, r2, r3 = _nb_philox(np.uint64(full), c1, c2, c3w, k0, k1)
                j = 4 * full
                acc += _nb_ppnd16((r0 + 0.5) * _U01_SCALE) * x[j]
                if rem > 1:
                    acc += _nb_ppnd16((r1 + 0.5) * _U01_SCALE) * x[j + 1]
                if rem > 2:
                    acc += _nb_ppnd16((r2 + 0.5) * _U01_SCALE) * x[j + 2]
            h = w_scale * acc
            if sigma_b != 0.0:
                b0, b1, b2, b3 = _nb_philox(np.uint64(i // 4), np.uint64(0), c2, c3b, k0, k1)
                w = i - 4 * (i // 4)
                if w == 0:
                    bword = b0
                elif w == 1:
                    bword = b1
                elif w == 2:
                    bword = b2
                else:
                    bword = b3
                h += sigma_b * _nb_ppnd16((bword + 0.5) * _U01_SCALE)
            out[i] = h
        return out

    def layer_preacts(x: np.ndarray, seed: int, trial: int, layer: int,
                      w_scale: float, sigma_b: float) -> np.ndarray:
        k0, k1 = split_seed(seed)
        out = np.empty(x.shape[0])
        _nb_layer_preacts(np.ascontiguousarray(x), trial, layer,
                          np.uint64(k0), np.uint64(k1), w_scale, sigma_b, out)
        return out
else:
    def layer_preacts(x: np.ndarray, seed: int, trial: int, layer: int,
                      w_scale: float, sigma_b: float) -> np.ndarray:
        return _layer_preacts_numpy(x, seed, trial, layer, w_scale, sigma_b)
